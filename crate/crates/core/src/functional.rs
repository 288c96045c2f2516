//! Bounded path functionals `F: C([0,1]) -> R` evaluated on discretized paths.
//!
//! Every functional reports its range so estimators can check that Laplace
//! estimates stay inside `[inf F, sup F]`, and supplies a gradient with
//! respect to all grid states for the action minimizer.

use std::fmt::Debug;

use crate::simulate::interpolate;

pub trait PathFunctional: Send + Sync + Debug {
    /// Registry identifier.
    fn name(&self) -> &str;

    fn value(&self, times: &[f64], states: &[f64], dim: usize) -> f64;

    /// Writes `dF/dstates` into `grad` (same layout as `states`).
    fn gradient(&self, times: &[f64], states: &[f64], dim: usize, grad: &mut [f64]) {
        let mut z = states.to_vec();
        for i in 0..z.len() {
            let h = 1e-6 * (1.0 + z[i].abs());
            let orig = z[i];
            z[i] = orig + h;
            let up = self.value(times, &z, dim);
            z[i] = orig - h;
            let dn = self.value(times, &z, dim);
            z[i] = orig;
            grad[i] = (up - dn) / (2.0 * h);
        }
    }

    /// `(inf F, sup F)`.
    fn bounds(&self) -> (f64, f64);

    /// `sup |F|`.
    fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.abs().max(hi.abs())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constant(pub f64);

impl PathFunctional for Constant {
    fn name(&self) -> &str {
        "constant"
    }
    fn value(&self, _: &[f64], _: &[f64], _: usize) -> f64 {
        self.0
    }
    fn gradient(&self, _: &[f64], _: &[f64], _: usize, grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
    fn bounds(&self) -> (f64, f64) {
        (self.0, self.0)
    }
}

/// `1/2 min(cap, |phi(t_eval) - target|^2)`; `t_eval = 1/2` for the midpoint penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPenalty {
    pub time: f64,
    pub target: Vec<f64>,
    pub cap: f64,
    name: &'static str,
}

impl PointPenalty {
    pub fn midpoint(target: Vec<f64>, cap: f64) -> Self {
        Self { time: 0.5, target, cap, name: "midpoint-penalty" }
    }

    pub fn terminal(target: Vec<f64>, cap: f64) -> Self {
        Self { time: 1.0, target, cap, name: "terminal-penalty" }
    }

    fn bracket(&self, times: &[f64]) -> (usize, f64) {
        let n = times.len() - 1;
        let k = times.partition_point(|&s| s <= self.time).saturating_sub(1).min(n - 1);
        let w = ((self.time - times[k]) / (times[k + 1] - times[k])).clamp(0.0, 1.0);
        (k, w)
    }
}

impl PathFunctional for PointPenalty {
    fn name(&self) -> &str {
        self.name
    }
    fn value(&self, times: &[f64], states: &[f64], dim: usize) -> f64 {
        let p = interpolate(times, states, dim, self.time);
        0.5 * sq_dist(&p, &self.target).min(self.cap)
    }
    fn gradient(&self, times: &[f64], states: &[f64], dim: usize, grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (k, w) = self.bracket(times);
        let p: Vec<f64> = (0..dim).map(|i| (1.0 - w) * states[k * dim + i] + w * states[(k + 1) * dim + i]).collect();
        if sq_dist(&p, &self.target) >= self.cap {
            return;
        }
        for i in 0..dim {
            let r = p[i] - self.target[i];
            grad[k * dim + i] += (1.0 - w) * r;
            grad[(k + 1) * dim + i] += w * r;
        }
    }
    fn bounds(&self) -> (f64, f64) {
        (0.0, 0.5 * self.cap)
    }
}

/// `1/2 int_0^1 min(cap, |phi_t - target|^2) dt` by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralPenalty {
    pub target: Vec<f64>,
    pub cap: f64,
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len() - 1;
    (0..=n)
        .map(|k| {
            let left = if k > 0 { times[k] - times[k - 1] } else { 0.0 };
            let right = if k < n { times[k + 1] - times[k] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

impl PathFunctional for IntegralPenalty {
    fn name(&self) -> &str {
        "integral-penalty"
    }
    fn value(&self, times: &[f64], states: &[f64], dim: usize) -> f64 {
        let w = trapezoid_weights(times);
        0.5 * w
            .iter()
            .enumerate()
            .map(|(k, wk)| wk * sq_dist(&states[k * dim..(k + 1) * dim], &self.target).min(self.cap))
            .sum::<f64>()
    }
    fn gradient(&self, times: &[f64], states: &[f64], dim: usize, grad: &mut [f64]) {
        let w = trapezoid_weights(times);
        for (k, wk) in w.iter().enumerate() {
            let s = &states[k * dim..(k + 1) * dim];
            let inside = sq_dist(s, &self.target) < self.cap;
            for i in 0..dim {
                grad[k * dim + i] = if inside { wk * (s[i] - self.target[i]) } else { 0.0 };
            }
        }
    }
    fn bounds(&self) -> (f64, f64) {
        (0.0, 0.5 * self.cap)
    }
}

/// Smoothed supremum `1/2 min(cap, beta^{-1} log int_0^1 exp(beta |phi_t - target|^2) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupNormSoft {
    pub target: Vec<f64>,
    pub beta: f64,
    pub cap: f64,
}

impl SupNormSoft {
    fn soft_max(&self, times: &[f64], states: &[f64], dim: usize) -> (f64, Vec<f64>) {
        let w = trapezoid_weights(times);
        let s: Vec<f64> = (0..w.len()).map(|k| sq_dist(&states[k * dim..(k + 1) * dim], &self.target)).collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().zip(&w).map(|(sk, wk)| wk * (self.beta * (sk - m)).exp()).collect();
        let z: f64 = e.iter().sum();
        let soft = m + z.ln() / self.beta;
        let probs = e.iter().map(|v| v / z).collect();
        (soft, probs)
    }
}

impl PathFunctional for SupNormSoft {
    fn name(&self) -> &str {
        "sup-norm-soft"
    }
    fn value(&self, times: &[f64], states: &[f64], dim: usize) -> f64 {
        0.5 * self.soft_max(times, states, dim).0.min(self.cap)
    }
    fn gradient(&self, times: &[f64], states: &[f64], dim: usize, grad: &mut [f64]) {
        let (soft, probs) = self.soft_max(times, states, dim);
        for (k, p) in probs.iter().enumerate() {
            for i in 0..dim {
                grad[k * dim + i] =
                    if soft < self.cap { p * (states[k * dim + i] - self.target[i]) } else { 0.0 };
            }
        }
    }
    fn bounds(&self) -> (f64, f64) {
        (0.0, 0.5 * self.cap)
    }
}

/// Quadratic hinge `weight sum_k max(0, |phi_k - center_k| - radius)^2`
/// penalizing departures from a sup-norm tube. Unbounded; used only inside
/// constrained minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct TubePenalty {
    pub center: Vec<f64>,
    pub radius: f64,
    pub weight: f64,
}

impl TubePenalty {
    /// Largest distance outside the tube over the grid.
    pub fn max_violation(&self, states: &[f64], dim: usize) -> f64 {
        (0..states.len() / dim)
            .map(|k| {
                sq_dist(&states[k * dim..(k + 1) * dim], &self.center[k * dim..(k + 1) * dim]).sqrt() - self.radius
            })
            .fold(0.0f64, f64::max)
    }
}

impl PathFunctional for TubePenalty {
    fn name(&self) -> &str {
        "tube-penalty"
    }
    fn value(&self, _: &[f64], states: &[f64], dim: usize) -> f64 {
        (0..states.len() / dim)
            .map(|k| {
                let d = sq_dist(&states[k * dim..(k + 1) * dim], &self.center[k * dim..(k + 1) * dim]).sqrt();
                (d - self.radius).max(0.0).powi(2)
            })
            .sum::<f64>()
            * self.weight
    }
    fn gradient(&self, _: &[f64], states: &[f64], dim: usize, grad: &mut [f64]) {
        for k in 0..states.len() / dim {
            let s = &states[k * dim..(k + 1) * dim];
            let c = &self.center[k * dim..(k + 1) * dim];
            let d = sq_dist(s, c).sqrt();
            let v = (d - self.radius).max(0.0);
            for i in 0..dim {
                grad[k * dim + i] = if v > 0.0 { 2.0 * self.weight * v * (s[i] - c[i]) / d } else { 0.0 };
            }
        }
    }
    fn bounds(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
}

/// `F + G` for two functionals.
#[derive(Debug)]
pub struct Sum<'a>(pub &'a dyn PathFunctional, pub &'a dyn PathFunctional);

impl PathFunctional for Sum<'_> {
    fn name(&self) -> &str {
        "sum"
    }
    fn value(&self, times: &[f64], states: &[f64], dim: usize) -> f64 {
        self.0.value(times, states, dim) + self.1.value(times, states, dim)
    }
    fn gradient(&self, times: &[f64], states: &[f64], dim: usize, grad: &mut [f64]) {
        self.0.gradient(times, states, dim, grad);
        let mut other = vec![0.0; grad.len()];
        self.1.gradient(times, states, dim, &mut other);
        grad.iter_mut().zip(&other).for_each(|(g, o)| *g += o);
    }
    fn bounds(&self) -> (f64, f64) {
        let (a, b) = self.0.bounds();
        let (c, d) = self.1.bounds();
        (a + c, b + d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::uniform_grid;

    fn fd_check(f: &dyn PathFunctional, times: &[f64], states: &[f64], dim: usize) {
        let mut g = vec![0.0; states.len()];
        f.gradient(times, states, dim, &mut g);
        let mut z = states.to_vec();
        for i in 0..z.len() {
            let h = 1e-6;
            let o = z[i];
            z[i] = o + h;
            let up = f.value(times, &z, dim);
            z[i] = o - h;
            let dn = f.value(times, &z, dim);
            z[i] = o;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{}: component {i}: {} vs {fd}", f.name(), g[i]);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let times = uniform_grid(21);
        let states: Vec<f64> = times.iter().map(|t| (3.0 * t).sin() * 0.8).collect();
        fd_check(&PointPenalty::midpoint(vec![1.0], 4.0), &times, &states, 1);
        fd_check(&IntegralPenalty { target: vec![0.3], cap: 4.0 }, &times, &states, 1);
        fd_check(&SupNormSoft { target: vec![-0.2], beta: 10.0, cap: 4.0 }, &times, &states, 1);
        let center: Vec<f64> = times.to_vec();
        fd_check(&TubePenalty { center, radius: 0.2, weight: 3.0 }, &times, &states, 1);
    }

    #[test]
    fn caps_bound_values() {
        let times = uniform_grid(10);
        let far = vec![100.0; 11];
        assert_eq!(PointPenalty::midpoint(vec![0.0], 4.0).value(&times, &far, 1), 2.0);
        assert!((IntegralPenalty { target: vec![0.0], cap: 4.0 }.value(&times, &far, 1) - 2.0).abs() < 1e-12);
        assert!(SupNormSoft { target: vec![0.0], beta: 5.0, cap: 4.0 }.value(&times, &far, 1) <= 2.0);
    }

    #[test]
    fn midpoint_uses_interpolation_on_odd_grids() {
        let times = uniform_grid(3);
        let states = vec![0.0, 1.0, 2.0, 3.0];
        // phi(1/2) = 1.5
        let v = PointPenalty::midpoint(vec![0.0], 100.0).value(&times, &states, 1);
        assert!((v - 0.5 * 2.25).abs() < 1e-12);
    }
}
