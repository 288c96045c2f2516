//! Rate functions on discretized paths: control recovery, the action
//! integral, the bridge rate `I_B`, minimum-action optimization and the
//! composite dynamic rate `I_D = I_S + I_B`.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eot::ExactOt;
use crate::error::{check_dim, Error, Result};
use crate::functional::{PathFunctional, Sum, TubePenalty};
use crate::model::{BridgeSpec, DiffusionModel};
use crate::rng::path_rng;
use crate::simulate::PathSample;

/// Piecewise-constant control: `values` row `k` acts on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl ControlPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if times.len() < 2 || dim == 0 || values.len() != (times.len() - 1) * dim {
            return Err(Error::InvalidArgument(format!(
                "{} control values for {} intervals in dimension {dim}",
                values.len(),
                times.len().saturating_sub(1)
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("control values must be finite".into()));
        }
        Ok(Self { times, values, dim })
    }

    pub fn zeros(times: &[f64], dim: usize) -> Self {
        Self { times: times.to_vec(), values: vec![0.0; (times.len() - 1) * dim], dim }
    }

    /// Samples `f` at interval midpoints.
    pub fn from_fn(times: &[f64], dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity((times.len() - 1) * dim);
        for w in times.windows(2) {
            let v = f(0.5 * (w[0] + w[1]));
            check_dim(dim, v.len())?;
            values.extend(v);
        }
        Self::new(times.to_vec(), values, dim)
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn matches_grid(&self, grid: &[f64]) -> bool {
        grid.len() == self.times.len() && grid.iter().zip(&self.times).all(|(a, b)| (a - b).abs() <= 1e-12)
    }

    /// `1/2 sum_k |nu_k|^2 dt_k`.
    pub fn energy(&self) -> f64 {
        (0..self.n_steps())
            .map(|k| {
                let sq: f64 = self.value(k).iter().map(|v| v * v).sum();
                0.5 * sq * (self.times[k + 1] - self.times[k])
            })
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { times: self.times.clone(), values: self.values.iter().map(|v| v * s).collect(), dim: self.dim }
    }
}

/// Whether the bridge drift `g^y` is part of the controlled dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `phi' = b + g^y + sigma nu`
    WithG,
    /// `phi' = b + sigma nu`
    WithoutG,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecovery {
    pub control: ControlPath,
    /// Sup-norm distance between the path and the controlled ODE re-integrated
    /// with the recovered control (on `[0, 1 - delta]` for `WithG`).
    pub residual: f64,
    /// Ratio of the kinetic energy on the full grid to that on every other
    /// grid point; close to 1 for smooth paths and 2 for rough or jumping ones.
    pub refinement_ratio: f64,
    pub absolutely_continuous: bool,
}

const REFINEMENT_THRESHOLD: f64 = 1.5;

/// `1/2 sum_k |phi_{k+1} - phi_k|^2 / dt_k`, the discrete `1/2 int |phi'|^2`.
pub fn kinetic_energy(path: &PathSample) -> f64 {
    kinetic_on(&path.times, &path.states, path.dim, 1)
}

fn kinetic_on(times: &[f64], states: &[f64], d: usize, stride: usize) -> f64 {
    let n = times.len() - 1;
    let mut e = 0.0;
    let mut k = 0;
    while k < n {
        let j = (k + stride).min(n);
        let sq: f64 = (0..d).map(|i| (states[j * d + i] - states[k * d + i]).powi(2)).sum();
        e += 0.5 * sq / (times[j] - times[k]);
        k = j;
    }
    e
}

fn refinement_ratio(path: &PathSample) -> f64 {
    let fine = kinetic_on(&path.times, &path.states, path.dim, 1);
    let coarse = kinetic_on(&path.times, &path.states, path.dim, 2);
    if fine <= 1e-14 {
        1.0
    } else if coarse <= 0.0 {
        f64::INFINITY
    } else {
        fine / coarse
    }
}

/// Drift of the controlled dynamics without the control, at `(t, x)`.
fn base_drift(spec: &BridgeSpec, param: Parameterization, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
    match param {
        Parameterization::WithG => spec.model.bridge_drift_into(t, x, &spec.y, out),
        Parameterization::WithoutG => {
            spec.model.drift_into(t, x, out);
            Ok(())
        }
    }
}

/// Solves `sigma(t, x) nu = v` in place.
fn apply_sigma_inverse(model: &DiffusionModel, t: f64, x: &[f64], v: &mut [f64]) -> Result<()> {
    if model.has_identity_diffusion() {
        return Ok(());
    }
    let s = model.diffusion(t, x);
    let lu = s.lu();
    let det = lu.determinant();
    if !(det.abs() > 1e-12) {
        return Err(Error::SingularDiffusion(t));
    }
    let sol = lu.solve(&DVector::from_column_slice(v)).ok_or(Error::SingularDiffusion(t))?;
    v.copy_from_slice(sol.as_slice());
    Ok(())
}

fn endpoints_match(spec: &BridgeSpec, path: &PathSample) -> bool {
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-9 * (1.0 + v.abs()));
    close(path.initial(), &spec.x) && close(path.terminal(), &spec.y)
}

/// Recovers the unique control with
/// `phi_{k+1} - phi_k = dt_k (B(t_m, phi_m) + sigma(t_m, phi_m) nu_k)` at
/// interval midpoints `(t_m, phi_m)`, where `B` is `b + g^y` or `b`.
pub fn recover_control(spec: &BridgeSpec, path: &PathSample, param: Parameterization) -> Result<ControlRecovery> {
    check_dim(spec.dim(), path.dim)?;
    if param == Parameterization::WithG && !endpoints_match(spec, path) {
        return Err(Error::InvalidArgument("path endpoints differ from the bridge endpoints".into()));
    }
    let d = path.dim;
    let n = path.n_steps();
    let model = &spec.model;
    let mut values = Vec::with_capacity(n * d);
    let mut mid = vec![0.0; d];
    let mut drift = vec![0.0; d];
    for k in 0..n {
        let h = path.times[k + 1] - path.times[k];
        let tm = 0.5 * (path.times[k] + path.times[k + 1]);
        let (a, b) = (path.state(k), path.state(k + 1));
        for i in 0..d {
            mid[i] = 0.5 * (a[i] + b[i]);
        }
        base_drift(spec, param, tm, &mid, &mut drift)?;
        let mut v: Vec<f64> = (0..d).map(|i| (b[i] - a[i]) / h - drift[i]).collect();
        apply_sigma_inverse(model, tm, &mid, &mut v)?;
        values.extend(v);
    }
    let control = ControlPath { times: path.times.to_vec(), values, dim: d };
    let residual = reintegration_residual(spec, path, &control, param)?;
    let ratio = refinement_ratio(path);
    let absolutely_continuous =
        (n < 16 || ratio < REFINEMENT_THRESHOLD) && residual <= 10.0 * (1.0 / n as f64 + 1e-8f64.sqrt());
    Ok(ControlRecovery { control, residual, refinement_ratio: ratio, absolutely_continuous })
}

/// Explicit-midpoint re-integration of the controlled ODE, sup-norm distance
/// to the path. With `g^y` the integration stops one pinning window short of
/// `t = 1`, where the drift is singular.
fn reintegration_residual(
    spec: &BridgeSpec,
    path: &PathSample,
    control: &ControlPath,
    param: Parameterization,
) -> Result<f64> {
    let d = path.dim;
    let n = path.n_steps();
    let model = &spec.model;
    let stop_time = match param {
        Parameterization::WithG => 1.0 - (1.0 / n as f64).max(crate::model::DEFAULT_DELTA_PIN),
        Parameterization::WithoutG => 1.0,
    };
    let mut x = path.initial().to_vec();
    let mut f = vec![0.0; d];
    let mut residual = 0.0f64;
    let rhs = |t: f64, x: &[f64], nu: &[f64], out: &mut [f64]| -> Result<()> {
        base_drift(spec, param, t, x, out)?;
        if model.has_identity_diffusion() {
            out.iter_mut().zip(nu).for_each(|(o, v)| *o += v);
        } else {
            let s = model.diffusion(t, x) * DVector::from_column_slice(nu);
            out.iter_mut().zip(s.iter()).for_each(|(o, v)| *o += v);
        }
        Ok(())
    };
    for k in 0..n {
        if path.times[k + 1] > stop_time + 1e-12 {
            break;
        }
        let (t, h) = (path.times[k], path.times[k + 1] - path.times[k]);
        let nu = control.value(k);
        rhs(t, &x, nu, &mut f)?;
        let half: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + 0.5 * h * b).collect();
        rhs(t + 0.5 * h, &half, nu, &mut f)?;
        for i in 0..d {
            x[i] += h * f[i];
        }
        let p = path.state(k + 1);
        residual = residual.max(x.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    Ok(residual)
}

/// `1/2 sum_k |nu_k|^2 dt_k`.
pub fn action_value(control: &ControlPath) -> f64 {
    control.energy()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeRate {
    /// `I_B(phi)`; `+inf` on endpoint mismatch or a non-absolutely-continuous path.
    pub value: f64,
    pub endpoints_match: bool,
    pub recovery: Option<ControlRecovery>,
}

pub fn bridge_rate_detailed(spec: &BridgeSpec, path: &PathSample) -> Result<BridgeRate> {
    check_dim(spec.dim(), path.dim)?;
    if !endpoints_match(spec, path) {
        return Ok(BridgeRate { value: f64::INFINITY, endpoints_match: false, recovery: None });
    }
    let rec = recover_control(spec, path, Parameterization::WithG)?;
    let value = if rec.absolutely_continuous { rec.control.energy() } else { f64::INFINITY };
    Ok(BridgeRate { value, endpoints_match: true, recovery: Some(rec) })
}

/// Bridge rate `I_B^{xy}(phi)` of an endpoint-pinned path.
pub fn bridge_rate(spec: &BridgeSpec, path: &PathSample) -> Result<f64> {
    Ok(bridge_rate_detailed(spec, path)?.value)
}

/// Discretized `F(phi) + I_B(phi)` as a function of the interior grid states.
#[derive(Debug)]
pub struct ActionObjective<'a> {
    pub spec: &'a BridgeSpec,
    pub functional: &'a dyn PathFunctional,
    pub times: &'a [f64],
}

impl<'a> ActionObjective<'a> {
    pub fn new(spec: &'a BridgeSpec, functional: &'a dyn PathFunctional, times: &'a [f64]) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidArgument("action grid needs at least two steps".into()));
        }
        Ok(Self { spec, functional, times })
    }

    /// Number of free variables, `(n_steps - 1) * dim`.
    pub fn n_vars(&self) -> usize {
        (self.times.len() - 2) * self.spec.dim()
    }

    pub fn full_path(&self, z: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(z.len() + 2 * self.spec.dim());
        p.extend_from_slice(&self.spec.x);
        p.extend_from_slice(z);
        p.extend_from_slice(&self.spec.y);
        p
    }

    fn interval_action(&self, k: usize, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = a.len();
        let h = self.times[k + 1] - self.times[k];
        let tm = 0.5 * (self.times[k] + self.times[k + 1]);
        let mid: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
        let mut drift = vec![0.0; d];
        self.spec.model.bridge_drift_into(tm, &mid, &self.spec.y, &mut drift)?;
        let mut v: Vec<f64> = (0..d).map(|i| (b[i] - a[i]) / h - drift[i]).collect();
        apply_sigma_inverse(&self.spec.model, tm, &mid, &mut v)?;
        Ok(0.5 * h * v.iter().map(|x| x * x).sum::<f64>())
    }

    /// Discretized `I_B` of the full path.
    pub fn action(&self, full: &[f64]) -> Result<f64> {
        let d = self.spec.dim();
        (0..self.times.len() - 1)
            .map(|k| self.interval_action(k, &full[k * d..(k + 1) * d], &full[(k + 1) * d..(k + 2) * d]))
            .sum()
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        let full = self.full_path(z);
        Ok(self.functional.value(self.times, &full, self.spec.dim()) + self.action(&full)?)
    }

    /// Gradient with respect to the interior states.
    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.spec.dim();
        let full = self.full_path(z);
        let mut g = vec![0.0; full.len()];
        self.functional.gradient(self.times, &full, d, &mut g);
        match self.spec.model.gaussian_theta() {
            Some(_) => self.gaussian_action_gradient(&full, &mut g),
            None => self.local_fd_action_gradient(&full, &mut g)?,
        }
        Ok(g[d..g.len() - d].to_vec())
    }

    fn gaussian_action_gradient(&self, full: &[f64], g: &mut [f64]) {
        let d = self.spec.dim();
        let model = &self.spec.model;
        let y = &self.spec.y;
        for k in 0..self.times.len() - 1 {
            let h = self.times[k + 1] - self.times[k];
            let tm = 0.5 * (self.times[k] + self.times[k + 1]);
            let c = -model.bridge_drift_jacobian_scalar(tm).expect("gaussian");
            let (p, q) = (-1.0 / h + 0.5 * c, 1.0 / h + 0.5 * c);
            let a = &full[k * d..(k + 1) * d];
            let b = &full[(k + 1) * d..(k + 2) * d];
            let mid: Vec<f64> = a.iter().zip(b).map(|(u, v)| 0.5 * (u + v)).collect();
            let mut drift = vec![0.0; d];
            model.bridge_drift_into(tm, &mid, y, &mut drift).expect("t < 1");
            for i in 0..d {
                let nu = (b[i] - a[i]) / h - drift[i];
                g[k * d + i] += h * nu * p;
                g[(k + 1) * d + i] += h * nu * q;
            }
        }
    }

    fn local_fd_action_gradient(&self, full: &[f64], g: &mut [f64]) -> Result<()> {
        let d = self.spec.dim();
        let mut buf = vec![0.0; 2 * d];
        for k in 0..self.times.len() - 1 {
            buf.copy_from_slice(&full[k * d..(k + 2) * d]);
            for j in 0..2 * d {
                let o = buf[j];
                let step = 1e-6 * (1.0 + o.abs());
                buf[j] = o + step;
                let up = self.interval_action(k, &buf[..d], &buf[d..])?;
                buf[j] = o - step;
                let dn = self.interval_action(k, &buf[..d], &buf[d..])?;
                buf[j] = o;
                g[k * d + j] += (up - dn) / (2.0 * step);
            }
        }
        Ok(())
    }

    /// Central finite-difference gradient, for validation.
    pub fn finite_difference_gradient(&self, z: &[f64], step: f64) -> Result<Vec<f64>> {
        let mut w = z.to_vec();
        (0..z.len())
            .map(|i| {
                let h = step * (1.0 + z[i].abs());
                w[i] = z[i] + h;
                let up = self.value(&w)?;
                w[i] = z[i] - h;
                let dn = self.value(&w)?;
                w[i] = z[i];
                Ok((up - dn) / (2.0 * h))
            })
            .collect()
    }

    /// Tridiagonal preconditioner: the exact action Hessian for the Gaussian
    /// models, the discrete Laplacian otherwise. Same block for each coordinate.
    fn preconditioner(&self) -> Tridiagonal {
        let m = self.times.len() - 2;
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        let gaussian = self.spec.model.gaussian_theta().is_some();
        for k in 0..self.times.len() - 1 {
            let h = self.times[k + 1] - self.times[k];
            let (p, q) = if gaussian {
                let tm = 0.5 * (self.times[k] + self.times[k + 1]);
                let c = -self.spec.model.bridge_drift_jacobian_scalar(tm).expect("gaussian");
                (-1.0 / h + 0.5 * c, 1.0 / h + 0.5 * c)
            } else {
                (-1.0 / h, 1.0 / h)
            };
            // interval k couples grid nodes k and k+1, i.e. unknowns k-1 and k
            if k >= 1 {
                diag[k - 1] += h * p * p;
            }
            if k < m {
                diag[k] += h * q * q;
            }
            if k >= 1 && k < m {
                off[k - 1] += h * p * q;
            }
        }
        Tridiagonal { diag, off }
    }
}

#[derive(Debug, Clone)]
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    /// Solves `T x = r` for each of `dim` interleaved coordinates (Thomas).
    fn solve(&self, r: &[f64], dim: usize) -> Vec<f64> {
        let m = self.diag.len();
        let mut out = vec![0.0; r.len()];
        let mut c = vec![0.0; m];
        let mut dv = vec![0.0; m];
        for i in 0..dim {
            let mut beta = self.diag[0];
            dv[0] = r[i] / beta;
            for k in 1..m {
                c[k] = self.off[k - 1] / beta;
                beta = self.diag[k] - self.off[k - 1] * c[k];
                dv[k] = (r[k * dim + i] - self.off[k - 1] * dv[k - 1]) / beta;
            }
            for k in (0..m - 1).rev() {
                dv[k] -= c[k + 1] * dv[k + 1];
            }
            for k in 0..m {
                out[k * dim + i] = dv[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeSettings {
    pub n_restarts: usize,
    pub max_iterations: usize,
    /// Tolerance on the preconditioned gradient norm `sqrt(g^T H0 g)`.
    pub gradient_tol: f64,
    pub memory: usize,
    pub seed: u64,
}

impl Default for MinimizeSettings {
    fn default() -> Self {
        Self { n_restarts: 3, max_iterations: 1000, gradient_tol: 1e-9, memory: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub path: PathSample,
    /// `F(phi*) + I_B(phi*)`.
    pub value: f64,
    pub functional_value: f64,
    pub action: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub start_index: usize,
}

struct LocalRun {
    z: Vec<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn lbfgs(obj: &ActionObjective<'_>, pre: &Tridiagonal, z0: Vec<f64>, settings: &MinimizeSettings) -> Result<LocalRun> {
    let d = obj.spec.dim();
    let mut z = z0;
    let mut f = obj.value(&z)?;
    let mut g = obj.gradient(&z)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0;
    let mut pg = pre.solve(&g, d);
    let mut gnorm = dot(&g, &pg).max(0.0).sqrt();
    let mut stalled = 0;
    while iterations < settings.max_iterations && gnorm > settings.gradient_tol {
        iterations += 1;
        // two-loop recursion with H0 = T^{-1}
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let mut r = pre.solve(&q, d);
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
        }
        let mut slope = -dot(&g, &r);
        if !(slope < 0.0) {
            hist.clear();
            r = pg.clone();
            slope = -dot(&g, &r);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = z.iter().zip(&r).map(|(a, b)| a - step * b).collect();
            let ft = obj.value(&trial)?;
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((zn, fnew)) = accepted else { break };
        let gn = obj.gradient(&zn)?;
        let s: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            hist.push((s, y, 1.0 / sy));
            if hist.len() > settings.memory {
                hist.remove(0);
            }
        }
        stalled = if f - fnew <= 1e-15 * (1.0 + f.abs()) { stalled + 1 } else { 0 };
        z = zn;
        f = fnew;
        g = gn;
        pg = pre.solve(&g, d);
        gnorm = dot(&g, &pg).max(0.0).sqrt();
        if stalled >= 5 {
            break;
        }
    }
    Ok(LocalRun { z, value: f, converged: gnorm <= settings.gradient_tol, iterations, gradient_norm: gnorm })
}

/// Initial interior paths: the straight line, the deterministic flow bent to
/// hit `y`, then seeded random Fourier perturbations of the line.
fn initial_paths(spec: &BridgeSpec, times: &[f64], settings: &MinimizeSettings) -> Vec<Vec<f64>> {
    let d = spec.dim();
    let interior = &times[1..times.len() - 1];
    let line = |t: f64, i: usize| spec.x[i] + t * (spec.y[i] - spec.x[i]);
    let mut starts = Vec::with_capacity(settings.n_restarts.max(1));
    starts.push(interior.iter().flat_map(|&t| (0..d).map(move |i| line(t, i))).collect());
    if settings.n_restarts >= 2 {
        let end = spec.model.flow(&spec.x, 1.0);
        let bent = interior
            .iter()
            .flat_map(|&t| {
                let f = spec.model.flow(&spec.x, t);
                (0..d).map(|i| f[i] + t * (spec.y[i] - end[i])).collect::<Vec<_>>()
            })
            .collect();
        starts.push(bent);
    }
    for r in 2..settings.n_restarts {
        let mut rng = path_rng(settings.seed, r as u64);
        let coeffs: Vec<f64> = (0..3 * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let p = interior
            .iter()
            .flat_map(|&t| {
                let coeffs = &coeffs;
                (0..d).map(move |i| {
                    line(t, i)
                        + (1..=3)
                            .map(|m| coeffs[(m - 1) * d + i] * (m as f64 * std::f64::consts::PI * t).sin())
                            .sum::<f64>()
                })
            })
            .collect();
        starts.push(p);
    }
    starts
}

fn line_distance(spec: &BridgeSpec, times: &[f64], z: &[f64]) -> f64 {
    let d = spec.dim();
    let interior = &times[1..times.len() - 1];
    interior
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let w = 0.5 * (times[k + 2] - times[k]);
            w * (0..d).map(|i| (z[k * d + i] - spec.x[i] - t * (spec.y[i] - spec.x[i])).powi(2)).sum::<f64>()
        })
        .sum()
}

fn minimize_from(obj: &ActionObjective<'_>, starts: Vec<Vec<f64>>, settings: &MinimizeSettings) -> Result<MinimizeResult> {
    let pre = obj.preconditioner();
    let runs: Vec<LocalRun> =
        starts.into_par_iter().map(|z0| lbfgs(obj, &pre, z0, settings)).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        let b = &runs[best];
        if r.value < b.value - 1e-9
            || ((r.value - b.value).abs() <= 1e-9
                && line_distance(obj.spec, obj.times, &r.z) < line_distance(obj.spec, obj.times, &b.z))
        {
            best = i;
        }
    }
    let run = &runs[best];
    let full = obj.full_path(&run.z);
    let d = obj.spec.dim();
    let functional_value = obj.functional.value(obj.times, &full, d);
    let action = obj.action(&full)?;
    Ok(MinimizeResult {
        path: PathSample::new(obj.times.into(), full, d)?,
        value: run.value,
        functional_value,
        action,
        converged: run.converged,
        iterations: run.iterations,
        gradient_norm: run.gradient_norm,
        start_index: best,
    })
}

/// Minimizes `F(phi) + I_B^{xy}(phi)` over paths on `times` pinned at
/// `(spec.x, spec.y)`. Non-convergence is reported through `converged`.
pub fn minimize_action(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    times: &[f64],
    settings: &MinimizeSettings,
) -> Result<MinimizeResult> {
    let obj = ActionObjective::new(spec, functional, times)?;
    minimize_from(&obj, initial_paths(spec, times, settings), settings)
}

/// Minimizes `F + I_B` over the sup-norm tube of `radius` around `center`
/// with a quadratic hinge penalty whose weight doubles until the tube is
/// violated by at most `1e-4`. The reported value excludes the penalty.
pub fn minimize_action_in_tube(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    center: &PathSample,
    radius: f64,
    settings: &MinimizeSettings,
) -> Result<MinimizeResult> {
    let times: &[f64] = &center.times;
    let d = spec.dim();
    let mut tube = TubePenalty { center: center.states.clone(), radius, weight: 10.0 };
    let mut starts = initial_paths(spec, times, settings);
    starts.push(center.states[d..center.states.len() - d].to_vec());
    let mut last = None;
    for _ in 0..40 {
        let sum = Sum(functional, &tube);
        let obj = ActionObjective::new(spec, &sum, times)?;
        let mut res = minimize_from(&obj, starts.clone(), settings)?;
        let violation = tube.max_violation(&res.path.states, d);
        res.functional_value = functional.value(times, &res.path.states, d);
        res.value = res.functional_value + res.action;
        let done = violation <= 1e-4;
        starts = vec![res.path.states[d..res.path.states.len() - d].to_vec()];
        last = Some(res);
        if done {
            break;
        }
        tube.weight *= 2.0;
    }
    last.ok_or(Error::NoConvergence { iterations: 0, error: f64::INFINITY })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub i_s: f64,
    pub i_b: f64,
    pub i_d: f64,
    pub control: Option<ControlPath>,
    /// Euclidean norm of the discretized action gradient at the path.
    pub gradient_norm: Option<f64>,
    pub feasibility_residual: Option<f64>,
    pub absolutely_continuous: bool,
}

/// `I_D(phi) = I_S(phi_0, phi_1) + I_B^{phi_0 phi_1}(phi)` with the static part
/// read off the exact transport solution.
pub fn dynamic_rate(path: &PathSample, ot: &ExactOt, model: &DiffusionModel) -> Result<RateReport> {
    let i = ot.mu.locate(path.initial()).ok_or(Error::OffSupport)?;
    let j = ot.nu.locate(path.terminal()).ok_or(Error::OffSupport)?;
    let i_s = ot.static_rate_at(i, j);
    let spec = BridgeSpec::new(model.clone(), ot.mu.atoms[i].clone(), ot.nu.atoms[j].clone())?;
    let rate = bridge_rate_detailed(&spec, path)?;
    let (control, residual, ac) = match rate.recovery {
        Some(r) => (Some(r.control), Some(r.residual), r.absolutely_continuous),
        None => (None, None, false),
    };
    let gradient_norm = if ac && path.n_steps() >= 2 {
        let zero = crate::functional::Constant(0.0);
        let obj = ActionObjective::new(&spec, &zero, &path.times)?;
        let g = obj.gradient(&path.states[path.dim..path.states.len() - path.dim])?;
        Some(dot(&g, &g).sqrt())
    } else {
        None
    };
    Ok(RateReport {
        i_s,
        i_b: rate.value,
        i_d: i_s + rate.value,
        control,
        gradient_norm,
        feasibility_residual: residual,
        absolutely_continuous: ac,
    })
}

#[cfg(test)]
fn dense(t: &Tridiagonal) -> nalgebra::DMatrix<f64> {
    let m = t.diag.len();
    nalgebra::DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            t.diag[i]
        } else if i + 1 == j {
            t.off[i]
        } else if j + 1 == i {
            t.off[j]
        } else {
            0.0
        }
    })
}
