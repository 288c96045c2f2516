//! Reference diffusions `dX = b(t,X) dt + sqrt(eta) sigma(t,X) dW`, their
//! Doob h-transform bridge drifts, time-reversal drifts and small-noise
//! limit costs.
//!
//! Scaled Brownian motion and the componentwise Ornstein-Uhlenbeck process
//! carry closed-form transition densities. Any other model is described by
//! user callbacks in [`CustomDynamics`]; operations that need a density fall
//! back to finite differences of the registered log-density.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::path_rng;

/// Default clipping distance from the terminal time.
pub const DEFAULT_DELTA_PIN: f64 = 1e-3;

const FD_STEP: f64 = 1e-5;

pub type VectorField = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
/// `(eta, s, x, t, y) -> log p_eta(s, x; t, y)`.
pub type LogDensityFn = Arc<dyn Fn(f64, f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// `(eta, s, x, t, y) -> grad_x log p_eta(s, x; t, y)`.
pub type LogGradientFn = Arc<dyn Fn(f64, f64, &[f64], f64, &[f64]) -> Vec<f64> + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Callbacks describing a reference diffusion without a built-in closed form.
#[derive(Clone)]
pub struct CustomDynamics {
    pub drift: VectorField,
    pub diffusion: MatrixField,
    pub transition_log_density: Option<LogDensityFn>,
    pub transition_log_gradient_x: Option<LogGradientFn>,
    pub limit_cost: Option<CostFn>,
}

#[derive(Clone)]
pub enum ModelKind {
    Brownian,
    /// `b(t,x) = -theta x`, `sigma = I`.
    OrnsteinUhlenbeck { theta: f64 },
    Custom(Arc<CustomDynamics>),
}

impl fmt::Debug for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Brownian => write!(f, "Brownian"),
            ModelKind::OrnsteinUhlenbeck { theta } => write!(f, "OrnsteinUhlenbeck {{ theta: {theta} }}"),
            ModelKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// JSON description of a built-in model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKindTag,
    pub eta: f64,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKindTag {
    Bm,
    Ou,
}

/// A member of the small-noise reference family.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    kind: ModelKind,
    eta: f64,
    dim: usize,
    domain_radius: f64,
}

impl DiffusionModel {
    /// `eta = 0` is accepted and denotes the deterministic limit flow;
    /// density-based operations then fail with [`Error::ZeroNoise`].
    pub fn new(kind: ModelKind, eta: f64, dim: usize, domain_radius: f64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be finite and >= 0, got {eta}")));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        if !(domain_radius > 0.0) {
            return Err(Error::InvalidArgument(format!("domain_radius must be positive, got {domain_radius}")));
        }
        if let ModelKind::OrnsteinUhlenbeck { theta } = kind {
            if !(theta >= 0.0 && theta.is_finite()) {
                return Err(Error::InvalidArgument(format!("theta must be finite and >= 0, got {theta}")));
            }
        }
        Ok(Self { kind, eta, dim, domain_radius })
    }

    pub fn brownian(eta: f64, dim: usize) -> Result<Self> {
        Self::new(ModelKind::Brownian, eta, dim, 10.0)
    }

    pub fn ornstein_uhlenbeck(theta: f64, eta: f64, dim: usize) -> Result<Self> {
        Self::new(ModelKind::OrnsteinUhlenbeck { theta }, eta, dim, 10.0)
    }

    pub fn custom(dynamics: CustomDynamics, eta: f64, dim: usize, domain_radius: f64) -> Result<Self> {
        Self::new(ModelKind::Custom(Arc::new(dynamics)), eta, dim, domain_radius)
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let kind = match spec.kind {
            ModelKindTag::Bm => {
                if spec.theta.is_some() {
                    return Err(Error::InvalidArgument("theta is only valid for kind \"ou\"".into()));
                }
                ModelKind::Brownian
            }
            ModelKindTag::Ou => ModelKind::OrnsteinUhlenbeck {
                theta: spec
                    .theta
                    .ok_or_else(|| Error::InvalidArgument("kind \"ou\" requires theta".into()))?,
            },
        };
        Self::new(kind, spec.eta, spec.dim, spec.domain_radius.unwrap_or(10.0))
    }

    /// Same dynamics at a different noise level.
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(self.kind.clone(), eta, self.dim, self.domain_radius)
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("domain_radius must be positive, got {radius}")));
        }
        self.domain_radius = radius;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    /// Whether a closed-form Gaussian transition law is available.
    pub fn is_gaussian(&self) -> bool {
        !matches!(self.kind, ModelKind::Custom(_))
    }

    /// Whether `sigma(t, x)` is the identity everywhere.
    pub fn has_identity_diffusion(&self) -> bool {
        self.is_gaussian()
    }

    /// Mean-reversion rate, zero for Brownian motion; `None` for custom models.
    pub fn gaussian_theta(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Brownian => Some(0.0),
            ModelKind::OrnsteinUhlenbeck { theta } => Some(theta),
            ModelKind::Custom(_) => None,
        }
    }

    /// Writes `b(t, x)` into `out`.
    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Brownian => out.iter_mut().for_each(|o| *o = 0.0),
            ModelKind::OrnsteinUhlenbeck { theta } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -theta * xi;
                }
            }
            ModelKind::Custom(c) => out.copy_from_slice(&(c.drift)(t, x)),
        }
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(t, x, &mut out);
        out
    }

    /// `sigma(t, x)`; the noise scale enters separately through `eta`.
    pub fn diffusion(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            ModelKind::Custom(c) => (c.diffusion)(t, x),
            _ => DMatrix::identity(self.dim, self.dim),
        }
    }

    /// `sigma sigma^T (t, x)`.
    pub fn diffusion_covariance(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let s = self.diffusion(t, x);
        &s * s.transpose()
    }

    fn require_noise(&self) -> Result<()> {
        if self.eta > 0.0 {
            Ok(())
        } else {
            Err(Error::ZeroNoise)
        }
    }

    /// Gaussian transition `(decay, variance)` over a horizon `h` for the
    /// built-in models: `X_{s+h} | X_s = x ~ N(decay x, variance I)`.
    pub fn gaussian_transition(&self, h: f64) -> Option<(f64, f64)> {
        let theta = self.gaussian_theta()?;
        Some((ou_decay(theta, h), self.eta * ou_variance_per_eta(theta, h)))
    }

    /// `log p_eta(s, x; t, y)`.
    pub fn transition_log_density(&self, s: f64, x: &[f64], t: f64, y: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        self.require_noise()?;
        if !(t > s) {
            return Err(Error::InvalidArgument(format!("transition density needs t > s, got s={s}, t={t}")));
        }
        match &self.kind {
            ModelKind::Custom(c) => {
                let f = c.transition_log_density.as_ref().ok_or(Error::MissingDensity)?;
                Ok(f(self.eta, s, x, t, y))
            }
            _ => {
                let (decay, var) = self.gaussian_transition(t - s).expect("gaussian model");
                let sq: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - decay * xi).powi(2)).sum();
                Ok(-0.5 * self.dim as f64 * (2.0 * PI * var).ln() - sq / (2.0 * var))
            }
        }
    }

    /// `grad_x log p_eta(s, x; t, y)`.
    pub fn transition_log_gradient_x(&self, s: f64, x: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        self.require_noise()?;
        if !(t > s) {
            return Err(Error::InvalidArgument(format!("transition density needs t > s, got s={s}, t={t}")));
        }
        match &self.kind {
            ModelKind::Custom(c) => {
                if let Some(g) = &c.transition_log_gradient_x {
                    return Ok(g(self.eta, s, x, t, y));
                }
                let f = c.transition_log_density.as_ref().ok_or(Error::MissingDensity)?;
                Ok(central_gradient(x, |z| f(self.eta, s, z, t, y)))
            }
            _ => {
                let (decay, var) = self.gaussian_transition(t - s).expect("gaussian model");
                Ok(x.iter().zip(y).map(|(xi, yi)| decay * (yi - decay * xi) / var).collect())
            }
        }
    }

    /// `grad_y log p_eta(s, x; t, y)`, the score of the forward marginal.
    pub fn transition_log_gradient_y(&self, s: f64, x: &[f64], t: f64, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        self.require_noise()?;
        match &self.kind {
            ModelKind::Custom(c) => {
                let f = c.transition_log_density.as_ref().ok_or(Error::MissingDensity)?;
                Ok(central_gradient(y, |z| f(self.eta, s, x, t, z)))
            }
            _ => {
                let (decay, var) = self.gaussian_transition(t - s).expect("gaussian model");
                Ok(x.iter().zip(y).map(|(xi, yi)| -(yi - decay * xi) / var).collect())
            }
        }
    }

    /// Writes the full bridge drift `b + g^y` at `(t, x)` into `out`.
    ///
    /// For the Gaussian models this is the closed form, valid for every
    /// `eta >= 0`; for custom models it is `b + eta sigma sigma^T grad log p`.
    pub fn bridge_drift_into(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        if !(t < 1.0) {
            return Err(Error::TimeAtTerminal(t));
        }
        match self.gaussian_theta() {
            Some(theta) => {
                let (fy, fx) = gaussian_bridge_coefficients(theta, 1.0 - t);
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o = fy * yi - fx * xi;
                }
                Ok(())
            }
            None => {
                let g = self.h_transform_custom(t, x, y)?;
                self.drift_into(t, x, out);
                for (o, gi) in out.iter_mut().zip(&g) {
                    *o += gi;
                }
                Ok(())
            }
        }
    }

    fn h_transform_custom(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let grad = self.transition_log_gradient_x(t, x, 1.0, y)?;
        let a = self.diffusion_covariance(t, x);
        let g = a * nalgebra::DVector::from_column_slice(&grad) * self.eta;
        Ok(g.iter().copied().collect())
    }

    /// Jacobian of `x -> b(t,x) + g^y(t,x)` for the Gaussian models, which is
    /// the scalar multiple `-theta coth(theta (1-t))` of the identity.
    pub fn bridge_drift_jacobian_scalar(&self, t: f64) -> Option<f64> {
        let theta = self.gaussian_theta()?;
        Some(-gaussian_bridge_coefficients(theta, 1.0 - t).1)
    }

    /// Deterministic (`eta = 0`) flow image of `x` after time `t`.
    pub fn flow(&self, x: &[f64], t: f64) -> Vec<f64> {
        match &self.kind {
            ModelKind::Brownian => x.to_vec(),
            ModelKind::OrnsteinUhlenbeck { theta } => x.iter().map(|xi| xi * (-theta * t).exp()).collect(),
            ModelKind::Custom(_) => {
                let steps = 400;
                let h = t / steps as f64;
                let mut z = x.to_vec();
                for k in 0..steps {
                    let s = k as f64 * h;
                    let k1 = self.drift(s, &z);
                    let z2: Vec<f64> = z.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
                    let k2 = self.drift(s + 0.5 * h, &z2);
                    let z3: Vec<f64> = z.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
                    let k3 = self.drift(s + 0.5 * h, &z3);
                    let z4: Vec<f64> = z.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
                    let k4 = self.drift(s + h, &z4);
                    for i in 0..z.len() {
                        z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
                z
            }
        }
    }

    /// Whether the box `|x|_inf <= domain_radius` contains `x`.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.domain_radius)
    }
}

/// `exp(-theta h)`.
pub(crate) fn ou_decay(theta: f64, h: f64) -> f64 {
    (-theta * h).exp()
}

/// `(1 - exp(-2 theta h)) / (2 theta)`, tending to `h` as `theta -> 0`.
pub(crate) fn ou_variance_per_eta(theta: f64, h: f64) -> f64 {
    if theta == 0.0 {
        h
    } else {
        -(-2.0 * theta * h).exp_m1() / (2.0 * theta)
    }
}

/// Coefficients `(a, c)` with `b + g^y = a y - c x` at time-to-go `tau`:
/// `a = theta / sinh(theta tau)`, `c = theta coth(theta tau)`.
pub(crate) fn gaussian_bridge_coefficients(theta: f64, tau: f64) -> (f64, f64) {
    let z = theta * tau;
    if z.abs() < 1e-6 {
        let z2 = z * z;
        ((1.0 - z2 / 6.0) / tau, (1.0 + z2 / 3.0) / tau)
    } else {
        (theta / z.sinh(), theta / z.tanh())
    }
}

fn central_gradient(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut z = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = FD_STEP * (1.0 + x[i].abs());
            z[i] = x[i] + h;
            let up = f(&z);
            z[i] = x[i] - h;
            let dn = f(&z);
            z[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// A reference model together with the pinned endpoints of its bridge.
#[derive(Debug, Clone)]
pub struct BridgeSpec {
    pub model: DiffusionModel,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl BridgeSpec {
    pub fn new(model: DiffusionModel, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_dim(model.dim(), x.len())?;
        check_dim(model.dim(), y.len())?;
        if !model.in_domain(&x) || !model.in_domain(&y) {
            return Err(Error::InvalidArgument(format!(
                "bridge endpoints must lie within domain_radius {}",
                model.domain_radius()
            )));
        }
        Ok(Self { model, x, y })
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Ok(Self { model: self.model.with_eta(eta)?, x: self.x.clone(), y: self.y.clone() })
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }
}

/// The Doob h-transform drift `g^y_eta(t, x) = eta sigma sigma^T grad_x log p(t, x; 1, y)`.
pub fn h_transform_drift(spec: &BridgeSpec, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let model = &spec.model;
    check_dim(model.dim(), x.len())?;
    if !(t < 1.0) {
        return Err(Error::TimeAtTerminal(t));
    }
    match model.gaussian_theta() {
        Some(theta) => {
            let tau = 1.0 - t;
            let (a, c) = gaussian_bridge_coefficients(theta, tau);
            // b = -theta x, so g = a y - (c - theta) x
            Ok(x.iter().zip(&spec.y).map(|(xi, yi)| a * yi - (c - theta) * xi).collect())
        }
        None => model.h_transform_custom(t, x, &spec.y),
    }
}

/// Backward correction drift of the time-reversed bridge,
/// `[g_rev(t, xh)]_i = eta p^{-1} sum_j d/dxh_j [ (sigma sigma^T)_ij(1-t, xh) p(0, x; 1-t, xh) ]`.
pub fn reversal_drift(spec: &BridgeSpec, t: f64, xhat: &[f64]) -> Result<Vec<f64>> {
    let model = &spec.model;
    check_dim(model.dim(), xhat.len())?;
    if !(t < 1.0) {
        return Err(Error::TimeAtTerminal(t));
    }
    let s = 1.0 - t;
    if let Some(theta) = model.gaussian_theta() {
        // constant sigma: eta grad log p = -(xh - decay x) / var_per_eta
        let decay = ou_decay(theta, s);
        let v = ou_variance_per_eta(theta, s);
        return Ok(xhat.iter().zip(&spec.x).map(|(xh, x0)| -(xh - decay * x0) / v).collect());
    }
    model.require_noise()?;
    let score = model.transition_log_gradient_y(0.0, &spec.x, s, xhat)?;
    let a = model.diffusion_covariance(s, xhat);
    let d = model.dim();
    let mut div = vec![0.0; d];
    let mut z = xhat.to_vec();
    for j in 0..d {
        let h = FD_STEP * (1.0 + xhat[j].abs());
        z[j] = xhat[j] + h;
        let up = model.diffusion_covariance(s, &z);
        z[j] = xhat[j] - h;
        let dn = model.diffusion_covariance(s, &z);
        z[j] = xhat[j];
        for i in 0..d {
            div[i] += (up[(i, j)] - dn[(i, j)]) / (2.0 * h);
        }
    }
    Ok((0..d)
        .map(|i| model.eta() * (div[i] + (0..d).map(|j| a[(i, j)] * score[j]).sum::<f64>()))
        .collect())
}

/// `c(x, y) = lim_{eta -> 0} -eta log p_eta(0, x; 1, y)`.
pub fn limit_cost(model: &DiffusionModel, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(model.dim(), x.len())?;
    check_dim(model.dim(), y.len())?;
    match model.kind() {
        ModelKind::Custom(c) => c.limit_cost.as_ref().map(|f| f(x, y)).ok_or(Error::MissingDensity),
        _ => {
            let theta = model.gaussian_theta().expect("gaussian model");
            let decay = ou_decay(theta, 1.0);
            let v = ou_variance_per_eta(theta, 1.0);
            let sq: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - decay * xi).powi(2)).sum();
            Ok(sq / (2.0 * v))
        }
    }
}

/// Largest sampled difference quotient of the h-transform drift in `x`,
/// over `t in [0, 1 - delta]` and the box `[-radius, radius]^d`.
pub fn h_drift_lipschitz_estimate(
    model: &DiffusionModel,
    y: &[f64],
    delta: f64,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_dim(model.dim(), y.len())?;
    let mut rng = path_rng(seed, 0);
    let d = model.dim();
    let spec = BridgeSpec { model: model.clone(), x: vec![0.0; d], y: y.to_vec() };
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let t = rng.random::<f64>() * (1.0 - delta);
        let a: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let dist = euclid(&a, &b);
        if dist < 1e-9 {
            continue;
        }
        let ga = h_transform_drift(&spec, t, &a)?;
        let gb = h_transform_drift(&spec, t, &b)?;
        best = best.max(euclid(&ga, &gb) / dist);
    }
    Ok(best)
}

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}
