//! Path simulation: forward reference paths, h-transform bridges (plain and
//! controlled), time-reversed bridges and exact Gaussian bridges.
//!
//! Bridges are integrated on `[0, 1 - delta_pin]` and then joined linearly to
//! the pinned terminal point, so every emitted bridge path ends exactly at `y`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::ControlPath;
use crate::error::{check_dim, Error, Result};
use crate::model::{
    ou_decay, ou_variance_per_eta, reversal_drift, BridgeSpec, DiffusionModel,
    DEFAULT_DELTA_PIN,
};
use crate::rng::path_rng;

const GRID_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    ExactGaussian,
}

/// Discretization and batch settings shared by every simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_steps: usize,
    pub delta_pin: f64,
    pub scheme: Scheme,
    pub batch: usize,
    pub seed: u64,
    /// Halve the step size over the last tenth of `[0, 1]`.
    #[serde(default)]
    pub refine_terminal: bool,
}

impl SimConfig {
    /// Euler-Maruyama settings with `delta_pin = max(1e-3, 1/n_steps)`.
    pub fn new(n_steps: usize, batch: usize, seed: u64) -> Self {
        let delta_pin = if n_steps == 0 { DEFAULT_DELTA_PIN } else { DEFAULT_DELTA_PIN.max(1.0 / n_steps as f64) };
        Self { n_steps, delta_pin, scheme: Scheme::EulerMaruyama, batch, seed, refine_terminal: false }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::InvalidArgument(format!("n_steps must be >= 2, got {}", self.n_steps)));
        }
        if !(self.delta_pin > 0.0 && self.delta_pin < 0.5) {
            return Err(Error::InvalidArgument(format!("delta_pin must lie in (0, 0.5), got {}", self.delta_pin)));
        }
        if self.delta_pin < 1.0 / self.n_steps as f64 - GRID_EPS {
            return Err(Error::InvalidArgument(format!(
                "delta_pin {} is below one step 1/{}",
                self.delta_pin, self.n_steps
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be positive".into()));
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Vec<f64> {
        if self.refine_terminal {
            refined_grid(self.n_steps)
        } else {
            uniform_grid(self.n_steps)
        }
    }
}

pub fn uniform_grid(n_steps: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=n_steps).map(|k| k as f64 / n_steps as f64).collect();
    t[n_steps] = 1.0;
    t
}

/// Uniform coarse steps on `[0, 0.9]` and half-size steps on `[0.9, 1]`.
pub fn refined_grid(n_steps: usize) -> Vec<f64> {
    let fine = ((0.2 * n_steps as f64 / 1.1).round() as usize).clamp(1, n_steps - 1);
    let coarse = n_steps - fine;
    let mut t: Vec<f64> = (0..=coarse).map(|k| 0.9 * k as f64 / coarse as f64).collect();
    t.extend((1..=fine).map(|k| 0.9 + 0.1 * k as f64 / fine as f64));
    t[n_steps] = 1.0;
    t
}

/// A discretized continuous path on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub path_id: u64,
    pub seed: u64,
    pub times: Arc<[f64]>,
    /// Row-major `(n_steps + 1) x dim` states.
    pub states: Vec<f64>,
    pub dim: usize,
}

impl PathSample {
    pub fn new(times: Arc<[f64]>, states: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || states.len() != times.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "{} states for {} times in dimension {dim}",
                states.len(),
                times.len()
            )));
        }
        if times.len() < 2 || times[0] != 0.0 || times[times.len() - 1] != 1.0 {
            return Err(Error::InvalidArgument("path times must run from 0 to 1".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("path times must be strictly increasing".into()));
        }
        Ok(Self { path_id: 0, seed: 0, times, states, dim })
    }

    /// Samples `f(t)` on a grid.
    pub fn from_fn(times: &[f64], dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut states = Vec::with_capacity(times.len() * dim);
        for &t in times {
            let v = f(t);
            check_dim(dim, v.len())?;
            states.extend(v);
        }
        Self::new(times.into(), states, dim)
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.n_steps())
    }

    /// Linear interpolation of the path at time `t`.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        interpolate(&self.times, &self.states, self.dim, t)
    }
}

pub(crate) fn interpolate(times: &[f64], states: &[f64], dim: usize, t: f64) -> Vec<f64> {
    let n = times.len() - 1;
    let k = match times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
        Ok(k) => return states[k * dim..(k + 1) * dim].to_vec(),
        Err(0) => 0,
        Err(k) if k > n => n - 1,
        Err(k) => k - 1,
    };
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    (0..dim).map(|i| (1.0 - w) * states[k * dim + i] + w * states[(k + 1) * dim + i]).collect()
}

/// Batch-level bookkeeping written next to path output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub exit_radius: f64,
    pub exit_count: usize,
}

#[derive(Debug, Clone)]
pub struct PathBatch {
    pub paths: Vec<PathSample>,
    pub meta: BatchMeta,
}

/// What a simulator run produces for one path, borrowed by per-path visitors.
#[derive(Debug)]
pub struct PathView<'a> {
    pub path_id: u64,
    pub times: &'a [f64],
    pub states: &'a [f64],
    pub dim: usize,
    /// Girsanov log-likelihood ratio of the reference bridge against the
    /// controlled one; zero for uncontrolled runs.
    pub log_weight: f64,
}

impl PathView<'_> {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// `max_k |X_k|_inf`.
    pub fn sup_norm(&self) -> f64 {
        self.states.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn to_sample(&self, seed: u64) -> PathSample {
        PathSample {
            path_id: self.path_id,
            seed,
            times: self.times.into(),
            states: self.states.to_vec(),
            dim: self.dim,
        }
    }
}

/// The process a simulator run draws from.
#[derive(Debug, Clone, Copy)]
pub enum PathKind<'a> {
    Forward { model: &'a DiffusionModel, x0: &'a [f64] },
    Bridge { spec: &'a BridgeSpec },
    ControlledBridge { spec: &'a BridgeSpec, control: &'a ControlPath },
    ReversedBridge { spec: &'a BridgeSpec },
}

impl PathKind<'_> {
    fn dim(&self) -> usize {
        match self {
            PathKind::Forward { model, .. } => model.dim(),
            PathKind::Bridge { spec } | PathKind::ControlledBridge { spec, .. } | PathKind::ReversedBridge { spec } => {
                spec.dim()
            }
        }
    }

    fn check(&self, cfg: &SimConfig, grid: &[f64]) -> Result<()> {
        cfg.validate()?;
        match self {
            PathKind::Forward { model, x0 } => {
                check_dim(model.dim(), x0.len())?;
                if !model.in_domain(x0) {
                    return Err(Error::InvalidArgument("x0 lies outside the domain box".into()));
                }
            }
            PathKind::Bridge { spec } => {
                if cfg.scheme == Scheme::ExactGaussian && !spec.model.is_gaussian() {
                    return Err(Error::MissingDensity);
                }
            }
            PathKind::ControlledBridge { spec, control } => {
                if cfg.scheme == Scheme::ExactGaussian {
                    return Err(Error::InvalidArgument("controlled bridges require the euler_maruyama scheme".into()));
                }
                check_dim(spec.dim(), control.dim())?;
                if !control.matches_grid(grid) {
                    return Err(Error::GridMismatch);
                }
            }
            PathKind::ReversedBridge { spec } => {
                if cfg.scheme == Scheme::ExactGaussian {
                    return Err(Error::InvalidArgument("reversed bridges use the euler_maruyama scheme".into()));
                }
                if !spec.model.is_gaussian() && spec.model.eta() > 0.0 {
                    // surfaces MissingDensity before any path is drawn
                    reversal_drift(spec, 0.5, &spec.x)?;
                }
            }
        }
        Ok(())
    }
}

/// Simulates `cfg.batch` paths and maps each through `visit`, in parallel.
///
/// Results are ordered by path index and each path uses its own random
/// stream, so the output is independent of the worker count.
pub fn map_paths<T, F>(kind: PathKind<'_>, cfg: &SimConfig, visit: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PathView<'_>) -> T + Sync,
{
    map_paths_range(kind, cfg, 0..cfg.batch as u64, visit)
}

pub(crate) fn map_paths_range<T, F>(
    kind: PathKind<'_>,
    cfg: &SimConfig,
    ids: std::ops::Range<u64>,
    visit: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&PathView<'_>) -> T + Sync,
{
    let grid = cfg.time_grid();
    kind.check(cfg, &grid)?;
    ids.into_par_iter()
        .map(|id| {
            let mut rng = path_rng(cfg.seed, id);
            let mut states = Vec::new();
            let log_weight = simulate_into(kind, cfg, &grid, &mut rng, &mut states)?;
            Ok(visit(&PathView { path_id: id, times: &grid, states: &states, dim: kind.dim(), log_weight }))
        })
        .collect()
}

/// Simulates one path of `kind` with an externally owned random stream.
/// Returns the Girsanov log-weight (zero unless controlled).
pub fn simulate_into(
    kind: PathKind<'_>,
    cfg: &SimConfig,
    grid: &[f64],
    rng: &mut ChaCha8Rng,
    states: &mut Vec<f64>,
) -> Result<f64> {
    match kind {
        PathKind::Forward { model, x0 } => {
            forward_path(model, x0, cfg.scheme, grid, rng, states);
            Ok(0.0)
        }
        PathKind::Bridge { spec } => match cfg.scheme {
            Scheme::ExactGaussian => {
                exact_bridge_path(spec, grid, rng, states);
                Ok(0.0)
            }
            Scheme::EulerMaruyama => bridge_path(spec, None, cfg.delta_pin, grid, rng, states),
        },
        PathKind::ControlledBridge { spec, control } => {
            bridge_path(spec, Some(control), cfg.delta_pin, grid, rng, states)
        }
        PathKind::ReversedBridge { spec } => {
            reversed_path(spec, cfg.delta_pin, grid, rng, states)?;
            Ok(0.0)
        }
    }
}

fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// `out += sqrt(scale) sigma xi`, writing `sigma v` into `out` for a custom model.
fn add_diffusion(model: &DiffusionModel, t: f64, x: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
    if model.has_identity_diffusion() {
        for (o, vi) in out.iter_mut().zip(v) {
            *o += scale * vi;
        }
    } else {
        let s = model.diffusion(t, x);
        for i in 0..out.len() {
            out[i] += scale * (0..v.len()).map(|j| s[(i, j)] * v[j]).sum::<f64>();
        }
    }
}

fn forward_path(
    model: &DiffusionModel,
    x0: &[f64],
    scheme: Scheme,
    grid: &[f64],
    rng: &mut ChaCha8Rng,
    states: &mut Vec<f64>,
) {
    let d = model.dim();
    states.clear();
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let eta = model.eta();
    for w in grid.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        fill_normals(rng, &mut xi);
        match (scheme, model.gaussian_transition(dt)) {
            (Scheme::ExactGaussian, Some((decay, var))) => {
                for (xv, z) in x.iter_mut().zip(&xi) {
                    *xv = decay * *xv + var.sqrt() * z;
                }
            }
            _ => {
                model.drift_into(t, &x, &mut drift);
                let mut step: Vec<f64> = drift.iter().map(|b| b * dt).collect();
                add_diffusion(model, t, &x, &xi, (eta * dt).sqrt(), &mut step);
                for (xv, s) in x.iter_mut().zip(&step) {
                    *xv += s;
                }
            }
        }
        states.extend_from_slice(&x);
    }
}

/// Index of the last grid point reached by SDE integration.
fn last_integrated(grid: &[f64], delta_pin: f64) -> usize {
    let cut = 1.0 - delta_pin + GRID_EPS;
    let n = grid.len() - 1;
    (0..n).rev().find(|&k| grid[k] <= cut).unwrap_or(0).min(n - 1)
}

/// Linear join from the last integrated state to the pinned endpoint.
fn pin_tail(grid: &[f64], from: usize, end: &[f64], states: &mut Vec<f64>) {
    let d = end.len();
    let n = grid.len() - 1;
    let start: Vec<f64> = states[from * d..(from + 1) * d].to_vec();
    let t0 = grid[from];
    for t in grid.iter().take(n).skip(from + 1) {
        let w = (t - t0) / (1.0 - t0);
        states.extend(start.iter().zip(end).map(|(a, b)| (1.0 - w) * a + w * b));
    }
    states.extend_from_slice(end);
}

fn bridge_path(
    spec: &BridgeSpec,
    control: Option<&ControlPath>,
    delta_pin: f64,
    grid: &[f64],
    rng: &mut ChaCha8Rng,
    states: &mut Vec<f64>,
) -> Result<f64> {
    let model = &spec.model;
    let d = model.dim();
    let eta = model.eta();
    let stop = last_integrated(grid, delta_pin);
    states.clear();
    states.extend_from_slice(&spec.x);
    let mut x = spec.x.clone();
    let mut drift = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut log_weight = 0.0;
    for k in 0..stop {
        let (t, dt) = (grid[k], grid[k + 1] - grid[k]);
        fill_normals(rng, &mut xi);
        model.bridge_drift_into(t, &x, &spec.y, &mut drift)?;
        let mut step: Vec<f64> = drift.iter().map(|b| b * dt).collect();
        add_diffusion(model, t, &x, &xi, (eta * dt).sqrt(), &mut step);
        if let Some(c) = control {
            let nu = c.value(k);
            add_diffusion(model, t, &x, nu, dt, &mut step);
            if eta > 0.0 {
                let dot: f64 = nu.iter().zip(&xi).map(|(a, b)| a * b).sum();
                let sq: f64 = nu.iter().map(|a| a * a).sum();
                log_weight += -dot * (dt / eta).sqrt() - 0.5 * sq * dt / eta;
            }
        }
        for (xv, s) in x.iter_mut().zip(&step) {
            *xv += s;
        }
        states.extend_from_slice(&x);
    }
    pin_tail(grid, stop, &spec.y, states);
    Ok(log_weight)
}

fn exact_bridge_path(spec: &BridgeSpec, grid: &[f64], rng: &mut ChaCha8Rng, states: &mut Vec<f64>) {
    let theta = spec.model.gaussian_theta().expect("checked gaussian");
    let eta = spec.model.eta();
    let d = spec.dim();
    let n = grid.len() - 1;
    states.clear();
    states.extend_from_slice(&spec.x);
    let mut x = spec.x.clone();
    let mut xi = vec![0.0; d];
    for k in 0..n - 1 {
        let h1 = grid[k + 1] - grid[k];
        let h2 = 1.0 - grid[k + 1];
        let (a1, v1) = (ou_decay(theta, h1), ou_variance_per_eta(theta, h1));
        let (a2, v2) = (ou_decay(theta, h2), ou_variance_per_eta(theta, h2));
        let precision = 1.0 / v1 + a2 * a2 / v2;
        let sd = (eta / precision).sqrt();
        fill_normals(rng, &mut xi);
        for i in 0..d {
            let mean = (a1 * x[i] / v1 + a2 * spec.y[i] / v2) / precision;
            x[i] = mean + sd * xi[i];
        }
        states.extend_from_slice(&x);
    }
    states.extend_from_slice(&spec.y);
}

fn reversed_path(
    spec: &BridgeSpec,
    delta_pin: f64,
    grid: &[f64],
    rng: &mut ChaCha8Rng,
    states: &mut Vec<f64>,
) -> Result<()> {
    let model = &spec.model;
    let d = model.dim();
    let eta = model.eta();
    let n = grid.len() - 1;
    // reversed clock u_j = 1 - t_{n-j}
    let rgrid: Vec<f64> = (0..=n).map(|j| if j == n { 1.0 } else { 1.0 - grid[n - j] }).collect();
    let stop = last_integrated(&rgrid, delta_pin);
    let mut rev = Vec::with_capacity((n + 1) * d);
    rev.extend_from_slice(&spec.y);
    let mut x = spec.y.clone();
    let mut drift = vec![0.0; d];
    let mut xi = vec![0.0; d];
    for k in 0..stop {
        let (u, du) = (rgrid[k], rgrid[k + 1] - rgrid[k]);
        fill_normals(rng, &mut xi);
        model.drift_into(1.0 - u, &x, &mut drift);
        let back = reversal_drift(spec, u, &x)?;
        let mut step: Vec<f64> = drift.iter().zip(&back).map(|(b, g)| (g - b) * du).collect();
        add_diffusion(model, 1.0 - u, &x, &xi, (eta * du).sqrt(), &mut step);
        for (xv, s) in x.iter_mut().zip(&step) {
            *xv += s;
        }
        rev.extend_from_slice(&x);
    }
    pin_tail(&rgrid, stop, &spec.x, &mut rev);
    states.clear();
    for j in (0..=n).rev() {
        states.extend_from_slice(&rev[j * d..(j + 1) * d]);
    }
    Ok(())
}

fn collect_batch(kind: PathKind<'_>, cfg: &SimConfig, exit_radius: f64) -> Result<PathBatch> {
    let out = map_paths(kind, cfg, |v| (v.to_sample(cfg.seed), v.sup_norm() > exit_radius))?;
    let exit_count = out.iter().filter(|(_, e)| *e).count();
    let paths: Vec<PathSample> = out.into_iter().map(|(p, _)| p).collect();
    Ok(PathBatch {
        meta: BatchMeta {
            seed: cfg.seed,
            n_paths: paths.len(),
            n_steps: cfg.n_steps,
            scheme: cfg.scheme,
            exit_radius,
            exit_count,
        },
        paths,
    })
}

/// Forward reference paths started at `x0`. Paths that leave the domain box
/// keep evolving; they are only counted in `meta.exit_count`.
pub fn simulate_forward(model: &DiffusionModel, x0: &[f64], cfg: &SimConfig) -> Result<PathBatch> {
    collect_batch(PathKind::Forward { model, x0 }, cfg, model.domain_radius())
}

pub fn simulate_bridge(spec: &BridgeSpec, cfg: &SimConfig) -> Result<PathBatch> {
    collect_batch(PathKind::Bridge { spec }, cfg, spec.model.domain_radius())
}

/// Bridges with the extra drift `sigma nu_t`. With `eta = 0` this solves the
/// controlled limit ODE.
pub fn simulate_controlled_bridge(spec: &BridgeSpec, control: &ControlPath, cfg: &SimConfig) -> Result<PathBatch> {
    collect_batch(PathKind::ControlledBridge { spec, control }, cfg, spec.model.domain_radius())
}

/// Bridges built by running the time-reversed SDE from `y` back to `x`,
/// reported on the forward clock.
pub fn simulate_reversed_bridge(spec: &BridgeSpec, cfg: &SimConfig) -> Result<PathBatch> {
    collect_batch(PathKind::ReversedBridge { spec }, cfg, spec.model.domain_radius())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRow {
    pub eta: f64,
    pub hits: usize,
    pub batch: usize,
    pub frequency: f64,
    /// `eta log(frequency)`; `None` when no path exited.
    pub eta_log_p: Option<f64>,
    /// True when the frequency is below the resolution `1 / batch`.
    pub below_resolution: bool,
}

/// Monte Carlo frequency of bridge paths leaving the box of half-width `radius`.
pub fn exit_probability_sweep(spec: &BridgeSpec, radius: f64, etas: &[f64], cfg: &SimConfig) -> Result<Vec<ExitRow>> {
    if spec.x.iter().chain(&spec.y).any(|v| v.abs() >= radius) {
        return Err(Error::InvalidArgument("radius must exceed the endpoint norms".into()));
    }
    etas.iter()
        .map(|&eta| {
            let s = spec.with_eta(eta)?;
            let hits = if radius.is_infinite() {
                0
            } else if eta == 0.0 {
                let one = SimConfig { batch: 1, ..cfg.clone() };
                let exited = map_paths(PathKind::Bridge { spec: &s }, &one, |v| v.sup_norm() > radius)?[0];
                if exited {
                    cfg.batch
                } else {
                    0
                }
            } else {
                map_paths(PathKind::Bridge { spec: &s }, cfg, |v| v.sup_norm() > radius)?
                    .into_iter()
                    .filter(|e| *e)
                    .count()
            };
            let frequency = hits as f64 / cfg.batch as f64;
            Ok(ExitRow {
                eta,
                hits,
                batch: cfg.batch,
                frequency,
                eta_log_p: (hits > 0).then(|| eta * frequency.ln()),
                below_resolution: hits == 0,
            })
        })
        .collect()
}

/// Per-coordinate sample mean and unbiased variance at grid index `k`.
pub fn marginal_moments(paths: &[PathSample], k: usize) -> (Vec<f64>, Vec<f64>) {
    let d = paths[0].dim;
    let n = paths.len() as f64;
    let mut mean = vec![0.0; d];
    for p in paths {
        for (m, v) in mean.iter_mut().zip(p.state(k)) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for p in paths {
        for ((s, v), m) in var.iter_mut().zip(p.state(k)).zip(&mean) {
            *s += (v - m).powi(2) / (n - 1.0);
        }
    }
    (mean, var)
}

/// Deterministic limit path of the bridge, `phi' = b + g^y`, for diagnostics.
pub fn deterministic_bridge(spec: &BridgeSpec, cfg: &SimConfig) -> Result<PathSample> {
    let s = spec.with_eta(0.0)?;
    let one = SimConfig { batch: 1, ..cfg.clone() };
    let mut out = map_paths(PathKind::Bridge { spec: &s }, &one, |v| v.to_sample(cfg.seed))?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(eta: f64) -> DiffusionModel {
        DiffusionModel::brownian(eta, 1).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(100, 10, 0).validate().is_ok());
        assert!(SimConfig::new(1, 10, 0).validate().is_err());
        let mut c = SimConfig::new(100, 10, 0);
        c.delta_pin = 1e-3;
        assert!(c.validate().is_err());
        c.delta_pin = 0.6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn grids_span_unit_interval() {
        for g in [uniform_grid(7), refined_grid(100)] {
            assert_eq!(g[0], 0.0);
            assert_eq!(*g.last().unwrap(), 1.0);
            assert!(g.windows(2).all(|w| w[1] > w[0]));
        }
        let g = refined_grid(110);
        assert_eq!(g.len(), 111);
        let coarse = g[1] - g[0];
        let fine = g[110] - g[109];
        assert!((coarse / fine - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_forward_brownian_is_constant() {
        let batch = simulate_forward(&bm(0.0), &[0.7], &SimConfig::new(50, 3, 1)).unwrap();
        for p in &batch.paths {
            assert!(p.states.iter().all(|&v| v == 0.7));
        }
    }

    #[test]
    fn zero_noise_forward_ou_follows_flow() {
        let model = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1).unwrap();
        let n = 1000;
        let batch = simulate_forward(&model, &[1.0], &SimConfig::new(n, 1, 1)).unwrap();
        let end = batch.paths[0].terminal()[0];
        assert!((end - (-1.0f64).exp()).abs() < 1.0 / n as f64);
    }

    #[test]
    fn bridges_are_pinned() {
        let spec = BridgeSpec::new(bm(0.5), vec![0.2], vec![-0.4]).unwrap();
        for scheme in [Scheme::EulerMaruyama, Scheme::ExactGaussian] {
            let cfg = SimConfig::new(64, 20, 9).with_scheme(scheme);
            for p in simulate_bridge(&spec, &cfg).unwrap().paths {
                assert_eq!(p.initial(), &[0.2]);
                assert_eq!(p.terminal(), &[-0.4]);
            }
        }
        let cfg = SimConfig::new(64, 20, 9);
        for p in simulate_reversed_bridge(&spec, &cfg).unwrap().paths {
            assert_eq!(p.initial(), &[0.2]);
            assert_eq!(p.terminal(), &[-0.4]);
        }
    }

    #[test]
    fn wide_pin_window_is_joined_linearly() {
        let spec = BridgeSpec::new(bm(0.0), vec![0.0], vec![1.0]).unwrap();
        let mut cfg = SimConfig::new(10, 1, 0);
        cfg.delta_pin = 0.3;
        let p = &simulate_bridge(&spec, &cfg).unwrap().paths[0];
        for (t, v) in p.times.iter().zip(&p.states) {
            assert!((t - v).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_scheme_rejected_for_custom_models() {
        use crate::model::CustomDynamics;
        use nalgebra::DMatrix;
        let dynamics = CustomDynamics {
            drift: Arc::new(|_, x: &[f64]| vec![0.0; x.len()]),
            diffusion: Arc::new(|_, _| DMatrix::identity(1, 1)),
            transition_log_density: None,
            transition_log_gradient_x: None,
            limit_cost: None,
        };
        let model = DiffusionModel::custom(dynamics, 0.1, 1, 5.0).unwrap();
        let spec = BridgeSpec::new(model, vec![0.0], vec![0.0]).unwrap();
        let cfg = SimConfig::new(10, 1, 0).with_scheme(Scheme::ExactGaussian);
        assert_eq!(simulate_bridge(&spec, &cfg).unwrap_err(), Error::MissingDensity);
        assert_eq!(simulate_reversed_bridge(&spec, &SimConfig::new(10, 1, 0)).unwrap_err(), Error::MissingDensity);
    }

    #[test]
    fn infinite_radius_never_exits() {
        let spec = BridgeSpec::new(bm(1.0), vec![0.0], vec![0.0]).unwrap();
        let rows = exit_probability_sweep(&spec, f64::INFINITY, &[1.0, 0.1], &SimConfig::new(20, 100, 0)).unwrap();
        assert!(rows.iter().all(|r| r.hits == 0 && r.below_resolution));
    }

    #[test]
    fn deterministic_bridge_stays_inside_radius() {
        let spec = BridgeSpec::new(bm(1.0), vec![0.0], vec![0.5]).unwrap();
        let rows = exit_probability_sweep(&spec, 1.0, &[0.0], &SimConfig::new(50, 1000, 0)).unwrap();
        assert_eq!(rows[0].hits, 0);
    }

    #[test]
    fn interpolation_hits_grid_points_and_midpoints() {
        let p = PathSample::from_fn(&uniform_grid(4), 1, |t| vec![t * t]).unwrap();
        assert_eq!(p.value_at(0.5), vec![0.25]);
        assert!((p.value_at(0.125)[0] - 0.5 * 0.0625).abs() < 1e-15);
        assert_eq!(p.value_at(1.0), vec![1.0]);
    }
}
