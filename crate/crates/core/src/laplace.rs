//! Monte Carlo Laplace functionals `-eta log E[exp(-F(X)/eta)]` of bridges,
//! their small-noise sweeps against the variational values, and tube
//! probabilities of the dynamic Schrödinger bridge.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{minimize_action, minimize_action_in_tube, recover_control, ControlPath, MinimizeSettings, Parameterization};
use crate::eot::{build_cost, exact_ot, sinkhorn, CostMode, CouplingSampler, DiscreteCoupling, DiscreteMarginal, ExactOt};
use crate::error::{Error, Result};
use crate::functional::{Constant, PathFunctional};
use crate::model::{BridgeSpec, DiffusionModel};
use crate::rng::{path_rng, substream_seed};
use crate::simulate::{map_paths, simulate_into, PathKind, PathSample, Scheme, SimConfig};

/// Below this noise level sweeps switch to the controlled estimator.
pub const CONTROLLED_ETA: f64 = 0.05;

/// Effective sample sizes under this trigger a warning.
pub const ESS_WARNING: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub estimate: f64,
    /// Delta-method standard error of `-eta log(mean)`.
    pub std_error: f64,
    /// `log` of the sample mean of `exp(-F/eta)` (times the importance weight).
    pub log_mean: f64,
    /// Delta-method standard error of the sample mean divided by the mean.
    pub relative_error: f64,
    pub ess: f64,
    pub n: usize,
    /// True when the raw estimate left `[inf F, sup F]` and was clamped.
    pub clamped: bool,
    pub warning: Option<String>,
}

/// Estimate from per-path costs `G_i = F_i - eta log w_i`.
fn aggregate(costs: &[f64], eta: f64, bounds: (f64, f64)) -> Result<LaplaceEstimate> {
    if costs.is_empty() || costs.iter().any(|c| c.is_nan()) {
        return Err(Error::DegenerateSample);
    }
    let n = costs.len() as f64;
    let g_min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !g_min.is_finite() {
        return Err(Error::DegenerateSample);
    }
    // u_i = exp(-(G_i - G_min)/eta) in (0, 1], with at least one u_i = 1
    let u: Vec<f64> = costs.iter().map(|g| (-(g - g_min) / eta).exp()).collect();
    let sum: f64 = u.iter().sum();
    let sum_sq: f64 = u.iter().map(|v| v * v).sum();
    let mean = sum / n;
    let var = if costs.len() > 1 { (sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
    let relative_error = var.sqrt() / (mean * n.sqrt());
    let raw = g_min - eta * mean.ln();
    let estimate = raw.clamp(bounds.0, bounds.1);
    let ess = sum * sum / sum_sq;
    let warning = (ess < ESS_WARNING).then(|| {
        format!("effective sample size {ess:.1} is below {ESS_WARNING}; consider the controlled estimator")
    });
    Ok(LaplaceEstimate {
        estimate,
        std_error: eta * relative_error,
        log_mean: mean.ln() - g_min / eta,
        relative_error,
        ess,
        n: costs.len(),
        clamped: estimate != raw,
        warning,
    })
}

/// Naive estimator `-eta log(batch mean of exp(-F/eta))` over reference bridges.
pub fn estimate_laplace(spec: &BridgeSpec, functional: &dyn PathFunctional, cfg: &SimConfig) -> Result<LaplaceEstimate> {
    let eta = spec.model.eta();
    if !(eta > 0.0) {
        return Err(Error::ZeroNoise);
    }
    let costs = map_paths(PathKind::Bridge { spec }, cfg, |v| functional.value(v.times, v.states, v.dim))?;
    aggregate(&costs, eta, functional.bounds())
}

/// Energy budget `2 sup|F| + 1` for controls.
pub fn energy_budget(functional: &dyn PathFunctional) -> f64 {
    2.0 * functional.sup_abs() + 1.0
}

fn check_budget(functional: &dyn PathFunctional, control: &ControlPath) -> Result<()> {
    let (energy, budget) = (control.energy(), energy_budget(functional));
    if energy > budget {
        return Err(Error::BudgetExceeded { energy, budget });
    }
    Ok(())
}

/// Importance-sampling estimator over bridges driven by `control`, reweighted
/// by the Girsanov factor back to the reference bridge.
pub fn estimate_laplace_controlled(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    control: &ControlPath,
    cfg: &SimConfig,
) -> Result<LaplaceEstimate> {
    let eta = spec.model.eta();
    if !(eta > 0.0) {
        return Err(Error::ZeroNoise);
    }
    check_budget(functional, control)?;
    let costs = map_paths(PathKind::ControlledBridge { spec, control }, cfg, |v| {
        functional.value(v.times, v.states, v.dim) - eta * v.log_weight
    })?;
    aggregate(&costs, eta, functional.bounds())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCost {
    /// Sample mean of `F(X^nu) + 1/2 int |nu|^2`.
    pub mean: f64,
    pub std_error: f64,
    pub energy: f64,
}

/// `E[F(X^nu) + 1/2 int |nu|^2]` under the controlled bridge; by the
/// variational representation every control bounds the Laplace value from above.
pub fn control_cost(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    control: &ControlPath,
    cfg: &SimConfig,
) -> Result<ControlCost> {
    check_budget(functional, control)?;
    let energy = control.energy();
    let f = map_paths(PathKind::ControlledBridge { spec, control }, cfg, |v| functional.value(v.times, v.states, v.dim))?;
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(ControlCost { mean: mean + energy, std_error: (var / n).sqrt(), energy })
}

/// Settings shared by the small-noise sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    /// Noise levels at or below this use the controlled estimator.
    pub controlled_below: f64,
    pub minimize: MinimizeSettings,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { controlled_below: CONTROLLED_ETA, minimize: MinimizeSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub variational: f64,
    pub gap: f64,
    pub controlled: bool,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub batch: usize,
    pub seed: u64,
    pub functional: String,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSweepResult {
    /// Ordered by decreasing `eta`.
    pub rows: Vec<SweepRow>,
    pub meta: SweepMeta,
    /// Least-squares slope of `log gap` against `log(1/eta)`; negative when
    /// the gap shrinks with the noise.
    pub trend_slope: f64,
}

/// Least-squares slope of `log(gap)` against `log(1/eta)`.
pub fn trend_slope(etas: &[f64], gaps: &[f64]) -> f64 {
    let xs: Vec<f64> = etas.iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn check_decreasing(etas: &[f64]) -> Result<()> {
    if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0)) || etas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("noise levels must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Variational value `inf_phi F(phi) + I_B(phi)` on the simulation grid,
/// together with the control that drives the bridge along the minimizer.
pub fn variational_value(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    cfg: &SimConfig,
    settings: &MinimizeSettings,
) -> Result<(f64, ControlPath)> {
    let grid = cfg.time_grid();
    let best = minimize_action(spec, functional, &grid, settings)?;
    let control = recover_control(spec, &best.path, Parameterization::WithG)?.control;
    Ok((best.value, control))
}

fn sweep_rows(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    etas: &[f64],
    cfg: &SimConfig,
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>> {
    check_decreasing(etas)?;
    let (variational, control) = variational_value(spec, functional, cfg, &settings.minimize)?;
    etas.par_iter()
        .enumerate()
        .map(|(i, &eta)| {
            let s = spec.with_eta(eta)?;
            let c = SimConfig { seed: substream_seed(cfg.seed, "laplace-eta", i as u64), ..cfg.clone() };
            let controlled = eta <= settings.controlled_below;
            let est = if controlled {
                let c = SimConfig { scheme: Scheme::EulerMaruyama, ..c };
                estimate_laplace_controlled(&s, functional, &control, &c)?
            } else {
                estimate_laplace(&s, functional, &c)?
            };
            Ok(SweepRow {
                eta,
                estimate: est.estimate,
                std_error: est.std_error,
                variational,
                gap: (est.estimate - variational).abs(),
                controlled,
                ess: est.ess,
            })
        })
        .collect()
}

/// Laplace estimates along decreasing noise levels against the variational limit.
pub fn laplace_sweep(
    spec: &BridgeSpec,
    functional: &dyn PathFunctional,
    etas: &[f64],
    cfg: &SimConfig,
    settings: &SweepSettings,
) -> Result<LaplaceSweepResult> {
    let rows = sweep_rows(spec, functional, etas, cfg, settings)?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    Ok(LaplaceSweepResult {
        trend_slope: trend_slope(etas, &gaps),
        rows,
        meta: SweepMeta { batch: cfg.batch, seed: cfg.seed, functional: functional.name().into(), scheme: cfg.scheme },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub eta: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub variational: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub eta: f64,
    pub max_gap: f64,
    /// Index into the endpoint list of the pair attaining `max_gap`.
    pub argmax_pair: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformScan {
    pub rows: Vec<ScanRow>,
    pub pairs: Vec<PairRow>,
    pub trend_slope: f64,
    /// Whether the maximal gap at the smallest noise is below the one at the largest.
    pub decreasing: bool,
    /// `max |F~(p) - F~(q)| / |p - q|` over distinct endpoint pairs.
    pub lipschitz_estimate: f64,
}

/// Maximal Laplace gap over a finite set of endpoint pairs, per noise level.
pub fn uniform_scan(
    model: &DiffusionModel,
    functional: &dyn PathFunctional,
    pairs: &[(Vec<f64>, Vec<f64>)],
    etas: &[f64],
    cfg: &SimConfig,
    settings: &SweepSettings,
) -> Result<UniformScan> {
    check_decreasing(etas)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("uniform scan needs at least one endpoint pair".into()));
    }
    let per_pair: Vec<Vec<SweepRow>> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, (x, y))| {
            let spec = BridgeSpec::new(model.clone(), x.clone(), y.clone())?;
            let c = SimConfig { seed: substream_seed(cfg.seed, "scan-pair", p as u64), ..cfg.clone() };
            sweep_rows(&spec, functional, etas, &c, settings)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(etas.len());
    let mut table = Vec::with_capacity(etas.len() * pairs.len());
    for (e, &eta) in etas.iter().enumerate() {
        let mut best = ScanRow { eta, max_gap: f64::NEG_INFINITY, argmax_pair: 0 };
        for (p, (x, y)) in pairs.iter().enumerate() {
            let r = &per_pair[p][e];
            if r.gap > best.max_gap {
                best.max_gap = r.gap;
                best.argmax_pair = p;
            }
            table.push(PairRow {
                x: x.clone(),
                y: y.clone(),
                eta,
                estimate: r.estimate,
                std_error: r.std_error,
                variational: r.variational,
                gap: r.gap,
            });
        }
        rows.push(best);
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.max_gap).collect();
    let mut lipschitz = 0.0f64;
    for p in 0..pairs.len() {
        for q in p + 1..pairs.len() {
            let dist = pairs[p].0.iter().chain(&pairs[p].1).zip(pairs[q].0.iter().chain(&pairs[q].1));
            let dist = dist.map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if dist > 0.0 {
                let diff = (per_pair[p][0].variational - per_pair[q][0].variational).abs();
                lipschitz = lipschitz.max(diff / dist);
            }
        }
    }
    Ok(UniformScan {
        trend_slope: trend_slope(etas, &gaps),
        decreasing: gaps[gaps.len() - 1] < gaps[0],
        rows,
        pairs: table,
        lipschitz_estimate: lipschitz,
    })
}

/// Draws from the dynamic Schrödinger bridge between discrete marginals:
/// an endpoint pair from the entropic plan at the same noise level with the
/// finite-noise cost, then a reference bridge between the pair.
#[derive(Debug, Clone)]
pub struct DynamicBridgeSampler {
    pub model: DiffusionModel,
    pub mu: DiscreteMarginal,
    pub nu: DiscreteMarginal,
}

/// One dynamic bridge draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPath {
    pub source: usize,
    pub target: usize,
    pub path: PathSample,
}

impl DynamicBridgeSampler {
    pub fn new(model: DiffusionModel, mu: DiscreteMarginal, nu: DiscreteMarginal) -> Result<Self> {
        crate::error::check_dim(model.dim(), mu.dim())?;
        crate::error::check_dim(model.dim(), nu.dim())?;
        Ok(Self { model, mu, nu })
    }

    /// Entropic coupling at noise level `eta` with cost `-eta log p_eta`.
    pub fn coupling(&self, eta: f64) -> Result<DiscreteCoupling> {
        let model = self.model.with_eta(eta)?;
        let cost = build_cost(&model, &self.mu, &self.nu, CostMode::FiniteEta)?;
        sinkhorn(&cost, &self.mu, &self.nu, eta, 1e-10, 100_000)?.require_converged()
    }

    /// Exact unregularized transport with the small-noise limit cost.
    pub fn limit_transport(&self) -> Result<ExactOt> {
        let cost = build_cost(&self.model, &self.mu, &self.nu, CostMode::Limit)?;
        exact_ot(&cost, &self.mu, &self.nu)
    }

    /// Simulates `cfg.batch` dynamic bridge paths at noise `eta` and maps
    /// each through `visit`; ordered by path index.
    pub fn map<T, F>(&self, eta: f64, cfg: &SimConfig, visit: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, usize, &[f64], &[f64]) -> T + Sync,
    {
        let plan = self.coupling(eta)?.plan;
        self.map_plan(&plan, eta, cfg, visit)
    }

    /// [`DynamicBridgeSampler::map`] with endpoint pairs drawn from a given plan.
    pub fn map_plan<T, F>(&self, plan: &DMatrix<f64>, eta: f64, cfg: &SimConfig, visit: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, usize, &[f64], &[f64]) -> T + Sync,
    {
        cfg.validate()?;
        if plan.nrows() != self.mu.len() || plan.ncols() != self.nu.len() {
            return Err(Error::DimensionMismatch { expected: self.mu.len(), got: plan.nrows() });
        }
        let sampler = CouplingSampler::new(plan)?;
        let model = self.model.with_eta(eta)?;
        let specs: Vec<Vec<BridgeSpec>> = (0..self.mu.len())
            .map(|i| {
                (0..self.nu.len())
                    .map(|j| BridgeSpec::new(model.clone(), self.mu.atoms[i].clone(), self.nu.atoms[j].clone()))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        let grid = cfg.time_grid();
        (0..cfg.batch as u64)
            .into_par_iter()
            .map(|id| {
                let mut rng = path_rng(cfg.seed, id);
                let (i, j) = sampler.sample(&mut rng);
                let mut states = Vec::new();
                simulate_into(PathKind::Bridge { spec: &specs[i][j] }, cfg, &grid, &mut rng, &mut states)?;
                Ok(visit(i, j, &grid, &states))
            })
            .collect()
    }

    pub fn sample(&self, eta: f64, cfg: &SimConfig) -> Result<Vec<DynamicPath>> {
        let d = self.model.dim();
        self.map(eta, cfg, |i, j, times, states| DynamicPath {
            source: i,
            target: j,
            path: PathSample { path_id: 0, seed: cfg.seed, times: times.into(), states: states.to_vec(), dim: d },
        })
        .map(|mut v| {
            for (k, p) in v.iter_mut().enumerate() {
                p.path.path_id = k as u64;
            }
            v
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeRow {
    pub eta: f64,
    pub hits: usize,
    pub batch: usize,
    pub frequency: f64,
    /// `-eta log(frequency)`, or the resolution bound `-eta log(1/batch)` when
    /// no path hit the tube.
    pub neg_eta_log_prob: f64,
    pub zero_hits: bool,
    /// Infimum of `I_D` over the tube.
    pub inf_rate: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeCheck {
    pub rows: Vec<TubeRow>,
    pub radius: f64,
    pub inf_rate: f64,
    pub trend_slope: f64,
}

/// `inf I_D` over the sup-norm tube: minimum over endpoint pairs in the
/// tube's endpoint slice of `I_S + inf_{tube} I_B`.
pub fn tube_inf_rate(
    sampler: &DynamicBridgeSampler,
    center: &PathSample,
    radius: f64,
    settings: &MinimizeSettings,
) -> Result<f64> {
    let ot = sampler.limit_transport()?;
    let near = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt() <= radius;
    let zero = Constant(0.0);
    let mut best = f64::INFINITY;
    for i in 0..sampler.mu.len() {
        if !near(&sampler.mu.atoms[i], center.initial()) {
            continue;
        }
        for j in 0..sampler.nu.len() {
            if !near(&sampler.nu.atoms[j], center.terminal()) {
                continue;
            }
            let i_s = ot.static_rate_at(i, j);
            let spec = BridgeSpec::new(sampler.model.clone(), sampler.mu.atoms[i].clone(), sampler.nu.atoms[j].clone())?;
            let r = minimize_action_in_tube(&spec, &zero, center, radius, settings)?;
            best = best.min(i_s + r.value);
        }
    }
    Ok(best)
}

/// Empirical probabilities of the sup-norm tube of `radius` around `center`
/// under the dynamic bridge, against `inf_{tube} I_D`.
pub fn tube_probability_check(
    sampler: &DynamicBridgeSampler,
    center: &PathSample,
    radius: f64,
    etas: &[f64],
    cfg: &SimConfig,
    settings: &MinimizeSettings,
) -> Result<TubeCheck> {
    check_decreasing(etas)?;
    let grid = cfg.time_grid();
    let d = sampler.model.dim();
    let centered: Vec<f64> = grid.iter().flat_map(|&t| center.value_at(t)).collect();
    let center_on_grid = PathSample::new(grid.clone().into(), centered.clone(), d)?;
    let inf_rate = tube_inf_rate(sampler, &center_on_grid, radius, settings)?;
    let rows = etas
        .iter()
        .enumerate()
        .map(|(e, &eta)| {
            let c = SimConfig { seed: substream_seed(cfg.seed, "tube-eta", e as u64), ..cfg.clone() };
            let inside = sampler.map(eta, &c, |_, _, _, states| {
                (0..states.len() / d).all(|k| {
                    let s: f64 = (0..d).map(|i| (states[k * d + i] - centered[k * d + i]).powi(2)).sum();
                    s.sqrt() <= radius
                })
            })?;
            let hits = inside.iter().filter(|h| **h).count();
            let frequency = hits as f64 / cfg.batch as f64;
            let zero_hits = hits == 0;
            let neg_eta_log_prob = if zero_hits { eta * (cfg.batch as f64).ln() } else { -eta * frequency.ln() };
            Ok(TubeRow {
                eta,
                hits,
                batch: cfg.batch,
                frequency,
                neg_eta_log_prob,
                zero_hits,
                inf_rate,
                gap: (neg_eta_log_prob - inf_rate).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    Ok(TubeCheck { trend_slope: trend_slope(etas, &gaps), rows, radius, inf_rate })
}
