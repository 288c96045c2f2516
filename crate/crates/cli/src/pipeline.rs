//! Composed pipelines: the dynamic Schrödinger bridge run and the
//! assumption diagnostics.

use bridgelab::eot::{build_cost, marginal_violation, plan_chi_square};
use bridgelab::model::{h_drift_lipschitz_estimate, h_transform_drift};
use bridgelab::rng::{path_rng, substream_seed};
use bridgelab::simulate::exit_probability_sweep;
use bridgelab::{
    dynamic_rate, exact_ot, sinkhorn, tube_probability_check, BridgeSpec, CostMode, DiscreteCoupling,
    DynamicBridgeSampler, ExactOt, PathSample, RateReport, TubeCheck,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result, Stage};
use crate::output::{fmt_f64, path_rows, path_table, Bundle, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub eta: f64,
    pub cost: CostMode,
    pub objective: f64,
    pub transport_cost: f64,
    pub iterations: usize,
    pub marginal_error: f64,
    pub log_domain: bool,
    /// Unregularized transport value for the same cost matrix.
    pub exact_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointFrequency {
    pub index: usize,
    pub atom: Vec<f64>,
    pub expected: f64,
    pub observed: f64,
    /// Binomial standard error `sqrt(p (1 - p) / batch)` of the observed frequency.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicSummary {
    pub model_eta: f64,
    pub batch: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub solver: SolverSummary,
    pub pair_chi_square: ChiSquare,
    pub source_frequencies: Vec<EndpointFrequency>,
    pub target_frequencies: Vec<EndpointFrequency>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tube: Option<TubeCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRate {
    pub path_id: u64,
    pub source: usize,
    pub target: usize,
    pub report: RateReport,
}

fn solve_plan(cfg: &ExperimentConfig, sampler: &DynamicBridgeSampler) -> Result<(DiscreteCoupling, ExactOt)> {
    let eta = cfg.solver_eta();
    if !(eta > 0.0) {
        return Err(CliError::config("solver.eta", "entropic regularization must be positive"));
    }
    let cost = build_cost(&sampler.model, &sampler.mu, &sampler.nu, cfg.solver.cost).stage("cost")?;
    let coupling = sinkhorn(&cost, &sampler.mu, &sampler.nu, eta, cfg.solver.tol, cfg.solver.max_iter)
        .and_then(|c| c.require_converged())
        .stage("sinkhorn")?;
    let ot = exact_ot(&cost, &sampler.mu, &sampler.nu).stage("exact_ot")?;
    Ok((coupling, ot))
}

fn frequencies(atoms: &[Vec<f64>], weights: &[f64], counts: &[usize], batch: usize) -> Vec<EndpointFrequency> {
    let n = batch as f64;
    atoms
        .iter()
        .zip(weights)
        .zip(counts)
        .enumerate()
        .map(|(index, ((atom, &p), &c))| EndpointFrequency {
            index,
            atom: atom.clone(),
            expected: p,
            observed: c as f64 / n,
            std_error: (p * (1.0 - p) / n).sqrt(),
        })
        .collect()
}

/// Straight line `from -> to` on the simulation grid.
pub fn line_center(cfg: &ExperimentConfig, from: &[f64], to: &[f64]) -> Result<PathSample> {
    let d = cfg.model.dim;
    if from.len() != d || to.len() != d {
        return Err(CliError::config("tube", format!("`from` and `to` need {d} coordinates")));
    }
    PathSample::from_fn(&cfg.sim_config()?.time_grid(), d, |t| {
        from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
    })
    .field("tube")
}

pub fn tube_check(cfg: &ExperimentConfig, sampler: &DynamicBridgeSampler) -> Result<TubeCheck> {
    let tube = cfg.tube()?;
    let center = line_center(cfg, &tube.from, &tube.to)?;
    let mut sim = cfg.sim_config()?;
    if let Some(b) = tube.batch {
        sim.batch = b;
    }
    sim.seed = substream_seed(cfg.seed, "ldp-check", 0);
    tube_probability_check(sampler, &center, tube.radius, &tube.etas, &sim, &cfg.minimize).stage("tube_probability_check")
}

pub fn dynamic_sampler(cfg: &ExperimentConfig) -> Result<DynamicBridgeSampler> {
    let (mu, nu) = cfg.marginals()?;
    DynamicBridgeSampler::new(cfg.model()?, mu, nu).field("marginals")
}

/// Static plan, bridge interpolation of sampled pairs, rate reports and
/// endpoint statistics, assembled into `bundle`.
pub fn run_dynamic_sb(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<DynamicSummary> {
    let sampler = dynamic_sampler(cfg)?;
    let (coupling, ot) = solve_plan(cfg, &sampler)?;
    let mut sim = cfg.sim_config()?;
    sim.seed = substream_seed(cfg.seed, "dynamic-paths", 0);
    let d = cfg.model.dim;
    let write_limit = cfg.output.max_paths.unwrap_or(usize::MAX);
    let rate_ids = &cfg.dynamic.rate_paths;
    if let Some(bad) = rate_ids.iter().find(|&&id| id as usize >= sim.batch) {
        return Err(CliError::config("dynamic.rate_paths", format!("path {bad} is outside the batch")));
    }
    let eta = cfg.model.eta;
    let drawn = sampler
        .map_plan(&coupling.plan, eta, &sim, |i, j, _, states| (i, j, states.to_vec()))
        .stage("simulate_bridge")?;

    let mut plan_table = Table::new(&["i", "j", "entropic", "exact"]);
    for i in 0..sampler.mu.len() {
        for j in 0..sampler.nu.len() {
            plan_table.row([i.to_string(), j.to_string(), fmt_f64(coupling.plan[(i, j)]), fmt_f64(ot.plan[(i, j)])]);
        }
    }
    let mut duals = Table::new(&["side", "index", "entropic", "exact"]);
    for (side, ent, ex) in [("mu", &coupling.psi, &ot.psi), ("nu", &coupling.phi, &ot.phi)] {
        for (k, (a, b)) in ent.iter().zip(ex).enumerate() {
            duals.row([side.to_string(), k.to_string(), fmt_f64(*a), fmt_f64(*b)]);
        }
    }
    let limit_ot = if rate_ids.is_empty() { None } else { Some(sampler.limit_transport().stage("exact_ot")?) };
    let mut paths = path_table(d);
    let mut pairs = Table::new(&["path_id", "source", "target"]);
    let mut source_counts = vec![0usize; sampler.mu.len()];
    let mut target_counts = vec![0usize; sampler.nu.len()];
    let mut draws = Vec::with_capacity(drawn.len());
    let mut rates = Vec::new();
    let times = sim.time_grid();
    for (id, (i, j, states)) in drawn.iter().enumerate() {
        source_counts[*i] += 1;
        target_counts[*j] += 1;
        draws.push((*i, *j));
        if id < write_limit {
            paths.raw(&path_rows(id as u64, &times, states, d));
            pairs.row([id.to_string(), i.to_string(), j.to_string()]);
        }
        if rate_ids.contains(&(id as u64)) {
            let path = PathSample::new(times.as_slice().into(), states.clone(), d).stage("rate")?;
            let limit = limit_ot.as_ref().expect("computed when rates are requested");
            let report = dynamic_rate(&path, limit, &sampler.model).stage("dynamic_rate")?;
            rates.push(PathRate { path_id: id as u64, source: *i, target: *j, report });
        }
    }
    let (statistic, dof) = plan_chi_square(&coupling.plan, &draws);
    let tube = if cfg.tube.is_some() { Some(tube_check(cfg, &sampler)?) } else { None };
    let summary = DynamicSummary {
        model_eta: eta,
        batch: sim.batch,
        n_steps: sim.n_steps,
        seed: sim.seed,
        solver: SolverSummary {
            eta: coupling.eta,
            cost: cfg.solver.cost,
            objective: coupling.objective,
            transport_cost: coupling.transport_cost,
            iterations: coupling.iterations,
            marginal_error: marginal_violation(&coupling.plan, &sampler.mu, &sampler.nu),
            log_domain: coupling.log_domain,
            exact_value: ot.value,
        },
        pair_chi_square: ChiSquare { statistic, dof },
        source_frequencies: frequencies(&sampler.mu.atoms, &sampler.mu.weights, &source_counts, sim.batch),
        target_frequencies: frequencies(&sampler.nu.atoms, &sampler.nu.weights, &target_counts, sim.batch),
        tube,
    };
    bundle.add_csv("plan.csv", plan_table);
    bundle.add_csv("duals.csv", duals);
    bundle.add_csv("paths.csv", paths);
    bundle.add_csv("pairs.csv", pairs);
    if let Some(t) = &summary.tube {
        bundle.add_csv("tube.csv", tube_table(t));
    }
    bundle.add_json("rates.json", &rates);
    bundle.add_json("summary.json", &summary);
    Ok(summary)
}

pub fn tube_table(check: &TubeCheck) -> Table {
    let mut t = Table::new(&["eta", "hits", "batch", "frequency", "neg_eta_log_prob", "zero_hits", "inf_rate", "gap"]);
    for r in &check.rows {
        t.row([
            fmt_f64(r.eta),
            r.hits.to_string(),
            r.batch.to_string(),
            fmt_f64(r.frequency),
            fmt_f64(r.neg_eta_log_prob),
            r.zero_hits.to_string(),
            fmt_f64(r.inf_rate),
            fmt_f64(r.gap),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyRow {
    pub proxy: String,
    pub status: Status,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<ProxyRow>,
}

impl ValidationReport {
    pub fn get(&self, proxy: &str) -> Option<&ProxyRow> {
        self.rows.iter().find(|r| r.proxy == proxy)
    }
}

fn row(proxy: &str, status: Status, value: f64, detail: impl Into<String>) -> ProxyRow {
    ProxyRow { proxy: proxy.into(), status, value, detail: detail.into() }
}

fn warn_on_error(proxy: &str, r: std::result::Result<ProxyRow, bridgelab::Error>) -> ProxyRow {
    r.unwrap_or_else(|e| row(proxy, Status::Warn, f64::NAN, e.to_string()))
}

/// Terminal points whose h-transforms are probed: `bridge.y`, else the
/// target atoms, else the origin.
fn probe_targets(cfg: &ExperimentConfig) -> Vec<Vec<f64>> {
    if let Some(b) = &cfg.bridge {
        return vec![b.y.clone()];
    }
    if let Ok((_, nu)) = cfg.marginals() {
        return nu.atoms;
    }
    vec![vec![0.0; cfg.model.dim]]
}

/// Runtime proxies for the regularity assumptions on the reference family.
/// Never fails on the model itself: a proxy that cannot be evaluated is
/// reported as a warning.
pub fn validate_assumptions(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let v = &cfg.validate;
    if !(v.delta > 0.0 && v.delta < 1.0) {
        return Err(CliError::config("validate.delta", "must lie in (0, 1)"));
    }
    if !(v.radius > 0.0) {
        return Err(CliError::config("validate.radius", "must be positive"));
    }
    let model = cfg.model()?;
    let d = cfg.model.dim;
    let targets = probe_targets(cfg);
    let mut rows = Vec::new();

    let lip = (|| {
        let mut best: f64 = 0.0;
        for (k, y) in targets.iter().enumerate() {
            let seed = substream_seed(cfg.seed, "validate-lipschitz", k as u64);
            best = best.max(h_drift_lipschitz_estimate(&model, y, v.delta, v.radius, v.samples, seed)?);
        }
        let status = if best.is_finite() { Status::Pass } else { Status::Warn };
        Ok(row(
            "h-drift-lipschitz",
            status,
            best,
            format!("max difference quotient on [0, {}] x [-{r}, {r}]^{d}", 1.0 - v.delta, r = v.radius),
        ))
    })();
    rows.push(warn_on_error("h-drift-lipschitz", lip));

    let exit = (|| {
        let Some(radius) = v.exit_radius.filter(|r| r.is_finite()) else {
            return Ok(row("exit-probability", Status::Pass, f64::NEG_INFINITY, "unbounded box: no exits possible"));
        };
        let (x, y) = match &cfg.bridge {
            Some(b) => (b.x.clone(), b.y.clone()),
            None => (vec![0.0; d], targets[0].clone()),
        };
        let spec = BridgeSpec::new(model.clone(), x, y)?;
        let mut sim = cfg.sim_config().map_err(|e| bridgelab::Error::InvalidArgument(e.to_string()))?;
        sim.seed = substream_seed(cfg.seed, "validate-exit", 0);
        let sweep = exit_probability_sweep(&spec, radius, &v.etas, &sim)?;
        let logs: Vec<f64> = sweep.iter().map(|r| r.eta_log_p.unwrap_or(f64::NEG_INFINITY)).collect();
        let last = *logs.last().unwrap_or(&f64::NEG_INFINITY);
        let first = *logs.first().unwrap_or(&f64::NEG_INFINITY);
        let status = if last <= first { Status::Pass } else { Status::Warn };
        let hits: Vec<String> = sweep.iter().map(|r| format!("{}@{}", r.hits, r.eta)).collect();
        Ok(row("exit-probability", status, last, format!("eta log p at the smallest eta; hits {}", hits.join(" "))))
    })();
    rows.push(warn_on_error("exit-probability", exit));

    let grad = (|| {
        let mut rng = path_rng(substream_seed(cfg.seed, "validate-gradient", 0), 0);
        let mut worst: f64 = 0.0;
        let step = 1e-5;
        for _ in 0..v.samples.min(200) {
            let s = rng.random::<f64>() * (1.0 - v.delta);
            let x: Vec<f64> = (0..d).map(|_| v.radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| v.radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let g = model.transition_log_gradient_x(s, &x, 1.0, &y)?;
            for k in 0..d {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[k] += step;
                dn[k] -= step;
                let fd = (model.transition_log_density(s, &up, 1.0, &y)? - model.transition_log_density(s, &dn, 1.0, &y)?)
                    / (2.0 * step);
                worst = worst.max((g[k] - fd).abs() / (1.0 + fd.abs()));
            }
        }
        let status = if worst <= 1e-4 { Status::Pass } else { Status::Warn };
        Ok(row("density-gradient", status, worst, "max relative error of grad_x log p against central differences"))
    })();
    rows.push(warn_on_error("density-gradient", grad));

    let conv = (|| {
        let mut rng = path_rng(substream_seed(cfg.seed, "validate-eta", 0), 0);
        let limit_model = model.with_eta(0.0)?;
        let mut per_eta = Vec::with_capacity(v.etas.len());
        let probes: Vec<(f64, Vec<f64>, usize)> = (0..v.samples.min(200))
            .map(|_| {
                let t = rng.random::<f64>() * (1.0 - v.delta);
                let x: Vec<f64> = (0..d).map(|_| v.radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
                (t, x, rng.random_range(0..targets.len()))
            })
            .collect();
        for &eta in &v.etas {
            let noisy = model.with_eta(eta)?;
            let mut worst: f64 = 0.0;
            for (t, x, k) in &probes {
                let y = targets[*k].clone();
                let a = h_transform_drift(&BridgeSpec::new(noisy.clone(), vec![0.0; d], y.clone())?, *t, x)?;
                let b = h_transform_drift(&BridgeSpec::new(limit_model.clone(), vec![0.0; d], y)?, *t, x)?;
                worst = worst.max(a.iter().zip(&b).map(|(u, w)| (u - w).abs()).fold(0.0, f64::max));
            }
            per_eta.push(worst);
        }
        let last = per_eta.last().copied().unwrap_or(0.0);
        let first = per_eta.first().copied().unwrap_or(0.0);
        let status = if last <= first { Status::Pass } else { Status::Warn };
        let detail: Vec<String> = v.etas.iter().zip(&per_eta).map(|(e, w)| format!("{}@{e}", fmt_f64(*w))).collect();
        Ok(row("h-drift-eta-convergence", status, last, format!("sup |g_eta - g| on samples: {}", detail.join(" "))))
    })();
    rows.push(warn_on_error("h-drift-eta-convergence", conv));

    Ok(ValidationReport { rows })
}

pub fn validation_table(report: &ValidationReport) -> Table {
    let mut t = Table::new(&["proxy", "status", "value", "detail"]);
    for r in &report.rows {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Warn => "warn",
        };
        t.row([r.proxy.clone(), status.to_string(), fmt_f64(r.value), r.detail.clone()]);
    }
    t
}
