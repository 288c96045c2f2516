//! One runner per subcommand; each fills a [`Bundle`].

use std::path::Path;

use bridgelab::laplace::{SweepSettings, UniformScan};
use bridgelab::simulate::marginal_moments;
use bridgelab::{
    bridge_rate_detailed, build_cost, dynamic_rate, exact_ot, laplace_sweep, minimize_action, simulate_bridge,
    simulate_forward, simulate_reversed_bridge, sinkhorn, uniform_scan, BridgeSpec, LaplaceSweepResult, PathSample,
    RateReport, Scheme,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Process, read_paths_csv};
use crate::error::{CliError, Result, Stage};
use crate::output::{fmt_f64, path_rows, path_table, Bundle, Table};
use crate::pipeline::{
    dynamic_sampler, run_dynamic_sb, tube_check, tube_table, validate_assumptions, validation_table,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub process: Process,
    pub meta: bridgelab::simulate::BatchMeta,
    pub written_paths: usize,
}

pub fn simulate(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<SimulateSummary> {
    let sim = cfg.sim_config()?;
    let process = cfg.simulate.process;
    if process == Process::Reversed && sim.scheme == Scheme::ExactGaussian {
        return Err(CliError::config("sim.scheme", "reversed bridges use euler_maruyama"));
    }
    let batch = match process {
        Process::Bridge => simulate_bridge(&cfg.bridge_spec()?, &sim),
        Process::Reversed => simulate_reversed_bridge(&cfg.bridge_spec()?, &sim),
        Process::Forward => {
            let x0 = cfg
                .simulate
                .x0
                .clone()
                .or_else(|| cfg.bridge.as_ref().map(|b| b.x.clone()))
                .ok_or_else(|| CliError::config("simulate.x0", "forward runs need a start point"))?;
            simulate_forward(&cfg.model()?, &x0, &sim)
        }
    }
    .stage("simulate")?;
    let d = cfg.model.dim;
    let limit = cfg.output.max_paths.unwrap_or(usize::MAX).min(batch.paths.len());
    let mut paths = path_table(d);
    for p in &batch.paths[..limit] {
        paths.raw(&path_rows(p.path_id, &p.times, &p.states, d));
    }
    let mut header: Vec<String> = vec!["step".into(), "t".into()];
    header.extend((1..=d).map(|k| format!("mean_{k}")));
    header.extend((1..=d).map(|k| format!("var_{k}")));
    let mut moments = Table::new(&header);
    if batch.paths.len() >= 2 {
        for (k, t) in batch.paths[0].times.iter().enumerate() {
            let (m, v) = marginal_moments(&batch.paths, k);
            let mut row = vec![k.to_string(), fmt_f64(*t)];
            row.extend(m.iter().chain(&v).map(|x| fmt_f64(*x)));
            moments.row(row);
        }
    }
    let summary = SimulateSummary { process, meta: batch.meta, written_paths: limit };
    bundle.add_csv("paths.csv", paths);
    bundle.add_csv("moments.csv", moments);
    bundle.add_json("batch.json", &summary);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub eta: f64,
    pub objective: f64,
    pub gap: f64,
    /// `eta ln(n m)`.
    pub bound: f64,
    pub within_bound: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkhornSummary {
    pub eta: f64,
    pub objective: f64,
    pub transport_cost: f64,
    pub iterations: usize,
    pub marginal_error: f64,
    pub log_domain: bool,
    pub exact_value: f64,
    pub schedule: Vec<ScheduleRow>,
}

pub fn sinkhorn_cmd(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<SinkhornSummary> {
    let (mu, nu) = cfg.marginals()?;
    let eta = cfg.solver_eta();
    if !(eta > 0.0) {
        return Err(CliError::config("solver.eta", "entropic regularization must be positive"));
    }
    if let Some(bad) = cfg.solver.eta_schedule.iter().find(|e| !(**e > 0.0)) {
        return Err(CliError::config("solver.eta_schedule", format!("{bad} is not positive")));
    }
    let cost = build_cost(&cfg.model()?, &mu, &nu, cfg.solver.cost).stage("cost")?;
    let solve = |eta: f64| sinkhorn(&cost, &mu, &nu, eta, cfg.solver.tol, cfg.solver.max_iter);
    let coupling = solve(eta).and_then(|c| c.require_converged()).stage("sinkhorn")?;
    let ot = exact_ot(&cost, &mu, &nu).stage("exact_ot")?;
    let log_cells = ((mu.len() * nu.len()) as f64).ln();
    let schedule = cfg
        .solver
        .eta_schedule
        .iter()
        .map(|&e| {
            let c = solve(e).stage("sinkhorn")?;
            let gap = c.objective - ot.value;
            let bound = e * log_cells;
            Ok(ScheduleRow {
                eta: e,
                objective: c.objective,
                gap,
                bound,
                within_bound: gap.abs() <= bound + 1e-6,
                converged: c.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut plan = Table::new(&["i", "j", "weight"]);
    for i in 0..mu.len() {
        for j in 0..nu.len() {
            plan.row([i.to_string(), j.to_string(), fmt_f64(coupling.plan[(i, j)])]);
        }
    }
    let mut duals = Table::new(&["side", "index", "potential"]);
    for (side, pot) in [("mu", &coupling.psi), ("nu", &coupling.phi)] {
        for (k, v) in pot.iter().enumerate() {
            duals.row([side.to_string(), k.to_string(), fmt_f64(*v)]);
        }
    }
    let mut sched = Table::new(&["eta", "objective", "gap", "bound", "within_bound", "converged"]);
    for r in &schedule {
        sched.row([
            fmt_f64(r.eta),
            fmt_f64(r.objective),
            fmt_f64(r.gap),
            fmt_f64(r.bound),
            r.within_bound.to_string(),
            r.converged.to_string(),
        ]);
    }
    let summary = SinkhornSummary {
        eta,
        objective: coupling.objective,
        transport_cost: coupling.transport_cost,
        iterations: coupling.iterations,
        marginal_error: coupling.marginal_error,
        log_domain: coupling.log_domain,
        exact_value: ot.value,
        schedule,
    };
    bundle.add_csv("plan.csv", plan);
    bundle.add_csv("duals.csv", duals);
    if !summary.schedule.is_empty() {
        bundle.add_csv("schedule.csv", sched);
    }
    bundle.add_json("sinkhorn.json", &summary);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRateEntry {
    pub path_id: u64,
    pub report: RateReport,
    /// Kinetic-energy ratio between the full grid and every other point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement_ratio: Option<f64>,
}

/// Rates of the paths in a CSV file: `I_D` against the marginals when they
/// are configured, otherwise the bridge rate with `I_S = 0`.
pub fn rate(cfg: &ExperimentConfig, paths_csv: &Path, name: &str, bundle: &mut Bundle) -> Result<Vec<PathRateEntry>> {
    let paths = read_paths_csv(paths_csv)?;
    let d = cfg.model.dim;
    if let Some(p) = paths.iter().find(|p| p.dim != d) {
        return Err(CliError::config("--path", format!("path {} has dimension {}, model has {d}", p.path_id, p.dim)));
    }
    let entries = if cfg.marginals.is_some() {
        let sampler = dynamic_sampler(cfg)?;
        let ot = sampler.limit_transport().stage("exact_ot")?;
        paths
            .iter()
            .map(|p| {
                let report = dynamic_rate(p, &ot, &sampler.model).stage("dynamic_rate")?;
                Ok(PathRateEntry { path_id: p.path_id, report, refinement_ratio: None })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let spec = cfg.bridge_spec()?;
        paths.iter().map(|p| bridge_entry(&spec, p)).collect::<Result<Vec<_>>>()?
    };
    bundle.add_json(name, &entries);
    Ok(entries)
}

fn bridge_entry(spec: &BridgeSpec, path: &PathSample) -> Result<PathRateEntry> {
    let r = bridge_rate_detailed(spec, path).stage("bridge_rate")?;
    let (control, residual, ratio, ac) = match r.recovery {
        Some(rec) => (Some(rec.control), Some(rec.residual), Some(rec.refinement_ratio), rec.absolutely_continuous),
        None => (None, None, None, false),
    };
    let report = RateReport {
        i_s: 0.0,
        i_b: r.value,
        i_d: r.value,
        control,
        gradient_norm: None,
        feasibility_residual: residual,
        absolutely_continuous: ac,
    };
    Ok(PathRateEntry { path_id: path.path_id, report, refinement_ratio: ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeSummary {
    pub functional: String,
    pub value: f64,
    pub functional_value: f64,
    pub action: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub start_index: usize,
}

pub fn minimize(cfg: &ExperimentConfig, stem: &str, bundle: &mut Bundle) -> Result<MinimizeSummary> {
    let spec = cfg.bridge_spec()?;
    let f = cfg.functional()?;
    let times = cfg.sim_config()?.time_grid();
    let r = minimize_action(&spec, f.as_ref(), &times, &cfg.minimize).stage("minimize_action")?;
    let mut table = Table::with_coords(&["step", "t"], r.path.dim);
    for (k, t) in r.path.times.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt_f64(*t)];
        row.extend(r.path.state(k).iter().map(|v| fmt_f64(*v)));
        table.row(row);
    }
    let summary = MinimizeSummary {
        functional: f.name().to_string(),
        value: r.value,
        functional_value: r.functional_value,
        action: r.action,
        converged: r.converged,
        iterations: r.iterations,
        gradient_norm: r.gradient_norm,
        start_index: r.start_index,
    };
    bundle.add_csv(&format!("{stem}.csv"), table);
    bundle.add_json(&format!("{stem}.json"), &summary);
    Ok(summary)
}

fn sweep_settings(cfg: &ExperimentConfig) -> Result<SweepSettings> {
    Ok(SweepSettings { controlled_below: cfg.sweep()?.controlled_below, minimize: cfg.minimize.clone() })
}

fn sweep_sim(cfg: &ExperimentConfig) -> Result<bridgelab::SimConfig> {
    let mut sim = cfg.sim_config()?;
    if let Some(b) = cfg.sweep()?.batch {
        sim.batch = b;
    }
    Ok(sim)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChecks {
    pub negative_slope: bool,
    /// Last gap against `final_gap_tol (1 + |variational value|)`, when a tolerance is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_gap: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    #[serde(flatten)]
    pub result: LaplaceSweepResult,
    pub checks: SweepChecks,
}

pub fn laplace_sweep_cmd(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<SweepReport> {
    let spec = cfg.bridge_spec()?;
    let f = cfg.functional()?;
    let sweep = cfg.sweep()?;
    let result =
        laplace_sweep(&spec, f.as_ref(), &sweep.etas, &sweep_sim(cfg)?, &sweep_settings(cfg)?).stage("laplace_sweep")?;
    let final_gap = sweep.final_gap_tol.and_then(|tol| {
        result.rows.last().map(|r| r.gap <= tol * (1.0 + r.variational.abs()))
    });
    let mut table = Table::new(&["eta", "estimate", "std_error", "variational", "gap", "controlled", "ess"]);
    for r in &result.rows {
        table.row([
            fmt_f64(r.eta),
            fmt_f64(r.estimate),
            fmt_f64(r.std_error),
            fmt_f64(r.variational),
            fmt_f64(r.gap),
            r.controlled.to_string(),
            fmt_f64(r.ess),
        ]);
    }
    let report = SweepReport { checks: SweepChecks { negative_slope: result.trend_slope < 0.0, final_gap }, result };
    bundle.add_csv("sweep.csv", table);
    bundle.add_json("sweep.json", &report);
    Ok(report)
}

pub fn uniform_scan_cmd(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<UniformScan> {
    let f = cfg.functional()?;
    let sweep = cfg.sweep()?;
    if sweep.pairs.is_empty() {
        return Err(CliError::config("sweep.pairs", "uniform-scan needs endpoint pairs"));
    }
    let d = cfg.model.dim;
    if sweep.pairs.iter().any(|[x, y]| x.len() != d || y.len() != d) {
        return Err(CliError::config("sweep.pairs", format!("endpoints need {d} coordinates")));
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = sweep.pairs.iter().map(|[x, y]| (x.clone(), y.clone())).collect();
    let scan = uniform_scan(&cfg.model()?, f.as_ref(), &pairs, &sweep.etas, &sweep_sim(cfg)?, &sweep_settings(cfg)?)
        .stage("uniform_scan")?;
    let mut rows = Table::new(&["eta", "max_gap", "argmax_pair"]);
    for r in &scan.rows {
        rows.row([fmt_f64(r.eta), fmt_f64(r.max_gap), r.argmax_pair.to_string()]);
    }
    let mut header: Vec<String> = vec!["pair".into()];
    header.extend((1..=d).map(|k| format!("x_{k}")));
    header.extend((1..=d).map(|k| format!("y_{k}")));
    header.extend(["eta", "estimate", "std_error", "variational", "gap"].map(String::from));
    let mut per_pair = Table::new(&header);
    for r in &scan.pairs {
        let index = pairs.iter().position(|(x, y)| *x == r.x && *y == r.y).unwrap_or(usize::MAX);
        let mut row = vec![index.to_string()];
        row.extend(r.x.iter().chain(&r.y).map(|v| fmt_f64(*v)));
        row.extend([r.eta, r.estimate, r.std_error, r.variational, r.gap].map(fmt_f64));
        per_pair.row(row);
    }
    bundle.add_csv("scan.csv", rows);
    bundle.add_csv("scan_pairs.csv", per_pair);
    bundle.add_json("scan.json", &scan);
    Ok(scan)
}

pub fn ldp_check(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<bridgelab::TubeCheck> {
    let sampler = dynamic_sampler(cfg)?;
    let check = tube_check(cfg, &sampler)?;
    bundle.add_csv("tube.csv", tube_table(&check));
    bundle.add_json("ldp.json", &check);
    Ok(check)
}

pub fn run_dynamic(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<()> {
    run_dynamic_sb(cfg, bundle).map(|_| ())
}

pub fn validate(cfg: &ExperimentConfig, bundle: &mut Bundle) -> Result<()> {
    let report = validate_assumptions(cfg)?;
    bundle.add_csv("validate.csv", validation_table(&report));
    bundle.add_json("validate.json", &report);
    Ok(())
}
