//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use bridgelab::eot::CostMode;
use bridgelab::{
    BridgeSpec, DiffusionModel, DiscreteMarginal, MinimizeSettings, ModelSpec, PathSample, Scheme, SimConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result, Stage};
use crate::registry::FunctionalSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge: Option<BridgeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<MarginalsBlock>,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tube: Option<TubeBlock>,
    #[serde(default)]
    pub minimize: MinimizeSettings,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub dynamic: DynamicBlock,
    #[serde(default)]
    pub validate: ValidateBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Pinned endpoints of a single bridge (or the start point of a forward run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeBlock {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalsBlock {
    pub mu: MarginalSpec,
    pub nu: MarginalSpec,
}

/// Inline atoms (uniform when `weights` is omitted) or a CSV file with
/// columns `x_1..x_d` and an optional `weight` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub n_steps: usize,
    pub batch: usize,
    pub scheme: Scheme,
    /// Defaults to `max(1e-3, 1/n_steps)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_pin: Option<f64>,
    pub refine_terminal: bool,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self { n_steps: 100, batch: 1000, scheme: Scheme::EulerMaruyama, delta_pin: None, refine_terminal: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    /// Entropic regularization; defaults to the model's noise level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub cost: CostMode,
    /// Extra regularization levels solved by `sinkhorn` and compared against exact transport.
    pub eta_schedule: Vec<f64>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self { eta: None, tol: 1e-10, max_iter: 100_000, cost: CostMode::FiniteEta, eta_schedule: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub etas: Vec<f64>,
    /// Overrides `sim.batch` for the sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    /// Endpoint pairs `[x, y]` for `uniform-scan`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<[Vec<f64>; 2]>,
    #[serde(default = "default_controlled_below")]
    pub controlled_below: f64,
    /// Pass threshold on the last gap, relative to `1 + |variational value|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_gap_tol: Option<f64>,
}

fn default_controlled_below() -> f64 {
    bridgelab::laplace::CONTROLLED_ETA
}

/// Sup-norm tube around the straight line `from -> to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeBlock {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub radius: f64,
    pub etas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    #[default]
    Bridge,
    Forward,
    Reversed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateBlock {
    pub process: Process,
    /// Start point of a forward run; defaults to `bridge.x`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicBlock {
    /// Path indices whose rate report is written by `run-dynamic-sb`.
    pub rate_paths: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateBlock {
    /// Time margin `delta` before the terminal time.
    pub delta: f64,
    /// Half-width of the compact box `K`.
    pub radius: f64,
    pub samples: usize,
    /// Exit box half-width; omitted means unbounded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_radius: Option<f64>,
    pub etas: Vec<f64>,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        Self { delta: 0.1, radius: 2.0, samples: 500, exit_radius: None, etas: vec![0.5, 0.2, 0.1, 0.05] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// Caps the number of paths written to CSV; all paths are still simulated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_paths: Option<usize>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json], max_paths: None }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            CliError::config(format!("line {} column {}", e.line(), e.column()), e)
        })
    }

    /// Reads a config file; relative marginal CSV paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config(path.display().to_string(), e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = &mut cfg.marginals {
            for spec in [&mut m.mu, &mut m.nu] {
                if let Some(p) = &mut spec.csv {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Static validation that does not depend on the subcommand.
    pub fn check(&self) -> Result<()> {
        self.model_at(self.model.eta)?;
        self.sim_config()?;
        if let Some(m) = &self.marginals {
            for (name, spec) in [("marginals.mu", &m.mu), ("marginals.nu", &m.nu)] {
                if let Some(p) = &spec.csv {
                    if !p.exists() {
                        return Err(CliError::config(format!("{name}.csv"), format!("{} does not exist", p.display())));
                    }
                }
            }
        }
        if self.output.formats.is_empty() {
            return Err(CliError::config("output.formats", "at least one format is required"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<DiffusionModel> {
        self.model_at(self.model.eta)
    }

    pub fn model_at(&self, eta: f64) -> Result<DiffusionModel> {
        DiffusionModel::from_spec(&ModelSpec { eta, ..self.model.clone() }).field("model")
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.sim;
        let mut cfg = SimConfig::new(s.n_steps, s.batch, self.seed).with_scheme(s.scheme);
        if let Some(d) = s.delta_pin {
            cfg.delta_pin = d;
        }
        cfg.refine_terminal = s.refine_terminal;
        cfg.validate().field("sim")?;
        Ok(cfg)
    }

    pub fn bridge_spec(&self) -> Result<BridgeSpec> {
        let b = self.bridge.as_ref().ok_or_else(|| CliError::config("bridge", "this command needs a bridge block"))?;
        BridgeSpec::new(self.model()?, b.x.clone(), b.y.clone()).field("bridge")
    }

    pub fn functional(&self) -> Result<Box<dyn bridgelab::PathFunctional>> {
        self.functional
            .as_ref()
            .ok_or_else(|| CliError::config("functional", "this command needs a functional block"))?
            .build(self.model.dim)
    }

    pub fn sweep(&self) -> Result<&SweepBlock> {
        self.sweep.as_ref().ok_or_else(|| CliError::config("sweep", "this command needs a sweep block"))
    }

    pub fn tube(&self) -> Result<&TubeBlock> {
        self.tube.as_ref().ok_or_else(|| CliError::config("tube", "this command needs a tube block"))
    }

    pub fn marginals(&self) -> Result<(DiscreteMarginal, DiscreteMarginal)> {
        let m = self.marginals.as_ref().ok_or_else(|| CliError::config("marginals", "this command needs marginals"))?;
        let mu = m.mu.resolve("marginals.mu")?;
        let nu = m.nu.resolve("marginals.nu")?;
        for (name, d) in [("marginals.mu", mu.dim()), ("marginals.nu", nu.dim())] {
            if d != self.model.dim {
                return Err(CliError::config(name, format!("atoms have dimension {d}, model has {}", self.model.dim)));
            }
        }
        Ok((mu, nu))
    }

    /// Regularization for the static problem.
    pub fn solver_eta(&self) -> f64 {
        self.solver.eta.unwrap_or(self.model.eta)
    }

    pub fn writes(&self, format: Format) -> bool {
        self.output.formats.contains(&format)
    }
}

impl MarginalSpec {
    pub fn resolve(&self, path: &str) -> Result<DiscreteMarginal> {
        match (&self.atoms, &self.csv) {
            (Some(atoms), None) => match &self.weights {
                Some(w) => DiscreteMarginal::new(atoms.clone(), w.clone()),
                None => DiscreteMarginal::uniform(atoms.clone()),
            }
            .field(path),
            (None, Some(file)) => {
                if self.weights.is_some() {
                    return Err(CliError::config(format!("{path}.weights"), "weights come from the CSV file"));
                }
                read_marginal_csv(file).map_err(|m| CliError::config(format!("{path}.csv"), m))
            }
            _ => Err(CliError::config(path, "give exactly one of `atoms` or `csv`")),
        }
    }
}

fn read_marginal_csv(file: &Path) -> std::result::Result<DiscreteMarginal, String> {
    let mut rdr = csv::Reader::from_path(file).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let weight_col = headers.iter().position(|h| h == "weight");
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let mut atom = Vec::new();
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| format!("bad number `{field}`"))?;
            if Some(k) == weight_col {
                weights.push(v);
            } else {
                atom.push(v);
            }
        }
        atoms.push(atom);
    }
    let m = if weight_col.is_some() {
        let s: f64 = weights.iter().sum();
        DiscreteMarginal::new(atoms, weights.iter().map(|w| w / s).collect())
    } else {
        DiscreteMarginal::uniform(atoms)
    };
    m.map_err(|e| e.to_string())
}

/// Reads `path_id,step,t,x_1..x_d` rows into paths, ordered by id.
pub fn read_paths_csv(file: &Path) -> Result<Vec<PathSample>> {
    let bad = |m: String| CliError::config(format!("--path {}", file.display()), m);
    let mut rdr = csv::Reader::from_path(file).map_err(|e| bad(e.to_string()))?;
    let dim = rdr.headers().map_err(|e| bad(e.to_string()))?.len().saturating_sub(3);
    if dim == 0 {
        return Err(bad("expected columns path_id,step,t,x_1..x_d".into()));
    }
    let mut grouped: std::collections::BTreeMap<u64, (Vec<f64>, Vec<f64>)> = Default::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let id: u64 = rec[0].parse().map_err(|_| bad(format!("bad path_id `{}`", &rec[0])))?;
        let entry = grouped.entry(id).or_default();
        let t: f64 = rec[2].parse().map_err(|_| bad(format!("bad time `{}`", &rec[2])))?;
        entry.0.push(t);
        for k in 0..dim {
            entry.1.push(rec[3 + k].parse().map_err(|_| bad(format!("bad state `{}`", &rec[3 + k])))?);
        }
    }
    grouped
        .into_iter()
        .map(|(id, (t, s))| {
            let mut p = PathSample::new(t.into(), s, dim).map_err(|e| bad(e.to_string()))?;
            p.path_id = id;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"kind": "bm", "eta": 0.1, "dim": 1}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.sim.n_steps, 100);
        assert_eq!(c.solver_eta(), 0.1);
        assert!(c.check().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"model": {"kind": "bm", "eta": 0.1, "dim": 1}, "sede": 3}"#);
        assert!(matches!(e, Err(CliError::Config { .. })));
        let e = ExperimentConfig::from_json(r#"{"model": {"kind": "bm", "eta": 0.1, "dim": 1, "thet": 1}}"#);
        assert!(e.is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{
            "seed": 9,
            "model": {"kind": "ou", "eta": 0.2, "dim": 1, "theta": 1.5},
            "bridge": {"x": [0.0], "y": [1.0]},
            "marginals": {"mu": {"atoms": [[0.0]]}, "nu": {"atoms": [[-1.0], [1.0]], "weights": [0.25, 0.75]}},
            "functional": {"id": "midpoint-penalty", "target": [1.0], "cap": 4.0},
            "sweep": {"etas": [0.5, 0.1], "pairs": [[[0.0], [1.0]]]},
            "tube": {"from": [0.0], "to": [1.0], "radius": 0.5, "etas": [0.5]}
        }"#;
        let a = ExperimentConfig::from_json(text).unwrap();
        let b = ExperimentConfig::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn invalid_values_name_their_field() {
        let c = ExperimentConfig::from_json(r#"{"model": {"kind": "ou", "eta": 0.1, "dim": 1}}"#).unwrap();
        match c.check() {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "model"),
            other => panic!("{other:?}"),
        }
        let c = ExperimentConfig::from_json(
            r#"{"model": {"kind": "bm", "eta": 0.1, "dim": 1}, "marginals": {"mu": {"atoms": [[0.0]], "csv": "a.csv"}, "nu": {"atoms": [[0.0]]}}}"#,
        )
        .unwrap();
        assert!(matches!(c.marginals(), Err(CliError::Config { path, .. }) if path == "marginals.mu"));
    }

    #[test]
    fn missing_marginal_file_is_a_config_error() {
        let c = ExperimentConfig::from_json(
            r#"{"model": {"kind": "bm", "eta": 0.1, "dim": 1}, "marginals": {"mu": {"csv": "/nonexistent/mu.csv"}, "nu": {"atoms": [[0.0]]}}}"#,
        )
        .unwrap();
        assert!(matches!(c.check(), Err(CliError::Config { path, .. }) if path == "marginals.mu.csv"));
    }
}
