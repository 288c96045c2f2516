//! Fixtures shared by the benchmarks.

use bridgelab::{BridgeSpec, DiffusionModel, DiscreteMarginal};

/// `n` evenly spaced atoms on `[lo, hi]` with uniform weights.
pub fn grid_marginal(n: usize, lo: f64, hi: f64) -> DiscreteMarginal {
    let atoms = (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64]).collect();
    DiscreteMarginal::uniform(atoms).expect("grid atoms are valid")
}

pub fn ou_bridge(eta: f64, x: f64, y: f64) -> BridgeSpec {
    let model = DiffusionModel::ornstein_uhlenbeck(1.0, eta, 1).expect("valid model");
    BridgeSpec::new(model, vec![x], vec![y]).expect("valid endpoints")
}
