//! Named path functionals selectable from a config.

use bridgelab::functional::{Constant, IntegralPenalty, PathFunctional, PointPenalty, SupNormSoft};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FUNCTIONAL_IDS: [&str; 5] =
    ["midpoint-penalty", "terminal-penalty", "integral-penalty", "sup-norm-soft", "constant"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub id: String,
    /// Target point `a`; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    /// Saturation level; defaults to 4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
    /// Soft-max sharpness for `sup-norm-soft`; defaults to 10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Value of the `constant` functional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl FunctionalSpec {
    pub fn new(id: &str) -> Self {
        Self { id: id.to_string(), target: None, cap: None, beta: None, value: None }
    }

    pub fn build(&self, dim: usize) -> Result<Box<dyn PathFunctional>> {
        let target = self.target.clone().unwrap_or_else(|| vec![0.0; dim]);
        if target.len() != dim {
            return Err(CliError::config("functional.target", format!("expected {dim} coordinates, got {}", target.len())));
        }
        let cap = self.cap.unwrap_or(4.0);
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(CliError::config("functional.cap", "must be positive and finite"));
        }
        let unused = |field: &str, set: bool| {
            if set {
                Err(CliError::config(format!("functional.{field}"), format!("not a parameter of `{}`", self.id)))
            } else {
                Ok(())
            }
        };
        let f: Box<dyn PathFunctional> = match self.id.as_str() {
            "midpoint-penalty" | "terminal-penalty" | "integral-penalty" => {
                unused("beta", self.beta.is_some())?;
                unused("value", self.value.is_some())?;
                match self.id.as_str() {
                    "midpoint-penalty" => Box::new(PointPenalty::midpoint(target, cap)),
                    "terminal-penalty" => Box::new(PointPenalty::terminal(target, cap)),
                    _ => Box::new(IntegralPenalty { target, cap }),
                }
            }
            "sup-norm-soft" => {
                unused("value", self.value.is_some())?;
                let beta = self.beta.unwrap_or(10.0);
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(CliError::config("functional.beta", "must be positive and finite"));
                }
                Box::new(SupNormSoft { target, beta, cap })
            }
            "constant" => {
                unused("target", self.target.is_some())?;
                unused("cap", self.cap.is_some())?;
                unused("beta", self.beta.is_some())?;
                let v = self.value.ok_or_else(|| CliError::config("functional.value", "required for `constant`"))?;
                Box::new(Constant(v))
            }
            other => {
                return Err(CliError::config(
                    "functional.id",
                    format!("unknown functional `{other}`; expected one of {}", FUNCTIONAL_IDS.join(", ")),
                ))
            }
        };
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_builds_a_bounded_functional() {
        for id in FUNCTIONAL_IDS {
            let mut spec = FunctionalSpec::new(id);
            if id == "constant" {
                spec.value = Some(0.5);
            }
            let f = spec.build(2).unwrap();
            assert!(f.bounds().1.is_finite(), "{id}");
        }
    }

    #[test]
    fn bad_parameters_are_config_errors() {
        let mut spec = FunctionalSpec::new("midpoint-penalty");
        spec.target = Some(vec![1.0]);
        assert!(matches!(spec.build(2), Err(CliError::Config { path, .. }) if path == "functional.target"));
        let mut spec = FunctionalSpec::new("integral-penalty");
        spec.beta = Some(3.0);
        assert!(matches!(spec.build(1), Err(CliError::Config { path, .. }) if path == "functional.beta"));
        assert!(matches!(FunctionalSpec::new("wiggle").build(1), Err(CliError::Config { path, .. }) if path == "functional.id"));
    }
}
