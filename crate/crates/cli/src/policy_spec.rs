use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use bwe_core::policy::{
    load_weights, ConstantEstimator, Estimator, HeuristicEstimator, NeuralEstimator,
    NoisyEstimator, OracleEstimator,
};
use bwe_core::traces::Trace;
use bwe_core::ModelWeights;
use serde::{Serialize, Serializer};

use crate::CliError;

/// `heuristic | oracle | constant:<bps> | weights:<path> | noisy-heuristic:<sigma>`
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Heuristic,
    Oracle,
    Constant(f64),
    Weights(PathBuf),
    NoisyHeuristic(f64),
}

impl FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64, String> {
            let a = a.ok_or_else(|| format!("policy {kind:?} needs an argument"))?;
            a.parse::<f64>()
                .map_err(|e| format!("policy {kind:?}: {e}"))
        };
        match kind {
            "heuristic" if arg.is_none() => Ok(Self::Heuristic),
            "oracle" if arg.is_none() => Ok(Self::Oracle),
            "constant" => {
                let bps = number(arg)?;
                if !(bps.is_finite() && bps > 0.0) {
                    return Err(format!("constant rate must be positive, got {bps}"));
                }
                Ok(Self::Constant(bps))
            }
            "noisy-heuristic" => {
                let sigma = number(arg)?;
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(format!("noise level must be non-negative, got {sigma}"));
                }
                Ok(Self::NoisyHeuristic(sigma))
            }
            "weights" => match arg {
                Some(p) if !p.is_empty() => Ok(Self::Weights(PathBuf::from(p))),
                _ => Err("weights policy needs a file path".into()),
            },
            _ => Err(format!(
                "unknown policy {s:?} (heuristic | oracle | constant:<bps> | weights:<path> | noisy-heuristic:<sigma>)"
            )),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Heuristic => write!(f, "heuristic"),
            Self::Oracle => write!(f, "oracle"),
            Self::Constant(bps) => write!(f, "constant:{bps}"),
            Self::Weights(p) => write!(f, "weights:{}", p.display()),
            Self::NoisyHeuristic(s) => write!(f, "noisy-heuristic:{s}"),
        }
    }
}

impl Serialize for PolicySpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A policy spec with its weight file loaded, ready to build one estimator
/// per call.
#[derive(Debug, Clone)]
pub struct PolicyFactory {
    spec: PolicySpec,
    weights: Option<ModelWeights>,
}

impl PolicyFactory {
    pub fn new(spec: PolicySpec) -> Result<Self, CliError> {
        let weights = match &spec {
            PolicySpec::Weights(path) => {
                if !path.exists() {
                    return Err(CliError::Policy(format!(
                        "weights file {} not found",
                        path.display()
                    )));
                }
                let w = load_weights(path)
                    .map_err(|e| CliError::Policy(format!("{}: {e}", path.display())))?;
                Some(w)
            }
            _ => None,
        };
        Ok(Self { spec, weights })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// Name used in reports and trajectory files; independent of the
    /// directory a weight file lives in.
    pub fn label(&self) -> String {
        match &self.spec {
            PolicySpec::Weights(p) => format!(
                "weights:{}",
                p.file_name().map_or_else(
                    || p.display().to_string(),
                    |n| n.to_string_lossy().into_owned()
                )
            ),
            other => other.to_string(),
        }
    }

    pub fn build(&self, trace: &Trace, seed: u64) -> Box<dyn Estimator> {
        match &self.spec {
            PolicySpec::Heuristic => Box::new(HeuristicEstimator::default()),
            PolicySpec::Oracle => Box::new(OracleEstimator::new(trace.clone())),
            PolicySpec::Constant(bps) => Box::new(ConstantEstimator { bps: *bps }),
            PolicySpec::NoisyHeuristic(sigma) => Box::new(NoisyEstimator::new(
                HeuristicEstimator::default(),
                *sigma,
                seed,
            )),
            PolicySpec::Weights(_) => {
                let w = self.weights.clone().expect("weights loaded in new");
                Box::new(NeuralEstimator::new(w, self.label()).expect("weights validated on load"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints() {
        for s in [
            "heuristic",
            "oracle",
            "constant:10000",
            "weights:a/b.bin",
            "noisy-heuristic:0.15",
        ] {
            let spec: PolicySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        for s in [
            "",
            "oracle:1",
            "constant",
            "constant:-5",
            "constant:x",
            "weights:",
            "noisy-heuristic:-1",
            "bandit",
        ] {
            assert!(s.parse::<PolicySpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn missing_weights_file() {
        let spec = PolicySpec::Weights("/nonexistent/w.bin".into());
        assert!(matches!(PolicyFactory::new(spec), Err(CliError::Policy(_))));
    }
}
