//! JSON model-spec files.
//!
//! ```json
//! {
//!   "family": "binomial",
//!   "trials": 5,
//!   "theta": [0.3],
//!   "contamination": { "epsilon": 0.1, "delta": [0.01, 0.01, 0.01, 0.01, 0.01, 0.95] }
//! }
//! ```
//!
//! `family` is one of `bernoulli`, `categorical` (with `m`) or `binomial`
//! (with `trials`). `theta` and `contamination` are optional.

use std::path::Path;

use acrlb_core::model::{ContaminationSpec, PMF_SUM_TOL};
use acrlb_core::{Error, ParametricFamily, Pmf, Result};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContamination {
    epsilon: f64,
    delta: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: String,
    m: Option<usize>,
    trials: Option<usize>,
    theta: Option<Vec<f64>>,
    contamination: Option<RawContamination>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: ParametricFamily,
    pub theta: Option<Vec<f64>>,
    pub contamination: Option<ContaminationSpec>,
}

/// Checks a probability vector given on the command line or in a spec
/// file, with messages that say what is wrong and where.
pub fn validate_probabilities(what: &str, v: &[f64]) -> Result<Pmf> {
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
        return Err(Error::Validation(format!(
            "{what}[{i}] = {x} is not a probability (entries must be finite and non-negative)"
        )));
    }
    if let Some(i) = v.iter().position(|x| *x == 0.0) {
        return Err(Error::Validation(format!(
            "{what}[{i}] = 0: the contaminating distribution must have the same support as the \
             model (every outcome needs positive probability)"
        )));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > PMF_SUM_TOL {
        return Err(Error::Validation(format!(
            "{what} sums to {total}, not 1 (tolerance {PMF_SUM_TOL:e})"
        )));
    }
    Pmf::new(v.to_vec()).map_err(|e| Error::Validation(format!("{what}: {e}")))
}

pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let family = match raw.family.as_str() {
        "bernoulli" => ParametricFamily::bernoulli(),
        "categorical" => {
            let m = raw
                .m
                .ok_or_else(|| Error::Validation("categorical spec needs \"m\"".into()))?;
            ParametricFamily::categorical(m).map_err(|e| Error::Validation(e.to_string()))?
        }
        "binomial" => {
            let trials = raw
                .trials
                .ok_or_else(|| Error::Validation("binomial spec needs \"trials\"".into()))?;
            ParametricFamily::binomial(trials).map_err(|e| Error::Validation(e.to_string()))?
        }
        other => {
            return Err(Error::Validation(format!(
                "unknown family {other:?} (expected bernoulli, categorical or binomial)"
            )))
        }
    };
    if let Some(theta) = &raw.theta {
        family
            .check_domain(theta)
            .map_err(|e| Error::Validation(format!("theta: {e}")))?;
    }
    let contamination = match raw.contamination {
        None => None,
        Some(c) => {
            if c.delta.len() != family.outcomes() {
                return Err(Error::Validation(format!(
                    "delta has {} entries but {} has {} outcomes",
                    c.delta.len(),
                    family.name(),
                    family.outcomes()
                )));
            }
            let delta = validate_probabilities("delta", &c.delta)?;
            Some(ContaminationSpec::new(c.epsilon, delta)?)
        }
    };
    Ok(ModelSpec {
        family,
        theta: raw.theta,
        contamination,
    })
}

pub fn load_model_spec(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model_spec(&text)
}
