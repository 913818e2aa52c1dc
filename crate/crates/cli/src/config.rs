//! Input documents: the process description (`--spec`) and the optional
//! grid override (`--grid`).

use std::path::Path;

use harnack_core::harnack_lab::{HarnackGrid, RatioGrid};
use harnack_core::levy_core::{DominatingLevySpec, Driver, OUSpec, RadialTerm, StableSpec, TruncatedStableSpec};
use harnack_core::ou_semigroup::TestFunction;
use harnack_core::stats::Bandwidth;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    #[default]
    Stable,
    Truncated,
    Dominating,
}

/// Process description. `c` is the Lévy-measure coefficient of the stable
/// part; `r` the jump cutoff of a truncated driver; `terms` the extra
/// radial Lévy density of a dominating driver; `A` the drift matrix,
/// row-major, zero when absent.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDoc {
    pub d: usize,
    pub alpha: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub driver: DriverKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<RadialTerm>,
}

impl ProcessDoc {
    pub fn stable(&self) -> Result<StableSpec, CliError> {
        Ok(StableSpec::new(self.d, self.alpha, self.c)?)
    }

    pub fn truncated(&self) -> Result<TruncatedStableSpec, CliError> {
        let r = self.r.ok_or_else(|| CliError::Config("field `r`: required for a truncated driver".into()))?;
        Ok(TruncatedStableSpec::new(self.d, self.alpha, self.c, r)?)
    }

    pub fn driver(&self) -> Result<Driver, CliError> {
        if self.driver != DriverKind::Truncated && self.r.is_some() {
            return Err(CliError::Config("field `r`: only allowed with \"driver\": \"truncated\"".into()));
        }
        if self.driver != DriverKind::Dominating && !self.terms.is_empty() {
            return Err(CliError::Config("field `terms`: only allowed with \"driver\": \"dominating\"".into()));
        }
        Ok(match self.driver {
            DriverKind::Stable => Driver::Stable(self.stable()?),
            DriverKind::Truncated => Driver::Truncated(self.truncated()?),
            DriverKind::Dominating => Driver::Dominating(DominatingLevySpec::new(self.terms.clone(), self.stable()?)?),
        })
    }

    pub fn ou(&self) -> Result<OUSpec, CliError> {
        let driver = self.driver()?;
        let drift = match &self.a {
            None => DMatrix::zeros(self.d, self.d),
            Some(rows) => {
                if rows.len() != self.d || rows.iter().any(|r| r.len() != self.d) {
                    return Err(CliError::Config(format!("field `A`: must be a {0}x{0} matrix", self.d)));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                DMatrix::from_row_slice(self.d, self.d, &flat)
            }
        };
        Ok(OUSpec::new(drift, driver)?)
    }

    pub fn has_drift(&self) -> bool {
        self.a.as_ref().is_some_and(|rows| rows.iter().flatten().any(|&v| v != 0.0))
    }
}

/// Optional overrides; anything absent takes the subcommand default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    /// Samples per time or per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<Bandwidth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub harnack: Option<HarnackGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<HarnackGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_functions: Option<Vec<TestFunction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_test_functions: Option<Vec<TestFunction>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
}

/// Reads a JSON document; parse errors carry line, column and field.
pub fn read_doc<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{what} {}: {e}", path.display())))
}
