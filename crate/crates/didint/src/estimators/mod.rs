//! ATT estimators: the intersection DiD in all covariate forms, two-way
//! fixed effects (plain and with interacted covariates), the cohort 2x2
//! estimator with outcome-regression / IPW / doubly-robust adjustment, the
//! static imputation estimator, the FLEX regression, and the Goodman-Bacon
//! 2x2 subsample check.

mod bacon;
mod csdid;
mod didint;
mod flex;
mod imputation;
mod twfe;

pub use bacon::bacon_2x2;
pub use csdid::{csdid, Adjustment};
pub use didint::{didint, didint_with, ControlCombination};
pub use flex::flex;
pub use imputation::imputation;
pub use twfe::twfe;

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::dataset::{CellIndex, PanelDataset};
use crate::design::CovariateForm;
use crate::error::{Error, Result};

/// How per-cell ATT estimates are combined into the overall ATT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Weights proportional to the number of treated observations per cell.
    CellSize,
    /// Equal weight per cell.
    Equal,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell-size" => Ok(Weighting::CellSize),
            "equal" => Ok(Weighting::Equal),
            other => Err(Error::Config(format!(
                "unknown weighting `{other}` (cell-size|equal)"
            ))),
        }
    }
}

/// One per-cell ATT estimate with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct AttCell {
    pub cell: CellIndex,
    /// The cell ATT: treated long difference minus combined control long
    /// difference.
    pub theta: f64,
    /// Aggregation weight; weights over a report's cells sum to one.
    pub weight: f64,
    /// Treated observations in the cell.
    pub n_treated: usize,
    /// Control groups actually used (always within the eligible set).
    pub control_groups: Vec<String>,
    pub diff_treated: f64,
    pub diff_controls: BTreeMap<String, f64>,
}

/// Full output of one estimator run.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimator_name: String,
    pub overall_att: f64,
    pub cells: Vec<AttCell>,
    pub se: Option<f64>,
    pub p_randomization: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Writes the cell table as CSV.
    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
        wtr.write_record([
            "group",
            "time",
            "theta",
            "weight",
            "n_treated",
            "control_groups",
            "diff_treated",
        ])?;
        for c in &self.cells {
            wtr.write_record([
                c.cell.group.clone(),
                c.cell.time.to_string(),
                format!("{}", c.theta),
                format!("{}", c.weight),
                c.n_treated.to_string(),
                c.control_groups.join(";"),
                format!("{}", c.diff_treated),
            ])?;
        }
        wtr.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

/// A named, runnable estimator configuration. This is the unit the Monte
/// Carlo engine, the inference routines, and the CLI all dispatch on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimatorSpec {
    Didint {
        form: CovariateForm,
        weighting: Weighting,
    },
    Twfe {
        interacted: bool,
        form: CovariateForm,
    },
    Csdid {
        adjustment: Adjustment,
    },
    Imputation,
    Flex {
        leads: bool,
    },
}

impl EstimatorSpec {
    pub fn run(&self, data: &PanelDataset) -> Result<EstimateReport> {
        match self {
            EstimatorSpec::Didint { form, weighting } => didint(data, *form, *weighting),
            EstimatorSpec::Twfe { interacted, form } => twfe(data, *interacted, *form),
            EstimatorSpec::Csdid { adjustment } => csdid(data, *adjustment),
            EstimatorSpec::Imputation => imputation(data),
            EstimatorSpec::Flex { leads } => flex(data, *leads),
        }
    }

    /// Like [`run`](Self::run), but cell-based estimators skip (with a
    /// diagnostic) treated cells that lose their last eligible control
    /// instead of failing. Used by leave-one-group-out inference.
    pub fn run_lenient(&self, data: &PanelDataset) -> Result<EstimateReport> {
        match self {
            EstimatorSpec::Didint { form, weighting } => {
                didint::didint_lenient(data, *form, *weighting)
            }
            EstimatorSpec::Csdid { adjustment } => csdid::csdid_lenient(data, *adjustment),
            other => other.run(data),
        }
    }

    /// Canonical name, also accepted by [`parse`](str::parse).
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Didint { form, .. } => format!("didint-{form}"),
            EstimatorSpec::Twfe { interacted: false, .. } => "twfe".into(),
            EstimatorSpec::Twfe { interacted: true, form } => format!("twfe-mod-{form}"),
            EstimatorSpec::Csdid { adjustment } => match adjustment {
                Adjustment::None => "csdid-none".into(),
                Adjustment::OutcomeRegression => "csdid-or".into(),
                Adjustment::Ipw => "csdid-ipw".into(),
                Adjustment::DoublyRobust => "csdid-dr".into(),
            },
            EstimatorSpec::Imputation => "imputation".into(),
            EstimatorSpec::Flex { leads: false } => "flex".into(),
            EstimatorSpec::Flex { leads: true } => "flex-leads".into(),
        }
    }
}

impl std::str::FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let didint_default = |form| EstimatorSpec::Didint {
            form,
            weighting: Weighting::CellSize,
        };
        match s {
            "didint" => Ok(didint_default(CovariateForm::TwoWay)),
            "twfe" => Ok(EstimatorSpec::Twfe {
                interacted: false,
                form: CovariateForm::None,
            }),
            "twfe-mod" | "twfe-modified" => Ok(EstimatorSpec::Twfe {
                interacted: true,
                form: CovariateForm::TwoWay,
            }),
            "csdid" | "csdid-dr" => Ok(EstimatorSpec::Csdid {
                adjustment: Adjustment::DoublyRobust,
            }),
            "csdid-none" => Ok(EstimatorSpec::Csdid {
                adjustment: Adjustment::None,
            }),
            "csdid-or" => Ok(EstimatorSpec::Csdid {
                adjustment: Adjustment::OutcomeRegression,
            }),
            "csdid-ipw" => Ok(EstimatorSpec::Csdid {
                adjustment: Adjustment::Ipw,
            }),
            "imputation" => Ok(EstimatorSpec::Imputation),
            "flex" => Ok(EstimatorSpec::Flex { leads: false }),
            "flex-leads" => Ok(EstimatorSpec::Flex { leads: true }),
            other => {
                if let Some(form) = other.strip_prefix("didint-") {
                    return Ok(didint_default(form.parse()?));
                }
                if let Some(form) = other.strip_prefix("twfe-mod-") {
                    return Ok(EstimatorSpec::Twfe {
                        interacted: true,
                        form: form.parse()?,
                    });
                }
                Err(Error::Config(format!("unknown estimator `{other}`")))
            }
        }
    }
}

/// Assigns normalized aggregation weights and returns the weighted ATT.
pub(crate) fn aggregate(cells: &mut [AttCell], weighting: Weighting) -> f64 {
    if cells.is_empty() {
        return f64::NAN;
    }
    match weighting {
        Weighting::CellSize => {
            let total: f64 = cells.iter().map(|c| c.n_treated as f64).sum();
            for c in cells.iter_mut() {
                c.weight = c.n_treated as f64 / total;
            }
        }
        Weighting::Equal => {
            let w = 1.0 / cells.len() as f64;
            for c in cells.iter_mut() {
                c.weight = w;
            }
        }
    }
    cells.iter().map(|c| c.weight * c.theta).sum()
}
