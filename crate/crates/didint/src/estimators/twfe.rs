//! Two-way fixed effects, plain or with interacted covariates.

use crate::dataset::PanelDataset;
use crate::design::{build_twfe_design, CovariateForm};
use crate::error::{Error, Result};
use crate::estimators::didint::dropped_diagnostics;
use crate::estimators::EstimateReport;
use crate::linalg::{ols, ColumnLabel};

/// Regresses the outcome on group and time fixed effects, the treatment
/// dummy, and covariates. With `interacted` the covariates enter per `form`
/// (two-way interactions reproduce the modified TWFE); otherwise they enter
/// pooled. The coefficient on the treatment dummy is the reported ATT.
pub fn twfe(data: &PanelDataset, interacted: bool, form: CovariateForm) -> Result<EstimateReport> {
    let design = build_twfe_design(data, interacted, form)?;
    let y: Vec<f64> = data.observations().iter().map(|o| o.outcome).collect();
    let fit = ols(&design, &y, false)?;
    let beta = fit.coef(&ColumnLabel::Treatment).ok_or_else(|| {
        Error::estimation("twfe: treatment dummy aliased (no treated/control contrast)")
    })?;
    let name = if interacted {
        format!("twfe-modified-{form}")
    } else {
        "twfe".to_string()
    };
    Ok(EstimateReport {
        estimator_name: name,
        overall_att: beta,
        cells: Vec::new(),
        se: None,
        p_randomization: None,
        diagnostics: dropped_diagnostics(&fit),
    })
}
