//! The intersection difference-in-differences estimator.
//!
//! Five steps: (1) the caller picks a covariate form (usually via the
//! model-selection ladder), (2) regress the outcome on one dummy per
//! populated (group, time) cell plus the form's covariate terms, without a
//! constant, (3) long-difference each cell coefficient against the treated
//! group's pre-treatment anchor `t^s - 1`, (4) subtract the combined control
//! long difference from the treated one per cell, (5) aggregate the cell
//! estimates with normalized weights.

use std::collections::BTreeMap;

use crate::dataset::{CellIndex, PanelDataset};
use crate::design::{build_didint_design, CovariateForm};
use crate::error::{Error, Result};
use crate::estimators::{aggregate, AttCell, EstimateReport, Weighting};
use crate::linalg::{ols, ColumnLabel, FitResult};

/// How multiple eligible control differences combine in step 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlCombination {
    /// Unweighted mean over eligible controls (default).
    Equal,
    /// Controls weighted by their cell size at the evaluation period.
    CellSize,
}

/// DID-INT with the default unweighted control combination.
pub fn didint(
    data: &PanelDataset,
    form: CovariateForm,
    weighting: Weighting,
) -> Result<EstimateReport> {
    didint_with(data, form, weighting, ControlCombination::Equal)
}

/// DID-INT with an explicit control-combination rule.
pub fn didint_with(
    data: &PanelDataset,
    form: CovariateForm,
    weighting: Weighting,
    combination: ControlCombination,
) -> Result<EstimateReport> {
    didint_impl(data, form, weighting, combination, false)
}

/// DID-INT that skips (with a diagnostic) treated cells lacking an eligible
/// control instead of failing; leave-one-group-out inference relies on it.
pub(crate) fn didint_lenient(
    data: &PanelDataset,
    form: CovariateForm,
    weighting: Weighting,
) -> Result<EstimateReport> {
    didint_impl(data, form, weighting, ControlCombination::Equal, true)
}

fn didint_impl(
    data: &PanelDataset,
    form: CovariateForm,
    weighting: Weighting,
    combination: ControlCombination,
    lenient: bool,
) -> Result<EstimateReport> {
    let treated = data.treated_groups();
    if treated.is_empty() {
        return Err(Error::estimation("didint: no treated group in the schedule"));
    }

    let design = build_didint_design(data, form)?;
    let y: Vec<f64> = data.observations().iter().map(|o| o.outcome).collect();
    let fit = ols(&design, &y, false)?;

    let lambda = |group: &str, time: i64| -> Result<f64> {
        fit.coef(&ColumnLabel::Cell {
            group: group.into(),
            time,
        })
        .ok_or_else(|| Error::UnpopulatedCell {
            group: group.into(),
            time,
        })
    };

    let mut cells: Vec<AttCell> = Vec::new();
    let mut diagnostics = dropped_diagnostics(&fit);

    for group in &treated {
        let ts = match data.first_treated(group) {
            Some(ts) if ts <= *data.periods().last().unwrap() => ts,
            _ => continue, // treated outside the observed window: control-only
        };
        let anchor = ts - 1;
        if !data.is_populated(group, anchor) {
            return Err(Error::UnpopulatedCell {
                group: group.clone(),
                time: anchor,
            });
        }
        let lambda_pre = lambda(group, anchor)?;

        for &t in data.periods().iter().filter(|&&t| t >= ts) {
            if !data.is_populated(group, t) {
                diagnostics.push(format!("skipped unpopulated post cell ({group}, {t})"));
                continue;
            }
            let cell = CellIndex::new(group.clone(), t);
            let usable: Vec<String> = match data.eligible_controls(&cell) {
                Ok(eligible) => eligible
                    .into_iter()
                    .filter(|c| data.is_populated(c, t) && data.is_populated(c, anchor))
                    .collect(),
                Err(Error::NoControl { .. }) => Vec::new(),
                Err(e) => return Err(e),
            };
            if usable.is_empty() {
                if lenient {
                    diagnostics.push(format!("skipped cell ({group}, {t}): no eligible control"));
                    continue;
                }
                return Err(Error::NoControl {
                    group: group.clone(),
                    time: t,
                });
            }

            let diff_treated = lambda(group, t)? - lambda_pre;
            let mut diff_controls = BTreeMap::new();
            let mut combined = 0.0;
            let mut combined_weight = 0.0;
            for control in &usable {
                let d = lambda(control, t)? - lambda(control, anchor)?;
                let w = match combination {
                    ControlCombination::Equal => 1.0,
                    ControlCombination::CellSize => data.cell_rows(control, t).len() as f64,
                };
                combined += w * d;
                combined_weight += w;
                diff_controls.insert(control.clone(), d);
            }
            combined /= combined_weight;

            cells.push(AttCell {
                theta: diff_treated - combined,
                cell,
                weight: 0.0,
                n_treated: data.cell_rows(group, t).len(),
                control_groups: usable,
                diff_treated,
                diff_controls,
            });
        }
    }

    if cells.is_empty() {
        return Err(Error::estimation(
            "didint: no treated (group, period) cells inside the observed window",
        ));
    }
    let overall_att = aggregate(&mut cells, weighting);

    Ok(EstimateReport {
        estimator_name: format!("didint-{form}"),
        overall_att,
        cells,
        se: None,
        p_randomization: None,
        diagnostics,
    })
}

pub(crate) fn dropped_diagnostics(fit: &FitResult) -> Vec<String> {
    fit.dropped
        .iter()
        .map(|l| format!("dropped aliased column {l}"))
        .collect()
}
