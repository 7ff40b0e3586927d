//! The FLEX regression: per-(treated group, period) effect dummies layered
//! over two-way, group-, and time-interacted covariates plus fixed effects,
//! aggregated over the post-treatment effect dummies.

use std::collections::BTreeMap;

use crate::dataset::{CellIndex, PanelDataset};
use crate::design::build_flex_design;
use crate::error::{Error, Result};
use crate::estimators::{aggregate, AttCell, EstimateReport, Weighting};
use crate::linalg::{ols, ColumnLabel};

pub fn flex(data: &PanelDataset, leads: bool) -> Result<EstimateReport> {
    let design = build_flex_design(data, leads)?;
    let y: Vec<f64> = data.observations().iter().map(|o| o.outcome).collect();
    let fit = ols(&design, &y, false)?;

    let mut cells: Vec<AttCell> = Vec::new();
    for group in data.treated_groups() {
        let ts = match data.first_treated(&group) {
            Some(ts) if ts <= *data.periods().last().unwrap() => ts,
            _ => continue,
        };
        for &t in data.periods().iter().filter(|&&t| t >= ts) {
            if !data.is_populated(&group, t) {
                continue;
            }
            let tau = fit
                .coef(&ColumnLabel::TreatmentEffect {
                    group: group.clone(),
                    time: t,
                })
                .ok_or_else(|| {
                    Error::estimation(format!(
                        "flex: effect dummy for ({group}, {t}) aliased"
                    ))
                })?;
            cells.push(AttCell {
                cell: CellIndex::new(group.clone(), t),
                theta: tau,
                weight: 0.0,
                n_treated: data.cell_rows(&group, t).len(),
                control_groups: Vec::new(),
                diff_treated: tau,
                diff_controls: BTreeMap::new(),
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::estimation("flex: no treated post cells"));
    }
    let overall_att = aggregate(&mut cells, Weighting::CellSize);

    Ok(EstimateReport {
        estimator_name: if leads { "flex-leads".into() } else { "flex".into() },
        overall_att,
        cells,
        se: None,
        p_randomization: None,
        diagnostics: fit
            .dropped
            .iter()
            .map(|l| format!("dropped aliased column {l}"))
            .collect(),
    })
}
