//! Static imputation estimator: fit fixed effects and covariate
//! coefficients on untreated observations only, impute each treated
//! observation's untreated counterfactual, and average the gaps.
//!
//! With repeated cross-sections there is no unit fixed effect to estimate,
//! so group fixed effects stand in for it.

use std::collections::BTreeMap;

use crate::dataset::{CellIndex, PanelDataset};
use crate::error::{Error, Result};
use crate::estimators::{AttCell, EstimateReport};
use crate::linalg::{ols, ColumnLabel, DesignMatrix};

pub fn imputation(data: &PanelDataset) -> Result<EstimateReport> {
    let untreated: Vec<usize> = (0..data.n_observations())
        .filter(|&i| {
            let o = &data.observations()[i];
            !data.is_treated_at(&o.group, o.time)
        })
        .collect();
    let treated: Vec<usize> = (0..data.n_observations())
        .filter(|&i| {
            let o = &data.observations()[i];
            data.is_treated_at(&o.group, o.time)
        })
        .collect();
    if treated.is_empty() {
        return Err(Error::estimation("imputation: no treated observations"));
    }
    if untreated.is_empty() {
        return Err(Error::estimation("imputation: no untreated observations to fit on"));
    }

    // Group dummies (full set, no intercept) + time dummies (first period
    // as baseline) + covariates, fit on untreated rows only.
    let k = data.n_covariates();
    let mut labels: Vec<ColumnLabel> =
        data.groups().iter().map(|g| ColumnLabel::Group(g.clone())).collect();
    labels.extend(data.periods().iter().skip(1).map(|t| ColumnLabel::Time(*t)));
    labels.extend(data.covariate_names().iter().map(|n| ColumnLabel::Covariate {
        name: n.clone(),
        group: None,
        time: None,
    }));
    let n_groups = data.groups().len();
    let mut m = DesignMatrix::zeros(untreated.len(), labels)?;
    let mut y = Vec::with_capacity(untreated.len());
    for (i, &row) in untreated.iter().enumerate() {
        let obs = &data.observations()[row];
        let gi = data.group_index(&obs.group).unwrap();
        m.set(i, gi, 1.0);
        let ti = data.period_index(obs.time).unwrap();
        if ti > 0 {
            m.set(i, n_groups + ti - 1, 1.0);
        }
        for j in 0..k {
            m.set(i, n_groups + data.periods().len() - 1 + j, obs.covariates[j]);
        }
        y.push(obs.outcome);
    }
    let fit = ols(&m, &y, false)?;

    // Every fixed effect a treated observation needs must have been
    // estimable from untreated rows.
    let alpha = |group: &str| -> Result<f64> {
        fit.coef(&ColumnLabel::Group(group.into())).ok_or_else(|| {
            Error::estimation(format!(
                "imputation: group effect for {group} not estimable (never observed untreated)"
            ))
        })
    };
    let beta = |time: i64| -> Result<f64> {
        if data.period_index(time) == Some(0) {
            return Ok(0.0);
        }
        fit.coef(&ColumnLabel::Time(time)).ok_or_else(|| {
            Error::estimation(format!(
                "imputation: period effect for {time} not estimable (no untreated observations)"
            ))
        })
    };
    let gamma: Vec<f64> = data
        .covariate_names()
        .iter()
        .map(|n| {
            fit.coef(&ColumnLabel::Covariate {
                name: n.clone(),
                group: None,
                time: None,
            })
            .unwrap_or(0.0)
        })
        .collect();

    // Per-observation treatment effects, then an equal-weight average.
    let mut per_cell: BTreeMap<(String, i64), (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for &row in &treated {
        let obs = &data.observations()[row];
        let mut imputed = alpha(&obs.group)? + beta(obs.time)?;
        for (j, g) in gamma.iter().enumerate() {
            imputed += g * obs.covariates[j];
        }
        let tau = obs.outcome - imputed;
        total += tau;
        let entry = per_cell.entry((obs.group.clone(), obs.time)).or_insert((0.0, 0));
        entry.0 += tau;
        entry.1 += 1;
    }
    let overall_att = total / treated.len() as f64;

    let cells: Vec<AttCell> = per_cell
        .into_iter()
        .map(|((group, time), (sum, n))| AttCell {
            cell: CellIndex::new(group, time),
            theta: sum / n as f64,
            weight: n as f64 / treated.len() as f64,
            n_treated: n,
            control_groups: Vec::new(),
            diff_treated: sum / n as f64,
            diff_controls: BTreeMap::new(),
        })
        .collect();

    Ok(EstimateReport {
        estimator_name: "imputation".into(),
        overall_att,
        cells,
        se: None,
        p_randomization: None,
        diagnostics: fit.dropped.iter().map(|l| format!("dropped aliased column {l}")).collect(),
    })
}
