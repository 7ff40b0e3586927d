//! Cohort-based 2x2 estimator with optional covariate adjustment.
//!
//! Treated groups sharing a first-treated period merge into one cohort.
//! For each cohort and post period, the block compares the cohort's outcome
//! change since the anchor period (the period right before the cohort's
//! treatment) against the pooled not-yet-treated groups' change, optionally
//! adjusted by outcome regression, inverse propensity weighting, or the
//! doubly-robust combination of both. Aggregation weights are proportional
//! to treated cohort-cell size.

use std::collections::BTreeMap;

use crate::dataset::{CellIndex, PanelDataset};
use crate::error::{Error, Result};
use crate::estimators::{aggregate, AttCell, EstimateReport, Weighting};
use crate::linalg::{logit, ols, ColumnLabel, DesignMatrix, FitResult};

/// Covariate adjustment used inside each 2x2 block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustment {
    /// Raw difference of cohort and pooled-control outcome changes.
    None,
    /// Subtracts the control-fitted outcome change evaluated at treated
    /// covariate values (per-period regressions with intercept).
    OutcomeRegression,
    /// Reweights control means by propensity odds fitted on period-t
    /// covariates, trimmed to [0.01, 0.99].
    Ipw,
    /// Outcome regression plus odds-reweighted control residual correction;
    /// the internal regressions run through the origin.
    DoublyRobust,
}

impl Adjustment {
    fn as_str(&self) -> &'static str {
        match self {
            Adjustment::None => "none",
            Adjustment::OutcomeRegression => "or",
            Adjustment::Ipw => "ipw",
            Adjustment::DoublyRobust => "dr",
        }
    }
}

impl std::str::FromStr for Adjustment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Adjustment::None),
            "outcome-regression" | "or" => Ok(Adjustment::OutcomeRegression),
            "ipw" => Ok(Adjustment::Ipw),
            "doubly-robust" | "dr" => Ok(Adjustment::DoublyRobust),
            other => Err(Error::Config(format!(
                "unknown adjustment `{other}` (none|outcome-regression|ipw|doubly-robust)"
            ))),
        }
    }
}

const TRIM_LOW: f64 = 0.01;
const TRIM_HIGH: f64 = 0.99;

pub fn csdid(data: &PanelDataset, adjustment: Adjustment) -> Result<EstimateReport> {
    csdid_impl(data, adjustment, false)
}

/// Variant for leave-one-group-out inference: blocks with no remaining
/// not-yet-treated control are skipped with a diagnostic.
pub(crate) fn csdid_lenient(data: &PanelDataset, adjustment: Adjustment) -> Result<EstimateReport> {
    csdid_impl(data, adjustment, true)
}

fn csdid_impl(data: &PanelDataset, adjustment: Adjustment, lenient: bool) -> Result<EstimateReport> {
    // Cohorts: treated groups bucketed by first-treated period.
    let mut cohorts: BTreeMap<i64, Vec<String>> = BTreeMap::new();
    for g in data.treated_groups() {
        let ts = data.first_treated(&g).unwrap();
        if ts <= *data.periods().last().unwrap() {
            cohorts.entry(ts).or_default().push(g);
        }
    }
    if cohorts.is_empty() {
        return Err(Error::estimation("csdid: no treated cohort in the observed window"));
    }
    // With no covariates every adjustment collapses to the raw contrast.
    let adjustment = if data.n_covariates() == 0 {
        Adjustment::None
    } else {
        adjustment
    };

    let mut cells: Vec<AttCell> = Vec::new();
    let mut diagnostics: Vec<String> = Vec::new();

    for (&cohort_year, members) in &cohorts {
        let anchor = cohort_year - 1;
        let anchor_treated = cell_rows_pooled(data, members, anchor);
        if anchor_treated.is_empty() {
            return Err(Error::UnpopulatedCell {
                group: members[0].clone(),
                time: anchor,
            });
        }
        if members.len() > 1 {
            diagnostics.push(format!(
                "cohort {cohort_year} pools groups {}",
                members.join("+")
            ));
        }

        for &t in data.periods().iter().filter(|&&t| t >= cohort_year) {
            let treated_post = cell_rows_pooled(data, members, t);
            if treated_post.is_empty() {
                diagnostics.push(format!("skipped unpopulated cohort cell ({cohort_year}, {t})"));
                continue;
            }
            // Not-yet-treated controls at t (never treated counts).
            let controls: Vec<String> = data
                .groups()
                .iter()
                .filter(|g| match data.first_treated(g) {
                    None => true,
                    Some(ts) => ts > t,
                })
                .filter(|g| data.is_populated(g, t) && data.is_populated(g, anchor))
                .cloned()
                .collect();
            if controls.is_empty() {
                if lenient {
                    diagnostics.push(format!(
                        "skipped cohort cell ({cohort_year}, {t}): no not-yet-treated control"
                    ));
                    continue;
                }
                return Err(Error::NoControl {
                    group: members[0].clone(),
                    time: t,
                });
            }
            let control_post = cell_rows_pooled(data, &controls, t);
            let control_pre = cell_rows_pooled(data, &controls, anchor);

            let diff_treated = mean_outcome(data, &treated_post) - mean_outcome(data, &anchor_treated);
            let mut diff_controls = BTreeMap::new();
            for c in &controls {
                let d = data.cell_mean(&CellIndex::new(c.clone(), t))?
                    - data.cell_mean(&CellIndex::new(c.clone(), anchor))?;
                diff_controls.insert(c.clone(), d);
            }

            let theta = match adjustment {
                Adjustment::None => {
                    diff_treated
                        - (mean_outcome(data, &control_post) - mean_outcome(data, &control_pre))
                }
                Adjustment::OutcomeRegression => {
                    let mu_post = fit_outcome_on_covariates(data, &control_post, true)?;
                    let mu_pre = fit_outcome_on_covariates(data, &control_pre, true)?;
                    let fitted_change = mean_fitted(data, &treated_post, &mu_post)
                        - mean_fitted(data, &anchor_treated, &mu_pre);
                    diff_treated - fitted_change
                }
                Adjustment::Ipw => {
                    let weights = propensity_odds(
                        data,
                        &treated_post,
                        &control_post,
                        &control_pre,
                        &mut diagnostics,
                    )?;
                    let reweighted_change = weighted_mean_outcome(data, &control_post, &weights.post)
                        - weighted_mean_outcome(data, &control_pre, &weights.pre);
                    diff_treated - reweighted_change
                }
                Adjustment::DoublyRobust => {
                    let mu_post = fit_outcome_on_covariates(data, &control_post, false)?;
                    let mu_pre = fit_outcome_on_covariates(data, &control_pre, false)?;
                    let fitted_change = mean_fitted(data, &treated_post, &mu_post)
                        - mean_fitted(data, &anchor_treated, &mu_pre);
                    let weights = propensity_odds(
                        data,
                        &treated_post,
                        &control_post,
                        &control_pre,
                        &mut diagnostics,
                    )?;
                    let resid_change = weighted_mean_residual(data, &control_post, &mu_post, &weights.post)
                        - weighted_mean_residual(data, &control_pre, &mu_pre, &weights.pre);
                    diff_treated - fitted_change - resid_change
                }
            };

            cells.push(AttCell {
                cell: CellIndex::new(members[0].clone(), t),
                theta,
                weight: 0.0,
                n_treated: treated_post.len(),
                control_groups: controls,
                diff_treated,
                diff_controls,
            });
        }
    }

    if cells.is_empty() {
        return Err(Error::estimation("csdid: no estimable (cohort, period) cells"));
    }
    let overall_att = aggregate(&mut cells, Weighting::CellSize);
    Ok(EstimateReport {
        estimator_name: format!("csdid-{}", adjustment.as_str()),
        overall_att,
        cells,
        se: None,
        p_randomization: None,
        diagnostics,
    })
}

fn cell_rows_pooled(data: &PanelDataset, groups: &[String], time: i64) -> Vec<usize> {
    let mut rows = Vec::new();
    for g in groups {
        rows.extend_from_slice(data.cell_rows(g, time));
    }
    rows
}

fn mean_outcome(data: &PanelDataset, rows: &[usize]) -> f64 {
    let sum: f64 = rows.iter().map(|&i| data.observations()[i].outcome).sum();
    sum / rows.len() as f64
}

fn weighted_mean_outcome(data: &PanelDataset, rows: &[usize], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    rows.iter()
        .zip(weights)
        .map(|(&i, w)| w * data.observations()[i].outcome)
        .sum::<f64>()
        / total
}

/// Regression of outcome on covariates over the given rows; `intercept`
/// distinguishes the standard regression-adjustment fit from the
/// through-the-origin fit used inside the doubly-robust correction.
fn fit_outcome_on_covariates(
    data: &PanelDataset,
    rows: &[usize],
    intercept: bool,
) -> Result<FitResult> {
    let k = data.n_covariates();
    let labels: Vec<ColumnLabel> = data
        .covariate_names()
        .iter()
        .map(|n| ColumnLabel::Covariate {
            name: n.clone(),
            group: None,
            time: None,
        })
        .collect();
    let mut m = DesignMatrix::zeros(rows.len(), labels)?;
    let mut y = Vec::with_capacity(rows.len());
    for (i, &row) in rows.iter().enumerate() {
        let obs = &data.observations()[row];
        for j in 0..k {
            m.set(i, j, obs.covariates[j]);
        }
        y.push(obs.outcome);
    }
    ols(&m, &y, intercept)
}

fn predict(data: &PanelDataset, row: usize, fit: &FitResult) -> f64 {
    let obs = &data.observations()[row];
    let mut v = 0.0;
    for (label, coef) in fit.coefficients() {
        match label {
            ColumnLabel::Intercept => v += coef,
            ColumnLabel::Covariate { name, .. } => {
                let k = data.covariate_names().iter().position(|n| n == name).unwrap();
                v += coef * obs.covariates[k];
            }
            _ => {}
        }
    }
    v
}

fn mean_fitted(data: &PanelDataset, rows: &[usize], fit: &FitResult) -> f64 {
    rows.iter().map(|&i| predict(data, i, fit)).sum::<f64>() / rows.len() as f64
}

fn weighted_mean_residual(
    data: &PanelDataset,
    rows: &[usize],
    fit: &FitResult,
    weights: &[f64],
) -> f64 {
    let total: f64 = weights.iter().sum();
    rows.iter()
        .zip(weights)
        .map(|(&i, w)| w * (data.observations()[i].outcome - predict(data, i, fit)))
        .sum::<f64>()
        / total
}

struct OddsWeights {
    post: Vec<f64>,
    pre: Vec<f64>,
}

/// Fits the propensity of treatment on period-t covariates (treated vs
/// pooled controls at t), then evaluates trimmed odds weights for control
/// observations in both block periods.
fn propensity_odds(
    data: &PanelDataset,
    treated_post: &[usize],
    control_post: &[usize],
    control_pre: &[usize],
    diagnostics: &mut Vec<String>,
) -> Result<OddsWeights> {
    let k = data.n_covariates();
    let mut labels = vec![ColumnLabel::Intercept];
    labels.extend(data.covariate_names().iter().map(|n| ColumnLabel::Covariate {
        name: n.clone(),
        group: None,
        time: None,
    }));
    let n = treated_post.len() + control_post.len();
    let mut m = DesignMatrix::zeros(n, labels)?;
    let mut d = Vec::with_capacity(n);
    for (i, &row) in treated_post.iter().chain(control_post.iter()).enumerate() {
        let obs = &data.observations()[row];
        m.set(i, 0, 1.0);
        for j in 0..k {
            m.set(i, j + 1, obs.covariates[j]);
        }
        d.push(if i < treated_post.len() { 1.0 } else { 0.0 });
    }
    let fit = logit(&m, &d)?;

    let mut trimmed = 0usize;
    let mut odds_for = |rows: &[usize]| -> Vec<f64> {
        rows.iter()
            .map(|&row| {
                let obs = &data.observations()[row];
                let mut eta = 0.0;
                for (label, coef) in fit.coefficients() {
                    match label {
                        ColumnLabel::Intercept => eta += coef,
                        ColumnLabel::Covariate { name, .. } => {
                            let j = data
                                .covariate_names()
                                .iter()
                                .position(|x| x == name)
                                .unwrap();
                            eta += coef * obs.covariates[j];
                        }
                        _ => {}
                    }
                }
                let p = 1.0 / (1.0 + (-eta).exp());
                let clamped = p.clamp(TRIM_LOW, TRIM_HIGH);
                if clamped != p {
                    trimmed += 1;
                }
                clamped / (1.0 - clamped)
            })
            .collect()
    };
    let post = odds_for(control_post);
    let pre = odds_for(control_pre);
    if trimmed > 0 {
        diagnostics.push(format!("trimmed {trimmed} propensities to [{TRIM_LOW}, {TRIM_HIGH}]"));
    }
    Ok(OddsWeights { post, pre })
}
