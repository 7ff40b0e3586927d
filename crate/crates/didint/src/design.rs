//! Design-matrix construction for every estimator's regression.
//!
//! The covariate functional form decides how covariates enter: pooled,
//! interacted with group dummies, with time dummies, with both separately,
//! or with every group x time intersection. Builders declare dummy columns
//! ahead of covariate terms so that when an interaction aliases a dummy the
//! interaction is the column that gets dropped.

use serde::{Deserialize, Serialize};

use crate::dataset::{CellIndex, PanelDataset};
use crate::error::{Error, Result};
use crate::linalg::{ols, ColumnLabel, DesignMatrix};

/// How covariates enter a regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateForm {
    /// No covariate terms at all.
    None,
    /// One pooled coefficient per covariate.
    Homogeneous,
    /// Per-group coefficients.
    StateVarying,
    /// Per-period coefficients.
    TimeVarying,
    /// Per-(group, period) coefficients.
    TwoWay,
    /// Additive per-group plus per-period coefficients.
    TwoOneWay,
}

impl CovariateForm {
    pub const ALL: [CovariateForm; 6] = [
        CovariateForm::None,
        CovariateForm::Homogeneous,
        CovariateForm::StateVarying,
        CovariateForm::TimeVarying,
        CovariateForm::TwoWay,
        CovariateForm::TwoOneWay,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CovariateForm::None => "none",
            CovariateForm::Homogeneous => "homogeneous",
            CovariateForm::StateVarying => "state-varying",
            CovariateForm::TimeVarying => "time-varying",
            CovariateForm::TwoWay => "two-way",
            CovariateForm::TwoOneWay => "two-one-way",
        }
    }
}

impl std::fmt::Display for CovariateForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CovariateForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CovariateForm::None),
            "homogeneous" => Ok(CovariateForm::Homogeneous),
            "state-varying" => Ok(CovariateForm::StateVarying),
            "time-varying" => Ok(CovariateForm::TimeVarying),
            "two-way" => Ok(CovariateForm::TwoWay),
            "two-one-way" => Ok(CovariateForm::TwoOneWay),
            other => Err(Error::Config(format!(
                "unknown covariate form `{other}` (none|homogeneous|state-varying|time-varying|two-way|two-one-way)"
            ))),
        }
    }
}

/// One covariate term: covariate `name` interacted with the given group
/// and/or time dummy (`None` scope = applies everywhere).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateTerm {
    pub name: String,
    pub group: Option<String>,
    pub time: Option<i64>,
}

impl CovariateTerm {
    fn label(&self) -> ColumnLabel {
        ColumnLabel::Covariate {
            name: self.name.clone(),
            group: self.group.clone(),
            time: self.time,
        }
    }
}

/// The declared column structure of a regression before rank filtering.
#[derive(Debug, Clone)]
pub struct ExpansionPlan {
    pub intersection_dummies: Vec<CellIndex>,
    pub group_dummies: Vec<String>,
    pub time_dummies: Vec<i64>,
    pub covariate_terms: Vec<CovariateTerm>,
}

/// Covariate terms for a form, in deterministic declaration order
/// (covariate-major, then groups, then periods).
pub fn covariate_terms(data: &PanelDataset, form: CovariateForm) -> Vec<CovariateTerm> {
    let mut terms = Vec::new();
    for name in data.covariate_names() {
        match form {
            CovariateForm::None => {}
            CovariateForm::Homogeneous => terms.push(CovariateTerm {
                name: name.clone(),
                group: None,
                time: None,
            }),
            CovariateForm::StateVarying => {
                for g in data.groups() {
                    terms.push(CovariateTerm {
                        name: name.clone(),
                        group: Some(g.clone()),
                        time: None,
                    });
                }
            }
            CovariateForm::TimeVarying => {
                for t in data.periods() {
                    terms.push(CovariateTerm {
                        name: name.clone(),
                        group: None,
                        time: Some(*t),
                    });
                }
            }
            CovariateForm::TwoWay => {
                for g in data.groups() {
                    for t in data.periods() {
                        terms.push(CovariateTerm {
                            name: name.clone(),
                            group: Some(g.clone()),
                            time: Some(*t),
                        });
                    }
                }
            }
            CovariateForm::TwoOneWay => {
                for g in data.groups() {
                    terms.push(CovariateTerm {
                        name: name.clone(),
                        group: Some(g.clone()),
                        time: None,
                    });
                }
                for t in data.periods() {
                    terms.push(CovariateTerm {
                        name: name.clone(),
                        group: None,
                        time: Some(*t),
                    });
                }
            }
        }
    }
    terms
}

/// The intersection regression plan: one dummy per populated cell, no
/// intercept, plus the form's covariate terms.
pub fn expansion_plan(data: &PanelDataset, form: CovariateForm) -> ExpansionPlan {
    ExpansionPlan {
        intersection_dummies: data.populated_cells(),
        group_dummies: Vec::new(),
        time_dummies: Vec::new(),
        covariate_terms: covariate_terms(data, form),
    }
}

fn term_value(data: &PanelDataset, row: usize, term: &CovariateTerm, k: usize) -> f64 {
    let obs = &data.observations()[row];
    if let Some(g) = &term.group {
        if &obs.group != g {
            return 0.0;
        }
    }
    if let Some(t) = term.time {
        if obs.time != t {
            return 0.0;
        }
    }
    obs.covariates[k]
}

fn covariate_index(data: &PanelDataset, name: &str) -> usize {
    data.covariate_names().iter().position(|n| n == name).unwrap()
}

fn fill_covariate_columns(
    data: &PanelDataset,
    matrix: &mut DesignMatrix,
    first_col: usize,
    terms: &[CovariateTerm],
) {
    for (j, term) in terms.iter().enumerate() {
        let k = covariate_index(data, &term.name);
        for row in 0..data.n_observations() {
            let v = term_value(data, row, term, k);
            if v != 0.0 {
                matrix.set(row, first_col + j, v);
            }
        }
    }
}

/// Builds the intersection regression design: one dummy per populated
/// (group, time) cell followed by the form's covariate terms; no intercept
/// and no omitted cell.
pub fn build_didint_design(data: &PanelDataset, form: CovariateForm) -> Result<DesignMatrix> {
    let plan = expansion_plan(data, form);
    let mut labels: Vec<ColumnLabel> = plan
        .intersection_dummies
        .iter()
        .map(|c| ColumnLabel::Cell {
            group: c.group.clone(),
            time: c.time,
        })
        .collect();
    let n_dummies = labels.len();
    labels.extend(plan.covariate_terms.iter().map(|t| t.label()));

    let mut m = DesignMatrix::zeros(data.n_observations(), labels)?;
    for (j, cell) in plan.intersection_dummies.iter().enumerate() {
        for &row in data.cell_rows(&cell.group, cell.time) {
            m.set(row, j, 1.0);
        }
    }
    fill_covariate_columns(data, &mut m, n_dummies, &plan.covariate_terms);
    Ok(m)
}

/// Builds the two-way fixed effects design: intercept, group dummies (first
/// group omitted), time dummies (first period omitted), the treatment dummy,
/// then covariates -- plain, or expanded per `form` when `interacted`.
pub fn build_twfe_design(
    data: &PanelDataset,
    interacted: bool,
    form: CovariateForm,
) -> Result<DesignMatrix> {
    let groups = data.groups();
    let periods = data.periods();
    let mut labels = vec![ColumnLabel::Intercept];
    labels.extend(groups.iter().skip(1).map(|g| ColumnLabel::Group(g.clone())));
    labels.extend(periods.iter().skip(1).map(|t| ColumnLabel::Time(*t)));
    labels.push(ColumnLabel::Treatment);
    let terms = if interacted {
        covariate_terms(data, form)
    } else {
        covariate_terms(data, CovariateForm::Homogeneous)
    };
    let first_cov = labels.len();
    labels.extend(terms.iter().map(|t| t.label()));

    let mut m = DesignMatrix::zeros(data.n_observations(), labels)?;
    for (row, obs) in data.observations().iter().enumerate() {
        m.set(row, 0, 1.0);
        if let Some(gi) = groups.iter().position(|g| g == &obs.group) {
            if gi > 0 {
                m.set(row, gi, 1.0);
            }
        }
        if let Some(ti) = periods.iter().position(|t| *t == obs.time) {
            if ti > 0 {
                m.set(row, groups.len() - 1 + ti, 1.0);
            }
        }
        if data.is_treated_at(&obs.group, obs.time) {
            m.set(row, first_cov - 1, 1.0);
        }
    }
    fill_covariate_columns(data, &mut m, first_cov, &terms);
    Ok(m)
}

/// Builds the FLEX regression design. Treatment-effect dummies cover each
/// treated group's post periods (all periods with `leads`); the same range
/// carries two-way covariate interactions for treated groups, followed by
/// group-interacted, time-interacted, and plain covariates, then full time
/// and group dummy sets and an intercept. Aliases among the dummy blocks are
/// resolved by the solver's drop rule.
pub fn build_flex_design(data: &PanelDataset, leads: bool) -> Result<DesignMatrix> {
    let treated = data.treated_groups();
    if treated.is_empty() {
        return Err(Error::estimation("flex: no treated group"));
    }

    let mut tau_cells: Vec<(String, i64)> = Vec::new();
    for g in &treated {
        let ts = data.first_treated(g).unwrap();
        for &t in data.periods() {
            if leads || t >= ts {
                tau_cells.push((g.clone(), t));
            }
        }
    }

    let mut labels: Vec<ColumnLabel> = tau_cells
        .iter()
        .map(|(g, t)| ColumnLabel::TreatmentEffect {
            group: g.clone(),
            time: *t,
        })
        .collect();

    let mut terms: Vec<CovariateTerm> = Vec::new();
    for name in data.covariate_names() {
        for (g, t) in &tau_cells {
            terms.push(CovariateTerm {
                name: name.clone(),
                group: Some(g.clone()),
                time: Some(*t),
            });
        }
    }
    for name in data.covariate_names() {
        for g in data.groups() {
            terms.push(CovariateTerm {
                name: name.clone(),
                group: Some(g.clone()),
                time: None,
            });
        }
    }
    for name in data.covariate_names() {
        for t in data.periods() {
            terms.push(CovariateTerm {
                name: name.clone(),
                group: None,
                time: Some(*t),
            });
        }
    }
    for name in data.covariate_names() {
        terms.push(CovariateTerm {
            name: name.clone(),
            group: None,
            time: None,
        });
    }
    let first_cov = labels.len();
    labels.extend(terms.iter().map(|t| t.label()));
    let first_time = labels.len();
    labels.extend(data.periods().iter().map(|t| ColumnLabel::Time(*t)));
    let first_group = labels.len();
    labels.extend(data.groups().iter().map(|g| ColumnLabel::Group(g.clone())));
    labels.push(ColumnLabel::Intercept);
    let intercept_col = labels.len() - 1;

    let mut m = DesignMatrix::zeros(data.n_observations(), labels)?;
    for (j, (g, t)) in tau_cells.iter().enumerate() {
        for &row in data.cell_rows(g, *t) {
            m.set(row, j, 1.0);
        }
    }
    fill_covariate_columns(data, &mut m, first_cov, &terms);
    for (row, obs) in data.observations().iter().enumerate() {
        let ti = data.period_index(obs.time).unwrap();
        let gi = data.group_index(&obs.group).unwrap();
        m.set(row, first_time + ti, 1.0);
        m.set(row, first_group + gi, 1.0);
        m.set(row, intercept_col, 1.0);
    }
    Ok(m)
}

/// Residuals of the outcome regressed on the form's covariate terms alone
/// (with an intercept, no cell structure), in observation order. This is the
/// residualization step of the model-selection ladder.
pub fn residualize(data: &PanelDataset, form: CovariateForm) -> Result<Vec<f64>> {
    if form == CovariateForm::None {
        return Err(Error::input("residualize: form `none` has nothing to project out"));
    }
    if data.n_covariates() == 0 {
        return Err(Error::input("residualize: dataset has no covariates"));
    }
    let terms = covariate_terms(data, form);
    let labels: Vec<ColumnLabel> = terms.iter().map(|t| t.label()).collect();
    let mut m = DesignMatrix::zeros(data.n_observations(), labels)?;
    fill_covariate_columns(data, &mut m, 0, &terms);
    let y: Vec<f64> = data.observations().iter().map(|o| o.outcome).collect();
    let fit = ols(&m, &y, true)?;
    Ok(fit.residuals)
}
