//! Goodman-Bacon style 2x2 subsample check for the three-group,
//! three-period staggered layout: early adopter, late adopter, never
//! treated. Each comparison restricts the sample to two groups and two
//! adjacent periods and runs the TWFE regression there, including the
//! forbidden late-vs-early comparison.

use crate::dataset::PanelDataset;
use crate::design::{covariate_terms, CovariateForm};
use crate::error::{Error, Result};
use crate::linalg::{ols, ColumnLabel, DesignMatrix};

/// One 2x2 comparison: its label and the subsample TWFE coefficient.
pub type BaconComparison = (String, f64);

/// Runs the four 2x2 TWFE comparisons of the early/late/never layout.
///
/// Requires exactly three groups over exactly three periods, with one group
/// treated at the second period, one at the third, and one never treated.
/// Returns, in order: early-vs-never (periods 1-2), late-vs-never (2-3),
/// early-vs-late (1-2), and the forbidden late-vs-early (2-3).
pub fn bacon_2x2(data: &PanelDataset, interacted: bool) -> Result<Vec<BaconComparison>> {
    let periods = data.periods();
    if data.groups().len() != 3 || periods.len() != 3 {
        return Err(Error::estimation(format!(
            "bacon_2x2 needs 3 groups x 3 periods, got {} x {}",
            data.groups().len(),
            periods.len()
        )));
    }
    let (p1, p2, p3) = (periods[0], periods[1], periods[2]);
    let mut early = None;
    let mut late = None;
    let mut never = None;
    for g in data.groups() {
        match data.first_treated(g) {
            Some(t) if t == p2 => early = Some(g.clone()),
            Some(t) if t == p3 => late = Some(g.clone()),
            None => never = Some(g.clone()),
            Some(t) => {
                return Err(Error::estimation(format!(
                    "bacon_2x2: group {g} treated at {t}, expected {p2}, {p3}, or never"
                )))
            }
        }
    }
    let (early, late, never) = match (early, late, never) {
        (Some(e), Some(l), Some(u)) => (e, l, u),
        _ => {
            return Err(Error::estimation(
                "bacon_2x2: need one early adopter, one late adopter, one never treated",
            ))
        }
    };

    let comparisons = [
        (early.clone(), never.clone(), p1, p2),
        (late.clone(), never.clone(), p2, p3),
        (early.clone(), late.clone(), p1, p2),
        (late.clone(), early.clone(), p2, p3),
    ];
    comparisons
        .iter()
        .map(|(tg, cg, pre, post)| {
            let beta = subsample_twfe(data, tg, cg, *pre, *post, interacted)?;
            Ok((format!("{tg}-vs-{cg}:{post}-{pre}"), beta))
        })
        .collect()
}

/// TWFE on the restricted subsample, built directly from the observation
/// rows so that a group already treated in the subsample's first period
/// (the forbidden comparison) stays representable.
fn subsample_twfe(
    data: &PanelDataset,
    treated_group: &str,
    control_group: &str,
    pre: i64,
    post: i64,
    interacted: bool,
) -> Result<f64> {
    let rows: Vec<usize> = data
        .observations()
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            (o.group == treated_group || o.group == control_group)
                && (o.time == pre || o.time == post)
        })
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(Error::estimation(format!(
            "bacon_2x2: empty subsample {treated_group}/{control_group} @ {pre},{post}"
        )));
    }

    let mut labels = vec![
        ColumnLabel::Intercept,
        ColumnLabel::Group(control_group.to_string()),
        ColumnLabel::Time(post),
        ColumnLabel::Treatment,
    ];
    // Covariates: pooled, or fully interacted within the 2x2 block.
    let form = if interacted {
        CovariateForm::TwoWay
    } else {
        CovariateForm::Homogeneous
    };
    let all_terms = covariate_terms(data, form);
    let terms: Vec<_> = all_terms
        .into_iter()
        .filter(|t| {
            t.group
                .as_ref()
                .map(|g| g == treated_group || g == control_group)
                .unwrap_or(true)
                && t.time.map(|tt| tt == pre || tt == post).unwrap_or(true)
        })
        .collect();
    labels.extend(terms.iter().map(|t| ColumnLabel::Covariate {
        name: t.name.clone(),
        group: t.group.clone(),
        time: t.time,
    }));

    let mut m = DesignMatrix::zeros(rows.len(), labels)?;
    let mut y = Vec::with_capacity(rows.len());
    for (i, &row) in rows.iter().enumerate() {
        let o = &data.observations()[row];
        m.set(i, 0, 1.0);
        if o.group == control_group {
            m.set(i, 1, 1.0);
        }
        if o.time == post {
            m.set(i, 2, 1.0);
        }
        if data.is_treated_at(&o.group, o.time) {
            m.set(i, 3, 1.0);
        }
        for (j, term) in terms.iter().enumerate() {
            let group_ok = term.group.as_ref().map(|g| g == &o.group).unwrap_or(true);
            let time_ok = term.time.map(|t| t == o.time).unwrap_or(true);
            if group_ok && time_ok {
                let k = data
                    .covariate_names()
                    .iter()
                    .position(|n| n == &term.name)
                    .unwrap();
                m.set(i, 4 + j, o.covariates[k]);
            }
        }
        y.push(o.outcome);
    }

    let fit = ols(&m, &y, false)?;
    fit.coef(&ColumnLabel::Treatment)
        .ok_or_else(|| Error::estimation("bacon_2x2: treatment dummy aliased in subsample"))
}
