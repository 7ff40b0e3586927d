//! Model selection for the covariate functional form.
//!
//! The ladder walks none -> homogeneous -> {state-varying, time-varying} ->
//! two-one-way -> two-way, residualizing the outcome on each form's
//! covariate terms and checking whether pre-treatment trends of the
//! residual cell means look parallel. The plausibility check is a Wald
//! statistic over placebo long-differences at pre-treatment periods
//! (anchored, like the estimator itself, at the period right before
//! treatment), with the covariance assembled from independent within-cell
//! sampling variances. Trend tables and SVG figures are exported so the
//! figures can also be inspected by eye, which is the workflow the numeric
//! test stands in for.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::dataset::PanelDataset;
use crate::design::{residualize, CovariateForm};
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::svg::{LineChart, Series};

/// Default plausibility level for the ladder.
pub const DEFAULT_ALPHA: f64 = 0.10;

/// Mean residualized outcome per populated cell, for one covariate form.
#[derive(Debug, Clone, Serialize)]
pub struct TrendRow {
    pub group: String,
    pub period: i64,
    pub mean_residual: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendTable {
    pub form: CovariateForm,
    pub rows: Vec<TrendRow>,
}

impl TrendTable {
    /// Cell means of the residualized outcome (raw outcome for `None`).
    pub fn compute(data: &PanelDataset, form: CovariateForm) -> Result<TrendTable> {
        let values = residual_values(data, form)?;
        let stats = cell_stats(data, &values);
        let mut rows = Vec::new();
        for (g, group) in data.groups().iter().enumerate() {
            for (t, period) in data.periods().iter().enumerate() {
                if let Some(s) = &stats[g][t] {
                    rows.push(TrendRow {
                        group: group.clone(),
                        period: *period,
                        mean_residual: s.mean,
                        n: s.n,
                    });
                }
            }
        }
        Ok(TrendTable { form, rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
        wtr.write_record(["group", "period", "mean_residual", "n", "form"])?;
        for r in &self.rows {
            wtr.write_record([
                r.group.clone(),
                r.period.to_string(),
                format!("{}", r.mean_residual),
                r.n.to_string(),
                self.form.to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }

    /// One polyline per group, with a vertical rule at each treatment date.
    pub fn to_chart(&self, data: &PanelDataset) -> LineChart {
        let mut series: Vec<Series> = Vec::new();
        for group in data.groups() {
            let points: Vec<(f64, f64)> = self
                .rows
                .iter()
                .filter(|r| &r.group == group)
                .map(|r| (r.period as f64, r.mean_residual))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    label: group.clone(),
                    points,
                });
            }
        }
        let mut rules: Vec<f64> = data
            .treated_groups()
            .iter()
            .filter_map(|g| data.first_treated(g))
            .map(|t| t as f64)
            .collect();
        rules.sort_by(f64::total_cmp);
        rules.dedup();
        LineChart {
            title: format!("residualized outcome trends ({})", self.form),
            x_label: "period".into(),
            y_label: "mean residualized outcome".into(),
            series,
            vertical_rules: rules,
        }
    }
}

/// Writes the trend table CSV and its SVG figure for one form.
pub fn export_trends(
    data: &PanelDataset,
    form: CovariateForm,
    csv_path: &Path,
    svg_path: &Path,
) -> Result<TrendTable> {
    let table = TrendTable::compute(data, form)?;
    table.write_csv(csv_path)?;
    std::fs::write(svg_path, table.to_chart(data).render()).map_err(|e| Error::Io {
        path: svg_path.display().to_string(),
        source: e,
    })?;
    Ok(table)
}

/// Outcome of a pre-trend check for one form.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PretrendOutcome {
    Tested {
        statistic: f64,
        p_value: f64,
        n_placebo: usize,
    },
    /// Fewer than one usable placebo period: assumed plausible, flagged.
    Untestable { reason: String },
}

/// Wald test of the placebo long-differences at pre-treatment periods.
///
/// Residualizes per the form (raw outcome for `None`), computes the
/// DID-INT-style placebo contrast for every treated group and pre period
/// other than the anchor, and tests them jointly against zero. The
/// covariance combines the independent per-cell sampling variances of the
/// residual means.
pub fn pretrend_test(data: &PanelDataset, form: CovariateForm) -> Result<PretrendOutcome> {
    let values = residual_values(data, form)?;
    let stats = cell_stats(data, &values);
    let placebos = placebo_contrasts(data, &stats);
    if placebos.is_empty() {
        return Ok(PretrendOutcome::Untestable {
            reason: "no treated group has a usable pre period besides the anchor".into(),
        });
    }

    let m = placebos.len();
    let mut theta = Vec::with_capacity(m);
    let mut sigma = vec![0.0; m * m];
    for (i, a) in placebos.iter().enumerate() {
        theta.push(a.value);
        for (j, b) in placebos.iter().enumerate().skip(i) {
            let mut cov = 0.0;
            for (cell, ca) in &a.coeffs {
                if let Some(cb) = b.coeffs.get(cell) {
                    cov += ca * cb * cell_variance(&stats, *cell);
                }
            }
            sigma[i * m + j] = cov;
            sigma[j * m + i] = cov;
        }
    }
    // Tiny ridge keeps near-duplicate placebo rows invertible.
    let trace: f64 = (0..m).map(|i| sigma[i * m + i]).sum();
    let ridge = 1e-12 * (trace / m as f64).max(1e-300);
    for i in 0..m {
        sigma[i * m + i] += ridge;
    }
    let solved = solve_spd(&sigma, m, &theta)
        .ok_or_else(|| Error::estimation("pretrend: singular placebo covariance"))?;
    let statistic: f64 = theta.iter().zip(&solved).map(|(t, s)| t * s).sum();
    let p_value = chi_square_sf(statistic, m as f64);
    Ok(PretrendOutcome::Tested {
        statistic,
        p_value,
        n_placebo: m,
    })
}

#[derive(Debug, Clone, Copy)]
struct CellStat {
    mean: f64,
    var: f64,
    n: usize,
}

fn residual_values(data: &PanelDataset, form: CovariateForm) -> Result<Vec<f64>> {
    if form == CovariateForm::None {
        Ok(data.observations().iter().map(|o| o.outcome).collect())
    } else {
        residualize(data, form)
    }
}

fn cell_stats(data: &PanelDataset, values: &[f64]) -> Vec<Vec<Option<CellStat>>> {
    let groups = data.groups();
    let periods = data.periods();
    let mut out = vec![vec![None; periods.len()]; groups.len()];
    for (g, group) in groups.iter().enumerate() {
        for (t, period) in periods.iter().enumerate() {
            let rows = data.cell_rows(group, *period);
            if rows.is_empty() {
                continue;
            }
            let n = rows.len();
            let mean = rows.iter().map(|&i| values[i]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                rows.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
            } else {
                0.0
            };
            out[g][t] = Some(CellStat { mean, var, n });
        }
    }
    out
}

fn cell_variance(stats: &[Vec<Option<CellStat>>], cell: (usize, usize)) -> f64 {
    match stats[cell.0][cell.1] {
        Some(s) => s.var / s.n as f64,
        None => 0.0,
    }
}

struct Placebo {
    value: f64,
    /// Linear-combination coefficients over (group index, period index).
    coeffs: BTreeMap<(usize, usize), f64>,
}

/// DID-INT-style placebo contrasts: for every treated group and populated
/// pre period `t < t^s` other than the anchor `t^s - 1`, the long
/// difference against eligible (still untreated through the anchor)
/// controls. The anchor itself is excluded: its contrast is identically 0.
fn placebo_contrasts(data: &PanelDataset, stats: &[Vec<Option<CellStat>>]) -> Vec<Placebo> {
    let mut placebos = Vec::new();
    for group in data.treated_groups() {
        let ts = data.first_treated(&group).unwrap();
        let anchor = ts - 1;
        let g = data.group_index(&group).unwrap();
        let a_ix = match data.period_index(anchor) {
            Some(ix) if stats[g][ix].is_some() => ix,
            _ => continue,
        };
        let controls: Vec<usize> = data
            .groups()
            .iter()
            .enumerate()
            .filter(|(_, c)| *c != &group)
            .filter(|(_, c)| match data.first_treated(c) {
                None => true,
                Some(cts) => cts > anchor,
            })
            .map(|(ix, _)| ix)
            .collect();
        if controls.is_empty() {
            continue;
        }
        for (t_ix, &t) in data.periods().iter().enumerate() {
            if t >= ts || t == anchor || stats[g][t_ix].is_none() {
                continue;
            }
            let usable: Vec<usize> = controls
                .iter()
                .copied()
                .filter(|&c| stats[c][t_ix].is_some() && stats[c][a_ix].is_some())
                .collect();
            if usable.is_empty() {
                continue;
            }
            let mut coeffs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            coeffs.insert((g, t_ix), 1.0);
            coeffs.insert((g, a_ix), -1.0);
            let w = 1.0 / usable.len() as f64;
            for c in &usable {
                *coeffs.entry((*c, t_ix)).or_insert(0.0) -= w;
                *coeffs.entry((*c, a_ix)).or_insert(0.0) += w;
            }
            let value: f64 = coeffs
                .iter()
                .map(|(&(ci, ti), coef)| coef * stats[ci][ti].unwrap().mean)
                .sum();
            placebos.push(Placebo { value, coeffs });
        }
    }
    placebos
}

/// Verdict of one ladder step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Plausible,
    Implausible,
    /// Not enough pre periods to test; treated as plausible with a warning.
    Untestable,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionStep {
    pub form: CovariateForm,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub verdict: Verdict,
}

/// Full trace of the ladder: every evaluated step in order, the chosen
/// form if some step was plausible, and any warnings.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionTrace {
    pub alpha: f64,
    pub steps: Vec<SelectionStep>,
    pub chosen: Option<CovariateForm>,
    pub warnings: Vec<String>,
}

impl SelectionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization")
    }
}

/// Walks the ladder with the two-one-way step included.
pub fn select_form(data: &PanelDataset, alpha: f64) -> Result<SelectionTrace> {
    select_form_with(data, alpha, true)
}

/// Walks the functional-form ladder and stops at the first plausible step.
///
/// At the one-way branch both forms are evaluated; if both pass, the larger
/// p-value wins. `two_one_way` toggles the extra step between the one-way
/// forms and the two-way form.
pub fn select_form_with(
    data: &PanelDataset,
    alpha: f64,
    two_one_way: bool,
) -> Result<SelectionTrace> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0,1), got {alpha}")));
    }
    let mut trace = SelectionTrace {
        alpha,
        steps: Vec::new(),
        chosen: None,
        warnings: Vec::new(),
    };

    let evaluate = |form: CovariateForm, trace: &mut SelectionTrace| -> Result<(Verdict, f64)> {
        let outcome = pretrend_test(data, form)?;
        let (step, p) = match outcome {
            PretrendOutcome::Tested {
                statistic,
                p_value,
                ..
            } => (
                SelectionStep {
                    form,
                    statistic: Some(statistic),
                    p_value: Some(p_value),
                    verdict: if p_value > alpha {
                        Verdict::Plausible
                    } else {
                        Verdict::Implausible
                    },
                },
                p_value,
            ),
            PretrendOutcome::Untestable { reason } => {
                trace
                    .warnings
                    .push(format!("{form}: untestable, assumed plausible ({reason})"));
                (
                    SelectionStep {
                        form,
                        statistic: None,
                        p_value: None,
                        verdict: Verdict::Untestable,
                    },
                    1.0,
                )
            }
        };
        let verdict = step.verdict;
        trace.steps.push(step);
        Ok((verdict, p))
    };

    // Step 1: unconditional trends.
    let (verdict, _) = evaluate(CovariateForm::None, &mut trace)?;
    if verdict != Verdict::Implausible {
        trace.chosen = Some(CovariateForm::None);
        return Ok(trace);
    }
    if data.n_covariates() == 0 {
        trace
            .warnings
            .push("no covariates to adjust with; no plausible pre-trends".into());
        return Ok(trace);
    }

    // Step 2: pooled covariates.
    let (verdict, _) = evaluate(CovariateForm::Homogeneous, &mut trace)?;
    if verdict != Verdict::Implausible {
        trace.chosen = Some(CovariateForm::Homogeneous);
        return Ok(trace);
    }

    // Step 3: the one-way branch, both sides evaluated.
    let (state_verdict, state_p) = evaluate(CovariateForm::StateVarying, &mut trace)?;
    let (time_verdict, time_p) = evaluate(CovariateForm::TimeVarying, &mut trace)?;
    let state_ok = state_verdict != Verdict::Implausible;
    let time_ok = time_verdict != Verdict::Implausible;
    match (state_ok, time_ok) {
        (true, true) => {
            trace.chosen = Some(if state_p >= time_p {
                CovariateForm::StateVarying
            } else {
                CovariateForm::TimeVarying
            });
            return Ok(trace);
        }
        (true, false) => {
            trace.chosen = Some(CovariateForm::StateVarying);
            return Ok(trace);
        }
        (false, true) => {
            trace.chosen = Some(CovariateForm::TimeVarying);
            return Ok(trace);
        }
        (false, false) => {}
    }

    // Step 4: additive group + time interactions.
    if two_one_way {
        let (verdict, _) = evaluate(CovariateForm::TwoOneWay, &mut trace)?;
        if verdict != Verdict::Implausible {
            trace.chosen = Some(CovariateForm::TwoOneWay);
            return Ok(trace);
        }
    }

    // Step 5: full interactions.
    let (verdict, _) = evaluate(CovariateForm::TwoWay, &mut trace)?;
    if verdict != Verdict::Implausible {
        trace.chosen = Some(CovariateForm::TwoWay);
        return Ok(trace);
    }

    trace.warnings.push("no plausible pre-trends at any form".into());
    Ok(trace)
}

/// Upper tail P(X > x) of the chi-square distribution with `df` degrees of
/// freedom, via the regularized incomplete gamma function.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(df / 2.0, x / 2.0)
}

/// Q(a, x) = 1 - P(a, x): series for x < a + 1, continued fraction above.
fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-15 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation of ln Gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}
