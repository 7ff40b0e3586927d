//! Synthetic data-generating processes and the Monte Carlo engine.
//!
//! A [`DgpSpec`] fully describes a synthetic panel: groups, periods,
//! treatment schedule, per-group baseline levels and trends, covariate
//! sampling laws (optionally drifting by group and period), a gamma grid
//! mapping each covariate's effect per (group, period), homoskedastic
//! noise, and the injected treatment effect. Generation is deterministic
//! given a seed; Monte Carlo replicates draw from independent ChaCha
//! streams of the master seed so results do not depend on scheduling.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Observation, PanelDataset, TreatmentSchedule};
use crate::design::CovariateForm;
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;
use crate::linalg::{kde, ols, ColumnLabel, DesignMatrix};

/// Sampling law for one covariate, with optional group offsets and a
/// per-period drift so covariate distributions can vary across groups and
/// over time (level shifts of `p`, the mean, or the uniform endpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateLaw {
    pub kind: LawKind,
    pub group_offsets: BTreeMap<String, f64>,
    pub time_slope: f64,
    /// Extra per-group drift slope on top of `time_slope`, making the
    /// covariate-mean surface non-additive across groups and periods.
    pub group_time_slopes: BTreeMap<String, f64>,
    /// Per-period drift of the dispersion (Normal sd, Uniform width);
    /// ignored for Bernoulli, whose variance already moves with `p`.
    pub scale_time_slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawKind {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl CovariateLaw {
    pub fn bernoulli(p: f64) -> Self {
        CovariateLaw {
            kind: LawKind::Bernoulli { p },
            group_offsets: BTreeMap::new(),
            time_slope: 0.0,
            group_time_slopes: BTreeMap::new(),
            scale_time_slope: 0.0,
        }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        CovariateLaw {
            kind: LawKind::Normal { mean, sd },
            group_offsets: BTreeMap::new(),
            time_slope: 0.0,
            group_time_slopes: BTreeMap::new(),
            scale_time_slope: 0.0,
        }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        CovariateLaw {
            kind: LawKind::Uniform { lo, hi },
            group_offsets: BTreeMap::new(),
            time_slope: 0.0,
            group_time_slopes: BTreeMap::new(),
            scale_time_slope: 0.0,
        }
    }

    pub fn with_group_offset(mut self, group: &str, offset: f64) -> Self {
        self.group_offsets.insert(group.into(), offset);
        self
    }

    pub fn with_time_slope(mut self, slope: f64) -> Self {
        self.time_slope = slope;
        self
    }

    pub fn with_group_time_slope(mut self, group: &str, slope: f64) -> Self {
        self.group_time_slopes.insert(group.into(), slope);
        self
    }

    pub fn with_scale_time_slope(mut self, slope: f64) -> Self {
        self.scale_time_slope = slope;
        self
    }

    fn shift(&self, group: &str, dt: f64) -> f64 {
        let slope =
            self.time_slope + self.group_time_slopes.get(group).copied().unwrap_or(0.0);
        self.group_offsets.get(group).copied().unwrap_or(0.0) + slope * dt
    }

    fn draw(&self, rng: &mut ChaCha8Rng, group: &str, dt: f64) -> f64 {
        let shift = self.shift(group, dt);
        match self.kind {
            LawKind::Bernoulli { p } => {
                let p = (p + shift).clamp(0.01, 0.99);
                if rng.random_bool(p) {
                    1.0
                } else {
                    0.0
                }
            }
            LawKind::Normal { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                let sd = (sd + self.scale_time_slope * dt).max(0.01);
                mean + shift + sd * z
            }
            LawKind::Uniform { lo, hi } => {
                let half_extra = (self.scale_time_slope * dt / 2.0).max((lo - hi) / 2.0);
                let (lo, hi) = (lo - half_extra, hi + half_extra);
                if hi > lo {
                    rng.random_range(lo..hi) + shift
                } else {
                    lo + shift
                }
            }
        }
    }
}

/// Per-group baseline: mean starting level and linear trend per period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupBaseline {
    pub y_init_mean: f64,
    pub trend: f64,
}

/// One covariate's effect per (group, period), tagged with the pattern the
/// values must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateGamma {
    pub pattern: CovariateForm,
    values: BTreeMap<(String, i64), f64>,
}

impl CovariateGamma {
    pub fn constant(groups: &[String], periods: &[i64], level: f64) -> Self {
        Self::from_gaps(groups, periods, CovariateForm::Homogeneous, level, 0.0, 0.0, 0.0)
    }

    /// Builds a grid from a base level plus centered gaps: `state_gap` is
    /// the step between adjacent groups, `time_gap` between adjacent
    /// periods, and `twoway_gap` the maximum spread along each axis of a
    /// non-additive (product) group x period component.
    pub fn from_gaps(
        groups: &[String],
        periods: &[i64],
        pattern: CovariateForm,
        base: f64,
        state_gap: f64,
        time_gap: f64,
        twoway_gap: f64,
    ) -> Self {
        let s_mid = (groups.len() as f64 - 1.0) / 2.0;
        let t_mid = (periods.len() as f64 - 1.0) / 2.0;
        let s_span = (groups.len() as f64 - 1.0).max(1.0);
        let t_span = (periods.len() as f64 - 1.0).max(1.0);
        let mut values = BTreeMap::new();
        for (si, g) in groups.iter().enumerate() {
            for (ti, t) in periods.iter().enumerate() {
                let sf = si as f64 / s_span; // in [0, 1]
                let tf = ti as f64 / t_span;
                let v = base
                    + state_gap * (si as f64 - s_mid)
                    + time_gap * (ti as f64 - t_mid)
                    + twoway_gap * sf * tf;
                values.insert((g.clone(), *t), v);
            }
        }
        CovariateGamma { pattern, values }
    }

    pub fn from_values(pattern: CovariateForm, values: BTreeMap<(String, i64), f64>) -> Self {
        CovariateGamma { pattern, values }
    }

    pub fn value(&self, group: &str, period: i64) -> f64 {
        self.values
            .get(&(group.to_string(), period))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn values(&self) -> &BTreeMap<(String, i64), f64> {
        &self.values
    }

    fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.values().sum::<f64>() / self.values.len() as f64
    }

    /// Checks the values actually satisfy the tagged pattern.
    fn validate(&self, groups: &[String], periods: &[i64]) -> Result<()> {
        let tol = 1e-9;
        let v = |g: &String, t: i64| self.value(g, t);
        let ok = match self.pattern {
            CovariateForm::None | CovariateForm::Homogeneous => {
                let first = v(&groups[0], periods[0]);
                groups
                    .iter()
                    .all(|g| periods.iter().all(|t| (v(g, *t) - first).abs() <= tol))
            }
            CovariateForm::StateVarying => groups.iter().all(|g| {
                periods
                    .iter()
                    .all(|t| (v(g, *t) - v(g, periods[0])).abs() <= tol)
            }),
            CovariateForm::TimeVarying => periods.iter().all(|t| {
                groups
                    .iter()
                    .all(|g| (v(g, *t) - v(&groups[0], *t)).abs() <= tol)
            }),
            CovariateForm::TwoOneWay => {
                // Additivity: gamma(s,t) - gamma(s,t') must not depend on s.
                let g0 = &groups[0];
                let t0 = periods[0];
                groups.iter().all(|g| {
                    periods.iter().all(|t| {
                        (v(g, *t) - v(g, t0) - (v(g0, *t) - v(g0, t0))).abs() <= tol
                    })
                })
            }
            CovariateForm::TwoWay => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "gamma grid violates its `{}` pattern tag",
                self.pattern
            )))
        }
    }
}

/// Full description of a synthetic data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub groups: Vec<String>,
    pub periods: Vec<i64>,
    pub schedule: TreatmentSchedule,
    pub covariate_names: Vec<String>,
    pub covariate_laws: Vec<CovariateLaw>,
    pub gamma: Vec<CovariateGamma>,
    pub baselines: BTreeMap<String, GroupBaseline>,
    /// SD of the per-replicate draw of each group's starting level.
    pub y_init_sd: f64,
    pub noise_sd: f64,
    pub true_att: f64,
    pub cell_n: usize,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.periods.is_empty() {
            return Err(Error::Config("dgp: needs groups and periods".into()));
        }
        if self.cell_n < 1 {
            return Err(Error::Config("dgp: cell_n must be >= 1".into()));
        }
        if self.noise_sd < 0.0 || self.y_init_sd < 0.0 {
            return Err(Error::Config("dgp: negative noise".into()));
        }
        if self.covariate_laws.len() != self.covariate_names.len()
            || self.gamma.len() != self.covariate_names.len()
        {
            return Err(Error::Config(
                "dgp: covariate names, laws, and gamma grids must align".into(),
            ));
        }
        let mut sorted = self.periods.clone();
        sorted.sort_unstable();
        if sorted != self.periods {
            return Err(Error::Config("dgp: periods must be ascending".into()));
        }
        for g in &self.groups {
            if !self.schedule.first_treated.contains_key(g) {
                return Err(Error::Config(format!("dgp: no schedule entry for group {g}")));
            }
            if !self.baselines.contains_key(g) {
                return Err(Error::Config(format!("dgp: no baseline for group {g}")));
            }
        }
        for grid in &self.gamma {
            grid.validate(&self.groups, &self.periods)?;
        }
        Ok(())
    }
}

/// Draws one synthetic dataset. The outcome is the group baseline plus
/// trend, plus each covariate times its (group, period) gamma, plus the
/// treatment effect on treated cells, plus Normal(0, noise_sd) noise.
pub fn generate(spec: &DgpSpec, seed: u64) -> Result<PanelDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_from(spec, &mut rng)
}

fn generate_from(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<PanelDataset> {
    spec.validate()?;
    let t0 = spec.periods[0];

    // Group starting levels first, in group order, so the draw sequence is
    // stable no matter how many observations follow.
    let mut y_init: BTreeMap<&str, f64> = BTreeMap::new();
    for g in &spec.groups {
        let z: f64 = rng.sample(StandardNormal);
        let base = spec.baselines[g];
        y_init.insert(g.as_str(), base.y_init_mean + spec.y_init_sd * z);
    }

    let mut observations =
        Vec::with_capacity(spec.groups.len() * spec.periods.len() * spec.cell_n);
    for g in &spec.groups {
        let baseline = spec.baselines[g];
        let treated_at = spec.schedule.first_treated(g);
        for &t in &spec.periods {
            let dt = (t - t0) as f64;
            let treated = treated_at.map(|ts| t >= ts).unwrap_or(false);
            let y0 = y_init[g.as_str()] + baseline.trend * dt;
            for _ in 0..spec.cell_n {
                let covariates: Vec<f64> = spec
                    .covariate_laws
                    .iter()
                    .map(|law| law.draw(rng, g, dt))
                    .collect();
                let mut y = y0;
                for (k, x) in covariates.iter().enumerate() {
                    y += spec.gamma[k].value(g, t) * x;
                }
                if treated {
                    y += spec.true_att;
                }
                if spec.noise_sd > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    y += spec.noise_sd * z;
                }
                observations.push(Observation {
                    unit_id: None,
                    group: g.clone(),
                    time: t,
                    outcome: y,
                    covariates,
                });
            }
        }
    }
    PanelDataset::new(observations, spec.covariate_names.clone(), spec.schedule.clone())
}

/// Fits the pattern's calibration regressions on a source dataset and
/// returns one gamma grid per covariate: pooled, per group, per period,
/// per cell, or the additive per-group plus per-period combination.
pub fn calibrate(source: &PanelDataset, pattern: CovariateForm) -> Result<Vec<CovariateGamma>> {
    let k = source.n_covariates();
    if k == 0 || pattern == CovariateForm::None {
        return Err(Error::input("calibrate: needs covariates and a non-trivial pattern"));
    }
    let groups = source.groups().to_vec();
    let periods = source.periods().to_vec();

    let fit_rows = |rows: &[usize]| -> Result<Vec<f64>> {
        if rows.len() < k + 1 {
            return Err(Error::estimation(format!(
                "calibrate: {} observations cannot identify {k} coefficients",
                rows.len()
            )));
        }
        let labels: Vec<ColumnLabel> = source
            .covariate_names()
            .iter()
            .map(|n| ColumnLabel::Covariate {
                name: n.clone(),
                group: None,
                time: None,
            })
            .collect();
        let mut m = DesignMatrix::zeros(rows.len(), labels.clone())?;
        let mut y = Vec::with_capacity(rows.len());
        for (i, &row) in rows.iter().enumerate() {
            let obs = &source.observations()[row];
            for j in 0..k {
                m.set(i, j, obs.covariates[j]);
            }
            y.push(obs.outcome);
        }
        let fit = ols(&m, &y, true)?;
        Ok(labels.iter().map(|l| fit.coef(l).unwrap_or(0.0)).collect())
    };

    let all_rows = |filter: &dyn Fn(&Observation) -> bool| -> Vec<usize> {
        source
            .observations()
            .iter()
            .enumerate()
            .filter(|(_, o)| filter(o))
            .map(|(i, _)| i)
            .collect()
    };

    let mut grids: Vec<BTreeMap<(String, i64), f64>> = vec![BTreeMap::new(); k];
    match pattern {
        CovariateForm::Homogeneous => {
            let coefs = fit_rows(&(0..source.n_observations()).collect::<Vec<_>>())?;
            for g in &groups {
                for t in &periods {
                    for j in 0..k {
                        grids[j].insert((g.clone(), *t), coefs[j]);
                    }
                }
            }
        }
        CovariateForm::StateVarying => {
            for g in &groups {
                let coefs = fit_rows(&all_rows(&|o| &o.group == g))?;
                for t in &periods {
                    for j in 0..k {
                        grids[j].insert((g.clone(), *t), coefs[j]);
                    }
                }
            }
        }
        CovariateForm::TimeVarying => {
            for t in &periods {
                let coefs = fit_rows(&all_rows(&|o| o.time == *t))?;
                for g in &groups {
                    for j in 0..k {
                        grids[j].insert((g.clone(), *t), coefs[j]);
                    }
                }
            }
        }
        CovariateForm::TwoWay => {
            for g in &groups {
                for t in &periods {
                    let rows = source.cell_rows(g, *t).to_vec();
                    if rows.is_empty() {
                        continue;
                    }
                    let coefs = fit_rows(&rows)?;
                    for j in 0..k {
                        grids[j].insert((g.clone(), *t), coefs[j]);
                    }
                }
            }
        }
        CovariateForm::TwoOneWay => {
            let mut by_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for g in &groups {
                by_group.insert(g.clone(), fit_rows(&all_rows(&|o| &o.group == g))?);
            }
            let mut by_period: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            for t in &periods {
                by_period.insert(*t, fit_rows(&all_rows(&|o| o.time == *t))?);
            }
            for g in &groups {
                for t in &periods {
                    for j in 0..k {
                        grids[j].insert((g.clone(), *t), by_group[g][j] + by_period[t][j]);
                    }
                }
            }
        }
        CovariateForm::None => unreachable!(),
    }

    Ok(grids
        .into_iter()
        .map(|values| CovariateGamma::from_values(pattern, values))
        .collect())
}

/// Which axis of the gamma grid a violation spreads along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationAxis {
    State,
    Time,
    TwoWay,
    None,
}

impl std::str::FromStr for ViolationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(ViolationAxis::State),
            "time" => Ok(ViolationAxis::Time),
            "two-way" => Ok(ViolationAxis::TwoWay),
            "none" => Ok(ViolationAxis::None),
            other => Err(Error::Config(format!(
                "unknown violation axis `{other}` (state|time|two-way|none)"
            ))),
        }
    }
}

/// Degree of violation, mapped to gamma gaps 10 / 50 / 100 / 250 / 500.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degree {
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
}

impl Degree {
    pub const ALL: [Degree; 5] = [
        Degree::VeryLow,
        Degree::Low,
        Degree::Medium,
        Degree::High,
        Degree::VeryHigh,
    ];

    pub fn gap(&self) -> f64 {
        match self {
            Degree::VeryLow => 10.0,
            Degree::Low => 50.0,
            Degree::Medium => 100.0,
            Degree::High => 250.0,
            Degree::VeryHigh => 500.0,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Degree::VeryLow => "very-low",
            Degree::Low => "low",
            Degree::Medium => "medium",
            Degree::High => "high",
            Degree::VeryHigh => "very-high",
        }
    }
}

impl std::fmt::Display for Degree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Returns `base` with every covariate's gamma grid replaced by one whose
/// values spread by the degree's gap along the violated axis: adjacent
/// groups differ by the gap under `state`, adjacent periods under `time`,
/// and a non-additive product component with maximum spread equal to the
/// gap along both axes under `two-way`. `none` gives a constant grid at
/// the base grid's mean level.
pub fn degree_spec(base: &DgpSpec, violation: ViolationAxis, degree: Degree) -> DgpSpec {
    let gap = degree.gap();
    let mut spec = base.clone();
    spec.gamma = base
        .gamma
        .iter()
        .map(|grid| {
            let level = grid.mean();
            let (pattern, state_gap, time_gap, twoway_gap) = match violation {
                ViolationAxis::None => (CovariateForm::Homogeneous, 0.0, 0.0, 0.0),
                ViolationAxis::State => (CovariateForm::StateVarying, gap, 0.0, 0.0),
                ViolationAxis::Time => (CovariateForm::TimeVarying, 0.0, gap, 0.0),
                ViolationAxis::TwoWay => (CovariateForm::TwoWay, 0.0, 0.0, gap),
            };
            CovariateGamma::from_gaps(
                &spec.groups,
                &spec.periods,
                pattern,
                level,
                state_gap,
                time_gap,
                twoway_gap,
            )
        })
        .collect();
    spec
}

/// Monte Carlo results for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorMc {
    pub estimator: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_att: f64,
    /// Standard deviation of the replicate estimates.
    pub sd: f64,
    /// Monte Carlo standard error of the mean: sd / sqrt(n_ok).
    pub mc_se: f64,
    pub absolute_bias: f64,
    pub replicates: Vec<f64>,
    pub kde_grid: Vec<f64>,
    pub kde_density: Vec<f64>,
}

impl EstimatorMc {
    /// |mean - true| measured in Monte Carlo standard errors.
    pub fn bias_in_mc_se(&self, true_att: f64) -> f64 {
        (self.mean_att - true_att).abs() / self.mc_se
    }
}

/// Full Monte Carlo summary across estimators.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub true_att: f64,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorMc>,
}

impl McSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mc summary serialization")
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorMc> {
        self.estimators.iter().find(|e| e.estimator == name)
    }
}

/// Runs `reps` replicates: generates a dataset per replicate (independent
/// ChaCha stream per index) and runs every estimator on it. Individual
/// estimator failures are recorded and skipped; a failure rate above 5%
/// for any estimator aborts.
pub fn run_mc(
    spec: &DgpSpec,
    estimators: &[EstimatorSpec],
    reps: usize,
    seed: u64,
) -> Result<McSummary> {
    if reps < 2 {
        return Err(Error::Config("run_mc: need at least 2 replicates".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Config("run_mc: no estimators requested".into()));
    }
    spec.validate()?;

    // rep-major results, collected in index order for determinism.
    let results: Vec<Vec<std::result::Result<f64, String>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            match generate_from(spec, &mut rng) {
                Ok(data) => estimators
                    .iter()
                    .map(|e| e.run(&data).map(|r| r.overall_att).map_err(|e| e.to_string()))
                    .collect(),
                Err(e) => estimators.iter().map(|_| Err(e.to_string())).collect(),
            }
        })
        .collect();

    let mut summaries = Vec::with_capacity(estimators.len());
    for (j, est) in estimators.iter().enumerate() {
        let mut replicates = Vec::with_capacity(reps);
        let mut failures: Vec<String> = Vec::new();
        for rep_results in &results {
            match &rep_results[j] {
                Ok(theta) => replicates.push(*theta),
                Err(msg) => failures.push(msg.clone()),
            }
        }
        if failures.len() * 20 > reps {
            return Err(Error::estimation(format!(
                "run_mc: estimator {} failed on {}/{} replicates; first failure: {}",
                est.name(),
                failures.len(),
                reps,
                failures[0]
            )));
        }
        let n = replicates.len() as f64;
        let mean = replicates.iter().sum::<f64>() / n;
        let var = if replicates.len() > 1 {
            replicates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        let (kde_grid, kde_density) = replicate_density(&replicates);
        summaries.push(EstimatorMc {
            estimator: est.name(),
            n_ok: replicates.len(),
            n_failed: failures.len(),
            mean_att: mean,
            sd,
            mc_se: sd / n.sqrt(),
            absolute_bias: (mean - spec.true_att).abs(),
            replicates,
            kde_grid,
            kde_density,
        });
    }

    Ok(McSummary {
        true_att: spec.true_att,
        reps,
        seed,
        estimators: summaries,
    })
}

fn replicate_density(replicates: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = replicates.len();
    if n < 2 {
        return (Vec::new(), Vec::new());
    }
    let mean = replicates.iter().sum::<f64>() / n as f64;
    let var = replicates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return (Vec::new(), Vec::new());
    }
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    let lo = replicates.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = replicates.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let points = 257;
    let grid: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    match kde(replicates, &grid) {
        Ok(density) => (grid, density),
        Err(_) => (Vec::new(), Vec::new()),
    }
}

// ---------------------------------------------------------------------------
// Plain-text config: flat key = value entries under [section] headers.
// ---------------------------------------------------------------------------

impl DgpSpec {
    /// Parses the documented plain-text format. Sections: `[panel]`,
    /// `[schedule]`, `[baseline]`, one `[covariate NAME]` and `[gamma NAME]`
    /// pair per covariate.
    pub fn from_config_str(text: &str) -> Result<DgpSpec> {
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                sections.push((name.trim().to_string(), Vec::new()));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let section = sections.last_mut().ok_or_else(|| {
                Error::Config(format!("line {}: entry before any [section]", lineno + 1))
            })?;
            section
                .1
                .push((key.trim().to_string(), value.trim().to_string()));
        }

        let find = |name: &str| sections.iter().find(|(n, _)| n == name).map(|(_, kv)| kv);
        let panel = find("panel").ok_or_else(|| Error::Config("missing [panel] section".into()))?;
        let get = |kv: &[(String, String)], key: &str| -> Option<String> {
            kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
        };
        let require = |kv: &[(String, String)], key: &str| -> Result<String> {
            get(kv, key).ok_or_else(|| Error::Config(format!("missing key `{key}`")))
        };
        let parse_f64 = |s: &str, key: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("`{key}`: invalid number `{s}`")))
        };

        let groups: Vec<String> = require(panel, "groups")?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        let periods_raw = require(panel, "periods")?;
        let periods: Vec<i64> = if let Some((a, b)) = periods_raw.split_once("..") {
            let lo: i64 = a.trim().parse().map_err(|_| {
                Error::Config(format!("periods: invalid range start `{a}`"))
            })?;
            let hi: i64 = b.trim().parse().map_err(|_| {
                Error::Config(format!("periods: invalid range end `{b}`"))
            })?;
            (lo..=hi).collect()
        } else {
            periods_raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("periods: invalid value `{s}`")))
                })
                .collect::<Result<_>>()?
        };
        let cell_n: usize = require(panel, "cell_n")?
            .parse()
            .map_err(|_| Error::Config("cell_n: invalid integer".into()))?;
        let noise_sd = parse_f64(&require(panel, "noise_sd")?, "noise_sd")?;
        let y_init_sd = match get(panel, "y_init_sd") {
            Some(v) => parse_f64(&v, "y_init_sd")?,
            None => 1.0,
        };
        let true_att = parse_f64(&require(panel, "true_att")?, "true_att")?;

        let schedule_kv =
            find("schedule").ok_or_else(|| Error::Config("missing [schedule] section".into()))?;
        let mut schedule = BTreeMap::new();
        for (group, value) in schedule_kv {
            let ft = if value.eq_ignore_ascii_case("never") {
                None
            } else {
                Some(value.parse::<i64>().map_err(|_| {
                    Error::Config(format!("schedule {group}: invalid value `{value}`"))
                })?)
            };
            schedule.insert(group.clone(), ft);
        }

        let baseline_kv =
            find("baseline").ok_or_else(|| Error::Config("missing [baseline] section".into()))?;
        let parse_baseline = |value: &str| -> Result<GroupBaseline> {
            let (m, tr) = value
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("baseline `{value}`: expected `mean, trend`")))?;
            Ok(GroupBaseline {
                y_init_mean: parse_f64(m.trim(), "baseline mean")?,
                trend: parse_f64(tr.trim(), "baseline trend")?,
            })
        };
        let mut baselines = BTreeMap::new();
        let default_baseline = get(baseline_kv, "default").map(|v| parse_baseline(&v)).transpose()?;
        for g in &groups {
            match get(baseline_kv, g) {
                Some(v) => {
                    baselines.insert(g.clone(), parse_baseline(&v)?);
                }
                None => {
                    let b = default_baseline.ok_or_else(|| {
                        Error::Config(format!("baseline: no entry for group {g} and no default"))
                    })?;
                    baselines.insert(g.clone(), b);
                }
            }
        }

        let mut covariate_names = Vec::new();
        let mut covariate_laws = Vec::new();
        let mut gamma = Vec::new();
        for (name, kv) in &sections {
            if let Some(cov_name) = name.strip_prefix("covariate ") {
                let cov_name = cov_name.trim().to_string();
                let law_kind = require(kv, "law")?;
                let kind = match law_kind.as_str() {
                    "bernoulli" => LawKind::Bernoulli {
                        p: parse_f64(&require(kv, "p")?, "p")?,
                    },
                    "normal" => LawKind::Normal {
                        mean: parse_f64(&require(kv, "mean")?, "mean")?,
                        sd: parse_f64(&require(kv, "sd")?, "sd")?,
                    },
                    "uniform" => LawKind::Uniform {
                        lo: parse_f64(&require(kv, "lo")?, "lo")?,
                        hi: parse_f64(&require(kv, "hi")?, "hi")?,
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "covariate {cov_name}: unknown law `{other}`"
                        )))
                    }
                };
                let mut law = CovariateLaw {
                    kind,
                    group_offsets: BTreeMap::new(),
                    time_slope: match get(kv, "time_slope") {
                        Some(v) => parse_f64(&v, "time_slope")?,
                        None => 0.0,
                    },
                    group_time_slopes: BTreeMap::new(),
                    scale_time_slope: match get(kv, "scale_time_slope") {
                        Some(v) => parse_f64(&v, "scale_time_slope")?,
                        None => 0.0,
                    },
                };
                for (k, v) in kv {
                    if let Some(g) = k.strip_prefix("offset ") {
                        law.group_offsets
                            .insert(g.trim().to_string(), parse_f64(v, "offset")?);
                    } else if let Some(g) = k.strip_prefix("slope ") {
                        law.group_time_slopes
                            .insert(g.trim().to_string(), parse_f64(v, "slope")?);
                    }
                }
                covariate_names.push(cov_name);
                covariate_laws.push(law);
            }
        }
        for cov_name in &covariate_names {
            let kv = find(&format!("gamma {cov_name}")).ok_or_else(|| {
                Error::Config(format!("missing [gamma {cov_name}] section"))
            })?;
            let pattern: CovariateForm = require(kv, "pattern")?.parse()?;
            let base = match get(kv, "base") {
                Some(v) => parse_f64(&v, "base")?,
                None => 0.0,
            };
            let gaps = |key: &str| -> Result<f64> {
                match get(kv, key) {
                    Some(v) => parse_f64(&v, key),
                    None => Ok(0.0),
                }
            };
            let mut grid = CovariateGamma::from_gaps(
                &groups,
                &periods,
                pattern,
                base,
                gaps("state_gap")?,
                gaps("time_gap")?,
                gaps("twoway_gap")?,
            );
            for (k, v) in kv {
                if let Some((g, t)) = k.split_once('@') {
                    let period: i64 = t.trim().parse().map_err(|_| {
                        Error::Config(format!("gamma {cov_name}: invalid period in `{k}`"))
                    })?;
                    grid.values
                        .insert((g.trim().to_string(), period), parse_f64(v, k)?);
                }
            }
            gamma.push(grid);
        }

        let spec = DgpSpec {
            groups,
            periods,
            schedule: TreatmentSchedule::new(schedule),
            covariate_names,
            covariate_laws,
            gamma,
            baselines,
            y_init_sd,
            noise_sd,
            true_att,
            cell_n,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Writes the spec back out in the documented format.
    pub fn to_config_string(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "[panel]").unwrap();
        writeln!(out, "groups = {}", self.groups.join(", ")).unwrap();
        let contiguous = self
            .periods
            .windows(2)
            .all(|w| w[1] == w[0] + 1);
        if contiguous && self.periods.len() > 1 {
            writeln!(
                out,
                "periods = {}..{}",
                self.periods[0],
                self.periods[self.periods.len() - 1]
            )
            .unwrap();
        } else {
            let list: Vec<String> = self.periods.iter().map(|t| t.to_string()).collect();
            writeln!(out, "periods = {}", list.join(", ")).unwrap();
        }
        writeln!(out, "cell_n = {}", self.cell_n).unwrap();
        writeln!(out, "noise_sd = {}", self.noise_sd).unwrap();
        writeln!(out, "y_init_sd = {}", self.y_init_sd).unwrap();
        writeln!(out, "true_att = {}", self.true_att).unwrap();
        writeln!(out, "\n[schedule]").unwrap();
        for g in &self.groups {
            match self.schedule.first_treated(g) {
                Some(t) => writeln!(out, "{g} = {t}").unwrap(),
                None => writeln!(out, "{g} = never").unwrap(),
            }
        }
        writeln!(out, "\n[baseline]").unwrap();
        for g in &self.groups {
            let b = self.baselines[g];
            writeln!(out, "{g} = {}, {}", b.y_init_mean, b.trend).unwrap();
        }
        for (name, law) in self.covariate_names.iter().zip(&self.covariate_laws) {
            writeln!(out, "\n[covariate {name}]").unwrap();
            match law.kind {
                LawKind::Bernoulli { p } => {
                    writeln!(out, "law = bernoulli").unwrap();
                    writeln!(out, "p = {p}").unwrap();
                }
                LawKind::Normal { mean, sd } => {
                    writeln!(out, "law = normal").unwrap();
                    writeln!(out, "mean = {mean}").unwrap();
                    writeln!(out, "sd = {sd}").unwrap();
                }
                LawKind::Uniform { lo, hi } => {
                    writeln!(out, "law = uniform").unwrap();
                    writeln!(out, "lo = {lo}").unwrap();
                    writeln!(out, "hi = {hi}").unwrap();
                }
            }
            if law.time_slope != 0.0 {
                writeln!(out, "time_slope = {}", law.time_slope).unwrap();
            }
            for (g, off) in &law.group_offsets {
                writeln!(out, "offset {g} = {off}").unwrap();
            }
            for (g, slope) in &law.group_time_slopes {
                writeln!(out, "slope {g} = {slope}").unwrap();
            }
            if law.scale_time_slope != 0.0 {
                writeln!(out, "scale_time_slope = {}", law.scale_time_slope).unwrap();
            }
        }
        for (name, grid) in self.covariate_names.iter().zip(&self.gamma) {
            writeln!(out, "\n[gamma {name}]").unwrap();
            writeln!(out, "pattern = {}", grid.pattern).unwrap();
            for ((g, t), v) in &grid.values {
                writeln!(out, "{g}@{t} = {v}").unwrap();
            }
        }
        out
    }
}
