//! Panel / repeated cross-section data with a treatment schedule.
//!
//! A [`PanelDataset`] is the single immutable input to every estimator. It
//! holds observations indexed by (group, time) cells, the ordered group and
//! period labels, and the schedule mapping each group to the period it is
//! first treated (if ever). Construction validates everything once so the
//! estimators can assume finite outcomes, known labels, and an existing
//! pre-period for every treated group.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// One row of data: an outcome and covariates for some (group, time) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Optional opaque unit label; carried through but unused by estimators.
    pub unit_id: Option<String>,
    pub group: String,
    pub time: i64,
    pub outcome: f64,
    pub covariates: Vec<f64>,
}

/// Maps each group to the period it is first treated; `None` = never treated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreatmentSchedule {
    pub first_treated: BTreeMap<String, Option<i64>>,
}

impl TreatmentSchedule {
    pub fn new(first_treated: BTreeMap<String, Option<i64>>) -> Self {
        TreatmentSchedule { first_treated }
    }

    /// Builds a schedule from (group, first_treated) pairs.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Option<i64>)>,
        S: Into<String>,
    {
        TreatmentSchedule {
            first_treated: pairs.into_iter().map(|(g, t)| (g.into(), t)).collect(),
        }
    }

    pub fn first_treated(&self, group: &str) -> Option<i64> {
        self.first_treated.get(group).copied().flatten()
    }
}

/// Identifies one populated (group, time) cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellIndex {
    pub group: String,
    pub time: i64,
}

impl CellIndex {
    pub fn new(group: impl Into<String>, time: i64) -> Self {
        CellIndex {
            group: group.into(),
            time,
        }
    }
}

impl std::fmt::Display for CellIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.group, self.time)
    }
}

/// Validated, immutable panel data plus treatment schedule.
///
/// Groups keep their first-appearance order; periods are sorted ascending.
/// The populated-cell index maps every (group, period) pair to the row
/// indices it contains, so estimators can iterate cells without rescanning.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    observations: Vec<Observation>,
    groups: Vec<String>,
    periods: Vec<i64>,
    covariate_names: Vec<String>,
    schedule: TreatmentSchedule,
    /// Row indices per (group index, period index); empty = unpopulated.
    cells: Vec<Vec<Vec<usize>>>,
}

impl PanelDataset {
    /// Validates observations against the schedule and builds the cell index.
    pub fn new(
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
        schedule: TreatmentSchedule,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::input("empty dataset: no observations"));
        }
        let k = covariate_names.len();

        let mut groups: Vec<String> = Vec::new();
        let mut periods: Vec<i64> = Vec::new();
        for obs in &observations {
            if !obs.outcome.is_finite() {
                return Err(Error::input(format!(
                    "non-finite outcome in group {} at period {}",
                    obs.group, obs.time
                )));
            }
            if obs.covariates.len() != k {
                return Err(Error::input(format!(
                    "observation in group {} at period {} has {} covariates, expected {}",
                    obs.group,
                    obs.time,
                    obs.covariates.len(),
                    k
                )));
            }
            if obs.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::input(format!(
                    "non-finite covariate in group {} at period {}",
                    obs.group, obs.time
                )));
            }
            if !groups.contains(&obs.group) {
                groups.push(obs.group.clone());
            }
            if !periods.contains(&obs.time) {
                periods.push(obs.time);
            }
        }
        periods.sort_unstable();

        for group in &groups {
            if !schedule.first_treated.contains_key(group) {
                return Err(Error::input(format!(
                    "group {group} has no entry in the treatment schedule"
                )));
            }
        }
        let first_period = periods[0];
        for (group, treated) in &schedule.first_treated {
            if let Some(ts) = treated {
                if groups.contains(group) && *ts <= first_period {
                    return Err(Error::input(format!(
                        "no pre-period for group {group}: first treated {ts}, earliest observed period {first_period}"
                    )));
                }
            }
        }

        let mut cells = vec![vec![Vec::new(); periods.len()]; groups.len()];
        for (row, obs) in observations.iter().enumerate() {
            let g = groups.iter().position(|x| x == &obs.group).unwrap();
            let t = periods.iter().position(|x| *x == obs.time).unwrap();
            cells[g][t].push(row);
        }

        Ok(PanelDataset {
            observations,
            groups,
            periods,
            covariate_names,
            schedule,
            cells,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    /// Group labels in first-appearance order.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    /// Periods in ascending order.
    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn schedule(&self) -> &TreatmentSchedule {
        &self.schedule
    }

    pub fn group_index(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }

    pub fn period_index(&self, time: i64) -> Option<usize> {
        self.periods.iter().position(|t| *t == time)
    }

    /// Period the group is first treated, `None` for never treated.
    pub fn first_treated(&self, group: &str) -> Option<i64> {
        self.schedule.first_treated(group)
    }

    /// Treated groups in dataset order.
    pub fn treated_groups(&self) -> Vec<String> {
        self.groups
            .iter()
            .filter(|g| self.first_treated(g).is_some())
            .cloned()
            .collect()
    }

    /// Never-treated groups in dataset order.
    pub fn never_treated_groups(&self) -> Vec<String> {
        self.groups
            .iter()
            .filter(|g| self.first_treated(g).is_none())
            .cloned()
            .collect()
    }

    /// The treatment dummy: 1 iff the group is treated and `time >= t^s`.
    pub fn is_treated_at(&self, group: &str, time: i64) -> bool {
        match self.first_treated(group) {
            Some(ts) => time >= ts,
            None => false,
        }
    }

    /// Row indices of a (group, time) cell; empty slice if unpopulated.
    pub fn cell_rows(&self, group: &str, time: i64) -> &[usize] {
        match (self.group_index(group), self.period_index(time)) {
            (Some(g), Some(t)) => &self.cells[g][t],
            _ => &[],
        }
    }

    pub fn is_populated(&self, group: &str, time: i64) -> bool {
        !self.cell_rows(group, time).is_empty()
    }

    /// Populated cells ordered by (group order, period order).
    pub fn populated_cells(&self) -> Vec<CellIndex> {
        let mut out = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            for (t, time) in self.periods.iter().enumerate() {
                if !self.cells[g][t].is_empty() {
                    out.push(CellIndex::new(group.clone(), *time));
                }
            }
        }
        out
    }

    /// Arithmetic mean of outcomes in a populated cell.
    pub fn cell_mean(&self, cell: &CellIndex) -> Result<f64> {
        let rows = self.cell_rows(&cell.group, cell.time);
        if rows.is_empty() {
            return Err(Error::UnpopulatedCell {
                group: cell.group.clone(),
                time: cell.time,
            });
        }
        let sum: f64 = rows.iter().map(|&i| self.observations[i].outcome).sum();
        Ok(sum / rows.len() as f64)
    }

    /// Groups usable as controls for a treated cell: every `s'` whose
    /// treatment starts strictly after `cell.time` or never. Already-treated
    /// groups are excluded, so forbidden comparisons cannot enter.
    pub fn eligible_controls(&self, cell: &CellIndex) -> Result<Vec<String>> {
        let ts = self.first_treated(&cell.group).ok_or_else(|| {
            Error::estimation(format!("group {} is never treated", cell.group))
        })?;
        if cell.time < ts {
            return Err(Error::estimation(format!(
                "cell {cell} is before treatment of group {} (first treated {ts})",
                cell.group
            )));
        }
        let controls: Vec<String> = self
            .groups
            .iter()
            .filter(|g| *g != &cell.group)
            .filter(|g| match self.first_treated(g) {
                None => true,
                Some(t) => t > cell.time,
            })
            .cloned()
            .collect();
        if controls.is_empty() {
            return Err(Error::NoControl {
                group: cell.group.clone(),
                time: cell.time,
            });
        }
        Ok(controls)
    }

    /// The dataset with one group's observations removed (re-validated).
    pub fn without_group(&self, group: &str) -> Result<PanelDataset> {
        let observations: Vec<Observation> = self
            .observations
            .iter()
            .filter(|o| o.group != group)
            .cloned()
            .collect();
        PanelDataset::new(observations, self.covariate_names.clone(), self.schedule.clone())
    }

    /// The same observations under a different treatment schedule
    /// (re-validated). Randomization inference permutes schedules this way.
    pub fn with_schedule(&self, schedule: TreatmentSchedule) -> Result<PanelDataset> {
        PanelDataset::new(self.observations.clone(), self.covariate_names.clone(), schedule)
    }

    /// Writes the dataset back out as CSV (with a `first_treated` column).
    /// Floats use the shortest round-trippable representation, so a reload
    /// reproduces the observations exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => Error::Csv(e),
        })?;
        let mut header = vec!["group".to_string(), "time".to_string(), "outcome".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        header.push("first_treated".to_string());
        let has_units = self.observations.iter().any(|o| o.unit_id.is_some());
        if has_units {
            header.insert(0, "unit_id".to_string());
        }
        wtr.write_record(&header)?;
        for obs in &self.observations {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            if has_units {
                rec.push(obs.unit_id.clone().unwrap_or_default());
            }
            rec.push(obs.group.clone());
            rec.push(obs.time.to_string());
            rec.push(format_float(obs.outcome));
            for x in &obs.covariates {
                rec.push(format_float(*x));
            }
            rec.push(match self.first_treated(&obs.group) {
                Some(t) => t.to_string(),
                None => "never".to_string(),
            });
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

fn format_float(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").unwrap();
    s
}

/// Column-name mapping used when loading a CSV file.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub group_col: String,
    pub time_col: String,
    pub outcome_col: String,
    pub covariate_cols: Vec<String>,
    /// Column holding the first-treated period (`never`/empty for untreated).
    pub treatment_col: Option<String>,
    /// Optional unit identifier column.
    pub unit_col: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            group_col: "group".into(),
            time_col: "time".into(),
            outcome_col: "outcome".into(),
            covariate_cols: Vec::new(),
            treatment_col: Some("first_treated".into()),
            unit_col: None,
        }
    }
}

/// Loads a two-column sidecar schedule: `group,first_treated` with the
/// literal `never` for untreated groups.
pub fn load_schedule_csv(path: &Path) -> Result<TreatmentSchedule> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let mut map = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::input(format!(
                "schedule file {}: each row needs `group,first_treated`",
                path.display()
            )));
        }
        let group = record[0].trim().to_string();
        let value = parse_treatment_value(record[1].trim()).map_err(|msg| {
            Error::input(format!("schedule file {}: {msg}", path.display()))
        })?;
        map.insert(group, value);
    }
    Ok(TreatmentSchedule::new(map))
}

fn parse_treatment_value(raw: &str) -> std::result::Result<Option<i64>, String> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("never") {
        return Ok(None);
    }
    raw.parse::<i64>()
        .map(Some)
        .map_err(|_| format!("invalid first-treated value `{raw}` (integer or `never`)"))
}

/// Loads and validates panel data from a CSV file.
///
/// The treatment schedule comes from the schema's treatment column, the
/// `sidecar` schedule, or both; if both are present they must agree.
pub fn load_csv(
    path: &Path,
    schema: &CsvSchema,
    sidecar: Option<&TreatmentSchedule>,
) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;

    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("missing column `{name}` in {}", path.display())))
    };
    let group_ix = col(&schema.group_col)?;
    let time_ix = col(&schema.time_col)?;
    let outcome_ix = col(&schema.outcome_col)?;
    let cov_ix: Vec<usize> = schema
        .covariate_cols
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let treat_ix = match &schema.treatment_col {
        Some(c) => Some(col(c)?),
        None => None,
    };
    let unit_ix = match &schema.unit_col {
        Some(c) => Some(col(c)?),
        None => None,
    };
    if treat_ix.is_none() && sidecar.is_none() {
        return Err(Error::input(
            "no treatment schedule: provide a treatment-year column or a sidecar schedule file",
        ));
    }

    let mut observations = Vec::new();
    let mut column_schedule: BTreeMap<String, Option<i64>> = BTreeMap::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let group = record[group_ix].trim().to_string();
        let time: i64 = record[time_ix].trim().parse().map_err(|_| {
            Error::input(format!(
                "row {}: non-integer time `{}` (periods must be integers)",
                line + 2,
                &record[time_ix]
            ))
        })?;
        let outcome: f64 = record[outcome_ix].trim().parse().map_err(|_| {
            Error::input(format!(
                "row {}: non-numeric outcome `{}`",
                line + 2,
                &record[outcome_ix]
            ))
        })?;
        let covariates: Vec<f64> = cov_ix
            .iter()
            .map(|&ix| {
                record[ix].trim().parse().map_err(|_| {
                    Error::input(format!(
                        "row {}: non-numeric covariate `{}` in column `{}`",
                        line + 2,
                        &record[ix],
                        &headers[ix]
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(tix) = treat_ix {
            let value = parse_treatment_value(record[tix].trim())
                .map_err(|msg| Error::input(format!("row {}: {msg}", line + 2)))?;
            match column_schedule.get(&group) {
                None => {
                    column_schedule.insert(group.clone(), value);
                }
                Some(existing) if *existing != value => {
                    return Err(Error::input(format!(
                        "group {group} has conflicting treatment years in the data"
                    )));
                }
                _ => {}
            }
        }
        let unit_id = unit_ix.map(|ix| record[ix].trim().to_string()).filter(|s| !s.is_empty());
        observations.push(Observation {
            unit_id,
            group,
            time,
            outcome,
            covariates,
        });
    }
    if observations.is_empty() {
        return Err(Error::input(format!("empty file: {}", path.display())));
    }

    let schedule = match (treat_ix.is_some(), sidecar) {
        (true, Some(side)) => {
            for (group, value) in &column_schedule {
                if let Some(side_value) = side.first_treated.get(group) {
                    if side_value != value {
                        return Err(Error::input(format!(
                            "group {group}: treatment column and sidecar schedule disagree"
                        )));
                    }
                }
            }
            let mut merged = side.first_treated.clone();
            merged.extend(column_schedule);
            TreatmentSchedule::new(merged)
        }
        (true, None) => TreatmentSchedule::new(column_schedule),
        (false, Some(side)) => side.clone(),
        (false, None) => unreachable!(),
    };

    PanelDataset::new(observations, schema.covariate_cols.clone(), schedule)
}
