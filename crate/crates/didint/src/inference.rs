//! Cluster-robust uncertainty for the overall ATT: leave-one-group-out
//! jackknife and randomization inference over treatment-timing assignments.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{PanelDataset, TreatmentSchedule};
use crate::error::{Error, Result};
use crate::estimators::EstimatorSpec;

/// Combined inference output; each routine fills its part.
#[derive(Debug, Clone, Default, Serialize)]
pub struct InferenceResult {
    pub se_jackknife: Option<f64>,
    pub p_randomization: Option<f64>,
    pub n_permutations: Option<usize>,
    /// Leave-one-group-out ATT replicates, in group order.
    pub replicates: Vec<f64>,
    pub warnings: Vec<String>,
}

impl InferenceResult {
    pub fn merge(mut self, other: InferenceResult) -> InferenceResult {
        self.se_jackknife = self.se_jackknife.or(other.se_jackknife);
        self.p_randomization = self.p_randomization.or(other.p_randomization);
        self.n_permutations = self.n_permutations.or(other.n_permutations);
        if self.replicates.is_empty() {
            self.replicates = other.replicates;
        }
        self.warnings.extend(other.warnings);
        self
    }
}

/// Leave-one-group-out jackknife SE of the overall ATT.
///
/// Re-estimates with each group deleted (estimators run in their lenient
/// mode, so cells that lose their last control are skipped rather than
/// fatal); a deletion that still fails is skipped with a warning. With G
/// usable replicates, `SE = sqrt((G-1)/G * sum (theta_g - mean)^2)`.
pub fn cluster_jackknife(data: &PanelDataset, spec: &EstimatorSpec) -> Result<InferenceResult> {
    let groups = data.groups().to_vec();
    if groups.len() < 3 {
        return Err(Error::TooFewClusters {
            needed: 3,
            got: groups.len(),
        });
    }

    let outcomes: Vec<(String, Result<f64>)> = groups
        .par_iter()
        .map(|g| {
            let result = data
                .without_group(g)
                .and_then(|subset| spec.run_lenient(&subset))
                .map(|report| report.overall_att);
            (g.clone(), result)
        })
        .collect();

    let mut replicates = Vec::new();
    let mut warnings = Vec::new();
    for (group, outcome) in outcomes {
        match outcome {
            Ok(theta) => replicates.push(theta),
            Err(e) => warnings.push(format!("deleting group {group} infeasible: {e}")),
        }
    }
    if replicates.len() < 2 {
        return Err(Error::estimation(
            "cluster jackknife: fewer than two usable leave-one-out replicates",
        ));
    }

    // Compensated summation keeps the SE independent of replicate order.
    let mean = kahan_sum(replicates.iter().copied()) / replicates.len() as f64;
    let ss = kahan_sum(replicates.iter().map(|r| (r - mean) * (r - mean)));
    let g = replicates.len() as f64;
    let se = ((g - 1.0) / g * ss).sqrt();

    Ok(InferenceResult {
        se_jackknife: Some(se),
        p_randomization: None,
        n_permutations: None,
        replicates,
        warnings,
    })
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Randomization inference over treatment-timing assignments.
///
/// The observed multiset of first-treated periods (including the
/// never-treated slots) is permuted across groups; each assignment is
/// re-estimated and the two-sided p-value is the share of assignments at
/// least as extreme as the observed one. When the number of distinct
/// assignments is at most `n_perm` they are enumerated exhaustively (the
/// seed is then irrelevant); otherwise `n_perm` random assignments are
/// drawn and `p = (1 + #{|theta_perm| >= |theta_obs|}) / (1 + n_perm)`.
pub fn randomization_inference(
    data: &PanelDataset,
    spec: &EstimatorSpec,
    n_perm: usize,
    seed: u64,
) -> Result<InferenceResult> {
    if n_perm < 99 {
        return Err(Error::Config(format!(
            "randomization inference needs n_perm >= 99, got {n_perm}"
        )));
    }
    let groups = data.groups().to_vec();
    let observed: Vec<Option<i64>> = groups.iter().map(|g| data.first_treated(g)).collect();
    let n_assignments = count_distinct_assignments(&observed);
    if n_assignments < 2 {
        return Err(Error::estimation(
            "randomization inference: only one possible treatment assignment",
        ));
    }

    let theta_obs = spec.run(data)?.overall_att;
    let mut warnings = Vec::new();

    let estimate_assignment = |assignment: &[Option<i64>]| -> Result<f64> {
        let schedule = TreatmentSchedule::new(
            groups
                .iter()
                .cloned()
                .zip(assignment.iter().copied())
                .collect::<BTreeMap<_, _>>(),
        );
        let permuted = data.with_schedule(schedule)?;
        Ok(spec.run(&permuted)?.overall_att)
    };

    let exhaustive = n_assignments <= n_perm as u128;
    let (p, n_used) = if exhaustive {
        let assignments = enumerate_assignments(&observed);
        let thetas: Vec<Result<f64>> = assignments
            .par_iter()
            .map(|a| estimate_assignment(a))
            .collect();
        let mut extreme = 0usize;
        let mut valid = 0usize;
        for outcome in thetas {
            match outcome {
                Ok(theta) => {
                    valid += 1;
                    if theta.abs() >= theta_obs.abs() {
                        extreme += 1;
                    }
                }
                Err(e) => warnings.push(format!("assignment infeasible, excluded: {e}")),
            }
        }
        (extreme as f64 / valid as f64, valid)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<Option<i64>>> = (0..n_perm)
            .map(|_| {
                let mut a = observed.clone();
                a.shuffle(&mut rng);
                a
            })
            .collect();
        let thetas: Vec<Result<f64>> = draws.par_iter().map(|a| estimate_assignment(a)).collect();
        let mut extreme = 0usize;
        let mut valid = 0usize;
        for outcome in thetas {
            match outcome {
                Ok(theta) => {
                    valid += 1;
                    if theta.abs() >= theta_obs.abs() {
                        extreme += 1;
                    }
                }
                Err(e) => warnings.push(format!("assignment infeasible, excluded: {e}")),
            }
        }
        ((1 + extreme) as f64 / (1 + valid) as f64, valid)
    };

    Ok(InferenceResult {
        se_jackknife: None,
        p_randomization: Some(p),
        n_permutations: Some(n_used),
        replicates: Vec::new(),
        warnings,
    })
}

/// Number of distinct assignments of the timing multiset to groups:
/// G! / prod(multiplicities!). Saturates at u128::MAX.
fn count_distinct_assignments(observed: &[Option<i64>]) -> u128 {
    let mut counts: BTreeMap<Option<i64>, u128> = BTreeMap::new();
    for t in observed {
        *counts.entry(*t).or_insert(0) += 1;
    }
    let mut numerator: u128 = 1;
    for i in 1..=observed.len() as u128 {
        numerator = numerator.saturating_mul(i);
    }
    let mut denominator: u128 = 1;
    for c in counts.values() {
        for i in 1..=*c {
            denominator = denominator.saturating_mul(i);
        }
    }
    numerator / denominator
}

/// All distinct permutations of the timing multiset, in lexicographic order.
fn enumerate_assignments(observed: &[Option<i64>]) -> Vec<Vec<Option<i64>>> {
    let mut current: Vec<Option<i64>> = observed.to_vec();
    current.sort();
    let mut out = vec![current.clone()];
    while next_permutation(&mut current) {
        out.push(current.clone());
    }
    out
}

fn next_permutation(a: &mut [Option<i64>]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}
