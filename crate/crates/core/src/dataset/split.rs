use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::InteractionDataset;
use crate::error::{Error, Result};
use crate::linalg::SparseBinaryMatrix;
use crate::rng;

/// Parameters of a strong-generalization split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    /// Evaluation users need at least this many interactions.
    pub min_interactions: usize,
    /// Share of an evaluation user's items kept as history (rounded up).
    pub history_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            min_interactions: 5,
            history_fraction: 0.8,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [
            self.train_fraction,
            self.validation_fraction,
            self.test_fraction,
        ];
        if fr.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::validation("split fractions must be positive"));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("split fractions must sum to 1"));
        }
        if !(self.history_fraction > 0.0 && self.history_fraction < 1.0) {
            return Err(Error::validation("history fraction must lie in (0, 1)"));
        }
        if self.min_interactions < 2 {
            return Err(Error::validation(
                "evaluation users need at least 2 interactions to split",
            ));
        }
        Ok(())
    }

    /// History size for a user with `len` interactions: `ceil(fraction · len)`,
    /// kept within `[1, len − 1]` so both parts are non-empty.
    pub fn history_len(&self, len: usize) -> usize {
        let exact = self.history_fraction * len as f64;
        // 0.8 · 5 must give 4, not 5, despite binary rounding
        let nearest = exact.round();
        let h = if (exact - nearest).abs() < 1e-9 {
            nearest
        } else {
            exact.ceil()
        } as usize;
        h.clamp(1, len.saturating_sub(1).max(1))
    }
}

/// One held-out user: items used as input and items to retrieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalUser {
    /// Row of the user in the source dataset.
    pub user: usize,
    /// Ordered history (shuffled order of the split).
    pub history: Vec<usize>,
    /// Sorted ground truth.
    pub truth: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationSplit {
    pub users: Vec<EvalUser>,
}

impl EvaluationSplit {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Result of [`split_strong_generalization`]: training rows plus two
/// disjoint groups of held-out users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// Training users only, in dataset order.
    pub train: SparseBinaryMatrix,
    pub train_users: Vec<usize>,
    pub validation: EvaluationSplit,
    pub test: EvaluationSplit,
}

/// Partitions users into train / validation / test. Validation and test
/// users are drawn from users with at least `min_interactions` items and
/// never appear in the training matrix.
pub fn split_strong_generalization(ds: &InteractionDataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let m = ds.num_users();
    let n_val = (spec.validation_fraction * m as f64).round() as usize;
    let n_test = (spec.test_fraction * m as f64).round() as usize;
    let lengths = ds.matrix.row_lengths();

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(spec.seed, &[0]));
    let eligible: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&u| lengths[u] >= spec.min_interactions)
        .collect();
    if eligible.len() < n_val + n_test {
        return Err(Error::validation(format!(
            "{} users have at least {} interactions, but validation and test need {} + {}",
            eligible.len(),
            spec.min_interactions,
            n_val,
            n_test
        )));
    }
    if m - n_val - n_test == 0 {
        return Err(Error::validation("no users left for training"));
    }

    let mut role = vec![Role::Train; m];
    for &u in &eligible[..n_val] {
        role[u] = Role::Validation;
    }
    for &u in &eligible[n_val..n_val + n_test] {
        role[u] = Role::Test;
    }

    let holdout = |u: usize| {
        let mut items: Vec<usize> = ds.matrix.row(u).iter().map(|&i| i as usize).collect();
        items.shuffle(&mut rng::stream(spec.seed, &[1, u as u64]));
        let h = spec.history_len(items.len());
        let mut truth = items.split_off(h);
        truth.sort_unstable();
        EvalUser {
            user: u,
            history: items,
            truth,
        }
    };

    let train_users: Vec<usize> = (0..m).filter(|&u| role[u] == Role::Train).collect();
    let pick = |r: Role| EvaluationSplit {
        users: (0..m).filter(|&u| role[u] == r).map(holdout).collect(),
    };
    Ok(Split {
        train: ds.matrix.select_rows(&train_users),
        validation: pick(Role::Validation),
        test: pick(Role::Test),
        train_users,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Train,
    Validation,
    Test,
}
