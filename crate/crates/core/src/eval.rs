//! Offline ranking evaluation, grid search and simulated tag feedback.

use std::io::Write;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use crate::dataset::{EvalUser, EvaluationSplit, TagMatrix};
use crate::ease::ItemItemModel;
use crate::error::{Error, Result};
use crate::linalg::{Gram, SparseBinaryMatrix};
use crate::recommend::{
    apply_feedback, ensemble_scores, profile, score_items, top_k, UserState, MAX_CLICKS,
};
use crate::rng;
use crate::solver::{precompute_from_gram, solve, EncoderModel, Hyperparams};

pub const RECALL_SHORT: usize = 20;
pub const RECALL_LONG: usize = 100;
pub const NDCG_CUTOFF: usize = 100;

fn check_truth(truth: &[usize], k: usize) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::validation("ground truth is empty"));
    }
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    Ok(())
}

/// `|topk[..k] ∩ truth| / min(k, |truth|)`.
pub fn recall_at_k(topk: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    check_truth(truth, k)?;
    let hits = topk.iter().take(k).filter(|i| truth.contains(i)).count();
    Ok(hits as f64 / k.min(truth.len()) as f64)
}

/// Binary-relevance nDCG with ideal DCG over `min(k, |truth|)` hits.
pub fn ndcg_at_k(topk: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    check_truth(truth, k)?;
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.contains(i))
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// `1 / log2(rank + 1)` for a zero-based position.
fn discount(position: usize) -> f64 {
    1.0 / ((position + 2) as f64).log2()
}

/// Produces item scores for a user state.
pub trait Scorer: Sync {
    fn score(&self, state: &UserState) -> Result<Vec<f64>>;

    /// Profile dimension of the states this scorer expects.
    fn num_tags(&self) -> usize {
        0
    }
}

pub struct TeaserScorer<'a> {
    pub model: &'a EncoderModel,
    pub tags: &'a TagMatrix,
}

impl Scorer for TeaserScorer<'_> {
    fn score(&self, state: &UserState) -> Result<Vec<f64>> {
        let p = profile(state, self.model, self.tags)?;
        Ok(score_items(&p, self.tags, &[]))
    }

    fn num_tags(&self) -> usize {
        self.tags.num_tags()
    }
}

pub struct EaseScorer<'a>(pub &'a ItemItemModel);

impl Scorer for EaseScorer<'_> {
    fn score(&self, state: &UserState) -> Result<Vec<f64>> {
        Ok(self.0.score(state.history()))
    }
}

pub struct EnsembleScorer<'a> {
    pub teaser: TeaserScorer<'a>,
    pub ease: &'a ItemItemModel,
}

impl Scorer for EnsembleScorer<'_> {
    fn score(&self, state: &UserState) -> Result<Vec<f64>> {
        let a = self.teaser.score(state)?;
        Ok(ensemble_scores(&a, &self.ease.score(state.history())))
    }

    fn num_tags(&self) -> usize {
        self.teaser.num_tags()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: usize,
    pub recall_20: f64,
    pub recall_100: f64,
    pub ndcg_100: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub recall_20: f64,
    pub recall_100: f64,
    pub ndcg_100: f64,
    pub per_user: Vec<UserMetrics>,
}

impl MetricReport {
    /// Means over `per_user`, summed in order.
    pub fn from_users(per_user: Vec<UserMetrics>) -> Self {
        let n = per_user.len().max(1) as f64;
        let mean = |f: fn(&UserMetrics) -> f64| per_user.iter().map(f).sum::<f64>() / n;
        MetricReport {
            recall_20: mean(|u| u.recall_20),
            recall_100: mean(|u| u.recall_100),
            ndcg_100: mean(|u| u.ndcg_100),
            per_user,
        }
    }
}

fn user_metrics(
    user: usize,
    scores: &[f64],
    history: &[usize],
    truth: &[usize],
) -> Result<UserMetrics> {
    let ranked = top_k(scores, history, RECALL_LONG.max(NDCG_CUTOFF));
    Ok(UserMetrics {
        user,
        recall_20: recall_at_k(&ranked, truth, RECALL_SHORT)?,
        recall_100: recall_at_k(&ranked, truth, RECALL_LONG)?,
        ndcg_100: ndcg_at_k(&ranked, truth, NDCG_CUTOFF)?,
    })
}

fn usable(users: &[EvalUser]) -> Vec<&EvalUser> {
    users
        .iter()
        .filter(|u| {
            if u.truth.is_empty() {
                warn!(
                    user = u.user,
                    "skipping evaluation user with empty ground truth"
                );
            }
            !u.truth.is_empty()
        })
        .collect()
}

/// Ranks all non-history items for every evaluation user and averages
/// recall@20, recall@100 and nDCG@100.
pub fn evaluate(scorer: &dyn Scorer, split: &EvaluationSplit) -> Result<MetricReport> {
    let per_user = usable(&split.users)
        .par_iter()
        .map(|u| {
            let state = UserState::with_history(scorer.num_tags(), &u.history);
            user_metrics(u.user, &scorer.score(&state)?, &u.history, &u.truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_users(per_user))
}

/// Cartesian product of hyperparameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub rho: Vec<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for HyperGrid {
    fn default() -> Self {
        let hp = Hyperparams::default();
        HyperGrid {
            lambda1: vec![1.0, 10.0, 100.0],
            lambda2: vec![1.0, 10.0, 100.0],
            rho: vec![hp.rho],
            max_iterations: hp.max_iterations,
            tolerance: hp.tolerance,
        }
    }
}

impl HyperGrid {
    pub fn points(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &lambda1 in &self.lambda1 {
            for &lambda2 in &self.lambda2 {
                for &rho in &self.rho {
                    out.push(Hyperparams {
                        lambda1,
                        lambda2,
                        rho,
                        max_iterations: self.max_iterations,
                        tolerance: self.tolerance,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub hyperparams: Hyperparams,
    pub converged: bool,
    pub iterations: usize,
    pub recall_20: f64,
    pub recall_100: f64,
    pub ndcg_100: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyperparams,
    pub table: Vec<GridRow>,
}

/// Trains one encoder per grid point and keeps the one with the best
/// validation nDCG@100; ties go to the smaller `(λ1, λ2)`.
pub fn grid_search(
    grid: &[Hyperparams],
    train: &SparseBinaryMatrix,
    tags: &TagMatrix,
    validation: &EvaluationSplit,
) -> Result<GridResult> {
    let first = grid
        .first()
        .ok_or_else(|| Error::validation("hyperparameter grid is empty"))?;
    let decoder = tags.decoder();
    let base = precompute_from_gram(train.gram()?, &decoder, first)?;
    let vocabulary = tags.vocabulary();
    let mut table = Vec::with_capacity(grid.len());
    for hp in grid {
        let pre = base.retuned(hp)?;
        let out = solve(&pre, hp)?;
        let model = EncoderModel {
            encoder: out.state.e,
            vocabulary: vocabulary.clone(),
            hyperparams: hp.clone(),
            report: out.report,
        };
        let report = evaluate(
            &TeaserScorer {
                model: &model,
                tags,
            },
            validation,
        )?;
        table.push(GridRow {
            hyperparams: hp.clone(),
            converged: model.report.converged,
            iterations: model.report.iterations,
            recall_20: report.recall_20,
            recall_100: report.recall_100,
            ndcg_100: report.ndcg_100,
        });
    }
    let best = table
        .iter()
        .min_by(|a, b| {
            b.ndcg_100
                .total_cmp(&a.ndcg_100)
                .then(a.hyperparams.lambda1.total_cmp(&b.hyperparams.lambda1))
                .then(a.hyperparams.lambda2.total_cmp(&b.hyperparams.lambda2))
        })
        .expect("non-empty grid")
        .hyperparams
        .clone();
    Ok(GridResult { best, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Distinct tags boosted per run, 1 or 2.
    pub tags_boosted: usize,
    /// Positive clicks applied to each boosted tag.
    pub clicks: i32,
    pub runs: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            tags_boosted: 1,
            clicks: 3,
            runs: 3,
            seed: 42,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.tags_boosted) {
            return Err(Error::validation("tags_boosted must be 1 or 2"));
        }
        if !(0..=MAX_CLICKS).contains(&self.clicks) {
            return Err(Error::validation(format!(
                "clicks must lie in [0, {MAX_CLICKS}]"
            )));
        }
        if self.runs == 0 {
            return Err(Error::validation("runs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub static_report: MetricReport,
    pub interactive: MetricReport,
    /// Relative nDCG@100 change of interactive over static, in percent.
    pub improvement_percent: f64,
}

/// Binary-tag occurrence counts over a user's ground-truth items.
fn truth_tag_counts(tags: &TagMatrix, truth: &[usize]) -> Vec<(usize, u32)> {
    let mut counts = vec![0u32; tags.num_binary_tags()];
    for &i in truth {
        for &t in tags.binary().row(i) {
            counts[t as usize] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .collect()
}

/// Static ranking versus ranking after positive clicks on tags sampled
/// from each user's ground truth, weighted by occurrence count. Runs are
/// averaged per user before averaging over users.
pub fn simulate_feedback(
    model: &EncoderModel,
    tags: &TagMatrix,
    split: &EvaluationSplit,
    config: &SimulationConfig,
) -> Result<SimulationReport> {
    config.validate()?;
    let scorer = TeaserScorer { model, tags };
    let users: Vec<&EvalUser> = usable(&split.users)
        .into_iter()
        .filter(|u| {
            let has_tags = u.truth.iter().any(|&i| !tags.binary().row(i).is_empty());
            if !has_tags {
                warn!(
                    user = u.user,
                    "skipping simulation user whose ground truth has no tags"
                );
            }
            has_tags
        })
        .collect();

    let pairs = users
        .par_iter()
        .map(|u| {
            let base = UserState::with_history(tags.num_tags(), &u.history);
            let fixed = user_metrics(u.user, &scorer.score(&base)?, &u.history, &u.truth)?;
            let weighted = truth_tag_counts(tags, &u.truth);
            // averaging changes rather than values keeps no-op runs exact
            let mut sum = [0.0; 3];
            for run in 0..config.runs {
                let mut rng = rng::stream(config.seed, &[2, u.user as u64, run as u64]);
                let amount = config.tags_boosted.min(weighted.len());
                let chosen: Vec<usize> = weighted
                    .choose_multiple_weighted(&mut rng, amount, |&(_, c)| c as f64)
                    .map_err(|e| Error::numerical(format!("tag sampling failed: {e}")))?
                    .map(|&(t, _)| t)
                    .collect();
                let mut state = base.clone();
                for &t in &chosen {
                    state = apply_feedback(&state, t, config.clicks)?;
                }
                let m = user_metrics(u.user, &scorer.score(&state)?, &u.history, &u.truth)?;
                sum[0] += m.recall_20 - fixed.recall_20;
                sum[1] += m.recall_100 - fixed.recall_100;
                sum[2] += m.ndcg_100 - fixed.ndcg_100;
            }
            let r = config.runs as f64;
            let boosted = UserMetrics {
                user: u.user,
                recall_20: fixed.recall_20 + sum[0] / r,
                recall_100: fixed.recall_100 + sum[1] / r,
                ndcg_100: fixed.ndcg_100 + sum[2] / r,
            };
            Ok((fixed, boosted))
        })
        .collect::<Result<Vec<_>>>()?;

    let (fixed, boosted): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let static_report = MetricReport::from_users(fixed);
    let interactive = MetricReport::from_users(boosted);
    let improvement_percent = relative_change(static_report.ndcg_100, interactive.ndcg_100);
    Ok(SimulationReport {
        static_report,
        interactive,
        improvement_percent,
    })
}

fn relative_change(before: f64, after: f64) -> f64 {
    if after == before {
        0.0
    } else if before == 0.0 {
        f64::INFINITY
    } else {
        100.0 * (after - before) / before
    }
}

/// One line of the comma-separated report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub scenario: String,
    #[serde(rename = "recall@20")]
    pub recall_20: f64,
    #[serde(rename = "recall@100")]
    pub recall_100: f64,
    #[serde(rename = "nDCG@100")]
    pub ndcg_100: f64,
    #[serde(rename = "improvement%")]
    pub improvement_percent: Option<f64>,
}

impl ReportRow {
    pub fn new(
        model: &str,
        scenario: &str,
        report: &MetricReport,
        improvement: Option<f64>,
    ) -> Self {
        ReportRow {
            model: model.to_owned(),
            scenario: scenario.to_owned(),
            recall_20: report.recall_20,
            recall_100: report.recall_100,
            ndcg_100: report.ndcg_100,
            improvement_percent: improvement,
        }
    }
}

pub fn write_report<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Format(format!("writing report: {e}")))?;
    }
    w.flush()
        .map_err(|e| Error::Format(format!("writing report: {e}")))?;
    Ok(())
}

/// Machine-readable record of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Hyperparams>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    pub dataset_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
