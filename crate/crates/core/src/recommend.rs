//! User profiles in tag space, explained rankings and interactive feedback.
//!
//! A user's raw profile is `x·E + f`: the sum of the encoder rows of their
//! history plus feedback converted from display units. Displayed
//! affinities are the raw profile rescaled into `[-c, c]` where the
//! certainty `c` grows with history length.

use serde::{Deserialize, Serialize};

use crate::dataset::TagMatrix;
use crate::ease::ItemItemModel;
use crate::error::{Error, Result};
use crate::solver::EncoderModel;

/// Display units added per click.
pub const CLICK_STEP: f64 = 0.2;
/// Clicks per tag are clamped to `±MAX_CLICKS`.
pub const MAX_CLICKS: i32 = 5;
pub const MAX_EXPLANATIONS: usize = 5;
/// Explanations below this absolute share are hidden.
pub const MIN_EXPLANATION_PERCENT: f64 = 5.0;

/// `min(0.2 + 0.2·h, 0.8)` for a history of length `h`.
pub fn certainty(history_len: usize) -> f64 {
    match history_len {
        0 => 0.2,
        1 => 0.4,
        2 => 0.6,
        _ => 0.8,
    }
}

/// History and per-tag click counts of one user.
///
/// Clicks are stored as integers so that a click and its inverse cancel
/// exactly; feedback in display units is `clicks × CLICK_STEP`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserState {
    history: Vec<usize>,
    clicks: Vec<i32>,
}

impl UserState {
    pub fn new(num_tags: usize) -> Self {
        UserState {
            history: Vec::new(),
            clicks: vec![0; num_tags],
        }
    }

    /// Empty history with one positive click on `popularity_tag`, so a
    /// new user starts from the most popular items.
    pub fn cold_start(num_tags: usize, popularity_tag: usize) -> Self {
        let mut state = Self::new(num_tags);
        state.clicks[popularity_tag] = 1;
        state
    }

    /// Starts from a history; duplicates after the first occurrence are dropped.
    pub fn with_history(num_tags: usize, history: &[usize]) -> Self {
        let mut state = Self::new(num_tags);
        for &i in history {
            state.add_item(i);
        }
        state
    }

    pub fn history(&self) -> &[usize] {
        &self.history
    }

    pub fn clicks(&self) -> &[i32] {
        &self.clicks
    }

    pub fn num_tags(&self) -> usize {
        self.clicks.len()
    }

    /// Feedback vector in display units.
    pub fn feedback(&self) -> Vec<f64> {
        self.clicks.iter().map(|&c| c as f64 * CLICK_STEP).collect()
    }

    /// Appends `item`; returns false when it is already in the history.
    pub fn add_item(&mut self, item: usize) -> bool {
        if self.history.contains(&item) {
            return false;
        }
        self.history.push(item);
        true
    }

    /// Removes `item`; returns false when it was not in the history.
    pub fn remove_item(&mut self, item: usize) -> bool {
        match self.history.iter().position(|&i| i == item) {
            Some(p) => {
                self.history.remove(p);
                true
            }
            None => false,
        }
    }
}

/// Applies `delta` clicks (typically ±1) to one tag, clamped to ±[`MAX_CLICKS`].
pub fn apply_feedback(state: &UserState, tag: usize, delta: i32) -> Result<UserState> {
    if tag >= state.num_tags() {
        return Err(Error::validation(format!(
            "tag {tag} out of range for {} tags",
            state.num_tags()
        )));
    }
    let mut next = state.clone();
    next.clicks[tag] = state.clicks[tag]
        .saturating_add(delta)
        .clamp(-MAX_CLICKS, MAX_CLICKS);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagProfile {
    /// `x·E` plus converted feedback.
    pub raw: Vec<f64>,
    /// `c · raw / max|raw|`, within `[-c, c]`.
    pub display: Vec<f64>,
    pub certainty: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Builds the raw and display profile of `state`.
///
/// Feedback lives in display units and is converted with the inverse of the
/// display map of the history-only profile, `f · max|x·E| / c`; for an
/// all-zero `x·E` the factor is 1.
pub fn profile(state: &UserState, model: &EncoderModel, tags: &TagMatrix) -> Result<TagProfile> {
    let t = model.num_tags();
    if t != tags.num_tags() || model.num_items() != tags.num_items() {
        return Err(Error::validation(
            "encoder and tag matrix dimensions differ",
        ));
    }
    if state.num_tags() != t {
        return Err(Error::validation(format!(
            "user state has {} tags, model has {t}",
            state.num_tags()
        )));
    }
    let mut raw = vec![0.0; t];
    for &i in state.history() {
        if i >= model.num_items() {
            return Err(Error::validation(format!("history item {i} out of range")));
        }
        for (r, e) in raw.iter_mut().zip(model.encoder.row(i)) {
            *r += e;
        }
    }
    let c = certainty(state.history().len());
    let base = max_abs(&raw);
    let factor = if base > 0.0 { base / c } else { 1.0 };
    for (r, &k) in raw.iter_mut().zip(state.clicks()) {
        if k != 0 {
            *r += k as f64 * CLICK_STEP * factor;
        }
    }
    let scale = max_abs(&raw);
    let display = if scale > 0.0 {
        raw.iter().map(|r| c * r / scale).collect()
    } else {
        vec![0.0; t]
    };
    Ok(TagProfile {
        raw,
        display,
        certainty: c,
    })
}

/// `⟨raw, D_i⟩` for every item; excluded items get `-∞`.
pub fn score_items(profile: &TagProfile, tags: &TagMatrix, exclude: &[usize]) -> Vec<f64> {
    let mut scores: Vec<f64> = (0..tags.num_items())
        .map(|i| tags.item_score(&profile.raw, i))
        .collect();
    for &i in exclude {
        scores[i] = f64::NEG_INFINITY;
    }
    scores
}

/// Signed share of one tag in an item's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub tag: usize,
    /// `100 · term / Σ|term|`.
    pub percent: f64,
    /// `raw_τ · D_iτ`.
    pub term: f64,
}

/// All nonzero contributions to an item's score and their normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Contributions {
    pub terms: Vec<Explanation>,
    /// `Σ|term|`; `percent · normalizer / 100` recovers each term.
    pub normalizer: f64,
}

pub fn contributions(profile: &TagProfile, tags: &TagMatrix, item: usize) -> Contributions {
    let raw: Vec<(usize, f64)> = tags
        .item_entries(item)
        .map(|(t, v)| (t, profile.raw[t] * v))
        .filter(|&(_, term)| term != 0.0)
        .collect();
    let normalizer: f64 = raw.iter().map(|(_, term)| term.abs()).sum();
    let terms = raw
        .into_iter()
        .map(|(tag, term)| Explanation {
            tag,
            percent: 100.0 * term / normalizer,
            term,
        })
        .collect();
    Contributions { terms, normalizer }
}

/// Up to [`MAX_EXPLANATIONS`] contributions with `|percent| ≥`
/// [`MIN_EXPLANATION_PERCENT`], largest magnitude first.
pub fn explain_item(profile: &TagProfile, tags: &TagMatrix, item: usize) -> Vec<Explanation> {
    let mut terms = contributions(profile, tags, item).terms;
    terms.retain(|e| e.percent.abs() >= MIN_EXPLANATION_PERCENT);
    terms.sort_by(|a, b| {
        b.percent
            .abs()
            .total_cmp(&a.percent.abs())
            .then(a.tag.cmp(&b.tag))
    });
    terms.truncate(MAX_EXPLANATIONS);
    terms
}

/// Share of `Σ|display|` per category, in `tags.categories()` order.
/// A zero profile gives the uniform distribution.
pub fn category_impact(profile: &TagProfile, tags: &TagMatrix) -> Vec<f64> {
    let k = tags.categories().len();
    let mut sums = vec![0.0; k];
    for (t, d) in profile.display.iter().enumerate() {
        sums[tags.category_of(t)] += d.abs();
    }
    let total: f64 = sums.iter().sum();
    if total > 0.0 {
        sums.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

/// Geometric mean of the nonnegative parts, `sqrt(max(a,0)·max(b,0))`.
///
/// # Panics
/// If the lengths differ.
pub fn ensemble_scores(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "ensemble inputs must have equal length");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x.max(0.0) * y.max(0.0)).sqrt())
        .collect()
}

/// Indices of the `k` best scores among non-excluded items, ties broken by
/// ascending index.
pub fn top_k(scores: &[f64], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut skip = vec![false; scores.len()];
    for &i in exclude {
        skip[i] = true;
    }
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| !skip[i]).collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRecommendation {
    pub item: usize,
    /// Ranking score (ensemble score when an ensemble is used).
    pub score: f64,
    /// `100 · score / top score`, clamped to `[0, 100]`.
    pub percent_match: f64,
    pub explanations: Vec<Explanation>,
}

/// Top-`k` items outside the history, explained from the tag profile.
/// With `ensemble`, ranking uses [`ensemble_scores`] of both models.
pub fn recommend(
    state: &UserState,
    model: &EncoderModel,
    tags: &TagMatrix,
    k: usize,
    ensemble: Option<&ItemItemModel>,
) -> Result<Vec<RankedRecommendation>> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    let prof = profile(state, model, tags)?;
    let history = state.history();
    let mut scores = score_items(&prof, tags, &[]);
    if let Some(ease) = ensemble {
        if ease.num_items() != tags.num_items() {
            return Err(Error::validation("EASE model item count differs"));
        }
        scores = ensemble_scores(&scores, &ease.score(history));
    }
    let ranked = top_k(&scores, history, k);
    let best = ranked.first().map_or(0.0, |&i| scores[i]);
    Ok(ranked
        .into_iter()
        .map(|item| RankedRecommendation {
            item,
            score: scores[item],
            percent_match: percent_match(scores[item], best),
            explanations: explain_item(&prof, tags, item),
        })
        .collect())
}

fn percent_match(score: f64, best: f64) -> f64 {
    if best > 0.0 {
        (100.0 * score / best).clamp(0.0, 100.0)
    } else {
        0.0
    }
}
