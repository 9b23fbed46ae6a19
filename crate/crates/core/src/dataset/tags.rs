use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IdIndex, ItemMetadata};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseBinaryMatrix};

/// Category and label of the real-valued popularity column.
pub const POPULARITY: &str = "popularity";

/// Rules for turning raw metadata into one-hot tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    /// Tags carried by fewer items than this are dropped.
    pub min_tag_items: usize,
    /// Categories that are shown to users but never become tags.
    pub display_fields: Vec<String>,
    /// Numeric categories and their ascending bin edges.
    pub bins: BTreeMap<String, Vec<f64>>,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            min_tag_items: 5,
            display_fields: vec!["title".into(), "description".into()],
            bins: BTreeMap::new(),
        }
    }
}

impl EncodingConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: EncodingConfig =
            toml::from_str(text).map_err(|e| Error::validation(format!("encoding config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        for (cat, edges) in &self.bins {
            if edges.is_empty() {
                return Err(Error::validation(format!("bins for `{cat}` are empty")));
            }
            if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "bin edges for `{cat}` must be finite and strictly increasing"
                )));
            }
            if self.display_fields.contains(cat) {
                return Err(Error::validation(format!(
                    "`{cat}` is both binned and a display field"
                )));
            }
        }
        Ok(())
    }

    fn bin_label(edges: &[f64], value: f64) -> String {
        let k = edges.partition_point(|&e| e <= value);
        match k {
            0 => format!("<{}", edges[0]),
            k if k == edges.len() => format!(">={}", edges[k - 1]),
            k => format!("[{},{})", edges[k - 1], edges[k]),
        }
    }

    /// Tags of one item, before frequency filtering.
    fn item_tags(&self, item: &str, records: &[(String, String)]) -> Result<BTreeSet<Tag>> {
        let mut tags = BTreeSet::new();
        for (category, value) in records {
            if self.display_fields.contains(category) {
                continue;
            }
            if category == POPULARITY {
                return Err(Error::validation(format!(
                    "item `{item}`: category name `{POPULARITY}` is reserved"
                )));
            }
            let label = match self.bins.get(category) {
                Some(edges) => {
                    let v: f64 = value.parse().map_err(|_| {
                        Error::validation(format!(
                            "item `{item}`: `{category}` value `{value}` is not numeric"
                        ))
                    })?;
                    Self::bin_label(edges, v)
                }
                None if value.is_empty() => continue,
                None => value.clone(),
            };
            tags.insert(Tag {
                category: category.clone(),
                label,
            });
        }
        Ok(tags)
    }
}

/// One interpretable dimension of the profile space.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Tag {
    pub category: String,
    pub label: String,
}

/// Item × tag matrix: one-hot binary tags plus a trailing real-valued
/// popularity column. Serves as the fixed decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMatrix {
    binary: SparseBinaryMatrix,
    popularity: Vec<f64>,
    /// Binary tags only; the popularity tag is implicit at index `binary.cols()`.
    vocabulary: Vec<Tag>,
    categories: Vec<String>,
    /// Category of every tag, popularity included.
    tag_category: Vec<usize>,
}

impl TagMatrix {
    /// Assembles a tag matrix. `popularity` must lie in `[0, 1]` with
    /// maximum exactly 1, and every item needs at least one binary tag.
    pub fn new(
        binary: SparseBinaryMatrix,
        popularity: Vec<f64>,
        vocabulary: Vec<Tag>,
    ) -> Result<Self> {
        if popularity.len() != binary.rows() {
            return Err(Error::validation(
                "popularity length differs from item count",
            ));
        }
        if vocabulary.len() != binary.cols() {
            return Err(Error::validation(
                "vocabulary length differs from tag count",
            ));
        }
        if popularity.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::validation("popularity values must lie in [0, 1]"));
        }
        if popularity.iter().copied().fold(f64::NEG_INFINITY, f64::max) != 1.0 {
            return Err(Error::validation("popularity maximum must be exactly 1"));
        }
        let tagless: Vec<usize> = (0..binary.rows())
            .filter(|&i| binary.row(i).is_empty())
            .collect();
        if !tagless.is_empty() {
            return Err(Error::validation(format!(
                "items without tags: {tagless:?}"
            )));
        }
        let mut seen = BTreeSet::new();
        for tag in &vocabulary {
            if tag.category == POPULARITY {
                return Err(Error::validation(format!(
                    "category `{POPULARITY}` is reserved"
                )));
            }
            if !seen.insert(tag) {
                return Err(Error::validation(format!(
                    "duplicate tag `{}` in category `{}`",
                    tag.label, tag.category
                )));
            }
        }
        let mut categories: Vec<String> = Vec::new();
        let mut tag_category = Vec::with_capacity(vocabulary.len() + 1);
        for tag in &vocabulary {
            let idx = match categories.iter().position(|c| *c == tag.category) {
                Some(i) => i,
                None => {
                    categories.push(tag.category.clone());
                    categories.len() - 1
                }
            };
            tag_category.push(idx);
        }
        categories.push(POPULARITY.to_owned());
        tag_category.push(categories.len() - 1);
        Ok(TagMatrix {
            binary,
            popularity,
            vocabulary,
            categories,
            tag_category,
        })
    }

    pub fn num_items(&self) -> usize {
        self.binary.rows()
    }

    /// Number of profile dimensions, popularity included.
    pub fn num_tags(&self) -> usize {
        self.binary.cols() + 1
    }

    pub fn num_binary_tags(&self) -> usize {
        self.binary.cols()
    }

    pub fn popularity_tag(&self) -> usize {
        self.binary.cols()
    }

    pub fn binary(&self) -> &SparseBinaryMatrix {
        &self.binary
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn category_of(&self, tag: usize) -> usize {
        self.tag_category[tag]
    }

    pub fn tag_category(&self) -> &[usize] {
        &self.tag_category
    }

    /// `(category, label)` of a tag, popularity included.
    pub fn tag(&self, tag: usize) -> (&str, &str) {
        if tag == self.popularity_tag() {
            (POPULARITY, POPULARITY)
        } else {
            let t = &self.vocabulary[tag];
            (&t.category, &t.label)
        }
    }

    /// Full vocabulary including the trailing popularity tag.
    pub fn vocabulary(&self) -> Vec<Tag> {
        (0..self.num_tags())
            .map(|t| {
                let (category, label) = self.tag(t);
                Tag {
                    category: category.to_owned(),
                    label: label.to_owned(),
                }
            })
            .collect()
    }

    /// Nonzero `(tag, value)` entries of an item's decoder row.
    pub fn item_entries(&self, item: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let pop = self.popularity[item];
        self.binary
            .row(item)
            .iter()
            .map(|&t| (t as usize, 1.0))
            .chain((pop != 0.0).then_some((self.popularity_tag(), pop)))
    }

    /// `⟨profile, D_item⟩`.
    pub fn item_score(&self, profile: &[f64], item: usize) -> f64 {
        self.item_entries(item).map(|(t, v)| profile[t] * v).sum()
    }

    /// Dense decoder `D = [S | popularity]`, `n × t`.
    pub fn decoder(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.num_items(), self.num_tags());
        for i in 0..self.num_items() {
            for (t, v) in self.item_entries(i) {
                d.set(i, t, v);
            }
        }
        d
    }
}

/// Items whose tag set is empty once infrequent tags are removed.
/// Items without any metadata record are an error.
pub fn tagless_items(
    metadata: &ItemMetadata,
    items: &IdIndex,
    config: &EncodingConfig,
) -> Result<Vec<String>> {
    let (per_item, kept) = surviving_tags(metadata, items, config)?;
    Ok(per_item
        .iter()
        .enumerate()
        .filter(|(_, tags)| !tags.iter().any(|t| kept.contains(t)))
        .map(|(i, _)| items.id(i).to_owned())
        .collect())
}

fn surviving_tags(
    metadata: &ItemMetadata,
    items: &IdIndex,
    config: &EncodingConfig,
) -> Result<(Vec<BTreeSet<Tag>>, BTreeSet<Tag>)> {
    config.validate()?;
    let missing: Vec<&str> = items
        .ids()
        .iter()
        .filter(|id| metadata.get(id).is_none())
        .map(String::as_str)
        .take(10)
        .collect();
    if !missing.is_empty() {
        return Err(Error::validation(format!(
            "items without a metadata record: {}",
            missing.join(", ")
        )));
    }
    let per_item: Vec<BTreeSet<Tag>> = items
        .ids()
        .iter()
        .map(|id| config.item_tags(id, metadata.get(id).unwrap_or_default()))
        .collect::<Result<_>>()?;
    let mut freq: BTreeMap<&Tag, usize> = BTreeMap::new();
    for tags in &per_item {
        for t in tags {
            *freq.entry(t).or_default() += 1;
        }
    }
    let kept = freq
        .into_iter()
        .filter(|(_, c)| *c >= config.min_tag_items)
        .map(|(t, _)| t.clone())
        .collect();
    Ok((per_item, kept))
}

/// One-hot encodes item metadata and appends the popularity column.
///
/// `item_counts[i]` is the number of interactions of item `i` (usually taken
/// from the training partition only); popularity is `count / max count`.
/// The vocabulary is ordered by category then label.
pub fn encode_tags(
    metadata: &ItemMetadata,
    items: &IdIndex,
    item_counts: &[usize],
    config: &EncodingConfig,
) -> Result<TagMatrix> {
    if item_counts.len() != items.len() {
        return Err(Error::validation(
            "item count vector length differs from item index",
        ));
    }
    let (per_item, kept) = surviving_tags(metadata, items, config)?;
    let vocabulary: Vec<Tag> = kept.into_iter().collect();
    let position: BTreeMap<&Tag, usize> =
        vocabulary.iter().enumerate().map(|(i, t)| (t, i)).collect();

    let rows: Vec<Vec<usize>> = per_item
        .iter()
        .map(|tags| {
            tags.iter()
                .filter_map(|t| position.get(t).copied())
                .collect()
        })
        .collect();
    let tagless: Vec<&str> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_empty())
        .map(|(i, _)| items.id(i))
        .collect();
    if !tagless.is_empty() {
        return Err(Error::validation(format!(
            "items with no tags after filtering: {}",
            tagless.join(", ")
        )));
    }
    let binary = SparseBinaryMatrix::from_rows(vocabulary.len(), rows)?;

    let max = item_counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::validation(
            "popularity undefined: no item has an interaction",
        ));
    }
    let popularity = item_counts.iter().map(|&c| c as f64 / max as f64).collect();
    TagMatrix::new(binary, popularity, vocabulary)
}
