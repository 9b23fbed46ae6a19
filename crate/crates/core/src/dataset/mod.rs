//! Interaction and metadata ingestion, tag encoding and user splits.

mod ingest;
mod split;
mod tags;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::warn;

pub use ingest::{
    load_interactions, load_metadata, read_interactions, read_metadata, IdIndex,
    InteractionDataset, ItemMetadata,
};
pub use split::{split_strong_generalization, EvalUser, EvaluationSplit, Split, SplitSpec};
pub use tags::{encode_tags, tagless_items, EncodingConfig, Tag, TagMatrix, POPULARITY};

use crate::error::{Error, Result};

const DATASET_FORMAT: &str = "teaser-dataset/1";

/// Everything downstream commands need: id mappings, the split, the tag
/// matrix and per-item display fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub format: String,
    pub users: IdIndex,
    pub items: IdIndex,
    pub split: Split,
    pub tags: TagMatrix,
    /// Display-only fields per item, e.g. title and description.
    pub display: Vec<BTreeMap<String, String>>,
    pub split_spec: SplitSpec,
    pub encoding: EncodingConfig,
    /// Items removed because no tag survived filtering.
    pub dropped_items: Vec<String>,
}

/// Drops tagless items, splits users, then encodes tags with popularity
/// counted on training users only.
pub fn prepare(
    interactions: &InteractionDataset,
    metadata: &ItemMetadata,
    encoding: &EncodingConfig,
    split_spec: &SplitSpec,
) -> Result<PreparedDataset> {
    let dropped = tagless_items(metadata, &interactions.items, encoding)?;
    let owned;
    let ds = if dropped.is_empty() {
        interactions
    } else {
        warn!(
            count = dropped.len(),
            first = %dropped[0],
            "dropping items left without tags after filtering"
        );
        owned = interactions.without_items(&dropped)?;
        &owned
    };

    let split = split_strong_generalization(ds, split_spec)?;
    let counts = split.train.column_counts();
    let tags = encode_tags(metadata, &ds.items, &counts, encoding)?;
    let display = ds
        .items
        .ids()
        .iter()
        .map(|id| {
            encoding
                .display_fields
                .iter()
                .filter_map(|f| metadata.field(id, f).map(|v| (f.clone(), v.to_owned())))
                .collect()
        })
        .collect();

    Ok(PreparedDataset {
        format: DATASET_FORMAT.to_owned(),
        users: ds.users.clone(),
        items: ds.items.clone(),
        split,
        tags,
        display,
        split_spec: split_spec.clone(),
        encoding: encoding.clone(),
        dropped_items: dropped,
    })
}

impl PreparedDataset {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let ds: PreparedDataset = serde_json::from_slice(bytes)?;
        if ds.format != DATASET_FORMAT {
            return Err(Error::Format(format!(
                "unsupported dataset format `{}`",
                ds.format
            )));
        }
        if ds.tags.num_items() != ds.items.len() || ds.split.train.cols() != ds.items.len() {
            return Err(Error::Format("dataset item counts disagree".into()));
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Display title of an item, falling back to its id.
    pub fn title(&self, item: usize) -> &str {
        self.display[item]
            .get("title")
            .map_or_else(|| self.items.id(item), String::as_str)
    }
}
