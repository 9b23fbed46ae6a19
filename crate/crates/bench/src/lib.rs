//! Fixtures shared by the benchmarks.

use teaser_core::dataset::{prepare, EncodingConfig, PreparedDataset, SplitSpec};
use teaser_core::synthetic::{planted_preferences, PlantedConfig};

/// Planted-preference data with `items` items and `tags` tags.
pub fn planted(users: usize, items: usize, tags: usize) -> PreparedDataset {
    let data = planted_preferences(&PlantedConfig {
        users,
        items,
        tags,
        items_per_user: 20,
        seed: 1,
    })
    .expect("valid planted config");
    prepare(
        &data.interactions,
        &data.metadata,
        &EncodingConfig::default(),
        &SplitSpec::default(),
    )
    .expect("planted data prepares")
}
