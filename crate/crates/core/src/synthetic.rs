//! Planted-preference synthetic data.
//!
//! Item `i` carries tag `i mod tags` plus one uniformly drawn tag. Every
//! user prefers two distinct tags and consumes items drawn uniformly from
//! those carrying either preferred tag.

use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, ItemMetadata};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub tags: usize,
    pub items_per_user: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            users: 200,
            items: 100,
            tags: 20,
            items_per_user: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedData {
    pub interactions: InteractionDataset,
    pub metadata: ItemMetadata,
    /// Preferred tag pair of every user, by user row.
    pub preferred: Vec<[usize; 2]>,
}

/// Category holding the planted tags.
pub const TOPIC: &str = "topic";

pub fn item_id(i: usize) -> String {
    format!("item{i:04}")
}

pub fn user_id(u: usize) -> String {
    format!("user{u:04}")
}

pub fn tag_label(t: usize) -> String {
    format!("t{t:02}")
}

pub fn planted_preferences(cfg: &PlantedConfig) -> Result<PlantedData> {
    if cfg.tags < 2 || cfg.items < cfg.tags || cfg.users == 0 || cfg.items_per_user == 0 {
        return Err(Error::validation(
            "planted data needs ≥ 2 tags, items ≥ tags, and at least one user and item per user",
        ));
    }
    let mut rng = rng::stream(cfg.seed, &[7]);
    let item_tags: Vec<Vec<usize>> = (0..cfg.items)
        .map(|i| {
            let mut t = vec![i % cfg.tags, rng.random_range(0..cfg.tags)];
            t.sort_unstable();
            t.dedup();
            t
        })
        .collect();

    let mut metadata = ItemMetadata::default();
    for (i, tags) in item_tags.iter().enumerate() {
        let id = item_id(i);
        metadata.insert(&id, "title", &format!("Item {i}"));
        for &t in tags {
            metadata.insert(&id, TOPIC, &tag_label(t));
        }
    }

    let all_tags: Vec<usize> = (0..cfg.tags).collect();
    let users: Vec<String> = (0..cfg.users).map(user_id).collect();
    let items: Vec<String> = (0..cfg.items).map(item_id).collect();
    let mut pairs = Vec::with_capacity(cfg.users * cfg.items_per_user);
    let mut preferred = Vec::with_capacity(cfg.users);
    for user in &users {
        let pick: Vec<usize> = all_tags.choose_multiple(&mut rng, 2).copied().collect();
        let pair = [pick[0], pick[1]];
        let mut candidates: Vec<usize> = (0..cfg.items)
            .filter(|&i| item_tags[i].iter().any(|t| pair.contains(t)))
            .collect();
        candidates.shuffle(&mut rng);
        candidates.truncate(cfg.items_per_user);
        for i in candidates {
            pairs.push((user.as_str(), items[i].as_str()));
        }
        preferred.push(pair);
    }
    Ok(PlantedData {
        interactions: InteractionDataset::from_pairs(pairs)?,
        metadata,
        preferred,
    })
}

impl PlantedData {
    /// Writes `user_id,item_id` rows.
    pub fn write_interactions<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "user_id,item_id")?;
        let ds = &self.interactions;
        for u in 0..ds.num_users() {
            for &i in ds.matrix.row(u) {
                writeln!(out, "{},{}", ds.users.id(u), ds.items.id(i as usize))?;
            }
        }
        Ok(())
    }

    /// Writes `item_id,category,value` rows.
    pub fn write_metadata<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item_id,category,value")?;
        for (id, records) in self.metadata.iter() {
            for (category, value) in records {
                writeln!(out, "{id},{category},{value}")?;
            }
        }
        Ok(())
    }
}
