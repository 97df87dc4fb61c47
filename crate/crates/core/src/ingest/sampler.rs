use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::DatabaseId;
use crate::{Error, Result};

/// Draws batch items by first choosing a database by weight, then an item
/// uniformly within it.
#[derive(Clone, Debug)]
pub struct MixtureSampler<I> {
    databases: Vec<DatabaseId>,
    weights: Vec<f64>,
    items: Vec<Vec<I>>,
    index: WeightedIndex<f64>,
}

impl<I: Clone> MixtureSampler<I> {
    /// Weights are normalized to sum to one. Every database with positive
    /// weight must have at least one item.
    pub fn new(weights: &[(DatabaseId, f64)], mut items: BTreeMap<DatabaseId, Vec<I>>) -> Result<Self> {
        let total: f64 = weights.iter().map(|&(_, w)| w).sum();
        if weights.is_empty() || !(total > 0.0) || weights.iter().any(|&(_, w)| !(w >= 0.0)) {
            return Err(Error::Config("mixture weights must be non-negative with a positive sum".into()));
        }
        let mut databases = Vec::new();
        let mut norm = Vec::new();
        let mut pools = Vec::new();
        for &(db, w) in weights {
            if w == 0.0 {
                continue;
            }
            let pool = items.remove(&db).unwrap_or_default();
            if pool.is_empty() {
                return Err(Error::EmptyDatabase(db.to_string()));
            }
            databases.push(db);
            norm.push(w / total);
            pools.push(pool);
        }
        let index = WeightedIndex::new(&norm).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            databases,
            weights: norm,
            items: pools,
            index,
        })
    }

    /// Uses the published corpus ratios for every database present in
    /// `items`; synthetic data gets weight one.
    pub fn with_corpus_weights(items: BTreeMap<DatabaseId, Vec<I>>) -> Result<Self> {
        let weights: Vec<(DatabaseId, f64)> = items
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(&db, _)| (db, db.mixture_weight().unwrap_or(1.0)))
            .collect();
        Self::new(&weights, items)
    }

    pub fn databases(&self) -> &[DatabaseId] {
        &self.databases
    }

    /// Normalized weight per database, aligned with [`Self::databases`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample_database<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DatabaseId, &I) {
        let d = self.sample_database(rng);
        let pool = &self.items[d];
        (self.databases[d], &pool[rng.random_range(0..pool.len())])
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<I> {
        (0..size).map(|_| self.sample(rng).1.clone()).collect()
    }
}
