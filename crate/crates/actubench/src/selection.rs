//! Evaluation-pool construction: rank items by collective accuracy across
//! models and keep the empirically-hardest N.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{AssessmentItem, BenchmarkAnswer, DifficultyArchetype, Extracted, ItemId};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SelectionError {
    #[error("item {0} has no answers from any included model")]
    EmptyColumn(ItemId),
    #[error("requested {requested} items from a pool of {available}")]
    NTooLarge { requested: usize, available: usize },
    #[error("no item accuracies to select from")]
    Empty,
}

/// Models whose answers are entirely unparseable are excluded from
/// collective accuracy, mirroring their exclusion from the main tables.
pub fn excluded_models(answers: &[BenchmarkAnswer]) -> BTreeSet<String> {
    let mut by_model: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for row in answers {
        let entry = by_model.entry(&row.model_key).or_default();
        entry.0 += 1;
        if row.extracted == Extracted::Unparseable {
            entry.1 += 1;
        }
    }
    by_model
        .into_iter()
        .filter(|(_, (total, unparseable))| total == unparseable)
        .map(|(model, _)| model.to_string())
        .collect()
}

/// Mean correctness of each item across the models that answered it,
/// equal-weighted over included (not all-unparseable) models.
pub fn collective_accuracy(
    answers: &[BenchmarkAnswer],
) -> Result<BTreeMap<ItemId, f64>, SelectionError> {
    let excluded = excluded_models(answers);
    let mut tallies: BTreeMap<ItemId, (usize, usize)> = BTreeMap::new();
    for row in answers {
        if excluded.contains(&row.model_key) {
            continue;
        }
        let entry = tallies.entry(row.item_id).or_default();
        entry.0 += 1;
        if row.correct {
            entry.1 += 1;
        }
    }
    // An item only every excluded model saw has no usable answers.
    for row in answers {
        if !tallies.contains_key(&row.item_id) {
            return Err(SelectionError::EmptyColumn(row.item_id));
        }
    }
    Ok(tallies
        .into_iter()
        .map(|(item, (total, correct))| (item, correct as f64 / total as f64))
        .collect())
}

/// The n items with lowest collective accuracy, ascending; ties broken by
/// ascending item id so the cut is deterministic.
pub fn select_hardest(
    accuracies: &BTreeMap<ItemId, f64>,
    n: usize,
) -> Result<Vec<ItemId>, SelectionError> {
    if n > accuracies.len() {
        return Err(SelectionError::NTooLarge {
            requested: n,
            available: accuracies.len(),
        });
    }
    let mut ranked: Vec<(ItemId, f64)> = accuracies.iter().map(|(k, v)| (*k, *v)).collect();
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(n).map(|(id, _)| id).collect())
}

pub fn archetype_histogram(items: &[AssessmentItem]) -> BTreeMap<DifficultyArchetype, usize> {
    let mut counts: BTreeMap<DifficultyArchetype, usize> = BTreeMap::new();
    for archetype in DifficultyArchetype::ALL {
        counts.insert(archetype, 0);
    }
    for item in items {
        *counts.get_mut(&item.archetype).unwrap() += 1;
    }
    counts
}

pub fn accuracy_range(
    accuracies: &BTreeMap<ItemId, f64>,
) -> Result<(f64, f64), SelectionError> {
    if accuracies.is_empty() {
        return Err(SelectionError::Empty);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for acc in accuracies.values() {
        lo = lo.min(*acc);
        hi = hi.max(*acc);
    }
    Ok((lo, hi))
}

/// Replayable record of one selection: input snapshot, size, tie rule and
/// the chosen ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub snapshot_id: String,
    pub n: usize,
    pub tie_break: String,
    pub selected: Vec<ItemId>,
}

impl SelectionManifest {
    pub fn new(snapshot_id: impl Into<String>, n: usize, selected: Vec<ItemId>) -> Self {
        SelectionManifest {
            snapshot_id: snapshot_id.into(),
            n,
            tie_break: "ascending-item-id".into(),
            selected,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!(self)
    }
}
