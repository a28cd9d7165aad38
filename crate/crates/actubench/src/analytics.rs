//! Reporting statistics, all computed as pure functions of a frozen
//! snapshot: leaderboard, per-sector accuracy, the cost-accuracy Pareto
//! front, rank correlations with tie handling, Wilson intervals, paired
//! thinking-variant deltas and verifier/repair rates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::adapter::ModelRegistry;
use crate::domain::{ItemId, ModelVariant, Sector};
use crate::money::Usd;
use crate::pipeline::StageKind;
use crate::selection::excluded_models;
use crate::store::{RecordBody, Snapshot};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("run {0:?} not found in snapshot")]
    UnknownRun(String),
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooFewObservations,
    #[error("correlation undefined: an input has no rank variation")]
    Degenerate,
    #[error("invalid successes/trials: k={k}, n={n}")]
    InvalidKN { k: u64, n: u64 },
    #[error("the two runs share no included models")]
    NoCommonModels,
}

// ---------------------------------------------------------------------------
// Leaderboard
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model_key: String,
    pub mcq_accuracy: f64,
    pub judge_accuracy: Option<f64>,
    pub total_cost_usd: Usd,
    pub variant: Option<ModelVariant>,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_reason: Option<String>,
}

/// Accuracy-descending, cost-ascending leaderboard for one MCQ run, with
/// judge accuracies merged in where a judge run is given. Models whose MCQ
/// answers are all unparseable are marked excluded and sorted to the end.
pub fn leaderboard(
    snapshot: &Snapshot,
    mcq_run_id: &str,
    judge_run_id: Option<&str>,
    registry: &ModelRegistry,
) -> Result<Vec<LeaderboardRow>, AnalyticsError> {
    let mcq: Vec<_> = snapshot
        .mcq_answers()
        .filter(|r| r.run_id == mcq_run_id)
        .cloned()
        .collect();
    if mcq.is_empty() {
        return Err(AnalyticsError::UnknownRun(mcq_run_id.to_string()));
    }
    let excluded = excluded_models(&mcq);

    let mut judge_acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    if let Some(jr) = judge_run_id {
        for row in snapshot.judge_answers().filter(|r| r.run_id == jr) {
            let entry = judge_acc.entry(row.model_key.clone()).or_default();
            entry.0 += 1;
            if row.correct {
                entry.1 += 1;
            }
        }
    }

    let mut per_model: BTreeMap<String, (usize, usize, Usd)> = BTreeMap::new();
    for row in &mcq {
        let entry = per_model.entry(row.model_key.clone()).or_default();
        entry.0 += 1;
        if row.correct {
            entry.1 += 1;
        }
        entry.2 += row.cost_usd;
    }
    if let Some(jr) = judge_run_id {
        for row in snapshot.judge_answers().filter(|r| r.run_id == jr) {
            if let Some(entry) = per_model.get_mut(&row.model_key) {
                entry.2 += row.cost_usd;
            }
        }
    }

    let mut rows: Vec<LeaderboardRow> = per_model
        .into_iter()
        .map(|(model_key, (total, correct, cost))| {
            let is_excluded = excluded.contains(&model_key);
            LeaderboardRow {
                mcq_accuracy: correct as f64 / total as f64,
                judge_accuracy: judge_acc
                    .get(&model_key)
                    .map(|(t, c)| *c as f64 / *t as f64),
                total_cost_usd: cost,
                variant: registry.get(&model_key).ok().map(|s| s.variant),
                excluded: is_excluded,
                exclusion_reason: is_excluded
                    .then(|| "all answers unparseable".to_string()),
                model_key,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.excluded
            .cmp(&b.excluded)
            .then(b.mcq_accuracy.partial_cmp(&a.mcq_accuracy).unwrap())
            .then(a.total_cost_usd.cmp(&b.total_cost_usd))
            .then(a.model_key.cmp(&b.model_key))
    });
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Sector accuracy
// ---------------------------------------------------------------------------

/// Per-sector (item count, mean accuracy). Multi-label: an item counts
/// toward every sector it carries; the mean pools all included models'
/// answers on that sector's items.
pub fn sector_accuracy(
    snapshot: &Snapshot,
    mcq_run_id: &str,
) -> BTreeMap<Sector, (usize, f64)> {
    let mcq: Vec<_> = snapshot
        .mcq_answers()
        .filter(|r| r.run_id == mcq_run_id)
        .cloned()
        .collect();
    let excluded = excluded_models(&mcq);
    let labels: BTreeMap<ItemId, BTreeSet<Sector>> = snapshot
        .items()
        .map(|i| (i.item_id, i.sector_labels.clone()))
        .collect();

    let mut item_counts: BTreeMap<Sector, BTreeSet<ItemId>> = BTreeMap::new();
    let mut tallies: BTreeMap<Sector, (usize, usize)> = BTreeMap::new();
    for row in &mcq {
        if excluded.contains(&row.model_key) {
            continue;
        }
        let Some(sectors) = labels.get(&row.item_id) else {
            continue;
        };
        for sector in sectors {
            item_counts.entry(*sector).or_default().insert(row.item_id);
            let entry = tallies.entry(*sector).or_default();
            entry.0 += 1;
            if row.correct {
                entry.1 += 1;
            }
        }
    }
    tallies
        .into_iter()
        .map(|(sector, (total, correct))| {
            (
                sector,
                (item_counts[&sector].len(), correct as f64 / total as f64),
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pareto front
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAccuracyPoint {
    pub model_key: String,
    pub cost_usd: Usd,
    pub accuracy: f64,
}

/// A point is dominated when another has cost <= and accuracy >= with at
/// least one strict. The front is every non-dominated point, in input
/// order.
pub fn pareto_front(points: &[CostAccuracyPoint]) -> Vec<CostAccuracyPoint> {
    points
        .iter()
        .filter(|p| {
            !points.iter().any(|q| {
                q.cost_usd <= p.cost_usd
                    && q.accuracy >= p.accuracy
                    && (q.cost_usd < p.cost_usd || q.accuracy > p.accuracy)
            })
        })
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// Rank correlations
// ---------------------------------------------------------------------------

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<(), AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooFewObservations);
    }
    let degenerate = |v: &[f64]| v.iter().all(|&e| e == v[0]);
    if degenerate(x) || degenerate(y) {
        return Err(AnalyticsError::Degenerate);
    }
    Ok(())
}

/// Spearman's rho: Pearson correlation of tie-averaged ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_lengths(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    // Exact poles: identical or exactly opposed rank vectors.
    if rx == ry {
        return Ok(1.0);
    }
    let top = rx.len() as f64 + 1.0;
    if rx.iter().zip(&ry).all(|(a, b)| *b == top - *a) {
        return Ok(-1.0);
    }
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..rx.len() {
        let a = rx[i] - mean;
        let b = ry[i] - mean;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    Ok(num / (dx.sqrt() * dy.sqrt()))
}

/// Kendall's tau-b: concordant minus discordant pairs, normalized with the
/// tie-corrected denominator.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    check_lengths(x, y)?;
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let sx = (x[i] - x[j]).partial_cmp(&0.0).unwrap();
            let sy = (y[i] - y[j]).partial_cmp(&0.0).unwrap();
            use std::cmp::Ordering::*;
            match (sx, sy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_x) as f64) * ((n0 - ties_y) as f64)).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

// ---------------------------------------------------------------------------
// Wilson interval
// ---------------------------------------------------------------------------

/// Wilson score interval for a binomial proportion; both ends clamped to
/// [0, 1] by construction.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> Result<(f64, f64), AnalyticsError> {
    if n == 0 || k > n {
        return Err(AnalyticsError::InvalidKN { k, n });
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let spread = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = ((center - spread) / denom).clamp(0.0, 1.0);
    let hi = ((center + spread) / denom).clamp(0.0, 1.0);
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// Paired thinking-variant deltas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantPair {
    pub base_model_key: String,
    pub acc_thinking: f64,
    pub acc_standard: f64,
    /// Thinking minus standard, in percentage points.
    pub delta_pp: f64,
    /// Thinking cost divided by standard cost; absent when the standard
    /// variant's cost is zero.
    pub cost_multiple: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDeltas {
    pub pairs: Vec<VariantPair>,
    pub mean_delta_pp: Option<f64>,
    /// Models whose sibling variant was absent from the run.
    pub unpaired: Vec<String>,
}

/// Compare each thinking variant against its standard-decoder sibling
/// (linked through the registry's base model key) within one MCQ run.
pub fn paired_variant_delta(
    snapshot: &Snapshot,
    mcq_run_id: &str,
    registry: &ModelRegistry,
) -> Result<PairedDeltas, AnalyticsError> {
    let rows = leaderboard(snapshot, mcq_run_id, None, registry)?;
    let included: Vec<&LeaderboardRow> = rows.iter().filter(|r| !r.excluded).collect();

    // base_model_key -> (thinking row, standard row)
    let mut groups: BTreeMap<String, (Option<&LeaderboardRow>, Option<&LeaderboardRow>)> =
        BTreeMap::new();
    for row in &included {
        let Ok(spec) = registry.get(&row.model_key) else {
            continue;
        };
        let slot = groups.entry(spec.base_model_key.clone()).or_default();
        match spec.variant {
            ModelVariant::Thinking => slot.0 = Some(row),
            _ => slot.1 = Some(row),
        }
    }

    let mut pairs = Vec::new();
    let mut unpaired = Vec::new();
    for (base, (thinking, standard)) in groups {
        match (thinking, standard) {
            (Some(t), Some(s)) => {
                let ratio = if s.total_cost_usd == Usd::ZERO {
                    None
                } else {
                    Some(
                        t.total_cost_usd.picodollars() as f64
                            / s.total_cost_usd.picodollars() as f64,
                    )
                };
                pairs.push(VariantPair {
                    base_model_key: base,
                    acc_thinking: t.mcq_accuracy,
                    acc_standard: s.mcq_accuracy,
                    delta_pp: (t.mcq_accuracy - s.mcq_accuracy) * 100.0,
                    cost_multiple: ratio,
                });
            }
            (Some(t), None) => unpaired.push(t.model_key.clone()),
            (None, Some(_)) | (None, None) => {}
        }
    }
    let mean_delta_pp = if pairs.is_empty() {
        None
    } else {
        Some(pairs.iter().map(|p| p.delta_pp).sum::<f64>() / pairs.len() as f64)
    };
    Ok(PairedDeltas {
        pairs,
        mean_delta_pp,
        unpaired,
    })
}

// ---------------------------------------------------------------------------
// Repair statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairStats {
    /// Items failing the first item verification / items reaching it.
    pub item_flag_rate: f64,
    pub distractor_flag_rate: f64,
    /// Rechecks passing / repairs attempted.
    pub item_repair_success_rate: f64,
    pub distractor_repair_success_rate: f64,
    /// Finished items carrying either failure flag / finished items.
    pub final_flag_rate: f64,
    /// Denominator convention for the flag rates: first-pass verifications
    /// only; rechecks are counted under repair success instead.
    pub flag_rate_denominator: &'static str,
}

fn rate(numerator: usize, denominator: usize) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

pub fn repair_stats(snapshot: &Snapshot) -> RepairStats {
    let verdict_ok = |payload: &serde_json::Value| -> bool {
        payload.get("ok").and_then(|v| v.as_bool()).unwrap_or(false)
    };
    let mut verify_item = (0usize, 0usize); // (seen, failed)
    let mut verify_distractors = (0usize, 0usize);
    let mut recheck_item = (0usize, 0usize); // (attempted, passed)
    let mut recheck_distractors = (0usize, 0usize);
    for ev in snapshot.stage_events() {
        match ev.stage {
            StageKind::VerifyItem => {
                verify_item.0 += 1;
                if !verdict_ok(&ev.payload) {
                    verify_item.1 += 1;
                }
            }
            StageKind::VerifyDistractors => {
                verify_distractors.0 += 1;
                if !verdict_ok(&ev.payload) {
                    verify_distractors.1 += 1;
                }
            }
            StageKind::RecheckItem => {
                recheck_item.0 += 1;
                if verdict_ok(&ev.payload) {
                    recheck_item.1 += 1;
                }
            }
            StageKind::RecheckDistractors => {
                recheck_distractors.0 += 1;
                if verdict_ok(&ev.payload) {
                    recheck_distractors.1 += 1;
                }
            }
            _ => {}
        }
    }
    let mut finished = 0usize;
    let mut flagged = 0usize;
    for item in snapshot.items() {
        finished += 1;
        if item.item_failure_flag || item.distractor_failure_flag {
            flagged += 1;
        }
    }
    RepairStats {
        item_flag_rate: rate(verify_item.1, verify_item.0),
        distractor_flag_rate: rate(verify_distractors.1, verify_distractors.0),
        item_repair_success_rate: rate(recheck_item.1, recheck_item.0),
        distractor_repair_success_rate: rate(recheck_distractors.1, recheck_distractors.0),
        final_flag_rate: rate(flagged, finished),
        flag_rate_denominator: "first-pass verifications only",
    }
}

// ---------------------------------------------------------------------------
// MCQ vs judge comparison
// ---------------------------------------------------------------------------

/// A correlation that may be undefined for degenerate inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correlation {
    Value { value: f64 },
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqJudgePair {
    pub model_key: String,
    pub mcq_accuracy: f64,
    pub judge_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqVsJudge {
    pub pairs: Vec<McqJudgePair>,
    pub spearman: Correlation,
    pub kendall: Correlation,
}

/// Inner-join per-model accuracies across the two benchmarks and
/// correlate; one common model (or flat accuracies) gives a degenerate
/// correlation, zero common models is an error.
pub fn mcq_vs_judge(
    snapshot: &Snapshot,
    mcq_run_id: &str,
    judge_run_id: &str,
) -> Result<McqVsJudge, AnalyticsError> {
    let mcq: Vec<_> = snapshot
        .mcq_answers()
        .filter(|r| r.run_id == mcq_run_id)
        .cloned()
        .collect();
    if mcq.is_empty() {
        return Err(AnalyticsError::UnknownRun(mcq_run_id.to_string()));
    }
    let excluded = excluded_models(&mcq);
    let mut mcq_acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for row in &mcq {
        if excluded.contains(&row.model_key) {
            continue;
        }
        let entry = mcq_acc.entry(row.model_key.clone()).or_default();
        entry.0 += 1;
        if row.correct {
            entry.1 += 1;
        }
    }
    let mut judge_acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut judge_seen = false;
    for row in snapshot.judge_answers().filter(|r| r.run_id == judge_run_id) {
        judge_seen = true;
        let entry = judge_acc.entry(row.model_key.clone()).or_default();
        entry.0 += 1;
        if row.correct {
            entry.1 += 1;
        }
    }
    if !judge_seen {
        return Err(AnalyticsError::UnknownRun(judge_run_id.to_string()));
    }
    let mut pairs = Vec::new();
    for (model, (mt, mc)) in &mcq_acc {
        if let Some((jt, jc)) = judge_acc.get(model) {
            pairs.push(McqJudgePair {
                model_key: model.clone(),
                mcq_accuracy: *mc as f64 / *mt as f64,
                judge_accuracy: *jc as f64 / *jt as f64,
            });
        }
    }
    if pairs.is_empty() {
        return Err(AnalyticsError::NoCommonModels);
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.mcq_accuracy).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.judge_accuracy).collect();
    let to_corr = |r: Result<f64, AnalyticsError>| match r {
        Ok(value) => Correlation::Value { value },
        Err(_) => Correlation::Degenerate,
    };
    Ok(McqVsJudge {
        spearman: to_corr(spearman_rho(&x, &y)),
        kendall: to_corr(kendall_tau(&x, &y)),
        pairs,
    })
}

// ---------------------------------------------------------------------------
// Formatting conventions
// ---------------------------------------------------------------------------

/// Percentages are reported to one decimal place.
pub fn format_pct(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

/// Costs are reported to four decimal places.
pub fn format_cost(cost: Usd) -> String {
    cost.to_fixed(4)
}

/// Count records belonging to one run id (manifests included), used to
/// verify a run exists before deeper queries.
pub fn run_record_count(snapshot: &Snapshot, run_id: &str) -> usize {
    snapshot
        .records()
        .iter()
        .filter(|r| match &r.body {
            RecordBody::McqAnswer(a) => a.run_id == run_id,
            RecordBody::JudgeAnswer(a) => a.run_id == run_id,
            RecordBody::RunManifest(m) => {
                m.get("run_id").and_then(|v| v.as_str()) == Some(run_id)
            }
            _ => false,
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::demo::{self, DemoScripts};
    use crate::domain::{BenchmarkAnswer, Extracted, JudgeAnswer, Letter, ShuffleMap, TokenUsage};
    use crate::store::StageStore;

    fn id(n: u64) -> ItemId {
        ItemId::from_words(1, n)
    }

    fn mcq_row(
        model: &str,
        item: ItemId,
        run: &str,
        correct: bool,
        unparseable: bool,
        cost: &str,
    ) -> BenchmarkAnswer {
        BenchmarkAnswer {
            model_key: model.into(),
            item_id: item,
            run_id: run.into(),
            shuffle_map: ShuffleMap::new(Letter::ALL).unwrap(),
            raw_response: String::new(),
            extracted: if unparseable {
                Extracted::Unparseable
            } else if correct {
                Extracted::A
            } else {
                Extracted::B
            },
            correct,
            usage: TokenUsage::default(),
            cost_usd: cost.parse().unwrap(),
            error_note: None,
        }
    }

    fn judge_row(model: &str, item: ItemId, run: &str, correct: bool) -> JudgeAnswer {
        JudgeAnswer {
            model_key: model.into(),
            item_id: item,
            run_id: run.into(),
            raw_response: String::new(),
            verdict: None,
            judge_parse_failure: !correct,
            correct,
            evaluatee_usage: TokenUsage::default(),
            judge_usage: TokenUsage::default(),
            evaluatee_cost_usd: Usd::ZERO,
            judge_cost_usd: Usd::ZERO,
            cost_usd: Usd::ZERO,
        }
    }

    fn freeze(store: &Arc<StageStore>) -> Snapshot {
        store.freeze().unwrap()
    }

    #[test]
    fn leaderboard_sorts_by_accuracy_then_cost_and_isolates_excluded() {
        let store = Arc::new(StageStore::in_memory());
        for i in 0..4u64 {
            store
                .append_mcq_answer(mcq_row("x/top", id(i), "r1", i < 4, false, "0.02"))
                .unwrap();
            store
                .append_mcq_answer(mcq_row("x/mid", id(i), "r1", i < 2, false, "0.01"))
                .unwrap();
            store
                .append_mcq_answer(mcq_row("x/tie", id(i), "r1", i < 2, false, "0.03"))
                .unwrap();
            store
                .append_mcq_answer(mcq_row("x/broken", id(i), "r1", false, true, "0.01"))
                .unwrap();
        }
        let registry = ModelRegistry::bundled();
        let rows = leaderboard(&freeze(&store), "r1", None, &registry).unwrap();
        let keys: Vec<&str> = rows.iter().map(|r| r.model_key.as_str()).collect();
        // Tie at 0.5 broken by lower cost; the excluded model comes last.
        assert_eq!(keys, vec!["x/top", "x/mid", "x/tie", "x/broken"]);
        assert!(rows[3].excluded);
        assert_eq!(rows[3].exclusion_reason.as_deref(), Some("all answers unparseable"));
        assert_eq!(rows[0].mcq_accuracy, 1.0);
        assert!(matches!(
            leaderboard(&freeze(&store), "missing", None, &registry),
            Err(AnalyticsError::UnknownRun(_))
        ));
    }

    #[test]
    fn leaderboard_merges_judge_accuracy_and_costs() {
        let store = Arc::new(StageStore::in_memory());
        store
            .append_mcq_answer(mcq_row("x/m", id(1), "r1", true, false, "0.50"))
            .unwrap();
        store.append_judge_answer(judge_row("x/m", id(2), "j1", false)).unwrap();
        store.append_judge_answer(judge_row("x/m", id(3), "j1", true)).unwrap();
        let registry = ModelRegistry::bundled();
        let rows = leaderboard(&freeze(&store), "r1", Some("j1"), &registry).unwrap();
        assert_eq!(rows[0].judge_accuracy, Some(0.5));
    }

    #[test]
    fn sector_accuracy_pools_multi_label_items() {
        let store = Arc::new(StageStore::in_memory());
        // One finished item labeled {life, non-life}; two models split.
        let pipeline = demo::build_pipeline(DemoScripts::happy(), 5, Arc::clone(&store));
        let mut run = pipeline.run_item(&demo::sample_objective(), 0).unwrap();
        run.item.sector_labels =
            [Sector::Life, Sector::NonLife].into_iter().collect();
        store.append_item(run.item.clone()).unwrap();
        store
            .append_mcq_answer(mcq_row("x/a", run.item.item_id, "r1", true, false, "0"))
            .unwrap();
        store
            .append_mcq_answer(mcq_row("x/b", run.item.item_id, "r1", false, false, "0"))
            .unwrap();
        let sectors = sector_accuracy(&freeze(&store), "r1");
        assert_eq!(sectors[&Sector::Life], (1, 0.5));
        assert_eq!(sectors[&Sector::NonLife], (1, 0.5));
        assert!(!sectors.contains_key(&Sector::Health));
    }

    #[test]
    fn single_sector_labeling_reduces_to_plain_accuracy() {
        let store = Arc::new(StageStore::in_memory());
        let pipeline = demo::build_pipeline(DemoScripts::happy(), 6, Arc::clone(&store));
        let item = pipeline.run_item(&demo::sample_objective(), 0).unwrap().item;
        assert_eq!(item.sector_labels.len(), 1); // demo labels: {life}
        for (i, correct) in [true, true, false].iter().enumerate() {
            store
                .append_mcq_answer(mcq_row(
                    &format!("x/m{i}"),
                    item.item_id,
                    "r1",
                    *correct,
                    false,
                    "0",
                ))
                .unwrap();
        }
        let sectors = sector_accuracy(&freeze(&store), "r1");
        let (count, acc) = sectors[&Sector::Life];
        assert_eq!(count, 1);
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }

    fn point(key: &str, cost: &str, accuracy: f64) -> CostAccuracyPoint {
        CostAccuracyPoint {
            model_key: key.into(),
            cost_usd: cost.parse().unwrap(),
            accuracy,
        }
    }

    #[test]
    fn pareto_front_drops_dominated_points() {
        let single = vec![point("a", "1.00", 0.9)];
        assert_eq!(pareto_front(&single), single);
        let two = vec![point("a", "1.00", 0.9), point("b", "2.00", 0.8)];
        assert_eq!(pareto_front(&two).len(), 1);
        assert_eq!(pareto_front(&two)[0].model_key, "a");
        // Equal points dominate nothing: both stay.
        let dup = vec![point("a", "1.00", 0.9), point("b", "1.00", 0.9)];
        assert_eq!(pareto_front(&dup).len(), 2);
        // Strictly better on one axis, equal on the other: dominated.
        let mixed = vec![point("a", "1.00", 0.9), point("b", "1.00", 0.8)];
        assert_eq!(pareto_front(&mixed).len(), 1);
    }

    #[test]
    fn spearman_hits_the_poles_and_the_tied_fixture() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert_eq!(spearman_rho(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman_rho(&x, &rev).unwrap(), -1.0);
        // Hand-computed tie-corrected value for this 6-point fixture.
        let tx = vec![1.0, 2.0, 2.0, 4.0, 5.0, 6.0];
        let ty = vec![2.0, 1.0, 3.0, 4.0, 6.0, 5.0];
        let rho = spearman_rho(&tx, &ty).unwrap();
        assert!((rho - 0.840_668).abs() < 1e-4, "{rho}");
        assert!(matches!(
            spearman_rho(&[1.0, 1.0], &[1.0, 2.0]),
            Err(AnalyticsError::Degenerate)
        ));
        assert!(matches!(
            spearman_rho(&[1.0], &[1.0]),
            Err(AnalyticsError::TooFewObservations)
        ));
        assert!(matches!(
            spearman_rho(&[1.0, 2.0], &[1.0]),
            Err(AnalyticsError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn kendall_tau_b_handles_ties() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let rev: Vec<f64> = x.iter().rev().cloned().collect();
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &rev).unwrap(), -1.0);
        // One discordant pair out of six.
        let y = vec![1.0, 3.0, 2.0, 4.0];
        assert!((kendall_tau(&x, &y).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        // Tie in y: n0=6, ties_y=1, C=5, D=0 -> 5/sqrt(6*5).
        let ty = vec![1.0, 2.0, 2.0, 4.0];
        let expected = 5.0 / (6.0f64 * 5.0).sqrt();
        assert!((kendall_tau(&x, &ty).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn wilson_landmarks_hold() {
        let (lo, hi) = wilson_interval(90, 100, 1.96).unwrap();
        let half_width = (hi - lo) / 2.0;
        assert!((half_width - 0.0596).abs() < 0.0015, "{half_width}");
        let (lo0, _) = wilson_interval(0, 10, 1.96).unwrap();
        assert_eq!(lo0, 0.0);
        let (lo10, hi10) = wilson_interval(10, 10, 1.96).unwrap();
        assert_eq!(hi10, 1.0);
        assert!((lo10 - 0.722).abs() < 0.01, "{lo10}");
        assert!(matches!(
            wilson_interval(5, 0, 1.96),
            Err(AnalyticsError::InvalidKN { .. })
        ));
        assert!(matches!(
            wilson_interval(11, 10, 1.96),
            Err(AnalyticsError::InvalidKN { .. })
        ));
        // Monotonicity in k at fixed n.
        let mut prev = 0.0;
        for k in 0..=20 {
            let (_, hi) = wilson_interval(k, 20, 1.96).unwrap();
            assert!(hi >= prev);
            prev = hi;
        }
    }

    #[test]
    fn paired_delta_reproduces_the_opus_style_pair() {
        let store = Arc::new(StageStore::in_memory());
        let thinking = "anthropic/claude-opus-4-6:thinking";
        let standard = "anthropic/claude-opus-4-6";
        for i in 0..100u64 {
            store
                .append_mcq_answer(mcq_row(thinking, id(i), "r1", i < 98, false, "0.047"))
                .unwrap();
            store
                .append_mcq_answer(mcq_row(standard, id(i), "r1", i < 85, false, "0.010"))
                .unwrap();
        }
        let registry = ModelRegistry::bundled();
        let deltas = paired_variant_delta(&freeze(&store), "r1", &registry).unwrap();
        assert_eq!(deltas.pairs.len(), 1);
        let pair = &deltas.pairs[0];
        assert_eq!(pair.base_model_key, "claude-opus-4-6");
        assert!((pair.delta_pp - 13.0).abs() < 1e-9);
        assert!((pair.cost_multiple.unwrap() - 4.7).abs() < 1e-9);
        assert_eq!(deltas.mean_delta_pp, Some(pair.delta_pp));
    }

    #[test]
    fn unpaired_thinking_models_are_noted_not_paired() {
        let store = Arc::new(StageStore::in_memory());
        store
            .append_mcq_answer(mcq_row(
                "anthropic/claude-opus-4-6:thinking",
                id(1),
                "r1",
                true,
                false,
                "0.01",
            ))
            .unwrap();
        let registry = ModelRegistry::bundled();
        let deltas = paired_variant_delta(&freeze(&store), "r1", &registry).unwrap();
        assert!(deltas.pairs.is_empty());
        assert_eq!(deltas.unpaired, vec!["anthropic/claude-opus-4-6:thinking"]);
        assert_eq!(deltas.mean_delta_pp, None);
    }

    #[test]
    fn repair_stats_match_the_scripted_batch_arithmetic() {
        let store = Arc::new(StageStore::in_memory());
        // 10 items: 6 first-pass item failures, 4 of those 6 rechecks pass.
        let mut run_index = 0u64;
        let mut go = |scripts: DemoScripts| {
            let pipeline = demo::build_pipeline(scripts, 11, Arc::clone(&store));
            pipeline
                .run_item(&demo::sample_objective(), run_index)
                .unwrap();
            run_index += 1;
        };
        for _ in 0..4 {
            go(DemoScripts::happy());
        }
        for _ in 0..4 {
            go(DemoScripts::item_repair(true));
        }
        for _ in 0..2 {
            go(DemoScripts::item_repair(false));
        }
        let stats = repair_stats(&freeze(&store));
        assert!((stats.item_flag_rate - 0.600).abs() < 1e-12);
        assert!((stats.item_repair_success_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((stats.final_flag_rate - 0.200).abs() < 1e-12);
        assert_eq!(stats.distractor_flag_rate, 0.0);
        assert_eq!(stats.distractor_repair_success_rate, 0.0);
    }

    #[test]
    fn all_ok_batches_have_zero_flag_rates() {
        let store = Arc::new(StageStore::in_memory());
        for i in 0..3 {
            let pipeline =
                demo::build_pipeline(DemoScripts::happy(), 11, Arc::clone(&store));
            pipeline.run_item(&demo::sample_objective(), i).unwrap();
        }
        let stats = repair_stats(&freeze(&store));
        assert_eq!(stats.item_flag_rate, 0.0);
        assert_eq!(stats.final_flag_rate, 0.0);
    }

    #[test]
    fn mcq_vs_judge_joins_and_signals_degenerate_cases() {
        let store = Arc::new(StageStore::in_memory());
        for (model, mcq_correct, judge_correct) in [
            ("x/a", true, false),
            ("x/b", false, true),
        ] {
            store
                .append_mcq_answer(mcq_row(model, id(1), "r1", mcq_correct, false, "0"))
                .unwrap();
            store.append_judge_answer(judge_row(model, id(2), "j1", judge_correct)).unwrap();
        }
        let out = mcq_vs_judge(&freeze(&store), "r1", "j1").unwrap();
        assert_eq!(out.pairs.len(), 2);
        assert!(matches!(out.spearman, Correlation::Value { .. }));

        // One common model -> degenerate correlations, not an error.
        let store2 = Arc::new(StageStore::in_memory());
        store2
            .append_mcq_answer(mcq_row("x/a", id(1), "r1", true, false, "0"))
            .unwrap();
        store2.append_judge_answer(judge_row("x/a", id(2), "j1", true)).unwrap();
        let out2 = mcq_vs_judge(&freeze(&store2), "r1", "j1").unwrap();
        assert_eq!(out2.spearman, Correlation::Degenerate);

        // Disjoint model sets -> error.
        let store3 = Arc::new(StageStore::in_memory());
        store3
            .append_mcq_answer(mcq_row("x/a", id(1), "r1", true, false, "0"))
            .unwrap();
        store3.append_judge_answer(judge_row("x/zzz", id(2), "j1", true)).unwrap();
        assert!(matches!(
            mcq_vs_judge(&freeze(&store3), "r1", "j1"),
            Err(AnalyticsError::NoCommonModels)
        ));
    }

    #[test]
    fn formatting_conventions_are_fixed() {
        assert_eq!(format_pct(0.8406), "84.1");
        assert_eq!(format_pct(1.0), "100.0");
        assert_eq!(format_cost("1.23456".parse().unwrap()), "1.2346");
        assert_eq!(format_cost(Usd::ZERO), "0.0000");
    }
}
