//! The item-generation state machine.
//!
//! Drives Agents A (keywords, drafting, repair), B (distractors, repair),
//! C (two verification stages) and the auxiliary agent (wiki notes, topic
//! labels) through a fixed stage sequence. Each verification stage admits at
//! most one repair plus one recheck; a failing recheck sets the
//! corresponding failure flag and the item continues. Every stage's output
//! is appended to the stage store before the next stage starts.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterBinding, AdapterError, ChatRequest, Role};
use crate::domain::{
    AssessmentItem, DifficultyArchetype, Distractor, ItemDraft, ItemId, KeywordSpec,
    LearningObjective, Sector, TokenUsage, Verdict, WikiNotes,
};
use crate::money::Usd;
use crate::prompts::{self, Template};
use crate::rng::SplitMix64;
use crate::store::{AbortRecord, NewStageEvent, StageStore, StoreError};
use crate::wiki::{WikiClient, WikiError, WikiExtract};

/// Default output budget for generation-stage calls.
const GENERATION_MAX_OUTPUT_TOKENS: u64 = 4_096;

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// The pipeline stages in their canonical order. Within one item run each
/// stage appears at most once.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Keywords,
    WikiFetch,
    WikiNotes,
    ItemDraft,
    VerifyItem,
    RepairItem,
    RecheckItem,
    Distractors,
    VerifyDistractors,
    RepairDistractors,
    RecheckDistractors,
    TopicLabels,
}

impl StageKind {
    /// The no-repair path, top to bottom.
    pub const HAPPY_PATH: [StageKind; 8] = [
        StageKind::Keywords,
        StageKind::WikiFetch,
        StageKind::WikiNotes,
        StageKind::ItemDraft,
        StageKind::VerifyItem,
        StageKind::Distractors,
        StageKind::VerifyDistractors,
        StageKind::TopicLabels,
    ];

    /// Legal successor relation: primary-flow edges plus the repair
    /// branches taken on verification failure.
    pub fn is_legal_successor(self, next: StageKind) -> bool {
        use StageKind::*;
        matches!(
            (self, next),
            (Keywords, WikiFetch)
                | (WikiFetch, WikiNotes)
                | (WikiNotes, ItemDraft)
                | (ItemDraft, VerifyItem)
                | (VerifyItem, Distractors)
                | (VerifyItem, RepairItem)
                | (RepairItem, RecheckItem)
                | (RecheckItem, Distractors)
                | (Distractors, VerifyDistractors)
                | (VerifyDistractors, TopicLabels)
                | (VerifyDistractors, RepairDistractors)
                | (RepairDistractors, RecheckDistractors)
                | (RecheckDistractors, TopicLabels)
        )
    }
}

/// Check that every adjacent pair in a trace is a legal edge starting from
/// the keyword stage.
pub fn trace_is_legal(trace: &[StageKind]) -> bool {
    if trace.first() != Some(&StageKind::Keywords) {
        return false;
    }
    trace.windows(2).all(|w| w[0].is_legal_successor(w[1]))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Sampling weights over the five hard archetypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeWeights(pub BTreeMap<DifficultyArchetype, f64>);

impl Default for ArchetypeWeights {
    /// Favor quantitative calculation 4:1 over each other archetype.
    fn default() -> Self {
        let mut weights = BTreeMap::new();
        for archetype in DifficultyArchetype::ALL {
            weights.insert(archetype, 1.0);
        }
        weights.insert(DifficultyArchetype::QuantitativeCalculation, 4.0);
        ArchetypeWeights(weights)
    }
}

impl ArchetypeWeights {
    pub fn validate(&self) -> Result<(), String> {
        let mut sum = 0.0;
        for (archetype, w) in &self.0 {
            if *w < 0.0 {
                return Err(format!("negative weight for {}", archetype.as_str()));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err("archetype weights must sum to a positive value".into());
        }
        Ok(())
    }
}

/// Run configuration: one binding per agent role, sampling weights, seed,
/// wiki limits.
#[derive(Clone)]
pub struct PipelineConfig {
    pub bindings: BTreeMap<Role, AdapterBinding>,
    pub archetype_weights: ArchetypeWeights,
    pub rng_seed: u64,
    pub wiki_per_query_limit: usize,
}

impl PipelineConfig {
    pub fn binding(&self, role: Role) -> Result<&AdapterBinding, PipelineError> {
        self.bindings
            .get(&role)
            .ok_or(PipelineError::MissingBinding(role))
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no adapter bound for role {0:?}")]
    MissingBinding(Role),
    #[error("adapter failure: {0}")]
    Adapter(#[from] AdapterError),
    #[error("wiki retrieval failure: {0}")]
    Wiki(#[from] WikiError),
    #[error("store failure: {0}")]
    Store(#[from] StoreError),
    #[error("parse failure at {stage:?}: {reason}")]
    ParseFailure { stage: StageKind, reason: String },
    #[error("fact cites unknown title {0:?}")]
    ProvenanceViolation(String),
    #[error("{issue:?} is not a valid issue type for {stage:?}")]
    WrongIssueType {
        stage: StageKind,
        issue: crate::domain::IssueType,
    },
    #[error("expected exactly 3 distractors, got {0}")]
    WrongDistractorCount(usize),
    #[error("unknown sector label {0:?}")]
    UnknownLabel(String),
    #[error("state machine violation: {0}")]
    StateMachineViolation(String),
    #[error("no extracts to summarize")]
    NoExtracts,
    #[error("repair requires a failing verdict")]
    RepairWithoutFailure,
    #[error("item run aborted at {stage:?}: {reason}")]
    Aborted { stage: StageKind, reason: String },
}

// ---------------------------------------------------------------------------
// Archetype sampling
// ---------------------------------------------------------------------------

/// Draw one archetype proportionally to the configured weights.
pub fn sample_archetype(
    weights: &ArchetypeWeights,
    rng: &mut SplitMix64,
) -> DifficultyArchetype {
    let ordered: Vec<(DifficultyArchetype, f64)> = DifficultyArchetype::ALL
        .iter()
        .map(|a| (*a, weights.0.get(a).copied().unwrap_or(0.0)))
        .collect();
    let ws: Vec<f64> = ordered.iter().map(|(_, w)| *w).collect();
    ordered[rng.weighted_index(&ws)].0
}

// ---------------------------------------------------------------------------
// Agent calls
// ---------------------------------------------------------------------------

/// Output of one agent stage: the parsed value plus the usage and cost it
/// took to obtain it (summed over the single allowed format retry).
#[derive(Debug, Clone)]
pub struct StageOutput<T> {
    pub value: T,
    pub usage: TokenUsage,
    pub cost_usd: Usd,
    pub template_hash: String,
}

fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        if let Some(end) = rest.rfind("```") {
            return rest[..end].trim();
        }
    }
    trimmed
}

/// Call an agent and parse its JSON reply. A malformed reply is retried
/// once with a terse valid-JSON nudge; the retry is a sub-attempt, not a
/// stage, and its usage is folded into the stage output. If the retry call
/// itself fails the original parse failure is surfaced.
fn call_and_parse<T: serde::de::DeserializeOwned>(
    binding: &AdapterBinding,
    template: &Template,
    vars: &BTreeMap<&str, String>,
    stage: StageKind,
) -> Result<StageOutput<T>, PipelineError> {
    let system = "You are a precise assistant for actuarial assessment construction. Reply with JSON only.";
    let user = template.render(vars);
    let req = ChatRequest::new(system, &user, GENERATION_MAX_OUTPUT_TOKENS);
    let first = binding.complete(&req)?;
    let mut usage = first.usage;
    let first_err = match serde_json::from_str::<T>(strip_code_fences(&first.text)) {
        Ok(value) => {
            let (cost, _) = crate::adapter::compute_cost_or_zero(usage, &binding.model);
            return Ok(StageOutput {
                value,
                usage,
                cost_usd: cost,
                template_hash: template.hash(),
            });
        }
        Err(e) => e.to_string(),
    };
    let retry_req = ChatRequest::new(
        system,
        format!("{user}\n\n{}", prompts::JSON_RETRY_NUDGE),
        GENERATION_MAX_OUTPUT_TOKENS,
    );
    match binding.complete(&retry_req) {
        Ok(second) => {
            usage.tokens_in += second.usage.tokens_in;
            usage.tokens_out += second.usage.tokens_out;
            match serde_json::from_str::<T>(strip_code_fences(&second.text)) {
                Ok(value) => {
                    let (cost, _) = crate::adapter::compute_cost_or_zero(usage, &binding.model);
                    Ok(StageOutput {
                        value,
                        usage,
                        cost_usd: cost,
                        template_hash: template.hash(),
                    })
                }
                Err(e) => Err(PipelineError::ParseFailure {
                    stage,
                    reason: e.to_string(),
                }),
            }
        }
        Err(_) => Err(PipelineError::ParseFailure {
            stage,
            reason: first_err,
        }),
    }
}

fn objective_vars(objective: &LearningObjective) -> BTreeMap<&'static str, String> {
    let mut vars = BTreeMap::new();
    vars.insert("code", objective.code.clone());
    vars.insert("description", objective.description.clone());
    vars.insert("subject", objective.subject.clone());
    vars.insert("topic", objective.topic.clone());
    vars
}

fn notes_text(notes: &WikiNotes) -> String {
    notes
        .facts
        .iter()
        .map(|f| format!("- {} [{}]: {}", f.name, f.provenance, f.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn distractors_text(distractors: &[Distractor]) -> String {
    distractors
        .iter()
        .enumerate()
        .map(|(i, d)| {
            format!(
                "{}. {} (probes: {})",
                i + 1,
                d.text,
                d.misconception_rationale
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Agent A: keyword extraction. No repair branch exists for this stage.
pub fn extract_keywords(
    agent_a: &AdapterBinding,
    objective: &LearningObjective,
) -> Result<StageOutput<KeywordSpec>, PipelineError> {
    call_and_parse(
        agent_a,
        &prompts::KEYWORDS,
        &objective_vars(objective),
        StageKind::Keywords,
    )
}

/// Auxiliary agent: condense extracts into named facts. Every fact must
/// cite one of the input titles.
pub fn summarize_notes(
    auxiliary: &AdapterBinding,
    extracts: &[WikiExtract],
) -> Result<StageOutput<WikiNotes>, PipelineError> {
    if extracts.is_empty() {
        return Err(PipelineError::NoExtracts);
    }
    let titles: BTreeSet<&str> = extracts.iter().map(|e| e.title.as_str()).collect();
    let mut vars = BTreeMap::new();
    vars.insert(
        "extracts",
        extracts
            .iter()
            .map(|e| format!("### {}\n{}", e.title, e.extract_text))
            .collect::<Vec<_>>()
            .join("\n\n"),
    );
    let out: StageOutput<WikiNotes> =
        call_and_parse(auxiliary, &prompts::WIKI_NOTES, &vars, StageKind::WikiNotes)?;
    for fact in &out.value.facts {
        if !titles.contains(fact.provenance.as_str()) {
            return Err(PipelineError::ProvenanceViolation(fact.provenance.clone()));
        }
    }
    Ok(out)
}

/// Agent A: draft the stem, correct answer and rationale.
pub fn draft_item(
    agent_a: &AdapterBinding,
    objective: &LearningObjective,
    archetype: DifficultyArchetype,
    notes: &WikiNotes,
) -> Result<StageOutput<ItemDraft>, PipelineError> {
    let mut vars = objective_vars(objective);
    vars.insert("archetype_hint", archetype.style_hint().to_string());
    vars.insert("notes", notes_text(notes));
    call_and_parse(agent_a, &prompts::ITEM_DRAFT, &vars, StageKind::ItemDraft)
}

fn check_verdict_issue_types(
    verdict: &Verdict,
    stage: StageKind,
    item_stage: bool,
) -> Result<(), PipelineError> {
    for issue in &verdict.issues {
        let ok = if item_stage {
            issue.issue_type.is_item_stage()
        } else {
            issue.issue_type.is_distractor_stage()
        };
        if !ok {
            return Err(PipelineError::WrongIssueType {
                stage,
                issue: issue.issue_type,
            });
        }
    }
    Ok(())
}

/// Agent C: verify the stem, correct answer and rationale. The verifier
/// sees the draft only, never the drafting prompt or the drafter's
/// identity, and returns a verdict with item-stage issue types.
pub fn verify_item(
    agent_c: &AdapterBinding,
    objective: &LearningObjective,
    archetype: DifficultyArchetype,
    notes: &WikiNotes,
    draft: &ItemDraft,
    stage: StageKind,
) -> Result<StageOutput<Verdict>, PipelineError> {
    let mut vars = objective_vars(objective);
    vars.insert("archetype_hint", archetype.style_hint().to_string());
    vars.insert("notes", notes_text(notes));
    vars.insert("stem", draft.stem.clone());
    vars.insert("correct_answer", draft.correct_answer.clone());
    vars.insert("rationale", draft.rationale.clone());
    vars.insert("assumptions", draft.assumptions.join("; "));
    let out: StageOutput<Verdict> =
        call_and_parse(agent_c, &prompts::VERIFY_ITEM, &vars, stage)?;
    check_verdict_issue_types(&out.value, stage, true)?;
    Ok(out)
}

/// Agent A: single-shot repair of a rejected draft.
pub fn repair_item(
    agent_a: &AdapterBinding,
    draft: &ItemDraft,
    report: &Verdict,
) -> Result<StageOutput<ItemDraft>, PipelineError> {
    if report.ok {
        return Err(PipelineError::RepairWithoutFailure);
    }
    let mut vars = BTreeMap::new();
    vars.insert("draft", serde_json::to_string_pretty(draft).unwrap());
    vars.insert("report", serde_json::to_string_pretty(report).unwrap());
    call_and_parse(agent_a, &prompts::ITEM_REPAIR, &vars, StageKind::RepairItem)
}

/// Agent B: construct exactly three distractors.
pub fn build_distractors(
    agent_b: &AdapterBinding,
    draft: &ItemDraft,
    notes: &WikiNotes,
) -> Result<StageOutput<Vec<Distractor>>, PipelineError> {
    let mut vars = BTreeMap::new();
    vars.insert("stem", draft.stem.clone());
    vars.insert("correct_answer", draft.correct_answer.clone());
    vars.insert("rationale", draft.rationale.clone());
    vars.insert("notes", notes_text(notes));
    let out: StageOutput<Vec<Distractor>> =
        call_and_parse(agent_b, &prompts::DISTRACTORS, &vars, StageKind::Distractors)?;
    if out.value.len() != 3 {
        return Err(PipelineError::WrongDistractorCount(out.value.len()));
    }
    Ok(out)
}

/// Agent C: verify the four-option ensemble; distractor-stage issue types.
pub fn verify_distractors(
    agent_c: &AdapterBinding,
    archetype: DifficultyArchetype,
    draft: &ItemDraft,
    distractors: &[Distractor],
    stage: StageKind,
) -> Result<StageOutput<Verdict>, PipelineError> {
    let mut vars = BTreeMap::new();
    vars.insert("archetype_hint", archetype.style_hint().to_string());
    vars.insert("correct_answer", draft.correct_answer.clone());
    vars.insert("rationale", draft.rationale.clone());
    vars.insert("distractors", distractors_text(distractors));
    let out: StageOutput<Verdict> =
        call_and_parse(agent_c, &prompts::VERIFY_DISTRACTORS, &vars, stage)?;
    check_verdict_issue_types(&out.value, stage, false)?;
    Ok(out)
}

/// Agent B: single-shot repair of a rejected distractor set.
pub fn repair_distractors(
    agent_b: &AdapterBinding,
    distractors: &[Distractor],
    report: &Verdict,
) -> Result<StageOutput<Vec<Distractor>>, PipelineError> {
    if report.ok {
        return Err(PipelineError::RepairWithoutFailure);
    }
    let mut vars = BTreeMap::new();
    vars.insert("distractors", distractors_text(distractors));
    vars.insert("report", serde_json::to_string_pretty(report).unwrap());
    let out: StageOutput<Vec<Distractor>> = call_and_parse(
        agent_b,
        &prompts::DISTRACTOR_REPAIR,
        &vars,
        StageKind::RepairDistractors,
    )?;
    if out.value.len() != 3 {
        return Err(PipelineError::WrongDistractorCount(out.value.len()));
    }
    Ok(out)
}

/// Auxiliary agent: assign zero or more of the six sector labels.
pub fn assign_topics(
    auxiliary: &AdapterBinding,
    draft: &ItemDraft,
) -> Result<StageOutput<BTreeSet<Sector>>, PipelineError> {
    let mut vars = BTreeMap::new();
    vars.insert("stem", draft.stem.clone());
    vars.insert("correct_answer", draft.correct_answer.clone());
    let out: StageOutput<Vec<String>> = call_and_parse(
        auxiliary,
        &prompts::TOPIC_LABELS,
        &vars,
        StageKind::TopicLabels,
    )?;
    let mut labels = BTreeSet::new();
    for raw in &out.value {
        let sector = Sector::ALL
            .iter()
            .find(|s| s.as_str() == raw.to_lowercase())
            .copied()
            .ok_or_else(|| PipelineError::UnknownLabel(raw.clone()))?;
        labels.insert(sector);
    }
    Ok(StageOutput {
        value: labels,
        usage: out.usage,
        cost_usd: out.cost_usd,
        template_hash: out.template_hash,
    })
}

// ---------------------------------------------------------------------------
// Repair budget
// ---------------------------------------------------------------------------

/// One-shot guard: the state machine allows a single repair per
/// verification stage; a second take is a violation.
#[derive(Debug, Default)]
pub struct RepairBudget {
    used: bool,
}

impl RepairBudget {
    pub fn take(&mut self, stage: StageKind) -> Result<(), PipelineError> {
        if self.used {
            return Err(PipelineError::StateMachineViolation(format!(
                "second repair attempted at {stage:?}"
            )));
        }
        self.used = true;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Full item run
// ---------------------------------------------------------------------------

/// Result of one finished item run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub item: AssessmentItem,
    pub trace: Vec<StageKind>,
    /// Stage-level adapter/API calls (format retries excluded).
    pub stage_calls: usize,
    pub total_cost_usd: Usd,
}

/// Orchestrates item runs against a store and a wiki client. One item run
/// is strictly sequential; distinct runs may execute concurrently sharing
/// the adapter layer and the store.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub wiki: Arc<WikiClient>,
    pub store: Arc<StageStore>,
}

struct RunState<'a> {
    pipeline: &'a Pipeline,
    item_id: ItemId,
    trace: Vec<StageKind>,
    stage_calls: usize,
    total_cost: Usd,
}

impl RunState<'_> {
    fn persist<T: Serialize>(
        &mut self,
        stage: StageKind,
        output: &StageOutput<T>,
    ) -> Result<(), PipelineError> {
        if let Some(last) = self.trace.last() {
            if !last.is_legal_successor(stage) {
                return Err(PipelineError::StateMachineViolation(format!(
                    "illegal edge {last:?} -> {stage:?}"
                )));
            }
        } else if stage != StageKind::Keywords {
            return Err(PipelineError::StateMachineViolation(format!(
                "run must start at Keywords, not {stage:?}"
            )));
        }
        self.pipeline.store.append_stage(NewStageEvent {
            item_id: self.item_id,
            stage,
            payload: serde_json::to_value(&output.value).expect("stage payload"),
            usage: output.usage,
            cost_usd: output.cost_usd,
            template_hash: output.template_hash.clone(),
        })?;
        self.trace.push(stage);
        self.stage_calls += 1;
        self.total_cost += output.cost_usd;
        Ok(())
    }

    fn abort(&self, stage: StageKind, reason: String) -> PipelineError {
        let _ = self.pipeline.store.append_abort(AbortRecord {
            item_id: self.item_id,
            failed_stage: stage,
            reason: reason.clone(),
        });
        PipelineError::Aborted { stage, reason }
    }
}

impl Pipeline {
    /// Execute the full stage sequence for one objective. `run_index`
    /// distinguishes concurrent item runs under one seed; the per-item
    /// generator (archetype draw, item id) is keyed by (seed, run_index).
    pub fn run_item(
        &self,
        objective: &LearningObjective,
        run_index: u64,
    ) -> Result<PipelineRun, PipelineError> {
        objective
            .validate()
            .map_err(|e| PipelineError::ParseFailure {
                stage: StageKind::Keywords,
                reason: e.to_string(),
            })?;
        let mut rng = SplitMix64::keyed(self.config.rng_seed, &format!("item-run/{run_index}"));
        let item_id = ItemId::from_words(rng.next_u64(), rng.next_u64());
        let archetype = sample_archetype(&self.config.archetype_weights, &mut rng);

        let agent_a = self.config.binding(Role::AgentA)?;
        let agent_b = self.config.binding(Role::AgentB)?;
        let agent_c = self.config.binding(Role::AgentC)?;
        let auxiliary = self.config.binding(Role::Auxiliary)?;

        let mut state = RunState {
            pipeline: self,
            item_id,
            trace: Vec::new(),
            stage_calls: 0,
            total_cost: Usd::ZERO,
        };

        // Keyword extraction has no repair branch: failure aborts the run.
        let keywords = extract_keywords(agent_a, objective)
            .map_err(|e| state.abort(StageKind::Keywords, e.to_string()))?;
        state.persist(StageKind::Keywords, &keywords)?;

        let extracts = self
            .wiki
            .gather(&keywords.value, self.config.wiki_per_query_limit)
            .map_err(|e| state.abort(StageKind::WikiFetch, e.to_string()))?;
        if extracts.is_empty() {
            return Err(state.abort(StageKind::WikiFetch, "no extracts found".into()));
        }
        state.persist(
            StageKind::WikiFetch,
            &StageOutput {
                value: extracts.clone(),
                usage: TokenUsage::default(),
                cost_usd: Usd::ZERO,
                template_hash: String::new(),
            },
        )?;

        let notes = summarize_notes(auxiliary, &extracts)
            .map_err(|e| state.abort(StageKind::WikiNotes, e.to_string()))?;
        state.persist(StageKind::WikiNotes, &notes)?;

        let mut draft = draft_item(agent_a, objective, archetype, &notes.value)
            .map_err(|e| state.abort(StageKind::ItemDraft, e.to_string()))?;
        state.persist(StageKind::ItemDraft, &draft)?;

        // Item verification with at most one repair + one recheck.
        let mut item_failure_flag = false;
        let verdict = verify_item(
            agent_c,
            objective,
            archetype,
            &notes.value,
            &draft.value,
            StageKind::VerifyItem,
        )
        .map_err(|e| state.abort(StageKind::VerifyItem, e.to_string()))?;
        state.persist(StageKind::VerifyItem, &verdict)?;
        if !verdict.value.ok {
            let mut budget = RepairBudget::default();
            budget.take(StageKind::RepairItem)?;
            let repaired = repair_item(agent_a, &draft.value, &verdict.value)
                .map_err(|e| state.abort(StageKind::RepairItem, e.to_string()))?;
            state.persist(StageKind::RepairItem, &repaired)?;
            draft = repaired;
            // Recheck runs with a fresh verifier context; it never sees the
            // first verdict.
            let recheck = verify_item(
                agent_c,
                objective,
                archetype,
                &notes.value,
                &draft.value,
                StageKind::RecheckItem,
            )
            .map_err(|e| state.abort(StageKind::RecheckItem, e.to_string()))?;
            state.persist(StageKind::RecheckItem, &recheck)?;
            // A failing recheck is final: keep the item, set the flag.
            item_failure_flag = !recheck.value.ok;
        }

        let mut distractors = build_distractors(agent_b, &draft.value, &notes.value)
            .map_err(|e| state.abort(StageKind::Distractors, e.to_string()))?;
        state.persist(StageKind::Distractors, &distractors)?;

        let mut distractor_failure_flag = false;
        let verdict = verify_distractors(
            agent_c,
            archetype,
            &draft.value,
            &distractors.value,
            StageKind::VerifyDistractors,
        )
        .map_err(|e| state.abort(StageKind::VerifyDistractors, e.to_string()))?;
        state.persist(StageKind::VerifyDistractors, &verdict)?;
        if !verdict.value.ok {
            let mut budget = RepairBudget::default();
            budget.take(StageKind::RepairDistractors)?;
            let repaired = repair_distractors(agent_b, &distractors.value, &verdict.value)
                .map_err(|e| state.abort(StageKind::RepairDistractors, e.to_string()))?;
            state.persist(StageKind::RepairDistractors, &repaired)?;
            distractors = repaired;
            let recheck = verify_distractors(
                agent_c,
                archetype,
                &draft.value,
                &distractors.value,
                StageKind::RecheckDistractors,
            )
            .map_err(|e| state.abort(StageKind::RecheckDistractors, e.to_string()))?;
            state.persist(StageKind::RecheckDistractors, &recheck)?;
            distractor_failure_flag = !recheck.value.ok;
        }

        let labels = assign_topics(auxiliary, &draft.value)
            .map_err(|e| state.abort(StageKind::TopicLabels, e.to_string()))?;
        state.persist(StageKind::TopicLabels, &labels)?;

        let item = AssessmentItem {
            item_id,
            objective: objective.clone(),
            archetype,
            draft: draft.value,
            distractors: distractors.value,
            sector_labels: labels.value,
            item_failure_flag,
            distractor_failure_flag,
        };
        self.store.append_item(item.clone())?;

        Ok(PipelineRun {
            item,
            trace: state.trace,
            stage_calls: state.stage_calls,
            total_cost_usd: state.total_cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{self, DemoScripts};

    fn run(scripts: DemoScripts, seed: u64) -> (Pipeline, Result<PipelineRun, PipelineError>) {
        let store = Arc::new(StageStore::in_memory());
        let pipeline = demo::build_pipeline(scripts, seed, store);
        let result = pipeline.run_item(&demo::sample_objective(), 0);
        (pipeline, result)
    }

    #[test]
    fn happy_path_covers_exactly_the_eight_stages() {
        let (pipeline, result) = run(DemoScripts::happy(), 7);
        let run = result.unwrap();
        assert_eq!(run.trace, StageKind::HAPPY_PATH);
        assert!(trace_is_legal(&run.trace));
        assert_eq!(run.stage_calls, 8);
        assert!(!run.item.item_failure_flag);
        assert!(!run.item.distractor_failure_flag);
        let stored = pipeline.store.query_trace(run.item.item_id).unwrap();
        let kinds: Vec<StageKind> = stored.iter().map(|e| e.stage).collect();
        assert_eq!(kinds, run.trace);
    }

    #[test]
    fn item_repair_branch_rechecks_and_clears_the_flag() {
        let (_, result) = run(DemoScripts::item_repair(true), 7);
        let run = result.unwrap();
        assert!(run.trace.contains(&StageKind::RepairItem));
        assert!(run.trace.contains(&StageKind::RecheckItem));
        assert!(trace_is_legal(&run.trace));
        assert!(!run.item.item_failure_flag);
        assert_eq!(run.stage_calls, 10);
    }

    #[test]
    fn failing_recheck_keeps_the_item_and_sets_the_flag() {
        let (_, result) = run(DemoScripts::item_repair(false), 7);
        let run = result.unwrap();
        assert!(run.item.item_failure_flag);
        assert!(!run.item.distractor_failure_flag);
        // The run still reaches the end of the machine.
        assert_eq!(run.trace.last(), Some(&StageKind::TopicLabels));
    }

    #[test]
    fn distractor_repair_branch_works_both_ways() {
        let (_, ok) = run(DemoScripts::distractor_repair(true), 7);
        assert!(!ok.unwrap().item.distractor_failure_flag);
        let (_, flagged) = run(DemoScripts::distractor_repair(false), 7);
        let run = flagged.unwrap();
        assert!(run.item.distractor_failure_flag);
        assert_eq!(run.stage_calls, 10);
    }

    #[test]
    fn both_repair_branches_in_one_run() {
        let (_, result) = run(DemoScripts::both_repairs(), 7);
        let run = result.unwrap();
        assert!(trace_is_legal(&run.trace));
        assert_eq!(run.stage_calls, 12);
        assert!(!run.item.item_failure_flag);
        assert!(!run.item.distractor_failure_flag);
    }

    #[test]
    fn malformed_json_is_retried_once_and_usage_is_summed() {
        let mut scripts = DemoScripts::happy();
        scripts.agent_a.insert(0, "not json at all".into());
        let (pipeline, result) = run(scripts, 7);
        let run = result.unwrap();
        // The retry is a sub-attempt: the trace still shows one keyword stage.
        assert_eq!(run.trace, StageKind::HAPPY_PATH);
        let stored = pipeline.store.query_trace(run.item.item_id).unwrap();
        let keywords = &stored[0];
        assert_eq!(keywords.usage.tokens_in, 200);
        assert_eq!(keywords.usage.tokens_out, 40);
    }

    #[test]
    fn persistent_parse_failure_aborts_with_a_marker() {
        let mut scripts = DemoScripts::happy();
        scripts.agent_a = vec!["garbage".into(), "more garbage".into()];
        let store = Arc::new(StageStore::in_memory());
        let pipeline = demo::build_pipeline(scripts, 7, Arc::clone(&store));
        match pipeline.run_item(&demo::sample_objective(), 0) {
            Err(PipelineError::Aborted { stage, .. }) => {
                assert_eq!(stage, StageKind::Keywords)
            }
            other => panic!("expected abort, got {other:?}"),
        }
        let snapshot = store.freeze().unwrap();
        let aborts: Vec<_> = snapshot.aborts().collect();
        assert_eq!(aborts.len(), 1);
        assert_eq!(aborts[0].failed_stage, StageKind::Keywords);
    }

    #[test]
    fn verifier_must_use_item_stage_issue_types() {
        let verdict = serde_json::json!({
            "ok": false,
            "issues": [{"type": "not_plausible", "description": "x"}],
        })
        .to_string();
        let binding = demo::build_pipeline(
            DemoScripts {
                agent_c: vec![verdict],
                ..DemoScripts::default()
            },
            7,
            Arc::new(StageStore::in_memory()),
        );
        let agent_c = binding.config.binding(Role::AgentC).unwrap();
        let notes: WikiNotes = serde_json::from_str(&demo::notes_json()).unwrap();
        let draft: ItemDraft = serde_json::from_str(&demo::draft_json()).unwrap();
        match verify_item(
            agent_c,
            &demo::sample_objective(),
            DifficultyArchetype::QuantitativeCalculation,
            &notes,
            &draft,
            StageKind::VerifyItem,
        ) {
            Err(PipelineError::WrongIssueType { .. }) => {}
            other => panic!("expected wrong issue type, got {other:?}"),
        }
    }

    #[test]
    fn distractor_count_other_than_three_is_rejected() {
        let two = serde_json::json!([
            {"text": "a", "misconception_rationale": "r"},
            {"text": "b", "misconception_rationale": "r"},
        ])
        .to_string();
        let pipeline = demo::build_pipeline(
            DemoScripts {
                agent_b: vec![two],
                ..DemoScripts::default()
            },
            7,
            Arc::new(StageStore::in_memory()),
        );
        let agent_b = pipeline.config.binding(Role::AgentB).unwrap();
        let notes: WikiNotes = serde_json::from_str(&demo::notes_json()).unwrap();
        let draft: ItemDraft = serde_json::from_str(&demo::draft_json()).unwrap();
        match build_distractors(agent_b, &draft, &notes) {
            Err(PipelineError::WrongDistractorCount(2)) => {}
            other => panic!("expected count error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_sector_label_is_rejected() {
        let pipeline = demo::build_pipeline(
            DemoScripts {
                auxiliary: vec![serde_json::json!(["life", "crypto"]).to_string()],
                ..DemoScripts::default()
            },
            7,
            Arc::new(StageStore::in_memory()),
        );
        let auxiliary = pipeline.config.binding(Role::Auxiliary).unwrap();
        let draft: ItemDraft = serde_json::from_str(&demo::draft_json()).unwrap();
        match assign_topics(auxiliary, &draft) {
            Err(PipelineError::UnknownLabel(label)) => assert_eq!(label, "crypto"),
            other => panic!("expected unknown label, got {other:?}"),
        }
    }

    #[test]
    fn provenance_must_cite_an_input_title() {
        let bad_notes = serde_json::json!({
            "facts": [{"name": "n", "text": "t", "provenance": "Some Other Article"}],
        })
        .to_string();
        let pipeline = demo::build_pipeline(
            DemoScripts {
                auxiliary: vec![bad_notes],
                ..DemoScripts::default()
            },
            7,
            Arc::new(StageStore::in_memory()),
        );
        let auxiliary = pipeline.config.binding(Role::Auxiliary).unwrap();
        let spec: KeywordSpec = serde_json::from_str(&demo::keywords_json()).unwrap();
        let extracts = pipeline.wiki.gather(&spec, crate::demo::DEMO_WIKI_LIMIT).unwrap();
        match summarize_notes(auxiliary, &extracts) {
            Err(PipelineError::ProvenanceViolation(title)) => {
                assert_eq!(title, "Some Other Article")
            }
            other => panic!("expected provenance violation, got {other:?}"),
        }
    }

    #[test]
    fn second_repair_is_a_state_machine_violation() {
        let mut budget = RepairBudget::default();
        budget.take(StageKind::RepairItem).unwrap();
        match budget.take(StageKind::RepairItem) {
            Err(PipelineError::StateMachineViolation(_)) => {}
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn identical_scripts_and_seed_give_identical_items() {
        let (_, a) = run(DemoScripts::happy(), 42);
        let (_, b) = run(DemoScripts::happy(), 42);
        let (a, b) = (a.unwrap(), b.unwrap());
        assert_eq!(a.item, b.item);
        assert_eq!(a.item.item_id, b.item.item_id);
        assert_eq!(a.total_cost_usd, b.total_cost_usd);
        // A different seed gives a different id.
        let (_, c) = run(DemoScripts::happy(), 43);
        assert_ne!(a.item.item_id, c.unwrap().item.item_id);
    }

    #[test]
    fn archetype_sampling_follows_degenerate_weights() {
        let mut weights = ArchetypeWeights::default();
        for (a, w) in weights.0.iter_mut() {
            *w = if *a == DifficultyArchetype::EdgeCaseBoundary { 1.0 } else { 0.0 };
        }
        let mut rng = SplitMix64::keyed(9, "archetype-test");
        for _ in 0..50 {
            assert_eq!(
                sample_archetype(&weights, &mut rng),
                DifficultyArchetype::EdgeCaseBoundary
            );
        }
    }

    #[test]
    fn illegal_edges_are_rejected() {
        assert!(!StageKind::Keywords.is_legal_successor(StageKind::ItemDraft));
        assert!(!StageKind::VerifyItem.is_legal_successor(StageKind::RecheckItem));
        assert!(!StageKind::RepairItem.is_legal_successor(StageKind::Distractors));
        assert!(!trace_is_legal(&[StageKind::WikiFetch, StageKind::WikiNotes]));
        assert!(trace_is_legal(&StageKind::HAPPY_PATH));
    }
}
