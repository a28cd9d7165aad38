//! The open-ended benchmark harness with model-as-judge scoring.
//!
//! The evaluatee answers the bare stem in free text; a judge model then
//! compares that response against the known correct answer and emits a
//! four-field verdict. The judge extracts and compares — it is explicitly
//! told not to re-solve the problem, and any numerical tolerance is its
//! call, not the harness's.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use crate::adapter::AdapterBinding;
use crate::domain::{AssessmentItem, DifficultyArchetype, ItemId, JudgeAnswer, JudgeVerdict, TokenUsage};
use crate::money::Usd;
use crate::store::{StageStore, StoreError};

pub const DEFAULT_EVALUATEE_MAX_OUTPUT_TOKENS: u64 = 2_048;
pub const DEFAULT_JUDGE_MAX_OUTPUT_TOKENS: u64 = 512;

pub const EVALUATEE_SYSTEM_PROMPT: &str = "You are taking an actuarial exam. Answer the following question as accurately and concisely as possible. Show your reasoning briefly, then state your final answer clearly.";

pub const JUDGE_SYSTEM_PROMPT: &str = "You are grading one answer to an actuarial exam question. Extract the candidate's final answer from their response and compare it to the reference answer. Judge only whether the two agree: ignore differences in wording or formatting that carry no meaning, and accept small numerical tolerances from rounding. Do NOT re-solve the problem and do NOT argue for alternative answers; the reference answer is authoritative. Reply with JSON only, exactly these four fields: {\"final_answer\": string, \"reasoning\": string, \"correct\": \"yes\" or \"no\", \"confidence\": integer 0-100 (the candidate's self-reported confidence where available, 100 otherwise)}.";

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("empty stem")]
    EmptyStem,
    #[error("empty field for judge prompt: {0}")]
    EmptyField(&'static str),
    #[error("judge and mcq item sets overlap: {0} shared item(s)")]
    ItemOverlap(usize),
    #[error("no items to benchmark")]
    NoItems,
    #[error("no models to benchmark")]
    NoModels,
    #[error("store failure: {0}")]
    Store(#[from] StoreError),
}

pub fn build_evaluatee_prompt(stem: &str) -> Result<crate::adapter::ChatRequest, JudgeError> {
    build_evaluatee_prompt_with_budget(stem, DEFAULT_EVALUATEE_MAX_OUTPUT_TOKENS)
}

pub fn build_evaluatee_prompt_with_budget(
    stem: &str,
    max_output_tokens: u64,
) -> Result<crate::adapter::ChatRequest, JudgeError> {
    if stem.is_empty() {
        return Err(JudgeError::EmptyStem);
    }
    Ok(crate::adapter::ChatRequest::new(
        EVALUATEE_SYSTEM_PROMPT,
        stem,
        max_output_tokens,
    ))
}

pub fn build_judge_prompt(
    stem: &str,
    response: &str,
    correct_answer: &str,
) -> Result<crate::adapter::ChatRequest, JudgeError> {
    build_judge_prompt_with_budget(stem, response, correct_answer, DEFAULT_JUDGE_MAX_OUTPUT_TOKENS)
}

pub fn build_judge_prompt_with_budget(
    stem: &str,
    response: &str,
    correct_answer: &str,
    max_output_tokens: u64,
) -> Result<crate::adapter::ChatRequest, JudgeError> {
    if stem.is_empty() {
        return Err(JudgeError::EmptyField("stem"));
    }
    if response.is_empty() {
        return Err(JudgeError::EmptyField("response"));
    }
    if correct_answer.is_empty() {
        return Err(JudgeError::EmptyField("correct_answer"));
    }
    let user = format!(
        "Question:\n{stem}\n\nReference answer:\n{correct_answer}\n\nCandidate response:\n{response}"
    );
    Ok(crate::adapter::ChatRequest::new(
        JUDGE_SYSTEM_PROMPT,
        user,
        max_output_tokens,
    ))
}

// ---------------------------------------------------------------------------
// Verdict parsing
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VerdictParseError {
    #[error("malformed json: {0}")]
    MalformedJson(String),
    #[error("missing or invalid field: {0}")]
    MissingField(String),
    #[error("confidence {0} out of range 0-100")]
    ConfidenceOutOfRange(i64),
}

/// The judge's wire format, as instructed in the system prompt.
#[derive(Deserialize)]
struct WireVerdict {
    final_answer: Option<String>,
    reasoning: Option<String>,
    correct: Option<serde_json::Value>,
    confidence: Option<i64>,
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

/// Strict parse of the four-field wire verdict into the domain verdict.
/// `correct` must be literally "yes" or "no"; anything else is an invalid
/// field. A missing confidence defaults to 100.
pub fn parse_judge_verdict(raw: &str) -> Result<JudgeVerdict, VerdictParseError> {
    let wire: WireVerdict = serde_json::from_str(strip_code_fences(raw))
        .map_err(|e| VerdictParseError::MalformedJson(e.to_string()))?;
    let final_answer = wire
        .final_answer
        .ok_or_else(|| VerdictParseError::MissingField("final_answer".into()))?;
    let reasoning = wire
        .reasoning
        .ok_or_else(|| VerdictParseError::MissingField("reasoning".into()))?;
    let correct = match wire.correct {
        Some(serde_json::Value::String(s)) if s == "yes" => true,
        Some(serde_json::Value::String(s)) if s == "no" => false,
        Some(other) => {
            return Err(VerdictParseError::MissingField(format!(
                "correct must be \"yes\" or \"no\", got {other}"
            )))
        }
        None => return Err(VerdictParseError::MissingField("correct".into())),
    };
    let confidence = wire.confidence.unwrap_or(100);
    if !(0..=100).contains(&confidence) {
        return Err(VerdictParseError::ConfidenceOutOfRange(confidence));
    }
    Ok(JudgeVerdict {
        extracted_answer: final_answer,
        reasoning_note: reasoning,
        correct,
        confidence: confidence as u8,
    })
}

// ---------------------------------------------------------------------------
// Run driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct JudgeRunConfig {
    pub run_id: String,
    pub evaluatee_max_output_tokens: u64,
    pub judge_max_output_tokens: u64,
    /// Item ids already used by an MCQ run in the same study; the two
    /// benchmarks must draw from disjoint pools.
    pub mcq_item_ids: BTreeSet<ItemId>,
}

impl JudgeRunConfig {
    pub fn new(run_id: impl Into<String>) -> Self {
        JudgeRunConfig {
            run_id: run_id.into(),
            evaluatee_max_output_tokens: DEFAULT_EVALUATEE_MAX_OUTPUT_TOKENS,
            judge_max_output_tokens: DEFAULT_JUDGE_MAX_OUTPUT_TOKENS,
            mcq_item_ids: BTreeSet::new(),
        }
    }
}

/// Outcome of one judge run, with the diagnostic parse-failure tally kept
/// apart from ordinary incorrect answers.
#[derive(Debug, Clone)]
pub struct JudgeRunOutcome {
    pub rows: Vec<JudgeAnswer>,
    pub parse_failures: usize,
    /// Items outside the quantitative-calculation archetype, flagged but
    /// still benchmarked.
    pub off_archetype_items: Vec<ItemId>,
}

/// Run the benchmark for every (evaluatee model, item) pair under a single
/// judge binding. Both calls' usage and cost are persisted per row; a
/// malformed judge verdict yields a parse-failure row scored incorrect.
pub fn run_judge(
    cfg: &JudgeRunConfig,
    models: &[AdapterBinding],
    judge: &AdapterBinding,
    items: &[AssessmentItem],
    store: &Arc<StageStore>,
) -> Result<JudgeRunOutcome, JudgeError> {
    if items.is_empty() {
        return Err(JudgeError::NoItems);
    }
    if models.is_empty() {
        return Err(JudgeError::NoModels);
    }
    let overlap = items
        .iter()
        .filter(|i| cfg.mcq_item_ids.contains(&i.item_id))
        .count();
    if overlap > 0 {
        return Err(JudgeError::ItemOverlap(overlap));
    }
    let off_archetype_items: Vec<ItemId> = items
        .iter()
        .filter(|i| i.archetype != DifficultyArchetype::QuantitativeCalculation)
        .map(|i| i.item_id)
        .collect();

    store.append_run_manifest(json!({
        "benchmark": "judge",
        "run_id": cfg.run_id,
        "judge_model": judge.model.model_key(),
        "evaluatee_max_output_tokens": cfg.evaluatee_max_output_tokens,
        "judge_max_output_tokens": cfg.judge_max_output_tokens,
        "models": models.iter().map(|b| b.model.model_key()).collect::<Vec<_>>(),
        "items": items.iter().map(|i| i.item_id.to_string()).collect::<Vec<_>>(),
        "off_archetype_items": off_archetype_items.iter().map(|i| i.to_string()).collect::<Vec<_>>(),
    }))?;

    let guard = store.writer_guard();
    let mut rows = Vec::with_capacity(models.len() * items.len());
    let mut parse_failures = 0usize;
    for binding in models {
        for item in items {
            let eval_req = build_evaluatee_prompt_with_budget(
                &item.draft.stem,
                cfg.evaluatee_max_output_tokens,
            )?;
            let (raw_response, evaluatee_usage) = match binding.complete(&eval_req) {
                Ok(resp) => (resp.text, resp.usage),
                Err(e) => (format!("[transport error: {e}]"), TokenUsage::default()),
            };
            let judge_req = build_judge_prompt_with_budget(
                &item.draft.stem,
                &raw_response,
                &item.draft.correct_answer,
                cfg.judge_max_output_tokens,
            )?;
            let (judge_text, judge_usage) = match judge.complete(&judge_req) {
                Ok(resp) => (resp.text, resp.usage),
                Err(e) => (format!("[transport error: {e}]"), TokenUsage::default()),
            };
            let verdict = parse_judge_verdict(&judge_text).ok();
            let judge_parse_failure = verdict.is_none();
            if judge_parse_failure {
                parse_failures += 1;
            }
            let correct = verdict.as_ref().map(|v| v.correct).unwrap_or(false);
            let (evaluatee_cost_usd, _) =
                crate::adapter::compute_cost_or_zero(evaluatee_usage, &binding.model);
            let (judge_cost_usd, _) =
                crate::adapter::compute_cost_or_zero(judge_usage, &judge.model);
            let row = JudgeAnswer {
                model_key: binding.model.model_key(),
                item_id: item.item_id,
                run_id: cfg.run_id.clone(),
                raw_response,
                verdict,
                judge_parse_failure,
                correct,
                evaluatee_usage,
                judge_usage,
                evaluatee_cost_usd,
                judge_cost_usd,
                cost_usd: evaluatee_cost_usd + judge_cost_usd,
            };
            store.append_judge_answer(row.clone())?;
            rows.push(row);
        }
    }
    drop(guard);
    Ok(JudgeRunOutcome {
        rows,
        parse_failures,
        off_archetype_items,
    })
}

/// Fraction judged correct; parse failures count as incorrect.
pub fn accuracy(rows: &[JudgeAnswer]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.correct).count() as f64 / rows.len() as f64
}

pub fn total_cost(rows: &[JudgeAnswer]) -> Usd {
    rows.iter().map(|r| r.cost_usd).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{script_adapter, ChatResponse, ModelRegistry, Role};
    use crate::demo;
    use crate::store::StageStore;

    fn sample_item(seed: u64) -> AssessmentItem {
        let store = Arc::new(StageStore::in_memory());
        let pipeline = demo::build_pipeline(demo::DemoScripts::happy(), seed, store);
        pipeline.run_item(&demo::sample_objective(), 0).unwrap().item
    }

    fn binding(role: Role, texts: Vec<&str>) -> AdapterBinding {
        let registry = ModelRegistry::bundled();
        let spec = registry.get("openai/gpt-5-mini").unwrap().clone();
        script_adapter(
            role,
            spec,
            texts
                .into_iter()
                .map(|t| ChatResponse::new(t, TokenUsage::new(100, 50)))
                .collect(),
        )
    }

    fn yes_verdict() -> String {
        serde_json::json!({
            "final_answer": "2 per 100 of fund per annum",
            "reasoning": "matches the reference answer",
            "correct": "yes",
            "confidence": 90,
        })
        .to_string()
    }

    #[test]
    fn evaluatee_prompt_is_the_bare_stem() {
        let req = build_evaluatee_prompt("What is 2+2?").unwrap();
        assert_eq!(req.system, EVALUATEE_SYSTEM_PROMPT);
        assert_eq!(req.user, "What is 2+2?");
        assert_eq!(req.max_output_tokens, 2048);
        assert!(matches!(
            build_evaluatee_prompt(""),
            Err(JudgeError::EmptyStem)
        ));
    }

    #[test]
    fn judge_prompt_carries_reference_answer_and_forbids_resolving() {
        let req = build_judge_prompt("stem", "resp", "the reference").unwrap();
        assert!(req.user.contains("the reference"));
        assert!(req.system.contains("Do NOT re-solve"));
        assert!(req.system.contains("small numerical tolerances"));
        assert!(matches!(
            build_judge_prompt("stem", "", "x"),
            Err(JudgeError::EmptyField("response"))
        ));
    }

    #[test]
    fn verdict_parsing_normalizes_yes_no() {
        let v = parse_judge_verdict(
            r#"{"final_answer":"3.786, 0.36","reasoning":"matches","correct":"yes","confidence":100}"#,
        )
        .unwrap();
        assert!(v.correct);
        assert_eq!(v.confidence, 100);
        assert_eq!(v.extracted_answer, "3.786, 0.36");
        let no = parse_judge_verdict(
            r#"{"final_answer":"x","reasoning":"differs","correct":"no","confidence":80}"#,
        )
        .unwrap();
        assert!(!no.correct);
    }

    #[test]
    fn verdict_parse_failures_are_typed() {
        assert!(matches!(
            parse_judge_verdict("not json"),
            Err(VerdictParseError::MalformedJson(_))
        ));
        assert!(matches!(
            parse_judge_verdict(r#"{"final_answer":"x","reasoning":"r","correct":"maybe","confidence":1}"#),
            Err(VerdictParseError::MissingField(_))
        ));
        assert!(matches!(
            parse_judge_verdict(r#"{"final_answer":"x","reasoning":"r","correct":"yes","confidence":150}"#),
            Err(VerdictParseError::ConfidenceOutOfRange(150))
        ));
        assert!(matches!(
            parse_judge_verdict(r#"{"reasoning":"r","correct":"yes","confidence":1}"#),
            Err(VerdictParseError::MissingField(_))
        ));
    }

    #[test]
    fn missing_confidence_defaults_to_one_hundred() {
        let v = parse_judge_verdict(
            r#"{"final_answer":"x","reasoning":"r","correct":"yes"}"#,
        )
        .unwrap();
        assert_eq!(v.confidence, 100);
    }

    #[test]
    fn all_yes_run_scores_one() {
        let item = sample_item(3);
        let evaluatee = binding(Role::Evaluatee, vec!["The answer is 2 per 100."]);
        let judge = binding(Role::Judge, vec![&yes_verdict()]);
        let store = Arc::new(StageStore::in_memory());
        let out = run_judge(
            &JudgeRunConfig::new("judge-1"),
            &[evaluatee],
            &judge,
            &[item],
            &store,
        )
        .unwrap();
        assert_eq!(accuracy(&out.rows), 1.0);
        assert_eq!(out.parse_failures, 0);
        let row = &out.rows[0];
        // Cost attribution: parts sum to the row total.
        assert_eq!(row.cost_usd, row.evaluatee_cost_usd + row.judge_cost_usd);
        assert_eq!(store.freeze().unwrap().judge_answers().count(), 1);
    }

    #[test]
    fn malformed_verdicts_become_parse_failure_rows() {
        let items = vec![sample_item(3), sample_item(4)];
        let evaluatee = binding(Role::Evaluatee, vec!["ans", "ans"]);
        let judge = binding(Role::Judge, vec![&yes_verdict(), "garbage"]);
        let store = Arc::new(StageStore::in_memory());
        let out = run_judge(
            &JudgeRunConfig::new("judge-2"),
            &[evaluatee],
            &judge,
            &items,
            &store,
        )
        .unwrap();
        assert_eq!(out.parse_failures, 1);
        assert_eq!(accuracy(&out.rows), 0.5);
        let failed = out.rows.iter().find(|r| r.judge_parse_failure).unwrap();
        assert!(!failed.correct);
        assert!(failed.verdict.is_none());
    }

    #[test]
    fn mcq_overlap_is_a_configuration_error() {
        let item = sample_item(3);
        let mut cfg = JudgeRunConfig::new("judge-3");
        cfg.mcq_item_ids.insert(item.item_id);
        let evaluatee = binding(Role::Evaluatee, vec!["x"]);
        let judge = binding(Role::Judge, vec![&yes_verdict()]);
        let store = Arc::new(StageStore::in_memory());
        match run_judge(&cfg, &[evaluatee], &judge, &[item], &store) {
            Err(JudgeError::ItemOverlap(1)) => {}
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn verdict_round_trip_is_canonical() {
        let v = parse_judge_verdict(
            r#"{"final_answer":"x","reasoning":"r","correct":"yes","confidence":55}"#,
        )
        .unwrap();
        let serialized = serde_json::to_string(&v).unwrap();
        let back: JudgeVerdict = serde_json::from_str(&serialized).unwrap();
        assert_eq!(v, back);
    }
}
