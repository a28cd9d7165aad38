//! Shared domain types, their JSON schema, and validation.
//!
//! All types are immutable values. The canonical interchange format is JSON
//! with lower_snake_case field names; types whose invariants can be violated
//! by well-formed JSON (verdicts, keyword specs, drafts) validate during
//! deserialization via `try_from` raw mirrors, so a stored record can never
//! hold an inconsistent value.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::money::Usd;

/// Violation raised while constructing or validating a domain value.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{0}")]
pub struct DomainError(pub String);

fn require(cond: bool, msg: &str) -> Result<(), DomainError> {
    if cond {
        Ok(())
    } else {
        Err(DomainError(msg.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

/// Opaque unique id of one assessment item.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct ItemId(pub Uuid);

impl ItemId {
    /// Derive an id from two generator words (deterministic under a fixed
    /// pipeline seed). The UUID version/variant bits are set so the result
    /// is a well-formed random-style UUID.
    pub fn from_words(hi: u64, lo: u64) -> Self {
        let mut bytes = [0u8; 16];
        bytes[..8].copy_from_slice(&hi.to_be_bytes());
        bytes[8..].copy_from_slice(&lo.to_be_bytes());
        ItemId(uuid::Builder::from_random_bytes(bytes).into_uuid())
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

// ---------------------------------------------------------------------------
// Syllabus and archetypes
// ---------------------------------------------------------------------------

/// One IAA syllabus entry; seeds one assessment item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningObjective {
    pub code: String,
    pub description: String,
    pub subject: String,
    pub topic: String,
}

impl LearningObjective {
    pub fn validate(&self) -> Result<(), DomainError> {
        require(!self.code.is_empty(), "learning objective code is empty")?;
        require(
            !self.description.is_empty(),
            "learning objective description is empty",
        )
    }
}

/// The five hard difficulty archetypes. Easier archetypes (terminology
/// precision, consistency checks) are excluded from the pool and therefore
/// not representable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum DifficultyArchetype {
    #[serde(rename = "quantitative-calculation")]
    QuantitativeCalculation,
    #[serde(rename = "assumption-sensitivity")]
    AssumptionSensitivity,
    #[serde(rename = "conceptual-inversion")]
    ConceptualInversion,
    #[serde(rename = "edge-case-boundary")]
    EdgeCaseBoundary,
    #[serde(rename = "multi-step-logic")]
    MultiStepLogic,
}

impl DifficultyArchetype {
    pub const ALL: [DifficultyArchetype; 5] = [
        DifficultyArchetype::QuantitativeCalculation,
        DifficultyArchetype::AssumptionSensitivity,
        DifficultyArchetype::ConceptualInversion,
        DifficultyArchetype::EdgeCaseBoundary,
        DifficultyArchetype::MultiStepLogic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyArchetype::QuantitativeCalculation => "quantitative-calculation",
            DifficultyArchetype::AssumptionSensitivity => "assumption-sensitivity",
            DifficultyArchetype::ConceptualInversion => "conceptual-inversion",
            DifficultyArchetype::EdgeCaseBoundary => "edge-case-boundary",
            DifficultyArchetype::MultiStepLogic => "multi-step-logic",
        }
    }

    /// Short natural-language description passed to the drafting agent.
    pub fn style_hint(self) -> &'static str {
        match self {
            DifficultyArchetype::QuantitativeCalculation => {
                "Quantitative calculation: multi-step computations where each sub-step admits a characteristic error"
            }
            DifficultyArchetype::AssumptionSensitivity => {
                "Assumption sensitivity: the answer flips when a stated assumption is varied"
            }
            DifficultyArchetype::ConceptualInversion => {
                "Conceptual inversion: reason backwards from an observed result to the condition that produces it"
            }
            DifficultyArchetype::EdgeCaseBoundary => {
                "Edge case / boundary: behaviour at a limiting or degenerate parameter value"
            }
            DifficultyArchetype::MultiStepLogic => {
                "Multi-step logic: a chain of dependent deductions where an early slip propagates"
            }
        }
    }
}

/// The six actuarial sectors used for topic labels.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Sector {
    #[serde(rename = "life")]
    Life,
    #[serde(rename = "non-life")]
    NonLife,
    #[serde(rename = "afir-erm")]
    AfirErm,
    #[serde(rename = "ads-ai")]
    AdsAi,
    #[serde(rename = "health")]
    Health,
    #[serde(rename = "pension")]
    Pension,
}

impl Sector {
    pub const ALL: [Sector; 6] = [
        Sector::Life,
        Sector::NonLife,
        Sector::AfirErm,
        Sector::AdsAi,
        Sector::Health,
        Sector::Pension,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Sector::Life => "life",
            Sector::NonLife => "non-life",
            Sector::AfirErm => "afir-erm",
            Sector::AdsAi => "ads-ai",
            Sector::Health => "health",
            Sector::Pension => "pension",
        }
    }
}

// ---------------------------------------------------------------------------
// Generation-stage payloads
// ---------------------------------------------------------------------------

/// Keyword extraction output: search terms plus disambiguation guards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawKeywordSpec")]
pub struct KeywordSpec {
    pub primary_terms: Vec<String>,
    pub synonyms_abbreviations: Vec<String>,
    pub exclusions: Vec<String>,
    pub search_strings: Vec<String>,
}

#[derive(Deserialize)]
struct RawKeywordSpec {
    #[serde(default)]
    primary_terms: Vec<String>,
    #[serde(default)]
    synonyms_abbreviations: Vec<String>,
    #[serde(default)]
    exclusions: Vec<String>,
    search_strings: Vec<String>,
}

impl TryFrom<RawKeywordSpec> for KeywordSpec {
    type Error = DomainError;

    fn try_from(raw: RawKeywordSpec) -> Result<Self, DomainError> {
        require(
            (1..=3).contains(&raw.search_strings.len()),
            "keyword spec must carry between 1 and 3 search strings",
        )?;
        Ok(KeywordSpec {
            primary_terms: raw.primary_terms,
            synonyms_abbreviations: raw.synonyms_abbreviations,
            exclusions: raw.exclusions,
            search_strings: raw.search_strings,
        })
    }
}

/// One named fact distilled from a Wikipedia extract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiFact {
    pub name: String,
    pub text: String,
    /// Title of the source article.
    pub provenance: String,
}

/// Structured note sheet produced by the auxiliary agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawWikiNotes")]
pub struct WikiNotes {
    pub facts: Vec<WikiFact>,
}

#[derive(Deserialize)]
struct RawWikiNotes {
    facts: Vec<WikiFact>,
}

impl TryFrom<RawWikiNotes> for WikiNotes {
    type Error = DomainError;

    fn try_from(raw: RawWikiNotes) -> Result<Self, DomainError> {
        for fact in &raw.facts {
            require(
                !fact.provenance.is_empty(),
                "wiki note fact is missing provenance",
            )?;
        }
        Ok(WikiNotes { facts: raw.facts })
    }
}

/// Stem, correct answer and rationale as drafted by the generator agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawItemDraft")]
pub struct ItemDraft {
    pub stem: String,
    pub correct_answer: String,
    pub rationale: String,
    #[serde(default)]
    pub assumptions: Vec<String>,
}

#[derive(Deserialize)]
struct RawItemDraft {
    stem: String,
    correct_answer: String,
    rationale: String,
    #[serde(default)]
    assumptions: Vec<String>,
}

impl TryFrom<RawItemDraft> for ItemDraft {
    type Error = DomainError;

    fn try_from(raw: RawItemDraft) -> Result<Self, DomainError> {
        require(!raw.stem.is_empty(), "item draft stem is empty")?;
        require(
            !raw.correct_answer.is_empty(),
            "item draft correct answer is empty",
        )?;
        require(!raw.rationale.is_empty(), "item draft rationale is empty")?;
        Ok(ItemDraft {
            stem: raw.stem,
            correct_answer: raw.correct_answer,
            rationale: raw.rationale,
            assumptions: raw.assumptions,
        })
    }
}

/// One distractor with the misconception it probes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDistractor")]
pub struct Distractor {
    pub text: String,
    pub misconception_rationale: String,
}

#[derive(Deserialize)]
struct RawDistractor {
    text: String,
    misconception_rationale: String,
}

impl TryFrom<RawDistractor> for Distractor {
    type Error = DomainError;

    fn try_from(raw: RawDistractor) -> Result<Self, DomainError> {
        require(!raw.text.is_empty(), "distractor text is empty")?;
        require(
            !raw.misconception_rationale.is_empty(),
            "distractor misconception rationale is empty",
        )?;
        Ok(Distractor {
            text: raw.text,
            misconception_rationale: raw.misconception_rationale,
        })
    }
}

/// A finished assessment item. The correct answer occupies internal slot 0 by
/// construction; presentation order is decided only at evaluation time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentItem {
    pub item_id: ItemId,
    pub objective: LearningObjective,
    pub archetype: DifficultyArchetype,
    pub draft: ItemDraft,
    pub distractors: Vec<Distractor>,
    pub sector_labels: BTreeSet<Sector>,
    pub item_failure_flag: bool,
    pub distractor_failure_flag: bool,
}

impl AssessmentItem {
    /// Option text by internal slot: slot 0 is the correct answer,
    /// slots 1-3 the distractors.
    pub fn option_text(&self, slot: usize) -> &str {
        if slot == 0 {
            &self.draft.correct_answer
        } else {
            &self.distractors[slot - 1].text
        }
    }
}

/// Collect invariant violations of an item. Violations are data, not
/// failures: a well-formed item yields an empty list.
pub fn validate_item(item: &AssessmentItem) -> Vec<String> {
    let mut violations = Vec::new();
    if let Err(e) = item.objective.validate() {
        violations.push(e.0);
    }
    if item.distractors.len() != 3 {
        violations.push(format!("distractor count {} != 3", item.distractors.len()));
    }
    if item.draft.stem.is_empty() {
        violations.push("item draft stem is empty".to_string());
    }
    if item.draft.correct_answer.is_empty() {
        violations.push("item draft correct answer is empty".to_string());
    }
    if item.draft.rationale.is_empty() {
        violations.push("item draft rationale is empty".to_string());
    }
    for (i, d) in item.distractors.iter().enumerate() {
        if d.text.is_empty() {
            violations.push(format!("distractor {i} text is empty"));
        }
        if d.misconception_rationale.is_empty() {
            violations.push(format!("distractor {i} misconception rationale is empty"));
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

/// Typed issue raised by the verifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum IssueType {
    // Item-stage issues.
    FactualError,
    Ambiguity,
    Underspecification,
    DifficultyMisalignment,
    // Distractor-stage issues.
    #[serde(alias = "duplicate_with_A")]
    DuplicateWithA,
    DuplicateWithOther,
    NotPlausible,
    InadvertentlyCorrect,
}

impl IssueType {
    pub fn is_item_stage(self) -> bool {
        matches!(
            self,
            IssueType::FactualError
                | IssueType::Ambiguity
                | IssueType::Underspecification
                | IssueType::DifficultyMisalignment
        )
    }

    pub fn is_distractor_stage(self) -> bool {
        !self.is_item_stage()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    #[serde(alias = "type")]
    pub issue_type: IssueType,
    pub description: String,
}

/// The verifier's structured ok/fail report.
/// `ok=true` implies no issues; `ok=false` implies at least one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVerdict")]
pub struct Verdict {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

/// Permissive mirror of [`Verdict`] used for decoding; the conversion into
/// `Verdict` enforces the ok/issues consistency invariant.
#[derive(Debug, Deserialize)]
pub struct RawVerdict {
    pub ok: bool,
    #[serde(default)]
    pub issues: Vec<Issue>,
}

impl TryFrom<RawVerdict> for Verdict {
    type Error = DomainError;

    fn try_from(raw: RawVerdict) -> Result<Self, DomainError> {
        require(
            raw.ok == raw.issues.is_empty(),
            "verdict consistency violated: ok must hold iff issues is empty",
        )?;
        Ok(Verdict {
            ok: raw.ok,
            issues: raw.issues,
        })
    }
}

impl Verdict {
    pub fn passing() -> Self {
        Verdict {
            ok: true,
            issues: Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// Model registry entries and usage
// ---------------------------------------------------------------------------

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    Dense,
    Thinking,
    OpenSource,
}

/// One row of the model registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: String,
    pub model_id: String,
    /// USD per million input tokens; absent where the provider publishes none.
    pub price_in_per_1m_tokens: Option<Usd>,
    pub price_out_per_1m_tokens: Option<Usd>,
    pub variant: ModelVariant,
    /// Links a thinking variant to its standard-decoder sibling.
    pub base_model_key: String,
}

impl ModelSpec {
    pub fn model_key(&self) -> String {
        format!("{}/{}", self.provider, self.model_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl TokenUsage {
    pub fn new(tokens_in: u64, tokens_out: u64) -> Self {
        TokenUsage {
            tokens_in,
            tokens_out,
        }
    }
}

// ---------------------------------------------------------------------------
// Presentation letters and shuffle maps
// ---------------------------------------------------------------------------

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn as_char(self) -> char {
        match self {
            Letter::A => 'A',
            Letter::B => 'B',
            Letter::C => 'C',
            Letter::D => 'D',
        }
    }

    pub fn from_char_ci(c: char) -> Option<Letter> {
        match c.to_ascii_uppercase() {
            'A' => Some(Letter::A),
            'B' => Some(Letter::B),
            'C' => Some(Letter::C),
            'D' => Some(Letter::D),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Bijection from internal option slots (0 = correct answer, 1-3 =
/// distractors) to presentation letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawShuffleMap")]
pub struct ShuffleMap(pub [Letter; 4]);

#[derive(Deserialize)]
struct RawShuffleMap([Letter; 4]);

impl TryFrom<RawShuffleMap> for ShuffleMap {
    type Error = DomainError;

    fn try_from(raw: RawShuffleMap) -> Result<Self, DomainError> {
        let distinct: BTreeSet<Letter> = raw.0.iter().copied().collect();
        require(distinct.len() == 4, "shuffle map is not a bijection")?;
        Ok(ShuffleMap(raw.0))
    }
}

impl ShuffleMap {
    pub fn new(letters: [Letter; 4]) -> Result<Self, DomainError> {
        ShuffleMap::try_from(RawShuffleMap(letters))
    }

    pub fn letter_for_slot(&self, slot: usize) -> Letter {
        self.0[slot]
    }

    pub fn slot_for_letter(&self, letter: Letter) -> usize {
        self.0.iter().position(|&l| l == letter).expect("bijection")
    }

    pub fn is_bijection(&self) -> bool {
        self.0.iter().copied().collect::<BTreeSet<_>>().len() == 4
    }
}

/// Parsed answer extracted from a raw MCQ response.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Extracted {
    A,
    B,
    C,
    D,
    #[serde(rename = "unparseable")]
    Unparseable,
}

impl From<Letter> for Extracted {
    fn from(l: Letter) -> Self {
        match l {
            Letter::A => Extracted::A,
            Letter::B => Extracted::B,
            Letter::C => Extracted::C,
            Letter::D => Extracted::D,
        }
    }
}

impl Extracted {
    pub fn as_letter(self) -> Option<Letter> {
        match self {
            Extracted::A => Some(Letter::A),
            Extracted::B => Some(Letter::B),
            Extracted::C => Some(Letter::C),
            Extracted::D => Some(Letter::D),
            Extracted::Unparseable => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Benchmark answer rows
// ---------------------------------------------------------------------------

/// One model x item record from the MCQ benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkAnswer {
    pub model_key: String,
    pub item_id: ItemId,
    pub run_id: String,
    pub shuffle_map: ShuffleMap,
    pub raw_response: String,
    pub extracted: Extracted,
    pub correct: bool,
    pub usage: TokenUsage,
    pub cost_usd: Usd,
    /// Transport-level error captured alongside an unparseable answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_note: Option<String>,
}

/// One model x item record from the Judge benchmark. Evaluatee and judge
/// costs are attributed separately and sum to `cost_usd`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeAnswer {
    pub model_key: String,
    pub item_id: ItemId,
    pub run_id: String,
    pub raw_response: String,
    pub verdict: Option<JudgeVerdict>,
    pub judge_parse_failure: bool,
    pub correct: bool,
    pub evaluatee_usage: TokenUsage,
    pub judge_usage: TokenUsage,
    pub evaluatee_cost_usd: Usd,
    pub judge_cost_usd: Usd,
    pub cost_usd: Usd,
}

/// The judge's four-field verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawJudgeVerdict")]
pub struct JudgeVerdict {
    pub extracted_answer: String,
    pub reasoning_note: String,
    pub correct: bool,
    pub confidence: u8,
}

#[derive(Deserialize)]
struct RawJudgeVerdict {
    extracted_answer: String,
    reasoning_note: String,
    correct: bool,
    confidence: u8,
}

impl TryFrom<RawJudgeVerdict> for JudgeVerdict {
    type Error = DomainError;

    fn try_from(raw: RawJudgeVerdict) -> Result<Self, DomainError> {
        require(raw.confidence <= 100, "confidence out of range 0-100")?;
        Ok(JudgeVerdict {
            extracted_answer: raw.extracted_answer,
            reasoning_note: raw.reasoning_note,
            correct: raw.correct,
            confidence: raw.confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_item() -> AssessmentItem {
        AssessmentItem {
            item_id: ItemId::from_words(1, 2),
            objective: LearningObjective {
                code: "4.2.2".into(),
                description: "Apply techniques for creating new distributions".into(),
                subject: "Statistics".into(),
                topic: "Transformations".into(),
            },
            archetype: DifficultyArchetype::QuantitativeCalculation,
            draft: ItemDraft {
                stem: "stem".into(),
                correct_answer: "answer".into(),
                rationale: "because".into(),
                assumptions: vec![],
            },
            distractors: vec![
                Distractor {
                    text: "d1".into(),
                    misconception_rationale: "m1".into(),
                },
                Distractor {
                    text: "d2".into(),
                    misconception_rationale: "m2".into(),
                },
                Distractor {
                    text: "d3".into(),
                    misconception_rationale: "m3".into(),
                },
            ],
            sector_labels: BTreeSet::new(),
            item_failure_flag: false,
            distractor_failure_flag: false,
        }
    }

    #[test]
    fn well_formed_item_has_no_violations() {
        assert!(validate_item(&sample_item()).is_empty());
    }

    #[test]
    fn short_distractor_list_is_a_violation() {
        let mut item = sample_item();
        item.distractors.pop();
        let violations = validate_item(&item);
        assert_eq!(violations, vec!["distractor count 2 != 3".to_string()]);
    }

    #[test]
    fn inconsistent_verdict_rejected_at_parse() {
        let err = serde_json::from_str::<Verdict>(r#"{"ok": false, "issues": []}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<Verdict>(
            r#"{"ok": true, "issues": [{"issue_type": "ambiguity", "description": "x"}]}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn verdict_accepts_type_alias_field() {
        let v: Verdict = serde_json::from_str(
            r#"{"ok": false, "issues": [{"type": "ambiguity", "description": "two readings"}]}"#,
        )
        .unwrap();
        assert!(!v.ok);
        assert_eq!(v.issues[0].issue_type, IssueType::Ambiguity);
    }

    #[test]
    fn keyword_spec_bounds_search_strings() {
        let four = r#"{"search_strings": ["a", "b", "c", "d"]}"#;
        assert!(serde_json::from_str::<KeywordSpec>(four).is_err());
        let one = r#"{"search_strings": ["a"]}"#;
        assert!(serde_json::from_str::<KeywordSpec>(one).is_ok());
    }

    #[test]
    fn shuffle_map_must_be_bijection() {
        assert!(serde_json::from_str::<ShuffleMap>(r#"["A","A","B","C"]"#).is_err());
        let m: ShuffleMap = serde_json::from_str(r#"["C","A","D","B"]"#).unwrap();
        assert_eq!(m.slot_for_letter(Letter::C), 0);
    }

    #[test]
    fn judge_verdict_confidence_range() {
        let over = r#"{"extracted_answer":"x","reasoning_note":"y","correct":true,"confidence":150}"#;
        assert!(serde_json::from_str::<JudgeVerdict>(over).is_err());
    }

    #[test]
    fn wiki_notes_need_provenance() {
        let bad = r#"{"facts": [{"name": "n", "text": "t", "provenance": ""}]}"#;
        assert!(serde_json::from_str::<WikiNotes>(bad).is_err());
    }
}
