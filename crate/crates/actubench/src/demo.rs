//! Canned scripted runs for offline use.
//!
//! Bundles a sample learning objective, per-role response scripts and a
//! matching wiki fixture so a full generation run works with no network and
//! no API keys. Used by the CLI's `--dry-run` mode and by the test suite.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use crate::adapter::{ModelRegistry, Role, ScriptedAdapter};
use crate::domain::LearningObjective;
use crate::pipeline::{ArchetypeWeights, Pipeline, PipelineConfig};
use crate::store::StageStore;
use crate::wiki::{request_key, FixtureWikiTransport, WikiClient};

/// Per-query search limit the demo fixture is keyed for.
pub const DEMO_WIKI_LIMIT: usize = 2;

const SEARCH_A: &str = "embedded option life insurance";
const SEARCH_B: &str = "guaranteed annuity option";
const TITLE_A: &str = "Embedded option";
const TITLE_B: &str = "Guaranteed annuity option";

pub fn sample_objective() -> LearningObjective {
    LearningObjective {
        code: "5.3.1".into(),
        description: "Assess the valuation of options and guarantees embedded in life insurance liabilities".into(),
        subject: "Life Insurance".into(),
        topic: "Options and guarantees".into(),
    }
}

// ---------------------------------------------------------------------------
// Agent scripts
// ---------------------------------------------------------------------------

pub fn keywords_json() -> String {
    json!({
        "primary_terms": ["embedded option", "guaranteed annuity option"],
        "synonyms_abbreviations": ["GAO"],
        "exclusions": ["exchange-traded option"],
        "search_strings": [SEARCH_A, SEARCH_B],
    })
    .to_string()
}

pub fn notes_json() -> String {
    json!({
        "facts": [
            {
                "name": "embedded-option-definition",
                "text": "An embedded option is a right attached to an insurance contract that the policyholder may exercise against the insurer.",
                "provenance": TITLE_A,
            },
            {
                "name": "gao-mechanics",
                "text": "A guaranteed annuity option lets the policyholder convert a maturity amount at a guaranteed annuity rate regardless of market rates.",
                "provenance": TITLE_B,
            },
        ],
    })
    .to_string()
}

pub fn draft_json() -> String {
    json!({
        "stem": "A with-profits policy matures with a fund of 100,000 and carries a guaranteed annuity option at a rate of 11 per 100 of fund. The open-market annuity rate is 9 per 100. Which statement best describes the option's value at maturity?",
        "correct_answer": "The option is in the money; its exercise value is the excess annuity secured, roughly 2 per 100 of fund per annum.",
        "rationale": "The guaranteed rate exceeds the market rate, so converting at the guarantee secures 11 rather than 9 per 100 of fund; the option's intrinsic value is the annuitised difference.",
        "assumptions": ["The policyholder annuitises the full fund at maturity."],
    })
    .to_string()
}

pub fn repaired_draft_json() -> String {
    json!({
        "stem": "A with-profits policy matures with a fund of 100,000 and carries a guaranteed annuity option at a rate of 11 per 100 of fund per annum. The open-market level annuity rate for the same life is 9 per 100 per annum. Which statement best describes the option's value at maturity?",
        "correct_answer": "The option is in the money; exercising secures an extra 2 per 100 of fund per annum relative to the open market.",
        "rationale": "The guaranteed rate exceeds the market rate, so the annuity secured under the guarantee strictly dominates the open-market annuity for the same premium.",
        "assumptions": ["The policyholder annuitises the full fund at maturity.", "Both annuities are level and payable on the same frequency."],
    })
    .to_string()
}

pub fn verdict_pass_json() -> String {
    json!({"ok": true, "issues": []}).to_string()
}

pub fn item_verdict_fail_json() -> String {
    json!({
        "ok": false,
        "issues": [{
            "type": "underspecification",
            "description": "The annuity frequency and form are not pinned down, so the comparison of rates is not well defined.",
        }],
    })
    .to_string()
}

pub fn distractors_json() -> String {
    json!([
        {
            "text": "The option is worthless because the fund value itself is unchanged by the annuity rate.",
            "misconception_rationale": "Confuses fund value with the value of the conversion right.",
        },
        {
            "text": "The option is out of the money because market rates are below the guarantee.",
            "misconception_rationale": "Inverts the moneyness comparison for annuity guarantees.",
        },
        {
            "text": "The option's value equals the full guaranteed annuity of 11 per 100 of fund.",
            "misconception_rationale": "Takes the gross guaranteed amount instead of the excess over market.",
        },
    ])
    .to_string()
}

pub fn repaired_distractors_json() -> String {
    json!([
        {
            "text": "The option is worthless because the fund value itself is unchanged by the annuity rate.",
            "misconception_rationale": "Confuses fund value with the value of the conversion right.",
        },
        {
            "text": "The option is out of the money because market rates are below the guarantee.",
            "misconception_rationale": "Inverts the moneyness comparison for annuity guarantees.",
        },
        {
            "text": "The option's value is 9 per 100 of fund, the open-market rate forgone.",
            "misconception_rationale": "Uses the market rate rather than the excess of guarantee over market.",
        },
    ])
    .to_string()
}

pub fn distractor_verdict_fail_json() -> String {
    json!({
        "ok": false,
        "issues": [{
            "type": "not_plausible",
            "description": "The third option restates the guaranteed amount verbatim from the stem and would not tempt a prepared candidate.",
        }],
    })
    .to_string()
}

pub fn labels_json() -> String {
    json!(["life"]).to_string()
}

/// Per-role response scripts for one item run.
#[derive(Debug, Clone, Default)]
pub struct DemoScripts {
    pub agent_a: Vec<String>,
    pub agent_b: Vec<String>,
    pub agent_c: Vec<String>,
    pub auxiliary: Vec<String>,
}

impl DemoScripts {
    /// Both verifications pass first time.
    pub fn happy() -> Self {
        DemoScripts {
            agent_a: vec![keywords_json(), draft_json()],
            agent_b: vec![distractors_json()],
            agent_c: vec![verdict_pass_json(), verdict_pass_json()],
            auxiliary: vec![notes_json(), labels_json()],
        }
    }

    /// Item verification fails, one repair; recheck outcome configurable.
    pub fn item_repair(recheck_ok: bool) -> Self {
        let recheck = if recheck_ok {
            verdict_pass_json()
        } else {
            item_verdict_fail_json()
        };
        DemoScripts {
            agent_a: vec![keywords_json(), draft_json(), repaired_draft_json()],
            agent_b: vec![distractors_json()],
            agent_c: vec![item_verdict_fail_json(), recheck, verdict_pass_json()],
            auxiliary: vec![notes_json(), labels_json()],
        }
    }

    /// Distractor verification fails, one repair; recheck configurable.
    pub fn distractor_repair(recheck_ok: bool) -> Self {
        let recheck = if recheck_ok {
            verdict_pass_json()
        } else {
            distractor_verdict_fail_json()
        };
        DemoScripts {
            agent_a: vec![keywords_json(), draft_json()],
            agent_b: vec![distractors_json(), repaired_distractors_json()],
            agent_c: vec![verdict_pass_json(), distractor_verdict_fail_json(), recheck],
            auxiliary: vec![notes_json(), labels_json()],
        }
    }

    /// Both verifications fail once and both repairs succeed on recheck.
    pub fn both_repairs() -> Self {
        DemoScripts {
            agent_a: vec![keywords_json(), draft_json(), repaired_draft_json()],
            agent_b: vec![distractors_json(), repaired_distractors_json()],
            agent_c: vec![
                item_verdict_fail_json(),
                verdict_pass_json(),
                distractor_verdict_fail_json(),
                verdict_pass_json(),
            ],
            auxiliary: vec![notes_json(), labels_json()],
        }
    }

    /// Concatenate another run's scripts onto this one (role by role), for
    /// driving several sequential item runs off one set of adapters.
    pub fn extend(&mut self, other: DemoScripts) {
        self.agent_a.extend(other.agent_a);
        self.agent_b.extend(other.agent_b);
        self.agent_c.extend(other.agent_c);
        self.auxiliary.extend(other.auxiliary);
    }
}

// ---------------------------------------------------------------------------
// Wiki fixture
// ---------------------------------------------------------------------------

fn search_key(query: &str) -> String {
    let limit = DEMO_WIKI_LIMIT.to_string();
    request_key(&[
        ("action", "query"),
        ("list", "search"),
        ("srsearch", query),
        ("srlimit", &limit),
        ("format", "json"),
    ])
}

fn extract_key(title: &str) -> String {
    request_key(&[
        ("action", "query"),
        ("prop", "extracts"),
        ("explaintext", "1"),
        ("titles", title),
        ("format", "json"),
    ])
}

/// Fixture map covering both demo search strings and their top articles.
pub fn wiki_fixture_map() -> BTreeMap<String, serde_json::Value> {
    let mut map = BTreeMap::new();
    map.insert(
        search_key(SEARCH_A),
        json!({"query": {"search": [{"title": TITLE_A}]}}),
    );
    map.insert(
        search_key(SEARCH_B),
        json!({"query": {"search": [{"title": TITLE_B}]}}),
    );
    map.insert(
        extract_key(TITLE_A),
        json!({"query": {"pages": {"101": {"pageid": 101, "title": TITLE_A,
            "extract": "An embedded option is a component of a financial contract that grants one party a right but not an obligation, such as the right of a policyholder to surrender a policy or convert a maturity value on guaranteed terms."}}}}),
    );
    map.insert(
        extract_key(TITLE_B),
        json!({"query": {"pages": {"102": {"pageid": 102, "title": TITLE_B,
            "extract": "A guaranteed annuity option gives the holder of a pension or life policy the right to convert the accumulated fund into an annuity at a rate fixed at policy inception, exposing the insurer to interest-rate and longevity risk."}}}}),
    );
    map
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Build a fully offline pipeline from the given scripts. All four roles
/// are bound to the registry's `openai/gpt-5-nano` entry so costs are
/// nonzero and exactly priced.
pub fn build_pipeline(
    scripts: DemoScripts,
    seed: u64,
    store: Arc<StageStore>,
) -> Pipeline {
    let registry = ModelRegistry::bundled();
    let spec = registry.get("openai/gpt-5-nano").expect("demo model").clone();
    fn texts(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    let mut bindings = BTreeMap::new();
    for (role, script) in [
        (Role::AgentA, &scripts.agent_a),
        (Role::AgentB, &scripts.agent_b),
        (Role::AgentC, &scripts.agent_c),
        (Role::Auxiliary, &scripts.auxiliary),
    ] {
        bindings.insert(
            role,
            crate::adapter::AdapterBinding::new(
                role,
                spec.clone(),
                Arc::new(ScriptedAdapter::from_texts(&texts(script))),
            ),
        );
    }
    let wiki = WikiClient::new(Arc::new(FixtureWikiTransport::from_map(wiki_fixture_map())));
    Pipeline {
        config: PipelineConfig {
            bindings,
            archetype_weights: ArchetypeWeights::default(),
            rng_seed: seed,
            wiki_per_query_limit: DEMO_WIKI_LIMIT,
        },
        wiki: Arc::new(wiki),
        store,
    }
}
