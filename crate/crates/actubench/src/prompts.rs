//! Versioned prompt templates for the generation pipeline.
//!
//! Templates are text assets compiled into the binary; `{{name}}`
//! placeholders are substituted at call time. Each stage event records the
//! SHA-256 of the template it used, so a stored trace pins the exact prompt
//! wording that produced it.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

/// Nudge appended on the single format retry after malformed agent JSON.
pub const JSON_RETRY_NUDGE: &str = "Your previous reply was not valid JSON. Reply with valid JSON only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

impl Template {
    /// Hex SHA-256 of the raw template text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    /// Substitute `{{key}}` placeholders. Unknown placeholders are left in
    /// place so a missing variable is visible in the stored prompt.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> String {
        let mut out = self.text.to_string();
        for (key, value) in vars {
            out = out.replace(&format!("{{{{{key}}}}}"), value);
        }
        out
    }
}

macro_rules! template {
    ($name:ident, $file:literal) => {
        pub const $name: Template = Template {
            name: $file,
            text: include_str!(concat!("../assets/prompts/", $file, ".txt")),
        };
    };
}

template!(KEYWORDS, "keywords");
template!(WIKI_NOTES, "wiki_notes");
template!(ITEM_DRAFT, "item_draft");
template!(ITEM_REPAIR, "item_repair");
template!(VERIFY_ITEM, "verify_item");
template!(DISTRACTORS, "distractors");
template!(DISTRACTOR_REPAIR, "distractor_repair");
template!(VERIFY_DISTRACTORS, "verify_distractors");
template!(TOPIC_LABELS, "topic_labels");

pub const ALL: [Template; 9] = [
    KEYWORDS,
    WIKI_NOTES,
    ITEM_DRAFT,
    ITEM_REPAIR,
    VERIFY_ITEM,
    DISTRACTORS,
    DISTRACTOR_REPAIR,
    VERIFY_DISTRACTORS,
    TOPIC_LABELS,
];
