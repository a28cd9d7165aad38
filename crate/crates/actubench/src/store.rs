//! Append-only persistence of stage events, answer rows, and finished items.
//!
//! The store is a JSON-lines log ordered by a global monotone sequence
//! number; that file is also the cross-language export format. Appends are
//! atomic and durable before they return. Reporting never reads live data:
//! `freeze()` produces an immutable [`Snapshot`] whose content hash covers
//! every included record (timestamps excluded, so identical record sets hash
//! identically regardless of when they were written).

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    AssessmentItem, BenchmarkAnswer, Distractor, ItemDraft, ItemId, JudgeAnswer, KeywordSpec,
    Sector, TokenUsage, Verdict, WikiNotes,
};
use crate::money::Usd;
use crate::pipeline::StageKind;
use crate::wiki::WikiExtract;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("payload does not match schema for stage {stage:?}: {reason}")]
    SchemaMismatch { stage: StageKind, reason: String },
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt store line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("cannot freeze while {0} writer(s) are active")]
    WritersActive(usize),
}

/// One persisted pipeline-stage output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub seq: u64,
    pub item_id: ItemId,
    pub stage: StageKind,
    pub payload: serde_json::Value,
    pub usage: TokenUsage,
    pub cost_usd: Usd,
    /// SHA-256 of the prompt template used; empty for non-LLM stages.
    pub template_hash: String,
    pub timestamp: DateTime<Utc>,
}

/// Stage output before the store assigns its sequence number.
#[derive(Debug, Clone)]
pub struct NewStageEvent {
    pub item_id: ItemId,
    pub stage: StageKind,
    pub payload: serde_json::Value,
    pub usage: TokenUsage,
    pub cost_usd: Usd,
    pub template_hash: String,
}

/// Audit marker for an item run that aborted before finishing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub item_id: ItemId,
    pub failed_stage: StageKind,
    pub reason: String,
}

/// Everything the store can hold, tagged for the JSON-lines format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordBody {
    Stage(StageEvent),
    McqAnswer(BenchmarkAnswer),
    JudgeAnswer(JudgeAnswer),
    Item(AssessmentItem),
    Aborted(AbortRecord),
    RunManifest(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub body: RecordBody,
}

fn validate_stage_payload(stage: StageKind, payload: &serde_json::Value) -> Result<(), String> {
    fn check<T: serde::de::DeserializeOwned>(payload: &serde_json::Value) -> Result<(), String> {
        serde_json::from_value::<T>(payload.clone())
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
    match stage {
        StageKind::Keywords => check::<KeywordSpec>(payload),
        StageKind::WikiFetch => check::<Vec<WikiExtract>>(payload),
        StageKind::WikiNotes => check::<WikiNotes>(payload),
        StageKind::ItemDraft | StageKind::RepairItem => check::<ItemDraft>(payload),
        StageKind::VerifyItem
        | StageKind::RecheckItem
        | StageKind::VerifyDistractors
        | StageKind::RecheckDistractors => check::<Verdict>(payload),
        StageKind::Distractors | StageKind::RepairDistractors => {
            let set: Vec<Distractor> = serde_json::from_value(payload.clone())
                .map_err(|e| e.to_string())?;
            if set.len() != 3 {
                return Err(format!("distractor count {} != 3", set.len()));
            }
            Ok(())
        }
        StageKind::TopicLabels => check::<BTreeSet<Sector>>(payload),
    }
}

struct Inner {
    records: Vec<Record>,
    file: Option<File>,
}

/// Append-only store. Multiple concurrent appenders are allowed; appends
/// are linearized by an internal lock.
pub struct StageStore {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
    active_writers: AtomicUsize,
}

impl StageStore {
    /// Volatile store (tests, dry runs).
    pub fn in_memory() -> Self {
        StageStore {
            inner: Mutex::new(Inner {
                records: Vec::new(),
                file: None,
            }),
            path: None,
            active_writers: AtomicUsize::new(0),
        }
    }

    /// Open (or create) a JSON-lines store file, replaying existing records.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut records = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: Record =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        line: i + 1,
                        reason: e.to_string(),
                    })?;
                records.push(record);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(StageStore {
            inner: Mutex::new(Inner {
                records,
                file: Some(file),
            }),
            path: Some(path.to_path_buf()),
            active_writers: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Register an active writer (a pipeline run or benchmark run).
    /// `freeze()` refuses while any guard is alive.
    pub fn writer_guard(self: &Arc<Self>) -> WriterGuard {
        self.active_writers.fetch_add(1, Ordering::SeqCst);
        WriterGuard {
            store: Arc::clone(self),
        }
    }

    fn append_body(&self, body: RecordBody) -> Result<u64, StoreError> {
        self.append_with(|_| body)
    }

    fn append_with(
        &self,
        make: impl FnOnce(u64) -> RecordBody,
    ) -> Result<u64, StoreError> {
        let mut inner = self.inner.lock().unwrap();
        let seq = inner.records.last().map(|r| r.seq + 1).unwrap_or(0);
        let record = Record {
            seq,
            timestamp: Utc::now(),
            body: make(seq),
        };
        if let Some(file) = inner.file.as_mut() {
            let line = serde_json::to_string(&record).expect("record serialization");
            writeln!(file, "{line}")?;
            file.flush()?;
            file.sync_all()?;
        }
        inner.records.push(record);
        Ok(seq)
    }

    /// Append one stage event; durable before return. The payload must
    /// validate against the stage's schema.
    pub fn append_stage(&self, event: NewStageEvent) -> Result<u64, StoreError> {
        validate_stage_payload(event.stage, &event.payload).map_err(|reason| {
            StoreError::SchemaMismatch {
                stage: event.stage,
                reason,
            }
        })?;
        self.append_with(|seq| {
            RecordBody::Stage(StageEvent {
                seq,
                item_id: event.item_id,
                stage: event.stage,
                payload: event.payload,
                usage: event.usage,
                cost_usd: event.cost_usd,
                template_hash: event.template_hash,
                timestamp: Utc::now(),
            })
        })
    }

    pub fn append_mcq_answer(&self, answer: BenchmarkAnswer) -> Result<u64, StoreError> {
        self.append_body(RecordBody::McqAnswer(answer))
    }

    pub fn append_judge_answer(&self, answer: JudgeAnswer) -> Result<u64, StoreError> {
        self.append_body(RecordBody::JudgeAnswer(answer))
    }

    pub fn append_item(&self, item: AssessmentItem) -> Result<u64, StoreError> {
        self.append_body(RecordBody::Item(item))
    }

    pub fn append_abort(&self, abort: AbortRecord) -> Result<u64, StoreError> {
        self.append_body(RecordBody::Aborted(abort))
    }

    pub fn append_run_manifest(&self, manifest: serde_json::Value) -> Result<u64, StoreError> {
        self.append_body(RecordBody::RunManifest(manifest))
    }

    /// Stage events for one item, in sequence order.
    pub fn query_trace(&self, item_id: ItemId) -> Result<Vec<StageEvent>, StoreError> {
        let inner = self.inner.lock().unwrap();
        let trace: Vec<StageEvent> = inner
            .records
            .iter()
            .filter_map(|r| match &r.body {
                RecordBody::Stage(ev) if ev.item_id == item_id => Some(ev.clone()),
                _ => None,
            })
            .collect();
        if trace.is_empty() {
            return Err(StoreError::UnknownItem(item_id));
        }
        Ok(trace)
    }

    pub fn record_count(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    /// Freeze the current contents into an immutable snapshot. Requires
    /// quiescence: errors if any writer guard is alive.
    pub fn freeze(&self) -> Result<Snapshot, StoreError> {
        let active = self.active_writers.load(Ordering::SeqCst);
        if active > 0 {
            return Err(StoreError::WritersActive(active));
        }
        let inner = self.inner.lock().unwrap();
        Ok(Snapshot::from_records(inner.records.clone()))
    }
}

pub struct WriterGuard {
    store: Arc<StageStore>,
}

impl Drop for WriterGuard {
    fn drop(&mut self) {
        self.store.active_writers.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Canonical bytes of one record for hashing: seq + body with all
/// timestamps zeroed, object keys sorted by serde_json.
fn canonical_record_bytes(record: &Record) -> Vec<u8> {
    use chrono::TimeZone;
    let epoch = Utc.timestamp_opt(0, 0).unwrap();
    let mut body = record.body.clone();
    if let RecordBody::Stage(ev) = &mut body {
        ev.timestamp = epoch;
    }
    #[derive(Serialize)]
    struct Hashed {
        seq: u64,
        body: RecordBody,
    }
    serde_json::to_vec(&Hashed {
        seq: record.seq,
        body,
    })
    .expect("record serialization")
}

/// An immutable, content-hashed view of the store. All analytics read from
/// a snapshot, never from live data.
#[derive(Debug, Clone)]
pub struct Snapshot {
    snapshot_id: String,
    created_at: DateTime<Utc>,
    content_hash: String,
    records: Vec<Record>,
}

impl Snapshot {
    pub fn from_records(records: Vec<Record>) -> Self {
        let mut hasher = Sha256::new();
        for record in &records {
            hasher.update(canonical_record_bytes(record));
            hasher.update(b"\n");
        }
        let content_hash = hex::encode(hasher.finalize());
        Snapshot {
            snapshot_id: format!("snap-{}", &content_hash[..16]),
            created_at: Utc::now(),
            content_hash,
            records,
        }
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn stage_events(&self) -> impl Iterator<Item = &StageEvent> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Stage(ev) => Some(ev),
            _ => None,
        })
    }

    pub fn items(&self) -> impl Iterator<Item = &AssessmentItem> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Item(item) => Some(item),
            _ => None,
        })
    }

    pub fn mcq_answers(&self) -> impl Iterator<Item = &BenchmarkAnswer> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::McqAnswer(a) => Some(a),
            _ => None,
        })
    }

    pub fn judge_answers(&self) -> impl Iterator<Item = &JudgeAnswer> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::JudgeAnswer(a) => Some(a),
            _ => None,
        })
    }

    pub fn aborts(&self) -> impl Iterator<Item = &AbortRecord> {
        self.records.iter().filter_map(|r| match &r.body {
            RecordBody::Aborted(a) => Some(a),
            _ => None,
        })
    }

    /// Stage events for one item, in sequence order.
    pub fn trace(&self, item_id: ItemId) -> Vec<&StageEvent> {
        self.stage_events()
            .filter(|ev| ev.item_id == item_id)
            .collect()
    }

    /// Manifest file describing the snapshot.
    pub fn write_manifest(&self, path: &Path) -> Result<(), StoreError> {
        let manifest = serde_json::json!({
            "snapshot_id": self.snapshot_id,
            "created_at": self.created_at.to_rfc3339(),
            "content_hash": self.content_hash,
            "record_count": self.records.len(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&manifest).unwrap() + "\n")?;
        Ok(())
    }

    /// JSON-lines dump ordered by seq: the cross-language fixture format.
    pub fn export_jsonl(&self, path: &Path) -> Result<(), StoreError> {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serialization"));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}
