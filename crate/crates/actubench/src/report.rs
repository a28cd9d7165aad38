//! Static report bundle: a machine-readable JSON summary, per-figure CSV
//! extracts and a self-contained HTML page. Everything is a pure function
//! of the frozen snapshot, so re-emitting from the same snapshot produces
//! byte-identical files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::adapter::ModelRegistry;
use crate::analytics::{
    self, AnalyticsError, Correlation, CostAccuracyPoint, LeaderboardRow, McqVsJudge,
    PairedDeltas, RepairStats,
};
use crate::domain::Sector;
use crate::store::{RecordBody, Snapshot};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("analytics failure: {0}")]
    Analytics(#[from] AnalyticsError),
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    fs::write(path, bytes).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// First MCQ and judge run ids recorded in the snapshot's manifests, in
/// append order.
pub fn discover_runs(snapshot: &Snapshot) -> (Option<String>, Option<String>) {
    let mut mcq = None;
    let mut judge = None;
    for record in snapshot.records() {
        if let RecordBody::RunManifest(m) = &record.body {
            let run_id = m.get("run_id").and_then(|v| v.as_str()).map(String::from);
            match m.get("benchmark").and_then(|v| v.as_str()) {
                Some("mcq") if mcq.is_none() => mcq = run_id,
                Some("judge") if judge.is_none() => judge = run_id,
                _ => {}
            }
        }
    }
    (mcq, judge)
}

/// Everything the report contains, computed once and reused by all output
/// formats.
#[derive(Debug, Clone, Serialize)]
pub struct ReportData {
    pub snapshot_id: String,
    pub content_hash: String,
    pub mcq_run_id: Option<String>,
    pub judge_run_id: Option<String>,
    pub leaderboard: Vec<LeaderboardRow>,
    pub sectors: Vec<(Sector, usize, f64)>,
    pub pareto: Vec<CostAccuracyPoint>,
    pub pairs: Option<PairedDeltas>,
    pub repair: RepairStats,
    pub mcq_vs_judge: Option<McqVsJudge>,
}

pub fn compute_report(
    snapshot: &Snapshot,
    registry: &ModelRegistry,
) -> Result<ReportData, ReportError> {
    let (mcq_run_id, judge_run_id) = discover_runs(snapshot);

    let leaderboard = match &mcq_run_id {
        Some(run) => analytics::leaderboard(snapshot, run, judge_run_id.as_deref(), registry)?,
        None => Vec::new(),
    };
    let sectors: Vec<(Sector, usize, f64)> = match &mcq_run_id {
        Some(run) => analytics::sector_accuracy(snapshot, run)
            .into_iter()
            .map(|(s, (count, acc))| (s, count, acc))
            .collect(),
        None => Vec::new(),
    };
    let points: Vec<CostAccuracyPoint> = leaderboard
        .iter()
        .filter(|r| !r.excluded)
        .map(|r| CostAccuracyPoint {
            model_key: r.model_key.clone(),
            cost_usd: r.total_cost_usd,
            accuracy: r.mcq_accuracy,
        })
        .collect();
    let pareto = analytics::pareto_front(&points);
    let pairs = match &mcq_run_id {
        Some(run) => Some(analytics::paired_variant_delta(snapshot, run, registry)?),
        None => None,
    };
    let mcq_vs_judge = match (&mcq_run_id, &judge_run_id) {
        (Some(m), Some(j)) => match analytics::mcq_vs_judge(snapshot, m, j) {
            Ok(v) => Some(v),
            Err(AnalyticsError::NoCommonModels) => None,
            Err(e) => return Err(e.into()),
        },
        _ => None,
    };
    Ok(ReportData {
        snapshot_id: snapshot.snapshot_id().to_string(),
        content_hash: snapshot.content_hash().to_string(),
        mcq_run_id,
        judge_run_id,
        leaderboard,
        sectors,
        pareto,
        pairs,
        repair: analytics::repair_stats(snapshot),
        mcq_vs_judge,
    })
}

// ---------------------------------------------------------------------------
// CSV extracts
// ---------------------------------------------------------------------------

fn write_leaderboard_csv(path: &Path, data: &ReportData) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model_key",
        "mcq_accuracy_pct",
        "judge_accuracy_pct",
        "total_cost_usd",
        "variant",
        "excluded",
    ])?;
    for row in &data.leaderboard {
        w.write_record([
            row.model_key.as_str(),
            &analytics::format_pct(row.mcq_accuracy),
            &row.judge_accuracy
                .map(analytics::format_pct)
                .unwrap_or_default(),
            &analytics::format_cost(row.total_cost_usd),
            &row.variant
                .map(|v| serde_json::to_value(v).unwrap().as_str().unwrap().to_string())
                .unwrap_or_default(),
            if row.excluded { "true" } else { "false" },
        ])?;
    }
    write_file(path, &w.into_inner().expect("csv buffer"))
}

fn write_sectors_csv(path: &Path, data: &ReportData) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sector", "item_count", "mean_accuracy_pct"])?;
    for (sector, count, acc) in &data.sectors {
        w.write_record([
            sector.as_str(),
            &count.to_string(),
            &analytics::format_pct(*acc),
        ])?;
    }
    write_file(path, &w.into_inner().expect("csv buffer"))
}

fn write_pareto_csv(path: &Path, data: &ReportData) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_key", "total_cost_usd", "mcq_accuracy_pct"])?;
    for p in &data.pareto {
        w.write_record([
            p.model_key.as_str(),
            &analytics::format_cost(p.cost_usd),
            &analytics::format_pct(p.accuracy),
        ])?;
    }
    write_file(path, &w.into_inner().expect("csv buffer"))
}

fn write_pairs_csv(path: &Path, data: &ReportData) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "base_model_key",
        "acc_thinking_pct",
        "acc_standard_pct",
        "delta_pp",
        "cost_multiple",
    ])?;
    if let Some(pairs) = &data.pairs {
        for p in &pairs.pairs {
            w.write_record([
                p.base_model_key.as_str(),
                &analytics::format_pct(p.acc_thinking),
                &analytics::format_pct(p.acc_standard),
                &format!("{:.1}", p.delta_pp),
                &p.cost_multiple
                    .map(|m| format!("{m:.2}"))
                    .unwrap_or_default(),
            ])?;
        }
    }
    write_file(path, &w.into_inner().expect("csv buffer"))
}

fn write_mcq_vs_judge_csv(path: &Path, data: &ReportData) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_key", "mcq_accuracy_pct", "judge_accuracy_pct"])?;
    if let Some(cmp) = &data.mcq_vs_judge {
        for p in &cmp.pairs {
            w.write_record([
                p.model_key.as_str(),
                &analytics::format_pct(p.mcq_accuracy),
                &analytics::format_pct(p.judge_accuracy),
            ])?;
        }
    }
    write_file(path, &w.into_inner().expect("csv buffer"))
}

// ---------------------------------------------------------------------------
// HTML page
// ---------------------------------------------------------------------------

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    if rows.is_empty() {
        return "<p class=\"meta\">none</p>".to_string();
    }
    let mut html = String::from("<table><tr>");
    for h in headers {
        html.push_str(&format!("<th>{}</th>", escape(h)));
    }
    html.push_str("</tr>");
    for row in rows {
        html.push_str("<tr>");
        for cell in row {
            html.push_str(&format!("<td>{}</td>", escape(cell)));
        }
        html.push_str("</tr>");
    }
    html.push_str("</table>");
    html
}

fn correlation_text(c: &Correlation) -> String {
    match c {
        Correlation::Value { value } => format!("{value:.3}"),
        Correlation::Degenerate => "degenerate".to_string(),
    }
}

fn item_browser_html(snapshot: &Snapshot, data: &ReportData) -> String {
    let mut items: Vec<_> = snapshot.items().collect();
    items.sort_by_key(|i| i.item_id);
    if items.is_empty() {
        return "<p class=\"meta\">none</p>".to_string();
    }
    let mut html = String::new();
    for item in items {
        let mut body = String::new();
        body.push_str(&format!("<pre>{}</pre>", escape(&item.draft.stem)));
        body.push_str("<ul>");
        body.push_str(&format!(
            "<li><strong>Correct:</strong> {}</li>",
            escape(&item.draft.correct_answer)
        ));
        for d in &item.distractors {
            body.push_str(&format!("<li>{}</li>", escape(&d.text)));
        }
        body.push_str("</ul>");
        let labels: Vec<&str> = item.sector_labels.iter().map(|s| s.as_str()).collect();
        body.push_str(&format!(
            "<p class=\"meta\">archetype: {} &middot; sectors: {}{}</p>",
            item.archetype.as_str(),
            if labels.is_empty() { "(none)".to_string() } else { labels.join(", ") },
            if item.item_failure_flag || item.distractor_failure_flag {
                " &middot; <span class=\"flag\">flagged</span>"
            } else {
                ""
            },
        ));
        let mut responses: Vec<Vec<String>> = Vec::new();
        if let Some(run) = &data.mcq_run_id {
            for ans in snapshot
                .mcq_answers()
                .filter(|a| &a.run_id == run && a.item_id == item.item_id)
            {
                responses.push(vec![
                    ans.model_key.clone(),
                    "mcq".into(),
                    ans.raw_response.clone(),
                    if ans.correct { "correct" } else { "incorrect" }.into(),
                ]);
            }
        }
        if let Some(run) = &data.judge_run_id {
            for ans in snapshot
                .judge_answers()
                .filter(|a| &a.run_id == run && a.item_id == item.item_id)
            {
                responses.push(vec![
                    ans.model_key.clone(),
                    "judge".into(),
                    ans.raw_response.clone(),
                    if ans.correct { "correct" } else { "incorrect" }.into(),
                ]);
            }
        }
        if !responses.is_empty() {
            body.push_str(&table(&["model", "benchmark", "raw response", "scored"], &responses));
        }
        html.push_str(&format!(
            "<details><summary>{}</summary>{}</details>",
            item.item_id, body
        ));
    }
    html
}

fn render_html(snapshot: &Snapshot, data: &ReportData) -> String {
    let template = include_str!("../assets/report.html");

    let included: Vec<Vec<String>> = data
        .leaderboard
        .iter()
        .filter(|r| !r.excluded)
        .map(|r| {
            vec![
                r.model_key.clone(),
                analytics::format_pct(r.mcq_accuracy),
                r.judge_accuracy
                    .map(analytics::format_pct)
                    .unwrap_or_else(|| "-".into()),
                analytics::format_cost(r.total_cost_usd),
            ]
        })
        .collect();
    let excluded: Vec<Vec<String>> = data
        .leaderboard
        .iter()
        .filter(|r| r.excluded)
        .map(|r| {
            vec![
                r.model_key.clone(),
                r.exclusion_reason.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let sectors: Vec<Vec<String>> = data
        .sectors
        .iter()
        .map(|(s, count, acc)| {
            vec![
                s.as_str().to_string(),
                count.to_string(),
                analytics::format_pct(*acc),
            ]
        })
        .collect();
    let pareto: Vec<Vec<String>> = data
        .pareto
        .iter()
        .map(|p| {
            vec![
                p.model_key.clone(),
                analytics::format_cost(p.cost_usd),
                analytics::format_pct(p.accuracy),
            ]
        })
        .collect();
    let pairs: Vec<Vec<String>> = data
        .pairs
        .iter()
        .flat_map(|ps| &ps.pairs)
        .map(|p| {
            vec![
                p.base_model_key.clone(),
                analytics::format_pct(p.acc_standard),
                analytics::format_pct(p.acc_thinking),
                format!("{:+.1}", p.delta_pp),
                p.cost_multiple
                    .map(|m| format!("{m:.2}x"))
                    .unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let mvj: Vec<Vec<String>> = data
        .mcq_vs_judge
        .iter()
        .flat_map(|c| &c.pairs)
        .map(|p| {
            vec![
                p.model_key.clone(),
                analytics::format_pct(p.mcq_accuracy),
                analytics::format_pct(p.judge_accuracy),
            ]
        })
        .collect();
    let mut mvj_html = table(&["model", "MCQ %", "Judge %"], &mvj);
    if let Some(cmp) = &data.mcq_vs_judge {
        mvj_html.push_str(&format!(
            "<p class=\"meta\">Spearman rho: {} &middot; Kendall tau: {}</p>",
            correlation_text(&cmp.spearman),
            correlation_text(&cmp.kendall),
        ));
    }
    let repair_rows = vec![
        vec!["item flag rate".into(), analytics::format_pct(data.repair.item_flag_rate)],
        vec![
            "distractor flag rate".into(),
            analytics::format_pct(data.repair.distractor_flag_rate),
        ],
        vec![
            "item repair success".into(),
            analytics::format_pct(data.repair.item_repair_success_rate),
        ],
        vec![
            "distractor repair success".into(),
            analytics::format_pct(data.repair.distractor_repair_success_rate),
        ],
        vec!["final flag rate".into(), analytics::format_pct(data.repair.final_flag_rate)],
        vec!["denominator".into(), data.repair.flag_rate_denominator.into()],
    ];

    template
        .replace("{{snapshot_id}}", &escape(&data.snapshot_id))
        .replace("{{content_hash}}", &escape(&data.content_hash))
        .replace(
            "{{mcq_run_id}}",
            &escape(data.mcq_run_id.as_deref().unwrap_or("-")),
        )
        .replace(
            "{{judge_run_id}}",
            &escape(data.judge_run_id.as_deref().unwrap_or("-")),
        )
        .replace(
            "{{leaderboard_table}}",
            &table(&["model", "MCQ %", "Judge %", "cost USD"], &included),
        )
        .replace("{{excluded_table}}", &table(&["model", "reason"], &excluded))
        .replace(
            "{{sector_table}}",
            &table(&["sector", "items", "mean accuracy %"], &sectors),
        )
        .replace(
            "{{pareto_table}}",
            &table(&["model", "cost USD", "MCQ %"], &pareto),
        )
        .replace(
            "{{pairs_table}}",
            &table(
                &["base model", "standard %", "thinking %", "delta pp", "cost multiple"],
                &pairs,
            ),
        )
        .replace("{{mcq_vs_judge_table}}", &mvj_html)
        .replace("{{repair_table}}", &table(&["statistic", "value"], &repair_rows))
        .replace("{{item_browser}}", &item_browser_html(snapshot, data))
}

// ---------------------------------------------------------------------------
// Bundle emission
// ---------------------------------------------------------------------------

/// Files produced by one report emission.
pub const BUNDLE_FILES: [&str; 7] = [
    "report.json",
    "leaderboard.csv",
    "sectors.csv",
    "pareto.csv",
    "thinking_pairs.csv",
    "mcq_vs_judge.csv",
    "index.html",
];

/// Emit the full bundle into `out_dir` (created if absent). Deterministic:
/// the same snapshot always produces byte-identical files.
pub fn write_report(
    snapshot: &Snapshot,
    out_dir: &Path,
    registry: &ModelRegistry,
) -> Result<ReportData, ReportError> {
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let data = compute_report(snapshot, registry)?;

    let json = serde_json::to_vec_pretty(&json!(&data)).expect("report serialization");
    write_file(&out_dir.join("report.json"), &json)?;
    write_leaderboard_csv(&out_dir.join("leaderboard.csv"), &data)?;
    write_sectors_csv(&out_dir.join("sectors.csv"), &data)?;
    write_pareto_csv(&out_dir.join("pareto.csv"), &data)?;
    write_pairs_csv(&out_dir.join("thinking_pairs.csv"), &data)?;
    write_mcq_vs_judge_csv(&out_dir.join("mcq_vs_judge.csv"), &data)?;
    write_file(
        &out_dir.join("index.html"),
        render_html(snapshot, &data).as_bytes(),
    )?;
    Ok(data)
}
