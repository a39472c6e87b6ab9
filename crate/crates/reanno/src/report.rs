//! Report rendering: structured JSON envelopes and aligned text tables.

use serde::{Deserialize, Serialize};

use mqm_reanno_core::analysis::{AgreementMatrix, ChangeRateReport, RatioReport};
use mqm_reanno_core::planner::SettingCounts;
use mqm_reanno_core::qc::QcReport;
use mqm_reanno_core::{Aggregation, AgreementReport, MatchMode, Setting, SideSelection, WeightScheme};

/// Flags a report was computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub weights: WeightScheme,
    pub sides: SideSelection,
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_mode: Option<MatchMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub command: String,
    pub config: ReportConfig,
    pub report: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Left-aligned first column, right-aligned others.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut out = String::new();
        for (i, c) in cells.enumerate() {
            let pad = width[i].saturating_sub(c.chars().count());
            if i == 0 {
                out.push_str(c);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str("  ");
                out.push_str(&" ".repeat(pad));
                out.push_str(c);
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(&mut header.iter().copied());
    out.push_str(&line(&mut width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str)));
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

fn pct(v: f64) -> String {
    format!("{v:.1}%")
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

pub fn change_rates_text(r: &ChangeRateReport) -> String {
    let settings: Vec<Setting> = r.settings.iter().map(|s| s.setting).collect();
    let mut header = vec![""];
    header.extend(settings.iter().map(|s| s.label()));
    let rows: Vec<Vec<String>> = [
        ("Deleted", 0),
        ("Changed", 1),
        ("Kept", 2),
        ("Added", 3),
    ]
    .iter()
    .map(|(name, k)| {
        let mut row = vec![name.to_string()];
        for s in &r.settings {
            let m = &s.summary.macro_rates;
            row.push(pct([m.deleted, m.changed, m.kept, m.added][*k]));
        }
        row
    })
    .collect();
    let mut out = table(&header, &rows);
    let raters: Vec<String> = r
        .settings
        .iter()
        .map(|s| format!("{} {}", s.setting.label(), s.summary.per_rater.len()))
        .collect();
    out.push_str(&format!(
        "match: {}{}; re-annotators: {}\n",
        match r.mode {
            MatchMode::Id => "id",
            MatchMode::Overlap => "overlap",
        },
        if r.heuristic { " (heuristic)" } else { "" },
        raters.join(", ")
    ));
    out
}

pub fn agreement_text(r: &AgreementReport) -> String {
    let rows = vec![
        vec!["char F1".into(), num(r.char_f1)],
        vec!["char F1 (micro)".into(), num(r.char_f1_micro)],
        vec!["char F1 (macro)".into(), num(r.char_f1_macro)],
        vec!["PRA".into(), num(r.pra)],
        vec!["items".into(), r.items.to_string()],
        vec!["segments".into(), r.segments.to_string()],
        vec!["system pairs".into(), r.pairs.to_string()],
    ];
    let title = format!("{} vs {}", r.left, r.right);
    table(&[title.as_str(), ""], &rows)
}

pub fn matrix_text(m: &AgreementMatrix) -> String {
    let mut header = vec![""];
    header.extend(m.cols.iter().map(String::as_str));
    let grid = |f: &dyn Fn(&AgreementReport) -> f64| -> Vec<Vec<String>> {
        m.rows
            .iter()
            .zip(&m.cells)
            .map(|(label, cells)| {
                let mut row = vec![label.clone()];
                row.extend(cells.iter().map(|c| num(f(c))));
                row
            })
            .collect()
    };
    let mut out = String::from("Character F1\n");
    out.push_str(&table(&header, &grid(&|c| c.char_f1)));
    out.push_str("\nPRA\n");
    out.push_str(&table(&header, &grid(&|c| c.pra)));
    out.push_str(&format!(
        "\ndocuments: {}; items: {}\n",
        m.documents.len(),
        m.items
    ));
    out
}

pub fn qc_text(r: &QcReport) -> String {
    let m = &r.summary.macro_rates;
    let rows = vec![
        vec!["Deleted".into(), pct(m.deleted)],
        vec!["Changed".into(), pct(m.changed)],
        vec!["Kept".into(), pct(m.kept)],
    ];
    let mut out = table(&["", "artificial spans"], &rows);
    out.push_str(&format!(
        "kept per re-annotator: median {}, max {}; re-annotators: {}\n",
        pct(r.kept_median),
        pct(r.kept_max),
        r.summary.per_rater.len()
    ));
    out
}

pub fn counts_text(c: &SettingCounts) -> String {
    let rows = vec![vec![
        "segment annotations".into(),
        c.single.to_string(),
        c.self_review.to_string(),
        c.other.to_string(),
        c.auto.to_string(),
    ]];
    table(&["", "Single", "Self", "Other", "Auto"], &rows)
}

pub fn ratio_text(r: &RatioReport) -> String {
    format!(
        "human/auto error-count ratio: {:.3} ({} human, {} automatic annotations)\n",
        r.ratio, r.human_annotations, r.auto_annotations
    )
}
