//! Output tables (CSV for machines, Markdown in the published layouts) and
//! run manifests.

mod manifest;

use std::path::Path;

use crate::baseline::AdjustedRow;
use crate::cohort::DerivedTable;
use crate::error::{Error, Result};
use crate::eval::{EvalResult, PpvRow, SensitivityRow, SubgroupRow};
use crate::roc::RocPoint;
use crate::targets::TargetSpec;

pub use manifest::{sha256_file, sha256_hex, FileDigest, RunManifest, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(Error::invalid(format!("unknown format `{other}` (csv, md)"))),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |\n", cells.iter().map(|c| c.replace('|', "\\|")).collect::<Vec<_>>().join(" | "));
        let mut out = line(&self.header);
        out.push_str(&format!("|{}\n", " --- |".repeat(self.header.len())));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Markdown => Ok(self.to_markdown()),
        }
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        std::fs::write(path, self.render(format)?).map_err(|e| Error::io(path, e))
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

fn ci_dash(est: f64, lo: f64, hi: f64) -> String {
    format!("{} ({}-{})", pct(est), pct(lo), pct(hi))
}

fn ci_comma(est: f64, lo: f64, hi: f64) -> String {
    format!("{} ({}, {})", pct(est), pct(lo), pct(hi))
}

fn n_over_n(n: usize, n_pos: usize) -> String {
    let share = if n > 0 { n_pos as f64 / n as f64 } else { 0.0 };
    format!("{n} / {n_pos} ({}%)", pct(share))
}

fn p4(p: f64) -> String {
    format!("{p:.4}")
}

fn display_name(name: &str) -> String {
    // "ACR>=300.0" -> "ACR ≥ 300.0"
    for (op, pretty) in [(">=", " ≥ "), ("<=", " ≤ "), (">", " > "), ("<", " < ")] {
        if let Some((a, b)) = name.split_once(op) {
            return format!("{a}{pretty}{b}");
        }
    }
    name.to_string()
}

fn bold(s: String, on: bool) -> String {
    if on {
        format!("**{s}**")
    } else {
        s
    }
}

pub const EVAL_HEADER: &[&str] = &[
    "target", "primary", "n", "n_pos", "baseline_auc", "baseline_ci_low", "baseline_ci_high", "dls_auc",
    "dls_ci_low", "dls_ci_high", "improvement", "improvement_ci_low", "improvement_ci_high", "p", "alpha",
    "significant",
];

pub const EVAL_MD_HEADER: &[&str] =
    &["Prediction", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)", "Improvement (CI)", "p"];

fn eval_cells(r: &EvalResult) -> Vec<String> {
    vec![
        num(r.baseline.auc),
        num(r.baseline.ci_low),
        num(r.baseline.ci_high),
        num(r.dls.auc),
        num(r.dls.ci_low),
        num(r.dls.ci_high),
        num(r.improvement),
        num(r.improvement_ci_low),
        num(r.improvement_ci_high),
        num(r.p_one_sided),
    ]
}

fn eval_md_cells(r: &EvalResult) -> Vec<String> {
    vec![
        n_over_n(r.n, r.n_pos),
        ci_dash(r.baseline.auc, r.baseline.ci_low, r.baseline.ci_high),
        ci_dash(r.dls.auc, r.dls.ci_low, r.dls.ci_high),
        ci_dash(r.improvement, r.improvement_ci_low, r.improvement_ci_high),
        p4(r.p_one_sided),
    ]
}

/// Main comparison table. In Markdown, secondary targets carry `†` and
/// significant rows are bold in the p column.
pub fn eval_table(results: &[EvalResult], format: Format) -> Table {
    match format {
        Format::Csv => {
            let mut t = Table::new(EVAL_HEADER);
            for r in results {
                let mut row = vec![r.target.clone(), r.primary.to_string(), r.n.to_string(), r.n_pos.to_string()];
                row.extend(eval_cells(r));
                row.push(num(r.alpha));
                row.push(r.significant.to_string());
                t.push(row);
            }
            t
        }
        Format::Markdown => {
            let mut t = Table::new(EVAL_MD_HEADER);
            for r in results {
                let mut row = vec![format!("{}{}", display_name(&r.target), if r.primary { "" } else { "†" })];
                let mut cells = eval_md_cells(r);
                let p = cells.pop().expect("p cell");
                row.extend(cells);
                row.push(bold(p, r.significant));
                t.push(row);
            }
            t
        }
    }
}

pub const SKIP_HEADER: &[&str] = &["target", "reason", "positives", "negatives"];

#[derive(Debug, Clone, PartialEq)]
pub struct SkipRecord {
    pub target: String,
    pub reason: String,
    pub positives: Option<usize>,
    pub negatives: Option<usize>,
}

impl SkipRecord {
    pub fn from_error(target: &str, e: &Error) -> Self {
        let (positives, negatives) = match e {
            Error::InsufficientCases { positives, negatives, .. } => (Some(*positives), Some(*negatives)),
            _ => (None, None),
        };
        let reason = match e {
            Error::InsufficientCases { .. } => "insufficient cases".to_string(),
            other => other.to_string(),
        };
        SkipRecord { target: target.to_string(), reason, positives, negatives }
    }
}

pub fn skip_table(skips: &[SkipRecord]) -> Table {
    let mut t = Table::new(SKIP_HEADER);
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in skips {
        t.push(vec![s.target.clone(), s.reason.clone(), opt(s.positives), opt(s.negatives)]);
    }
    t
}

pub const PPV_HEADER: &[&str] = &[
    "target", "n", "n_pos", "k", "baseline_ppv", "baseline_ppv_low", "baseline_ppv_high", "dls_ppv", "dls_ppv_low",
    "dls_ppv_high", "improvement", "improvement_low", "improvement_high", "p",
];

pub const PPV_MD_HEADER: &[&str] =
    &["Prediction", "n / N (%)", "Baseline PPV (CI)", "DLS PPV (CI)", "Improvement (CI)", "p"];

pub fn ppv_table(rows: &[PpvRow], format: Format) -> Table {
    match format {
        Format::Csv => {
            let mut t = Table::new(PPV_HEADER);
            for r in rows {
                t.push(vec![
                    r.target.clone(),
                    r.n.to_string(),
                    r.n_pos.to_string(),
                    r.k.to_string(),
                    num(r.baseline.estimate),
                    num(r.baseline.lo),
                    num(r.baseline.hi),
                    num(r.dls.estimate),
                    num(r.dls.lo),
                    num(r.dls.hi),
                    num(r.improvement.estimate),
                    num(r.improvement.lo),
                    num(r.improvement.hi),
                    num(r.p),
                ]);
            }
            t
        }
        Format::Markdown => {
            let mut t = Table::new(PPV_MD_HEADER);
            for r in rows {
                t.push(vec![
                    display_name(&r.target),
                    n_over_n(r.n, r.n_pos),
                    ci_comma(r.baseline.estimate, r.baseline.lo, r.baseline.hi),
                    ci_comma(r.dls.estimate, r.dls.lo, r.dls.hi),
                    ci_comma(r.improvement.estimate, r.improvement.lo, r.improvement.hi),
                    p4(r.p),
                ]);
            }
            t
        }
    }
}

pub const SUBGROUP_HEADER: &[&str] = &[
    "target", "subgroup", "n", "n_pos", "baseline_auc", "baseline_ci_low", "baseline_ci_high", "dls_auc",
    "dls_ci_low", "dls_ci_high", "improvement", "improvement_ci_low", "improvement_ci_high", "p", "omitted_small",
    "drop_gt_5pct", "p_above_0_05", "note",
];

pub const SUBGROUP_MD_HEADER: &[&str] =
    &["Prediction", "Subgroup", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)", "Improvement (CI)", "p"];

/// Subgroup table. Markdown drops omitted rows and targets whose full-set
/// improvement is negative, and bolds flagged cells.
pub fn subgroup_table(rows: &[SubgroupRow], format: Format) -> Table {
    match format {
        Format::Csv => {
            let mut t = Table::new(SUBGROUP_HEADER);
            for r in rows {
                let mut row = vec![r.target.clone(), r.label.clone(), r.n.to_string(), r.n_pos.to_string()];
                match &r.result {
                    Some(e) => row.extend(eval_cells(e)),
                    None => row.extend(std::iter::repeat_n(String::new(), 10)),
                }
                row.push(r.omitted_small.to_string());
                row.push(r.drop_gt_5pct.to_string());
                row.push(r.p_above_0_05.to_string());
                row.push(r.note.clone().unwrap_or_default());
                t.push(row);
            }
            t
        }
        Format::Markdown => {
            let mut t = Table::new(SUBGROUP_MD_HEADER);
            let negative: Vec<&str> = rows
                .iter()
                .filter(|r| r.label == "All" && r.result.as_ref().is_some_and(|e| e.improvement < 0.0))
                .map(|r| r.target.as_str())
                .collect();
            let mut last = String::new();
            for r in rows {
                if negative.contains(&r.target.as_str()) {
                    continue;
                }
                let Some(e) = &r.result else { continue };
                let name = if r.target == last { String::new() } else { display_name(&r.target) };
                last = r.target.clone();
                let mut cells = eval_md_cells(e);
                let p = cells.pop().expect("p cell");
                let imp = cells.pop().expect("improvement cell");
                let mut row = vec![name, r.label.clone()];
                row.extend(cells);
                row.push(bold(imp, r.drop_gt_5pct));
                row.push(bold(p, r.p_above_0_05));
                t.push(row);
            }
            t
        }
    }
}

pub const SENSITIVITY_HEADER: &[&str] = &[
    "target", "window_days", "label", "n", "n_pos", "baseline_auc", "baseline_ci_low", "baseline_ci_high", "dls_auc",
    "dls_ci_low", "dls_ci_high", "improvement", "improvement_ci_low", "improvement_ci_high", "p",
];

pub const SENSITIVITY_MD_HEADER: &[&str] =
    &["Prediction", "Lab/vital date delta", "n / N (%)", "Baseline AUC (CI)", "DLS AUC (CI)", "Improvement (CI)", "p"];

pub fn sensitivity_table(rows: &[SensitivityRow], format: Format) -> Table {
    match format {
        Format::Csv => {
            let mut t = Table::new(SENSITIVITY_HEADER);
            for r in rows {
                let e = &r.result;
                let mut row = vec![e.target.clone(), r.window_days.to_string(), r.label.clone(), e.n.to_string(), e.n_pos.to_string()];
                row.extend(eval_cells(e));
                t.push(row);
            }
            t
        }
        Format::Markdown => {
            let mut t = Table::new(SENSITIVITY_MD_HEADER);
            let mut last = String::new();
            for r in rows {
                let e = &r.result;
                let name = if e.target == last { String::new() } else { display_name(&e.target) };
                last = e.target.clone();
                let mut row = vec![name, r.label.clone()];
                row.extend(eval_md_cells(e));
                t.push(row);
            }
            t
        }
    }
}

pub const ADJUSTED_HEADER: &[&str] = &["target", "n", "variable", "odds_ratio", "ci_low", "ci_high", "p"];

pub const ADJUSTED_MD_HEADER: &[&str] = &["Prediction", "Variable", "Odds ratio (CI)", "p"];

pub fn adjusted_table(rows: &[(String, usize, Vec<AdjustedRow>)], format: Format) -> Table {
    match format {
        Format::Csv => {
            let mut t = Table::new(ADJUSTED_HEADER);
            for (target, n, rs) in rows {
                for r in rs {
                    t.push(vec![
                        target.clone(),
                        n.to_string(),
                        r.variable.clone(),
                        num(r.odds_ratio),
                        num(r.ci_low),
                        num(r.ci_high),
                        num(r.p),
                    ]);
                }
            }
            t
        }
        Format::Markdown => {
            let mut t = Table::new(ADJUSTED_MD_HEADER);
            for (target, _, rs) in rows {
                for (i, r) in rs.iter().enumerate() {
                    t.push(vec![
                        if i == 0 { display_name(target) } else { String::new() },
                        r.variable.clone(),
                        format!("{:.3} ({:.3}-{:.3})", r.odds_ratio, r.ci_low, r.ci_high),
                        bold(p4(r.p), r.p < 0.05),
                    ]);
                }
            }
            t
        }
    }
}

pub const ROC_HEADER: &[&str] = &["target", "model", "fpr", "tpr", "threshold"];

pub fn roc_table(curves: &[(String, String, Vec<RocPoint>)]) -> Table {
    let mut t = Table::new(ROC_HEADER);
    for (target, model, pts) in curves {
        for p in pts {
            t.push(vec![target.clone(), model.clone(), num(p.fpr), num(p.tpr), num(p.threshold)]);
        }
    }
    t
}

pub const DERIVED_HEADER: &[&str] = &["visit_id", "patient_id", "analyte", "value", "day_gap", "method"];

pub fn derived_table(derived: &DerivedTable) -> Table {
    let mut t = Table::new(DERIVED_HEADER);
    for d in derived.visits.values() {
        for (a, m) in &d.values {
            t.push(vec![
                d.visit_id.clone(),
                d.patient_id.clone(),
                a.name().to_string(),
                num(m.value),
                m.day_gap.to_string(),
                m.method.as_str().to_string(),
            ]);
        }
    }
    t
}

pub const LABEL_HEADER: &[&str] = &["visit_id", "patient_id", "target", "value", "label", "class_index"];

/// Binary and multi-class labels for every visit with a matched value.
pub fn labels_table(derived: &DerivedTable, specs: &[&TargetSpec]) -> Result<Table> {
    let mut t = Table::new(LABEL_HEADER);
    for d in derived.visits.values() {
        for spec in specs {
            let Some(m) = d.get(spec.analyte) else { continue };
            let l = spec.label_value(m.value)?;
            t.push(vec![
                d.visit_id.clone(),
                d.patient_id.clone(),
                spec.name.clone(),
                num(m.value),
                u8::from(l.binary_positive).to_string(),
                l.class_index.to_string(),
            ]);
        }
    }
    Ok(t)
}

pub const EXCLUSIONS_HEADER: &[&str] = &["reason", "visits"];

pub fn exclusions_table(derived: &DerivedTable) -> Table {
    let e = &derived.exclusions;
    let mut t = Table::new(EXCLUSIONS_HEADER);
    t.push(vec!["egfr_missing_sex_or_age".into(), e.egfr_missing_sex_or_age.to_string()]);
    t.push(vec!["bmi_invalid_inputs".into(), e.bmi_invalid_inputs.to_string()]);
    t
}
