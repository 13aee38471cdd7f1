use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::rules::GateOutcome;
use crate::probe::{LayerTag, ProbeResult, TokenTag};
use crate::psychometrics::{ConditionReport, Estimate};
use crate::targets::Bin;

/// A rendered table. Cells are the exact strings printed in the markdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

impl Table {
    fn markdown(&self, out: &mut String) {
        let _ = writeln!(out, "### {}\n", self.title);
        let _ = writeln!(out, "| | {} |", self.columns.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(self.columns.len()));
        for (label, cells) in &self.rows {
            let _ = writeln!(out, "| {label} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }

    fn json(&self) -> Value {
        json!({
            "title": self.title,
            "columns": self.columns,
            "rows": self.rows.iter().map(|(l, c)| json!({"label": l, "cells": c})).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub markdown: String,
    pub json: Value,
}

fn num(x: f64) -> String {
    format!("{x:.3}")
}

fn signed(x: f64) -> String {
    format!("{x:+.3}")
}

fn point(e: &Estimate) -> String {
    match e.ci() {
        Some(ci) => num(ci.point),
        None => "n/a".into(),
    }
}

fn delta_point(e: &Estimate) -> String {
    match e.ci() {
        Some(ci) => signed(ci.point),
        None => "n/a".into(),
    }
}

fn interval(e: &Estimate) -> String {
    match e {
        Estimate::Estimated(ci) => format!("[{}, {}]", num(ci.lo), num(ci.hi)),
        Estimate::Degenerate { reason, .. } => format!("degenerate ({reason})"),
    }
}

fn validity_table(reports: &[ConditionReport]) -> Table {
    let col = |f: &dyn Fn(&ConditionReport) -> String| reports.iter().map(f).collect::<Vec<_>>();
    Table {
        title: "Signal validity by condition".into(),
        columns: reports.iter().map(|r| r.condition.clone()).collect(),
        rows: vec![
            ("AUROC2".into(), col(&|r| point(&r.metrics.auroc2))),
            ("AUROC2 CI".into(), col(&|r| interval(&r.metrics.auroc2))),
            ("Accuracy".into(), col(&|r| num(r.metrics.accuracy))),
            ("Ceiling rate".into(), col(&|r| num(r.metrics.ceiling_rate))),
            ("AURC".into(), col(&|r| r.metrics.aurc.map(num).unwrap_or_else(|| "n/a".into()))),
            ("Confidence levels".into(), col(&|r| r.metrics.distinct_levels.to_string())),
            ("Parsed".into(), col(&|r| r.metrics.parse_rate.to_string())),
            ("VRS".into(), col(&|r| r.metrics.vrs.label.to_string())),
        ],
    }
}

fn effects_table(reports: &[ConditionReport]) -> Option<Table> {
    let rest: Vec<&ConditionReport> = reports.iter().filter(|r| r.auroc2_delta.is_some()).collect();
    if rest.is_empty() {
        return None;
    }
    let col = |f: &dyn Fn(&ConditionReport) -> String| rest.iter().map(|r| f(r)).collect::<Vec<_>>();
    Some(Table {
        title: format!("Change against {}", reports[0].condition),
        columns: rest.iter().map(|r| r.condition.clone()).collect(),
        rows: vec![
            ("Delta AUROC2".into(), col(&|r| delta_point(r.auroc2_delta.as_ref().expect("filtered")))),
            ("Delta AUROC2 CI".into(), col(&|r| interval(r.auroc2_delta.as_ref().expect("filtered")))),
            ("Delta accuracy".into(), col(&|r| r.accuracy_delta.map(signed).unwrap_or_else(|| "n/a".into()))),
        ],
    })
}

fn bin_table(reports: &[ConditionReport]) -> Option<Table> {
    let rest: Vec<&ConditionReport> = reports.iter().filter(|r| !r.bin_deltas.is_empty()).collect();
    if rest.is_empty() {
        return None;
    }
    let rows = [Bin::Easy, Bin::Medium, Bin::Hard]
        .iter()
        .map(|bin| {
            let cells = rest
                .iter()
                .map(|r| match r.bin_deltas.get(bin) {
                    Some(e) => format!("{} {}", delta_point(e), interval(e)),
                    None => "n/a".into(),
                })
                .collect();
            (bin.label().to_owned(), cells)
        })
        .collect();
    Some(Table {
        title: "Delta AUROC2 by difficulty bin".into(),
        columns: rest.iter().map(|r| r.condition.clone()).collect(),
        rows,
    })
}

fn signal_table(reports: &[ConditionReport]) -> Option<Table> {
    let names: BTreeSet<&String> = reports.iter().flat_map(|r| r.signals.keys()).collect();
    if names.is_empty() {
        return None;
    }
    let rows = names
        .iter()
        .map(|name| {
            let cells = reports
                .iter()
                .map(|r| match r.signals.get(*name) {
                    Some(e) => format!("{} {}", point(e), interval(e)),
                    None => "n/a".into(),
                })
                .collect();
            ((*name).clone(), cells)
        })
        .collect();
    Some(Table {
        title: "AUROC2 of alternative signals".into(),
        columns: reports.iter().map(|r| r.condition.clone()).collect(),
        rows,
    })
}

fn probe_table(p: &ProbeResult) -> Table {
    let rows = LayerTag::ALL
        .iter()
        .map(|&layer| {
            let cells = TokenTag::ALL
                .iter()
                .map(|&token| match p.cell(layer, token) {
                    Some(c) => {
                        let mark = if c.primary { " *" } else { "" };
                        format!("{}{mark}", num(c.auroc2))
                    }
                    None => "n/a".into(),
                })
                .collect();
            (layer.label().to_owned(), cells)
        })
        .collect();
    Table {
        title: "Probe AUROC2 by layer and token (* primary cell)".into(),
        columns: TokenTag::ALL.iter().map(|t| t.label().to_owned()).collect(),
        rows,
    }
}

fn gate_table(g: &GateOutcome) -> Table {
    Table {
        title: format!("Decision rules (terminal state: {})", g.terminal),
        columns: vec!["Evidence".into(), "Verdict".into()],
        rows: g
            .rules
            .iter()
            .map(|r| {
                let ev: Vec<String> = r
                    .evidence
                    .iter()
                    .map(|e| format!("{} = {} (needs {} {})", e.metric, num(e.value), e.op, e.threshold))
                    .collect();
                (r.name.clone(), vec![ev.join("; "), r.verdict.clone()])
            })
            .collect(),
    }
}

/// Markdown and JSON study report. Every table cell and note in the
/// markdown is carried verbatim in the JSON.
pub fn render_report(
    reports: &[ConditionReport],
    probe: Option<&ProbeResult>,
    gate: Option<&GateOutcome>,
    provenance: &Value,
) -> RenderedReport {
    let mut notes = Vec::new();
    let splits: BTreeSet<&str> = reports.iter().map(|r| r.split.as_str()).collect();
    if splits.len() > 1 {
        let listed: Vec<&str> = splits.into_iter().collect();
        notes.push(format!(
            "WARNING: conditions were evaluated on different item sets ({}); deltas are not comparable.",
            listed.join(", ")
        ));
    }
    let policies: BTreeSet<&str> = reports.iter().map(|r| r.metrics.vrs.policy.as_str()).collect();
    for p in policies {
        notes.push(format!("VRS verdicts use rule {p}, whose thresholds are a reconstruction."));
    }

    let mut tables = Vec::new();
    if !reports.is_empty() {
        tables.push(validity_table(reports));
    }
    tables.extend(effects_table(reports));
    tables.extend(bin_table(reports));
    tables.extend(signal_table(reports));
    if let Some(p) = probe {
        tables.push(probe_table(p));
    }
    if let Some(g) = gate {
        tables.push(gate_table(g));
    }

    let mut md = String::from("# Confidence calibration study report\n\n");
    for n in &notes {
        let _ = writeln!(md, "> {n}\n");
    }
    for t in &tables {
        t.markdown(&mut md);
    }
    if let Some(g) = gate {
        let _ = writeln!(md, "**Terminal state: {}**\n", g.terminal);
    }
    let prov = serde_json::to_string_pretty(provenance).expect("provenance serialises");
    let _ = writeln!(md, "### Provenance\n\n```json\n{prov}\n```");

    let json = json!({
        "notes": notes,
        "tables": tables.iter().map(Table::json).collect::<Vec<_>>(),
        "conditions": reports,
        "probe": probe,
        "gate": gate,
        "provenance": provenance,
    });
    RenderedReport { markdown: md, json }
}
