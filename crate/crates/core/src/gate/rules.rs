use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::probe::ProbeResult;
use crate::psychometrics::{ConditionReport, Estimate, VrsLabel};

/// Flat metric namespace, e.g. `post.auroc2_delta.lo`.
pub type Metrics = BTreeMap<String, f64>;

fn put_estimate(m: &mut Metrics, key: &str, e: &Estimate) {
    if let Some(ci) = e.ci() {
        m.insert(key.to_owned(), ci.point);
        m.insert(format!("{key}.lo"), ci.lo);
        m.insert(format!("{key}.hi"), ci.hi);
    }
}

/// Every numeric quantity of the reports under `<condition>.<metric>`.
/// Degenerate estimates contribute no keys, so rules over them fail loudly.
pub fn flatten_metrics(reports: &[ConditionReport], probe: Option<&ProbeResult>) -> Metrics {
    let mut m = Metrics::new();
    for r in reports {
        let c = &r.condition;
        let mr = &r.metrics;
        put_estimate(&mut m, &format!("{c}.auroc2"), &mr.auroc2);
        m.insert(format!("{c}.accuracy"), mr.accuracy);
        m.insert(format!("{c}.ceiling_rate"), mr.ceiling_rate);
        if let Some(a) = mr.aurc {
            m.insert(format!("{c}.aurc"), a);
        }
        m.insert(format!("{c}.distinct_levels"), mr.distinct_levels as f64);
        m.insert(format!("{c}.parse_rate"), mr.parse_rate.ratio);
        m.insert(format!("{c}.n_attempted"), mr.n_attempted as f64);
        m.insert(format!("{c}.vrs_valid"), f64::from(u8::from(mr.vrs.label == VrsLabel::Valid)));
        m.insert(format!("{c}.vrs_invalid"), f64::from(u8::from(mr.vrs.label == VrsLabel::Invalid)));
        if let Some(d) = &r.auroc2_delta {
            put_estimate(&mut m, &format!("{c}.auroc2_delta"), d);
        }
        if let Some(d) = r.accuracy_delta {
            m.insert(format!("{c}.accuracy_delta"), d);
        }
        for (bin, e) in &r.bin_deltas {
            put_estimate(&mut m, &format!("{c}.bin.{}.auroc2_delta", bin.label().to_lowercase()), e);
        }
        for (name, e) in &r.signals {
            put_estimate(&mut m, &format!("{c}.signal.{name}"), e);
        }
    }
    if let Some(p) = probe {
        for cell in &p.cells {
            m.insert(format!("probe.{}.{}.auroc2", cell.layer.label(), cell.token.label()), cell.auroc2);
            if let Some(d) = &cell.delta_vs_verbal {
                put_estimate(&mut m, &format!("probe.{}.{}.delta", cell.layer.label(), cell.token.label()), d);
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
}

impl Op {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Gt => a > b,
            Op::Ge => a >= b,
            Op::Lt => a < b,
            Op::Le => a <= b,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Lt => "<",
            Op::Le => "<=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub metric: String,
    pub op: Op,
    pub value: f64,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.metric, self.op, self.value)
    }
}

/// A hypothesis is met when every clause holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRule {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub all: Vec<Clause>,
    #[serde(default = "met")]
    pub met: String,
    #[serde(default = "not_met")]
    pub not_met: String,
}

fn met() -> String {
    "Met".into()
}

fn not_met() -> String {
    "Not met".into()
}

/// Terminal state for a combination of rule outcomes. Rules absent from
/// `when` are unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMapping {
    pub when: BTreeMap<String, bool>,
    pub terminal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub terminals: Vec<String>,
    #[serde(rename = "rule")]
    pub rules: Vec<HypothesisRule>,
    /// First matching mapping wins.
    #[serde(rename = "outcome")]
    pub outcomes: Vec<OutcomeMapping>,
}

impl Default for GateConfig {
    /// Proceed when post-training AUROC2 beats the baseline with a paired CI
    /// above zero, otherwise stop.
    fn default() -> Self {
        GateConfig {
            terminals: vec!["Stop".into(), "Proceed".into()],
            rules: vec![HypothesisRule {
                name: "H1".into(),
                description: "Fine-tuning raises AUROC2 over the untuned baseline".into(),
                all: vec![Clause { metric: "post.auroc2_delta.lo".into(), op: Op::Gt, value: 0.0 }],
                met: met(),
                not_met: not_met(),
            }],
            outcomes: vec![
                OutcomeMapping { when: BTreeMap::from([("H1".into(), true)]), terminal: "Proceed".into() },
                OutcomeMapping { when: BTreeMap::from([("H1".into(), false)]), terminal: "Stop".into() },
            ],
        }
    }
}

const MAX_RULES: usize = 16;

impl GateConfig {
    /// Structural checks, including that every combination of rule outcomes
    /// maps to a declared terminal state.
    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() || self.rules.len() > MAX_RULES {
            return Err(Error::Config(format!("gate needs 1 to {MAX_RULES} rules")));
        }
        let mut names = BTreeSet::new();
        for r in &self.rules {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Config(format!("rule {} defined twice", r.name)));
            }
            if r.all.is_empty() {
                return Err(Error::Config(format!("rule {} has no clauses", r.name)));
            }
            if let Some(c) = r.all.iter().find(|c| !c.value.is_finite()) {
                return Err(Error::Config(format!("rule {} compares against {}", r.name, c.value)));
            }
        }
        for o in &self.outcomes {
            if !self.terminals.contains(&o.terminal) {
                return Err(Error::Config(format!("outcome maps to undeclared terminal {}", o.terminal)));
            }
            if let Some(unknown) = o.when.keys().find(|k| !names.contains(k.as_str())) {
                return Err(Error::Config(format!("outcome mapping names unknown rule {unknown}")));
            }
        }
        for bits in 0u32..(1 << self.rules.len()) {
            let combo: BTreeMap<&str, bool> =
                self.rules.iter().enumerate().map(|(i, r)| (r.name.as_str(), bits & (1 << i) != 0)).collect();
            if self.terminal_for(&combo).is_none() {
                let desc: Vec<String> = combo.iter().map(|(k, v)| format!("{k}={v}")).collect();
                return Err(Error::Config(format!("no terminal state for outcome {}", desc.join(", "))));
            }
        }
        Ok(())
    }

    fn terminal_for(&self, combo: &BTreeMap<&str, bool>) -> Option<&str> {
        self.outcomes
            .iter()
            .find(|o| o.when.iter().all(|(k, v)| combo.get(k.as_str()) == Some(v)))
            .map(|o| o.terminal.as_str())
    }

    /// TOML or JSON by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: GateConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("gate config serialises");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub metric: String,
    pub value: f64,
    pub op: Op,
    pub threshold: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub name: String,
    pub description: String,
    pub met: bool,
    pub verdict: String,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub terminal: String,
    pub rules: Vec<RuleOutcome>,
    pub config_hash: String,
}

pub fn evaluate_gate(metrics: &Metrics, config: &GateConfig) -> Result<GateOutcome> {
    config.validate()?;
    let mut rules = Vec::with_capacity(config.rules.len());
    for rule in &config.rules {
        let evidence = rule
            .all
            .iter()
            .map(|c| {
                let value = *metrics.get(&c.metric).ok_or_else(|| {
                    Error::Config(format!(
                        "rule {} references metric {} which is absent from the reports",
                        rule.name, c.metric
                    ))
                })?;
                Ok(Evidence { metric: c.metric.clone(), value, op: c.op, threshold: c.value, holds: c.op.holds(value, c.value) })
            })
            .collect::<Result<Vec<_>>>()?;
        let met = evidence.iter().all(|e| e.holds);
        rules.push(RuleOutcome {
            name: rule.name.clone(),
            description: rule.description.clone(),
            met,
            verdict: if met { rule.met.clone() } else { rule.not_met.clone() },
            evidence,
        });
    }
    let combo: BTreeMap<&str, bool> = rules.iter().map(|r| (r.name.as_str(), r.met)).collect();
    let terminal = config.terminal_for(&combo).expect("validated as total").to_owned();
    Ok(GateOutcome { terminal, rules, config_hash: config.hash() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta(lo: f64, hi: f64) -> Metrics {
        Metrics::from([
            ("post.auroc2_delta".into(), (lo + hi) / 2.0),
            ("post.auroc2_delta.lo".into(), lo),
            ("post.auroc2_delta.hi".into(), hi),
        ])
    }

    #[test]
    fn default_gate_on_reported_intervals() {
        let cfg = GateConfig::default();
        let stop = evaluate_gate(&delta(-0.077, -0.027), &cfg).unwrap();
        assert_eq!(stop.terminal, "Stop");
        assert_eq!(stop.rules[0].verdict, "Not met");
        assert_eq!(stop.rules[0].evidence[0].value, -0.077);
        let go = evaluate_gate(&delta(0.132, 0.203), &cfg).unwrap();
        assert_eq!(go.terminal, "Proceed");
        assert!(go.rules[0].met);
    }

    #[test]
    fn missing_metric_names_rule_and_metric() {
        let err = evaluate_gate(&Metrics::new(), &GateConfig::default()).unwrap_err().to_string();
        assert!(err.contains("H1") && err.contains("post.auroc2_delta.lo"), "{err}");
    }

    #[test]
    fn partial_mapping_rejected() {
        let mut cfg = GateConfig::default();
        cfg.outcomes.pop();
        assert!(cfg.validate().unwrap_err().to_string().contains("H1=false"));
        let mut cfg = GateConfig::default();
        cfg.outcomes[0].terminal = "Revise".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_config_roundtrip() {
        let text = r#"
terminals = ["Stop", "Revise", "Proceed"]

[[rule]]
name = "H1"
all = [{ metric = "post.auroc2_delta.lo", op = ">", value = 0.0 }]

[[rule]]
name = "H3"
description = "Real targets beat shuffled targets"
all = [{ metric = "shuffled.auroc2_delta.hi", op = "<", value = 0.0 }]

[[outcome]]
when = { H1 = true, H3 = true }
terminal = "Proceed"

[[outcome]]
when = { H1 = true }
terminal = "Revise"

[[outcome]]
when = {}
terminal = "Stop"
"#;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gate.toml");
        std::fs::write(&p, text).unwrap();
        let cfg = GateConfig::load(&p).unwrap();
        let mut m = delta(0.1, 0.2);
        m.insert("shuffled.auroc2_delta.hi".into(), 0.05);
        assert_eq!(evaluate_gate(&m, &cfg).unwrap().terminal, "Revise");
        m.insert("shuffled.auroc2_delta.hi".into(), -0.01);
        assert_eq!(evaluate_gate(&m, &cfg).unwrap().terminal, "Proceed");
    }

    #[test]
    fn evaluation_is_pure() {
        let cfg = GateConfig::default();
        let a = serde_json::to_string(&evaluate_gate(&delta(0.1, 0.3), &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&evaluate_gate(&delta(0.1, 0.3), &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
