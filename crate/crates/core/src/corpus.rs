//! Benchmark ingestion and seeded, disjoint partitioning.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, LineError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    OpenDomainQa,
    MultipleChoice,
}

impl std::str::FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open-domain-qa" => Ok(Benchmark::OpenDomainQa),
            "multiple-choice" => Ok(Benchmark::MultipleChoice),
            other => Err(Error::Invalid(format!("unknown benchmark format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKey {
    Aliases(Vec<String>),
    Choices { options: Vec<String>, correct: usize },
}

/// One QA instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub question: String,
    pub answer_key: AnswerKey,
    pub benchmark: Benchmark,
    pub domain_tag: Option<String>,
}

/// Option letter for a 0-based choice index: a, b, c, ...
pub fn choice_letter(index: usize) -> char {
    (b'a' + index as u8) as char
}

impl Item {
    pub fn open(id: impl Into<String>, question: impl Into<String>, aliases: Vec<String>) -> Self {
        Item {
            id: id.into(),
            question: question.into(),
            answer_key: AnswerKey::Aliases(aliases),
            benchmark: Benchmark::OpenDomainQa,
            domain_tag: None,
        }
    }

    pub fn choice(
        id: impl Into<String>,
        question: impl Into<String>,
        options: Vec<String>,
        correct: usize,
        domain: Option<String>,
    ) -> Self {
        Item {
            id: id.into(),
            question: question.into(),
            answer_key: AnswerKey::Choices { options, correct },
            benchmark: Benchmark::MultipleChoice,
            domain_tag: domain,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        match (&self.answer_key, self.benchmark) {
            (AnswerKey::Aliases(a), Benchmark::OpenDomainQa) => {
                if a.is_empty() {
                    return Err("alias set is empty".into());
                }
            }
            (AnswerKey::Choices { options, correct }, Benchmark::MultipleChoice) => {
                if options.len() < 2 {
                    return Err(format!("choice set has {} option(s), need at least 2", options.len()));
                }
                if options.len() > 26 {
                    return Err("more than 26 options".into());
                }
                if *correct >= options.len() {
                    return Err(format!("answer_index {correct} out of range for {} options", options.len()));
                }
            }
            _ => return Err("answer key does not match benchmark".into()),
        }
        Ok(())
    }

    /// Serialise in the input schema of its benchmark.
    pub fn to_record(&self) -> serde_json::Value {
        match &self.answer_key {
            AnswerKey::Aliases(aliases) => serde_json::json!({
                "id": self.id,
                "question": self.question,
                "aliases": aliases,
            }),
            AnswerKey::Choices { options, correct } => serde_json::json!({
                "id": self.id,
                "question": self.question,
                "choices": options,
                "answer_index": correct,
                "domain": self.domain_tag,
            }),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpenRecord {
    id: String,
    question: String,
    aliases: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChoiceRecord {
    id: String,
    question: String,
    choices: Vec<String>,
    answer_index: usize,
    #[serde(default)]
    domain: Option<String>,
}

/// Parse a corpus from its text. Every malformed line is reported.
pub fn parse_corpus(text: &str, format: Benchmark, origin: &Path) -> Result<Vec<Item>> {
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match format {
            Benchmark::OpenDomainQa => serde_json::from_str::<OpenRecord>(line)
                .map(|r| Item::open(r.id, r.question, r.aliases)),
            Benchmark::MultipleChoice => serde_json::from_str::<ChoiceRecord>(line)
                .map(|r| Item::choice(r.id, r.question, r.choices, r.answer_index, r.domain)),
        };
        let item = match parsed {
            Ok(item) => item,
            Err(e) => {
                errors.push(LineError { line: lineno, message: e.to_string() });
                continue;
            }
        };
        if let Err(message) = item.validate() {
            errors.push(LineError { line: lineno, message });
            continue;
        }
        if !seen.insert(item.id.clone()) {
            errors.push(LineError {
                line: lineno,
                message: format!("duplicate id {:?}", item.id),
            });
            continue;
        }
        items.push(item);
    }
    if errors.is_empty() {
        Ok(items)
    } else {
        Err(Error::Records { path: origin.to_path_buf(), errors })
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: Benchmark) -> Result<Vec<Item>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, format, path)
}

/// Write items as one-record-per-line JSON in their input schema.
pub fn write_corpus(path: impl AsRef<Path>, items: &[Item]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item.to_record())?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Exclusion list: one id per line, blank lines and `#` comments ignored.
pub fn load_exclusions(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

/// Content hash over the canonical record serialisation, in corpus order.
/// Order-independent fingerprint of a set of item ids.
pub fn id_set_fingerprint<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut sorted: Vec<&str> = ids.into_iter().collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut h = Sha256::new();
    for id in sorted {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..6])
}

pub fn corpus_hash(items: &[Item]) -> String {
    let mut hasher = Sha256::new();
    for item in items {
        hasher.update(serde_json::to_string(&item.to_record()).expect("record serialises").as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub name: String,
    pub size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    #[serde(default)]
    pub exclusion_ids: HashSet<String>,
    pub slices: Vec<SliceSpec>,
}

impl SplitPlan {
    pub fn new(seed: u64, slices: &[(&str, usize)]) -> Self {
        SplitPlan {
            seed,
            exclusion_ids: HashSet::new(),
            slices: slices
                .iter()
                .map(|(n, s)| SliceSpec { name: (*n).to_owned(), size: *s })
                .collect(),
        }
    }

    pub fn with_exclusions(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.exclusion_ids.extend(ids);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub name: String,
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub corpus_hash: String,
    pub corpus_size: usize,
    /// Exclusion ids that matched an item and were removed.
    pub exclusion_count: usize,
    /// Exclusion ids that did not match any item.
    pub exclusion_unmatched: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub provenance: Provenance,
    pub slices: Vec<Slice>,
}

impl SplitManifest {
    pub fn slice(&self, name: &str) -> Option<&Slice> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

/// Shuffle once with the seed, drop excluded ids, slice contiguously in plan order.
pub fn partition(items: &[Item], plan: &SplitPlan) -> Result<SplitManifest> {
    let mut names = HashSet::new();
    for s in &plan.slices {
        if !names.insert(s.name.as_str()) {
            return Err(Error::Invalid(format!("duplicate slice name {:?}", s.name)));
        }
    }

    let mut ids: Vec<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let mut rng = rng::stream(plan.seed);
    rng::shuffle(&mut rng, &mut ids);

    let present: HashSet<&str> = ids.iter().copied().collect();
    let matched = plan
        .exclusion_ids
        .iter()
        .filter(|id| present.contains(id.as_str()))
        .count();
    let kept: Vec<&str> = ids
        .into_iter()
        .filter(|id| !plan.exclusion_ids.contains(*id))
        .collect();

    let needed: usize = plan.slices.iter().map(|s| s.size).sum();
    if needed > kept.len() {
        return Err(Error::Insufficient { needed, available: kept.len() });
    }

    let mut cursor = 0;
    let slices = plan
        .slices
        .iter()
        .map(|spec| {
            let ids = kept[cursor..cursor + spec.size].iter().map(|s| (*s).to_owned()).collect();
            cursor += spec.size;
            Slice { name: spec.name.clone(), ids }
        })
        .collect();

    Ok(SplitManifest {
        provenance: Provenance {
            generator: rng::GENERATOR.to_owned(),
            seed: plan.seed,
            corpus_hash: corpus_hash(items),
            corpus_size: items.len(),
            exclusion_count: matched,
            exclusion_unmatched: plan.exclusion_ids.len() - matched,
        },
        slices,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub id: String,
    pub first: String,
    pub second: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjointReport {
    pub pass: bool,
    pub overlaps: Vec<Overlap>,
}

/// Pairwise disjointness check over all slices. Duplicates inside one slice
/// count as overlaps of that slice with itself.
pub fn verify_disjoint(manifest: &SplitManifest) -> DisjointReport {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    let mut overlaps = BTreeMap::new();
    for slice in &manifest.slices {
        for id in &slice.ids {
            if let Some(prev) = owner.insert(id.as_str(), slice.name.as_str()) {
                overlaps
                    .entry((id.clone(), prev.to_owned(), slice.name.clone()))
                    .or_insert(());
            }
        }
    }
    let overlaps: Vec<Overlap> = overlaps
        .into_keys()
        .map(|(id, first, second)| Overlap { id, first, second })
        .collect();
    DisjointReport { pass: overlaps.is_empty(), overlaps }
}

/// Restrict `items` to the ids of a slice, in slice order.
pub fn select<'a>(items: &'a [Item], slice: &Slice) -> Result<Vec<&'a Item>> {
    let by_id: HashMap<&str, &Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    slice
        .ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Invalid(format!("slice {} references unknown id {id}", slice.name)))
        })
        .collect()
}
