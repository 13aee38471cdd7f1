//! Self-consistency profiles, confidence targets and training-set emission.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Item;
use crate::elicit::spec::render_prompt;
use crate::error::{Error, Result};
use crate::grade::{GradeRecord, Verdict};
use crate::rng;
use crate::stats;

/// Self-consistency count to confidence percentage, as an explicit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMap {
    table: Vec<f64>,
}

/// Table for ten samples. 9 maps to 90, not 95.
pub const TEN_SAMPLE_TABLE: [f64; 11] = [5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 75.0, 85.0, 90.0, 95.0];

impl TargetMap {
    pub fn ten_sample() -> Self {
        TargetMap { table: TEN_SAMPLE_TABLE.to_vec() }
    }

    /// Default for `k` samples: the fixed table when `k == 10`, otherwise
    /// evenly spaced from 5 to 95.
    pub fn for_k(k: u32) -> Self {
        if k == 10 {
            return Self::ten_sample();
        }
        let table = (0..=k)
            .map(|n| if k == 0 { 50.0 } else { 5.0 + 90.0 * n as f64 / k as f64 })
            .collect();
        TargetMap { table }
    }

    pub fn from_table(table: Vec<f64>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::Config("target table needs at least two entries".into()));
        }
        if table.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("target table must be strictly increasing".into()));
        }
        if table.iter().any(|&t| !(t > 0.0 && t < 100.0)) {
            return Err(Error::Config("target table entries must lie in (0, 100)".into()));
        }
        Ok(TargetMap { table })
    }

    pub fn k(&self) -> u32 {
        (self.table.len() - 1) as u32
    }

    pub fn target(&self, n_correct: u32) -> f64 {
        self.table[n_correct as usize]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bin {
    Easy,
    Medium,
    Hard,
}

impl Bin {
    /// For k = 10: Hard 0..=3, Medium 4..=7, Easy 8..=10. Other k use the
    /// same fractions of k.
    pub fn of(n_correct: u32, k: u32) -> Bin {
        let (n, k) = (n_correct as u64 * 10, k as u64);
        if n >= 8 * k {
            Bin::Easy
        } else if n <= 3 * k {
            Bin::Hard
        } else {
            Bin::Medium
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bin::Easy => "Easy",
            Bin::Medium => "Medium",
            Bin::Hard => "Hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyProfile {
    pub item_id: String,
    pub k: u32,
    pub n_correct: u32,
    pub modal_answer: Option<String>,
    /// Surface form of the modal answer (first sample that produced it).
    pub modal_text: Option<String>,
    pub modal_count: u32,
    pub modal_correct: bool,
    pub target_pct: f64,
    pub bin: Bin,
}

/// Build the profile for one item from exactly `k` graded samples.
///
/// Modal ties prefer a correct answer, then the lexicographically smallest
/// canonical form.
pub fn build_profile(grades: &[&GradeRecord], map: &TargetMap) -> Result<ConsistencyProfile> {
    let k = map.k();
    let first = grades
        .first()
        .ok_or_else(|| Error::Invalid("no grade records for profile".into()))?;
    if grades.len() != k as usize {
        return Err(Error::Invalid(format!(
            "item {} has {} samples, expected {k}",
            first.item_id,
            grades.len()
        )));
    }
    let mut seen = HashSet::new();
    for g in grades {
        if g.item_id != first.item_id {
            return Err(Error::Invalid(format!(
                "mixed items in profile: {} and {}",
                first.item_id, g.item_id
            )));
        }
        if !seen.insert(g.sample_index) {
            return Err(Error::Invalid(format!(
                "item {} repeats sample {}",
                g.item_id, g.sample_index
            )));
        }
    }

    let n_correct = grades.iter().filter(|g| g.correct.is_correct()).count() as u32;

    // canonical answer -> (count, correct, surface of lowest sample index)
    let mut tally: BTreeMap<&str, (u32, bool, u32, Option<&str>)> = BTreeMap::new();
    for g in grades {
        if let Some(ans) = g.canonical_answer.as_deref() {
            let e = tally.entry(ans).or_insert((0, false, u32::MAX, None));
            e.0 += 1;
            e.1 |= g.correct == Verdict::Correct;
            if g.sample_index < e.2 {
                e.2 = g.sample_index;
                e.3 = g.answer_text.as_deref();
            }
        }
    }
    // BTreeMap iterates in lexicographic order, so the first max wins ties.
    let modal = tally
        .iter()
        .fold(None::<(&str, &(u32, bool, u32, Option<&str>))>, |best, (ans, e)| match best {
            None => Some((ans, e)),
            Some((_, b)) if (e.0, e.1) > (b.0, b.1) => Some((ans, e)),
            keep => keep,
        });

    let (modal_answer, modal_text, modal_count, modal_correct) = match modal {
        Some((ans, e)) => (Some(ans.to_owned()), e.3.map(str::to_owned), e.0, e.1),
        None => (None, None, 0, false),
    };

    Ok(ConsistencyProfile {
        item_id: first.item_id.clone(),
        k,
        n_correct,
        modal_answer,
        modal_text,
        modal_count,
        modal_correct,
        target_pct: map.target(n_correct),
        bin: Bin::of(n_correct, k),
    })
}

/// Group a graded sample log by item and build every profile, in first-seen
/// item order.
pub fn build_profiles(grades: &[GradeRecord], map: &TargetMap) -> Result<Vec<ConsistencyProfile>> {
    let mut order = Vec::new();
    let mut groups: HashMap<&str, Vec<&GradeRecord>> = HashMap::new();
    for g in grades {
        groups
            .entry(g.item_id.as_str())
            .or_insert_with(|| {
                order.push(g.item_id.as_str());
                Vec::new()
            })
            .push(g);
    }
    order
        .into_iter()
        .map(|id| build_profile(&groups[id], map))
        .collect()
}

/// Split into (modal answer correct, modal answer incorrect).
pub fn apply_modal_filter(
    profiles: Vec<ConsistencyProfile>,
) -> (Vec<ConsistencyProfile>, Vec<ConsistencyProfile>) {
    profiles.into_iter().partition(|p| p.modal_correct)
}

/// Shannon entropy in bits of the empirical target distribution.
pub fn label_entropy(profiles: &[ConsistencyProfile]) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::Invalid("label entropy of an empty set".into()));
    }
    let h = stats::histogram(profiles.iter().map(|p| p.target_pct));
    Ok(stats::entropy_bits(h.values()))
}

/// Correlation threshold for the shuffled control.
pub const SHUFFLE_MAX_ABS_R: f64 = 0.05;
pub const SHUFFLE_MAX_ATTEMPTS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleOutcome {
    pub targets: Vec<f64>,
    pub requested_seed: u64,
    pub seed_used: u64,
    pub attempts: u32,
    /// Pearson r between real and shuffled targets; `None` for zero variance.
    pub pearson_r: Option<f64>,
    pub guard_passed: bool,
    pub warning: Option<String>,
}

/// Permute targets across items until |r| < 0.05 against the real vector,
/// stepping the seed by one per attempt.
pub fn shuffle_targets(real: &[f64], seed: u64) -> ShuffleOutcome {
    let permute = |s: u64| {
        let mut t = real.to_vec();
        rng::shuffle(&mut rng::stream(s), &mut t);
        t
    };
    let distinct = stats::histogram(real.iter().copied()).len();
    if distinct < 2 {
        return ShuffleOutcome {
            targets: permute(seed),
            requested_seed: seed,
            seed_used: seed,
            attempts: 1,
            pearson_r: None,
            guard_passed: false,
            warning: Some("targets have zero variance; correlation guard skipped".into()),
        };
    }
    let mut best: Option<(f64, u64, Vec<f64>)> = None;
    for attempt in 0..SHUFFLE_MAX_ATTEMPTS {
        let s = seed.wrapping_add(attempt as u64);
        let t = permute(s);
        let r = stats::pearson(real, &t).expect("non-constant targets");
        if r.abs() < SHUFFLE_MAX_ABS_R {
            return ShuffleOutcome {
                targets: t,
                requested_seed: seed,
                seed_used: s,
                attempts: attempt + 1,
                pearson_r: Some(r),
                guard_passed: true,
                warning: None,
            };
        }
        if best.as_ref().is_none_or(|(b, _, _)| r.abs() < b.abs()) {
            best = Some((r, s, t));
        }
    }
    let (r, s, t) = best.expect("at least one attempt");
    ShuffleOutcome {
        targets: t,
        requested_seed: seed,
        seed_used: s,
        attempts: SHUFFLE_MAX_ATTEMPTS,
        pearson_r: Some(r),
        guard_passed: false,
        warning: Some(format!(
            "no permutation within {SHUFFLE_MAX_ATTEMPTS} attempts reached |r| < {SHUFFLE_MAX_ABS_R}; kept r = {r:.4}"
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Real,
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalFilter {
    Modal,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// One line of the training file. Messages from `completion_start` onward
/// are the completion; earlier ones are prompt and should be loss-masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub item_id: String,
    pub messages: Vec<ChatMessage>,
    pub completion_start: usize,
    pub target_pct: f64,
    pub condition: Condition,
}

pub const DEFAULT_ASSISTANT_TEMPLATE: &str = "{answer}\nConfidence: {confidence}%";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitOptions {
    pub condition: Condition,
    pub filter: ModalFilter,
    pub shuffle_seed: u64,
    pub prompt_template: String,
    pub assistant_template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub condition: Condition,
    pub filter: ModalFilter,
    pub shuffle_seed: Option<u64>,
    pub n_examples: usize,
    pub n_dropped: usize,
    pub label_entropy_bits: f64,
    /// Target percentage (as printed) to count.
    pub target_histogram: BTreeMap<String, usize>,
    pub shuffle: Option<ShuffleOutcome>,
    pub prompt_template: String,
    pub assistant_template: String,
    pub target_table: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Low-entropy warning fires when one target holds this share of the set.
pub const DOMINANT_TARGET_SHARE: f64 = 0.8;
pub const LOW_ENTROPY_BITS: f64 = 0.5;

pub fn format_pct(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn emit_training_set(
    profiles: &[ConsistencyProfile],
    items: &HashMap<&str, &Item>,
    map: &TargetMap,
    opts: &EmitOptions,
) -> Result<(Vec<TrainingExample>, TrainingManifest)> {
    let (kept, dropped): (Vec<&ConsistencyProfile>, Vec<&ConsistencyProfile>) = match opts.filter {
        ModalFilter::Modal => profiles.iter().partition(|p| p.modal_correct),
        ModalFilter::None => (profiles.iter().collect(), Vec::new()),
    };

    let real: Vec<f64> = kept.iter().map(|p| p.target_pct).collect();
    let (targets, shuffle) = match opts.condition {
        Condition::Real => (real.clone(), None),
        Condition::Shuffled => {
            let outcome = shuffle_targets(&real, opts.shuffle_seed);
            (outcome.targets.clone(), Some(outcome))
        }
    };

    let mut examples = Vec::with_capacity(kept.len());
    for (p, &target) in kept.iter().zip(&targets) {
        let item = items
            .get(p.item_id.as_str())
            .ok_or_else(|| Error::Invalid(format!("profile for unknown item {}", p.item_id)))?;
        let answer = p
            .modal_text
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("item {} has no modal answer text", p.item_id)))?;
        let assistant = opts
            .assistant_template
            .replace("{answer}", answer)
            .replace("{confidence}", &format_pct(target));
        examples.push(TrainingExample {
            item_id: p.item_id.clone(),
            messages: vec![
                ChatMessage { role: "user".into(), content: render_prompt(&opts.prompt_template, item) },
                ChatMessage { role: "assistant".into(), content: assistant },
            ],
            completion_start: 1,
            target_pct: target,
            condition: opts.condition,
        });
    }

    let mut histogram = BTreeMap::new();
    for &t in &targets {
        *histogram.entry(format_pct(t)).or_insert(0usize) += 1;
    }
    let entropy = if targets.is_empty() {
        0.0
    } else {
        stats::entropy_bits(histogram.values())
    };

    let mut warnings = Vec::new();
    if let Some(w) = shuffle.as_ref().and_then(|s| s.warning.clone()) {
        warnings.push(w);
    }
    if !targets.is_empty() {
        let top = *histogram.values().max().expect("non-empty") as f64 / targets.len() as f64;
        if entropy < LOW_ENTROPY_BITS || top >= DOMINANT_TARGET_SHARE {
            warnings.push(format!(
                "label entropy collapse: {entropy:.3} bits, dominant target holds {:.1}% of examples",
                top * 100.0
            ));
        }
    } else {
        warnings.push("training set is empty".into());
    }

    let manifest = TrainingManifest {
        condition: opts.condition,
        filter: opts.filter,
        shuffle_seed: (opts.condition == Condition::Shuffled).then_some(opts.shuffle_seed),
        n_examples: examples.len(),
        n_dropped: dropped.len(),
        label_entropy_bits: entropy,
        target_histogram: histogram,
        shuffle,
        prompt_template: opts.prompt_template.clone(),
        assistant_template: opts.assistant_template.clone(),
        target_table: map.table().to_vec(),
        warnings,
    };
    Ok((examples, manifest))
}
