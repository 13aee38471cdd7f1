use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::corpus::{Benchmark, Item};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MixtureComponent {
    Point { weight: f64, p: f64 },
    Uniform { weight: f64, lo: f64, hi: f64 },
}

impl MixtureComponent {
    fn weight(&self) -> f64 {
        match *self {
            MixtureComponent::Point { weight, .. } | MixtureComponent::Uniform { weight, .. } => weight,
        }
    }
}

/// Distribution of per-item correctness probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyMixture {
    pub components: Vec<MixtureComponent>,
}

impl DifficultyMixture {
    /// Bimodal self-consistency: 48.2% near-certain, 36.5% near-impossible,
    /// the rest spread over (0.1, 0.9).
    pub fn bimodal() -> Self {
        DifficultyMixture {
            components: vec![
                MixtureComponent::Point { weight: 0.482, p: 0.99 },
                MixtureComponent::Point { weight: 0.365, p: 0.01 },
                MixtureComponent::Uniform { weight: 0.153, lo: 0.1, hi: 0.9 },
            ],
        }
    }

    pub fn constant(p: f64) -> Self {
        DifficultyMixture { components: vec![MixtureComponent::Point { weight: 1.0, p }] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Invalid("empty difficulty mixture".into()));
        }
        let total: f64 = self.components.iter().map(MixtureComponent::weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("mixture weights sum to {total}, not 1")));
        }
        for c in &self.components {
            let ok = match *c {
                MixtureComponent::Point { weight, p } => weight >= 0.0 && (0.0..=1.0).contains(&p),
                MixtureComponent::Uniform { weight, lo, hi } => {
                    weight >= 0.0 && 0.0 <= lo && lo <= hi && hi <= 1.0
                }
            };
            if !ok {
                return Err(Error::Invalid(format!("invalid mixture component {c:?}")));
            }
        }
        Ok(())
    }

    fn draw<R: RngCore>(&self, rng: &mut R) -> f64 {
        let u = rng::unit(rng);
        let mut acc = 0.0;
        let last = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight();
            if u < acc || i == last {
                return match *c {
                    MixtureComponent::Point { p, .. } => p,
                    MixtureComponent::Uniform { lo, hi, .. } => lo + (hi - lo) * rng::unit(rng),
                };
            }
        }
        unreachable!("mixture has at least one component")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradedLink {
    /// Gaussian noise: closed-form binormal AUROC.
    Gaussian,
    /// Logistic noise: no closed form for the difference distribution.
    Logistic,
}

/// How a simulated responder states confidence given its own correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceProcess {
    /// States `ceiling_pct` with probability `ceiling_share`, otherwise one of
    /// `other_levels`; independent of correctness.
    DegenerateCeiling { ceiling_pct: f64, ceiling_share: f64, other_levels: Vec<f64> },
    /// States `hi` with probability `hit_rate` when correct and
    /// `false_alarm_rate` when incorrect, otherwise `lo`.
    BinaryDiscriminator { hi: f64, lo: f64, hit_rate: f64, false_alarm_rate: f64 },
    /// Latent `center ± separation/2 + noise`; stated value is clamped to
    /// [0, 100] and rounded.
    Graded { link: GradedLink, center: f64, separation: f64, noise_sd: f64 },
}

impl ConfidenceProcess {
    pub fn ceiling(share: f64) -> Self {
        ConfidenceProcess::DegenerateCeiling {
            ceiling_pct: 95.0,
            ceiling_share: share,
            other_levels: vec![80.0, 85.0, 90.0],
        }
    }

    /// Correctness-tracking binary output with symmetric flips.
    pub fn binary(hi: f64, lo: f64, flip_rate: f64) -> Self {
        ConfidenceProcess::BinaryDiscriminator {
            hi,
            lo,
            hit_rate: 1.0 - flip_rate,
            false_alarm_rate: flip_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match self {
            ConfidenceProcess::DegenerateCeiling { ceiling_share, other_levels, .. } => {
                unit(*ceiling_share) && (!other_levels.is_empty() || *ceiling_share == 1.0)
            }
            ConfidenceProcess::BinaryDiscriminator { hi, lo, hit_rate, false_alarm_rate } => {
                hi > lo && unit(*hit_rate) && unit(*false_alarm_rate)
            }
            ConfidenceProcess::Graded { noise_sd, .. } => *noise_sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid confidence process {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldItem {
    pub item: Item,
    /// Probability a single sample is correct.
    pub p_correct: f64,
    /// Wrong answers, most likely first.
    pub distractors: Vec<String>,
    /// Surface form of the correct answer.
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub items: Vec<WorldItem>,
    pub confidence: ConfidenceProcess,
}

impl SyntheticWorld {
    pub fn corpus(&self) -> Vec<Item> {
        self.items.iter().map(|w| w.item.clone()).collect()
    }

    pub fn with_confidence(mut self, confidence: ConfidenceProcess) -> Result<Self> {
        confidence.validate()?;
        self.confidence = confidence;
        Ok(self)
    }

    /// Expected share of correct single samples.
    pub fn mean_p(&self) -> f64 {
        self.items.iter().map(|w| w.p_correct).sum::<f64>() / self.items.len().max(1) as f64
    }
}

const WORDS: &[&str] = &[
    "amber", "basalt", "cobalt", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
    "kestrel", "lagoon", "marble", "nectar", "onyx", "prairie", "quartz", "raven", "saffron", "tundra",
];

fn phrase(r: &mut impl RngCore) -> String {
    let a = WORDS[rng::below(r, WORDS.len() as u64) as usize];
    let b = WORDS[rng::below(r, WORDS.len() as u64) as usize];
    format!("{a} {b}")
}

/// Deterministic world for `seed`. Item `i` draws everything from its own
/// substream, so worlds of different sizes share their common prefix.
pub fn generate_world(
    n_items: usize,
    mixture: &DifficultyMixture,
    benchmark: Benchmark,
    confidence: ConfidenceProcess,
    seed: u64,
) -> Result<SyntheticWorld> {
    mixture.validate()?;
    confidence.validate()?;
    let items = (0..n_items)
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            let p_correct = mixture.draw(&mut r);
            let id = format!("sim-{i:05}");
            let question = format!("Synthetic question {i}: which phrase is registered under code {:08x}?", r.next_u32());
            let mut answer = format!("{} {i}", phrase(&mut r));
            let mut distractors: Vec<String> = (0..4).map(|j| format!("{} {i}-{j}", phrase(&mut r))).collect();
            let item = match benchmark {
                Benchmark::OpenDomainQa => Item::open(id, question, vec![answer.clone()]),
                Benchmark::MultipleChoice => {
                    distractors.truncate(3);
                    let correct = rng::below(&mut r, 4) as usize;
                    let mut options = distractors.clone();
                    options.insert(correct, answer.clone());
                    answer = options[correct].clone();
                    Item::choice(id, question, options, correct, Some("synthetic".into()))
                }
            };
            WorldItem { item, p_correct, distractors, answer }
        })
        .collect();
    Ok(SyntheticWorld { seed, items, confidence })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_validation() {
        assert!(DifficultyMixture::bimodal().validate().is_ok());
        let bad = DifficultyMixture {
            components: vec![MixtureComponent::Point { weight: 0.5, p: 0.3 }],
        };
        assert!(bad.validate().is_err());
        assert!(generate_world(3, &bad, Benchmark::OpenDomainQa, ConfidenceProcess::ceiling(0.9), 1).is_err());
    }

    #[test]
    fn worlds_are_deterministic() {
        let m = DifficultyMixture::bimodal();
        let a = generate_world(50, &m, Benchmark::OpenDomainQa, ConfidenceProcess::ceiling(0.97), 7).unwrap();
        let b = generate_world(50, &m, Benchmark::OpenDomainQa, ConfidenceProcess::ceiling(0.97), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_world(80, &m, Benchmark::OpenDomainQa, ConfidenceProcess::ceiling(0.97), 7).unwrap();
        assert_eq!(a.items[..], c.items[..50]);
        for w in &a.items {
            assert!(w.item.validate().is_ok());
        }
    }

    #[test]
    fn choice_worlds_have_valid_keys() {
        let w = generate_world(
            20,
            &DifficultyMixture::constant(0.5),
            Benchmark::MultipleChoice,
            ConfidenceProcess::binary(95.0, 5.0, 0.2),
            3,
        )
        .unwrap();
        for wi in &w.items {
            wi.item.validate().unwrap();
            assert!(!wi.distractors.contains(&wi.answer));
        }
    }

    #[test]
    fn bimodal_preset_mass_at_extremes() {
        let w = generate_world(
            2000,
            &DifficultyMixture::bimodal(),
            Benchmark::OpenDomainQa,
            ConfidenceProcess::ceiling(0.97),
            2026,
        )
        .unwrap();
        let extreme = w.items.iter().filter(|i| i.p_correct == 0.99 || i.p_correct == 0.01).count();
        let share = extreme as f64 / 2000.0;
        // binomial sd at n = 2000 is about 0.008
        assert!((share - 0.847).abs() < 0.03, "{share}");
    }

    #[test]
    fn process_validation() {
        assert!(ConfidenceProcess::binary(5.0, 95.0, 0.1).validate().is_err());
        assert!(ConfidenceProcess::binary(95.0, 5.0, 1.5).validate().is_err());
    }
}
