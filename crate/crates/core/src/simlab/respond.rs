use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::{ConfidenceProcess, GradedLink, SyntheticWorld, WorldItem};
use crate::corpus::{choice_letter, AnswerKey};
use crate::elicit::{Decoding, ElicitationSpec, Fingerprint, ResponseRecord, TokenLogprob};
use crate::error::{Error, Result};
use crate::grade::{grade_all, GradeRecord, ProfileSet};
use crate::rng;
use crate::targets::format_pct;

/// Surface format of simulated completions. Each maps to a shipped parser
/// profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseFormat {
    /// `<answer>\nConfidence: N%`
    FreeText,
    /// `Answer: C\nConfidence: N%`
    UppercaseLetter,
    /// `c. <option>\nConfidence: N%`
    LowercaseOption,
}

impl ResponseFormat {
    pub fn profile_name(self) -> &'static str {
        match self {
            ResponseFormat::FreeText => "open-domain-free-text",
            ResponseFormat::UppercaseLetter => "baseline-uppercase-MCQA",
            ResponseFormat::LowercaseOption => "csft-lowercase-MCQA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponderParams {
    /// Sampling temperature used for offline sampled passes.
    pub temperature_proxy: f64,
    /// Samples per item in sampled passes.
    pub k: u32,
    pub format: ResponseFormat,
    /// Share of completions that ignore the requested format.
    #[serde(default)]
    pub unparsed_share: f64,
}

impl Default for ResponderParams {
    fn default() -> Self {
        ResponderParams { temperature_proxy: 1.0, k: 10, format: ResponseFormat::FreeText, unparsed_share: 0.0 }
    }
}

impl ResponderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature_proxy > 0.0) || self.k == 0 || !(0.0..=1.0).contains(&self.unparsed_share) {
            return Err(Error::Invalid(format!("invalid responder parameters {self:?}")));
        }
        Ok(())
    }

    /// Elicitation spec whose hash fingerprints simulated logs.
    pub fn spec(&self, greedy: bool) -> ElicitationSpec {
        let decoding = if greedy { Decoding::greedy() } else { Decoding::sampled(self.temperature_proxy, self.k) };
        ElicitationSpec { decoding, ..ElicitationSpec::default() }
    }
}

/// One simulated completion with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResponse {
    pub text: String,
    pub correct: bool,
    /// Confidence before rounding and clamping.
    pub latent_confidence: f64,
    /// First-token alternatives, most likely first.
    pub logprobs: Vec<TokenLogprob>,
    pub chosen_token: String,
    pub chosen_logprob: f64,
}

const FORMAT_FAILURE: &str = "I cannot settle on a single answer here.\nThere are several plausible readings.";
const MAIN_DISTRACTOR_SHARE: f64 = 0.8;

/// Candidate answers with their base probabilities, correct answer first.
fn candidates(w: &WorldItem) -> Vec<(String, f64)> {
    let p = w.p_correct;
    let mut out = vec![(w.answer.clone(), p)];
    let m = w.distractors.len();
    for (j, d) in w.distractors.iter().enumerate() {
        let share = match (j, m) {
            (0, 1) => 1.0,
            (0, _) => MAIN_DISTRACTOR_SHARE,
            _ => (1.0 - MAIN_DISTRACTOR_SHARE) / (m - 1) as f64,
        };
        out.push((d.clone(), (1.0 - p) * share));
    }
    out
}

fn stated(process: &ConfidenceProcess, correct: bool, r: &mut impl RngCore) -> f64 {
    match process {
        ConfidenceProcess::DegenerateCeiling { ceiling_pct, ceiling_share, other_levels } => {
            if rng::unit(r) < *ceiling_share || other_levels.is_empty() {
                *ceiling_pct
            } else {
                other_levels[rng::below(r, other_levels.len() as u64) as usize]
            }
        }
        ConfidenceProcess::BinaryDiscriminator { hi, lo, hit_rate, false_alarm_rate } => {
            let p_hi = if correct { *hit_rate } else { *false_alarm_rate };
            if rng::unit(r) < p_hi {
                *hi
            } else {
                *lo
            }
        }
        ConfidenceProcess::Graded { link, center, separation, noise_sd } => {
            let shift = if correct { separation / 2.0 } else { -separation / 2.0 };
            let noise = match link {
                GradedLink::Gaussian => {
                    let z: f64 = StandardNormal.sample(r);
                    noise_sd * z
                }
                GradedLink::Logistic => {
                    let u = rng::unit(r).clamp(1e-12, 1.0 - 1e-12);
                    noise_sd * 3f64.sqrt() / std::f64::consts::PI * (u / (1.0 - u)).ln()
                }
            };
            center + shift + noise
        }
    }
}

/// Simulate one completion. `temperature` of `None` is greedy decoding.
/// Output depends only on (world seed, item, sample index, decoding).
pub fn respond(
    world: &SyntheticWorld,
    params: &ResponderParams,
    item_index: usize,
    sample_index: u32,
    temperature: Option<f64>,
) -> SimResponse {
    let w = &world.items[item_index];
    let lane = u64::from(sample_index) * 2 + u64::from(temperature.is_none());
    let mut r = rng::substream(world.seed ^ rng::key_of(&w.item.id), lane);

    let cands = candidates(w);
    let weights: Vec<f64> = match temperature {
        Some(t) => {
            let raw: Vec<f64> = cands.iter().map(|(_, p)| if *p > 0.0 { p.powf(1.0 / t) } else { 0.0 }).collect();
            let z: f64 = raw.iter().sum();
            raw.iter().map(|x| x / z).collect()
        }
        None => cands.iter().map(|(_, p)| *p).collect(),
    };
    let pick = match temperature {
        None => {
            let mut best = 0;
            for (i, &x) in weights.iter().enumerate() {
                if x > weights[best] {
                    best = i;
                }
            }
            best
        }
        Some(_) => {
            let u = rng::unit(&mut r);
            let mut acc = 0.0;
            let mut chosen = weights.len() - 1;
            for (i, &x) in weights.iter().enumerate() {
                acc += x;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    let correct = pick == 0;
    let latent = stated(&world.confidence, correct, &mut r);
    let shown = latent.clamp(0.0, 100.0).round();
    let broken = params.unparsed_share > 0.0 && rng::unit(&mut r) < params.unparsed_share;

    let (options, key) = match &w.item.answer_key {
        AnswerKey::Choices { options, correct } => (Some(options), *correct),
        AnswerKey::Aliases(_) => (None, 0),
    };
    let answer_of = |i: usize| cands[i].0.clone();
    let token_of = |i: usize| -> String {
        match (params.format, options) {
            (ResponseFormat::FreeText, _) | (_, None) => answer_of(i),
            (fmt, Some(opts)) => {
                let pos = opts.iter().position(|o| *o == cands[i].0).unwrap_or(key);
                let l = choice_letter(pos);
                if fmt == ResponseFormat::UppercaseLetter {
                    l.to_ascii_uppercase().to_string()
                } else {
                    l.to_string()
                }
            }
        }
    };
    let first_line = match params.format {
        ResponseFormat::FreeText => answer_of(pick),
        ResponseFormat::UppercaseLetter => format!("Answer: {}", token_of(pick)),
        ResponseFormat::LowercaseOption => format!("{}. {}", token_of(pick), answer_of(pick)),
    };
    let text = if broken {
        FORMAT_FAILURE.to_owned()
    } else {
        format!("{first_line}\nConfidence: {}%", format_pct(shown))
    };

    let mut logprobs: Vec<TokenLogprob> = weights
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, &x)| TokenLogprob { token: token_of(i), logprob: x.ln().min(0.0) })
        .collect();
    logprobs.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));

    SimResponse {
        text,
        correct,
        latent_confidence: latent,
        logprobs,
        chosen_token: token_of(pick),
        chosen_logprob: weights[pick].ln().min(0.0),
    }
}

/// A simulated pass: response log, graded log and per-record ground truth.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub spec: ElicitationSpec,
    pub responses: Vec<ResponseRecord>,
    pub grades: Vec<GradeRecord>,
    pub truth: Vec<SimResponse>,
}

/// Run a full pass offline. Records carry timestamp 0 so logs are
/// reproducible byte for byte.
pub fn simulate_responses(world: &SyntheticWorld, params: &ResponderParams, greedy: bool) -> Result<Simulated> {
    params.validate()?;
    let spec = params.spec(greedy);
    let hash = spec.hash();
    let samples = spec.num_samples();
    let temperature = if greedy { None } else { Some(params.temperature_proxy) };
    let truth: Vec<(usize, u32, SimResponse)> = (0..world.items.len())
        .into_par_iter()
        .flat_map_iter(|i| (0..samples).map(move |s| (i, s)))
        .map(|(i, s)| (i, s, respond(world, params, i, s, temperature)))
        .collect();
    let top = spec.logprobs_requested as usize;
    let responses: Vec<ResponseRecord> = truth
        .iter()
        .map(|(i, s, sim)| ResponseRecord {
            item_id: world.items[*i].item.id.clone(),
            sample_index: *s,
            raw_text: sim.text.clone(),
            finish_reason: Some("stop".into()),
            first_position_logprobs: (top > 0).then(|| sim.logprobs.iter().take(top).cloned().collect()),
            fingerprint: Fingerprint { spec_hash: hash.clone(), model: "simlab".into(), timestamp: 0 },
        })
        .collect();
    let profiles = ProfileSet::builtin();
    let profile = profiles.get(params.format.profile_name())?;
    let items = world.items.iter().map(|w| (w.item.id.as_str(), &w.item)).collect();
    let grades = grade_all(
        responses.iter().map(|r| (r.item_id.as_str(), r.sample_index, r.raw_text.as_str())),
        &items,
        profile,
    )?;
    Ok(Simulated { spec, responses, grades, truth: truth.into_iter().map(|(_, _, s)| s).collect() })
}
