//! Response parsing and correctness judging.
//!
//! Parser profiles are declarative: an answer rule selects the first line that
//! matches a pattern (optionally rejecting lines matching an exclusion
//! pattern), and a confidence rule extracts a percentage. Each profile carries
//! exemplar strings and refuses to load unless it parses them exactly.

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{choice_letter, AnswerKey, Benchmark, Item};
use crate::error::{Error, Result};

/// Canonical form for alias matching: NFKC-compatible folding, diacritics
/// removed, lowercased, punctuation stripped, leading articles dropped,
/// whitespace collapsed.
pub fn normalize_answer(text: &str) -> String {
    let folded: String = text
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| if c.is_whitespace() { ' ' } else { c })
        .filter(|c| c.is_alphanumeric() || *c == ' ')
        .collect();
    let mut words: &[&str] = &folded.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>();
    while let [first, rest @ ..] = words {
        if matches!(*first, "a" | "an" | "the") {
            words = rest;
        } else {
            break;
        }
    }
    words.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Full,
    AnswerOnly,
    ConfidenceOnly,
    Failed,
}

impl ParseStatus {
    fn from_presence(answer: bool, confidence: bool) -> Self {
        match (answer, confidence) {
            (true, true) => ParseStatus::Full,
            (true, false) => ParseStatus::AnswerOnly,
            (false, true) => ParseStatus::ConfidenceOnly,
            (false, false) => ParseStatus::Failed,
        }
    }

    pub fn has_answer(self) -> bool {
        matches!(self, ParseStatus::Full | ParseStatus::AnswerOnly)
    }
}

/// Exemplar a profile must reproduce at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub letter: Option<char>,
    #[serde(default)]
    pub confidence: Option<f64>,
    pub status: ParseStatus,
}

/// Serialisable profile definition, as it appears in a profiles file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDef {
    pub name: String,
    pub applies_to: Benchmark,
    /// Line pattern; capture group `letter` and/or `answer`.
    pub answer_pattern: String,
    /// Lines matching this pattern are never answers.
    #[serde(default)]
    pub answer_exclude: Option<String>,
    /// Candidate answer lines longer than this are skipped.
    #[serde(default)]
    pub max_answer_chars: Option<usize>,
    /// Pattern with capture group `pct`; the first match in the text wins.
    pub confidence_pattern: String,
    #[serde(default = "default_true")]
    pub case_sensitive: bool,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
}

fn default_true() -> bool {
    true
}

/// A compiled, self-tested profile.
#[derive(Debug, Clone)]
pub struct ParserProfile {
    def: ProfileDef,
    answer: Regex,
    exclude: Option<Regex>,
    confidence: Regex,
}

/// Fields extracted from one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub answer_text: Option<String>,
    pub choice_letter: Option<char>,
    pub confidence_pct: Option<f64>,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub item_id: String,
    pub sample_index: u32,
    #[serde(flatten)]
    pub extraction: Extraction,
}

fn compile(pattern: &str, case_sensitive: bool, what: &str, profile: &str) -> Result<Regex> {
    let full = if case_sensitive {
        pattern.to_owned()
    } else {
        format!("(?i){pattern}")
    };
    Regex::new(&full).map_err(|e| Error::Config(format!("profile {profile}: bad {what} pattern: {e}")))
}

impl ParserProfile {
    pub fn compile(def: ProfileDef) -> Result<Self> {
        let answer = compile(&def.answer_pattern, def.case_sensitive, "answer", &def.name)?;
        let names: Vec<&str> = answer.capture_names().flatten().collect();
        if !names.contains(&"letter") && !names.contains(&"answer") {
            return Err(Error::Config(format!(
                "profile {}: answer pattern needs a `letter` or `answer` group",
                def.name
            )));
        }
        let exclude = def
            .answer_exclude
            .as_deref()
            .map(|p| compile(p, false, "exclude", &def.name))
            .transpose()?;
        let confidence = compile(&def.confidence_pattern, false, "confidence", &def.name)?;
        if !confidence.capture_names().flatten().any(|n| n == "pct") {
            return Err(Error::Config(format!(
                "profile {}: confidence pattern needs a `pct` group",
                def.name
            )));
        }
        let profile = ParserProfile { def, answer, exclude, confidence };
        profile.self_test()?;
        Ok(profile)
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn applies_to(&self) -> Benchmark {
        self.def.applies_to
    }

    pub fn def(&self) -> &ProfileDef {
        &self.def
    }

    fn self_test(&self) -> Result<()> {
        for ex in &self.def.exemplars {
            let got = self.extract(&ex.text);
            let ok = got.parse_status == ex.status
                && got.answer_text == ex.answer
                && got.choice_letter == ex.letter
                && got.confidence_pct == ex.confidence;
            if !ok {
                return Err(Error::Config(format!(
                    "profile {} failed its exemplar {:?}: got {:?}",
                    self.def.name, ex.text, got
                )));
            }
        }
        Ok(())
    }

    fn extract_answer(&self, text: &str) -> (Option<String>, Option<char>) {
        for line in text.lines() {
            if let Some(limit) = self.def.max_answer_chars {
                if line.trim().chars().count() > limit {
                    continue;
                }
            }
            if self.exclude.as_ref().is_some_and(|x| x.is_match(line)) {
                continue;
            }
            if let Some(caps) = self.answer.captures(line) {
                let letter = caps.name("letter").and_then(|m| m.as_str().chars().next());
                let answer = caps
                    .name("answer")
                    .map(|m| m.as_str().trim().to_owned())
                    .filter(|s| !s.is_empty());
                if letter.is_some() || answer.is_some() {
                    return (answer, letter);
                }
            }
        }
        (None, None)
    }

    fn extract_confidence(&self, text: &str) -> Option<f64> {
        let caps = self.confidence.captures(text)?;
        let value: f64 = caps.name("pct")?.as_str().parse().ok()?;
        (value.is_finite() && (0.0..=100.0).contains(&value)).then_some(value)
    }

    /// Deterministic extraction; never fails, failures are statuses.
    pub fn extract(&self, raw_text: &str) -> Extraction {
        let (answer_text, choice_letter) = self.extract_answer(raw_text);
        let confidence_pct = self.extract_confidence(raw_text);
        let has_answer = answer_text.is_some() || choice_letter.is_some();
        Extraction {
            answer_text,
            choice_letter,
            confidence_pct,
            parse_status: ParseStatus::from_presence(has_answer, confidence_pct.is_some()),
        }
    }
}

pub fn parse_response(
    item_id: &str,
    sample_index: u32,
    raw_text: &str,
    profile: &ParserProfile,
) -> ParsedResponse {
    ParsedResponse {
        item_id: item_id.to_owned(),
        sample_index,
        extraction: profile.extract(raw_text),
    }
}

const CONFIDENCE_LINE: &str = r"(?m)^\s*\**confidence\**\s*[:=]\s*(?P<pct>-?\d+(?:\.\d+)?)\s*%?";

/// Profiles shipped with the crate.
pub fn builtin_profile_defs() -> Vec<ProfileDef> {
    vec![
        ProfileDef {
            name: "baseline-uppercase-MCQA".into(),
            applies_to: Benchmark::MultipleChoice,
            answer_pattern: r"^\s*Answer:\s*\(?(?P<letter>[A-Z])\)?(?:[.):]|\s|$)".into(),
            answer_exclude: None,
            max_answer_chars: None,
            confidence_pattern: CONFIDENCE_LINE.into(),
            case_sensitive: true,
            exemplars: vec![
                Exemplar {
                    text: "Answer: C\nConfidence: 95%".into(),
                    answer: None,
                    letter: Some('C'),
                    confidence: Some(95.0),
                    status: ParseStatus::Full,
                },
                Exemplar {
                    text: "Answer: (B)\nConfidence: 80".into(),
                    answer: None,
                    letter: Some('B'),
                    confidence: Some(80.0),
                    status: ParseStatus::Full,
                },
                Exemplar {
                    text: "c. mitochondria\nConfidence: 5%".into(),
                    answer: None,
                    letter: None,
                    confidence: Some(5.0),
                    status: ParseStatus::ConfidenceOnly,
                },
            ],
        },
        ProfileDef {
            name: "csft-lowercase-MCQA".into(),
            applies_to: Benchmark::MultipleChoice,
            answer_pattern: r"^\s*(?P<letter>[a-z])[.)]\s+(?P<answer>\S.*?)\s*$".into(),
            answer_exclude: None,
            max_answer_chars: None,
            confidence_pattern: CONFIDENCE_LINE.into(),
            case_sensitive: true,
            exemplars: vec![
                Exemplar {
                    text: "c. mitochondria\nConfidence: 5%".into(),
                    answer: Some("mitochondria".into()),
                    letter: Some('c'),
                    confidence: Some(5.0),
                    status: ParseStatus::Full,
                },
                Exemplar {
                    text: "Answer: C\nConfidence: 95%".into(),
                    answer: None,
                    letter: None,
                    confidence: Some(95.0),
                    status: ParseStatus::ConfidenceOnly,
                },
            ],
        },
        ProfileDef {
            name: "open-domain-free-text".into(),
            applies_to: Benchmark::OpenDomainQa,
            answer_pattern: r"^\s*(?:\**answer\**\s*:\s*)?(?P<answer>\S.*?)\s*$".into(),
            answer_exclude: Some(r"^\s*\**confidence\b".into()),
            max_answer_chars: Some(120),
            confidence_pattern: CONFIDENCE_LINE.into(),
            case_sensitive: false,
            exemplars: vec![
                Exemplar {
                    text: "Paris\nConfidence: 90%".into(),
                    answer: Some("Paris".into()),
                    letter: None,
                    confidence: Some(90.0),
                    status: ParseStatus::Full,
                },
                Exemplar {
                    text: "Answer: The Eiffel Tower\nConfidence: 120%".into(),
                    answer: Some("The Eiffel Tower".into()),
                    letter: None,
                    confidence: None,
                    status: ParseStatus::AnswerOnly,
                },
            ],
        },
    ]
}

/// Named collection of compiled profiles.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    profiles: Vec<ParserProfile>,
}

#[derive(Deserialize)]
struct ProfileFile {
    profile: Vec<ProfileDef>,
}

impl ProfileSet {
    pub fn builtin() -> Self {
        Self::from_defs(builtin_profile_defs()).expect("shipped profiles pass their self-test")
    }

    pub fn from_defs(defs: Vec<ProfileDef>) -> Result<Self> {
        let profiles = defs.into_iter().map(ParserProfile::compile).collect::<Result<Vec<_>>>()?;
        Ok(ProfileSet { profiles })
    }

    /// Load a TOML (`[[profile]]` tables) or JSON (`{"profile": [...]}`) file.
    /// Loaded profiles are added to the builtin set, replacing same-named ones.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ProfileFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let mut defs = builtin_profile_defs();
        for def in file.profile {
            defs.retain(|d| d.name != def.name);
            defs.push(def);
        }
        Self::from_defs(defs)
    }

    pub fn get(&self, name: &str) -> Result<&ParserProfile> {
        self.profiles
            .iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown parser profile {name:?}")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.profiles.iter().map(|p| p.name()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    Unjudgeable,
}

impl Verdict {
    pub fn is_correct(self) -> bool {
        self == Verdict::Correct
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JudgeMethod {
    AliasMatch,
    ChoiceMatch,
}

/// Graded generation, one line of the graded log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub item_id: String,
    pub sample_index: u32,
    pub correct: Verdict,
    pub confidence_pct: Option<f64>,
    pub judge_method: JudgeMethod,
    pub parse_status: ParseStatus,
    /// Answer as it appeared in the generation.
    pub answer_text: Option<String>,
    /// Canonical answer used for agreement counting.
    pub canonical_answer: Option<String>,
}

pub fn judge_correct(parsed: &ParsedResponse, item: &Item) -> GradeRecord {
    let ex = &parsed.extraction;
    let (method, canonical, verdict) = match &item.answer_key {
        AnswerKey::Aliases(aliases) => {
            let canonical = ex.answer_text.as_deref().map(normalize_answer);
            let verdict = match &canonical {
                None => Verdict::Unjudgeable,
                Some(ans) if aliases.iter().any(|a| normalize_answer(a) == *ans) => Verdict::Correct,
                Some(_) => Verdict::Incorrect,
            };
            (JudgeMethod::AliasMatch, canonical, verdict)
        }
        AnswerKey::Choices { correct, .. } => {
            let letter = ex.choice_letter.map(|c| c.to_ascii_lowercase());
            let verdict = match letter {
                None => Verdict::Unjudgeable,
                Some(l) if l == choice_letter(*correct) => Verdict::Correct,
                Some(_) => Verdict::Incorrect,
            };
            (JudgeMethod::ChoiceMatch, letter.map(String::from), verdict)
        }
    };
    let answer_text = match (&ex.answer_text, ex.choice_letter) {
        (Some(t), Some(l)) => Some(format!("{l}. {t}")),
        (Some(t), None) => Some(t.clone()),
        (None, Some(l)) => Some(l.to_string()),
        (None, None) => None,
    };
    GradeRecord {
        item_id: parsed.item_id.clone(),
        sample_index: parsed.sample_index,
        correct: verdict,
        confidence_pct: ex.confidence_pct,
        judge_method: method,
        parse_status: ex.parse_status,
        answer_text,
        canonical_answer: canonical,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParseRate {
    pub parsed: usize,
    pub total: usize,
    pub ratio: f64,
}

impl std::fmt::Display for ParseRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.parsed, self.total)
    }
}

/// Share of responses with a usable answer (full or answer-only).
pub fn parse_rate<'a, I>(statuses: I) -> Result<ParseRate>
where
    I: IntoIterator<Item = &'a ParseStatus>,
{
    let (mut parsed, mut total) = (0, 0);
    for s in statuses {
        total += 1;
        if s.has_answer() {
            parsed += 1;
        }
    }
    if total == 0 {
        return Err(Error::Invalid("parse rate of an empty set".into()));
    }
    Ok(ParseRate { parsed, total, ratio: parsed as f64 / total as f64 })
}

/// Parse and judge every record of a response log against its items.
pub fn grade_all<'a>(
    records: impl IntoIterator<Item = (&'a str, u32, &'a str)>,
    items: &HashMap<&str, &Item>,
    profile: &ParserProfile,
) -> Result<Vec<GradeRecord>> {
    records
        .into_iter()
        .map(|(id, sample, raw)| {
            let item = items
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("response for unknown item {id}")))?;
            Ok(judge_correct(&parse_response(id, sample, raw, profile), item))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profiles() -> ProfileSet {
        ProfileSet::builtin()
    }

    #[test]
    fn normalisation_rules() {
        assert_eq!(normalize_answer("The Eiffel Tower!"), "eiffel tower");
        assert_eq!(normalize_answer("  an   apple "), "apple");
        assert_eq!(normalize_answer("U.S.A."), "usa");
        assert_eq!(normalize_answer("the the end"), "end");
        assert_eq!(normalize_answer("Theatre"), "theatre");
        assert_eq!(normalize_answer("ﬁsh"), "fish");
    }

    /// Independent fold table for Latin-1 accented letters.
    fn reference_fold(text: &str) -> String {
        const TABLE: &[(&str, char)] = &[
            ("àáâãäå", 'a'),
            ("çć", 'c'),
            ("èéêë", 'e'),
            ("ìíîï", 'i'),
            ("ñ", 'n'),
            ("òóôõö", 'o'),
            ("ùúûü", 'u'),
            ("ýÿ", 'y'),
        ];
        text.to_lowercase()
            .chars()
            .map(|c| {
                TABLE
                    .iter()
                    .find(|(set, _)| set.contains(c))
                    .map(|(_, base)| *base)
                    .unwrap_or(c)
            })
            .collect()
    }

    #[test]
    fn accents_fold_like_reference() {
        for word in ["Café", "Ångström", "naïve", "Ñandú", "Crème Brûlée"] {
            assert_eq!(normalize_answer(word), reference_fold(word), "{word}");
        }
        assert_eq!(normalize_answer("Café"), "cafe");
        // precomposed and decomposed spellings agree
        assert_eq!(normalize_answer("Cafe\u{301}"), "cafe");
    }

    proptest! {
        #[test]
        fn normalisation_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn alias_order_does_not_change_verdict(
            aliases in proptest::collection::vec("[a-zA-Z ]{1,8}", 1..6),
            answer in "[a-zA-Z ]{1,8}",
            rot in 0usize..6,
        ) {
            let mut rotated = aliases.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            let parsed = ParsedResponse {
                item_id: "x".into(),
                sample_index: 0,
                extraction: Extraction {
                    answer_text: Some(answer),
                    choice_letter: None,
                    confidence_pct: None,
                    parse_status: ParseStatus::AnswerOnly,
                },
            };
            let a = judge_correct(&parsed, &Item::open("x", "q", aliases));
            let b = judge_correct(&parsed, &Item::open("x", "q", rotated));
            prop_assert_eq!(a.correct, b.correct);
        }

        #[test]
        fn parsing_never_panics_and_status_matches_fields(s in "\\PC{0,80}") {
            for p in profiles().profiles.iter() {
                let ex = p.extract(&s);
                let has_answer = ex.answer_text.is_some() || ex.choice_letter.is_some();
                prop_assert_eq!(ex.parse_status, ParseStatus::from_presence(has_answer, ex.confidence_pct.is_some()));
            }
        }
    }

    #[test]
    fn uppercase_profile_reads_baseline_format() {
        let set = profiles();
        let p = set.get("baseline-uppercase-MCQA").unwrap();
        let r = parse_response("m1", 0, "Answer: C\nConfidence: 95%", p);
        assert_eq!(r.extraction.choice_letter, Some('C'));
        assert_eq!(r.extraction.confidence_pct, Some(95.0));
        assert_eq!(r.extraction.parse_status, ParseStatus::Full);
    }

    #[test]
    fn lowercase_profile_reads_tuned_format() {
        let set = profiles();
        let p = set.get("csft-lowercase-MCQA").unwrap();
        let r = parse_response("m1", 0, "c. mitochondria\nConfidence: 5%", p);
        assert_eq!(r.extraction.choice_letter, Some('c'));
        assert_eq!(r.extraction.confidence_pct, Some(5.0));
        assert_eq!(r.extraction.parse_status, ParseStatus::Full);
    }

    #[test]
    fn long_explanation_fails_mcqa_profiles() {
        let text = "To answer this question we need to consider several factors. First, the \
                    organelle responsible for energy production in eukaryotic cells is widely \
                    discussed in introductory biology, and many students confuse it with others.";
        let set = profiles();
        for name in ["baseline-uppercase-MCQA", "csft-lowercase-MCQA"] {
            let r = parse_response("m", 0, text, set.get(name).unwrap());
            assert_eq!(r.extraction.parse_status, ParseStatus::Failed, "{name}");
        }
        let r = parse_response("t", 0, text, set.get("open-domain-free-text").unwrap());
        assert_eq!(r.extraction.parse_status, ParseStatus::Failed);
    }

    #[test]
    fn confidence_edge_cases() {
        let set = profiles();
        let p = set.get("open-domain-free-text").unwrap();
        assert_eq!(p.extract("Paris\nConfidence: 70").confidence_pct, Some(70.0));
        assert_eq!(p.extract("Paris\nConfidence: 101%").parse_status, ParseStatus::AnswerOnly);
        assert_eq!(p.extract("Paris\nConfidence: 30%\nConfidence: 90%").confidence_pct, Some(30.0));
        assert_eq!(p.extract("Confidence: 40%").parse_status, ParseStatus::ConfidenceOnly);
        assert_eq!(p.extract("Confidence: 400%").parse_status, ParseStatus::Failed);
        assert_eq!(p.extract("").parse_status, ParseStatus::Failed);
    }

    #[test]
    fn judge_examples() {
        let open = Item::open("t", "Capital of France?", vec!["Paris".into()]);
        let mk = |answer: &str| ParsedResponse {
            item_id: "t".into(),
            sample_index: 0,
            extraction: Extraction {
                answer_text: Some(answer.into()),
                choice_letter: None,
                confidence_pct: Some(50.0),
                parse_status: ParseStatus::Full,
            },
        };
        assert_eq!(judge_correct(&mk("Paris"), &open).correct, Verdict::Correct);
        assert_eq!(judge_correct(&mk("pariss"), &open).correct, Verdict::Incorrect);
        assert_eq!(judge_correct(&mk("paris."), &open).judge_method, JudgeMethod::AliasMatch);

        let mc = Item::choice("m", "q", vec!["w".into(), "x".into(), "y".into(), "z".into()], 2, None);
        let letter = |c| ParsedResponse {
            item_id: "m".into(),
            sample_index: 0,
            extraction: Extraction {
                answer_text: None,
                choice_letter: Some(c),
                confidence_pct: None,
                parse_status: ParseStatus::AnswerOnly,
            },
        };
        assert_eq!(judge_correct(&letter('c'), &mc).correct, Verdict::Correct);
        assert_eq!(judge_correct(&letter('C'), &mc).correct, Verdict::Correct);
        assert_eq!(judge_correct(&letter('a'), &mc).correct, Verdict::Incorrect);
        assert_eq!(judge_correct(&letter('a'), &mc).judge_method, JudgeMethod::ChoiceMatch);

        let failed = ParsedResponse {
            item_id: "m".into(),
            sample_index: 0,
            extraction: Extraction {
                answer_text: None,
                choice_letter: None,
                confidence_pct: None,
                parse_status: ParseStatus::Failed,
            },
        };
        assert_eq!(judge_correct(&failed, &mc).correct, Verdict::Unjudgeable);
    }

    #[test]
    fn parse_rate_counts() {
        let mut statuses = vec![ParseStatus::Full; 470];
        statuses.extend(vec![ParseStatus::Failed; 28]);
        let r = parse_rate(&statuses).unwrap();
        assert_eq!((r.parsed, r.total), (470, 498));
        assert_eq!(r.to_string(), "470/498");
        assert_eq!(parse_rate(&[ParseStatus::AnswerOnly; 3]).unwrap().ratio, 1.0);
        assert_eq!(parse_rate(&[ParseStatus::ConfidenceOnly; 3]).unwrap().ratio, 0.0);
        assert!(parse_rate(&[]).is_err());
    }

    #[test]
    fn broken_exemplar_rejects_profile() {
        let mut defs = builtin_profile_defs();
        defs[0].exemplars[0].letter = Some('D');
        assert!(ProfileSet::from_defs(defs).is_err());
    }

    #[test]
    fn toml_profiles_load_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("profiles.toml");
        std::fs::write(
            &path,
            r#"
[[profile]]
name = "bracketed"
applies_to = "multiple-choice"
answer_pattern = '^\s*\[(?P<letter>[A-Da-d])\]'
confidence_pattern = '(?P<pct>\d+)%'

[[profile.exemplars]]
text = "[b] because\n70%"
letter = "b"
confidence = 70.0
status = "full"
"#,
        )
        .unwrap();
        let set = ProfileSet::load(&path).unwrap();
        assert!(set.names().contains(&"bracketed"));
        assert!(set.names().contains(&"open-domain-free-text"));
        assert_eq!(set.get("bracketed").unwrap().extract("[c]\n10%").choice_letter, Some('c'));
    }
}
