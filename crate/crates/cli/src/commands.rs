use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::json;

use csft_core::config::{meta_path, ArtifactMeta};
use csft_core::corpus::{self, id_set_fingerprint, partition as cut, verify_disjoint, SliceSpec};
use csft_core::elicit::{read_log, run_pass, write_log, Decoding, ElicitationSpec, ModelEndpoint, ResponseRecord};
use csft_core::gate::{evaluate_gate, flatten_metrics, render_report, GateConfig, GateOutcome};
use csft_core::grade::{grade_all, GradeRecord, ProfileSet, Verdict};
use csft_core::jsonl::{read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use csft_core::probe::{grid_eval, select_rows, HiddenStateBundle, HiddenStateMatrix, ProbeResult};
use csft_core::psychometrics::{
    bootstrap_auroc, compare_conditions, entropy_signal, n_correct_signal, verbal_signal, ConditionInput,
    ConditionReport, LogprobRecord,
};
use csft_core::simlab::{
    generate_world, mock_endpoint, simulate_hidden_states, simulate_responses, ConfidenceProcess, DifficultyMixture,
    GradedLink, MockOptions, ResponderParams, ResponseFormat, SyntheticWorld,
};
use csft_core::targets::{build_profiles, emit_training_set, Condition, EmitOptions, ModalFilter};
use csft_core::{Benchmark, ConsistencyProfile, SplitPlan, TargetMap};

use crate::error::{CliError, CliResult};
use crate::workspace::Workspace;
use crate::{
    ConsistencyArgs, ElicitArgs, EmitTrainArgs, Format, GateArgs, GradeArgs, Link, MetricsArgs, Mode, PartitionArgs,
    Preset, ProbeArgs, Process, ReportArgs, SimulateArgs,
};

type Config = Option<PathBuf>;

/// Simulated world together with the responder that answers for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldFile {
    pub world: SyntheticWorld,
    pub responder: ResponderParams,
}

/// Output of the metrics stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub conditions: Vec<ConditionReport>,
}

fn name_path(spec: &str, flag: &str) -> CliResult<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_owned(), PathBuf::from(p))),
        _ => Err(CliError::Config(format!("{flag} expects NAME=VALUE, got {spec:?}"))),
    }
}

/// Command-line flags are config overrides, so they enter the config hash.
fn flag<T: std::fmt::Display>(overrides: &mut Vec<String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push(format!("{key}={v}"));
    }
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
        .map_err(CliError::from)
}

fn default_profile(b: Benchmark) -> &'static str {
    match b {
        Benchmark::OpenDomainQa => "open-domain-free-text",
        Benchmark::MultipleChoice => "baseline-uppercase-MCQA",
    }
}

fn target_map(ws: &Workspace) -> CliResult<TargetMap> {
    Ok(match &ws.cfg.policy.target_table {
        Some(t) => TargetMap::from_table(t.clone())?,
        None => TargetMap::for_k(ws.cfg.elicitation.samples),
    })
}

pub fn show_config(config: &Config, overrides: Vec<String>) -> CliResult<()> {
    let ws = Workspace::open(config, &overrides)?;
    print!("{}", ws.cfg.to_toml());
    println!("# config hash: {}", ws.cfg.hash());
    Ok(())
}

pub fn partition(config: &Config, mut overrides: Vec<String>, a: PartitionArgs) -> CliResult<()> {
    flag(&mut overrides, "seeds.partition", a.seed);
    let ws = Workspace::open(config, &overrides)?;
    let _lock = ws.lock()?;
    let (corpus_path, items) = ws.corpus(&a.corpus)?;
    let slices: Vec<SliceSpec> = if a.slices.is_empty() {
        ws.cfg.slices.clone()
    } else {
        a.slices
            .iter()
            .map(|s| {
                let (name, size) = name_path(s, "--slice")?;
                let size = size
                    .to_str()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| CliError::Config(format!("slice size in {s:?} is not a count")))?;
                Ok(SliceSpec { name, size })
            })
            .collect::<CliResult<_>>()?
    };
    let mut plan = SplitPlan { seed: ws.cfg.seeds.partition, slices, ..Default::default() };
    let mut inputs = vec![corpus_path.clone()];
    if let Some(ex) = a.exclude.clone().or_else(|| ws.cfg.paths.exclusions.clone()) {
        let ex = ws.input(&ex, "partition")?;
        plan = plan.with_exclusions(corpus::load_exclusions(&ex)?);
        inputs.push(ex);
    }
    let manifest = cut(&items, &plan)?;
    let check = verify_disjoint(&manifest);
    if !check.pass {
        return Err(anyhow::anyhow!("slices overlap: {:?}", check.overlaps).into());
    }
    let out = ws.path(&a.out);
    write_atomic(&out, manifest.to_json().as_bytes())?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ws.write_meta("partition", &out, &refs)?;
    for s in &manifest.slices {
        println!("{}\t{}", s.name, s.ids.len());
    }
    Ok(())
}

pub fn elicit(config: &Config, mut overrides: Vec<String>, a: ElicitArgs) -> CliResult<()> {
    flag(&mut overrides, "elicitation.samples", a.samples);
    flag(&mut overrides, "elicitation.temperature", a.temperature);
    if let Some(m) = &a.model {
        overrides.push(format!("endpoint.model_name={m:?}"));
    }
    let ws = Workspace::open(config, &overrides)?;
    let manifest_path = ws.input(&a.manifest, "partition")?;
    let manifest: csft_core::SplitManifest = read_json(&manifest_path)?;
    let slice = manifest
        .slice(&a.slice)
        .ok_or_else(|| CliError::Config(format!("slice {:?} not in {}", a.slice, manifest_path.display())))?;
    let (corpus_path, items) = ws.corpus(&a.corpus)?;
    let selected: Vec<_> = corpus::select(&items, slice)?.into_iter().cloned().collect();

    let e = &ws.cfg.elicitation;
    let decoding = match a.mode {
        Mode::Greedy => Decoding::greedy(),
        Mode::Sampled => Decoding::sampled(e.temperature, e.samples),
    };
    let spec = ElicitationSpec {
        prompt_template: e.prompt_template.clone(),
        decoding,
        max_tokens: e.max_tokens,
        logprobs_requested: e.logprobs,
    };
    let mode = match a.mode {
        Mode::Greedy => "greedy",
        Mode::Sampled => "sampled",
    };
    let out = ws.path(&a.out.unwrap_or_else(|| PathBuf::from(format!("responses/{}-{mode}.jsonl", a.slice))));
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }

    let c = &ws.cfg.endpoint;
    let mut endpoint = ModelEndpoint {
        base_url: String::new(),
        model_name: c.model_name.clone(),
        token_env: c.token_env.clone(),
        timeout_secs: c.timeout_secs,
        max_concurrent: c.max_concurrent,
        retry: c.retry.clone(),
    };
    let rt = runtime()?;
    let summary = match &a.mock_world {
        Some(w) => {
            let wf: WorldFile = read_json(&ws.input(w, "simulate")?)?;
            rt.block_on(async {
                let mock = mock_endpoint(wf.world, wf.responder, MockOptions::default(), 0).await?;
                endpoint.base_url = mock.base_url();
                let s = run_pass(&selected, &spec, &endpoint, &out).await;
                mock.shutdown().await;
                s
            })?
        }
        None => {
            endpoint.base_url = a
                .endpoint
                .or_else(|| c.base_url.clone())
                .ok_or_else(|| CliError::Config("no endpoint; pass --endpoint or set endpoint.base_url".into()))?;
            rt.block_on(run_pass(&selected, &spec, &endpoint, &out))?
        }
    };
    ws.write_meta("elicit", &out, &[&corpus_path, &manifest_path])?;
    println!(
        "requested {} skipped {} appended {} failed {}",
        summary.requested, summary.skipped, summary.appended, summary.failed
    );
    if summary.failed > 0 {
        return Err(CliError::Endpoint(format!(
            "{} request(s) failed; rerun to retry them (details in the .errors.jsonl file)",
            summary.failed
        )));
    }
    Ok(())
}

pub fn grade(config: &Config, mut overrides: Vec<String>, a: GradeArgs) -> CliResult<()> {
    if let Some(p) = &a.profile {
        overrides.push(format!("policy.parser_profile={p:?}"));
    }
    let ws = Workspace::open(config, &overrides)?;
    let log_path = ws.input(&a.responses, "elicit")?;
    let (mut records, corrupt, torn) = read_log(&log_path)?;
    if !corrupt.is_empty() || torn {
        tracing::warn!(lines = ?corrupt, torn, "skipping unreadable lines in response log");
    }
    let hashes: HashSet<&str> = records.iter().map(|r| r.fingerprint.spec_hash.as_str()).collect();
    if hashes.len() > 1 {
        return Err(CliError::Config(format!(
            "{} mixes {} elicitation specs; grade one pass at a time",
            log_path.display(),
            hashes.len()
        )));
    }
    // Passes append in completion order.
    records.sort_by(|x, y| (&x.item_id, x.sample_index).cmp(&(&y.item_id, y.sample_index)));

    let (corpus_path, items) = ws.corpus(&a.corpus)?;
    let by_id: HashMap<&str, &csft_core::Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let profiles = match &ws.cfg.policy.parser_profiles {
        Some(p) => ProfileSet::load(ws.input(p, "grade")?)?,
        None => ProfileSet::builtin(),
    };
    let name = ws
        .cfg
        .policy
        .parser_profile
        .clone()
        .unwrap_or_else(|| default_profile(ws.cfg.paths.benchmark).to_owned());
    let profile = profiles.get(&name)?;
    let grades = grade_all(
        records.iter().map(|r| (r.item_id.as_str(), r.sample_index, r.raw_text.as_str())),
        &by_id,
        profile,
    )?;

    let file = log_path.file_name().expect("log path names a file");
    let out = ws.path(&a.out.unwrap_or_else(|| Path::new("grades").join(file)));
    write_jsonl(&out, &grades)?;
    ws.write_meta("grade", &out, &[&log_path, &corpus_path])?;
    let rate = csft_core::grade::parse_rate(grades.iter().map(|g| &g.parse_status))?;
    let correct = grades.iter().filter(|g| g.correct == Verdict::Correct).count();
    println!("graded {} records with {name}: parsed {rate}, correct {correct}", grades.len());
    Ok(())
}

pub fn consistency(config: &Config, overrides: Vec<String>, a: ConsistencyArgs) -> CliResult<()> {
    let ws = Workspace::open(config, &overrides)?;
    let grades_path = ws.input(&a.grades, "grade")?;
    let grades: Vec<GradeRecord> = read_jsonl(&grades_path)?;
    let profiles = build_profiles(&grades, &target_map(&ws)?)?;
    let out = ws.path(&a.out);
    write_jsonl(&out, &profiles)?;
    ws.write_meta("consistency", &out, &[&grades_path])?;
    let mut bins: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &profiles {
        *bins.entry(p.bin.label()).or_default() += 1;
    }
    println!("{} profiles; bins {bins:?}", profiles.len());
    Ok(())
}

pub fn emit_train(config: &Config, mut overrides: Vec<String>, a: EmitTrainArgs) -> CliResult<()> {
    flag(&mut overrides, "seeds.shuffle", a.shuffle_seed);
    flag(&mut overrides, "policy.modal_filter", a.modal_filter);
    let ws = Workspace::open(config, &overrides)?;
    let prof_path = ws.input(&a.consistency, "consistency")?;
    let profiles: Vec<ConsistencyProfile> = read_jsonl(&prof_path)?;
    let (corpus_path, items) = ws.corpus(&a.corpus)?;
    let by_id: HashMap<&str, &csft_core::Item> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let map = target_map(&ws)?;
    let filter = if ws.cfg.policy.modal_filter { ModalFilter::Modal } else { ModalFilter::None };
    let dir = ws.path(&a.out_dir);
    for (condition, stem) in [(Condition::Real, "real"), (Condition::Shuffled, "shuffled")] {
        let opts = EmitOptions {
            condition,
            filter,
            shuffle_seed: ws.cfg.seeds.shuffle,
            prompt_template: ws.cfg.elicitation.prompt_template.clone(),
            assistant_template: ws.cfg.elicitation.assistant_template.clone(),
        };
        let (examples, manifest) = emit_training_set(&profiles, &by_id, &map, &opts)?;
        let data = dir.join(format!("{stem}.jsonl"));
        write_jsonl(&data, &examples)?;
        write_json(&dir.join(format!("{stem}.manifest.json")), &manifest)?;
        ws.write_meta("emit-train", &data, &[&prof_path, &corpus_path])?;
        for w in &manifest.warnings {
            eprintln!("warning ({stem}): {w}");
        }
        println!(
            "{stem}: {} examples, {} dropped, label entropy {:.3} bits",
            manifest.n_examples, manifest.n_dropped, manifest.label_entropy_bits
        );
    }
    Ok(())
}

pub fn metrics(config: &Config, mut overrides: Vec<String>, a: MetricsArgs) -> CliResult<()> {
    flag(&mut overrides, "policy.bootstrap_resamples", a.resamples);
    let ws = Workspace::open(config, &overrides)?;
    let policy = ws.cfg.metric_policy();
    let mut inputs: Vec<(String, PathBuf, Vec<GradeRecord>, String)> = Vec::new();
    for spec in &a.conditions {
        let (name, p) = name_path(spec, "--condition")?;
        let p = ws.input(&p, "grade")?;
        let grades: Vec<GradeRecord> = read_jsonl(&p)?;
        let split = id_set_fingerprint(grades.iter().map(|g| g.item_id.as_str()));
        inputs.push((name, p, grades, split));
    }
    let mut used: Vec<PathBuf> = inputs.iter().map(|i| i.1.clone()).collect();

    let profiles: Option<Vec<ConsistencyProfile>> = match &a.consistency {
        Some(p) => {
            let p = ws.input(p, "consistency")?;
            used.push(p.clone());
            Some(read_jsonl(&p)?)
        }
        None => None,
    };
    let bins: Option<HashMap<String, csft_core::Bin>> =
        profiles.as_ref().map(|ps| ps.iter().map(|p| (p.item_id.clone(), p.bin)).collect());

    let cond: Vec<ConditionInput<'_>> = inputs
        .iter()
        .map(|(n, _, g, s)| ConditionInput { name: n, split: s, grades: g })
        .collect();
    let mut reports = compare_conditions(&cond, bins.as_ref(), &policy)?;

    let judged = |grades: &[GradeRecord]| -> HashMap<String, bool> {
        grades
            .iter()
            .filter(|g| g.correct != Verdict::Unjudgeable)
            .map(|g| (g.item_id.clone(), g.correct.is_correct()))
            .collect()
    };
    if let Some(ps) = &profiles {
        for (report, (_, _, grades, _)) in reports.iter_mut().zip(&inputs) {
            let scored = n_correct_signal(ps, &judged(grades))?;
            if !scored.is_empty() {
                let est = bootstrap_auroc(&scored, policy.bootstrap_resamples, policy.bootstrap_seed, policy.level);
                report.signals.insert("n_correct".into(), est);
            }
        }
    }
    for spec in &a.entropy {
        let (name, p) = name_path(spec, "--entropy")?;
        let idx = inputs
            .iter()
            .position(|i| i.0 == name)
            .ok_or_else(|| CliError::Config(format!("--entropy names unknown condition {name:?}")))?;
        let p = ws.input(&p, "elicit")?;
        let (records, _, _) = read_log(&p)?;
        used.push(p);
        let truth = judged(&inputs[idx].2);
        let mut rows: Vec<LogprobRecord> = records
            .into_iter()
            .filter(|r| r.sample_index == 0)
            .filter_map(|r: ResponseRecord| {
                truth.get(&r.item_id).map(|&c| LogprobRecord {
                    item_id: r.item_id,
                    correct: c,
                    logprobs: r.first_position_logprobs,
                })
            })
            .collect();
        rows.sort_by(|x, y| x.item_id.cmp(&y.item_id));
        let sig = entropy_signal(&rows)?;
        let est = bootstrap_auroc(&sig.scored, policy.bootstrap_resamples, policy.bootstrap_seed, policy.level);
        reports[idx].signals.insert("entropy".into(), est);
    }

    let out = ws.path(&a.out);
    write_json(&out, &MetricsFile { conditions: reports.clone() })?;
    let refs: Vec<&Path> = used.iter().map(PathBuf::as_path).collect();
    ws.write_meta("metrics", &out, &refs)?;
    for r in &reports {
        let delta = r.auroc2_delta.as_ref().map(|d| format!(" delta {}", estimate_text(d))).unwrap_or_default();
        println!(
            "{}: AUROC2 {} accuracy {:.3} ceiling {:.3} VRS {:?}{delta}",
            r.condition,
            estimate_text(&r.metrics.auroc2),
            r.metrics.accuracy,
            r.metrics.ceiling_rate,
            r.metrics.vrs.label
        );
    }
    Ok(())
}

fn estimate_text(e: &csft_core::psychometrics::Estimate) -> String {
    match e.ci() {
        Some(ci) => format!("{:.3} [{:.3}, {:.3}]", ci.point, ci.lo, ci.hi),
        None => "degenerate".into(),
    }
}

/// Keep only rows for `ids`, in that order.
fn restrict_bundle(b: &HiddenStateBundle, ids: &[&str]) -> CliResult<HiddenStateBundle> {
    let mats = b
        .cells()
        .map(|c| {
            let m = b.get(c).expect("listed cell");
            let have: HashSet<&str> = m.item_ids.iter().map(String::as_str).collect();
            let keep: Vec<&str> = ids.iter().copied().filter(|i| have.contains(i)).collect();
            let x = select_rows(m, &keep)?;
            HiddenStateMatrix::new(keep.iter().map(|s| (*s).to_owned()).collect(), x, m.layer, m.token)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HiddenStateBundle::from_matrices(mats)?)
}

pub fn probe(config: &Config, overrides: Vec<String>, a: ProbeArgs) -> CliResult<()> {
    let ws = Workspace::open(config, &overrides)?;
    let tg_path = ws.input(&a.train_grades, "grade")?;
    let eg_path = ws.input(&a.eval_grades, "grade")?;
    let train_grades: Vec<GradeRecord> = read_jsonl(&tg_path)?;
    let eval_grades: Vec<GradeRecord> = read_jsonl(&eg_path)?;
    let labels_of = |g: &[GradeRecord]| -> Vec<(String, bool)> {
        g.iter().filter(|g| g.correct != Verdict::Unjudgeable).map(|g| (g.item_id.clone(), g.correct.is_correct())).collect()
    };
    let (tl, el) = (labels_of(&train_grades), labels_of(&eval_grades));
    let train_ids: Vec<&str> = tl.iter().map(|x| x.0.as_str()).collect();
    let eval_ids: Vec<&str> = el.iter().map(|x| x.0.as_str()).collect();
    let labels: HashMap<String, bool> = tl.iter().chain(&el).cloned().collect();

    let ts = ws.input(&a.train_states, "simulate")?;
    let es = ws.input(&a.eval_states, "simulate")?;
    let train = restrict_bundle(&HiddenStateBundle::load_dir(&ts)?, &train_ids)?;
    let eval = restrict_bundle(&HiddenStateBundle::load_dir(&es)?, &eval_ids)?;
    let (baseline, _) = verbal_signal(&eval_grades)?;
    let mut cfg = ws.cfg.probe.clone();
    cfg.seed = ws.cfg.seeds.probe;
    let result = grid_eval(
        &train,
        &eval,
        &labels,
        Some(&baseline),
        &cfg,
        ws.cfg.policy.bootstrap_resamples,
        ws.cfg.policy.level,
    )?;
    let out = ws.path(&a.out);
    write_json(&out, &result)?;
    ws.write_meta("probe", &out, &[&tg_path, &eg_path])?;
    for c in &result.cells {
        println!(
            "{}/{}: AUROC2 {:.3}{}",
            c.layer.label(),
            c.token.label(),
            c.auroc2,
            if c.primary { " (primary)" } else { "" }
        );
    }
    Ok(())
}

fn load_gate_config(ws: &Workspace, arg: &Option<PathBuf>) -> CliResult<(GateConfig, Option<PathBuf>)> {
    match arg.clone().or_else(|| ws.cfg.policy.gate.clone()) {
        Some(p) => {
            let p = ws.input(&p, "gate")?;
            Ok((GateConfig::load(&p)?, Some(p)))
        }
        None => Ok((GateConfig::default(), None)),
    }
}

pub fn gate(config: &Config, overrides: Vec<String>, a: GateArgs) -> CliResult<()> {
    let ws = Workspace::open(config, &overrides)?;
    let m_path = ws.input(&a.metrics, "metrics")?;
    let metrics: MetricsFile = read_json(&m_path)?;
    let mut used = vec![m_path];
    let probe: Option<ProbeResult> = match &a.probe {
        Some(p) => {
            let p = ws.input(p, "probe")?;
            let r = read_json(&p)?;
            used.push(p);
            Some(r)
        }
        None => None,
    };
    let (gcfg, rules_path) = load_gate_config(&ws, &a.rules)?;
    used.extend(rules_path);
    let flat = flatten_metrics(&metrics.conditions, probe.as_ref());
    let outcome = evaluate_gate(&flat, &gcfg)?;
    let out = ws.path(&a.out);
    write_json(&out, &outcome)?;
    let refs: Vec<&Path> = used.iter().map(PathBuf::as_path).collect();
    ws.write_meta("gate", &out, &refs)?;
    for r in &outcome.rules {
        println!("{}: {}", r.name, r.verdict);
    }
    println!("terminal: {}", outcome.terminal);
    Ok(())
}

pub fn simulate(config: &Config, mut overrides: Vec<String>, a: SimulateArgs) -> CliResult<()> {
    flag(&mut overrides, "seeds.world", a.seed);
    let ws = Workspace::open(config, &overrides)?;
    let mixture = match a.preset {
        Preset::Bimodal => DifficultyMixture::bimodal(),
        Preset::Constant => DifficultyMixture::constant(a.p_correct),
    };
    let confidence = match a.confidence {
        Process::Ceiling => ConfidenceProcess::ceiling(a.ceiling_share),
        Process::Binary => ConfidenceProcess::binary(a.hi, a.lo, a.flip),
        Process::Graded => ConfidenceProcess::Graded {
            link: match a.link {
                Link::Gaussian => GradedLink::Gaussian,
                Link::Logistic => GradedLink::Logistic,
            },
            center: a.center,
            separation: a.separation,
            noise_sd: a.noise_sd,
        },
    };
    let format = match a.format {
        Format::FreeText => ResponseFormat::FreeText,
        Format::UppercaseLetter => ResponseFormat::UppercaseLetter,
        Format::LowercaseOption => ResponseFormat::LowercaseOption,
    };
    let benchmark = match format {
        ResponseFormat::FreeText => Benchmark::OpenDomainQa,
        _ => Benchmark::MultipleChoice,
    };
    let seed = ws.cfg.seeds.world;
    let world = generate_world(a.items, &mixture, benchmark, confidence, seed)?;
    let responder = ResponderParams {
        temperature_proxy: ws.cfg.elicitation.temperature,
        k: ws.cfg.elicitation.samples,
        format,
        unparsed_share: a.unparsed_share,
    };
    responder.validate()?;

    let _lock = ws.lock()?;
    let dir = ws.path(&a.out_dir);
    let wf = WorldFile { world, responder };
    let world_path = dir.join("world.json");
    write_json(&world_path, &wf)?;
    let corpus_path = dir.join("corpus.jsonl");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    corpus::write_corpus(&corpus_path, &wf.world.corpus())?;
    ws.write_meta("simulate", &world_path, &[])?;
    println!(
        "{} items, mean accuracy {:.3}, benchmark {}",
        wf.world.items.len(),
        wf.world.mean_p(),
        serde_json::to_value(benchmark)?.as_str().unwrap_or_default()
    );

    if a.offline || a.hidden_states.is_some() {
        let greedy = simulate_responses(&wf.world, &wf.responder, true)?;
        if a.offline {
            write_log(&dir.join("responses-greedy.jsonl"), &greedy.responses)?;
            let sampled = simulate_responses(&wf.world, &wf.responder, false)?;
            write_log(&dir.join("responses-sampled.jsonl"), &sampled.responses)?;
        }
        if let Some(dim) = a.hidden_states {
            let ids: Vec<&str> = greedy.grades.iter().map(|g| g.item_id.as_str()).collect();
            let labels: Vec<bool> = greedy.grades.iter().map(|g| g.correct.is_correct()).collect();
            let bundle = simulate_hidden_states(&ids, &labels, dim, a.state_signal, seed)?;
            bundle.write_dir(&dir.join("states"))?;
        }
    }

    if let Some(port) = a.serve {
        drop(_lock);
        let rt = runtime()?;
        rt.block_on(async {
            let handle = mock_endpoint(wf.world, wf.responder, MockOptions::default(), port).await?;
            println!("serving {} (ctrl-c to stop)", handle.base_url());
            handle.serve_forever().await;
            Ok::<_, CliError>(())
        })?;
    }
    Ok(())
}

fn check_sidecars(ws: &Workspace, files: &[&Path], force: bool) -> CliResult<Vec<ArtifactMeta>> {
    let mut metas = Vec::new();
    for f in files {
        match ArtifactMeta::read_for(f)? {
            Some(m) => metas.push(m),
            None if force => {}
            None => {
                return Err(CliError::Config(format!(
                    "{} has no sidecar; pass --force to aggregate anyway",
                    meta_path(f).display()
                )))
            }
        }
    }
    let hashes: HashSet<&str> = metas.iter().map(|m| m.config_hash.as_str()).collect();
    if hashes.len() > 1 && !force {
        let listed: Vec<String> = files
            .iter()
            .zip(&metas)
            .map(|(f, m)| format!("{} ({})", ws.display(f), m.config_hash))
            .collect();
        return Err(CliError::Config(format!(
            "inputs were produced under different configurations: {}; pass --force to aggregate anyway",
            listed.join(", ")
        )));
    }
    Ok(metas)
}

pub fn report(config: &Config, overrides: Vec<String>, a: ReportArgs) -> CliResult<()> {
    let ws = Workspace::open(config, &overrides)?;
    let m_path = ws.input(&a.metrics, "metrics")?;
    let p_path = a.probe.as_ref().map(|p| ws.input(p, "probe")).transpose()?;
    let g_path = a.gate.as_ref().map(|p| ws.input(p, "gate")).transpose()?;
    let mut files: Vec<&Path> = vec![&m_path];
    files.extend(p_path.as_deref());
    files.extend(g_path.as_deref());
    let metas = check_sidecars(&ws, &files, a.force)?;

    let metrics: MetricsFile = read_json(&m_path)?;
    let probe: Option<ProbeResult> = p_path.as_deref().map(read_json).transpose()?;
    let gate: Option<GateOutcome> = g_path.as_deref().map(read_json).transpose()?;

    let mut cfg_view = serde_json::to_value(&ws.cfg)?;
    if let Some(obj) = cfg_view.as_object_mut() {
        obj.remove("paths");
        if let Some(ep) = obj.get_mut("endpoint").and_then(|v| v.as_object_mut()) {
            ep.remove("base_url");
            ep.remove("token_env");
        }
    }
    let provenance = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": ws.cfg.hash(),
        "config": cfg_view,
        "inputs": files.iter().zip(metas.iter().map(Some).chain(std::iter::repeat(None))).map(|(f, m)| json!({
            "path": ws.display(f),
            "stage": m.map(|m| m.stage.clone()),
            "config_hash": m.map(|m| m.config_hash.clone()),
        })).collect::<Vec<_>>(),
    });
    let rendered = render_report(&metrics.conditions, probe.as_ref(), gate.as_ref(), &provenance);
    let out = ws.path(&a.out);
    write_atomic(&out, rendered.markdown.as_bytes())?;
    let json_out = out.with_extension("json");
    write_json(&json_out, &rendered.json)?;
    let inputs: Vec<&Path> = files.clone();
    ws.write_meta("report", &out, &inputs)?;
    println!("wrote {} and {}", ws.display(&out), ws.display(&json_out));
    if let Some(g) = &gate {
        println!("terminal: {}", g.terminal);
    }
    Ok(())
}
