//! One test per acceptance criterion. Each prints a single `PASS`/`FAIL`
//! line with the measured quantities before asserting.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csft_core::gate::{evaluate_gate, GateConfig, Metrics};
use csft_core::grade::GradeRecord;
use csft_core::probe::{
    grid_eval, objective, HiddenStateBundle, HiddenStateMatrix, LayerTag, ProbeConfig, TokenTag, PRIMARY_CELL,
};
use csft_core::psychometrics::{
    auroc2, auroc_brute_force, aurc, metric_report, n_correct_signal, paired_bootstrap_delta, verbal_signal,
    vrs_screen, MetricPolicy, ScoredSet, SignalSemantics, VrsLabel, VrsPolicy,
};
use csft_core::simlab::{
    binormal_auroc, generate_world, simulate_responses, ConfidenceProcess, DifficultyMixture, GradedLink,
    ResponderParams, SyntheticWorld,
};
use csft_core::targets::{build_profiles, label_entropy, shuffle_targets, TargetMap, TEN_SAMPLE_TABLE};
use csft_core::{Benchmark, Bin, ConsistencyProfile};

fn report(criterion: &str, pass: bool, detail: String) {
    println!("{} {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn set(correct: &[bool], signal: &[f64]) -> ScoredSet {
    ScoredSet::from_parts(SignalSemantics::ProbeScore, correct, signal).unwrap()
}

/// Random instance with both classes and deliberate ties.
fn instance(rng: &mut ChaCha8Rng) -> (Vec<bool>, Vec<f64>) {
    loop {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=40) as f64;
        let correct: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let signal: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() * 2.5).collect();
        if correct.iter().any(|&c| c) && correct.iter().any(|&c| !c) {
            return (correct, signal);
        }
    }
}

#[test]
fn auroc2_matches_pair_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (c, s) = instance(&mut rng);
        let fast = auroc2(&set(&c, &s)).unwrap();
        let brute = auroc_brute_force(&c, &s).unwrap();
        worst = worst.max((fast - brute).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(10);
    report("AUROC2 oracle equivalence", pass, format!("max |diff| {worst:.2e} over 1000 instances in {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn auroc2_is_rank_invariant_and_complementary() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_mono, mut worst_neg, mut worst_flip) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (c, s) = instance(&mut rng);
        let a = auroc2(&set(&c, &s)).unwrap();
        let mono: Vec<f64> = s.iter().map(|x| (x / 40.0).exp() + 3.0 * x - 7.0).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let flipped: Vec<bool> = c.iter().map(|x| !x).collect();
        worst_mono = worst_mono.max((auroc2(&set(&c, &mono)).unwrap() - a).abs());
        worst_neg = worst_neg.max((auroc2(&set(&c, &neg)).unwrap() - (1.0 - a)).abs());
        worst_flip = worst_flip.max((auroc2(&set(&flipped, &s)).unwrap() - (1.0 - a)).abs());
    }
    let pass = worst_mono <= 1e-12 && worst_neg <= 1e-12 && worst_flip <= 1e-12;
    report(
        "AUROC2 monotone invariance and complement",
        pass,
        format!("max deviation: monotone {worst_mono:.1e}, negated {worst_neg:.1e}, flipped labels {worst_flip:.1e}"),
    );
    assert!(pass);
}

#[test]
fn aurc_hand_case_and_extremes() {
    let hand = aurc(&set(&[true, true, false, false], &[90.0, 80.0, 70.0, 60.0])).unwrap();
    let sig = [10.0, 20.0, 30.0, 40.0];
    let all_right = aurc(&set(&[true; 4], &sig)).unwrap();
    let all_wrong = aurc(&set(&[false; 4], &sig)).unwrap();
    let pass = (hand - 0.2083).abs() <= 1e-4 && (hand - 5.0 / 24.0).abs() <= 1e-9 && all_right == 0.0 && all_wrong == 1.0;
    report("AURC hand case", pass, format!("fixture {hand:.10}, all correct {all_right}, all incorrect {all_wrong}"));
    assert!(pass);
}

fn graded(separation: f64, noise_sd: f64) -> ConfidenceProcess {
    ConfidenceProcess::Graded { link: GradedLink::Gaussian, center: 50.0, separation, noise_sd }
}

#[test]
fn paired_bootstrap_covers_analytic_delta() {
    let start = Instant::now();
    let (sep_a, sep_b, sd) = (10.0, 20.0, 15.0);
    let truth = binormal_auroc(sep_b, sd) - binormal_auroc(sep_a, sd);
    let params = ResponderParams::default();
    let reps = 200;
    let mut covered = 0;
    for r in 0..reps {
        let base = generate_world(1000, &DifficultyMixture::bimodal(), Benchmark::OpenDomainQa, graded(sep_a, sd), 1000 + r)
            .unwrap();
        let post = base.clone().with_confidence(graded(sep_b, sd)).unwrap();
        let (a, _) = verbal_signal(&simulate_responses(&base, &params, true).unwrap().grades).unwrap();
        let (b, _) = verbal_signal(&simulate_responses(&post, &params, true).unwrap().grades).unwrap();
        let est = paired_bootstrap_delta(&a, &b, 2000, r, 0.95).unwrap();
        if est.ci().is_some_and(|ci| ci.contains(truth)) {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;

    let world = generate_world(300, &DifficultyMixture::bimodal(), Benchmark::OpenDomainQa, graded(sep_a, sd), 5).unwrap();
    let (a, _) = verbal_signal(&simulate_responses(&world, &params, true).unwrap().grades).unwrap();
    let same = paired_bootstrap_delta(&a, &a, 2000, 0, 0.95).unwrap();
    let zero = same.ci().is_some_and(|ci| ci.point == 0.0 && ci.lo == 0.0 && ci.hi == 0.0);

    let elapsed = start.elapsed();
    let pass = rate >= 0.93 && zero && elapsed < Duration::from_secs(120);
    report(
        "Paired-bootstrap coverage",
        pass,
        format!("true delta {truth:.4}, coverage {covered}/{reps} = {rate:.3}, identical inputs zero-width {zero}, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn target_map_and_bins() {
    let expected = [5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 75.0, 85.0, 90.0, 95.0];
    let map = TargetMap::ten_sample();
    let table_ok = map.table() == expected
        && TargetMap::for_k(10).table() == expected
        && TEN_SAMPLE_TABLE == expected
        && (0..=10).all(|n| map.target(n) == expected[n as usize]);
    let bins: Vec<Bin> = (0..=10).map(|n| Bin::of(n, 10)).collect();
    let bins_ok = bins[..4].iter().all(|&b| b == Bin::Hard)
        && bins[4..8].iter().all(|&b| b == Bin::Medium)
        && bins[8..].iter().all(|&b| b == Bin::Easy);
    let pass = table_ok && bins_ok && map.target(9) == 90.0;
    report("Target-map fidelity", pass, format!("table {:?}, bins {bins:?}", map.table()));
    assert!(pass);
}

fn bimodal_profiles(n: usize, seed: u64) -> (SyntheticWorld, Vec<ConsistencyProfile>, Vec<GradeRecord>) {
    let world =
        generate_world(n, &DifficultyMixture::bimodal(), Benchmark::OpenDomainQa, ConfidenceProcess::ceiling(0.977), seed)
            .unwrap();
    let params = ResponderParams::default();
    let sampled = simulate_responses(&world, &params, false).unwrap();
    let greedy = simulate_responses(&world, &params, true).unwrap();
    let profiles = build_profiles(&sampled.grades, &TargetMap::ten_sample()).unwrap();
    (world, profiles, greedy.grades)
}

#[test]
fn modal_filter_collapses_label_entropy() {
    let (_, profiles, _) = bimodal_profiles(5000, 11);
    let unfiltered = label_entropy(&profiles).unwrap();
    let kept: Vec<ConsistencyProfile> = profiles.iter().filter(|p| p.modal_correct).cloned().collect();
    let filtered = label_entropy(&kept).unwrap();
    let pass = filtered < 0.35 && unfiltered >= 0.95;
    report(
        "Modal-filter label-entropy collapse",
        pass,
        format!(
            "filtered {filtered:.3} bits over {} items (needs < 0.35), unfiltered {unfiltered:.3} bits (needs >= 0.95)",
            kept.len()
        ),
    );
    assert!(pass);
}

#[test]
fn self_consistency_predicts_correctness() {
    let start = Instant::now();
    let (_, profiles, greedy) = bimodal_profiles(10_000, 12);
    let truth: HashMap<String, bool> = greedy.iter().map(|g| (g.item_id.clone(), g.correct.is_correct())).collect();
    let scored = n_correct_signal(&profiles, &truth).unwrap();
    let a = auroc2(&scored).unwrap();
    let elapsed = start.elapsed();
    let pass = a >= 0.99 && scored.len() == 10_000 && elapsed < Duration::from_secs(30);
    report(
        "Self-consistency as signal",
        pass,
        format!("AUROC2 {a:.4} over {} items in {elapsed:.2?}", scored.len()),
    );
    assert!(pass);
}

#[test]
fn vrs_rule_reproduces_verdicts() {
    let policy = VrsPolicy::default();
    let ceiling_excl = vrs_screen(Some((0.52, 0.58)), 0.977, 4, &policy).label;
    let ceiling_incl = vrs_screen(Some((0.47, 0.53)), 0.977, 4, &policy).label;
    let post = vrs_screen(Some((0.74, 0.80)), 0.498, 2, &policy).label;

    // The same verdicts from simulated passes through the metric pipeline.
    let params = ResponderParams::default();
    let mix = DifficultyMixture::bimodal();
    let metrics = MetricPolicy { bootstrap_resamples: 1000, ..Default::default() };
    let run = |conf: ConfidenceProcess| {
        let w = generate_world(2000, &mix, Benchmark::OpenDomainQa, conf, 21).unwrap();
        metric_report(&simulate_responses(&w, &params, true).unwrap().grades, &metrics).unwrap()
    };
    let base = run(ConfidenceProcess::ceiling(0.977));
    let binary = run(ConfidenceProcess::binary(95.0, 5.0, 0.22));

    let pass = ceiling_excl == VrsLabel::Invalid
        && ceiling_incl == VrsLabel::Invalid
        && post == VrsLabel::Indeterminate
        && base.vrs.label == VrsLabel::Invalid
        && binary.vrs.label == VrsLabel::Indeterminate;
    report(
        "VRS verdicts",
        pass,
        format!(
            "ceiling 0.977 -> {ceiling_excl}/{ceiling_incl}; ceiling 0.498 with 2 levels -> {post}; simulated baseline (ceiling {:.3}) -> {}, simulated binary (ceiling {:.3}, {} levels) -> {}",
            base.ceiling_rate, base.vrs.label, binary.ceiling_rate, binary.distinct_levels, binary.vrs.label
        ),
    );
    assert!(pass);
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn shuffled_control_decorrelates_targets() {
    let mut fixtures = Vec::new();
    for (n, seed) in [(100, 31), (250, 32), (1000, 33), (3000, 34)] {
        fixtures.push((format!("bimodal n={n}"), bimodal_profiles(n, seed).1));
    }
    for (p, seed) in [(0.3, 35), (0.5, 36), (0.8, 37)] {
        let w = generate_world(400, &DifficultyMixture::constant(p), Benchmark::OpenDomainQa, ConfidenceProcess::ceiling(0.977), seed)
            .unwrap();
        let s = simulate_responses(&w, &ResponderParams::default(), false).unwrap();
        fixtures.push((format!("constant p={p}"), build_profiles(&s.grades, &TargetMap::ten_sample()).unwrap()));
    }
    let mut all = true;
    let mut worst = 0.0f64;
    for (name, profiles) in &fixtures {
        let real: Vec<f64> = profiles.iter().map(|p| p.target_pct).collect();
        let out = shuffle_targets(&real, 43);
        let r = pearson(&real, &out.targets);
        let (mut a, mut b) = (real.clone(), out.targets.clone());
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ok = r.abs() < 0.05 && a == b && out.guard_passed;
        if !ok {
            println!("  {name}: r = {r:.4}, multiset preserved {}", a == b);
        }
        all &= ok;
        worst = worst.max(r.abs());
    }
    report(
        "Shuffled-control guard",
        all,
        format!("{} fixtures, max |r| {worst:.4}, multisets preserved", fixtures.len()),
    );
    assert!(all);
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the test free of another distribution crate.
    let (u, v): (f64, f64) = (rng.random::<f64>().max(f64::MIN_POSITIVE), rng.random());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Six cells of Gaussian noise; only the primary cell carries the label,
/// shifted by ±1.5 along its first column.
fn planted(n: usize, d: usize, prefix: &str, seed: u64) -> (HiddenStateBundle, HashMap<String, bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let mut mats = Vec::new();
    for layer in LayerTag::ALL {
        for token in TokenTag::ALL {
            let mut x = Array2::<f64>::zeros((n, d));
            x.iter_mut().for_each(|v| *v = normal(&mut rng));
            if (layer, token) == PRIMARY_CELL {
                for (r, &y) in labels.iter().enumerate() {
                    x[[r, 0]] += if y { 1.5 } else { -1.5 };
                }
            }
            mats.push(HiddenStateMatrix::new(ids.clone(), x, layer, token).unwrap());
        }
    }
    let map = ids.into_iter().zip(labels).collect();
    (HiddenStateBundle::from_matrices(mats).unwrap(), map)
}

#[test]
fn probe_gradient_and_planted_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let (n, d) = (rng.random_range(5..60), rng.random_range(1..8));
        let x = Array2::from_shape_fn((n, d), |_| normal(&mut rng) * 2.0);
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let theta: Vec<f64> = (0..=d).map(|_| normal(&mut rng)).collect();
        let lambda = rng.random_range(0.0..3.0);
        let (_, g) = objective(x.view(), &y, lambda, &theta);
        for j in 0..=d {
            let h = 1e-5;
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (objective(x.view(), &y, lambda, &up).0 - objective(x.view(), &y, lambda, &dn).0) / (2.0 * h);
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-6);
            worst_rel = worst_rel.max(rel);
        }
    }

    let cfg = ProbeConfig::default();
    let (mut min_primary, mut noise_lo, mut noise_hi) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..20 {
        let (train, mut labels) = planted(1000, 8, "t", 100 + seed);
        let (eval, eval_labels) = planted(2000, 8, "e", 200 + seed);
        labels.extend(eval_labels);
        let result = grid_eval(&train, &eval, &labels, None, &ProbeConfig { seed, ..cfg.clone() }, 200, 0.95).unwrap();
        for c in &result.cells {
            if c.primary {
                min_primary = min_primary.min(c.auroc2);
            } else {
                noise_lo = noise_lo.min(c.auroc2);
                noise_hi = noise_hi.max(c.auroc2);
            }
        }
    }
    let pass = worst_rel <= 1e-5 && min_primary >= 0.95 && noise_lo >= 0.45 && noise_hi <= 0.55;
    report(
        "Probe gradient check and planted signal",
        pass,
        format!(
            "max relative gradient error {worst_rel:.2e}; over 20 seeds planted cell min AUROC {min_primary:.4}, noise cells in [{noise_lo:.4}, {noise_hi:.4}]"
        ),
    );
    assert!(pass);
}

fn csft(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_csft"))
        .arg("-C")
        .arg(dir)
        .args(["--set", "policy.bootstrap_resamples=1000"])
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "csft {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn pipeline(dir: &Path) {
    csft(dir, &["simulate", "--items", "1500", "--out-dir", "sim"]);
    csft(dir, &["simulate", "--items", "1500", "--confidence", "binary", "--out-dir", "post"]);
    let c = ["--corpus", "sim/corpus.jsonl"];
    let run = |args: &[&str]| csft(dir, &[args, &c[..]].concat());
    run(&["partition", "--slice", "T-eval=500", "--slice", "T-cal=800"]);
    run(&["elicit", "--slice", "T-eval", "--mock-world", "sim/world.json", "--out", "responses/base.jsonl"]);
    run(&["elicit", "--slice", "T-eval", "--mock-world", "post/world.json", "--out", "responses/post.jsonl"]);
    run(&["elicit", "--slice", "T-cal", "--mode", "sampled", "--mock-world", "sim/world.json", "--out", "responses/cal.jsonl"]);
    for f in ["base", "post", "cal"] {
        run(&["grade", "--responses", &format!("responses/{f}.jsonl")]);
    }
    csft(dir, &["consistency", "--grades", "grades/cal.jsonl"]);
    run(&["emit-train"]);
    csft(
        dir,
        &["metrics", "--condition", "baseline=grades/base.jsonl", "--condition", "post=grades/post.jsonl"],
    );
    csft(dir, &["gate"]);
    csft(dir, &["report", "--gate", "gate.json"]);
}

fn gate_on(lo: f64, hi: f64) -> String {
    let metrics: Metrics = [
        ("post.auroc2_delta".to_owned(), (lo + hi) / 2.0),
        ("post.auroc2_delta.lo".to_owned(), lo),
        ("post.auroc2_delta.hi".to_owned(), hi),
    ]
    .into_iter()
    .collect();
    evaluate_gate(&metrics, &GateConfig::default()).unwrap().terminal
}

#[test]
fn pipeline_is_deterministic_and_gate_reproduces_decisions() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    let same = ["report.md", "report.json"]
        .iter()
        .all(|f| fs::read(a.path().join(f)).unwrap() == fs::read(b.path().join(f)).unwrap());
    let stop = gate_on(-0.077, -0.027);
    let proceed = gate_on(0.132, 0.203);
    let pass = same && stop == "Stop" && proceed == "Proceed";
    report(
        "End-to-end determinism and gate decisions",
        pass,
        format!("reports byte-identical {same}; CI [-0.077, -0.027] -> {stop}; CI [0.132, 0.203] -> {proceed}"),
    );
    assert!(pass);
}
