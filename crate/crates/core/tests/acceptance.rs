//! End-to-end acceptance checks. Runs as a plain binary (`harness = false`)
//! and prints one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use modrule_core::evaluation::{baseline, evaluate, median};
use modrule_core::log_model::{parse_csv, parse_csv_with_schema, Kind, LogBuilder, ParseOptions, RawValue};
use modrule_core::mdl_codec::{universal_int, CounterMode, PrequentialCounter};
use modrule_core::rule_model::count_dags;
use modrule_core::scorer::{decode, encode, total_score, RuleChoice};
use modrule_core::search::moody;
use modrule_core::synthgen::{add_swap_noise, generate_log, sample_ground_truth, SynthConfig};
use modrule_core::{CodecConfig, Condition, Constant, EventLog, Model, Operator, Rule, SearchConfig, Test, Update, UpdateRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn cat(s: &str) -> Constant {
    Constant::Cat(s.into())
}

fn reference_log(copies: usize) -> EventLog {
    let columns = vec![("product".to_string(), Kind::Categorical), ("vendor".to_string(), Kind::Categorical)];
    let mut b = LogBuilder::new(columns);
    let rows = [("bag", "A"), ("shirt", "C"), ("shirt", "B"), ("pants", "C")];
    for t in 0..copies {
        let events = rows
            .iter()
            .map(|(p, v)| vec![RawValue::Text(p.to_string()), RawValue::Text(v.to_string())])
            .collect();
        b.push_trace(format!("t{t}"), events);
    }
    b.build(50).expect("reference log")
}

fn reference_models() -> (Model, Model, Model) {
    let r1 = Rule::new(
        Condition::new("product", Test::Eq(cat("shirt"))),
        UpdateRule::new("vendor", Update::PointAssign(cat("C"))),
    )
    .unwrap();
    let r2 = Rule::new(
        Condition::new("product", Test::Eq(cat("bag"))),
        UpdateRule::new("vendor", Update::SetMember(vec!["A".into(), "B".into()])),
    )
    .unwrap();
    (
        Model::from_rules([r1.clone()]).unwrap(),
        Model::from_rules([r2.clone()]).unwrap(),
        Model::from_rules([r1, r2]).unwrap(),
    )
}

fn anchors() -> Verdict {
    let (m1, m2, both) = reference_models();
    let empty = Model::default();
    let one = reference_log(1);
    let big = reference_log(20);
    let mut lines = Vec::new();
    let mut any = false;
    for counter in [CounterMode::Global, CounterMode::PerVariable] {
        let config = CodecConfig { counter, ..CodecConfig::default() };
        let l = |log: &EventLog, m: &Model| total_score(log, m, &config).unwrap().total;
        let got = [
            ("sum1", l(&one, &m1) + l(&one, &m2), 59.199),
            ("sum2", l(&one, &empty) + l(&one, &both), 59.448),
            ("e20", l(&big, &empty), 241.519),
            ("m1_20", l(&big, &m1), 279.595),
            ("m2_20", l(&big, &m2), 239.595),
        ];
        let ok = got.iter().all(|(_, g, want)| (g - want).abs() <= 1.0);
        any |= ok;
        let parts: Vec<String> = got.iter().map(|(n, g, w)| format!("{n}={g:.3}/{w}")).collect();
        lines.push(format!("{counter:?}: {}", parts.join(" ")));
    }
    verdict(any, lines.join("; "))
}

fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        n_events: 60,
        trace_len: (2, 8),
        condition_ops: vec![Operator::Eq, Operator::Ne, Operator::Le, Operator::Ge, Operator::Transition],
        bins: 10,
        ..SynthConfig::default()
    }
}

fn losslessness() -> Verdict {
    let mut pairs = 0;
    let mut failures = Vec::new();
    for seed in 0..500u64 {
        let config = small_config(seed);
        let gt = sample_ground_truth(&config).unwrap();
        let other = sample_ground_truth(&small_config(seed + 10_000)).unwrap();
        let log = generate_log(&gt, &config).unwrap();
        for model in [&gt, &other] {
            pairs += 1;
            let codec = CodecConfig::default();
            let ok = encode(&log, model, &codec)
                .and_then(|(streams, _)| decode(&streams, model, &log, &codec))
                .map(|back| back == log.discretized());
            if !matches!(ok, Ok(true)) {
                failures.push(seed);
            }
        }
    }
    verdict(failures.is_empty(), format!("{pairs} pairs, {} failures {:?}", failures.len(), &failures[..failures.len().min(5)]))
}

fn normalization() -> Verdict {
    let kraft: f64 = (1..=1_000_000u64).map(|x| (-universal_int(x).unwrap()).exp2()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let bias: f64 = rng.random();
        let mut counter = PrequentialCounter::new(0.5);
        for _ in 0..10_000 {
            worst = worst.max((counter.probability(true) + counter.probability(false) - 1.0).abs());
            counter = counter.code(rng.random_bool(bias)).1;
        }
    }
    verdict(kraft <= 1.0 && worst < 1e-12, format!("kraft sum {kraft:.6}, max |p(✓)+p(✗)-1| = {worst:.1e}"))
}

fn purchase_example() -> Verdict {
    let header = "trace_id,event_index,activity,product,amount,vendor\n";
    let reference = parse_csv(&format!("{header}r,0,buy,bag,20,B\nr,1,buy,bag,10,A\n"), &ParseOptions::default()).unwrap();
    let text = format!("{header}t1,1,buy,bag,20,C\nt1,2,buy,bag,10,C\nt1,3,buy,pants,10,A\nt1,4,buy,pants,20,A\n");
    let log = parse_csv_with_schema(&text, reference.schema()).unwrap();
    let r1 = Rule::new(
        Condition::new("amount", Test::Eq(Constant::Num(10.0))),
        UpdateRule::new("vendor", Update::PointAssign(cat("C"))),
    )
    .unwrap();
    let r2 = Rule::new(
        Condition::new("product", Test::Eq(cat("bag"))),
        UpdateRule::new("vendor", Update::SetMember(vec!["B".into(), "C".into()])),
    )
    .unwrap();
    let model = Model::from_rules([r1, r2]).unwrap();
    let config = CodecConfig::default();
    let (streams, score) = encode(&log, &model, &config).unwrap();

    let schema = log.schema();
    let vendor = schema.index_of("vendor").unwrap();
    let cv: Vec<&str> = streams
        .value_stream
        .iter()
        .filter(|c| c.variable == vendor)
        .map(|c| schema[vendor].category(c.value).unwrap())
        .collect();
    let cm_ok = streams.model_stream == [true, true, false];
    let cv_ok = cv == ["C", "A", "A"];
    let cr_ok = streams.rule_selection == [RuleChoice { fired: 2, rule: 0 }] && (score.l_cr - 1.0).abs() < 1e-12;
    let decoded = decode(&streams, &model, &log, &config).map(|d| d == log.discretized()).unwrap_or(false);
    verdict(
        cm_ok && cv_ok && cr_ok && decoded,
        format!("C_m={:?} C_v(vendor)={cv:?} L(C_r)={} decode={decoded}", streams.model_stream, score.l_cr),
    )
}

/// Same ground truth, fresh sample, coded against the training schema.
fn test_log(gt: &Model, config: &SynthConfig, train: &EventLog) -> EventLog {
    let fresh = generate_log(gt, &SynthConfig { seed: config.seed + 1000, ..config.clone() }).unwrap();
    fresh.to_builder().build_with_schema(train.schema()).unwrap()
}

struct RecoveryRun {
    f1: f64,
    base_f1: f64,
    terms: f64,
}

fn recovery_run(noise: f64) -> RecoveryRun {
    let (mut f1, mut base, mut terms) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..10u64 {
        let config = SynthConfig { seed, ..SynthConfig::default() };
        let gt = sample_ground_truth(&config).unwrap();
        let clean = generate_log(&gt, &config).unwrap();
        let train = add_swap_noise(&clean, noise, seed + 100).unwrap();
        let test = test_log(&gt, &config, &train);
        let out = moody(&train, &SearchConfig::default()).unwrap();
        let report = evaluate(&out.model, &train, &test, 3).unwrap();
        let empty = baseline(&train, &test).unwrap();
        f1.push(report.median_f1.unwrap_or(0.0));
        base.push(empty.median_f1.unwrap_or(0.0));
        terms.push(out.model.rule_term_count() as f64);
    }
    RecoveryRun {
        f1: median(&f1).unwrap(),
        base_f1: median(&base).unwrap(),
        terms: median(&terms).unwrap(),
    }
}

fn recovery() -> Verdict {
    let clean = recovery_run(0.0);
    let noisy = recovery_run(0.3);
    let gain = clean.f1 - clean.base_f1;
    let checks = [
        gain >= 0.3,
        (6.0..=20.0).contains(&clean.terms),
        noisy.terms <= clean.terms,
        (noisy.f1 - noisy.base_f1).abs() <= 0.1,
    ];
    verdict(
        checks.iter().all(|c| *c),
        format!(
            "0%: F1 {:.3} vs baseline {:.3} (gain {gain:.3}, need 0.3), terms {}; 30%: F1 {:.3} vs baseline {:.3}, terms {}; checks {checks:?}",
            clean.f1, clean.base_f1, clean.terms, noisy.f1, noisy.base_f1, noisy.terms
        ),
    )
}

fn scaling() -> Verdict {
    let sizes = [250usize, 500, 1000, 1500];
    let mut points = Vec::new();
    for &n in &sizes {
        let config = SynthConfig { seed: 3, n_events: n, ..SynthConfig::default() };
        let gt = sample_ground_truth(&config).unwrap();
        let log = generate_log(&gt, &config).unwrap();
        let search = SearchConfig { n_c: 50, n_u: 1, ..SearchConfig::default() };
        let best = (0..3)
            .map(|_| {
                let t = Instant::now();
                moody(&log, &search).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min);
        points.push(((log.event_count() as f64).ln(), best.ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let times: Vec<String> = points.iter().map(|p| format!("{:.0}:{:.3}s", p.0.exp(), p.1.exp())).collect();
    verdict(slope <= 1.3, format!("exponent {slope:.3} ({})", times.join(" ")))
}

fn brute_force_dags(n: usize, m: usize) -> u64 {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let mut total = 0;
    for mask in 0u64..(1 << pairs.len()) {
        if mask.count_ones() as usize > m {
            continue;
        }
        // repeatedly strip sources; acyclic iff every node goes
        let mut alive = vec![true; n];
        let edge = |k: usize| mask >> k & 1 == 1;
        loop {
            let source = (0..n).find(|&v| alive[v] && !pairs.iter().enumerate().any(|(k, &(a, b))| edge(k) && b == v && alive[a]));
            match source {
                Some(v) => alive[v] = false,
                None => break,
            }
        }
        if alive.iter().all(|a| !a) {
            total += 1;
        }
    }
    total
}

fn dag_oracle() -> Verdict {
    let mut bad = Vec::new();
    for n in 0..=4 {
        for m in 0..=12 {
            if count_dags(n, m) != brute_force_dags(n, m).into() {
                bad.push((n, m));
            }
        }
    }
    let unit = (0..=12).all(|m| count_dags(1, m) == 1u32.into());
    verdict(bad.is_empty() && unit, format!("mismatches {bad:?}, A(1,·)=1: {unit}, A(3,6)={}", count_dags(3, 6)))
}

fn inequalities() -> Verdict {
    let (m1, m2, both) = reference_models();
    let config = CodecConfig::default();
    let l = |log: &EventLog, m: &Model| total_score(log, m, &config).unwrap().total;
    let big = reference_log(20);
    let one = reference_log(1);
    let (a, e, b) = (l(&big, &m1), l(&big, &Model::default()), l(&big, &m2));
    let single = l(&one, &m1) + l(&one, &m2);
    let meet_join = l(&one, &Model::default()) + l(&one, &both);
    verdict(
        a > e && e > b && meet_join > single,
        format!("{a:.3} > {e:.3} > {b:.3}; {meet_join:.3} > {single:.3}"),
    )
}

fn determinism() -> Verdict {
    let config = SynthConfig { seed: 11, n_events: 800, ..SynthConfig::default() };
    let gt = sample_ground_truth(&config).unwrap();
    let train = add_swap_noise(&generate_log(&gt, &config).unwrap(), 0.1, 5).unwrap();
    let test = test_log(&gt, &config, &train);
    let run = |workers: usize| {
        let out = moody(&train, &SearchConfig { workers, seed: 9, ..SearchConfig::default() }).unwrap();
        let mut report = evaluate(&out.model, &train, &test, 3).unwrap();
        report.runtime_seconds = 0.0;
        (out.model.to_json_string(), serde_json::to_string(&report).unwrap(), serde_json::to_string(&out.trace).unwrap())
    };
    let one = run(1);
    let four = run(4);
    verdict(one == four, format!("workers 1 vs 4: model/report/trace identical = {}", one == four))
}

fn main() -> ExitCode {
    let criteria: [Check; 9] = [
        ("reference score anchors", anchors),
        ("losslessness", losslessness),
        ("Kraft and prequential normalization", normalization),
        ("worked example streams", purchase_example),
        ("synthetic recovery", recovery),
        ("scaling", scaling),
        ("DAG count oracle", dag_oracle),
        ("non-monotonicity witnesses", inequalities),
        ("determinism across workers", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("criterion {}: {status} {name} [{:.2}s] {}", i + 1, t.elapsed().as_secs_f64(), v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
