//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its verdict line; exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmcd::instance::{fig1_fixture, Instance, ObjectRecord};
use tmcd::metrics::average_br;
use tmcd::model::{is_feasible, objective, DescriptorSolution, ProblemSpec};
use tmcd::oracle::{exact_descriptors, greedy_baseline, ExactOutcome, DEFAULT_ENUM_BUDGET};
use tmcd::qubo::{build_qubo, default_penalties, Qubo, QuboBuilder, QuboModel};
use tmcd::solver::{anneal, anneal_qubo, exhaustive_min, FieldState, SolverConfig};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($fmt)+)),
        }
    };
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 fig1 optimum", c1_fig1_optimum),
        ("2 qubo/qp equivalence", c2_equivalence),
        ("3 encoding soundness", c3_encoding_soundness),
        ("4 annealer quality", c4_annealer_quality),
        ("5 incremental energy", c5_incremental_energy),
        ("6 tm effect", c6_tm_effect),
        ("8 determinism", c8_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let verdict = check();
        let secs = started.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS criterion {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!("SKIP criterion 7 dataset tables: requires external data and hardware, out of scope");
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

// ---------------------------------------------------------------------------
// Shared helpers

fn run_cli(args: &[&str]) -> (i32, Vec<u8>, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = tmcd::cli::run(std::iter::once("tmcd").chain(args.iter().copied()), &mut out, &mut err);
    (code, out, err)
}

fn fixture_path() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("fig1.json");
    std::fs::write(&path, fig1_fixture().to_json()).expect("write fixture");
    let p = path.to_str().unwrap().to_string();
    (dir, p)
}

const SOLVE_ARGS: [&str; 8] = ["--sweeps", "2000", "--restarts", "8", "--seed", "42", "--coverage", "full"];

/// Random k=2 instance with n <= 8 objects and |T| <= 6 tags, plus random
/// per-cluster targets and P drawn from {0, 0.5, 1}.
fn random_spec(rng: &mut ChaCha8Rng) -> ProblemSpec {
    loop {
        let n = rng.gen_range(2..=8);
        let n_tags = rng.gen_range(1..=6);
        let tags: Vec<String> = (0..n_tags).map(|t| format!("t{t}")).collect();
        let mut clusters: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
        clusters[0] = 1;
        clusters[1] = 2;
        let records: Vec<ObjectRecord> = clusters
            .iter()
            .enumerate()
            .map(|(i, &c)| ObjectRecord {
                id: format!("o{i}"),
                cluster: c,
                tags: tags.iter().filter(|_| rng.gen_bool(0.35)).cloned().collect(),
            })
            .collect();
        let inst = Instance::new(2, tags, records).expect("valid random instance").instance;
        let targets: Vec<usize> = inst.cluster_sizes().iter().map(|&s| rng.gen_range(0..=s)).collect();
        let p = [0.0, 0.5, 1.0][rng.gen_range(0..3)];
        if p > 0.0 && inst.edge_count() == 0 {
            continue;
        }
        return ProblemSpec::new(inst, targets, p).expect("targets within cluster sizes");
    }
}

/// Random specs from the criterion-2 domain whose compiled model is small
/// enough for exhaustive enumeration.
fn enumerable_suite(seed: u64, count: usize, max_vars: usize) -> (Vec<(ProblemSpec, QuboModel)>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(count);
    let mut rejected = 0;
    while suite.len() < count {
        let spec = random_spec(&mut rng);
        let model = build_qubo(&spec, default_penalties(&spec)).expect("compiles");
        if model.n_vars() > max_vars {
            rejected += 1;
            continue;
        }
        suite.push((spec, model));
    }
    (suite, rejected)
}

const SUITE_SEED: u64 = 0x5eed_0002;
const SUITE_SIZE: usize = 240;
const SUITE_MAX_VARS: usize = 24;

// ---------------------------------------------------------------------------
// Criteria

fn c1_fig1_optimum() -> Verdict {
    let (_dir, path) = fixture_path();
    let expected = serde_json::json!([["TAG1"], ["TAG3"]]);

    let started = Instant::now();
    let (code, out, err) = run_cli(&["exact", "--input", &path, "--coverage", "full", "--P", "0"]);
    let exact_time = started.elapsed();
    ensure!(code == 0, "exact exited {code}: {}", String::from_utf8_lossy(&err));
    let v: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    ensure!(v["descriptors"] == expected, "exact descriptors {}", v["descriptors"]);
    ensure!(v["objective"]["total"] == 2.0, "exact objective {}", v["objective"]["total"]);

    let started = Instant::now();
    let mut args = vec!["solve", "--input", &path, "--P", "0"];
    args.extend(SOLVE_ARGS);
    let (code, out, err) = run_cli(&args);
    let solve_time = started.elapsed();
    ensure!(code == 0, "solve exited {code}: {}", String::from_utf8_lossy(&err));
    let v: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    ensure!(v["descriptors"] == expected, "solve descriptors {}", v["descriptors"]);
    ensure!(v["objective"]["total"] == 2.0, "solve objective {}", v["objective"]["total"]);
    ensure!(v["feasible"] == true, "solve result infeasible");

    let limit = Duration::from_secs(1);
    ensure!(
        exact_time < limit && solve_time < limit,
        "runtime exact {exact_time:?}, solve {solve_time:?}"
    );
    Ok(format!(
        "{{TAG1}},{{TAG3}} objective 2 from exact ({:.3}s) and solve ({:.3}s)",
        exact_time.as_secs_f64(),
        solve_time.as_secs_f64()
    ))
}

fn c2_equivalence() -> Verdict {
    let started = Instant::now();
    let (suite, rejected) = enumerable_suite(SUITE_SEED, SUITE_SIZE, SUITE_MAX_VARS);
    let mut feasible = 0;
    let mut infeasible = 0;
    for (idx, (spec, model)) in suite.iter().enumerate() {
        let (bits, energy) = exhaustive_min(model.qubo()).map_err(|e| e.to_string())?;
        let decoded = model.decode(&bits).map_err(|e| e.to_string())?;
        let exact = exact_descriptors(spec, DEFAULT_ENUM_BUDGET).map_err(|e| e.to_string())?;
        match exact {
            ExactOutcome::Optimal { objective: best, .. } => {
                feasible += 1;
                ensure!(
                    is_feasible(spec, &decoded.solution).feasible,
                    "instance {idx}: qubo minimum decodes to an infeasible solution"
                );
                let got = objective(spec, &decoded.solution).map_err(|e| e.to_string())?;
                ensure!(
                    (got - best).abs() <= 1e-6,
                    "instance {idx}: qubo objective {got} vs exact {best}"
                );
                ensure!(
                    (energy - best).abs() <= 1e-6,
                    "instance {idx}: qubo minimum energy {energy} vs exact {best}"
                );
            }
            ExactOutcome::Infeasible => {
                infeasible += 1;
                ensure!(
                    decoded.residuals.penalty > 0.0,
                    "instance {idx}: infeasible spec but qubo minimum has zero penalty"
                );
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "{} instances ({feasible} feasible, {infeasible} infeasible), {rejected} oversized draws skipped",
        suite.len()
    ))
}

fn c3_encoding_soundness() -> Verdict {
    let (suite, _) = enumerable_suite(SUITE_SEED, SUITE_SIZE, SUITE_MAX_VARS);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (idx, (spec, model)) in suite.iter().enumerate() {
        let greedy = greedy_baseline(spec);
        if !is_feasible(spec, &greedy.solution).feasible {
            continue;
        }
        let bits = model.encode(&greedy.solution).map_err(|e| e.to_string())?;
        let residuals = model.residuals(&bits).map_err(|e| e.to_string())?;
        ensure!(residuals.is_zero(), "instance {idx}: completion has nonzero residuals");
        let energy = model.energy(&bits).map_err(|e| e.to_string())?;
        let direct = objective(spec, &greedy.solution).map_err(|e| e.to_string())?;
        let err = (energy - direct).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "instance {idx}: energy {energy} vs objective {direct}");
        checked += 1;
    }
    ensure!(checked > 0, "no feasible greedy solutions in the suite");
    Ok(format!("{checked} greedy solutions, max |energy - objective| = {worst:.1e}"))
}

fn c4_annealer_quality() -> Verdict {
    const MODELS: usize = 20;
    const SEEDS: u64 = 100;
    let (suite, _) = enumerable_suite(0x5eed_0004, MODELS, 20);
    let mut worst = (f64::INFINITY, 0usize);
    for (idx, (_, model)) in suite.iter().enumerate() {
        let (_, target) = exhaustive_min(model.qubo()).map_err(|e| e.to_string())?;
        let hits = (0..SEEDS)
            .filter(|&seed| {
                let cfg = SolverConfig::new(5000, 8, seed);
                let out = anneal_qubo(model.qubo(), &cfg).expect("valid config");
                (out.best_energy - target).abs() <= 1e-9 * target.abs().max(1.0)
            })
            .count();
        let rate = hits as f64 / SEEDS as f64;
        if rate < worst.0 {
            worst = (rate, idx);
        }
        ensure!(
            rate >= 0.95,
            "model {idx} ({} vars): hit rate {rate:.2} below 0.95",
            model.n_vars()
        );
    }
    Ok(format!(
        "{MODELS} models x {SEEDS} seeds, worst hit rate {:.2} (model {})",
        worst.0, worst.1
    ))
}

fn c5_incremental_energy() -> Verdict {
    const N: usize = 200;
    const FLIPS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut b = QuboBuilder::new(N);
    b.add_constant(rng.gen_range(-10.0..10.0));
    for i in 0..N {
        b.add_linear(i, rng.gen_range(-5.0..5.0));
        for j in (i + 1)..N {
            if rng.gen_bool(0.1) {
                b.add_quadratic(i, j, rng.gen_range(-5.0..5.0));
            }
        }
    }
    let qubo: Qubo = b.build();
    let start: Vec<bool> = (0..N).map(|_| rng.gen_bool(0.5)).collect();
    let mut state = FieldState::new(&qubo, start).map_err(|e| e.to_string())?;

    let temperature = 2.0;
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    while accepted < FLIPS {
        let i = rng.gen_range(0..N);
        let delta = state.flip_delta(i).map_err(|e| e.to_string())?;
        if delta > 0.0 && rng.gen::<f64>() >= (-delta / temperature).exp() {
            continue;
        }
        state.flip(i).map_err(|e| e.to_string())?;
        accepted += 1;
        if accepted % 100 == 0 || accepted == FLIPS {
            let full = qubo.energy(state.bits()).map_err(|e| e.to_string())?;
            let rel = (state.energy() - full).abs() / full.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    ensure!(worst < 1e-9, "relative deviation {worst:.3e}");
    Ok(format!(
        "{FLIPS} accepted flips on {N} vars ({} couplings), max relative deviation {worst:.1e}",
        qubo.quadratic().len()
    ))
}

/// Two clusters of five objects. Tag G covers four objects of each cluster.
/// Each cluster also has two exclusive tags covering two objects apiece, so
/// reaching 80% coverage without G takes two tags.
fn tm_instance() -> Instance {
    let tags: Vec<String> = ["G", "A1", "A2", "B1", "B2"].iter().map(|s| s.to_string()).collect();
    let mut records = Vec::new();
    for (c, (first, second)) in [(1, ("A1", "A2")), (2, ("B1", "B2"))] {
        for i in 0..5 {
            let mut t = Vec::new();
            if i < 4 {
                t.push("G".to_string());
            }
            match i {
                0 | 1 => t.push(first.to_string()),
                2 | 3 => t.push(second.to_string()),
                _ => {}
            }
            records.push(ObjectRecord {
                id: format!("c{c}o{i}"),
                cluster: c,
                tags: t,
            });
        }
    }
    Instance::new(2, tags, records).expect("valid").instance
}

fn c6_tm_effect() -> Verdict {
    let inst = tm_instance();
    let g = inst.tag_index("G").expect("G exists");
    let targets = vec![4, 4];
    let solve = |p: f64| -> Result<DescriptorSolution, String> {
        let spec = ProblemSpec::new(inst.clone(), targets.clone(), p).map_err(|e| e.to_string())?;
        match exact_descriptors(&spec, DEFAULT_ENUM_BUDGET).map_err(|e| e.to_string())? {
            ExactOutcome::Optimal { solution, .. } => Ok(solution),
            ExactOutcome::Infeasible => Err(format!("P={p}: infeasible")),
        }
    };
    let at0 = solve(0.0)?;
    let at5 = solve(5.0)?;
    let names = |s: &DescriptorSolution| format!("{:?}", s.names(&inst));
    ensure!(at0.selected_tags().contains(&g), "P=0 optimum {} omits G", names(&at0));
    ensure!(!at5.selected_tags().contains(&g), "P=5 optimum {} keeps G", names(&at5));
    let br0 = average_br(&inst, &at0).map_err(|e| e.to_string())?;
    let br5 = average_br(&inst, &at5).map_err(|e| e.to_string())?;
    ensure!(br5 <= br0, "average BR rose from {br0} to {br5}");
    Ok(format!(
        "P=0 {} (avg BR {br0:.3}), P=5 {} (avg BR {br5:.3})",
        names(&at0),
        names(&at5)
    ))
}

/// Removes the trailing top-level timing object from a pretty-printed report.
fn strip_timing(report: &[u8]) -> Result<Vec<u8>, String> {
    let text = std::str::from_utf8(report).map_err(|e| e.to_string())?;
    let at = text.rfind(",\n  \"timing\"").ok_or("report has no timing field")?;
    let mut out = text[..at].to_string();
    out.push_str("\n}\n");
    Ok(out.into_bytes())
}

fn c8_determinism() -> Verdict {
    let (_dir, path) = fixture_path();
    let mut args = vec!["solve", "--input", &path, "--P", "0"];
    args.extend(SOLVE_ARGS);
    let (c1, first, _) = run_cli(&args);
    let (c2, second, _) = run_cli(&args);
    ensure!(c1 == 0 && c2 == 0, "exit codes {c1}, {c2}");
    let a = strip_timing(&first)?;
    let b = strip_timing(&second)?;
    ensure!(a == b, "reports differ outside the timing field");
    let v: serde_json::Value = serde_json::from_slice(&a).map_err(|e| e.to_string())?;
    ensure!(v.get("timing").is_none(), "timing not isolated");

    // The library path must agree with itself too.
    let spec = ProblemSpec::new(fig1_fixture(), vec![3, 3], 0.0).map_err(|e| e.to_string())?;
    let model = build_qubo(&spec, default_penalties(&spec)).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::new(2000, 8, 42);
    let r1 = anneal(&model, &cfg).map_err(|e| e.to_string())?;
    let r2 = anneal(&model, &cfg).map_err(|e| e.to_string())?;
    ensure!(r1.best_bits == r2.best_bits && r1.stats == r2.stats, "anneal results differ");
    Ok(format!("{} report bytes identical across runs", a.len()))
}
