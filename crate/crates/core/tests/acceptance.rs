//! Acceptance run: executes every criterion at its stated tolerance and
//! prints one pass/fail line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still executed and reported as
//! failing, but do not fail the run.

mod oracles;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use leo_deploy::constellation::chord_distance;
use leo_deploy::experiment::bundle::reference_constellation;
use leo_deploy::experiment::{run, ExperimentConfig, ReproduceReport, RunSummary, DECISION_BUDGET_MS};
use leo_deploy::game::{check_game, random_games, EQUILIBRIUM_TOL};
use leo_deploy::learn::PolicyParams;
use leo_deploy::perf::LatencyModel;
use leo_deploy::routing::{solve_routing, RoutingConfig, RoutingMode};
use leo_deploy::workload::worst_case_parallel_slack;
use oracles::{
    cartesian, check_random_episode, euclid, exhaustive_minimum, explicit_worst_slack, random_batch, random_elements,
    small_app, surrogate_gradient_gap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail with the faithful implementation.
const KNOWN_FAILURES: &[usize] = &[8];

type Outcome = Result<String, String>;

/// Criterion evaluated against a finished reproduction.
type BundleCheck = fn(&RunSummary, &ReproduceReport) -> Outcome;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn geometry() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let radius = 6371.0 + 550.0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a = random_elements(&mut rng, radius);
        let b = random_elements(&mut rng, radius);
        let t = rng.gen_range(0.0..1.0e7);
        let oracle = euclid(cartesian(&a, t), cartesian(&b, t));
        let got = chord_distance(radius, a.position(t), b.position(t));
        worst = worst.max((got - oracle).abs() / oracle);
    }
    let elapsed = started.elapsed();
    check(
        worst <= 1e-9 && within(elapsed, 1.0),
        format!("1000 samples, worst rel. err {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn routing() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shapes = [(2usize, 2usize), (1, 4), (1, 3), (2, 1)];
    let config = RoutingConfig::default();
    let mut mismatches = 0;
    let instances = 60;
    for _ in 0..instances {
        let (p, s) = shapes[rng.gen_range(0..shapes.len())];
        let d = p * s;
        let requests = loop {
            let r: Vec<u32> = (0..d).map(|_| rng.gen_range(0..=1)).collect();
            if r.iter().sum::<u32>() <= 3 {
                break r;
            }
        };
        let slot: Vec<Vec<u32>> = (0..2)
            .map(|_| loop {
                let row: Vec<u32> = (0..d).map(|_| rng.gen_range(0..=2)).collect();
                if row.iter().any(|&y| y > 0) {
                    break row;
                }
            })
            .collect();
        let k = rng.gen_range(1..=2);
        let graph = reference_constellation(p, s).build().unwrap();
        let app = small_app(k);
        let routing = solve_routing(LatencyModel::new(&graph, &app), &requests, &slot, &config).unwrap();
        let oracle = exhaustive_minimum(&graph, &requests, &slot, k, config.overload_punishment);
        if routing.mode != RoutingMode::Exact || routing.objective != oracle {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    check(
        mismatches == 0 && within(elapsed, 10.0),
        format!("{instances} instances, {mismatches} mismatches, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn box_slack() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let instances = 200;
    let mut mismatches = 0;
    for _ in 0..instances {
        let n = rng.gen_range(1..=6);
        let y: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let nominal: Vec<i64> = (0..n).map(|_| rng.gen_range(0..6)).collect();
        let k = rng.gen_range(1..12);
        let phi = rng.gen_range(0..=2);
        if worst_case_parallel_slack(&y, k, &nominal, phi).unwrap() != explicit_worst_slack(&y, k, &nominal, phi) {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed();
    check(
        mismatches == 0 && within(elapsed, 5.0),
        format!("{instances} instances, {mismatches} mismatches, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn rewards() -> Outcome {
    let episodes = 120;
    for seed in 0..episodes {
        check_random_episode(seed);
    }
    Ok(format!("{episodes} random-action episodes, decomposition and slot identity exact"))
}

fn minimax() -> Outcome {
    let started = Instant::now();
    let games = random_games(100, 8, 5);
    let checks: Vec<_> = games.iter().enumerate().map(|(i, g)| check_game(i, g).unwrap()).collect();
    let elapsed = started.elapsed();
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let worst = checks.iter().map(|c| c.gap).fold(0.0, f64::max);
    check(
        failed == 0 && worst <= EQUILIBRIUM_TOL && within(elapsed, 30.0),
        format!("100 games, {failed} failures, worst gap {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut params = 0;
    for _ in 0..20 {
        let policy = PolicyParams::new(vec![1.0; 3], 2, 3, &[6], &mut rng).unwrap();
        params = policy.actor.param_count();
        let batch = random_batch(&policy, &mut rng, 8);
        worst = worst.max(surrogate_gradient_gap(&policy, &batch, 0.2, 0.01));
    }
    check(
        worst <= 1e-4 && params <= 200,
        format!("20 batches, {params} parameters, worst rel. err {worst:.2e}"),
    )
}

fn series_of<'a>(report: &'a ReproduceReport, figure: &str, label: &str) -> Result<&'a [f64], String> {
    report
        .series(figure, label)
        .map(|s| s.per_slot.as_slice())
        .ok_or_else(|| format!("missing {figure} series {label}"))
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ")
}

fn processed_direction(report: &ReproduceReport) -> Outcome {
    let robust = series_of(report, "fig6", "msrarl")?;
    let vanilla = series_of(report, "fig6", "vanilla")?;
    let wins = robust.iter().zip(vanilla).filter(|(r, v)| r >= v).count();
    let minutes = report.training_seconds / 60.0;
    check(
        wins >= 4 && robust.len() == 5 && minutes <= 30.0 && report.seeds.len() >= 5,
        format!(
            "msrarl [{}] vs vanilla [{}], {wins}/5 slots, training {minutes:.1} min",
            fmt(robust),
            fmt(vanilla)
        ),
    )
}

fn deployed_direction(report: &ReproduceReport) -> Outcome {
    let robust = series_of(report, "fig7-second", "msrarl")?;
    let vanilla = series_of(report, "fig7-second", "vanilla")?;
    let wins = robust.iter().zip(vanilla).filter(|(r, v)| r <= v).count();
    check(
        wins >= 3 && robust.len() == 4,
        format!("msrarl [{}] vs vanilla [{}], {wins}/4 slots", fmt(robust), fmt(vanilla)),
    )
}

fn autoscaling_direction(report: &ReproduceReport) -> Outcome {
    let robust: f64 = series_of(report, "fig5", "msrarl")?.iter().sum();
    let hpa: f64 = series_of(report, "fig5", "robust-hpa")?.iter().sum();
    let dominates = report.robust_hpa_dominates == Some(true);
    check(
        robust <= hpa && dominates,
        format!("msrarl total {robust:.1}, robust-hpa total {hpa:.1}, robust-hpa >= hpa entrywise: {dominates}"),
    )
}

fn width_trend(report: &ReproduceReport) -> Outcome {
    let means: Vec<f64> = ["width-1", "width-2", "width-4"]
        .iter()
        .map(|w| report.series("fig9", w).map(|s| s.mean()).ok_or_else(|| format!("missing fig9 {w}")))
        .collect::<Result<_, _>>()?;
    let inversions = means.windows(2).filter(|w| w[1] < w[0]).count();
    check(inversions <= 1, format!("means by width 1/2/4: [{}], {inversions} inversions", fmt(&means)))
}

fn timing(summary: &RunSummary, report: &ReproduceReport) -> Outcome {
    let cell = report
        .timing
        .iter()
        .find(|t| t.cell.light == 2 && t.cell.satellites() == 6)
        .ok_or("missing 6-satellite/2-microservice timing cell")?;
    let hw = &summary.manifest.hardware;
    check(
        cell.stats.within_budget(),
        format!(
            "p95 {:.3} ms (budget {DECISION_BUDGET_MS} ms, trained={}) on {} {} x{} [{}]",
            cell.stats.p95_ms,
            cell.trained,
            hw.os,
            hw.arch,
            hw.logical_cpus,
            hw.cpu_model.as_deref().unwrap_or("unknown cpu")
        ),
    )
}

fn safety(summary: &RunSummary, report: &ReproduceReport) -> Outcome {
    check(
        summary.manifest.infeasible_schedules == 0 && report.infeasible_slots == 0 && report.checked_slots > 0,
        format!("{} emitted slots checked, {} infeasible", report.checked_slots, report.infeasible_slots),
    )
}

fn reproduce(out: &Path) -> Result<RunSummary, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reproduce.toml");
    let mut config = ExperimentConfig::load(&path).map_err(|e| e.to_string())?;
    config.output_dir = out.to_path_buf();
    config.seeds = Some((0..5).collect());
    run(&config).map_err(|e| e.to_string())
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    })
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "geometry oracle", guarded(geometry)),
        (2, "routing exactness", guarded(routing)),
        (3, "worst-case box algebra", guarded(box_slack)),
        (4, "reward bookkeeping", guarded(rewards)),
        (5, "minimax verification", guarded(minimax)),
        (6, "gradient check", guarded(gradient)),
    ];
    let dir = tempfile::tempdir().expect("temporary directory");
    eprintln!("running the five-seed reproduction");
    let started = Instant::now();
    let reproduction = catch_unwind(AssertUnwindSafe(|| reproduce(dir.path())))
        .unwrap_or_else(|_| Err("reproduction panicked".into()))
        .and_then(|s| match s.reproduce.clone() {
            Some(report) => Ok((s, report)),
            None => Err("reproduction produced no report".into()),
        });
    eprintln!("reproduction finished in {:.0} s", started.elapsed().as_secs_f64());
    let bundle: [(usize, &str, BundleCheck); 6] = [
        (7, "processed-requests direction, rising profile", |_, r| processed_direction(r)),
        (8, "deployed-instances direction, falling profile", |_, r| deployed_direction(r)),
        (9, "deployments against robust autoscaling", |_, r| autoscaling_direction(r)),
        (10, "deployments grow with box width", |_, r| width_trend(r)),
        (11, "decision latency budget", timing),
        (12, "safety of emitted schedules", safety),
    ];
    for (id, name, f) in bundle {
        let outcome = match &reproduction {
            Ok((summary, report)) => guarded(|| f(summary, report)),
            Err(e) => Err(format!("reproduction failed: {e}")),
        };
        results.push((id, name, outcome));
    }
    let mut unexpected = 0;
    for (id, name, outcome) in &results {
        let known = KNOWN_FAILURES.contains(id);
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) if known => ("FAIL (known)", d),
            Err(d) => {
                unexpected += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {status}: {name}: {detail}");
    }
    let passed = results.iter().filter(|r| r.2.is_ok()).count();
    println!("{passed}/{} criteria passed, {unexpected} unexpected failures", results.len());
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
