//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{goal, instruction_pair, memory_with, quiet, random_instruction, run_to_rest};
use metathresh_core::engine::{firing_duration, Complexity, Engine, EventKind, Production, RuleSet};
use metathresh_core::exec::ExecMode;
use metathresh_core::harness::{
    output, run_ablation, run_simulation, run_stages_experiment, run_threshold, AblationReport, ExperimentSpec,
    StageReport, Variant, DEFAULT_CONFIG,
};
use metathresh_core::learning::{compile_pair, update_utility, UtilityParams};
use metathresh_core::mechanisms::{MechanismConfig, COMPLEX_RANGE_MS, DEFAULT_CYCLE_MS, SIMPLE_RANGE_MS};
use metathresh_core::memory::DeclarativeMemory;
use metathresh_core::psychophysics::{fit_logistic, Axis, FitOptions, PsychometricData};
use metathresh_core::rng::rng_from_seed;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Binomial;

type Outcome = (bool, String);

fn timing() -> Outcome {
    let defaults = MechanismConfig::default();
    let cfg = MechanismConfig {
        complexity_timing: true,
        ..Default::default()
    };
    let mut rng = rng_from_seed(1);
    let p = Production::authored("p", vec![], vec![]);
    let mut ok = defaults.cycle_time_ms == 50.0 && DEFAULT_CYCLE_MS == 50.0;
    let mut detail = format!("cycle {} ms", defaults.cycle_time_ms);
    for (c, (lo, hi)) in [(Complexity::Simple, SIMPLE_RANGE_MS), (Complexity::Complex, COMPLEX_RANGE_MS)] {
        let p = p.clone().with_complexity(c);
        let d: Vec<f64> = (0..10_000).map(|_| firing_duration(&p, &cfg, &mut rng).unwrap()).collect();
        let (min, max) = d.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        ok &= lo == [34.0, 59.0][c as usize] && hi == [44.0, 73.0][c as usize] && min >= lo && max <= hi;
        detail += &format!("; {c} in [{min:.2}, {max:.2}]");
    }
    (ok, detail)
}

fn fire_when_ready() -> Outcome {
    let chunk = random_instruction(&mut rng_from_seed(2), 0);
    let (first, second) = instruction_pair(&chunk);
    let cfg = MechanismConfig {
        compilation_enabled: true,
        ..quiet()
    };
    let (_, _, pair) = run_to_rest(vec![first.clone(), second.clone()], memory_with(&chunk));

    // compile through the engine's own learning path, then let the child win
    let rules = RuleSet::from_rules([first.clone(), second.clone()]).unwrap();
    let mut e = Engine::from_rules(rules, memory_with(&chunk))
        .with_goal(goal("start"))
        .with_learning(UtilityParams::default())
        .unwrap();
    e.run_until(&cfg, 1000.0, &mut rng_from_seed(3)).unwrap();
    let mut policy = e.into_policy();
    let Some(child_id) = policy.compilations.keys().next().cloned() else {
        return (false, "no compiled rule".into());
    };
    policy.rules.get_mut(&child_id).unwrap().utility = 100.0;
    let mut e = Engine::new(policy, memory_with(&chunk)).with_goal(goal("start"));
    e.run_until(&cfg, 1000.0, &mut rng_from_seed(4)).unwrap();
    let starts: Vec<_> = e.log().of_kind(EventKind::FireStart).collect();
    let end = e.log().of_kind(EventKind::FireEnd).last().unwrap().time_ms;
    let compiled = end - starts[0].time_ms;
    let ok = pair == cfg.default_latency_ms + 2.0 * cfg.cycle_time_ms
        && compiled == cfg.cycle_time_ms
        && starts.len() == 1
        && starts[0].production.as_deref() == Some(child_id.as_str());
    (ok, format!("pair {pair} ms, compiled {compiled} ms"))
}

fn compilation_soundness() -> Outcome {
    let mut rng = rng_from_seed(5);
    let n = 1000;
    let mut mismatches = 0;
    for i in 0..n {
        let chunk = random_instruction(&mut rng, i);
        let (first, second) = instruction_pair(&chunk);
        let child = compile_pair(&first, &second, &chunk, true).unwrap();
        let a = run_to_rest(vec![first, second], memory_with(&chunk));
        let b = run_to_rest(vec![child], DeclarativeMemory::default());
        if (a.0, a.1) != (b.0, b.1) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{n} instruction chunks, {mismatches} mismatches"))
}

fn utility_convergence() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let alpha = rng.random_range(0.1..0.5);
        let params = UtilityParams {
            alpha,
            reward_magnitude: rng.random_range(5.0..10.0),
            time_cost_per_ms: rng.random_range(0.0..0.02),
        };
        let elapsed = rng.random_range(0.0..200.0);
        let r = params.effective_reward(elapsed);
        let u0 = r + rng.random_range(2.0..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        // keep the residual well above rounding noise
        let n_max = ((0.1f64).ln() / (1.0 - alpha).ln()).floor().max(1.0) as i32;
        let n = rng.random_range(1..=n_max);
        let mut p = Production::authored("p", vec![], vec![]).with_utility(u0);
        for _ in 0..n {
            p = update_utility(&p, &params, elapsed).unwrap();
        }
        let want = (1.0 - alpha).powi(n) * (u0 - r).abs();
        worst = worst.max(((p.utility - r).abs() - want).abs() / want);
    }
    (worst <= 1e-12, format!("50 draws, worst relative error {worst:.2e}"))
}

fn recovery() -> Outcome {
    let levels = [40.0, 60.0, 80.0, 100.0, 140.0, 160.0, 180.0, 200.0];
    let mut errors: Vec<f64> = (0..100)
        .map(|seed| {
            let mut rng = rng_from_seed(1000 + seed);
            let counts = levels
                .iter()
                .map(|&x| {
                    let p = 1.0 / (1.0 + (-0.05f64 * (x - 120.0)).exp());
                    Binomial::new(500, p).unwrap().sample(&mut rng) as u32
                })
                .collect();
            let data = PsychometricData::new(Axis::Duration, levels.to_vec(), 500, counts).unwrap();
            let fit = fit_logistic(&data, &FitOptions::default()).unwrap();
            (fit.midpoint - 120.0).abs() / 120.0
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    let median = (errors[49] + errors[50]) / 2.0;
    (median <= 0.05, format!("median midpoint error {:.2}%", median * 100.0))
}

fn ablation(report: &AblationReport, seeds: usize) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for v in Variant::ALL {
        let wins = report
            .rows
            .iter()
            .filter(|r| r.variant == v)
            .filter(|r| matches!(&r.difference, Some(Ok(d)) if d.excludes_zero() && d.difference < 0.0))
            .count();
        ok &= wins >= 8;
        parts.push(format!("{} {wins}/{seeds}", v.name()));
    }
    (ok, parts.join(", "))
}

fn stages(report: &StageReport) -> Outcome {
    let n = report.seeds.len();
    let trajectories = report.seeds.iter().filter(|s| s.passes_all_stages()).count();
    let separated = report
        .seeds
        .iter()
        .filter(|s| {
            let (Some(first), Some(last)) = (s.first_duration_probe(), s.last_duration_probe()) else {
                return false;
            };
            match (first.measurement.estimate, last.measurement.estimate) {
                (Some(a), Some(b)) => b.level_at_criterion < a.level_at_criterion && b.ci_high < a.ci_low,
                _ => false,
            }
        })
        .count();
    (
        trajectories == n && separated * 2 > n,
        format!("novice->intermediate->expert on {trajectories}/{n} seeds, separated CIs on {separated}/{n}"),
    )
}

fn write_all(dir: &Path, spec: &ExperimentSpec, stages: &StageReport, ablation: &AblationReport, mode: ExecMode) {
    let bytes = DEFAULT_CONFIG.as_bytes();
    let sub = |name: &str| {
        let d = dir.join(name);
        fs::create_dir_all(&d).unwrap();
        d
    };
    let d = sub("simulate");
    output::write_simulation(&d, &run_simulation(spec, mode).unwrap()).unwrap();
    output::write_manifest(&d, "simulate", bytes, &spec.seeds).unwrap();
    let d = sub("threshold");
    let ms = run_threshold(spec, mode).unwrap();
    let refs: Vec<_> = ms.iter().collect();
    output::write_psychometric(&d, &refs).unwrap();
    output::write_thresholds(&d, &refs).unwrap();
    output::write_manifest(&d, "threshold", bytes, &spec.seeds).unwrap();
    let d = sub("stages");
    output::write_stages(&d, stages).unwrap();
    output::write_manifest(&d, "stages", bytes, &spec.seeds).unwrap();
    let d = sub("ablate");
    output::write_ablation(&d, ablation).unwrap();
    output::write_manifest(&d, "ablate", bytes, &spec.seeds).unwrap();
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in fs::read_dir(dir).unwrap() {
        let sub = sub.unwrap().path();
        for f in fs::read_dir(&sub).unwrap() {
            let f = f.unwrap().path();
            out.push((f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap()));
        }
    }
    out.sort();
    out
}

fn main() -> ExitCode {
    let spec = ExperimentSpec::default_spec();
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        results.push((name, outcome, t.elapsed().as_secs_f64()));
    };

    run("1 timing constants", &mut timing);
    run("2 fire-when-ready accounting", &mut fire_when_ready);
    run("3 compilation soundness", &mut compilation_soundness);
    run("4 utility convergence", &mut utility_convergence);
    run("5 psychometric recovery", &mut recovery);

    let mut ablation_report = None;
    run("6 mechanism ablation", &mut || {
        let r = ablation_report.insert(run_ablation(&spec, ExecMode::Parallel).expect("ablation runs"));
        ablation(r, spec.seeds.len())
    });
    let mut stage_report = None;
    run("7 three-stage trajectory", &mut || {
        stages(stage_report.insert(run_stages_experiment(&spec, ExecMode::Parallel).expect("stages run")))
    });
    let (ablation_report, stage_report) = (ablation_report.unwrap(), stage_report.unwrap());

    run("8 determinism", &mut || {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_all(a.path(), &spec, &stage_report, &ablation_report, ExecMode::Parallel);
        let stages2 = run_stages_experiment(&spec, ExecMode::Sequential).unwrap();
        let ablation2 = run_ablation(&spec, ExecMode::Sequential).unwrap();
        write_all(b.path(), &spec, &stages2, &ablation2, ExecMode::Sequential);
        let (ta, tb) = (tree(a.path()), tree(b.path()));
        let differing: Vec<_> = ta
            .iter()
            .zip(&tb)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.clone())
            .collect();
        (
            ta.len() == tb.len() && differing.is_empty(),
            format!("{} files compared, {} differ {differing:?}", ta.len(), differing.len()),
        )
    });

    let mut all = true;
    for (name, (ok, detail), secs) in &results {
        all &= ok;
        println!("{} criterion {name}: {detail} ({secs:.1} s)", if *ok { "PASS" } else { "FAIL" });
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
