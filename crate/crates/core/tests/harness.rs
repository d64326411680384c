use std::fs;
use std::path::Path;

use metathresh_core::exec::ExecMode;
use metathresh_core::harness::config::TaskKind;
use metathresh_core::harness::experiment::ablation_design;
use metathresh_core::harness::{
    build_monitoring_task, output, probe_policy, run_ablation, run_simulation, run_stages_experiment, run_threshold,
    train, ConfigError, ExperimentSpec, Variant,
};
use metathresh_core::learning::StageLabel;
use metathresh_core::psychophysics::{Axis, StimulusSet};
use metathresh_core::rng::{derive_seed, stream};

/// Small settings for quick end-to-end runs.
const SMALL: &str = r#"
[experiment]
seeds = [11, 12]
n_boot = 100
max_slope_factor = 60.0

[training]
n_trials = 6
probe_every = 3
window = 5
trial_ms = 3000.0

[probe]
trials = 30

[ablation]
trials = 30
"#;

fn small() -> ExperimentSpec {
    ExperimentSpec::parse(SMALL).unwrap()
}

fn with(extra: &str) -> ExperimentSpec {
    let mut base: toml::Table = SMALL.parse().unwrap();
    let over: toml::Table = extra.parse().unwrap();
    for (section, v) in over {
        match (base.get_mut(&section), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => b.extend(o),
            (_, v) => {
                base.insert(section, v);
            }
        }
    }
    ExperimentSpec::parse(&base.to_string()).unwrap()
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn task_shapes() {
    let spec = ExperimentSpec::default_spec();
    let cfg = &spec.mechanism_config;
    let only = metathresh_core::harness::TaskSpec {
        kind: TaskKind::MonitorOnly,
        ..spec.task.clone()
    };
    let e = build_monitoring_task(&only, cfg).unwrap();
    assert_eq!(e.rules().len(), 2);
    assert_eq!(e.memory().len(), 1);
    assert!(e.rules().iter().all(|r| r.validate().is_ok()));
    let three = metathresh_core::harness::TaskSpec {
        kind: TaskKind::MonitorWithDistractors(3),
        ..spec.task.clone()
    };
    let e = build_monitoring_task(&three, cfg).unwrap();
    assert_eq!(e.rules().len(), 5);
    assert_eq!(e.rules().iter().filter(|r| r.is_monitor).count(), 1);
}

#[test]
fn config_errors_are_collected() {
    assert!(matches!(ExperimentSpec::parse("[engine]\nbogus = 1\n"), Err(ConfigError::Parse(_))));
    assert!(matches!(ExperimentSpec::parse("[nope]\n"), Err(ConfigError::Parse(_))));
    match ExperimentSpec::parse("[engine]\ncycle_time_ms = 0.0\nnoise_scale = -1.0\n[experiment]\nseeds = []\n") {
        Err(ConfigError::Invalid(v)) => assert!(v.len() >= 3, "{v:?}"),
        other => panic!("{other:?}"),
    }
    match ExperimentSpec::parse("[training]\nn_trials = 4\nprobe_every = 5\n") {
        Err(ConfigError::Invalid(v)) => assert!(v.iter().any(|m| m.contains("probe_every")), "{v:?}"),
        other => panic!("{other:?}"),
    }
    assert!(ExperimentSpec::parse("").is_ok());
}

#[test]
fn probes_leave_policy_untouched() {
    let spec = small();
    let cfg = &spec.mechanism_config;
    let protocol = spec.training().unwrap();
    let fresh = build_monitoring_task(&spec.task, cfg).unwrap().into_policy();
    let trained = train(fresh, &spec, &spec.task, cfg, protocol, 11, 0..protocol.n_trials)
        .unwrap()
        .policy;
    assert!(trained.rules.compiled_count() > 0);
    let design = spec.probe().unwrap().design(Axis::Duration, &spec.signals);
    let set = StimulusSet::generate(&design, 5).unwrap();
    let before = format!("{trained:?}");
    probe_policy(&trained, &spec.task, &spec, cfg, &set, 9, ExecMode::Parallel).unwrap();
    assert_eq!(format!("{trained:?}"), before);

    let report = run_stages_experiment(&spec, ExecMode::Parallel).unwrap();
    assert!(report.seeds.iter().flat_map(|s| &s.probes).all(|p| p.policy_unchanged));
}

#[test]
fn ablation_variants_share_stimuli() {
    let spec = small();
    let report = run_ablation(&spec, ExecMode::Parallel).unwrap();
    assert_eq!(report.rows.len(), spec.seeds.len() * 5);
    for (seed, bytes) in &report.stimuli {
        let design = ablation_design(&spec);
        let generated = StimulusSet::generate(&design, derive_seed(*seed, &[stream::STIMULUS, Axis::Duration as u64])).unwrap();
        let mut regenerated = Vec::new();
        generated.write_csv(&mut regenerated).unwrap();
        assert_eq!(&regenerated, bytes);
        // replaying the shared file reproduces the baseline counts
        let shared = StimulusSet::read_csv(&design, bytes.as_slice()).unwrap();
        let base_cfg = metathresh_core::harness::variant_config(&spec.mechanism_config, Variant::Baseline, 1.0);
        let task = metathresh_core::harness::TaskSpec {
            kind: TaskKind::MonitorWithDistractors(spec.ablation.distractors),
            ..spec.task.clone()
        };
        let policy = build_monitoring_task(&task, &base_cfg).unwrap().into_policy();
        let engine_seed = derive_seed(*seed, &[stream::ENGINE, Axis::Duration as u64]);
        let data = probe_policy(&policy, &task, &spec, &base_cfg, &shared, engine_seed, ExecMode::Sequential).unwrap();
        let row = report
            .rows
            .iter()
            .find(|r| r.seed == *seed && r.variant == Variant::Baseline)
            .unwrap();
        assert_eq!(row.measurement.data, data);
    }
    let seq = run_ablation(&spec, ExecMode::Sequential).unwrap();
    assert_eq!(format!("{:?}", seq.rows), format!("{:?}", report.rows));
}

#[test]
fn null_variant_difference_straddles_zero() {
    let spec = with("[ablation]\nvariants = [\"null\"]\ntrials = 100\n");
    let report = run_ablation(&spec, ExecMode::Parallel).unwrap();
    for row in report.rows.iter().filter(|r| r.variant == Variant::Null) {
        let d = row.difference.clone().unwrap().unwrap();
        assert!(d.ci_low <= 0.0 && 0.0 <= d.ci_high, "{d:?}");
        assert_eq!(d.difference, 0.0);
    }
}

#[test]
fn invalid_variants_fail_before_running() {
    let spec = with("[engine]\nfocus = \"open\"\nfocus_class = \" \"\n[ablation]\nvariants = [\"narrow-focus\"]\n");
    assert!(matches!(
        run_ablation(&spec, ExecMode::Parallel),
        Err(metathresh_core::harness::HarnessError::Config(_))
    ));
}

/// Two-sided one-sample t statistic of per-seed slopes; zero when all are zero.
fn slope_t(series: &[Vec<f64>]) -> f64 {
    let slopes: Vec<f64> = series
        .iter()
        .map(|ys| {
            let n = ys.len() as f64;
            let xbar = (n - 1.0) / 2.0;
            let ybar = ys.iter().sum::<f64>() / n;
            let sxy: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - xbar) * (y - ybar)).sum();
            let sxx: f64 = (0..ys.len()).map(|i| (i as f64 - xbar).powi(2)).sum();
            sxy / sxx
        })
        .collect();
    let n = slopes.len() as f64;
    let mean = slopes.iter().sum::<f64>() / n;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean == 0.0 { 0.0 } else { f64::INFINITY };
    }
    mean / (var / n).sqrt()
}

#[test]
fn no_compilation_stays_novice_and_flat() {
    let spec = with("[experiment]\nseeds = [1, 2, 3, 4, 5]\n[engine]\ncompilation = false\n");
    let report = run_stages_experiment(&spec, ExecMode::Parallel).unwrap();
    let mut series = Vec::new();
    for s in &report.seeds {
        assert!(s.trajectory_stages().iter().all(|l| *l == StageLabel::Novice));
        assert!(s.probes.iter().all(|p| p.stage == StageLabel::Novice));
        assert!(!s.passes_all_stages());
        series.push(
            s.probes
                .iter()
                .filter(|p| p.axis == Axis::Duration)
                .map(|p| p.measurement.threshold().unwrap())
                .collect::<Vec<_>>(),
        );
    }
    // t quantile 0.975 with 4 degrees of freedom
    assert!(slope_t(&series).abs() < 2.776, "{series:?}");
}

#[test]
fn stages_output_is_reproducible() {
    let spec = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    output::write_stages(a.path(), &run_stages_experiment(&spec, ExecMode::Parallel).unwrap()).unwrap();
    output::write_stages(b.path(), &run_stages_experiment(&spec, ExecMode::Sequential).unwrap()).unwrap();
    let (da, db) = (read_dir(a.path()), read_dir(b.path()));
    assert_eq!(da.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["events.csv", "psychometric.csv", "stages.csv", "thresholds.csv"]);
    assert_eq!(da, db);
    let stages = String::from_utf8(da[2].1.clone()).unwrap();
    assert_eq!(stages.lines().next().unwrap(), output::STAGES_HEADER.join(","));
}

#[test]
fn threshold_and_simulate_outputs() {
    let spec = with("[experiment]\nseeds = [3]\n[probe]\naxes = [\"duration\", \"amplitude\"]\n");
    let ms = run_threshold(&spec, ExecMode::Parallel).unwrap();
    assert_eq!(ms.len(), 2);
    assert!(ms.iter().all(|m| m.failure.is_none()));
    let dir = tempfile::tempdir().unwrap();
    let refs: Vec<_> = ms.iter().collect();
    output::write_psychometric(dir.path(), &refs).unwrap();
    output::write_thresholds(dir.path(), &refs).unwrap();
    let runs = run_simulation(&spec, ExecMode::Parallel).unwrap();
    output::write_simulation(dir.path(), &runs).unwrap();
    output::write_manifest(dir.path(), "threshold", SMALL.as_bytes(), &spec.seeds).unwrap();
    let files = read_dir(dir.path());
    let names: Vec<_> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["events.csv", "manifest.txt", "psychometric.csv", "thresholds.csv"]);
    let text = |i: usize| String::from_utf8(files[i].1.clone()).unwrap();
    assert_eq!(text(2).lines().count(), 1 + 16);
    assert_eq!(text(2).lines().next().unwrap(), output::PSYCHOMETRIC_HEADER.join(","));
    assert_eq!(text(3).lines().next().unwrap(), output::THRESHOLDS_HEADER.join(","));
    assert!(text(1).contains(&output::config_hash(SMALL.as_bytes())));
    assert!(runs[0].events > 0 && runs[0].detected <= runs[0].events);
}
