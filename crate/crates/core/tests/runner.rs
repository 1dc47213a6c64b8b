use std::fs;
use std::path::Path;

use plasticity::activation::{ActivationKind, ActivationSpec};
use plasticity::metrics::{mean, pearson_r};
use plasticity::runner::report::REPORT_DIR;
use plasticity::runner::*;
use plasticity::Error;
use proptest::prelude::*;

const TINY: &str = r#"
name = "tiny"
kind = "goldilocks_sweep"
seeds = [0, 1]
scale = 10
hidden = [8]

[activations]
specs = [{ kind = "leaky_relu", alpha = 0.01 }, { kind = "leaky_relu", alpha = 0.7 }]

[data]
source = "blobs"
classes = 4
per_class = 20
dim = 6

[stream]
preset = "permuted_mnist"
tasks = 2
samples = 40

[optimizer]
kind = "adam"
lr = 0.01

[diagnostics]
probe_size = 16
rank_samples = 8
power_iters = 5
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(TINY, "tiny.toml").unwrap()
}

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_into(cfg: &ExperimentConfig, dir: &Path) -> RunSummary {
    run(cfg, dir, RunOptions::default()).unwrap()
}

#[test]
fn toml_round_trip_preserves_config() {
    let cfg = tiny();
    let text = cfg.to_toml_string().unwrap();
    let back = ExperimentConfig::from_toml_str(&text, "round-trip").unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.cells().unwrap(), cfg.cells().unwrap());
}

#[test]
fn every_checked_in_config_validates() {
    let mut stack = vec![configs_dir()];
    let mut count = 0;
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "toml") {
                let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
                let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap(), "rt").unwrap();
                assert_eq!(back, cfg, "{}", path.display());
                count += 1;
            }
        }
    }
    assert!(count >= 20, "only {count} configs found");
}

#[test]
fn tuned_settings_are_checked_in() {
    let bench = ExperimentConfig::load(&configs_dir().join("benchmarks/permuted_mnist.toml")).unwrap();
    let list = bench.activation_list().unwrap();
    assert_eq!(list.len(), 15);
    let (label, spec, lr) = &list[1];
    assert!(label.starts_with("leaky_relu:"));
    assert_eq!(spec.alpha, 0.6);
    assert_eq!(*lr, Some(1e-3));

    let sweep = ExperimentConfig::load(&configs_dir().join("sweeps/leaky_relu.toml")).unwrap();
    assert_eq!(sweep.activation_list().unwrap().len(), 12);
    let sl = ExperimentConfig::load(&configs_dir().join("sweeps/smooth_leaky.toml")).unwrap();
    assert_eq!(sl.activation_list().unwrap().len(), 175);
}

fn parse_err(text: &str) -> String {
    match ExperimentConfig::from_toml_str(text, "bad.toml") {
        Err(e) => e.to_string(),
        Ok(_) => panic!("config unexpectedly valid"),
    }
}

#[test]
fn errors_name_the_offending_field() {
    let unknown = parse_err(&TINY.replace("hidden = [8]", "hidden = [8]\nlearning_rate = 3"));
    assert!(
        unknown.contains("learning_rate") && unknown.contains("line"),
        "{unknown}"
    );

    let typed = parse_err(&TINY.replace("lr = 0.01", "lr = \"fast\""));
    // Tagged tables report the section path and the offending value.
    assert!(
        typed.contains("optimizer:") && typed.contains("\"fast\""),
        "{typed}"
    );

    let preset = parse_err(&TINY.replace("tasks = 2", "tasks = 0"));
    assert!(preset.contains("stream:"), "{preset}");

    let nested = parse_err(&TINY.replace("dim = 6", "dim = 6\nnoise = 1"));
    assert!(nested.contains("noise"), "{nested}");

    let seeds = parse_err(&TINY.replace("seeds = [0, 1]", "seeds = []"));
    assert!(seeds.starts_with("configuration error: seeds:"), "{seeds}");

    let dup = parse_err(&TINY.replace("alpha = 0.7", "alpha = 0.01"));
    assert!(dup.contains("activations:") && dup.contains("twice"), "{dup}");

    let no_data = parse_err(&TINY.replace(
        "[data]\nsource = \"blobs\"\nclasses = 4\nper_class = 20\ndim = 6\n",
        "",
    ));
    assert!(no_data.starts_with("configuration error: data:"), "{no_data}");

    let bad_spec = parse_err(&TINY.replace("alpha = 0.7", "alpha = nan"));
    assert!(bad_spec.contains("activations.specs[1]"), "{bad_spec}");
}

#[test]
fn empty_grid_warns_and_writes_empty_results() {
    let mut cfg = tiny();
    cfg.activations.specs.clear();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into(&cfg, dir.path());
    assert_eq!(summary.cells, 0);
    assert_eq!(summary.warnings.len(), 1);
    assert!(read_results(&dir.path().join(RESULTS)).unwrap().is_empty());
    let manifest = Manifest::load(dir.path()).unwrap();
    assert_eq!(manifest.warnings, summary.warnings);
}

#[test]
fn existing_output_requires_overwrite() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    run_into(&cfg, dir.path());
    match run(&cfg, dir.path(), RunOptions::default()) {
        Err(Error::OutputExists(p)) => assert_eq!(p, dir.path()),
        other => panic!("expected OutputExists, got {other:?}"),
    }
    fs::create_dir_all(dir.path().join(REPORT_DIR)).unwrap();
    let opts = RunOptions {
        overwrite: true,
        ..RunOptions::default()
    };
    run(&cfg, dir.path(), opts).unwrap();
    assert!(!dir.path().join(REPORT_DIR).exists());
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = tiny();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_into(&cfg, a.path());
    run(
        &cfg,
        b.path(),
        RunOptions {
            jobs: 3,
            overwrite: false,
        },
    )
    .unwrap();
    for f in [RESULTS, MANIFEST] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest = Manifest::load(a.path()).unwrap();
    for cell in &manifest.cells {
        for t in &cell.traces {
            assert_eq!(
                fs::read(a.path().join(t)).unwrap(),
                fs::read(b.path().join(t)).unwrap()
            );
        }
    }
}

#[test]
fn results_have_one_row_per_metric_and_seed() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into(&cfg, dir.path());
    assert_eq!(summary.cells, 4);
    assert_eq!(summary.failed, 0);
    let rows = read_results(&dir.path().join(RESULTS)).unwrap();
    assert_eq!(rows.len(), summary.rows);
    let cells = cfg.cells().unwrap();
    for cell in &cells {
        let exp = format!("tiny/{}", cell.label);
        let mine: Vec<_> = rows
            .iter()
            .filter(|r| r.experiment == exp && r.seed == cell.seed)
            .collect();
        for m in [
            "dbw",
            "s_bar",
            "taoa",
            "dead_unit_fraction",
            "effective_rank",
            "lambda_max",
        ] {
            assert_eq!(
                mine.iter().filter(|r| r.metric == m).count(),
                1,
                "{exp} seed {} {m}",
                cell.seed
            );
        }
        assert!(mine.iter().all(|r| r.config_hash == cell.config_hash));
    }
    // The config hash ignores the seed but not the activation.
    assert_eq!(cells[0].config_hash, cells[1].config_hash);
    assert_ne!(cells[0].config_hash, cells[2].config_hash);
}

#[test]
fn failing_cell_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(
        &good,
        "run,environment,cycle,phase,episode_index,return\n\
         a,e,1,train,0,1\na,e,1,test,0,0.5\na,e,3,train,0,2\na,e,3,test,0,0.5\n",
    )
    .unwrap();
    let text = format!(
        "name = \"rl\"\nkind = \"rl_metrics\"\nseeds = [0]\n[rl]\nlogs = [{{ label = \"missing\", path = \"{}\" }}, {{ label = \"good\", path = \"{}\" }}]\n",
        dir.path().join("absent.csv").display(),
        good.display()
    );
    let cfg = ExperimentConfig::from_toml_str(&text, "rl.toml").unwrap();
    let out = dir.path().join("out");
    let summary = run_into(&cfg, &out);
    assert_eq!((summary.cells, summary.failed), (2, 1));
    let manifest = Manifest::load(&out).unwrap();
    assert_eq!(manifest.cells[0].status, CellStatus::Failed);
    assert!(manifest.cells[0].error.as_deref().unwrap().contains("absent.csv"));
    assert_eq!(manifest.cells[1].status, CellStatus::Ok);
    let rows = read_results(&out.join(RESULTS)).unwrap();
    let gap = rows.iter().find(|r| r.metric == "gap_delta:e").unwrap();
    assert_eq!(gap.experiment, "rl/good/a");
    assert_eq!(gap.value, 1.0);

    let rep = report(&out, ReportKind::Summary).unwrap();
    assert!(rep
        .missing
        .iter()
        .any(|m| m.contains("rl/missing") && m.contains("cell failed")));
}

#[test]
fn goldilocks_grid_expands_twelve_leaks_by_five_seeds() {
    let cfg = ExperimentConfig::load(&configs_dir().join("sweeps/leaky_relu.toml")).unwrap();
    let cells = cfg.cells().unwrap();
    assert_eq!(cells.len(), 60);
    let alphas: std::collections::BTreeSet<String> = cells
        .iter()
        .map(|c| match &c.spec {
            CellSpec::Continual(cc) => cc.activation.alpha.to_string(),
            other => panic!("unexpected cell {other:?}"),
        })
        .collect();
    assert_eq!(alphas.len(), 12);
    assert!(cells.iter().all(|c| (0..5).contains(&c.seed)));
    assert!(cells
        .iter()
        .all(|c| matches!(&c.spec, CellSpec::Continual(cc) if cc.diagnostics.is_some())));
}

#[test]
fn property_grid_run_and_floor_class_report() {
    let cfg = ExperimentConfig::load(&configs_dir().join("property_grid.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into(&cfg, dir.path());
    assert_eq!((summary.cells, summary.failed), (17, 0));
    let rep = report(dir.path(), ReportKind::FloorClasses).unwrap();
    let mut rdr = csv::Reader::from_path(&rep.files[0]).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let find = |grouping: &str, group: &str, metric: &str| {
        rows.iter()
            .find(|r| &r[0] == grouping && &r[1] == group && &r[2] == metric)
            .unwrap_or_else(|| panic!("{grouping}/{group}/{metric}"))
            .clone()
    };
    let zero = find("floor", "zero_floor", "dbw");
    assert_eq!(&zero[11], "ReLU;Sigmoid;Tanh");
    assert_eq!(&zero[4], "3");
    assert_eq!(&zero[10], "0");
    let nonzero = find("floor", "non_zero_floor", "dbw");
    assert_eq!(nonzero[5].parse::<f64>().unwrap(), 0.0);
    let two = find("sidedness", "two_sided", "prop_hdz");
    assert_eq!(&two[11], "Sigmoid;Tanh");
    assert_eq!(&find("floor", "unclassified", "dbw")[11], "CReLU;Rational");
}

#[test]
fn single_seed_summary_flags_degenerate_interval() {
    let mut cfg = tiny();
    cfg.seeds = vec![3];
    let dir = tempfile::tempdir().unwrap();
    run_into(&cfg, dir.path());
    report(dir.path(), ReportKind::Summary).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join(REPORT_DIR).join("summary.csv")).unwrap();
    for r in rdr.records() {
        let r = r.unwrap();
        assert_eq!(&r[3], "1");
        assert_eq!(&r[9], "1", "{r:?}");
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[6], r[4]);
        assert_eq!(r[7], r[4]);
    }
}

#[test]
fn correlation_report_matches_direct_pearson() {
    let dir = tempfile::tempdir().unwrap();
    let kinds = [
        ActivationSpec::new(ActivationKind::Relu),
        ActivationSpec::new(ActivationKind::Sigmoid),
        ActivationSpec::leaky_relu(0.3),
        ActivationSpec::new(ActivationKind::Elu),
    ];
    // Synthetic shock metrics with a hand-made manifest.
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (i, spec) in kinds.iter().enumerate() {
        let exp = format!("s/{}", spec.label());
        for seed in 0..3u64 {
            for (metric, value) in [
                ("dbw", [0.5, 0.93, 0.0, 0.45][i]),
                ("ausc_mean", [0.2, 0.9, 0.01, 0.3][i] + 0.01 * seed as f64),
                ("sf_nonrecovery_rate", [0.0, 0.5, 0.0, 0.25][i]),
            ] {
                rows.push(ResultRow {
                    experiment: exp.clone(),
                    config_hash: "0".into(),
                    seed,
                    metric: metric.into(),
                    value,
                    units: "x".into(),
                });
            }
            cells.push(CellRecord {
                index: cells.len(),
                experiment: exp.clone(),
                label: spec.label(),
                seed,
                config_hash: "0".into(),
                activation: Some(spec.clone()),
                status: CellStatus::Ok,
                error: None,
                rows: 3,
                traces: vec![],
            });
        }
    }
    write_results(&dir.path().join(RESULTS), &rows).unwrap();
    let manifest = Manifest {
        tool: "plasticity".into(),
        version: "test".into(),
        config: tiny(),
        cells,
        warnings: vec![],
    };
    fs::write(
        dir.path().join(MANIFEST),
        serde_json::to_string(&manifest).unwrap(),
    )
    .unwrap();

    let rep = report(dir.path(), ReportKind::Correlation).unwrap();
    assert!(rep.missing.is_empty(), "{:?}", rep.missing);
    let by_exp = |metric: &str| {
        let mut m: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
        for r in rows.iter().filter(|r| r.metric == metric) {
            m.entry(&r.experiment).or_default().push(r.value);
        }
        m.values().map(|v| mean(v)).collect::<Vec<f64>>()
    };
    let (r, p) = pearson_r(&by_exp("dbw"), &by_exp("ausc_mean")).unwrap();
    let c = &rep.correlations[0];
    assert_eq!((c.y.as_str(), c.n), ("ausc_mean", 4));
    assert_eq!((c.r, c.p), (r, p));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn results_csv_round_trips(values in proptest::collection::vec(-1e12f64..1e12, 0..20), seed in 0u64..u64::MAX) {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<ResultRow> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| ResultRow {
                experiment: format!("e/{i},x"),
                config_hash: "abc".into(),
                seed,
                metric: "m".into(),
                value: v,
                units: "u".into(),
            })
            .collect();
        let path = dir.path().join(RESULTS);
        write_results(&path, &rows).unwrap();
        prop_assert_eq!(read_results(&path).unwrap(), rows);
    }

    #[test]
    fn cell_count_is_activations_times_seeds(n_alpha in 1usize..6, n_seeds in 1usize..5) {
        let mut cfg = tiny();
        cfg.activations.specs = (0..n_alpha).map(|i| ActivationSpec::leaky_relu(0.1 * (i + 1) as f64)).collect();
        cfg.seeds = (0..n_seeds as u64).collect();
        let cells = cfg.cells().unwrap();
        prop_assert_eq!(cells.len(), n_alpha * n_seeds);
        prop_assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
    }
}
