use ndarray::{array, Array2};
use plasticity::activation::{ActivationKind, ActivationSpec, Mode};
use plasticity::metrics::recovery_stats;
use plasticity::net::{Network, NetworkSpec, OptimizerKind};
use plasticity::streams::{BlobConfig, DataSource, StreamConfig, StreamKind};
use plasticity::stress::*;
use proptest::prelude::*;

fn one_layer(kind: ActivationSpec, weights: &[f64], bias: &[f64]) -> Network {
    let w = weights.len();
    let spec = NetworkSpec::mlp(1, &[w], 2, kind);
    let mut net = Network::init(&spec, 0).unwrap();
    net.layers[0].weight = Array2::from_shape_vec((1, w), weights.to_vec()).unwrap();
    net.layers[0].bias = ndarray::Array1::from_vec(bias.to_vec());
    net
}

fn sf_of(net: &Network, x: &Array2<f64>, gamma: f64) -> Saturation {
    let (_, tape) = net.forward(x.view(), gamma, Mode::Eval, None).unwrap();
    saturation_fraction(net, &tape, SATURATION_EPS).unwrap()
}

#[test]
fn gamma_schedule_sequence() {
    let s = ShockSchedule::default();
    let seq: Vec<f64> = [10, 20, 30, 40, 50].iter().map(|&t| s.gamma_at(t)).collect();
    assert_eq!(seq, vec![1.5, 0.5, 0.25, 2.0, 1.5]);
    assert_eq!(s.gamma_at(7), 1.0);
    assert_eq!(s.gamma_at(0), 1.0);
    assert!(!s.is_shock_epoch(0));
    let single = ShockSchedule {
        gammas: vec![2.0],
        cycle: 5,
    };
    assert!((1..6).all(|k| single.gamma_at(5 * k) == 2.0));
    assert!(ShockSchedule {
        gammas: vec![0.0],
        cycle: 10
    }
    .validate()
    .is_err());
    assert!(ShockSchedule {
        gammas: vec![1.0],
        cycle: 1
    }
    .validate()
    .is_err());
    assert!(ShockSchedule {
        gammas: vec![],
        cycle: 10
    }
    .validate()
    .is_err());
}

proptest! {
    #[test]
    fn shocks_only_at_cycle_multiples(cycle in 2usize..15, t in 0usize..500) {
        let s = ShockSchedule { gammas: vec![1.5, 0.5, 0.25, 2.0], cycle };
        let g = s.gamma_at(t);
        if t > 0 && t % cycle == 0 {
            prop_assert!(g != 1.0);
        } else {
            prop_assert_eq!(g, 1.0);
        }
    }
}

#[test]
fn strict_floor_never_saturates() {
    let net = one_layer(
        ActivationSpec::leaky_relu(0.7),
        &[3.0, -40.0, 0.0],
        &[0.0, -1.0, 0.0],
    );
    let x = array![[1.0], [-2.0], [100.0]];
    for g in [0.25, 1.0, 2.0] {
        let s = sf_of(&net, &x, g);
        assert_eq!(s.network, 0.0);
    }
}

#[test]
fn sigmoid_dead_band() {
    let sig = ActivationSpec::new(ActivationKind::Sigmoid);
    let x = array![[1.0]];
    let all = one_layer(sig.clone(), &[8.0, -8.0, 9.0, -10.0], &[0.0; 4]);
    assert_eq!(sf_of(&all, &x, 1.0).network, 1.0);
    let mixed = one_layer(sig.clone(), &[8.0, -8.0, 9.0, 0.5], &[0.0; 4]);
    assert_eq!(sf_of(&mixed, &x, 1.0).network, 0.75);
    // The shock scales the pre-activation: γ = 0.5 brings 8 and 9 back inside the band.
    assert_eq!(sf_of(&mixed, &x, 0.5).network, 0.0);
    assert_eq!(sf_of(&mixed, &x, 0.5).per_layer, vec![0.0]);
}

#[test]
fn relu_shock_does_not_reduce_saturation() {
    let relu = ActivationSpec::new(ActivationKind::Relu);
    let net = one_layer(
        relu,
        &[1.0, -0.5, 0.2, 2.0, -1.0],
        &[-1.0, -0.5, -2.0, -0.1, -0.3],
    );
    let x = Array2::from_shape_fn((64, 1), |(i, _)| (i as f64 - 32.0) / 16.0);
    let before = sf_of(&net, &x, 1.0).network;
    let shocked = sf_of(&net, &x, 2.0).network;
    // Brute-force count of non-positive pre-activations.
    let mut dead = 0;
    for i in 0..64 {
        for u in 0..5 {
            let z = x[[i, 0]] * net.layers[0].weight[[0, u]] + net.layers[0].bias[u];
            if 2.0 * z <= 0.0 {
                dead += 1;
            }
        }
    }
    assert!(dead > 160, "pre-activations should be mostly negative");
    assert_eq!(shocked, dead as f64 / 320.0);
    assert!(shocked >= before);
}

fn config(activation: ActivationSpec, schedule: ShockSchedule, epochs: usize) -> StressConfig {
    StressConfig {
        activation,
        hidden: vec![16, 16],
        data: DataSource::blobs(&BlobConfig::new(4, 64, 8)),
        stream: StreamConfig {
            kind: StreamKind::PermutedInput,
            tasks: 1,
            batch_size: 32,
            epochs: 1,
            samples: 256,
            per_class: 0,
            hard_classes: 5,
            step_budget: None,
        },
        schedule,
        epochs,
        task_epochs: 10,
        optimizer: OptimizerKind::sgd(0.05),
        eval_size: 512,
    }
}

#[test]
fn unit_gamma_schedule_equals_no_shock_run() {
    let tanh = ActivationSpec::new(ActivationKind::Tanh);
    let identity = run_stress_experiment(
        &config(
            tanh.clone(),
            ShockSchedule {
                gammas: vec![1.0],
                cycle: 5,
            },
            20,
        ),
        3,
    )
    .unwrap();
    let none = run_stress_experiment(
        &config(
            tanh,
            ShockSchedule {
                gammas: vec![1.0],
                cycle: 100,
            },
            20,
        ),
        3,
    )
    .unwrap();
    assert_eq!(identity.records.len(), 20);
    for (a, b) in identity.records.iter().zip(&none.records) {
        assert_eq!(
            (a.sf_network, a.accuracy, &a.sf_layers),
            (b.sf_network, b.accuracy, &b.sf_layers)
        );
    }
}

#[test]
fn traces_are_deterministic_and_well_formed() {
    let cfg = config(
        ActivationSpec::new(ActivationKind::Sigmoid),
        ShockSchedule::default(),
        30,
    );
    let a = run_stress_experiment(&cfg, 9).unwrap();
    let b = run_stress_experiment(&cfg, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.aborted.is_none());
    for r in &a.records {
        assert!((0.0..=1.0).contains(&r.sf_network));
        assert!(r.sf_layers.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(r.shock, r.epoch > 0 && r.epoch % 10 == 0);
        assert_eq!(r.gamma != 1.0, r.shock);
    }
    let stats = recovery_stats(&a, 0.95).unwrap();
    assert_eq!(stats.iter().map(|s| s.epoch).collect::<Vec<_>>(), vec![10, 20]);
    assert!(stats.iter().all(|s| s.ausc >= 0.0));

    let leaky = run_stress_experiment(
        &config(ActivationSpec::leaky_relu(0.1), ShockSchedule::default(), 30),
        9,
    )
    .unwrap();
    assert!(leaky.records.iter().all(|r| r.sf_network == 0.0));
}

#[test]
fn divergence_truncates_trace() {
    let mut cfg = config(
        ActivationSpec::leaky_relu(1.0),
        ShockSchedule {
            gammas: vec![1e6],
            cycle: 2,
        },
        20,
    );
    cfg.optimizer = OptimizerKind::sgd(1e3);
    let trace = run_stress_experiment(&cfg, 1).unwrap();
    let reason = trace.aborted.as_deref().expect("run should diverge");
    assert!(trace.records.len() < 20);
    assert!(reason.contains("epoch"), "{reason}");
    let mut out = Vec::new();
    trace.write_csv(&mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("# aborted"));
}

#[test]
fn trace_csv_layout() {
    let trace = SaturationTrace {
        cycle: 10,
        records: vec![EpochRecord {
            epoch: 0,
            gamma: 1.0,
            shock: false,
            sf_network: 0.25,
            sf_layers: vec![0.5, 0.0],
            accuracy: 0.75,
        }],
        aborted: None,
    };
    let mut out = Vec::new();
    trace.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], TRACE_SCHEMA);
    assert_eq!(
        lines[1],
        "epoch,gamma,sf_network,sf_layer_0,sf_layer_1,accuracy,shock_flag"
    );
    assert_eq!(lines[2], "0,1,0.25,0.5,0,0.75,0");
}
