use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{array, Array2};
use plasticity::activation::{ActivationKind, ActivationSpec};
use plasticity::metrics::*;
use plasticity::net::{Network, NetworkSpec};
use plasticity::seed;
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

// ---------- accuracy matrix / online accuracy ----------

#[test]
fn acc_and_bwt_examples() {
    let a = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.5, 0.7]]).unwrap();
    assert_abs_diff_eq!(a.acc_t(2).unwrap(), 0.6, epsilon = 1e-15);
    let b = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.4, 0.8]]).unwrap();
    assert_abs_diff_eq!(b.bwt_t(2).unwrap(), -0.5, epsilon = 1e-15);
    let ones = AccuracyMatrix::from_rows((1..=4).map(|t| vec![1.0; t]).collect()).unwrap();
    assert_eq!(ones.acc_t(4).unwrap(), 1.0);
    assert_eq!(ones.bwt_t(4).unwrap(), 0.0);
    assert!(b.bwt_t(1).is_err());
    assert!(b.acc_t(3).is_err());
    assert!(AccuracyMatrix::from_rows(vec![vec![1.2]]).is_err());
    assert!(AccuracyMatrix::from_rows(vec![vec![0.5, 0.5]]).is_err());
}

#[test]
fn bwt_matches_direct_sum_on_random_matrix() {
    let mut rng = seed::rng(11, &[1]);
    let rows: Vec<Vec<f64>> = (1..=4)
        .map(|t| (0..t).map(|_| rng.random::<f64>()).collect())
        .collect();
    let a = AccuracyMatrix::from_rows(rows.clone()).unwrap();
    let direct = ((rows[3][0] - rows[0][0]) + (rows[3][1] - rows[1][1]) + (rows[3][2] - rows[2][2])) / 3.0;
    assert_abs_diff_eq!(a.bwt_t(4).unwrap(), direct, epsilon = 1e-15);
    let acc = (rows[3][0] + rows[3][1] + rows[3][2] + rows[3][3]) / 4.0;
    assert_abs_diff_eq!(a.acc_t(4).unwrap(), acc, epsilon = 1e-15);
}

#[test]
fn taoa_weighting() {
    let mut log = OnlineAccuracyLog::new();
    log.push_task(vec![0.0, 1.0]).unwrap();
    log.push_task(vec![1.0; 4]).unwrap();
    assert_eq!(log.aoa(0).unwrap(), 0.5);
    assert_eq!(log.aoa(1).unwrap(), 1.0);
    assert_abs_diff_eq!(log.taoa(2).unwrap(), 5.0 / 6.0, epsilon = 1e-15);

    let mut equal = OnlineAccuracyLog::new();
    for t in 0..3 {
        equal.push_task(vec![0.1 * t as f64, 0.2, 0.3]).unwrap();
    }
    let aoas = equal.aoa_sequence().unwrap();
    assert_abs_diff_eq!(equal.taoa(3).unwrap(), mean(&aoas), epsilon = 1e-15);
    let mut empty = OnlineAccuracyLog::new();
    empty.push_task(vec![]).unwrap();
    assert!(empty.aoa(0).is_err());
    assert!(empty.taoa(1).is_err());
    assert!(empty.push_task(vec![1.5]).is_err());
}

#[test]
fn mann_kendall_sign_statistic() {
    assert_eq!(mann_kendall_s(&[1.0, 2.0, 3.0, 4.0]), 6);
    assert_eq!(mann_kendall_s(&[4.0, 3.0, 2.0, 1.0]), -6);
    assert_eq!(mann_kendall_s(&[1.0, 1.0, 1.0]), 0);
}

proptest! {
    #[test]
    fn accuracies_match_direct_sums(values in proptest::collection::vec(0.0f64..=1.0, 15)) {
        let rows: Vec<Vec<f64>> = (1..=5).map(|t| values[t * (t - 1) / 2..t * (t + 1) / 2].to_vec()).collect();
        let a = AccuracyMatrix::from_rows(rows.clone()).unwrap();
        for t in 1..=5 {
            let acc: f64 = rows[t - 1].iter().sum::<f64>() / t as f64;
            prop_assert!((a.acc_t(t).unwrap() - acc).abs() < 1e-12);
            if t >= 2 {
                let bwt: f64 = (0..t - 1).map(|i| rows[t - 1][i] - rows[i][i]).sum::<f64>() / (t - 1) as f64;
                prop_assert!((a.bwt_t(t).unwrap() - bwt).abs() < 1e-12);
            }
        }
    }
}

// ---------- recovery statistics ----------

#[test]
fn recovery_hand_trace() {
    let sf = [0.1, 0.1, 0.5, 0.3, 0.2, 0.1];
    let acc = [0.8, 0.8, 0.4, 0.7, 0.8, 0.8];
    let gammas = [1.0, 1.0, 2.0, 1.0, 1.0, 1.0];
    let ev = recovery_events(&sf, &acc, &gammas, &[2], 4, 0.95).unwrap();
    assert_eq!(ev.len(), 1);
    let e = &ev[0];
    assert_eq!(e.baseline_sf, 0.1);
    assert_eq!(e.peak_sf, 0.5);
    assert_eq!(e.post_shock_sf, Some(0.3));
    assert_eq!(e.sf_half_recovery, Some(1));
    assert_abs_diff_eq!(e.ausc, 0.7, epsilon = 1e-12);
    assert_eq!(e.tau, Some(2));
    assert!(e.perf_recovered);
    assert_eq!(e.gamma, 2.0);
}

#[test]
fn recovery_flat_and_stuck() {
    let flat = vec![0.0; 30];
    let acc = vec![0.9; 30];
    let gammas = vec![1.0; 30];
    let ev = recovery_events(&flat, &acc, &gammas, &[10, 20], 10, 0.95).unwrap();
    for e in &ev {
        assert_eq!(e.ausc, 0.0);
        assert_eq!(e.peak_sf, e.baseline_sf);
        assert_eq!(e.sf_half_recovery, Some(1));
    }

    let mut stuck = vec![0.1; 30];
    stuck[10..20].iter_mut().for_each(|v| *v = 0.5);
    let ev = recovery_events(&stuck, &acc, &gammas, &[10], 10, 0.95).unwrap();
    assert!(!ev[0].sf_recovered);
    assert_abs_diff_eq!(ev[0].ausc, 0.4 * ev[0].window as f64, epsilon = 1e-12);

    let mut dropped = acc.clone();
    dropped[10..20].iter_mut().for_each(|v| *v = 0.5);
    let ev = recovery_events(&flat, &dropped, &gammas, &[10], 10, 0.95).unwrap();
    assert_eq!(ev[0].tau, None);
    assert!(!ev[0].perf_recovered);
}

#[test]
fn recovery_skips_degenerate_shocks() {
    let sf = vec![0.2; 12];
    let acc = vec![0.5; 12];
    let g = vec![1.0; 12];
    let ev = recovery_events(&sf, &acc, &g, &[0, 5, 11], 10, 0.95).unwrap();
    assert_eq!(ev.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![5]);
    assert_eq!(ev[0].window, 7);
}

proptest! {
    #[test]
    fn ausc_is_additive(sf in proptest::collection::vec(0.0f64..=1.0, 12), split in 1usize..10) {
        let baseline = sf[0];
        let window = &sf[1..11];
        let acc = vec![0.5; sf.len()];
        let g = vec![1.0; sf.len()];
        let whole = recovery_events(&sf, &acc, &g, &[1], 10, 0.95).unwrap()[0].ausc;
        let part = |w: &[f64]| w.iter().map(|v| (v - baseline).max(0.0)).sum::<f64>();
        let split_sum = part(&window[..split]) + part(&window[split..]);
        prop_assert!((whole - split_sum).abs() < 1e-12);
        prop_assert!(whole >= 0.0);
    }
}

// ---------- effective rank ----------

#[test]
fn effective_rank_examples() {
    let rank1 = Array2::from_shape_fn((5, 4), |(i, j)| (i + 1) as f64 * (j + 1) as f64);
    assert_eq!(effective_rank(rank1.view(), 0.99).unwrap(), 1);
    let mut orth = Array2::<f64>::zeros((6, 4));
    for j in 0..4 {
        orth[[j, j]] = 3.0;
    }
    assert_eq!(effective_rank(orth.view(), 0.99).unwrap(), 4);
    assert_eq!(
        effective_rank(Array2::<f64>::zeros((3, 3)).view(), 0.99).unwrap(),
        0
    );
    assert!(effective_rank(array![[f64::NAN]].view(), 0.99).is_err());
}

fn oracle_rank(g: &Array2<f64>, tau: f64) -> usize {
    let m = DMatrix::from_row_slice(g.nrows(), g.ncols(), g.as_slice().unwrap());
    let gram = m.transpose() * &m;
    let mut eig: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eig.iter().sum();
    let mut acc = 0.0;
    for (k, v) in eig.iter().enumerate() {
        acc += v;
        if acc / total >= tau {
            return k + 1;
        }
    }
    eig.len()
}

#[test]
fn effective_rank_matches_eigendecomposition() {
    for s in 0..20 {
        let mut rng = seed::rng(s, &[2]);
        // Decaying column scales give a spread spectrum.
        let g = Array2::from_shape_fn((20, 6), |(_, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * 0.5f64.powi(j as i32)
        });
        for tau in [0.5, 0.9, 0.99] {
            assert_eq!(
                effective_rank(g.view(), tau).unwrap(),
                oracle_rank(&g, tau),
                "seed {s} tau {tau}"
            );
        }
    }
}

proptest! {
    #[test]
    fn effective_rank_invariances(seed_value in 0u64..1000, scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let mut rng = seed::rng(seed_value, &[3]);
        let g = Array2::from_shape_fn((10, 5), |(_, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * 0.4f64.powi(j as i32)
        });
        let base = effective_rank(g.view(), 0.9).unwrap();
        let scaled = g.mapv(|v| v * scale);
        prop_assert_eq!(effective_rank(scaled.view(), 0.9).unwrap(), base);
        let perm = [3usize, 0, 4, 1, 2];
        let permuted = Array2::from_shape_fn((10, 5), |(i, j)| g[[i, perm[j]]]);
        prop_assert_eq!(effective_rank(permuted.view(), 0.9).unwrap(), base);
    }
}

// ---------- power iteration ----------

fn matvec(m: &DMatrix<f64>) -> impl FnMut(&[f64]) -> plasticity::Result<Vec<f64>> + '_ {
    move |v| {
        let x = nalgebra::DVector::from_column_slice(v);
        Ok((m * x).iter().copied().collect())
    }
}

#[test]
fn lambda_max_diagonal_examples() {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
    let r = lambda_max(matvec(&d), 2, 100, 1e-12, 0).unwrap();
    assert!(r.converged);
    assert_abs_diff_eq!(r.lambda, 2.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r.vector[0].abs(), 1.0, epsilon = 1e-4);

    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 1.0]));
    let r = lambda_max(matvec(&d), 2, 200, 1e-12, 0).unwrap();
    assert_abs_diff_eq!(r.lambda, -3.0, epsilon = 1e-9);

    let z = DMatrix::<f64>::zeros(3, 3);
    let r = lambda_max(matvec(&z), 3, 100, 1e-6, 0).unwrap();
    assert!(r.zero_operator);
    assert_eq!(r.lambda, 0.0);
}

#[test]
fn lambda_max_matches_dense_eigensolver() {
    let mut checked = 0;
    for s in 0..40u64 {
        let mut rng = seed::rng(s, &[4]);
        let a = DMatrix::from_fn(6, 6, |_, _| StandardNormal.sample(&mut rng));
        let sym: DMatrix<f64> = (&a + a.transpose()) * 0.5;
        let mut eig: Vec<f64> = SymmetricEigen::new(sym.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|x, y| y.abs().total_cmp(&x.abs()));
        // Relative gap: plain power iteration converges like |λ2/λ1|^k.
        if (eig[0].abs() - eig[1].abs()) / eig[0].abs() < 0.1 {
            continue;
        }
        let r = lambda_max(matvec(&sym), 6, 200, 1e-14, s).unwrap();
        assert!(
            (r.lambda - eig[0]).abs() < 1e-8,
            "seed {s}: {} vs {}",
            r.lambda,
            eig[0]
        );
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn network_lambda_max_matches_brute_force_hessian() {
    let spec = NetworkSpec::mlp(2, &[3], 2, ActivationSpec::new(ActivationKind::Tanh));
    let net = Network::init(&spec, 5).unwrap();
    let mut rng = seed::rng(5, &[5]);
    let x = Array2::from_shape_simple_fn((8, 2), || StandardNormal.sample(&mut rng));
    let y: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let dim = net.num_params();
    let h = 1e-4;
    let theta = net.flat_params();
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    let mut probe = net.clone();
    for j in 0..dim {
        let mut plus = theta.clone();
        plus[j] += h;
        probe.set_flat_params(&plus).unwrap();
        let (_, gp) = probe.loss_and_flat_gradient(x.view(), &y).unwrap();
        let mut minus = theta.clone();
        minus[j] -= h;
        probe.set_flat_params(&minus).unwrap();
        let (_, gm) = probe.loss_and_flat_gradient(x.view(), &y).unwrap();
        for i in 0..dim {
            hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let dominant = eig
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap();
    let r = network_lambda_max(&net, x.view(), &y, 2000, 1e-12, 3).unwrap();
    assert!(
        ((r.lambda - dominant) / dominant).abs() < 1e-3,
        "{} vs {dominant}",
        r.lambda
    );
}

// ---------- return-log scores ----------

fn record(run: &str, env: &str, cycle: u32, phase: Phase, i: u64, ret: f64) -> ReturnRecord {
    ReturnRecord {
        run: run.into(),
        environment: env.into(),
        cycle,
        phase,
        episode_index: i,
        ret,
        timesteps: Some(100.0),
    }
}

#[test]
fn plasticity_score_examples() {
    let envs = ["a", "b", "c", "d"];
    let constant: Vec<_> = envs
        .iter()
        .flat_map(|e| (0..10).map(move |i| record("r", e, 2, Phase::Train, i, 5.0)))
        .collect();
    let log = ReturnLog::from_records(constant).unwrap();
    assert_eq!(plasticity_score(&log, "r", 0.15).unwrap(), 5.0);

    let means = [1520.0, 20.0, 276.0, 152.0];
    let recs: Vec<_> = envs
        .iter()
        .zip(means)
        .flat_map(|(e, m)| (0..10).map(move |i| record("r", e, 1, Phase::Train, i, m)))
        .collect();
    let log = ReturnLog::from_records(recs).unwrap();
    assert_eq!(plasticity_score(&log, "r", 0.15).unwrap(), 214.0);

    // n = 10, p = 0.15: only the last two episodes count.
    let recs: Vec<_> = (0..10)
        .map(|i| record("r", "a", 1, Phase::Train, i, if i >= 8 { 3.0 } else { -100.0 }))
        .collect();
    let log = ReturnLog::from_records(recs).unwrap();
    assert_eq!(plasticity_score(&log, "r", 0.15).unwrap(), 3.0);
    assert_eq!(
        plasticity_score_with(&log, "r", 0.15, WindowRule::Timesteps).unwrap(),
        3.0
    );
}

#[test]
fn plasticity_score_reports_missing_environment() {
    let recs = vec![
        record("r", "a", 2, Phase::Train, 0, 1.0),
        record("s", "b", 2, Phase::Train, 0, 1.0),
    ];
    let log = ReturnLog::from_records(recs).unwrap();
    let err = plasticity_score(&log, "r", 0.15).unwrap_err().to_string();
    assert!(err.contains('b'), "{err}");
}

fn window_log(rets: &[f64], order: &[usize]) -> ReturnLog {
    let recs: Vec<_> = ["x", "y"]
        .iter()
        .enumerate()
        .flat_map(|(k, e)| {
            order
                .iter()
                .enumerate()
                .map(move |(slot, &src)| record("r", e, 1, Phase::Train, slot as u64, rets[src] + k as f64))
                .collect::<Vec<_>>()
        })
        .collect();
    ReturnLog::from_records(recs).unwrap()
}

proptest! {
    #[test]
    fn plasticity_score_order_invariant(rets in proptest::collection::vec(-100.0f64..100.0, 20), rot in 0usize..3) {
        // n = 20, p = 0.15: the final window is episodes 17..20.
        let identity: Vec<usize> = (0..20).collect();
        let rotated: Vec<usize> = (0..20).map(|i| if i >= 17 { 17 + (i - 17 + rot) % 3 } else { i }).collect();
        let a = plasticity_score(&window_log(&rets, &identity), "r", 0.15).unwrap();
        let b = plasticity_score(&window_log(&rets, &rotated), "r", 0.15).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn gap_examples() {
    let mut recs = Vec::new();
    for c in [1, 3] {
        for i in 0..10 {
            recs.push(record("r", "e", c, Phase::Train, i, 7.0));
            recs.push(record("r", "e", c, Phase::Test, i, 7.0));
        }
    }
    let log = ReturnLog::from_records(recs).unwrap();
    assert_eq!(gap_delta(&log, "r", "e").unwrap(), 0.0);

    let mut recs = Vec::new();
    for (c, test) in [(1, 10.0), (3, 16.0)] {
        for i in 0..10 {
            recs.push(record("r", "e", c, Phase::Train, i, 20.0));
            recs.push(record("r", "e", c, Phase::Test, i, test));
        }
    }
    let log = ReturnLog::from_records(recs).unwrap();
    assert_eq!(generalization_gap(&log, "r", "e", 1).unwrap(), 10.0);
    assert_eq!(generalization_gap(&log, "r", "e", 3).unwrap(), 4.0);
    assert_eq!(gap_delta(&log, "r", "e").unwrap(), -6.0);

    let only_one: Vec<_> = (0..3)
        .map(|i| record("r", "e", 1, Phase::Train, i, 1.0))
        .collect();
    let log = ReturnLog::from_records(only_one).unwrap();
    assert!(gap_delta(&log, "r", "e").is_err());
}

/// Per-environment deltas of the reference generalization-gap table,
/// with its reported mean and median columns.
const GAP_TABLE: [(&str, [f64; 4], f64, f64); 15] = [
    ("ReLU", [124.81, -1249177.00, 183.00, -287.15], -312289.00, -81.17),
    ("Leaky-ReLU", [65.64, -13959.34, -56.82, -0.48], -3487.75, -28.65),
    ("Sigmoid", [1521.45, 18.92, 276.48, 152.14], 492.25, 214.31),
    ("Tanh", [-782.69, 48.28, -388.85, 91.95], -257.83, -170.29),
    ("RReLU", [527.09, -19274.62, -26.83, 21.89], -4688.12, -2.47),
    ("PReLU", [839.60, 128132.00, 94.17, -22.35], 32260.85, 466.88),
    ("Swish", [627.24, -127118.70, 1035.22, 20.88], -31358.83, 324.06),
    ("GeLU", [317.71, -9766168.00, 258.21, -32.29], -2441406.00, 112.96),
    ("eLU", [103.83, -80.15, -207.62, 14.92], -42.25, -32.61),
    ("CeLU", [-341.13, -49.31, -281.51, 3.56], -167.10, -165.41),
    ("SeLU", [-839.65, 15.91, -339.88, 51.90], -277.93, -161.99),
    ("CReLU", [367.50, -65.10, -5.26, 1.65], 74.70, -1.81),
    ("Rational", [550.81, 9852.05, 270.39, 54.72], 2681.99, 410.60),
    (
        "Smooth-Leaky",
        [621.48, -666714.76, -210.37, -8.04],
        -166577.9,
        -109.20,
    ),
    (
        "Rand. Smooth-Leaky",
        [103.80, -1236645.00, 563.09, 19.22],
        -308989.80,
        61.51,
    ),
];

#[test]
fn gap_summary_reproduces_reference_medians() {
    for (name, deltas, _, med) in GAP_TABLE {
        let (m, _) = gap_summary(&deltas).unwrap();
        // Table entries are rounded to two decimals.
        assert!((m - med).abs() <= 0.0051, "{name}: median {m} vs {med}");
    }
}

#[test]
fn gap_summary_reproduces_reference_means() {
    for (name, deltas, mean_col, _) in GAP_TABLE {
        let (_, m) = gap_summary(&deltas).unwrap();
        // Large means are printed with reduced precision.
        let tol = 0.0051f64.max(mean_col.abs() * 1e-6);
        assert!((m - mean_col).abs() <= tol, "{name}: mean {m} vs {mean_col}");
    }
}

#[test]
fn gap_median_ignores_environment_order() {
    let d = [1521.45, 18.92, 276.48, 152.14];
    let r = [152.14, 276.48, 1521.45, 18.92];
    assert_eq!(gap_summary(&d).unwrap().0, gap_summary(&r).unwrap().0);
}

#[test]
fn return_csv_schema() {
    let csv = "run,environment,cycle,phase,episode_index,return\nr,e,1,train,0,1.5\nr,e,1,test,0,1.0\n";
    let log = ReturnLog::from_csv(csv.as_bytes(), "inline").unwrap();
    assert_eq!(log.series("r", "e", 1, Phase::Train).unwrap()[0].ret, 1.5);

    let bad = "run,environment,cycle,phase,episode_index,return\nr,e,1,train,0,1.5\nr,e,1,sideways,1,1.0\n";
    let err = ReturnLog::from_csv(bad.as_bytes(), "inline")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 3"), "{err}");
    let missing = "run,environment,cycle,phase,return\n";
    assert!(ReturnLog::from_csv(missing.as_bytes(), "inline")
        .unwrap_err()
        .to_string()
        .contains("episode_index"));
    let nonfinite = "run,environment,cycle,phase,episode_index,return\nr,e,1,train,0,NaN\n";
    assert!(ReturnLog::from_csv(nonfinite.as_bytes(), "inline").is_err());
}

// ---------- statistics ----------

const X: [f64; 12] = [1.2, 2.3, 3.1, 4.8, 5.0, 6.7, 7.1, 8.4, 9.9, 10.2, 11.5, 12.8];
const Y: [f64; 12] = [2.1, 1.9, 3.7, 3.5, 5.9, 5.1, 7.8, 6.6, 9.4, 8.1, 11.9, 10.7];
const Y2: [f64; 12] = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0, 5.5, 3.5, 5.8, 9.7];

#[test]
fn pearson_trivial_cases() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let (r, p) = pearson_r(&x, &x.map(|v| 2.0 * v + 1.0)).unwrap();
    assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
    assert!(p < 1e-12);
    let (r, _) = pearson_r(&x, &x.map(|v| -v)).unwrap();
    assert_abs_diff_eq!(r, -1.0, epsilon = 1e-15);
    assert!(pearson_r(&x, &[1.0; 4]).is_err());
    assert!(pearson_r(&x[..2], &x[..2]).is_err());
}

#[test]
fn pearson_golden_values() {
    // Reference values from an arbitrary-precision computation.
    let (r, p) = pearson_r(&X, &Y).unwrap();
    assert_abs_diff_eq!(r, 0.949_247_403_197_052_6, epsilon = 1e-9);
    assert!(((p - 2.434_707_566_207_855_8e-6) / p).abs() < 1e-9, "p = {p:e}");
    let (r, p) = pearson_r(&X, &Y2).unwrap();
    assert_abs_diff_eq!(r, 0.609_860_743_306_518_7, epsilon = 1e-9);
    assert_abs_diff_eq!(p, 0.035_240_187_499_403_714, epsilon = 1e-9);
}

#[test]
fn bootstrap_examples() {
    let ci = bootstrap_ci(&[3.0; 5], 0.95, 1000, 1).unwrap();
    assert_eq!((ci.lo, ci.hi), (3.0, 3.0));
    assert_eq!(half_width(2.0, 1.0, 5.0), 3.0);
    assert!(bootstrap_ci(&[1.0], 0.95, 100, 0).is_err());
    let a = bootstrap_ci(&X, 0.95, 2000, 9).unwrap();
    let b = bootstrap_ci(&X, 0.95, 2000, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.lo <= a.mean && a.mean <= a.hi);
}

#[test]
fn bootstrap_coverage() {
    let normal = Normal::new(1.0, 2.0).unwrap();
    let trials = 500;
    let mut covered = 0;
    for t in 0..trials {
        let mut rng = seed::rng(t, &[77]);
        let s: Vec<f64> = (0..30).map(|_| normal.sample(&mut rng)).collect();
        let ci = bootstrap_ci(&s, 0.95, 2000, t).unwrap();
        if ci.lo <= 1.0 && 1.0 <= ci.hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    assert!(rate >= 0.93, "coverage {rate}");
}

#[test]
fn median_even_count() {
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
    assert_eq!(median(&[5.0]).unwrap(), 5.0);
    assert!(median(&[]).is_err());
}
