use proptest::prelude::*;

use emgshift::experiment::report::combo_means;
use emgshift::experiment::{bonferroni, differential_accuracy, make_splits, wilcoxon_rank_sum, GridPoint, Normalization, ResultRecord, SplitConfig, Strategy as Method};
use emgshift::geometry::{alignment_transform, rot, Frame3, Vec3};
use emgshift::kinematics::{forward_kinematics, inverse_kinematics, ArmGeometry, JointState};
use emgshift::labeling::{self, LabelThresholds};
use emgshift::nn::layers::{grl_backward, grl_forward, softmax_columns, Act, GrlConfig};
use emgshift::nn::{focal_loss, Alpha, FocalConfig};
use emgshift::signal::io::ElectrodePosition;
use emgshift::signal::swn::{normalize_window, rolling_normalize, window_stats};
use emgshift::synth::{ShiftModel, SynthConfig};

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swn_is_affine_invariant(x in signal(40..200), a in 0.01..100.0f64, b in -50.0..50.0f64, w in 5usize..40) {
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        for (p, q) in rolling_normalize(&x, w, 1e-8).iter().zip(rolling_normalize(&y, w, 1e-8)) {
            prop_assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn swn_block_output_is_standardized(x in signal(8..300)) {
        let (_, s) = window_stats(&x);
        prop_assume!(s > 1e-3);
        let (m, s) = window_stats(&normalize_window(&x, 1e-8));
        prop_assert!(m.abs() < 1e-10);
        prop_assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn label_runs_respect_minimum(omega in prop::collection::vec(-8.0..8.0f64, 20..300)) {
        let th = LabelThresholds::default();
        let out = labeling::label_from_omega(&omega, 20.0, &th).unwrap();
        let runs = out.runs();
        let min = th.min_run(20.0);
        if runs.iter().any(|r| r.len >= min) {
            prop_assert!(runs.iter().all(|r| r.len >= min));
        }
        prop_assert_eq!(labeling::step5_absorb_short(&out, &th).labels, out.labels.clone());
    }

    #[test]
    fn step1_is_sign_symmetric(omega in prop::collection::vec(-8.0..8.0f64, 1..200)) {
        let th = LabelThresholds::default();
        let pos = labeling::step1_threshold(&omega, &th, 20.0);
        let neg: Vec<f64> = omega.iter().map(|w| -w).collect();
        prop_assert_eq!(labeling::step1_threshold(&neg, &th, 20.0).labels, labeling::mirror(&pos.labels));
    }

    #[test]
    fn step2_is_idempotent(omega in prop::collection::vec(-8.0..8.0f64, 1..200)) {
        let th = LabelThresholds::default();
        let once = labeling::step2_drop_short(&labeling::step1_threshold(&omega, &th, 20.0), &th);
        prop_assert_eq!(labeling::step2_drop_short(&once, &th).labels, once.labels.clone());
    }

    #[test]
    fn softmax_columns_are_distributions(z in prop::collection::vec(-30.0..30.0f64, 12)) {
        let p = softmax_columns(&Act { rows: 3, frames: 4, len: 1, data: z });
        for j in 0..4 {
            let col: Vec<f64> = (0..3).map(|i| p.data[i * 4 + j]).collect();
            prop_assert!(col.iter().all(|v| *v >= 0.0));
            prop_assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn grl_is_identity_forward_and_negated_backward(g in prop::collection::vec(-5.0..5.0f64, 6), lambda in 0.0..3.0f64) {
        let x = Act { rows: 2, frames: 3, len: 1, data: g };
        prop_assert_eq!(grl_forward(&x), x.clone());
        let dx = grl_backward(&x, GrlConfig { lambda });
        for (a, b) in dx.data.iter().zip(&x.data) {
            prop_assert_eq!(a.to_bits(), (-lambda * b).to_bits());
        }
    }

    #[test]
    fn focal_without_focusing_is_cross_entropy(z in prop::collection::vec(-5.0..5.0f64, 15), labels in prop::collection::vec(0usize..3, 5)) {
        let p = softmax_columns(&Act { rows: 3, frames: 5, len: 1, data: z }).data;
        let cfg = FocalConfig { gamma: 0.0, alpha: Alpha::Fixed(vec![1.0; 3]) };
        let ce: f64 = labels.iter().enumerate().map(|(j, &l)| -p[l * 5 + j].ln()).sum();
        prop_assert!((focal_loss(&p, 3, &labels, &cfg).unwrap().loss - ce).abs() < 1e-12);
    }

    #[test]
    fn fk_ik_round_trip(s in -3.0..3.0f64, e in 0.05..3.0f64) {
        let arm = ArmGeometry::default();
        let w = forward_kinematics(JointState { theta_sld: s, theta_elb: e }, &arm);
        let back = forward_kinematics(inverse_kinematics(w, &arm).unwrap(), &arm);
        prop_assert!((back.x - w.x).hypot(back.y - w.y) < 1e-9);
    }

    #[test]
    fn alignment_sends_origin_to_zero(ax in -3.0..3.0f64, ay in -1.5..1.5f64, az in -3.0..3.0f64, o in prop::array::uniform3(-2.0..2.0f64)) {
        let r = rot(ax, ay, az);
        let origin = Vec3::new(o[0], o[1], o[2]);
        let frame = Frame3::new(r.column(0).into_owned(), r.column(1).into_owned(), r.column(2).into_owned(), origin);
        let tf = alignment_transform(&frame).unwrap();
        prop_assert!(tf.apply(&origin).norm() < 1e-12);
        prop_assert!(tf.orthonormality_error() < 1e-12);
    }

    #[test]
    fn rank_sum_p_is_symmetric_and_bounded(a in prop::collection::vec(-3.0..3.0f64, 1..12), b in prop::collection::vec(-3.0..3.0f64, 1..12)) {
        let ab = wilcoxon_rank_sum(&a, &b).unwrap();
        let ba = wilcoxon_rank_sum(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_never_exceeds_one(p in prop::collection::vec(0.0..1.0f64, 1..6), extra in 0usize..4) {
        let adj = bonferroni(&p, p.len() + extra).unwrap();
        for (a, q) in adj.iter().zip(&p) {
            prop_assert!(*a <= 1.0 && *a >= *q);
        }
    }

    #[test]
    fn splits_keep_test_blocks_apart(n in 10usize..30, seed in 0u64..1000, subject in 0usize..5) {
        let s = make_splits([n; 3], &SplitConfig::default(), seed, subject).unwrap();
        for pos in ElectrodePosition::ALL {
            let p = s.at(pos);
            for t in &p.test {
                prop_assert!(!p.train.contains(t) && !p.tune.contains(t) && !p.mix.contains(t));
            }
        }
    }

    #[test]
    fn shift_gains_stay_in_range(seed in 0u64..10_000) {
        let m = ShiftModel::for_subject(seed, &SynthConfig::default()).unwrap();
        prop_assert!(m.gains.iter().flatten().all(|g| (0.3..=2.0).contains(g)));
        for c in 0..12 {
            prop_assert!(m.gains[0][c] != m.gains[1][c] && m.gains[2][c] != m.gains[1][c]);
        }
    }
}

fn record(strategy: Method, train: ElectrodePosition, test: ElectrodePosition, acc: f64) -> ResultRecord {
    ResultRecord {
        subject: "subject_01".into(),
        strategy,
        norm: Normalization::None,
        train_pos: Some(train),
        test_pos: test,
        norm_win_ms: None,
        feat_win_ms: 600,
        accuracy: acc,
        baseline: f64::NAN,
        differential: f64::NAN,
        seed: 3,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn combination_mean_ignores_order(acc in prop::collection::vec(0.0..1.0f64, 9), shuffle in 0u64..1000) {
        use ElectrodePosition::*;
        let pos = [Left, Center, Right];
        let mut recs = Vec::new();
        let mut k = 0;
        for i in pos {
            for j in pos {
                let s = if i == j { Method::Baseline } else { Method::Vanilla };
                recs.push(record(s, i, j, acc[k]));
                k += 1;
            }
        }
        differential_accuracy(&mut recs).unwrap();
        for r in recs.iter().filter(|r| r.strategy == Method::Baseline) {
            prop_assert_eq!(r.differential, 0.0);
        }
        let grid = GridPoint { norm_win_ms: None, feat_win_ms: 600 };
        let a = combo_means(&recs, Method::Vanilla, Normalization::None, grid);
        let mut rotated = recs.clone();
        rotated.rotate_left((shuffle % 9) as usize);
        rotated.reverse();
        prop_assert_eq!(a, combo_means(&rotated, Method::Vanilla, Normalization::None, grid));
    }
}
