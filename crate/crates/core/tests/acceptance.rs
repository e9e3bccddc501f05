//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always show up in
//! `cargo test` output. Criteria 9 and 10 train several hundred small models
//! and dominate the runtime. Failed criteria are reported but only fail the
//! process with `EMGSHIFT_STRICT=1`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use emgshift::config::Config;
use emgshift::experiment::report::results_csv;
use emgshift::experiment::{bonferroni, run_experiment, wilcoxon_rank_sum, Dataset, ExperimentOutput, GridProfile, Normalization, ResultRecord, Strategy};
use emgshift::geometry::{alignment_transform, construction_discrepancy, Frame3, Mat3, Vec3, ARROW_LENGTH_M};
use emgshift::kinematics::{forward_kinematics, generate_task, inverse_kinematics, min_jerk_coeffs, ArmGeometry, Boundary, MinJerkSegment, TaskKind, WristTarget};
use emgshift::labeling::{self, LabelThresholds, LABEL_RATE_HZ};
use emgshift::nn::gradcheck::{grad_check, TinySetup};
use emgshift::nn::layers::{grl_backward, grl_forward, Act, GrlConfig};
use emgshift::nn::{focal_loss, Alpha, FocalConfig};
use emgshift::signal::swn::swn_block_at;
use emgshift::signal::{design_bandpass, filter_stream, swn, FilterSpec, SignalBuffer, SwnConfig};
use emgshift::synth::SynthConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + tag)
}

fn naive_mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let (mut worst_mu, mut worst_sd) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let len = r.random_range(10..200);
        let scale = 10f64.powf(r.random_range(-2.0..2.0));
        let off = r.random_range(-50.0..50.0);
        let x: Vec<f64> = (0..len).map(|_| off + scale * r.sample::<f64, _>(StandardNormal)).collect();
        let buf = SignalBuffer::from_channels(vec![x], 1000.0).unwrap();
        let out = swn(&buf, &SwnConfig::block(len as u32)).unwrap();
        let (m, s) = naive_mean_std(out.channel(0));
        worst_mu = worst_mu.max(m.abs());
        worst_sd = worst_sd.max((s - 1.0).abs());
    }
    let mut mismatches = 0;
    for _ in 0..20 {
        let win = r.random_range(5..60);
        let x: Vec<f64> = (0..300).map(|_| r.random_range(-3.0..3.0)).collect();
        let buf = SignalBuffer::from_channels(vec![x], 1000.0).unwrap();
        let rolled = swn(&buf, &SwnConfig::rolling(win as u32)).unwrap();
        for (k, v) in rolled.channel(0).iter().enumerate() {
            let block = swn_block_at(&buf, k + win - 1, &SwnConfig::block(win as u32)).unwrap();
            if v.to_bits() != block.channel(0)[win - 1].to_bits() {
                mismatches += 1;
            }
        }
    }
    outcome(
        worst_mu < 1e-10 && worst_sd < 1e-10 && mismatches == 0,
        format!("max|mu| {worst_mu:.1e} < 1e-10, max|sd-1| {worst_sd:.1e} < 1e-10, rolling/block mismatches {mismatches}"),
    )
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let a = 10f64.powf(r.random_range(-2.0..2.0));
        let b = r.random_range(-20.0..20.0);
        let x: Vec<f64> = (0..400).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let cfg = SwnConfig::rolling(100);
        let zx = swn(&SignalBuffer::from_channels(vec![x], 1000.0).unwrap(), &cfg).unwrap();
        let zy = swn(&SignalBuffer::from_channels(vec![y], 1000.0).unwrap(), &cfg).unwrap();
        for (p, q) in zx.channel(0).iter().zip(zy.channel(0)) {
            worst = worst.max((p - q).abs());
        }
    }
    outcome(worst < 1e-9, format!("max |swn(ax+b) - swn(x)| {worst:.1e} < 1e-9 over 100 (a, b)"))
}

/// Transfer function of the cascade expanded into one numerator/denominator pair.
fn expanded_gain(sections: &[([f64; 3], [f64; 3])], f: f64, fs: f64) -> f64 {
    let mul = |p: &[f64], q: &[f64; 3]| {
        let mut out = vec![0.0; p.len() + 2];
        for (i, a) in p.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    };
    let (mut num, mut den) = (vec![1.0], vec![1.0]);
    for (b, a) in sections {
        num = mul(&num, b);
        den = mul(&den, a);
    }
    let w = 2.0 * PI * f / fs;
    let eval = |c: &[f64]| c.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (k, v)| acc + v * Complex64::from_polar(1.0, -w * k as f64));
    (eval(&num) / eval(&den)).norm()
}

/// Steady-state amplitude of a filtered unit sine.
fn measured_gain(sos: &emgshift::signal::SosCascade, f: f64, fs: f64) -> f64 {
    let n = (fs * 4.0) as usize;
    let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
    let y = filter_stream(sos, &SignalBuffer::from_channels(vec![x], fs).unwrap()).unwrap();
    let tail = &y.channel(0)[n / 2..];
    (2.0 * tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt()
}

fn criterion_3() -> Outcome {
    let fs = 2000.0;
    let sos = design_bandpass(&FilterSpec::default(), fs).unwrap();
    let secs: Vec<([f64; 3], [f64; 3])> = sos.sections.iter().map(|s| (s.b, s.a)).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [40.0, 200.0] {
        let g = expanded_gain(&secs, f, fs);
        let dev = (sos.gain(f) / FRAC_1_SQRT_2 - 1.0).abs();
        // the expanded 12th-order polynomial is ill-conditioned near the low corner
        let agree = (g / sos.gain(f) - 1.0).abs() < 1e-5 && (measured_gain(&sos, f, fs) / sos.gain(f) - 1.0).abs() < 0.01;
        pass &= dev < 0.02 && agree;
        parts.push(format!("|H({f})| dev {:.2}%", dev * 100.0));
    }
    for f in [10.0, 400.0] {
        let db = 20.0 * expanded_gain(&secs, f, fs).log10();
        pass &= db <= -20.0 && 20.0 * sos.gain(f).log10() <= -20.0;
        parts.push(format!("{f} Hz {db:.1} dB"));
    }
    outcome(pass, format!("{} (tol 2%, <= -20 dB; expanded polynomial and sine response agree)", parts.join(", ")))
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let arm = ArmGeometry::default();
    let mut fkik = 0.0f64;
    for _ in 0..10_000 {
        let rad = r.random_range(0.01..arm.reach() - 1e-3);
        let phi = r.random_range(-PI..PI);
        let t = WristTarget { x: rad * phi.cos(), y: rad * phi.sin() };
        let b = forward_kinematics(inverse_kinematics(t, &arm).unwrap(), &arm);
        fkik = fkik.max((b.x - t.x).hypot(b.y - t.y));
    }
    let mut bound = 0.0f64;
    for _ in 0..1000 {
        let t0 = r.random_range(-5.0..5.0);
        let t1 = t0 + r.random_range(0.2..3.0);
        let bnd = |r: &mut ChaCha8Rng| Boundary { pos: r.random_range(-2.0..2.0), vel: r.random_range(-3.0..3.0), acc: r.random_range(-10.0..10.0) };
        let seg = MinJerkSegment { t0, t1, start: bnd(&mut r), end: bnd(&mut r) };
        let q = min_jerk_coeffs(&seg).unwrap();
        for (t, b) in [(t0, seg.start), (t1, seg.end)] {
            bound = bound.max((q.pos(t) - b.pos).abs()).max((q.vel(t) - b.vel).abs()).max((q.acc(t) - b.acc).abs());
        }
    }
    let q = min_jerk_coeffs(&MinJerkSegment::rest_to_rest(0.0, 1.0, 0.0, 1.0)).unwrap();
    let quintic = (0..=1000)
        .map(|i| {
            let tau = i as f64 / 1000.0;
            (q.pos(tau) - (10.0 * tau.powi(3) - 15.0 * tau.powi(4) + 6.0 * tau.powi(5))).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        fkik < 1e-9 && bound < 1e-9 && quintic < 1e-12,
        format!("FK(IK) {fkik:.1e} m < 1e-9, boundary {bound:.1e} < 1e-9, quintic {quintic:.1e} < 1e-12"),
    )
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let th = LabelThresholds::default();
    let min = (th.w_t_ms / 1000.0 * LABEL_RATE_HZ).round() as usize;
    let (mut short, mut idem, mut sym) = (0, 0, 0);
    for _ in 0..100 {
        let kind = TaskKind::ALL[r.random_range(0..5)];
        let theta = generate_task(kind, r.random()).unwrap().sample(LABEL_RATE_HZ).unwrap().elbow_angles();
        let out = labeling::label_pipeline(&theta, LABEL_RATE_HZ, &th).unwrap();
        let mut runs = Vec::new();
        let mut start = 0;
        for i in 1..=out.labels.len() {
            if i == out.labels.len() || out.labels[i] != out.labels[start] {
                runs.push(i - start);
                start = i;
            }
        }
        if runs.iter().any(|&l| l >= min) {
            short += runs.iter().filter(|&&l| l < min).count();
        }
        let omega = labeling::angular_velocity(&theta, LABEL_RATE_HZ).unwrap();
        let s1 = labeling::step1_threshold(&omega, &th, LABEL_RATE_HZ);
        let s2 = labeling::step2_drop_short(&s1, &th);
        idem += usize::from(labeling::step2_drop_short(&s2, &th).labels != s2.labels);
        idem += usize::from(labeling::step5_absorb_short(&out, &th).labels != out.labels);
        let neg: Vec<f64> = omega.iter().map(|w| -w).collect();
        let flipped = labeling::step1_threshold(&neg, &th, LABEL_RATE_HZ);
        sym += usize::from(flipped.labels != labeling::mirror(&s1.labels));
    }
    outcome(
        short == 0 && idem == 0 && sym == 0,
        format!("100 trials: short runs {short}, non-idempotent {idem}, sign asymmetries {sym}"),
    )
}

fn random_rotation(r: &mut ChaCha8Rng) -> Mat3 {
    let q: [f64; 4] = std::array::from_fn(|_| r.sample(StandardNormal));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
    )
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let (mut align, mut disc, mut used) = (0.0f64, 0.0f64, 0);
    for _ in 0..1000 {
        let rot = random_rotation(&mut r);
        let origin = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(0.5..3.0));
        let arrows: [Vec3; 3] = std::array::from_fn(|i| rot.column(i) * ARROW_LENGTH_M);
        let frame = Frame3::new(arrows[0], arrows[1], arrows[2], origin);
        let tf = alignment_transform(&frame).unwrap();
        for (i, a) in arrows.iter().enumerate() {
            let mapped = tf.rotation * (origin + a) + tf.translation;
            let mut e = Vec3::zeros();
            e[i] = ARROW_LENGTH_M;
            align = align.max((mapped - e).abs().max());
        }
        align = align.max((tf.rotation * origin + tf.translation).abs().max());
        // the x step's atan2 is ill-conditioned when the x arrow is near the y axis
        if rot[(0, 0)].hypot(rot[(2, 0)]) > 0.1 {
            used += 1;
            disc = disc.max(construction_discrepancy(&frame).unwrap());
        }
    }
    outcome(
        align < 1e-9 && disc < 1e-6,
        format!("alignment {align:.1e} < 1e-9 over 1000 rotations, sequential vs transpose {disc:.1e} < 1e-6 ({used} off-branch)"),
    )
}

fn criterion_7() -> Outcome {
    let g = grad_check(&TinySetup::default()).unwrap();
    let max = g.max_rel_error();
    let cfg = FocalConfig { gamma: 2.0, alpha: Alpha::Fixed(vec![1.0, 1.0]) };
    let hand = focal_loss(&[0.5, 0.5], 2, &[0], &cfg).unwrap().loss;
    let hand_err = (hand - 0.25 * 2f64.ln()).abs();
    let mut r = rng(7);
    let dy = Act { rows: 3, frames: 2, len: 4, data: (0..24).map(|_| r.random_range(-1.0..1.0)).collect() };
    let lambda = 0.7;
    let dx = grl_backward(&dy, GrlConfig { lambda });
    let grl_exact = dx.data.iter().zip(&dy.data).all(|(a, g)| a.to_bits() == (-lambda * g).to_bits()) && grl_forward(&dy) == dy;
    outcome(
        max < 1e-3 && hand_err < 1e-9 && grl_exact,
        format!("grad check {max:.1e} < 1e-3 over {} tensors, focal hand case err {hand_err:.1e}, GRL exact {grl_exact}", g.tensors.len()),
    )
}

/// Two-sided p by enumerating every assignment of the pooled values to the first sample.
fn permutation_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let rank = |v: f64| {
        let below = pooled.iter().filter(|&&x| x < v).count() as f64;
        let equal = pooled.iter().filter(|&&x| x == v).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = pooled.iter().map(|&v| rank(v)).collect();
    let center = a.len() as f64 * (n as f64 + 1.0) / 2.0;
    let observed = (ranks[..a.len()].iter().sum::<f64>() - center).abs();
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        total += 1;
        if (w - center).abs() >= observed - 1e-9 {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn criterion_8() -> Outcome {
    let mut r = rng(8);
    let (mut worst, mut cases) = (0.0f64, 0);
    for n1 in 1..10 {
        for n2 in 1..=(10 - n1) {
            for rep in 0..6 {
                // half the cases draw from a small set to force ties
                let draw = |r: &mut ChaCha8Rng| if rep % 2 == 0 { r.random_range(0..4) as f64 } else { r.random_range(-1.0..1.0) };
                let a: Vec<f64> = (0..n1).map(|_| draw(&mut r)).collect();
                let b: Vec<f64> = (0..n2).map(|_| draw(&mut r)).collect();
                let got = wilcoxon_rank_sum(&a, &b).unwrap();
                let want = if a.iter().chain(&b).all(|v| *v == a[0]) { 1.0 } else { permutation_p(&a, &b) };
                worst = worst.max((got.p_value - want).abs());
                cases += 1;
            }
        }
    }
    let adj = bonferroni(&[0.3, 0.04, 0.6], 3).unwrap();
    let clamp = adj[2] == 1.0 && (adj[0] - 0.9).abs() < 1e-15 && (adj[1] - 0.12).abs() < 1e-15;
    outcome(worst < 1e-12 && clamp, format!("exact vs permutation {worst:.1e} < 1e-12 over {cases} cases, Bonferroni clamps {clamp}"))
}

fn desk_run(seeds: Vec<u64>, subjects: Vec<usize>) -> (ExperimentOutput, f64) {
    let cfg = Config::default();
    let data = Dataset::synthesize(&SynthConfig { n_subjects: 3, ..cfg.synth_config() }).unwrap();
    let mut plan = cfg.plan(GridProfile::Desk);
    plan.strategies = vec![Strategy::Vanilla, Strategy::Mix, Strategy::Baseline];
    plan.seeds = seeds;
    plan.subjects = subjects;
    let t = Instant::now();
    let out = run_experiment(&data, &plan, 0).unwrap();
    (out, t.elapsed().as_secs_f64())
}

fn seed_averaged(out: &ExperimentOutput, s: Strategy, n: Normalization) -> f64 {
    out.summary.condition(s, n).map(|c| c.mean_differential).unwrap_or(f64::NAN)
}

fn criterion_9(out: &ExperimentOutput, secs: f64) -> Outcome {
    let v_swn = seed_averaged(out, Strategy::Vanilla, Normalization::Swn);
    let v_none = seed_averaged(out, Strategy::Vanilla, Normalization::None);
    let m_swn = seed_averaged(out, Strategy::Mix, Normalization::Swn);
    let m_none = seed_averaged(out, Strategy::Mix, Normalization::None);
    let margin = v_swn - v_none;
    let mark = |ok: bool| if ok { "ok" } else { "FAILS" };
    outcome(
        margin >= 0.02 && m_swn >= v_swn && m_none >= v_none,
        format!(
            "Vanilla SWN {:+.2} pp vs None {:+.2} pp, margin {:.2} pp >= 2 {}; MIX SWN {:+.2} >= Vanilla SWN {}; MIX None {:+.2} >= Vanilla None {}; {:.0} s",
            v_swn * 100.0,
            v_none * 100.0,
            margin * 100.0,
            mark(margin >= 0.02),
            m_swn * 100.0,
            mark(m_swn >= v_swn),
            m_none * 100.0,
            mark(m_none >= v_none),
            secs
        ),
    )
}

fn digest(records: &[ResultRecord]) -> String {
    hex::encode(Sha256::digest(results_csv(records).unwrap()))
}

fn criterion_10(first: &ExperimentOutput) -> Outcome {
    // EMGSHIFT_FULL_RERUN=1 repeats the whole criterion 9 run; by default one
    // (subject, seed) slice is re-run and compared with the same rows of the first run
    let full = std::env::var("EMGSHIFT_FULL_RERUN").is_ok_and(|v| v == "1");
    let (again, _) = if full { desk_run(SEEDS.to_vec(), Vec::new()) } else { desk_run(vec![SEEDS[0]], vec![0]) };
    let subject = &again.records[0].subject;
    let mine: Vec<ResultRecord> = first
        .records
        .iter()
        .filter(|r| full || (r.seed == SEEDS[0] && &r.subject == subject))
        .cloned()
        .collect();
    let (a, b) = (digest(&mine), digest(&again.records));
    outcome(
        a == b && !mine.is_empty(),
        format!("{} records, sha256 {}... {} ({})", mine.len(), &a[..16], if a == b { "matches" } else { "differs" }, if full { "full re-run" } else { "subject 1, first seed re-run" }),
    )
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn main() {
    let only: Option<Vec<usize>> = std::env::var("EMGSHIFT_CRITERIA").ok().map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut failed = 0;
    let mut report = |n: usize, o: Outcome, secs: f64| {
        println!("criterion {n:>2}: {} {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    let quick: [(usize, fn() -> Outcome); 8] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5), (6, criterion_6), (7, criterion_7), (8, criterion_8)];
    for (n, f) in quick {
        if wanted(n) {
            let t = Instant::now();
            let o = f();
            report(n, o, t.elapsed().as_secs_f64());
        }
    }
    if wanted(9) || wanted(10) {
        let (out, secs) = desk_run(SEEDS.to_vec(), Vec::new());
        if wanted(9) {
            report(9, criterion_9(&out, secs), secs);
        }
        if wanted(10) {
            let t = Instant::now();
            let o = criterion_10(&out);
            report(10, o, t.elapsed().as_secs_f64());
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var("EMGSHIFT_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
