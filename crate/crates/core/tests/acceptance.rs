//! End-to-end acceptance checks. Each test prints one `[PASS]`/`[FAIL]`
//! line with the measured quantities, then asserts.
//!
//! Run with `cargo test -p wmprobe --test acceptance -- --nocapture` to see
//! the report lines.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use wmprobe::agents::{simulate_cohort, HumanGenParams, SimKind, StyleParams};
use wmprobe::anomaly::{
    accuracy_screen, marginal_loglik, pair_auroc, roc, score_pointwise, threshold_at_fnr, ScoreReport,
    ScoringOptions,
};
use wmprobe::design::{
    apply_centering, filter_hard_trials, fit_centering, rows_from_sessions, CenteringScope, CenteringStats, RawRow,
};
use wmprobe::inference::{
    fit_model, hdi, log_posterior, sample, FitConfig, LogDensity, ModelData, ModelSpec, NutsConfig,
    Parameterization, K,
};
use wmprobe::paradigm::{generate_session, ProbeType, TaskConfig};
use wmprobe::store::{split_cohort, FitArtifact, FitProvenance, SessionRecord};

fn report(name: &str, pass: bool, detail: String) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

#[test]
fn paradigm_balance() {
    let start = Instant::now();
    let config = TaskConfig::default();
    let mut bad = 0;
    for seed in 0..10_000u64 {
        let trials = generate_session(seed, &config).unwrap();
        let mut counts = [0u32; 13];
        for t in trials.iter().filter(|t| !t.is_practice) {
            counts[t.set_size as usize] += 1;
            if t.probe_type == ProbeType::Successor && t.target_position == 1 {
                bad += 1;
            }
        }
        if counts[3..=12].iter().any(|&c| c != 2) || counts.iter().sum::<u32>() != 20 {
            bad += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = bad == 0 && within(elapsed, 10);
    report("paradigm balance", pass, format!("10000 sessions, {bad} violations, {elapsed:.2?}"));
    assert!(pass);
}

fn random_instance(rng: &mut ChaCha8Rng) -> (ModelData, ModelSpec, Vec<f64>) {
    use wmprobe::design::CovariateRow;
    let n = rng.random_range(1..=4u128);
    let mut rows = Vec::new();
    for i in 0..n {
        for t in 0..rng.random_range(1..=6u32) {
            rows.push(CovariateRow {
                participant_id: Uuid::from_u128(i + 1),
                trial_index: t,
                set_size: 9,
                probe_type: ProbeType::Position,
                x_load: rng.random_range(-4.5..4.5),
                x_primacy: rng.random_range(-0.3..0.7),
                x_recency: rng.random_range(-0.3..0.7),
                y: rng.random_bool(0.6),
            });
        }
    }
    let data = ModelData::from_rows(&rows).unwrap();
    let param = if rng.random_bool(0.5) { Parameterization::Centered } else { Parameterization::NonCentered };
    let spec = ModelSpec {
        prior_scale_fixed: std::array::from_fn(|_| rng.random_range(0.5..5.0)),
        prior_scale_sigma: std::array::from_fn(|_| rng.random_range(0.5..5.0)),
        parameterization: param,
    };
    let theta = (0..data.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
    (data, spec, theta)
}

#[test]
fn gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (data, spec, theta) = random_instance(&mut rng);
        let mut grad = vec![0.0; theta.len()];
        log_posterior(&theta, &data, &spec, &mut grad);
        let mut scratch = vec![0.0; theta.len()];
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            tp[j] += h;
            let up = log_posterior(&tp, &data, &spec, &mut scratch);
            tp[j] -= 2.0 * h;
            let down = log_posterior(&tp, &data, &spec, &mut scratch);
            let fd = (up - down) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-5 && within(elapsed, 30);
    report(
        "gradient oracle",
        pass,
        format!("100 instances, max relative error {worst:.2e} (limit 1e-5), {elapsed:.2?}"),
    );
    assert!(pass);
}

struct StdNormal;

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        10
    }
    fn logp_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = -t;
        }
        -0.5 * theta.iter().map(|t| t * t).sum::<f64>()
    }
}

#[test]
fn sampler_calibration_standard_normal() {
    let start = Instant::now();
    let cfg = NutsConfig { seed: 11, ..NutsConfig::default() };
    let out = sample(&StdNormal, &cfg, None).unwrap();
    let mut worst_z = 0.0f64;
    let mut worst_var = 0.0f64;
    for j in 0..10 {
        let chains: Vec<Vec<f64>> =
            (0..cfg.chains).map(|c| (0..cfg.draws).map(|s| out.draw(c, s)[j]).collect()).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let d = wmprobe::inference::diagnostics::summarize(&refs).unwrap();
        worst_z = worst_z.max(d.mean.abs() / d.mcse_mean);
        worst_var = worst_var.max((d.sd * d.sd - 1.0).abs());
    }
    let div = out.total_divergences();
    let elapsed = start.elapsed();
    let pass = worst_z < 3.0 && worst_var < 0.10 && div == 0 && within(elapsed, 60);
    report(
        "sampler calibration",
        pass,
        format!(
            "max |mean|/MCSE {worst_z:.2} (limit 3), max |var-1| {worst_var:.3} (limit 0.10), {div} divergences, {elapsed:.2?}"
        ),
    );
    assert!(pass);
}

#[test]
fn parameter_recovery() {
    let start = Instant::now();
    let truth = HumanGenParams::default();
    let config = TaskConfig::default();
    let centering = CenteringStats::design_expectation(&config);
    let runs = 20;
    let mut covered = [0usize; K];
    let mut runs_ok = 0;
    let mut max_div_frac = 0.0f64;
    for run in 0..runs {
        let sessions =
            simulate_cohort(SimKind::Human, 200, 9000 + run, &config, &truth, &StyleParams::default()).unwrap();
        let raw = rows_from_sessions(&sessions).unwrap();
        let data = ModelData::from_rows(&apply_centering(&raw, &centering)).unwrap();
        let cfg = FitConfig {
            nuts: NutsConfig { warmup: 1000, draws: 1000, seed: 77 + run, ..NutsConfig::default() },
            ..FitConfig::default()
        };
        let fit = fit_model(&data, &cfg).unwrap();
        max_div_frac = max_div_frac.max(fit.draws.divergence_fraction());
        let mut inside = 0;
        for k in 0..K {
            let (lo, hi) = hdi(&fit.draws.pooled(k), 0.94).unwrap();
            if lo <= truth.mu[k] && truth.mu[k] <= hi {
                covered[k] += 1;
                inside += 1;
            }
        }
        if inside >= 3 {
            runs_ok += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = runs_ok == runs as usize && covered[2] >= 18 && covered[3] >= 18 && within(elapsed, 15 * 60);
    report(
        "parameter recovery",
        pass,
        format!(
            "{runs_ok}/{runs} runs with >=3/4 effects covered; coverage capacity {} load {} primacy {} recency {} of {runs}; \
             worst divergence fraction {max_div_frac:.3}; {elapsed:.0?}",
            covered[0], covered[1], covered[2], covered[3]
        ),
    );
    assert!(pass);
}

/// Train on 80 of 100 sim-humans; the other 20 are held out.
struct Normative {
    artifact: FitArtifact,
    heldout: Vec<SessionRecord>,
    fit_time: Duration,
}

fn normative() -> &'static Normative {
    static CELL: OnceLock<Normative> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let config = TaskConfig::default();
        let humans = simulate_cohort(
            SimKind::Human,
            100,
            4242,
            &config,
            &HumanGenParams::default(),
            &StyleParams::default(),
        )
        .unwrap();
        let ids: Vec<Uuid> = humans.iter().map(|s| s.participant_id).collect();
        let split = split_cohort(&ids, 0.8, 5).unwrap();
        let by_id: HashMap<Uuid, &SessionRecord> = humans.iter().map(|s| (s.participant_id, s)).collect();
        let train: Vec<&SessionRecord> = split.train.iter().map(|id| by_id[id]).collect();
        let heldout = split.heldout.iter().map(|id| by_id[id].clone()).collect();

        let raw = filter_hard_trials(&rows_from_sessions(train.iter().copied()).unwrap(), 9);
        let centering = fit_centering(&raw, CenteringScope::All).unwrap();
        let data = ModelData::from_rows(&apply_centering(&raw, &centering)).unwrap();
        let cfg = FitConfig { nuts: NutsConfig { seed: 31, ..NutsConfig::default() }, ..FitConfig::default() };
        let fit = fit_model(&data, &cfg).unwrap();
        let prov = FitProvenance { label: Some("sim-human".into()), min_set_size: 9, split: Some(split) };
        let artifact = FitArtifact::new(fit, centering, prov).unwrap();
        Normative { artifact, heldout, fit_time: start.elapsed() }
    })
}

fn score_all(sessions: &[SessionRecord], norm: &Normative) -> Vec<ScoreReport> {
    let model = norm.artifact.scoring_model(1000).unwrap();
    let opts = ScoringOptions { seed: 1, ..ScoringOptions::default() };
    sessions
        .iter()
        .map(|s| {
            let rows: Vec<RawRow> = rows_from_sessions([s]).unwrap();
            score_pointwise(&rows, &s.participant_type, &model, &opts).unwrap()
        })
        .collect()
}

fn lppd(r: &[ScoreReport]) -> Vec<f64> {
    r.iter().map(|r| r.mean_lppd).collect()
}

fn joint(r: &[ScoreReport]) -> Vec<f64> {
    r.iter().map(|r| r.joint_lpd.unwrap()).collect()
}

#[test]
fn detection_easy_regime() {
    let start = Instant::now();
    let norm = normative();
    let config = TaskConfig::default();
    let perfect = simulate_cohort(
        SimKind::Perfect,
        55,
        808,
        &config,
        &HumanGenParams::default(),
        &StyleParams::default(),
    )
    .unwrap();
    let pos = score_all(&norm.heldout, norm);
    let neg = score_all(&perfect, norm);
    let curve = roc(&lppd(&pos), &lppd(&neg)).unwrap();
    let joint_auc = roc(&joint(&pos), &joint(&neg)).unwrap().auroc;
    let flagged = accuracy_screen(&perfect, 0.95).len();
    let elapsed = start.elapsed() + norm.fit_time;
    let pass = curve.auroc >= 0.99 && flagged == perfect.len() && within(elapsed, 10 * 60);
    report(
        "detection easy regime",
        pass,
        format!(
            "pointwise AUROC {:.4} (limit 0.99), joint AUROC {joint_auc:.4}, screen flagged {flagged}/{}, \
             fit divergences {}, {elapsed:.0?}",
            curve.auroc,
            perfect.len(),
            norm.artifact.header.divergences
        ),
    );
    assert!(pass);
}

fn hard_regime() -> &'static (Vec<ScoreReport>, Vec<ScoreReport>, f64) {
    static CELL: OnceLock<(Vec<ScoreReport>, Vec<ScoreReport>, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let norm = normative();
        let config = TaskConfig::default();
        let wm = simulate_cohort(SimKind::Wm, 55, 909, &config, &HumanGenParams::default(), &StyleParams::default())
            .unwrap();
        let accs: Vec<f64> = wm.iter().filter_map(SessionRecord::main_accuracy).collect();
        (score_all(&norm.heldout, norm), score_all(&wm, norm), wmprobe::math::median(&accs))
    })
}

#[test]
fn detection_hard_regime() {
    let start = Instant::now();
    let norm = normative();
    let (pos, neg, median_acc) = hard_regime();
    let point = roc(&lppd(pos), &lppd(neg)).unwrap().auroc;
    let joint_auc = roc(&joint(pos), &joint(neg)).unwrap().auroc;
    let elapsed = start.elapsed() + norm.fit_time;
    let pass = point > 0.5 && point >= joint_auc - 0.05 && within(elapsed, 10 * 60);
    report(
        "detection hard regime",
        pass,
        format!(
            "pointwise AUROC {point:.4} (> 0.5), joint AUROC {joint_auc:.4} (pointwise >= joint - 0.05), \
             sim-wm median accuracy {median_acc:.3}, {elapsed:.0?}"
        ),
    );
    assert!(pass);
}

#[test]
fn operating_point_at_fnr() {
    let (pos, neg, _) = hard_regime();
    let (p, n) = (lppd(pos), lppd(neg));
    let curve = roc(&p, &n).unwrap();
    let op = threshold_at_fnr(&curve, 0.10).unwrap();

    // Enumeration: every candidate threshold, keep the largest admissible.
    let mut cands: Vec<f64> = p.iter().chain(&n).copied().collect();
    cands.push(f64::INFINITY);
    cands.sort_by(|a, b| b.total_cmp(a));
    let best = cands
        .into_iter()
        .find(|&t| p.iter().filter(|&&s| s < t).count() as f64 / p.len() as f64 <= 0.10)
        .unwrap();
    let fpr = n.iter().filter(|&&s| s >= best).count() as f64 / n.len() as f64;
    let fnr = p.iter().filter(|&&s| s < best).count() as f64 / p.len() as f64;
    let pass = op.attained && op.threshold == best && op.fpr == fpr && op.fnr <= 0.10 && (op.fnr - fnr).abs() < 1e-12;
    report(
        "threshold_at_fnr",
        pass,
        format!("max FNR 0.10 -> threshold {:.4}, FNR {:.3}, FPR {:.3}", op.threshold, op.fnr, op.fpr),
    );
    assert!(pass);
}

/// Gauss-Hermite nodes and weights for `int exp(-t^2) f(t) dt`.
fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        out[i] = (z, 2.0 / (pp * pp));
        out[n - 1 - i] = (-z, 2.0 / (pp * pp));
    }
    out
}

#[test]
fn marginal_likelihood_matches_quadrature() {
    let start = Instant::now();
    let nodes = gauss_hermite(64);
    let total_w: f64 = nodes.iter().map(|n| n.1).sum();
    assert!((total_w - std::f64::consts::PI.sqrt()).abs() < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu: [f64; K] = [rng.random_range(-1.5..1.5), rng.random_range(-0.3..0.3), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let sigma: [f64; K] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let x: [f64; K] = [1.0, rng.random_range(-2.0..2.0), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let y = rng.random_bool(0.5);
        // The logit is Normal(mu . x, sum sigma_k^2 x_k^2): a 1-D integral.
        let m: f64 = (0..K).map(|k| mu[k] * x[k]).sum();
        let s = (0..K).map(|k| (sigma[k] * x[k]).powi(2)).sum::<f64>().sqrt();
        let p: f64 = nodes
            .iter()
            .map(|&(t, w)| {
                let eta = m + std::f64::consts::SQRT_2 * s * t;
                let q = 1.0 / (1.0 + (-eta).exp());
                w * if y { q } else { 1.0 - q }
            })
            .sum::<f64>()
            / std::f64::consts::PI.sqrt();
        let mc = marginal_loglik(y, &x, &mu, &sigma, 100_000, &mut rng).unwrap();
        worst = worst.max((mc - p.ln()).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-3 && within(elapsed, 60);
    report(
        "marginal likelihood oracle",
        pass,
        format!("20 cases at M=100000, max |MC - quadrature| {worst:.2e} (limit 1e-3), {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn auroc_equals_pair_statistic() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let np = rng.random_range(1..40);
        let nn = rng.random_range(1..40);
        let levels = rng.random_range(2..12);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.25).collect() };
        let pos = draw(np);
        let neg = draw(nn);
        if roc(&pos, &neg).unwrap().auroc != pair_auroc(&pos, &neg) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && within(elapsed, 10);
    report("AUROC oracle", pass, format!("1000 tied score sets, {mismatches} mismatches, {elapsed:.2?}"));
    assert!(pass);
}
