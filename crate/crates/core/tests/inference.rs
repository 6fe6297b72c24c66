use wmprobe::agents::{simulate_cohort, HumanGenParams, SimKind, StyleParams};
use wmprobe::design::{apply_centering, fit_centering, rows_from_sessions, CenteringScope};
use wmprobe::inference::diagnostics::summarize;
use wmprobe::inference::{
    fit_model, fit_with_spec, sample, FitConfig, HierarchicalModel, LogDensity, ModelData, ModelSpec, NutsConfig,
    Parameterization, K,
};
use wmprobe::math::{bernoulli_logit_lpmf, logistic, median};
use wmprobe::paradigm::TaskConfig;
use wmprobe::store::SessionRecord;

/// Scalar logit with a flat prior: 1000 successes out of 2000.
struct Binomial;

impl LogDensity for Binomial {
    fn dim(&self) -> usize {
        1
    }
    fn logp_and_grad(&self, t: &[f64], g: &mut [f64]) -> f64 {
        let p = logistic(t[0]);
        g[0] = 1000.0 * (1.0 - p) - 1000.0 * p;
        1000.0 * (bernoulli_logit_lpmf(true, t[0]) + bernoulli_logit_lpmf(false, t[0]))
    }
}

fn chains_of(out: &wmprobe::inference::ChainOutput, j: usize) -> Vec<Vec<f64>> {
    (0..out.draws.len()).map(|c| (0..out.n_draws).map(|s| out.draw(c, s)[j]).collect()).collect()
}

fn summary(chains: &[Vec<f64>]) -> wmprobe::inference::ScalarDiagnostics {
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    summarize(&refs).unwrap()
}

#[test]
fn binomial_posterior_matches_laplace_approximation() {
    let cfg = NutsConfig { warmup: 1000, draws: 1000, seed: 2, ..NutsConfig::default() };
    let out = sample(&Binomial, &cfg, None).unwrap();
    let d = summary(&chains_of(&out, 0));
    let sd = 2.0 / 2000f64.sqrt();
    assert!(d.mean.abs() < 3.0 * d.mcse_mean, "{d:?}");
    assert!((d.sd / sd - 1.0).abs() < 0.05, "{d:?}");
    assert_eq!(out.total_divergences(), 0);
}

#[test]
fn prior_only_draws_match_the_prior() {
    let data = ModelData::prior_only(2);
    let spec = ModelSpec {
        prior_scale_fixed: [5.0, 2.0, 1.0, 0.5],
        prior_scale_sigma: [1.0; K],
        parameterization: Parameterization::NonCentered,
    };
    let target = HierarchicalModel { data: &data, spec: &spec };
    let cfg = NutsConfig { seed: 8, ..NutsConfig::default() };
    let out = sample(&target, &cfg, None).unwrap();
    for k in 0..K {
        let d = summary(&chains_of(&out, k));
        let s = spec.prior_scale_fixed[k];
        assert!(d.mean.abs() < 3.0 * d.mcse_mean, "mu[{k}] {d:?}");
        assert!((d.sd / s - 1.0).abs() < 0.1, "mu[{k}] {d:?}");
    }
}

fn small_cohort(n: usize, seed: u64) -> ModelData {
    let sessions =
        simulate_cohort(SimKind::Human, n, seed, &TaskConfig::default(), &HumanGenParams::default(), &StyleParams::default())
            .unwrap();
    let raw = rows_from_sessions(&sessions).unwrap();
    let c = fit_centering(&raw, CenteringScope::All).unwrap();
    ModelData::from_rows(&apply_centering(&raw, &c)).unwrap()
}

#[test]
fn centered_and_non_centered_agree() {
    let data = small_cohort(15, 3);
    let nuts = NutsConfig { warmup: 1000, draws: 1000, seed: 5, ..NutsConfig::default() };
    let base = ModelSpec::empirical(&data);
    let nc = fit_with_spec(&data, base.clone(), &nuts).unwrap();
    let c = fit_with_spec(&data, base.with_parameterization(Parameterization::Centered), &nuts).unwrap();
    for k in 0..K {
        let a = nc.draws.diagnostics[k];
        let b = c.draws.diagnostics[k];
        let tol = 3.0 * (a.mcse_mean.powi(2) + b.mcse_mean.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < tol, "mu[{k}]: {} vs {} (tol {tol})", a.mean, b.mean);
    }
}

#[test]
fn perfect_participants_get_larger_capacity_effects() {
    let config = TaskConfig::default();
    let mut sessions: Vec<SessionRecord> =
        simulate_cohort(SimKind::Human, 30, 12, &config, &HumanGenParams::default(), &StyleParams::default()).unwrap();
    sessions.extend(
        simulate_cohort(SimKind::Perfect, 5, 12, &config, &HumanGenParams::default(), &StyleParams::default()).unwrap(),
    );
    let raw = rows_from_sessions(&sessions).unwrap();
    let c = fit_centering(&raw, CenteringScope::All).unwrap();
    let data = ModelData::from_rows(&apply_centering(&raw, &c)).unwrap();
    let cfg = FitConfig { nuts: NutsConfig { warmup: 1000, draws: 1000, seed: 6, ..NutsConfig::default() }, ..FitConfig::default() };
    let fit = fit_model(&data, &cfg).unwrap();
    assert!(!fit.draws.unreliable());
    let labels: std::collections::HashMap<_, _> =
        sessions.iter().map(|s| (s.participant_id, s.participant_type.clone())).collect();
    let summary = fit.effect_summary(0.94, |id| labels.get(id).cloned()).unwrap();
    let groups = summary.by_label();
    let human_caps: Vec<f64> = groups["sim-human"].iter().map(|p| p.gamma[0]).collect();
    let med = median(&human_caps);
    for p in &groups["sim-perfect"] {
        assert!(p.gamma[0] > med, "{} <= {med}", p.gamma[0]);
    }
    assert_eq!(summary.fixed.len(), K);
    assert!(summary.fixed.iter().all(|r| r.hdi_low <= r.mean && r.mean <= r.hdi_high));
}

#[test]
fn single_participant_shrinks_random_effects() {
    let data = small_cohort(1, 21);
    let cfg = FitConfig { nuts: NutsConfig { warmup: 1000, draws: 1000, seed: 1, ..NutsConfig::default() }, ..FitConfig::default() };
    let fit = fit_model(&data, &cfg).unwrap();
    let s = fit.effect_summary(0.94, |_| None).unwrap();
    let p = &s.participants[0];
    for k in 0..K {
        let mu = s.fixed[k].mean;
        assert!(p.gamma[k].abs() < mu.abs().max(0.1), "effect {k}: gamma {} mu {mu}", p.gamma[k]);
        assert!((p.beta[k] - (mu + p.gamma[k])).abs() < 1e-12);
    }
}
