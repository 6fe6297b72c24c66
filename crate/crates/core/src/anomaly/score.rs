//! Predictive scores for participants outside the training roster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::design::{apply_centering, filter_hard_trials, CenteringStats, CovariateRow, RawRow};
use crate::inference::K;
use crate::math::{bernoulli_logit_lpmf, log_mean_exp};
use crate::{Error, Result};

/// Default Monte Carlo draws of `gamma` per posterior draw.
pub const DEFAULT_M_POINTWISE: usize = 64;
pub const DEFAULT_M_JOINT: usize = 256;
/// Posterior draws kept for scoring.
pub const DEFAULT_THIN_TO: usize = 1000;
pub const DEFAULT_MIN_SET_SIZE: u32 = 9;

/// Everything scoring needs from a fit: population draws and the centering
/// constants of the training rows.
#[derive(Debug, Clone)]
pub struct ScoringModel {
    pub population: Vec<([f64; K], [f64; K])>,
    pub centering: CenteringStats,
    pub fingerprint: String,
}

impl ScoringModel {
    /// Evenly thins `population` to at most `thin_to` draws.
    pub fn new(
        population: Vec<([f64; K], [f64; K])>,
        centering: CenteringStats,
        fingerprint: String,
        thin_to: usize,
    ) -> Result<Self> {
        if population.is_empty() {
            return Err(Error::InvalidInput("scoring model has no posterior draws".into()));
        }
        if thin_to == 0 {
            return Err(Error::Config("thin_to must be at least 1".into()));
        }
        let n = population.len();
        let population = if n > thin_to {
            (0..thin_to).map(|i| population[i * n / thin_to]).collect()
        } else {
            population
        };
        Ok(Self { population, centering, fingerprint })
    }

    /// A posterior concentrated on a single `(mu, sigma)`.
    pub fn point_mass(mu: [f64; K], sigma: [f64; K], centering: CenteringStats) -> Self {
        Self { population: vec![(mu, sigma)], centering, fingerprint: "point-mass".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringOptions {
    pub m_pointwise: usize,
    pub m_joint: usize,
    pub min_set_size: u32,
    pub seed: u64,
    pub joint: bool,
}

impl Default for ScoringOptions {
    fn default() -> Self {
        Self {
            m_pointwise: DEFAULT_M_POINTWISE,
            m_joint: DEFAULT_M_JOINT,
            min_set_size: DEFAULT_MIN_SET_SIZE,
            seed: 0,
            joint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub participant_id: Uuid,
    pub participant_type: String,
    pub n_trials_scored: usize,
    pub mean_lppd: f64,
    pub joint_lpd: Option<f64>,
    pub scored_set_size_min: u32,
    pub m: usize,
    pub n_posterior_draws: usize,
}

/// Antithetic standard-normal draws: pairs `(u, -u)`, plus one unpaired draw
/// when `m` is odd.
fn antithetic_normals(rng: &mut ChaCha8Rng, m: usize, out: &mut Vec<[f64; K]>) {
    out.clear();
    for _ in 0..m / 2 {
        let u: [f64; K] = std::array::from_fn(|_| rng.sample(StandardNormal));
        out.push(u);
        out.push(u.map(|v| -v));
    }
    if m % 2 == 1 {
        out.push(std::array::from_fn(|_| rng.sample(StandardNormal)));
    }
}

#[inline]
fn eta(mu: &[f64; K], sigma: &[f64; K], u: &[f64; K], x: &[f64; K]) -> f64 {
    (0..K).map(|k| (mu[k] + sigma[k] * u[k]) * x[k]).sum()
}

/// `log E_gamma[p(y | x, mu + gamma)]` with `gamma ~ Normal(0, diag(sigma^2))`,
/// estimated from `m` antithetic draws.
pub fn marginal_loglik<R: Rng + ?Sized>(
    y: bool,
    x: &[f64; K],
    mu: &[f64; K],
    sigma: &[f64; K],
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidInput("marginal_loglik needs M >= 1".into()));
    }
    let mut terms = Vec::with_capacity(m);
    let mut push = |u: [f64; K]| terms.push(bernoulli_logit_lpmf(y, eta(mu, sigma, &u, x)));
    for _ in 0..m / 2 {
        let u: [f64; K] = std::array::from_fn(|_| rng.sample(StandardNormal));
        push(u);
        push(u.map(|v| -v));
    }
    if m % 2 == 1 {
        push(std::array::from_fn(|_| rng.sample(StandardNormal)));
    }
    Ok(log_mean_exp(&terms))
}

/// Seed for one participant's scoring stream. Depends only on the model
/// fingerprint, the participant and the user seed.
pub fn scoring_seed(fingerprint: &str, participant_id: Uuid, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(participant_id.as_bytes());
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Select, filter and center one participant's rows.
pub fn prepare_rows(rows: &[RawRow], centering: &CenteringStats, min_set_size: u32) -> Result<(Uuid, Vec<CovariateRow>)> {
    let Some(first) = rows.first() else {
        return Err(Error::InvalidInput("no rows to score".into()));
    };
    let id = first.participant_id;
    if rows.iter().any(|r| r.participant_id != id) {
        return Err(Error::InvalidInput("rows from more than one participant".into()));
    }
    let mut hard = filter_hard_trials(rows, min_set_size);
    if hard.is_empty() {
        return Err(Error::InvalidInput(format!(
            "participant {id} has no trials with set size >= {min_set_size}"
        )));
    }
    hard.sort_by_key(|r| r.trial_index);
    Ok((id, apply_centering(&hard, centering)))
}

fn pointwise_terms(rows: &[CovariateRow], model: &ScoringModel, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s_count = model.population.len();
    let mut per_trial = vec![Vec::with_capacity(s_count); rows.len()];
    let xs: Vec<[f64; K]> = rows.iter().map(CovariateRow::x).collect();
    let mut us = Vec::with_capacity(m);
    let mut buf = vec![0.0; m];
    for (mu, sigma) in &model.population {
        antithetic_normals(rng, m, &mut us);
        for (t, (x, r)) in xs.iter().zip(rows).enumerate() {
            for (b, u) in buf.iter_mut().zip(&us) {
                *b = bernoulli_logit_lpmf(r.y, eta(mu, sigma, u, x));
            }
            per_trial[t].push(log_mean_exp(&buf));
        }
    }
    per_trial.iter().map(|v| log_mean_exp(v)).collect()
}

fn joint_value(rows: &[CovariateRow], model: &ScoringModel, m: usize, rng: &mut ChaCha8Rng) -> f64 {
    let xs: Vec<[f64; K]> = rows.iter().map(CovariateRow::x).collect();
    let mut us = Vec::with_capacity(m);
    let mut terms = Vec::with_capacity(model.population.len() * m);
    for (mu, sigma) in &model.population {
        antithetic_normals(rng, m, &mut us);
        for u in &us {
            terms.push(
                xs.iter()
                    .zip(rows)
                    .map(|(x, r)| bernoulli_logit_lpmf(r.y, eta(mu, sigma, u, x)))
                    .sum::<f64>(),
            );
        }
    }
    log_mean_exp(&terms)
}

/// Mean over hard trials of the log pointwise predictive density.
pub fn score_pointwise(
    rows: &[RawRow],
    participant_type: &str,
    model: &ScoringModel,
    opts: &ScoringOptions,
) -> Result<ScoreReport> {
    if opts.m_pointwise == 0 || (opts.joint && opts.m_joint == 0) {
        return Err(Error::Config("Monte Carlo sizes must be at least 1".into()));
    }
    let (id, rows) = prepare_rows(rows, &model.centering, opts.min_set_size)?;
    let seed = scoring_seed(&model.fingerprint, id, opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = pointwise_terms(&rows, model, opts.m_pointwise, &mut rng);
    let mean_lppd = terms.iter().sum::<f64>() / terms.len() as f64;
    let joint_lpd = if opts.joint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Some(joint_value(&rows, model, opts.m_joint, &mut rng))
    } else {
        None
    };
    Ok(ScoreReport {
        participant_id: id,
        participant_type: participant_type.to_string(),
        n_trials_scored: rows.len(),
        // Rounding in log-sum-exp can push an all-certain trial a hair above 0.
        mean_lppd: mean_lppd.min(0.0),
        joint_lpd: joint_lpd.map(|v| v.min(0.0)),
        scored_set_size_min: opts.min_set_size,
        m: opts.m_pointwise,
        n_posterior_draws: model.population.len(),
    })
}

/// Log joint predictive density of all hard trials, with one `gamma` draw
/// shared across the trials inside each product.
pub fn score_joint(rows: &[RawRow], model: &ScoringModel, m: usize, min_set_size: u32, seed: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Config("Monte Carlo size must be at least 1".into()));
    }
    let (id, rows) = prepare_rows(rows, &model.centering, min_set_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scoring_seed(&model.fingerprint, id, seed));
    Ok(joint_value(&rows, model, m, &mut rng))
}
