//! Generative participants.
//!
//! `simulate_human` inverts the working-memory model: it draws random
//! effects once per participant and then answers each trial correctly with
//! probability `logistic(beta . x)`. The other two generators stand in for
//! LLM participants: one never errs, the other follows a deterministic
//! serial-position accuracy curve with a high floor.

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::design::CenteringStats;
use crate::math::logistic;
use crate::paradigm::{CatchGrade, CatchKind, SessionPlan, TaskConfig, Trial};
use crate::store::{ClientMeta, QuizAttempt, Response, SelfReport, SessionRecord};
use crate::{Error, Result};

/// Lognormal response latency, in milliseconds. Recorded, never modeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub log_mean: f64,
    pub log_sd: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            log_mean: 7.0,
            log_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanGenParams {
    /// (capacity, load, primacy, recency) on the logit scale.
    pub mu: [f64; 4],
    /// Random-effect standard deviations.
    pub sigma: [f64; 4],
    /// Means of (load, primacy, recency) subtracted before applying `mu`.
    pub centering: [f64; 3],
    pub latency: LatencyModel,
}

impl Default for HumanGenParams {
    fn default() -> Self {
        let c = CenteringStats::design_expectation(&TaskConfig::default());
        Self {
            mu: [1.0, -0.12, 3.68, 2.62],
            sigma: [0.8, 0.05, 0.8, 0.8],
            centering: [c.mean_load, c.mean_primacy, c.mean_recency],
            latency: LatencyModel::default(),
        }
    }
}

impl HumanGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!(
                "random-effect sds must be finite and non-negative: {:?}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Probability of a correct answer for coefficients `beta` on `trial`.
    pub fn p_correct(&self, beta: &[f64; 4], trial: &Trial) -> f64 {
        let n = f64::from(trial.set_size);
        let p = f64::from(trial.target_position);
        let x = [
            1.0,
            n - self.centering[0],
            1.0 / p - self.centering[1],
            1.0 / (n - p + 1.0) - self.centering[2],
        ];
        logistic((0..4).map(|k| beta[k] * x[k]).sum())
    }
}

/// Accuracy curve for the instructed-working-memory simulator.
///
/// Accuracy on a trial is `floor + (1 - floor) * shape`, where `shape` is 1
/// at both ends of a list and falls to `1 - load` in the middle, with
/// `load` rising linearly from 0 at the smallest set size to 1 at the
/// largest. Each participant's floor is jittered on the log-error scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub floor: f64,
    /// SD of the per-participant log multiplier on `1 - floor`.
    pub participant_spread: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        Self {
            floor: 0.68,
            participant_spread: 0.6,
        }
    }
}

impl StyleParams {
    /// Curve shape in [0, 1] for a trial under `config`.
    pub fn shape(config: &TaskConfig, trial: &Trial) -> f64 {
        let span = f64::from(config.set_size_max - config.set_size_min);
        let load = if span > 0.0 {
            (f64::from(trial.set_size) - f64::from(config.set_size_min)) / span
        } else {
            0.0
        };
        let rel = if trial.set_size > 1 {
            f64::from(trial.target_position - 1) / f64::from(trial.set_size - 1)
        } else {
            0.0
        };
        let ends = (2.0 * rel - 1.0).powi(2);
        1.0 - load.clamp(0.0, 1.0) * (1.0 - ends)
    }

    pub fn participant_floor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        (1.0 - (1.0 - self.floor) * (self.participant_spread * z).exp()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    Human,
    Perfect,
    Wm,
}

impl SimKind {
    pub fn participant_type(self) -> &'static str {
        match self {
            SimKind::Human => "sim-human",
            SimKind::Perfect => "sim-perfect",
            SimKind::Wm => "sim-wm",
        }
    }
}

/// SplitMix64 step, used to derive independent per-participant seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn participant_uuid<R: RngCore + ?Sized>(rng: &mut R) -> Uuid {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    uuid::Builder::from_random_bytes(bytes).into_uuid()
}

fn wrong_letter<R: Rng + ?Sized>(rng: &mut R, trial: &Trial) -> char {
    let others: Vec<char> = trial
        .letters
        .iter()
        .copied()
        .filter(|&c| c != trial.correct_answer)
        .collect();
    *others.choose(rng).unwrap_or(&trial.correct_answer)
}

fn answered(letter: char, correct: bool, latency_ms: Option<u64>) -> Response {
    Response {
        answer: Some(letter.to_string()),
        correct,
        invalid: false,
        timed_out: false,
        latency_ms,
    }
}

/// Fills the non-trial parts of a simulated record.
fn finish(record: &mut SessionRecord, plan: &SessionPlan, answers_catch: bool) {
    record.quiz_attempts = vec![QuizAttempt {
        answers: crate::paradigm::instruction_quiz()
            .iter()
            .map(|q| Some(q.correct_index))
            .collect(),
        passed: true,
    }];
    record.gate_entry = Some(plan.gate_code_hex.clone());
    record.ai_self_report = SelfReport {
        answer: Some("N".into()),
        claims_ai: Some(false),
    };
    if answers_catch {
        let q = &plan.catch_question;
        let answer = match q.kind {
            CatchKind::HexRecall => q.expected_answer.clone(),
            CatchKind::LowResourceLanguage => q.keywords.first().cloned().unwrap_or_default(),
        };
        record.catch.grade = crate::paradigm::grade_catch(q, Some(&answer));
        record.catch.answer = Some(answer);
    } else {
        record.catch.answer = None;
        record.catch.grade = CatchGrade::Skipped;
    }
    record.complete = true;
}

fn presentation_ms(plan: &SessionPlan, trial: &Trial) -> u64 {
    u64::from(trial.set_size) * u64::from(plan.config.presentation_ms)
        + u64::from(trial.set_size.saturating_sub(1)) * u64::from(plan.config.isi_ms)
}

pub fn simulate_human<R: Rng + ?Sized>(
    params: &HumanGenParams,
    plan: &SessionPlan,
    rng: &mut R,
) -> Result<SessionRecord> {
    params.validate()?;
    let id = participant_uuid(rng);
    let mut record = SessionRecord::from_plan(plan, id, SimKind::Human.participant_type(), ClientMeta::simulator());
    let mut beta = params.mu;
    for k in 0..4 {
        if params.sigma[k] > 0.0 {
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            beta[k] += params.sigma[k] * z;
        }
    }
    let latency = LogNormal::new(params.latency.log_mean, params.latency.log_sd)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut clock = 0u64;
    for rec in &mut record.trials {
        let p = params.p_correct(&beta, &rec.trial);
        let correct = rng.random::<f64>() < p;
        let letter = if correct {
            rec.trial.correct_answer
        } else {
            wrong_letter(rng, &rec.trial)
        };
        let lat = latency.sample(rng).round() as u64;
        clock += presentation_ms(plan, &rec.trial) + lat;
        // a wrong letter can only coincide with the target for a one-letter list
        rec.response = Some(answered(letter, letter == rec.trial.correct_answer, Some(lat)));
    }
    record.timestamps.finished_ms = Some(clock);
    finish(&mut record, plan, false);
    Ok(record)
}

/// Every answer correct.
pub fn simulate_perfect<R: Rng + ?Sized>(plan: &SessionPlan, rng: &mut R) -> SessionRecord {
    let id = participant_uuid(rng);
    let mut record = SessionRecord::from_plan(plan, id, SimKind::Perfect.participant_type(), ClientMeta::simulator());
    for rec in &mut record.trials {
        rec.response = Some(answered(rec.trial.correct_answer, true, None));
    }
    finish(&mut record, plan, true);
    record
}

pub fn simulate_instructed_wm<R: Rng + ?Sized>(
    plan: &SessionPlan,
    rng: &mut R,
    style: &StyleParams,
) -> SessionRecord {
    let id = participant_uuid(rng);
    let mut record = SessionRecord::from_plan(plan, id, SimKind::Wm.participant_type(), ClientMeta::simulator());
    let floor = style.participant_floor(rng);
    for rec in &mut record.trials {
        let acc = floor + (1.0 - floor) * StyleParams::shape(&plan.config, &rec.trial);
        let correct = acc >= 1.0 || rng.random::<f64>() < acc;
        let letter = if correct {
            rec.trial.correct_answer
        } else {
            wrong_letter(rng, &rec.trial)
        };
        rec.response = Some(answered(letter, letter == rec.trial.correct_answer, None));
    }
    finish(&mut record, plan, true);
    record
}

/// `n` simulated participants of one kind. Participant `i` uses the plan
/// and RNG stream derived from `(seed, i)`, so cohorts are prefix-stable.
pub fn simulate_cohort(
    kind: SimKind,
    n: usize,
    seed: u64,
    config: &TaskConfig,
    human: &HumanGenParams,
    style: &StyleParams,
) -> Result<Vec<SessionRecord>> {
    let kind_salt = match kind {
        SimKind::Human => 0x11,
        SimKind::Perfect => 0x22,
        SimKind::Wm => 0x33,
    };
    (0..n)
        .map(|i| {
            let s = derive_seed(seed ^ kind_salt, i as u64);
            let plan = SessionPlan::new(s, config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            rng.set_stream(7);
            Ok(match kind {
                SimKind::Human => simulate_human(human, &plan, &mut rng)?,
                SimKind::Perfect => simulate_perfect(&plan, &mut rng),
                SimKind::Wm => simulate_instructed_wm(&plan, &mut rng, style),
            })
        })
        .collect()
}
