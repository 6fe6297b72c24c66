//! Hierarchical Bernoulli-logit model over covariate rows.
//!
//! For participant `i` and trial `t`:
//!
//! ```text
//! y[i,t] ~ Bernoulli(logistic(beta[i] . x[i,t]))
//! beta[i] = mu + gamma[i],   gamma[i] ~ Normal(0, diag(sigma^2))
//! ```
//!
//! The sampler works on the unconstrained vector
//! `[mu(4), log_sigma(4), z(4N)]`, participant-major in `z`.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::design::CovariateRow;
use crate::{Error, Result};

pub const K: usize = 4;
pub const EFFECT_NAMES: [&str; K] = ["capacity", "load", "primacy", "recency"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Centered,
    #[default]
    NonCentered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Normal prior sd for each fixed effect.
    pub prior_scale_fixed: [f64; K],
    /// Half-normal prior scale for each random-effect sd.
    pub prior_scale_sigma: [f64; K],
    #[serde(default)]
    pub parameterization: Parameterization,
}

impl ModelSpec {
    pub const CAPACITY_SCALE: f64 = 5.0;
    pub const SLOPE_SCALE: f64 = 2.5;

    /// Capacity scale 5; slope scales `2.5 / sd(x_k)` over the fitting rows.
    /// A covariate with zero spread falls back to scale 2.5.
    pub fn empirical(data: &ModelData) -> Self {
        let sds = data.covariate_sds();
        let mut scale = [Self::CAPACITY_SCALE; K];
        for k in 1..K {
            let sd = sds[k - 1];
            scale[k] = if sd.is_finite() && sd > 1e-12 {
                Self::SLOPE_SCALE / sd
            } else {
                Self::SLOPE_SCALE
            };
        }
        Self {
            prior_scale_fixed: scale,
            prior_scale_sigma: scale,
            parameterization: Parameterization::NonCentered,
        }
    }

    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &[f64; K]| v.iter().all(|s| s.is_finite() && *s > 0.0);
        if !ok(&self.prior_scale_fixed) || !ok(&self.prior_scale_sigma) {
            return Err(Error::Config("prior scales must be finite and positive".into()));
        }
        Ok(())
    }
}

/// Rows grouped by participant, ids in ascending order.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub participants: Vec<Uuid>,
    /// `rows of participant i = offsets[i]..offsets[i+1]`.
    pub offsets: Vec<usize>,
    pub x: Vec<[f64; K]>,
    pub y: Vec<bool>,
}

impl ModelData {
    pub fn from_rows(rows: &[CovariateRow]) -> Result<Self> {
        let mut sorted: Vec<&CovariateRow> = rows.iter().collect();
        sorted.sort_by(|a, b| {
            a.participant_id
                .cmp(&b.participant_id)
                .then(a.trial_index.cmp(&b.trial_index))
        });
        let mut data = Self::empty();
        for r in sorted {
            let x = r.x();
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite covariate for participant {} trial {}",
                    r.participant_id, r.trial_index
                )));
            }
            if data.participants.last() != Some(&r.participant_id) {
                data.participants.push(r.participant_id);
                data.offsets.push(data.x.len());
            }
            data.x.push(x);
            data.y.push(r.y);
            *data.offsets.last_mut().unwrap() = data.x.len();
        }
        Ok(data)
    }

    /// Participants with no observations; used for prior-only checks.
    pub fn prior_only(n_participants: usize) -> Self {
        let mut data = Self::empty();
        for i in 0..n_participants {
            data.participants.push(Uuid::from_u128(i as u128 + 1));
            data.offsets.push(0);
        }
        data
    }

    fn empty() -> Self {
        Self { participants: Vec::new(), offsets: vec![0], x: Vec::new(), y: Vec::new() }
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Sample sd of load, primacy and recency.
    pub fn covariate_sds(&self) -> [f64; K - 1] {
        let mut out = [f64::NAN; K - 1];
        for (k, o) in out.iter_mut().enumerate() {
            let col: Vec<f64> = self.x.iter().map(|x| x[k + 1]).collect();
            if col.len() >= 2 {
                *o = crate::math::variance(&col).sqrt();
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        2 * K + K * self.n_participants()
    }
}

/// Unconstrained sampler state, split out for readability.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub mu: [f64; K],
    pub log_sigma: [f64; K],
    pub z: Vec<[f64; K]>,
}

impl LatentState {
    pub fn zeros(n_participants: usize) -> Self {
        Self { mu: [0.0; K], log_sigma: [0.0; K], z: vec![[0.0; K]; n_participants] }
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        if theta.len() < 2 * K || !(theta.len() - 2 * K).is_multiple_of(K) {
            return Err(Error::InvalidInput(format!("state length {} is not 8 + 4N", theta.len())));
        }
        let mut mu = [0.0; K];
        let mut log_sigma = [0.0; K];
        mu.copy_from_slice(&theta[..K]);
        log_sigma.copy_from_slice(&theta[K..2 * K]);
        let z = theta[2 * K..]
            .chunks_exact(K)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        Ok(Self { mu, log_sigma, z })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * K + K * self.z.len());
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.log_sigma);
        for z in &self.z {
            v.extend_from_slice(z);
        }
        v
    }

    pub fn sigma(&self) -> [f64; K] {
        self.log_sigma.map(f64::exp)
    }
}

/// Names of the unconstrained coordinates, in layout order.
pub fn unconstrained_names(n_participants: usize) -> Vec<String> {
    let mut names: Vec<String> = EFFECT_NAMES.iter().map(|e| format!("mu_{e}")).collect();
    names.extend(EFFECT_NAMES.iter().map(|e| format!("log_sigma_{e}")));
    for i in 0..n_participants {
        names.extend(EFFECT_NAMES.iter().map(|e| format!("z[{i}]_{e}")));
    }
    names
}

/// Names of stored draw coordinates: sigma materialized, and the per-participant
/// block is `gamma` under either parameterization.
pub fn draw_names(n_participants: usize) -> Vec<String> {
    let mut names: Vec<String> = EFFECT_NAMES.iter().map(|e| format!("mu_{e}")).collect();
    names.extend(EFFECT_NAMES.iter().map(|e| format!("sigma_{e}")));
    for i in 0..n_participants {
        names.extend(EFFECT_NAMES.iter().map(|e| format!("gamma[{i}]_{e}")));
    }
    names
}

/// Map an unconstrained position to `[mu, sigma, gamma]`.
pub fn constrain(theta: &[f64], param: Parameterization, out: &mut [f64]) {
    out.copy_from_slice(theta);
    let mut sigma = [0.0; K];
    for k in 0..K {
        sigma[k] = theta[K + k].exp();
        out[K + k] = sigma[k];
    }
    if param == Parameterization::NonCentered {
        for block in out[2 * K..].chunks_exact_mut(K) {
            for k in 0..K {
                block[k] *= sigma[k];
            }
        }
    }
}

/// Bernoulli-logit log mass and its derivative `y - p` with one `exp` call.
#[inline]
fn lpmf_and_resid(y: bool, eta: f64) -> (f64, f64) {
    let e = (-eta.abs()).exp();
    let l1p = e.ln_1p();
    let p = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    if y {
        (-((-eta).max(0.0) + l1p), 1.0 - p)
    } else {
        (-(eta.max(0.0) + l1p), -p)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64; K], b: &[f64; K]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Log likelihood summed over all rows at `theta`.
pub fn log_likelihood(theta: &[f64], data: &ModelData, param: Parameterization) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n_participants() {
        let beta = participant_beta(theta, i, param);
        for t in data.range(i) {
            total += lpmf_and_resid(data.y[t], dot(&beta, &data.x[t])).0;
        }
    }
    total
}

fn participant_beta(theta: &[f64], i: usize, param: Parameterization) -> [f64; K] {
    let base = 2 * K + K * i;
    let mut beta = [0.0; K];
    for k in 0..K {
        let g = match param {
            Parameterization::NonCentered => theta[K + k].exp() * theta[base + k],
            Parameterization::Centered => theta[base + k],
        };
        beta[k] = theta[k] + g;
    }
    beta
}

/// Unnormalized log posterior over the unconstrained vector; writes the
/// exact gradient into `grad`. Prior normalizing constants are dropped.
pub fn log_posterior(
    theta: &[f64],
    data: &ModelData,
    spec: &ModelSpec,
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(theta.len(), data.dim());
    debug_assert_eq!(grad.len(), theta.len());
    grad.fill(0.0);
    let mut value = 0.0;

    let mu = &theta[..K];
    let log_sigma = &theta[K..2 * K];
    let sigma: [f64; K] = std::array::from_fn(|k| log_sigma[k].exp());

    // Population priors.
    for k in 0..K {
        let s = spec.prior_scale_fixed[k];
        value -= 0.5 * (mu[k] / s).powi(2);
        grad[k] -= mu[k] / (s * s);

        // Half-normal on sigma plus the log-transform Jacobian.
        let t = spec.prior_scale_sigma[k];
        let r = sigma[k] / t;
        value += -0.5 * r * r + log_sigma[k];
        grad[K + k] += -r * r + 1.0;
    }

    for i in 0..data.n_participants() {
        let base = 2 * K + K * i;
        let w: [f64; K] = std::array::from_fn(|k| theta[base + k]);
        let beta: [f64; K] = std::array::from_fn(|k| match spec.parameterization {
            Parameterization::NonCentered => mu[k] + sigma[k] * w[k],
            Parameterization::Centered => mu[k] + w[k],
        });

        let mut gb = [0.0; K];
        for t in data.range(i) {
            let x = &data.x[t];
            let (lp, resid) = lpmf_and_resid(data.y[t], dot(&beta, x));
            value += lp;
            for k in 0..K {
                gb[k] += resid * x[k];
            }
        }

        for k in 0..K {
            grad[k] += gb[k];
            match spec.parameterization {
                Parameterization::NonCentered => {
                    grad[base + k] += gb[k] * sigma[k] - w[k];
                    grad[K + k] += gb[k] * sigma[k] * w[k];
                    value -= 0.5 * w[k] * w[k];
                }
                Parameterization::Centered => {
                    let r = w[k] / sigma[k];
                    grad[base + k] += gb[k] - r / sigma[k];
                    grad[K + k] += r * r - 1.0;
                    value -= 0.5 * r * r + log_sigma[k];
                }
            }
        }
    }
    value
}

/// Bundles data and spec as a sampler target.
pub struct HierarchicalModel<'a> {
    pub data: &'a ModelData,
    pub spec: &'a ModelSpec,
}

impl super::nuts::LogDensity for HierarchicalModel<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn logp_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        log_posterior(theta, self.data, self.spec, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paradigm::ProbeType;

    fn row(pid: u128, t: u32, x: [f64; 3], y: bool) -> CovariateRow {
        CovariateRow {
            participant_id: Uuid::from_u128(pid),
            trial_index: t,
            set_size: 9,
            probe_type: ProbeType::Position,
            x_load: x[0],
            x_primacy: x[1],
            x_recency: x[2],
            y,
        }
    }

    #[test]
    fn zero_state_single_success_is_log_half() {
        let data = ModelData::from_rows(&[row(1, 0, [0.3, -0.2, 0.1], true)]).unwrap();
        let theta = vec![0.0; data.dim()];
        let ll = log_likelihood(&theta, &data, Parameterization::NonCentered);
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn grouping_is_sorted_and_complete() {
        let rows = vec![
            row(3, 1, [0.0; 3], true),
            row(1, 0, [0.0; 3], false),
            row(3, 0, [0.0; 3], true),
        ];
        let data = ModelData::from_rows(&rows).unwrap();
        assert_eq!(data.participants, vec![Uuid::from_u128(1), Uuid::from_u128(3)]);
        assert_eq!(data.offsets, vec![0, 1, 3]);
        assert_eq!(data.dim(), 16);
    }

    #[test]
    fn non_finite_covariate_is_rejected() {
        let rows = vec![row(1, 0, [f64::NAN, 0.0, 0.0], true)];
        assert!(ModelData::from_rows(&rows).is_err());
    }

    #[test]
    fn duplicated_rows_double_the_likelihood() {
        let rows = vec![row(1, 0, [0.5, 0.1, -0.3], true), row(2, 0, [-1.0, 0.2, 0.3], false)];
        let mut doubled = rows.clone();
        doubled.extend(rows.iter().map(|r| CovariateRow { trial_index: r.trial_index + 100, ..r.clone() }));
        let a = ModelData::from_rows(&rows).unwrap();
        let b = ModelData::from_rows(&doubled).unwrap();
        let theta: Vec<f64> = (0..a.dim()).map(|j| 0.1 * j as f64 - 0.4).collect();
        let la = log_likelihood(&theta, &a, Parameterization::NonCentered);
        let lb = log_likelihood(&theta, &b, Parameterization::NonCentered);
        assert_eq!(2.0 * la, lb);
    }

    #[test]
    fn state_round_trip() {
        let theta: Vec<f64> = (0..16).map(|j| j as f64).collect();
        let s = LatentState::from_slice(&theta).unwrap();
        assert_eq!(s.z.len(), 2);
        assert_eq!(s.to_vec(), theta);
        assert!(LatentState::from_slice(&theta[..15]).is_err());
    }

    #[test]
    fn empirical_scales_follow_covariate_sd() {
        let rows: Vec<_> = (0..10).map(|t| row(1, t, [t as f64, 0.0, 1.0 - 0.1 * t as f64], t % 2 == 0)).collect();
        let data = ModelData::from_rows(&rows).unwrap();
        let spec = ModelSpec::empirical(&data);
        let sd = data.covariate_sds();
        assert_eq!(spec.prior_scale_fixed[0], 5.0);
        assert!((spec.prior_scale_fixed[1] - 2.5 / sd[0]).abs() < 1e-12);
        // constant primacy column falls back to 2.5
        assert_eq!(spec.prior_scale_fixed[2], 2.5);
        assert_eq!(spec.prior_scale_sigma, spec.prior_scale_fixed);
        spec.validate().unwrap();
    }
}
