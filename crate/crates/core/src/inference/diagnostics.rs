//! Convergence diagnostics and interval summaries for MCMC output.
//!
//! Chains are passed as equal-length slices of one scalar each.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostics {
    pub mean: f64,
    pub sd: f64,
    #[serde(with = "nan_as_null")]
    pub rhat: f64,
    #[serde(with = "nan_as_null")]
    pub ess_bulk: f64,
    #[serde(with = "nan_as_null")]
    pub mcse_mean: f64,
}

/// JSON has no NaN; undefined diagnostics travel as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

fn check_chains(chains: &[&[f64]]) -> Result<usize> {
    let n = chains.first().map_or(0, |c| c.len());
    if chains.is_empty() || n == 0 {
        return Err(Error::InvalidInput("no draws".into()));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("chains have unequal lengths".into()));
    }
    Ok(n)
}

/// Halve every chain, dropping the middle draw of odd-length chains.
fn split<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(&c[..half]);
        out.push(&c[c.len() - half..]);
    }
    out
}

/// Ranks with ties averaged, mapped to normal scores via
/// `Phi^-1((r - 3/8) / (S + 1/4))`.
fn rank_normalize(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut idx: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (ci, c) in chains.iter().enumerate() {
        for (j, &v) in c.iter().enumerate() {
            idx.push((v, ci, j));
        }
    }
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && idx[j + 1].0 == idx[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, ci, k) in &idx[i..=j] {
            out[ci][k] = z;
        }
        i = j + 1;
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Classic potential scale reduction over the given (already split) chains.
fn basic_rhat(chains: &[&[f64]]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = mean(&vars);
    let b_over_n = crate::math::variance(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Rank-normalized split R-hat: the larger of the bulk and folded (tail) values.
/// Constant draws give `NaN`.
pub fn rhat(chains: &[&[f64]]) -> Result<f64> {
    let n = check_chains(chains)?;
    if chains.len() < 2 {
        return Err(Error::InvalidInput("R-hat needs at least two chains".into()));
    }
    if n < 4 {
        return Err(Error::InvalidInput("R-hat needs at least four draws per chain".into()));
    }
    let halves = split(chains);
    let bulk = rank_normalize(&halves);
    let bulk_refs: Vec<&[f64]> = bulk.iter().map(Vec::as_slice).collect();

    let all: Vec<f64> = halves.iter().flat_map(|c| c.iter().copied()).collect();
    let med = crate::math::median(&all);
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let folded_refs: Vec<&[f64]> = folded.iter().map(Vec::as_slice).collect();
    let tail = rank_normalize(&folded_refs);
    let tail_refs: Vec<&[f64]> = tail.iter().map(Vec::as_slice).collect();

    if all_equal(&halves) {
        return Ok(f64::NAN);
    }
    Ok(basic_rhat(&bulk_refs).max(basic_rhat(&tail_refs)))
}

fn all_equal(chains: &[&[f64]]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|v| *v == first))
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
fn ess_raw(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    if n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    // Mean over chains of the biased autocovariance at `lag`.
    let acov = |lag: usize| -> f64 {
        let mut s = 0.0;
        for (c, mu) in chains.iter().zip(&means) {
            let mut a = 0.0;
            for t in 0..n - lag {
                a += (c[t] - mu) * (c[t + lag] - mu);
            }
            s += a / n as f64;
        }
        s / m as f64
    };
    let nf = n as f64;
    let acov0 = acov(0);
    let mean_var = acov0 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += crate::math::variance(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = 1.0 - (mean_var - acov(1)) / var_plus;
    rho[1] = odd;
    let mut t = 1;
    while t < n - 3 && even + odd > 0.0 {
        even = 1.0 - (mean_var - acov(t + 1)) / var_plus;
        odd = 1.0 - (mean_var - acov(t + 2)) / var_plus;
        if even + odd >= 0.0 {
            rho[t + 1] = even;
            rho[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t.saturating_sub(2);
    if even > 0.0 {
        rho[max_t + 1] = even;
    }
    // Enforce a monotonically decreasing sequence of pair sums.
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho[max_t + 1];
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Bulk ESS: ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[&[f64]]) -> Result<f64> {
    check_chains(chains)?;
    let halves = split(chains);
    if halves[0].len() < 4 || all_equal(&halves) {
        return Ok(f64::NAN);
    }
    let z = rank_normalize(&halves);
    let refs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
    Ok(ess_raw(&refs))
}

/// ESS of the draws themselves (split, not rank-normalized); the basis for
/// the Monte Carlo standard error of the mean.
pub fn ess_mean(chains: &[&[f64]]) -> Result<f64> {
    check_chains(chains)?;
    let halves = split(chains);
    if halves[0].len() < 4 || all_equal(&halves) {
        return Ok(f64::NAN);
    }
    Ok(ess_raw(&halves))
}

pub fn summarize(chains: &[&[f64]]) -> Result<ScalarDiagnostics> {
    check_chains(chains)?;
    let all: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let m = mean(&all);
    let sd = if all.len() > 1 { crate::math::variance(&all).sqrt() } else { 0.0 };
    let rhat = if chains.len() >= 2 && chains[0].len() >= 4 { rhat(chains)? } else { f64::NAN };
    let ess = ess_mean(chains)?;
    Ok(ScalarDiagnostics {
        mean: m,
        sd,
        rhat,
        ess_bulk: ess_bulk(chains)?,
        mcse_mean: sd / ess.sqrt(),
    })
}

/// Narrowest interval containing `ceil(mass * n)` of the samples.
pub fn hdi(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::InvalidInput(format!("HDI mass must lie in (0, 1), got {mass}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidInput("HDI of zero samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("HDI of non-finite samples".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (s[0], s[k - 1]);
    for i in 1..=n - k {
        if s[i + k - 1] - s[i] < best.1 - best.0 {
            best = (s[i], s[i + k - 1]);
        }
    }
    Ok(best)
}
