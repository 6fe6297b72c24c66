//! Fitting the hierarchical model to a set of covariate rows.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::diagnostics::{hdi, summarize, ScalarDiagnostics};
use super::model::{constrain, draw_names, HierarchicalModel, ModelData, ModelSpec, Parameterization, EFFECT_NAMES, K};
use super::nuts::{sample, ChainOutput, ChainStats, NutsConfig};
use crate::{Error, Result};

/// Fraction of divergent post-warm-up transitions above which a fit is
/// flagged unreliable.
pub const MAX_DIVERGENCE_FRACTION: f64 = 0.10;

/// Post-warm-up draws in constrained form: `mu`, `sigma`, `gamma`.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    pub n_draws: usize,
    /// `(chain * n_draws + draw) * dim + coordinate`.
    pub values: Vec<f64>,
    pub stats: Vec<ChainStats>,
    pub diagnostics: Vec<ScalarDiagnostics>,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn from_chains(out: &ChainOutput, param: Parameterization, names: Vec<String>) -> Result<Self> {
        let dim = out.dim;
        let mut values = vec![0.0; out.draws.len() * out.n_draws * dim];
        for (c, chain) in out.draws.iter().enumerate() {
            for s in 0..out.n_draws {
                let off = (c * out.n_draws + s) * dim;
                constrain(&chain[s * dim..(s + 1) * dim], param, &mut values[off..off + dim]);
            }
        }
        let mut d = Self {
            names,
            n_chains: out.draws.len(),
            n_draws: out.n_draws,
            values,
            stats: out.stats.clone(),
            diagnostics: Vec::new(),
        };
        d.diagnostics = (0..dim).map(|j| d.summarize_scalar(j)).collect::<Result<_>>()?;
        Ok(d)
    }

    pub fn draw(&self, chain: usize, s: usize) -> &[f64] {
        let dim = self.dim();
        let off = (chain * self.n_draws + s) * dim;
        &self.values[off..off + dim]
    }

    /// One coordinate, split by chain.
    pub fn scalar(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_draws).map(|s| self.draw(c, s)[j]).collect())
            .collect()
    }

    /// One coordinate, all chains pooled.
    pub fn pooled(&self, j: usize) -> Vec<f64> {
        self.scalar(j).concat()
    }

    fn summarize_scalar(&self, j: usize) -> Result<ScalarDiagnostics> {
        let chains = self.scalar(j);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        summarize(&refs)
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().map(ChainStats::divergences).sum()
    }

    pub fn divergence_fraction(&self) -> f64 {
        self.divergences() as f64 / (self.n_chains * self.n_draws).max(1) as f64
    }

    pub fn unreliable(&self) -> bool {
        self.divergence_fraction() > MAX_DIVERGENCE_FRACTION
    }

    /// Largest R-hat over all coordinates, ignoring undefined values.
    pub fn max_rhat(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.rhat).filter(|r| r.is_finite()).fold(f64::NAN, f64::max)
    }

    pub fn min_ess_bulk(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.ess_bulk).filter(|r| r.is_finite()).fold(f64::NAN, f64::min)
    }

    /// `(mu, sigma)` for every draw, chains concatenated.
    pub fn population(&self) -> Vec<([f64; K], [f64; K])> {
        (0..self.n_chains)
            .flat_map(|c| (0..self.n_draws).map(move |s| (c, s)))
            .map(|(c, s)| {
                let d = self.draw(c, s);
                (std::array::from_fn(|k| d[k]), std::array::from_fn(|k| d[K + k]))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub effect: String,
    pub mean: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantEffects {
    pub participant_id: Uuid,
    pub label: String,
    pub gamma: [f64; K],
    pub beta: [f64; K],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub hdi_mass: f64,
    pub fixed: Vec<EffectRow>,
    pub sigma: Vec<EffectRow>,
    pub participants: Vec<ParticipantEffects>,
}

impl EffectSummary {
    /// Participants grouped by label, labels in sorted order.
    pub fn by_label(&self) -> std::collections::BTreeMap<&str, Vec<&ParticipantEffects>> {
        let mut out: std::collections::BTreeMap<&str, Vec<&ParticipantEffects>> = Default::default();
        for p in &self.participants {
            out.entry(p.label.as_str()).or_default().push(p);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub nuts: NutsConfig,
    pub parameterization: Parameterization,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { nuts: NutsConfig::default(), parameterization: Parameterization::NonCentered }
    }
}

/// A fitted model: the prior used, the roster it was fitted on, and draws.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub spec: ModelSpec,
    pub roster: Vec<Uuid>,
    pub n_rows: usize,
    pub nuts: NutsConfig,
    pub draws: PosteriorDraws,
}

impl ModelFit {
    /// Fixed-effect and random-effect summary; `label` maps ids to a group
    /// label (missing ids get "unlabelled").
    pub fn effect_summary(&self, mass: f64, label: impl Fn(&Uuid) -> Option<String>) -> Result<EffectSummary> {
        let row = |j: usize, effect: &str| -> Result<EffectRow> {
            let (lo, hi) = hdi(&self.draws.pooled(j), mass)?;
            let d = &self.draws.diagnostics[j];
            Ok(EffectRow { effect: effect.to_string(), mean: d.mean, hdi_low: lo, hdi_high: hi, rhat: d.rhat, ess_bulk: d.ess_bulk })
        };
        let fixed = (0..K).map(|k| row(k, EFFECT_NAMES[k])).collect::<Result<_>>()?;
        let sigma = (0..K).map(|k| row(K + k, EFFECT_NAMES[k])).collect::<Result<_>>()?;
        let participants = self
            .roster
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let gamma: [f64; K] = std::array::from_fn(|k| self.draws.diagnostics[2 * K + K * i + k].mean);
                let beta = std::array::from_fn(|k| self.draws.diagnostics[k].mean + gamma[k]);
                ParticipantEffects {
                    participant_id: *id,
                    label: label(id).unwrap_or_else(|| "unlabelled".into()),
                    gamma,
                    beta,
                }
            })
            .collect();
        Ok(EffectSummary { hdi_mass: mass, fixed, sigma, participants })
    }
}

/// Fit with the empirically scaled prior.
pub fn fit_model(data: &ModelData, cfg: &FitConfig) -> Result<ModelFit> {
    let spec = ModelSpec::empirical(data).with_parameterization(cfg.parameterization);
    fit_with_spec(data, spec, &cfg.nuts)
}

pub fn fit_with_spec(data: &ModelData, spec: ModelSpec, nuts: &NutsConfig) -> Result<ModelFit> {
    spec.validate()?;
    if data.n_participants() == 0 {
        return Err(Error::InvalidInput("cannot fit a model to zero participants".into()));
    }
    if (0..data.n_participants()).any(|i| data.range(i).is_empty()) {
        return Err(Error::InvalidInput("every participant needs at least one row".into()));
    }
    let target = HierarchicalModel { data, spec: &spec };
    let out = sample(&target, nuts, None)?;
    let draws = PosteriorDraws::from_chains(&out, spec.parameterization, draw_names(data.n_participants()))?;
    if draws.unreliable() {
        log::warn!(
            "{} of {} post-warm-up transitions diverged; fit flagged unreliable",
            draws.divergences(),
            draws.n_chains * draws.n_draws
        );
    }
    Ok(ModelFit { spec, roster: data.participants.clone(), n_rows: data.n_rows(), nuts: nuts.clone(), draws })
}
