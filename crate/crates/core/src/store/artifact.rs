//! Fit artifact container.
//!
//! Layout: a magic line `WMPROBE-FIT <major>`, one line of JSON header, then
//! the draws as a flat block of little-endian `f64` in row-major order
//! `(chain, draw, coordinate)`. The header carries names and dimensions, so
//! any language that reads JSON and raw doubles can load the draws.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use super::check_major;
use super::split::Split;
use crate::anomaly::ScoringModel;
use crate::design::CenteringStats;
use crate::inference::{ChainStats, ModelFit, ModelSpec, NutsConfig, PosteriorDraws, ScalarDiagnostics};
use crate::{Error, Result};

pub const FIT_MAGIC: &str = "WMPROBE-FIT";
pub const FIT_SCHEMA_MAJOR: u32 = 1;
pub const FIT_SCHEMA_VERSION: &str = "1.0";

/// Everything about a fit except the draws themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitHeader {
    pub schema_version: String,
    /// Hash of the configuration and training roster; seeds scoring streams.
    pub fingerprint: String,
    pub created_seed: u64,
    pub label: Option<String>,
    pub min_set_size: u32,
    pub spec: ModelSpec,
    pub centering: CenteringStats,
    pub roster: Vec<Uuid>,
    pub heldout: Vec<Uuid>,
    pub split_seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub n_rows: usize,
    pub nuts: NutsConfig,
    pub divergences: usize,
    pub unreliable: bool,
}

#[derive(Debug, Clone)]
pub struct FitArtifact {
    pub header: FitHeader,
    pub draws: PosteriorDraws,
}

#[derive(Serialize, Deserialize)]
struct WireHeader {
    #[serde(flatten)]
    header: FitHeader,
    names: Vec<String>,
    n_chains: usize,
    n_draws: usize,
    dim: usize,
    chains: Vec<ChainStats>,
    diagnostics: Vec<ScalarDiagnostics>,
    block_sha256: String,
}

/// Training metadata that is not part of the fit itself.
#[derive(Debug, Clone, Default)]
pub struct FitProvenance {
    pub label: Option<String>,
    pub min_set_size: u32,
    pub split: Option<Split>,
}

fn block_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

impl FitArtifact {
    pub fn new(fit: ModelFit, centering: CenteringStats, prov: FitProvenance) -> Result<Self> {
        let (heldout, split_seed, train_fraction) = match &prov.split {
            Some(s) => (s.heldout.clone(), Some(s.seed), Some(s.train_fraction)),
            None => (Vec::new(), None, None),
        };
        let mut header = FitHeader {
            schema_version: FIT_SCHEMA_VERSION.into(),
            fingerprint: String::new(),
            created_seed: fit.nuts.seed,
            label: prov.label,
            min_set_size: prov.min_set_size,
            spec: fit.spec,
            centering,
            roster: fit.roster,
            heldout,
            split_seed,
            train_fraction,
            n_rows: fit.n_rows,
            nuts: fit.nuts,
            divergences: fit.draws.divergences(),
            unreliable: fit.draws.unreliable(),
        };
        header.fingerprint = config_fingerprint(&header)?;
        Ok(Self { header, draws: fit.draws })
    }

    pub fn scoring_model(&self, thin_to: usize) -> Result<ScoringModel> {
        ScoringModel::new(
            self.draws.population(),
            self.header.centering.clone(),
            self.header.fingerprint.clone(),
            thin_to,
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let block = block_bytes(&self.draws.values);
        let wire = WireHeader {
            header: self.header.clone(),
            names: self.draws.names.clone(),
            n_chains: self.draws.n_chains,
            n_draws: self.draws.n_draws,
            dim: self.draws.dim(),
            chains: self.draws.stats.clone(),
            diagnostics: self.draws.diagnostics.clone(),
            block_sha256: hex::encode(Sha256::digest(&block)),
        };
        let mut out = format!("{FIT_MAGIC} {FIT_SCHEMA_MAJOR}\n").into_bytes();
        serde_json::to_writer(&mut out, &wire)?;
        out.push(b'\n');
        out.extend_from_slice(&block);
        Ok(out)
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut r = BufReader::new(reader);
        let mut magic = String::new();
        r.read_line(&mut magic).map_err(|e| Error::Parse(format!("fit artifact: {e}")))?;
        let version = magic
            .trim_end()
            .strip_prefix(FIT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Parse("not a fit artifact (bad magic line)".into()))?;
        check_major("fit artifact", version, FIT_SCHEMA_MAJOR)?;

        let mut line = Vec::new();
        r.read_until(b'\n', &mut line).map_err(|e| Error::Parse(format!("fit artifact header: {e}")))?;
        let de = &mut serde_json::Deserializer::from_slice(&line);
        let wire: WireHeader = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        check_major("fit artifact", &wire.header.schema_version, FIT_SCHEMA_MAJOR)?;
        if wire.names.len() != wire.dim || wire.diagnostics.len() != wire.dim || wire.chains.len() != wire.n_chains {
            return Err(Error::Parse("fit artifact header dimensions disagree".into()));
        }

        let expected = wire.n_chains * wire.n_draws * wire.dim;
        let mut block = Vec::with_capacity(expected * 8);
        r.read_to_end(&mut block).map_err(|e| Error::Parse(format!("fit artifact draws: {e}")))?;
        if block.len() != expected * 8 {
            return Err(Error::Parse(format!(
                "fit artifact draw block has {} bytes, expected {}",
                block.len(),
                expected * 8
            )));
        }
        if hex::encode(Sha256::digest(&block)) != wire.block_sha256 {
            return Err(Error::Parse("fit artifact draw block checksum mismatch".into()));
        }
        let values = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let artifact = Self {
            draws: PosteriorDraws {
                names: wire.names,
                n_chains: wire.n_chains,
                n_draws: wire.n_draws,
                values,
                stats: wire.chains,
                diagnostics: wire.diagnostics,
            },
            header: wire.header,
        };
        if config_fingerprint(&artifact.header)? != artifact.header.fingerprint {
            return Err(Error::Parse("fit artifact fingerprint does not match its header".into()));
        }
        Ok(artifact)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f)
    }
}

/// Hash over the fields that determine the fit, excluding outputs.
fn config_fingerprint(h: &FitHeader) -> Result<String> {
    let key = serde_json::json!({
        "schema_version": h.schema_version,
        "label": h.label,
        "min_set_size": h.min_set_size,
        "spec": h.spec,
        "centering": h.centering,
        "roster": h.roster,
        "heldout": h.heldout,
        "split_seed": h.split_seed,
        "train_fraction": h.train_fraction,
        "n_rows": h.n_rows,
        "nuts": h.nuts,
    });
    let bytes = serde_json::to_vec(&key)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..16]))
}
