use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use uuid::Uuid;

use wmprobe::anomaly::{roc_by_type, score_pointwise, threshold_at_fnr, ScoringOptions};
use wmprobe::design::{apply_centering, filter_hard_trials, fit_centering, rows_from_session, rows_from_sessions, CenteringScope};
use wmprobe::inference::{fit_model, EffectRow, FitConfig, ModelData, NutsConfig, Parameterization};
use wmprobe::store::{
    read_scores_csv, split_cohort, write_auroc_table_csv, write_roc_csv, write_scores_csv, AurocTableRow, Cohort,
    FitArtifact, FitProvenance, ScoredParticipant,
};

pub struct FitArgs {
    pub label: String,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub min_set_size: u32,
    pub scope: CenteringScope,
    pub parameterization: Parameterization,
    pub nuts: NutsConfig,
}

fn print_rows(title: &str, rows: &[EffectRow], mass: f64) {
    println!("{title:<18} {:>8}  {:>20}  {:>6}  {:>6}", "mean", format!("{:.0}% HDI", mass * 100.0), "R-hat", "ESS");
    for r in rows {
        println!(
            "{:<18} {:>8.3}  [{:>8.3}, {:>8.3}]  {:>6.3}  {:>6.0}",
            r.effect, r.mean, r.hdi_low, r.hdi_high, r.rhat, r.ess_bulk
        );
    }
}

pub fn fit(cohort_dir: &Path, args: &FitArgs, out: &Path) -> Result<()> {
    let cohort = Cohort::load(cohort_dir)?;
    let pool: Vec<_> = cohort.with_label(&args.label).collect();
    if pool.is_empty() {
        bail!("no complete sessions labelled {:?} in {}", args.label, cohort_dir.display());
    }
    let ids: Vec<Uuid> = pool.iter().map(|s| s.participant_id).collect();
    let split = split_cohort(&ids, args.train_fraction, args.split_seed)?;
    let train: HashSet<Uuid> = split.train.iter().copied().collect();
    let raw = rows_from_sessions(pool.iter().copied().filter(|s| train.contains(&s.participant_id)))?;
    let raw = filter_hard_trials(&raw, args.min_set_size);
    if raw.is_empty() {
        bail!("no training trials with set size >= {}", args.min_set_size);
    }
    let centering = fit_centering(&raw, args.scope)?;
    let data = ModelData::from_rows(&apply_centering(&raw, &centering))?;
    let cfg = FitConfig { nuts: args.nuts.clone(), parameterization: args.parameterization };
    let fit = fit_model(&data, &cfg)?;

    let summary = fit.effect_summary(0.94, |_| None)?;
    let d = &fit.draws;
    println!(
        "fit {} participants ({} held out), {} trials, {} chains x {} draws",
        data.n_participants(),
        split.heldout.len(),
        data.n_rows(),
        d.n_chains,
        d.n_draws
    );
    println!(
        "max R-hat {:.4}, min bulk ESS {:.0}, divergences {} ({:.2}%)",
        d.max_rhat(),
        d.min_ess_bulk(),
        d.divergences(),
        100.0 * d.divergence_fraction()
    );
    print_rows("fixed effect", &summary.fixed, summary.hdi_mass);
    print_rows("random-effect sd", &summary.sigma, summary.hdi_mass);
    if d.unreliable() {
        eprintln!("warning: fit flagged unreliable: more than 10% of transitions diverged");
    }

    let prov = FitProvenance { label: Some(args.label.clone()), min_set_size: args.min_set_size, split: Some(split) };
    FitArtifact::new(fit, centering, prov)?.write(out)?;
    Ok(())
}

pub fn score(
    artifact: &Path,
    cohort_dir: &Path,
    mut opts: ScoringOptions,
    inherit_min_set_size: bool,
    thin_to: usize,
    out: &Path,
) -> Result<()> {
    let art = FitArtifact::read(artifact)?;
    if art.header.unreliable {
        eprintln!("warning: {} is flagged unreliable ({} divergent transitions)", artifact.display(), art.header.divergences);
    }
    if inherit_min_set_size {
        opts.min_set_size = art.header.min_set_size;
    }
    let model = art.scoring_model(thin_to)?;
    let roster: HashSet<Uuid> = art.header.roster.iter().copied().collect();
    let cohort = Cohort::load(cohort_dir)?;
    let mut scored = Vec::new();
    let mut skipped = 0;
    for s in cohort.sessions.iter().filter(|s| s.complete && !roster.contains(&s.participant_id)) {
        let rows = rows_from_session(s)?;
        match score_pointwise(&rows, &s.participant_type, &model, &opts) {
            Ok(report) => scored.push(ScoredParticipant {
                report,
                provider: s.client.provider.clone().unwrap_or_default(),
                model: s.client.model.clone().unwrap_or_default(),
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", s.participant_id);
                skipped += 1;
            }
        }
    }
    if scored.is_empty() {
        bail!("no scorable sessions outside the training roster in {}", cohort_dir.display());
    }
    write_scores_csv(out, &scored)?;
    eprintln!(
        "scored {} participants ({} in training roster excluded, {skipped} skipped)",
        scored.len(),
        cohort.sessions.iter().filter(|s| roster.contains(&s.participant_id)).count()
    );
    Ok(())
}

pub fn roc(scores: &Path, positive: &str, joint: bool, max_fnr: f64, out_dir: &Path) -> Result<()> {
    let rows = read_scores_csv(scores)?;
    let mut values = Vec::with_capacity(rows.len());
    for r in &rows {
        let v = if joint {
            r.report.joint_lpd.with_context(|| format!("{} has no joint score", r.report.participant_id))?
        } else {
            r.report.mean_lppd
        };
        values.push((r.report.participant_type.as_str(), v));
    }
    let set = roc_by_type(values, positive)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_roc_csv(&out_dir.join("roc.csv"), std::iter::once(&set.pooled).chain(set.per_type.values()))?;

    let mut origin: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
    for r in &rows {
        origin.entry(&r.report.participant_type).or_insert((&r.provider, &r.model));
    }
    let table: Vec<AurocTableRow> = set
        .per_type
        .iter()
        .map(|(t, c)| AurocTableRow {
            provider: origin[t.as_str()].0.to_string(),
            model: origin[t.as_str()].1.to_string(),
            participant_type: t.clone(),
            auroc: c.auroc,
            n_positive: c.n_positive,
            n_negative: c.n_negative,
        })
        .collect();
    write_auroc_table_csv(&out_dir.join("auroc_table.csv"), &table)?;

    println!("{:<12} {:<20} {:<28} {:>7} {:>5} {:>5}", "provider", "model", "participant_type", "AUROC", "pos", "neg");
    for r in &table {
        println!(
            "{:<12} {:<20} {:<28} {:>7.3} {:>5} {:>5}",
            r.provider, r.model, r.participant_type, r.auroc, r.n_positive, r.n_negative
        );
    }
    println!("{:<12} {:<20} {:<28} {:>7.3} {:>5} {:>5}", "", "", "pooled", set.pooled.auroc, set.pooled.n_positive, set.pooled.n_negative);
    let op = threshold_at_fnr(&set.pooled, max_fnr)?;
    println!(
        "threshold at FNR <= {max_fnr}: {} (TPR {:.3}, FPR {:.3}, FNR {:.3}{})",
        op.threshold,
        op.tpr,
        op.fpr,
        op.fnr,
        if op.attained { "" } else { ", not attained" }
    );
    Ok(())
}
