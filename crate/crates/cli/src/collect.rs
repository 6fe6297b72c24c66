use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Result};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use wmprobe::agents::{run_llm_session, EndpointConfig, HttpChatClient, JsonlTranscript, LlmSessionOptions};
use wmprobe::paradigm::{SessionPlan, TaskConfig};
use wmprobe::store::Cohort;

/// Stable id for one (model, prompt, seed) session, so reruns skip work
/// already on disk.
fn session_id(model: &str, prompt: &str, seed: u64) -> Uuid {
    let mut h = Sha256::new();
    h.update(model.as_bytes());
    h.update([0]);
    h.update(prompt.as_bytes());
    h.update(seed.to_le_bytes());
    let bytes: [u8; 16] = h.finalize()[..16].try_into().unwrap();
    uuid::Builder::from_random_bytes(bytes).into_uuid()
}

fn one_session(ep: &EndpointConfig, config: &TaskConfig, seed: u64, out: &Path) -> Result<bool> {
    let id = session_id(&ep.model_name, ep.system_prompt.label(), seed);
    if Cohort::session_path(out, id).exists() {
        log::info!("session {id} (seed {seed}) already present, skipping");
        return Ok(true);
    }
    let plan = SessionPlan::new(seed, config)?;
    let mut client = HttpChatClient::from_config(ep)?;
    let mut opts = LlmSessionOptions::new(ep.system_prompt.clone(), ep.model_name.clone());
    opts.provider = ep.provider.clone();
    opts.endpoint = Some(ep.base_url.clone());
    let mut transcript = JsonlTranscript::create(&Cohort::transcript_path(out, id))?;
    let record = run_llm_session(&mut client, &plan, id, &opts, &mut transcript)?;
    Cohort::append(out, &record)?;
    Ok(record.complete)
}

pub fn llm_run(ep: &EndpointConfig, config: &TaskConfig, out: &Path) -> Result<()> {
    ep.validate()?;
    std::fs::create_dir_all(out)?;
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    let incomplete = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..ep.concurrency.min(ep.seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = ep.seeds.get(i) else { break };
                match one_session(ep, config, seed, out) {
                    Ok(true) => {}
                    Ok(false) => {
                        incomplete.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => failures.lock().unwrap().push(format!("seed {seed}: {e:#}")),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    let incomplete = incomplete.into_inner();
    eprintln!(
        "{} sessions for {}: {} failed, {incomplete} aborted by transport errors",
        ep.seeds.len(),
        ep.model_name,
        failures.len()
    );
    if let Some(first) = failures.first() {
        bail!("{} of {} sessions failed; first: {first}", failures.len(), ep.seeds.len());
    }
    Ok(())
}
