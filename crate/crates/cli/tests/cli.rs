use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

use wmprobe::paradigm::TaskConfig;
use wmprobe::store::{read_scores_csv, session_to_json, Cohort};

fn wmprobe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmprobe")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = wmprobe(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A background server, killed on drop.
struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(args: &[&str]) -> Self {
        let mut child = Command::new(env!("CARGO_BIN_EXE_wmprobe"))
            .args(args)
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line.trim().strip_prefix("listening on ").expect("listen banner").to_string();
        Self { child, base }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn simulate_fit_score_roc_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    ok(&["simulate", "human", "30", "--seed", "1", "--out", p(&cohort)]);
    ok(&["simulate", "perfect", "10", "--seed", "1", "--out", p(&cohort)]);
    assert_eq!(Cohort::load(&cohort).unwrap().len(), 40);

    let fit = dir.path().join("fit.wmfit");
    let stdout = ok(&[
        "fit", "--cohort", p(&cohort), "--label", "sim-human", "--split-seed", "2", "--chains", "2", "--warmup", "300",
        "--draws", "300", "--seed", "3", "--out", p(&fit),
    ]);
    assert!(stdout.contains("max R-hat"), "{stdout}");
    assert!(stdout.contains("capacity") && stdout.contains("94% HDI"), "{stdout}");
    assert!(stdout.trim_end().ends_with(p(&fit)));

    let scores = dir.path().join("scores.csv");
    let score_args =
        ["score", "--artifact", p(&fit), "--cohort", p(&cohort), "--m", "16", "--m-joint", "32", "--seed", "4", "--out", p(&scores)];
    ok(&score_args);
    let first = std::fs::read(&scores).unwrap();
    ok(&score_args);
    assert_eq!(std::fs::read(&scores).unwrap(), first, "scoring must be deterministic");
    let rows = read_scores_csv(&scores).unwrap();
    assert_eq!(rows.len(), 6 + 10, "held-out humans plus all perfect responders");
    assert!(rows.iter().all(|r| r.report.n_trials_scored > 0 && r.report.mean_lppd <= 0.0));

    let roc_dir = dir.path().join("roc");
    let stdout = ok(&["roc", "--scores", p(&scores), "--positive", "sim-human", "--out", p(&roc_dir)]);
    assert!(stdout.contains("sim-perfect") && stdout.contains("threshold at FNR"), "{stdout}");
    let table = std::fs::read_to_string(roc_dir.join("auroc_table.csv")).unwrap();
    assert!(table.lines().next().unwrap().contains("auroc"));
    assert!(roc_dir.join("roc.csv").exists());
}

#[test]
fn fit_on_one_participant_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "human", "1", "--out", p(dir.path())]);
    let out = wmprobe(&["fit", "--cohort", p(dir.path()), "--label", "sim-human", "--out", p(&dir.path().join("f"))]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn screen_lists_every_perfect_responder() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "perfect", "12", "--seed", "9", "--out", p(dir.path())]);
    let stdout = ok(&["screen", "--cohort", p(dir.path())]);
    let listed: Vec<&str> = stdout.lines().map(|l| l.split('\t').next().unwrap()).collect();
    let ids: Vec<String> = Cohort::load(dir.path()).unwrap().sessions.iter().map(|s| s.participant_id.to_string()).collect();
    assert_eq!(listed, ids);
}

#[test]
fn gen_is_deterministic() {
    let a = ok(&["gen", "--seed", "5"]);
    assert_eq!(a, ok(&["gen", "--seed", "5"]));
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["trials"].as_array().unwrap().len(), 24);
}

#[test]
fn unknown_flags_are_rejected_and_help_lists_flags() {
    assert!(!wmprobe(&["screen", "--cohort", ".", "--bogus"]).status.success());
    let help = ok(&["score", "--help"]);
    for flag in ["--artifact", "--cohort", "--min-set-size", "--m", "--m-joint", "--seed", "--out"] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn serve_ingests_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("assets");
    std::fs::create_dir_all(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<html>task</html>").unwrap();
    let cohort = dir.path().join("cohort");
    let server = Server::start(&["serve", "--port", "0", "--cohort", p(&cohort), "--assets", p(&assets)]);
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();

    let config: TaskConfig = agent.get(format!("{}/api/config", server.base)).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(config, TaskConfig::default());
    let plan: Value = agent.get(format!("{}/api/plan?seed=3", server.base)).call().unwrap().body_mut().read_json().unwrap();
    assert_eq!(plan["seed"], 3);
    let page = agent.get(format!("{}/index.html", server.base)).call().unwrap().body_mut().read_to_string().unwrap();
    assert!(page.contains("task"));

    let src = tempfile::tempdir().unwrap();
    ok(&["simulate", "human", "1", "--seed", "6", "--out", p(src.path())]);
    let record = &Cohort::load(src.path()).unwrap().sessions[0];
    let body = session_to_json(record).unwrap();
    let url = format!("{}/api/sessions", server.base);
    let mut resp = agent.post(&url).header("content-type", "application/json").send(&body).unwrap();
    assert_eq!(resp.status(), 201);
    let v: Value = resp.body_mut().read_json().unwrap();
    assert_eq!(v["id"], record.participant_id.to_string());
    assert!(Cohort::session_path(&cohort, record.participant_id).exists());

    assert_eq!(agent.post(&url).send(&body).unwrap().status(), 409);
    let mut broken: Value = serde_json::from_str(&body).unwrap();
    broken.as_object_mut().unwrap().remove("trials");
    let mut resp = agent.post(&url).send(&broken.to_string()).unwrap();
    assert_eq!(resp.status(), 400);
    assert!(resp.body_mut().read_to_string().unwrap().contains("trials"));
}

#[test]
fn llm_run_against_mock_endpoint() {
    let server = Server::start(&["mock-endpoint", "--port", "0"]);
    let dir = tempfile::tempdir().unwrap();
    let endpoint = dir.path().join("endpoint.toml");
    std::fs::write(
        &endpoint,
        format!("base_url = \"{}/v1\"\nmodel_name = \"mock-1\"\nprovider = \"local\"\nsystem_prompt = \"wm\"\nseeds = [1, 2, 3]\n", server.base),
    )
    .unwrap();
    let out = dir.path().join("llm");
    ok(&["llm-run", "--endpoint", p(&endpoint), "--threads", "2", "--out", p(&out)]);
    let cohort = Cohort::load(&out).unwrap();
    assert_eq!(cohort.len(), 3);
    for s in &cohort.sessions {
        assert!(s.complete);
        assert_eq!(s.participant_type, "llm:mock-1:wm");
        assert_eq!(s.client.provider.as_deref(), Some("local"));
        assert!(Cohort::transcript_path(&out, s.participant_id).exists());
    }
    // A rerun finds every session on disk and does nothing.
    ok(&["llm-run", "--endpoint", p(&endpoint), "--out", p(&out)]);
    assert_eq!(Cohort::load(&out).unwrap().len(), 3);
}
