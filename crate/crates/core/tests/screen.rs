use wmprobe::agents::{simulate_cohort, HumanGenParams, SimKind, StyleParams};
use wmprobe::anomaly::{accuracy_screen, DEFAULT_SCREEN_THRESHOLD};
use wmprobe::paradigm::TaskConfig;
use wmprobe::store::SessionRecord;

/// A perfect session over 200 main trials with the answers after the first `correct`
/// marked incorrect.
fn with_accuracy(seed: u64, correct: usize) -> SessionRecord {
    let config = TaskConfig { repetitions_per_set_size: 20, ..TaskConfig::default() };
    let mut s = simulate_cohort(SimKind::Perfect, 1, seed, &config, &HumanGenParams::default(), &StyleParams::default())
        .unwrap()
        .remove(0);
    let main: Vec<usize> = (0..s.trials.len()).filter(|&i| !s.trials[i].trial.is_practice).collect();
    assert_eq!(main.len(), 200);
    for &i in &main[correct..] {
        s.trials[i].response.as_mut().unwrap().correct = false;
    }
    s
}

#[test]
fn threshold_is_inclusive() {
    let sessions = [with_accuracy(1, 120), with_accuracy(2, 190), with_accuracy(3, 188)];
    let accs: Vec<f64> = sessions.iter().map(|s| s.main_accuracy().unwrap()).collect();
    assert_eq!(accs, [0.6, 0.95, 0.94]);
    let hits = accuracy_screen(&sessions, DEFAULT_SCREEN_THRESHOLD);
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].participant_id, sessions[1].participant_id);
    assert_eq!(hits[0].accuracy, 0.95);
}

#[test]
fn screen_flags_every_perfect_and_few_humans() {
    let config = TaskConfig::default();
    let (h, st) = (HumanGenParams::default(), StyleParams::default());
    let perfect = simulate_cohort(SimKind::Perfect, 30, 4, &config, &h, &st).unwrap();
    assert_eq!(accuracy_screen(&perfect, DEFAULT_SCREEN_THRESHOLD).len(), 30);
    let humans = simulate_cohort(SimKind::Human, 100, 4, &config, &h, &st).unwrap();
    let flagged = accuracy_screen(&humans, DEFAULT_SCREEN_THRESHOLD).len();
    assert!(flagged <= 15, "{flagged} of 100 sim-humans flagged");
}
