//! The probed serial-recall task: balanced trial plans, probe wording,
//! answer grading, the instruction quiz, and the catch questions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// RNG stream ids. Keeping them apart means changing how many draws one
/// part of a session takes never perturbs another.
const STREAM_TRIALS: u64 = 0;
const STREAM_CATCH: u64 = 1;
const STREAM_GATE: u64 = 2;

pub const DEFAULT_ALPHABET: [char; 20] = [
    'B', 'C', 'D', 'F', 'G', 'H', 'J', 'K', 'L', 'M', 'N', 'P', 'Q', 'R', 'S', 'T', 'V', 'W',
    'X', 'Z',
];

/// Set sizes used for practice trials (inclusive range).
const PRACTICE_SET_SIZES: (u32, u32) = (3, 6);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct TaskConfig {
    pub set_size_min: u32,
    pub set_size_max: u32,
    pub repetitions_per_set_size: u32,
    pub practice_trials: u32,
    pub presentation_ms: u32,
    pub isi_ms: u32,
    pub alphabet: Vec<char>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            set_size_min: 3,
            set_size_max: 12,
            repetitions_per_set_size: 2,
            practice_trials: 4,
            presentation_ms: 800,
            isi_ms: 300,
            alphabet: DEFAULT_ALPHABET.to_vec(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.set_size_min < 2 {
            return fail(format!("set_size_min must be >= 2, got {}", self.set_size_min));
        }
        if self.set_size_max < self.set_size_min {
            return fail(format!(
                "set_size_max ({}) < set_size_min ({})",
                self.set_size_max, self.set_size_min
            ));
        }
        let mut letters = self.alphabet.clone();
        letters.sort_unstable();
        letters.dedup();
        if letters.len() != self.alphabet.len() {
            return fail("alphabet contains duplicate letters".into());
        }
        if let Some(c) = self.alphabet.iter().find(|c| !c.is_ascii_uppercase()) {
            return fail(format!("alphabet letter {c:?} is not an uppercase ASCII letter"));
        }
        if self.set_size_max as usize > self.alphabet.len() {
            return fail(format!(
                "set_size_max ({}) exceeds alphabet size ({})",
                self.set_size_max,
                self.alphabet.len()
            ));
        }
        if self.repetitions_per_set_size == 0 {
            return fail("repetitions_per_set_size must be >= 1".into());
        }
        if self.presentation_ms == 0 {
            return fail("presentation_ms must be > 0".into());
        }
        Ok(())
    }

    pub fn main_trial_count(&self) -> usize {
        ((self.set_size_max - self.set_size_min + 1) * self.repetitions_per_set_size) as usize
    }

    /// The multiset of main-trial set sizes, sorted ascending.
    pub fn balanced_set_sizes(&self) -> Vec<u32> {
        (self.set_size_min..=self.set_size_max)
            .flat_map(|n| std::iter::repeat_n(n, self.repetitions_per_set_size as usize))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ProbeType {
    Position,
    Successor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    Position(u32),
    Letter(char),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Trial {
    pub index: u32,
    pub set_size: u32,
    pub letters: Vec<char>,
    pub probe_type: ProbeType,
    /// 1-based serial position of the item to recall.
    pub target_position: u32,
    pub cue: Cue,
    pub correct_answer: char,
    pub is_practice: bool,
}

impl Trial {
    /// Checks the structural invariants of a trial.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("trial {}: {m}", self.index)));
        if self.letters.len() != self.set_size as usize {
            return bad("letters length differs from set_size");
        }
        let mut sorted = self.letters.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.letters.len() {
            return bad("letters are not pairwise distinct");
        }
        if self.target_position < 1 || self.target_position > self.set_size {
            return bad("target_position out of range");
        }
        let target = self.letters[self.target_position as usize - 1];
        if target != self.correct_answer {
            return bad("correct_answer does not match the target letter");
        }
        match (self.probe_type, self.cue) {
            (ProbeType::Position, Cue::Position(p)) if p == self.target_position => Ok(()),
            (ProbeType::Successor, Cue::Letter(c))
                if self.target_position >= 2
                    && c == self.letters[self.target_position as usize - 2] =>
            {
                Ok(())
            }
            _ => bad("cue inconsistent with probe type and target"),
        }
    }
}

fn draw_trial<R: Rng>(
    rng: &mut R,
    config: &TaskConfig,
    index: u32,
    set_size: u32,
    is_practice: bool,
) -> Trial {
    let mut pool = config.alphabet.clone();
    let (chosen, _) = pool.partial_shuffle(rng, set_size as usize);
    let letters = chosen.to_vec();
    let probe_type = if rng.random_bool(0.5) {
        ProbeType::Position
    } else {
        ProbeType::Successor
    };
    let (target_position, cue) = match probe_type {
        ProbeType::Position => {
            let p = rng.random_range(1..=set_size);
            (p, Cue::Position(p))
        }
        ProbeType::Successor => {
            let p = rng.random_range(2..=set_size);
            (p, Cue::Letter(letters[p as usize - 2]))
        }
    };
    Trial {
        index,
        set_size,
        correct_answer: letters[target_position as usize - 1],
        letters,
        probe_type,
        target_position,
        cue,
        is_practice,
    }
}

/// Generates the practice trials followed by the balanced main trials.
///
/// The result is a pure function of `(seed, config)`.
pub fn generate_session(seed: u64, config: &TaskConfig) -> Result<Vec<Trial>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_TRIALS);

    let practice_max = PRACTICE_SET_SIZES.1.min(config.set_size_max);
    let practice_min = PRACTICE_SET_SIZES.0.max(config.set_size_min).min(practice_max);
    let mut trials = Vec::with_capacity(config.practice_trials as usize + config.main_trial_count());
    for i in 0..config.practice_trials {
        let n = rng.random_range(practice_min..=practice_max);
        trials.push(draw_trial(&mut rng, config, i, n, true));
    }

    let mut sizes = config.balanced_set_sizes();
    sizes.shuffle(&mut rng);
    for (i, n) in sizes.into_iter().enumerate() {
        trials.push(draw_trial(&mut rng, config, i as u32, n, false));
    }
    Ok(trials)
}

/// Everything a participant will be shown, fixed up front from one seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub seed: u64,
    pub config: TaskConfig,
    pub trials: Vec<Trial>,
    pub gate_code_hex: String,
    pub catch_question: CatchQuestion,
}

impl SessionPlan {
    pub fn new(seed: u64, config: &TaskConfig) -> Result<Self> {
        let trials = generate_session(seed, config)?;
        let gate_code_hex = gate_code(seed);
        let catch_question = assign_catch_question(seed, &gate_code_hex)?;
        Ok(Self {
            seed,
            config: config.clone(),
            trials,
            gate_code_hex,
            catch_question,
        })
    }

    pub fn main_trials(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| !t.is_practice)
    }
}

/// English ordinal: 1st, 2nd, 3rd, 4th, 11th, 12th, 13th, 21st, ...
pub fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

pub fn render_probe(trial: &Trial) -> String {
    match trial.cue {
        Cue::Position(p) => format!("What was the {} letter?", ordinal(p)),
        Cue::Letter(c) => format!("What letter came after {c}?"),
    }
}

/// Outcome of grading a single typed answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Graded {
    pub correct: bool,
    /// The answer was not a single letter from the task alphabet.
    pub invalid: bool,
}

pub fn grade_response(trial: &Trial, answer: &str, alphabet: &[char]) -> Graded {
    let normalized = answer.trim().to_uppercase();
    let mut chars = normalized.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if alphabet.contains(&c) => Graded {
            correct: c == trial.correct_answer,
            invalid: false,
        },
        _ => Graded {
            correct: false,
            invalid: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CatchKind {
    LowResourceLanguage,
    HexRecall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct CatchQuestion {
    pub kind: CatchKind,
    pub prompt_text: String,
    pub language_tag: Option<String>,
    /// Decimal gate code for hex recall; empty for language questions.
    pub expected_answer: String,
    /// Accepted answer keywords for language questions.
    #[serde(default)]
    pub keywords: Vec<String>,
    pub skippable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum CatchGrade {
    Pass,
    Fail,
    Skipped,
}

#[derive(Deserialize)]
struct CatchAssets {
    version: u32,
    language_questions: Vec<LanguageAsset>,
    hex_recall: HexAsset,
}

#[derive(Deserialize)]
struct LanguageAsset {
    language: String,
    prompt: String,
    keywords: Vec<String>,
}

#[derive(Deserialize)]
struct HexAsset {
    prompt: String,
}

const CATCH_ASSETS: &str = include_str!("../assets/catch_questions.json");
const CATCH_ASSETS_VERSION: u32 = 1;

fn catch_assets() -> CatchAssets {
    let assets: CatchAssets =
        serde_json::from_str(CATCH_ASSETS).expect("bundled catch-question asset is valid JSON");
    assert_eq!(assets.version, CATCH_ASSETS_VERSION, "catch asset version");
    assets
}

pub fn parse_gate_code(gate_code_hex: &str) -> Result<u32> {
    let ok = (1..=8).contains(&gate_code_hex.len())
        && gate_code_hex.chars().all(|c| c.is_ascii_hexdigit());
    if !ok {
        return Err(Error::Config(format!(
            "gate code must be 1-8 hex digits, got {gate_code_hex:?}"
        )));
    }
    u32::from_str_radix(gate_code_hex, 16).map_err(|e| Error::Config(e.to_string()))
}

/// Four uppercase hex digits shown on the instructions gate screen.
pub fn gate_code(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_GATE);
    format!("{:04X}", rng.random_range(0x1000u32..=0xFFFF))
}

/// Draws one of the two language questions or the hex-recall question,
/// uniformly.
pub fn assign_catch_question(seed: u64, gate_code_hex: &str) -> Result<CatchQuestion> {
    let decimal = parse_gate_code(gate_code_hex)?;
    let assets = catch_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_CATCH);
    let choice = rng.random_range(0..assets.language_questions.len() + 1);
    Ok(match assets.language_questions.into_iter().nth(choice) {
        Some(q) => CatchQuestion {
            kind: CatchKind::LowResourceLanguage,
            prompt_text: q.prompt,
            language_tag: Some(q.language),
            expected_answer: String::new(),
            keywords: q.keywords,
            skippable: true,
        },
        None => CatchQuestion {
            kind: CatchKind::HexRecall,
            prompt_text: assets.hex_recall.prompt,
            language_tag: None,
            expected_answer: decimal.to_string(),
            keywords: Vec::new(),
            skippable: true,
        },
    })
}

pub fn grade_catch(question: &CatchQuestion, answer: Option<&str>) -> CatchGrade {
    let Some(answer) = answer.map(str::trim).filter(|a| !a.is_empty()) else {
        return CatchGrade::Skipped;
    };
    let pass = match question.kind {
        CatchKind::HexRecall => answer == question.expected_answer,
        CatchKind::LowResourceLanguage => {
            let lower = answer.to_lowercase();
            question
                .keywords
                .iter()
                .any(|k| lower.contains(&k.to_lowercase()))
        }
    };
    if pass {
        CatchGrade::Pass
    } else {
        CatchGrade::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizItem {
    pub question_text: String,
    pub options: Vec<String>,
    pub correct_index: usize,
}

/// Instruction comprehension quiz. All items must be answered correctly to
/// proceed; otherwise the participant re-reads the instructions.
pub fn instruction_quiz() -> Vec<QuizItem> {
    let item = |q: &str, opts: [&str; 3], correct: usize| QuizItem {
        question_text: q.to_string(),
        options: opts.iter().map(|s| s.to_string()).collect(),
        correct_index: correct,
    };
    vec![
        item(
            "A question such as \"What was the 3rd letter?\" asks you for:",
            [
                "The letter shown at that position in the list",
                "How many letters were shown",
                "A letter that was not shown",
            ],
            0,
        ),
        item(
            "For a question such as \"What letter came after X?\" you should answer:",
            [
                "The letter shown just before X",
                "The letter shown just after X",
                "The letter X itself",
            ],
            1,
        ),
        item(
            "How do you answer each question?",
            [
                "Type the whole list",
                "Type a number",
                "Type a single letter",
            ],
            2,
        ),
    ]
}

/// Plain-text task instructions shared by the web task and the textual
/// interface.
pub fn instructions_text(config: &TaskConfig) -> String {
    format!(
        "In this experiment you will see lists of letters, shown one at a time. \
         Each list has between {min} and {max} letters. After each list you will be asked \
         about one letter from it, either by its position (for example \"What was the 3rd \
         letter?\") or by the letter that came before it (for example \"What letter came \
         after X?\"). Answer with a single letter. Please do not write the letters down. \
         You will first answer a short quiz about these instructions and then complete \
         {practice} practice trials with feedback, followed by {main} trials without feedback.",
        min = config.set_size_min,
        max = config.set_size_max,
        practice = config.practice_trials,
        main = config.main_trial_count(),
    )
}
