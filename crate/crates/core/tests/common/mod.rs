//! Shared fixtures: the recorded ContextCam episode, randomized sentinel
//! episodes and the needle-in-filler generator.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use forage_core::controller::{run_episode, Backends, EpisodeConfig, EpisodeRun, Instance, Mode};
use forage_core::diagnosis::GapDiagnosis;
use forage_core::document::DocumentEnv;
use forage_core::gateway::{
    ChatBackend, ChatRequest, ChatResponse, FnBackend, MockBackend, ToolCall,
};
use forage_core::policy::{parse_script, Action, AnchorRef, ScriptedPolicy, TodoItem, TodoStatus};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// ---------------------------------------------------------------------------
// Recorded episode over the ContextCam document.

pub const CONTEXTCAM_ANSWER: &str = "(C) facial expression, music, and screen content";

pub fn contextcam_instance() -> Instance {
    let line = std::fs::read_to_string(fixture("context_file_instance.jsonl")).unwrap();
    let mut instance: Instance = serde_json::from_str(line.trim()).unwrap();
    instance.doc_path = fixture("context_file.txt");
    instance
}

pub fn contextcam_script() -> Vec<Action> {
    parse_script(&std::fs::read_to_string(fixture("context_file_script.jsonl")).unwrap()).unwrap()
}

/// The raw tool calls of the recording, as a policy model would emit them.
pub fn contextcam_tool_calls() -> Vec<ToolCall> {
    std::fs::read_to_string(fixture("context_file_script.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

pub fn contextcam_diagnoses() -> Vec<String> {
    let first = GapDiagnosis::insufficient(
        vec![
            "Explicit policy: what the system does when Location permission is off.",
            "Explicit dependency: does Weather consume Location output or can it run independently?",
            "At most check: any fallback (IP or manual city) or indirect inference that could still provide Weather or Location.",
        ],
        "Only the context types and detector descriptions are known.",
        0.4,
    );
    let last = GapDiagnosis::sufficient(
        "Policy disables Location and cascades to Weather; privacy guarantee forbids indirect inference; no fallback exists; remaining independent contexts are Screen, Face, Music.",
        0.96,
    );
    vec![first.to_json(), last.to_json()]
}

/// One mock carrying the 19 policy replies followed by the answer reply.
pub fn contextcam_model() -> Arc<MockBackend> {
    let mut replies: Vec<ChatResponse> = contextcam_tool_calls()
        .into_iter()
        .map(ChatResponse::tool_call)
        .collect();
    replies.push(ChatResponse::text(CONTEXTCAM_ANSWER));
    Arc::new(MockBackend::new(replies))
}

pub fn run_contextcam(mode: Mode) -> EpisodeRun {
    let instance = contextcam_instance();
    let mut policy = ScriptedPolicy::new(contextcam_script());
    let diagnosis = MockBackend::texts(contextcam_diagnoses());
    let answer = MockBackend::texts([CONTEXTCAM_ANSWER]);
    let config = EpisodeConfig {
        mode,
        ..EpisodeConfig::default()
    };
    run_episode(
        &instance,
        &config,
        Backends {
            policy: &mut policy,
            diagnosis: &diagnosis,
            answer: &answer,
        },
        &DocumentEnv::new(),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// Randomized episodes with sentinel tokens that only ever reach the trace.

const FILLER: &[&str] = &[
    "river", "stone", "market", "window", "lantern", "harbor", "meadow", "copper", "signal",
    "garden", "thunder", "velvet", "orbit", "canyon", "ember", "quartz", "willow", "anchor",
    "prairie", "tunnel", "beacon", "glacier", "saddle", "cobalt", "pepper", "falcon", "maple",
];
const COLORS: &[&str] = &["red", "blue", "green", "amber", "violet", "silver", "black"];

fn filler_line(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(6..14);
    let words: Vec<&str> = (0..n).map(|_| *FILLER.choose(rng).unwrap()).collect();
    let mut line = words.join(" ");
    line.push('.');
    line
}

pub struct SentinelEpisode {
    pub instance: Instance,
    pub script: Vec<Action>,
    pub diagnoses: Vec<String>,
    /// Tokens planted in observations only.
    pub sentinels: Vec<String>,
}

/// Builds a random episode: a document whose fact lines carry sentinel tags,
/// a script that finds, reads and commits distilled (tag-free) facts, todo
/// notes and diagnoses that mention further sentinels.
pub fn sentinel_episode(dir: &Path, seed: u64) -> SentinelEpisode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentinel = |rng: &mut ChaCha8Rng, k: usize| {
        format!("ZQX{seed}S{k}T{:06x}", rng.gen::<u32>() & 0xff_ffff)
    };
    let mut sentinels = Vec::new();
    let n_lines = rng.gen_range(80..400);
    let mut lines: Vec<String> = (0..n_lines).map(|_| filler_line(&mut rng)).collect();
    let n_facts = rng.gen_range(1..5);
    let mut facts = Vec::new();
    let mut used = std::collections::HashSet::new();
    for i in 0..n_facts {
        let mut at = rng.gen_range(0..n_lines);
        while !used.insert(at) {
            at = rng.gen_range(0..n_lines);
        }
        let color = COLORS.choose(&mut rng).unwrap();
        let door = rng.gen_range(1..500);
        let tag = sentinel(&mut rng, sentinels.len());
        lines[at] = format!("Record {i}: the {color} key opens door {door}. Audit tag {tag}.");
        sentinels.push(tag);
        facts.push((i, at + 1, format!("The {color} key opens door {door}.")));
    }
    let path = dir.join(format!("records-{seed}.txt"));
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();

    let mut script = Vec::new();
    let mut diagnoses = Vec::new();
    let insufficient = |rng: &mut ChaCha8Rng, sentinels: &mut Vec<String>| {
        let tag = sentinel(rng, sentinels.len());
        sentinels.push(tag.clone());
        GapDiagnosis::insufficient(
            vec![format!("still missing records ({tag})")],
            format!("gap noted {tag}"),
            0.3,
        )
        .to_json()
    };
    if rng.gen_bool(0.5) {
        let tag = sentinel(&mut rng, sentinels.len());
        sentinels.push(tag.clone());
        script.push(Action::TodoWrite {
            todos: vec![TodoItem {
                content: format!("find every record, note {tag}"),
                status: TodoStatus::InProgress,
            }],
        });
    }
    for (i, line, distilled) in &facts {
        if rng.gen_bool(0.3) {
            script.push(Action::grep(format!("Record {i}: nonexistent")));
        }
        script.push(Action::grep(format!("Record {i}:")));
        script.push(Action::read_lines(*line, *line));
        if rng.gen_bool(0.3) {
            script.push(Action::View { state_id: None });
        }
        script.push(Action::update(
            distilled.clone(),
            AnchorRef::lines(*line, *line),
        ));
        if rng.gen_bool(0.5) {
            script.push(Action::Evaluate);
            diagnoses.push(insufficient(&mut rng, &mut sentinels));
        }
    }
    script.push(Action::Evaluate);
    let tag = sentinel(&mut rng, sentinels.len());
    sentinels.push(tag.clone());
    diagnoses.push(GapDiagnosis::sufficient(format!("all records found {tag}"), 0.9).to_json());

    let instance = Instance {
        id: format!("sentinel-{seed}"),
        query: "Which doors do the recorded keys open?".into(),
        doc_path: path,
        gold: None,
        choices: None,
    };
    SentinelEpisode {
        instance,
        script,
        diagnoses,
        sentinels,
    }
}

/// Runs a sentinel episode; returns the run and the text of every request
/// sent to the answer backend.
pub fn run_sentinel(episode: &SentinelEpisode, mode: Mode) -> (EpisodeRun, String) {
    let mut policy = ScriptedPolicy::new(episode.script.clone());
    let diagnosis = MockBackend::texts(episode.diagnoses.clone());
    let answer = MockBackend::texts(["The keys open the listed doors."]);
    let config = EpisodeConfig {
        mode,
        context_budget: 200_000,
        ..EpisodeConfig::default()
    };
    let run = run_episode(
        &episode.instance,
        &config,
        Backends {
            policy: &mut policy,
            diagnosis: &diagnosis,
            answer: &answer,
        },
        &DocumentEnv::new(),
    )
    .unwrap();
    let requests = answer.requests();
    assert_eq!(requests.len(), 1);
    (run, requests[0].wire_body("mock"))
}

// ---------------------------------------------------------------------------
// Needle in filler.

pub struct NeedleCase {
    pub instance: Instance,
    pub vault: u32,
    pub passphrase: String,
}

/// Filler text of at least `tokens` estimated tokens (four bytes each).
pub fn filler_text(tokens: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = Vec::new();
    let mut bytes = 0;
    while bytes < tokens * 4 {
        let line = filler_line(&mut rng);
        bytes += line.len() + 1;
        lines.push(line);
    }
    lines
}

/// Plants one passphrase fact and a few same-shaped distractors for other
/// vaults at random lines of `filler`, and writes the document.
pub fn needle_case(dir: &Path, filler: &[String], seed: u64) -> NeedleCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vault = rng.gen_range(100..1000);
    let word = |rng: &mut ChaCha8Rng| -> String {
        (0..8)
            .map(|_| char::from(b'a' + rng.gen_range(0..26u8)))
            .collect()
    };
    let passphrase = format!("{}-{}", word(&mut rng), rng.gen_range(10..100));
    let mut planted: Vec<(usize, String)> = Vec::new();
    let at = rng.gen_range(0..filler.len());
    planted.push((
        at,
        format!("The secret passphrase for vault {vault} is {passphrase}."),
    ));
    for _ in 0..5 {
        let other = loop {
            let v = rng.gen_range(100..10_000);
            if v != vault {
                break v;
            }
        };
        let at = rng.gen_range(0..filler.len());
        let decoy = format!("{}-{}", word(&mut rng), rng.gen_range(10..100));
        planted.push((
            at,
            format!("The secret passphrase for vault {other} is {decoy}."),
        ));
    }
    let mut text = String::with_capacity(filler.iter().map(|l| l.len() + 1).sum::<usize>() + 400);
    for (i, line) in filler.iter().enumerate() {
        for (_, fact) in planted.iter().filter(|(p, _)| *p == i) {
            text.push_str(fact);
            text.push('\n');
        }
        text.push_str(line);
        text.push('\n');
    }
    let path = dir.join(format!("needle-{seed}.txt"));
    std::fs::write(&path, text).unwrap();
    NeedleCase {
        instance: Instance {
            id: format!("needle-{seed}"),
            query: format!("What is the secret passphrase for vault {vault}?"),
            doc_path: path,
            gold: Some(passphrase.clone()),
            choices: None,
        },
        vault,
        passphrase,
    }
}

fn last_user(request: &ChatRequest) -> String {
    request
        .messages
        .last()
        .map(|m| m.content.clone())
        .unwrap_or_default()
}

/// A stand-in model that reports sufficiency once the evidence holds a
/// passphrase for the vault the question asks about.
pub fn needle_diagnosis() -> impl ChatBackend {
    FnBackend(|request: &ChatRequest| {
        let text = last_user(request);
        let vault = Regex::new(r"vault (\d+)\?").unwrap();
        let asked = vault
            .captures(&text)
            .map(|c| c[1].to_string())
            .unwrap_or_default();
        let found = text.contains(&format!("passphrase for vault {asked} is"));
        let g = if found {
            GapDiagnosis::sufficient("the passphrase is recorded", 0.9)
        } else {
            GapDiagnosis::insufficient(vec!["the passphrase"], "not found yet", 0.2)
        };
        Ok(ChatResponse::text(g.to_json()))
    })
}

/// A stand-in model that answers with the passphrase found in the evidence.
pub fn needle_answerer() -> impl ChatBackend {
    FnBackend(|request: &ChatRequest| {
        let text = last_user(request);
        let asked = Regex::new(r"vault (\d+)\?")
            .unwrap()
            .captures(&text)
            .map(|c| c[1].to_string());
        let answer = asked
            .and_then(|v| {
                Regex::new(&format!(r"passphrase for vault {v} is ([a-z]+-\d+)"))
                    .unwrap()
                    .captures(&text)
                    .map(|c| c[1].to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Ok(ChatResponse::text(answer))
    })
}

pub fn needle_pattern(case: &NeedleCase) -> String {
    format!("secret passphrase for vault {} is", case.vault)
}
