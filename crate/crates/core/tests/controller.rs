mod common;

use forage_core::controller::{
    audit_trajectory, dispatch_action, replay_trajectory, run_episode, AnswerRequest, Backends,
    DispatchContext, Divergence, EpisodeConfig, EpisodeError, Instance, LogRecord, Mode,
    Termination, TrajectoryLog,
};
use forage_core::diagnosis::GapDiagnosis;
use forage_core::document::DocumentEnv;
use forage_core::epistemic::{EpistemicState, GroundingMode, EMPTY_STATE_SENTINEL};
use forage_core::gateway::{CallKind, CostLedger, MockBackend};
use forage_core::policy::{parse_script, Action, AnchorRef, ScriptedPolicy, TodoList};

fn run(
    instance: &Instance,
    config: &EpisodeConfig,
    script: Vec<Action>,
    diagnoses: Vec<String>,
    answer: &MockBackend,
) -> Result<forage_core::controller::EpisodeRun, EpisodeError> {
    let mut policy = ScriptedPolicy::new(script);
    let diagnosis = MockBackend::texts(diagnoses);
    run_episode(
        instance,
        config,
        Backends {
            policy: &mut policy,
            diagnosis: &diagnosis,
            answer,
        },
        &DocumentEnv::new(),
    )
}

#[test]
fn recorded_episode_replays() {
    let run = common::run_contextcam(Mode::Scout);
    assert_eq!(run.result.steps_used, 19);
    assert_eq!(run.result.terminated, Termination::Sufficient);
    assert_eq!(run.result.final_state.len(), 7);
    assert_eq!(run.result.answer_label.as_deref(), Some("C"));
    let indices: Vec<usize> = run.trace.steps().iter().map(|s| s.index).collect();
    assert_eq!(indices, (0..19).collect::<Vec<_>>());
    // The two searches the recording reports as empty stay empty.
    assert_eq!(run.trace.steps()[8].observation, "No matches found.");
    assert_eq!(run.trace.steps()[12].observation, "No matches found.");
    assert!(run.trace.steps()[2]
        .observation
        .contains("context_file.txt:437-437 → "));
    assert!(audit_trajectory(&run.log).is_clean());
}

#[test]
fn cost_is_the_sum_of_every_call() {
    let run = common::run_contextcam(Mode::Scout);
    let total: u64 = run.ledger.entries().iter().map(|e| e.usage.total()).sum();
    assert!((run.result.cost_k * 1000.0 - total as f64).abs() < 1e-6);
    let kinds = |k: CallKind| {
        run.ledger
            .entries()
            .iter()
            .filter(|e| e.call_kind == k)
            .count()
    };
    assert_eq!(kinds(CallKind::Policy), 19);
    assert_eq!(kinds(CallKind::Evaluate), 2);
    assert_eq!(kinds(CallKind::Answer), 1);
    let step_usage: u64 = run.trace.steps().iter().map(|s| s.usage.total()).sum();
    let answer_usage = run.ledger.entries().last().unwrap().usage.total();
    assert_eq!(step_usage + answer_usage, total);
}

#[test]
fn replay_is_byte_identical() {
    let a = common::run_contextcam(Mode::Scout).log.to_jsonl(false);
    let b = common::run_contextcam(Mode::Scout).log.to_jsonl(false);
    assert_eq!(a, b);
}

#[test]
fn trajectory_log_is_a_replay_script() {
    let run = common::run_contextcam(Mode::Scout);
    let text = run.log.to_jsonl(true);
    assert_eq!(parse_script(&text).unwrap(), common::contextcam_script());
    let back = TrajectoryLog::from_jsonl(&text).unwrap();
    assert_eq!(back, run.log);
    let header = back.header().unwrap();
    assert_eq!(header.mode, Mode::Scout);
    assert_eq!(back.footer().unwrap().steps_used, 19);
}

#[test]
fn zero_budget_is_rejected_and_one_step_exhausts() {
    let instance = common::contextcam_instance();
    let answer = MockBackend::texts(["(A) guess"]);
    let zero = EpisodeConfig {
        t_max: 0,
        ..EpisodeConfig::default()
    };
    assert!(matches!(
        run(&instance, &zero, vec![], vec![], &answer),
        Err(EpisodeError::InvalidConfig(_))
    ));
    let one = EpisodeConfig {
        t_max: 1,
        ..EpisodeConfig::default()
    };
    let out = run(
        &instance,
        &one,
        vec![Action::grep("Weather")],
        vec![],
        &answer,
    )
    .unwrap();
    assert_eq!(out.result.steps_used, 1);
    assert_eq!(out.result.terminated, Termination::BudgetExhausted);
    assert!(out.result.final_state.is_empty());
    assert!(answer.requests()[0].messages[1]
        .content
        .contains(EMPTY_STATE_SENTINEL));
}

#[test]
fn no_forage_blocks_the_document() {
    let instance = common::contextcam_instance();
    let answer = MockBackend::texts(["(B) guess"]);
    let config = EpisodeConfig {
        t_max: 4,
        mode: Mode::NoForage,
        ..EpisodeConfig::default()
    };
    let script = vec![
        Action::grep("Weather"),
        Action::read_lines(1, 3),
        Action::update("guess", AnchorRef::lines(1, 1)),
        Action::View { state_id: None },
    ];
    let out = run(&instance, &config, script, vec![], &answer).unwrap();
    let errors: Vec<bool> = out.log.steps().map(|s| s.is_error).collect();
    assert_eq!(errors, vec![true, true, true, false]);
    assert!(out.result.final_state.is_empty());
    assert_eq!(out.result.answer_label.as_deref(), Some("B"));
}

#[test]
fn no_file_tools_keeps_read_only() {
    let instance = common::contextcam_instance();
    let answer = MockBackend::texts(["x"]);
    let config = EpisodeConfig {
        t_max: 3,
        mode: Mode::NoFileTools,
        ..EpisodeConfig::default()
    };
    let script = vec![
        Action::grep("Weather"),
        Action::read_lines(437, 437),
        Action::GetFileInfo {
            source: "context_file.txt".into(),
        },
    ];
    let out = run(&instance, &config, script, vec![], &answer).unwrap();
    let errors: Vec<bool> = out.log.steps().map(|s| s.is_error).collect();
    assert_eq!(errors, vec![true, false, false]);
    assert!(out.trace.steps()[1].observation.contains("five types"));
}

#[test]
fn tool_errors_become_observations() {
    let instance = common::contextcam_instance();
    let answer = MockBackend::texts(["x"]);
    let config = EpisodeConfig {
        t_max: 3,
        ..EpisodeConfig::default()
    };
    let script = vec![
        Action::grep("(unclosed"),
        Action::read_lines(9000, 9001),
        Action::grep("Weather:"),
    ];
    let out = run(&instance, &config, script, vec![], &answer).unwrap();
    let obs: Vec<&str> = out
        .trace
        .steps()
        .iter()
        .map(|s| s.observation.as_str())
        .collect();
    assert!(obs[0].starts_with("Error: "));
    assert!(obs[1].starts_with("Error: "));
    assert!(obs[2].contains("1833"));
}

#[test]
fn diagnosis_backend_failure_keeps_the_partial_trace() {
    let instance = common::contextcam_instance();
    let answer = MockBackend::texts(["x"]);
    let script = vec![Action::grep("Weather"), Action::Evaluate];
    let err = run(
        &instance,
        &EpisodeConfig::default(),
        script,
        vec![],
        &answer,
    )
    .unwrap_err();
    let partial = err.partial().expect("partial episode");
    assert_eq!(partial.trace.len(), 1);
    assert!(matches!(err, EpisodeError::Dispatch { step: 1, .. }));
}

#[test]
fn dispatch_branches() {
    let env = DocumentEnv::new();
    let instance = common::contextcam_instance();
    let doc = env.register_document(&instance.doc_path).unwrap().id;
    let diagnosis = MockBackend::texts([GapDiagnosis::insufficient(["more"], "r", 0.5).to_json()]);
    let ctx = DispatchContext {
        env: &env,
        doc: &doc,
        query: &instance.query,
        diagnosis_backend: &diagnosis,
        grounding: GroundingMode::Strict,
        observation_budget: 4000,
        seed: None,
    };
    let mut todo = TodoList::default();
    let mut ledger = CostLedger::new();
    let state = EpistemicState::new();
    let prior = GapDiagnosis::sufficient("earlier", 0.5);

    let grep = dispatch_action(
        &Action::grep("Weather:"),
        &ctx,
        0,
        &state,
        Some(&prior),
        &mut todo,
        &mut ledger,
    )
    .unwrap();
    assert_eq!(grep.state, state);
    assert_eq!(grep.diagnosis.as_ref(), Some(&prior));

    let update = Action::update("Weather needs location.", AnchorRef::lines(1833, 1833));
    let up = dispatch_action(
        &update,
        &ctx,
        1,
        &state,
        Some(&prior),
        &mut todo,
        &mut ledger,
    )
    .unwrap();
    assert_eq!(up.state.len(), 1);
    assert_eq!(up.observation, up.state.render());
    assert_eq!(up.diagnosis.as_ref(), Some(&prior));

    let eval = dispatch_action(
        &Action::Evaluate,
        &ctx,
        2,
        &up.state,
        Some(&prior),
        &mut todo,
        &mut ledger,
    )
    .unwrap();
    assert_eq!(eval.state, up.state);
    let g = eval.diagnosis.unwrap();
    assert!(!g.is_sufficient);
    assert_eq!(eval.observation, g.to_json());
}

#[test]
fn answer_request_has_only_query_state_and_choices() {
    let run = common::run_contextcam(Mode::Scout);
    let request = AnswerRequest::new(
        &common::contextcam_instance().query,
        &run.result.final_state,
        common::contextcam_instance().choices.as_deref(),
    );
    let json = serde_json::to_value(&request).unwrap();
    let mut keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    keys.sort();
    assert_eq!(keys, ["choices", "query", "state_rendering"]);
    assert_eq!(request.state_rendering, run.result.final_state.render());
}

#[test]
fn scout_and_react_differ_only_in_answer_payload() {
    let scout = common::run_contextcam(Mode::Scout);
    let react = common::run_contextcam(Mode::React);
    let steps = |r: &forage_core::controller::EpisodeRun| -> Vec<(Action, String)> {
        r.trace
            .steps()
            .iter()
            .map(|s| (s.action.clone(), s.observation.clone()))
            .collect()
    };
    assert_eq!(steps(&scout), steps(&react));
    assert_eq!(scout.result.final_state, react.result.final_state);
}

#[test]
fn saved_trajectory_replays_offline() {
    let run = common::run_contextcam(Mode::Scout);
    let log = TrajectoryLog::from_jsonl(&run.log.to_jsonl(true)).unwrap();
    let replay = replay_trajectory(&log, None, &DocumentEnv::new()).unwrap();
    assert!(replay.is_faithful(), "{:?}", replay.divergence);
    assert_eq!(replay.run.log.to_jsonl(false), run.log.to_jsonl(false));

    let mut tampered = log.clone();
    for record in &mut tampered.records {
        if let LogRecord::Step(step) = record {
            if step.t == 3 {
                step.observation.push_str(" (edited)");
            }
        }
    }
    let replay = replay_trajectory(&tampered, None, &DocumentEnv::new()).unwrap();
    assert_eq!(
        replay.divergence,
        Some(Divergence {
            t: Some(3),
            field: "observation"
        })
    );
}
