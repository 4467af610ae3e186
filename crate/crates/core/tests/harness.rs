use std::fs;
use std::path::Path;
use std::sync::mpsc;
use std::sync::OnceLock;

use sharedwalk::harness::{
    self, clamp_command, load_artefacts, read_telemetry, recorded_inputs, run_experiment, run_live,
    session_info, Artefacts, ClientMessage, DriverCommand, DriverLimits, ErrorCode,
    ExperimentConfig, ExternalPolicy, HarnessError, PolicyKind, ReplayPolicy, Role, RunReport,
    ServerMessage, SessionHub, Simulation, REPORT_FILE, SCHEMA_VERSION, TELEMETRY_FILE,
};
use tempfile::TempDir;

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(
        None,
        &[
            "synth.paths=80".into(),
            "synth.dataset.per_class=300".into(),
            "train.autoencoder.epochs=3".into(),
            "train.classifier.epochs=3".into(),
            "run.duration=12".into(),
        ],
    )
    .unwrap();
    cfg.artefact_dir = dir.join("artefacts");
    cfg.output_dir = dir.join("run");
    cfg
}

fn build_all(cfg: &ExperimentConfig) {
    harness::map_build(cfg).unwrap();
    harness::synth(cfg).unwrap();
    harness::train(cfg, |_| {}).unwrap();
    harness::behmap(cfg).unwrap();
}

struct Fixture {
    _dir: TempDir,
    cfg: ExperimentConfig,
    art: Artefacts,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let cfg = small_config(dir.path());
        build_all(&cfg);
        let art = load_artefacts(&cfg).unwrap();
        Fixture {
            _dir: dir,
            cfg,
            art,
        }
    })
}

#[test]
fn pipeline_files_are_reproducible() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    build_all(&cfg);
    let (a, b) = (f.cfg.paths(), cfg.paths());
    for (x, y) in [
        (&a.roadmap, &b.roadmap),
        (&a.trajectories, &b.trajectories),
        (&a.dataset, &b.dataset),
        (&a.autoencoder, &b.autoencoder),
        (&a.classifier, &b.classifier),
        (&a.behmap, &b.behmap),
        (&a.behmap_csv, &b.behmap_csv),
    ] {
        assert_eq!(
            fs::read(x).unwrap(),
            fs::read(y).unwrap(),
            "{} differs",
            x.display()
        );
    }
}

#[test]
fn training_summary_prints_both_tables() {
    let f = fixture();
    let text = fs::read_to_string(f.cfg.paths().training).unwrap();
    let s: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(s["version"], 1);
    let summary: harness::TrainingSummary = serde_json::from_value(s).unwrap();
    let table = summary.table();
    for word in ["RMSE", "cos θ", "κ", "Left", "Right", "Straight", "Average"] {
        assert!(table.contains(word), "{word} missing from\n{table}");
    }
}

#[test]
fn missing_artefacts_name_the_step_to_run() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let e = load_artefacts(&cfg).unwrap_err().to_string();
    assert!(e.contains("map-build"), "{e}");
    let e = harness::synth(&cfg).unwrap_err().to_string();
    assert!(e.contains("map-build"), "{e}");
    harness::map_build(&cfg).unwrap();
    let e = harness::train(&cfg, |_| {}).unwrap_err().to_string();
    assert!(e.contains("dataset"), "{e}");
}

#[test]
fn behaviour_map_from_other_models_is_refused() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config(dir.path());
    harness::map_build(&cfg).unwrap();
    harness::synth(&cfg).unwrap();
    cfg.train.classifier.seed = 7;
    harness::train(&cfg, |_| {}).unwrap();
    cfg.files.behmap = Some(f.cfg.paths().behmap);
    assert!(load_artefacts(&cfg).is_err());
}

#[test]
fn dataset_version_is_checked() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let p = cfg.paths();
    fs::create_dir_all(&cfg.artefact_dir).unwrap();
    fs::write(
        &p.dataset,
        r#"{"version": 99, "windows": [], "labels": []}"#,
    )
    .unwrap();
    match harness::train(&cfg, |_| {}) {
        Err(HarnessError::Version { found: 99, .. }) => {}
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn run_writes_telemetry_and_a_recomputable_report() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let mut cfg = f.cfg.clone();
    cfg.output_dir = dir.path().join("out");
    let outcome = harness::run(&cfg).unwrap();
    let tpath = cfg.output_dir.join(TELEMETRY_FILE);
    let saved = RunReport::load(&cfg.output_dir.join(REPORT_FILE)).unwrap();
    assert_eq!(saved, outcome.report);

    let records = read_telemetry(&tpath).unwrap();
    assert_eq!(records, outcome.records);
    let again = harness::report(&tpath).unwrap();
    assert_eq!(again, outcome.report);

    // independent recomputation of the sums, in record order
    let n = records.len() as f64;
    let mean_tau = records
        .iter()
        .map(|r| 0.5 * (r.tau_r.abs() + r.tau_l.abs()))
        .sum::<f64>()
        / n;
    let mean_eps = records.iter().map(|r| r.eps_hat).sum::<f64>() / n;
    let max_tau = records
        .iter()
        .map(|r| r.tau_r.abs().max(r.tau_l.abs()))
        .fold(0.0, f64::max);
    assert_eq!(again.mean_abs_torque.to_bits(), mean_tau.to_bits());
    assert_eq!(again.mean_eps_hat.to_bits(), mean_eps.to_bits());
    assert_eq!(again.max_abs_torque, max_tau);
    assert_eq!(again.steps, records.len());
}

#[test]
fn identical_configuration_gives_identical_telemetry() {
    let f = fixture();
    let dirs = [TempDir::new().unwrap(), TempDir::new().unwrap()];
    let files: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            let mut cfg = f.cfg.clone();
            cfg.run.policy.kind = PolicyKind::Rough;
            cfg.run.localisation_noise = 0.05;
            cfg.output_dir = d.path().to_path_buf();
            harness::run(&cfg).unwrap();
            fs::read(d.path().join(TELEMETRY_FILE)).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
}

#[test]
fn replay_reproduces_the_recorded_run() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let mut cfg = f.cfg.clone();
    cfg.run.policy.kind = PolicyKind::Rough;
    cfg.output_dir = dir.path().join("first");
    let first = harness::run(&cfg).unwrap();

    cfg.run.policy.kind = PolicyKind::Replay;
    cfg.replay = Some(cfg.output_dir.join(TELEMETRY_FILE));
    cfg.output_dir = dir.path().join("second");
    let second = harness::run(&cfg).unwrap();
    assert_eq!(first.records.len(), second.records.len());
    for (a, b) in first.records.iter().zip(&second.records) {
        assert_eq!(
            (a.x, a.y, a.theta, a.alpha_r, a.alpha_l),
            (b.x, b.y, b.theta, b.alpha_r, b.alpha_l),
            "step {}",
            a.step
        );
        assert_eq!((a.tau_r, a.tau_l, a.eps_hat), (b.tau_r, b.tau_l, b.eps_hat));
    }
}

#[test]
fn replay_without_a_file_is_a_config_error() {
    let mut cfg = fixture().cfg.clone();
    cfg.run.policy.kind = PolicyKind::Replay;
    assert!(matches!(
        harness::configured_policy(&cfg),
        Err(HarnessError::Config(_))
    ));
    cfg.run.policy.kind = PolicyKind::External;
    assert!(harness::configured_policy(&cfg).is_err());
}

#[test]
fn adversarial_report_marks_the_deviation() {
    let f = fixture();
    let mut settings = f.cfg.run.clone();
    settings.policy.kind = PolicyKind::Adversarial;
    settings.duration = 25.0;
    let policy = harness::scripted_policy(&settings.policy, settings.seed).unwrap();
    let out = run_experiment(&f.art, &settings, policy, None).unwrap();
    if out
        .mission
        .references
        .iter()
        .any(|r| r.class == settings.policy.deviation_class)
    {
        let e = out.report.deviation.clone().expect("deviation episode");
        assert!(e.start < e.release);
        assert!((e.release - e.start - settings.policy.deviation_duration).abs() < 0.05);
        assert!(e.t_min >= e.start && e.t_min <= e.release);
        let text = harness::describe(&out.report);
        assert!(
            text.contains("deviation") && text.contains("minimum"),
            "{text}"
        );
    } else {
        assert!(out.report.deviation.is_none());
    }
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(
        &path,
        "map = \"two_rooms\"\n[run]\nduration = 7.0\n[run.policy]\nkind = \"rough\"\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(Some(&path), &["run.duration=9".into()]).unwrap();
    assert_eq!(cfg.map, "two_rooms");
    assert_eq!(cfg.run.duration, 9.0);
    assert_eq!(cfg.run.policy.kind, PolicyKind::Rough);
    fs::write(&path, "[run]\nspeed = 1.0\n").unwrap();
    assert!(ExperimentConfig::load(Some(&path), &[]).is_err());
}

fn hub() -> (SessionHub, mpsc::Receiver<DriverCommand>) {
    let f = fixture();
    let sim = Simulation::new(
        &f.art,
        f.cfg.run.clone(),
        Box::new(ReplayPolicy::new(Vec::new())),
    )
    .unwrap();
    let info = session_info(&f.art, sim.mission(), &f.cfg.run, 10.0, false);
    let (tx, rx) = mpsc::channel();
    (SessionHub::new(info, tx), rx)
}

fn hello(role: &str) -> String {
    format!(r#"{{"type":"hello","version":{SCHEMA_VERSION},"role":"{role}"}}"#)
}

fn code(m: Option<ServerMessage>) -> ErrorCode {
    match m {
        Some(ServerMessage::Error { code, .. }) => code,
        other => panic!("expected an error frame, got {other:?}"),
    }
}

#[test]
fn session_handshake_and_roles() {
    let (mut hub, rx) = hub();
    let a = hub.connect();
    let b = hub.connect();
    assert_eq!(
        code(hub.handle(a, r#"{"type":"command","torque":1,"speed":0.5}"#)),
        ErrorCode::HelloRequired
    );
    assert_eq!(
        code(hub.handle(a, r#"{"type":"hello","version":0,"role":"driver"}"#)),
        ErrorCode::VersionMismatch
    );
    assert_eq!(code(hub.handle(a, "not json")), ErrorCode::Malformed);
    assert_eq!(
        code(hub.handle(a, r#"{"type":"fly"}"#)),
        ErrorCode::Malformed
    );
    match hub.handle(a, &hello("driver")) {
        Some(ServerMessage::Welcome {
            version,
            role,
            session,
        }) => {
            assert_eq!((version, role), (SCHEMA_VERSION, Role::Driver));
            assert_eq!(session.limits.tau_max, 10.0);
            assert!(!session.map.rows.is_empty());
            assert!(!session.mission.references.is_empty());
        }
        other => panic!("expected welcome, got {other:?}"),
    }
    assert_eq!(
        code(hub.handle(b, &hello("driver"))),
        ErrorCode::DriverConflict
    );
    assert!(matches!(
        hub.handle(b, &hello("viewer")),
        Some(ServerMessage::Welcome {
            role: Role::Viewer,
            ..
        })
    ));
    assert_eq!(
        code(hub.handle(b, r#"{"type":"command","torque":1,"speed":0.5}"#)),
        ErrorCode::NotDriver
    );
    assert_eq!(
        code(hub.handle(a, r#"{"type":"command","torque":1}"#)),
        ErrorCode::Malformed
    );
    assert!(rx.try_recv().is_err());

    assert!(hub
        .handle(a, r#"{"type":"command","torque":25,"speed":0.5}"#)
        .is_none());
    let c = rx.try_recv().unwrap();
    assert_eq!((c.torque, c.speed, c.clamped), (10.0, 0.5, true));

    hub.disconnect(a);
    assert_eq!(rx.try_recv().unwrap(), DriverCommand::default());
    assert_eq!(hub.driver(), None);
    let c2 = hub.connect();
    assert!(matches!(
        hub.handle(c2, &hello("driver")),
        Some(ServerMessage::Welcome { .. })
    ));
}

#[test]
fn replay_sessions_take_no_driver() {
    let f = fixture();
    let sim = Simulation::new(
        &f.art,
        f.cfg.run.clone(),
        Box::new(ReplayPolicy::new(Vec::new())),
    )
    .unwrap();
    let info = session_info(&f.art, sim.mission(), &f.cfg.run, 10.0, true);
    let (tx, _rx) = mpsc::channel();
    let mut hub = SessionHub::new(info, tx);
    let a = hub.connect();
    assert_eq!(
        code(hub.handle(a, &hello("driver"))),
        ErrorCode::DriverConflict
    );
}

#[test]
fn client_frames_round_trip() {
    let m: ClientMessage =
        serde_json::from_str(r#"{"type":"command","torque":-2.5,"speed":0.4}"#).unwrap();
    assert_eq!(
        m,
        ClientMessage::Command {
            torque: -2.5,
            speed: 0.4,
            disengage: false
        }
    );
    let back: ClientMessage = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
    let l = DriverLimits {
        tau_max: 5.0,
        v_max: 1.2,
    };
    assert!(!clamp_command(5.0, 1.2, false, &l).unwrap().clamped);
    assert!(clamp_command(0.0, -0.1, false, &l).unwrap().clamped);
    assert!(clamp_command(f64::INFINITY, 0.0, false, &l).is_err());
}

#[test]
fn commands_show_up_in_the_next_state_frame() {
    let f = fixture();
    let (tx, rx) = mpsc::channel();
    let mut sim =
        Simulation::new(&f.art, f.cfg.run.clone(), Box::new(ExternalPolicy::new(rx))).unwrap();
    let r0 = sim.step().unwrap();
    assert_eq!((r0.human_tau_r, r0.human_v), (0.0, 0.0));
    tx.send(
        clamp_command(
            40.0,
            0.6,
            false,
            &DriverLimits {
                tau_max: 3.0,
                v_max: 1.2,
            },
        )
        .unwrap(),
    )
    .unwrap();
    let r1 = sim.step().unwrap();
    assert_eq!(
        (r1.human_tau_r, r1.human_tau_l, r1.human_v),
        (3.0, 3.0, 0.6)
    );
    assert!(r1.clamped);
    let r2 = sim.step().unwrap();
    assert_eq!(r2.human_tau_r, 3.0);
    assert!(!r2.clamped);
}

#[test]
fn live_frames_are_ordered_and_end_with_the_report() {
    let f = fixture();
    let mut settings = f.cfg.run.clone();
    settings.duration = 2.0;
    settings.dt = 0.01;
    let inputs = recorded_inputs(&[]);
    let mut frames = Vec::new();
    let report = run_live(
        &f.art,
        &settings,
        Box::new(ReplayPolicy::new(inputs)),
        false,
        |m| {
            frames.push(serde_json::from_str::<ServerMessage>(&m.to_json()).unwrap());
            true
        },
    )
    .unwrap();
    let states: Vec<_> = frames
        .iter()
        .filter_map(|m| match m {
            ServerMessage::State { seq, record } => Some((*seq, record.t)),
            _ => None,
        })
        .collect();
    // dt = 0.01 s: every other step, 50 frames per simulated second
    assert!(
        (states.len() as f64 - 100.0).abs() <= 1.0,
        "{} frames",
        states.len()
    );
    for (i, w) in states.windows(2).enumerate() {
        assert_eq!(w[1].0, w[0].0 + 1, "frame {i}");
        assert!((w[1].1 - w[0].1 - 0.02).abs() < 1e-9);
    }
    match frames.last() {
        Some(ServerMessage::Finished { report: r }) => assert_eq!(**r, report),
        other => panic!("expected finished, got {other:?}"),
    }
}
