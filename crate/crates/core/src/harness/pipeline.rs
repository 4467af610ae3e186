//! The offline pipeline and the run/report steps, one function per verb.
//! Each reads its inputs from the artefact directory and writes its
//! outputs there; identical configuration gives identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{ArtefactPaths, ExperimentConfig};
use super::policy::{HumanPolicy, PolicyKind, ReplayPolicy};
use super::report::RunReport;
use super::sim::{run_experiment, scripted_policy, Artefacts, RunOutcome, REPORT_FILE};
use super::telemetry::{read_telemetry, TelemetryRecord};
use super::HarnessError;
use crate::behmap::{
    build_behavioural_map, generate_trajectories, labelled_windows, BehaviouralMap, Provenance,
    SyntheticPath,
};
use crate::control::HumanInput;
use crate::features::{FeatureWindow, Manoeuvre};
use crate::neural::{
    model_fingerprint, train_autoencoder, train_classifier, AeReport, Autoencoder, ClassifierHead,
    ClassifierReport, EpochLoss,
};
use crate::roadmap::{build_prm, Roadmap};
use crate::worldmap::{load_map_files, scenarios, BehaviourGrid, OccupancyGrid};

/// Version of the trajectory, dataset and training files.
pub const PIPELINE_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    version: u32,
    #[serde(flatten)]
    body: T,
}

fn save_versioned<T: Serialize>(path: &Path, body: &T) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let v = Versioned {
        version: PIPELINE_FILE_VERSION,
        body,
    };
    fs::write(path, serde_json::to_vec(&v)?)?;
    Ok(())
}

fn load_versioned<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T, HarnessError> {
    let bytes = fs::read(path).map_err(|e| missing(path, what, e))?;
    let head: serde_json::Value = serde_json::from_slice(&bytes)?;
    let found = head.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != PIPELINE_FILE_VERSION {
        return Err(HarnessError::Version {
            what,
            found,
            expected: PIPELINE_FILE_VERSION,
        });
    }
    Ok(serde_json::from_value::<Versioned<T>>(head)?.body)
}

fn missing(path: &Path, what: &str, e: std::io::Error) -> HarnessError {
    if e.kind() == std::io::ErrorKind::NotFound {
        HarnessError::Config(format!(
            "{what} file {} not found; run the earlier pipeline steps first",
            path.display()
        ))
    } else {
        HarnessError::Io(e)
    }
}

#[derive(Serialize, Deserialize)]
struct Trajectories {
    seed: u64,
    paths: Vec<SyntheticPath>,
}

#[derive(Serialize, Deserialize)]
struct Dataset {
    windows: Vec<FeatureWindow>,
    labels: Vec<Manoeuvre>,
}

/// Built-in map by name, or a map metadata file.
pub fn load_grid(map: &str) -> Result<OccupancyGrid, HarnessError> {
    Ok(match map {
        "cross" => scenarios::cross_intersection(),
        "two_rooms" => scenarios::two_rooms(),
        "empty" => scenarios::empty_room(5.0, 5.0),
        path => load_map_files(Path::new(path))?,
    })
}

/// `map-build`: the roadmap over the configured map.
pub fn map_build(cfg: &ExperimentConfig) -> Result<Roadmap, HarnessError> {
    let grid = load_grid(&cfg.map)?;
    let rm = build_prm(&grid, cfg.roadmap.clearance, cfg.roadmap.seed)?;
    let p = cfg.paths();
    if let Some(dir) = p.roadmap.parent() {
        fs::create_dir_all(dir)?;
    }
    rm.save(&p.roadmap)?;
    Ok(rm)
}

fn load_roadmap(p: &ArtefactPaths) -> Result<Roadmap, HarnessError> {
    if !p.roadmap.exists() {
        return Err(HarnessError::Config(format!(
            "roadmap file {} not found; run map-build first",
            p.roadmap.display()
        )));
    }
    Ok(Roadmap::load(&p.roadmap)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSummary {
    pub paths: usize,
    /// Windows per class: left, right, straight.
    pub windows: [usize; 3],
}

/// `synth`: synthetic trajectories and the balanced labelled windows.
pub fn synth(cfg: &ExperimentConfig) -> Result<SynthSummary, HarnessError> {
    let grid = load_grid(&cfg.map)?;
    let p = cfg.paths();
    let rm = load_roadmap(&p)?;
    let paths = generate_trajectories(&grid, &rm, cfg.synth.paths, cfg.synth.seed)?;
    let data = labelled_windows(&paths, &cfg.synth.dataset)?;
    let mut windows = [0; 3];
    for (_, m) in &data {
        windows[m.index()] += 1;
    }
    let (w, labels): (Vec<_>, Vec<_>) = data.into_iter().unzip();
    save_versioned(&p.dataset, &Dataset { windows: w, labels })?;
    let summary = SynthSummary {
        paths: paths.len(),
        windows,
    };
    save_versioned(
        &p.trajectories,
        &Trajectories {
            seed: cfg.synth.seed,
            paths,
        },
    )?;
    Ok(summary)
}

/// Metrics of both networks, as persisted next to the models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub autoencoder: AeReport,
    pub classifier: ClassifierReport,
    pub seconds: f64,
    pub model_version: String,
}

impl TrainingSummary {
    /// Reconstruction RMSE per channel and accuracy per class.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let r = &self.autoencoder.channel_rmse;
        let c = &self.classifier.per_class;
        let _ = writeln!(s, "Net1 (autoencoder) validation RMSE");
        let _ = writeln!(
            s,
            "  {:>8} {:>8} {:>8} {:>8} {:>8}",
            "x", "y", "cos θ", "sin θ", "κ"
        );
        let _ = writeln!(
            s,
            "  {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r[0], r[1], r[2], r[3], r[4]
        );
        let _ = writeln!(s, "Net2 (classifier) validation accuracy");
        let _ = writeln!(
            s,
            "  {:>8} {:>8} {:>8} {:>8}",
            "Left", "Right", "Straight", "Average"
        );
        let pct = |v: f64| format!("{:.1}%", 100.0 * v);
        let _ = writeln!(
            s,
            "  {:>8} {:>8} {:>8} {:>8}",
            pct(c[0]),
            pct(c[1]),
            pct(c[2]),
            pct(self.classifier.average)
        );
        let _ = write!(
            s,
            "trained in {:.0} s, model {}",
            self.seconds,
            &self.model_version[..12.min(self.model_version.len())]
        );
        s
    }
}

/// `train`: the autoencoder on all windows, then the classifier head on the
/// frozen encoder.
pub fn train(
    cfg: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainingSummary, HarnessError> {
    let p = cfg.paths();
    let data: Dataset = load_versioned(&p.dataset, "dataset")?;
    let start = Instant::now();
    let t = &cfg.train;
    let (ae, ae_report) = train_autoencoder(&data.windows, t.model, &t.autoencoder, on_epoch)?;
    let labelled: Vec<(FeatureWindow, Manoeuvre)> =
        data.windows.into_iter().zip(data.labels).collect();
    let (head, head_report) = train_classifier(&ae, &labelled, &t.classifier)?;
    ae.save(&p.autoencoder)?;
    head.save(&p.classifier)?;
    let summary = TrainingSummary {
        autoencoder: ae_report,
        classifier: head_report,
        seconds: start.elapsed().as_secs_f64(),
        model_version: model_fingerprint(&ae, &head),
    };
    save_versioned(&p.training, &summary)?;
    Ok(summary)
}

fn load_models(p: &ArtefactPaths) -> Result<(Autoencoder, ClassifierHead), HarnessError> {
    for (f, what) in [
        (&p.autoencoder, "autoencoder"),
        (&p.classifier, "classifier"),
    ] {
        if !f.exists() {
            return Err(HarnessError::Config(format!(
                "{what} file {} not found; run train first",
                f.display()
            )));
        }
    }
    Ok((
        Autoencoder::load(&p.autoencoder)?,
        ClassifierHead::load(&p.classifier)?,
    ))
}

/// `behmap`: the behavioural map from the synthetic trajectories, plus its
/// per-cluster CSV summary.
pub fn behmap(cfg: &ExperimentConfig) -> Result<BehaviouralMap, HarnessError> {
    let grid = load_grid(&cfg.map)?;
    let p = cfg.paths();
    let traj: Trajectories = load_versioned(&p.trajectories, "trajectories")?;
    let (ae, head) = load_models(&p)?;
    let provenance = Provenance {
        seed: traj.seed,
        trajectory_count: traj.paths.len(),
        model_version: model_fingerprint(&ae, &head),
    };
    let bm = build_behavioural_map(
        &traj.paths,
        &ae,
        &head,
        BehaviourGrid::covering(&grid),
        provenance,
    )?;
    bm.save(&p.behmap)?;
    bm.write_summary_csv(&p.behmap_csv)?;
    Ok(bm)
}

/// Everything `run` needs; fails if a file is missing or the behavioural
/// map was built with other models.
pub fn load_artefacts(cfg: &ExperimentConfig) -> Result<Artefacts, HarnessError> {
    let grid = load_grid(&cfg.map)?;
    let p = cfg.paths();
    let roadmap = load_roadmap(&p)?;
    let (ae, head) = load_models(&p)?;
    if !p.behmap.exists() {
        return Err(HarnessError::Config(format!(
            "behavioural map {} not found; run behmap first",
            p.behmap.display()
        )));
    }
    let behmap = BehaviouralMap::load(&p.behmap, Some(&model_fingerprint(&ae, &head)))?;
    Ok(Artefacts {
        grid,
        roadmap,
        behmap,
        ae,
        head,
    })
}

/// Human inputs recorded in telemetry, step by step.
pub fn recorded_inputs(records: &[TelemetryRecord]) -> Vec<HumanInput> {
    records
        .iter()
        .map(|r| HumanInput {
            v: r.human_v,
            tau_r: r.human_tau_r,
            tau_l: r.human_tau_l,
        })
        .collect()
}

/// The policy a configured run uses; external drivers only exist in `serve`.
pub fn configured_policy(cfg: &ExperimentConfig) -> Result<Box<dyn HumanPolicy>, HarnessError> {
    if let Some(p) = scripted_policy(&cfg.run.policy, cfg.run.seed) {
        return Ok(p);
    }
    match cfg.run.policy.kind {
        PolicyKind::Replay => {
            let path = cfg.replay.as_ref().ok_or_else(|| {
                HarnessError::Config("a replay run needs `replay` set to a telemetry file".into())
            })?;
            Ok(Box::new(ReplayPolicy::new(recorded_inputs(
                &read_telemetry(path)?,
            ))))
        }
        _ => Err(HarnessError::Config(
            "the external policy is only available through serve".into(),
        )),
    }
}

/// `run`: one closed-loop experiment written to the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    let art = load_artefacts(cfg)?;
    let policy = configured_policy(cfg)?;
    run_experiment(&art, &cfg.run, policy, Some(&cfg.output_dir))
}

/// `report`: aggregates recomputed from a telemetry file, saved next to it.
pub fn report(telemetry: &Path) -> Result<RunReport, HarnessError> {
    let records = read_telemetry(telemetry)?;
    let report = RunReport::from_records(&records, Some(telemetry.display().to_string()));
    let out = telemetry
        .parent()
        .unwrap_or(Path::new("."))
        .join(REPORT_FILE);
    report.save(&out)?;
    Ok(report)
}

/// Human-readable digest of a report, including the deviation episode.
pub fn describe(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} steps, {:.2} s, goal {}",
        report.steps,
        report.duration,
        if report.goal_reached {
            "reached"
        } else {
            "not reached"
        }
    );
    let _ = writeln!(
        s,
        "robot torque |τ|: mean {:.3} N·m, max {:.3} N·m",
        report.mean_abs_torque, report.max_abs_torque
    );
    let _ = writeln!(
        s,
        "mean ε̂ {:.3}, engaged {:.1}% of the time",
        report.mean_eps_hat,
        100.0 * report.engaged_fraction
    );
    let _ = writeln!(
        s,
        "cross-track error: mean {:.3} m, max {:.3} m",
        report.mean_cross_track, report.max_cross_track
    );
    for d in &report.disengagements {
        let _ = writeln!(s, "disengaged {:.2} s to {:.2} s", d.start, d.end);
    }
    if let Some(e) = &report.deviation {
        let _ = writeln!(
            s,
            "deviation {:.2} s to {:.2} s where {} was expected",
            e.start,
            e.release,
            e.class.name()
        );
        let _ = writeln!(
            s,
            "  ε {} before {:.3}, minimum {:.3} at {:.2} s, recovered to {:.3}",
            e.class.name(),
            e.eps_before,
            e.eps_min,
            e.t_min,
            e.eps_recovered
        );
        match e.heading_settle {
            Some(t) => {
                let _ = writeln!(
                    s,
                    "  heading error below {:.1} rad {:.2} s after release",
                    super::HEADING_SETTLED,
                    t
                );
            }
            None => {
                let _ = writeln!(s, "  heading error never settled");
            }
        }
    }
    s
}
