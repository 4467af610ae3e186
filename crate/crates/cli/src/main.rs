use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use sharedwalk::harness::{
    self, describe, read_telemetry, recorded_inputs, ExperimentConfig, PolicyKind,
    ARTEFACT_DIR_ENV, DEFAULT_TAU_MAX,
};
use sharedwalk_cli::serve::{bind, ServeOptions};

/// Behaviour-map guided shared steering for a simulated walker.
///
/// Settings come from `--config`, then `--set key=value` overrides, then
/// the verb's own flags. The artefact directory defaults to
/// $SHAREDWALK_ARTEFACTS, else `artefacts`.
#[derive(Parser)]
#[command(name = "sharedwalk", version)]
struct Cli {
    /// TOML experiment configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `run.policy.kind=rough`. Repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Artefact directory.
    #[arg(long, global = true, value_name = "DIR")]
    artefacts: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Compliant,
    Rough,
    Adversarial,
}

#[derive(Subcommand)]
enum Verb {
    /// Build the roadmap over the map.
    MapBuild,
    /// Generate synthetic trajectories and the labelled windows.
    Synth,
    /// Train the autoencoder, then the classifier head.
    Train {
        /// No per-epoch losses.
        #[arg(short, long)]
        quiet: bool,
    },
    /// Build and export the behavioural map.
    Behmap,
    /// map-build, synth, train and behmap in turn.
    Pipeline,
    /// Run one closed-loop experiment. Exits 0 at the goal, 2 otherwise.
    Run {
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        /// Play back the human inputs of a telemetry file.
        #[arg(long, value_name = "TELEMETRY", conflicts_with = "policy")]
        replay: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for telemetry and report.
        #[arg(short, long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Recompute the report of a telemetry file.
    Report { telemetry: PathBuf },
    /// Live session endpoint at /ws plus static cockpit assets.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Cockpit build to serve; a placeholder page otherwise.
        #[arg(long, value_name = "DIR")]
        assets: Option<PathBuf>,
        /// Play back a telemetry file instead of taking a driver.
        #[arg(long, value_name = "TELEMETRY")]
        replay: Option<PathBuf>,
        /// Bound on driver torque, N·m.
        #[arg(long, default_value_t = DEFAULT_TAU_MAX)]
        tau_max: f64,
        /// Step as fast as possible instead of in real time.
        #[arg(long)]
        no_realtime: bool,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(d) = &cli.artefacts {
        cfg.artefact_dir = d.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = load(&cli)?;
    match cli.verb {
        Verb::MapBuild => map_build(&cfg)?,
        Verb::Synth => synth(&cfg)?,
        Verb::Train { quiet } => train(&cfg, quiet)?,
        Verb::Behmap => behmap(&cfg)?,
        Verb::Pipeline => {
            map_build(&cfg)?;
            synth(&cfg)?;
            train(&cfg, true)?;
            behmap(&cfg)?;
        }
        Verb::Run {
            policy,
            replay,
            seed,
            out,
        } => {
            if let Some(p) = policy {
                cfg.run.policy.kind = match p {
                    Policy::Compliant => PolicyKind::Compliant,
                    Policy::Rough => PolicyKind::Rough,
                    Policy::Adversarial => PolicyKind::Adversarial,
                };
            }
            if let Some(r) = replay {
                cfg.run.policy.kind = PolicyKind::Replay;
                cfg.replay = Some(r);
            }
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let outcome = harness::run(&cfg)?;
            print!("{}", describe(&outcome.report));
            println!("telemetry in {}", cfg.output_dir.display());
            if !outcome.report.goal_reached {
                return Ok(ExitCode::from(2));
            }
        }
        Verb::Report { telemetry } => {
            let r = harness::report(&telemetry)?;
            print!("{}", describe(&r));
        }
        Verb::Serve {
            addr,
            assets,
            replay,
            tau_max,
            no_realtime,
        } => serve(&cfg, addr, assets, replay, tau_max, !no_realtime)?,
        Verb::Config => print!("{}", cfg.to_toml()?),
    }
    Ok(ExitCode::SUCCESS)
}

fn map_build(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let rm = harness::map_build(cfg)?;
    println!(
        "roadmap: {} nodes, {} edges -> {}",
        rm.nodes().len(),
        rm.edge_count(),
        cfg.paths().roadmap.display()
    );
    Ok(())
}

fn synth(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let s = harness::synth(cfg)?;
    println!(
        "{} trajectories; windows left {}, right {}, straight {} -> {}",
        s.paths,
        s.windows[0],
        s.windows[1],
        s.windows[2],
        cfg.paths().dataset.display()
    );
    Ok(())
}

fn train(cfg: &ExperimentConfig, quiet: bool) -> anyhow::Result<()> {
    let start = Instant::now();
    let s = harness::train(cfg, |e| {
        if !quiet && (e.epoch + 1) % 10 == 0 {
            eprintln!(
                "epoch {:>4}  train {:.5}  val {:.5}  ({:.0} s)",
                e.epoch + 1,
                e.train_loss,
                e.val_loss,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    println!("{}", s.table());
    Ok(())
}

fn behmap(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let bm = harness::behmap(cfg)?;
    let p = cfg.paths();
    println!(
        "behavioural map: {} clusters from {} crossings -> {}, {}",
        bm.clusters().len(),
        bm.crossings,
        p.behmap.display(),
        p.behmap_csv.display()
    );
    Ok(())
}

fn serve(
    cfg: &ExperimentConfig,
    addr: SocketAddr,
    assets: Option<PathBuf>,
    replay: Option<PathBuf>,
    tau_max: f64,
    realtime: bool,
) -> anyhow::Result<()> {
    let art = harness::load_artefacts(cfg)
        .with_context(|| format!("loading artefacts (set {ARTEFACT_DIR_ENV} or --artefacts)"))?;
    let mut opts = ServeOptions::new(addr, cfg.run.clone());
    opts.assets = assets;
    opts.tau_max = tau_max;
    opts.realtime = realtime;
    if let Some(r) = replay {
        opts.replay = Some(recorded_inputs(&read_telemetry(&r)?));
    }
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let (bound, server) = bind(art, opts).await?;
        println!("listening on http://{bound} (session at ws://{bound}/ws)");
        tokio::select! {
            r = server => r?,
            _ = tokio::signal::ctrl_c() => {}
        }
        anyhow::Ok(())
    })
}
