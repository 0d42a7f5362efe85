//! `socnet`: batch processing and inspection of datasets without the dashboard.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use socnet_core::config::Config;
use socnet_core::engine::{Engine, LabelKind, RunOptions, Stage};
use socnet_core::{Error, Platform};

/// Rejected lines printed after an ingestion; the rest are summarized.
const SHOWN_REJECTS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "socnet", version, about = "Social network analytics over Twitter and YouTube batches")]
pub struct Cli {
    /// TOML configuration file (same schema as the service).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset root directory; overrides the configuration.
    #[arg(long, global = true)]
    pub root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Tuning {
    /// Seed for community detection; layout and topics use seed+1 and seed+2.
    /// Drawn at random (and recorded) when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum member overlap for a community to inherit a label.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Fit a topic model with this many topics.
    #[arg(long)]
    pub k_topics: Option<usize>,
    /// ForceAtlas2 iterations.
    #[arg(long)]
    pub iterations: Option<u32>,
}

impl Tuning {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            threshold: self.threshold,
            iterations: self.iterations,
            k_topics: self.k_topics,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty dataset.
    Init {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        platform: Platform,
    },
    /// Ingest one batch file and commit the updated graph, communities and layout.
    Ingest {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Rerun community detection (and optionally topic clustering) on the current graph.
    Recluster {
        #[arg(long)]
        dataset: String,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Recompute the layout from a fresh random start.
    Layout {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<u32>,
    },
    /// Rename a community label or topic.
    Label {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        kind: LabelKind,
        #[arg(long)]
        id: u64,
        #[arg(long)]
        name: String,
    },
    /// Write the current snapshot as plain tables.
    Export {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        /// Bind address; overrides the configuration.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Replay the journal and compare every generation with its snapshot.
    Audit {
        #[arg(long)]
        dataset: String,
    },
}

fn config(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(root) = &cli.root {
        cfg.data_root = root.clone();
    }
    if let Command::Serve { bind: Some(b) } = &cli.command {
        cfg.bind = b.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<bool, Box<dyn std::error::Error>> {
    let cfg = config(cli)?;
    if let Command::Serve { .. } = cli.command {
        socnet_service::serve_blocking(cfg)?;
        return Ok(true);
    }
    let engine = Engine::open(cfg)?;
    match &cli.command {
        Command::Init { dataset, platform } => {
            engine.create(dataset, *platform)?;
            writeln!(out, "created dataset {dataset} ({platform})")?;
        }
        Command::Ingest { dataset, input, tuning } => {
            let raw = std::fs::read(input).map_err(|e| format!("cannot read {}: {e}", input.display()))?;
            let progress = |stage: Stage| log::info!("{dataset}: {stage:?}");
            let report = engine.ingest(dataset, &raw, &input.display().to_string(), &tuning.options(), &progress)?;
            let o = &report.outcome;
            writeln!(
                out,
                "batch {} committed: {} of {} lines accepted, {} rejected",
                report.batch_id,
                o.accepted,
                o.line_count,
                o.rejects.len()
            )?;
            let modularity = o.modularity.map_or("n/a".to_string(), |q| format!("{q:.4}"));
            writeln!(
                out,
                "{} interactions, {} users, {} communities, modularity {modularity}",
                o.interactions, o.users, o.communities
            )?;
            writeln!(out, "version {}", report.version)?;
            for r in o.rejects.iter().take(SHOWN_REJECTS) {
                writeln!(err, "line {}: {}", r.line, r.reason)?;
            }
            if o.rejects.len() > SHOWN_REJECTS {
                writeln!(err, "... and {} more rejected lines", o.rejects.len() - SHOWN_REJECTS)?;
            }
        }
        Command::Recluster { dataset, tuning } => {
            let state = engine.recluster(dataset, &tuning.options())?;
            let p = state.partition.as_ref();
            writeln!(
                out,
                "reclustered: {} communities, modularity {}",
                p.map_or(0, |p| p.community_count()),
                p.map_or("n/a".to_string(), |p| format!("{:.4}", p.modularity))
            )?;
            if let Some(t) = &state.topics {
                writeln!(out, "{} topics over {} posts", t.k, t.post_ids.len())?;
            }
            writeln!(out, "version {}", state.version_tag())?;
        }
        Command::Layout { dataset, seed, iterations } => {
            let opts = RunOptions {
                seed: *seed,
                iterations: *iterations,
                ..Default::default()
            };
            let state = engine.relayout(dataset, &opts)?;
            let n = state.layout.as_ref().map_or(0, |l| l.len());
            writeln!(out, "layout recomputed for {n} nodes")?;
            writeln!(out, "version {}", state.version_tag())?;
        }
        Command::Label { dataset, kind, id, name } => {
            let version = engine.rename(dataset, *kind, *id, name)?;
            let kind = match kind {
                LabelKind::Community => "community",
                LabelKind::Topic => "topic",
            };
            writeln!(out, "renamed {kind} {id} to \"{}\"", name.trim())?;
            writeln!(out, "version {version}")?;
        }
        Command::Export { dataset, output } => {
            for path in engine.export(dataset, output)? {
                writeln!(out, "wrote {path}")?;
            }
        }
        Command::Audit { dataset } => {
            let report = engine.audit(dataset)?;
            if report.identical() {
                writeln!(out, "replayed {} generations: replay identical", report.generations)?;
            } else {
                writeln!(out, "replayed {} generations: replay differs", report.generations)?;
                for m in &report.mismatches {
                    writeln!(out, "  {m}")?;
                }
                return Ok(false);
            }
        }
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(true)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                2
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
