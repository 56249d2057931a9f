use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ikesim::harness::{
    emit_results, live_run, load_config, run_batch, BatchOptions, LiveResponder, OutputFormat,
    ResultSet, SuiteSelection, PRESETS,
};
use ikesim::netsim::LossModel;

#[derive(Parser)]
#[command(name = "ikesim", version, about = "IKEv2 connection setup over lossy links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV/JSON results.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: Option<SuiteArg>,
        /// Comma-separated list of output formats.
        #[arg(long, value_delimiter = ',', value_enum)]
        format: Vec<FormatArg>,
        /// Worker threads.
        #[arg(long)]
        parallel: Option<usize>,
        /// Output directory (overrides `[output] dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in link presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Run the handshake over real UDP sockets.
    Live {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        role: RoleArg,
        /// Responder address (initiator role).
        #[arg(long, required_if_eq("role", "initiator"))]
        peer: Option<SocketAddr>,
        /// Local address; the responder listens here.
        #[arg(long)]
        bind: Option<SocketAddr>,
        #[arg(long, value_enum)]
        suite: Option<SuiteArg>,
        /// Responder: exit after this many established SAs.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Classical,
    Qrc,
    Both,
    Custom,
}

impl From<SuiteArg> for SuiteSelection {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Classical => SuiteSelection::Classical,
            SuiteArg::Qrc => SuiteSelection::Qrc,
            SuiteArg::Both => SuiteSelection::Both,
            SuiteArg::Custom => SuiteSelection::Custom,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Initiator,
    Responder,
}

fn formats(args: &[FormatArg], default: &[OutputFormat]) -> Vec<OutputFormat> {
    if args.is_empty() {
        return default.to_vec();
    }
    args.iter()
        .map(|f| match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.0}"))
}

fn report(set: &ResultSet) {
    println!(
        "{} [{}] loss {:.3}% rtt {} ms",
        set.scenario_id,
        set.loss_point.label,
        set.loss_point.loss_rate * 100.0,
        set.rtt_ms
    );
    for s in &set.summaries {
        println!(
            "  {:<10} ok {}/{}  bytes p50 {} p95 {}  setup_ms p50 {} p95 {}",
            s.suite,
            s.successes,
            s.runs,
            fmt_opt(s.total_bytes.map(|b| b.median)),
            fmt_opt(s.total_bytes.map(|b| b.p95)),
            fmt_opt(s.setup_time_ms.map(|t| t.median)),
            fmt_opt(s.setup_time_ms.map(|t| t.p95)),
        );
    }
    for a in &set.amplification {
        println!(
            "  {}/{} p95 bytes x{:.1}, setup x{}",
            a.suite,
            a.baseline,
            a.total_bytes_p95_ratio,
            a.setup_time_p95_ratio
                .map_or_else(|| "-".to_owned(), |r| format!("{r:.1}"))
        );
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            suite,
            format,
            parallel,
            out,
        } => {
            let cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let options = BatchOptions {
                suites: suite.map(Into::into),
                parallel,
            };
            let sets = run_batch(&cfg, &options)?;
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let formats = formats(&format, &cfg.output.formats);
            for set in &sets {
                report(set);
                for path in emit_results(set, &formats, &dir)? {
                    println!("  wrote {}", path.display());
                }
            }
        }
        Command::Presets {
            action: PresetAction::List,
        } => {
            println!("{:<9} {:>9} {:>9} {:>9} {:>8}  description", "name", "rtt_ms", "P", "R", "loss%");
            for p in PRESETS {
                let (pp, rr) = match p.loss {
                    LossModel::GilbertElliott { p, r } => (p.to_string(), r.to_string()),
                    LossModel::Uniform { .. } => ("-".to_owned(), "-".to_owned()),
                };
                println!(
                    "{:<9} {:>9} {:>9} {:>9} {:>8.3}  {}",
                    p.name,
                    p.rtt_ms,
                    pp,
                    rr,
                    p.loss.loss_rate()? * 100.0,
                    p.description
                );
            }
        }
        Command::Live {
            config,
            role,
            peer,
            bind,
            suite,
            count,
            out,
        } => {
            let mut cfg = load_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = suite {
                cfg.select_suites(s.into())?;
            }
            match role {
                RoleArg::Responder => {
                    let addr = bind.unwrap_or_else(|| SocketAddr::from(([0, 0, 0, 0], 5000)));
                    let mut responder = LiveResponder::bind(&cfg, addr)?;
                    eprintln!("responder listening on {}", responder.local_addr()?);
                    responder.serve(count, &AtomicBool::new(false))?;
                    println!("established {} SAs", responder.established().len());
                }
                RoleArg::Initiator => {
                    let Some(peer) = peer else {
                        bail!("--peer is required for the initiator");
                    };
                    let set = live_run(&cfg, peer, bind)?;
                    report(&set);
                    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
                    for path in emit_results(&set, &cfg.output.formats, &dir)? {
                        println!("  wrote {}", path.display());
                    }
                }
            }
        }
    }
    Ok(())
}
