use clap::{Parser, Subcommand};
use forge_core::buildbase::{self, BuildBase};
use forge_core::job;
use forge_core::pfg::{self, DecompositionSpec, PfgConfig, ProgramFragment};
use forge_core::sched::{MiniverBackend, ResourceLimits};
use forge_core::weave;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "forge", version, about = "Verification of large C programs split into fragments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest build commands and sources into a build base.
    Buildbase {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a program into fragments.
    Decompose {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        conf: PathBuf,
        /// Decomposition specification, keyed by program version.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weave aspect files into the sources of a fragment and merge them.
    Weave {
        /// A C file, or a fragment JSON (one fragment or a list) whose files
        /// are read through `--base`.
        #[arg(long)]
        fragment: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        aspects: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        base: Option<PathBuf>,
        /// Fragment to pick from a list.
        #[arg(long)]
        name: Option<String>,
        /// Prune functions unreachable from this entry point.
        #[arg(long)]
        entry: Option<String>,
    },
    /// Prepare and solve a verification job.
    Run {
        #[arg(long)]
        job: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Check one task bundle with the built-in verifier and write its
    /// verdict files into the bundle.
    Check {
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 900.0)]
        time: f64,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

type Result<T> = std::result::Result<T, String>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn fragment_sources(fragment: &Path, base: Option<&Path>, name: Option<&str>) -> Result<Vec<(String, String)>> {
    if fragment.extension().is_none_or(|e| e != "json") {
        let text = read(fragment)?;
        return Ok(vec![(fragment.display().to_string(), text)]);
    }
    let text = read(fragment)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", fragment.display()))?;
    let fragments: Vec<ProgramFragment> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value),
        _ => serde_json::from_value(value).map(|f| vec![f]),
    }
    .map_err(|e| format!("{}: {e}", fragment.display()))?;
    let picked = match (name, fragments.len()) {
        (Some(n), _) => fragments
            .into_iter()
            .find(|f| f.name == n)
            .ok_or_else(|| format!("no fragment named {n}"))?,
        (None, 1) => fragments.into_iter().next().unwrap(),
        (None, n) => return Err(format!("{n} fragments in {}; pick one with --name", fragment.display())),
    };
    let base = base.ok_or("--base is required for a fragment JSON")?;
    let base = BuildBase::load(base).map_err(|e| e.to_string())?;
    picked
        .files
        .iter()
        .map(|f| base.read_source(f).map(|t| (f.clone(), t)).map_err(|e| e.to_string()))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Buildbase { dir, out } => {
            let base = buildbase::ingest_build_base(&dir).map_err(|e| e.to_string())?;
            write(&out, &to_json(&base))?;
            eprintln!(
                "{} compile commands, {} link commands, {} functions",
                base.cc_commands.len(),
                base.ld_commands.len(),
                base.callgraph.definitions.len()
            );
        }
        Command::Decompose { base, conf, spec, out } => {
            let base = BuildBase::load(&base).map_err(|e| e.to_string())?;
            let conf: PfgConfig =
                serde_json::from_str(&read(&conf)?).map_err(|e| format!("{}: {e}", conf.display()))?;
            let spec = match spec {
                Some(p) => Some(
                    DecompositionSpec::from_json(&read(&p)?, conf.program_version.as_deref()).map_err(|e| e.to_string())?,
                ),
                None => None,
            };
            let fragments = pfg::decompose(&conf, &base, spec.as_ref()).map_err(|e| e.to_string())?;
            write(&out, &to_json(&fragments))?;
            for f in &fragments {
                eprintln!("{}: {} files", f.name, f.files.len());
            }
        }
        Command::Weave {
            fragment,
            aspects,
            out,
            base,
            name,
            entry,
        } => {
            let mut advice = Vec::new();
            for a in &aspects {
                advice.extend(weave::parse_aspect(&read(a)?).map_err(|e| format!("{}: {e}", a.display()))?);
            }
            let mut woven = Vec::new();
            for (file, text) in fragment_sources(&fragment, base.as_deref(), name.as_deref())? {
                let (text, report) = weave::weave(&text, &advice).map_err(|e| format!("{file}: {e}"))?;
                eprintln!("{file}: {} replacements", report.total());
                woven.push((file, text));
            }
            let merged = weave::merge(&woven, entry.as_deref()).map_err(|e| e.to_string())?;
            write(&out, &merged)?;
        }
        Command::Run { job, workers } => {
            let report = job::run_job_file(&job, Arc::new(MiniverBackend::default()), workers, |r| {
                let status = r.verdict.as_ref().map_or("cancelled".to_string(), |v| v.status_line());
                println!("{}\t{}", r.task, status);
            })
            .map_err(|e| e.to_string())?;
            let s = &report.statistics;
            println!("total {}", s.total);
            for share in &s.by_kind {
                println!("{}\t{}\t{}%", share.label, share.count, share.percent);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Check { task, time } => {
            let limits = ResourceLimits {
                cpu_seconds: time,
                wall_seconds: time,
                ..ResourceLimits::default()
            };
            let verdict = MiniverBackend::default()
                .check_dir(&task, &limits)
                .map_err(|e| format!("{}: {e}", task.display()))?;
            println!("{}", verdict.status_line());
        }
        Command::Serve { store, port } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(forge_bridge::serve(&store, port)).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("forge: {e}");
            ExitCode::FAILURE
        }
    }
}
