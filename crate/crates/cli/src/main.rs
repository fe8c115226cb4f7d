use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use sapalm_cli::config::{apply_thread_cap, thread_cap, ExperimentConfig};
use sapalm_cli::experiment::{run_experiment, DATA_FILE, METADATA_FILE, TRACE_FILE};
use sapalm_cli::speedup::speedup_table;
use sapalm_cli::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "sapalm", version, about = "Asynchronous stochastic PALM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv and metadata.toml.
    Run(Common),
    /// Time async runs over worker counts and write speedup.csv/.txt.
    Speedup(Common),
    /// Run verification suites and print one line per check.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suite to run (all when omitted).
        #[arg(long)]
        suite: Option<Suite>,
    },
    /// Generate the data matrix and write it to <out>/data.bin.
    GenData(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of workers.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// sync, sim-async or async.
    #[arg(long)]
    mode: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut sets = self.sets.clone();
        if let Some(out) = &self.out {
            sets.push(format!("out={}", toml::Value::String(out.display().to_string())));
        }
        if let Some(t) = self.threads {
            sets.push(format!("workers={t}"));
        }
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(m) = &self.mode {
            sets.push(format!("mode={}", toml::Value::String(m.clone())));
        }
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), &sets)?;
        apply_thread_cap(&mut cfg, thread_cap());
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let art = run_experiment(&cfg)?;
            let t = &art.output.trace;
            if let Some(last) = t.last() {
                println!(
                    "{} updates in {:.3} s; objective {:.6e}, stationarity {:.3e}, max delay {}",
                    t.total_updates,
                    t.elapsed_s,
                    last.objective,
                    last.stationarity,
                    t.max_delay()
                );
            }
            for w in &t.warnings {
                println!("warning: {w}");
            }
            println!("wrote {}/{{{TRACE_FILE},{METADATA_FILE}}}", art.dir.display());
        }
        Command::Speedup(common) => {
            let cfg = common.load()?;
            let report = speedup_table(&cfg, thread_cap())?;
            print!("{}", report.to_text());
            println!("wrote {}/speedup.{{csv,txt}}", cfg.out.display());
        }
        Command::Verify { common, suite } => {
            let cfg = common.load()?;
            let suites = suite.map_or_else(|| Suite::ALL.to_vec(), |s| vec![s]);
            let mut failed = 0;
            for s in suites {
                println!("== {}", s.name());
                for line in run_suite(s, cfg.seed) {
                    failed += usize::from(!line.passed);
                    println!("{line}");
                }
            }
            if failed > 0 {
                println!("{failed} check(s) failed");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::GenData(common) => {
            let cfg = common.load()?;
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join(DATA_FILE);
            sapalm::generate_data(cfg.n, cfg.data_seed)?.save(&path)?;
            println!("wrote {} (n = {}, seed = {})", path.display(), cfg.n, cfg.data_seed);
        }
    }
    Ok(ExitCode::SUCCESS)
}
