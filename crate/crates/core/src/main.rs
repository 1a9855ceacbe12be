use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rtkgssm::obs_model::{write_session, write_truth, Method};
use rtkgssm::pipeline::{run, FileConfig, RunConfig};
use rtkgssm::sim::{generate, Scenario};
use rtkgssm::Error;

#[derive(Parser)]
#[command(name = "rtkgssm", version, about = "Batch RTK post-processing: Kalman filtering and graph-based batch solution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Process a session file.
    Run {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Comma-separated subset of fwd, bwd, fbkf, gssm.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        gssm_iters: Option<usize>,
        #[arg(long)]
        gssm_tol: Option<f64>,
        #[arg(long)]
        fix_ratio: Option<f64>,
        /// Also write the whitened system as gssm_a.mtx / gssm_b.txt.
        #[arg(long)]
        dump_system: bool,
        /// TOML file with the same keys as the flags; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic session.
    Sim {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the true trajectory as CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Kind::Canyon)]
        scenario: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Open,
    Canyon,
    Matched,
}

/// Exit status 2 for unusable inputs or configuration, 1 for processing failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::Config(_) | Error::Validation(_) | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            input,
            truth,
            methods,
            out,
            gssm_iters,
            gssm_tol,
            fix_ratio,
            dump_system,
            config,
        } => {
            let flags = FileConfig {
                input,
                truth,
                methods,
                out,
                gssm_iters,
                gssm_tol,
                fix_ratio,
                dump_system: dump_system.then_some(true),
            };
            config
                .map(FileConfig::load)
                .transpose()
                .and_then(|file| RunConfig::resolve(file.unwrap_or_default(), flags))
                .and_then(|cfg| run(&cfg).map(|_| ()))
        }
        Command::Sim {
            seed,
            epochs,
            out,
            truth,
            scenario,
        } => {
            let s = match scenario {
                Kind::Open => Scenario::open_sky(seed, epochs),
                Kind::Canyon => Scenario::urban_canyon_len(seed, epochs),
                Kind::Matched => Scenario::matched_dynamics(seed, epochs),
            };
            generate(&s).and_then(|g| {
                write_session(&out, &g.session)?;
                if let Some(t) = truth {
                    write_truth(t, &g.truth)?;
                }
                Ok(())
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
