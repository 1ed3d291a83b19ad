use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use absgame::adversary::{BobPolicySpec, TwistSequence};
use absgame::dynamics::SystemSpec;
use absgame::harness::{
    batch_report, oracle_suite, run_batch, run_game, verify_file, MonitorMode, OracleKind, RunConfig,
};
use absgame::numerics::{parse_rational, Rational};

#[derive(Parser)]
#[command(name = "absgame", about = "Play, record and verify twisted absolute games")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Monitors {
    All,
    Minimal,
}

#[derive(clap::Args)]
struct GameArgs {
    /// `beta:<gamma>` or `gauss`
    #[arg(long, default_value = "beta:2", value_parser = |s: &str| s.parse::<SystemSpec>())]
    system: SystemSpec,
    #[arg(long, default_value = "1/4", value_parser = |s: &str| parse_rational(s).map_err(|e| e.to_string()))]
    beta: Rational,
    #[arg(long, default_value_t = 300)]
    rounds: usize,
    /// `random:<seed>`, `chaser`, `extremal:left`, `extremal:right` or `replay:<path>`
    #[arg(long, default_value = "random:1", value_parser = |s: &str| s.parse::<BobPolicySpec>().map_err(|e| e.to_string()))]
    bob: BobPolicySpec,
    /// `const:<p/q>`, `identity` or `affine:<L>`
    #[arg(long, default_value = "identity", value_parser = |s: &str| s.parse::<TwistSequence>().map_err(|e| e.to_string()))]
    twist: TwistSequence,
    #[arg(long, value_enum, default_value = "all")]
    monitors: Monitors,
    #[arg(long)]
    unsafe_beta_third: bool,
}

impl GameArgs {
    fn config(&self) -> RunConfig {
        let mut cfg = RunConfig::new(
            self.system,
            self.beta.clone(),
            self.rounds,
            self.bob.clone(),
            self.twist.clone(),
        );
        cfg.monitors = match self.monitors {
            Monitors::All => MonitorMode::All,
            Monitors::Minimal => MonitorMode::Minimal,
        };
        cfg.unsafe_beta_third = self.unsafe_beta_third;
        cfg
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Play one game and write its transcript.
    Run {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-validate a transcript.
    Verify { path: PathBuf },
    /// Print a brute-force oracle table as TSV.
    Oracle {
        #[arg(value_parser = |s: &str| s.parse::<OracleKind>())]
        kind: OracleKind,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Play random-Bob games over a seed range in parallel.
    Batch {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value_t = 100)]
        games: u64,
        #[arg(long, default_value_t = 1)]
        first_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.verb {
        Verb::Run { game, out } => {
            let tr = run_game(&game.config())?;
            match out {
                Some(path) => tr.write_atomic(&path)?,
                None => print!("{}", tr.to_text()),
            }
            let failed = tr.failed_monitors();
            for m in &failed {
                eprintln!("FAIL {} level={} {}", m.kind, m.level, m.detail);
            }
            let clean = tr.illegal_alice_moves() == 0 && tr.errors().count() == 0;
            Ok(failed.is_empty() && clean)
        }
        Verb::Verify { path } => {
            let report = verify_file(&path)?;
            println!("{report}");
            Ok(report.ok())
        }
        Verb::Oracle { kind, depth } => {
            let table = oracle_suite(kind, depth.unwrap_or(kind.max_depth()))?;
            print!("{table}");
            Ok(table.ok())
        }
        Verb::Batch {
            game,
            games,
            first_seed,
            out,
        } => {
            let base = game.config();
            let cfgs: Vec<RunConfig> = (first_seed..first_seed + games)
                .map(|seed| RunConfig {
                    bob: BobPolicySpec::Random(seed),
                    ..base.clone()
                })
                .collect();
            let summaries = run_batch(&cfgs);
            let report = batch_report(&summaries);
            match out {
                Some(path) => std::fs::write(path, &report)?,
                None => print!("{report}"),
            }
            let ok = summaries.iter().all(|s| {
                s.as_ref()
                    .is_ok_and(|s| s.monitor_failures.is_empty() && s.illegal_alice == 0 && s.errors == 0)
            });
            Ok(ok)
        }
    }
}
