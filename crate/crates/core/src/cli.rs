//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{self, Run};

#[derive(Debug, Parser)]
#[command(name = "graphval", version, about = "Label-free valuation of test-time graph neighbors")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted `key=value` override, applied after the file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    pub force: bool,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into data.dir.
    Gen,
    /// Train the node classifier.
    Train,
    /// Fit utility weights on the validation graph.
    LearnUtility,
    /// Value the test neighbors under every configured method.
    Value,
    /// Node-dropping curves and AUC per method.
    DropEval,
    /// Exact values on one small game.
    Oracle,
    /// Repeat the whole pipeline over several seeds.
    Compare,
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let run = Run::new(cfg, cli.force);
    match cli.command {
        Command::Gen => pipeline::cmd_gen(&run).map(drop),
        Command::Train => pipeline::cmd_train(&run).map(drop),
        Command::LearnUtility => pipeline::cmd_learn_utility(&run).map(drop),
        Command::Value => pipeline::cmd_value(&run).map(drop),
        Command::DropEval => {
            for (m, c) in pipeline::cmd_drop_eval(&run)? {
                println!("{m}\t{:.4}", c.auc);
            }
            Ok(())
        }
        Command::Oracle => {
            let r = pipeline::cmd_oracle(&run)?;
            println!("players\t{}", r.n_players);
            println!("decompose_max_error\t{:e}", r.decompose_max_error);
            Ok(())
        }
        Command::Compare => pipeline::cmd_compare(&run).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return Error::Config(String::new()).exit_code();
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool already set: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
