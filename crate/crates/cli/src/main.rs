//! `ppdl`: batch driver for the privacy-preserving continual learning
//! simulator.
//!
//! ```text
//! ppdl <prepare|train|evaluate|report> --config <file>
//!      [--seed N] [--algo rl,tl,ll,cds] [--order asc,desc] [--data-root DIR]
//! ```
//!
//! Exit code 0 on success; on failure a single machine-parseable line
//! `error: <message>` goes to stderr and the exit code is nonzero.

mod commands;
mod config;
mod layout;

use std::path::PathBuf;
use std::process::ExitCode;

use ppdl_core::{Error, Result};

use config::{ExperimentConfig, Overrides};
use layout::Layout;

const USAGE: &str = "\
ppdl - privacy-preserving continual learning simulator

USAGE:
    ppdl <COMMAND> --config <FILE> [OPTIONS]

COMMANDS:
    prepare     split institutions, exchange statistics, write assignments
    train       train every (algorithm, order, seed) run; resumable per visit
    evaluate    score every checkpoint on every institution's test set
    report      emit plot-ready trajectory and grid data

OPTIONS:
    --config <FILE>     experiment configuration (JSON)
    --seed <N>          override: run only this training seed
    --algo <LIST>       override: comma-separated algorithms (rl,tl,ll,cds)
    --order <LIST>      override: comma-separated visit orders (asc,desc)
    --data-root <DIR>   base for relative paths (default: $PPDL_DATA_ROOT or .)
    -h, --help          print this help
";

struct Cli {
    command: String,
    config_path: PathBuf,
    overrides: Overrides,
}

fn parse_args(args: &[String]) -> Result<Option<Cli>> {
    if args.is_empty() || args.iter().any(|a| a == "-h" || a == "--help") {
        return Ok(None);
    }
    let command = args[0].clone();
    if !matches!(
        command.as_str(),
        "prepare" | "train" | "evaluate" | "report"
    ) {
        return Err(Error::Config(format!(
            "unknown command '{command}' (expected prepare, train, evaluate, or report)"
        )));
    }
    let mut config_path = None;
    let mut overrides = Overrides::default();
    let mut i = 1;
    let value = |args: &[String], i: usize, flag: &str| -> Result<String> {
        args.get(i + 1)
            .cloned()
            .ok_or_else(|| Error::Config(format!("missing value for {flag}")))
    };
    while i < args.len() {
        match args[i].as_str() {
            "--config" => {
                config_path = Some(PathBuf::from(value(args, i, "--config")?));
                i += 2;
            }
            "--seed" => {
                let raw = value(args, i, "--seed")?;
                overrides.seed = Some(
                    raw.parse()
                        .map_err(|_| Error::Config(format!("invalid --seed value '{raw}'")))?,
                );
                i += 2;
            }
            "--algo" => {
                let raw = value(args, i, "--algo")?;
                overrides.algorithms = Some(
                    raw.split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<Vec<_>>>()?,
                );
                i += 2;
            }
            "--order" => {
                let raw = value(args, i, "--order")?;
                overrides.orders = Some(
                    raw.split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<Vec<_>>>()?,
                );
                i += 2;
            }
            "--data-root" => {
                overrides.data_root = Some(PathBuf::from(value(args, i, "--data-root")?));
                i += 2;
            }
            other => {
                return Err(Error::Config(format!("unknown option '{other}'")));
            }
        }
    }
    Ok(Some(Cli {
        command,
        config_path: config_path
            .ok_or_else(|| Error::Config("--config <file> is required".to_owned()))?,
        overrides,
    }))
}

fn run(cli: &Cli) -> Result<()> {
    // The config path resolves against the working directory; paths inside
    // the config resolve against the data root.
    let data_root = cli.overrides.resolve_data_root();
    let mut config = ExperimentConfig::load(&cli.config_path)?;
    cli.overrides.apply(&mut config);
    config.validate()?;
    let output_root = config::resolve_path(&data_root, &config.output_dir);
    let layout = Layout::new(&output_root, &config.hash());
    match cli.command.as_str() {
        "prepare" => commands::prepare::cmd_prepare(&config, &layout, &data_root)?,
        "train" => commands::train::cmd_train(&config, &layout)?,
        "evaluate" => commands::evaluate::cmd_evaluate(&config, &layout)?,
        "report" => commands::report::cmd_report(&config, &layout)?,
        _ => unreachable!("validated in parse_args"),
    }
    println!("{} done: {}", cli.command, layout.root().display());
    Ok(())
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match parse_args(&args) {
        Ok(Some(cli)) => match run(&cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Ok(None) => {
            print!("{USAGE}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("run `ppdl --help` for usage");
            ExitCode::FAILURE
        }
    }
}
