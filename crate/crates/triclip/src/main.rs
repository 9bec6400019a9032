//! Command-line entry point.
//!
//! Subcommands: gen-data, split, train, eval, ablate, report.
//! Exit codes: 0 success, 2 configuration or input error, 3 numeric
//! failure during training or evaluation.

use std::path::PathBuf;
use triclip::config::RunConfig;
use triclip::error::Error;
use triclip::run;

const USAGE: &str = "\
usage: triclip <command> [options] [--<section>.<key> <value>]...

commands:
  gen-data   generate the synthetic dataset into run.data_dir
  split      assign train/val/test partitions for the configured setting
  train      train and checkpoint at the best validation HM F1@3
  eval       score a test side from a checkpoint
  ablate     run an ablation grid and tabulate metrics
  report     emit metrics.json, per_class.csv, and cluster rasters

options:
  --config <path>       load a config file before applying overrides
  --count <n>           gen-data: number of frames (default 2000)
  --checkpoint <path>   eval/report: checkpoint to load
  --side <base|novel>   eval: which test side to score
  --axis <components|layer_j|clusters_k>   ablate: grid to run

any config field can be overridden with its dotted name, for example
  --optim.lr 0.005 --sgc.k 8 --run.setting uiv
";

struct Cli {
    command: String,
    config: RunConfig,
    count: usize,
    checkpoint: Option<PathBuf>,
    side: Option<run::Side>,
    axis: Option<run::Axis>,
}

fn parse_cli(args: &[String]) -> Result<Cli, Error> {
    let command = args
        .first()
        .cloned()
        .ok_or_else(|| Error::Config("missing command".into()))?;
    let mut config_path: Option<String> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut count = 2000usize;
    let mut checkpoint = None;
    let mut side = None;
    let mut axis = None;

    let mut i = 1;
    while i < args.len() {
        let flag = &args[i];
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected a flag, got '{flag}'")))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::Config(format!("flag '{flag}' needs a value")))?;
        match key {
            "config" => config_path = Some(value.clone()),
            "count" => {
                count = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad count '{value}'")))?
            }
            "checkpoint" => checkpoint = Some(PathBuf::from(value)),
            "side" => side = Some(value.parse()?),
            "axis" => axis = Some(value.parse()?),
            dotted => overrides.push((dotted.to_string(), value.clone())),
        }
        i += 2;
    }

    let mut config = match config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for (key, value) in &overrides {
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(Cli {
        command,
        config,
        count,
        checkpoint,
        side,
        axis,
    })
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    match cli.command.as_str() {
        "gen-data" => run::run_gen_data(&cli.config, cli.count),
        "split" => run::run_split(&cli.config).map(|_| ()),
        "train" => {
            let outcome = run::run_train(&cli.config)?;
            println!(
                "trained {} steps; loss {:.4} -> {:.4}; best val HM F1@3 {:.4}; checkpoint {}",
                outcome.steps,
                outcome.initial_loss,
                outcome.final_loss,
                outcome.best_val_hm_f1,
                outcome.checkpoint.display()
            );
            Ok(())
        }
        "eval" => {
            let ckpt = cli
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("eval needs --checkpoint".into()))?;
            let side = cli
                .side
                .ok_or_else(|| Error::Config("eval needs --side base|novel".into()))?;
            let report = run::run_eval(&cli.config, ckpt, side)?;
            println!(
                "{}: {} frames, mAP {:.4}, F1@3 {:.4}",
                report.side, report.frames, report.map, report.f1_at_3
            );
            Ok(())
        }
        "ablate" => {
            let axis = cli
                .axis
                .ok_or_else(|| Error::Config("ablate needs --axis".into()))?;
            let csv = run::run_ablate(&cli.config, axis)?;
            println!("wrote {}", csv.display());
            Ok(())
        }
        "report" => {
            let ckpt = cli
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("report needs --checkpoint".into()))?;
            run::run_report(&cli.config, ckpt)
        }
        other => Err(Error::Config(format!("unknown command '{other}'"))),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numeric(_) | Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        eprint!("{USAGE}");
        std::process::exit(if args.is_empty() { 2 } else { 0 });
    }
    let code = match parse_cli(&args) {
        Ok(cli) => match dispatch(&cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            eprint!("{USAGE}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
