//! `dpagd`: command-line front end.
//!
//! Every subcommand reads `key = value` settings from `--config`, overridden
//! by flags of the same name, and writes CSV to `--out` (standard output by
//! default). File outputs get a `<out>.manifest` that replays the run.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

mod commands;
mod config;
mod error;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{value_parser, Arg, ArgMatches, Command};

use crate::commands::{Subcommand, COMMANDS};
use crate::config::{flag_name, parse_config, Resolved};
use crate::error::CliError;

fn subcommand(spec: &Subcommand) -> Command {
    let mut cmd = Command::new(spec.name).about(spec.about);
    for k in spec.keys {
        let help = match k.default {
            None => format!("{} [required]", k.help),
            Some("") => k.help.to_string(),
            Some(d) => format!("{} [default: {d}]", k.help),
        };
        let long: &'static str = Box::leak(flag_name(k.name).into_boxed_str());
        cmd = cmd.arg(Arg::new(k.name).long(long).value_name("VALUE").help(help));
    }
    cmd
}

fn cli() -> Command {
    Command::new("dpagd")
        .version(env!("CARGO_PKG_VERSION"))
        .about(
            "Differentially private adaptive gradient descent: accounting, bounds and experiments",
        )
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("PATH")
                .value_parser(value_parser!(PathBuf))
                .help("key = value settings; flags override them"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .global(true)
                .value_name("PATH")
                .default_value("-")
                .help("CSV destination; `-` is standard output"),
        )
        .arg(
            Arg::new("threads")
                .long("threads")
                .global(true)
                .value_name("N")
                .value_parser(value_parser!(usize))
                .help("worker threads [default: available parallelism]"),
        )
        .subcommands(COMMANDS.iter().map(subcommand))
}

fn resolve(spec: &Subcommand, m: &ArgMatches) -> Result<Resolved, CliError> {
    let file = match m.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Some((path.as_path(), parse_config(&text, path)?))
        }
        None => None,
    };
    let flags: Vec<(&'static str, String)> = spec
        .keys
        .iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name, v.clone())))
        .collect();
    Resolved::merge(spec.name, spec.keys, file, &flags)
}

fn execute(args: Vec<OsString>) -> Result<(), CliError> {
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(()),
                _ => Err(CliError::Config("invalid command line".into())),
            };
        }
    };
    let (name, m) = matches.subcommand().expect("subcommand is required");
    let spec = commands::find(name).expect("subcommands come from the table");

    if let Some(&threads) = m.get_one::<usize>("threads") {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
    }

    let config = resolve(spec, m)?;
    let out = m.get_one::<String>("out").expect("has a default");
    log::debug!("resolved configuration:\n{}", config.render());
    let result = (spec.run)(&config)?;

    if out == "-" {
        std::io::stdout()
            .write_all(result.csv.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
    } else {
        let path = Path::new(out);
        let manifest = output::manifest(&config, &result.inputs)?;
        output::write_atomic(&[
            (path.to_path_buf(), result.csv),
            (output::manifest_path(path), manifest),
        ])?;
        log::info!("wrote {} and its manifest", path.display());
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let code = match execute(std::env::args_os().collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
