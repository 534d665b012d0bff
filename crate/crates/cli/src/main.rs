//! `uqkit`: runs one experiment and writes its CSV files and manifest.
//!
//! ```text
//! uqkit bayes-scan --seed 7 --out out/bayes --set replicates=100
//! uqkit lada-scan --config lada.json --set l_values='[2, 50]'
//! uqkit eddy-ow --show-config
//! ```
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures. `UQKIT_THREADS` caps the worker threads.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches};
use uqkit::experiments::{exit_code, run, Command, ExperimentConfig, THREADS_ENV};
use uqkit::Error;

fn cli() -> clap::Command {
    let common = [
        Arg::new("config").long("config").value_name("FILE").value_parser(value_parser!(PathBuf)).help(
            "JSON config {\"command\", \"seed\", \"out\", \"params\"}; flags override its values",
        ),
        Arg::new("seed").long("seed").value_name("N").value_parser(value_parser!(u64)).help("random seed (default 0)"),
        Arg::new("out")
            .long("out")
            .value_name("DIR")
            .value_parser(value_parser!(PathBuf))
            .help("output directory (default out/<command>)"),
        Arg::new("set")
            .long("set")
            .value_name("KEY=VALUE")
            .action(ArgAction::Append)
            .help("override one numeric parameter; VALUE is parsed as JSON"),
        Arg::new("show-config")
            .long("show-config")
            .action(ArgAction::SetTrue)
            .help("print the resolved configuration with defaults and exit"),
    ];
    let mut app = clap::Command::new("uqkit")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Reproducible uncertainty-quantification experiments")
        .after_help(format!(
            "Exit codes: 0 success, 2 configuration error, 3 numerical failure.\n{THREADS_ENV} caps the worker threads."
        ))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in Command::ALL {
        app = app.subcommand(clap::Command::new(c.name()).about(c.about()).args(common.iter().cloned()));
    }
    app
}

fn resolve(command: Command, m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => {
            let cfg = ExperimentConfig::from_file(path)?;
            if cfg.command != command {
                return Err(Error::Config(format!(
                    "config file is for '{}' but '{}' was requested",
                    cfg.command, command
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(command, PathBuf::from("out").join(command.name())),
    };
    if let Some(seed) = m.get_one::<u64>("seed") {
        cfg.seed = *seed;
    }
    if let Some(out) = m.get_one::<PathBuf>("out") {
        cfg.out = out.clone();
    }
    for pair in m.get_many::<String>("set").into_iter().flatten() {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn show(cfg: &ExperimentConfig) -> Result<(), Error> {
    let mut params = cfg.command.default_params();
    if let Some(obj) = params.as_object_mut() {
        for (k, v) in &cfg.params {
            if !obj.contains_key(k) {
                return Err(Error::Config(format!("unknown parameter '{k}' for {}", cfg.command)));
            }
            obj.insert(k.clone(), v.clone());
        }
    }
    let resolved = serde_json::json!({
        "command": cfg.command,
        "seed": cfg.seed,
        "out": cfg.out,
        "params": params,
    });
    println!("{}", serde_json::to_string_pretty(&resolved)?);
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command: Command = name.parse().expect("subcommands mirror Command::ALL");
    let result = resolve(command, sub).and_then(|cfg| {
        if sub.get_flag("show-config") {
            return show(&cfg);
        }
        let manifest = run(&cfg)?;
        println!("{} finished in {:.2} s", manifest.command, manifest.wall_time_s);
        for o in &manifest.outputs {
            println!("  {}  {}", o.sha256, cfg.out.join(&o.file).display());
        }
        println!("  manifest: {}", cfg.out.join("manifest.json").display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_config_values() {
        let m = cli().get_matches_from(["uqkit", "bayes-scan", "--seed", "9", "--set", "replicates=3", "--out", "o"]);
        let (name, sub) = m.subcommand().unwrap();
        let cfg = resolve(name.parse().unwrap(), sub).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.out, PathBuf::from("o"));
        assert_eq!(cfg.params["replicates"], serde_json::json!(3));
    }
}
