use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use curvglue_cli::{
    cmd_certify, cmd_list, cmd_profile, configure_threads, parse_float_list, CertifySpec,
};

/// Glue two boundary-isometric metrics and certify curvature lower bounds.
#[derive(Parser)]
#[command(name = "curvglue", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in scenarios (and user configs from a directory).
    List {
        /// Directory with additional `*.scn` scenario configs.
        #[arg(long)]
        config_dir: Option<PathBuf>,
    },
    /// Run the certification sweep and emit a CSV report.
    ///
    /// Exit codes: 0 pass, 2 property failure, 3 hypothesis refusal,
    /// 4 unknown scenario, 5 config parse error.
    Certify {
        /// Built-in scenario name.
        #[arg(long)]
        scenario: Option<String>,
        /// Path to a scenario config file (alternative to --scenario).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Functional kind: operator, ricci, scalar, bi, isotropic,
        /// isotropic1, isotropic2, flag.
        #[arg(long)]
        functional: String,
        /// Override the lower bound; defaults to the scenario metadata.
        #[arg(long)]
        kappa: Option<f64>,
        /// Strictly decreasing ladder, e.g. 0.4,0.2,0.1.
        #[arg(long, default_value = "0.4,0.2,0.1")]
        deltas: String,
        /// Mollifier radii: `auto` (delta/8 per rung) or a list.
        #[arg(long, default_value = "auto")]
        hs: String,
        /// Modification constant: `auto` (spectral bound) or a number.
        #[arg(long, default_value = "auto")]
        c: String,
        /// Seed for the frame searches.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the wall_ms column with measured times.  Off by default so
        /// repeated runs produce byte-identical CSV.
        #[arg(long, default_value_t = false)]
        timings: bool,
    },
    /// Dump the transition profile (x, f, F, FF) with its constraint report.
    Profile {
        #[arg(long)]
        delta: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    configure_threads(std::env::var("CURVGLUE_THREADS").ok().as_deref());
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::List { config_dir } => cmd_list(config_dir.as_ref()),
        Command::Certify {
            scenario,
            config,
            functional,
            kappa,
            deltas,
            hs,
            c,
            seed,
            out,
            timings,
        } => {
            let deltas = match parse_float_list(&deltas) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(curvglue_cli::EXIT_FAIL as u8);
                }
            };
            let hs = if hs.trim() == "auto" {
                None
            } else {
                match parse_float_list(&hs) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        eprintln!("{e}");
                        return ExitCode::from(curvglue_cli::EXIT_FAIL as u8);
                    }
                }
            };
            let c = if c.trim() == "auto" {
                None
            } else {
                match c.trim().parse::<f64>() {
                    Ok(v) => Some(v),
                    Err(_) => {
                        eprintln!("bad value for --c: `{c}`");
                        return ExitCode::from(curvglue_cli::EXIT_FAIL as u8);
                    }
                }
            };
            cmd_certify(&CertifySpec {
                scenario,
                config,
                functional,
                kappa,
                deltas,
                hs,
                c,
                seed,
                out,
                timings,
            })
        }
        Command::Profile { delta, out } => cmd_profile(delta, out.as_ref()),
    };
    print!("{}", outcome.stdout);
    eprint!("{}", outcome.stderr);
    ExitCode::from(outcome.code as u8)
}
