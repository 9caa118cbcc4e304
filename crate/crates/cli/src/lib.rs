//! Command implementations behind the `curvglue` binary, exposed as a
//! library so integration tests can drive them in-process.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use curvglue::bounds::{self, CertifyOptions, CMode, Functional};
use curvglue::error::Error;
use curvglue::profile;
use curvglue::scenarios::{self, Scenario};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;
pub const EXIT_UNKNOWN_SCENARIO: i32 = 4;
pub const EXIT_PARSE_ERROR: i32 = 5;

/// Outcome of one command: exit code, stdout payload, stderr notes.
pub struct CmdOutcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutcome {
    fn ok(stdout: String) -> Self {
        CmdOutcome {
            code: EXIT_PASS,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: i32, msg: String) -> Self {
        CmdOutcome {
            code,
            stdout: String::new(),
            stderr: msg,
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::UnknownScenario(_) => EXIT_UNKNOWN_SCENARIO,
        Error::Parse { .. } => EXIT_PARSE_ERROR,
        Error::Hypothesis { .. } => EXIT_REFUSED,
        _ => EXIT_FAIL,
    }
}

/// Thread-count override, `0` or unset meaning automatic.
pub fn configure_threads(env_value: Option<&str>) {
    if let Some(v) = env_value {
        if let Ok(k) = v.trim().parse::<usize>() {
            if k > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global();
            }
        }
    }
}

fn load_scenario(name: Option<&str>, config: Option<&PathBuf>) -> Result<Scenario, Error> {
    match (name, config) {
        (Some(n), None) => scenarios::builtin(n),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
            scenarios::from_config(&text)
        }
        _ => Err(Error::Invalid(
            "pass exactly one of --scenario <name> or --config <path>".into(),
        )),
    }
}

fn scenario_table(list: &[Scenario]) -> String {
    let mut out = String::new();
    let header = format!(
        "{:<24} {:>2} {:>6}  {:<34} {:<18} smooth",
        "name", "n", "width", "kappa", "L spectrum"
    );
    let _ = writeln!(out, "{header}");
    for s in list {
        let kappas = s
            .metadata
            .kappa
            .iter()
            .map(|(f, k)| format!("{f}={k}"))
            .collect::<Vec<_>>()
            .join(" ");
        let spectrum = s
            .metadata
            .l_spectrum
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{:<24} {:>2} {:>6.3}  {:<34} {:<18} {}",
            s.name,
            s.n,
            s.collar.width(),
            kappas,
            spectrum,
            s.metadata.smooth_across
        );
    }
    out
}

/// `list`: built-ins plus any `*.scn` configs found in `config_dir`.
pub fn cmd_list(config_dir: Option<&PathBuf>) -> CmdOutcome {
    let mut list = scenarios::all_builtins();
    if let Some(dir) = config_dir {
        let mut entries: Vec<PathBuf> = match std::fs::read_dir(dir) {
            Ok(read) => read
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "scn"))
                .collect(),
            Err(e) => {
                return CmdOutcome::fail(
                    EXIT_FAIL,
                    format!("cannot read config dir {}: {e}", dir.display()),
                )
            }
        };
        entries.sort();
        for path in entries {
            match std::fs::read_to_string(&path).map_err(|e| {
                Error::Invalid(format!("cannot read {}: {e}", path.display()))
            }) {
                Ok(text) => match scenarios::from_config(&text) {
                    Ok(s) => list.push(s),
                    Err(e) => {
                        return CmdOutcome::fail(
                            exit_code_for(&e),
                            format!("{}: {e}", path.display()),
                        )
                    }
                },
                Err(e) => return CmdOutcome::fail(EXIT_FAIL, e.to_string()),
            }
        }
    }
    CmdOutcome::ok(scenario_table(&list))
}

/// Arguments of the `certify` subcommand.
pub struct CertifySpec {
    pub scenario: Option<String>,
    pub config: Option<PathBuf>,
    pub functional: String,
    pub kappa: Option<f64>,
    pub deltas: Vec<f64>,
    pub hs: Option<Vec<f64>>,
    pub c: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub timings: bool,
}

pub fn cmd_certify(spec: &CertifySpec) -> CmdOutcome {
    let functional = match Functional::from_name(&spec.functional) {
        Some(f) => f,
        None => {
            return CmdOutcome::fail(
                EXIT_FAIL,
                format!(
                    "unknown functional `{}`; expected one of {}",
                    spec.functional,
                    Functional::all()
                        .iter()
                        .map(|f| f.name())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            )
        }
    };
    let scenario = match load_scenario(spec.scenario.as_deref(), spec.config.as_ref()) {
        Ok(s) => s,
        Err(e) => return CmdOutcome::fail(exit_code_for(&e), e.to_string()),
    };
    let opts = CertifyOptions {
        deltas: spec.deltas.clone(),
        hs: spec.hs.clone(),
        c_mode: spec.c.map_or(CMode::Auto, CMode::Fixed),
        seed: spec.seed,
        kappa: spec.kappa,
        per_axis: 2,
    };

    let started = Instant::now();
    let result = match bounds::certify(&scenario, functional, &opts) {
        Ok(r) => r,
        Err(e) => return CmdOutcome::fail(exit_code_for(&e), e.to_string()),
    };
    let elapsed = started.elapsed().as_millis();

    // per-row timings only when asked, so default output is reproducible
    let timings: Option<Vec<u128>> = spec.timings.then(|| {
        let per = elapsed / result.rows.len().max(1) as u128;
        vec![per; result.rows.len()]
    });
    let csv = result.to_csv(timings.as_deref());

    let mut stderr = format!(
        "certify {} / {}: {} in {} ms\n",
        result.scenario,
        functional,
        if result.passed { "PASS" } else { "FAIL" },
        elapsed
    );
    for (i, d) in result.side_deficits.iter().enumerate() {
        let _ = writeln!(
            stderr,
            "  delta {:.4}: side deficit {:.3e}",
            opts.deltas[i], d
        );
    }

    let stdout = if let Some(path) = &spec.out {
        if let Err(e) = std::fs::write(path, &csv) {
            return CmdOutcome::fail(EXIT_FAIL, format!("cannot write {}: {e}", path.display()));
        }
        String::new()
    } else {
        csv
    };
    CmdOutcome {
        code: if result.passed { EXIT_PASS } else { EXIT_FAIL },
        stdout,
        stderr,
    }
}

/// `profile`: dump (x, f, F, FF) plus the constraint report as comments.
pub fn cmd_profile(delta: f64, out: Option<&PathBuf>) -> CmdOutcome {
    let built = match profile::build_bump(delta, 0.05) {
        Ok(p) => p,
        Err(e) => return CmdOutcome::fail(EXIT_FAIL, e.to_string()),
    };
    let mut csv = built.dump_csv(400);
    let report = profile::certify(&built, 10_000);
    for (name, value) in report.rows() {
        let _ = writeln!(csv, "# {name} = {value:.6e}");
    }
    let _ = writeln!(csv, "# max_violation = {:.6e}", report.max_violation());
    let _ = writeln!(csv, "# amplitude = {:.12e}", built.amplitude);
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, &csv) {
            return CmdOutcome::fail(EXIT_FAIL, format!("cannot write {}: {e}", path.display()));
        }
        CmdOutcome::ok(String::new())
    } else {
        CmdOutcome::ok(csv)
    }
}

pub fn parse_float_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{s}` in list"))
        })
        .collect()
}
