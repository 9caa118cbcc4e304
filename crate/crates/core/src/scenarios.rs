//! Built-in gluing scenarios and the text config format for user-defined
//! ones.
//!
//! A scenario is a two-sided collar with declared ground truth: the lower
//! bound κ per curvature functional, the spectrum of the combined second
//! fundamental form on the interface, and whether the metric is smooth
//! across it.  Declared data is validated against recomputation at build
//! time, so authoring mistakes surface immediately.
//!
//! Config files are sectioned key/value text with bracketed indices for
//! coefficient entries, e.g.
//!
//! ```text
//! name = my-scenario
//! n = 2
//! width = 0.45
//!
//! [g0]
//! g0[1][1] = (1 - xn)^2
//!
//! [g1]
//! g1[1][1] = (1 + xn)^2
//!
//! [domain]
//! x1 = 0.0, 6.283185307179586
//!
//! [metadata]
//! kappa.operator = 0.0
//! l_spectrum = 2.0
//! smooth = false
//! ```
//!
//! Omitted coefficient entries default to the identity block, and `xn`
//! names the signed interface distance.  The full grammar lives in
//! `docs/scenario-format.md`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::bounds::Functional;
use crate::collar::CollarData;
use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::field::{ChartDomain, DerivativeSupply, MetricField};

pub const BUILTIN_NAMES: [&str; 6] = [
    "doubled-disk-2d",
    "doubled-ball-3d",
    "doubled-hemisphere-2d",
    "doubled-hemisphere-3d",
    "cap-on-cylinder-2d",
    "cap-on-disk-2d",
];

/// Declared ground truth for a scenario.
#[derive(Debug, Clone, Default)]
pub struct ScenarioMetadata {
    /// Lower bound per functional; absent entries require an explicit κ.
    pub kappa: BTreeMap<Functional, f64>,
    /// Eigenvalues of the combined second fundamental form on the interface
    /// (ascending; constant over the interface for every built-in).
    pub l_spectrum: Vec<f64>,
    /// Whether the two sides assemble to a metric smooth across the
    /// interface.
    pub smooth_across: bool,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub collar: CollarData,
    pub metadata: ScenarioMetadata,
}

const SPECTRUM_TOL: f64 = 1e-8;

impl Scenario {
    fn validated(self) -> Result<Self> {
        // declared spectrum against recomputation on interface samples
        for xhat in self.collar.gamma_samples(3) {
            let spec = self.collar.l_spectrum(&xhat)?;
            let ok = spec.len() == self.metadata.l_spectrum.len()
                && spec
                    .iter()
                    .zip(&self.metadata.l_spectrum)
                    .all(|(a, b)| (a - b).abs() <= SPECTRUM_TOL);
            if !ok {
                return Err(Error::SpectrumMismatch {
                    declared: self.metadata.l_spectrum.clone(),
                    computed: spec,
                });
            }
        }
        Ok(self)
    }

    pub fn kappa_for(&self, functional: Functional) -> Option<f64> {
        self.metadata.kappa.get(&functional).copied()
    }
}

/// Metric field whose coefficients and first two derivative supplies come
/// from symbolic differentiation of expression trees.
fn metric_from_exprs(domain: ChartDomain, entries: Vec<Vec<Expr>>) -> MetricField {
    let n = domain.n();
    let entries = Arc::new(entries);
    let d1_table: Arc<Vec<Vec<Vec<Expr>>>> = Arc::new(
        (0..n)
            .map(|k| {
                entries
                    .iter()
                    .map(|row| row.iter().map(|e| e.diff(k)).collect())
                    .collect()
            })
            .collect(),
    );
    let d2_table: Arc<Vec<Vec<Vec<Vec<Expr>>>>> = Arc::new(
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|l| {
                        d1_table[k]
                            .iter()
                            .map(|row: &Vec<Expr>| row.iter().map(|e| e.diff(l)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    );
    fn eval_table(n: usize, table: &[Vec<Expr>], x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = table[i][j].eval(x);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
    let coeff = {
        let entries = Arc::clone(&entries);
        Arc::new(move |x: &[f64]| eval_table(n, &entries, x))
    };
    let d1 = {
        let d1_table = Arc::clone(&d1_table);
        Arc::new(move |x: &[f64], k: usize| eval_table(n, &d1_table[k], x))
    };
    let d2 = {
        let d2_table = Arc::clone(&d2_table);
        Arc::new(move |x: &[f64], k: usize, l: usize| eval_table(n, &d2_table[k][l], x))
    };
    MetricField::new(domain, coeff, DerivativeSupply::Analytic { d1, d2 })
}

fn identity_entries(n: usize) -> Vec<Vec<Expr>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Expr::Num(if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect()
}

type CoeffTable = Vec<Vec<Expr>>;

fn parse_entries(n: usize, lines: &[(usize, String)]) -> Result<(CoeffTable, CoeffTable)> {
    let mut g0 = identity_entries(n);
    let mut g1 = identity_entries(n);
    for (line_no, raw) in lines {
        let line = raw.split('#').next().unwrap_or("");
        let Some((lhs, rhs)) = line.split_once('=') else {
            continue;
        };
        let lhs_trim = lhs.trim();
        let target_is_g0 = lhs_trim.starts_with("g0");
        let idx: Vec<usize> = lhs_trim[2..]
            .trim_matches(|c| c == '[' || c == ']')
            .split("][")
            .map(|s| {
                s.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: *line_no,
                    col: 1,
                    msg: format!("bad index in `{lhs_trim}`"),
                })
            })
            .collect::<Result<_>>()?;
        if idx.len() != 2 || idx.iter().any(|&i| i < 1 || i > n) {
            return Err(Error::Parse {
                line: *line_no,
                col: 1,
                msg: format!("coefficient index out of range in `{lhs_trim}`"),
            });
        }
        let col0 = line.find('=').unwrap() + 2 + leading_ws(rhs);
        let e = expr::parse_at(rhs.trim(), n, *line_no, col0)?;
        let (i, j) = (idx[0] - 1, idx[1] - 1);
        let table = if target_is_g0 { &mut g0 } else { &mut g1 };
        table[i][j] = e.clone();
        table[j][i] = e;
    }
    Ok((g0, g1))
}

fn leading_ws(s: &str) -> usize {
    s.chars().take_while(|c| c.is_whitespace()).count()
}

/// Parses a scenario from config text.
pub fn from_config(text: &str) -> Result<Scenario> {
    let mut name = String::from("user-scenario");
    let mut n: Option<usize> = None;
    let mut width: Option<f64> = None;
    let mut domain_lines: Vec<(usize, String)> = Vec::new();
    let mut coeff_lines: Vec<(usize, String)> = Vec::new();
    let mut meta_lines: Vec<(usize, String)> = Vec::new();
    let mut section = String::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: line_no,
                col: 1,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.starts_with("g0[") || key.starts_with("g1[") {
            coeff_lines.push((line_no, raw.to_string()));
            continue;
        }
        match (section.as_str(), key) {
            (_, "name") => name = value.to_string(),
            (_, "n") => {
                n = Some(value.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    col: 1,
                    msg: format!("bad dimension `{value}`"),
                })?)
            }
            (_, "width") => {
                width = Some(value.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    col: 1,
                    msg: format!("bad width `{value}`"),
                })?)
            }
            ("domain", _) => domain_lines.push((line_no, line.to_string())),
            ("metadata", _) => meta_lines.push((line_no, line.to_string())),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    col: 1,
                    msg: format!("unrecognized key `{key}` in section `[{section}]`"),
                })
            }
        }
    }

    let n = n.ok_or(Error::Parse {
        line: 1,
        col: 1,
        msg: "missing `n = <dimension>`".into(),
    })?;
    if n < 2 {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            msg: format!("dimension n = {n} must be at least 2"),
        });
    }
    let width = width.ok_or(Error::Parse {
        line: 1,
        col: 1,
        msg: "missing `width = <collar half-width>`".into(),
    })?;

    // tangential boxes default to [0, 1]
    let mut tangential = vec![[0.0, 1.0]; n - 1];
    for (line_no, line) in &domain_lines {
        let (key, value) = line.split_once('=').unwrap();
        let key = key.trim();
        let Some(axis) = key
            .strip_prefix('x')
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&a| a >= 1 && a < n)
        else {
            return Err(Error::Parse {
                line: *line_no,
                col: 1,
                msg: format!("domain key `{key}` must be x1 .. x{}", n - 1),
            });
        };
        let parts: Vec<&str> = value.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                line: *line_no,
                col: 1,
                msg: "domain value must be `lo, hi`".into(),
            });
        }
        let lo: f64 = parts[0].parse().map_err(|_| Error::Parse {
            line: *line_no,
            col: 1,
            msg: format!("bad number `{}`", parts[0]),
        })?;
        let hi: f64 = parts[1].parse().map_err(|_| Error::Parse {
            line: *line_no,
            col: 1,
            msg: format!("bad number `{}`", parts[1]),
        })?;
        tangential[axis - 1] = [lo, hi];
    }

    let mut metadata = ScenarioMetadata::default();
    for (line_no, line) in &meta_lines {
        let (key, value) = line.split_once('=').unwrap();
        let key = key.trim();
        let value = value.trim();
        if let Some(fname) = key.strip_prefix("kappa.") {
            let f = Functional::from_name(fname).ok_or(Error::Parse {
                line: *line_no,
                col: 1,
                msg: format!("unknown functional `{fname}`"),
            })?;
            let v: f64 = value.parse().map_err(|_| Error::Parse {
                line: *line_no,
                col: 1,
                msg: format!("bad number `{value}`"),
            })?;
            metadata.kappa.insert(f, v);
        } else if key == "l_spectrum" {
            metadata.l_spectrum = value
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: *line_no,
                        col: 1,
                        msg: format!("bad number `{s}` in l_spectrum"),
                    })
                })
                .collect::<Result<_>>()?;
            metadata
                .l_spectrum
                .sort_by(|a, b| a.partial_cmp(b).unwrap());
        } else if key == "smooth" {
            metadata.smooth_across = value == "true";
        } else {
            return Err(Error::Parse {
                line: *line_no,
                col: 1,
                msg: format!("unrecognized metadata key `{key}`"),
            });
        }
    }

    let (g0, g1) = parse_entries(n, &coeff_lines)?;
    let mut iv0 = tangential.clone();
    iv0.push([0.0, width]);
    let mut iv1 = tangential;
    iv1.push([-width, 0.0]);
    let f0 = metric_from_exprs(ChartDomain::new(iv0)?, g0);
    let f1 = metric_from_exprs(ChartDomain::new(iv1)?, g1);
    let collar = CollarData::new(f0, f1, width)?;
    if metadata.l_spectrum.is_empty() {
        // default the declaration to the recomputed spectrum at one point
        let sample = collar.gamma_samples(1)[0].clone();
        metadata.l_spectrum = collar.l_spectrum(&sample)?;
    }
    Scenario {
        name,
        n,
        collar,
        metadata,
    }
    .validated()
}

fn builtin_config(name: &str) -> Option<String> {
    let two_pi = std::f64::consts::PI * 2.0;
    let pi = std::f64::consts::PI;
    match name {
        "doubled-disk-2d" => Some(format!(
            "name = doubled-disk-2d\nn = 2\nwidth = 0.45\n\
             [g0]\ng0[1][1] = (1 - xn)^2\n\
             [g1]\ng1[1][1] = (1 + xn)^2\n\
             [domain]\nx1 = 0.0, {two_pi}\n\
             [metadata]\nkappa.operator = 0\nkappa.ricci = 0\nkappa.scalar = 0\n\
             kappa.isotropic2 = 0\nl_spectrum = 2.0\nsmooth = false\n"
        )),
        "doubled-ball-3d" => Some(format!(
            "name = doubled-ball-3d\nn = 3\nwidth = 0.45\n\
             [g0]\ng0[1][1] = (1 - xn)^2\ng0[2][2] = (1 - xn)^2 * sin(x1)^2\n\
             [g1]\ng1[1][1] = (1 + xn)^2\ng1[2][2] = (1 + xn)^2 * sin(x1)^2\n\
             [domain]\nx1 = 0.7, {}\nx2 = 0.0, {two_pi}\n\
             [metadata]\nkappa.operator = 0\nkappa.ricci = 0\nkappa.scalar = 0\n\
             kappa.bi = 0\nkappa.flag = 0\nkappa.isotropic1 = 0\nkappa.isotropic2 = 0\n\
             l_spectrum = 2.0, 2.0\nsmooth = false\n",
            pi - 0.7
        )),
        "doubled-hemisphere-2d" => Some(format!(
            "name = doubled-hemisphere-2d\nn = 2\nwidth = 0.5\n\
             [g0]\ng0[1][1] = cos(xn)^2\n\
             [g1]\ng1[1][1] = cos(xn)^2\n\
             [domain]\nx1 = 0.0, {two_pi}\n\
             [metadata]\nkappa.operator = 1\nkappa.ricci = 1\nkappa.scalar = 2\n\
             kappa.isotropic2 = 0\nl_spectrum = 0.0\nsmooth = true\n"
        )),
        "doubled-hemisphere-3d" => Some(format!(
            "name = doubled-hemisphere-3d\nn = 3\nwidth = 0.5\n\
             [g0]\ng0[1][1] = cos(xn)^2\ng0[2][2] = cos(xn)^2 * sin(x1)^2\n\
             [g1]\ng1[1][1] = cos(xn)^2\ng1[2][2] = cos(xn)^2 * sin(x1)^2\n\
             [domain]\nx1 = 0.7, {}\nx2 = 0.0, {two_pi}\n\
             [metadata]\nkappa.operator = 1\nkappa.ricci = 2\nkappa.scalar = 6\n\
             kappa.bi = 2\nkappa.flag = 2\n\
             l_spectrum = 0.0, 0.0\nsmooth = true\n",
            pi - 0.7
        )),
        "cap-on-cylinder-2d" => Some(format!(
            "name = cap-on-cylinder-2d\nn = 2\nwidth = 0.5\n\
             [g0]\ng0[1][1] = cos(xn)^2\n\
             [g1]\ng1[1][1] = 1\n\
             [domain]\nx1 = 0.0, {two_pi}\n\
             [metadata]\nkappa.operator = 0\nkappa.ricci = 0\nkappa.scalar = 0\n\
             kappa.isotropic2 = 0\nl_spectrum = 0.0\nsmooth = false\n"
        )),
        "cap-on-disk-2d" => {
            // flat disk of radius sin θ₀ on side 0, unit-sphere cap of
            // opening θ₀ on side 1; L = (1 + cos θ₀)/sin θ₀ on the circle
            let theta0 = pi / 3.0;
            let r = theta0.sin();
            let l = (1.0 + theta0.cos()) / theta0.sin();
            Some(format!(
                "name = cap-on-disk-2d\nn = 2\nwidth = 0.4\n\
                 [g0]\ng0[1][1] = ({r} - xn)^2\n\
                 [g1]\ng1[1][1] = sin({theta0} + xn)^2\n\
                 [domain]\nx1 = 0.0, {two_pi}\n\
                 [metadata]\nkappa.operator = 0\nkappa.ricci = 0\nkappa.scalar = 0\n\
                 kappa.isotropic2 = 0\nl_spectrum = {l}\nsmooth = false\n"
            ))
        }
        _ => None,
    }
}

/// Builds one of the named built-in scenarios.
pub fn builtin(name: &str) -> Result<Scenario> {
    let cfg = builtin_config(name).ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    from_config(&cfg)
}

/// All built-ins in a stable order.
pub fn all_builtins() -> Vec<Scenario> {
    BUILTIN_NAMES
        .iter()
        .map(|n| builtin(n).expect("builtin scenarios validate"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_builtins_validate() {
        let all = all_builtins();
        assert_eq!(all.len(), 6);
        for s in &all {
            assert!(!s.metadata.l_spectrum.is_empty(), "{}", s.name);
        }
    }

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(
            builtin("doubled-banana"),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn config_entry_matches_closed_form() {
        let s = builtin("doubled-disk-2d").unwrap();
        for t in [0.0, 0.1, 0.3] {
            let a = s.collar.g0().coeff(&[1.0, t]);
            assert_abs_diff_eq!(a[(0, 0)], (1.0 - t) * (1.0 - t), epsilon = 1e-15);
            let b = s.collar.g1().coeff(&[1.0, -t]);
            assert_abs_diff_eq!(b[(0, 0)], (1.0 - t) * (1.0 - t), epsilon = 1e-15);
        }
    }

    #[test]
    fn cap_on_disk_spectrum() {
        let s = builtin("cap-on-disk-2d").unwrap();
        let theta0 = std::f64::consts::PI / 3.0;
        let expect = (1.0 + theta0.cos()) / theta0.sin();
        assert_abs_diff_eq!(s.metadata.l_spectrum[0], expect, epsilon = 1e-9);
    }

    #[test]
    fn hemisphere_3d_totally_geodesic() {
        let s = builtin("doubled-hemisphere-3d").unwrap();
        for xhat in s.collar.gamma_samples(2) {
            let l = s.collar.combined_l(&xhat).unwrap();
            assert!(l.abs().max() < 1e-10);
        }
    }

    #[test]
    fn parse_error_has_position() {
        let cfg = "name = broken\nn = 2\nwidth = 0.4\n[g0]\ng0[1][1] = sin(x1\n";
        match from_config(cfg) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn omitted_entries_default_to_identity() {
        let cfg = "name = plain\nn = 2\nwidth = 0.4\n";
        let s = from_config(cfg).unwrap();
        let g = s.collar.g0().coeff(&[0.5, 0.1]);
        assert_eq!(g, DMatrix::identity(2, 2));
    }

    #[test]
    fn declared_spectrum_mismatch_rejected() {
        let cfg = "name = bad\nn = 2\nwidth = 0.4\n\
                   [g0]\ng0[1][1] = (1 - xn)^2\n[g1]\ng1[1][1] = (1 + xn)^2\n\
                   [metadata]\nl_spectrum = 3.0\n";
        assert!(matches!(
            from_config(cfg),
            Err(Error::SpectrumMismatch { .. })
        ));
    }

    #[test]
    fn non_spd_sample_rejected() {
        let cfg = "name = degenerate\nn = 2\nwidth = 0.4\n[g0]\ng0[1][1] = xn - 0.2\n";
        assert!(from_config(cfg).is_err());
    }

    #[test]
    fn fermi_violation_in_config_rejected() {
        let cfg = "name = skew\nn = 2\nwidth = 0.4\n[g0]\ng0[1][2] = 0.3\n";
        assert!(matches!(
            from_config(cfg),
            Err(Error::FermiViolation { .. })
        ));
    }

    #[test]
    fn analytic_supply_from_symbolic_diff() {
        let s = builtin("doubled-hemisphere-2d").unwrap();
        let x = [1.0, 0.2];
        let d = s.collar.g0().d1(&x, 1).unwrap();
        assert_abs_diff_eq!(d[(0, 0)], -(2.0_f64 * 0.2).sin(), epsilon = 1e-14);
        let dd = s.collar.g0().d2(&x, 1, 1).unwrap();
        assert_abs_diff_eq!(dd[(0, 0)], -2.0 * (2.0_f64 * 0.2).cos(), epsilon = 1e-14);
    }
}
