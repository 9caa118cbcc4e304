//! Certification driver: sweeps the gluing parameter, mollifies, and checks
//! that the chosen curvature functional stays above κ - ε with ε shrinking
//! and the smoothed metrics converging uniformly to the glued one.

use rayon::prelude::*;

use crate::collar::Side;
use crate::curvature::{
    curvature_operator, curvature_operator_with_flat_factor, flag_min_of_form, isotropic_min_of_form,
    FrameSearch, IsotropicVariant,
};
use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::gluing::{build_g_delta, choose_c, collar_grid, depth_stations, GluedMetric};
use crate::lambda2::{ricci_trace, scalar_trace, symmetrized, SymmetricOperator2};
use crate::profile::build_bump;
use crate::scenarios::Scenario;
use crate::smoothing::{mollify, MollifierConfig, MollifyMode};

/// The curvature functionals whose lower bounds can be certified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Functional {
    Operator,
    Ricci,
    Scalar,
    Bi,
    Isotropic,
    Isotropic1,
    Isotropic2,
    Flag,
}

impl Functional {
    pub fn from_name(name: &str) -> Option<Functional> {
        Some(match name {
            "operator" => Functional::Operator,
            "ricci" => Functional::Ricci,
            "scalar" => Functional::Scalar,
            "bi" => Functional::Bi,
            "isotropic" => Functional::Isotropic,
            "isotropic1" => Functional::Isotropic1,
            "isotropic2" => Functional::Isotropic2,
            "flag" => Functional::Flag,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Functional::Operator => "operator",
            Functional::Ricci => "ricci",
            Functional::Scalar => "scalar",
            Functional::Bi => "bi",
            Functional::Isotropic => "isotropic",
            Functional::Isotropic1 => "isotropic1",
            Functional::Isotropic2 => "isotropic2",
            Functional::Flag => "flag",
        }
    }

    /// Every functional except the scalar bound needs the combined second
    /// fundamental form positive semidefinite; the scalar bound only needs
    /// its trace nonnegative.
    pub fn needs_psd_interface_form(&self) -> bool {
        !matches!(self, Functional::Scalar)
    }

    pub fn all() -> [Functional; 8] {
        [
            Functional::Operator,
            Functional::Ricci,
            Functional::Scalar,
            Functional::Bi,
            Functional::Isotropic,
            Functional::Isotropic1,
            Functional::Isotropic2,
            Functional::Flag,
        ]
    }
}

impl std::fmt::Display for Functional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The scalar whose lower bound by κ defines the condition, evaluated at x.
pub fn evaluate_functional(
    functional: Functional,
    g: &MetricField,
    x: &[f64],
    search: &FrameSearch,
) -> Result<f64> {
    match functional {
        Functional::Operator => curvature_operator(g, x)?.min_eig(),
        Functional::Ricci => {
            let op = curvature_operator(g, x)?;
            let gm = SymmetricOperator2::new(symmetrized(&g.coeff(x)))?;
            let ric = ricci_trace(&op, &gm)?;
            Ok(ric.eigenvalues_against(&gm)?[0])
        }
        Functional::Scalar => {
            let op = curvature_operator(g, x)?;
            let gm = SymmetricOperator2::new(symmetrized(&g.coeff(x)))?;
            scalar_trace(&op, &gm)
        }
        Functional::Bi => curvature_operator(g, x)?.two_smallest_sum(),
        Functional::Isotropic | Functional::Isotropic1 | Functional::Isotropic2 => {
            let variant = match functional {
                Functional::Isotropic => IsotropicVariant::Plain,
                Functional::Isotropic1 => IsotropicVariant::PlusR,
                _ => IsotropicVariant::PlusR2,
            };
            let eff = g.n() + variant.extra();
            if eff < 4 {
                return Err(Error::DimensionPrerequisite {
                    functional: functional.name().into(),
                    requirement: "effective dimension ≥ 4".into(),
                    n: eff,
                });
            }
            let form = curvature_operator_with_flat_factor(g, x, variant.extra())?;
            let gm = g.coeff(x);
            let mut big = nalgebra::DMatrix::identity(eff, eff);
            big.view_mut((0, 0), (g.n(), g.n())).copy_from(&gm);
            Ok(isotropic_min_of_form(&form, &big, search))
        }
        Functional::Flag => {
            if g.n() < 3 {
                return Err(Error::DimensionPrerequisite {
                    functional: "flag".into(),
                    requirement: "n ≥ 3".into(),
                    n: g.n(),
                });
            }
            let form = curvature_operator(g, x)?;
            Ok(flag_min_of_form(&form, &g.coeff(x), search))
        }
    }
}

/// One sweep row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub delta: f64,
    pub h: f64,
    pub c: f64,
    /// κ minus the worst functional value over the sample set (smoothed
    /// two-sided grid plus the one-sided unsmoothed grids).
    pub eps_observed: f64,
    /// sup |g_h - g| over the two-sided grid, distance to the original
    /// continuous metric.
    pub sup_dist: f64,
    /// operator distance between the bent curvature and its expansion at
    /// depth δ/2.
    pub decomp_residual: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub scenario: String,
    pub functional: Functional,
    pub kappa: f64,
    pub rows: Vec<SweepRow>,
    pub passed: bool,
    /// side-wise a.e. deficits per delta rung, for diagnostics
    pub side_deficits: Vec<f64>,
}

impl SweepResult {
    /// RFC-4180-style table with a header row.  Wall times are reported
    /// only when measured (`timings` of the same length as rows); the
    /// column stays zero otherwise so repeated runs stay byte-identical.
    pub fn to_csv(&self, timings: Option<&[u128]>) -> String {
        let mut out = String::from(
            "scenario,functional,kappa,delta,h,C,eps_observed,sup_dist,decomp_residual,wall_ms\n",
        );
        for (i, r) in self.rows.iter().enumerate() {
            let wall = timings.and_then(|t| t.get(i)).copied().unwrap_or(0);
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                self.scenario,
                self.functional,
                self.kappa,
                r.delta,
                r.h,
                r.c,
                r.eps_observed,
                r.sup_dist,
                r.decomp_residual,
                wall
            ));
        }
        out
    }
}

/// How to pick the modification constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CMode {
    Auto,
    Fixed(f64),
}

/// Sweep configuration; `hs = None` means h = δ/8 per rung.
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub deltas: Vec<f64>,
    pub hs: Option<Vec<f64>>,
    pub c_mode: CMode,
    pub seed: u64,
    pub kappa: Option<f64>,
    /// tangential samples per axis (2 keeps 3d scenarios affordable)
    pub per_axis: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            deltas: vec![0.4, 0.2, 0.1],
            hs: None,
            c_mode: CMode::Auto,
            seed: 42,
            kappa: None,
            per_axis: 2,
        }
    }
}

const HYPOTHESIS_TOL: f64 = 1e-10;

/// Gate on the interface hypothesis: PSD combined form (or nonnegative
/// trace for the scalar bound), refused with the offending value.
pub fn hypothesis_gate(scenario: &Scenario, functional: Functional) -> Result<()> {
    let collar = &scenario.collar;
    for xhat in collar.gamma_samples(3) {
        let spec = collar.l_spectrum(&xhat)?;
        if functional.needs_psd_interface_form() {
            if spec[0] < -HYPOTHESIS_TOL {
                return Err(Error::Hypothesis {
                    functional: functional.name().into(),
                    detail: "combined second fundamental form must be positive semidefinite"
                        .into(),
                    value: spec[0],
                });
            }
        } else {
            let tr: f64 = spec.iter().sum();
            if tr < -HYPOTHESIS_TOL {
                return Err(Error::Hypothesis {
                    functional: functional.name().into(),
                    detail: "trace of the combined second fundamental form must be nonnegative"
                        .into(),
                    value: tr,
                });
            }
        }
    }
    Ok(())
}

fn min_over_points(
    functional: Functional,
    field: &MetricField,
    points: &[Vec<f64>],
    seed: u64,
) -> Result<f64> {
    let values: Vec<Result<f64>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, x)| {
            let search = FrameSearch {
                seeds: 384,
                refine_iters: 120,
                seed: seed.wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            };
            evaluate_functional(functional, field, x, &search)
        })
        .collect();
    let mut min = f64::INFINITY;
    for v in values {
        min = min.min(v?);
    }
    Ok(min)
}

/// Runs the full sweep for one scenario and functional.
pub fn certify(scenario: &Scenario, functional: Functional, opts: &CertifyOptions) -> Result<SweepResult> {
    hypothesis_gate(scenario, functional)?;
    let kappa = match opts.kappa {
        Some(k) => k,
        None => scenario
            .kappa_for(functional)
            .ok_or_else(|| Error::MissingKappa(functional.name().into()))?,
    };
    if opts.deltas.is_empty()
        || opts
            .deltas
            .windows(2)
            .any(|w| w[1] >= w[0] || w[1] <= 0.0)
        || opts.deltas[0] <= 0.0
    {
        return Err(Error::Invalid(
            "delta ladder must be strictly decreasing and positive".into(),
        ));
    }
    if let Some(hs) = &opts.hs {
        if hs.windows(2).any(|w| w[1] >= w[0]) || hs.iter().any(|h| *h <= 0.0) {
            return Err(Error::Invalid(
                "h ladder must be strictly decreasing and positive".into(),
            ));
        }
    }

    // the scalar-only regime (indefinite interface form with nonnegative
    // trace) needs the mean-curvature bending before the sweep
    let mut collar = scenario.collar.clone();
    if functional == Functional::Scalar {
        let min_l = collar
            .gamma_samples(3)
            .iter()
            .map(|xhat| collar.l_spectrum(xhat).map(|s| s[0]))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_l < -HYPOTHESIS_TOL {
            // the gentlest slope that still pushes the trace strictly
            // positive: its scalar-curvature cost is O(|φ'| + |φ''|) and
            // must stay well under the vanishing transition deficits
            let report =
                crate::gluing::perturb_mean_curvature(&collar, collar.width(), -2e-4)?;
            collar = report.collar;
        }
    }

    let n = collar.n();
    let mut rows = Vec::new();
    let mut side_deficits = Vec::new();
    for &delta in &opts.deltas {
        let profile = build_bump(delta, 0.05)?;
        let c = match opts.c_mode {
            CMode::Auto => choose_c(&collar)?,
            CMode::Fixed(v) => v,
        };
        let modified = build_g_delta(&collar, &profile, c)?;
        let glued = GluedMetric::new(modified);

        // a.e. bound, side by side, away from the interface
        let depths = depth_stations(delta, collar.width());
        let grid0 = collar_grid(&collar, &depths, opts.per_axis);
        let min0 = min_over_points(functional, glued.modified().field(), &grid0, opts.seed)?;
        let neg: Vec<f64> = depths.iter().map(|d| -d).collect();
        let grid1 = collar_grid(&collar, &neg, opts.per_axis);
        let min1 = min_over_points(functional, collar.g1(), &grid1, opts.seed)?;
        let side_min = min0.min(min1);
        side_deficits.push((kappa - side_min).max(0.0));

        // decomposition residual at half depth
        let residual = {
            let mut x = collar.gamma_samples(1)[0].clone();
            x.push(delta / 2.0);
            debug_assert_eq!(x.len(), n);
            glued.modified().assemble_decomposition(&x)?.residual
        };

        let hs: Vec<f64> = match &opts.hs {
            Some(list) => list.clone(),
            None => vec![delta / 8.0],
        };
        for h in hs {
            let smoothed = mollify(
                &glued,
                &MollifierConfig {
                    h,
                    mode: MollifyMode::NormalOnly,
                },
            )?;
            // two-sided grid clustered where the smoothing acts
            let mut depths = vec![
                0.0,
                0.25 * h,
                0.5 * h,
                h,
                1.5 * h,
                1.95 * h,
                2.5 * h,
                delta / 2.0,
                delta,
                (1.25 * delta).min(0.9 * collar.width()),
            ];
            let mut both = Vec::new();
            for d in depths.drain(..) {
                both.push(d);
                if d > 0.0 {
                    both.push(-d);
                }
            }
            let grid = collar_grid(&collar, &both, opts.per_axis);
            let min_smooth = min_over_points(functional, smoothed.field(), &grid, opts.seed)?;

            let eps_observed = kappa - min_smooth.min(side_min);
            let sup_dist = crate::smoothing::sup_distance_to_original(&glued, &smoothed, opts.per_axis);
            rows.push(SweepRow {
                delta,
                h,
                c,
                eps_observed,
                sup_dist,
                decomp_residual: residual,
            });
        }
    }

    // monotone-trend acceptance along the delta ladder (first h per rung)
    let per_delta: Vec<&SweepRow> = opts
        .deltas
        .iter()
        .map(|d| rows.iter().find(|r| r.delta == *d).unwrap())
        .collect();
    let eps_decreasing = per_delta.windows(2).all(|w| w[1].eps_observed < w[0].eps_observed);
    let dist_decreasing = per_delta.windows(2).all(|w| w[1].sup_dist < w[0].sup_dist);
    let passed = eps_decreasing && dist_decreasing;

    Ok(SweepResult {
        scenario: scenario.name.clone(),
        functional,
        kappa,
        rows,
        passed,
        side_deficits,
    })
}

/// Evaluates the functional of one untouched side at a point, mainly for
/// consistency tests between the functionals.
pub fn side_functional(
    scenario: &Scenario,
    side: Side,
    functional: Functional,
    x: &[f64],
    seed: u64,
) -> Result<f64> {
    let field = scenario.collar.side(side);
    let search = FrameSearch {
        seeds: 384,
        refine_iters: 120,
        seed,
    };
    evaluate_functional(functional, field, x, &search)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{builtin, from_config};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn sphere3_field() -> MetricField {
        let cfg = format!(
            "name = s3\nn = 3\nwidth = 0.5\n\
             [g0]\ng0[1][1] = cos(xn)^2\ng0[2][2] = cos(xn)^2 * sin(x1)^2\n\
             [g1]\ng1[1][1] = cos(xn)^2\ng1[2][2] = cos(xn)^2 * sin(x1)^2\n\
             [domain]\nx1 = 0.7, {}\nx2 = 0.0, 6.0\n\
             [metadata]\nl_spectrum = 0.0, 0.0\n",
            PI - 0.7
        );
        from_config(&cfg).unwrap().collar.g0().clone()
    }

    #[test]
    fn bi_on_round_sphere3() {
        let g = sphere3_field();
        let v = evaluate_functional(
            Functional::Bi,
            &g,
            &[1.2, 1.0, 0.2],
            &FrameSearch::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-5);
    }

    #[test]
    fn flat_functionals_vanish() {
        let cfg = "name = strip\nn = 3\nwidth = 0.4\n";
        let s = from_config(cfg).unwrap();
        let x = [0.5, 0.5, 0.2];
        for f in [
            Functional::Operator,
            Functional::Ricci,
            Functional::Scalar,
            Functional::Bi,
            Functional::Isotropic1,
            Functional::Isotropic2,
            Functional::Flag,
        ] {
            let v = side_functional(&s, Side::M0, f, &x, 42).unwrap();
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn functional_chain_inequalities() {
        // λ1 ≤ (λ1+λ2)/2; Ricci ≥ (n-1)·operator-min; scalar ≥ n(n-1)·op-min
        let g = sphere3_field();
        let pts = [[1.2, 1.0, 0.2], [0.9, 1.5, 0.1], [1.8, 2.0, 0.3]];
        for x in pts {
            let op = evaluate_functional(Functional::Operator, &g, &x, &FrameSearch::default())
                .unwrap();
            let bi =
                evaluate_functional(Functional::Bi, &g, &x, &FrameSearch::default()).unwrap();
            assert!(op <= bi / 2.0 + 1e-9);
            let ric =
                evaluate_functional(Functional::Ricci, &g, &x, &FrameSearch::default()).unwrap();
            assert!(ric >= 2.0 * op - 1e-8);
            let sc =
                evaluate_functional(Functional::Scalar, &g, &x, &FrameSearch::default()).unwrap();
            assert!(sc >= 6.0 * op - 1e-8);
        }
    }

    #[test]
    fn hypothesis_gate_refuses_indefinite_form() {
        // exponential collar with mixed-sign bending: trace positive but a
        // negative eigenvalue
        let cfg = "name = mixed\nn = 3\nwidth = 0.4\n\
                   [g0]\ng0[1][1] = exp(-1.2 * xn)\ng0[2][2] = exp(1.0 * xn)\n\
                   [g1]\ng1[1][1] = exp(1.2 * xn)\ng1[2][2] = exp(-1.0 * xn)\n\
                   [metadata]\nkappa.scalar = -2.0\nl_spectrum = -1.0, 1.2\n";
        let s = from_config(cfg).unwrap();
        let err = hypothesis_gate(&s, Functional::Operator).unwrap_err();
        match err {
            Error::Hypothesis { value, .. } => assert!(value < 0.0),
            other => panic!("unexpected {other:?}"),
        }
        hypothesis_gate(&s, Functional::Scalar).unwrap();
    }

    #[test]
    fn certify_rejects_bad_ladder() {
        let s = builtin("doubled-disk-2d").unwrap();
        let opts = CertifyOptions {
            deltas: vec![0.1, 0.2],
            ..Default::default()
        };
        assert!(certify(&s, Functional::Operator, &opts).is_err());
    }

    #[test]
    fn certify_missing_kappa() {
        let s = builtin("doubled-disk-2d").unwrap();
        let opts = CertifyOptions::default();
        assert!(matches!(
            certify(&s, Functional::Flag, &opts),
            Err(Error::DimensionPrerequisite { .. }) | Err(Error::MissingKappa(_))
        ));
    }

    #[test]
    fn untouched_side_meets_declared_bound() {
        // the far side is never modified, so its functional values must sit
        // above the declared bound up to stencil tolerance
        for name in crate::scenarios::BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            let Some(kappa) = s.kappa_for(Functional::Operator) else {
                continue;
            };
            for xhat in s.collar.gamma_samples(2) {
                for frac in [0.1, 0.4, 0.8] {
                    let mut x = s.collar.on_gamma(&xhat);
                    let n = s.n;
                    x[n - 1] = -frac * s.collar.width();
                    let v = side_functional(&s, Side::M1, Functional::Operator, &x, 42).unwrap();
                    assert!(
                        v >= kappa - 1e-6,
                        "{name}: side value {v} under bound {kappa}"
                    );
                }
            }
        }
    }

    #[test]
    fn certify_explicit_radius_ladder() {
        let s = builtin("doubled-disk-2d").unwrap();
        let opts = CertifyOptions {
            deltas: vec![0.2],
            hs: Some(vec![0.02, 0.01]),
            ..Default::default()
        };
        let res = certify(&s, Functional::Operator, &opts).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert_eq!(res.rows[0].h, 0.02);
        assert_eq!(res.rows[1].h, 0.01);
        // rows of one rung share delta, C and the decomposition residual
        assert_eq!(res.rows[0].delta, res.rows[1].delta);
        assert_eq!(res.rows[0].decomp_residual, res.rows[1].decomp_residual);
    }

    #[test]
    fn certify_disk_two_rungs() {
        let s = builtin("doubled-disk-2d").unwrap();
        let opts = CertifyOptions {
            deltas: vec![0.4, 0.2],
            ..Default::default()
        };
        let res = certify(&s, Functional::Operator, &opts).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert!(
            res.passed,
            "eps {:?} sup {:?}",
            res.rows.iter().map(|r| r.eps_observed).collect::<Vec<_>>(),
            res.rows.iter().map(|r| r.sup_dist).collect::<Vec<_>>()
        );
        let csv = res.to_csv(None);
        assert!(csv.starts_with("scenario,functional,kappa,delta,h,"));
        assert_eq!(csv.lines().count(), 3);
        // determinism of the whole sweep
        let res2 = certify(&s, Functional::Operator, &opts).unwrap();
        assert_eq!(csv, res2.to_csv(None));
    }
}
