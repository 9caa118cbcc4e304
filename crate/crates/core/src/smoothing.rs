//! Mollification of the glued metric across the interface.
//!
//! The glued coefficients are smooth on each side and C^{1,1} across x^n = 0,
//! so convolving in the normal variable alone restores C² regularity.  The
//! kernel is the polynomial bump ρ(u) ∝ (1-u²)⁶ on [-1,1]: C⁵ at the
//! support ends, normalized, with a small second moment, and integrable
//! exactly with Gauss-Legendre panels split at the interface kink.  A
//! two-function C² partition blends the convolved and original coefficients
//! back together across a band of fixed width: the band must not shrink
//! with h, because the blend injects curvature errors of order
//! |η''| · |ρ_h∗g - g| = O(h²/W²), which only vanishes for fixed W.  A
//! full tensor-product mode is kept behind a flag for cross-validation in
//! low dimension.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::curvature::curvature_operator;
use crate::error::{Error, Result};
use crate::field::{DerivativeSupply, FdConfig, MetricField};
use crate::gluing::{collar_grid, GluedMetric};
use crate::lambda2::generalized_eigenvalues;

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const GL16: [(f64, f64); 16] = [
    (-0.9894009349916499, 0.027152459411754096),
    (-0.9445750230732326, 0.06225352393864789),
    (-0.8656312023878318, 0.09515851168249279),
    (-0.755404408355003, 0.12462897125553388),
    (-0.6178762444026438, 0.14959598881657674),
    (-0.4580167776572274, 0.16915651939500254),
    (-0.2816035507792589, 0.18260341504492358),
    (-0.0950125098376374, 0.1894506104550685),
    (0.0950125098376374, 0.1894506104550685),
    (0.2816035507792589, 0.18260341504492358),
    (0.4580167776572274, 0.16915651939500254),
    (0.6178762444026438, 0.14959598881657674),
    (0.755404408355003, 0.12462897125553388),
    (0.8656312023878318, 0.09515851168249279),
    (0.9445750230732326, 0.06225352393864789),
    (0.9894009349916499, 0.027152459411754096),
];

/// Normalization of (1-u²)⁶ on [-1,1].
const KERNEL_NORM: f64 = 135135.0 / 92160.0;

/// Normalized polynomial bump on [-1, 1], C⁵ at the support ends with
/// second moment 1/15.
pub fn kernel(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - u * u;
    KERNEL_NORM * w.powi(6)
}

/// Integrates z ↦ ρ(z) f(z) over [-1,1], splitting at the points in `cuts`
/// where f has kinks.
pub fn integrate_against_kernel<F: Fn(f64) -> f64>(cuts: &[f64], f: F) -> f64 {
    let mut acc = 0.0;
    for (lo, hi) in kernel_panels(cuts) {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (node, weight) in GL16 {
            let z = mid + half * node;
            acc += weight * half * kernel(z) * f(z);
        }
    }
    acc
}

fn kernel_panels(cuts: &[f64]) -> Vec<(f64, f64)> {
    let mut knots = vec![-1.0];
    for &c in cuts {
        if c > -1.0 && c < 1.0 {
            knots.push(c);
        }
    }
    knots.push(1.0);
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Matrix-valued version: one metric evaluation per quadrature node.
fn integrate_matrix_against_kernel<F: Fn(f64) -> DMatrix<f64>>(
    n: usize,
    cuts: &[f64],
    f: F,
) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(n, n);
    for (lo, hi) in kernel_panels(cuts) {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (node, weight) in GL16 {
            let z = mid + half * node;
            acc += f(z) * (weight * half * kernel(z));
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MollifyMode {
    /// Convolve the normal variable only (default; the glued metric is
    /// already smooth tangentially).
    NormalOnly,
    /// Tensor-product convolution over all variables; expensive, kept for
    /// cross-validation.
    Full,
}

#[derive(Debug, Clone, Copy)]
pub struct MollifierConfig {
    pub h: f64,
    pub mode: MollifyMode,
}

impl MollifierConfig {
    pub fn normal_only(h: f64) -> Self {
        MollifierConfig {
            h,
            mode: MollifyMode::NormalOnly,
        }
    }
}

/// The smoothed two-sided metric.
#[derive(Clone)]
pub struct SmoothedMetric {
    field: MetricField,
    pub delta: f64,
    pub h: f64,
    pub mode: MollifyMode,
    /// sup |g_h - glued| over the validation grid
    pub sup_distance: f64,
    /// Lipschitz bound modulus(∂_n g) * h from sampled normal derivatives
    pub lipschitz_bound: f64,
}

impl SmoothedMetric {
    pub fn field(&self) -> &MetricField {
        &self.field
    }
}

/// C² cutoff: 1 on |t| ≤ b1, 0 on |t| ≥ b2, quintic step between.
fn blend(t: f64, b1: f64, b2: f64) -> f64 {
    let a = t.abs();
    if a <= b1 {
        1.0
    } else if a >= b2 {
        0.0
    } else {
        let v = (b2 - a) / (b2 - b1);
        v * v * v * (10.0 - 15.0 * v + 6.0 * v * v)
    }
}

/// Fixed partition band: the inner edge hugs the convolution scale, the
/// outer edge the chart, so the band width stays bounded away from zero as
/// h shrinks.
pub fn blend_band(h: f64, width: f64) -> (f64, f64) {
    let b1 = 2.0 * h;
    let b2 = (0.95 * width).min(1.05 * width - h);
    (b1, b2)
}

/// Mollifies the glued metric.  Requires h < delta/4 and h < width/4 so the
/// smoothing neither reaches the transition structure nor leaves the chart.
pub fn mollify(glued: &GluedMetric, cfg: &MollifierConfig) -> Result<SmoothedMetric> {
    let delta = glued.delta();
    let width = glued.collar().width();
    let limit = (delta / 4.0).min(width / 4.0);
    if !(cfg.h > 0.0 && cfg.h < limit) {
        return Err(Error::MollifierRadius { h: cfg.h, limit });
    }
    let h = cfg.h;
    let n = glued.n();
    let glued_arc = Arc::new(glued.clone());
    let mode = cfg.mode;
    let (b1, b2) = blend_band(h, width);

    let convolved = {
        let glued = Arc::clone(&glued_arc);
        move |x: &[f64]| -> DMatrix<f64> {
            let t = x[n - 1];
            match mode {
                MollifyMode::NormalOnly => {
                    integrate_matrix_against_kernel(n, &[t / h], |z| {
                        let mut y = x.to_vec();
                        y[n - 1] = t - h * z;
                        glued.coeff(&y)
                    })
                }
                MollifyMode::Full => {
                    // tensor-product kernel; the kink only runs along the
                    // normal axis
                    let mut weights: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
                    for axis in 0..n - 1 {
                        let mut next = Vec::new();
                        for (partial, w) in &weights {
                            for (node, wt) in GL16 {
                                let mut p = partial.clone();
                                p.push(x[axis] - h * node);
                                next.push((p, w * wt * kernel(node)));
                            }
                        }
                        weights = next;
                    }
                    let mut out = DMatrix::zeros(n, n);
                    for (tang, w) in &weights {
                        let inner = integrate_matrix_against_kernel(n, &[t / h], |z| {
                            let mut y = tang.clone();
                            y.push(t - h * z);
                            glued.coeff(&y)
                        });
                        out += inner * *w;
                    }
                    out
                }
            }
        }
    };

    let coeff = {
        let glued = Arc::clone(&glued_arc);
        Arc::new(move |x: &[f64]| {
            let t = x[n - 1];
            let eta = blend(t, b1, b2);
            if eta == 0.0 {
                return glued.coeff(x);
            }
            let smooth = convolved(x);
            if eta == 1.0 {
                smooth
            } else {
                smooth * eta + glued.coeff(x) * (1.0 - eta)
            }
        })
    };

    // two-sided domain for the smoothed field
    let mut intervals = glued.collar().g0().domain().intervals().to_vec();
    intervals[n - 1] = [-width, width];
    let domain = crate::field::ChartDomain::new(intervals)?;
    // Richardson keeps the truncation of the h-scale features in check
    // while the step stays large enough to sit above the roundoff floor
    let fd = FdConfig {
        rel_step: 1e-4,
        richardson: true,
    };
    let field = MetricField::new(domain, coeff, DerivativeSupply::FiniteDifference(fd));

    // validation sweep: SPD, distance to the glued metric, Lipschitz bound
    let depths = [
        0.0,
        0.25 * h,
        0.5 * h,
        h,
        1.5 * h,
        0.5 * (b1 + b2),
        delta / 2.0,
        0.98 * b2,
    ];
    let mut sup: f64 = 0.0;
    let mut lip: f64 = 0.0;
    for sign in [1.0, -1.0] {
        for &d in &depths {
            for xhat in glued.collar().gamma_samples(2) {
                let mut x = xhat.clone();
                x.push(sign * d);
                let gh = field.coeff(&x);
                let min = gh
                    .symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if min <= 0.0 {
                    return Err(Error::SpdLoss {
                        point: x.clone(),
                        min_eig: min,
                    });
                }
                sup = sup.max((gh - glued.coeff(&x)).abs().max());
                let side = if sign >= 0.0 {
                    glued.modified().field()
                } else {
                    glued.collar().g1()
                };
                if let Ok(d1) = side.d1(&x, n - 1) {
                    lip = lip.max(d1.abs().max());
                }
            }
        }
    }

    Ok(SmoothedMetric {
        field,
        delta,
        h,
        mode: cfg.mode,
        sup_distance: sup,
        lipschitz_bound: lip * h,
    })
}

/// One rung of the radius sweep in [`curvature_perturbation`].
#[derive(Debug, Clone)]
pub struct PerturbationRow {
    pub h: f64,
    pub worst_slack: f64,
    pub argmin: Vec<f64>,
    pub sup_distance: f64,
}

/// Report of how far the smoothed curvature can dip under κ - ε(δ).
#[derive(Debug, Clone)]
pub struct CurvaturePerturbationReport {
    pub eps_delta: f64,
    pub rows: Vec<PerturbationRow>,
}

impl CurvaturePerturbationReport {
    pub fn to_csv(&self, scenario: &str, delta: f64) -> String {
        let mut out = String::from("scenario,delta,h,worst_slack,argmin,sup_metric_distance\n");
        for r in &self.rows {
            let argmin = r
                .argmin
                .iter()
                .map(|v| format!("{v:.6e}"))
                .collect::<Vec<_>>()
                .join(";");
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{},{:.12e}\n",
                scenario, delta, r.h, r.worst_slack, argmin, r.sup_distance
            ));
        }
        out
    }
}

/// Sweeps h, h/2, h/4 and reports the worst slack of
/// min_eig(curvature(g_h)) against κ - ε(δ), where ε(δ) is measured from
/// the unsmoothed sides away from the interface.
pub fn curvature_perturbation(
    glued: &GluedMetric,
    cfg: &MollifierConfig,
    kappa: f64,
) -> Result<CurvaturePerturbationReport> {
    let collar = glued.collar();
    let delta = glued.delta();
    let n = glued.n();

    // a.e. deficit of the unsmoothed glued metric, side by side
    let mut min_side = f64::INFINITY;
    for depth in crate::gluing::depth_stations(delta, collar.width()) {
        for xhat in collar.gamma_samples(2) {
            let mut x0 = collar.on_gamma(&xhat);
            x0[n - 1] = depth;
            min_side = min_side.min(curvature_operator(glued.modified().field(), &x0)?.min_eig()?);
            let mut x1 = collar.on_gamma(&xhat);
            x1[n - 1] = -depth;
            min_side = min_side.min(curvature_operator(collar.g1(), &x1)?.min_eig()?);
        }
    }
    let eps_delta = (kappa - min_side).max(0.0);

    let mut rows = Vec::new();
    for factor in [1.0, 0.5, 0.25] {
        let h = cfg.h * factor;
        let smoothed = mollify(
            glued,
            &MollifierConfig {
                h,
                mode: cfg.mode,
            },
        )?;
        let mut worst = f64::INFINITY;
        let mut argmin = Vec::new();
        let (b1, b2) = blend_band(h, collar.width());
        let depths = [
            0.0,
            0.5 * h,
            h,
            1.5 * h,
            2.5 * h,
            b1 + 0.25 * (b2 - b1),
            b1 + 0.5 * (b2 - b1),
            b1 + 0.75 * (b2 - b1),
            delta / 2.0,
            delta,
        ];
        for sign in [1.0, -1.0] {
            for &d in &depths {
                for xhat in collar.gamma_samples(2) {
                    let mut x = xhat.clone();
                    x.push(sign * d);
                    let op = curvature_operator(smoothed.field(), &x)?;
                    let shifted = op.entries() - op.gram() * (kappa - eps_delta);
                    let eigs = generalized_eigenvalues(&shifted, op.gram())?;
                    if eigs[0] < worst {
                        worst = eigs[0];
                        argmin = x.clone();
                    }
                }
            }
        }
        rows.push(PerturbationRow {
            h,
            worst_slack: worst,
            argmin,
            sup_distance: smoothed.sup_distance,
        });
    }
    Ok(CurvaturePerturbationReport { eps_delta, rows })
}

/// Max |g_h - g| over a two-sided grid, distances to the ORIGINAL metric.
pub fn sup_distance_to_original(
    glued: &GluedMetric,
    smoothed: &SmoothedMetric,
    per_axis: usize,
) -> f64 {
    let collar = glued.collar();
    let delta = glued.delta();
    let h = smoothed.h;
    let (b1, b2) = blend_band(h, collar.width());
    let mut depths = vec![
        0.0,
        0.5 * h,
        h,
        1.95 * h,
        0.5 * (b1 + b2),
        delta / 2.0,
        delta,
        (1.25 * delta).min(0.98 * b2),
    ];
    let mut both = Vec::new();
    for d in depths.drain(..) {
        both.push(d);
        if d > 0.0 {
            both.push(-d);
        }
    }
    let mut sup: f64 = 0.0;
    for x in collar_grid(collar, &both, per_axis) {
        sup = sup.max(
            (smoothed.field().coeff(&x) - glued.original_coeff(&x))
                .abs()
                .max(),
        );
    }
    sup
}
