//! Metric coefficient fields on a coordinate box.
//!
//! A [`MetricField`] is a callback producing the symmetric matrix g_ij(x) on
//! a chart, plus a derivative supply: either analytic callbacks for ∂g and
//! ∂²g or a central finite-difference stencil.  By convention the last axis
//! is the signed distance to the gluing interface, so charts describing one
//! side live on x^n ≥ 0 or x^n ≤ 0.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type CoeffFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type D1Fn = Arc<dyn Fn(&[f64], usize) -> DMatrix<f64> + Send + Sync>;
pub type D2Fn = Arc<dyn Fn(&[f64], usize, usize) -> DMatrix<f64> + Send + Sync>;

/// Coordinate box; axis n-1 is the signed boundary distance.
#[derive(Debug, Clone)]
pub struct ChartDomain {
    n: usize,
    intervals: Vec<[f64; 2]>,
    /// Fractional overhang per axis on which coefficient callbacks must
    /// still evaluate; stencils and one-sided continuations use it.
    eval_margin: f64,
}

impl ChartDomain {
    pub fn new(intervals: Vec<[f64; 2]>) -> Result<Self> {
        let n = intervals.len();
        if n < 2 {
            return Err(Error::DimensionMismatch {
                expected: "n >= 2 axes".into(),
                got: format!("{n}"),
            });
        }
        for (k, iv) in intervals.iter().enumerate() {
            if iv[0] >= iv[1] || iv[0].is_nan() || iv[1].is_nan() {
                return Err(Error::Invalid(format!(
                    "axis {k} has empty interval [{}, {}]",
                    iv[0], iv[1]
                )));
            }
        }
        Ok(ChartDomain {
            n,
            intervals,
            eval_margin: 0.125,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn intervals(&self) -> &[[f64; 2]] {
        &self.intervals
    }

    pub fn axis_scale(&self, k: usize) -> f64 {
        let iv = self.intervals[k];
        (iv[1] - iv[0]).abs().max(1e-8)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.n
            && x.iter()
                .zip(&self.intervals)
                .all(|(v, iv)| *v >= iv[0] && *v <= iv[1])
    }

    /// Whether the coefficient callback may be evaluated at x (box plus the
    /// evaluation overhang).
    pub fn evaluable(&self, x: &[f64]) -> bool {
        x.len() == self.n
            && x.iter().zip(&self.intervals).enumerate().all(|(k, (v, iv))| {
                let pad = self.eval_margin * self.axis_scale(k);
                *v >= iv[0] - pad && *v <= iv[1] + pad
            })
    }

    /// Clearance check for a symmetric stencil of radius `r` along each axis.
    pub fn stencil_ok(&self, x: &[f64], radii: &[f64]) -> Result<()> {
        for k in 0..self.n {
            let pad = self.eval_margin * self.axis_scale(k);
            let iv = self.intervals[k];
            if x[k] - radii[k] < iv[0] - pad || x[k] + radii[k] > iv[1] + pad {
                return Err(Error::StencilClearance {
                    point: x.to_vec(),
                    axis: k,
                });
            }
        }
        Ok(())
    }
}

/// Second-order central differences, optionally sharpened by one level of
/// Richardson extrapolation.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// Step as a fraction of the axis scale.
    pub rel_step: f64,
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            rel_step: 1e-4,
            richardson: false,
        }
    }
}

#[derive(Clone)]
pub enum DerivativeSupply {
    FiniteDifference(FdConfig),
    Analytic { d1: D1Fn, d2: D2Fn },
}

impl std::fmt::Debug for DerivativeSupply {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DerivativeSupply::FiniteDifference(cfg) => {
                f.debug_tuple("FiniteDifference").field(cfg).finish()
            }
            DerivativeSupply::Analytic { .. } => f.write_str("Analytic"),
        }
    }
}

/// Estimated truncation error per derivative order, from comparing steps h
/// and h/2.
#[derive(Debug, Clone)]
pub struct DifferentiationReport {
    pub step: Vec<f64>,
    pub d1_error_estimate: f64,
    pub d2_error_estimate: f64,
}

#[derive(Clone)]
pub struct MetricField {
    domain: ChartDomain,
    coeff: CoeffFn,
    supply: DerivativeSupply,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField")
            .field("domain", &self.domain)
            .field("supply", &self.supply)
            .finish()
    }
}

impl MetricField {
    pub fn new(domain: ChartDomain, coeff: CoeffFn, supply: DerivativeSupply) -> Self {
        MetricField {
            domain,
            coeff,
            supply,
        }
    }

    pub fn from_fn<F>(domain: ChartDomain, coeff: F, supply: DerivativeSupply) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::new(domain, Arc::new(coeff), supply)
    }

    pub fn n(&self) -> usize {
        self.domain.n()
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn supply(&self) -> &DerivativeSupply {
        &self.supply
    }

    pub fn coeff_fn(&self) -> CoeffFn {
        Arc::clone(&self.coeff)
    }

    pub fn with_supply(&self, supply: DerivativeSupply) -> MetricField {
        MetricField {
            domain: self.domain.clone(),
            coeff: Arc::clone(&self.coeff),
            supply,
        }
    }

    /// Coefficient matrix g(x).
    pub fn coeff(&self, x: &[f64]) -> DMatrix<f64> {
        (self.coeff)(x)
    }

    fn fd_step(&self, cfg: &FdConfig, k: usize) -> f64 {
        cfg.rel_step * self.domain.axis_scale(k)
    }

    /// ∂_k g at x.
    pub fn d1(&self, x: &[f64], k: usize) -> Result<DMatrix<f64>> {
        match &self.supply {
            DerivativeSupply::Analytic { d1, .. } => Ok(d1(x, k)),
            DerivativeSupply::FiniteDifference(cfg) => {
                let h = self.fd_step(cfg, k);
                let mut radii = vec![0.0; self.n()];
                radii[k] = h;
                self.domain.stencil_ok(x, &radii)?;
                let coarse = self.central_d1(x, k, h);
                if cfg.richardson {
                    let fine = self.central_d1(x, k, h / 2.0);
                    Ok((fine * 4.0 - coarse) / 3.0)
                } else {
                    Ok(coarse)
                }
            }
        }
    }

    /// ∂_k ∂_l g at x (symmetric in k, l).
    pub fn d2(&self, x: &[f64], k: usize, l: usize) -> Result<DMatrix<f64>> {
        match &self.supply {
            DerivativeSupply::Analytic { d2, .. } => Ok(d2(x, k, l)),
            DerivativeSupply::FiniteDifference(cfg) => {
                let hk = self.fd_step(cfg, k);
                let hl = self.fd_step(cfg, l);
                let mut radii = vec![0.0; self.n()];
                radii[k] += hk;
                radii[l] += hl;
                self.domain.stencil_ok(x, &radii)?;
                let coarse = self.central_d2(x, k, l, hk, hl);
                if cfg.richardson {
                    let fine = self.central_d2(x, k, l, hk / 2.0, hl / 2.0);
                    Ok((fine * 4.0 - coarse) / 3.0)
                } else {
                    Ok(coarse)
                }
            }
        }
    }

    fn central_d1(&self, x: &[f64], k: usize, h: f64) -> DMatrix<f64> {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        (self.coeff(&xp) - self.coeff(&xm)) / (2.0 * h)
    }

    fn central_d2(&self, x: &[f64], k: usize, l: usize, hk: f64, hl: f64) -> DMatrix<f64> {
        if k == l {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += hk;
            xm[k] -= hk;
            (self.coeff(&xp) + self.coeff(&xm) - self.coeff(x) * 2.0) / (hk * hk)
        } else {
            let mut xpp = x.to_vec();
            let mut xpm = x.to_vec();
            let mut xmp = x.to_vec();
            let mut xmm = x.to_vec();
            xpp[k] += hk;
            xpp[l] += hl;
            xpm[k] += hk;
            xpm[l] -= hl;
            xmp[k] -= hk;
            xmp[l] += hl;
            xmm[k] -= hk;
            xmm[l] -= hl;
            (self.coeff(&xpp) - self.coeff(&xpm) - self.coeff(&xmp) + self.coeff(&xmm))
                / (4.0 * hk * hl)
        }
    }

    /// Compares steps h and h/2 to estimate the finite-difference truncation
    /// error at x.  For analytic supplies both estimates are zero.
    pub fn differentiation_report(&self, x: &[f64]) -> Result<DifferentiationReport> {
        let n = self.n();
        match &self.supply {
            DerivativeSupply::Analytic { .. } => Ok(DifferentiationReport {
                step: vec![0.0; n],
                d1_error_estimate: 0.0,
                d2_error_estimate: 0.0,
            }),
            DerivativeSupply::FiniteDifference(cfg) => {
                let steps: Vec<f64> = (0..n).map(|k| self.fd_step(cfg, k)).collect();
                let radii: Vec<f64> = steps.clone();
                self.domain.stencil_ok(x, &radii)?;
                let mut e1: f64 = 0.0;
                let mut e2: f64 = 0.0;
                for k in 0..n {
                    let h = steps[k];
                    e1 = e1.max(
                        (self.central_d1(x, k, h) - self.central_d1(x, k, h / 2.0))
                            .abs()
                            .max(),
                    );
                    e2 = e2.max(
                        (self.central_d2(x, k, k, h, h) - self.central_d2(x, k, k, h / 2.0, h / 2.0))
                            .abs()
                            .max(),
                    );
                }
                if !e1.is_finite() || !e2.is_finite() {
                    return Err(Error::Invalid("derivative estimate not finite".into()));
                }
                Ok(DifferentiationReport {
                    step: steps,
                    d1_error_estimate: e1,
                    d2_error_estimate: e2,
                })
            }
        }
    }

    /// Smallest eigenvalue of g at x; errors if not SPD.
    pub fn spd_check(&self, x: &[f64]) -> Result<f64> {
        let g = self.coeff(x);
        let min = g
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                what: format!("metric at {x:?}"),
                min_eig: min,
            });
        }
        Ok(min)
    }

    /// Max |g_in - δ_in| at x; the boundary-normal form has zeros off the
    /// corner and 1 at (n,n).
    pub fn fermi_violation(&self, x: &[f64]) -> f64 {
        let g = self.coeff(x);
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let want = if i == n - 1 { 1.0 } else { 0.0 };
            worst = worst
                .max((g[(i, n - 1)] - want).abs())
                .max((g[(n - 1, i)] - want).abs());
        }
        worst
    }
}

/// Constant-coefficient field, mostly for tests and flat scenarios.
pub fn constant_metric(domain: ChartDomain, g: DMatrix<f64>) -> MetricField {
    let n = domain.n();
    assert_eq!(g.nrows(), n);
    let g1 = g.clone();
    MetricField::new(
        domain,
        Arc::new(move |_x: &[f64]| g1.clone()),
        DerivativeSupply::Analytic {
            d1: Arc::new(move |_x: &[f64], _k: usize| DMatrix::zeros(n, n)),
            d2: Arc::new(move |_x: &[f64], _k: usize, _l: usize| DMatrix::zeros(n, n)),
        },
    )
}
