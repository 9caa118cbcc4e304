//! Boundary-normal (Fermi) collar machinery.
//!
//! Both sides of a gluing scenario live in one chart: the interface is the
//! slice x^n = 0, side 0 occupies x^n ≥ 0, side 1 occupies x^n ≤ 0, and
//! g_in = δ_in on both sides so that N = ∂_n is the unit normal of the
//! equidistant hypersurfaces.  This module validates that normal form,
//! extracts the second fundamental forms, extends their sum along normal
//! lines by parallel transport, and continues the far-side metric across
//! the interface by a one-sided Taylor expansion of order four.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::curvature::christoffels_from_parts;
use crate::error::{Error, Result};
use crate::field::{ChartDomain, CoeffFn, DerivativeSupply, FdConfig, MetricField};
use crate::lambda2::symmetrized;

/// Tolerance for the interface isometry g0 = g1 on x^n = 0.
pub const ISOMETRY_TOL: f64 = 1e-10;
/// Tolerance for the normal form g_in = δ_in.
pub const FERMI_TOL: f64 = 1e-12;

/// Which side of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    M0,
    M1,
}

/// A two-sided Fermi chart around the interface.
#[derive(Debug, Clone)]
pub struct CollarData {
    g0: MetricField,
    g1: MetricField,
    width: f64,
}

impl CollarData {
    /// Validates the normal form on both sides and the interface isometry,
    /// on a deterministic sample grid.
    pub fn new(g0: MetricField, g1: MetricField, width: f64) -> Result<Self> {
        if g0.n() != g1.n() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}", g0.n()),
                got: format!("{}", g1.n()),
            });
        }
        if width <= 0.0 {
            return Err(Error::Invalid(format!("collar width {width} must be > 0")));
        }
        let collar = CollarData { g0, g1, width };
        collar.validate()?;
        Ok(collar)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        for x in self.sample_points(3) {
            for (field, sign) in [(&self.g0, 1.0), (&self.g1, -1.0)] {
                let mut p = x.clone();
                p[n - 1] *= sign;
                let v = field.fermi_violation(&p);
                if v > FERMI_TOL {
                    return Err(Error::FermiViolation {
                        point: p,
                        violation: v,
                    });
                }
                field.spd_check(&p)?;
            }
        }
        let mut worst: f64 = 0.0;
        for xhat in self.gamma_samples(5) {
            let x = self.on_gamma(&xhat);
            worst = worst.max((self.g0.coeff(&x) - self.g1.coeff(&x)).abs().max());
        }
        if worst > ISOMETRY_TOL {
            return Err(Error::BoundaryMismatch { violation: worst });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.g0.n()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn g0(&self) -> &MetricField {
        &self.g0
    }

    pub fn g1(&self) -> &MetricField {
        &self.g1
    }

    pub fn side(&self, side: Side) -> &MetricField {
        match side {
            Side::M0 => &self.g0,
            Side::M1 => &self.g1,
        }
    }

    /// Tangential coordinates padded with x^n = 0.
    pub fn on_gamma(&self, xhat: &[f64]) -> Vec<f64> {
        let mut x = xhat.to_vec();
        x.push(0.0);
        x
    }

    /// Deterministic tangential sample grid on the interface, `per_axis`
    /// interior points per tangential axis.
    pub fn gamma_samples(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let n = self.n();
        let tang = &self.g0.domain().intervals()[..n - 1];
        let mut grids: Vec<Vec<f64>> = Vec::new();
        for iv in tang {
            let mut axis = Vec::new();
            for i in 0..per_axis {
                let t = (i as f64 + 1.0) / (per_axis as f64 + 1.0);
                axis.push(iv[0] + t * (iv[1] - iv[0]));
            }
            grids.push(axis);
        }
        let mut out = vec![Vec::new()];
        for axis in grids {
            let mut next = Vec::new();
            for partial in &out {
                for &v in &axis {
                    let mut p = partial.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    /// Sample points in the interior of the side-0 collar (positive depth).
    fn sample_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for xhat in self.gamma_samples(per_axis) {
            for frac in [0.1, 0.5, 0.9] {
                let mut x = xhat.clone();
                x.push(frac * self.width);
                out.push(x);
            }
        }
        out
    }

    /// Second fundamental form of the interface seen from one side, with
    /// respect to the common normal ∂_n: the (n-1)x(n-1) tangential matrix
    /// -½ ∂_n g0 for side 0 and +½ ∂_n g1 for side 1.
    pub fn second_ff(&self, side: Side, xhat: &[f64]) -> Result<DMatrix<f64>> {
        let x = self.on_gamma(xhat);
        let n = self.n();
        let (field, sign) = match side {
            Side::M0 => (&self.g0, -0.5),
            Side::M1 => (&self.g1, 0.5),
        };
        let d = field.d1(&x, n - 1)?;
        let mut out = DMatrix::zeros(n - 1, n - 1);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                out[(i, j)] = sign * d[(i, j)];
            }
        }
        Ok(symmetrized(&out))
    }

    /// Sum of the two second fundamental forms on the interface.
    pub fn combined_l(&self, xhat: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.second_ff(Side::M0, xhat)? + self.second_ff(Side::M1, xhat)?)
    }

    /// Eigenvalues of the combined form against the induced boundary metric.
    pub fn l_spectrum(&self, xhat: &[f64]) -> Result<Vec<f64>> {
        let l = self.combined_l(xhat)?;
        let x = self.on_gamma(xhat);
        let g = self.g0.coeff(&x);
        let ghat = g.view((0, 0), (self.n() - 1, self.n() - 1)).clone_owned();
        crate::lambda2::generalized_eigenvalues(&l, &ghat)
    }

    /// Extends the combined form to the side-0 collar by parallel transport
    /// along normal lines.
    pub fn extended_l(&self) -> ExtendedL {
        ExtendedL {
            g0: self.g0.clone(),
            steps: 64,
        }
    }

    /// One-sided degree-4 Taylor continuation of g1 across the interface,
    /// producing a field on the side-0 collar in the same normal form.
    pub fn extend_g1_prime(&self) -> G1Prime {
        G1Prime {
            g1: self.g1.clone(),
            domain: self.g0.domain().clone(),
            step: 0.125 * self.width,
        }
    }
}

/// Parallel-transport extension of the combined second fundamental form.
///
/// At depth t the operator is M(t) L̂ M(t)^{-1} where M solves the transport
/// system dM/ds = -Γ_n(s) M along the normal line, so the normal direction
/// stays in the kernel exactly and eigenvalues are preserved.
#[derive(Clone)]
pub struct ExtendedL {
    g0: MetricField,
    steps: usize,
}

impl ExtendedL {
    /// Transport operator columns from the interface to depth t (RK4).
    fn transport(&self, xhat: &[f64], t: f64) -> DMatrix<f64> {
        let n = self.g0.n();
        let mut m = DMatrix::identity(n, n);
        if t == 0.0 {
            return m;
        }
        let steps = self.steps;
        let h = t / steps as f64;
        let gamma_n = |s: f64| -> DMatrix<f64> {
            let mut x = xhat.to_vec();
            x.push(s);
            let gm = self.g0.coeff(&x);
            let g_inv = gm.try_inverse().expect("metric invertible on collar");
            let dgn = self
                .g0
                .d1(&x, n - 1)
                .expect("normal derivative available on collar");
            // normal form: Γ^k_{nj} = ½ g^{kl} ∂_n g_{lj}
            let mut out = DMatrix::zeros(n, n);
            for k in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += g_inv[(k, l)] * dgn[(l, j)];
                    }
                    out[(k, j)] = 0.5 * acc;
                }
            }
            out
        };
        for i in 0..steps {
            let s0 = i as f64 * h;
            let k1 = -(gamma_n(s0) * &m);
            let k2 = -(gamma_n(s0 + 0.5 * h) * (&m + &k1 * (0.5 * h)));
            let k3 = -(gamma_n(s0 + 0.5 * h) * (&m + &k2 * (0.5 * h)));
            let k4 = -(gamma_n(s0 + h) * (&m + &k3 * h));
            m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        m
    }

    /// Endomorphism of the extended form at x = (x̂, t), n x n with the
    /// normal direction in the kernel.
    pub fn endomorphism_at(&self, l_gamma: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
        let n = self.g0.n();
        let xhat = &x[..n - 1];
        let t = x[n - 1];
        // endomorphism on the interface: ĝ^{-1} L̂ padded with zeros
        let x0 = {
            let mut v = xhat.to_vec();
            v.push(0.0);
            v
        };
        let g_at_gamma = self.g0.coeff(&x0);
        let ghat = g_at_gamma
            .view((0, 0), (n - 1, n - 1))
            .clone_owned();
        let ghat_inv = ghat.try_inverse().expect("interface metric invertible");
        let endo_hat = ghat_inv * l_gamma;
        let mut endo0 = DMatrix::zeros(n, n);
        endo0.view_mut((0, 0), (n - 1, n - 1)).copy_from(&endo_hat);
        if t == 0.0 {
            return endo0;
        }
        let m = self.transport(xhat, t);
        let m_inv = m.clone().try_inverse().expect("transport invertible");
        &m * endo0 * m_inv
    }

    /// The (0,2) entries of the extension at x with respect to g0(x).
    pub fn form_at(&self, l_gamma: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
        let endo = self.endomorphism_at(l_gamma, x);
        symmetrized(&(self.g0.coeff(x) * endo))
    }
}

/// Degree-4 one-sided Taylor continuation of the far-side metric.
#[derive(Clone)]
pub struct G1Prime {
    g1: MetricField,
    domain: ChartDomain,
    step: f64,
}

impl G1Prime {
    /// Normal-derivative matrices c_0 .. c_4 of g1 at the interface foot
    /// point: orders ≤ 2 straight from the derivative supply, orders 3 and
    /// 4 by one-sided differences of ∂²_n g1 into the far side.
    pub fn taylor_data(&self, xhat: &[f64]) -> Result<[DMatrix<f64>; 5]> {
        let n = self.g1.n();
        let s = self.step;
        let at = |t: f64| -> Vec<f64> {
            let mut x = xhat.to_vec();
            x.push(t);
            x
        };
        let c0 = self.g1.coeff(&at(0.0));
        let c1 = self.g1.d1(&at(0.0), n - 1)?;
        let c2 = self.g1.d2(&at(0.0), n - 1, n - 1)?;
        let h0 = c2.clone();
        let h1 = self.g1.d2(&at(-s), n - 1, n - 1)?;
        let h2 = self.g1.d2(&at(-2.0 * s), n - 1, n - 1)?;
        let h3 = self.g1.d2(&at(-3.0 * s), n - 1, n - 1)?;
        // one-sided second-order stencils on the far side
        let c3 = (h0.clone() * 3.0 - h1.clone() * 4.0 + h2.clone()) / (2.0 * s);
        let c4 = (h0 * 2.0 - h1 * 5.0 + h2 * 4.0 - h3) / (s * s);
        Ok([c0, c1, c2, c3, c4])
    }

    /// Coefficient matrix of the continuation at (x̂, t).
    pub fn coeff(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.g1.n();
        let xhat = &x[..n - 1];
        let t = x[n - 1];
        let c = self.taylor_data(xhat)?;
        let mut acc = c[0].clone();
        let mut fact = 1.0;
        let mut tp = 1.0;
        for (k, ck) in c.iter().enumerate().skip(1) {
            fact *= k as f64;
            tp *= t;
            acc += ck * (tp / fact);
        }
        Ok(acc)
    }

    /// Coordinate second normal derivative of the continued coefficients on
    /// the interface (the c_2 matrix).
    pub fn normal_hessian_on_gamma(&self, xhat: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.taylor_data(xhat)?[2].clone())
    }

    /// The continuation as a metric field on the side-0 collar (difference
    /// stencil supply; each evaluation re-expands the Taylor data).
    pub fn field(&self) -> MetricField {
        let me = self.clone();
        let coeff: CoeffFn = Arc::new(move |x: &[f64]| {
            me.coeff(x).expect("taylor data available on collar")
        });
        MetricField::new(
            self.domain.clone(),
            coeff,
            DerivativeSupply::FiniteDifference(FdConfig {
                rel_step: 1e-4,
                richardson: true,
            }),
        )
    }
}

/// Result of straightening a metric into boundary-normal form.
pub struct FermiResult {
    pub field: MetricField,
    pub width: f64,
    pub max_offblock: f64,
}

/// Reparametrizes a metric whose interface is already the slice {x^n = 0}
/// into boundary-normal form by shooting unit-speed inward geodesics from
/// each interface point and pulling the metric back through the flow.  The
/// usable width shrinks while the flow Jacobian degenerates.
pub fn fermi_from_general(g: &MetricField, width: f64) -> Result<FermiResult> {
    let n = g.n();
    let g_arc = Arc::new(g.clone());

    let flow = {
        let g = Arc::clone(&g_arc);
        move |xhat: &[f64], depth: f64| -> Result<Vec<f64>> {
            let n = g.n();
            let mut q = xhat.to_vec();
            q.push(0.0);
            let gm = g.coeff(&q);
            let g_inv = gm.try_inverse().ok_or_else(|| Error::NotPositiveDefinite {
                what: "interface metric".into(),
                min_eig: f64::NAN,
            })?;
            // inward normal: raise the conormal dx^n and normalize
            let mut v: Vec<f64> = (0..n).map(|k| g_inv[(k, n - 1)]).collect();
            let norm = (g_inv[(n - 1, n - 1)]).sqrt();
            for vi in &mut v {
                *vi /= norm;
            }
            if depth == 0.0 {
                return Ok(q);
            }
            let steps = 32;
            let h = depth / steps as f64;
            let accel = |q: &[f64], v: &[f64]| -> Result<Vec<f64>> {
                let gm = g.coeff(q);
                let g_inv = gm.try_inverse().ok_or_else(|| Error::NotPositiveDefinite {
                    what: "metric along the flow".into(),
                    min_eig: f64::NAN,
                })?;
                let dg: Vec<DMatrix<f64>> =
                    (0..n).map(|k| g.d1(q, k)).collect::<Result<_>>()?;
                let gamma = christoffels_from_parts(&g_inv, &dg);
                Ok((0..n)
                    .map(|k| {
                        let mut acc = 0.0;
                        for a in 0..n {
                            for b in 0..n {
                                acc -= gamma[k][(a, b)] * v[a] * v[b];
                            }
                        }
                        acc
                    })
                    .collect())
            };
            let add = |x: &[f64], y: &[f64], c: f64| -> Vec<f64> {
                x.iter().zip(y).map(|(a, b)| a + c * b).collect()
            };
            for _ in 0..steps {
                let a1 = accel(&q, &v)?;
                let q2 = add(&q, &v, 0.5 * h);
                let v2 = add(&v, &a1, 0.5 * h);
                let a2 = accel(&q2, &v2)?;
                let q3 = add(&q, &v2, 0.5 * h);
                let v3 = add(&v, &a2, 0.5 * h);
                let a3 = accel(&q3, &v3)?;
                let q4 = add(&q, &v3, h);
                let v4 = add(&v, &a3, h);
                let a4 = accel(&q4, &v4)?;
                for k in 0..n {
                    q[k] += h / 6.0 * (v[k] + 2.0 * v2[k] + 2.0 * v3[k] + v4[k]);
                    v[k] += h / 6.0 * (a1[k] + 2.0 * a2[k] + 2.0 * a3[k] + a4[k]);
                }
            }
            Ok(q)
        }
    };
    let flow = Arc::new(flow);

    let pullback = {
        let g = Arc::clone(&g_arc);
        let flow = Arc::clone(&flow);
        move |x: &[f64]| -> Result<(DMatrix<f64>, f64)> {
            let n = g.n();
            let base = flow(&x[..n - 1], x[n - 1])?;
            let fd = 1e-6;
            let mut jac = DMatrix::zeros(n, n);
            for a in 0..n {
                let mut plus_in = x.to_vec();
                let mut minus_in = x.to_vec();
                plus_in[a] += fd;
                minus_in[a] -= fd;
                let plus = flow(&plus_in[..n - 1], plus_in[n - 1])?;
                let minus = flow(&minus_in[..n - 1], minus_in[n - 1])?;
                for k in 0..n {
                    jac[(k, a)] = (plus[k] - minus[k]) / (2.0 * fd);
                }
            }
            let gm = g.coeff(&base);
            let pulled = jac.transpose() * gm * jac;
            // metric volume of the flow: vanishes when equidistants collapse
            let det = pulled.determinant();
            Ok((pulled, det))
        }
    };

    // focal-point monitor: the flow's metric Jacobian degenerates where
    // normal geodesics cross, so shrink the width until it stays sane
    let mut usable = width;
    let samples: Vec<f64> = {
        let iv = g.domain().intervals()[0];
        (1..=3)
            .map(|i| iv[0] + (i as f64 / 4.0) * (iv[1] - iv[0]))
            .collect()
    };
    'outer: loop {
        for &s in &samples {
            let mut x = vec![s; n - 1];
            for (k, v) in x.iter_mut().enumerate() {
                let iv = g.domain().intervals()[k];
                *v = v.clamp(iv[0], iv[1]);
            }
            x.push(usable);
            // a flow that escapes the chart counts as degenerate
            let det = pullback(&x).map(|p| p.1).unwrap_or(0.0);
            if det.abs() < 1e-4 {
                usable *= 0.5;
                if usable < 1e-3 * width {
                    return Err(Error::FocalPoint {
                        det,
                        depth: x[n - 1],
                        width: usable,
                    });
                }
                continue 'outer;
            }
        }
        break;
    }

    let mut intervals = g.domain().intervals().to_vec();
    intervals[n - 1] = [0.0, usable];
    let domain = ChartDomain::new(intervals)?;
    let pb = Arc::new(pullback);
    let coeff: CoeffFn = {
        let pb = Arc::clone(&pb);
        Arc::new(move |x: &[f64]| {
            symmetrized(&pb(x).expect("flow stays in the monitored chart").0)
        })
    };
    let field = MetricField::new(
        domain,
        coeff,
        DerivativeSupply::FiniteDifference(FdConfig {
            rel_step: 2e-4,
            richardson: false,
        }),
    );

    // normal-form witness on a few points
    let mut worst: f64 = 0.0;
    for &s in &samples {
        for frac in [0.25, 0.75] {
            let mut x = vec![s; n - 1];
            x.push(frac * usable);
            worst = worst.max(field.fermi_violation(&x));
        }
    }
    if worst > 1e-8 {
        return Err(Error::FermiViolation {
            point: vec![],
            violation: worst,
        });
    }
    Ok(FermiResult {
        field,
        width: usable,
        max_offblock: worst,
    })
}
