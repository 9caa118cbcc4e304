//! Curvature of metric coefficient fields.
//!
//! Signs are fixed once: for orthonormal e_i, e_j the sectional curvature of
//! their plane is R_ijij, positive on the round sphere.  The Riemann tensor
//! is assembled directly from first and second derivatives of the metric,
//!
//! ```text
//! R_ijkl = ½(∂_i∂_l g_jk + ∂_j∂_k g_il - ∂_i∂_k g_jl - ∂_j∂_l g_ik)
//!          + g_pq (Γ^p_jk Γ^q_il - Γ^p_jl Γ^q_ik)
//! ```
//!
//! so analytic derivative supplies produce curvature exact to roundoff.

use nalgebra::DMatrix;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::MetricField;
use crate::lambda2::{
    form_entries_from_tensor, induced_gram, Lambda2Basis, Lambda2Form, SymmetricOperator2,
};
use crate::tensor::Tensor4;

/// Christoffel symbols Γ^k_{ij}, stored as one matrix per upper index.
pub fn christoffels(g: &MetricField, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let n = g.n();
    let gm = g.coeff(x);
    let g_inv = gm.clone().try_inverse().ok_or(Error::NotPositiveDefinite {
        what: format!("metric at {x:?}"),
        min_eig: f64::NAN,
    })?;
    let dg: Vec<DMatrix<f64>> = (0..n).map(|k| g.d1(x, k)).collect::<Result<_>>()?;
    Ok(christoffels_from_parts(&g_inv, &dg))
}

pub(crate) fn christoffels_from_parts(
    g_inv: &DMatrix<f64>,
    dg: &[DMatrix<f64>],
) -> Vec<DMatrix<f64>> {
    let n = g_inv.nrows();
    let mut gamma = vec![DMatrix::zeros(n, n); n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += g_inv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                let v = 0.5 * acc;
                gamma[k][(i, j)] = v;
                gamma[k][(j, i)] = v;
            }
        }
    }
    gamma
}

/// Residual of metric compatibility, max over k,i,j of
/// |∂_k g_ij - Γ^l_ki g_lj - Γ^l_kj g_il|.
pub fn compatibility_residual(g: &MetricField, x: &[f64]) -> Result<f64> {
    let n = g.n();
    let gm = g.coeff(x);
    let gamma = christoffels(g, x)?;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let dg = g.d1(x, k)?;
        for i in 0..n {
            for j in 0..n {
                let mut v = dg[(i, j)];
                for l in 0..n {
                    v -= gamma[l][(k, i)] * gm[(l, j)] + gamma[l][(k, j)] * gm[(i, l)];
                }
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

/// Riemann (0,4)-tensor at x.
pub fn riemann_tensor(g: &MetricField, x: &[f64]) -> Result<Tensor4> {
    let n = g.n();
    let gm = g.coeff(x);
    let g_inv = gm.clone().try_inverse().ok_or(Error::NotPositiveDefinite {
        what: format!("metric at {x:?}"),
        min_eig: f64::NAN,
    })?;
    let dg: Vec<DMatrix<f64>> = (0..n).map(|k| g.d1(x, k)).collect::<Result<_>>()?;
    let mut d2g = vec![vec![DMatrix::zeros(0, 0); n]; n];
    for k in 0..n {
        for l in k..n {
            let m = g.d2(x, k, l)?;
            d2g[k][l] = m.clone();
            d2g[l][k] = m;
        }
    }
    let gamma = christoffels_from_parts(&g_inv, &dg);
    Ok(riemann_from_parts(&gm, &gamma, &d2g))
}

pub(crate) fn riemann_from_parts(
    gm: &DMatrix<f64>,
    gamma: &[DMatrix<f64>],
    d2g: &[Vec<DMatrix<f64>>],
) -> Tensor4 {
    let n = gm.nrows();
    let mut r = Tensor4::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                for l in 0..n {
                    let second = 0.5
                        * (d2g[i][l][(j, k)] + d2g[j][k][(i, l)]
                            - d2g[i][k][(j, l)]
                            - d2g[j][l][(i, k)]);
                    let mut quad = 0.0;
                    for p in 0..n {
                        for q in 0..n {
                            quad += gm[(p, q)]
                                * (gamma[p][(j, k)] * gamma[q][(i, l)]
                                    - gamma[p][(j, l)] * gamma[q][(i, k)]);
                        }
                    }
                    let v = second + quad;
                    r.set(i, j, k, l, v);
                    r.set(j, i, k, l, -v);
                }
            }
        }
    }
    r
}

/// The curvature operator pair (form entries over the induced gram) at x.
pub fn curvature_operator(g: &MetricField, x: &[f64]) -> Result<Lambda2Form> {
    let t = riemann_tensor(g, x)?;
    let gm = SymmetricOperator2::new(crate::lambda2::symmetrized(&g.coeff(x)))?;
    let gram = induced_gram(&gm)?;
    let entries = form_entries_from_tensor(&t);
    Lambda2Form::new(Lambda2Basis::new(g.n()), entries, gram)
}

/// Curvature data padded with `extra` flat directions: the curvature
/// operator of the metric product with a Euclidean factor.
pub fn curvature_operator_with_flat_factor(
    g: &MetricField,
    x: &[f64],
    extra: usize,
) -> Result<Lambda2Form> {
    let t = riemann_tensor(g, x)?.pad_to(g.n() + extra);
    let gm = g.coeff(x);
    let m = g.n() + extra;
    let mut big = DMatrix::identity(m, m);
    big.view_mut((0, 0), (g.n(), g.n())).copy_from(&gm);
    let op = SymmetricOperator2::new(crate::lambda2::symmetrized(&big))?;
    let gram = induced_gram(&op)?;
    Lambda2Form::new(Lambda2Basis::new(m), form_entries_from_tensor(&t), gram)
}

/// Flat-factor variants of the isotropic bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsotropicVariant {
    /// K(P) on the manifold itself (needs n ≥ 4).
    Plain,
    /// Product with a line.
    PlusR,
    /// Product with a plane.
    PlusR2,
}

impl IsotropicVariant {
    pub fn extra(&self) -> usize {
        match self {
            IsotropicVariant::Plain => 0,
            IsotropicVariant::PlusR => 1,
            IsotropicVariant::PlusR2 => 2,
        }
    }
}

/// Controls the seeded random search plus projected-descent refinement used
/// by the frame minimizers.
#[derive(Debug, Clone, Copy)]
pub struct FrameSearch {
    pub seeds: usize,
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for FrameSearch {
    fn default() -> Self {
        FrameSearch {
            seeds: 512,
            refine_iters: 200,
            seed: 42,
        }
    }
}

/// Isotropic curvature of the 2-plane spanned by X+iY and U+iV for columns
/// [X, Y, U, V] of `frame`, evaluated on a curvature form.
pub fn isotropic_value(form: &Lambda2Form, frame: &DMatrix<f64>) -> f64 {
    let basis = form.basis();
    let x = frame.column(0);
    let y = frame.column(1);
    let u = frame.column(2);
    let v = frame.column(3);
    // α = X∧U + V∧Y, β = X∧V + Y∧U in pair coordinates
    let mut alpha = vec![0.0; basis.dim()];
    let mut beta = vec![0.0; basis.dim()];
    for (r, &(i, j)) in basis.pairs().iter().enumerate() {
        alpha[r] = x[i] * u[j] - x[j] * u[i] + v[i] * y[j] - v[j] * y[i];
        beta[r] = x[i] * v[j] - x[j] * v[i] + y[i] * u[j] - y[j] * u[i];
    }
    form.apply(&alpha, &alpha) + form.apply(&beta, &beta)
}

/// Flag value R(e1∧e3, e1∧e3) + R(e2∧e3, e2∧e3) for columns [e1, e2, e3].
pub fn flag_value(form: &Lambda2Form, frame: &DMatrix<f64>) -> f64 {
    let basis = form.basis();
    let e1 = frame.column(0);
    let e2 = frame.column(1);
    let e3 = frame.column(2);
    let mut a = vec![0.0; basis.dim()];
    let mut b = vec![0.0; basis.dim()];
    for (r, &(i, j)) in basis.pairs().iter().enumerate() {
        a[r] = e1[i] * e3[j] - e1[j] * e3[i];
        b[r] = e2[i] * e3[j] - e2[j] * e3[i];
    }
    form.apply(&a, &a) + form.apply(&b, &b)
}

/// Gram-Schmidt against the metric `gm`; returns None when the columns are
/// too close to dependent.
fn orthonormalize(gm: &DMatrix<f64>, cols: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = cols.nrows();
    let k = cols.ncols();
    let mut q = DMatrix::zeros(m, k);
    for c in 0..k {
        let mut v = cols.column(c).clone_owned();
        for prev in 0..c {
            let p = q.column(prev);
            let proj = (gm * &v).dot(&p.clone_owned());
            v -= p * proj;
        }
        let norm = (gm * &v).dot(&v).sqrt();
        if norm < 1e-9 {
            return None;
        }
        q.set_column(c, &(v / norm));
    }
    Some(q)
}

/// Minimizes `value` over metric-orthonormal k-frames by seeded random
/// search followed by projected descent with re-orthonormalization.
fn minimize_over_frames<F>(
    gm: &DMatrix<f64>,
    k: usize,
    search: &FrameSearch,
    value: F,
) -> f64
where
    F: Fn(&DMatrix<f64>) -> f64,
{
    let m = gm.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut best = f64::INFINITY;
    let mut best_frame = DMatrix::zeros(m, k);
    for _ in 0..search.seeds {
        let raw = DMatrix::from_fn(m, k, |_, _| rng.random_range(-1.0..1.0));
        if let Some(q) = orthonormalize(gm, &raw) {
            let v = value(&q);
            if v < best {
                best = v;
                best_frame = q;
            }
        }
    }
    // projected descent with finite-difference gradient and backtracking
    let mut frame = best_frame;
    let mut step = 0.1;
    let fd = 1e-6;
    for _ in 0..search.refine_iters {
        let mut grad = DMatrix::zeros(m, k);
        for r in 0..m {
            for c in 0..k {
                let mut plus = frame.clone();
                let mut minus = frame.clone();
                plus[(r, c)] += fd;
                minus[(r, c)] -= fd;
                let (Some(qp), Some(qm)) =
                    (orthonormalize(gm, &plus), orthonormalize(gm, &minus))
                else {
                    continue;
                };
                grad[(r, c)] = (value(&qp) - value(&qm)) / (2.0 * fd);
            }
        }
        let gnorm = grad.norm();
        if gnorm < 1e-12 {
            break;
        }
        let mut advanced = false;
        while step > 1e-12 {
            let cand = &frame - &grad * (step / gnorm);
            if let Some(q) = orthonormalize(gm, &cand) {
                let v = value(&q);
                if v < best - 1e-15 {
                    best = v;
                    frame = q;
                    advanced = true;
                    step *= 1.5;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced && step <= 1e-12 {
            break;
        }
    }
    best
}

/// Minimum isotropic curvature over orthonormal 4-frames, after appending
/// the flat factor the variant asks for.  Deterministic for a fixed seed.
pub fn isotropic_min(
    g: &MetricField,
    x: &[f64],
    variant: IsotropicVariant,
    search: &FrameSearch,
) -> Result<f64> {
    let eff = g.n() + variant.extra();
    if eff < 4 {
        return Err(Error::DimensionPrerequisite {
            functional: "isotropic curvature".into(),
            requirement: "effective dimension ≥ 4".into(),
            n: eff,
        });
    }
    let form = curvature_operator_with_flat_factor(g, x, variant.extra())?;
    let gm = g.coeff(x);
    let mut big = DMatrix::identity(eff, eff);
    big.view_mut((0, 0), (g.n(), g.n())).copy_from(&gm);
    Ok(minimize_over_frames(&big, 4, search, |q| {
        isotropic_value(&form, q)
    }))
}

/// Minimum flag curvature over orthonormal 3-frames.
pub fn flag_min(g: &MetricField, x: &[f64], search: &FrameSearch) -> Result<f64> {
    if g.n() < 3 {
        return Err(Error::DimensionPrerequisite {
            functional: "flag curvature".into(),
            requirement: "n ≥ 3".into(),
            n: g.n(),
        });
    }
    let form = curvature_operator(g, x)?;
    let gm = g.coeff(x);
    Ok(minimize_over_frames(&gm, 3, search, |q| flag_value(&form, q)))
}

/// Minimum flag value of a prepared curvature form (used when the form is
/// already available).
pub fn flag_min_of_form(form: &Lambda2Form, gm: &DMatrix<f64>, search: &FrameSearch) -> f64 {
    minimize_over_frames(gm, 3, search, |q| flag_value(form, q))
}

/// Minimum isotropic value of a prepared padded curvature form.
pub fn isotropic_min_of_form(form: &Lambda2Form, gm: &DMatrix<f64>, search: &FrameSearch) -> f64 {
    minimize_over_frames(gm, 4, search, |q| isotropic_value(form, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{constant_metric, ChartDomain, DerivativeSupply, FdConfig};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn flat(n: usize) -> MetricField {
        let domain = ChartDomain::new(vec![[0.0, 1.0]; n]).unwrap();
        constant_metric(domain, DMatrix::identity(n, n))
    }

    fn polar_plane_fd() -> MetricField {
        let domain = ChartDomain::new(vec![[1.0, 3.0], [0.0, 6.0]]).unwrap();
        MetricField::from_fn(
            domain,
            |x: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0] * x[0]])),
            DerivativeSupply::FiniteDifference(FdConfig::default()),
        )
    }

    pub(crate) fn sphere2(supply: DerivativeSupply) -> MetricField {
        // unit sphere, coordinates (θ, φ), g = diag(1, sin²θ)
        let domain = ChartDomain::new(vec![[0.3, PI - 0.3], [0.0, 2.0]]).unwrap();
        MetricField::from_fn(
            domain,
            |x: &[f64]| {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    1.0,
                    x[0].sin().powi(2),
                ]))
            },
            supply,
        )
    }

    pub(crate) fn sphere2_analytic_supply() -> DerivativeSupply {
        DerivativeSupply::Analytic {
            d1: Arc::new(|x: &[f64], k: usize| {
                let mut d = DMatrix::zeros(2, 2);
                if k == 0 {
                    d[(1, 1)] = (2.0 * x[0]).sin();
                }
                d
            }),
            d2: Arc::new(|x: &[f64], k: usize, l: usize| {
                let mut d = DMatrix::zeros(2, 2);
                if k == 0 && l == 0 {
                    d[(1, 1)] = 2.0 * (2.0 * x[0]).cos();
                }
                d
            }),
        }
    }

    fn sphere3() -> MetricField {
        // unit S³ in hyperspherical coordinates, g = diag(1, sin²x1, sin²x1 sin²x2)
        let domain = ChartDomain::new(vec![[0.5, PI - 0.5], [0.5, PI - 0.5], [0.0, 2.0]]).unwrap();
        MetricField::from_fn(
            domain,
            |x: &[f64]| {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    1.0,
                    x[0].sin().powi(2),
                    x[0].sin().powi(2) * x[1].sin().powi(2),
                ]))
            },
            DerivativeSupply::FiniteDifference(FdConfig {
                rel_step: 1e-4,
                richardson: true,
            }),
        )
    }

    #[test]
    fn flat_christoffels_vanish() {
        let g = flat(3);
        let gamma = christoffels(&g, &[0.5, 0.5, 0.5]).unwrap();
        for m in &gamma {
            assert_eq!(m.abs().max(), 0.0);
        }
    }

    #[test]
    fn polar_christoffels() {
        let g = polar_plane_fd();
        let gamma = christoffels(&g, &[2.0, 1.0]).unwrap();
        assert_abs_diff_eq!(gamma[0][(1, 1)], -2.0, epsilon = 1e-7); // Γ^r_θθ = -r
        assert_abs_diff_eq!(gamma[1][(0, 1)], 0.5, epsilon = 1e-7); // Γ^θ_rθ = 1/r
        assert!(compatibility_residual(&g, &[2.0, 1.0]).unwrap() < 1e-8);
    }

    #[test]
    fn sphere_christoffels() {
        let g = sphere2(DerivativeSupply::FiniteDifference(FdConfig::default()));
        let th = PI / 3.0;
        let gamma = christoffels(&g, &[th, 1.0]).unwrap();
        assert_abs_diff_eq!(gamma[0][(1, 1)], -th.sin() * th.cos(), epsilon = 1e-7);
    }

    #[test]
    fn flat_riemann_zero() {
        let g = flat(3);
        let r = riemann_tensor(&g, &[0.5, 0.5, 0.5]).unwrap();
        assert!(r.max_abs() <= 1e-9);
        let polar = polar_plane_fd();
        let r = riemann_tensor(&polar, &[2.0, 1.0]).unwrap();
        assert!(r.max_abs() <= 1e-7, "polar flat residual {}", r.max_abs());
    }

    #[test]
    fn sphere_gauss_curvature() {
        let g = sphere2(DerivativeSupply::FiniteDifference(FdConfig {
            rel_step: 1e-4,
            richardson: true,
        }));
        let x = [PI / 2.0, 1.0];
        let r = riemann_tensor(&g, &x).unwrap();
        // R_θφθφ = sin²θ = 1 at the equator
        assert_abs_diff_eq!(r.get(0, 1, 0, 1), 1.0, epsilon = 1e-6);
        let gm = g.coeff(&x);
        let k = r.get(0, 1, 0, 1) / (gm[(0, 0)] * gm[(1, 1)] - gm[(0, 1)].powi(2));
        assert_abs_diff_eq!(k, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn riemann_symmetries_hold() {
        let g = sphere2(DerivativeSupply::FiniteDifference(FdConfig::default()));
        let r = riemann_tensor(&g, &[1.1, 0.7]).unwrap();
        assert!(r.symmetry_violation() < 1e-8);
        assert!(r.bianchi_residual() < 1e-5);
        let ga = sphere2(sphere2_analytic_supply());
        let ra = riemann_tensor(&ga, &[1.1, 0.7]).unwrap();
        assert!(ra.symmetry_violation() < 1e-12);
        assert!(ra.bianchi_residual() < 1e-8);
    }

    #[test]
    fn fd_matches_analytic_second_order() {
        let xa = [1.1, 0.7];
        let exact = riemann_tensor(&sphere2(sphere2_analytic_supply()), &xa).unwrap();
        let mut errs = Vec::new();
        for step in [2e-3, 1e-3] {
            let g = sphere2(DerivativeSupply::FiniteDifference(FdConfig {
                rel_step: step,
                richardson: false,
            }));
            let r = riemann_tensor(&g, &xa).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        for l in 0..2 {
                            worst = worst.max((r.get(i, j, k, l) - exact.get(i, j, k, l)).abs());
                        }
                    }
                }
            }
            errs.push(worst);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            (3.5..=4.5).contains(&ratio),
            "second-order ratio {ratio}, errors {errs:?}"
        );
    }

    #[test]
    fn round_sphere3_operator_is_gram() {
        let g = sphere3();
        let x = [1.2, 1.4, 0.8];
        let f = curvature_operator(&g, &x).unwrap();
        let diff = (f.entries() - f.gram()).abs().max();
        assert!(diff < 1e-5, "operator-gram distance {diff}");
        let eigs = f.eigenvalues().unwrap();
        for e in eigs {
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn product_sphere_line_min_eig_zero() {
        // S² × R: flat directions give eigenvalue 0
        let domain = ChartDomain::new(vec![[0.3, PI - 0.3], [0.0, 2.0], [0.0, 1.0]]).unwrap();
        let g = MetricField::from_fn(
            domain,
            |x: &[f64]| {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                    1.0,
                    x[0].sin().powi(2),
                    1.0,
                ]))
            },
            DerivativeSupply::FiniteDifference(FdConfig {
                rel_step: 1e-4,
                richardson: true,
            }),
        );
        let f = curvature_operator(&g, &[1.0, 0.5, 0.5]).unwrap();
        let eigs = f.eigenvalues().unwrap();
        assert_abs_diff_eq!(eigs[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(eigs[2], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn flat_curvature_operator_zero_over_spd_gram() {
        let g = flat(3);
        let f = curvature_operator(&g, &[0.5, 0.5, 0.5]).unwrap();
        assert!(f.entries().abs().max() <= 1e-9);
        assert!(f.gram().clone().cholesky().is_some());
    }

    #[test]
    fn isotropic_flat_zero() {
        let g = flat(4);
        let v = isotropic_min(&g, &[0.5; 4], IsotropicVariant::Plain, &FrameSearch::default())
            .unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn isotropic_dimension_gate() {
        let g = flat(2);
        assert!(matches!(
            isotropic_min(&g, &[0.5, 0.5], IsotropicVariant::PlusR, &FrameSearch::default()),
            Err(Error::DimensionPrerequisite { .. })
        ));
    }

    #[test]
    fn flag_round_sphere3() {
        let g = sphere3();
        let v = flag_min(&g, &[1.2, 1.4, 0.8], &FrameSearch::default()).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn flag_dimension_gate() {
        let g = flat(2);
        assert!(flag_min(&g, &[0.5, 0.5], &FrameSearch::default()).is_err());
    }

    #[test]
    fn flag_matches_random_triple_search() {
        // random 3x3 curvature form vs brute force over random triples
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let entries = crate::lambda2::symmetrized(&DMatrix::from_fn(3, 3, |_, _| {
            rng.random_range(-1.0..1.0)
        }));
        let gm = DMatrix::identity(3, 3);
        let form = Lambda2Form::new(Lambda2Basis::new(3), entries, gm.clone()).unwrap();
        let fast = flag_min_of_form(&form, &gm, &FrameSearch::default());
        let mut brute = f64::INFINITY;
        for _ in 0..100_000 {
            let raw = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            if let Some(q) = orthonormalize(&gm, &raw) {
                brute = brute.min(flag_value(&form, &q));
            }
        }
        assert!(
            (fast - brute).abs() < 1e-3,
            "refined {fast} vs brute {brute}"
        );
        assert!(fast <= brute + 1e-9);
    }

    #[test]
    fn isotropic_deterministic_under_seed() {
        let g = sphere3();
        let s = FrameSearch::default();
        let a = isotropic_min(&g, &[1.2, 1.4, 0.8], IsotropicVariant::PlusR, &s).unwrap();
        let b = isotropic_min(&g, &[1.2, 1.4, 0.8], IsotropicVariant::PlusR, &s).unwrap();
        assert_eq!(a, b);
    }
}
