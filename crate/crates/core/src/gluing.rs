//! Assembly of the modified metric near the interface and the operator
//! decomposition that controls its curvature.
//!
//! On the side-0 collar the metric is bent toward the far side by
//!
//! ```text
//! g^δ_ij = g0_ij + 2 F(x^n) L_ij - 2 C 𝓕(x^n) (P^T)_ij
//! ```
//!
//! with L the parallel-transported combined second fundamental form, P^T the
//! tangential projector and (F, 𝓕) the profile antiderivatives.  The first
//! and second derivatives of g_δ are supplied in closed form: profile
//! factors exactly, smooth fields by differences, so curvature evaluation
//! stays accurate right at the interface and across the profile junctions.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::collar::{CollarData, ExtendedL, G1Prime, Side};
use crate::curvature::{christoffels, curvature_operator};
use crate::error::{Error, Result};
use crate::field::{DerivativeSupply, MetricField};
use crate::lambda2::{
    form_entries_from_tensor, generalized_eigenvalues, kn_tensor, symmetrized,
    Lambda2Basis, Lambda2Form, SymmetricOperator2,
};
use crate::profile::BumpProfile;
use crate::tensor::Tensor4;

/// Margin added to the spectral bound when picking the modification
/// constant.
pub const C_MARGIN: f64 = 1.0;

/// Finite-difference step (relative to the collar width) for derivatives of
/// the transported form field.
const L_FIELD_REL_STEP: f64 = 1e-4;

/// The bent metric on the side-0 collar.
#[derive(Clone)]
pub struct ModifiedMetric {
    collar: CollarData,
    profile: Arc<BumpProfile>,
    c: f64,
    g_delta: MetricField,
    ext: ExtendedL,
}

/// Tangential projector as a (0,2) tensor: the tangential block of g with
/// zero normal row and column.
fn tangential_projector(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut p = DMatrix::zeros(n, n);
    p.view_mut((0, 0), (n - 1, n - 1))
        .copy_from(&g.view((0, 0), (n - 1, n - 1)));
    p
}

/// Normal projector (0,2): e_n ⊗ e_n.
fn normal_projector(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    p[(n - 1, n - 1)] = 1.0;
    p
}

struct DeltaParts {
    collar: CollarData,
    ext: ExtendedL,
    profile: Arc<BumpProfile>,
    c: f64,
}

impl DeltaParts {
    fn l_form(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.collar.n();
        let l_gamma = self
            .collar
            .combined_l(&x[..n - 1])
            .expect("interface form available");
        self.ext.form_at(&l_gamma, x)
    }

    /// Beyond the transition zone f and f' vanish identically and F is the
    /// zero-integral residual, so the transported form contributes nothing
    /// worth a normal-line integration.
    fn l_negligible(&self, t: f64) -> bool {
        t >= self.profile.delta && self.profile.big_f(t).abs() < 1e-15
    }

    fn coeff(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.collar.n();
        let t = x[n - 1];
        let g0 = self.collar.g0().coeff(x);
        let big_f = self.profile.big_f(t);
        let big_ff = self.profile.big_ff(t);
        let p = tangential_projector(&g0);
        let mut out = &g0 - p * (2.0 * self.c * big_ff);
        if !self.l_negligible(t) {
            out += self.l_form(x) * (2.0 * big_f);
        }
        symmetrized(&out)
    }

    fn l_d1(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let h = L_FIELD_REL_STEP * self.collar.g0().domain().axis_scale(k);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        (self.l_form(&xp) - self.l_form(&xm)) / (2.0 * h)
    }

    fn l_d2(&self, x: &[f64], k: usize, l: usize) -> DMatrix<f64> {
        let hk = L_FIELD_REL_STEP * self.collar.g0().domain().axis_scale(k);
        let hl = L_FIELD_REL_STEP * self.collar.g0().domain().axis_scale(l);
        if k == l {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += hk;
            xm[k] -= hk;
            (self.l_form(&xp) + self.l_form(&xm) - self.l_form(x) * 2.0) / (hk * hk)
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
            (self.l_form(&xpp) - self.l_form(&xpm) - self.l_form(&xmp) + self.l_form(&xmm))
                / (4.0 * hk * hl)
        }
    }

    fn d1(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let n = self.collar.n();
        let t = x[n - 1];
        let normal = k == n - 1;
        let g0 = self.collar.g0();
        let dg = g0.d1(x, k).expect("g0 derivative available");
        let big_f = self.profile.big_f(t);
        let big_ff = self.profile.big_ff(t);
        let skip_l = self.l_negligible(t);
        let mut out = dg.clone();
        if !skip_l {
            out += self.l_d1(x, k) * (2.0 * big_f);
        }
        out -= tangential_projector(&dg) * (2.0 * self.c * big_ff);
        if normal {
            let f = self.profile.f(t);
            if !skip_l && f != 0.0 {
                out += self.l_form(x) * (2.0 * f);
            }
            out -= tangential_projector(&g0.coeff(x)) * (2.0 * self.c * big_f);
        }
        out
    }

    fn d2(&self, x: &[f64], k: usize, l: usize) -> DMatrix<f64> {
        let n = self.collar.n();
        let t = x[n - 1];
        let g0 = self.collar.g0();
        let dkn = k == n - 1;
        let dln = l == n - 1;
        let f = self.profile.f(t);
        let fp = self.profile.f_prime(t);
        let big_f = self.profile.big_f(t);
        let big_ff = self.profile.big_ff(t);

        let skip_l = self.l_negligible(t);
        let ddg = g0.d2(x, k, l).expect("g0 second derivative available");
        let mut out = ddg.clone();
        if !skip_l {
            out += self.l_d2(x, k, l) * (2.0 * big_f);
        }
        out -= tangential_projector(&ddg) * (2.0 * self.c * big_ff);
        // cross terms with one normal derivative on the profile
        if dkn {
            if !skip_l && f != 0.0 {
                out += self.l_d1(x, l) * (2.0 * f);
            }
            out -= tangential_projector(&g0.d1(x, l).unwrap()) * (2.0 * self.c * big_f);
        }
        if dln {
            if !skip_l && f != 0.0 {
                out += self.l_d1(x, k) * (2.0 * f);
            }
            out -= tangential_projector(&g0.d1(x, k).unwrap()) * (2.0 * self.c * big_f);
        }
        // both derivatives on the profile
        if dkn && dln {
            if !skip_l && fp != 0.0 {
                out += self.l_form(x) * (2.0 * fp);
            }
            out -= tangential_projector(&g0.coeff(x)) * (2.0 * self.c * f);
        }
        symmetrized(&out)
    }
}

/// Largest tangential eigenvalue of the pencil (L² - ½ H, ĝ) over the
/// interface samples, for a given normal Hessian supplier.
fn spectral_need<H>(collar: &CollarData, mut hessian: H) -> Result<f64>
where
    H: FnMut(&[f64]) -> Result<DMatrix<f64>>,
{
    let n = collar.n();
    let mut worst = f64::NEG_INFINITY;
    for xhat in collar.gamma_samples(3) {
        let x = collar.on_gamma(&xhat);
        let ghat = collar
            .g0()
            .coeff(&x)
            .view((0, 0), (n - 1, n - 1))
            .clone_owned();
        let l = collar.combined_l(&xhat)?;
        let ghat_inv = ghat
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite {
                what: "interface metric".into(),
                min_eig: f64::NAN,
            })?;
        let l_sq = &l * &ghat_inv * &l;
        let hess = hessian(&xhat)?;
        let hess_tang = hess.view((0, 0), (n - 1, n - 1)).clone_owned();
        let s = symmetrized(&(l_sq - hess_tang * 0.5));
        let eigs = generalized_eigenvalues(&s, &ghat)?;
        worst = worst.max(*eigs.last().unwrap());
    }
    Ok(worst)
}

/// Spectral gap of the coordinate-Hessian pencil (diagnostic; the bent
/// metric only needs [`choose_c`]).
pub fn coordinate_spectral_need(collar: &CollarData) -> Result<f64> {
    let g1p = collar.extend_g1_prime();
    spectral_need(collar, |xhat| g1p.normal_hessian_on_gamma(xhat))
}

/// Picks the modification constant.  The bent metric needs
/// (-L² + ½ ∇²_N G₁ + C P^T) ∧ P^N ⪰ 0 near the interface; when the
/// covariant condition already holds with C = 0 the modification is pure
/// damage (it digs the well deeper for nothing), so zero is returned.
/// Otherwise the spectral gap plus a unit margin covers the sampled
/// interface.
pub fn choose_c(collar: &CollarData) -> Result<f64> {
    let g1p = collar.extend_g1_prime();
    let need = spectral_need(collar, |xhat| covariant_normal_hessian(collar, &g1p, xhat))?;
    if need <= 1e-9 {
        Ok(0.0)
    } else {
        Ok(need + C_MARGIN)
    }
}

/// Builds the bent metric for a collar, profile and constant.
pub fn build_g_delta(
    collar: &CollarData,
    profile: &BumpProfile,
    c: f64,
) -> Result<ModifiedMetric> {
    if c < 0.0 {
        return Err(Error::Invalid(format!("modification constant {c} < 0")));
    }
    if profile.delta > collar.width() {
        return Err(Error::Invalid(format!(
            "delta {} exceeds collar width {}",
            profile.delta,
            collar.width()
        )));
    }
    let parts = Arc::new(DeltaParts {
        collar: collar.clone(),
        ext: collar.extended_l(),
        profile: Arc::new(profile.clone()),
        c,
    });
    let coeff = {
        let parts = Arc::clone(&parts);
        Arc::new(move |x: &[f64]| parts.coeff(x))
    };
    let d1 = {
        let parts = Arc::clone(&parts);
        Arc::new(move |x: &[f64], k: usize| parts.d1(x, k))
    };
    let d2 = {
        let parts = Arc::clone(&parts);
        Arc::new(move |x: &[f64], k: usize, l: usize| parts.d2(x, k, l))
    };
    let field = MetricField::new(
        collar.g0().domain().clone(),
        coeff,
        DerivativeSupply::Analytic { d1, d2 },
    );
    let modified = ModifiedMetric {
        collar: collar.clone(),
        profile: Arc::clone(&parts.profile),
        c,
        g_delta: field,
        ext: collar.extended_l(),
    };
    // positivity over the collar
    for x in collar_grid(collar, &depth_stations(profile.delta, collar.width()), 3) {
        let g = modified.g_delta.coeff(&x);
        let min = g
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
    }
    Ok(modified)
}

/// Tangential grid crossed with the given depths (side-0 sign convention:
/// positive depths sample side 0, negative side 1).
pub fn collar_grid(collar: &CollarData, depths: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for xhat in collar.gamma_samples(per_axis) {
        for &d in depths {
            let mut x = xhat.clone();
            x.push(d);
            out.push(x);
        }
    }
    out
}

/// Standard depth stations inside the bent region plus one beyond it.
pub fn depth_stations(delta: f64, width: f64) -> Vec<f64> {
    let mut v = vec![
        delta / 8.0,
        delta / 4.0,
        delta / 2.0,
        3.0 * delta / 4.0,
        15.0 * delta / 16.0,
    ];
    v.push((1.25 * delta).min(0.9 * width));
    v
}

impl ModifiedMetric {
    pub fn field(&self) -> &MetricField {
        &self.g_delta
    }

    pub fn collar(&self) -> &CollarData {
        &self.collar
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// (0,2) entries of the transported combined form at x.
    pub fn l_form_at(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.collar.n();
        let l_gamma = self
            .collar
            .combined_l(&x[..n - 1])
            .expect("interface form available");
        self.ext.form_at(&l_gamma, x)
    }

    /// Endomorphism of the transported combined form at x.
    pub fn l_endo_at(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.collar.n();
        let l_gamma = self
            .collar
            .combined_l(&x[..n - 1])
            .expect("interface form available");
        self.ext.endomorphism_at(&l_gamma, x)
    }
}

/// The two-sided glued metric: bent side 0, untouched side 1.
#[derive(Clone)]
pub struct GluedMetric {
    modified: ModifiedMetric,
}

impl GluedMetric {
    pub fn new(modified: ModifiedMetric) -> Self {
        GluedMetric { modified }
    }

    pub fn n(&self) -> usize {
        self.modified.collar.n()
    }

    pub fn collar(&self) -> &CollarData {
        &self.modified.collar
    }

    pub fn modified(&self) -> &ModifiedMetric {
        &self.modified
    }

    pub fn delta(&self) -> f64 {
        self.modified.profile.delta
    }

    /// Coefficients of the glued metric; side is picked by the sign of x^n.
    pub fn coeff(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        if x[n - 1] >= 0.0 {
            self.modified.g_delta.coeff(x)
        } else {
            self.modified.collar.g1().coeff(x)
        }
    }

    /// Coefficients of the continuous unbent metric (g0 / g1 as given).
    pub fn original_coeff(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        if x[n - 1] >= 0.0 {
            self.modified.collar.g0().coeff(x)
        } else {
            self.modified.collar.g1().coeff(x)
        }
    }

    /// Jump of the coefficients across the interface at x̂ (continuity
    /// witness) and of their first normal derivatives (the W^{2,∞} witness).
    pub fn interface_jumps(&self, xhat: &[f64]) -> Result<(f64, f64)> {
        let n = self.n();
        let x = self.modified.collar.on_gamma(xhat);
        let c_jump = (self.modified.g_delta.coeff(&x) - self.modified.collar.g1().coeff(&x))
            .abs()
            .max();
        let d_delta = self.modified.g_delta.d1(&x, n - 1)?;
        let d_one = self.modified.collar.g1().d1(&x, n - 1)?;
        let d_jump = (d_delta - d_one).abs().max();
        Ok((c_jump, d_jump))
    }
}

/// Pointwise ingredients of the curvature comparison between the bent and
/// original metrics.
pub struct DecompositionTerms {
    pub r0: Lambda2Form,
    /// L ∧ L
    pub a_form: DMatrix<f64>,
    /// L ∧ P^N
    pub l_form: DMatrix<f64>,
    /// L² ∧ P^N
    pub l2_form: DMatrix<f64>,
    /// P^T ∧ P^N
    pub ihat_form: DMatrix<f64>,
    /// first-order transport remainder
    pub b_form: DMatrix<f64>,
    pub b_tensor: Tensor4,
    pub f: f64,
    pub f_prime: f64,
}

/// Outcome of comparing the bent curvature against the assembled right-hand
/// side at one point.
pub struct DecompositionOutcome {
    pub lhs: Lambda2Form,
    pub rhs: Lambda2Form,
    /// max |generalized eigenvalue| of lhs - rhs against the unbent gram
    pub residual: f64,
}

/// Covariant derivative of an endomorphism field along coordinate direction
/// j: ∂_j T + [Γ_j, T].
fn covariant_endo_derivative(
    gamma_j: &DMatrix<f64>,
    dt: &DMatrix<f64>,
    t: &DMatrix<f64>,
) -> DMatrix<f64> {
    dt + gamma_j * t - t * gamma_j
}

/// Profile-independent ingredients of the curvature comparison at a point.
pub struct RawTerms {
    /// curvature form of the unbent metric
    pub r0: Lambda2Form,
    /// transported combined form, (0,2)
    pub l: DMatrix<f64>,
    /// its g-square, (0,2)
    pub l_sq: DMatrix<f64>,
    /// tangential projector, (0,2)
    pub p_t: DMatrix<f64>,
    /// normal projector, (0,2)
    pub p_n: DMatrix<f64>,
    /// first-order transport remainder
    pub b: Tensor4,
}

/// Assembles the profile-independent comparison ingredients at x: the
/// unbent curvature, the four product forms and the first-order transport
/// remainder.
pub fn decomposition_terms_at(collar: &CollarData, ext: &ExtendedL, x: &[f64]) -> Result<RawTerms> {
    let n = collar.n();
    let g0 = collar.g0();
    let gm = g0.coeff(x);

    let r0 = curvature_operator(g0, x)?;
    let l_gamma_at = |p: &[f64]| {
        collar
            .combined_l(&p[..n - 1])
            .expect("interface form available")
    };
    let l_endo = ext.endomorphism_at(&l_gamma_at(x), x);
    let l = symmetrized(&(&gm * &l_endo));
    let g_inv = gm.clone().try_inverse().unwrap();
    let l_sq = symmetrized(&(&l * &g_inv * &l));
    let p_t = tangential_projector(&gm);
    let p_n = normal_projector(n);

    // shape operator of the equidistants: (∇N)_ij = ½ ∂_n g_ij
    let nabla_n_form = symmetrized(&(g0.d1(x, n - 1)? * 0.5));

    // covariant derivatives of the transported form field, as
    // endomorphisms, by central differences plus connection terms
    let gamma = christoffels(g0, x)?;
    let step = |k: usize| L_FIELD_REL_STEP * g0.domain().axis_scale(k);
    let mut nabla_l = Vec::with_capacity(n);
    for j in 0..n {
        let h = step(j);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let dl = (ext.endomorphism_at(&l_gamma_at(&xp), &xp)
            - ext.endomorphism_at(&l_gamma_at(&xm), &xm))
            / (2.0 * h);
        let mut gamma_j = DMatrix::zeros(n, n);
        for k in 0..n {
            for m in 0..n {
                gamma_j[(k, m)] = gamma[k][(j, m)];
            }
        }
        nabla_l.push(covariant_endo_derivative(&gamma_j, &dl, &l_endo));
    }
    // W[j](i, l) = <∂_i, (∇_j L) ∂_l>
    let w: Vec<DMatrix<f64>> = (0..n).map(|j| &gm * &nabla_l[j]).collect();

    let kn_l_nablan = kn_tensor(&l, &nabla_n_form);
    let mut b = Tensor4::zeros(n);
    let nn = n - 1;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for m in 0..n {
                    let mut v = -2.0 * kn_l_nablan.get(i, j, k, m);
                    if k == nn {
                        v += w[j][(i, m)] - w[i][(j, m)];
                    }
                    if m == nn {
                        v -= w[j][(i, k)] - w[i][(j, k)];
                    }
                    if i == nn {
                        v += w[m][(k, j)] - w[k][(m, j)];
                    }
                    if j == nn {
                        v -= w[m][(k, i)] - w[k][(m, i)];
                    }
                    b.set(i, j, k, m, v);
                }
            }
        }
    }

    Ok(RawTerms {
        r0,
        l,
        l_sq,
        p_t,
        p_n,
        b,
    })
}

impl ModifiedMetric {
    /// Assembles the comparison ingredients at x.
    pub fn decomposition_terms(&self, x: &[f64]) -> Result<DecompositionTerms> {
        let n = self.collar.n();
        let t_depth = x[n - 1];
        let raw = decomposition_terms_at(&self.collar, &self.ext, x)?;
        Ok(DecompositionTerms {
            a_form: form_entries_from_tensor(&kn_tensor(&raw.l, &raw.l)),
            l_form: form_entries_from_tensor(&kn_tensor(&raw.l, &raw.p_n)),
            l2_form: form_entries_from_tensor(&kn_tensor(&raw.l_sq, &raw.p_n)),
            ihat_form: form_entries_from_tensor(&kn_tensor(&raw.p_t, &raw.p_n)),
            b_form: form_entries_from_tensor(&raw.b),
            b_tensor: raw.b,
            r0: raw.r0,
            f: self.profile.f(t_depth),
            f_prime: self.profile.f_prime(t_depth),
        })
    }

    /// Curvature of the bent metric against the assembled right-hand side.
    pub fn assemble_decomposition(&self, x: &[f64]) -> Result<DecompositionOutcome> {
        let terms = self.decomposition_terms(x)?;
        let lhs = curvature_operator(&self.g_delta, x)?;
        let f = terms.f;
        let fp = terms.f_prime;
        let rhs_entries = terms.r0.entries()
            - &terms.a_form * (f * f)
            + &terms.b_form * f
            - &terms.l_form * (2.0 * fp)
            + &terms.l2_form * (2.0 * f * f)
            + &terms.ihat_form * (2.0 * self.c * f);
        let gram = terms.r0.gram().clone();
        let basis = Lambda2Basis::new(self.collar.n());
        let rhs = Lambda2Form::new(basis, rhs_entries, gram.clone())?;
        let diff = lhs.entries() - rhs.entries();
        let eigs = generalized_eigenvalues(&symmetrized(&diff), &gram)?;
        let residual = eigs.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
        Ok(DecompositionOutcome { lhs, rhs, residual })
    }
}

/// Report of the interface inequality check.
pub struct BoundaryReport {
    /// max over samples of the operator distance between the assembled
    /// combination and the curvature of the continued metric
    pub identity_error: f64,
    /// min over samples of the smallest eigenvalue of (assembled - κ gram)
    pub min_slack: f64,
}

/// Covariant second normal derivative of the endomorphism g0^{-1} g1' on
/// the interface, in closed form from the Taylor data of the continuation.
fn covariant_normal_hessian(
    collar: &CollarData,
    g1p: &G1Prime,
    xhat: &[f64],
) -> Result<DMatrix<f64>> {
    let n = collar.n();
    let x = collar.on_gamma(xhat);
    let g0 = collar.g0();
    let gm = g0.coeff(&x);
    let a = gm.clone().try_inverse().unwrap();
    let dg = g0.d1(&x, n - 1)?;
    let ddg = g0.d2(&x, n - 1, n - 1)?;
    let taylor = g1p.taylor_data(xhat)?;
    let g1 = &taylor[0];
    let c1 = &taylor[1];
    let c2 = &taylor[2];

    let da = -&a * &dg * &a;
    let dda = &a * &dg * &a * &dg * &a * 2.0 - &a * &ddg * &a;

    let t = &a * g1;
    let dt = &da * g1 + &a * c1;
    let ddt = &dda * g1 + &da * c1 * 2.0 + &a * c2;

    // Γ_n and its normal derivative, as matrices acting on components
    let gamma_n = &a * &dg * 0.5;
    let dgamma_n = (&da * &dg + &a * &ddg) * 0.5;

    let comm = |p: &DMatrix<f64>, q: &DMatrix<f64>| p * q - q * p;
    let h_endo = &ddt + comm(&dgamma_n, &t) + comm(&gamma_n, &dt) * 2.0
        + comm(&gamma_n, &comm(&gamma_n, &t));
    Ok(symmetrized(&(gm * h_endo)))
}

/// Checks that the curvature of the continued far-side metric matches the
/// assembled combination on the interface, and that the combination stays
/// above κ there.
pub fn check_boundary_inequality(collar: &CollarData, kappa: f64) -> Result<BoundaryReport> {
    let g1p = collar.extend_g1_prime();
    let g1p_field = g1p.field();
    let ext = collar.extended_l();

    let mut identity_error: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    for xhat in collar.gamma_samples(3) {
        let x = collar.on_gamma(&xhat);
        let raw = decomposition_terms_at(collar, &ext, &x)?;
        let hess = covariant_normal_hessian(collar, &g1p, &xhat)?;
        let hess_form = form_entries_from_tensor(&kn_tensor(&hess, &raw.p_n));
        let assembled = raw.r0.entries()
            - form_entries_from_tensor(&kn_tensor(&raw.l, &raw.l))
            + form_entries_from_tensor(&raw.b)
            + form_entries_from_tensor(&kn_tensor(&raw.l_sq, &raw.p_n)) * 2.0
            - hess_form;
        let gram = raw.r0.gram().clone();

        let cont = curvature_operator(&g1p_field, &x)?;
        let diff = symmetrized(&(&assembled - cont.entries()));
        let eigs = generalized_eigenvalues(&diff, &gram)?;
        identity_error = identity_error.max(eigs.iter().fold(0.0_f64, |a, e| a.max(e.abs())));

        let slack = symmetrized(&(&assembled - &gram * kappa));
        let eigs = generalized_eigenvalues(&slack, &gram)?;
        min_slack = min_slack.min(eigs[0]);
    }
    Ok(BoundaryReport {
        identity_error,
        min_slack,
    })
}

/// Outcome of bending the boundary inward to raise the mean curvature.
pub struct PerturbationReport {
    pub collar: CollarData,
    /// measured increment of tr L0 on interface samples
    pub trace_increment: f64,
    /// increment predicted by the full-dimension contraction, -(n/2) φ'(0)
    pub predicted_full: f64,
    /// increment predicted by the tangential contraction, -((n-1)/2) φ'(0)
    pub predicted_tangential: f64,
    /// largest sampled change of scalar curvature on side 0
    pub scalar_deviation: f64,
    /// scale of |φ'| + |φ''| entering that change
    pub phi_size: f64,
}

/// Scales the tangential block of g0 by φ(x^n) with φ(0) = 1,
/// φ'(0) = `slope` < 0 and φ ≡ 1 past `d0`, raising the mean curvature of
/// the interface by a controlled amount.
pub fn perturb_mean_curvature(
    collar: &CollarData,
    d0: f64,
    slope: f64,
) -> Result<PerturbationReport> {
    if slope >= 0.0 {
        return Err(Error::SlopeSign { slope });
    }
    if !(d0 > 0.0 && d0 <= collar.width()) {
        return Err(Error::Invalid(format!(
            "perturbation depth {d0} outside (0, width]"
        )));
    }
    let n = collar.n();

    // φ(t) = 1 + s ψ(t), ψ = t (1 - t/d0)³ on [0, d0], 0 beyond: C² with
    // ψ(0) = 0, ψ'(0) = 1, flat at d0
    let phi = move |t: f64| -> (f64, f64, f64) {
        if t >= d0 || t < 0.0 {
            return (1.0, 0.0, 0.0);
        }
        let u = 1.0 - t / d0;
        let psi = t * u * u * u;
        let dpsi = u * u * u - 3.0 * t / d0 * u * u;
        let ddpsi = -6.0 / d0 * u * u + 6.0 * t / (d0 * d0) * u;
        (1.0 + slope * psi, slope * dpsi, slope * ddpsi)
    };

    let base = collar.g0().clone();
    let coeff = {
        let base = base.clone();
        Arc::new(move |x: &[f64]| {
            let g = base.coeff(x);
            let (p, _, _) = phi(x[n - 1]);
            scale_tangential(&g, p)
        })
    };
    let d1 = {
        let base = base.clone();
        Arc::new(move |x: &[f64], k: usize| {
            let g = base.coeff(x);
            let dg = base.d1(x, k).expect("g0 derivative available");
            let (p, dp, _) = phi(x[n - 1]);
            let mut out = scale_tangential(&dg, p);
            if k == n - 1 {
                out += scale_tangential_only(&g, dp);
            }
            out
        })
    };
    let d2 = {
        let base = base.clone();
        Arc::new(move |x: &[f64], k: usize, l: usize| {
            let g = base.coeff(x);
            let dgk = base.d1(x, k).expect("g0 derivative available");
            let dgl = base.d1(x, l).expect("g0 derivative available");
            let ddg = base.d2(x, k, l).expect("g0 second derivative available");
            let (p, dp, ddp) = phi(x[n - 1]);
            let mut out = scale_tangential(&ddg, p);
            if k == n - 1 {
                out += scale_tangential_only(&dgl, dp);
            }
            if l == n - 1 {
                out += scale_tangential_only(&dgk, dp);
            }
            if k == n - 1 && l == n - 1 {
                out += scale_tangential_only(&g, ddp);
            }
            out
        })
    };
    let g0_tilde = MetricField::new(
        base.domain().clone(),
        coeff,
        DerivativeSupply::Analytic { d1, d2 },
    );
    let new_collar = CollarData::new(g0_tilde, collar.g1().clone(), collar.width())?;

    // measured trace increment and scalar deviation
    let mut increment: f64 = f64::NEG_INFINITY;
    let mut deviation: f64 = 0.0;
    for xhat in collar.gamma_samples(3) {
        let x = collar.on_gamma(&xhat);
        let ghat = collar
            .g0()
            .coeff(&x)
            .view((0, 0), (n - 1, n - 1))
            .clone_owned();
        let ghat_inv = ghat.try_inverse().unwrap();
        let l_old = collar.second_ff(Side::M0, &xhat)?;
        let l_new = new_collar.second_ff(Side::M0, &xhat)?;
        let inc = (&ghat_inv * (l_new - l_old)).trace();
        increment = increment.max(inc);
    }
    for depth_frac in [0.1, 0.3, 0.6, 0.9] {
        for xhat in collar.gamma_samples(2) {
            let mut x = collar.on_gamma(&xhat);
            x[n - 1] = depth_frac * d0;
            let g0op = SymmetricOperator2::new(symmetrized(&collar.g0().coeff(&x)))?;
            let sc_old = crate::lambda2::scalar_trace(
                &curvature_operator(collar.g0(), &x)?,
                &g0op,
            )?;
            let gtop = SymmetricOperator2::new(symmetrized(&new_collar.g0().coeff(&x)))?;
            let sc_new = crate::lambda2::scalar_trace(
                &curvature_operator(new_collar.g0(), &x)?,
                &gtop,
            )?;
            deviation = deviation.max((sc_new - sc_old).abs());
        }
    }
    let phi_size = {
        let mut m: f64 = 0.0;
        for i in 0..=20 {
            let t = d0 * i as f64 / 20.0;
            let (_, dp, ddp) = phi(t);
            m = m.max(dp.abs() + ddp.abs());
        }
        m
    };

    Ok(PerturbationReport {
        collar: new_collar,
        trace_increment: increment,
        predicted_full: -(n as f64 / 2.0) * slope,
        predicted_tangential: -((n as f64 - 1.0) / 2.0) * slope,
        scalar_deviation: deviation,
        phi_size,
    })
}

fn scale_tangential(m: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            out[(i, j)] *= factor;
        }
    }
    out
}

/// Only the tangential block, scaled; normal row and column zero.
fn scale_tangential_only(m: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            out[(i, j)] = m[(i, j)] * factor;
        }
    }
    out
}

/// One row of the residual/slack report.
pub struct ResidualRow {
    pub scenario: String,
    pub delta: f64,
    pub c: f64,
    pub depth: f64,
    pub residual: f64,
    pub min_slack: f64,
}

pub fn residual_csv(rows: &[ResidualRow]) -> String {
    let mut out = String::from("scenario,delta,C,x_sample,residual,min_slack\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.scenario, r.delta, r.c, r.depth, r.residual, r.min_slack
        ));
    }
    out
}

/// Residual and slack rows over the depth stations, for one bent metric.
pub fn residual_report(
    scenario: &str,
    modified: &ModifiedMetric,
    kappa: f64,
) -> Result<Vec<ResidualRow>> {
    let collar = modified.collar();
    let delta = modified.profile().delta;
    let mut rows = Vec::new();
    for depth in depth_stations(delta, collar.width()) {
        let mut worst = 0.0_f64;
        let mut slack = f64::INFINITY;
        for xhat in collar.gamma_samples(2) {
            let mut x = collar.on_gamma(&xhat);
            x[collar.n() - 1] = depth;
            let out = modified.assemble_decomposition(&x)?;
            worst = worst.max(out.residual);
            let shifted = out.lhs.entries() - out.lhs.gram() * kappa;
            let eigs = generalized_eigenvalues(&symmetrized(&shifted), out.lhs.gram())?;
            slack = slack.min(eigs[0]);
        }
        rows.push(ResidualRow {
            scenario: scenario.to_string(),
            delta,
            c: modified.c(),
            depth,
            residual: worst,
            min_slack: slack,
        });
    }
    Ok(rows)
}
