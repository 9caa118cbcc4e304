//! Bilinear forms and operators on the space of 2-vectors.
//!
//! A metric g on V induces an inner product on Λ²V,
//!
//! ```text
//! I(e_i ∧ e_j, e_k ∧ e_l) = g_ik g_jl - g_jk g_il,
//! ```
//!
//! and a (0,4)-tensor T with curvature symmetries induces a symmetric
//! bilinear form on Λ²V.  Everything here is stored against the canonical
//! basis `{e_i ∧ e_j : i < j}`, ordered lexicographically.  For 2-vectors
//! written with fully antisymmetric coefficients `α = α^{ij} e_i ⊗ e_j` the
//! pairing reads `T(α, β) = ¼ T_ijkl α^{ij} β^{kl}`, which equals the plain
//! quadratic form of the stored matrix on the `i < j` coefficients.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Relative tolerance for symmetry validation of stored matrices.
pub const SYM_TOL: f64 = 1e-14;

/// Canonical ordered basis of Λ²V for an n-dimensional V.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lambda2Basis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl Lambda2Basis {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "ambient dimension must be at least 2");
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push((i, j));
            }
        }
        Lambda2Basis { n, pairs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// dim Λ²V = n(n-1)/2
    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Position of the basis vector e_i ∧ e_j, i < j.
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        // lexicographic offset
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Pair-basis coefficients of a 2-vector given as a full antisymmetric
    /// coefficient matrix.
    pub fn compress(&self, alpha: &DMatrix<f64>) -> Vec<f64> {
        self.pairs.iter().map(|&(i, j)| alpha[(i, j)]).collect()
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// A symmetric (0,2)-tensor; together with an ambient metric it doubles as a
/// self-adjoint endomorphism through index raising.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperator2 {
    n: usize,
    entries: DMatrix<f64>,
}

impl SymmetricOperator2 {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", entries.nrows(), entries.ncols()),
            });
        }
        let asym = relative_asymmetry(&entries);
        if asym > SYM_TOL {
            return Err(Error::NotSymmetric {
                what: "operator entries".into(),
                asym,
                tol: SYM_TOL,
            });
        }
        // enforce exact symmetry so downstream eigen-solvers see clean input
        let sym = symmetrized(&entries);
        Ok(SymmetricOperator2 { n, entries: sym })
    }

    pub fn identity(n: usize) -> Self {
        SymmetricOperator2 {
            n,
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Eigenvalues of the endomorphism this tensor represents with respect
    /// to the metric g, i.e. of the pencil `A v = λ g v`.
    pub fn eigenvalues_against(&self, g: &SymmetricOperator2) -> Result<Vec<f64>> {
        generalized_eigenvalues(&self.entries, g.entries())
    }
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric pencil `A v = λ B v` for SPD B, computed by
/// reducing with a Cholesky factor of B.  Returned in ascending order.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b.clone().cholesky().ok_or_else(|| {
        let min_eig = b
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        Error::NotPositiveDefinite {
            what: "pencil right-hand side".into(),
            min_eig,
        }
    })?;
    // congruent reduction L^{-1} A L^{-T} with B = L L^T
    let l = chol.l();
    let y = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
    let reduced = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
    let reduced = symmetrized(&reduced);
    let mut eigs: Vec<f64> = reduced.symmetric_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}

/// Symmetric bilinear form on Λ²V stored in the `i < j` pair basis together
/// with the induced Gram matrix of the generating metric.
#[derive(Debug, Clone)]
pub struct Lambda2Form {
    basis: Lambda2Basis,
    entries: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Lambda2Form {
    pub fn new(basis: Lambda2Basis, entries: DMatrix<f64>, gram: DMatrix<f64>) -> Result<Self> {
        let d = basis.dim();
        for (name, m) in [("form entries", &entries), ("gram matrix", &gram)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d}x{d}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            let asym = relative_asymmetry(m);
            if asym > SYM_TOL {
                return Err(Error::NotSymmetric {
                    what: name.to_string(),
                    asym,
                    tol: SYM_TOL,
                });
            }
        }
        if gram.clone().cholesky().is_none() {
            let min_eig = gram
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            return Err(Error::NotPositiveDefinite {
                what: "gram matrix".into(),
                min_eig,
            });
        }
        Ok(Lambda2Form {
            basis,
            entries: symmetrized(&entries),
            gram: symmetrized(&gram),
        })
    }

    pub fn basis(&self) -> &Lambda2Basis {
        &self.basis
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Value of the form on 2-vectors given in pair coordinates.
    pub fn apply(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, &av) in alpha.iter().enumerate() {
            let mut row = 0.0;
            for (c, &bv) in beta.iter().enumerate() {
                row += self.entries[(r, c)] * bv;
            }
            acc += av * row;
        }
        acc
    }

    /// Gram inner product of 2-vectors in pair coordinates.
    pub fn gram_apply(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (r, &av) in alpha.iter().enumerate() {
            let mut row = 0.0;
            for (c, &bv) in beta.iter().enumerate() {
                row += self.gram[(r, c)] * bv;
            }
            acc += av * row;
        }
        acc
    }

    /// All eigenvalues of the operator the form induces against the gram
    /// inner product, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        generalized_eigenvalues(&self.entries, &self.gram)
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    /// Sum of the two smallest eigenvalues against the gram inner product.
    pub fn two_smallest_sum(&self) -> Result<f64> {
        let eigs = self.eigenvalues()?;
        if eigs.len() < 2 {
            return Err(Error::DimensionPrerequisite {
                functional: "bi-curvature".into(),
                requirement: "dim Λ² ≥ 2 (ambient n ≥ 3)".into(),
                n: self.basis.n(),
            });
        }
        Ok(eigs[0] + eigs[1])
    }

    /// Entrywise linear combination against a shared gram matrix.
    pub fn linear_combination(parts: &[(f64, &Lambda2Form)], gram: DMatrix<f64>) -> Result<Self> {
        let basis = parts[0].1.basis.clone();
        let d = basis.dim();
        let mut entries = DMatrix::zeros(d, d);
        for (c, f) in parts {
            entries += f.entries() * *c;
        }
        Lambda2Form::new(basis, entries, gram)
    }
}

/// Induced inner product on Λ²V of an SPD metric g.
pub fn induced_gram(g: &SymmetricOperator2) -> Result<DMatrix<f64>> {
    let gm = g.entries();
    if gm.clone().cholesky().is_none() {
        let min_eig = gm
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NotPositiveDefinite {
            what: "metric".into(),
            min_eig,
        });
    }
    let basis = Lambda2Basis::new(g.n());
    let d = basis.dim();
    let mut gram = DMatrix::zeros(d, d);
    for (r, &(i, j)) in basis.pairs().iter().enumerate() {
        for (c, &(k, l)) in basis.pairs().iter().enumerate() {
            gram[(r, c)] = gm[(i, k)] * gm[(j, l)] - gm[(j, k)] * gm[(i, l)];
        }
    }
    Ok(gram)
}

/// Kulkarni-Nomizu product of two symmetric (0,2)-tensors, returned as a
/// bilinear form on Λ²V against the gram of `g`.  Normalized so that
/// `kn(g, g)` is the identity operator on Λ²V.
pub fn kn_product(
    a: &SymmetricOperator2,
    b: &SymmetricOperator2,
    g: &SymmetricOperator2,
) -> Result<Lambda2Form> {
    if a.n() != b.n() || a.n() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("matching dimensions, metric n = {}", g.n()),
            got: format!("a: {}, b: {}", a.n(), b.n()),
        });
    }
    let gram = induced_gram(g)?;
    let entries = kn_entries(a.entries(), b.entries());
    Lambda2Form::new(Lambda2Basis::new(g.n()), entries, gram)
}

/// Pair-basis matrix of the Kulkarni-Nomizu product,
/// `½ (A_ik B_jl - A_jk B_il + B_ik A_jl - B_jk A_il)`.
pub fn kn_entries(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let basis = Lambda2Basis::new(a.nrows());
    let d = basis.dim();
    let mut entries = DMatrix::zeros(d, d);
    for (r, &(i, j)) in basis.pairs().iter().enumerate() {
        for (c, &(k, l)) in basis.pairs().iter().enumerate() {
            entries[(r, c)] = 0.5
                * (a[(i, k)] * b[(j, l)] - a[(j, k)] * b[(i, l)] + b[(i, k)] * a[(j, l)]
                    - b[(j, k)] * a[(i, l)]);
        }
    }
    entries
}

/// The same product as a (0,4)-tensor.
pub fn kn_tensor(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Tensor4 {
    let n = a.nrows();
    let mut t = Tensor4::zeros(n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    t.set(
                        i,
                        j,
                        k,
                        l,
                        0.5 * (a[(i, k)] * b[(j, l)] - a[(j, k)] * b[(i, l)]
                            + b[(i, k)] * a[(j, l)]
                            - b[(j, k)] * a[(i, l)]),
                    );
                }
            }
        }
    }
    t
}

/// Tolerance for the antisymmetry precondition of [`form_from_tensor`].
pub const TENSOR_SYM_TOL: f64 = 1e-12;

/// Folds a (0,4)-tensor with curvature symmetries into a Λ² form over the
/// gram induced by `g`.
pub fn form_from_tensor(t: &Tensor4, g: &SymmetricOperator2) -> Result<Lambda2Form> {
    if t.n() != g.n() {
        return Err(Error::DimensionMismatch {
            expected: format!("tensor dimension {}", g.n()),
            got: format!("{}", t.n()),
        });
    }
    t.require_curvature_symmetries(TENSOR_SYM_TOL)?;
    let gram = induced_gram(g)?;
    let basis = Lambda2Basis::new(g.n());
    let entries = form_entries_from_tensor(t);
    Lambda2Form::new(basis, entries, gram)
}

pub fn form_entries_from_tensor(t: &Tensor4) -> DMatrix<f64> {
    let basis = Lambda2Basis::new(t.n());
    let d = basis.dim();
    let mut entries = DMatrix::zeros(d, d);
    for (r, &(i, j)) in basis.pairs().iter().enumerate() {
        for (c, &(k, l)) in basis.pairs().iter().enumerate() {
            let v = 0.5 * (t.get(i, j, k, l) + t.get(k, l, i, j));
            entries[(r, c)] = v;
        }
    }
    entries
}

/// Expands a Λ² form back into the (0,4)-tensor determined by the curvature
/// symmetries; inverse of [`form_from_tensor`] on its image.
pub fn tensor_from_form(form: &Lambda2Form) -> Tensor4 {
    let basis = form.basis();
    let n = basis.n();
    let mut t = Tensor4::zeros(n);
    for (r, &(i, j)) in basis.pairs().iter().enumerate() {
        for (c, &(k, l)) in basis.pairs().iter().enumerate() {
            let v = form.entries()[(r, c)];
            t.set(i, j, k, l, v);
            t.set(j, i, k, l, -v);
            t.set(i, j, l, k, -v);
            t.set(j, i, l, k, v);
        }
    }
    t
}

/// Contraction of the second and fourth slots against g,
/// `(tr T)_ik = g^{jl} T_ijkl`.  Maps PSD forms to PSD tensors.
pub fn ricci_trace(form: &Lambda2Form, g: &SymmetricOperator2) -> Result<SymmetricOperator2> {
    let n = g.n();
    if form.basis().n() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("form over n = {n}"),
            got: format!("{}", form.basis().n()),
        });
    }
    let g_inv = g
        .entries()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "metric".into(),
            min_eig: f64::NAN,
        })?;
    let t = tensor_from_form(form);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                for l in 0..n {
                    acc += g_inv[(j, l)] * t.get(i, j, k, l);
                }
            }
            out[(i, k)] = acc;
        }
    }
    SymmetricOperator2::new(symmetrized(&out))
}

/// Double trace `g^{ik} g^{jl} T_ijkl`; equals the g-trace of [`ricci_trace`].
pub fn scalar_trace(form: &Lambda2Form, g: &SymmetricOperator2) -> Result<f64> {
    let ric = ricci_trace(form, g)?;
    let g_inv = g.entries().clone().try_inverse().unwrap();
    let mut acc = 0.0;
    for i in 0..g.n() {
        for k in 0..g.n() {
            acc += g_inv[(i, k)] * ric.entries()[(i, k)];
        }
    }
    Ok(acc)
}
