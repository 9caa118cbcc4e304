//! End-to-end acceptance suite.  Each criterion prints one line; run with
//! `cargo test -p curvglue-cli --test acceptance -- --nocapture` to see them.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use curvglue::bounds::{self, CertifyOptions, Functional};
use curvglue::curvature::{
    curvature_operator, curvature_operator_with_flat_factor, isotropic_min, isotropic_value,
    riemann_tensor, FrameSearch, IsotropicVariant,
};
use curvglue::field::{DerivativeSupply, FdConfig, MetricField};
use curvglue::gluing::{
    build_g_delta, check_boundary_inequality, coordinate_spectral_need, GluedMetric,
};
use curvglue::lambda2::{
    induced_gram, kn_product, ricci_trace, symmetrized, Lambda2Basis, Lambda2Form,
    SymmetricOperator2,
};
use curvglue::profile::{build_bump, certify as certify_profile};
use curvglue::scenarios::{self, builtin};

struct Criterion {
    label: &'static str,
    budget_s: f64,
}

fn run_criterion<F: FnOnce()>(c: Criterion, body: F) {
    let started = Instant::now();
    body();
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "criterion {}: PASS in {elapsed:.2}s (budget {}s)",
        c.label, c.budget_s
    );
    assert!(
        elapsed < c.budget_s,
        "criterion {} exceeded its runtime budget: {elapsed:.2}s >= {}s",
        c.label,
        c.budget_s
    );
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let w = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    symmetrized(&(&w * w.transpose() + DMatrix::identity(n, n) * 0.35))
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let w = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    symmetrized(&(&w * w.transpose()))
}

fn criterion_1_algebra() {
    // exact identity of the product normalization
    for n in 2..=4 {
        let id = SymmetricOperator2::identity(n);
        let f = kn_product(&id, &id, &id).unwrap();
        let d = f.basis().dim();
        assert!((f.entries() - DMatrix::<f64>::identity(d, d)).abs().max() == 0.0);
    }
    // PSD closure of the product and of the 2-4 trace, 1000 trials total
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for trial in 0..1000 {
        let n = 2 + trial % 3;
        let g = SymmetricOperator2::new(random_spd(&mut rng, n)).unwrap();
        let a = SymmetricOperator2::new(random_psd(&mut rng, n)).unwrap();
        let b = SymmetricOperator2::new(random_psd(&mut rng, n)).unwrap();
        let f = kn_product(&a, &b, &g).unwrap();
        let min = f.min_eig().unwrap();
        assert!(min >= -1e-10, "kn psd closure failed: {min}");

        let basis = Lambda2Basis::new(n);
        let d = basis.dim();
        let psd = random_psd(&mut rng, d);
        let form = Lambda2Form::new(basis, psd, induced_gram(&g).unwrap()).unwrap();
        let ric = ricci_trace(&form, &g).unwrap();
        let min = ric.eigenvalues_against(&g).unwrap()[0];
        assert!(min >= -1e-10, "trace psd closure failed: {min}");
    }
}

fn sphere2_fd() -> MetricField {
    let domain =
        curvglue::field::ChartDomain::new(vec![[0.3, std::f64::consts::PI - 0.3], [0.0, 2.0]])
            .unwrap();
    MetricField::from_fn(
        domain,
        |x: &[f64]| {
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0].sin().powi(2)]))
        },
        DerivativeSupply::FiniteDifference(FdConfig {
            rel_step: 1e-4,
            richardson: true,
        }),
    )
}

fn criterion_2_curvature_oracles() {
    // Gauss curvature of the unit sphere by stencils with extrapolation
    let s2 = sphere2_fd();
    for x in [[1.2, 0.5], [std::f64::consts::PI / 2.0, 1.0], [2.0, 1.5]] {
        let r = riemann_tensor(&s2, &x).unwrap();
        let g = s2.coeff(&x);
        let k = r.get(0, 1, 0, 1) / (g[(0, 0)] * g[(1, 1)] - g[(0, 1)].powi(2));
        assert!((k - 1.0).abs() <= 1e-6, "gauss curvature {k}");
    }

    // round 3-sphere: curvature operator equals the induced gram
    let s3 = {
        let domain = curvglue::field::ChartDomain::new(vec![
            [0.5, std::f64::consts::PI - 0.5],
            [0.5, std::f64::consts::PI - 0.5],
            [0.0, 2.0],
        ])
        .unwrap();
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
    };
    let f = curvature_operator(&s3, &[1.2, 1.4, 0.8]).unwrap();
    assert!((f.entries() - f.gram()).abs().max() <= 1e-5);

    // flat metrics: zero curvature to high accuracy
    let flat3 = curvglue::field::constant_metric(
        curvglue::field::ChartDomain::new(vec![[0.0, 1.0]; 3]).unwrap(),
        DMatrix::identity(3, 3),
    );
    assert!(riemann_tensor(&flat3, &[0.5, 0.5, 0.5]).unwrap().max_abs() <= 1e-9);
    let polar = {
        // the coefficients are quadratic, so the central stencil is exact
        // and a coarse step keeps the roundoff floor far below the gate
        let domain = curvglue::field::ChartDomain::new(vec![[1.0, 3.0], [0.0, 6.0]]).unwrap();
        MetricField::from_fn(
            domain,
            |x: &[f64]| {
                DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, x[0] * x[0]]))
            },
            DerivativeSupply::FiniteDifference(FdConfig {
                rel_step: 1e-2,
                richardson: false,
            }),
        )
    };
    assert!(riemann_tensor(&polar, &[2.0, 1.0]).unwrap().max_abs() <= 1e-9);

    // isotropic bound of the round 4-sphere, as the distance chart of an
    // equatorial 3-sphere
    let s4 = {
        let pi = std::f64::consts::PI;
        let cfg = format!(
            "name = s4\nn = 4\nwidth = 0.4\n\
             [g0]\ng0[1][1] = cos(xn)^2\ng0[2][2] = cos(xn)^2 * sin(x1)^2\n\
             g0[3][3] = cos(xn)^2 * sin(x1)^2 * sin(x2)^2\n\
             [g1]\ng1[1][1] = cos(xn)^2\ng1[2][2] = cos(xn)^2 * sin(x1)^2\n\
             g1[3][3] = cos(xn)^2 * sin(x1)^2 * sin(x2)^2\n\
             [domain]\nx1 = 0.6, {}\nx2 = 0.6, {}\nx3 = 0.0, 2.0\n\
             [metadata]\nl_spectrum = 0.0, 0.0, 0.0\nsmooth = true\n",
            pi - 0.6,
            pi - 0.6
        );
        let s = scenarios::from_config(&cfg).unwrap();
        s.collar.g0().clone()
    };
    let x4 = [1.2, 1.4, 0.8, 0.1];
    let v = isotropic_min(&s4, &x4, IsotropicVariant::Plain, &FrameSearch::default()).unwrap();
    assert!((v - 4.0).abs() <= 1e-3, "isotropic bound of S4: {v}");

    // cross-check the 2-vector expression for K(P) against the complex
    // contraction R(Z, W, conj Z, conj W) on random frames
    let s2_cfg = "name = s2\nn = 2\nwidth = 0.4\n\
                  [g0]\ng0[1][1] = sin(xn + 1.0)^2\n[g1]\ng1[1][1] = sin(xn + 1.0)^2\n\
                  [metadata]\nl_spectrum = 0.0\nsmooth = true\n";
    let s2a = match scenarios::from_config(s2_cfg) {
        Ok(s) => s.collar.g0().clone(),
        Err(e) => panic!("sphere chart rejected: {e}"),
    };
    let x = [0.4, 0.2];
    let form = curvature_operator_with_flat_factor(&s2a, &x, 2).unwrap();
    let tensor = curvglue::lambda2::tensor_from_form(&form);
    let gm = s2a.coeff(&x);
    let mut big = DMatrix::identity(4, 4);
    big.view_mut((0, 0), (2, 2)).copy_from(&gm);
    let mut rng = ChaCha8Rng::seed_from_u64(7_777);
    let mut checked = 0;
    while checked < 100 {
        let raw = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let Some(q) = orthonormalize(&big, &raw) else {
            continue;
        };
        checked += 1;
        let two_vector = isotropic_value(&form, &q);
        let complex = complex_isotropic(&tensor, &q);
        assert!(
            (two_vector - complex).abs() <= 1e-6,
            "complex oracle mismatch: {two_vector} vs {complex}"
        );
    }
}

/// K(P) = R(Z, W, conj Z, conj W) with Z = X + iY, W = U + iV, evaluated by
/// direct complex contraction of the (0,4)-tensor.
fn complex_isotropic(t: &curvglue::tensor::Tensor4, frame: &DMatrix<f64>) -> f64 {
    let m = t.n();
    let (x, y, u, v) = (
        frame.column(0),
        frame.column(1),
        frame.column(2),
        frame.column(3),
    );
    let mut re = 0.0;
    let mut im = 0.0;
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let tv = t.get(a, b, c, d);
                    if tv == 0.0 {
                        continue;
                    }
                    // (x+iy)^a (u+iv)^b (x-iy)^c (u-iv)^d
                    let (r1, i1) = (x[a], y[a]);
                    let (r2, i2) = (u[b], v[b]);
                    let (r3, i3) = (x[c], -y[c]);
                    let (r4, i4) = (u[d], -v[d]);
                    let (p1r, p1i) = (r1 * r2 - i1 * i2, r1 * i2 + i1 * r2);
                    let (p2r, p2i) = (r3 * r4 - i3 * i4, r3 * i4 + i3 * r4);
                    re += tv * (p1r * p2r - p1i * p2i);
                    im += tv * (p1r * p2i + p1i * p2r);
                }
            }
        }
    }
    assert!(im.abs() < 1e-9, "isotropic contraction not real: {im}");
    re
}

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
        if norm < 1e-6 {
            return None;
        }
        q.set_column(c, &(v / norm));
    }
    Some(q)
}

fn criterion_3_bump() {
    for delta in [0.4, 0.2, 0.1] {
        let p = build_bump(delta, 0.05).unwrap();
        let report = certify_profile(&p, 10_000);
        assert!(
            report.max_violation() <= 1e-10,
            "delta {delta}: violations {:?}",
            report.rows()
        );
    }
}

fn criterion_4_regularity() {
    for name in scenarios::BUILTIN_NAMES {
        let s = builtin(name).unwrap();
        for delta in [0.4_f64, 0.2, 0.1] {
            if delta > s.collar.width() {
                continue;
            }
            let profile = build_bump(delta, 0.05).unwrap();
            let c = curvglue::gluing::choose_c(&s.collar).unwrap();
            let glued = GluedMetric::new(build_g_delta(&s.collar, &profile, c).unwrap());
            for xhat in s.collar.gamma_samples(2) {
                let (c_jump, d_jump) = glued.interface_jumps(&xhat).unwrap();
                assert!(
                    c_jump <= 1e-10,
                    "{name} delta {delta}: coefficient jump {c_jump}"
                );
                assert!(
                    d_jump <= 1e-8,
                    "{name} delta {delta}: first-derivative jump {d_jump}"
                );
            }
        }
    }
}

fn criterion_5_decomposition() {
    for name in scenarios::BUILTIN_NAMES {
        let s = builtin(name).unwrap();
        // the positive constant of the coordinate pencil exercises every
        // term of the expansion, including the projector one
        let c = coordinate_spectral_need(&s.collar).unwrap().max(0.0) + 1.0;
        let mut mid_residuals = Vec::new();
        for delta in [0.4_f64, 0.2, 0.1] {
            let profile = build_bump(delta, 0.05).unwrap();
            let modified = build_g_delta(&s.collar, &profile, c).unwrap();
            let mut interface_worst = 0.0_f64;
            for xhat in s.collar.gamma_samples(2) {
                let x = s.collar.on_gamma(&xhat);
                let out = modified.assemble_decomposition(&x).unwrap();
                interface_worst = interface_worst.max(out.residual);
            }
            assert!(
                interface_worst <= 1e-4,
                "{name} delta {delta}: interface residual {interface_worst}"
            );
            let mut x = s.collar.gamma_samples(1)[0].clone();
            x.push(delta / 2.0);
            mid_residuals.push(modified.assemble_decomposition(&x).unwrap().residual);
        }
        assert!(
            mid_residuals.windows(2).all(|w| w[1] < w[0]),
            "{name}: half-depth residuals not strictly decreasing: {mid_residuals:?}"
        );
    }
}

fn criterion_6_boundary_identity() {
    let disk = builtin("doubled-disk-2d").unwrap();
    let report = check_boundary_inequality(&disk.collar, 0.0).unwrap();
    assert!(
        report.identity_error <= 1e-4,
        "disk identity error {}",
        report.identity_error
    );
    assert!(report.min_slack >= -1e-5, "disk slack {}", report.min_slack);

    let hemi = builtin("doubled-hemisphere-2d").unwrap();
    let report = check_boundary_inequality(&hemi.collar, 1.0).unwrap();
    assert!(
        report.identity_error <= 1e-4,
        "hemisphere identity error {}",
        report.identity_error
    );
    assert!(
        report.min_slack >= -1e-5,
        "hemisphere slack {}",
        report.min_slack
    );
}

fn criterion_7_main_theorem() {
    let opts = CertifyOptions::default();
    for (name, smooth_control) in [
        ("doubled-disk-2d", false),
        ("doubled-ball-3d", false),
        ("doubled-hemisphere-3d", true),
        ("cap-on-disk-2d", false),
    ] {
        let s = builtin(name).unwrap();
        let res = bounds::certify(&s, Functional::Operator, &opts).unwrap();
        assert!(
            res.passed,
            "{name}: eps {:?}, sup {:?}",
            res.rows.iter().map(|r| r.eps_observed).collect::<Vec<_>>(),
            res.rows.iter().map(|r| r.sup_dist).collect::<Vec<_>>()
        );
        if smooth_control {
            for row in &res.rows {
                assert!(
                    row.eps_observed <= 5e-3,
                    "{name} delta {}: smooth control eps {}",
                    row.delta,
                    row.eps_observed
                );
            }
        }
    }
}

fn criterion_8_variants() {
    let ball = builtin("doubled-ball-3d").unwrap();
    let opts = CertifyOptions::default();
    for f in [
        Functional::Ricci,
        Functional::Scalar,
        Functional::Bi,
        Functional::Flag,
    ] {
        let res = bounds::certify(&ball, f, &opts).unwrap();
        assert!(
            res.passed,
            "ball-3d {f}: eps {:?}",
            res.rows.iter().map(|r| r.eps_observed).collect::<Vec<_>>()
        );
    }

    let disk = builtin("doubled-disk-2d").unwrap();
    let res = bounds::certify(&disk, Functional::Isotropic2, &opts).unwrap();
    assert!(res.passed, "disk isotropic2 failed");

    // indefinite interface form with nonnegative trace: scalar passes via
    // the mean-curvature bending, operator is refused with exit code 3
    let cfg = "name = mixed-bend-3d\nn = 3\nwidth = 0.4\n\
               [g0]\ng0[1][1] = exp(-1.2 * xn)\ng0[2][2] = exp(1.0 * xn)\n\
               [g1]\ng1[1][1] = exp(1.2 * xn)\ng1[2][2] = exp(-1.0 * xn)\n\
               [metadata]\nkappa.scalar = -2.0\nl_spectrum = -1.0, 1.2\nsmooth = false\n";
    let mixed = scenarios::from_config(cfg).unwrap();
    let res = bounds::certify(&mixed, Functional::Scalar, &opts).unwrap();
    assert!(
        res.passed,
        "mixed-bend scalar: eps {:?}",
        res.rows.iter().map(|r| r.eps_observed).collect::<Vec<_>>()
    );
    match bounds::certify(&mixed, Functional::Operator, &opts) {
        Err(curvglue::Error::Hypothesis { value, .. }) => assert!(value < 0.0),
        other => panic!("expected hypothesis refusal, got {other:?}"),
    }
    // and through the process interface
    let dir = std::env::temp_dir().join("curvglue-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("mixed-bend.scn");
    std::fs::write(&cfg_path, cfg).unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_curvglue"))
        .args([
            "certify",
            "--config",
            cfg_path.to_str().unwrap(),
            "--functional",
            "operator",
            "--deltas",
            "0.4,0.2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "refusal must exit 3");
}

fn criterion_9_determinism() {
    let opts = CertifyOptions {
        deltas: vec![0.4, 0.2],
        ..Default::default()
    };
    let s = builtin("doubled-disk-2d").unwrap();
    let a = bounds::certify(&s, Functional::Operator, &opts)
        .unwrap()
        .to_csv(None);
    let b = bounds::certify(&s, Functional::Operator, &opts)
        .unwrap()
        .to_csv(None);
    assert_eq!(a, b, "in-process sweeps differ");

    // byte-for-byte through the binary
    let dir = std::env::temp_dir().join("curvglue-acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let path = dir.join(format!("determinism-{run}.csv"));
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_curvglue"))
            .args([
                "certify",
                "--scenario",
                "doubled-disk-2d",
                "--functional",
                "operator",
                "--deltas",
                "0.4,0.2",
                "--hs",
                "auto",
                "--c",
                "auto",
                "--seed",
                "42",
                "--out",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "binary CSV outputs differ");
    assert_eq!(outputs[0], a.as_bytes(), "binary and library CSV differ");
}

#[test]
fn acceptance() {
    run_criterion(
        Criterion {
            label: "1 (algebra suite)",
            budget_s: 5.0,
        },
        criterion_1_algebra,
    );
    run_criterion(
        Criterion {
            label: "2 (curvature oracles)",
            budget_s: 30.0,
        },
        criterion_2_curvature_oracles,
    );
    run_criterion(
        Criterion {
            label: "3 (transition profile)",
            budget_s: 1.0,
        },
        criterion_3_bump,
    );
    run_criterion(
        Criterion {
            label: "4 (gluing regularity)",
            budget_s: 10.0,
        },
        criterion_4_regularity,
    );
    run_criterion(
        Criterion {
            label: "5 (decomposition residual)",
            budget_s: 60.0,
        },
        criterion_5_decomposition,
    );
    run_criterion(
        Criterion {
            label: "6 (interface identity)",
            budget_s: 10.0,
        },
        criterion_6_boundary_identity,
    );
    run_criterion(
        Criterion {
            label: "7 (main bound, desk scale)",
            budget_s: 300.0,
        },
        criterion_7_main_theorem,
    );
    run_criterion(
        Criterion {
            label: "8 (variant functionals)",
            budget_s: 300.0,
        },
        criterion_8_variants,
    );
    run_criterion(
        Criterion {
            label: "9 (determinism)",
            budget_s: 120.0,
        },
        criterion_9_determinism,
    );
}
