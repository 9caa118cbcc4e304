//! The auxiliary ramp-and-well function family used to modify the metric
//! near the interface.
//!
//! For a gluing parameter δ the profile f is 1 - x/δ⁴ on [0, δ⁴] up to a C²
//! junction blend, a shallow nonpositive well on [δ⁴, δ] and zero beyond δ,
//! with total integral zero.  F and 𝓕 are its running first and second
//! antiderivatives.  All three are piecewise polynomials, so values and the
//! antiderivatives are exact.

use crate::error::{Error, Result};

/// One polynomial piece on [x0, x1] with coefficients in the normalized
/// variable s = (x - x0)/(x1 - x0), which keeps evaluation well conditioned
/// even for very short stiff pieces.
#[derive(Debug, Clone)]
struct Piece {
    x0: f64,
    x1: f64,
    coeffs: Vec<f64>,
}

impl Piece {
    fn len(&self) -> f64 {
        self.x1 - self.x0
    }

    fn coeff_scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()))
    }

    fn eval(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.len();
        let mut acc = 0.0;
        for &c in self.coeffs.iter().rev() {
            acc = acc * s + c;
        }
        acc
    }

    fn derivative(&self) -> Piece {
        let len = self.len();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * k as f64 / len)
            .collect();
        Piece {
            x0: self.x0,
            x1: self.x1,
            coeffs,
        }
    }

    fn antiderivative(&self, value_at_x0: f64) -> Piece {
        let len = self.len();
        let mut coeffs = vec![value_at_x0];
        for (k, &c) in self.coeffs.iter().enumerate() {
            coeffs.push(c * len / (k as f64 + 1.0));
        }
        Piece {
            x0: self.x0,
            x1: self.x1,
            coeffs,
        }
    }
}

/// Piecewise polynomial on [0, ∞) with a constant tail.
#[derive(Debug, Clone)]
pub struct PiecewisePoly {
    pieces: Vec<Piece>,
    tail: f64,
}

impl PiecewisePoly {
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return self.pieces[0].eval(0.0);
        }
        for p in &self.pieces {
            if x <= p.x1 {
                return p.eval(x);
            }
        }
        self.tail
    }

    pub fn derivative(&self) -> PiecewisePoly {
        PiecewisePoly {
            pieces: self.pieces.iter().map(|p| p.derivative()).collect(),
            tail: 0.0,
        }
    }

    pub fn antiderivative(&self) -> PiecewisePoly {
        let mut pieces = Vec::with_capacity(self.pieces.len());
        let mut running = 0.0;
        for p in &self.pieces {
            let ap = p.antiderivative(running);
            running = ap.eval(p.x1);
            pieces.push(ap);
        }
        PiecewisePoly {
            pieces,
            tail: running,
        }
    }

    /// Endpoint of the last polynomial piece.
    pub fn support_end(&self) -> f64 {
        self.pieces.last().map(|p| p.x1).unwrap_or(0.0)
    }

    /// Piece boundaries, including 0 and the support end.
    pub fn knots(&self) -> Vec<f64> {
        let mut ks: Vec<f64> = self.pieces.iter().map(|p| p.x0).collect();
        ks.push(self.support_end());
        ks
    }

    /// Max mismatch of value, slope and curvature between adjacent pieces,
    /// each relative to the magnitude the derivative attains on the pieces.
    /// Zero for a C² function up to roundoff.
    pub fn junction_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for w in self.pieces.windows(2) {
            let (left, right) = (&w[0], &w[1]);
            let mut l = left.clone();
            let mut r = right.clone();
            for _ in 0..3 {
                let lv = l.eval(left.x1);
                let rv = r.eval(right.x0);
                let scale = l.coeff_scale().max(r.coeff_scale()).max(1.0);
                worst = worst.max((lv - rv).abs() / scale);
                l = l.derivative();
                r = r.derivative();
            }
        }
        // trailing junction against the constant tail
        if let Some(last) = self.pieces.last() {
            let lv = last.eval(last.x1);
            worst = worst.max((lv - self.tail).abs() / lv.abs().max(1.0));
        }
        worst
    }
}

/// Quintic smoothstep, C² with flat ends: s(0)=0, s(1)=1, s'=s''=0 at both.
fn smoothstep_coeffs() -> [f64; 6] {
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0]
}

/// Largest slope of the quintic smoothstep, attained at the midpoint.
const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

/// Transition profile for the metric modification: f together with its
/// antiderivatives F(x) = ∫₀ˣ f and 𝓕(x) = ∫₀ˣ F.
#[derive(Debug, Clone)]
pub struct BumpProfile {
    pub delta: f64,
    pub blend_width: f64,
    /// Well amplitude fixed by the zero-integral constraint.
    pub amplitude: f64,
    f: PiecewisePoly,
    f_prime: PiecewisePoly,
    big_f: PiecewisePoly,
    big_ff: PiecewisePoly,
}

impl BumpProfile {
    pub fn f(&self, x: f64) -> f64 {
        self.f.eval(x)
    }

    pub fn f_prime(&self, x: f64) -> f64 {
        self.f_prime.eval(x)
    }

    /// F(x) = ∫₀ˣ f(t) dt, exact piecewise antiderivative.
    pub fn big_f(&self, x: f64) -> f64 {
        self.big_f.eval(x)
    }

    /// 𝓕(x) = ∫₀ˣ F(t) dt; constant for x ≥ δ because F(δ) = 0.
    pub fn big_ff(&self, x: f64) -> f64 {
        self.big_ff.eval(x)
    }

    /// Piece boundaries of f.
    pub fn knots(&self) -> Vec<f64> {
        self.f.knots()
    }

    /// CSV dump (x, f, F, FF) with `rows` sample points on [0, 1.2 δ].
    pub fn dump_csv(&self, rows: usize) -> String {
        let mut out = String::from("x,f,F,FF\n");
        let top = 1.2 * self.delta;
        for i in 0..rows {
            let x = top * i as f64 / (rows - 1) as f64;
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                x,
                self.f(x),
                self.big_f(x),
                self.big_ff(x)
            ));
        }
        out
    }
}

/// Maximum over a constraint of how far the profile violates it.
#[derive(Debug, Clone)]
pub struct ProfileReport {
    pub ramp_formula: f64,
    pub well_upper: f64,
    pub well_lower: f64,
    pub slope_bound: f64,
    pub zero_tail: f64,
    pub integral: f64,
    pub junction_continuity: f64,
    pub big_f_nonneg: f64,
    pub big_f_peak_error: f64,
    pub big_ff_bound: f64,
}

impl ProfileReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.ramp_formula,
            self.well_upper,
            self.well_lower,
            self.slope_bound,
            self.zero_tail,
            self.integral,
            self.junction_continuity,
            self.big_f_nonneg,
            self.big_ff_bound,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("ramp_formula", self.ramp_formula),
            ("well_upper", self.well_upper),
            ("well_lower", self.well_lower),
            ("slope_bound", self.slope_bound),
            ("zero_tail", self.zero_tail),
            ("integral", self.integral),
            ("junction_continuity", self.junction_continuity),
            ("big_f_nonneg", self.big_f_nonneg),
            ("big_f_peak_error", self.big_f_peak_error),
            ("big_ff_bound", self.big_ff_bound),
        ]
    }
}

/// Builds the profile for a given δ.  The well amplitude comes from a
/// closed-form quadratic solve of the zero-integral constraint, with the
/// rise width tied to the slope cap; infeasible combinations are rejected
/// with the violated inequality.
pub fn build_bump(delta: f64, blend_width: f64) -> Result<BumpProfile> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::DeltaOutOfRange { delta });
    }
    let w = blend_width;
    if !(0.0 < w && w < 0.5) {
        return Err(Error::Invalid(format!(
            "blend width {w} outside (0, 0.5)"
        )));
    }
    let d4 = delta.powi(4);
    let a = (1.0 - w) * d4; // ramp end
    let b = (1.0 + w) * d4; // well start

    // positive area: ramp triangle plus the blend correction, closed form
    let ramp_area = d4 * (1.0 - w * w) / 2.0;
    let blend_len = 2.0 * w * d4;
    // quintic Hermite from (w, -1/δ⁴, 0) down to (0, 0, 0)
    let blend = hermite_quintic(a, b, w, -1.0 / d4, 0.0, 0.0, 0.0, 0.0);
    let blend_area = blend.antiderivative(0.0).eval(b);
    let positive_area = ramp_area + blend_area;
    debug_assert!(blend_len > 0.0);

    // Well on [b, δ]: fall, plateau at -A, rise, with the rise width set by
    // the slope cap f' ≤ δ (at 99.5 % of it) and the fall capped at 5 % of
    // the well.  Area(A) = A (width - (w_f + w_r)/2) is quadratic in A.
    let well_width = delta - b;
    if well_width <= 0.0 {
        return Err(Error::InfeasibleDelta {
            delta,
            need: positive_area,
            capacity: 0.0,
        });
    }
    let mu = SMOOTHSTEP_MAX_SLOPE / 0.995; // w_r = mu * A / δ
    let wf_frac = 0.05;

    let area_for = |amp: f64| -> Option<(f64, f64, f64)> {
        let w_r = mu * amp / delta;
        let w_f = (w_r).min(wf_frac * well_width);
        let plateau = well_width - w_f - w_r;
        if plateau < -1e-12 * well_width {
            return None;
        }
        Some((amp * (well_width - 0.5 * (w_f + w_r)), w_f, w_r))
    };

    // capacity at the largest amplitude with nonnegative plateau
    // w_f saturates at wf_frac for any relevant amplitude; solve
    // well_width - wf_frac*well_width - mu A / δ = 0
    let amp_max = (1.0 - wf_frac) * well_width * delta / mu;
    let capacity = area_for(amp_max).map(|t| t.0).unwrap_or(0.0);
    if capacity < positive_area {
        return Err(Error::InfeasibleDelta {
            delta,
            need: positive_area,
            capacity,
        });
    }

    // bisection on the monotone area function
    let mut lo = 0.0;
    let mut hi = amp_max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let area = area_for(mid).map(|t| t.0).unwrap_or(f64::INFINITY);
        if area < positive_area {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let amplitude = 0.5 * (lo + hi);
    let (_, w_f, w_r) = area_for(amplitude).unwrap();

    // assemble the pieces
    let ramp = Piece {
        x0: 0.0,
        x1: a,
        coeffs: vec![1.0, -a / d4],
    };
    let fall = scaled_smoothstep(b, b + w_f, 0.0, -amplitude);
    let rise = scaled_smoothstep(delta - w_r, delta, -amplitude, 0.0);
    let mut pieces = vec![ramp, blend, fall];
    if delta - w_r > b + w_f + 1e-18 {
        pieces.push(Piece {
            x0: b + w_f,
            x1: delta - w_r,
            coeffs: vec![-amplitude],
        });
    }
    pieces.push(rise);

    let f = PiecewisePoly {
        pieces,
        tail: 0.0,
    };
    let f_prime = f.derivative();
    let big_f = f.antiderivative();
    let big_ff = big_f.antiderivative();

    let profile = BumpProfile {
        delta,
        blend_width: w,
        amplitude,
        f,
        f_prime,
        big_f,
        big_ff,
    };
    debug_assert!(profile.amplitude <= delta.powi(3) * 1.5);
    Ok(profile)
}

/// Quintic Hermite piece on [x0, x1] matching value, slope and curvature at
/// both ends.
#[allow(clippy::too_many_arguments)]
fn hermite_quintic(
    x0: f64,
    x1: f64,
    p0: f64,
    dp0: f64,
    ddp0: f64,
    p1: f64,
    dp1: f64,
    ddp1: f64,
) -> Piece {
    let h = x1 - x0;
    // coefficients of q(s) on [0,1] with q(0)=p0, q'(0)=dp0*h, q''(0)=ddp0*h², etc.
    let m0 = dp0 * h;
    let m1 = dp1 * h;
    let c0 = ddp0 * h * h;
    let c1 = ddp1 * h * h;
    let a0 = p0;
    let a1 = m0;
    let a2 = 0.5 * c0;
    let a3 = 10.0 * (p1 - p0) - 6.0 * m0 - 4.0 * m1 - 1.5 * c0 + 0.5 * c1;
    let a4 = -15.0 * (p1 - p0) + 8.0 * m0 + 7.0 * m1 + 1.5 * c0 - c1;
    let a5 = 6.0 * (p1 - p0) - 3.0 * (m0 + m1) - 0.5 * (c0 - c1);
    Piece {
        x0,
        x1,
        coeffs: vec![a0, a1, a2, a3, a4, a5],
    }
}

/// Smoothstep from `v0` at x0 to `v1` at x1 with flat C² ends.
fn scaled_smoothstep(x0: f64, x1: f64, v0: f64, v1: f64) -> Piece {
    let base = smoothstep_coeffs();
    let mut coeffs: Vec<f64> = base.iter().map(|&c| (v1 - v0) * c).collect();
    coeffs[0] += v0;
    Piece { x0, x1, coeffs }
}

/// Samples every defining constraint and reports the worst violation of
/// each; zero means satisfied.
pub fn certify(profile: &BumpProfile, samples: usize) -> ProfileReport {
    let delta = profile.delta;
    let d4 = delta.powi(4);
    let w = profile.blend_width;
    let a = (1.0 - w) * d4;
    let b = (1.0 + w) * d4;

    let mut ramp_formula: f64 = 0.0;
    let mut well_upper: f64 = 0.0;
    let mut well_lower: f64 = 0.0;
    let mut slope_bound: f64 = 0.0;
    let mut zero_tail: f64 = 0.0;
    let mut big_f_nonneg: f64 = 0.0;
    let mut big_ff_bound: f64 = 0.0;

    let top = 1.5 * delta;
    for i in 0..=samples {
        let x = top * i as f64 / samples as f64;
        let fx = profile.f(x);
        if x <= a {
            ramp_formula = ramp_formula.max((fx - (1.0 - x / d4)).abs());
        }
        if x >= b && x <= delta {
            well_upper = well_upper.max(fx); // f ≤ 0
            well_lower = well_lower.max(-delta * delta - fx).max(0.0); // f ≥ -δ²
            slope_bound = slope_bound.max(profile.f_prime(x) - delta).max(0.0);
        }
        if x >= delta {
            zero_tail = zero_tail.max(fx.abs());
        }
        if x <= delta {
            big_f_nonneg = big_f_nonneg.max(-profile.big_f(x)).max(0.0);
        }
        big_ff_bound = big_ff_bound
            .max(profile.big_ff(x).abs() - d4 * delta / 2.0)
            .max(0.0);
    }
    well_upper = well_upper.max(0.0);

    // exact piecewise checks
    let integral = profile.big_f(delta).abs();
    let junction_continuity = profile.f.junction_mismatch();

    // F peaks at the end of the ramp with value ≈ δ⁴/2 (triangle area)
    let big_f_peak_error = (profile.big_f(d4) - d4 / 2.0).abs();

    ProfileReport {
        ramp_formula,
        well_upper,
        well_lower,
        slope_bound,
        zero_tail,
        integral,
        junction_continuity,
        big_f_nonneg,
        big_f_peak_error,
        big_ff_bound,
    }
}
