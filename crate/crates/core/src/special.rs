//! Exponential integral E₁ for real and complex argument, and the
//! cell-integrated slab kernel built from its antiderivative.
//!
//! Integrating the point propagator over the transverse plane leaves the
//! depth kernel (1/2)·E₁(μ|z − z′|), which has a log singularity at
//! z = z′. Grid matrices therefore use exact cell integrals of E₁(μt).

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// |w| below which the power series is used.
const SERIES_RADIUS: f64 = 2.0;
const MAX_TERMS: usize = 5000;
const TINY: f64 = 1e-300;

/// Decay rate μ of a two-amplitude propagator; depth kernel is E₁(μ|Δz|).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRate(Complex64);

impl DecayRate {
    /// Ladder propagation: both amplitudes carry the same energy.
    pub const LADDER: DecayRate = DecayRate(Complex64 { re: 1.0, im: 0.0 });

    pub fn new(mu: Complex64) -> Result<Self> {
        if mu.re > 0.0 && mu.im.is_finite() {
            Ok(DecayRate(mu))
        } else {
            Err(Error::domain(
                "DecayRate::new",
                format!("Re(mu) must be positive, got {mu}"),
            ))
        }
    }

    /// Counter-propagating pair with energies `e` and `e_tilde` (units of E_i):
    /// μ = 1 − i·kℓ·(√e − √ẽ).
    pub fn crossed(k_ell: f64, e: f64, e_tilde: f64) -> Result<Self> {
        if e < 0.0 || e_tilde < 0.0 {
            return Err(Error::domain(
                "DecayRate::crossed",
                format!("energies must be non-negative, got E = {e}, Ẽ = {e_tilde}"),
            ));
        }
        Self::new(Complex64::new(1.0, -k_ell * (e.sqrt() - e_tilde.sqrt())))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// E₁(x) = ∫ₓ^∞ e^(−t)/t dt for real x > 0.
pub fn e1_real(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(
            "e1_real",
            format!("argument must be positive and finite, got {x}"),
        ));
    }
    Ok(if x <= SERIES_RADIUS {
        e1_series_real(x)
    } else {
        e1_cf_real(x)
    })
}

/// Analytic continuation of E₁ to the open right half-plane.
pub fn e1_complex(w: Complex64) -> Result<Complex64> {
    if !(w.re > 0.0) || !w.im.is_finite() || !w.re.is_finite() {
        return Err(Error::domain(
            "e1_complex",
            format!("Re(w) must be positive, got {w}"),
        ));
    }
    if w.im == 0.0 {
        return e1_real(w.re).map(Complex64::from);
    }
    Ok(if w.norm() <= SERIES_RADIUS {
        e1_series(w)
    } else {
        e1_cf(w)
    })
}

/// E₂(x) = e^(−x) − x·E₁(x), with E₂(0) = 1. Escape probability weight of a slab layer.
pub fn e2_real(x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < 0.0 {
        return Err(Error::domain(
            "e2_real",
            format!("argument must be non-negative, got {x}"),
        ));
    }
    if x > 700.0 {
        return Ok(0.0);
    }
    Ok((-x).exp() - x * e1_real(x)?)
}

/// ∫ₐᵇ E₁(μt) dt through the antiderivative F(t) = t·E₁(μt) − e^(−μt)/μ.
pub fn cell_integrated_e1(mu: DecayRate, a: f64, b: f64) -> Result<Complex64> {
    if !(a >= 0.0) || !(b > a) {
        return Err(Error::domain(
            "cell_integrated_e1",
            format!("need 0 <= a < b, got a = {a}, b = {b}"),
        ));
    }
    Ok(antiderivative(mu, b) - antiderivative(mu, a))
}

/// F(t) − F(0) = t·E₁(μt) + (1 − e^(−μt))/μ; written with expm1 so small t
/// does not cancel. Infinite t gives the total weight 1/μ.
pub(crate) fn antiderivative(mu: DecayRate, t: f64) -> Complex64 {
    let mu = mu.0;
    if t == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if t.is_infinite() {
        return mu.inv();
    }
    let w = mu * t;
    let e1 = if w.re > 700.0 {
        Complex64::new(0.0, 0.0)
    } else {
        e1_unchecked(w)
    };
    t * e1 - expm1_complex(-w) / mu
}

fn e1_unchecked(w: Complex64) -> Complex64 {
    if w.im == 0.0 {
        Complex64::from(if w.re <= SERIES_RADIUS {
            e1_series_real(w.re)
        } else {
            e1_cf_real(w.re)
        })
    } else if w.norm() <= SERIES_RADIUS {
        e1_series(w)
    } else {
        e1_cf(w)
    }
}

fn expm1_complex(w: Complex64) -> Complex64 {
    if w.norm() < 1e-5 {
        // e^w − 1 = w + w²/2 + w³/6 + ...
        return w * (1.0 + w * (0.5 + w / 6.0));
    }
    // Keep the real-part cancellation exact for small Re w.
    let (s, c) = w.im.sin_cos();
    let em = w.re.exp_m1();
    Complex64::new(em * c - 2.0 * (0.5 * w.im).sin().powi(2), (em + 1.0) * s)
}

fn e1_series_real(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        term *= -x / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn e1_series(w: Complex64) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        term *= -w / kf;
        let add = term / kf;
        sum += add;
        if add.norm() < 1e-17 * sum.norm().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - w.ln() - sum
}

/// Modified Lentz evaluation of e^(−w)/(w + 1 − 1²/(w + 3 − 2²/(w + 5 − ...))).
fn e1_cf_real(x: f64) -> f64 {
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -((i * i) as f64);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h * (-x).exp()
}

fn e1_cf(w: Complex64) -> Complex64 {
    // Complex inversion squares magnitudes, so the guard must stay well inside range.
    const TINY: f64 = 1e-150;
    let tiny = Complex64::new(TINY, 0.0);
    let mut b = w + 1.0;
    let mut c = tiny.inv();
    let mut d = b.inv();
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -((i * i) as f64);
        b += 2.0;
        d = d * an + b;
        if d.norm() < TINY {
            d = tiny;
        }
        c = b + c.inv() * an;
        if c.norm() < TINY {
            c = tiny;
        }
        d = d.inv();
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-15 {
            break;
        }
    }
    h * (-w).exp()
}
