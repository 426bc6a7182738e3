//! Globally adaptive Gauss–Kronrod (7/15) integration on finite intervals.
//!
//! The collision kernels are piecewise smooth with kinks where two of
//! √E1, √E2, √E3, √E4 cross, so callers pass those points as breakpoints.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
/// Gauss weights at the odd Kronrod abscissae XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Tolerance {
            abs,
            rel: 0.0,
            max_intervals: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrate `f` over [points[0], points.last()], splitting at every interior point.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
    if pts.len() < 2 {
        return Err(Error::domain(
            "integrate",
            "need at least two finite endpoints",
        ));
    }
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    if !(hi >= lo) {
        return Err(Error::domain(
            "integrate",
            format!("reversed interval [{lo}, {hi}]"),
        ));
    }
    pts.retain(|&p| p >= lo && p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    // (a, b, value, error)
    let mut pieces: Vec<(f64, f64, f64, f64)> = pts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();

    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::Consistency("non-finite integrand".into()));
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Estimate {
                value,
                error,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= tol.max_intervals {
            return Err(Error::Consistency(format!(
                "quadrature did not reach tolerance {:.1e} (error estimate {error:.3e})",
                tol.abs
            )));
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = pieces.swap_remove(worst);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Err(Error::Consistency("quadrature interval underflow".into()));
        }
        let (v1, e1) = gk15(&f, a, m);
        let (v2, e2) = gk15(&f, m, b);
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_with_breaks(f, &[a, b], tol)
}
