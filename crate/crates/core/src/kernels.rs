//! s-wave collision kernels for ladder (g, f) and crossed (g^C, h^C, f^C)
//! transport, their conservation oracles, and the precomputed ladder tables.
//!
//! Units: E_i = 1, ℓ_dis = 1, densities in units of the incident density,
//! which removes every ρ₀ factor from the closed forms.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::EnergyGrid;
use crate::quadrature::{integrate_with_breaks, Tolerance};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractionParams {
    /// ℓ_dis/ℓ_int, drives inelastic collisions.
    pub alpha: f64,
    /// Mean-field (Gross–Pitaevskii) coupling of the crossed channel.
    pub beta: f64,
    /// ℓ_dis·√E_i.
    pub k_ell: f64,
}

impl InteractionParams {
    pub fn new(alpha: f64, beta: f64, k_ell: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
        }
        if !(k_ell > 1.0 && k_ell.is_finite()) {
            return Err(Error::Config(format!(
                "k_ell must exceed 1 (weak disorder), got {k_ell}"
            )));
        }
        if alpha > 0.0 && beta > 0.0 && beta <= alpha {
            return Err(Error::Config(format!(
                "s-wave regime needs beta > alpha when both are nonzero, got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(InteractionParams { alpha, beta, k_ell })
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        InteractionParams { alpha, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        InteractionParams { beta, ..self }
    }
}

fn positive(func: &'static str, energies: &[f64]) -> Result<()> {
    if energies.iter().all(|&e| e > 0.0 && e.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(
            func,
            format!("energies must be positive, got {energies:?}"),
        ))
    }
}

fn cubic(s1: f64, s2: f64) -> f64 {
    (s1 + s2).powi(3) - (s1 - s2).abs().powi(3)
}

#[inline]
fn ladder_g_raw(e1: f64, e2: f64, alpha: f64) -> f64 {
    let (s1, s2) = (e1.sqrt(), e2.sqrt());
    -alpha / (6.0 * s1 * e2) * cubic(s1, s2)
}

#[inline]
fn ladder_f_raw(e1: f64, e2: f64, e3: f64, alpha: f64) -> f64 {
    let e4 = e1 + e2 - e3;
    if e4 <= 0.0 {
        return 0.0;
    }
    let m = e1.min(e2).min(e3).min(e4).sqrt();
    alpha * m / (e1 * e2 * e3).sqrt()
}

/// Loss rate of particles at `e2` through collisions with partners at `e1`. Never positive.
pub fn ladder_g(e1: f64, e2: f64, p: &InteractionParams) -> Result<f64> {
    positive("ladder_g", &[e1, e2])?;
    Ok(ladder_g_raw(e1, e2, p.alpha))
}

/// Gain at `e3` from a pair (`e1`, `e2`); vanishes once `e3 >= e1 + e2`.
pub fn ladder_f(e1: f64, e2: f64, e3: f64, p: &InteractionParams) -> Result<f64> {
    positive("ladder_f", &[e1, e2, e3])?;
    Ok(ladder_f_raw(e1, e2, e3, p.alpha))
}

/// Crossed loss term. Real by construction (−2·Re of the complex amplitude).
/// Zero when the partner of `e2` would need negative energy.
pub fn crossed_g(e1: f64, e2: f64, e_d: f64, p: &InteractionParams) -> Result<f64> {
    positive("crossed_g", &[e1, e2])?;
    let t2 = 1.0 + e_d - e2;
    if t2 < 0.0 {
        return Ok(0.0);
    }
    Ok(crossed_g_raw(e1, e2, t2, p))
}

#[inline]
fn crossed_g_raw(e1: f64, e2: f64, t2: f64, p: &InteractionParams) -> f64 {
    let (s1, s2) = (e1.sqrt(), e2.sqrt());
    let num = Complex64::new(p.alpha * cubic(s1, s2) / (12.0 * s1 * s2), p.beta);
    let den = Complex64::new(1.0, -p.k_ell * (s2 - t2.sqrt()));
    -2.0 / s2 * (num / (den * den)).re
}

/// Crossed exchange vertex coupling a ladder density to the crossed density.
pub fn crossed_h(e1: f64, e2: f64, e_d: f64, p: &InteractionParams) -> Complex64 {
    let d = 1.0 + e_d;
    let (t1, t2) = (d - e1, d - e2);
    if e1 < 0.0 || e2 < 0.0 || t1 < 0.0 || t2 < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let num = Complex64::new(-p.alpha * (2.0 * d).sqrt(), -2.0 * p.beta);
    let d2 = Complex64::new(1.0, -p.k_ell * (e2.sqrt() - t2.sqrt()));
    let d1 = Complex64::new(e1.sqrt() + t1.sqrt(), -p.k_ell * (e1 - t1));
    num / (d1 * d2)
}

#[inline]
fn phase_term(k: f64) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(k.abs(), 2.0 * k * k.abs().ln() / PI)
}

/// Crossed inelastic gain: the 16-term sum over sign patterns of the four
/// momenta, dressed by the dephasing of the (E2, Ẽ2) and (E3, Ẽ3) pairs.
pub fn crossed_f(e1: f64, e2: f64, e3: f64, e_d: f64, p: &InteractionParams) -> Complex64 {
    let d = 1.0 + e_d;
    let (t2, t3, e4) = (d - e2, d - e3, e1 + e2 - e3);
    if p.alpha == 0.0 || e1 <= 0.0 || e2 <= 0.0 || e3 <= 0.0 || t2 < 0.0 || t3 < 0.0 || e4 < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let s1 = e1.sqrt();
    let pre = crossed_f_prefactor(s1, e2, t2, e3, t3, p);
    pre * crossed_f_sum(
        s1,
        [-e2.sqrt(), t2.sqrt()],
        [-e3.sqrt(), t3.sqrt()],
        e4.sqrt(),
    )
}

#[inline]
fn crossed_f_prefactor(
    s1: f64,
    e2: f64,
    t2: f64,
    e3: f64,
    t3: f64,
    p: &InteractionParams,
) -> Complex64 {
    let d2 = Complex64::new(e2.sqrt() + t2.sqrt(), -p.k_ell * (e2 - t2));
    let d3 = Complex64::new(e3.sqrt() + t3.sqrt(), -p.k_ell * (e3 - t3));
    p.alpha / (s1 * d2 * d3)
}

/// `m2 = [−√E2, +√Ẽ2]` holds the signed second momentum for s2 = 1 and s2 = 0
/// (same for `m3`). The overall sign is (−1)^(s1+s2+s3+s4+1).
#[inline]
fn crossed_f_sum(s1: f64, m2: [f64; 2], m3: [f64; 2], s4: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (sg1, k1) in [(1.0, s1), (-1.0, -s1)] {
        for (sg2, k2) in [(1.0, m2[1]), (-1.0, m2[0])] {
            for (sg3, k3) in [(1.0, m3[1]), (-1.0, m3[0])] {
                let sign = -sg1 * sg2 * sg3;
                let k = k1 + k2 + k3;
                acc += sign * (phase_term(k + s4) - phase_term(k - s4));
            }
        }
    }
    acc
}

/// f^C(e1, E_l, E_k) over every pair of crossed-grid nodes, written
/// row-major (l, k) into `out`. Nodes must lie in [0, E_i + E_d].
pub(crate) fn crossed_f_block(
    e1: f64,
    nodes: &[f64],
    e_d: f64,
    p: &InteractionParams,
    out: &mut [Complex64],
) {
    let n = nodes.len();
    debug_assert_eq!(out.len(), n * n);
    out.fill(Complex64::new(0.0, 0.0));
    if p.alpha == 0.0 || e1 <= 0.0 {
        return;
    }
    let d = 1.0 + e_d;
    let s1 = e1.sqrt();
    // (√E, √Ẽ, 1/(√E + √Ẽ − i·kℓ·(E − Ẽ)))
    let pairs: Vec<(f64, f64, Complex64)> = nodes
        .iter()
        .map(|&e| {
            let t = (d - e).max(0.0);
            (
                e.sqrt(),
                t.sqrt(),
                Complex64::new(e.sqrt() + t.sqrt(), -p.k_ell * (e - t)).inv(),
            )
        })
        .collect();
    let scale = p.alpha / s1;
    for (l, &(r2, t2, inv2)) in pairs.iter().enumerate() {
        if nodes[l] <= 0.0 {
            continue;
        }
        let row = &mut out[l * n..(l + 1) * n];
        for (k, &(r3, t3, inv3)) in pairs.iter().enumerate() {
            let e4 = e1 + nodes[l] - nodes[k];
            if e4 < 0.0 || nodes[k] <= 0.0 {
                continue;
            }
            row[k] = scale * inv2 * inv3 * crossed_f_sum(s1, [-r2, t2], [-r3, t3], e4.sqrt());
        }
    }
}

/// √E2·g(E1,E2) + ∫₀^(E1+E2) √E·f(E1,E2,E) dE. Vanishes for exact particle conservation.
pub fn check_particle_conservation(
    e1: f64,
    e2: f64,
    p: &InteractionParams,
    tol: Tolerance,
) -> Result<f64> {
    let g = ladder_g(e1, e2, p)?;
    let gain = outgoing_moment(e1, e2, p, tol, |e| e.sqrt())?;
    Ok(e2.sqrt() * g + gain)
}

/// (E1+E2)·√E2·g(E1,E2) + ∫₀^(E1+E2) 2E·√E·f(E1,E2,E) dE.
pub fn check_energy_conservation(
    e1: f64,
    e2: f64,
    p: &InteractionParams,
    tol: Tolerance,
) -> Result<f64> {
    let g = ladder_g(e1, e2, p)?;
    let gain = outgoing_moment(e1, e2, p, tol, |e| 2.0 * e * e.sqrt())?;
    Ok((e1 + e2) * e2.sqrt() * g + gain)
}

fn outgoing_moment(
    e1: f64,
    e2: f64,
    p: &InteractionParams,
    tol: Tolerance,
    weight: impl Fn(f64) -> f64,
) -> Result<f64> {
    let top = e1 + e2;
    let breaks = [0.0, e1.min(e2), 0.5 * top, e1.max(e2), top];
    let est = integrate_with_breaks(
        |e| weight(e) * ladder_f_raw(e1, e2, e, p.alpha),
        &breaks,
        tol,
    )?;
    Ok(est.value)
}

/// f(E1,E2,E3)/√E4 − f(E3,E4,E1)/√E2 with E4 = E1 + E2 − E3.
pub fn check_reversibility(e1: f64, e2: f64, e3: f64, p: &InteractionParams) -> Result<f64> {
    positive("check_reversibility", &[e1, e2, e3])?;
    let e4 = e1 + e2 - e3;
    if e4 <= 0.0 {
        return Ok(0.0);
    }
    Ok(ladder_f_raw(e1, e2, e3, p.alpha) / e4.sqrt()
        - ladder_f_raw(e3, e4, e1, p.alpha) / e2.sqrt())
}

/// Ladder kernels sampled on an energy grid.
///
/// The gain table is tilted per partner pair, f·exp(a + c·E), so that the
/// grid quadrature of its first two outgoing moments reproduces the loss
/// exactly. Discrete particle and energy flux are then conserved to
/// round-off, which is what makes the nonlinear flux equal the linear one.
#[derive(Clone, Debug)]
pub struct LadderTables {
    n: usize,
    /// g[i * n + k] = g(E_i, E_k)
    g: Vec<f64>,
    /// f[(k * n + i) * n + j] = f(E_i, E_j, E_k), moment-corrected.
    f: Vec<f64>,
    nodes: Vec<f64>,
    /// Per pair (i, j): the (a, c) of the tilt.
    corrections: Vec<(f64, f64)>,
}

impl LadderTables {
    pub fn build(grid: &EnergyGrid, p: &InteractionParams, exec: Parallelism) -> Result<Self> {
        let n = grid.len();
        let e = grid.nodes();
        let w = grid.weights();
        let e_max = grid.e_max();

        let mut g = vec![0.0; n * n];
        exec.fill_chunks(&mut g, n, |i, row| {
            for (k, slot) in row.iter_mut().enumerate() {
                *slot = ladder_g_raw(e[i], e[k], p.alpha);
            }
        });

        // Per leading index i: block[j][k] of corrected values plus the (a, c) per j.
        type Block = (Vec<f64>, Vec<(f64, f64)>);
        let blocks = exec.try_map(n, |i| -> Result<Block> {
            let mut block = vec![0.0; n * n];
            let mut tilts = vec![(0.0, 0.0); n];
            for j in 0..n {
                let row = &mut block[j * n..(j + 1) * n];
                for k in 0..n {
                    row[k] = ladder_f_raw(e[i], e[j], e[k], p.alpha);
                }
                if p.alpha == 0.0 {
                    continue;
                }
                // −√E_j·g(E_i, E_j), written in its manifestly symmetric form.
                let (si, sj) = (e[i].sqrt(), e[j].sqrt());
                let particles = p.alpha * cubic(si, sj) / (6.0 * si * sj);
                let mean = 0.5 * (e[i] + e[j]);
                // The tilt can move the mean anywhere strictly inside the grid support.
                let tilt_feasible = mean < e_max - 1e-12;
                let (a, c) = moment_tilt(
                    e,
                    w,
                    row,
                    particles,
                    if tilt_feasible { Some(mean) } else { None },
                )
                .ok_or_else(|| {
                    Error::Consistency(format!(
                        "gain table has no support for pair ({}, {})",
                        e[i], e[j]
                    ))
                })?;
                for k in 0..n {
                    row[k] *= (a + c * (e[k] - mean)).exp();
                }
                tilts[j] = (a, c);
            }
            Ok((block, tilts))
        })?;

        let mut f = vec![0.0; n * n * n];
        let mut corrections = Vec::with_capacity(n * n);
        for (i, (block, tilts)) in blocks.into_iter().enumerate() {
            corrections.extend(tilts);
            for j in 0..n {
                for k in 0..n {
                    f[(k * n + i) * n + j] = block[j * n + k];
                }
            }
        }
        let tables = LadderTables {
            n,
            g,
            f,
            nodes: e.to_vec(),
            corrections,
        };
        let (a, c) = tables.correction_size(1.0);
        log::debug!("ladder tables: n = {n}, max |log scale| = {a:.3e}, max |tilt| = {c:.3e} (pairs above E_i)");
        Ok(tables)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn g(&self, i: usize, k: usize) -> f64 {
        self.g[i * self.n + k]
    }

    pub fn f(&self, i: usize, j: usize, k: usize) -> f64 {
        self.f[(k * self.n + i) * self.n + j]
    }

    /// Row-major g[i][k].
    pub fn g_table(&self) -> &[f64] {
        &self.g
    }

    /// The n×n partner matrix F_k[i][j] feeding output energy k.
    pub fn f_slice(&self, k: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.f[k * nn..(k + 1) * nn]
    }

    /// (a, c) of the tilt f·exp(a + c·(E − mean)) applied to pair (i, j).
    pub fn correction(&self, i: usize, j: usize) -> (f64, f64) {
        self.corrections[i * self.n + j]
    }

    /// Largest |a| and |c| over pairs with `min_pair_energy` <= E1 + E2 <= E_max.
    /// Measures the quadrature error the correction absorbed. Pairs with only
    /// a handful of nodes below E1 + E2 need large tilts, and pairs above
    /// E_max lose part of their support to the cutoff.
    pub fn correction_size(&self, min_pair_energy: f64) -> (f64, f64) {
        let mut out = (0.0f64, 0.0f64);
        for i in 0..self.n {
            for j in 0..self.n {
                let pair = self.nodes[i] + self.nodes[j];
                if pair >= min_pair_energy && pair <= self.nodes[self.n - 1] {
                    let (a, c) = self.correction(i, j);
                    out = (out.0.max(a.abs()), out.1.max(c.abs()));
                }
            }
        }
        out
    }

    /// CSV dump: `i,j,k,E_i,E_j,E_k,g_ik,f_ijk`, row-major in (i, j, k).
    pub fn write_csv<W: Write>(&self, grid: &EnergyGrid, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,k,E_i,E_j,E_k,g_ik,f_ijk")?;
        let e = grid.nodes();
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    writeln!(
                        out,
                        "{i},{j},{k},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                        e[i],
                        e[j],
                        e[k],
                        self.g(i, k),
                        self.f(i, j, k)
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Find (a, c) with Σ w·√E·f·e^(a + c(E−m)) = `particles` and, if `mean` is
/// given, the tilted weighted mean of E equal to `m`. Returns None if f has no
/// support on the grid.
fn moment_tilt(
    e: &[f64],
    w: &[f64],
    f: &[f64],
    particles: f64,
    mean: Option<f64>,
) -> Option<(f64, f64)> {
    let omega: Vec<f64> = e
        .iter()
        .zip(w)
        .zip(f)
        .map(|((e, w), f)| w * e.sqrt() * f)
        .collect();
    let total: f64 = omega.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let Some(m) = mean else {
        return Some(((particles / total).ln(), 0.0));
    };
    // Tilted moments about m: Z(c) = Σ ω e^{c x}, x = E − m; d/dc ⟨x⟩ = var.
    let moments = |c: f64| {
        let (mut z, mut z1, mut z2) = (0.0, 0.0, 0.0);
        for (&o, &ek) in omega.iter().zip(e) {
            if o > 0.0 {
                let x = ek - m;
                let t = o * (c * x).exp();
                z += t;
                z1 += t * x;
                z2 += t * x * x;
            }
        }
        (z, z1 / z, z2 / z - (z1 / z).powi(2))
    };
    let (mut lo, mut hi) = (-50.0f64, 50.0f64);
    let mut c = 0.0;
    for _ in 0..200 {
        let (_, mx, var) = moments(c);
        if mx.abs() < 1e-15 {
            break;
        }
        if mx > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let newton = if var > 1e-300 { c - mx / var } else { f64::NAN };
        c = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 {
            break;
        }
    }
    let (z, mx, _) = moments(c);
    if mx.abs() > 1e-9 {
        // Target mean outside the grid support: keep particle conservation only.
        return Some(((particles / total).ln(), 0.0));
    }
    Some(((particles / z).ln(), c))
}
