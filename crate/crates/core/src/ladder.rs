//! Nonlinear ladder transport: the incoherent spectral density
//! I_E(z) = A(z)·δ(E − E_i) + B_E(z) inside the slab, and the observables
//! derived from it.
//!
//! Each sweep treats collision losses implicitly and gains explicitly:
//!
//!   (I − K − diag G_k[u]) B_k = S_k[u, u],   (I − K − diag G_i[u]) A = I₀
//!
//! where u is the previous iterate folded into quadrature form. The system
//! matrices are symmetric M-matrices, so a plain sweep keeps A, B ≥ 0.
//! Anderson mixing accelerates the damped sweep; its extrapolated iterate
//! is clipped back to A, B ≥ 0.

use std::time::Instant;

use faer::{Accum, Mat, MatRef};

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::{
    build_ladder_matrix, build_source, escape_probabilities, exit_weights, EnergyGrid, SpatialGrid,
    SpectralField,
};
use crate::kernels::{ladder_f, ladder_g, InteractionParams, LadderTables};
use crate::linalg::{gemm, transport_system, SpdFactor};
use crate::quadrature::{integrate_with_breaks, Tolerance};

/// A residual this many times above the best one seen aborts the solve.
const GROWTH_LIMIT: f64 = 10.0;

/// Upper limit standing in for infinity in thermal integrals (e^(−80) is below round-off).
const THERMAL_CUTOFF: f64 = 40.0;

#[derive(Clone, Debug)]
pub struct LadderConfig {
    pub params: InteractionParams,
    pub space: SpatialGrid,
    pub energy: EnergyGrid,
    /// Relaxation factor ω in x ← x + ω·(x_new − x).
    pub damping: f64,
    /// Sup-norm change relative to the linear solution's peak.
    pub tol: f64,
    pub max_iters: usize,
    /// Anderson mixing depth applied to the damped sweep; 0 gives plain damped iteration.
    pub anderson_depth: usize,
    pub parallelism: Parallelism,
}

impl LadderConfig {
    /// Defaults: 10 cells per mean free path, 100 energy nodes on (0, 5],
    /// damping 0.5, tolerance 1e-8, Anderson depth 6.
    pub fn new(params: InteractionParams, b: f64) -> Result<Self> {
        Ok(LadderConfig {
            params,
            space: SpatialGrid::with_resolution(b, 10.0)?,
            energy: EnergyGrid::uniform(5.0, 100)?,
            damping: 0.5,
            tol: 1e-8,
            max_iters: 1000,
            anderson_depth: 6,
            parallelism: Parallelism::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if self.energy.index_of(1.0).is_none() {
            return Err(Error::Config(
                "energy grid must contain the incident energy".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LadderSolution {
    /// A(z) in `elastic`, B_E(z) on the energy grid in `smooth`.
    pub field: SpectralField<f64>,
    /// Flux of the non-interacting problem, J = J₀ + K·J.
    pub linear: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub history: Vec<f64>,
    pub params: InteractionParams,
    pub space: SpatialGrid,
    pub energy: EnergyGrid,
}

#[derive(Clone, Debug)]
pub struct FluxProfiles {
    pub z: Vec<f64>,
    pub total: Vec<f64>,
    pub elastic: Vec<f64>,
    pub inelastic: Vec<f64>,
    /// Energy flux K(z); equals E_i·J(z) when collisions conserve energy.
    pub energy: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LadderBistatic {
    pub theta: f64,
    /// Spectral density γ_E of the smooth part at the grid energies.
    pub spectral: Vec<f64>,
    pub elastic: f64,
    pub inelastic: f64,
    /// Single-scattering part of `elastic`.
    pub single: f64,
}

impl LadderBistatic {
    pub fn total(&self) -> f64 {
        self.elastic + self.inelastic
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FluxBalance {
    pub reflected: f64,
    pub transmitted: f64,
    /// Unscattered transmission e^(−b).
    pub coherent: f64,
}

impl FluxBalance {
    pub fn total(&self) -> f64 {
        self.reflected + self.transmitted + self.coherent
    }
}

/// Solve the non-interacting transport equation J = J₀ + K·J.
pub fn solve_linear(cfg: &LadderConfig) -> Result<Vec<f64>> {
    let kernel = build_ladder_matrix(&cfg.space);
    let factor = SpdFactor::new(&transport_system(&kernel, &vec![0.0; cfg.space.len()]))?;
    let mut j = build_source(&cfg.space);
    factor.solve_in_place(&mut j);
    Ok(j)
}

pub fn solve_ladder(cfg: &LadderConfig) -> Result<LadderSolution> {
    cfg.validate()?;
    let tables = LadderTables::build(&cfg.energy, &cfg.params, cfg.parallelism)?;
    solve_ladder_with_tables(cfg, &tables)
}

/// As [`solve_ladder`], reusing kernel tables built for the same energy grid and α.
pub fn solve_ladder_with_tables(
    cfg: &LadderConfig,
    tables: &LadderTables,
) -> Result<LadderSolution> {
    cfg.validate()?;
    if tables.len() != cfg.energy.len() {
        return Err(Error::Config(
            "kernel tables were built for a different energy grid".into(),
        ));
    }
    let start = Instant::now();
    let nz = cfg.space.len();
    let ne = cfg.energy.len();
    let e0 = cfg.energy.incident_index();
    let weights = cfg.energy.weights();
    let kernel = build_ladder_matrix(&cfg.space);
    let source = build_source(&cfg.space);

    let linear = {
        let factor = SpdFactor::new(&transport_system(&kernel, &vec![0.0; nz]))?;
        let mut j = source.clone();
        factor.solve_in_place(&mut j);
        j
    };
    let mut field = SpectralField::zeros(ne, nz);
    field.elastic.clone_from(&linear);
    let base = LadderSolution {
        field,
        linear: linear.clone(),
        iterations: 0,
        residual: 0.0,
        converged: true,
        history: Vec::new(),
        params: cfg.params,
        space: cfg.space,
        energy: cfg.energy.clone(),
    };
    if cfg.params.alpha == 0.0 {
        return Ok(base);
    }

    let scale = linear.iter().copied().fold(0.0, f64::max);
    let gt = MatRef::from_row_major_slice(tables.g_table(), ne, ne).transpose();
    let mut a = base.field.elastic;
    let mut b = base.field.smooth;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut mixer = Anderson::new(cfg.anderson_depth, cfg.damping);

    for iter in 1..=cfg.max_iters {
        // u'_i(z) = w_i·B_i(z) + δ_{i,e0}·A(z)
        let mut u = vec![0.0; ne * nz];
        for i in 0..ne {
            let row = &mut u[i * nz..(i + 1) * nz];
            for (r, bv) in row.iter_mut().zip(&b[i * nz..(i + 1) * nz]) {
                *r = weights[i] * bv;
            }
            if i == e0 {
                for (r, av) in row.iter_mut().zip(&a) {
                    *r += av;
                }
            }
        }
        let umat = MatRef::from_row_major_slice(&u, ne, nz);
        let mut loss = Mat::<f64>::zeros(ne, nz);
        gemm(loss.as_mut(), Accum::Replace, gt, umat);

        let solve_channel = |diag: Vec<f64>, rhs: &mut [f64]| -> Result<()> {
            SpdFactor::new(&transport_system(&kernel, &diag))?.solve_in_place(rhs);
            Ok(())
        };
        let loss_row = |k: usize| (0..nz).map(|z| loss[(k, z)]).collect::<Vec<f64>>();

        let new_b = cfg.parallelism.try_map(ne, |k| -> Result<Vec<f64>> {
            let fk = MatRef::from_row_major_slice(tables.f_slice(k), ne, ne);
            let mut t = Mat::<f64>::zeros(ne, nz);
            gemm(t.as_mut(), Accum::Replace, fk, umat);
            let mut gain: Vec<f64> = (0..nz)
                .map(|z| (0..ne).map(|i| u[i * nz + z] * t[(i, z)]).sum())
                .collect();
            solve_channel(loss_row(k), &mut gain)?;
            Ok(gain)
        })?;
        let mut new_a = source.clone();
        solve_channel(loss_row(e0), &mut new_a)?;

        let da = a
            .iter()
            .zip(&new_a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let db = new_b
            .iter()
            .enumerate()
            .flat_map(|(k, col)| {
                col.iter()
                    .zip(&b[k * nz..(k + 1) * nz])
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max);
        let residual = (da + db) / scale;
        history.push(residual);
        log::debug!(
            "ladder iter {iter:4}  residual {residual:.3e}  t = {:.2?}",
            start.elapsed()
        );

        let floor = new_a
            .iter()
            .chain(new_b.iter().flatten())
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !residual.is_finite() || floor < -cfg.tol * scale {
            return Err(Error::Instability {
                solver: "ladder",
                iteration: iter,
                reason: format!("negative or non-finite density (min {floor:.3e})"),
                history,
            });
        }
        if iter > 5 && residual > GROWTH_LIMIT * best && residual > 100.0 * cfg.tol {
            return Err(Error::Instability {
                solver: "ladder",
                iteration: iter,
                reason: format!("residual grew from {best:.3e} to {residual:.3e}"),
                history,
            });
        }
        best = best.min(residual);

        let mut x: Vec<f64> = a.iter().chain(&b).copied().collect();
        let gx: Vec<f64> = new_a
            .iter()
            .chain(new_b.iter().flatten())
            .copied()
            .collect();
        mixer.update(&mut x, &gx);
        // Extrapolation may undershoot; densities are projected back onto x >= 0.
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        a.copy_from_slice(&x[..nz]);
        b.copy_from_slice(&x[nz..]);

        if residual <= cfg.tol {
            log::info!(
                "ladder converged in {iter} iterations (residual {residual:.3e}, {:.2?})",
                start.elapsed()
            );
            return Ok(LadderSolution {
                field: SpectralField {
                    elastic: a,
                    smooth: b,
                    n_energy: ne,
                    nz,
                },
                linear,
                iterations: iter,
                residual,
                converged: true,
                history,
                params: cfg.params,
                space: cfg.space,
                energy: cfg.energy.clone(),
            });
        }
    }
    Err(Error::NotConverged {
        solver: "ladder",
        iterations: cfg.max_iters,
        residual: *history.last().unwrap_or(&f64::NAN),
        tol: cfg.tol,
        history,
    })
}

impl LadderSolution {
    /// u'_i(z) = w_i·B_i(z) + δ_{i,i₀}·A(z), row-major (energy, depth): the
    /// density folded into quadrature form so that ∫ dE k(E)·I_E ≈ Σ_i k(E_i)·u'_i.
    pub fn quadrature_field(&self) -> Vec<f64> {
        let nz = self.space.len();
        let w = self.energy.weights();
        let mut u: Vec<f64> = self
            .field
            .smooth
            .chunks(nz)
            .zip(w)
            .flat_map(|(row, w)| row.iter().map(move |b| w * b))
            .collect();
        let e0 = self.energy.incident_index();
        for (x, a) in u[e0 * nz..(e0 + 1) * nz]
            .iter_mut()
            .zip(&self.field.elastic)
        {
            *x += a;
        }
        u
    }

    /// Elastic, inelastic, total particle flux and energy flux over depth.
    pub fn flux_profiles(&self) -> FluxProfiles {
        let nz = self.space.len();
        let (e, w) = (self.energy.nodes(), self.energy.weights());
        let mut inelastic = vec![0.0; nz];
        let mut energy = self.field.elastic.clone();
        for k in 0..e.len() {
            let s = w[k] * e[k].sqrt();
            for (z, &bv) in self.field.channel(k).iter().enumerate() {
                inelastic[z] += s * bv;
                energy[z] += s * e[k] * bv;
            }
        }
        let elastic = self.field.elastic.clone();
        let total = elastic.iter().zip(&inelastic).map(|(a, b)| a + b).collect();
        FluxProfiles {
            z: self.space.nodes(),
            total,
            elastic,
            inelastic,
            energy,
        }
    }

    /// √E·B_E(z) at the node nearest `z`, normalized to unit integral over E.
    pub fn spectral_distribution(&self, z: f64) -> Result<Vec<f64>> {
        if !(z >= 0.0 && z <= self.space.thickness()) {
            return Err(Error::domain(
                "spectral_distribution",
                format!("depth {z} outside the slab"),
            ));
        }
        let iz = self.space.cell_index(z);
        let (e, w) = (self.energy.nodes(), self.energy.weights());
        let density: Vec<f64> = (0..e.len())
            .map(|k| e[k].sqrt() * self.field.channel(k)[iz])
            .collect();
        let norm: f64 = density.iter().zip(w).map(|(d, w)| d * w).sum();
        if !(norm > 0.0) {
            return Err(Error::Undefined(format!("inelastic spectrum at z = {z}")));
        }
        Ok(density.into_iter().map(|d| d / norm).collect())
    }

    /// L1 distance of the normalized inelastic spectrum at depth `z` from
    /// the thermal profile 4E·e^(−2E), including the thermal tail above E_max.
    pub fn thermal_distance(&self, z: f64) -> Result<f64> {
        let p = self.spectral_distribution(z)?;
        let (e, w) = (self.energy.nodes(), self.energy.weights());
        let inside: f64 = (0..e.len())
            .map(|k| w[k] * (p[k] - maxwell_boltzmann(e[k])).abs())
            .sum();
        let x = self.energy.e_max();
        Ok(inside + (2.0 * x + 1.0) * (-2.0 * x).exp())
    }

    /// Backscattered flux in direction θ, split by channel.
    pub fn bistatic(&self, theta: f64) -> Result<LadderBistatic> {
        let w = exit_weights(&self.space, theta)?;
        let e = self.energy.nodes();
        let project = |v: &[f64]| v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let spectral: Vec<f64> = (0..e.len())
            .map(|k| e[k].sqrt() * project(self.field.channel(k)))
            .collect();
        let inelastic = spectral
            .iter()
            .zip(self.energy.weights())
            .map(|(g, w)| g * w)
            .sum();
        Ok(LadderBistatic {
            theta,
            elastic: project(&self.field.elastic),
            inelastic,
            single: project(&build_source(&self.space)),
            spectral,
        })
    }

    /// Reflected and transmitted particle flux; they sum with e^(−b) to the
    /// incident flux up to the discretization error of the collocation.
    pub fn flux_balance(&self) -> Result<FluxBalance> {
        let (front, back) = escape_probabilities(&self.space)?;
        let h = self.space.cell_width();
        let j = self.flux_profiles().total;
        Ok(FluxBalance {
            reflected: h * j.iter().zip(&front).map(|(a, b)| a * b).sum::<f64>(),
            transmitted: h * j.iter().zip(&back).map(|(a, b)| a * b).sum::<f64>(),
            coherent: (-self.space.thickness()).exp(),
        })
    }
}

/// Anderson mixing for x ← G(x) with relaxation ω:
/// x⁺ = x + ω·f − (ΔX + ω·ΔF)·γ, γ = argmin ‖f − ΔF·γ‖, f = G(x) − x.
struct Anderson {
    depth: usize,
    omega: f64,
    last: Option<(Vec<f64>, Vec<f64>)>,
    dx: std::collections::VecDeque<Vec<f64>>,
    df: std::collections::VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize, omega: f64) -> Self {
        Anderson {
            depth,
            omega,
            last: None,
            dx: Default::default(),
            df: Default::default(),
        }
    }

    fn update(&mut self, x: &mut [f64], gx: &[f64]) {
        let f: Vec<f64> = gx.iter().zip(x.iter()).map(|(g, x)| g - x).collect();
        if self.depth > 0 {
            if let Some((px, pf)) = self.last.take() {
                self.dx
                    .push_back(x.iter().zip(&px).map(|(a, b)| a - b).collect());
                self.df
                    .push_back(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
                if self.dx.len() > self.depth {
                    self.dx.pop_front();
                    self.df.pop_front();
                }
            }
            self.last = Some((x.to_vec(), f.clone()));
        }
        let gamma = self.coefficients(&f);
        for (i, xi) in x.iter_mut().enumerate() {
            let mut v = *xi + self.omega * f[i];
            for (j, g) in gamma.iter().enumerate() {
                v -= g * (self.dx[j][i] + self.omega * self.df[j][i]);
            }
            *xi = v;
        }
    }

    /// Least squares through the regularized normal equations; the history is short.
    fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        let m = self.df.len();
        if m == 0 {
            return Vec::new();
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut gram = Mat::<f64>::from_fn(m, m, |i, j| dot(&self.df[i], &self.df[j]));
        let trace: f64 = (0..m).map(|i| gram[(i, i)]).sum();
        for i in 0..m {
            gram[(i, i)] += 1e-12 * trace + 1e-300;
        }
        let mut rhs: Vec<f64> = (0..m).map(|i| dot(&self.df[i], f)).collect();
        match SpdFactor::new(&gram) {
            Ok(fac) => {
                fac.solve_in_place(&mut rhs);
                if rhs.iter().all(|g| g.is_finite()) {
                    rhs
                } else {
                    vec![0.0; m]
                }
            }
            Err(_) => vec![0.0; m],
        }
    }
}

/// Thermal flux distribution 4E·e^(−2E) with mean energy E_i.
pub fn maxwell_boltzmann(e: f64) -> f64 {
    4.0 * e * (-2.0 * e).exp()
}

/// Normalized spectrum of particles after exactly one collision of two
/// incident particles: √E·f(E_i, E_i, E) / (−g(E_i, E_i)).
pub fn single_collision_spectrum(e: f64) -> Result<f64> {
    let p = InteractionParams {
        alpha: 1.0,
        beta: 0.0,
        k_ell: 10.0,
    };
    Ok(e.sqrt() * ladder_f(1.0, 1.0, e, &p)? / -ladder_g(1.0, 1.0, &p)?)
}

/// Relative residual of the homogeneous collision operator applied to the
/// thermal density I_E = √E·e^(−2E), at each energy in `energies`:
/// |I_E ∫g(E′,E)I_E′ dE′ + ∫∫f(E′,E″,E)I_E′I_E″ dE′dE″| / |I_E ∫g I dE′|.
pub fn thermal_fixed_point_residual(energies: &[f64], tol: Tolerance) -> Result<Vec<f64>> {
    let p = InteractionParams {
        alpha: 1.0,
        beta: 0.0,
        k_ell: 10.0,
    };
    let density = |e: f64| e.sqrt() * (-2.0 * e).exp();
    energies
        .iter()
        .map(|&e| {
            let loss_rate = integrate_with_breaks(
                |x| ladder_g(x, e, &p).map(|g| g * density(x)).unwrap_or(0.0),
                &[0.0, e, THERMAL_CUTOFF],
                tol,
            )?
            .value;
            let loss = density(e) * loss_rate;
            let inner = |x: f64| -> f64 {
                // ∫ f(x, y, e)·I_y dy, nonzero for y > e − x.
                let lo = (e - x).max(0.0);
                let breaks = [lo, x, e, 2.0 * e - x, THERMAL_CUTOFF];
                integrate_with_breaks(
                    |y| {
                        if y <= 0.0 {
                            0.0
                        } else {
                            ladder_f(x, y, e, &p).unwrap_or(0.0) * density(y)
                        }
                    },
                    &breaks,
                    Tolerance {
                        abs: tol.abs * 0.1,
                        ..tol
                    },
                )
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
            };
            let gain = integrate_with_breaks(
                |x| density(x) * inner(x),
                &[0.0, e, 2.0 * e, THERMAL_CUTOFF],
                tol,
            )?
            .value;
            if !gain.is_finite() {
                return Err(Error::Consistency("thermal gain integral failed".into()));
            }
            Ok((loss + gain).abs() / loss.abs())
        })
        .collect()
}
