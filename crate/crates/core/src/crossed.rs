//! Crossed (coherent backscattering) transport on top of a converged ladder
//! solution, one detected energy E_d at a time.
//!
//! Internal energies E ∈ (0, E_i + E_d) pair with Ẽ = E_i + E_d − E. The
//! crossed density splits as C1 = a(z)·δ(E − E_i) + c1_E(z) and C2 = c2_E(z).
//! At E_d = E_i the exchange vertex fed by A·δ(Ẽ′ − E_i) and a·δ(E′ − E_i)
//! produces a term proportional to δ(E_d − E_i); its coefficient X_E(z)
//! obeys the C2 equation and is carried as a separate channel.
//!
//! Given the ladder density, the equations are linear and block triangular:
//! (a, c1) first, then c2 sourced by (a, c1), then X sourced by a. Each block
//! is solved by restarted GMRES, left-preconditioned with per-energy LU
//! factors of the diagonal transport blocks.

use faer::{Accum, Mat, MatMut, MatRef};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::grid::{
    build_crossed_matrix, build_crossed_source, crossed_exit_weights, EnergyGrid, SpatialGrid,
    SpectralField,
};
use crate::kernels::{crossed_f_block, crossed_g, crossed_h, InteractionParams};
use crate::ladder::{solve_ladder, LadderConfig, LadderSolution};
use crate::linalg::{gemm, gmres, ComplexLu};

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Relative size of Im γ^C tolerated after assembly.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;

/// Ladder energies folded into the f^C contraction per matrix product.
const PHI_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct CrossedConfig {
    pub e_d: f64,
    /// Backscattering angle. Only θ = 0 is validated; the interior
    /// propagation carries no transverse phase.
    pub theta: f64,
    /// Internal energy spacing, of the form 2/(2m + 1).
    pub spacing: f64,
    /// Relative GMRES residual of each preconditioned block.
    pub tol: f64,
    pub max_iters: usize,
    pub restart: usize,
    pub parallelism: Parallelism,
}

impl CrossedConfig {
    /// Internal spacing at most E_i/(4·kℓ), GMRES(60) to 1e-11.
    pub fn new(e_d: f64, k_ell: f64) -> Self {
        CrossedConfig {
            e_d,
            theta: 0.0,
            spacing: EnergyGrid::crossed_spacing(0.25 / k_ell),
            tol: 1e-11,
            max_iters: 3000,
            restart: 60,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with_e_d(&self, e_d: f64) -> Self {
        CrossedConfig {
            e_d,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!(
                "theta must lie in (-pi/2, pi/2), got {}",
                self.theta
            )));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 || self.restart == 0 {
            return Err(Error::Config(
                "crossed solver needs tol > 0, max_iters > 0 and restart > 0".into(),
            ));
        }
        EnergyGrid::crossed(self.e_d, self.spacing).map(|_| ())
    }
}

#[derive(Clone, Debug)]
pub struct CrossedSolution {
    pub e_d: f64,
    pub theta: f64,
    pub k_ell: f64,
    pub grid: EnergyGrid,
    pub space: SpatialGrid,
    /// a(z) in `elastic`, c1 on the internal grid in `smooth`.
    pub c1: SpectralField<C64>,
    /// c2 on the internal grid; C2 has no δ-channel, so `elastic` stays zero.
    pub c2: SpectralField<C64>,
    /// X_E(z), row-major (energy, depth), present only for E_d = E_i.
    pub coincident: Option<Vec<C64>>,
    /// GMRES iterations of the (a, c1), c2 and X blocks.
    pub iterations: [usize; 3],
    /// Largest final relative residual over the blocks.
    pub residual: f64,
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct CrossedBistatic {
    pub e_d: f64,
    pub theta: f64,
    /// Weight of δ(E_d − E_i), single scattering removed. Zero unless E_d = E_i.
    pub elastic: f64,
    /// Spectral density of the smooth part at E_d.
    pub inelastic: f64,
    /// |Im γ| / max(|γ|, |single-scattering projection|), worst of the two parts.
    pub imaginary: f64,
}

impl CrossedSolution {
    fn incident_index(&self) -> usize {
        self.grid.index_of(1.0).expect("crossed grid carries E_i")
    }

    fn detected_index(&self) -> usize {
        self.grid
            .index_of(self.e_d)
            .expect("crossed grid carries E_d")
    }

    /// γ^C_{E_d}(θ). Fails if the assembled signal has a relative imaginary
    /// part above [`IMAGINARY_TOLERANCE`].
    pub fn bistatic(&self) -> Result<CrossedBistatic> {
        let w = crossed_exit_weights(&self.space, self.theta, self.e_d, self.k_ell)?;
        let project = |v: &[C64]| -> C64 { v.iter().zip(&w).map(|(a, b)| a * b).sum() };
        let root = self.e_d.sqrt();
        let d = self.detected_index();
        let inelastic = root * (project(self.c1.channel(d)) + project(self.c2.channel(d)));
        let single = root
            * project(&build_crossed_source(
                &self.space,
                self.theta,
                self.e_d,
                self.k_ell,
            )?);
        let elastic = match &self.coincident {
            Some(x) => {
                let nz = self.space.len();
                let x1 = &x[self.incident_index() * nz..][..nz];
                root * (project(&self.c1.elastic) + project(x1)) - single
            }
            None => ZERO,
        };
        // Far-tail signals sit near round-off, so the single-scattering
        // projection sets a floor for the relative measure.
        let floor = single.norm();
        let ratio = |v: C64| v.im.abs() / v.norm().max(floor);
        let imaginary = ratio(elastic).max(ratio(inelastic));
        if imaginary > IMAGINARY_TOLERANCE {
            return Err(Error::Consistency(format!(
                "crossed signal at E_d = {} is not real: elastic {elastic:.6e}, inelastic {inelastic:.6e}",
                self.e_d
            )));
        }
        Ok(CrossedBistatic {
            e_d: self.e_d,
            theta: self.theta,
            elastic: elastic.re,
            inelastic: inelastic.re,
            imaginary,
        })
    }
}

/// Everything the GMRES operators need for one detected energy.
struct CrossedSystem<'a> {
    nz: usize,
    nc: usize,
    /// Internal-grid indices of E_i and E_d.
    e1c: usize,
    edc: usize,
    v: Vec<f64>,
    /// First rows of the Toeplitz propagators, one per internal energy.
    kernels: Vec<Vec<C64>>,
    /// G^C_k(z), row-major (energy, depth).
    loss: Vec<f64>,
    /// Φ_z[l][k] = Σ_i u'_i(z)·f^C(E_i, E_l, E_k), real and imaginary parts,
    /// row-major (depth, l·nc + k). Empty without inelastic collisions.
    phi_re: Vec<f64>,
    phi_im: Vec<f64>,
    elastic: &'a [f64],
    /// Ladder B at E_k and at Ẽ_k, row-major (energy, depth).
    b_at: Vec<f64>,
    b_tilde: Vec<f64>,
    /// h[l·nc + k] = h^C(E_l, E_k).
    h: Vec<C64>,
    /// hs[k·nc + l] = conj h^C(Ẽ_k, Ẽ_l).
    hs: Vec<C64>,
    precond: Vec<ComplexLu>,
    precond_a: Option<ComplexLu>,
}

fn toeplitz_sub(row: &[C64], x: &[C64], out: &mut [C64]) {
    let n = x.len();
    for i in 0..n {
        let mut acc = ZERO;
        for (j, xj) in x.iter().enumerate() {
            acc += row[i.abs_diff(j)] * xj;
        }
        out[i] -= acc;
    }
}

/// I − K − diag(d) for one internal energy.
fn diagonal_block(row: &[C64], diag: &[C64]) -> Mat<C64> {
    let n = diag.len();
    Mat::from_fn(n, n, |i, j| {
        let base = -row[i.abs_diff(j)];
        if i == j {
            base + 1.0 - diag[i]
        } else {
            base
        }
    })
}

impl<'a> CrossedSystem<'a> {
    fn build(ladder: &'a LadderSolution, grid: &EnergyGrid, cfg: &CrossedConfig) -> Result<Self> {
        let p = ladder.params;
        let space = &ladder.space;
        let (nz, nc, ne) = (space.len(), grid.len(), ladder.energy.len());
        let nodes = grid.nodes();
        let d = 1.0 + cfg.e_d;
        let e1c = grid.index_of(1.0).expect("crossed grid carries E_i");
        let edc = grid.index_of(cfg.e_d).expect("crossed grid carries E_d");
        let u = ladder.quadrature_field();
        let ladder_nodes = ladder.energy.nodes();
        let exec = cfg.parallelism;

        let kernels = exec.try_map(nc, |k| {
            build_crossed_matrix(space, nodes[k], cfg.e_d, p.k_ell).map(|m| m.first_row().to_vec())
        })?;

        // G^C = gᵀ·u'. The pair (E_k, Ẽ_k) is damped by the mean of g^C over
        // its two members; this equals g^C at E = Ẽ and keeps the operator
        // symmetric under time reversal, which is what makes γ^C real.
        let mut g = vec![0.0; ne * nc];
        for (i, &ei) in ladder_nodes.iter().enumerate() {
            for (k, &ek) in nodes.iter().enumerate() {
                g[i * nc + k] =
                    0.5 * (crossed_g(ei, ek, cfg.e_d, &p)? + crossed_g(ei, d - ek, cfg.e_d, &p)?);
            }
        }
        let mut loss = vec![0.0; nc * nz];
        gemm(
            MatMut::from_row_major_slice_mut(&mut loss, nc, nz),
            Accum::Replace,
            MatRef::from_row_major_slice(&g, ne, nc).transpose(),
            MatRef::from_row_major_slice(&u, ne, nz),
        );

        let (mut phi_re, mut phi_im) = (Vec::new(), Vec::new());
        if p.alpha > 0.0 {
            let width = nc * nc;
            phi_re = vec![0.0; nz * width];
            phi_im = vec![0.0; nz * width];
            let mut block = vec![ZERO; PHI_CHUNK * width];
            let mut re = vec![0.0; PHI_CHUNK * width];
            let mut im = vec![0.0; PHI_CHUNK * width];
            for start in (0..ne).step_by(PHI_CHUNK) {
                let len = PHI_CHUNK.min(ne - start);
                exec.fill_chunks(&mut block[..len * width], width, |j, out| {
                    crossed_f_block(ladder_nodes[start + j], nodes, cfg.e_d, &p, out)
                });
                for ((b, r), m) in block[..len * width].iter().zip(&mut re).zip(&mut im) {
                    *r = b.re;
                    *m = b.im;
                }
                let lhs = MatRef::from_row_major_slice(&u[start * nz..(start + len) * nz], len, nz)
                    .transpose();
                for (dst, src) in [(&mut phi_re, &re), (&mut phi_im, &im)] {
                    gemm(
                        MatMut::from_row_major_slice_mut(dst, nz, width),
                        Accum::Add,
                        lhs,
                        MatRef::from_row_major_slice(&src[..len * width], len, width),
                    );
                }
            }
        }

        let mut b_at = vec![0.0; nc * nz];
        let mut b_tilde = vec![0.0; nc * nz];
        for k in 0..nc {
            for (dst, e) in [(&mut b_at, nodes[k]), (&mut b_tilde, d - nodes[k])] {
                let row = &mut dst[k * nz..(k + 1) * nz];
                for (i, wgt) in ladder.energy.interpolation_stencil(e) {
                    if wgt != 0.0 {
                        for (r, bv) in row.iter_mut().zip(ladder.field.channel(i)) {
                            *r += wgt * bv;
                        }
                    }
                }
            }
        }

        let mut h = vec![ZERO; nc * nc];
        let mut hs = vec![ZERO; nc * nc];
        for l in 0..nc {
            for k in 0..nc {
                h[l * nc + k] = crossed_h(nodes[l], nodes[k], cfg.e_d, &p);
                hs[k * nc + l] = crossed_h(d - nodes[k], d - nodes[l], cfg.e_d, &p).conj();
            }
        }

        let mut sys = CrossedSystem {
            nz,
            nc,
            e1c,
            edc,
            v: grid.weights().to_vec(),
            kernels,
            loss,
            phi_re,
            phi_im,
            elastic: &ladder.field.elastic,
            b_at,
            b_tilde,
            h,
            hs,
            precond: Vec::new(),
            precond_a: None,
        };
        sys.precond = exec.map(nc, |k| {
            let diag: Vec<C64> = (0..nz)
                .map(|z| {
                    let mut s = C64::new(sys.loss[k * nz + z], 0.0);
                    if !sys.phi_re.is_empty() {
                        let at = z * nc * nc + k * nc + k;
                        s += sys.v[k] * C64::new(sys.phi_re[at], sys.phi_im[at]);
                    }
                    s
                })
                .collect();
            ComplexLu::new(&diagonal_block(&sys.kernels[k], &diag))
        });
        let diag_a: Vec<C64> = (0..nz)
            .map(|z| sys.loss[e1c * nz + z] + sys.elastic[z] * sys.hs[e1c * nc + e1c])
            .collect();
        sys.precond_a = Some(ComplexLu::new(&diagonal_block(&sys.kernels[e1c], &diag_a)));
        Ok(sys)
    }

    /// out = x − K·x − G·x − Φ·(v ⊙ x) over all internal channels.
    fn transport(&self, x: &[C64], out: &mut [C64]) {
        let (nz, nc) = (self.nz, self.nc);
        for k in 0..nc {
            let xs = &x[k * nz..(k + 1) * nz];
            let os = &mut out[k * nz..(k + 1) * nz];
            for ((o, xv), g) in os.iter_mut().zip(xs).zip(&self.loss[k * nz..]) {
                *o = xv * (1.0 - g);
            }
            toeplitz_sub(&self.kernels[k], xs, os);
        }
        if self.phi_re.is_empty() {
            return;
        }
        let mut vx = vec![ZERO; nc];
        let mut acc = vec![ZERO; nc];
        for z in 0..nz {
            for l in 0..nc {
                vx[l] = self.v[l] * x[l * nz + z];
            }
            self.phi_apply(z, &vx, &mut acc);
            for k in 0..nc {
                out[k * nz + z] -= acc[k];
            }
        }
    }

    /// acc[k] = Σ_l Φ_z[l][k]·y[l]
    fn phi_apply(&self, z: usize, y: &[C64], acc: &mut [C64]) {
        let nc = self.nc;
        acc.fill(ZERO);
        let base = z * nc * nc;
        for (l, yl) in y.iter().enumerate() {
            if *yl == ZERO {
                continue;
            }
            let re = &self.phi_re[base + l * nc..base + (l + 1) * nc];
            let im = &self.phi_im[base + l * nc..base + (l + 1) * nc];
            for ((a, r), i) in acc.iter_mut().zip(re).zip(im) {
                *a += C64::new(*r, *i) * yl;
            }
        }
    }

    /// (a, c1) block: x = [a; c1 by channel].
    fn apply_first(&self, x: &[C64], out: &mut [C64]) {
        let (nz, nc, e1c) = (self.nz, self.nc, self.e1c);
        let (a, c) = x.split_at(nz);
        let (oa, oc) = out.split_at_mut(nz);
        self.transport(c, oc);

        let row = &self.kernels[e1c];
        for z in 0..nz {
            oa[z] = a[z] * (1.0 - self.loss[e1c * nz + z]);
        }
        toeplitz_sub(row, a, oa);

        let mut vc = vec![ZERO; nc];
        let mut acc = vec![ZERO; nc];
        for z in 0..nz {
            for l in 0..nc {
                vc[l] = self.v[l] * c[l * nz + z];
            }
            // f^C gain with the δ-channel as the second partner
            if !self.phi_re.is_empty() {
                let base = z * nc * nc + e1c * nc;
                for k in 0..nc {
                    oc[k * nz + z] -= C64::new(self.phi_re[base + k], self.phi_im[base + k]) * a[z];
                }
            }
            // conj h^C(Ẽ_k, Ẽ′)·I_E·C1_E′ for the smooth and the δ part of I_E
            for k in 0..nc {
                let hrow = &self.hs[k * nc..(k + 1) * nc];
                acc[k] = hrow[e1c] * a[z] + hrow.iter().zip(&vc).map(|(h, y)| h * y).sum::<C64>();
            }
            oa[z] -= self.elastic[z] * acc[e1c];
            for k in 0..nc {
                oc[k * nz + z] -= self.b_at[k * nz + z] * acc[k];
            }
        }
    }

    /// Shared operator of the c2 and X blocks.
    fn apply_second(&self, x: &[C64], out: &mut [C64]) {
        let (nz, nc) = (self.nz, self.nc);
        self.transport(x, out);
        let mut y = vec![ZERO; nc];
        for z in 0..nz {
            for l in 0..nc {
                y[l] = self.v[l] * self.b_tilde[l * nz + z] * x[l * nz + z];
            }
            let delta = self.elastic[z] * x[self.edc * nz + z];
            for k in 0..nc {
                let mut s = self.h[self.edc * nc + k] * delta;
                for l in 0..nc {
                    s += self.h[l * nc + k] * y[l];
                }
                out[k * nz + z] -= s;
            }
        }
    }

    fn precondition_first(&self, x: &mut [C64]) {
        let nz = self.nz;
        let (a, c) = x.split_at_mut(nz);
        self.precond_a
            .as_ref()
            .expect("built with the system")
            .solve_in_place(a);
        self.precondition_second(c);
    }

    fn precondition_second(&self, x: &mut [C64]) {
        for (k, chunk) in x.chunks_mut(self.nz).enumerate() {
            self.precond[k].solve_in_place(chunk);
        }
    }

    fn source_first(&self, i0c: &[C64]) -> Vec<C64> {
        let mut b = vec![ZERO; (self.nc + 1) * self.nz];
        b[..self.nz].copy_from_slice(i0c);
        b
    }

    /// c2 source: h^C·I_Ẽ′·C1_E′ with all three δ/smooth pairings that exist.
    fn source_c2(&self, a: &[C64], c1: &[C64]) -> Vec<C64> {
        let (nz, nc, e1c, edc) = (self.nz, self.nc, self.e1c, self.edc);
        let mut out = vec![ZERO; nc * nz];
        let mut y = vec![ZERO; nc];
        for z in 0..nz {
            for l in 0..nc {
                y[l] = self.v[l] * self.b_tilde[l * nz + z] * c1[l * nz + z];
            }
            let from_delta_ladder = self.elastic[z] * c1[edc * nz + z];
            let from_delta_crossed = a[z] * self.b_tilde[e1c * nz + z];
            for k in 0..nc {
                let mut s = self.h[edc * nc + k] * from_delta_ladder
                    + self.h[e1c * nc + k] * from_delta_crossed;
                for l in 0..nc {
                    s += self.h[l * nc + k] * y[l];
                }
                out[k * nz + z] = s;
            }
        }
        out
    }

    /// X source: h^C(E_i, E_k)·A·a, the coefficient of δ(E_d − E_i).
    fn source_coincident(&self, a: &[C64]) -> Vec<C64> {
        let (nz, nc, e1c) = (self.nz, self.nc, self.e1c);
        let mut out = vec![ZERO; nc * nz];
        for k in 0..nc {
            for z in 0..nz {
                out[k * nz + z] = self.h[e1c * nc + k] * self.elastic[z] * a[z];
            }
        }
        out
    }
}

fn preconditioned_solve<A, P>(
    apply: A,
    precondition: P,
    mut rhs: Vec<C64>,
    cfg: &CrossedConfig,
) -> Result<(Vec<C64>, crate::linalg::GmresReport)>
where
    A: Fn(&[C64], &mut [C64]),
    P: Fn(&mut [C64]),
{
    precondition(&mut rhs);
    let mut x = rhs.clone();
    let op = |v: &[C64], out: &mut [C64]| {
        apply(v, out);
        precondition(out);
    };
    let report = gmres(op, &rhs, &mut x, cfg.tol, cfg.restart, cfg.max_iters)?;
    Ok((x, report))
}

/// Solve the crossed equations at one detected energy on top of `ladder`.
pub fn solve_crossed(ladder: &LadderSolution, cfg: &CrossedConfig) -> Result<CrossedSolution> {
    cfg.validate()?;
    if !ladder.converged {
        return Err(Error::Config(
            "crossed solve needs a converged ladder solution".into(),
        ));
    }
    let grid = EnergyGrid::crossed(cfg.e_d, cfg.spacing)?;
    let start = std::time::Instant::now();
    let sys = CrossedSystem::build(ladder, &grid, cfg)?;
    let built = start.elapsed();
    let (nz, nc) = (sys.nz, sys.nc);
    let k_ell = ladder.params.k_ell;
    let i0c = build_crossed_source(&ladder.space, cfg.theta, cfg.e_d, k_ell)?;

    let (first, r1) = preconditioned_solve(
        |x, o| sys.apply_first(x, o),
        |x| sys.precondition_first(x),
        sys.source_first(&i0c),
        cfg,
    )?;
    let (a, c1) = first.split_at(nz);
    let (c2, r2) = preconditioned_solve(
        |x, o| sys.apply_second(x, o),
        |x| sys.precondition_second(x),
        sys.source_c2(a, c1),
        cfg,
    )?;
    let coincident = if sys.e1c == sys.edc {
        Some(preconditioned_solve(
            |x, o| sys.apply_second(x, o),
            |x| sys.precondition_second(x),
            sys.source_coincident(a),
            cfg,
        )?)
    } else {
        None
    };

    let mut history = r1.history.clone();
    history.extend(&r2.history);
    let mut iterations = [r1.iterations, r2.iterations, 0];
    let mut residual = r1.relative_residual.max(r2.relative_residual);
    let coincident = coincident.map(|(x, r)| {
        history.extend(&r.history);
        iterations[2] = r.iterations;
        residual = residual.max(r.relative_residual);
        x
    });
    log::debug!(
        "crossed E_d = {:.4}: {nc} internal energies, setup {built:.2?}, GMRES iterations {iterations:?} in {:.2?}, residual {residual:.2e}",
        cfg.e_d,
        start.elapsed() - built
    );

    let c1_field = SpectralField {
        elastic: a.to_vec(),
        smooth: c1.to_vec(),
        n_energy: nc,
        nz,
    };
    let c2_field = SpectralField {
        elastic: vec![ZERO; nz],
        smooth: c2,
        n_energy: nc,
        nz,
    };
    Ok(CrossedSolution {
        e_d: cfg.e_d,
        theta: cfg.theta,
        k_ell,
        grid,
        space: ladder.space,
        c1: c1_field,
        c2: c2_field,
        coincident,
        iterations,
        residual,
        history,
    })
}

/// Detected energies E_i + j·s: step s within `dense_halfwidth` of E_i,
/// step 4s outside, from just above 0 up to `e_d_max`.
pub fn detection_energies(spacing: f64, dense_halfwidth: f64, e_d_max: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0 && dense_halfwidth >= 0.0 && e_d_max >= 1.0) {
        return Err(Error::Config(format!(
            "detection grid needs spacing > 0, half-width >= 0 and E_d max >= 1, got {spacing}, {dense_halfwidth}, {e_d_max}"
        )));
    }
    let dense = (dense_halfwidth / spacing + 1e-9).floor() as i64;
    let mut js = Vec::new();
    let mut j = -dense;
    // below the dense window, step outwards so the dense edge is included
    let mut lower = Vec::new();
    let mut t = -dense - 4;
    while 1.0 + t as f64 * spacing > 0.0 {
        lower.push(t);
        t -= 4;
    }
    js.extend(lower.into_iter().rev());
    while j <= dense {
        js.push(j);
        j += 1;
    }
    let mut t = dense + 4;
    while 1.0 + t as f64 * spacing <= e_d_max + 1e-9 {
        js.push(t);
        t += 4;
    }
    Ok(js
        .into_iter()
        .map(|j| {
            if j == 0 {
                1.0
            } else {
                1.0 + j as f64 * spacing
            }
        })
        .collect())
}

/// Trapezoid weights on an increasing, possibly non-uniform grid.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// η = (γ^C + γ^L)/γ^L for one detected energy.
pub fn enhancement_factor(crossed: f64, ladder: f64) -> Result<f64> {
    if !(ladder.abs() > f64::MIN_POSITIVE) || !ladder.is_finite() {
        return Err(Error::Undefined(format!(
            "enhancement factor with ladder background {ladder:e}"
        )));
    }
    Ok((crossed + ladder) / ladder)
}

#[derive(Clone, Debug)]
pub struct CrossedSpectrum {
    pub e_d: Vec<f64>,
    /// γ^{C,inel}_{E_d}(θ) at each detected energy.
    pub crossed: Vec<f64>,
    /// γ^{L,inel}_{E_d}(θ) interpolated from the ladder grid.
    pub ladder: Vec<f64>,
    /// Worst relative imaginary part over the nodes.
    pub imaginary: f64,
    /// Elastic crossed weight at E_d = E_i (single scattering removed).
    pub crossed_elastic: f64,
    /// Elastic ladder weight, single scattering included.
    pub ladder_elastic: f64,
    pub ladder_single: f64,
    /// ∫ γ^{L,inel} dE over the ladder grid.
    pub ladder_inelastic: f64,
    /// ∫ γ^{C,inel} dE_d over the detection grid (trapezoid).
    pub crossed_inelastic: f64,
    pub gmres_iterations: usize,
}

impl CrossedSpectrum {
    pub fn crossed_total(&self) -> f64 {
        self.crossed_elastic + self.crossed_inelastic
    }

    pub fn ladder_total(&self) -> f64 {
        self.ladder_elastic + self.ladder_inelastic
    }

    /// η at every detected energy; `None` where the background vanishes.
    pub fn enhancement(&self) -> Vec<Option<f64>> {
        self.crossed
            .iter()
            .zip(&self.ladder)
            .map(|(&c, &l)| enhancement_factor(c, l).ok())
            .collect()
    }

    /// Largest η over nodes where the ladder background exceeds
    /// `min_fraction` of its peak, with the full width at half maximum of
    /// η − 1 around it (linear interpolation; `None` if the half level is
    /// not crossed on both sides).
    pub fn enhancement_peak(&self, min_fraction: f64) -> Option<EnhancementPeak> {
        let floor = min_fraction * self.ladder.iter().copied().fold(0.0, f64::max);
        let excess: Vec<f64> = self
            .crossed
            .iter()
            .zip(&self.ladder)
            .map(|(&c, &l)| if l > floor { c / l } else { 0.0 })
            .collect();
        let peak = (0..excess.len()).max_by(|&a, &b| excess[a].total_cmp(&excess[b]))?;
        if !(excess[peak] > 0.0) {
            return None;
        }
        let e = &self.e_d;
        let half = 0.5 * excess[peak];
        let crossing = |i: usize, j: usize| {
            e[i] + (e[j] - e[i]) * (excess[i] - half) / (excess[i] - excess[j])
        };
        let left = (1..=peak)
            .rev()
            .find(|&i| excess[i - 1] < half)
            .map(|i| crossing(i, i - 1));
        let right = (peak..e.len() - 1)
            .find(|&i| excess[i + 1] < half)
            .map(|i| crossing(i, i + 1));
        Some(EnhancementPeak {
            e_d: e[peak],
            eta: 1.0 + excess[peak],
            width: left.zip(right).map(|(l, r)| r - l),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EnhancementPeak {
    pub e_d: f64,
    pub eta: f64,
    pub width: Option<f64>,
}

/// Solve the crossed problem at every detected energy and integrate.
/// `e_d` must contain E_i; without inelastic collisions only E_i is solved.
pub fn crossed_spectrum(
    ladder: &LadderSolution,
    e_d: &[f64],
    template: &CrossedConfig,
) -> Result<CrossedSpectrum> {
    if !e_d.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Config(
            "detected energies must be strictly increasing".into(),
        ));
    }
    let incident = e_d
        .iter()
        .position(|&e| (e - 1.0).abs() < 1e-9)
        .ok_or_else(|| Error::Config("detected energies must include E_i".into()))?;
    let nodes: Vec<f64> = if ladder.params.alpha == 0.0 {
        vec![1.0]
    } else {
        e_d.to_vec()
    };
    let solves = template.parallelism.try_map(nodes.len(), |n| {
        let cfg = CrossedConfig {
            parallelism: Parallelism::Sequential,
            ..template.with_e_d(nodes[n])
        };
        let sol = solve_crossed(ladder, &cfg)?;
        let its: usize = sol.iterations.iter().sum();
        sol.bistatic().map(|b| (b, its))
    })?;

    let lb = ladder.bistatic(template.theta)?;
    let ladder_curve: Vec<f64> = e_d
        .iter()
        .map(|&e| ladder.energy.interpolate(&lb.spectral, e))
        .collect();
    let mut crossed = vec![0.0; e_d.len()];
    let (mut crossed_elastic, mut imaginary, mut gmres_iterations) = (0.0, 0.0f64, 0);
    for (node, (b, its)) in nodes.iter().zip(&solves) {
        let idx = if nodes.len() == 1 {
            incident
        } else {
            e_d.iter().position(|e| e == node).expect("node")
        };
        crossed[idx] = b.inelastic;
        if idx == incident {
            crossed_elastic = b.elastic;
        }
        imaginary = imaginary.max(b.imaginary);
        gmres_iterations += its;
    }
    let w = trapezoid_weights(e_d);
    let crossed_inelastic = crossed.iter().zip(&w).map(|(c, w)| c * w).sum();
    Ok(CrossedSpectrum {
        e_d: e_d.to_vec(),
        crossed,
        ladder: ladder_curve,
        imaginary,
        crossed_elastic,
        ladder_elastic: lb.elastic,
        ladder_single: lb.single,
        ladder_inelastic: lb.inelastic,
        crossed_inelastic,
        gmres_iterations,
    })
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub beta: f64,
    pub alpha: f64,
    pub crossed: f64,
    pub ladder: f64,
    pub ladder_single: f64,
    pub ladder_inelastic: f64,
    pub ladder_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct GpSweep {
    pub points: Vec<SweepPoint>,
    /// First sign change of γ^C(0), linearly interpolated between brackets.
    pub crossover: Option<f64>,
}

/// Backscattering signals over a list of β, with α = `alpha_ratio`·β
/// (0 gives the Gross–Pitaevskii limit). `ladder` supplies grids and solver
/// controls; its interaction parameters are replaced per point.
pub fn gp_sweep(
    betas: &[f64],
    alpha_ratio: f64,
    ladder: &LadderConfig,
    e_d: &[f64],
    template: &CrossedConfig,
) -> Result<GpSweep> {
    let mut points = Vec::with_capacity(betas.len());
    for &beta in betas {
        let params = InteractionParams::new(alpha_ratio * beta, beta, ladder.params.k_ell)?;
        let cfg = LadderConfig {
            params,
            ..ladder.clone()
        };
        let sol = solve_ladder(&cfg)?;
        let spectrum = crossed_spectrum(&sol, e_d, template)?;
        log::info!(
            "beta = {beta:.4}, alpha = {:.4}: gamma_C = {:.6}, gamma_L = {:.6}",
            params.alpha,
            spectrum.crossed_total(),
            spectrum.ladder_total()
        );
        points.push(SweepPoint {
            beta,
            alpha: params.alpha,
            crossed: spectrum.crossed_total(),
            ladder: spectrum.ladder_total(),
            ladder_single: spectrum.ladder_single,
            ladder_inelastic: spectrum.ladder_inelastic,
            ladder_iterations: sol.iterations,
        });
    }
    let crossover = points.windows(2).find_map(|w| {
        let (p, q) = (&w[0], &w[1]);
        if p.crossed == 0.0 {
            Some(p.beta)
        } else if p.crossed.signum() != q.crossed.signum() {
            Some(p.beta + (q.beta - p.beta) * p.crossed / (p.crossed - q.crossed))
        } else {
            None
        }
    });
    Ok(GpSweep { points, crossover })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::solve_ladder;

    fn ladder(alpha: f64, beta: f64, b: f64) -> LadderSolution {
        let p = InteractionParams::new(alpha, beta, 10.0).unwrap();
        let mut cfg = LadderConfig::new(p, b).unwrap();
        cfg.energy = EnergyGrid::uniform(5.0, 40).unwrap();
        solve_ladder(&cfg).unwrap()
    }

    #[test]
    fn reciprocity_in_the_linear_limit() {
        let l = ladder(0.0, 0.0, 4.0);
        let sol = solve_crossed(&l, &CrossedConfig::new(1.0, 10.0)).unwrap();
        let c = sol.bistatic().unwrap();
        let lb = l.bistatic(0.0).unwrap();
        assert!(
            (c.elastic - (lb.elastic - lb.single)).abs() < 1e-10 * lb.elastic,
            "{c:?} {lb:?}"
        );
        assert!(sol
            .c1
            .smooth
            .iter()
            .chain(&sol.c2.smooth)
            .all(|v| v.norm() == 0.0));
    }

    #[test]
    fn detection_grid_is_dense_near_incident_energy() {
        let s = EnergyGrid::crossed_spacing(0.025);
        let e = detection_energies(s, 0.5, 3.0).unwrap();
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        assert!(e.contains(&1.0));
        assert!(e[0] > 0.0 && *e.last().unwrap() <= 3.0 + 1e-9);
        let near = e.iter().filter(|&&x| (x - 1.0).abs() <= 0.5).count();
        assert_eq!(near, 41);
        for &x in &e {
            assert!(EnergyGrid::crossed(x, s).is_ok(), "{x}");
        }
    }

    #[test]
    fn undefined_enhancement() {
        assert!(matches!(
            enhancement_factor(1.0, 0.0),
            Err(Error::Undefined(_))
        ));
        assert_eq!(enhancement_factor(1.0, 1.0).unwrap(), 2.0);
    }
}
