//! Energy and depth grids, spectral fields, and the assembled slab
//! propagation kernels, sources and detection weights.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::{antiderivative, e2_real, DecayRate};

const NODE_TOL: f64 = 1e-9;

/// Quadrature nodes on (0, E_max] with trapezoid weights. The zero-energy
/// endpoint is not a node; its half-weight is folded into the first node so
/// the weights sum to E_max.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl EnergyGrid {
    /// `n` uniform nodes h, 2h, ..., E_max; E_i = 1 must fall on one of them.
    pub fn uniform(e_max: f64, n: usize) -> Result<Self> {
        Self::uniform_with_nodes(e_max, n, &[1.0])
    }

    /// Uniform grid with extra nodes inserted where `forced` energies are not
    /// already within rounding of a node.
    pub fn uniform_with_nodes(e_max: f64, n: usize, forced: &[f64]) -> Result<Self> {
        if !(e_max > 0.0 && e_max.is_finite()) || n == 0 {
            return Err(Error::Config(format!(
                "energy grid needs E_max > 0 and n > 0, got {e_max}, {n}"
            )));
        }
        let h = e_max / n as f64;
        let mut nodes: Vec<f64> = (1..=n).map(|k| k as f64 * h).collect();
        for &e in forced {
            if !(e > 0.0 && e <= e_max + NODE_TOL) {
                return Err(Error::Config(format!(
                    "forced node {e} outside (0, {e_max}]"
                )));
            }
            let k = (e / h).round();
            if (k * h - e).abs() <= NODE_TOL * e_max.max(1.0) && k >= 1.0 {
                nodes[k as usize - 1] = e;
            } else if !nodes.iter().any(|&x| (x - e).abs() <= NODE_TOL) {
                nodes.push(e);
            }
        }
        nodes.sort_by(f64::total_cmp);
        Self::from_nodes(nodes)
    }

    /// Trapezoid weights for arbitrary increasing positive nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || !(nodes[0] > 0.0) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "energy nodes must be positive and strictly increasing".into(),
            ));
        }
        let n = nodes.len();
        let mut weights = vec![0.0; n];
        let mut prev = 0.0;
        for k in 0..n {
            let next = if k + 1 < n { nodes[k + 1] } else { nodes[k] };
            weights[k] = 0.5 * (next - prev);
            prev = nodes[k];
        }
        weights[0] += 0.5 * nodes[0];
        Ok(EnergyGrid { nodes, weights })
    }

    /// Internal grid of a crossed solve: midpoint nodes (k + 1/2)·s on
    /// (0, E_i + E_d), uniform weights s. The node set is mirror-symmetric
    /// under E → E_i + E_d − E, and contains E_i and E_d when
    /// 1/s − 1/2 and (E_i + E_d)/s are both integers.
    pub fn crossed(e_d: f64, spacing: f64) -> Result<Self> {
        if !(e_d > 0.0) || !(spacing > 0.0) {
            return Err(Error::Config(format!(
                "crossed grid needs E_d > 0 and spacing > 0, got {e_d}, {spacing}"
            )));
        }
        let top = 1.0 + e_d;
        let n = (top / spacing).round();
        let m = 1.0 / spacing - 0.5;
        if (n * spacing - top).abs() > NODE_TOL || (m - m.round()).abs() > 1e-7 {
            return Err(Error::Config(format!(
                "crossed spacing {spacing} must be 2/(2m+1) and divide E_i + E_d = {top}"
            )));
        }
        let n = n as usize;
        let mut nodes: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * spacing).collect();
        nodes[m.round() as usize] = 1.0;
        let mirror = n - 1 - m.round() as usize;
        nodes[mirror] = e_d;
        Ok(EnergyGrid {
            nodes,
            weights: vec![spacing; n],
        })
    }

    /// Largest admissible crossed spacing 2/(2m+1) not exceeding `max_spacing`.
    pub fn crossed_spacing(max_spacing: f64) -> f64 {
        let m = ((2.0 / max_spacing - 1.0) / 2.0 - 1e-12).ceil().max(0.0);
        2.0 / (2.0 * m + 1.0)
    }

    /// Integration interval (0, upper] the weights close on.
    pub fn span(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn e_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn index_of(&self, e: f64) -> Option<usize> {
        self.nodes.iter().position(|&x| (x - e).abs() <= NODE_TOL)
    }

    /// Node holding the incident energy E_i = 1.
    pub fn incident_index(&self) -> usize {
        self.index_of(1.0)
            .expect("energy grids always carry E_i as a node")
    }

    /// Piecewise-linear interpolation of nodal `values`; constant below the
    /// first node, zero above the last.
    pub fn interpolate(&self, values: &[f64], e: f64) -> f64 {
        let x = &self.nodes;
        if e > self.e_max() + NODE_TOL || e < 0.0 {
            return 0.0;
        }
        if e <= x[0] {
            return values[0];
        }
        let k = x.partition_point(|&v| v < e).min(x.len() - 1);
        if (x[k] - e).abs() <= NODE_TOL {
            return values[k];
        }
        let t = (e - x[k - 1]) / (x[k] - x[k - 1]);
        values[k - 1] * (1.0 - t) + values[k] * t
    }

    /// (node, weight) pairs of the linear interpolant at `e`, for building
    /// interpolation matrices.
    pub fn interpolation_stencil(&self, e: f64) -> [(usize, f64); 2] {
        let x = &self.nodes;
        if e > self.e_max() + NODE_TOL || e < 0.0 {
            return [(0, 0.0), (0, 0.0)];
        }
        if e <= x[0] {
            return [(0, 1.0), (0, 0.0)];
        }
        let k = x.partition_point(|&v| v < e).min(x.len() - 1);
        if (x[k] - e).abs() <= NODE_TOL {
            return [(k, 1.0), (k, 0.0)];
        }
        let t = (e - x[k - 1]) / (x[k] - x[k - 1]);
        [(k - 1, 1.0 - t), (k, t)]
    }
}

/// Uniform cells on [0, b]; unknowns live at cell midpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    b: f64,
    nz: usize,
}

impl SpatialGrid {
    pub fn new(b: f64, nz: usize) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) || nz == 0 {
            return Err(Error::Config(format!(
                "slab needs b > 0 and nz > 0, got b = {b}, nz = {nz}"
            )));
        }
        Ok(SpatialGrid { b, nz })
    }

    /// `cells_per_mfp` cells per mean free path, rounded up.
    pub fn with_resolution(b: f64, cells_per_mfp: f64) -> Result<Self> {
        if !(cells_per_mfp > 0.0) {
            return Err(Error::Config(format!(
                "cells per mean free path must be positive, got {cells_per_mfp}"
            )));
        }
        Self::new(b, ((b * cells_per_mfp) - 1e-9).ceil().max(1.0) as usize)
    }

    pub fn thickness(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.nz == 0
    }

    pub fn cell_width(&self) -> f64 {
        self.b / self.nz as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.cell_width()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nz).map(|i| self.node(i)).collect()
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        let h = self.cell_width();
        (i as f64 * h, (i + 1) as f64 * h)
    }

    /// Index of the cell containing depth `z` (clamped to the slab).
    pub fn cell_index(&self, z: f64) -> usize {
        ((z / self.cell_width()).floor().max(0.0) as usize).min(self.nz - 1)
    }
}

/// Density split into a δ(E − E_i) coefficient and a smooth part.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T> {
    /// Depth profile of the δ-channel.
    pub elastic: Vec<T>,
    /// Row-major (energy node, depth node).
    pub smooth: Vec<T>,
    pub n_energy: usize,
    pub nz: usize,
}

impl<T: Copy + Default> SpectralField<T> {
    pub fn zeros(n_energy: usize, nz: usize) -> Self {
        SpectralField {
            elastic: vec![T::default(); nz],
            smooth: vec![T::default(); n_energy * nz],
            n_energy,
            nz,
        }
    }

    pub fn channel(&self, k: usize) -> &[T] {
        &self.smooth[k * self.nz..(k + 1) * self.nz]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.smooth[k * self.nz..(k + 1) * self.nz]
    }
}

/// Symmetric Toeplitz depth kernel: entry (i, j) depends only on |i − j|.
#[derive(Clone, Debug, PartialEq)]
pub struct SlabKernel<T> {
    row: Vec<T>,
}

impl<T: Copy> SlabKernel<T> {
    pub fn len(&self) -> usize {
        self.row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row[i.abs_diff(j)]
    }

    /// Entries by distance |i − j|.
    pub fn first_row(&self) -> &[T] {
        &self.row
    }
}

impl SlabKernel<f64> {
    pub fn row_sum(&self, i: usize) -> f64 {
        (0..self.row.len()).map(|j| self.get(i, j)).sum()
    }
}

fn kernel_row(grid: &SpatialGrid, mu: DecayRate) -> Vec<Complex64> {
    let h = grid.cell_width();
    let n = grid.len();
    // (1/2)∫ E₁(μ|z_i − z′|) dz′ over cell j; the self cell is symmetric around the node.
    let mut row = Vec::with_capacity(n);
    row.push(antiderivative(mu, 0.5 * h));
    let mut lower = row[0];
    for d in 1..n {
        let upper = antiderivative(mu, (d as f64 + 0.5) * h);
        row.push(0.5 * (upper - lower));
        lower = upper;
    }
    row
}

/// Cell-integrated ladder propagator (1/2)·E₁(|z − z′|).
pub fn build_ladder_matrix(grid: &SpatialGrid) -> SlabKernel<f64> {
    SlabKernel {
        row: kernel_row(grid, DecayRate::LADDER)
            .into_iter()
            .map(|c| c.re)
            .collect(),
    }
}

/// Crossed propagator for a pair with energies E and Ẽ = E_i + E_d − E.
pub fn build_crossed_matrix(
    grid: &SpatialGrid,
    e: f64,
    e_d: f64,
    k_ell: f64,
) -> Result<SlabKernel<Complex64>> {
    let e_tilde = 1.0 + e_d - e;
    if e < 0.0 || e_tilde < -NODE_TOL {
        return Err(Error::domain(
            "build_crossed_matrix",
            format!("energy {e} outside the kinematic window [0, {}]", 1.0 + e_d),
        ));
    }
    let mu = DecayRate::crossed(k_ell, e, e_tilde.max(0.0))?;
    Ok(SlabKernel {
        row: kernel_row(grid, mu),
    })
}

/// Unscattered incident density e^(−z), averaged over each cell so that the
/// source and the cell-integrated exit weights are exact adjoints.
pub fn build_source(grid: &SpatialGrid) -> Vec<f64> {
    let h = grid.cell_width();
    let shape = -(-h).exp_m1() / h;
    (0..grid.len())
        .map(|i| (-grid.cell(i).0).exp() * shape)
        .collect()
}

fn check_angle(theta: f64) -> Result<f64> {
    if !(theta.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(Error::domain(
            "detection angle",
            format!("|theta| must be below pi/2, got {theta}"),
        ));
    }
    Ok(theta.cos())
}

/// Longitudinal momentum mismatch between incident and detected waves.
pub fn phase_mismatch(theta: f64, e_d: f64, k_ell: f64) -> f64 {
    k_ell * (1.0 - e_d.sqrt() * theta.cos())
}

/// Incoming crossed density e^(i·q·z − (z + z/cosθ)/2), averaged over each cell.
pub fn build_crossed_source(
    grid: &SpatialGrid,
    theta: f64,
    e_d: f64,
    k_ell: f64,
) -> Result<Vec<Complex64>> {
    let c = check_angle(theta)?;
    let kappa = Complex64::new(-0.5 * (1.0 + 1.0 / c), phase_mismatch(theta, e_d, k_ell));
    let h = grid.cell_width();
    let shape = if kappa.norm() * h < 1e-8 {
        Complex64::new(1.0, 0.0)
    } else {
        ((kappa * h).exp() - 1.0) / (kappa * h)
    };
    Ok((0..grid.len())
        .map(|i| (kappa * grid.cell(i).0).exp() * shape)
        .collect())
}

/// ∫_cell e^(−z/cosθ) dz for each cell: exit weights of the ladder signal.
pub fn exit_weights(grid: &SpatialGrid, theta: f64) -> Result<Vec<f64>> {
    let c = check_angle(theta)?;
    Ok((0..grid.len())
        .map(|i| {
            let (lo, hi) = grid.cell(i);
            c * ((-lo / c).exp() - (-hi / c).exp())
        })
        .collect())
}

/// ∫_cell e^(−i·q·z − (z + z/cosθ)/2) dz for each cell.
pub fn crossed_exit_weights(
    grid: &SpatialGrid,
    theta: f64,
    e_d: f64,
    k_ell: f64,
) -> Result<Vec<Complex64>> {
    let c = check_angle(theta)?;
    let kappa = Complex64::new(0.5 * (1.0 + 1.0 / c), phase_mismatch(theta, e_d, k_ell));
    Ok((0..grid.len())
        .map(|i| {
            let (lo, hi) = grid.cell(i);
            ((-kappa * lo).exp() - (-kappa * hi).exp()) / kappa
        })
        .collect())
}

/// Probabilities (E₂(z)/2, E₂(b − z)/2) that a particle emitted isotropically
/// at each node leaves through the front and back face without scattering.
pub fn escape_probabilities(grid: &SpatialGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let b = grid.thickness();
    let mut front = Vec::with_capacity(grid.len());
    let mut back = Vec::with_capacity(grid.len());
    for z in grid.nodes() {
        front.push(0.5 * e2_real(z)?);
        back.push(0.5 * e2_real(b - z)?);
    }
    Ok((front, back))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_grid_weights_close() {
        let g = EnergyGrid::uniform(5.0, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert!((g.weights().iter().sum::<f64>() - 5.0).abs() < 1e-13);
        assert_eq!(g.incident_index(), 19);
        assert!(g.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn forced_node_is_inserted_off_lattice() {
        let g = EnergyGrid::uniform_with_nodes(3.0, 7, &[1.0]).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.index_of(1.0).is_some());
        assert!((g.weights().iter().sum::<f64>() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn crossed_grid_is_mirror_symmetric() {
        let s = EnergyGrid::crossed_spacing(0.025);
        assert!((s - 2.0 / 81.0).abs() < 1e-15);
        let e_d = 1.0 + 7.0 * s;
        let g = EnergyGrid::crossed(e_d, s).unwrap();
        assert!(g.index_of(1.0).is_some() && g.index_of(e_d).is_some());
        let n = g.len();
        for k in 0..n {
            assert!((g.nodes()[k] + g.nodes()[n - 1 - k] - (1.0 + e_d)).abs() < 1e-12);
        }
        assert!((g.span() - (1.0 + e_d)).abs() < 1e-12);
        assert!(EnergyGrid::crossed(1.0, 0.025).is_err());
    }

    #[test]
    fn interpolation() {
        let g = EnergyGrid::uniform(2.0, 4).unwrap();
        let v = [1.0, 3.0, 5.0, 7.0];
        assert_eq!(g.interpolate(&v, 0.1), 1.0);
        assert_eq!(g.interpolate(&v, 1.0), 3.0);
        assert!((g.interpolate(&v, 1.25) - 4.0).abs() < 1e-14);
        assert_eq!(g.interpolate(&v, 2.5), 0.0);
    }

    #[test]
    fn self_cell_entry() {
        let grid = SpatialGrid::new(1.0, 10).unwrap();
        let k = build_ladder_matrix(&grid);
        assert!((k.get(3, 3) - 0.172_165_499_924_784_716_24).abs() < 1e-13);
    }

    #[test]
    fn row_sums_match_escape_probabilities() {
        let grid = SpatialGrid::new(10.0, 100).unwrap();
        let k = build_ladder_matrix(&grid);
        let (front, back) = escape_probabilities(&grid).unwrap();
        for i in [0, 17, 50, 99] {
            assert!((k.row_sum(i) - (1.0 - front[i] - back[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn thin_slab_kernel_vanishes() {
        let grid = SpatialGrid::new(1e-8, 1).unwrap();
        assert!(build_ladder_matrix(&grid).get(0, 0) < 1e-6);
    }

    #[test]
    fn crossed_matrix_at_mirror_energy_is_ladder() {
        let grid = SpatialGrid::new(5.0, 50).unwrap();
        let k = build_ladder_matrix(&grid);
        let kc = build_crossed_matrix(&grid, 1.1, 1.2, 10.0).unwrap();
        for d in 0..50 {
            assert!((kc.get(0, d) - k.get(0, d)).norm() < 1e-12);
        }
        let kc = build_crossed_matrix(&grid, 0.0, 1.0, 10.0).unwrap();
        for d in 0..50 {
            assert!(
                kc.get(0, d).norm() <= k.get(0, d) + 1e-15,
                "{d}: {} vs {}",
                kc.get(0, d).norm(),
                k.get(0, d)
            );
        }
        assert!(build_crossed_matrix(&grid, 2.5, 1.0, 10.0).is_err());
    }

    #[test]
    fn sources() {
        let grid = SpatialGrid::new(4.0, 4).unwrap();
        let s = build_source(&grid);
        assert!((s[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-16);
        let c = build_crossed_source(&grid, 0.0, 1.0, 10.0).unwrap();
        for (a, b) in s.iter().zip(&c) {
            assert!((b - a).norm() < 1e-16);
        }
        // cell 2 = [2, 3]: ∫ e^((iq − 1)z) dz with q = 10·(1 − 1.1)
        let c = build_crossed_source(&grid, 0.0, 1.21, 10.0).unwrap();
        let k = Complex64::new(-1.0, -1.0);
        let want = ((k * 3.0).exp() - (k * 2.0).exp()) / k;
        assert!((c[2] - want).norm() < 1e-15);
        // adjoint pairing with the exit weights
        let w = crossed_exit_weights(&grid, 0.0, 1.21, 10.0).unwrap();
        for (a, b) in c.iter().zip(&w) {
            assert!((a.conj() * grid.cell_width() - b).norm() < 1e-15);
        }
        assert!(build_crossed_source(&grid, 2.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn exit_weights_match_crossed_at_zero_mismatch() {
        let grid = SpatialGrid::new(3.0, 30).unwrap();
        let w = exit_weights(&grid, 0.0).unwrap();
        let wc = crossed_exit_weights(&grid, 0.0, 1.0, 10.0).unwrap();
        for (a, b) in w.iter().zip(&wc) {
            assert!((b - a).norm() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - (1.0 - (-3.0f64).exp())).abs() < 1e-14);
    }
}
