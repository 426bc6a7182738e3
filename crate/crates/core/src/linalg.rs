//! Dense factorizations of the per-channel slab systems and a restarted
//! GMRES for the coupled crossed problem.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{Llt, PartialPivLu, Solve};
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SlabKernel;

/// faer's SIMD kernels can return with the upper AVX register halves dirty.
/// Legacy-SSE code running afterwards on the same thread (libm, scalar
/// loops) then pays a state-transition penalty on every instruction, which
/// made kernel evaluation 30x slower after any factorization. Every faer
/// call in this crate goes through this module and clears the state.
#[inline]
fn settle_simd() {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: AVX support was checked at runtime.
            unsafe { std::arch::x86_64::_mm256_zeroupper() }
        }
    }
}

/// dst ← lhs·rhs (or dst += lhs·rhs), single-threaded.
pub fn gemm(dst: MatMut<'_, f64>, accum: Accum, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) {
    matmul(dst, accum, lhs, rhs, 1.0, Par::Seq);
    settle_simd();
}

/// Assemble I − K − diag(d).
pub fn transport_system<T>(kernel: &SlabKernel<T>, diag: &[T]) -> Mat<T>
where
    T: Copy + std::ops::Sub<Output = T> + From<f64> + faer::traits::ComplexField,
{
    let n = kernel.len();
    debug_assert_eq!(diag.len(), n);
    Mat::from_fn(n, n, |i, j| {
        let k = kernel.get(i, j);
        if i == j {
            T::from(1.0) - k - diag[i]
        } else {
            T::from(0.0) - k
        }
    })
}

/// Cholesky factor of a symmetric positive definite ladder system.
pub struct SpdFactor(Llt<f64>);

impl SpdFactor {
    pub fn new(m: &Mat<f64>) -> Result<Self> {
        let f = m.llt(Side::Lower);
        settle_simd();
        f.map(SpdFactor)
            .map_err(|e| Error::Linalg(format!("transport matrix not positive definite: {e:?}")))
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        self.0
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
        settle_simd();
    }
}

/// Partial-pivot LU of a complex crossed system.
pub struct ComplexLu(PartialPivLu<Complex64>);

impl ComplexLu {
    pub fn new(m: &Mat<Complex64>) -> Self {
        let f = m.partial_piv_lu();
        settle_simd();
        ComplexLu(f)
    }

    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        self.0
            .solve_in_place(MatMut::from_column_major_slice_mut(rhs, n, 1));
        settle_simd();
    }
}

#[derive(Clone, Debug)]
pub struct GmresReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES(`restart`) for A·x = b starting from `x`.
///
/// Stops once ‖b − A·x‖ ≤ `tol`·‖b‖. Modified Gram–Schmidt with one
/// reorthogonalization pass; Givens rotations for the least-squares update.
pub fn gmres<A>(
    apply: A,
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    restart: usize,
    max_iters: usize,
) -> Result<GmresReport>
where
    A: Fn(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let bnorm = norm(b);
    let mut history = Vec::new();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        return Ok(GmresReport {
            iterations: 0,
            relative_residual: 0.0,
            history,
        });
    }
    let m = restart.max(1);
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    let mut iterations = 0;

    loop {
        apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok(GmresReport {
                iterations,
                relative_residual: rel,
                history,
            });
        }
        if iterations >= max_iters {
            return Err(Error::NotConverged {
                solver: "crossed GMRES",
                iterations,
                residual: rel,
                tol,
                history,
            });
        }

        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![Complex64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![Complex64::new(0.0, 0.0); m];
        let mut g = vec![Complex64::new(0.0, 0.0); m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut used = 0;

        for j in 0..m {
            apply(&basis[j], &mut w);
            for _pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    h[i][j] += c;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = Complex64::new(wn, 0.0);

            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i].conj() * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = 1.0;
                sn[j] = Complex64::new(0.0, 0.0);
            } else if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = bb.conj() / bb.norm();
            } else {
                cs[j] = a.norm() / den;
                sn[j] = (a / a.norm()) * bb.conj() / den;
            }
            h[j][j] = cs[j] * a + sn[j] * bb;
            h[j + 1][j] = Complex64::new(0.0, 0.0);
            g[j + 1] = -sn[j].conj() * g[j];
            g[j] *= cs[j];

            used = j + 1;
            iterations += 1;
            let est = g[j + 1].norm() / bnorm;
            history.push(est);
            if est <= tol || wn <= 1e-300 || iterations >= max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        // Back substitution for the Krylov coefficients.
        let mut y = vec![Complex64::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[k]) {
                *xi += yk * vi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_small_nonsymmetric_system() {
        let n = 30;
        let a = |i: usize, j: usize| {
            let d = i as f64 - j as f64;
            if i == j {
                Complex64::new(2.0, 0.3)
            } else {
                Complex64::new(0.4 * (-d.abs()).exp(), 0.1 * d / (1.0 + d * d))
            }
        };
        let xs: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.1))
            .collect();
        let b: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|j| a(i, j) * xs[j]).sum())
            .collect();
        let apply = |v: &[Complex64], out: &mut [Complex64]| {
            for i in 0..n {
                out[i] = (0..n).map(|j| a(i, j) * v[j]).sum();
            }
        };
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        let rep = gmres(apply, &b, &mut x, 1e-13, 8, 500).unwrap();
        assert!(rep.relative_residual <= 1e-13);
        for (got, want) in x.iter().zip(&xs) {
            assert!((got - want).norm() < 1e-10);
        }
    }

    #[test]
    fn spd_factor_round_trip() {
        use crate::grid::{build_ladder_matrix, SpatialGrid};
        let grid = SpatialGrid::new(5.0, 40).unwrap();
        let k = build_ladder_matrix(&grid);
        let m = transport_system(&k, &vec![-0.01; 40]);
        let f = SpdFactor::new(&m).unwrap();
        let mut x = vec![1.0; 40];
        f.solve_in_place(&mut x);
        for i in 0..40 {
            let back: f64 = (0..40).map(|j| m[(i, j)] * x[j]).sum();
            assert!((back - 1.0).abs() < 1e-12);
        }
    }
}
