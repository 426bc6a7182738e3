use nlcbs_core::crossed::{solve_crossed, CrossedConfig};
use nlcbs_core::grid::build_ladder_matrix;
use nlcbs_core::kernels::{
    check_energy_conservation, check_particle_conservation, check_reversibility, crossed_f,
    crossed_g, crossed_h, ladder_f, ladder_g,
};
use nlcbs_core::ladder::{solve_ladder, solve_linear, LadderConfig};
use nlcbs_core::quadrature::Tolerance;
use nlcbs_core::special::{cell_integrated_e1, e1_real, DecayRate};
use nlcbs_core::{EnergyGrid, InteractionParams, Parallelism, SpatialGrid};
use proptest::prelude::*;

fn p(alpha: f64, beta: f64) -> InteractionParams {
    InteractionParams {
        alpha,
        beta,
        k_ell: 10.0,
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn e1_is_positive_and_decreasing(x in 1e-6f64..50.0, dx in 1e-6f64..5.0) {
        let (a, b) = (e1_real(x).unwrap(), e1_real(x + dx).unwrap());
        prop_assert!(b > 0.0);
        prop_assert!(a > b);
    }

    #[test]
    fn cell_integrals_telescope(cuts in prop::collection::vec(0.0f64..8.0, 1..12)) {
        let mut pts = cuts;
        pts.push(0.0);
        pts.push(8.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let whole = cell_integrated_e1(DecayRate::LADDER, 0.0, 8.0).unwrap();
        let parts: f64 = pts
            .windows(2)
            .map(|w| cell_integrated_e1(DecayRate::LADDER, w[0], w[1]).unwrap().re)
            .sum();
        prop_assert!((parts - whole.re).abs() < 1e-10);
    }

    #[test]
    fn ladder_cells_approach_unit_weight(x in 1.0f64..60.0) {
        // ∫₀^X E₁ = 1 − E₂(X), increasing to 1.
        let w = cell_integrated_e1(DecayRate::LADDER, 0.0, x).unwrap().re;
        prop_assert!(w < 1.0 + 1e-15);
        prop_assert!(w >= 1.0 - (-x).exp() / x - 1e-15);
    }

    #[test]
    fn kernel_signs_and_symmetry(e1 in 0.01f64..4.0, e2 in 0.01f64..4.0, t in 0.0f64..1.0) {
        let q = p(0.02, 0.0);
        prop_assert!(ladder_g(e1, e2, &q).unwrap() <= 0.0);
        let e3 = 0.001 + t * (e1 + e2 - 0.002);
        let f12 = ladder_f(e1, e2, e3, &q).unwrap();
        prop_assert!(f12 >= 0.0);
        prop_assert!(close(f12, ladder_f(e2, e1, e3, &q).unwrap(), 1e-13));
    }

    #[test]
    fn collisions_conserve_particles_and_energy(e1 in 0.2f64..3.0, e2 in 0.2f64..3.0) {
        let alpha = 0.01;
        let q = p(alpha, 0.0);
        let tol = Tolerance::absolute(1e-10 * alpha);
        prop_assert!(check_particle_conservation(e1, e2, &q, tol).unwrap().abs() <= 1e-6 * alpha);
        prop_assert!(check_energy_conservation(e1, e2, &q, tol).unwrap().abs() <= 1e-6 * alpha);
    }

    #[test]
    fn collisions_are_reversible(e1 in 0.01f64..4.0, e2 in 0.01f64..4.0, t in 0.0f64..1.0) {
        let e3 = 0.01 + t * (e1 + e2 - 0.01);
        prop_assert!(check_reversibility(e1, e2, e3, &p(0.01, 0.0)).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn crossed_kernels_reduce_on_the_diagonal(e1 in 0.05f64..3.0, e_d in 0.2f64..2.5) {
        let q = p(0.01, 0.1);
        let mid = 0.5 * (1.0 + e_d);
        let g = ladder_g(e1, mid, &q).unwrap();
        prop_assert!((crossed_g(e1, mid, e_d, &q).unwrap() - g).abs() <= 1e-12);
        let f = crossed_f(e1, mid, mid, e_d, &q);
        prop_assert!((f.re - 2.0 * ladder_f(e1, mid, mid, &q).unwrap()).abs() <= 1e-10);
        prop_assert!(f.im.abs() <= 1e-10);
    }

    #[test]
    fn kernels_scale_linearly_in_the_couplings(
        e1 in 0.05f64..3.0,
        e2 in 0.05f64..3.0,
        t in 0.0f64..1.0,
        e_d in 0.2f64..2.5,
        s in 0.5f64..4.0,
    ) {
        let (a, b) = (p(0.01, 0.0), p(0.01 * s, 0.0));
        let e3 = 0.001 + t * (e1 + e2 - 0.002);
        prop_assert!(close(ladder_g(e1, e2, &b).unwrap(), s * ladder_g(e1, e2, &a).unwrap(), 1e-12));
        prop_assert!(close(ladder_f(e1, e2, e3, &b).unwrap(), s * ladder_f(e1, e2, e3, &a).unwrap(), 1e-12));
        prop_assert!(close(crossed_g(e1, e2, e_d, &b).unwrap(), s * crossed_g(e1, e2, e_d, &a).unwrap(), 1e-12));
        let (hb, hs) = (crossed_h(e1, e2, e_d, &p(0.0, 0.1 * s)), crossed_h(e1, e2, e_d, &p(0.0, 0.1)));
        prop_assert!((hb - hs * s).norm() <= 1e-12 * hb.norm().max(1e-300));
    }

    #[test]
    fn ladder_matrix_is_symmetric(b in 0.1f64..20.0, nz in 2usize..60) {
        let k = build_ladder_matrix(&SpatialGrid::new(b, nz).unwrap());
        for i in 0..nz {
            for j in 0..i {
                prop_assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn nonlinear_flux_is_linear_and_positive(alpha in 0.005f64..0.05, b in 1.0f64..6.0) {
        let mut cfg = LadderConfig::new(p(alpha, 0.0), b).unwrap();
        cfg.energy = EnergyGrid::uniform(5.0, 30).unwrap();
        cfg.parallelism = Parallelism::Sequential;
        let sol = solve_ladder(&cfg).unwrap();
        let linear = solve_linear(&cfg).unwrap();
        let prof = sol.flux_profiles();
        for z in 0..prof.z.len() {
            prop_assert!((prof.total[z] - linear[z]).abs() <= 1e-3 * linear[z]);
            prop_assert!((prof.energy[z] - prof.total[z]).abs() <= 1e-3 * prof.total[z]);
        }
        prop_assert!(sol.field.elastic.iter().chain(&sol.field.smooth).all(|&v| v >= 0.0));
    }

    #[test]
    fn linear_crossed_signal_is_reciprocal(b in 0.5f64..6.0) {
        let mut cfg = LadderConfig::new(p(0.0, 0.0), b).unwrap();
        cfg.energy = EnergyGrid::uniform(5.0, 20).unwrap();
        let ladder = solve_ladder(&cfg).unwrap();
        let crossed = solve_crossed(&ladder, &CrossedConfig::new(1.0, 10.0)).unwrap();
        let c = crossed.bistatic().unwrap();
        let l = ladder.bistatic(0.0).unwrap();
        prop_assert!((c.elastic - (l.elastic - l.single)).abs() <= 1e-10 * l.elastic);
        prop_assert!(c.imaginary <= 1e-8);
    }
}
