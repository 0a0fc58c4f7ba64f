use dhoa::algebra::{build_algebra, DeformedAlgebra, Mode};
use dhoa::bargmann::{
    coherent_vector, eigen_residual, kernel, operator_matrices, overlap, TruncatedBasis,
};
use dhoa::mellin::{MellinProfile, Method};
use dhoa::WeightFunction;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::TAU;

fn annulus(sigma: f64, alpha: f64, beta: f64, mode: Mode) -> DeformedAlgebra {
    let p = MellinProfile::new(WeightFunction::power(sigma, alpha, beta).unwrap()).unwrap();
    build_algebra(p, mode, 0.0).unwrap()
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn annulus_psi_stays_in_the_band(sigma in -3.0f64..3.0, alpha in 0.2f64..2.0, width in 1.5f64..6.0, rho in -40.0f64..40.0) {
        let beta = alpha * width;
        let alg = annulus(sigma, alpha, beta, Mode::Annihilation);
        let v = alg.psi(rho).unwrap();
        prop_assert!(v >= alpha * (1.0 - 1e-12) && v <= beta * (1.0 + 1e-12), "psi({rho}) = {v}");
    }

    #[test]
    fn quadrature_reproduces_the_power_closed_form(sigma in -3.0f64..3.0, alpha in 0.2f64..2.0, width in 1.5f64..6.0, rho in -15.0f64..15.0) {
        let w = WeightFunction::power(sigma, alpha, alpha * width).unwrap();
        let closed = MellinProfile::with_method(w.clone(), Method::ClosedForm).unwrap();
        let quad = MellinProfile::with_method(w, Method::Quadrature).unwrap();
        let (a, b) = (closed.ln_value(rho).unwrap(), quad.ln_value(rho).unwrap());
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn duality_reflects_the_argument(rho in 0.5f64..30.0, (k, m) in prop::sample::select(vec![(1u32, 1u32), (1, 2), (2, 1), (1, 3), (3, 2)])) {
        let p = MellinProfile::new(WeightFunction::stretched_exp(k, m).unwrap()).unwrap();
        let alg = build_algebra(p, Mode::Annihilation, 0.0).unwrap();
        let dual = alg.dual();
        prop_assert_eq!(dual.psi(1.0 - rho).unwrap(), alg.psi(rho).unwrap());
        prop_assert_eq!(dual.dual().psi(rho).unwrap(), alg.psi(rho).unwrap());
    }

    #[test]
    fn kernel_matches_the_overlap(r1 in 1.05f64..3.8, r2 in 1.05f64..3.8, t1 in 0.0f64..TAU, t2 in 0.0f64..TAU) {
        let alg = annulus(0.5, 1.0, 4.0, Mode::Annihilation);
        let basis = TruncatedBasis::with_depth(&alg, 200, 200).unwrap();
        let z = Complex64::from_polar(r1.sqrt(), t1);
        let zeta = Complex64::from_polar(r2.sqrt(), t2);
        let (vz, vzeta) = (coherent_vector(&alg, z, &basis).unwrap(), coherent_vector(&alg, zeta, &basis).unwrap());
        let g = kernel(&alg, z * zeta.conj()).unwrap();
        let defect = (g.value() - overlap(&vzeta, &vz)).norm();
        let bound = g.tail_bound + vz.tail_bound.sqrt() * vzeta.norm_sq.sqrt() + vzeta.tail_bound.sqrt() * vz.norm_sq.sqrt() + 1e-10 * g.value().norm();
        prop_assert!(defect <= bound, "defect {defect:e} bound {bound:e}");
    }

    #[test]
    fn residual_shrinks_as_the_truncation_doubles(r in 1.4f64..2.9, theta in 0.0f64..TAU, creation in any::<bool>()) {
        let mode = if creation { Mode::Creation } else { Mode::Annihilation };
        let alg = annulus(1.0, 1.0, 4.0, mode);
        let z = Complex64::from_polar(r.sqrt(), theta);
        let mut last = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let basis = TruncatedBasis::with_depth(&alg, n, n).unwrap();
            let ops = operator_matrices(&alg, &basis).unwrap();
            let v = coherent_vector(&alg, z, &basis).unwrap();
            let (_, res) = eigen_residual(&alg, &ops, &v, &basis).unwrap();
            // below ~1e-14 only rounding is left
            prop_assert!(res <= 1.1 * last || res < 1e-14, "n_max {n}: {res:e} after {last:e}");
            last = res;
        }
    }
}
