//! Property tests for the operator calculus, stochastic integrals and model helpers.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use qspde::grid::TimeGrid;
use qspde::models::ode::{blowup_closed_form, blowup_time, envelope, envelope_root};
use qspde::models::{check_ellipticity, SktParams};
use qspde::operator::{audit_sectoriality, fractional_power, operator_exp, OperatorSnapshot};
use qspde::spectral::{build_basis, sobolev_norm, BoundaryCondition, Domain, Field, SpectralBasis};
use qspde::stochastic::{ito_integral, sample_wiener, AdditiveNoise};

fn basis(n: usize) -> Arc<SpectralBasis> {
    build_basis(Domain::interval(PI), BoundaryCondition::Dirichlet, n).unwrap()
}

/// Heat operator plus a small random non-symmetric perturbation.
fn perturbed(n: usize, shift: f64, entries: &[f64]) -> OperatorSnapshot {
    let b = basis(n);
    let base = OperatorSnapshot::shifted_laplacian(b.clone(), 1, shift, 1.0);
    let p = DMatrix::from_fn(n, n, |i, j| 0.05 * entries[(i * n + j) % entries.len()]);
    OperatorSnapshot::new(b, 1, base.matrix() + p).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fractional_powers_compose(
        n in 2usize..8,
        shift in 0.5f64..3.0,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        b1 in -0.5f64..0.5,
        b2 in -0.5f64..0.5,
    ) {
        let a = perturbed(n, shift, &entries);
        let lhs = fractional_power(&a, b1).unwrap().into_matrix() * fractional_power(&a, b2).unwrap().into_matrix();
        let rhs = fractional_power(&a, b1 + b2).unwrap().into_matrix();
        prop_assert!(rel(&rhs, &lhs) < 1e-8, "relative gap {}", rel(&rhs, &lhs));
    }

    #[test]
    fn exponential_is_a_homomorphism(
        n in 2usize..8,
        shift in 0.5f64..3.0,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        t1 in 0.0f64..0.5,
        t2 in 0.0f64..0.5,
    ) {
        let a = perturbed(n, shift, &entries);
        let lhs = operator_exp(&a, t1).unwrap().into_matrix() * operator_exp(&a, t2).unwrap().into_matrix();
        let rhs = operator_exp(&a, t1 + t2).unwrap().into_matrix();
        prop_assert!(rel(&rhs, &lhs) < 1e-10, "relative gap {}", rel(&rhs, &lhs));
    }

    #[test]
    fn diagonal_power_commutes_with_exponential(
        diag in prop::collection::vec(0.1f64..50.0, 1..10),
        beta in -1.0f64..1.0,
        tau in 0.0f64..1.0,
    ) {
        let b = basis(diag.len());
        let a = OperatorSnapshot::diagonal(b, 1, &diag).unwrap();
        let p = fractional_power(&a, beta).unwrap().into_matrix();
        let e = operator_exp(&a, tau).unwrap().into_matrix();
        prop_assert_eq!(&p * &e, &e * &p);
    }

    #[test]
    fn self_adjoint_heat_operators_pass_the_audit(n in 1usize..24, c in 0.01f64..5.0) {
        let a = OperatorSnapshot::shifted_laplacian(basis(n), 1, c, 1.0);
        let r = audit_sectoriality(&a, 1.2, 16);
        prop_assert!(r.passed());
        // The resolvent of a self-adjoint operator is exactly 1/dist(λ, spectrum).
        prop_assert!(r.m_est <= r.m_spectral * (1.0 + 1e-6), "M_est = {}, geometric {}", r.m_est, r.m_spectral);
    }

    #[test]
    fn sobolev_norms_are_monotone_in_the_index(
        coeffs in prop::collection::vec(-10.0f64..10.0, 1..20),
        mu1 in 0.0f64..1.0,
        dmu in 0.0f64..1.0,
    ) {
        let f = Field::from_coeffs(basis(coeffs.len()), 1, DVector::from_vec(coeffs)).unwrap();
        prop_assert!(sobolev_norm(&f, mu1).unwrap() <= sobolev_norm(&f, mu1 + dmu).unwrap() * (1.0 + 1e-14));
    }

    #[test]
    fn ito_integral_is_linear_and_homogeneous(
        a1 in prop::collection::vec(-2.0f64..2.0, 4),
        a2 in prop::collection::vec(-2.0f64..2.0, 4),
        c in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let grid = TimeGrid::with_horizon(0.5, 1e-2).unwrap();
        let w = sample_wiener(4, grid, seed, 0).unwrap();
        let s1 = AdditiveNoise::diagonal(4, &a1).unwrap();
        let s2 = AdditiveNoise::diagonal(4, &a2).unwrap();
        let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let s12 = AdditiveNoise::diagonal(4, &sum).unwrap();
        let j1 = ito_integral(&s1, &w, None).unwrap();
        let j2 = ito_integral(&s2, &w, None).unwrap();
        let j12 = ito_integral(&s12, &w, None).unwrap();
        for k in 0..grid.len() {
            prop_assert!((j12.at(k) - (j1.at(k) + j2.at(k))).amax() < 1e-12);
        }
        let jc = ito_integral(&s1.scaled(c), &w, None).unwrap();
        for k in 0..grid.len() {
            prop_assert!((jc.at(k) - j1.at(k) * c).amax() <= 1e-15 * (1.0 + j1.at(k).amax() * c.abs()));
        }
    }

    #[test]
    fn blowup_closed_form_solves_the_riccati_equation(lambda in 0.2f64..3.0, factor in 1.05f64..4.0, frac in 0.0f64..0.9) {
        let y0 = lambda * factor;
        let t_star = blowup_time(lambda, y0).unwrap();
        let t = frac * t_star;
        let dt = 1e-6 * t_star;
        let y = blowup_closed_form(lambda, y0, t);
        let dy = (blowup_closed_form(lambda, y0, t + dt) - blowup_closed_form(lambda, y0, t - dt.min(t))) / (dt + dt.min(t));
        let rhs = -lambda * y + y * y;
        prop_assert!((dy - rhs).abs() <= 1e-4 * rhs.abs().max(1.0), "{dy} vs {rhs}");
        prop_assert!(blowup_closed_form(lambda, y0, t_star * 1.000001).is_infinite());
    }

    #[test]
    fn envelope_vanishes_at_its_root(lambda in 0.2f64..3.0, dk in 0.1f64..3.0, y0 in 0.1f64..5.0, phi2 in 0.1f64..2.0) {
        let k = lambda + dk;
        let t1 = envelope_root(lambda, k, y0, phi2);
        prop_assert!(t1 > 0.0);
        prop_assert!(envelope(lambda, k, y0, phi2, t1).abs() < 1e-9 * (lambda * t1).exp() * y0.max(1.0));
        prop_assert!(envelope(lambda, k, y0, phi2, 0.5 * t1) > 0.0);
    }

    #[test]
    fn enlarging_self_diffusion_keeps_certificates(
        a in 0.0f64..3.0,
        b in 0.0f64..3.0,
        c in 0.0f64..3.0,
        d in 0.0f64..3.0,
        dc in 0.0f64..3.0,
        dd in 0.0f64..3.0,
    ) {
        let p = SktParams { a, b, c, d, ..SktParams::default() };
        let q = SktParams { c: c + dc, d: d + dd, ..p };
        let cp = check_ellipticity(&p, (0.0, 2.0), (0.0, 2.0), 5).unwrap();
        let cq = check_ellipticity(&q, (0.0, 2.0), (0.0, 2.0), 5).unwrap();
        prop_assert!(!cp.strong || cq.strong);
        prop_assert!(!cp.weak || cq.weak);
    }

    #[test]
    fn same_lineage_reproduces_the_path(seed in any::<u64>(), index in 0u64..1000) {
        let grid = TimeGrid::with_horizon(0.1, 1e-2).unwrap();
        let w1 = sample_wiener(3, grid, seed, index).unwrap();
        let w2 = sample_wiener(3, grid, seed, index).unwrap();
        prop_assert_eq!(w1.increments(), w2.increments());
        let other = sample_wiener(3, grid, seed, index + 1).unwrap();
        prop_assert_ne!(w1.increments(), other.increments());
    }
}
