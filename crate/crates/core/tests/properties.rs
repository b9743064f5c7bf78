use std::sync::OnceLock;

use homoclinic::fountain::{a_lower_bound, d_lower_bound, r_k, rho_k};
use homoclinic::functional::Functional;
use homoclinic::grid::{lp_norm, make_grid, Discretization, Field};
use homoclinic::operator::{
    assemble, eigendecompose, plus_minus_norms, quadratic_form, OperatorMatrix, SpectralDecomposition,
};
use homoclinic::problem::{CoefficientFamily, HypothesisParams, ProblemSpec, WeightFamily};
use homoclinic::Exponent;
use proptest::prelude::*;

struct Fixture {
    spec: ProblemSpec<f64>,
    grid: Discretization<f64>,
    a: OperatorMatrix<f64>,
    sd: SpectralDecomposition<f64>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let params = HypothesisParams {
            nu: 1.25,
            mu: Exponent::Finite(2.0),
            alpha: 0.5,
            abar: 1.0,
            rbar: 3.0,
        };
        let spec = ProblemSpec::builtin(
            1,
            CoefficientFamily::Shifted { shift: 3.0 },
            WeightFamily::Gaussian { scale: 1.0 },
            params,
        )
        .unwrap();
        let grid = make_grid(6.0, 119).unwrap();
        let a = assemble(&spec, &grid).unwrap();
        let sd = eigendecompose(&a, 1e-3).unwrap();
        Fixture { spec, grid, a, sd }
    })
}

fn field() -> impl Strategy<Value = Field<f64>> {
    prop::collection::vec(-2.0f64..2.0, 119).prop_map(|v| Field::from_values(1, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_even(u in field(), lambda in 1.0f64..2.0, eps in prop::sample::select(vec![0.0, 1e-9, 1e-6, 1e-2])) {
        let fx = fixture();
        let f = Functional::new(&fx.sd, &fx.spec, &fx.grid).unwrap();
        let p = f.energy(&u, lambda, eps).phi_lambda;
        let m = f.energy(&u.scaled(-1.0), lambda, eps).phi_lambda;
        prop_assert_eq!(p, m);
    }

    #[test]
    fn quadratic_form_splits_by_sign(u in field()) {
        let fx = fixture();
        let (plus, minus) = plus_minus_norms(&u, &fx.sd);
        let q = quadratic_form(&u, &u, &fx.a, &fx.grid);
        let norm_sq = u.inner(&u, &fx.grid);
        prop_assert!((q - (plus - minus)).abs() <= 1e-8 * (1.0 + norm_sq));
    }

    #[test]
    fn grid_is_symmetric(t in 0.5f64..20.0, n in 3usize..400) {
        let g = make_grid(t, n).unwrap();
        for i in 0..n {
            prop_assert!((g.nodes[i] + g.nodes[n - 1 - i]).abs() <= 1e-12);
        }
        prop_assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        let total: f64 = g.weights.iter().sum();
        prop_assert!((total - (2.0 * t - g.h)).abs() <= 1e-9 * t);
    }

    #[test]
    fn lp_norms_are_homogeneous(u in field(), s in -5.0f64..5.0, p in 1.0f64..8.0) {
        let fx = fixture();
        for e in [Exponent::Finite(p), Exponent::Infinite] {
            let a = lp_norm(&u.scaled(s), e, &fx.grid).unwrap();
            let b = s.abs() * lp_norm(&u, e, &fx.grid).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
        }
    }

    #[test]
    fn sphere_radii_respect_their_ordering(eta in 1e-3f64..1.0, a_norm in 1e-2f64..3.0, nu in 1.05f64..1.95, eps0 in 1e-3f64..1.0) {
        let rho = rho_k(eta, a_norm, nu);
        // ρ solves ½ρ² = 4η^ν‖a‖ρ^ν, so the lower bound on the ρ-sphere is ρ²/4
        let a = a_lower_bound(eta, a_norm, nu, rho);
        prop_assert!((a - rho * rho / 4.0).abs() <= 1e-10 * rho * rho);
        let r = r_k(rho, eps0, nu);
        prop_assert!(r > 0.0 && r < rho);
        prop_assert!(d_lower_bound(eta, a_norm, nu) < 0.0);
    }
}

#[test]
fn energy_is_deterministic() {
    let fx = fixture();
    let f = Functional::new(&fx.sd, &fx.spec, &fx.grid).unwrap();
    let u = Field::from_scalar_fn(&fx.grid, 1, |t| t * (-t * t / 2.0).exp());
    let a = f.energy(&u, 1.3, 1e-6);
    let b = f.energy(&u, 1.3, 1e-6);
    assert_eq!(a, b);
}
