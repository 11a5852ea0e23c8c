use std::f64::consts::PI;

use dirac_bvp::poincare::{
    hardy_rayleigh_min, mckean_rayleigh_min, weight_floor, EndCondition, RayleighKind, RayleighProblem,
};
use dirac_bvp::Error;
use proptest::prelude::*;

const REL: f64 = 0.01;

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= REL * want
}

#[test]
fn hardy_minima_on_long_annuli() {
    // (n - 2)^2 / 4 + (pi / L)^2 with L = 2 pi
    let r = hardy_rayleigh_min(&RayleighProblem::hardy(3, 2.0 * PI, 4096)).unwrap();
    assert!(close(r.minimum, 0.5), "{}", r.minimum);
    let r = hardy_rayleigh_min(&RayleighProblem::hardy(4, 2.0 * PI, 4096)).unwrap();
    assert!(close(r.minimum, 1.25), "{}", r.minimum);
    assert!(r.minimum > r.floor);
}

#[test]
fn mckean_minima() {
    // (n - 1)^2 / 4 + (pi / 2L)^2 with L = pi
    let r = mckean_rayleigh_min(&RayleighProblem::mckean(3, PI, 4096)).unwrap();
    assert!(close(r.minimum, 1.25), "{}", r.minimum);
    let r = mckean_rayleigh_min(&RayleighProblem::mckean(2, PI, 4096)).unwrap();
    assert!(close(r.minimum, 0.5), "{}", r.minimum);
    assert!(r.minimum > 0.25);
}

#[test]
fn floors_and_weights() {
    assert_eq!(weight_floor(RayleighKind::Hardy, 5).coefficient, 2.25);
    assert_eq!(weight_floor(RayleighKind::Hardy, 5).power, -2);
    assert_eq!(weight_floor(RayleighKind::Mckean, 4).coefficient, 2.25);
    assert_eq!(weight_floor(RayleighKind::Mckean, 4).eval(7.0), 2.25);
}

#[test]
fn outer_conditions_are_ordered() {
    let at = |outer| {
        let mut p = RayleighProblem::mckean(3, 2.0, 2048);
        p.outer_bc = outer;
        mckean_rayleigh_min(&p).unwrap().minimum
    };
    let (log, natural, dirichlet) = (
        at(EndCondition::LogNeumann),
        at(EndCondition::Natural),
        at(EndCondition::Dirichlet),
    );
    assert!(log < natural && natural < dirichlet, "{log} {natural} {dirichlet}");
    // Dirichlet at both ends: 1 + (pi / 2)^2
    assert!(close(dirichlet, 1.0 + PI * PI / 4.0), "{dirichlet}");
}

#[test]
fn coarse_grids_and_bad_problems_are_rejected() {
    let err = hardy_rayleigh_min(&RayleighProblem::hardy(3, 1.0, 8)).unwrap_err();
    assert!(matches!(err, Error::GridTooCoarse { points: 8, .. }));
    assert!(hardy_rayleigh_min(&RayleighProblem::hardy(2, 1.0, 64)).is_err());
    assert!(mckean_rayleigh_min(&RayleighProblem::hardy(3, 1.0, 64)).is_err());
    let mut p = RayleighProblem::mckean(3, 1.0, 64);
    p.inner_bc = EndCondition::Natural;
    assert!(mckean_rayleigh_min(&p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn minima_decrease_towards_the_floor(n in 3u32..7, l in 1.0..6.0f64) {
        let short = hardy_rayleigh_min(&RayleighProblem::hardy(n, l, 512)).unwrap();
        let long = hardy_rayleigh_min(&RayleighProblem::hardy(n, 1.5 * l, 512)).unwrap();
        prop_assert!(long.minimum < short.minimum);
        prop_assert!(long.minimum > long.floor);

        let short = mckean_rayleigh_min(&RayleighProblem::mckean(n, l, 512)).unwrap();
        let long = mckean_rayleigh_min(&RayleighProblem::mckean(n, 1.5 * l, 512)).unwrap();
        prop_assert!(long.minimum < short.minimum);
        prop_assert!(long.minimum > long.floor);
    }
}
