//! Riemann solutions through the public API: chaining, Rankine-Hugoniot,
//! entropy and kinetic admissibility, on both bundled models.

use ncft_core::curves::Curves;
use ncft_core::diagnostics::wave_strength;
use ncft_core::kinetics::{mu_nucleation, KineticFunction};
use ncft_core::model::{Cubic, Elasticity, FluxModel, State};
use ncft_core::riemann::{RiemannSolver, WaveKind};
use proptest::prelude::*;

fn kinetics() -> KineticFunction {
    KineticFunction::theta(0.5, Some(0.5)).unwrap()
}

#[test]
fn cubic_nonclassical_pattern_below_nucleation() {
    let kin = kinetics();
    let m = Cubic::default();
    let c = Curves::new(&m);
    let solver = RiemannSolver::new(c, &kin, true);
    let ul = State::scalar(1.0);
    assert!((mu_nucleation(&c, &kin, &ul).unwrap() + 0.375).abs() < 1e-12);
    let fan = solver.solve(&ul, &State::scalar(-0.6)).unwrap();
    let kinds: Vec<_> = fan.waves.iter().map(|w| w.kind).collect();
    assert_eq!(kinds, vec![WaveKind::NonclassicalShock, WaveKind::ClassicalShock]);
    assert!((fan.waves[0].right[0] + 0.75).abs() < 1e-12);
    assert!(fan.validate(&c, &kin).is_empty());
    // Above the threshold the classical shock is kept.
    let fan = solver.solve(&ul, &State::scalar(-0.3)).unwrap();
    let kinds: Vec<_> = fan.waves.iter().map(|w| w.kind).collect();
    assert_eq!(kinds, vec![WaveKind::ClassicalShock]);
}

#[test]
fn nucleation_off_uses_the_sharp_threshold() {
    let kin = kinetics();
    let m = Cubic::default();
    let c = Curves::new(&m);
    let solver = RiemannSolver::new(c, &kin, false);
    let fan = solver.solve(&State::scalar(1.0), &State::scalar(-0.3)).unwrap();
    assert_eq!(fan.waves[0].kind, WaveKind::NonclassicalShock);
    assert!(fan.validate(&c, &kin).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cubic_fans_are_admissible(ul in -1.4f64..1.4, ur in -1.4f64..1.4) {
        let kin = kinetics();
        let m = Cubic::default();
        let c = Curves::new(&m);
        let fan = RiemannSolver::new(c, &kin, true).solve(&State::scalar(ul), &State::scalar(ur)).unwrap();
        let problems = fan.validate(&c, &kin);
        prop_assert!(problems.is_empty(), "{:?}", problems);
        // Strengths add up along a single-family fan.
        let total: f64 = fan.waves.iter().map(|w| w.strength).sum();
        let direct = wave_strength(&c, &State::scalar(ul), &State::scalar(ur), 0).unwrap();
        prop_assert!((total - direct).abs() <= 1e-10 || fan.waves.iter().any(|w| w.kind == WaveKind::NonclassicalShock));
    }

    #[test]
    fn elasticity_weak_fans_chain_to_the_right_state(
        v in -0.4f64..0.4,
        w in 0.2f64..0.5,
        sign in prop::bool::ANY,
        dv in -0.05f64..0.05,
        dw in -0.05f64..0.05,
    ) {
        let kin = kinetics();
        let m = Elasticity::default();
        let c = Curves::new(&m);
        let w = if sign { w } else { -w };
        let ul = State::new(vec![v, w]);
        let ur = State::new(vec![v + dv, w + dw]);
        let fan = RiemannSolver::new(c, &kin, true).solve(&ul, &ur).unwrap();
        prop_assert!(fan.validate(&c, &kin).is_empty());
        let last = fan.waves.last().map_or(&fan.left, |w| &w.right);
        prop_assert!(last.distance(&ur) <= 1e-11);
        for wave in fan.waves.iter().filter(|w| w.is_shock()) {
            let s = wave.speed.lo();
            let jump = m.flux(&wave.right) - m.flux(&wave.left) - (wave.right.vector() - wave.left.vector()) * s;
            prop_assert!(jump.norm() <= 1e-10);
        }
    }
}
