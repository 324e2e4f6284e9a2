use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spinboson::operators::{HilbertSpec, OperatorTable};
use spinboson::perturbation::{
    exact_level, first_order, matrix_element, numerical_element, second_order, v_kappa, vacuum_second_order,
    ExactReference, SecondOrderOptions,
};
use spinboson::scalar::cr;
use spinboson::spectra::{sector_energy, vacuum_energy, Branch};
use spinboson::transitions::bd_coefficients;
use spinboson::trajectories::{fig1_parameters, fig1_with_kappa, TimeFunction};
use spinboson::{Effective, Operators};

fn ops() -> Operators {
    OperatorTable::new(&HilbertSpec::new(48, 12).unwrap())
}

fn figure_at(kappa0: f64, t: f64) -> Effective {
    fig1_with_kappa::<f64>(TimeFunction::sin(cr(kappa0), 0.4)).effective(t)
}

/// `E_exact − E − ΔE²` for sectors 0..4 and the vacuum.
fn residuals(ops: &Operators, kappa0: f64, t: f64) -> Vec<f64> {
    let eff = figure_at(kappa0, t);
    let mut out = Vec::new();
    for n in 0..4 {
        for s in Branch::BOTH {
            let d2 = second_order(n, s, &eff, SecondOrderOptions::WITH_VACUUM).unwrap().second_order.unwrap();
            let e = exact_level(Some(n), s, &eff, ops, ExactReference::FirstOrderOperator).unwrap();
            out.push(e - sector_energy(&eff, n, s) - d2);
        }
    }
    let d2 = vacuum_second_order(&eff).unwrap().second_order.unwrap();
    let e = exact_level(None, Branch::Plus, &eff, ops, ExactReference::FirstOrderOperator).unwrap();
    out.push(e - vacuum_energy(&eff) - d2);
    out
}

#[test]
fn second_order_residual_decays_at_fourth_order_for_small_boundary_motion() {
    let ops = ops();
    for t in [1.3, 2.9, 4.4] {
        let big = residuals(&ops, 0.04, t);
        let small = residuals(&ops, 0.02, t);
        for (a, b) in big.iter().zip(&small) {
            let ratio = a.abs() / b.abs();
            assert!(ratio > 12.0, "t = {t}: ratio {ratio}");
        }
    }
}

#[test]
fn first_order_shift_vanishes_on_every_guarded_sector() {
    let ops = ops();
    let p = fig1_parameters::<f64>();
    for t in [0.4, 3.3, 8.1] {
        let eff = p.effective(t);
        for n in 0..ops.spec.window() - 1 {
            for s in Branch::BOTH {
                assert!(first_order(n, s, &eff, &ops).unwrap().abs() < 1e-12);
            }
        }
    }
}

#[test]
fn closed_form_elements_agree_with_operator_sandwiches() {
    let ops = ops();
    let mut rng = StdRng::seed_from_u64(11);
    let p = fig1_parameters::<f64>();
    for _ in 0..10 {
        let eff = p.effective(rng.gen_range(0.0..10.0));
        let v = v_kappa(&eff, &ops);
        let n: usize = rng.gen_range(0..20);
        for s in Branch::BOTH {
            for tau in Branch::BOTH {
                for target in [n + 2, n.wrapping_sub(2)] {
                    if target > 30 {
                        continue;
                    }
                    let closed = matrix_element(target, tau, n, s, &eff).unwrap().value;
                    let numeric = numerical_element(target, tau, n, s, &eff, &ops, &v.full).unwrap();
                    assert!((closed - numeric).norm() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn upward_element_is_built_from_b_and_d() {
    let p = fig1_parameters::<f64>();
    for t in [0.9, 2.2, 6.0] {
        let eff = p.effective(t);
        for n in 0..10 {
            let (b, d) = bd_coefficients(n, &eff).unwrap();
            let m = matrix_element(n + 2, Branch::Plus, n, Branch::Plus, &eff).unwrap().value;
            let expected = cr(-d * eff.kappa) + spinboson::scalar::cplx(0.0, b / 2.0 * eff.kappa_dot);
            assert!((m - expected).norm() < 1e-12);
        }
    }
}

#[test]
fn vacuum_channel_convention_only_touches_sector_one() {
    let eff = figure_at(0.3, 2.0);
    for n in 0..5 {
        for s in Branch::BOTH {
            let with = second_order(n, s, &eff, SecondOrderOptions::WITH_VACUUM).unwrap();
            let without = second_order(n, s, &eff, SecondOrderOptions::SECTOR_ONLY).unwrap();
            let diff = (with.second_order.unwrap() - without.second_order.unwrap()).abs();
            if n == 1 {
                assert!(diff > 1e-6);
                assert_eq!(with.channels.len(), without.channels.len() + 1);
            } else {
                assert_eq!(diff, 0.0);
            }
        }
    }
}

#[test]
fn non_neighbouring_channels_are_rejected() {
    let eff = figure_at(0.3, 2.0);
    assert!(matrix_element(5, Branch::Plus, 2, Branch::Plus, &eff).is_err());
    assert!(matrix_element(2, Branch::Minus, 2, Branch::Plus, &eff).is_err());
}
