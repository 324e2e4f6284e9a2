use spinboson::evolution::{quasi_hermitian_consistency, EvolutionOptions, StateVector};
use spinboson::operators::{HilbertSpec, OperatorTable};
use spinboson::spectra::{closed_form_vs_oracle, diagonalize_full, guarded_eigenvalues, match_levels, Branch};
use spinboson::trajectories::{fig1_parameters, fig1_with_kappa, TimeFunction};
use spinboson::{Model, Params};

fn spec() -> HilbertSpec {
    HilbertSpec::new(32, 8).unwrap()
}

#[test]
fn dyson_equation_and_hermiticity_along_the_figure_trajectory() {
    let model = Model::new(&spec());
    let p = fig1_parameters::<f64>();
    for t in [0.0, 0.7, 2.35, 5.1, 9.9] {
        let r = model.dyson_residual(&p, t).unwrap();
        assert!(r.defect_eq < 1e-8, "t = {t}: {r:?}");
        assert!(r.defect_herm < 1e-10, "t = {t}: {r:?}");
        assert!(r.derivative_cross_check < 1e-10, "t = {t}: {r:?}");
        assert!(model.h_closed_hermiticity(&p, t) < 1e-10);
        assert!(model.htilde_consistency(&p, t) < 1e-10);
    }
}

#[test]
fn energy_operator_is_isospectral_with_the_partner() {
    let spec = spec();
    let model = Model::new(&spec);
    let p = fig1_parameters::<f64>();
    let t = 0.7;
    let tilde = guarded_eigenvalues(&model.htilde(&p, t), &spec).unwrap();
    assert!(tilde.iter().all(|z| z.im.abs() < 1e-9));
    let partner: Vec<f64> = diagonalize_full(&model.h_closed(&p, t), &spec).unwrap().iter().map(|e| e.energy).collect();
    let low: Vec<f64> = partner.iter().copied().filter(|e| e.abs() < 6.0).collect();
    assert!(low.len() > 6);
    let tilde_re: Vec<f64> = tilde.iter().map(|z| z.re).collect();
    assert!(match_levels(&low, &tilde_re) < 1e-7);
}

#[test]
fn static_boundary_levels_follow_the_closed_forms() {
    let spec = spec();
    let ops = OperatorTable::<f64>::new(&spec);
    let p = fig1_with_kappa::<f64>(TimeFunction::zero());
    for t in [0.3, 1.9, 4.2, 7.7] {
        let h = spinboson::dyson::assemble_h_closed(&p, t, &ops);
        assert!(closed_form_vs_oracle(&p.effective(t), &h, &spec).unwrap() < 1e-9);
    }
}

fn consistency(params: &Params, map: &Params) -> f64 {
    let spec = spec();
    let ops = OperatorTable::<f64>::new(&spec);
    let psi0 = StateVector::dressed(params, &spec, 0, Branch::Plus, 0.0).unwrap();
    quasi_hermitian_consistency(params, map, &ops, &psi0, &[0.6, 1.4, 2.5], 1e-3, &EvolutionOptions::default())
        .unwrap()
        .max_residual
}

#[test]
fn both_representations_evolve_consistently() {
    let p = fig1_parameters::<f64>();
    assert!(consistency(&p, &p) < 1e-6);
}

#[test]
fn shifted_map_breaks_the_representation_equivalence() {
    let p = fig1_parameters::<f64>();
    // only the map is off: δ shifted by 0.1
    let mut wrong = p.clone();
    wrong.delta = wrong.delta.plus(TimeFunction::real_constant(0.1));
    assert!(consistency(&p, &wrong) > 1e-2);
}
