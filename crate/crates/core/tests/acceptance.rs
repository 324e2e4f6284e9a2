//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Criteria 1 to 9 run at cutoff 64, then again at 128.

use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spinboson::evolution::{dressed_population, propagate, EvolutionOptions, StateVector};
use spinboson::operators::{HilbertSpec, OperatorTable};
use spinboson::perturbation::{
    exact_level, first_order, matrix_element, numerical_element, second_order, v_kappa, vacuum_second_order,
    ExactReference, SecondOrderOptions,
};
use spinboson::scalar::{cplx, cr};
use spinboson::spectra::{closed_form_levels, guarded_eigenvalues, sector_energy, vacuum_energy, Branch};
use spinboson::transitions::{
    amplitude_integral, bd_coefficients, delta_pulse_amplitude, gap, plateau, pulse_plateaus, sideband_amplitude,
    suppression_times, AmplitudeOptions, Channel, Protocol,
};
use spinboson::trajectories::{fig1_parameters, fig1_with_kappa, solution_i_from_delta, EffectiveParams, TimeFunction};
use spinboson::{Model, Params};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn report(id: &str, name: &str, o: &Outcome) {
    println!("[{}] criterion {id}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn random_times(rng: &mut StdRng, count: usize, horizon: f64) -> Vec<f64> {
    (0..count).map(|_| rng.gen_range(0.0..horizon)).collect()
}

fn static_background(alpha: f64, delta: f64) -> Params {
    solution_i_from_delta(
        TimeFunction::real_constant(delta),
        TimeFunction::real_constant(1.0),
        TimeFunction::real_constant(alpha),
        cr(0.0),
        TimeFunction::zero(),
    )
    .expect("static solution I")
}

fn c1_dyson(spec: &HilbertSpec) -> Outcome {
    let start = Instant::now();
    let model = Model::new(spec);
    let p = fig1_parameters::<f64>();
    let mut rng = StdRng::seed_from_u64(1);
    let (mut eq, mut herm) = (0.0f64, 0.0f64);
    for t in random_times(&mut rng, 20, 10.0) {
        match model.dyson_residual(&p, t) {
            Ok(r) => {
                eq = eq.max(r.defect_eq);
                herm = herm.max(model.h_closed_hermiticity(&p, t));
            }
            Err(e) => return outcome(false, format!("t = {t}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let runtime_ok = spec.fock_cutoff() > 64 || secs < 10.0;
    outcome(
        eq < 1e-8 && herm < 1e-10 && runtime_ok,
        format!("max Dyson defect {eq:.2e} (< 1e-8), max hermiticity defect {herm:.2e} (< 1e-10), {secs:.1} s"),
    )
}

fn c2_spectrum(spec: &HilbertSpec) -> Outcome {
    let model = Model::new(spec);
    let mut rng = StdRng::seed_from_u64(2);
    let (mut imag_static, mut mismatch, mut imag_full) = (0.0f64, 0.0f64, 0.0f64);
    let still = fig1_with_kappa::<f64>(TimeFunction::zero());
    let full = fig1_parameters::<f64>();
    for t in random_times(&mut rng, 5, 10.0) {
        // κ ≡ 0: the closed forms are exact
        let ev = match guarded_eigenvalues(&model.htilde(&still, t), spec) {
            Ok(v) => v,
            Err(e) => return outcome(false, e.to_string()),
        };
        imag_static = ev.iter().fold(imag_static, |m, z| m.max(z.im.abs()));
        let eff = still.effective(t);
        let (levels, _) = closed_form_levels(&eff, spec.window() - 2);
        for l in &levels {
            let nearest = ev.iter().map(|z| (z.re - l.energy).abs()).fold(f64::INFINITY, f64::min);
            mismatch = mismatch.max(nearest / l.energy.abs().max(1.0));
        }
        // with the moving boundary, only reality is claimed
        match guarded_eigenvalues(&model.htilde(&full, t), spec) {
            Ok(v) => imag_full = v.iter().fold(imag_full, |m, z| m.max(z.im.abs())),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(
        imag_static < 1e-9 && mismatch < 1e-9 && imag_full < 1e-9,
        format!(
            "max |Im E| {imag_static:.2e} (kappa = 0), {imag_full:.2e} (moving boundary); closed-form mismatch {mismatch:.2e} (< 1e-9)"
        ),
    )
}

fn c3_first_order(spec: &HilbertSpec) -> Outcome {
    let ops = OperatorTable::<f64>::new(spec);
    let p = fig1_parameters::<f64>();
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for t in random_times(&mut rng, 20, 10.0) {
        let eff = p.effective(t);
        for n in 0..spec.window() - 1 {
            for s in Branch::BOTH {
                match first_order(n, s, &eff, &ops) {
                    Ok(v) => worst = worst.max(v.abs()),
                    Err(e) => return outcome(false, e.to_string()),
                }
            }
        }
    }
    outcome(worst < 1e-12, format!("max |<psi|V|psi>| = {worst:.2e} (< 1e-12)"))
}

fn random_effective(rng: &mut StdRng) -> EffectiveParams<f64> {
    EffectiveParams::constant(rng.gen_range(-1.0..1.0), rng.gen_range(0.2..2.0), cplx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .with_kappa(rng.gen_range(-0.3..0.3), rng.gen_range(-1.0..1.0))
}

fn c4_matrix_elements(spec: &HilbertSpec) -> Outcome {
    let ops = OperatorTable::<f64>::new(spec);
    let mut rng = StdRng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..50 {
        let eff = random_effective(&mut rng);
        let v = v_kappa(&eff, &ops).full;
        let n = rng.gen_range(2..spec.window() - 4);
        for (target, up) in [(n + 2, true), (n - 2, false)] {
            for tau in Branch::BOTH {
                for sigma in Branch::BOTH {
                    let closed = matrix_element(target, tau, n, sigma, &eff).map(|m| m.value);
                    let numeric = numerical_element(target, tau, n, sigma, &eff, &ops, &v);
                    match (closed, numeric) {
                        (Ok(a), Ok(b)) => worst = worst.max((a - b).norm()),
                        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("{e} (upward = {up})")),
                    }
                    checked += 1;
                }
            }
        }
    }
    outcome(worst < 1e-10, format!("{checked} elements, max |closed - sandwich| = {worst:.2e} (< 1e-10)"))
}

/// Residual `E_exact − E − ΔE²` for the low levels at one time.
fn second_order_residuals(ops: &OperatorTable<f64>, kappa0: f64, t: f64) -> Result<Vec<(String, f64, f64)>, String> {
    let p = fig1_with_kappa::<f64>(TimeFunction::sin(cr(kappa0), 0.4));
    let eff = p.effective(t);
    let mut out = Vec::new();
    for n in 0..4 {
        for s in Branch::BOTH {
            let corr = second_order(n, s, &eff, SecondOrderOptions::WITH_VACUUM).map_err(|e| e.to_string())?;
            let Some(d2) = corr.second_order else { continue };
            let exact = exact_level(Some(n), s, &eff, ops, ExactReference::FirstOrderOperator).map_err(|e| e.to_string())?;
            out.push((format!("{n}{s}"), exact - sector_energy(&eff, n, s) - d2, d2));
        }
    }
    let vac = vacuum_second_order(&eff).map_err(|e| e.to_string())?;
    if let Some(d2) = vac.second_order {
        let exact = exact_level(None, Branch::Plus, &eff, ops, ExactReference::FirstOrderOperator).map_err(|e| e.to_string())?;
        out.push(("vac".into(), exact - vacuum_energy(&eff) - d2, d2));
    }
    Ok(out)
}

fn c5_second_order(spec: &HilbertSpec) -> (Outcome, String) {
    let ops = OperatorTable::<f64>::new(spec);
    let kappa0 = 0.3;
    let mut worst_ratio = f64::INFINITY;
    let mut worst_scaling = 0.0f64;
    let mut info_ratio = f64::INFINITY;
    // min ratio per further halving, kappa0/2 -> kappa0/4 and kappa0/4 -> kappa0/8
    let mut next_ratios = [f64::INFINITY; 2];
    for &t in &[1.3, 2.9, 4.4] {
        let runs = [1.0, 2.0, 4.0, 8.0].map(|d| second_order_residuals(&ops, kappa0 / d, t));
        let runs = match runs.into_iter().collect::<Result<Vec<_>, _>>() {
            Ok(r) => r,
            Err(e) => return (outcome(false, e), String::new()),
        };
        for ((_, r1, d1), (_, r2, d2)) in runs[0].iter().zip(&runs[1]) {
            // below roundoff a ratio says nothing
            if r1.abs() > 1e-12 {
                worst_ratio = worst_ratio.min(r1.abs() / r2.abs().max(1e-300));
            }
            worst_scaling = worst_scaling.max((d1 - 4.0 * d2).abs() / d1.abs().max(1e-300));
        }
        for (k, slot) in next_ratios.iter_mut().enumerate() {
            for ((_, a, _), (_, b, _)) in runs[k + 1].iter().zip(&runs[k + 2]) {
                if a.abs() > 1e-12 {
                    *slot = slot.min(a.abs() / b.abs().max(1e-300));
                }
            }
        }
        // the full partner's spectrum, for comparison only
        let eff1 = fig1_with_kappa::<f64>(TimeFunction::sin(cr(kappa0), 0.4)).effective(t);
        let eff2 = fig1_with_kappa::<f64>(TimeFunction::sin(cr(kappa0 / 2.0), 0.4)).effective(t);
        let res = |eff: &EffectiveParams<f64>| -> f64 {
            let e = exact_level(Some(0), Branch::Plus, eff, &ops, ExactReference::FullPartner).unwrap_or(f64::NAN);
            let d2 = second_order(0, Branch::Plus, eff, SecondOrderOptions::WITH_VACUUM).ok().and_then(|c| c.second_order).unwrap_or(f64::NAN);
            e - sector_energy(eff, 0, Branch::Plus) - d2
        };
        info_ratio = info_ratio.min((res(&eff1) / res(&eff2)).abs());
    }
    (
        outcome(
            worst_ratio >= 8.0 && worst_scaling < 1e-12,
            format!("min residual ratio under kappa0 -> kappa0/2: {worst_ratio:.2} (>= 8); quadratic scaling defect {worst_scaling:.2e} (< 1e-12)"),
        ),
        format!(
            "[INFO] criterion 5 further halvings: min ratio {:.2} (kappa0/2 -> kappa0/4), {:.2} (kappa0/4 -> kappa0/8); \
             with h_closed as the exact operator: ratio {info_ratio:.2} (its spectrum drops the static squeeze)",
            next_ratios[0], next_ratios[1]
        ),
    )
}

fn c6_bd(_spec: &HilbertSpec) -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let eff = random_effective(&mut rng);
        let n = rng.gen_range(0..20);
        match bd_coefficients(n, &eff) {
            Ok((b, d)) => worst = worst.max((d - gap(Channel::plus_plus(n), &eff) * b / 2.0).abs()),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(worst < 1e-12, format!("max |D - Delta B/2| = {worst:.2e} (< 1e-12)"))
}

fn c7_closed_null(_spec: &HilbertSpec) -> Outcome {
    let bg = static_background(0.5, 0.2);
    let opts = AmplitudeOptions::default();
    let mut worst = 0.0f64;
    let protocols = [
        Protocol::quench(0.1, 6.0),
        Protocol::quench(0.05, 13.7),
        Protocol::periodic(0.1, 1.7, 0.2, 0.0, 0.0, 3),
        Protocol::periodic(0.1, 0.9, 0.2, 0.0, 0.0, 5),
    ];
    for p in protocols {
        let p = match p {
            Ok(p) => p,
            Err(e) => return outcome(false, e.to_string()),
        };
        for n in [0, 3] {
            match amplitude_integral(Channel::plus_plus(n), &bg, &p, &opts) {
                Ok(r) => worst = worst.max(r.value.norm()),
                Err(e) => return outcome(false, e.to_string()),
            }
        }
    }
    outcome(worst < 1e-9, format!("max |I| over closed quench and periodic protocols = {worst:.2e} (< 1e-9)"))
}

fn c8_suppression(_spec: &HilbertSpec) -> Outcome {
    let bg = static_background(0.5, 0.0);
    let (kappa0, t1) = (0.05, 1.0);
    let mut worst = 0.0f64;
    for n in [0, 2] {
        for k in 1..=3 {
            let t2 = match suppression_times(n, t1, k, 0.2, &bg) {
                Ok(t) => t,
                Err(e) => return outcome(false, e.to_string()),
            };
            let p = match Protocol::delta_pulse(kappa0, 0.1, 0.2, t1, t2, t2 + 1.0) {
                Ok(p) => p,
                Err(e) => return outcome(false, e.to_string()),
            };
            let (_, _, ba, bb) = pulse_plateaus(n, &bg, &p).expect("static background");
            let a = delta_pulse_amplitude(n, &bg, &p).expect("delta pulse");
            worst = worst.max(a.norm() / (kappa0 * (bb - ba).abs()));
        }
    }
    outcome(worst < 1e-10, format!("max |I| / (kappa0 |dB|) at t2 = t1 + 2 pi k / Delta = {worst:.2e} (< 1e-10)"))
}

/// Measured `P_{2,+}` after a δ-pulse against `|𝓘|²`.
fn pulse_run(spec: &HilbertSpec, ops: &OperatorTable<f64>, kappa0: f64) -> Result<(f64, f64), String> {
    let bg = static_background(0.5, 0.0);
    let n = 0;
    let (delta_a, delta_b) = (0.1, 0.3);
    let gap_b = gap(Channel::plus_plus(n), &plateau(&bg, delta_b).map_err(|e| e.to_string())?.effective(0.0));
    let t1 = 1.5;
    // half a suppression period: maximal interference
    let t2 = t1 + std::f64::consts::PI / gap_b;
    let p = Protocol::delta_pulse(kappa0, delta_a, delta_b, t1, t2, t2 + 1.5).map_err(|e| e.to_string())?;
    let predicted = delta_pulse_amplitude(n, &bg, &p).map_err(|e| e.to_string())?.norm_sqr();
    let params = p.apply(&bg).map_err(|e| e.to_string())?;
    let psi0 = StateVector::dressed(&params, spec, n, Branch::Plus, 0.0).map_err(|e| e.to_string())?;
    let r = propagate(&params, ops, &psi0, &[p.duration()], &EvolutionOptions::default()).map_err(|e| e.to_string())?;
    let measured = dressed_population(&r, &params, n + 2, Branch::Plus)[0].ok_or("degenerate sector")?;
    Ok((measured, predicted))
}

fn c9_evolution(spec: &HilbertSpec) -> Outcome {
    let start = Instant::now();
    let ops = OperatorTable::<f64>::new(spec);
    let mut errors = Vec::new();
    let mut pairs = Vec::new();
    for kappa0 in [0.1, 0.05, 0.025] {
        match pulse_run(spec, &ops, kappa0) {
            Ok((m, p)) => {
                errors.push((m - p).abs() / p);
                pairs.push(format!("k0={kappa0}: P={m:.3e} vs |I|^2={p:.3e}"));
            }
            Err(e) => return outcome(false, e),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let runtime_ok = spec.fock_cutoff() > 64 || secs < 120.0;
    outcome(
        errors[1] <= 0.1 && monotone && runtime_ok,
        format!("{}; rel. errors {:.3e}/{:.3e}/{:.3e} (<= 0.1 at 0.05, decreasing), {secs:.1} s", pairs.join(", "), errors[0], errors[1], errors[2]),
    )
}

fn c10_sideband() -> Outcome {
    let bg = static_background(0.5, 0.0);
    let (kappa0, delta0, eps, nu) = (0.05, 0.1, 0.05, 0.7);
    let eff = plateau(&bg, delta0).expect("plateau").effective(0.0);
    let d = gap(Channel::plus_plus(0), &eff);
    let amp = |omega: f64, cycles: usize| -> Result<(f64, f64, f64), String> {
        let p = Protocol::periodic(kappa0, omega, delta0, eps, nu, cycles).map_err(|e| e.to_string())?;
        let r = sideband_amplitude(0, &bg, &p).map_err(|e| e.to_string())?;
        Ok((r.value.norm(), r.db_ddelta, p.duration()))
    };
    let on = d - nu;
    let (a, b) = match (amp(on, 40), amp(on, 80)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let ratio = b.0 / a.0;
    // off resonance |∫₀ᵀ e^{ixt}| ≤ 2/|x| bounds the amplitude for every T
    let off = 0.41 * d;
    let db = a.1;
    let bound = (eps * kappa0 * nu / 2.0 * db).abs()
        * 0.25
        * [d + off - nu, d - off + nu, d + off + nu, d - off - nu].iter().map(|x| 2.0 / x.abs()).sum::<f64>();
    let mut worst_off = 0.0f64;
    for cycles in [10, 20, 40, 80, 160] {
        match amp(off, cycles) {
            Ok((v, _, _)) => worst_off = worst_off.max(v),
            Err(e) => return outcome(false, e),
        }
    }
    outcome(
        (ratio - 2.0).abs() <= 0.2 && worst_off <= bound,
        format!("on-resonance |I(2T)|/|I(T)| = {ratio:.3} (2 +- 10%); off-resonance max |I| {worst_off:.2e} <= bound {bound:.2e}"),
    )
}

fn run_cutoff_dependent(spec: &HilbertSpec, print: bool) -> Vec<(String, Outcome)> {
    let mut out = Vec::new();
    let mut push = |id: &str, name: &str, o: Outcome| {
        if print {
            report(id, name, &o);
        }
        out.push((id.to_string(), o));
    };
    push("1", "Dyson-equation residual", c1_dyson(spec));
    push("2", "spectrum reality and closed-form match", c2_spectrum(spec));
    push("3", "first-order correction vanishes", c3_first_order(spec));
    push("4", "matrix-element oracle", c4_matrix_elements(spec));
    let (c5, info) = c5_second_order(spec);
    push("5", "second-order consistency", c5);
    if print {
        println!("{info}");
    }
    push("6", "B/D identity", c6_bd(spec));
    push("7", "closed-protocol null", c7_closed_null(spec));
    push("8", "suppression zeros", c8_suppression(spec));
    push("9", "evolution cross-validation", c9_evolution(spec));
    out
}

fn main() -> ExitCode {
    let base = HilbertSpec::new(64, 16).expect("valid space");
    let first = run_cutoff_dependent(&base, true);
    let c10 = c10_sideband();
    report("10", "sideband resonance", &c10);

    let big = base.with_cutoff(128).expect("valid space");
    let start = Instant::now();
    let second = run_cutoff_dependent(&big, false);
    let same: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.1.pass != b.1.pass)
        .map(|(a, _)| a.0.clone())
        .collect();
    let failing: Vec<String> = second.iter().filter(|(_, o)| !o.pass).map(|(id, _)| id.clone()).collect();
    for (id, o) in &second {
        println!("    cutoff 128, criterion {id}: {} {}", if o.pass { "pass" } else { "fail" }, o.detail);
    }
    let c11 = outcome(
        failing.is_empty(),
        format!(
            "at cutoff 128 failing: [{}]; verdicts differing from cutoff 64: [{}]; {:.1} s",
            failing.join(", "),
            same.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    report("11", "cutoff robustness", &c11);

    let all_pass = first.iter().all(|(_, o)| o.pass) && c10.pass && c11.pass;
    let passed = first.iter().filter(|(_, o)| o.pass).count() + usize::from(c10.pass) + usize::from(c11.pass);
    println!("acceptance: {passed}/11 criteria passed");
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
