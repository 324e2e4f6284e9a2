//! Assembly of `H(t)`, the Dyson map, the closed-form Hermitian partner and
//! the energy operator, plus the numerical check of the Dyson equation.
//!
//! The squeezing factor does not commute with truncation: `S N S⁻¹` computed
//! at the working cutoff is wrong well inside the guarded window. Operator
//! identities are therefore checked in a padded boson space
//! ([`HilbertSpec::verification_cutoff`]) and only then restricted.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::operators::{
    guarded_hermiticity_defect, hermiticity_defect, make_boson_ops, max_abs, restrict, HilbertSpec, OperatorMatrix,
    OperatorTable, SqueezeGenerator, Spin,
};
use crate::scalar::{ccosh, ci, cexp, cone, cr, csinh, czero, real, to_f64, Real, C};
use crate::trajectories::{require_bounded, EffectiveParams, ParameterSet};

fn half<T: Real>() -> C<T> {
    cr(real(0.5))
}

/// `H = ω_f S₀ + ω_b N + α S₊b† + β S₋b`
pub fn assemble_h<T: Real>(params: &ParameterSet<T>, t: T, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    &ops.s0 * params.omega_f.eval(t)
        + &ops.num * params.omega_b.eval(t)
        + &ops.sp_bdag * params.alpha.eval(t)
        + &ops.sm_b * params.beta.eval(t)
}

/// `cosh(2κ)N − ½ sinh(2κ)(b†² + b²) + sinh²κ`, i.e. `S N S⁻¹`.
fn squeezed_number<T: Real>(kappa: C<T>, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    let two = cr(real::<T>(2.0));
    let sh = csinh(kappa);
    &ops.num * ccosh(two * kappa) - (&ops.b_dag2 + &ops.b2) * (half::<T>() * csinh(two * kappa))
        + &ops.identity * (sh * sh)
}

/// The closed-form partner, term by term, from the complex trajectories.
/// Hermitian exactly when the Hermiticity conditions hold.
pub fn assemble_h_closed<T: Real>(params: &ParameterSet<T>, t: T, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    let kappa = params.kappa.eval(t);
    let kappa_dot = params.kappa.deriv(t);
    let (ch, sh) = (ccosh(kappa), csinh(kappa));
    &ops.s0 * params.a_f_complex(t)
        + squeezed_number(kappa, ops) * params.a_b_complex(t)
        + (&ops.sp_bdag * ch - &ops.sp_b * sh) * params.g(t)
        + (&ops.sm_b * ch - &ops.sm_bdag * sh) * params.g_lower(t)
        + (&ops.b_dag2 - &ops.b2) * (ci::<T>() * kappa_dot * half::<T>())
}

/// `h₀ = A_f S₀ + A_b N + g S₊b† + g* S₋b`.
pub fn assemble_h0<T: Real>(eff: &EffectiveParams<T>, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    &ops.s0 * cr(eff.a_f) + &ops.num * cr(eff.a_b) + &ops.sp_bdag * eff.g + &ops.sm_b * eff.g.conj()
}

/// `h₀ + iκ̇K`, the partner seen from the squeezed frame: `S⁻¹ h S`.
/// Banded, so its truncation is harmless, unlike that of `h` itself.
pub fn assemble_h_frame<T: Real>(eff: &EffectiveParams<T>, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    assemble_h0(eff, ops) + &ops.k * (ci::<T>() * cr(eff.kappa_dot))
}

/// `η̇η⁻¹ = κ̇K + γ̇ S N S⁻¹ + δ̇S₀`
pub fn eta_dot_eta_inv<T: Real>(params: &ParameterSet<T>, t: T, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    &ops.k * params.kappa.deriv(t)
        + squeezed_number(params.kappa.eval(t), ops) * params.gamma.deriv(t)
        + &ops.s0 * params.delta.deriv(t)
}

/// `η⁻¹η̇ = (κ̇/2)(e^{−2γ}b†² − e^{2γ}b²) + γ̇N + δ̇S₀`
pub fn eta_inv_eta_dot<T: Real>(params: &ParameterSet<T>, t: T, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    let two = cr(real::<T>(2.0));
    let gamma = params.gamma.eval(t);
    let kd = params.kappa.deriv(t) * half::<T>();
    &ops.b_dag2 * (kd * cexp(-two * gamma)) - &ops.b2 * (kd * cexp(two * gamma))
        + &ops.num * params.gamma.deriv(t)
        + &ops.s0 * params.delta.deriv(t)
}

/// Energy operator `H̃ = A_f S₀ + A_b N + αS₊b† + βS₋b + (iκ̇/2)(e^{−2γ}b†² − e^{2γ}b²)`.
pub fn assemble_htilde<T: Real>(params: &ParameterSet<T>, t: T, ops: &OperatorTable<T>) -> OperatorMatrix<T> {
    let two = cr(real::<T>(2.0));
    let gamma = params.gamma.eval(t);
    let kd = ci::<T>() * params.kappa.deriv(t) * half::<T>();
    &ops.s0 * params.a_f_complex(t)
        + &ops.num * params.a_b_complex(t)
        + &ops.sp_bdag * params.alpha.eval(t)
        + &ops.sm_b * params.beta.eval(t)
        + &ops.b_dag2 * (kd * cexp(-two * gamma))
        - &ops.b2 * (kd * cexp(two * gamma))
}

/// `(η, η⁻¹)` at the table's own cutoff.
pub fn assemble_eta<T: Real>(
    params: &ParameterSet<T>,
    t: T,
    ops: &OperatorTable<T>,
    squeeze: &SqueezeGenerator<T>,
) -> Result<(OperatorMatrix<T>, OperatorMatrix<T>)> {
    let kappa = params.kappa.eval(t);
    let gamma = params.gamma.eval(t);
    let delta = params.delta.eval(t);
    let s = squeeze.exp_lifted(kappa, &ops.spec);
    let s_inv = squeeze.exp_lifted(-kappa, &ops.spec);
    let eta = &s * ops.exp_num(gamma) * ops.exp_s0(delta);
    let eta_inv = ops.exp_s0(-delta) * ops.exp_num(-gamma) * s_inv;
    if !crate::operators::all_finite(&eta) || !crate::operators::all_finite(&eta_inv) {
        return Err(ModelError::NonFinite("Dyson map overflow"));
    }
    Ok((eta, eta_inv))
}

/// Spin-blocked boson operators: `blocks[s][r]` maps spin `r` to spin `s`.
struct Blocks<T: Real> {
    blocks: [[OperatorMatrix<T>; 2]; 2],
}

impl<T: Real> Blocks<T> {
    fn zeros(m: usize) -> Self {
        let z = || OperatorMatrix::<T>::zeros(m, m);
        Self { blocks: [[z(), z()], [z(), z()]] }
    }

    /// Restrict every block to levels `< w` and assemble the full guarded
    /// matrix in the ordering of [`restrict`].
    fn assemble(&self, w: usize) -> OperatorMatrix<T> {
        let mut out = OperatorMatrix::zeros(2 * w, 2 * w);
        for s in 0..2 {
            for r in 0..2 {
                out.view_mut((s * w, r * w), (w, w)).copy_from(&self.blocks[s][r].view((0, 0), (w, w)));
            }
        }
        out
    }
}

/// Boson operators and squeezing factor at the padded verification cutoff.
pub struct PaddedSpace<T: Real> {
    pub cutoff: usize,
    b: OperatorMatrix<T>,
    b_dag: OperatorMatrix<T>,
    num: OperatorMatrix<T>,
    squeeze: SqueezeGenerator<T>,
}

impl<T: Real> PaddedSpace<T> {
    pub fn new(cutoff: usize) -> Self {
        let spec = HilbertSpec::new(cutoff, 1.max(cutoff / 4)).expect("padded cutoff is valid");
        let ops = make_boson_ops::<T>(&spec);
        Self { cutoff, b: ops.b, b_dag: ops.b_dag, num: ops.num, squeeze: SqueezeGenerator::new(cutoff) }
    }

    fn diag_exp_num(&self, x: C<T>) -> Vec<C<T>> {
        (0..self.cutoff).map(|n| cexp(x * cr(crate::scalar::count::<T>(n)))).collect()
    }

    /// `e^{γN} e^{δS₀} H e^{−δS₀} e^{−γN}` in blocks.
    fn scaled_h(&self, params: &ParameterSet<T>, t: T) -> Blocks<T> {
        let m = self.cutoff;
        let gamma = params.gamma.eval(t);
        let delta = params.delta.eval(t);
        let wf = params.omega_f.eval(t) * half::<T>();
        let wb = params.omega_b.eval(t);
        let up = self.diag_exp_num(gamma);
        let down = self.diag_exp_num(-gamma);
        let mut out = Blocks::zeros(m);
        for n in 0..m {
            let nn = self.num[(n, n)] * wb;
            out.blocks[0][0][(n, n)] = wf + nn;
            out.blocks[1][1][(n, n)] = -wf + nn;
        }
        // spin factor: e^{δ(s₀ − s₀')} is e^{δ} for up←down and e^{−δ} for down←up
        let alpha = params.alpha.eval(t) * cexp(delta);
        let beta = params.beta.eval(t) * cexp(-delta);
        for i in 0..m {
            for j in 0..m {
                let conj = up[i] * down[j];
                let bd = self.b_dag[(i, j)];
                if bd != czero() {
                    out.blocks[0][1][(i, j)] = alpha * bd * conj;
                }
                let b = self.b[(i, j)];
                if b != czero() {
                    out.blocks[1][0][(i, j)] = beta * b * conj;
                }
            }
        }
        out
    }

    /// `S X S⁻¹` restricted to levels `< w`, block by block.
    fn squeeze_conjugate(&self, x: &Blocks<T>, kappa: C<T>, w: usize) -> OperatorMatrix<T> {
        let s = self.squeeze.exp(kappa);
        let s_inv = self.squeeze.exp(-kappa);
        let s_rows = s.rows(0, w).into_owned();
        let s_inv_cols = s_inv.columns(0, w).into_owned();
        let mut out = Blocks::zeros(w);
        for a in 0..2 {
            for r in 0..2 {
                let left = &s_rows * &x.blocks[a][r];
                out.blocks[a][r] = left * &s_inv_cols;
            }
        }
        out.assemble(w)
    }

    /// `η̇η⁻¹` from the analytic product rule, restricted to levels `< w`.
    fn eta_dot_eta_inv(&self, params: &ParameterSet<T>, t: T, w: usize) -> OperatorMatrix<T> {
        let kappa = params.kappa.eval(t);
        let two = cr(real::<T>(2.0));
        let b2 = &self.b * &self.b;
        let bd2 = &self.b_dag * &self.b_dag;
        let sh = csinh(kappa);
        let sq_num = &self.num * ccosh(two * kappa) - (&bd2 + &b2) * (half::<T>() * csinh(two * kappa))
            + OperatorMatrix::identity(self.cutoff, self.cutoff) * (sh * sh);
        let k = (&bd2 - &b2) * half::<T>();
        let boson = k * params.kappa.deriv(t) + sq_num * params.gamma.deriv(t);
        let dd = params.delta.deriv(t) * half::<T>();
        let mut out = Blocks::zeros(self.cutoff);
        out.blocks[0][0] = &boson + OperatorMatrix::identity(self.cutoff, self.cutoff) * dd;
        out.blocks[1][1] = &boson - OperatorMatrix::identity(self.cutoff, self.cutoff) * dd;
        out.assemble(w)
    }

    /// `η (η⁻¹η̇) η⁻¹`, the independent route to `η̇η⁻¹`.
    fn eta_dot_eta_inv_via_conjugation(&self, params: &ParameterSet<T>, t: T, w: usize) -> OperatorMatrix<T> {
        let m = self.cutoff;
        let two = cr(real::<T>(2.0));
        let gamma = params.gamma.eval(t);
        let kd = params.kappa.deriv(t) * half::<T>();
        let b2 = &self.b * &self.b;
        let bd2 = &self.b_dag * &self.b_dag;
        let inner = &bd2 * (kd * cexp(-two * gamma)) - &b2 * (kd * cexp(two * gamma))
            + &self.num * params.gamma.deriv(t);
        // conjugate the boson part by e^{γN}
        let up = self.diag_exp_num(gamma);
        let down = self.diag_exp_num(-gamma);
        let scaled = OperatorMatrix::from_fn(m, m, |i, j| inner[(i, j)] * up[i] * down[j]);
        let dd = params.delta.deriv(t) * half::<T>();
        let mut x = Blocks::zeros(m);
        x.blocks[0][0] = &scaled + OperatorMatrix::identity(m, m) * dd;
        x.blocks[1][1] = &scaled - OperatorMatrix::identity(m, m) * dd;
        self.squeeze_conjugate(&x, params.kappa.eval(t), w)
    }
}

/// Outcome of one Dyson-equation check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DysonResidual {
    pub t: f64,
    /// `‖ηHη⁻¹ + iη̇η⁻¹ − h_closed‖` on the guarded subspace.
    pub defect_eq: f64,
    /// Hermiticity defect of `ηHη⁻¹ + iη̇η⁻¹` on the guarded subspace.
    pub defect_herm: f64,
    /// Agreement of the two analytic forms of the map derivative.
    pub derivative_cross_check: f64,
    pub working_cutoff: usize,
}

/// Operators of one Hilbert space plus the padded verification space.
pub struct ModelOperators<T: Real> {
    pub spec: HilbertSpec,
    pub ops: OperatorTable<T>,
    pub squeeze: SqueezeGenerator<T>,
    pub padded: PaddedSpace<T>,
    /// Refuse unbounded maps unless set.
    pub allow_unbounded: bool,
}

impl<T: Real> ModelOperators<T> {
    pub fn new(spec: &HilbertSpec) -> Self {
        Self::with_working_cutoff(spec, spec.verification_cutoff())
    }

    pub fn with_working_cutoff(spec: &HilbertSpec, working: usize) -> Self {
        Self {
            spec: *spec,
            ops: OperatorTable::new(spec),
            squeeze: SqueezeGenerator::new(spec.fock_cutoff()),
            padded: PaddedSpace::new(working.max(spec.fock_cutoff())),
            allow_unbounded: false,
        }
    }

    pub fn h(&self, params: &ParameterSet<T>, t: T) -> OperatorMatrix<T> {
        assemble_h(params, t, &self.ops)
    }

    pub fn h_closed(&self, params: &ParameterSet<T>, t: T) -> OperatorMatrix<T> {
        assemble_h_closed(params, t, &self.ops)
    }

    pub fn htilde(&self, params: &ParameterSet<T>, t: T) -> OperatorMatrix<T> {
        assemble_htilde(params, t, &self.ops)
    }

    pub fn eta(&self, params: &ParameterSet<T>, t: T) -> Result<(OperatorMatrix<T>, OperatorMatrix<T>)> {
        require_bounded(params, self.allow_unbounded)?;
        assemble_eta(params, t, &self.ops, &self.squeeze)
    }

    /// `ηHη⁻¹ + iη̇η⁻¹` on the guarded subspace, computed in the padded space.
    pub fn h_numeric(&self, params: &ParameterSet<T>, t: T) -> Result<OperatorMatrix<T>> {
        require_bounded(params, self.allow_unbounded)?;
        let w = self.spec.window();
        let x = self.padded.scaled_h(params, t);
        let conj = self.padded.squeeze_conjugate(&x, params.kappa.eval(t), w);
        let gauge = self.padded.eta_dot_eta_inv(params, t, w);
        let out = conj + gauge * ci::<T>();
        if !crate::operators::all_finite(&out) {
            return Err(ModelError::NonFinite("Dyson map overflow"));
        }
        Ok(out)
    }

    pub fn dyson_residual(&self, params: &ParameterSet<T>, t: T) -> Result<DysonResidual> {
        let numeric = self.h_numeric(params, t)?;
        let closed = restrict(&self.h_closed(params, t), &self.spec);
        let w = self.spec.window();
        let a = self.padded.eta_dot_eta_inv(params, t, w);
        let b = self.padded.eta_dot_eta_inv_via_conjugation(params, t, w);
        Ok(DysonResidual {
            t: to_f64(t),
            defect_eq: to_f64(max_abs(&(&numeric - &closed))),
            defect_herm: to_f64(hermiticity_defect(&numeric)),
            derivative_cross_check: to_f64(max_abs(&(a - b))),
            working_cutoff: self.padded.cutoff,
        })
    }

    /// `‖H̃ − H − iη⁻¹η̇‖` at the working cutoff.
    pub fn htilde_consistency(&self, params: &ParameterSet<T>, t: T) -> T {
        let lhs = self.htilde(params, t);
        let rhs = self.h(params, t) + eta_inv_eta_dot(params, t, &self.ops) * ci::<T>();
        max_abs(&(lhs - rhs))
    }

    pub fn h_closed_hermiticity(&self, params: &ParameterSet<T>, t: T) -> T {
        guarded_hermiticity_defect(&self.h_closed(params, t), &self.spec)
    }
}

/// Index of `|s, n⟩` inside the guarded ordering of [`restrict`].
pub fn guarded_index(spec: &HilbertSpec, spin: Spin, n: usize) -> usize {
    match spin {
        Spin::Up => n,
        Spin::Down => spec.window() + n,
    }
}

/// Dense identity helper used by tests and callers comparing to `1`.
pub fn identity<T: Real>(dim: usize) -> OperatorMatrix<T> {
    DMatrix::from_fn(dim, dim, |i, j| if i == j { cone() } else { czero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{guarded_max_abs, HilbertSpec};
    use crate::scalar::cplx;
    use crate::trajectories::{fig1_parameters, solution_i_from_delta, TimeFunction};

    fn spec() -> HilbertSpec {
        HilbertSpec::new(24, 6).unwrap()
    }

    #[test]
    fn decoupled_h_is_diagonal() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let p = crate::trajectories::ParameterSet::custom(
            TimeFunction::real_constant(1.0),
            TimeFunction::real_constant(1.0),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
            TimeFunction::zero(),
        );
        let h = assemble_h(&p, 0.3, &ops);
        for i in 0..s.dim() {
            let (spin, n) = s.label(i);
            assert_eq!(h[(i, i)], cr(n as f64 + spin.s0::<f64>()));
        }
        assert_eq!(max_abs(&(h.clone() - OperatorMatrix::from_diagonal(&h.diagonal()))), 0.0);
    }

    #[test]
    fn static_eta_factors() {
        let s = spec();
        let m = ModelOperators::<f64>::new(&s);
        let base = fig1_parameters::<f64>();
        let with = |k: f64, d: f64| crate::trajectories::ParameterSet {
            kappa: TimeFunction::real_constant(k),
            delta: TimeFunction::real_constant(d),
            ..base.clone()
        };
        let (e, ei) = m.eta(&with(0.0, 0.0), 0.0).unwrap();
        assert!(max_abs(&(e - identity::<f64>(s.dim()))) < 1e-13);
        assert!(max_abs(&(ei - identity::<f64>(s.dim()))) < 1e-13);
        let (e, _) = m.eta(&with(0.0, 0.2), 0.0).unwrap();
        assert!((e[(s.index(Spin::Up, 3), s.index(Spin::Up, 3))].re - 0.1f64.exp()).abs() < 1e-13);
        assert!((e[(s.index(Spin::Down, 3), s.index(Spin::Down, 3))].re - (-0.1f64).exp()).abs() < 1e-13);
        let (e, ei) = m.eta(&with(0.3, 0.0), 0.0).unwrap();
        assert!(guarded_max_abs(&(e.adjoint() * &e - identity::<f64>(s.dim())), &s) < 1e-10);
        assert!(max_abs(&(e * ei - identity::<f64>(s.dim()))) < 1e-12);
    }

    #[test]
    fn h_closed_reduces_without_squeezing() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let p = fig1_parameters::<f64>().with_kappa(TimeFunction::zero());
        let t = 1.1;
        let a = assemble_h_closed(&p, t, &ops);
        let b = assemble_h0(&p.effective(t), &ops);
        assert!(max_abs(&(a - b)) < 1e-14);
    }

    #[test]
    fn dyson_equation_holds_in_padded_space() {
        let s = spec();
        let m = ModelOperators::<f64>::new(&s);
        let p = fig1_parameters::<f64>();
        for t in [0.0, 0.7, 3.3, 9.1] {
            let r = m.dyson_residual(&p, t).unwrap();
            assert!(r.defect_eq < 1e-8, "{r:?}");
            assert!(r.defect_herm < 1e-8, "{r:?}");
            assert!(r.derivative_cross_check < 1e-9, "{r:?}");
            assert!(m.h_closed_hermiticity(&p, t) < 1e-10);
        }
    }

    #[test]
    fn naive_truncation_is_not_enough() {
        // Same check at the working cutoff itself: the squeeze factor's
        // truncation damages the guarded window.
        let s = spec();
        let naive = ModelOperators::<f64>::with_working_cutoff(&s, s.fock_cutoff());
        let p = fig1_parameters::<f64>().with_kappa(TimeFunction::real_constant(0.3));
        assert!(naive.dyson_residual(&p, 0.5).unwrap().defect_eq > 1e-6);
    }

    #[test]
    fn violated_condition_breaks_hermiticity() {
        let s = spec();
        let m = ModelOperators::<f64>::new(&s);
        let base = solution_i_from_delta(
            TimeFunction::real_constant(0.1),
            TimeFunction::real_constant(1.0),
            TimeFunction::real_constant(1.0),
            cplx(0.0, 0.0),
            TimeFunction::zero(),
        )
        .unwrap();
        let bad = base.clone().with_beta(base.alpha.clone());
        let r = m.dyson_residual(&bad, 0.4).unwrap();
        assert!(r.defect_herm > 0.01);
        // β = α: H itself is Hermitian, yet the non-unitary map spoils h
        let h = m.h(&bad, 0.4);
        assert!(hermiticity_defect(&h) < 1e-14);
        let gen = m.h(&base, 0.4);
        let want = (0.2f64.exp() - 1.0) * ((s.fock_cutoff() - 1) as f64).sqrt();
        assert!((hermiticity_defect(&gen) - want).abs() < 1e-12);
    }

    #[test]
    fn htilde_identities() {
        let s = spec();
        let m = ModelOperators::<f64>::new(&s);
        let p = fig1_parameters::<f64>();
        for t in [0.2, 1.7, 5.0] {
            assert!(m.htilde_consistency(&p, t) < 1e-10);
        }
        let stat = fig1_parameters::<f64>().with_kappa(TimeFunction::real_constant(0.2));
        let stat = crate::trajectories::ParameterSet {
            delta: TimeFunction::real_constant(0.2),
            omega_f: TimeFunction::zero(),
            ..stat
        };
        assert!(max_abs(&(m.htilde(&stat, 0.9) - m.h(&stat, 0.9))) < 1e-14);
        // κ̇ ≠ 0, γ = 0: H̃ − H = (iκ̇/2)(b†² − b²) + iδ̇S₀
        let t = 0.6;
        let diff = m.htilde(&p, t) - m.h(&p, t);
        let want = (&m.ops.b_dag2 - &m.ops.b2) * (ci::<f64>() * p.kappa.deriv(t) * 0.5)
            + &m.ops.s0 * (ci::<f64>() * p.delta.deriv(t));
        assert!(max_abs(&(diff - want)) < 1e-14);
    }

    #[test]
    fn unbounded_map_is_refused() {
        let s = spec();
        let m = ModelOperators::<f64>::new(&s);
        let p = crate::trajectories::ParameterSet { gamma: TimeFunction::real_constant(0.2), ..fig1_parameters() };
        assert!(matches!(m.eta(&p, 0.0), Err(ModelError::Unbounded(_))));
        assert!(matches!(m.dyson_residual(&p, 0.0), Err(ModelError::Unbounded(_))));
    }

    #[test]
    fn eta_derivative_matches_finite_difference() {
        let s = spec();
        let m = ModelOperators::<f64>::new(&s);
        let p = crate::trajectories::ParameterSet { gamma: TimeFunction::sin(cplx(0.0, 0.3), 1.3), ..fig1_parameters() };
        let t = 0.8;
        let h = 1e-6;
        let (ep, _) = m.eta(&p, t + h).unwrap();
        let (em, _) = m.eta(&p, t - h).unwrap();
        let (_, ei) = m.eta(&p, t).unwrap();
        let fd = (ep - em) * cr(0.5 / h) * ei;
        let exact = m.padded.eta_dot_eta_inv(&p, t, s.window());
        let fd_r = restrict(&fd, &s);
        // guarded rows only see truncation of the top levels weakly
        let dd = max_abs(&(fd_r.view((0, 0), (10, 10)).into_owned() - exact.view((0, 0), (10, 10)).into_owned()));
        assert!(dd < 1e-6, "{dd}");
    }
}
