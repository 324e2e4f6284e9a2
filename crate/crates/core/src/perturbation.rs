//! The squeezing perturbation `V_κ`, its closed-form matrix elements between
//! dressed states, and the first and second order level shifts.
//!
//! Everything here works in the real-`g` gauge: the phase of `g` is absorbed
//! into the basis, so dressed-state coefficients are real.

use nalgebra::DVector;
use serde::Serialize;

use crate::dyson::assemble_h0;
use crate::error::{ModelError, Result};
use crate::operators::{OperatorMatrix, OperatorTable, Spin};
use crate::scalar::{cabs2, ci, count, cr, czero, real, to_f64, Real, C};
use crate::spectra::{block, vacuum_energy, Branch, DressedState, SectorBlock};
use crate::trajectories::EffectiveParams;

/// `α_± = −κA_b ± iκ̇/2`
pub fn alpha_pm<T: Real>(eff: &EffectiveParams<T>) -> (C<T>, C<T>) {
    let re = -eff.kappa * eff.a_b;
    let im = eff.kappa_dot * real(0.5);
    (C::new(re, im), C::new(re, -im))
}

/// `V_κ` together with its `Q`-raising and `Q`-lowering parts.
pub struct VKappa<T: Real> {
    pub full: OperatorMatrix<T>,
    /// `α₊b†² − κ|g|S₋b†`
    pub plus2: OperatorMatrix<T>,
    /// `α₋b² − κ|g|S₊b`
    pub minus2: OperatorMatrix<T>,
}

/// `V_κ = −κA_b(b†²+b²) − κ|g|S₊b − κ|g|S₋b† + iκ̇K`, real-`g` gauge.
pub fn v_kappa<T: Real>(eff: &EffectiveParams<T>, ops: &OperatorTable<T>) -> VKappa<T> {
    let kg = cr(eff.kappa * eff.g_mod());
    let kab = cr(eff.kappa * eff.a_b);
    let full = -(&ops.b_dag2 + &ops.b2) * kab - &ops.sp_b * kg - &ops.sm_bdag * kg
        + &ops.k * (ci::<T>() * cr(eff.kappa_dot));
    let (ap, am) = alpha_pm(eff);
    let plus2 = &ops.b_dag2 * ap - &ops.sm_bdag * kg;
    let minus2 = &ops.b2 * am - &ops.sp_b * kg;
    VKappa { full, plus2, minus2 }
}

/// `⟨s', n'|V_κ|s, n⟩` from the operator definition, without matrices.
pub fn v_element<T: Real>(eff: &EffectiveParams<T>, to: (Spin, usize), from: (Spin, usize)) -> C<T> {
    let (ap, am) = alpha_pm(eff);
    let kg = eff.kappa * eff.g_mod();
    let ((s1, m), (s0, n)) = (to, from);
    let root = |k: usize| count::<T>(k).sqrt();
    let mut out = czero();
    if s1 == s0 && m == n + 2 {
        out += ap * cr(root((n + 1) * (n + 2)));
    }
    if s1 == s0 && n >= 2 && m == n - 2 {
        out += am * cr(root(n * (n - 1)));
    }
    // S₊b: |↓,n⟩ → √n |↑,n−1⟩
    if s0 == Spin::Down && s1 == Spin::Up && n >= 1 && m == n - 1 {
        out -= cr(kg * root(n));
    }
    // S₋b†: |↑,n⟩ → √(n+1) |↓,n+1⟩
    if s0 == Spin::Up && s1 == Spin::Down && m == n + 1 {
        out -= cr(kg * root(n + 1));
    }
    out
}

fn components<T: Real>(d: &DressedState<T>) -> [((Spin, usize), C<T>); 2] {
    let (a, b) = d.coefficients();
    [((Spin::Down, d.n), a), ((Spin::Up, d.n + 1), b)]
}

/// `⟨bra|V_κ|ket⟩` for dressed states given by their components.
pub fn sandwich_components<T: Real>(
    eff: &EffectiveParams<T>,
    bra: &[((Spin, usize), C<T>)],
    ket: &[((Spin, usize), C<T>)],
) -> C<T> {
    let mut acc = czero();
    for (to, cb) in bra {
        for (from, ck) in ket {
            acc += cb.conj() * v_element(eff, *to, *from) * *ck;
        }
    }
    acc
}

/// `⟨bra|V|ket⟩` with dense vectors.
pub fn sandwich<T: Real>(bra: &DVector<C<T>>, v: &OperatorMatrix<T>, ket: &DVector<C<T>>) -> C<T> {
    bra.dotc(&(v * ket))
}

/// The 2×2 sector data in the real gauge.
pub fn real_gauge_block<T: Real>(n: usize, eff: &EffectiveParams<T>) -> Result<SectorBlock<T>> {
    block(n, &eff.real_gauge())
}

/// Dressed-state angles `(c, s)` of both sectors entering an element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelAngles<T: Real> {
    pub c_src: T,
    pub s_src: T,
    pub c_dst: T,
    pub s_dst: T,
}

/// One closed-form matrix element and its building blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationElement<T: Real> {
    pub n: usize,
    pub sigma: Branch,
    pub n_target: usize,
    pub tau: Branch,
    pub value: C<T>,
    pub alpha_plus: C<T>,
    pub alpha_minus: C<T>,
    pub angles: ChannelAngles<T>,
    pub kappa: T,
    pub kappa_dot: T,
    pub g_mod: T,
}

/// The eight matrix elements `M_{n±2,τ;n,σ}` with the angles given
/// explicitly, so that callers can substitute derivatives of the angles.
pub fn m_formula<T: Real>(
    n: usize,
    upward: bool,
    tau: Branch,
    sigma: Branch,
    a: &ChannelAngles<T>,
    alpha: C<T>,
    kg: T,
) -> C<T> {
    let sq = |x: usize| cr(count::<T>(x).sqrt());
    let (cn, sn, cm, sm) = (cr(a.c_src), cr(a.s_src), cr(a.c_dst), cr(a.s_dst));
    let kg = cr(kg);
    use Branch::{Minus as M, Plus as P};
    if upward {
        let r1 = sq((n + 1) * (n + 2));
        let r2 = sq(n + 2);
        let r3 = sq((n + 2) * (n + 3));
        match (tau, sigma) {
            (P, P) => cm * (alpha * cn * r1 - kg * sn * r2) + sm * sn * alpha * r3,
            (M, P) => -sm * (alpha * cn * r1 - kg * sn * r2) + cm * sn * alpha * r3,
            (P, M) => -cm * (alpha * sn * r1 + kg * cn * r2) + sm * cn * alpha * r3,
            (M, M) => sm * (alpha * sn * r1 + kg * cn * r2) + cm * cn * alpha * r3,
        }
    } else {
        let r1 = sq(n * (n.saturating_sub(1)));
        let r2 = sq(n * (n + 1));
        let r3 = sq(n);
        match (tau, sigma) {
            (P, P) => cm * cn * alpha * r1 + sm * (alpha * sn * r2 - kg * cn * r3),
            (M, P) => -sm * cn * alpha * r1 + cm * (alpha * sn * r2 - kg * cn * r3),
            (P, M) => -cm * sn * alpha * r1 + sm * (alpha * cn * r2 + kg * sn * r3),
            (M, M) => sm * sn * alpha * r1 + cm * (alpha * cn * r2 + kg * sn * r3),
        }
    }
}

/// Closed-form `M_{n',τ;n,σ}`. Channels with `|n' − n| ≠ 2`, or downward
/// from `n < 2`, are rejected.
pub fn matrix_element<T: Real>(
    n_target: usize,
    tau: Branch,
    n: usize,
    sigma: Branch,
    eff: &EffectiveParams<T>,
) -> Result<PerturbationElement<T>> {
    let upward = n_target == n + 2;
    if !(upward || (n >= 2 && n_target + 2 == n)) {
        return Err(ModelError::InvalidChannel(format!("({n}, {sigma}) -> ({n_target}, {tau}) does not change n by 2")));
    }
    let src = real_gauge_block(n, eff)?;
    let dst = real_gauge_block(n_target, eff)?;
    let angles = ChannelAngles { c_src: src.cos_theta(), s_src: src.sin_theta(), c_dst: dst.cos_theta(), s_dst: dst.sin_theta() };
    let (ap, am) = alpha_pm(eff);
    let value = m_formula(n, upward, tau, sigma, &angles, if upward { ap } else { am }, eff.kappa * eff.g_mod());
    Ok(PerturbationElement {
        n,
        sigma,
        n_target,
        tau,
        value,
        alpha_plus: ap,
        alpha_minus: am,
        angles,
        kappa: eff.kappa,
        kappa_dot: eff.kappa_dot,
        g_mod: eff.g_mod(),
    })
}

/// `⟨ψ_{n'}^τ|V_κ|ψ_n^σ⟩` from dressed vectors and the `V_κ` matrix.
pub fn numerical_element<T: Real>(
    n_target: usize,
    tau: Branch,
    n: usize,
    sigma: Branch,
    eff: &EffectiveParams<T>,
    ops: &OperatorTable<T>,
    v: &OperatorMatrix<T>,
) -> Result<C<T>> {
    let bra = real_gauge_block(n_target, eff)?.dressed(tau).vector(&ops.spec);
    let ket = real_gauge_block(n, eff)?.dressed(sigma).vector(&ops.spec);
    Ok(sandwich(&bra, v, &ket))
}

/// `⟨ψ_n^σ|V_κ|ψ_n^σ⟩`, evaluated numerically. Vanishes identically.
pub fn first_order<T: Real>(n: usize, sigma: Branch, eff: &EffectiveParams<T>, ops: &OperatorTable<T>) -> Result<T> {
    let v = v_kappa(eff, ops);
    let psi = real_gauge_block(n, eff)?.dressed(sigma).vector(&ops.spec);
    Ok(sandwich(&psi, &v.full, &psi).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SecondOrderOptions {
    /// Add the `n = 1 ↔ |↑,0⟩` coupling left out of the sector sum.
    pub include_vacuum_channel: bool,
}

impl SecondOrderOptions {
    pub const SECTOR_ONLY: Self = Self { include_vacuum_channel: false };
    pub const WITH_VACUUM: Self = Self { include_vacuum_channel: true };
}

/// One term `|M|²/(E_n^σ − E_target)` of the second-order sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelContribution {
    /// `None` is the vacuum state.
    pub target: Option<(usize, Branch)>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyCorrection {
    /// `None` is the vacuum level.
    pub n: Option<usize>,
    pub branch: Option<Branch>,
    pub t: f64,
    pub energy: f64,
    pub first_order: f64,
    /// `None` when a denominator is degenerate.
    pub second_order: Option<f64>,
    pub channels: Vec<ChannelContribution>,
    pub degenerate: bool,
}

/// Degeneracy threshold for second-order denominators.
fn too_close<T: Real>(gap: T, omega: T) -> bool {
    gap.abs() <= real::<T>(1e-8) * omega
}

/// Second-order shift of `E_n^σ`.
pub fn second_order<T: Real>(
    n: usize,
    sigma: Branch,
    eff: &EffectiveParams<T>,
    opts: SecondOrderOptions,
) -> Result<EnergyCorrection> {
    let src = real_gauge_block(n, eff)?;
    let e = src.energy(sigma);
    let comps = components(&src.dressed(sigma));
    let first = sandwich_components(eff, &comps, &comps).re;
    let mut channels = Vec::new();
    let mut degenerate = false;
    let mut total = T::zero();
    let mut targets: Vec<usize> = vec![n + 2];
    if n >= 2 {
        targets.push(n - 2);
    }
    for m in targets {
        let dst = real_gauge_block(m, eff)?;
        for tau in Branch::BOTH {
            let el = matrix_element(m, tau, n, sigma, eff)?;
            let gap = e - dst.energy(tau);
            if too_close(gap, src.omega) {
                degenerate = true;
                continue;
            }
            let v = cabs2(el.value) / gap;
            total += v;
            channels.push(ChannelContribution { target: Some((m, tau)), value: to_f64(v) });
        }
    }
    if opts.include_vacuum_channel && n == 1 {
        let vac = [((Spin::Up, 0), C::new(T::one(), T::zero()))];
        let el = sandwich_components(eff, &vac, &comps);
        let gap = e - vacuum_energy(eff);
        if too_close(gap, src.omega) {
            degenerate = true;
        } else {
            let v = cabs2(el) / gap;
            total += v;
            channels.push(ChannelContribution { target: None, value: to_f64(v) });
        }
    }
    Ok(EnergyCorrection {
        n: Some(n),
        branch: Some(sigma),
        t: to_f64(eff.t),
        energy: to_f64(e),
        first_order: to_f64(first),
        second_order: if degenerate { None } else { Some(to_f64(total)) },
        channels,
        degenerate,
    })
}

/// Second-order shift of the vacuum level through its coupling to sector 1.
pub fn vacuum_second_order<T: Real>(eff: &EffectiveParams<T>) -> Result<EnergyCorrection> {
    let one = real_gauge_block(1, eff)?;
    let e = vacuum_energy(eff);
    let vac = [((Spin::Up, 0), C::new(T::one(), T::zero()))];
    let mut total = T::zero();
    let mut channels = Vec::new();
    let mut degenerate = false;
    for tau in Branch::BOTH {
        let el = sandwich_components(eff, &components(&one.dressed(tau)), &vac);
        let gap = e - one.energy(tau);
        if too_close(gap, one.omega) {
            degenerate = true;
            continue;
        }
        let v = cabs2(el) / gap;
        total += v;
        channels.push(ChannelContribution { target: Some((1, tau)), value: to_f64(v) });
    }
    Ok(EnergyCorrection {
        n: None,
        branch: None,
        t: to_f64(eff.t),
        energy: to_f64(e),
        first_order: to_f64(sandwich_components(eff, &vac, &vac).re),
        second_order: if degenerate { None } else { Some(to_f64(total)) },
        channels,
        degenerate,
    })
}

/// Which operator the perturbed level is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactReference {
    /// `h₀ + V_κ`, the operator perturbation theory expands.
    FirstOrderOperator,
    /// The full partner, through its squeezed-frame form `h₀ + iκ̇K`.
    FullPartner,
}

/// Eigenvalue of the chosen reference operator whose eigenvector overlaps
/// most with the unperturbed state (`n = None` for the vacuum).
pub fn exact_level<T: Real>(
    n: Option<usize>,
    sigma: Branch,
    eff: &EffectiveParams<T>,
    ops: &OperatorTable<T>,
    reference: ExactReference,
) -> Result<T> {
    let gauge = eff.real_gauge();
    let h0 = assemble_h0(&gauge, ops);
    let h = match reference {
        ExactReference::FirstOrderOperator => h0 + v_kappa(&gauge, ops).full,
        ExactReference::FullPartner => h0 + &ops.k * (ci::<T>() * cr(gauge.kappa_dot)),
    };
    let psi = match n {
        Some(n) => real_gauge_block(n, &gauge)?.dressed(sigma).vector(&ops.spec),
        None => crate::spectra::vacuum_state(&ops.spec),
    };
    let pairs = crate::spectra::diagonalize_full(&h, &ops.spec)?;
    pairs
        .iter()
        .map(|p| (cabs2(p.vector.dotc(&psi)), p.energy))
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite overlaps"))
        .map(|(_, e)| e)
        .ok_or_else(|| ModelError::InvalidParameters("no guarded eigenpairs".into()))
}
