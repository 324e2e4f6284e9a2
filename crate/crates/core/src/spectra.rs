//! Sector blocks, closed-form instantaneous levels and dressed states, and
//! the full-matrix diagonalization used as their oracle.

use std::fmt;

use nalgebra::{DVector, Schur, SymmetricEigen};
use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::operators::{guard_weight, hermiticity_defect, restrict, HilbertSpec, OperatorMatrix, OperatorTable, Spin};
use crate::scalar::{cabs, cone, count, cr, czero, phase, real, to_f64, Real, C};
use crate::trajectories::EffectiveParams;

/// Guard-band weight below which an eigenvector counts as converged.
pub const GUARD_WEIGHT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];

    pub fn sign<T: Real>(self) -> T {
        match self {
            Branch::Plus => T::one(),
            Branch::Minus => -T::one(),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        })
    }
}

/// The restriction of `h₀` to `{|↓,n⟩, |↑,n+1⟩}` and its closed-form solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBlock<T: Real> {
    pub n: usize,
    /// Matrix in the basis `(|↓,n⟩, |↑,n+1⟩)`.
    pub matrix: [[C<T>; 2]; 2],
    pub e_plus: T,
    pub e_minus: T,
    pub omega: T,
    /// Mixing angle with `2θ ∈ [0, π]`.
    pub theta: T,
    /// Phase of `g`.
    pub phi: T,
}

impl<T: Real> SectorBlock<T> {
    pub fn energy(&self, branch: Branch) -> T {
        match branch {
            Branch::Plus => self.e_plus,
            Branch::Minus => self.e_minus,
        }
    }

    pub fn cos_theta(&self) -> T {
        self.theta.cos()
    }

    pub fn sin_theta(&self) -> T {
        self.theta.sin()
    }

    pub fn dressed(&self, branch: Branch) -> DressedState<T> {
        DressedState { n: self.n, branch, c: self.cos_theta(), s: self.sin_theta(), phase: phase(self.phi) }
    }
}

/// `Ω_n = √((A_b + A_f)² + 4|g|²(n+1))`
pub fn omega_n<T: Real>(eff: &EffectiveParams<T>, n: usize) -> T {
    let s = eff.a_b + eff.a_f;
    let g = eff.g_mod();
    (s * s + real::<T>(4.0) * g * g * count::<T>(n + 1)).sqrt()
}

/// `E_n^± = A_b(n + ½) ± Ω_n/2`
pub fn sector_energy<T: Real>(eff: &EffectiveParams<T>, n: usize, branch: Branch) -> T {
    eff.a_b * (count::<T>(n) + real(0.5)) + branch.sign::<T>() * omega_n(eff, n) * real(0.5)
}

/// `E_vac = A_f/2`, the energy of the uncoupled state `|↑,0⟩`.
pub fn vacuum_energy<T: Real>(eff: &EffectiveParams<T>) -> T {
    eff.a_f * real(0.5)
}

fn degenerate_threshold<T: Real>(eff: &EffectiveParams<T>) -> T {
    real::<T>(1e-10) * eff.a_b.abs().max(eff.g_mod()).max(T::one())
}

pub fn block<T: Real>(n: usize, eff: &EffectiveParams<T>) -> Result<SectorBlock<T>> {
    let s = eff.a_b + eff.a_f;
    let g = eff.g_mod();
    let root = count::<T>(n + 1).sqrt();
    let omega = omega_n(eff, n);
    if omega < degenerate_threshold(eff) {
        return Err(ModelError::DegenerateSector { n, omega: to_f64(omega) });
    }
    // 2θ = atan2(sin 2θ, cos 2θ) with cos 2θ = −S/Ω, sin 2θ = 2|g|√(n+1)/Ω ≥ 0
    let theta = (real::<T>(2.0) * g * root).atan2(-s) * real(0.5);
    let lo = eff.a_b * count::<T>(n) - eff.a_f * real(0.5);
    let hi = eff.a_b * count::<T>(n + 1) + eff.a_f * real(0.5);
    // ⟨↓,n|g* S₋b|↑,n+1⟩ = g*√(n+1)
    let matrix = [[cr(lo), eff.g.conj() * cr(root)], [eff.g * cr(root), cr(hi)]];
    Ok(SectorBlock {
        n,
        matrix,
        e_plus: sector_energy(eff, n, Branch::Plus),
        e_minus: sector_energy(eff, n, Branch::Minus),
        omega,
        theta,
        phi: eff.phi(),
    })
}

/// Instantaneous eigenstate of `h₀` in sector `n`.
///
/// `ψ⁺ = c|↓,n⟩ + e^{iφ}s|↑,n+1⟩`, `ψ⁻ = −s|↓,n⟩ + e^{iφ}c|↑,n+1⟩`.
/// The sign of the phase follows from the block of the actual operator,
/// whose lower-left entry is `g√(n+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedState<T: Real> {
    pub n: usize,
    pub branch: Branch,
    pub c: T,
    pub s: T,
    pub phase: C<T>,
}

impl<T: Real> DressedState<T> {
    /// Amplitudes on `(|↓,n⟩, |↑,n+1⟩)`.
    pub fn coefficients(&self) -> (C<T>, C<T>) {
        match self.branch {
            Branch::Plus => (cr(self.c), self.phase * cr(self.s)),
            Branch::Minus => (cr(-self.s), self.phase * cr(self.c)),
        }
    }

    pub fn vector(&self, spec: &HilbertSpec) -> DVector<C<T>> {
        let mut v = DVector::zeros(spec.dim());
        let (a, b) = self.coefficients();
        v[spec.index(Spin::Down, self.n)] = a;
        v[spec.index(Spin::Up, self.n + 1)] = b;
        v
    }

    /// `⟨self|ψ⟩`
    pub fn overlap(&self, spec: &HilbertSpec, psi: &DVector<C<T>>) -> C<T> {
        let (a, b) = self.coefficients();
        a.conj() * psi[spec.index(Spin::Down, self.n)] + b.conj() * psi[spec.index(Spin::Up, self.n + 1)]
    }
}

pub fn vacuum_state<T: Real>(spec: &HilbertSpec) -> DVector<C<T>> {
    let mut v = DVector::zeros(spec.dim());
    v[spec.index(Spin::Up, 0)] = cone();
    v
}

/// A labelled closed-form level; `n = None` is the vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level<T: Real + Serialize> {
    pub n: Option<usize>,
    pub branch: Option<Branch>,
    pub energy: T,
    pub theta: Option<T>,
}

/// `{E_vac} ∪ {E_n^± : n ≤ max_n}`, sorted by energy. Degenerate sectors
/// (`Ω_n = 0`) are skipped and reported separately.
pub fn closed_form_levels<T: Real + Serialize>(eff: &EffectiveParams<T>, max_n: usize) -> (Vec<Level<T>>, Vec<usize>) {
    let mut levels = vec![Level { n: None, branch: None, energy: vacuum_energy(eff), theta: None }];
    let mut degenerate = Vec::new();
    for n in 0..=max_n {
        match block(n, eff) {
            Ok(b) => {
                for br in Branch::BOTH {
                    levels.push(Level { n: Some(n), branch: Some(br), energy: b.energy(br), theta: Some(b.theta) });
                }
            }
            Err(_) => degenerate.push(n),
        }
    }
    levels.sort_by(|a, b| a.energy.partial_cmp(&b.energy).expect("finite energies"));
    (levels, degenerate)
}

/// Eigenpair of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct EigenPair<T: Real> {
    pub energy: T,
    pub vector: DVector<C<T>>,
    pub guard_weight: T,
}

/// Hermitian eigensolve, keeping eigenvectors with negligible guard-band
/// weight; sorted by energy.
pub fn diagonalize_full<T: Real>(h: &OperatorMatrix<T>, spec: &HilbertSpec) -> Result<Vec<EigenPair<T>>> {
    let defect = hermiticity_defect(h);
    if defect >= real(1e-8) {
        return Err(ModelError::NotHermitian { defect: to_f64(defect), tolerance: 1e-8 });
    }
    let sym = (h + h.adjoint()) * cr(real::<T>(0.5));
    let eig = SymmetricEigen::new(sym);
    let mut out: Vec<EigenPair<T>> = (0..h.nrows())
        .map(|k| {
            let vector = eig.eigenvectors.column(k).into_owned();
            let w = guard_weight(&vector, spec);
            EigenPair { energy: eig.eigenvalues[k], vector, guard_weight: w }
        })
        .filter(|p| p.guard_weight < real(GUARD_WEIGHT_TOL))
        .collect();
    out.sort_by(|a, b| a.energy.partial_cmp(&b.energy).expect("finite energies"));
    Ok(out)
}

/// The `k` guarded eigenpairs of smallest `|E|`.
pub fn lowest_by_magnitude<T: Real>(mut pairs: Vec<EigenPair<T>>, k: usize) -> Vec<EigenPair<T>> {
    pairs.sort_by(|a, b| a.energy.abs().partial_cmp(&b.energy.abs()).expect("finite energies"));
    pairs.truncate(k);
    pairs
}

/// Eigenvalue and right eigenvector of a general complex matrix.
#[derive(Debug, Clone)]
pub struct GeneralEigenPair<T: Real> {
    pub value: C<T>,
    pub vector: DVector<C<T>>,
    pub guard_weight: T,
}

/// Eigenpairs of a non-Hermitian matrix from its complex Schur form; the
/// eigenvectors come from back-substitution in the triangular factor.
pub fn general_eigenpairs<T: Real>(m: &OperatorMatrix<T>, spec: &HilbertSpec) -> Result<Vec<GeneralEigenPair<T>>> {
    let d = m.nrows();
    let schur = Schur::try_new(m.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| ModelError::InvalidParameters("Schur decomposition did not converge".into()))?;
    let (q, tri) = schur.unpack();
    let scale = crate::operators::max_abs(m).max(T::one());
    let tiny = T::default_epsilon() * scale;
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let lambda = tri[(k, k)];
        let mut x = DVector::<C<T>>::zeros(d);
        x[k] = cone();
        for j in (0..k).rev() {
            let mut acc = czero::<T>();
            for l in j + 1..=k {
                acc += tri[(j, l)] * x[l];
            }
            let mut den = tri[(j, j)] - lambda;
            if cabs(den) < tiny {
                den = cr(tiny);
            }
            x[j] = -acc / den;
        }
        let mut v = &q * x;
        let norm = v.norm();
        v /= cr(norm);
        let w = guard_weight(&v, spec);
        out.push(GeneralEigenPair { value: lambda, vector: v, guard_weight: w });
    }
    out.sort_by(|a, b| a.value.re.partial_cmp(&b.value.re).expect("finite eigenvalues"));
    Ok(out)
}

/// Guarded eigenvalues of a general matrix, sorted by real part.
pub fn guarded_eigenvalues<T: Real>(m: &OperatorMatrix<T>, spec: &HilbertSpec) -> Result<Vec<C<T>>> {
    Ok(general_eigenpairs(m, spec)?
        .into_iter()
        .filter(|p| p.guard_weight < real(GUARD_WEIGHT_TOL))
        .map(|p| p.value)
        .collect())
}

/// Largest relative distance from each reference level to its nearest
/// candidate, `|Δ| / max(|E|, 1)`.
pub fn match_levels<T: Real>(reference: &[T], candidates: &[T]) -> T {
    reference.iter().fold(T::zero(), |worst, &e| {
        let nearest = candidates.iter().fold(T::max_value().unwrap_or(T::one()), |m, &c| m.min((c - e).abs()));
        worst.max(nearest / e.abs().max(T::one()))
    })
}

/// `‖[h, Q]‖` on the guarded subspace.
pub fn q_commutator_defect<T: Real>(h: &OperatorMatrix<T>, ops: &OperatorTable<T>) -> T {
    let q = ops.q();
    let c = h * &q - &q * h;
    crate::operators::max_abs(&restrict(&c, &ops.spec))
}

/// `‖[h, Π]‖` on the guarded subspace.
pub fn parity_defect<T: Real>(h: &OperatorMatrix<T>, ops: &OperatorTable<T>) -> T {
    let p = ops.parity();
    let c = h * &p - &p * h;
    crate::operators::max_abs(&restrict(&c, &ops.spec))
}

/// Largest entry of `h` connecting basis states whose `Q` values differ by
/// anything other than 0 or ±2.
pub fn q_sparsity_violation<T: Real>(h: &OperatorMatrix<T>, spec: &HilbertSpec) -> T {
    let mut worst = T::zero();
    for i in 0..spec.dim() {
        for j in 0..spec.dim() {
            let dq = (spec.q_value::<T>(i) - spec.q_value::<T>(j)).abs();
            if dq != T::zero() && dq != real(2.0) {
                worst = worst.max(cabs(h[(i, j)]));
            }
        }
    }
    worst
}

/// Largest `|E_n^σ(t)|`-relative discrepancy between closed-form levels for
/// sectors `n ≤ window − 2` and the Hermitian oracle.
pub fn closed_form_vs_oracle<T: Real + Serialize>(
    eff: &EffectiveParams<T>,
    h: &OperatorMatrix<T>,
    spec: &HilbertSpec,
) -> Result<T> {
    let (levels, _) = closed_form_levels(eff, spec.window() - 2);
    let reference: Vec<T> = levels.iter().map(|l| l.energy).collect();
    let numeric: Vec<T> = diagonalize_full(h, spec)?.into_iter().map(|p| p.energy).collect();
    Ok(match_levels(&reference, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyson::{assemble_h0, assemble_h_closed, assemble_h_frame};
    use crate::scalar::cplx;
    use crate::trajectories::{fig1_parameters, TimeFunction};
    use nalgebra::Matrix2;

    fn spec() -> HilbertSpec {
        HilbertSpec::new(24, 6).unwrap()
    }

    #[test]
    fn decoupled_limit() {
        let eff = EffectiveParams::constant(1.0, 1.0, cr(0.0));
        let b = block(0, &eff).unwrap();
        assert_eq!((b.e_plus, b.e_minus), (1.5, -0.5));
        assert!((b.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let d = b.dressed(Branch::Plus);
        assert!(d.c.abs() < 1e-15 && (d.s - 1.0).abs() < 1e-15);
        assert_eq!(vacuum_energy(&eff), 0.5);
    }

    #[test]
    fn figure_point_against_two_by_two_solve() {
        let eff = EffectiveParams::constant(0.0, 1.0, cr(0.1f64.exp()));
        let b = block(0, &eff).unwrap();
        let want = 0.5 + 0.5 * (1.0 + 4.0 * 0.2f64.exp()).sqrt();
        assert!((b.e_plus - want).abs() < 1e-15);
        let m = Matrix2::new(b.matrix[0][0], b.matrix[0][1], b.matrix[1][0], b.matrix[1][1]);
        let ev = SymmetricEigen::new(m).eigenvalues;
        let (lo, hi) = (ev[0].min(ev[1]), ev[0].max(ev[1]));
        assert!((hi - b.e_plus).abs() < 1e-14 && (lo - b.e_minus).abs() < 1e-14);
    }

    #[test]
    fn dressed_states_are_eigenvectors_for_complex_g() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let eff = EffectiveParams::constant(0.3, 1.2, cplx(-0.4, 0.7));
        let h = assemble_h0(&eff, &ops);
        for n in 0..5 {
            let b = block(n, &eff).unwrap();
            for br in Branch::BOTH {
                let v = b.dressed(br).vector(&s);
                let r = &h * &v - &v * cr(b.energy(br));
                assert!(r.norm() < 1e-13, "n={n} {br}");
                let (c, sn) = (b.cos_theta(), b.sin_theta());
                assert!((c * c + sn * sn - 1.0).abs() < 1e-15 && (2.0 * b.theta).sin() >= 0.0);
            }
        }
        let vac = vacuum_state::<f64>(&s);
        assert!((&h * &vac - &vac * cr(vacuum_energy(&eff))).norm() < 1e-15);
    }

    #[test]
    fn degenerate_sector_is_flagged() {
        let eff = EffectiveParams::constant(-1.0, 1.0, cr(0.0));
        assert!(matches!(block(2, &eff), Err(ModelError::DegenerateSector { n: 2, .. })));
    }

    #[test]
    fn closed_forms_match_the_oracle() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let p = fig1_parameters::<f64>();
        for t in [0.0, 0.7, 2.9] {
            let eff = p.effective(t);
            let h0 = assemble_h0(&eff, &ops);
            assert!(closed_form_vs_oracle(&eff, &h0, &s).unwrap() < 1e-12);
            // constant squeezing: same spectrum through S⁻¹hS = h₀
            let hk = assemble_h_frame(&eff.with_kappa(0.3, 0.0), &ops);
            assert!(closed_form_vs_oracle(&eff, &hk, &s).unwrap() < 1e-12);
        }
    }

    #[test]
    fn diagonal_case() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let eff = EffectiveParams::constant(0.4, 1.0, cr(0.0));
        let pairs = diagonalize_full(&assemble_h0(&eff, &ops), &s).unwrap();
        for p in pairs {
            let i = (0..s.dim()).max_by(|&a, &b| p.vector[a].norm().total_cmp(&p.vector[b].norm())).unwrap();
            let (spin, n) = s.label(i);
            assert!((p.energy - (n as f64 + 0.4 * spin.s0::<f64>())).abs() < 1e-13);
        }
    }

    #[test]
    fn refuses_non_hermitian() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        assert!(diagonalize_full(&ops.b, &s).is_err());
    }

    #[test]
    fn symmetry_defects() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let p = fig1_parameters::<f64>();
        let t = 0.7;
        let h0 = assemble_h0(&p.effective(t), &ops);
        assert!(q_commutator_defect(&h0, &ops) < 1e-12);
        let h = assemble_h_closed(&p, t, &ops);
        assert!(q_commutator_defect(&h, &ops) > 1e-3);
        assert!(parity_defect(&h, &ops) < 1e-12);
        assert_eq!(q_sparsity_violation(&h, &s), 0.0);
        let pi = ops.parity();
        assert!(crate::operators::max_abs(&(&pi * &pi - &ops.identity)) == 0.0);
    }

    #[test]
    fn general_eigensolver_on_similar_matrix() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let eff = fig1_parameters::<f64>().effective(0.4);
        let h = assemble_h0(&eff, &ops);
        let d = ops.exp_s0(cr(0.3)) * ops.exp_num(cplx(0.0, 0.2));
        let di = ops.exp_num(cplx(0.0, -0.2)) * ops.exp_s0(cr(-0.3));
        let m = &di * &h * &d;
        let pairs = general_eigenpairs(&m, &s).unwrap();
        for p in &pairs {
            let r = &m * &p.vector - &p.vector * p.value;
            assert!(r.norm() < 1e-11);
            assert!(p.value.im.abs() < 1e-12);
        }
        let reference: Vec<f64> = diagonalize_full(&h, &s).unwrap().iter().map(|p| p.energy).collect();
        let got: Vec<f64> = guarded_eigenvalues(&m, &s).unwrap().iter().map(|z| z.re).collect();
        assert!(match_levels(&reference, &got) < 1e-11);
    }

    #[test]
    fn spectrum_with_moving_boundary_is_parity_split() {
        let s = spec();
        let ops = OperatorTable::<f64>::new(&s);
        let p = fig1_parameters::<f64>().with_kappa(TimeFunction::sin(cr(0.3), 0.4));
        let h = assemble_h_frame(&p.effective(1.0), &ops);
        assert!(parity_defect(&h, &ops) == 0.0);
        assert!(!diagonalize_full(&h, &s).unwrap().is_empty());
    }
}
