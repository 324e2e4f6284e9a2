//! Unitary time evolution with the Hermitian partner, population read-out
//! in the instantaneous dressed basis, and the check that both
//! representations describe the same dynamics.
//!
//! Each step applies `exp(−i h(t + dt/2) dt)` through its Taylor series on
//! a sparse `h`, with `‖h‖_∞ dt ≤ 0.1` so that the series converges after
//! a handful of terms.

use nalgebra::DVector;
use serde::Serialize;

use crate::dyson::assemble_h;
use crate::error::{ModelError, Result};
use crate::operators::{guard_weight, hermiticity_defect, HilbertSpec, OperatorMatrix, OperatorTable, SqueezeGenerator, Spin};
use crate::scalar::{cabs, ccosh, cexp, ci, cone, count, cr, csinh, czero, real, to_f64, Real, C};
use crate::spectra::{block, vacuum_state, Branch};
use crate::trajectories::{require_bounded, ParameterSet};

/// A state of the truncated space at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real> {
    pub amplitudes: DVector<C<T>>,
    pub t: T,
}

impl<T: Real> StateVector<T> {
    pub fn new(amplitudes: DVector<C<T>>, t: T) -> Self {
        Self { amplitudes, t }
    }

    pub fn basis(spec: &HilbertSpec, spin: Spin, n: usize, t: T) -> Self {
        let mut v = DVector::zeros(spec.dim());
        v[spec.index(spin, n)] = cone();
        Self::new(v, t)
    }

    pub fn vacuum(spec: &HilbertSpec, t: T) -> Self {
        Self::new(vacuum_state(spec), t)
    }

    /// `ψ_n^σ` of `params` at `t`.
    pub fn dressed(params: &ParameterSet<T>, spec: &HilbertSpec, n: usize, branch: Branch, t: T) -> Result<Self> {
        Ok(Self::new(block(n, &params.effective(t))?.dressed(branch).vector(spec), t))
    }

    pub fn norm(&self) -> T {
        self.amplitudes.norm()
    }
}

/// Sparse matrix in compressed rows.
#[derive(Debug, Clone)]
struct Csr<T: Real> {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C<T>>,
}

impl<T: Real> Csr<T> {
    fn from_dense(m: &OperatorMatrix<T>) -> Self {
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != czero() {
                    cols.push(j);
                    values.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self { row_start, cols, values }
    }

    fn apply(&self, x: &DVector<C<T>>, out: &mut DVector<C<T>>) {
        for i in 0..self.row_start.len() - 1 {
            let mut acc = czero();
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            out[i] = acc;
        }
    }

    fn inf_norm(&self) -> T {
        (0..self.row_start.len() - 1)
            .map(|i| (self.row_start[i]..self.row_start[i + 1]).fold(T::zero(), |a, k| a + cabs(self.values[k])))
            .fold(T::zero(), T::max)
    }

    /// `‖self − other‖_∞`.
    fn diff_inf_norm(&self, other: &Self, dim: usize) -> T {
        if self.row_start == other.row_start && self.cols == other.cols {
            (0..self.row_start.len() - 1)
                .map(|i| (self.row_start[i]..self.row_start[i + 1]).fold(T::zero(), |a, k| a + cabs(self.values[k] - other.values[k])))
                .fold(T::zero(), T::max)
        } else {
            let d = self.to_dense(dim) - other.to_dense(dim);
            d.row_iter().map(|r| r.iter().fold(T::zero(), |a, z| a + cabs(*z))).fold(T::zero(), T::max)
        }
    }

    fn to_dense(&self, dim: usize) -> OperatorMatrix<T> {
        let mut m = OperatorMatrix::zeros(dim, dim);
        for i in 0..dim {
            for k in self.row_start[i]..self.row_start[i + 1] {
                m[(i, self.cols[k])] = self.values[k];
            }
        }
        m
    }
}

/// Fixed sparse operators combined with time-dependent coefficients; all
/// terms share one sparsity pattern.
struct TermSum<T: Real> {
    pattern: Csr<T>,
    /// `terms[k][e]`: value of operator `k` at pattern entry `e`.
    terms: Vec<Vec<C<T>>>,
}

impl<T: Real> TermSum<T> {
    fn new(ops: &[&OperatorMatrix<T>]) -> Self {
        let dim = ops[0].nrows();
        let mut union = OperatorMatrix::<T>::zeros(dim, dim);
        for op in ops {
            for (u, v) in union.iter_mut().zip(op.iter()) {
                if *v != czero() {
                    *u = cone();
                }
            }
        }
        let pattern = Csr::from_dense(&union);
        let terms = ops
            .iter()
            .map(|op| {
                let mut vals = Vec::with_capacity(pattern.values.len());
                for i in 0..dim {
                    for k in pattern.row_start[i]..pattern.row_start[i + 1] {
                        vals.push(op[(i, pattern.cols[k])]);
                    }
                }
                vals
            })
            .collect();
        Self { pattern, terms }
    }

    fn combine(&self, coefficients: &[C<T>]) -> Csr<T> {
        let mut out = self.pattern.clone();
        for (e, v) in out.values.iter_mut().enumerate() {
            *v = self.terms.iter().zip(coefficients).fold(czero(), |acc, (term, c)| acc + term[e] * *c);
        }
        out
    }
}

/// Anything that provides a Hermitian generator at time `t`.
pub trait Generator<T: Real> {
    fn dim(&self) -> usize;
    fn sparse_at(&self, t: T) -> GeneratorMatrix<T>;
}

/// Opaque sparse generator matrix.
pub struct GeneratorMatrix<T: Real>(Csr<T>);

impl<T: Real> GeneratorMatrix<T> {
    pub fn to_dense(&self, dim: usize) -> OperatorMatrix<T> {
        self.0.to_dense(dim)
    }
}

/// The closed-form partner as a sum of nine fixed operators.
pub struct ClosedPartner<'a, T: Real> {
    params: &'a ParameterSet<T>,
    sum: TermSum<T>,
    dim: usize,
}

impl<'a, T: Real> ClosedPartner<'a, T> {
    pub fn new(params: &'a ParameterSet<T>, ops: &OperatorTable<T>) -> Self {
        let sum = TermSum::new(&[
            &ops.s0,
            &ops.num,
            &ops.b_dag2,
            &ops.b2,
            &ops.identity,
            &ops.sp_bdag,
            &ops.sp_b,
            &ops.sm_b,
            &ops.sm_bdag,
        ]);
        Self { params, sum, dim: ops.spec.dim() }
    }

    fn coefficients(&self, t: T) -> [C<T>; 9] {
        let p = self.params;
        let kappa = p.kappa.eval(t);
        let kd = p.kappa.deriv(t);
        let two = cr(real::<T>(2.0));
        let half = cr(real::<T>(0.5));
        let a_b = p.a_b_complex(t);
        let (ch, sh) = (ccosh(kappa), csinh(kappa));
        let squeeze = -a_b * csinh(two * kappa) * half;
        let boundary = ci::<T>() * kd * half;
        let (g, gl) = (p.g(t), p.g_lower(t));
        [
            p.a_f_complex(t),
            a_b * ccosh(two * kappa),
            squeeze + boundary,
            squeeze - boundary,
            a_b * sh * sh,
            g * ch,
            -g * sh,
            gl * ch,
            -gl * sh,
        ]
    }
}

impl<T: Real> Generator<T> for ClosedPartner<'_, T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sparse_at(&self, t: T) -> GeneratorMatrix<T> {
        GeneratorMatrix(self.sum.combine(&self.coefficients(t)))
    }
}

/// A time-independent generator.
pub struct ConstantGenerator<T: Real>(Csr<T>, usize);

impl<T: Real> ConstantGenerator<T> {
    pub fn new(h: &OperatorMatrix<T>) -> Self {
        Self(Csr::from_dense(h), h.nrows())
    }
}

impl<T: Real> Generator<T> for ConstantGenerator<T> {
    fn dim(&self) -> usize {
        self.1
    }

    fn sparse_at(&self, _t: T) -> GeneratorMatrix<T> {
        GeneratorMatrix(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionOptions<T: Real> {
    /// Bound on `‖h‖_∞ dt`.
    pub step_budget: T,
    /// Bound on `‖h(t+dt) − h(t)‖_∞ dt`; fast ramps need it, since the
    /// midpoint rule errs by the commutator of `h` with its derivative.
    pub variation_budget: T,
    pub max_dt: Option<T>,
    pub norm_tol: T,
    pub leakage_tol: T,
    pub hermiticity_tol: T,
    /// Budget halvings allowed when the norm drifts.
    pub refinements: usize,
}

impl<T: Real> Default for EvolutionOptions<T> {
    fn default() -> Self {
        Self {
            step_budget: real(0.1),
            variation_budget: real(1e-4),
            max_dt: None,
            norm_tol: real(1e-9),
            leakage_tol: real(1e-6),
            hermiticity_tol: real(1e-8),
            refinements: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult<T: Real> {
    pub spec: HilbertSpec,
    pub times: Vec<T>,
    pub states: Vec<DVector<C<T>>>,
    /// `|‖ψ‖ − 1|` on the grid.
    pub norm_drift: Vec<T>,
    /// Largest guard-band weight seen in each grid interval.
    pub leakage: Vec<T>,
    pub steps: usize,
}

impl<T: Real> EvolutionResult<T> {
    pub fn final_state(&self) -> &DVector<C<T>> {
        self.states.last().expect("grid has at least one point")
    }

    pub fn max_norm_drift(&self) -> T {
        self.norm_drift.iter().copied().fold(T::zero(), T::max)
    }

    pub fn max_leakage(&self) -> T {
        self.leakage.iter().copied().fold(T::zero(), T::max)
    }

    /// Population of `|↑,0⟩`.
    pub fn vacuum_population(&self) -> Vec<T> {
        let i = self.spec.index(Spin::Up, 0);
        self.states.iter().map(|s| s[i].norm_sqr()).collect()
    }
}

/// `ψ ← exp(−i h dt) ψ` by Taylor series.
fn taylor_step<T: Real>(h: &Csr<T>, dt: T, psi: &mut DVector<C<T>>, scratch: &mut DVector<C<T>>) {
    let mut term = psi.clone();
    let scale = -ci::<T>() * cr(dt);
    for k in 1..64 {
        h.apply(&term, scratch);
        let f = scale / cr(count::<T>(k));
        for (t, s) in term.iter_mut().zip(scratch.iter()) {
            *t = *s * f;
        }
        *psi += &term;
        if term.norm() <= real::<T>(1e-17) * psi.norm() {
            break;
        }
    }
}

fn check_inputs<T: Real>(dim: usize, psi0: &StateVector<T>, grid: &[T], norm_tol: T) -> Result<()> {
    if psi0.amplitudes.len() != dim {
        return Err(ModelError::InvalidSpace(format!("state has length {}, space has {dim}", psi0.amplitudes.len())));
    }
    if (psi0.norm() - T::one()).abs() > norm_tol {
        return Err(ModelError::Evolution(format!("initial state has norm {}", to_f64(psi0.norm()))));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(ModelError::Evolution("time grid must be nonempty and nondecreasing".into()));
    }
    Ok(())
}

fn run<T: Real, G: Generator<T>>(
    gen: &G,
    spec: &HilbertSpec,
    psi0: &StateVector<T>,
    grid: &[T],
    opts: &EvolutionOptions<T>,
    budget: T,
) -> Result<EvolutionResult<T>> {
    let mut psi = psi0.amplitudes.clone();
    let mut scratch = DVector::zeros(psi.len());
    let mut t = psi0.t;
    let mut states = Vec::with_capacity(grid.len());
    let mut norm_drift = Vec::with_capacity(grid.len());
    let mut leakage = Vec::with_capacity(grid.len());
    let mut steps = 0;
    let dim = gen.dim();
    for &target in grid {
        let mut worst = guard_weight(&psi, spec);
        while t < target {
            let mut dt = target - t;
            if let Some(m) = opts.max_dt {
                dt = dt.min(m);
            }
            let mut h = gen.sparse_at(t + dt * real(0.5)).0;
            loop {
                let norm = h.inf_norm();
                if norm * dt <= budget {
                    break;
                }
                // the midpoint moves with dt, so re-sample
                dt = budget / norm * real(0.9);
                h = gen.sparse_at(t + dt * real(0.5)).0;
            }
            let vb = opts.variation_budget * (budget / opts.step_budget);
            for _ in 0..8 {
                let var = gen.sparse_at(t + dt).0.diff_inf_norm(&gen.sparse_at(t).0, dim);
                if var * dt <= vb {
                    break;
                }
                // var grows like dt, so the product like dt²
                dt = dt * (vb / (var * dt)).sqrt() * real(0.9);
                h = gen.sparse_at(t + dt * real(0.5)).0;
            }
            taylor_step(&h, dt, &mut psi, &mut scratch);
            t = if target - t - dt <= T::zero() { target } else { t + dt };
            steps += 1;
            let w = guard_weight(&psi, spec);
            worst = worst.max(w);
            if w > opts.leakage_tol {
                return Err(ModelError::Evolution(format!(
                    "guard-band weight {:.3e} at t = {:.4} exceeds {:.1e}; increase fock_cutoff (now {})",
                    to_f64(w),
                    to_f64(t),
                    to_f64(opts.leakage_tol),
                    spec.fock_cutoff()
                )));
            }
        }
        states.push(psi.clone());
        norm_drift.push((psi.norm() - T::one()).abs());
        leakage.push(worst);
    }
    Ok(EvolutionResult { spec: *spec, times: grid.to_vec(), states, norm_drift, leakage, steps })
}

/// Evolve `psi0` under a generic Hermitian generator, saving the state at
/// every grid time (the first grid time may equal `psi0.t`).
pub fn propagate_generator<T: Real, G: Generator<T>>(
    gen: &G,
    spec: &HilbertSpec,
    psi0: &StateVector<T>,
    grid: &[T],
    opts: &EvolutionOptions<T>,
) -> Result<EvolutionResult<T>> {
    check_inputs(gen.dim(), psi0, grid, real(1e-9))?;
    if grid[0] < psi0.t {
        return Err(ModelError::Evolution("grid starts before the initial state".into()));
    }
    let mut budget = opts.step_budget;
    let mut last = None;
    for _ in 0..=opts.refinements {
        let r = run(gen, spec, psi0, grid, opts, budget)?;
        let drift = r.max_norm_drift();
        if drift <= opts.norm_tol {
            return Ok(r);
        }
        last = Some(drift);
        budget *= real(0.5);
    }
    Err(ModelError::Evolution(format!(
        "norm drift {:.3e} above {:.1e} after {} refinements",
        to_f64(last.unwrap_or_else(T::zero)),
        to_f64(opts.norm_tol),
        opts.refinements
    )))
}

/// Evolve with the closed-form partner of `params`.
pub fn propagate<T: Real>(
    params: &ParameterSet<T>,
    ops: &OperatorTable<T>,
    psi0: &StateVector<T>,
    grid: &[T],
    opts: &EvolutionOptions<T>,
) -> Result<EvolutionResult<T>> {
    let gen = ClosedPartner::new(params, ops);
    for &t in grid {
        let d = hermiticity_defect(&gen.sparse_at(t).to_dense(gen.dim()));
        if d >= opts.hermiticity_tol {
            return Err(ModelError::Evolution(format!("generator not Hermitian at t = {}: defect {:.3e}", to_f64(t), to_f64(d))));
        }
    }
    propagate_generator(&gen, &ops.spec, psi0, grid, opts)
}

/// `⟨ψ_n^σ(t)|ψ(t)⟩` on the grid, with the dressed state's sign continued
/// by maximal overlap with the previous grid point. `None` marks a
/// degenerate sector.
pub fn dressed_amplitudes<T: Real>(result: &EvolutionResult<T>, params: &ParameterSet<T>, n: usize, sigma: Branch) -> Vec<Option<C<T>>> {
    let mut prev: Option<DVector<C<T>>> = None;
    result
        .times
        .iter()
        .zip(&result.states)
        .map(|(t, psi)| {
            let b = block(n, &params.effective(*t)).ok()?;
            let mut v = b.dressed(sigma).vector(&result.spec);
            if let Some(p) = &prev {
                if p.dotc(&v).re < T::zero() {
                    v.neg_mut();
                }
            }
            let a = v.dotc(psi);
            prev = Some(v);
            Some(a)
        })
        .collect()
}

/// `|⟨ψ_n^σ(t)|ψ(t)⟩|²` on the grid.
pub fn dressed_population<T: Real>(result: &EvolutionResult<T>, params: &ParameterSet<T>, n: usize, sigma: Branch) -> Vec<Option<T>> {
    dressed_amplitudes(result, params, n, sigma).into_iter().map(|a| a.map(|z| z.norm_sqr())).collect()
}

/// Population bookkeeping at one grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationBudget {
    pub t: f64,
    /// Sum over every sector whose two states are guarded.
    pub sectors: f64,
    pub vacuum: f64,
    /// `|↓, window−1⟩`, whose partner lies in the guard band.
    pub edge: f64,
    pub leakage: f64,
}

impl PopulationBudget {
    pub fn total(&self) -> f64 {
        self.sectors + self.vacuum + self.edge + self.leakage
    }
}

pub fn population_budget<T: Real>(result: &EvolutionResult<T>, params: &ParameterSet<T>) -> Result<Vec<PopulationBudget>> {
    let spec = &result.spec;
    let w = spec.window();
    result
        .times
        .iter()
        .zip(&result.states)
        .map(|(t, psi)| {
            let eff = params.effective(*t);
            let mut sectors = T::zero();
            for n in 0..w - 1 {
                let b = block(n, &eff)?;
                for s in Branch::BOTH {
                    sectors += b.dressed(s).overlap(spec, psi).norm_sqr();
                }
            }
            Ok(PopulationBudget {
                t: to_f64(*t),
                sectors: to_f64(sectors),
                vacuum: to_f64(psi[spec.index(Spin::Up, 0)].norm_sqr()),
                edge: to_f64(psi[spec.index(Spin::Down, w - 1)].norm_sqr()),
                leakage: to_f64(guard_weight(psi, spec)),
            })
        })
        .collect()
}

/// Weight on the odd eigenspace of the parity operator.
pub fn odd_parity_weight<T: Real>(psi: &DVector<C<T>>, spec: &HilbertSpec) -> T {
    (0..spec.dim())
        .filter(|&i| {
            let (spin, n) = spec.label(i);
            let k = if spin == Spin::Up { n } else { n + 1 };
            k % 2 == 1
        })
        .fold(T::zero(), |a, i| a + psi[i].norm_sqr())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub times: Vec<f64>,
    /// `‖i∂_tψ − Hψ‖` with `ψ = η⁻¹φ`, on the guarded levels.
    pub residuals: Vec<f64>,
    /// Same, divided by `‖Hψ‖`.
    pub relative: Vec<f64>,
    pub max_residual: f64,
    pub fd_step: f64,
    pub working_cutoff: usize,
}

/// Applies `η⁻¹` and `H` in a padded space so that the squeezing factor
/// is not distorted by truncation.
struct PaddedMap<T: Real> {
    spec: HilbertSpec,
    ops: OperatorTable<T>,
    squeeze: SqueezeGenerator<T>,
}

impl<T: Real> PaddedMap<T> {
    fn new(spec: &HilbertSpec) -> Result<Self> {
        let big = spec.with_cutoff(spec.verification_cutoff())?;
        Ok(Self { spec: big, ops: OperatorTable::new(&big), squeeze: SqueezeGenerator::new(big.fock_cutoff()) })
    }

    fn embed(&self, small: &HilbertSpec, v: &DVector<C<T>>) -> DVector<C<T>> {
        let mut out = DVector::zeros(self.spec.dim());
        for (i, z) in v.iter().enumerate() {
            let (spin, n) = small.label(i);
            out[self.spec.index(spin, n)] = *z;
        }
        out
    }

    /// `η⁻¹ φ = e^{−δS₀} e^{−γN} S(−κ) φ`
    fn eta_inv(&self, map: &ParameterSet<T>, t: T, phi: &DVector<C<T>>) -> DVector<C<T>> {
        let s_inv = self.squeeze.exp_lifted(-map.kappa.eval(t), &self.spec);
        let gamma = map.gamma.eval(t);
        let delta = map.delta.eval(t);
        let mut out = &s_inv * phi;
        for (i, z) in out.iter_mut().enumerate() {
            let (spin, n) = self.spec.label(i);
            *z *= cexp(-gamma * cr(count::<T>(n)) - delta * cr(spin.s0::<T>()));
        }
        out
    }
}

/// Evolve `φ` with `h`, map `ψ = η⁻¹φ` and measure how far `ψ` is from
/// solving `i∂_tψ = Hψ`. `map` supplies `η`; pass `params` itself for
/// the consistent check, or a perturbed copy as a negative control.
pub fn quasi_hermitian_consistency<T: Real>(
    params: &ParameterSet<T>,
    map: &ParameterSet<T>,
    ops: &OperatorTable<T>,
    psi0: &StateVector<T>,
    check_times: &[T],
    fd_step: T,
    opts: &EvolutionOptions<T>,
) -> Result<ConsistencyReport> {
    require_bounded(params, false)?;
    let padded = PaddedMap::new(&ops.spec)?;
    let offsets = [-2, -1, 0, 1, 2];
    let mut grid = Vec::new();
    for &t in check_times {
        if t - fd_step * real(2.0) < psi0.t {
            return Err(ModelError::Evolution("check time too close to the initial time".into()));
        }
        grid.extend(offsets.iter().map(|&k| t + fd_step * real(k as f64)));
    }
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|a, b| grid[*a].partial_cmp(&grid[*b]).expect("finite times"));
    let sorted: Vec<T> = order.iter().map(|i| grid[*i]).collect();
    let evolved = propagate(params, ops, psi0, &sorted, opts)?;
    let mut states = vec![DVector::zeros(0); grid.len()];
    for (slot, i) in order.iter().enumerate() {
        states[*i] = evolved.states[slot].clone();
    }

    let guarded: Vec<usize> = (0..padded.spec.dim())
        .filter(|&i| {
            let (_, n) = padded.spec.label(i);
            n < ops.spec.window()
        })
        .collect();
    let weights = [real::<T>(1.0 / 12.0), real(-8.0 / 12.0), T::zero(), real(8.0 / 12.0), real(-1.0 / 12.0)];
    let mut residuals = Vec::new();
    let mut relative = Vec::new();
    for (c, &t) in check_times.iter().enumerate() {
        let psis: Vec<DVector<C<T>>> = (0..5)
            .map(|k| padded.eta_inv(map, grid[5 * c + k], &padded.embed(&ops.spec, &states[5 * c + k])))
            .collect();
        let mut deriv = DVector::<C<T>>::zeros(padded.spec.dim());
        for (w, p) in weights.iter().zip(&psis) {
            deriv += p * cr(*w / fd_step);
        }
        let h_psi = assemble_h(params, t, &padded.ops) * &psis[2];
        let r = deriv * ci::<T>() - &h_psi;
        let norm = |v: &DVector<C<T>>| guarded.iter().fold(T::zero(), |a, &i| a + v[i].norm_sqr()).sqrt();
        residuals.push(to_f64(norm(&r)));
        relative.push(to_f64(norm(&r) / norm(&h_psi).max(real(1e-300))));
    }
    Ok(ConsistencyReport {
        times: check_times.iter().map(|t| to_f64(*t)).collect(),
        max_residual: residuals.iter().copied().fold(0.0, f64::max),
        residuals,
        relative,
        fd_step: to_f64(fd_step),
        working_cutoff: padded.spec.fock_cutoff(),
    })
}
