//! Truncated boson ⊗ spin-1/2 operator algebra.
//!
//! Basis ordering is spin ⊗ boson: the basis index of `|s, n⟩` is
//! `s * fock_cutoff + n`, with spin-up at `s = 0` and spin-down at `s = 1`.
//! Every other module addresses matrix entries through [`HilbertSpec::index`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ModelError, Result};
use crate::scalar::{cabs, cone, count, cr, cplx, czero, is_finite_c, real, Real, C};

/// Dense complex operator on (a factor of) the truncated Hilbert space.
pub type OperatorMatrix<T> = DMatrix<C<T>>;

pub const SPIN_DIM: usize = 2;
pub const DEFAULT_CUTOFF: usize = 64;
pub const DEFAULT_GUARD_BAND: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    /// Eigenvalue of `S₀`.
    pub fn s0<T: Real>(self) -> T {
        match self {
            Spin::Up => real(0.5),
            Spin::Down => real(-0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Boson,
    Spin,
}

/// Truncation of the boson factor plus the guard band excluded from
/// validated results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct HilbertSpec {
    fock_cutoff: usize,
    guard_band: usize,
}

impl Default for HilbertSpec {
    fn default() -> Self {
        Self { fock_cutoff: DEFAULT_CUTOFF, guard_band: DEFAULT_GUARD_BAND }
    }
}

impl HilbertSpec {
    pub fn new(fock_cutoff: usize, guard_band: usize) -> Result<Self> {
        if fock_cutoff < 8 {
            return Err(ModelError::InvalidSpace(format!(
                "fock_cutoff must be at least 8, got {fock_cutoff}"
            )));
        }
        if guard_band == 0 || 2 * guard_band >= fock_cutoff {
            return Err(ModelError::InvalidSpace(format!(
                "guard_band must satisfy 0 < guard_band < fock_cutoff/2, got {guard_band} for cutoff {fock_cutoff}"
            )));
        }
        Ok(Self { fock_cutoff, guard_band })
    }

    /// Same guard band, different cutoff.
    pub fn with_cutoff(self, fock_cutoff: usize) -> Result<Self> {
        Self::new(fock_cutoff, self.guard_band)
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn guard_band(&self) -> usize {
        self.guard_band
    }

    pub fn spin_dim(&self) -> usize {
        SPIN_DIM
    }

    pub fn dim(&self) -> usize {
        SPIN_DIM * self.fock_cutoff
    }

    /// Boson levels `n < window()` are the validated (guarded) subspace.
    pub fn window(&self) -> usize {
        self.fock_cutoff - self.guard_band
    }

    pub fn index(&self, spin: Spin, n: usize) -> usize {
        debug_assert!(n < self.fock_cutoff);
        spin.index() * self.fock_cutoff + n
    }

    /// Inverse of [`index`](Self::index).
    pub fn label(&self, index: usize) -> (Spin, usize) {
        let spin = if index < self.fock_cutoff { Spin::Up } else { Spin::Down };
        (spin, index % self.fock_cutoff)
    }

    pub fn boson_level(&self, index: usize) -> usize {
        index % self.fock_cutoff
    }

    pub fn is_guarded(&self, index: usize) -> bool {
        self.boson_level(index) < self.window()
    }

    /// Basis indices of the guarded subspace, spin-up block first.
    pub fn guarded_indices(&self) -> Vec<usize> {
        let w = self.window();
        (0..w).chain(self.fock_cutoff..self.fock_cutoff + w).collect()
    }

    /// Eigenvalue of `Q = N − S₀` on a basis state.
    pub fn q_value<T: Real>(&self, index: usize) -> T {
        let (spin, n) = self.label(index);
        count::<T>(n) - spin.s0::<T>()
    }

    /// Working cutoff for checks of operator identities that involve the
    /// squeezing factor. Squeezed low-lying states spread to roughly three
    /// times their boson number, so the padded space is four windows wide.
    pub fn verification_cutoff(&self) -> usize {
        let w = (4 * self.window()).max(2 * self.fock_cutoff);
        w + (w % 2)
    }
}

pub struct BosonOps<T: Real> {
    pub b: OperatorMatrix<T>,
    pub b_dag: OperatorMatrix<T>,
    pub num: OperatorMatrix<T>,
}

pub struct SpinOps<T: Real> {
    pub s0: OperatorMatrix<T>,
    pub sp: OperatorMatrix<T>,
    pub sm: OperatorMatrix<T>,
}

pub fn make_boson_ops<T: Real>(spec: &HilbertSpec) -> BosonOps<T> {
    let m = spec.fock_cutoff();
    let mut b = OperatorMatrix::<T>::zeros(m, m);
    let mut num = OperatorMatrix::<T>::zeros(m, m);
    for n in 0..m {
        num[(n, n)] = cr(count(n));
        if n > 0 {
            b[(n - 1, n)] = cr(count::<T>(n).sqrt());
        }
    }
    let b_dag = b.adjoint();
    BosonOps { b, b_dag, num }
}

pub fn make_spin_ops<T: Real>() -> SpinOps<T> {
    let mut s0 = OperatorMatrix::<T>::zeros(2, 2);
    s0[(0, 0)] = cr(real(0.5));
    s0[(1, 1)] = cr(real(-0.5));
    let mut sp = OperatorMatrix::<T>::zeros(2, 2);
    sp[(Spin::Up.index(), Spin::Down.index())] = cone();
    let sm = sp.adjoint();
    SpinOps { s0, sp, sm }
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &OperatorMatrix<T>, b: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    a.kronecker(b)
}

/// Embed a single-factor operator into the full spin ⊗ boson space.
pub fn lift<T: Real>(op: &OperatorMatrix<T>, factor: Factor, spec: &HilbertSpec) -> Result<OperatorMatrix<T>> {
    let expected = match factor {
        Factor::Boson => spec.fock_cutoff(),
        Factor::Spin => SPIN_DIM,
    };
    if op.nrows() != expected || op.ncols() != expected {
        return Err(ModelError::DimensionMismatch { expected, got: op.nrows().max(op.ncols()) });
    }
    Ok(match factor {
        Factor::Boson => kron(&OperatorMatrix::identity(SPIN_DIM, SPIN_DIM), op),
        Factor::Spin => {
            let m = spec.fock_cutoff();
            kron(op, &OperatorMatrix::identity(m, m))
        }
    })
}

pub fn commutator<T: Real>(a: &OperatorMatrix<T>, b: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    a * b - b * a
}

/// Matrix exponential (Padé scaling-and-squaring).
pub fn expm<T: Real>(op: &OperatorMatrix<T>) -> Result<OperatorMatrix<T>> {
    if !all_finite(op) {
        return Err(ModelError::NonFinite("expm input"));
    }
    let e = op.exp();
    if !all_finite(&e) {
        return Err(ModelError::NonFinite("expm overflow"));
    }
    Ok(e)
}

pub fn all_finite<T: Real>(op: &OperatorMatrix<T>) -> bool {
    op.iter().all(|z| is_finite_c(*z))
}

pub fn max_abs<T: Real>(op: &OperatorMatrix<T>) -> T {
    op.iter().fold(T::zero(), |m, z| m.max(cabs(*z)))
}

/// `max |(op − op†)_{ij}|`.
pub fn hermiticity_defect<T: Real>(op: &OperatorMatrix<T>) -> T {
    let n = op.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i..n {
            worst = worst.max(cabs(op[(i, j)] - op[(j, i)].conj()));
        }
    }
    worst
}

/// Restriction of a full-space operator to the guarded subspace.
pub fn restrict<T: Real>(op: &OperatorMatrix<T>, spec: &HilbertSpec) -> OperatorMatrix<T> {
    let idx = spec.guarded_indices();
    OperatorMatrix::from_fn(idx.len(), idx.len(), |i, j| op[(idx[i], idx[j])])
}

pub fn guarded_max_abs<T: Real>(op: &OperatorMatrix<T>, spec: &HilbertSpec) -> T {
    max_abs(&restrict(op, spec))
}

pub fn guarded_hermiticity_defect<T: Real>(op: &OperatorMatrix<T>, spec: &HilbertSpec) -> T {
    hermiticity_defect(&restrict(op, spec))
}

/// Re-embed an operator from the space of `from` into the (smaller or larger)
/// space of `to`, keeping the entries whose boson labels exist in both.
pub fn reembed<T: Real>(op: &OperatorMatrix<T>, from: &HilbertSpec, to: &HilbertSpec) -> OperatorMatrix<T> {
    let m = from.fock_cutoff().min(to.fock_cutoff());
    let mut out = OperatorMatrix::zeros(to.dim(), to.dim());
    for s in [Spin::Up, Spin::Down] {
        for r in [Spin::Up, Spin::Down] {
            for n in 0..m {
                for k in 0..m {
                    out[(to.index(s, n), to.index(r, k))] = op[(from.index(s, n), from.index(r, k))];
                }
            }
        }
    }
    out
}

/// `a * b`, skipping structural zeros of `b`. Used for products with the
/// very sparse model operators at padded cutoffs.
pub fn mul_skip_zeros<T: Real>(a: &OperatorMatrix<T>, b: &OperatorMatrix<T>) -> OperatorMatrix<T> {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    let zero = czero::<T>();
    let mut out = OperatorMatrix::zeros(a.nrows(), b.ncols());
    for j in 0..b.ncols() {
        for k in 0..b.nrows() {
            let bkj = b[(k, j)];
            if bkj == zero {
                continue;
            }
            let mut col = out.column_mut(j);
            col.axpy(bkj, &a.column(k), cone());
        }
    }
    out
}

/// Weight of a state vector outside the guarded subspace.
pub fn guard_weight<T: Real>(psi: &DVector<C<T>>, spec: &HilbertSpec) -> T {
    psi.iter()
        .enumerate()
        .filter(|(i, _)| !spec.is_guarded(*i))
        .fold(T::zero(), |acc, (_, z)| acc + z.norm_sqr())
}

/// Lifted operators of one Hilbert space, built once and shared read-only.
pub struct OperatorTable<T: Real> {
    pub spec: HilbertSpec,
    pub identity: OperatorMatrix<T>,
    pub num: OperatorMatrix<T>,
    pub b: OperatorMatrix<T>,
    pub b_dag: OperatorMatrix<T>,
    /// `b²`
    pub b2: OperatorMatrix<T>,
    /// `b†²`
    pub b_dag2: OperatorMatrix<T>,
    /// `K = (b†² − b²)/2`, generator of the squeezing factor.
    pub k: OperatorMatrix<T>,
    pub s0: OperatorMatrix<T>,
    pub sp: OperatorMatrix<T>,
    pub sm: OperatorMatrix<T>,
    /// `S₊b†`
    pub sp_bdag: OperatorMatrix<T>,
    /// `S₊b`
    pub sp_b: OperatorMatrix<T>,
    /// `S₋b`
    pub sm_b: OperatorMatrix<T>,
    /// `S₋b†`
    pub sm_bdag: OperatorMatrix<T>,
}

impl<T: Real> OperatorTable<T> {
    pub fn new(spec: &HilbertSpec) -> Self {
        let bos = make_boson_ops::<T>(spec);
        let spin = make_spin_ops::<T>();
        let lb = |op: &OperatorMatrix<T>| lift(op, Factor::Boson, spec).expect("boson factor dims");
        let ls = |op: &OperatorMatrix<T>| lift(op, Factor::Spin, spec).expect("spin factor dims");
        let b = lb(&bos.b);
        let b_dag = lb(&bos.b_dag);
        let b2 = lb(&(&bos.b * &bos.b));
        let b_dag2 = lb(&(&bos.b_dag * &bos.b_dag));
        let k = (&b_dag2 - &b2) * cr(real::<T>(0.5));
        let s0 = ls(&spin.s0);
        let sp = ls(&spin.sp);
        let sm = ls(&spin.sm);
        let sp_bdag = &sp * &b_dag;
        let sp_b = &sp * &b;
        let sm_b = &sm * &b;
        let sm_bdag = &sm * &b_dag;
        Self {
            spec: *spec,
            identity: OperatorMatrix::identity(spec.dim(), spec.dim()),
            num: lb(&bos.num),
            b,
            b_dag,
            b2,
            b_dag2,
            k,
            s0,
            sp,
            sm,
            sp_bdag,
            sp_b,
            sm_b,
            sm_bdag,
        }
    }

    /// `Q = N − S₀`.
    pub fn q(&self) -> OperatorMatrix<T> {
        &self.num - &self.s0
    }

    /// Parity `Π = exp(iπ(N − S₀ + 1/2))`, diagonal with entries ±1.
    pub fn parity(&self) -> OperatorMatrix<T> {
        // Q + ½ is an integer: n for spin up, n + 1 for spin down.
        let d = DVector::from_fn(self.spec.dim(), |i, _| {
            let (spin, n) = self.spec.label(i);
            let k = if spin == Spin::Up { n } else { n + 1 };
            if k % 2 == 0 { cone() } else { -cone() }
        });
        OperatorMatrix::from_diagonal(&d)
    }

    /// `exp(x N)` for complex `x`, built diagonally.
    pub fn exp_num(&self, x: C<T>) -> OperatorMatrix<T> {
        let d = DVector::from_fn(self.spec.dim(), |i, _| {
            crate::scalar::cexp(x * cr(count::<T>(self.spec.boson_level(i))))
        });
        OperatorMatrix::from_diagonal(&d)
    }

    /// `exp(x S₀)` for complex `x`, built diagonally.
    pub fn exp_s0(&self, x: C<T>) -> OperatorMatrix<T> {
        let d = DVector::from_fn(self.spec.dim(), |i, _| {
            let (spin, _) = self.spec.label(i);
            crate::scalar::cexp(x * cr(spin.s0::<T>()))
        });
        OperatorMatrix::from_diagonal(&d)
    }
}

/// Structured exponential of the squeezing generator `K = (b†² − b²)/2`.
///
/// `K` couples only levels of equal parity, and within each parity class it
/// is a real antisymmetric tridiagonal matrix `T`. With `D = diag(i^j)` one
/// has `D⁻¹ T D = −i T_sym`, `T_sym` real symmetric tridiagonal, so
/// `exp(κK) = D Q exp(−iκΛ) Qᵀ D⁻¹` from a single real eigendecomposition
/// that is reused for every κ.
pub struct SqueezeGenerator<T: Real> {
    cutoff: usize,
    blocks: [(Vec<usize>, DMatrix<T>, DVector<T>); 2],
}

impl<T: Real> SqueezeGenerator<T> {
    pub fn new(cutoff: usize) -> Self {
        let block = |parity: usize| {
            let levels: Vec<usize> = (parity..cutoff).step_by(2).collect();
            let d = levels.len();
            let mut sym = DMatrix::<T>::zeros(d, d);
            for j in 0..d.saturating_sub(1) {
                let n = levels[j];
                let k = (count::<T>((n + 1) * (n + 2))).sqrt() * real::<T>(0.5);
                sym[(j, j + 1)] = k;
                sym[(j + 1, j)] = k;
            }
            let eig = SymmetricEigen::new(sym);
            (levels, eig.eigenvectors, eig.eigenvalues)
        };
        Self { cutoff, blocks: [block(0), block(1)] }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// `exp(κ K)` on the boson factor, for complex κ.
    pub fn exp(&self, kappa: C<T>) -> OperatorMatrix<T> {
        let mut out = OperatorMatrix::<T>::zeros(self.cutoff, self.cutoff);
        let minus_i = cplx(T::zero(), -T::one());
        for (levels, q, lambda) in &self.blocks {
            let d = levels.len();
            let weights: Vec<C<T>> = lambda.iter().map(|&l| crate::scalar::cexp(minus_i * kappa * cr(l))).collect();
            let qc = q.map(cr);
            let scaled = DMatrix::from_fn(d, d, |a, m| qc[(a, m)] * weights[m]);
            let local = scaled * qc.transpose();
            for a in 0..d {
                for bcol in 0..d {
                    // D_a / D_b = i^{a − b}
                    let rot = i_pow::<T>(a as isize - bcol as isize);
                    out[(levels[a], levels[bcol])] = rot * local[(a, bcol)];
                }
            }
        }
        out
    }

    /// `exp(κ K)` lifted to the full spin ⊗ boson space of `spec`.
    pub fn exp_lifted(&self, kappa: C<T>, spec: &HilbertSpec) -> OperatorMatrix<T> {
        assert_eq!(spec.fock_cutoff(), self.cutoff, "squeeze generator built for another cutoff");
        kron(&OperatorMatrix::identity(SPIN_DIM, SPIN_DIM), &self.exp(kappa))
    }
}

fn i_pow<T: Real>(k: isize) -> C<T> {
    match k.rem_euclid(4) {
        0 => cone(),
        1 => cplx(T::zero(), T::one()),
        2 => cr(-T::one()),
        _ => cplx(T::zero(), -T::one()),
    }
}
