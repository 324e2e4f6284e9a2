//! Time-dependent model and map parameters, solution-class constructors and
//! the Hermiticity conditions on them.

mod time_function;

pub use time_function::TimeFunction;

use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::scalar::{cabs, carg, ci, cexp, count, cr, real, to_f64, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolutionClass {
    I,
    II,
    Custom,
}

/// The seven parameter trajectories of the model and its Dyson map.
#[derive(Debug, Clone)]
pub struct ParameterSet<T: Real> {
    pub omega_f: TimeFunction<T>,
    pub omega_b: TimeFunction<T>,
    pub alpha: TimeFunction<T>,
    pub beta: TimeFunction<T>,
    pub kappa: TimeFunction<T>,
    pub gamma: TimeFunction<T>,
    pub delta: TimeFunction<T>,
    pub class: SolutionClass,
    /// Boundary half-width at κ = 0.
    pub ell0: T,
}

/// Effective real parameters of the Hermitian partner at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams<T: Real> {
    pub t: T,
    pub a_f: T,
    pub a_b: T,
    /// `g = α e^{γ+δ}`
    pub g: C<T>,
    pub kappa: T,
    pub kappa_dot: T,
    pub ell: T,
    pub ell0: T,
}

impl<T: Real> EffectiveParams<T> {
    /// Time-independent parameters, mostly for tests and closed forms.
    pub fn constant(a_f: T, a_b: T, g: C<T>) -> Self {
        Self { t: T::zero(), a_f, a_b, g, kappa: T::zero(), kappa_dot: T::zero(), ell: T::one(), ell0: T::one() }
    }

    pub fn with_kappa(mut self, kappa: T, kappa_dot: T) -> Self {
        self.kappa = kappa;
        self.kappa_dot = kappa_dot;
        self.ell = self.ell0 * (-kappa).exp();
        self
    }

    pub fn g_mod(&self) -> T {
        cabs(self.g)
    }

    /// Phase φ of `g = |g| e^{iφ}`.
    pub fn phi(&self) -> T {
        carg(self.g)
    }

    /// Same parameters with the phase of `g` absorbed into the basis.
    pub fn real_gauge(mut self) -> Self {
        self.g = cr(self.g_mod());
        self
    }
}

/// Residuals of the four Hermiticity conditions at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub t: f64,
    pub im_a_f: f64,
    pub im_a_b: f64,
    pub im_kappa: f64,
    /// `|β − α* e^{2 Re(γ+δ)}|`
    pub beta: f64,
    pub tolerance: f64,
}

impl ConditionReport {
    pub fn residuals(&self) -> [(&'static str, f64); 4] {
        [("A_f", self.im_a_f), ("A_b", self.im_a_b), ("kappa", self.im_kappa), ("beta", self.beta)]
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.residuals().iter().filter(|(_, r)| !(*r < self.tolerance)).map(|(k, _)| *k).collect()
    }

    pub fn passes(&self) -> bool {
        self.failing().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    Bounded,
    /// `Re γ > 0` somewhere: `e^{γN}` is unbounded.
    EtaUnbounded,
    /// `Re γ < 0` somewhere: the inverse is unbounded.
    EtaInverseUnbounded,
    /// Both signs occur on the grid.
    BothDirectionsFail,
}

impl Boundedness {
    pub fn is_bounded(self) -> bool {
        self == Boundedness::Bounded
    }

    pub fn label(self) -> &'static str {
        match self {
            Boundedness::Bounded => "bounded",
            Boundedness::EtaUnbounded => "eta_unbounded",
            Boundedness::EtaInverseUnbounded => "eta_inverse_unbounded",
            Boundedness::BothDirectionsFail => "both_directions_fail",
        }
    }
}

/// Uniform grid of `points` samples on `[0, horizon]`.
pub fn uniform_grid<T: Real>(horizon: T, points: usize) -> Vec<T> {
    let points = points.max(2);
    (0..points).map(|k| horizon * count::<T>(k) / count::<T>(points - 1)).collect()
}

fn default_check_grid<T: Real>() -> Vec<T> {
    uniform_grid(real(50.0), 501)
}

fn require_imaginary<T: Real>(f: &TimeFunction<T>, name: &str) -> Result<()> {
    for t in default_check_grid::<T>() {
        let z = f.eval(t);
        if z.re.abs() > real::<T>(1e-14) * z.im.abs().max(T::one()) {
            return Err(ModelError::InvalidParameters(format!(
                "{name} must be purely imaginary for solution I (Re = {:.3e} at t = {})",
                to_f64(z.re),
                to_f64(t)
            )));
        }
    }
    Ok(())
}

fn require_real<T: Real>(f: &TimeFunction<T>, name: &str) -> Result<()> {
    for t in default_check_grid::<T>() {
        let z = f.eval(t);
        if z.im.abs() > real::<T>(1e-14) * z.re.abs().max(T::one()) {
            return Err(ModelError::InvalidParameters(format!(
                "{name} must be real (Im = {:.3e} at t = {})",
                to_f64(z.im),
                to_f64(t)
            )));
        }
    }
    Ok(())
}

/// Solution I from `ω_f`: `δ = i∫₀ᵗ ω_f` and `β = α* e^{2δ}`.
pub fn build_solution_i<T: Real>(
    omega_f: TimeFunction<T>,
    omega_b: TimeFunction<T>,
    alpha: TimeFunction<T>,
    gamma0: C<T>,
    kappa: TimeFunction<T>,
) -> Result<ParameterSet<T>> {
    require_imaginary(&omega_f, "omega_f")?;
    require_real(&omega_b, "omega_b")?;
    require_real(&kappa, "kappa")?;
    if gamma0.re != T::zero() {
        return Err(ModelError::InvalidParameters("gamma must be purely imaginary for solution I".into()));
    }
    let delta = omega_f.integral().scaled(ci());
    Ok(assemble_solution_i(omega_f, omega_b, alpha, gamma0, kappa, delta))
}

/// Solution I from `δ` directly, with `ω_f = −i δ̇`.
pub fn solution_i_from_delta<T: Real>(
    delta: TimeFunction<T>,
    omega_b: TimeFunction<T>,
    alpha: TimeFunction<T>,
    gamma0: C<T>,
    kappa: TimeFunction<T>,
) -> Result<ParameterSet<T>> {
    require_real(&delta, "delta")?;
    require_real(&omega_b, "omega_b")?;
    require_real(&kappa, "kappa")?;
    if gamma0.re != T::zero() {
        return Err(ModelError::InvalidParameters("gamma must be purely imaginary for solution I".into()));
    }
    let omega_f = delta.derivative().scaled(-ci::<T>());
    Ok(assemble_solution_i(omega_f, omega_b, alpha, gamma0, kappa, delta))
}

fn assemble_solution_i<T: Real>(
    omega_f: TimeFunction<T>,
    omega_b: TimeFunction<T>,
    alpha: TimeFunction<T>,
    gamma0: C<T>,
    kappa: TimeFunction<T>,
    delta: TimeFunction<T>,
) -> ParameterSet<T> {
    let beta = alpha.clone().conj().times(delta.clone().scaled(cr(real(2.0))).exp());
    ParameterSet {
        omega_f,
        omega_b,
        alpha,
        beta,
        kappa,
        gamma: TimeFunction::constant(gamma0),
        delta,
        class: SolutionClass::I,
        ell0: T::one(),
    }
}

/// Solution II: `γ = i∫ω_b`, `β = α* e^{2γ}`. Its map is unbounded unless
/// γ vanishes, so downstream code refuses it without an override.
pub fn build_solution_ii<T: Real>(
    omega_f: TimeFunction<T>,
    omega_b: TimeFunction<T>,
    alpha: TimeFunction<T>,
    delta0: C<T>,
    kappa: TimeFunction<T>,
) -> Result<ParameterSet<T>> {
    require_real(&omega_f, "omega_f")?;
    require_imaginary(&omega_b, "omega_b")?;
    require_real(&kappa, "kappa")?;
    let gamma = omega_b.integral().scaled(ci());
    let beta = alpha.clone().conj().times(gamma.clone().scaled(cr(real(2.0))).exp());
    Ok(ParameterSet {
        omega_f,
        omega_b,
        alpha,
        beta,
        kappa,
        gamma,
        delta: TimeFunction::constant(delta0),
        class: SolutionClass::II,
        ell0: T::one(),
    })
}

/// Parameter set of the level-diagram example: `α = sin 2t`,
/// `δ = 0.2 + 0.1 cos 4t`, `A_f = 0`, `A_b = 1`, `κ = 0.3 sin 0.4t`, `γ = 0`.
pub fn fig1_parameters<T: Real>() -> ParameterSet<T> {
    fig1_with_kappa(TimeFunction::sin(cr(real(0.3)), real(0.4)))
}

/// The same background with a different boundary trajectory.
pub fn fig1_with_kappa<T: Real>(kappa: TimeFunction<T>) -> ParameterSet<T> {
    let delta = TimeFunction::real_constant(real(0.2)).plus(TimeFunction::cos(cr(real(0.1)), real(4.0)));
    solution_i_from_delta(
        delta,
        TimeFunction::real_constant(T::one()),
        TimeFunction::sin(cr(T::one()), real(2.0)),
        C::new(T::zero(), T::zero()),
        kappa,
    )
    .expect("figure parameters satisfy solution I")
}

impl<T: Real> ParameterSet<T> {
    /// Fully custom trajectories, no constraints enforced.
    pub fn custom(
        omega_f: TimeFunction<T>,
        omega_b: TimeFunction<T>,
        alpha: TimeFunction<T>,
        beta: TimeFunction<T>,
        kappa: TimeFunction<T>,
        gamma: TimeFunction<T>,
        delta: TimeFunction<T>,
    ) -> Self {
        Self { omega_f, omega_b, alpha, beta, kappa, gamma, delta, class: SolutionClass::Custom, ell0: T::one() }
    }

    pub fn with_kappa(mut self, kappa: TimeFunction<T>) -> Self {
        self.kappa = kappa;
        self
    }

    /// Replace β, demoting the set to the custom class.
    pub fn with_beta(mut self, beta: TimeFunction<T>) -> Self {
        self.beta = beta;
        self.class = SolutionClass::Custom;
        self
    }

    pub fn with_ell0(mut self, ell0: T) -> Self {
        self.ell0 = ell0;
        self
    }

    /// `ω_f + i δ̇` (complex; real when the conditions hold).
    pub fn a_f_complex(&self, t: T) -> C<T> {
        self.omega_f.eval(t) + ci::<T>() * self.delta.deriv(t)
    }

    /// `ω_b + i γ̇`
    pub fn a_b_complex(&self, t: T) -> C<T> {
        self.omega_b.eval(t) + ci::<T>() * self.gamma.deriv(t)
    }

    /// Coefficient of `S₊(...)` in the partner: `α e^{γ+δ}`.
    pub fn g(&self, t: T) -> C<T> {
        self.alpha.eval(t) * cexp(self.gamma.eval(t) + self.delta.eval(t))
    }

    /// Coefficient of `S₋(...)` in the partner: `β e^{−(γ+δ)}`.
    pub fn g_lower(&self, t: T) -> C<T> {
        self.beta.eval(t) * cexp(-(self.gamma.eval(t) + self.delta.eval(t)))
    }

    pub fn effective(&self, t: T) -> EffectiveParams<T> {
        let kappa = self.kappa.re(t);
        EffectiveParams {
            t,
            a_f: self.a_f_complex(t).re,
            a_b: self.a_b_complex(t).re,
            g: self.g(t),
            kappa,
            kappa_dot: self.kappa.deriv(t).re,
            ell: self.ell0 * (-kappa).exp(),
            ell0: self.ell0,
        }
    }

    /// Time derivatives `(Ȧ_f, Ȧ_b, d|g|/dt)`.
    pub fn effective_rates(&self, t: T) -> (T, T, T) {
        let a_f_dot = (self.omega_f.deriv(t) + ci::<T>() * self.delta.derivative().deriv(t)).re;
        let a_b_dot = (self.omega_b.deriv(t) + ci::<T>() * self.gamma.derivative().deriv(t)).re;
        let e = cexp(self.gamma.eval(t) + self.delta.eval(t));
        let g = self.alpha.eval(t) * e;
        let g_dot = (self.alpha.deriv(t) + self.alpha.eval(t) * (self.gamma.deriv(t) + self.delta.deriv(t))) * e;
        let m = cabs(g);
        let g_mod_dot = if m > T::zero() { (g.conj() * g_dot).re / m } else { cabs(g_dot) };
        (a_f_dot, a_b_dot, g_mod_dot)
    }

    /// Boundary half-width `ℓ(t) = ℓ₀ e^{−κ(t)}`.
    pub fn ell(&self, t: T) -> T {
        self.ell0 * (-self.kappa.re(t)).exp()
    }

    /// Breakpoints of every trajectory, for quadrature.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = Vec::new();
        for f in [&self.omega_f, &self.omega_b, &self.alpha, &self.beta, &self.kappa, &self.gamma, &self.delta] {
            f.collect_breakpoints(&mut out);
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        out.dedup();
        out
    }

    /// Fastest oscillation present in any trajectory.
    pub fn max_frequency(&self) -> T {
        [&self.omega_f, &self.omega_b, &self.alpha, &self.beta, &self.kappa, &self.gamma, &self.delta]
            .iter()
            .fold(T::zero(), |m, f| m.max(f.max_frequency()))
    }
}

/// Residuals of the Hermiticity conditions at `t`.
pub fn check_hermiticity_conditions<T: Real>(params: &ParameterSet<T>, t: T, tol: f64) -> ConditionReport {
    let alpha = params.alpha.eval(t);
    let two = real::<T>(2.0);
    let want_beta = alpha.conj() * cr((two * (params.gamma.eval(t) + params.delta.eval(t)).re).exp());
    ConditionReport {
        t: to_f64(t),
        im_a_f: to_f64(params.a_f_complex(t).im.abs()),
        im_a_b: to_f64(params.a_b_complex(t).im.abs()),
        im_kappa: to_f64(params.kappa.eval(t).im.abs()),
        beta: to_f64(cabs(params.beta.eval(t) - want_beta)),
        tolerance: tol,
    }
}

/// Boundedness of the Dyson map from the sign of `Re γ` on `grid`.
pub fn classify_boundedness<T: Real>(params: &ParameterSet<T>, grid: &[T]) -> Boundedness {
    let tol = real::<T>(1e-14);
    let (mut pos, mut neg) = (false, false);
    for &t in grid {
        let re = params.gamma.eval(t).re;
        pos |= re > tol;
        neg |= re < -tol;
    }
    match (pos, neg) {
        (false, false) => Boundedness::Bounded,
        (true, false) => Boundedness::EtaUnbounded,
        (false, true) => Boundedness::EtaInverseUnbounded,
        (true, true) => Boundedness::BothDirectionsFail,
    }
}

/// Boundedness on the default check grid `[0, 50]`.
pub fn classify_boundedness_default<T: Real>(params: &ParameterSet<T>) -> Boundedness {
    classify_boundedness(params, &default_check_grid())
}

/// Gate used by every map-dependent computation.
pub fn require_bounded<T: Real>(params: &ParameterSet<T>, allow_unbounded: bool) -> Result<()> {
    let b = classify_boundedness_default(params);
    if b.is_bounded() || allow_unbounded {
        Ok(())
    } else {
        Err(ModelError::Unbounded(b.label().into()))
    }
}
