//! First-order boundary-induced transitions `(n, σ) → (n+2, τ)`.
//!
//! The amplitude is `𝓘 = ∫₀ᵀ M(t) e^{iΦ(t)} dt` with `Φ` the accumulated
//! gap. Closed protocols with a constant background give zero; a changing
//! dressed basis (through `δ(t)`) is what makes it nonzero.

use std::cell::RefCell;

use serde::Serialize;

use crate::error::{ModelError, Result};
use crate::perturbation::{m_formula, matrix_element, real_gauge_block, ChannelAngles};
use crate::quadrature::{gauss_kronrod_15, integrate_complex, integrate_real, QuadratureOptions};
use crate::scalar::{cabs, cabs2, cexp, ci, count, cr, cplx, czero, real, to_f64, Real, C};
use crate::spectra::{sector_energy, Branch};
use crate::trajectories::{solution_i_from_delta, EffectiveParams, ParameterSet, TimeFunction};

/// Default ramp width as a fraction of the protocol duration.
pub const DEFAULT_RAMP_FRACTION: f64 = 1e-3;
/// Largest `|κ₀|` treated as first order without a warning.
pub const FIRST_ORDER_KAPPA: f64 = 0.3;
/// Largest `|𝓘|²` treated as first order without a warning.
pub const FIRST_ORDER_PROBABILITY: f64 = 0.1;
/// Largest admissible sideband modulation depth.
pub const MAX_EPSILON: f64 = 0.1;

/// The transition `(n, σ) → (n+2, τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Channel {
    pub n: usize,
    pub sigma: Branch,
    pub tau: Branch,
}

impl Channel {
    pub fn plus_plus(n: usize) -> Self {
        Self { n, sigma: Branch::Plus, tau: Branch::Plus }
    }

    pub fn label(&self) -> String {
        format!("{},{} -> {},{}", self.n, self.sigma, self.n + 2, self.tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Protocol<T: Real> {
    /// `κ = κ₀` on `[0, T]`, switched on and off by smooth ramps of width `tau_ramp`.
    Quench { kappa0: T, duration: T, tau_ramp: T },
    /// Quench with `δ` switched from `δ_a` to `δ_b` at `t1` and back at `t2`.
    DeltaPulse { kappa0: T, delta_a: T, delta_b: T, t1: T, t2: T, duration: T, tau_ramp: T },
    /// `κ = κ₀ sin(Ω t)` for `cycles` periods, `δ = δ₀ + ε cos(ν t)`.
    Periodic { kappa0: T, omega_drive: T, delta0: T, epsilon: T, nu: T, cycles: usize },
    /// Arbitrary `κ(t)`; `δ(t)` is taken from the background when absent.
    Custom { kappa: TimeFunction<T>, delta: Option<TimeFunction<T>>, duration: T },
}

impl<T: Real> Protocol<T> {
    pub fn quench(kappa0: T, duration: T) -> Result<Self> {
        let p = Protocol::Quench { kappa0, duration, tau_ramp: duration * real(DEFAULT_RAMP_FRACTION) };
        p.validate()?;
        Ok(p)
    }

    pub fn delta_pulse(kappa0: T, delta_a: T, delta_b: T, t1: T, t2: T, duration: T) -> Result<Self> {
        let tau_ramp = duration * real(DEFAULT_RAMP_FRACTION);
        let p = Protocol::DeltaPulse { kappa0, delta_a, delta_b, t1, t2, duration, tau_ramp };
        p.validate()?;
        Ok(p)
    }

    pub fn periodic(kappa0: T, omega_drive: T, delta0: T, epsilon: T, nu: T, cycles: usize) -> Result<Self> {
        let p = Protocol::Periodic { kappa0, omega_drive, delta0, epsilon, nu, cycles };
        p.validate()?;
        Ok(p)
    }

    /// Replace the ramp width (quench and δ-pulse only).
    pub fn with_ramp(mut self, width: T) -> Result<Self> {
        match &mut self {
            Protocol::Quench { tau_ramp, .. } | Protocol::DeltaPulse { tau_ramp, .. } => *tau_ramp = width,
            _ => return Err(ModelError::InvalidProtocol("only quench and delta_pulse protocols have ramps".into())),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Protocol::Quench { .. } => "quench",
            Protocol::DeltaPulse { .. } => "delta_pulse",
            Protocol::Periodic { .. } => "periodic",
            Protocol::Custom { .. } => "custom",
        }
    }

    pub fn duration(&self) -> T {
        match self {
            Protocol::Quench { duration, .. }
            | Protocol::DeltaPulse { duration, .. }
            | Protocol::Custom { duration, .. } => *duration,
            Protocol::Periodic { omega_drive, cycles, .. } => T::two_pi() * count::<T>(*cycles) / *omega_drive,
        }
    }

    /// `κ₀`, or the peak of `|κ|` on a sample grid for custom protocols.
    pub fn kappa0(&self) -> T {
        match self {
            Protocol::Quench { kappa0, .. } | Protocol::DeltaPulse { kappa0, .. } | Protocol::Periodic { kappa0, .. } => {
                *kappa0
            }
            Protocol::Custom { kappa, duration, .. } => (0..=400)
                .map(|k| kappa.re(*duration * count::<T>(k) / real(400.0)).abs())
                .fold(T::zero(), T::max),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidProtocol(m));
        let positive = |x: T| x > T::zero() && x.is_finite();
        match *self {
            Protocol::Quench { duration, tau_ramp, .. } => {
                if !positive(duration) || !positive(tau_ramp) || tau_ramp * real(2.0) > duration {
                    return bad("quench needs T > 0 and 0 < 2 τ_ramp ≤ T".into());
                }
            }
            Protocol::DeltaPulse { t1, t2, duration, tau_ramp, .. } => {
                if !positive(duration) || !positive(tau_ramp) {
                    return bad("delta pulse needs T > 0 and τ_ramp > 0".into());
                }
                if !(T::zero() < t1 && t1 < t2 && t2 < duration) {
                    return bad(format!("need 0 < t1 < t2 < T, got t1 = {}, t2 = {}, T = {}", to_f64(t1), to_f64(t2), to_f64(duration)));
                }
                let half = tau_ramp * real(0.5);
                if t1 - half < tau_ramp || t2 + half > duration - tau_ramp || t2 - t1 < tau_ramp {
                    return bad("ramps overlap; shorten τ_ramp".into());
                }
            }
            Protocol::Periodic { omega_drive, epsilon, nu, cycles, .. } => {
                if !positive(omega_drive) || cycles == 0 {
                    return bad("periodic protocol needs Ω > 0 and at least one cycle".into());
                }
                if epsilon.abs() > real(MAX_EPSILON) {
                    return bad(format!("|ε| = {} exceeds {MAX_EPSILON}", to_f64(epsilon.abs())));
                }
                if nu < T::zero() {
                    return bad("ν must be nonnegative".into());
                }
            }
            Protocol::Custom { duration, .. } => {
                if !positive(duration) {
                    return bad("custom protocol needs T > 0".into());
                }
            }
        }
        Ok(())
    }

    /// `κ(t)` of the protocol.
    pub fn kappa_function(&self) -> TimeFunction<T> {
        let on_off = |duration: T, tau: T| TimeFunction::ramp(T::zero(), tau).plus(TimeFunction::ramp(duration - tau, tau).scaled(cr(-T::one())));
        match self {
            Protocol::Quench { kappa0, duration, tau_ramp } | Protocol::DeltaPulse { kappa0, duration, tau_ramp, .. } => {
                on_off(*duration, *tau_ramp).scaled(cr(*kappa0))
            }
            Protocol::Periodic { kappa0, omega_drive, .. } => TimeFunction::sin(cr(*kappa0), *omega_drive),
            Protocol::Custom { kappa, .. } => kappa.clone(),
        }
    }

    /// `δ(t)` of the protocol, `None` when the background's is kept.
    pub fn delta_function(&self) -> Option<TimeFunction<T>> {
        match self {
            Protocol::Quench { .. } => None,
            Protocol::DeltaPulse { delta_a, delta_b, t1, t2, tau_ramp, .. } => {
                let half = *tau_ramp * real(0.5);
                let window = TimeFunction::ramp(*t1 - half, *tau_ramp)
                    .plus(TimeFunction::ramp(*t2 - half, *tau_ramp).scaled(cr(-T::one())));
                Some(TimeFunction::real_constant(*delta_a).plus(window.scaled(cr(*delta_b - *delta_a))))
            }
            Protocol::Periodic { delta0, epsilon, nu, .. } => {
                Some(TimeFunction::real_constant(*delta0).plus(TimeFunction::cos(cr(*epsilon), *nu)))
            }
            Protocol::Custom { delta, .. } => delta.clone(),
        }
    }

    /// Solution-I parameters with this protocol's `κ` and `δ` on top of
    /// the background's `ω_b`, `α` and `γ`.
    pub fn apply(&self, background: &ParameterSet<T>) -> Result<ParameterSet<T>> {
        match self.delta_function() {
            None => Ok(background.clone().with_kappa(self.kappa_function())),
            Some(delta) => with_delta(background, delta, self.kappa_function()),
        }
    }

    /// Whether `κ(0) = κ(T) = 0` to `tol`.
    pub fn is_closed(&self, tol: T) -> bool {
        let k = self.kappa_function();
        k.re(T::zero()).abs() <= tol && k.re(self.duration()).abs() <= tol
    }
}

fn with_delta<T: Real>(background: &ParameterSet<T>, delta: TimeFunction<T>, kappa: TimeFunction<T>) -> Result<ParameterSet<T>> {
    solution_i_from_delta(delta, background.omega_b.clone(), background.alpha.clone(), background.gamma.eval(T::zero()), kappa)
        .map(|p| p.with_ell0(background.ell0))
}

/// The background frozen at `δ = delta`, without boundary motion.
pub fn plateau<T: Real>(background: &ParameterSet<T>, delta: T) -> Result<ParameterSet<T>> {
    with_delta(background, TimeFunction::real_constant(delta), TimeFunction::zero())
}

fn require_static_background<T: Real>(background: &ParameterSet<T>) -> Result<()> {
    if background.omega_b.is_constant() && background.alpha.is_constant() && background.gamma.is_constant() {
        Ok(())
    } else {
        Err(ModelError::InvalidProtocol("closed forms need a constant ω_b, α and γ".into()))
    }
}

/// `Δ^{στ}_n = E_{n+2}^τ − E_n^σ`
pub fn gap<T: Real>(channel: Channel, eff: &EffectiveParams<T>) -> T {
    sector_energy(eff, channel.n + 2, channel.tau) - sector_energy(eff, channel.n, channel.sigma)
}

/// `Δ_n^{++}` for solution I, `2A_b + ½[√(A_b² + 4|g|²(n+3)) − √(A_b² + 4|g|²(n+1))]`.
pub fn solution_i_gap<T: Real>(n: usize, a_b: T, g_mod: T) -> T {
    let four_g2 = real::<T>(4.0) * g_mod * g_mod;
    real::<T>(2.0) * a_b
        + real::<T>(0.5) * ((a_b * a_b + four_g2 * count::<T>(n + 3)).sqrt() - (a_b * a_b + four_g2 * count::<T>(n + 1)).sqrt())
}

fn angles<T: Real>(n: usize, eff: &EffectiveParams<T>) -> Result<ChannelAngles<T>> {
    let src = real_gauge_block(n, eff)?;
    let dst = real_gauge_block(n + 2, eff)?;
    Ok(ChannelAngles { c_src: src.cos_theta(), s_src: src.sin_theta(), c_dst: dst.cos_theta(), s_dst: dst.sin_theta() })
}

/// `(B_n, D_n)` with `M_{n+2,+;n,+} = i(B_n/2)κ̇ − D_nκ`.
pub fn bd_coefficients<T: Real>(n: usize, eff: &EffectiveParams<T>) -> Result<(T, T)> {
    let a = angles(n, eff)?;
    let r1 = count::<T>((n + 1) * (n + 2)).sqrt();
    let r2 = count::<T>(n + 2).sqrt();
    let r3 = count::<T>((n + 2) * (n + 3)).sqrt();
    let b = a.c_dst * a.c_src * r1 + a.s_dst * a.s_src * r3;
    let d = eff.a_b * b + eff.g_mod() * a.c_dst * a.s_src * r2;
    Ok((b, d))
}

/// `P^{στ} = 2⟨ψ_{n+2}^τ|K|ψ_n^σ⟩`, which reduces to `B_n` for `++`.
fn k_element<T: Real>(channel: Channel, a: &ChannelAngles<T>) -> T {
    // α₊ = i, κ|g| = 0 leaves i·P
    (m_formula(channel.n, true, channel.tau, channel.sigma, a, ci(), T::zero()) * -ci::<T>()).re
}

pub fn channel_b<T: Real>(channel: Channel, eff: &EffectiveParams<T>) -> Result<T> {
    Ok(k_element(channel, &angles(channel.n, eff)?))
}

/// `θ̇_n = (x Ṡ − S ẋ)/Ω²` with `S = A_b + A_f` and `x = |g|√(n+1)`.
fn theta_rate<T: Real>(n: usize, eff: &EffectiveParams<T>, rates: (T, T, T)) -> T {
    let (a_f_dot, a_b_dot, g_dot) = rates;
    let s = eff.a_b + eff.a_f;
    let root = count::<T>(n + 1).sqrt();
    let x = eff.g_mod() * root;
    let omega2 = s * s + real::<T>(4.0) * x * x;
    (x * (a_f_dot + a_b_dot) - s * g_dot * root) / omega2
}

/// Angle derivative of the channel's `P`, given `dθ` for both sectors.
fn k_element_derivative<T: Real>(channel: Channel, a: &ChannelAngles<T>, d_src: T, d_dst: T) -> T {
    // P is linear in (c, s) of each sector: ∂/∂θ maps (c, s) → (−s, c)
    let src = ChannelAngles { c_src: -a.s_src, s_src: a.c_src, ..*a };
    let dst = ChannelAngles { c_dst: -a.s_dst, s_dst: a.c_dst, ..*a };
    k_element(channel, &src) * d_src + k_element(channel, &dst) * d_dst
}

/// `dP/dt` along the trajectory; for `++` this is `Ḃ_n`.
pub fn channel_b_dot<T: Real>(channel: Channel, params: &ParameterSet<T>, t: T) -> Result<T> {
    let eff = params.effective(t);
    let rates = params.effective_rates(t);
    let a = angles(channel.n, &eff)?;
    Ok(k_element_derivative(channel, &a, theta_rate(channel.n, &eff, rates), theta_rate(channel.n + 2, &eff, rates)))
}

/// `∂B_n/∂δ` at fixed `A_b`, `A_f`, using `|g| = |α|e^{δ}`.
pub fn b_delta_derivative<T: Real>(n: usize, eff: &EffectiveParams<T>) -> Result<T> {
    let a = angles(n, eff)?;
    let g = eff.g_mod();
    let dtheta = |m: usize| {
        let s = eff.a_b + eff.a_f;
        let root = count::<T>(m + 1).sqrt();
        -s * root * g / (s * s + real::<T>(4.0) * g * g * count::<T>(m + 1))
    };
    Ok(k_element_derivative(Channel::plus_plus(n), &a, dtheta(n), dtheta(n + 2)))
}

fn quadrature_for<T: Real>(tol: T, omega: T, points: usize) -> QuadratureOptions<T> {
    QuadratureOptions::default().with_abs_tol(tol).resolving(omega, points)
}

/// `Φ^{++}_n(t) = ∫₀ᵗ Δ_n^{++}`, adaptive with absolute tolerance 1e−10.
pub fn phase<T: Real>(n: usize, params: &ParameterSet<T>, t: T) -> Result<T> {
    phase_channel(Channel::plus_plus(n), params, t, real(1e-10))
}

pub fn phase_channel<T: Real>(channel: Channel, params: &ParameterSet<T>, t: T, tol: T) -> Result<T> {
    if t < T::zero() {
        return Err(ModelError::InvalidParameters("phase needs t ≥ 0".into()));
    }
    let opts = quadrature_for(tol, params.max_frequency(), 8);
    integrate_real(&|s| gap(channel, &params.effective(s)), T::zero(), t, &params.breakpoints(), &opts)
}

/// Cumulative `Φ` on knots, evaluated in between by one Kronrod panel.
pub struct PhaseTable<'a, T: Real> {
    params: &'a ParameterSet<T>,
    channel: Channel,
    knots: Vec<T>,
    values: Vec<T>,
}

impl<'a, T: Real> PhaseTable<'a, T> {
    pub fn new(channel: Channel, params: &'a ParameterSet<T>, horizon: T, tol: T) -> Result<Self> {
        let mut edges: Vec<T> = vec![T::zero()];
        edges.extend(params.breakpoints().into_iter().filter(|b| *b > T::zero() && *b < horizon));
        edges.push(horizon);
        // background variation sets the knot spacing, not the gap itself
        let omega = params.max_frequency();
        let mut step = horizon / real(64.0);
        if omega > T::zero() {
            step = step.min(T::two_pi() / omega / real(8.0));
        }
        let mut knots = vec![T::zero()];
        for w in edges.windows(2) {
            let pieces = to_f64(((w[1] - w[0]) / step).ceil()).max(4.0) as usize;
            for k in 1..=pieces {
                knots.push(w[0] + (w[1] - w[0]) * count::<T>(k) / count::<T>(pieces));
            }
        }
        let opts = QuadratureOptions::default().with_abs_tol(tol / count::<T>(knots.len()));
        let f = |s: T| gap(channel, &params.effective(s));
        let mut values = vec![T::zero()];
        for w in knots.windows(2) {
            let v = integrate_real(&f, w[0], w[1], &[], &opts)?;
            values.push(*values.last().expect("nonempty") + v);
        }
        Ok(Self { params, channel, knots, values })
    }

    pub fn eval(&self, t: T) -> T {
        let k = self.knots.partition_point(|x| *x <= t).saturating_sub(1).min(self.knots.len() - 2);
        let f = |s: T| cr(gap(self.channel, &self.params.effective(s)));
        self.values[k] + gauss_kronrod_15(&f, self.knots[k], t).0.re
    }

    pub fn horizon(&self) -> T {
        *self.knots.last().expect("nonempty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeOptions<T: Real> {
    pub abs_tol: T,
    /// Kronrod nodes per period of the fastest oscillation.
    pub points_per_period: usize,
    /// Samples in the reported grids.
    pub grid_points: usize,
}

impl<T: Real> Default for AmplitudeOptions<T> {
    fn default() -> Self {
        Self { abs_tol: real(1e-11), points_per_period: 40, grid_points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeResult {
    pub channel: Channel,
    pub duration: f64,
    /// `𝓘`
    pub value: C<f64>,
    /// `|𝓘|²`
    pub probability: f64,
    /// The same amplitude from the integrated-by-parts form.
    pub by_parts: C<f64>,
    pub by_parts_difference: f64,
    pub quadrature_error: f64,
    pub evaluations: usize,
    pub time_grid: Vec<f64>,
    pub phase_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub d_grid: Vec<f64>,
    pub gap_grid: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Runs `f` with errors from inside a quadrature closure captured.
struct ErrorSlot(RefCell<Option<ModelError>>);

impl ErrorSlot {
    fn new() -> Self {
        Self(RefCell::new(None))
    }

    fn keep<T: Real>(&self, r: Result<C<T>>) -> C<T> {
        r.unwrap_or_else(|e| {
            self.0.borrow_mut().get_or_insert(e);
            czero()
        })
    }

    fn check(self) -> Result<()> {
        self.0.into_inner().map_or(Ok(()), Err)
    }
}

/// `𝓘` for `protocol` on top of `background`.
pub fn amplitude_integral<T: Real>(
    channel: Channel,
    background: &ParameterSet<T>,
    protocol: &Protocol<T>,
    opts: &AmplitudeOptions<T>,
) -> Result<AmplitudeResult> {
    let params = protocol.apply(background)?;
    let mut r = amplitude_integral_params(channel, &params, protocol.duration(), opts)?;
    if protocol.kappa0().abs() > real(FIRST_ORDER_KAPPA) {
        r.warnings.push(format!("|κ₀| = {:.3} beyond the first-order regime {FIRST_ORDER_KAPPA}", to_f64(protocol.kappa0().abs())));
    }
    Ok(r)
}

/// `𝓘 = ∫₀ᵀ M(t) e^{iΦ(t)} dt` for an already assembled parameter set.
pub fn amplitude_integral_params<T: Real>(
    channel: Channel,
    params: &ParameterSet<T>,
    duration: T,
    opts: &AmplitudeOptions<T>,
) -> Result<AmplitudeResult> {
    let grid = crate::trajectories::uniform_grid(duration, opts.grid_points.max(2));
    let gaps: Vec<T> = grid.iter().map(|t| gap(channel, &params.effective(*t))).collect();
    let max_gap = gaps.iter().fold(T::zero(), |m, g| m.max(g.abs()));
    let omega = max_gap.max(params.max_frequency());
    let quad = quadrature_for(opts.abs_tol, omega, opts.points_per_period);
    let table = PhaseTable::new(channel, params, duration, opts.abs_tol * real(0.01))?;
    let breaks = params.breakpoints();

    let slot = ErrorSlot::new();
    let direct = |t: T| {
        let eff = params.effective(t);
        let m = matrix_element(channel.n + 2, channel.tau, channel.n, channel.sigma, &eff).map(|e| e.value);
        slot.keep(m) * cexp(ci::<T>() * cr(table.eval(t)))
    };
    let main = integrate_complex(&direct, T::zero(), duration, &breaks, &quad)?;

    let by_parts_integrand = |t: T| {
        let b_dot = channel_b_dot(channel, params, t).map(cr);
        slot.keep(b_dot) * cr(params.kappa.re(t)) * cexp(ci::<T>() * cr(table.eval(t)))
    };
    let tail = integrate_complex(&by_parts_integrand, T::zero(), duration, &breaks, &quad)?;
    slot.check()?;
    let endpoint = |t: T| -> Result<C<T>> {
        let b = channel_b(channel, &params.effective(t))?;
        Ok(ci::<T>() * cr(real::<T>(0.5) * b * params.kappa.re(t)) * cexp(ci::<T>() * cr(table.eval(t))))
    };
    let by_parts = endpoint(duration)? - endpoint(T::zero())? - ci::<T>() * cr(real(0.5)) * tail.value;

    let mut phase_grid = Vec::with_capacity(grid.len());
    let mut b_grid = Vec::with_capacity(grid.len());
    let mut d_grid = Vec::with_capacity(grid.len());
    let mut warnings = Vec::new();
    for t in &grid {
        phase_grid.push(to_f64(table.eval(*t)));
        match bd_coefficients(channel.n, &params.effective(*t)) {
            Ok((b, d)) => {
                b_grid.push(to_f64(b));
                d_grid.push(to_f64(d));
            }
            Err(e) => {
                warnings.push(format!("t = {}: {e}", to_f64(*t)));
                b_grid.push(f64::NAN);
                d_grid.push(f64::NAN);
            }
        }
    }
    let value = C::new(to_f64(main.value.re), to_f64(main.value.im));
    let probability = value.norm_sqr();
    if probability > FIRST_ORDER_PROBABILITY {
        warnings.push(format!("|I|² = {probability:.3} is not small; first order is unreliable"));
    }
    let by_parts = C::new(to_f64(by_parts.re), to_f64(by_parts.im));
    Ok(AmplitudeResult {
        channel,
        duration: to_f64(duration),
        value,
        probability,
        by_parts,
        by_parts_difference: (value - by_parts).norm(),
        quadrature_error: to_f64(main.error + tail.error),
        evaluations: main.evaluations + tail.evaluations,
        time_grid: grid.iter().map(|t| to_f64(*t)).collect(),
        phase_grid,
        b_grid,
        d_grid,
        gap_grid: gaps.iter().map(|g| to_f64(*g)).collect(),
        warnings,
    })
}

/// Plateau data of a δ-pulse: `(Δ(δ_a), Δ(δ_b), B(δ_a), B(δ_b))`.
pub fn pulse_plateaus<T: Real>(n: usize, background: &ParameterSet<T>, protocol: &Protocol<T>) -> Result<(T, T, T, T)> {
    let Protocol::DeltaPulse { delta_a, delta_b, .. } = *protocol else {
        return Err(ModelError::InvalidProtocol(format!("expected delta_pulse, got {}", protocol.kind())));
    };
    require_static_background(background)?;
    let ch = Channel::plus_plus(n);
    let ea = plateau(background, delta_a)?.effective(T::zero());
    let eb = plateau(background, delta_b)?.effective(T::zero());
    Ok((gap(ch, &ea), gap(ch, &eb), bd_coefficients(n, &ea)?.0, bd_coefficients(n, &eb)?.0))
}

/// `𝓘 = −(iκ₀/2)[B_n(δ_b) − B_n(δ_a)][e^{iΦ(t₁)} − e^{iΦ(t₂)}]`, with `Φ`
/// accumulated from the plateau gaps.
pub fn delta_pulse_amplitude<T: Real>(n: usize, background: &ParameterSet<T>, protocol: &Protocol<T>) -> Result<C<T>> {
    let (gap_a, gap_b, b_a, b_b) = pulse_plateaus(n, background, protocol)?;
    let Protocol::DeltaPulse { kappa0, t1, t2, .. } = *protocol else { unreachable!("checked above") };
    let phi1 = gap_a * t1;
    let phi2 = phi1 + gap_b * (t2 - t1);
    let jump = cexp(cplx(T::zero(), phi1)) - cexp(cplx(T::zero(), phi2));
    Ok(-ci::<T>() * cr(kappa0 * real(0.5) * (b_b - b_a)) * jump)
}

/// `t₂ = t₁ + 2πk/Δ_n^{++}(δ_b)` for a constant solution-I background.
pub fn suppression_times<T: Real>(n: usize, t1: T, k: usize, delta_b: T, background: &ParameterSet<T>) -> Result<T> {
    if k == 0 {
        return Err(ModelError::InvalidParameters("k must be at least 1".into()));
    }
    require_static_background(background)?;
    let eff = plateau(background, delta_b)?.effective(t1);
    let g_mod = cabs(background.alpha.eval(t1)) * (background.gamma.eval(t1).re + delta_b).exp();
    let d = solution_i_gap(n, eff.a_b, g_mod);
    if d <= T::zero() {
        return Err(ModelError::InvalidParameters(format!("gap Δ = {} is not positive", to_f64(d))));
    }
    Ok(t1 + T::two_pi() * count::<T>(k) / d)
}

/// Whether a δ-pulse amplitude counts as suppressed.
pub fn is_suppressed<T: Real>(amplitude: C<T>, kappa0: T, delta_b_jump: T) -> bool {
    cabs(amplitude) < real::<T>(1e-10) * (kappa0 * delta_b_jump).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub sideband: &'static str,
    pub frequency: f64,
    pub gap: f64,
    pub detuning: f64,
    /// `2π/T`
    pub fourier_width: f64,
    pub resonant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SidebandResult {
    pub value: C<f64>,
    pub db_ddelta: f64,
    pub gap: f64,
    /// Relative spread of the gap over the protocol.
    pub gap_variation: f64,
    pub matches: Vec<ResonanceReport>,
    pub warnings: Vec<String>,
}

/// `∫₀ᵀ e^{ixt} dt`, with the series near `x = 0`.
fn exp_integral<T: Real>(x: T, duration: T) -> C<T> {
    let z = x * duration;
    if z.abs() < real(1e-6) {
        // T(1 + iz/2 − z²/6)
        return cr(duration) * cplx(T::one() - z * z / real(6.0), z * real(0.5));
    }
    (cexp(cplx(T::zero(), z)) - cr(T::one())) / cplx(T::zero(), x)
}

/// `∫₀ᵀ sin(Ωt) sin(νt) e^{iΔt} dt` in closed form.
pub fn sideband_integral<T: Real>(omega: T, nu: T, gap: T, duration: T) -> C<T> {
    // sin a sin b = ½[cos(a−b) − cos(a+b)], cos(wt) = ½(e^{iwt} + e^{−iwt})
    let cos_part = |w: T| (exp_integral(gap + w, duration) + exp_integral(gap - w, duration)) * cr(real(0.5));
    (cos_part(omega - nu) - cos_part(omega + nu)) * cr(real(0.5))
}

/// `𝓘 ≈ (iεκ₀ν/2) ∂B_n/∂δ ∫₀ᵀ sin(Ωt) sin(νt) e^{iΔt} dt`.
pub fn sideband_amplitude<T: Real>(n: usize, background: &ParameterSet<T>, protocol: &Protocol<T>) -> Result<SidebandResult> {
    let Protocol::Periodic { kappa0, omega_drive, delta0, epsilon, nu, .. } = *protocol else {
        return Err(ModelError::InvalidProtocol(format!("expected periodic, got {}", protocol.kind())));
    };
    let duration = protocol.duration();
    let eff = plateau(background, delta0)?.effective(T::zero());
    let ch = Channel::plus_plus(n);
    let d = gap(ch, &eff);
    let db = b_delta_derivative(n, &eff)?;
    let value = ci::<T>() * cr(epsilon * kappa0 * nu * real(0.5) * db) * sideband_integral(omega_drive, nu, d, duration);

    let applied = protocol.apply(background)?;
    let gaps: Vec<T> = crate::trajectories::uniform_grid(duration, 201).iter().map(|t| gap(ch, &applied.effective(*t))).collect();
    let (lo, hi) = gaps.iter().fold((gaps[0], gaps[0]), |(a, b), g| (a.min(*g), b.max(*g)));
    let variation = to_f64((hi - lo) / d.abs());
    let mut warnings = Vec::new();
    if variation > 0.05 {
        warnings.push(format!("gap varies by {:.1}% over the protocol; constant-gap approximation is poor", 100.0 * variation));
    }
    let width = to_f64(T::two_pi() / duration);
    let matches = [("omega+nu", omega_drive + nu), ("|omega-nu|", (omega_drive - nu).abs())]
        .into_iter()
        .map(|(name, f)| {
            let detuning = to_f64((d - f).abs());
            ResonanceReport { sideband: name, frequency: to_f64(f), gap: to_f64(d), detuning, fourier_width: width, resonant: detuning <= width }
        })
        .collect();
    Ok(SidebandResult {
        value: C::new(to_f64(value.re), to_f64(value.im)),
        db_ddelta: to_f64(db),
        gap: to_f64(d),
        gap_variation: variation,
        matches,
        warnings,
    })
}

/// `|𝓘|²`, kept as a function so every caller squares the same way.
pub fn probability<T: Real>(amplitude: C<T>) -> T {
    cabs2(amplitude)
}
