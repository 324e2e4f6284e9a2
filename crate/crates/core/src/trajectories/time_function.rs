use std::fmt;

use crate::quadrature::{integrate_complex, QuadratureOptions};
use crate::scalar::{cexp, cone, count, cr, czero, real, Real, C};

/// Complex-valued function of time built from a small set of primitives.
///
/// Derivatives are taken symbolically from the tree, so evaluating `ḟ` never
/// involves numerical differentiation. Antiderivatives are symbolic where the
/// tree permits and fall back to an [`TimeFunction::Integral`] node evaluated
/// by adaptive quadrature otherwise.
#[derive(Clone, PartialEq)]
pub enum TimeFunction<T: Real> {
    Const(C<T>),
    /// `amp · sin(freq·t + shift)`
    Sin { amp: C<T>, freq: T, shift: T },
    /// `amp · cos(freq·t + shift)`
    Cos { amp: C<T>, freq: T, shift: T },
    /// `Σ_k c_k t^k`
    Poly(Vec<C<T>>),
    /// Piecewise function: 0 before `start`, `Σ_k c_k u^k` with
    /// `u = (t − start)/width` on the window, `after` beyond it.
    /// [`TimeFunction::ramp`] is the smooth-step instance.
    Window { start: T, width: T, poly: Vec<C<T>>, after: C<T> },
    Sum(Vec<TimeFunction<T>>),
    Product(Box<TimeFunction<T>>, Box<TimeFunction<T>>),
    Scale(C<T>, Box<TimeFunction<T>>),
    Exp(Box<TimeFunction<T>>),
    /// Complex conjugate (time is real, so it commutes with `d/dt`).
    Conj(Box<TimeFunction<T>>),
    /// `∫₀ᵗ f(s) ds`
    Integral(Box<TimeFunction<T>>),
}

impl<T: Real> fmt::Debug for TimeFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl<T: Real> fmt::Display for TimeFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFunction::Const(c) => write!(f, "{}", fmt_c(*c)),
            TimeFunction::Sin { amp, freq, shift } => {
                write!(f, "{}*sin({}*t + {})", fmt_c(*amp), freq, shift)
            }
            TimeFunction::Cos { amp, freq, shift } => {
                write!(f, "{}*cos({}*t + {})", fmt_c(*amp), freq, shift)
            }
            TimeFunction::Poly(c) => {
                let terms: Vec<String> = c.iter().enumerate().map(|(k, c)| format!("{}*t^{k}", fmt_c(*c))).collect();
                write!(f, "({})", terms.join(" + "))
            }
            TimeFunction::Window { start, width, after, .. } => {
                write!(f, "window(start={start}, width={width}, after={})", fmt_c(*after))
            }
            TimeFunction::Sum(terms) => {
                let terms: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
                write!(f, "({})", terms.join(" + "))
            }
            TimeFunction::Product(a, b) => write!(f, "{a}*{b}"),
            TimeFunction::Scale(c, a) => write!(f, "{}*{a}", fmt_c(*c)),
            TimeFunction::Exp(a) => write!(f, "exp({a})"),
            TimeFunction::Conj(a) => write!(f, "conj({a})"),
            TimeFunction::Integral(a) => write!(f, "int_0^t({a})"),
        }
    }
}

fn fmt_c<T: Real>(c: C<T>) -> String {
    if c.im == T::zero() {
        format!("{}", c.re)
    } else {
        format!("({}{:+}i)", c.re, c.im)
    }
}

fn horner<T: Real>(coeffs: &[C<T>], x: C<T>) -> C<T> {
    coeffs.iter().rev().fold(czero(), |acc, c| acc * x + *c)
}

fn poly_derivative<T: Real>(coeffs: &[C<T>]) -> Vec<C<T>> {
    coeffs.iter().enumerate().skip(1).map(|(k, c)| *c * cr(count::<T>(k))).collect()
}

fn poly_antiderivative<T: Real>(coeffs: &[C<T>]) -> Vec<C<T>> {
    std::iter::once(czero()).chain(coeffs.iter().enumerate().map(|(k, c)| *c / cr(count::<T>(k + 1)))).collect()
}

impl<T: Real> TimeFunction<T> {
    pub fn constant(c: C<T>) -> Self {
        TimeFunction::Const(c)
    }

    pub fn real_constant(c: T) -> Self {
        TimeFunction::Const(cr(c))
    }

    pub fn zero() -> Self {
        TimeFunction::Const(czero())
    }

    /// `amp · sin(freq·t)`
    pub fn sin(amp: C<T>, freq: T) -> Self {
        TimeFunction::Sin { amp, freq, shift: T::zero() }
    }

    /// `amp · cos(freq·t)`
    pub fn cos(amp: C<T>, freq: T) -> Self {
        TimeFunction::Cos { amp, freq, shift: T::zero() }
    }

    /// Identity function `t`.
    pub fn t() -> Self {
        TimeFunction::Poly(vec![czero(), cone()])
    }

    /// Smooth step from 0 to 1 over `[start, start + width]`
    /// (quintic `6u⁵ − 15u⁴ + 10u³`, C² at both ends).
    pub fn ramp(start: T, width: T) -> Self {
        let c = |x: f64| cr(real::<T>(x));
        TimeFunction::Window {
            start,
            width,
            poly: vec![c(0.0), c(0.0), c(0.0), c(10.0), c(-15.0), c(6.0)],
            after: cone(),
        }
    }

    pub fn scaled(self, c: C<T>) -> Self {
        TimeFunction::Scale(c, Box::new(self))
    }

    pub fn plus(self, other: Self) -> Self {
        match self {
            TimeFunction::Sum(mut terms) => {
                terms.push(other);
                TimeFunction::Sum(terms)
            }
            s => TimeFunction::Sum(vec![s, other]),
        }
    }

    pub fn times(self, other: Self) -> Self {
        TimeFunction::Product(Box::new(self), Box::new(other))
    }

    pub fn exp(self) -> Self {
        TimeFunction::Exp(Box::new(self))
    }

    pub fn conj(self) -> Self {
        TimeFunction::Conj(Box::new(self))
    }

    pub fn is_constant(&self) -> bool {
        match self {
            TimeFunction::Const(_) => true,
            TimeFunction::Sin { amp, freq, .. } | TimeFunction::Cos { amp, freq, .. } => {
                *amp == czero() || *freq == T::zero()
            }
            TimeFunction::Poly(c) => c.iter().skip(1).all(|c| *c == czero()),
            TimeFunction::Window { .. } => false,
            TimeFunction::Sum(terms) => terms.iter().all(|t| t.is_constant()),
            TimeFunction::Product(a, b) => a.is_constant() && b.is_constant(),
            TimeFunction::Scale(c, a) => *c == czero() || a.is_constant(),
            TimeFunction::Exp(a) | TimeFunction::Conj(a) => a.is_constant(),
            TimeFunction::Integral(a) => matches!(**a, TimeFunction::Const(z) if z == czero()),
        }
    }

    pub fn eval(&self, t: T) -> C<T> {
        match self {
            TimeFunction::Const(c) => *c,
            TimeFunction::Sin { amp, freq, shift } => *amp * cr((*freq * t + *shift).sin()),
            TimeFunction::Cos { amp, freq, shift } => *amp * cr((*freq * t + *shift).cos()),
            TimeFunction::Poly(c) => horner(c, cr(t)),
            TimeFunction::Window { start, width, poly, after } => {
                if t < *start {
                    czero()
                } else if t > *start + *width {
                    *after
                } else {
                    horner(poly, cr((t - *start) / *width))
                }
            }
            TimeFunction::Sum(terms) => terms.iter().fold(czero(), |acc, f| acc + f.eval(t)),
            TimeFunction::Product(a, b) => a.eval(t) * b.eval(t),
            TimeFunction::Scale(c, a) => *c * a.eval(t),
            TimeFunction::Exp(a) => cexp(a.eval(t)),
            TimeFunction::Conj(a) => a.eval(t).conj(),
            TimeFunction::Integral(a) => {
                if t == T::zero() {
                    return czero();
                }
                let f = |s: T| a.eval(s);
                let opts = QuadratureOptions { abs_tol: real(1e-12), rel_tol: real(1e-13), ..Default::default() };
                let mut breaks = Vec::new();
                a.collect_breakpoints(&mut breaks);
                breaks.retain(|b| *b > T::zero() && *b < t);
                integrate_complex(&f, T::zero(), t, &breaks, &opts).map(|r| r.value).unwrap_or_else(|_| {
                    cr(real(f64::NAN))
                })
            }
        }
    }

    /// Real part at `t`.
    pub fn re(&self, t: T) -> T {
        self.eval(t).re
    }

    /// `ḟ(t)`, evaluated from the tree.
    pub fn deriv(&self, t: T) -> C<T> {
        match self {
            TimeFunction::Const(_) => czero(),
            TimeFunction::Sin { amp, freq, shift } => *amp * cr(*freq * (*freq * t + *shift).cos()),
            TimeFunction::Cos { amp, freq, shift } => -*amp * cr(*freq * (*freq * t + *shift).sin()),
            TimeFunction::Poly(c) => horner(&poly_derivative(c), cr(t)),
            TimeFunction::Window { start, width, poly, .. } => {
                if t < *start || t > *start + *width {
                    czero()
                } else {
                    horner(&poly_derivative(poly), cr((t - *start) / *width)) / cr(*width)
                }
            }
            TimeFunction::Sum(terms) => terms.iter().fold(czero(), |acc, f| acc + f.deriv(t)),
            TimeFunction::Product(a, b) => a.deriv(t) * b.eval(t) + a.eval(t) * b.deriv(t),
            TimeFunction::Scale(c, a) => *c * a.deriv(t),
            TimeFunction::Exp(a) => cexp(a.eval(t)) * a.deriv(t),
            TimeFunction::Conj(a) => a.deriv(t).conj(),
            TimeFunction::Integral(a) => a.eval(t),
        }
    }

    /// Symbolic derivative.
    pub fn derivative(&self) -> Self {
        match self {
            TimeFunction::Const(_) => Self::zero(),
            TimeFunction::Sin { amp, freq, shift } => {
                TimeFunction::Cos { amp: *amp * cr(*freq), freq: *freq, shift: *shift }
            }
            TimeFunction::Cos { amp, freq, shift } => {
                TimeFunction::Sin { amp: -*amp * cr(*freq), freq: *freq, shift: *shift }
            }
            TimeFunction::Poly(c) => TimeFunction::Poly(poly_derivative(c)),
            TimeFunction::Window { start, width, poly, .. } => TimeFunction::Window {
                start: *start,
                width: *width,
                poly: poly_derivative(poly).into_iter().map(|c| c / cr(*width)).collect(),
                after: czero(),
            },
            TimeFunction::Sum(terms) => TimeFunction::Sum(terms.iter().map(|f| f.derivative()).collect()),
            TimeFunction::Product(a, b) => TimeFunction::Sum(vec![
                TimeFunction::Product(Box::new(a.derivative()), b.clone()),
                TimeFunction::Product(a.clone(), Box::new(b.derivative())),
            ]),
            TimeFunction::Scale(c, a) => TimeFunction::Scale(*c, Box::new(a.derivative())),
            TimeFunction::Exp(a) => TimeFunction::Product(Box::new(self.clone()), Box::new(a.derivative())),
            TimeFunction::Conj(a) => TimeFunction::Conj(Box::new(a.derivative())),
            TimeFunction::Integral(a) => (**a).clone(),
        }
    }

    /// Symbolic antiderivative vanishing at `t = 0`, when the tree permits.
    pub fn antiderivative(&self) -> Option<Self> {
        let anti = match self {
            TimeFunction::Const(c) => TimeFunction::Poly(vec![czero(), *c]),
            TimeFunction::Sin { amp, freq, shift } => {
                if *freq == T::zero() {
                    TimeFunction::Poly(vec![czero(), *amp * cr(shift.sin())])
                } else {
                    // −(amp/ω)(cos(ωt+φ) − cos φ)
                    let a = -*amp / cr(*freq);
                    TimeFunction::Sum(vec![
                        TimeFunction::Cos { amp: a, freq: *freq, shift: *shift },
                        TimeFunction::Const(-a * cr(shift.cos())),
                    ])
                }
            }
            TimeFunction::Cos { amp, freq, shift } => {
                if *freq == T::zero() {
                    TimeFunction::Poly(vec![czero(), *amp * cr(shift.cos())])
                } else {
                    let a = *amp / cr(*freq);
                    TimeFunction::Sum(vec![
                        TimeFunction::Sin { amp: a, freq: *freq, shift: *shift },
                        TimeFunction::Const(-a * cr(shift.sin())),
                    ])
                }
            }
            TimeFunction::Poly(c) => TimeFunction::Poly(poly_antiderivative(c)),
            TimeFunction::Window { start, width, poly, after } if *after == czero() && *start >= T::zero() => {
                let p = poly_antiderivative(poly);
                let total = horner(&p, cone()) * cr(*width);
                TimeFunction::Window {
                    start: *start,
                    width: *width,
                    poly: p.into_iter().map(|c| c * cr(*width)).collect(),
                    after: total,
                }
            }
            TimeFunction::Sum(terms) => {
                TimeFunction::Sum(terms.iter().map(|f| f.antiderivative()).collect::<Option<Vec<_>>>()?)
            }
            TimeFunction::Scale(c, a) => TimeFunction::Scale(*c, Box::new(a.antiderivative()?)),
            TimeFunction::Product(a, b) if a.is_constant() => {
                TimeFunction::Scale(a.eval(T::zero()), Box::new(b.antiderivative()?))
            }
            TimeFunction::Product(a, b) if b.is_constant() => {
                TimeFunction::Scale(b.eval(T::zero()), Box::new(a.antiderivative()?))
            }
            TimeFunction::Conj(a) => TimeFunction::Conj(Box::new(a.antiderivative()?)),
            _ => return None,
        };
        Some(anti)
    }

    /// `∫₀ᵗ f`, symbolic if possible, otherwise a quadrature-backed node.
    pub fn integral(&self) -> Self {
        self.antiderivative().unwrap_or_else(|| TimeFunction::Integral(Box::new(self.clone())))
    }

    /// Points where the function or its derivatives are not smooth.
    pub fn collect_breakpoints(&self, out: &mut Vec<T>) {
        match self {
            TimeFunction::Window { start, width, .. } => {
                out.push(*start);
                out.push(*start + *width);
            }
            TimeFunction::Sum(terms) => terms.iter().for_each(|f| f.collect_breakpoints(out)),
            TimeFunction::Product(a, b) => {
                a.collect_breakpoints(out);
                b.collect_breakpoints(out);
            }
            TimeFunction::Scale(_, a) | TimeFunction::Exp(a) | TimeFunction::Conj(a) | TimeFunction::Integral(a) => {
                a.collect_breakpoints(out)
            }
            _ => {}
        }
    }

    /// Largest angular frequency of any oscillatory primitive in the tree.
    pub fn max_frequency(&self) -> T {
        match self {
            TimeFunction::Sin { freq, .. } | TimeFunction::Cos { freq, .. } => freq.abs(),
            TimeFunction::Sum(terms) => terms.iter().fold(T::zero(), |m, f| m.max(f.max_frequency())),
            TimeFunction::Product(a, b) => a.max_frequency() + b.max_frequency(),
            TimeFunction::Scale(_, a) | TimeFunction::Exp(a) | TimeFunction::Conj(a) | TimeFunction::Integral(a) => {
                a.max_frequency()
            }
            _ => T::zero(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;
    use proptest::prelude::*;

    fn fd(f: &TimeFunction<f64>, t: f64) -> C<f64> {
        let h = 1e-6;
        (f.eval(t + h) - f.eval(t - h)) / cr(2.0 * h)
    }

    #[test]
    fn primitives() {
        let f = TimeFunction::sin(cr(1.0), 2.0);
        assert!((f.eval(std::f64::consts::FRAC_PI_4).re - 1.0).abs() < 1e-15);
        let r = TimeFunction::<f64>::ramp(1.0, 2.0);
        assert_eq!(r.eval(0.5), czero());
        assert_eq!(r.eval(3.5), cone());
        assert!((r.eval(2.0).re - 0.5).abs() < 1e-15);
        assert_eq!(r.deriv(0.5), czero());
        // peak slope of the quintic smooth step is 15/8 per unit width
        assert!((r.deriv(2.0).re - 15.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn symbolic_and_tree_derivatives_agree() {
        let f = TimeFunction::cos(cr(0.1), 4.0)
            .plus(TimeFunction::real_constant(0.2))
            .times(TimeFunction::sin(cplx(1.0, 0.5), 2.0))
            .plus(TimeFunction::ramp(0.3, 0.4).scaled(cr(2.0)))
            .exp();
        let d = f.derivative();
        for k in 0..40 {
            let t = 0.05 * k as f64;
            assert!((d.eval(t) - f.deriv(t)).norm() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn antiderivatives() {
        let f = TimeFunction::cos(cr(0.4), 4.0).plus(TimeFunction::Poly(vec![cr(1.0), cr(-2.0), cr(0.5)]));
        let a = f.antiderivative().unwrap();
        assert_eq!(a.eval(0.0), czero());
        for k in 1..20 {
            let t = 0.3 * k as f64;
            assert!((a.deriv(t) - f.eval(t)).norm() < 1e-12);
        }
        let w = TimeFunction::<f64>::ramp(0.5, 1.0).derivative();
        let back = w.antiderivative().unwrap();
        for t in [0.2, 0.7, 1.2, 3.0] {
            assert!((back.eval(t) - TimeFunction::<f64>::ramp(0.5, 1.0).eval(t)).norm() < 1e-14);
        }
        // no closed form: falls back to quadrature
        let e = TimeFunction::sin(cr(1.0), 1.0).exp();
        let i = e.integral();
        assert!(matches!(i, TimeFunction::Integral(_)));
        assert!((i.deriv(0.7) - e.eval(0.7)).norm() < 1e-15);
        // ∫₀^{2π} e^{sin s} ds = 2π I₀(1)
        let want = std::f64::consts::TAU * 1.266_065_877_752_008_4;
        assert!((i.eval(std::f64::consts::TAU).re - want).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn tree_derivative_matches_finite_difference(
            a in -2.0..2.0f64, w in 0.1..3.0f64, c0 in -1.0..1.0f64, c1 in -1.0..1.0f64,
            t in 0.1..5.0f64, shape in 0usize..4,
        ) {
            let base = TimeFunction::sin(cr(a), w).plus(TimeFunction::Poly(vec![cr(c0), cr(c1)]));
            let f = match shape {
                0 => base,
                1 => base.times(TimeFunction::cos(cplx(c1, a), 0.5 * w)),
                2 => base.scaled(cplx(0.3, -0.2)).exp(),
                _ => base.conj().times(TimeFunction::real_constant(c0)),
            };
            let exact = f.deriv(t);
            let num = fd(&f, t);
            prop_assert!((exact - num).norm() <= 1e-6 * exact.norm().max(1.0));
        }
    }
}
