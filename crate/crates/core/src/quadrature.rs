//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.
//!
//! Oscillatory integrands are handled by pre-splitting the range into panels
//! no wider than `max_panel` (callers pass a fraction of the shortest period)
//! before adaptive bisection starts, so that no resonance hides between nodes.

use crate::error::{ModelError, Result};
use crate::scalar::{cabs, cr, czero, real, Real, C};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions<T: Real> {
    pub abs_tol: T,
    pub rel_tol: T,
    /// Upper bound on panel width before adaptivity; `None` disables.
    pub max_panel: Option<T>,
    pub max_intervals: usize,
}

impl<T: Real> Default for QuadratureOptions<T> {
    fn default() -> Self {
        Self { abs_tol: real(1e-10), rel_tol: real(1e-12), max_panel: None, max_intervals: 20_000 }
    }
}

impl<T: Real> QuadratureOptions<T> {
    pub fn with_abs_tol(mut self, tol: T) -> Self {
        self.abs_tol = tol;
        self
    }

    /// Resolve oscillations of angular frequency `omega` with at least
    /// `points` Kronrod nodes per period.
    pub fn resolving(mut self, omega: T, points: usize) -> Self {
        if omega > T::zero() {
            let period = T::two_pi() / omega;
            let width = period * real::<T>(15.0) / crate::scalar::count::<T>(points.max(1));
            self.max_panel = Some(self.max_panel.map_or(width, |w| w.min(width)));
        }
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult<T: Real> {
    pub value: C<T>,
    pub error: T,
    pub evaluations: usize,
}

struct Panel<T: Real> {
    a: T,
    b: T,
    value: C<T>,
    error: T,
}

fn gk15<T: Real, F: Fn(T) -> C<T>>(f: &F, a: T, b: T) -> Panel<T> {
    let half = (b - a) * real::<T>(0.5);
    let center = (a + b) * real::<T>(0.5);
    let fc = f(center);
    let mut kron = fc * cr(real::<T>(WGK[7]));
    let mut gauss = fc * cr(real::<T>(WG[3]));
    for j in 0..7 {
        let dx = half * real::<T>(XGK[j]);
        let s = f(center - dx) + f(center + dx);
        kron += s * cr(real::<T>(WGK[j]));
        if j % 2 == 1 {
            gauss += s * cr(real::<T>(WG[j / 2]));
        }
    }
    let value = kron * cr(half);
    let error = cabs((kron - gauss) * cr(half));
    Panel { a, b, value, error }
}

/// One non-adaptive 15-point Kronrod rule on `[a, b]`: `(value, error estimate)`.
pub fn gauss_kronrod_15<T: Real, F: Fn(T) -> C<T>>(f: &F, a: T, b: T) -> (C<T>, T) {
    let p = gk15(f, a, b);
    (p.value, p.error)
}

/// `∫_a^b f`, with `breaks` marking interior points where `f` is not smooth.
pub fn integrate_complex<T: Real, F: Fn(T) -> C<T>>(
    f: &F,
    a: T,
    b: T,
    breaks: &[T],
    opts: &QuadratureOptions<T>,
) -> Result<QuadratureResult<T>> {
    if a == b {
        return Ok(QuadratureResult { value: czero(), error: T::zero(), evaluations: 0 });
    }
    if b < a {
        let r = integrate_complex(f, b, a, breaks, opts)?;
        return Ok(QuadratureResult { value: -r.value, ..r });
    }
    let mut nodes: Vec<T> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|x| *x > a && *x < b))
        .chain(std::iter::once(b))
        .collect();
    nodes.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    nodes.dedup();

    let mut panels = Vec::new();
    for w in nodes.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pieces = match opts.max_panel {
            Some(width) if width > T::zero() => {
                let ratio = ((hi - lo) / width).ceil();
                crate::scalar::to_f64(ratio).max(1.0) as usize
            }
            _ => 1,
        };
        if pieces > opts.max_intervals {
            return Err(ModelError::Quadrature(format!(
                "oscillation resolution needs {pieces} panels, limit is {}",
                opts.max_intervals
            )));
        }
        let step = (hi - lo) / crate::scalar::count::<T>(pieces);
        for k in 0..pieces {
            let x0 = lo + step * crate::scalar::count::<T>(k);
            let x1 = if k + 1 == pieces { hi } else { x0 + step };
            panels.push(gk15(f, x0, x1));
        }
    }
    let mut evaluations = 15 * panels.len();

    loop {
        let total: C<T> = panels.iter().fold(czero(), |acc, p| acc + p.value);
        let err: T = panels.iter().fold(T::zero(), |acc, p| acc + p.error);
        let target = opts.abs_tol.max(opts.rel_tol * cabs(total));
        if err <= target {
            return Ok(QuadratureResult { value: total, error: err, evaluations });
        }
        if panels.len() >= opts.max_intervals {
            return Err(ModelError::Quadrature(format!(
                "error estimate {:.3e} above tolerance {:.3e} after {} panels",
                crate::scalar::to_f64(err),
                crate::scalar::to_f64(target),
                panels.len()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = (p.a + p.b) * real::<T>(0.5);
        if mid <= p.a || mid >= p.b {
            return Err(ModelError::Quadrature("panel width reached machine precision".into()));
        }
        panels.push(gk15(f, p.a, mid));
        panels.push(gk15(f, mid, p.b));
        evaluations += 30;
    }
}

/// Real-valued convenience wrapper.
pub fn integrate_real<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    breaks: &[T],
    opts: &QuadratureOptions<T>,
) -> Result<T> {
    integrate_complex(&|x| cr(f(x)), a, b, breaks, opts).map(|r| r.value.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{cexp, cplx};

    #[test]
    fn polynomials_are_exact() {
        let r = integrate_real(&|x: f64| x.powi(9) - 3.0 * x * x, 0.0, 2.0, &[], &Default::default()).unwrap();
        assert!((r - (1024.0 / 10.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_phase_integral() {
        // ∫₀^T e^{iωt} dt = (e^{iωT} − 1)/(iω)
        let (w, t) = (37.0_f64, 10.0);
        let opts = QuadratureOptions::default().resolving(w, 40);
        let r = integrate_complex(&|x: f64| cexp(cplx(0.0, w * x)), 0.0, t, &[], &opts).unwrap();
        let want = (cexp(cplx(0.0, w * t)) - cr(1.0)) / cplx(0.0, w);
        assert!((r.value - want).norm() < 1e-12);
    }

    #[test]
    fn kinks_and_reversed_limits() {
        let f = |x: f64| (x - 0.3).abs();
        let r = integrate_real(&f, 0.0, 1.0, &[0.3], &Default::default()).unwrap();
        assert!((r - (0.045 + 0.245)).abs() < 1e-14);
        let back = integrate_real(&f, 1.0, 0.0, &[0.3], &Default::default()).unwrap();
        assert!((r + back).abs() < 1e-15);
    }

    #[test]
    fn reports_failure_instead_of_looping() {
        let opts = QuadratureOptions { max_intervals: 4, ..Default::default() };
        let r = integrate_real(&|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &[], &opts);
        assert!(matches!(r, Err(ModelError::Quadrature(_))));
    }

    #[test]
    fn single_precision() {
        let r = integrate_real(&|x: f32| x.cos(), 0.0, 1.0, &[], &QuadratureOptions::default().with_abs_tol(1e-6))
            .unwrap();
        assert!((r - 1f32.sin()).abs() < 1e-6);
    }
}
