//! Adaptive Gauss–Legendre integration by explicit-stack bisection.
//!
//! An interval is accepted when the sum over its two halves matches the
//! estimate on the whole interval to an absolute tolerance; otherwise both
//! halves go back on the stack.

use crate::special_fn::{gauss_legendre, QuadratureRule};
use crate::{GmraError, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    /// Absolute acceptance tolerance for one interval.
    pub tol: f64,
    /// Gauss–Legendre nodes per interval.
    pub order: usize,
    pub max_depth: usize,
    pub max_intervals: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self { tol: 1e-14, order: 10, max_depth: 100, max_intervals: 1_000_000 }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.order < 2 || self.order > 64 || self.max_depth < 1 {
            return Err(GmraError::Parameter(format!("bad adaptive config {self:?}")));
        }
        Ok(())
    }
}

/// Bookkeeping returned alongside an adaptive integral.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    /// Number of accepted intervals (each contributes two halves).
    pub accepted: usize,
    /// Deepest bisection level reached; 0 means no subdivision.
    pub max_depth: usize,
}

/// `Σ w̃_m f(x̃_m)` of `rule` mapped onto `[a, b]`.
pub fn quadrature_sum<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    rule: &QuadratureRule<T>,
) -> Result<T> {
    if !(a < b) {
        return Err(GmraError::Parameter(format!("empty interval [{a}, {b}]")));
    }
    let mut s = T::zero();
    for (x, w) in rule.mapped(a, b) {
        let v = f(x);
        if !v.is_finite() {
            return Err(GmraError::NonFinite { x: x.as_f64() });
        }
        s = s + w * v;
    }
    Ok(s)
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn adaptive_integrate<T: Real, F: FnMut(T) -> T>(
    f: F,
    a: T,
    b: T,
    cfg: &AdaptiveConfig,
) -> Result<T> {
    adaptive_integrate_with_stats(f, a, b, cfg).map(|(v, _)| v)
}

pub fn adaptive_integrate_with_stats<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    cfg: &AdaptiveConfig,
) -> Result<(T, IntegrationStats)> {
    cfg.validate()?;
    let rule = gauss_legendre::<T>(cfg.order)?;
    let tol = T::lit(cfg.tol);
    let two = T::lit(2.0);
    let s0 = quadrature_sum(&mut f, a, b, &rule)?;
    let mut stack = vec![(a, b, s0, 0usize)];
    let mut total = T::zero();
    let mut stats = IntegrationStats::default();
    while let Some((lo, hi, s, depth)) = stack.pop() {
        let mid = (lo + hi) / two;
        let s1 = quadrature_sum(&mut f, lo, mid, &rule)?;
        let s2 = quadrature_sum(&mut f, mid, hi, &rule)?;
        if (s1 + s2 - s).abs() > tol {
            if depth + 1 > cfg.max_depth || stack.len() + 2 > cfg.max_intervals || !(lo < mid && mid < hi) {
                return Err(GmraError::NonConvergence { a: lo.as_f64(), b: hi.as_f64(), depth });
            }
            stack.push((mid, hi, s2, depth + 1));
            stack.push((lo, mid, s1, depth + 1));
            stats.max_depth = stats.max_depth.max(depth + 1);
        } else {
            total = total + s1 + s2;
            stats.accepted += 1;
        }
    }
    Ok((total, stats))
}

/// Vector-valued variant: `f(x, out)` fills `out` (length `n`) and an interval
/// is accepted when every component passes the scalar test.
pub fn adaptive_integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    n: usize,
    a: f64,
    b: f64,
    cfg: &AdaptiveConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(a < b) {
        return Err(GmraError::Parameter(format!("empty interval [{a}, {b}]")));
    }
    let rule = gauss_legendre::<f64>(cfg.order)?;
    let mut buf = vec![0.0; n];
    let mut qsum = |lo: f64, hi: f64, buf: &mut [f64]| -> Result<Vec<f64>> {
        let mut s = vec![0.0; n];
        for (x, w) in rule.mapped(lo, hi) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(x, buf);
            for (acc, &v) in s.iter_mut().zip(buf.iter()) {
                if !v.is_finite() {
                    return Err(GmraError::NonFinite { x });
                }
                *acc += w * v;
            }
        }
        Ok(s)
    };
    let s0 = qsum(a, b, &mut buf)?;
    let mut stack = vec![(a, b, s0, 0usize)];
    let mut total = vec![0.0; n];
    while let Some((lo, hi, s, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let s1 = qsum(lo, mid, &mut buf)?;
        let s2 = qsum(mid, hi, &mut buf)?;
        let worst = s1
            .iter()
            .zip(&s2)
            .zip(&s)
            .map(|((p, q), r)| (p + q - r).abs())
            .fold(0.0, f64::max);
        if worst > cfg.tol {
            if depth + 1 > cfg.max_depth || stack.len() + 2 > cfg.max_intervals || !(lo < mid && mid < hi) {
                return Err(GmraError::NonConvergence { a: lo, b: hi, depth });
            }
            stack.push((mid, hi, s2, depth + 1));
            stack.push((lo, mid, s1, depth + 1));
        } else {
            for ((t, p), q) in total.iter_mut().zip(&s1).zip(&s2) {
                *t += p + q;
            }
        }
    }
    Ok(total)
}
