//! Two-scale filters of the Gaussian basis: the periodized ratio filter,
//! its orthogonalized and dual variants, the exact orthogonal filter and the
//! scaling function it generates, and projection onto the next coarser scale.
//!
//! All filters are 1-periodic and even in `p`.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::gmra_core::Band;
use crate::special_fn::theta3_minus_one;
use crate::{GmraError, Real, Result};

/// One filter value on the frequency grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSample<T> {
    pub p: T,
    pub value: T,
}

/// Samples `f` at `n` equispaced points of `[−1/2, 1/2]`, endpoints included.
pub fn sample_filter<T: Real, F: Fn(T) -> Result<T>>(n: usize, f: F) -> Result<Vec<FilterSample<T>>> {
    if n < 2 {
        return Err(GmraError::Parameter(format!("{n} filter samples, need at least 2")));
    }
    let half = T::lit(0.5);
    (0..n)
        .map(|i| {
            let p = -half + T::lit(i as f64 / (n - 1) as f64);
            Ok(FilterSample { p, value: f(p)? })
        })
        .collect()
}

/// `Σ_n e^{−c[(p − nh)² − (p − r)²]}` with the exponent expanded as
/// `(r − nh)(2p − nh − r)`, so sums sharing the reference `r` divide without
/// the rounding of large squared exponents.
fn comb<T: Real>(p: T, c: T, h: T, r: T) -> T {
    let term = |n: i64| {
        let a = h * T::lit(n as f64);
        (-(c * (r - a) * (p + p - a - r))).exp()
    };
    let n0 = (p / h).round().to_i64().unwrap_or(0);
    let mut sum = term(n0);
    for dir in [-1i64, 1] {
        let mut n = n0 + dir;
        loop {
            let t = term(n);
            sum = sum + t;
            if t <= T::epsilon() * sum / T::lit(1024.0) {
                break;
            }
            n += dir;
        }
    }
    sum
}

fn nearest<T: Real>(p: T, h: T) -> T {
    (p / h).round() * h
}

/// `Σ_n e^{−(3π²/α)(p−n)²} = √(α/(3π)) θ₃(πp, e^{−α/3})`.
pub fn filter_m0<T: Real>(p: T, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    let c = T::lit(3.0) * T::PI() * T::PI() / alpha;
    let r = nearest(p, T::one());
    let d = p - r;
    Ok((-(c * d * d)).exp() * comb(p, c, T::one(), r))
}

/// `θ₃(πp, e^{−α/2}) / θ₃(2πp, e^{−α/2})`, a ratio of Gaussian combs with
/// spacings 1 and 1/2.
fn orth_ratio<T: Real>(p: T, alpha: T) -> T {
    let c = T::lit(2.0) * T::PI() * T::PI() / alpha;
    let half = T::lit(0.5);
    let r = nearest(p, T::one());
    let r2 = nearest(p, half);
    let (d, d2) = (p - r, p - r2);
    let four = T::lit(4.0);
    (four * c * d2 * d2 - c * d * d).exp() * comb(p, c, T::one(), r) / comb(p, four * c, half, r2)
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha.is_finite() {
        Ok(())
    } else {
        Err(GmraError::Domain { what: "filter", value: alpha.as_f64() })
    }
}

/// Filter of the orthogonalized basis, `m₀(p) (θ₃(πp, e^{−α/2}) / θ₃(2πp, e^{−α/2}))^{1/2}`.
pub fn filter_ma<T: Real>(p: T, alpha: T) -> Result<T> {
    Ok(filter_m0(p, alpha)? * orth_ratio(p, alpha).sqrt())
}

/// Dual of `m₀`: `m₀(p) θ₃(πp, e^{−α/2}) / θ₃(2πp, e^{−α/2})`.
pub fn filter_m00<T: Real>(p: T, alpha: T) -> Result<T> {
    Ok(filter_m0(p, alpha)? * orth_ratio(p, alpha))
}

/// Cosine weight of the exact filter,
/// `η = 1 − θ₃(0, e^{−α/8}) / (2 θ₃(0, e^{−α/2}))`.
///
/// Evaluated on the reciprocal side, `η = (b − a)/(1 + b)` with
/// `a = θ₃(0, e^{−8π²/α}) − 1`, `b = θ₃(0, e^{−2π²/α}) − 1`, so the tiny
/// difference is not lost to cancellation.
pub fn cosine_weight<T: Real>(alpha: T) -> Result<T> {
    if !(alpha > T::zero()) {
        return Err(GmraError::Domain { what: "cosine_weight", value: alpha.as_f64() });
    }
    let pi2 = T::PI() * T::PI();
    let a = theta3_minus_one((-T::lit(8.0) * pi2 / alpha).exp())?;
    let b = theta3_minus_one((-T::lit(2.0) * pi2 / alpha).exp())?;
    Ok((b - a) / (T::one() + b))
}

/// Exact quadrature mirror filter
/// `(θ₃(πp, e^{−α/8}) / (2θ₃(2πp, e^{−α/2})) + η cos 2πp)^{1/2}`.
pub fn filter_m0_exact<T: Real>(p: T, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    let pi = T::PI();
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    // θ₃(πp, e^{−α/8}) / (2θ₃(2πp, e^{−α/2})) = Σ e^{−c(p−n)²} / Σ e^{−c(p−n/2)²}
    let c = T::lit(8.0) * pi * pi / alpha;
    let r = nearest(p, T::one());
    let r2 = nearest(p, half);
    let g = (-(c * (r2 - r) * (p + p - r - r2))).exp() * comb(p, c, T::one(), r) / comb(p, c, half, r2);
    let rad = g + cosine_weight(alpha)? * (two * pi * p).cos();
    if rad < -T::lit(1e-15) {
        return Err(GmraError::NumericalConsistency(rad.as_f64()));
    }
    Ok(rad.max(T::zero()).sqrt())
}

/// `(m₀(p) − m₀(1/2)) / (m₀(0) − m₀(1/2))`, exactly 1 at 0 and 0 at 1/2.
pub fn filter_m_exact<T: Real>(p: T, alpha: T) -> Result<T> {
    let half = filter_m0(T::lit(0.5), alpha)?;
    let zero = filter_m0(T::zero(), alpha)?;
    Ok((filter_m0(p, alpha)? - half) / (zero - half))
}

/// Number of factors for [`phi_exact_hat`]: the omitted tail
/// `∏_{j>J} M(p/2^j)` behaves like `e^{−(π²/α)(p/2^J)²}`, so stop once that
/// exponent drops below `1e-17`.
pub fn exact_scaling_depth(p: f64, alpha: f64) -> u32 {
    let pi2 = std::f64::consts::PI.powi(2);
    let mut j = 1;
    while j < 200 && pi2 / alpha * (p / 2f64.powi(j as i32)).powi(2) >= 1e-17 {
        j += 1;
    }
    j
}

/// Truncated infinite product `∏_{j=1}^{J} M_exact(p/2^j)`.
pub fn phi_exact_hat<T: Real>(p: T, alpha: T, depth: u32) -> Result<T> {
    if depth == 0 {
        return Err(GmraError::Parameter("product depth must be at least 1".into()));
    }
    let mut q = p;
    let mut prod = T::one();
    let half = T::lit(0.5);
    for _ in 0..depth {
        q = q * half;
        prod = prod * filter_m_exact(q, alpha)?;
        if prod == T::zero() {
            break;
        }
    }
    Ok(prod)
}

/// Coefficients of a scale-0 expansion on the next coarser scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseProjection {
    /// Coarse shifts `n0, n0+1, …`.
    pub coeffs: Band<f64>,
    /// Set when the dual filter's dynamic range costs significant digits.
    pub warning: Option<String>,
}

/// Projects `Σ f_k φ(x − k)` onto `Σ g_n 2^{−1/2} φ(x/2 − n)` through the
/// dual filter, with the frequency integral discretized on `n_points` nodes.
///
/// The result covers `n_points` consecutive coarse shifts centred on the
/// input; the discrete transform wraps modulo `n_points`, so it must exceed
/// the width of the coarse coefficient support.
pub fn project_coarser(f: &Band<f64>, alpha: f64, n_points: usize) -> Result<CoarseProjection> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(GmraError::Parameter(format!("alpha = {alpha} outside (0, 0.5]")));
    }
    if n_points < 8 || n_points < f.w.len() {
        return Err(GmraError::Parameter(format!(
            "{n_points} frequency nodes for {} input coefficients",
            f.w.len()
        )));
    }
    let warning = (alpha < 0.3).then(|| {
        format!("alpha = {alpha}: the dual filter's dynamic range loses significant digits")
    });
    let n = n_points as i64;
    let center = if f.w.is_empty() { 0 } else { (f.k0 + f.k_end() - 1).div_euclid(4) };
    let start = center - n / 2;
    let tau = 2.0 * std::f64::consts::PI;
    let symbol = |q: f64| -> Complex64 {
        f.w.iter()
            .enumerate()
            .map(|(i, &w)| Complex64::from_polar(w, -tau * (f.k0 + i as i64) as f64 * q))
            .sum()
    };
    let mut buf = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let p = -0.5 + i as f64 / n_points as f64;
        let s = symbol(p / 2.0) * filter_m00(p / 2.0, alpha)?
            + symbol(p / 2.0 + 0.5) * filter_m00(p / 2.0 + 0.5, alpha)?;
        // shift the output window to start at `start`
        let phase = tau * ((start * i as i64).rem_euclid(n)) as f64 / n_points as f64;
        buf.push(s * Complex64::from_polar(1.0, phase));
    }
    FftPlanner::new().plan_fft_inverse(n_points).process(&mut buf);
    let scale = 1.0 / (std::f64::consts::SQRT_2 * n_points as f64);
    let g = buf
        .iter()
        .enumerate()
        .map(|(m, b)| {
            // e^{2πi n p_0} with p_0 = −1/2
            let sign = if (start + m as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            sign * b.re * scale
        })
        .collect();
    Ok(CoarseProjection { coeffs: Band { k0: start, w: g }, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmra_core::{two_scale_coeffs, GmraParams};
    use crate::special_fn::theta2;
    use proptest::prelude::*;

    fn grid(n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| -0.5 + i as f64 / (n - 1) as f64)
    }

    #[test]
    fn m0_near_one_at_origin() {
        for alpha in [0.2, 0.25, 0.4] {
            let m = filter_m0(0.0, alpha).unwrap();
            assert!(m - 1.0 <= 2.002 * (-3.0 * std::f64::consts::PI.powi(2) / alpha).exp() + 1e-16);
        }
    }

    #[test]
    fn m0_close_to_gaussian_ratio() {
        let pi2 = std::f64::consts::PI.powi(2);
        for alpha in [0.2, 0.3, 0.5] {
            let bound = theta2((-3.0 * pi2 / alpha).exp()).unwrap();
            for p in grid(501) {
                let d = ((-3.0 * pi2 / alpha * p * p).exp() - filter_m0(p, alpha).unwrap()).abs();
                assert!(d <= bound * (1.0 + 1e-12) + 1e-16, "{alpha} {p}: {d:e} > {bound:e}");
            }
        }
    }

    #[test]
    fn filters_even_and_periodic() {
        let alpha = 0.25;
        let fs: [fn(f64, f64) -> Result<f64>; 5] = [filter_m0, filter_ma, filter_m00, filter_m0_exact, filter_m_exact];
        for f in fs {
            // dyadic nodes so that p + 1 is exact
            for p in grid(257) {
                let v = f(p, alpha).unwrap();
                let tol = 1e-14 * v.abs().max(1.0);
                assert!((v - f(-p, alpha).unwrap()).abs() <= tol);
                assert!((v - f(p + 1.0, alpha).unwrap()).abs() <= tol, "{p}");
            }
        }
    }

    #[test]
    fn ma_at_origin_equals_m0() {
        for alpha in [0.2, 0.4] {
            assert_eq!(filter_ma(0.0, alpha).unwrap(), filter_m0(0.0, alpha).unwrap());
        }
    }

    #[test]
    fn ma_approximate_qmf_alpha_0_2() {
        // exact bound is 0.11e-20; working precision caps it at 1e-14
        for p in grid(1000) {
            let s = filter_ma(p, 0.2).unwrap().powi(2) + filter_ma(p + 0.5, 0.2).unwrap().powi(2);
            assert!((s - 1.0).abs() <= 1e-14, "{p}: {:e}", s - 1.0);
        }
    }

    #[test]
    fn m00_dual_to_m0() {
        for p in grid(1000) {
            let s = filter_m0(p, 0.2).unwrap() * filter_m00(p, 0.2).unwrap()
                + filter_m0(p + 0.5, 0.2).unwrap() * filter_m00(p + 0.5, 0.2).unwrap();
            assert!((s - 1.0).abs() <= 1e-13, "{p}: {:e}", s - 1.0);
        }
    }

    #[test]
    fn m00_dynamic_range_shrinks_with_alpha() {
        let range = |alpha: f64| {
            let v: Vec<f64> = grid(1001).map(|p| filter_m00(p, alpha).unwrap()).collect();
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            max / min
        };
        assert!(range(0.2) > range(0.4));
        let at0: f64 = filter_m0(0.0, 0.3).unwrap();
        let m: f64 = filter_m00(0.0, 0.3).unwrap();
        assert!((m - at0).abs() <= 1e-16);
    }

    #[test]
    fn m0_exact_is_qmf() {
        for alpha in [0.2, 0.25, 0.4, 0.5] {
            for p in grid(1000) {
                let s = filter_m0_exact(p, alpha).unwrap().powi(2) + filter_m0_exact(p + 0.5, alpha).unwrap().powi(2);
                assert!((s - 1.0).abs() <= 1e-14, "{alpha} {p}: {:e}", s - 1.0);
            }
            assert!((filter_m0_exact(0.0, alpha).unwrap() - 1.0).abs() <= 1e-14);
            assert!(filter_m0_exact(0.5, alpha).unwrap().abs() <= 1e-14);
        }
    }

    #[test]
    fn ma_matches_m0_exact_alpha_0_2() {
        // exact bound is 1.05e-21
        for p in grid(1000) {
            let d = (filter_ma(p, 0.2).unwrap() - filter_m0_exact(p, 0.2).unwrap()).abs();
            assert!(d <= 1e-14, "{p}: {d:e}");
        }
    }

    #[test]
    fn m0_exact_monotone_on_half_period() {
        for alpha in [0.2, 0.3, 0.5] {
            let v: Vec<f64> = (0..1000).map(|i| filter_m0_exact(0.5 * i as f64 / 999.0, alpha).unwrap()).collect();
            for w in v.windows(2) {
                assert!(w[1] - w[0] <= 1e-14);
            }
        }
    }

    #[test]
    fn cosine_weight_in_unit_interval() {
        // below α ≈ 0.03 the weight underflows to zero in double precision
        for i in 0..200 {
            let alpha = 0.05 + (3.0 * std::f64::consts::PI - 0.06) * i as f64 / 199.0;
            let eta = cosine_weight(alpha).unwrap();
            assert!(eta > 0.0 && eta < 1.0, "{alpha}: {eta}");
        }
    }

    #[test]
    fn m_exact_endpoints() {
        for alpha in [0.2, 0.25, 0.4] {
            assert_eq!(filter_m_exact(0.0, alpha).unwrap(), 1.0);
            assert_eq!(filter_m_exact(0.5, alpha).unwrap(), 0.0);
        }
    }

    #[test]
    fn exact_scaling_function_transform() {
        let alpha = 0.25;
        let pi2 = std::f64::consts::PI.powi(2);
        assert_eq!(phi_exact_hat(0.0, alpha, 10).unwrap(), 1.0);
        for n in 1..=5 {
            let p = n as f64;
            assert!(phi_exact_hat(p, alpha, exact_scaling_depth(p, alpha)).unwrap().abs() <= 1e-12);
        }
        let mut worst: f64 = 0.0;
        for i in 0..=5000 {
            let p = 50.0 * i as f64 / 5000.0;
            let v = phi_exact_hat(p, alpha, exact_scaling_depth(p, alpha)).unwrap();
            worst = worst.max((v - (-pi2 / alpha * p * p).exp()).abs());
        }
        assert!(worst <= 1e-12, "{worst:e}");
        assert!(phi_exact_hat(1.0, alpha, 0).is_err());
    }

    #[test]
    fn coarse_projection_of_zero() {
        let z = Band { k0: -5, w: vec![0.0; 11] };
        let g = project_coarser(&z, 0.4, 64).unwrap();
        assert!(g.coeffs.w.iter().all(|&v| v == 0.0));
        assert!(g.warning.is_none());
        assert!(project_coarser(&z, 0.25, 64).unwrap().warning.is_some());
    }

    fn eval_band(b: &Band<f64>, alpha: f64, scale: i32, x: f64) -> f64 {
        let norm = (alpha / std::f64::consts::PI).sqrt();
        let d = 2f64.powi(scale);
        b.w.iter()
            .enumerate()
            .map(|(i, &w)| {
                let u = d * x - (b.k0 + i as i64) as f64;
                w * d.sqrt() * norm * (-alpha * u * u).exp()
            })
            .sum()
    }

    #[test]
    fn coarse_spike_round_trip() {
        // refine a coarse spike with the two-scale relation, then project back
        let alpha = 0.4;
        let params = GmraParams::new(alpha, -1, 0).unwrap();
        let h = two_scale_coeffs(&params);
        let off = (h.len() / 2) as i64;
        let fine = Band { k0: -off, w: h.iter().map(|v| v / std::f64::consts::SQRT_2).collect() };
        let g = project_coarser(&fine, alpha, 256).unwrap();
        let spike = Band { k0: 0, w: vec![1.0] };
        for i in 0..401 {
            let x = -20.0 + 40.0 * i as f64 / 400.0;
            let a = eval_band(&g.coeffs, alpha, -1, x);
            let b = eval_band(&spike, alpha, -1, x);
            assert!((a - b).abs() <= 1e-6, "{x}: {a} {b}");
        }
    }

    #[test]
    fn coarse_projection_translation_covariant() {
        // the dual filter is poorly localized, so stay ~100 shifts off the edges
        let alpha = 0.4;
        let f = Band { k0: -1000, w: vec![1.0; 2001] };
        let g = project_coarser(&f, alpha, 4096).unwrap();
        let g0 = g.coeffs.get(0);
        for n in -300..=300 {
            assert!((g.coeffs.get(n) - g0).abs() <= 1e-8, "{n}: {} {g0}", g.coeffs.get(n));
        }
        // Σ_k φ(x − k) ≈ 1 on both scales
        assert!((g0 - std::f64::consts::SQRT_2).abs() <= 1e-10);
    }

    proptest! {
        #[test]
        fn m0_exact_square_sum(p in -0.5f64..0.5, alpha in 0.1f64..0.5) {
            let s = filter_m0_exact(p, alpha).unwrap().powi(2) + filter_m0_exact(p + 0.5, alpha).unwrap().powi(2);
            prop_assert!((s - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn m_exact_bounded(p in -0.5f64..0.5, alpha in 0.1f64..0.5) {
            let v = filter_m_exact(p, alpha).unwrap();
            prop_assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
    }
}
