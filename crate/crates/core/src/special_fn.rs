//! Scalar special functions and Gauss–Legendre rules.
//!
//! Everything here is a pure function of its arguments.

use crate::{GmraError, Real, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_402_43;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// Number of nodes `M`.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) / T::lit(2.0);
        let mid = (b + a) / T::lit(2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (half * x + mid, half * w))
    }
}

fn check_q<T: Real>(what: &'static str, q: T) -> Result<()> {
    if q >= T::zero() && q < T::one() {
        Ok(())
    } else {
        Err(GmraError::Domain { what, value: q.as_f64() })
    }
}

/// Jacobi theta function `θ₃(z, q) = Σ_n q^{n²} cos(2nz)` for real `z`.
///
/// For `q > e^{-π}` the sum is taken on the reciprocal side,
/// `θ₃(z, e^{-γ}) = √(π/γ) Σ_n e^{-(z - nπ)²/γ}`.
pub fn theta3<T: Real>(z: T, q: T) -> Result<T> {
    check_q("theta3", q)?;
    if q == T::zero() {
        return Ok(T::one());
    }
    let eps = T::epsilon();
    let gamma = -q.ln();
    let two = T::lit(2.0);
    if gamma >= T::PI() {
        let mut sum = T::one();
        let mut scale = T::one();
        let mut n = T::one();
        loop {
            let t = (n * n * q.ln()).exp();
            // keep terms down to well below half an ulp so the final rounding is right
            if t < eps * scale / T::lit(1024.0) {
                break;
            }
            sum = sum + two * t * (two * n * z).cos();
            scale = scale + two * t;
            n = n + T::one();
        }
        Ok(sum)
    } else {
        let pi = T::PI();
        let z0 = z - pi * (z / pi).round();
        let term = |n: T| {
            let d = z0 - n * pi;
            (-(d * d) / gamma).exp()
        };
        let mut sum = term(T::zero());
        let mut n = T::one();
        loop {
            let t = term(n) + term(-n);
            sum = sum + t;
            if t < eps * sum / T::lit(1024.0) {
                break;
            }
            n = n + T::one();
        }
        Ok((pi / gamma).sqrt() * sum)
    }
}

/// `θ₂(0, q) = 2 Σ_{n≥0} q^{(n+1/2)²}`.
pub fn theta2<T: Real>(q: T) -> Result<T> {
    check_q("theta2", q)?;
    if q == T::zero() {
        return Ok(T::zero());
    }
    let eps = T::epsilon();
    let gamma = -q.ln();
    let half = T::lit(0.5);
    if gamma >= T::one() {
        let mut sum = T::zero();
        let mut n = T::zero();
        loop {
            let e = n + half;
            let t = (-(e * e) * gamma).exp();
            sum = sum + t;
            if t < eps * sum {
                break;
            }
            n = n + T::one();
        }
        Ok(T::lit(2.0) * sum)
    } else {
        // Poisson side: √(π/γ) Σ (−1)^n e^{−π²n²/γ}
        let pi2 = T::PI() * T::PI();
        let mut sum = T::one();
        let mut n = T::one();
        let mut sign = -T::one();
        loop {
            let t = (-(pi2 * n * n) / gamma).exp();
            sum = sum + sign * T::lit(2.0) * t;
            if t < eps {
                break;
            }
            n = n + T::one();
            sign = -sign;
        }
        Ok((T::PI() / gamma).sqrt() * sum)
    }
}

/// `θ₃(0, q) − 1 = 2 Σ_{n≥1} q^{n²}` without the cancellation of forming
/// `θ₃` first; for `q ≤ e^{−π}`.
pub fn theta3_minus_one<T: Real>(q: T) -> Result<T> {
    check_q("theta3_minus_one", q)?;
    if q > (-T::PI()).exp() {
        return Ok(theta3(T::zero(), q)? - T::one());
    }
    let mut sum = T::zero();
    let mut n = T::one();
    loop {
        let t = (n * n * q.ln()).exp();
        sum = sum + t;
        if t <= T::epsilon() * sum || t == T::zero() {
            break;
        }
        n = n + T::one();
    }
    Ok(T::lit(2.0) * sum)
}

/// Modified Bessel function of the second kind `K₀(x)` for `x > 0`.
///
/// Below `x = 2` the ascending series is used. Above it, the trapezoidal rule
/// on `∫₀^∞ e^{−x cosh t} dt`, which converges geometrically in the step for
/// this entire integrand.
pub fn bessel_k0<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(GmraError::Domain { what: "bessel_k0", value: x.as_f64() });
    }
    let eps = T::epsilon();
    if x < T::lit(2.0) {
        let y = x * x / T::lit(4.0);
        let mut term = T::one();
        let mut i0 = T::one();
        let mut harmonic = T::zero();
        let mut tail = T::zero();
        let mut k = T::one();
        loop {
            term = term * y / (k * k);
            harmonic = harmonic + T::one() / k;
            i0 = i0 + term;
            tail = tail + term * harmonic;
            if term < eps * i0 {
                break;
            }
            k = k + T::one();
        }
        Ok(-((x / T::lit(2.0)).ln() + T::lit(EULER_GAMMA)) * i0 + tail)
    } else {
        // step small against the width 1/√x of the peak at t = 0
        let h = T::lit(0.5) / x.max(T::lit(4.0)).sqrt();
        let mut sum = T::lit(0.5);
        let mut n = T::one();
        loop {
            let t = (-x * ((n * h).cosh() - T::one())).exp();
            sum = sum + t;
            if t < eps * sum {
                break;
            }
            n = n + T::one();
        }
        Ok((-x).exp() * h * sum)
    }
}

/// Gauss–Legendre rule with `m` nodes, `1 ≤ m ≤ 64`.
pub fn gauss_legendre<T: Real>(m: usize) -> Result<QuadratureRule<T>> {
    if !(1..=64).contains(&m) {
        return Err(GmraError::Parameter(format!("Gauss-Legendre order {m} not in 1..=64")));
    }
    let mut nodes = vec![0.0f64; m];
    let mut weights = vec![0.0f64; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..m {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if m == 1 { (x, 1.0) } else { (p1, p0) };
            dp = mf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if 2 * i + 1 == m {
            x = 0.0;
            // derivative at 0 from the recurrence at the exact midpoint
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 1..m {
                let kf = k as f64;
                let p2 = -kf * p0 / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = mf * pm1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    Ok(QuadratureRule {
        nodes: nodes.into_iter().map(T::lit).collect(),
        weights: weights.into_iter().map(T::lit).collect(),
    })
}

/// Basis accuracy `ε(α) = θ₃(0, e^{−3π²/(4α)}) − 1`, for `0 < α ≤ 3π`.
///
/// Evaluated literally, so at `α = 0.2` the result is the rounding step of
/// `1 + ε` in the working precision.
pub fn epsilon_of_alpha<T: Real>(alpha: T) -> Result<T> {
    let three_pi = T::lit(3.0) * T::PI();
    if !(alpha > T::zero()) || alpha > three_pi {
        return Err(GmraError::Parameter(format!("alpha = {alpha} outside (0, 3π]")));
    }
    let q = (-(T::lit(3.0) * T::PI() * T::PI()) / (T::lit(4.0) * alpha)).exp();
    Ok(theta3(T::zero(), q)? - T::one())
}

/// Error level `θ₃(0, e^{−(π²/α)(1−β/α)}) − 1` of the single-scale
/// approximation of `e^{−β(x−s)²}`, `0 < β < α`.
pub fn single_scale_error<T: Real>(alpha: T, beta: T) -> Result<T> {
    if !(beta > T::zero() && beta < alpha) {
        return Err(GmraError::Parameter(format!("need 0 < beta < alpha, got beta = {beta}")));
    }
    let gamma = T::PI() * T::PI() / alpha * (T::one() - beta / alpha);
    Ok(theta3(T::zero(), (-gamma).exp())? - T::one())
}

/// Error function.
pub fn erf<T: Real>(x: T) -> T {
    if x.abs() < T::lit(2.5) {
        erf_series(x)
    } else if x > T::zero() {
        T::one() - erfc_cf(x)
    } else {
        erfc_cf(-x) - T::one()
    }
}

/// Complementary error function `1 − erf(x)`, accurate in the right tail.
pub fn erfc<T: Real>(x: T) -> T {
    if x >= T::lit(2.5) {
        erfc_cf(x)
    } else if x <= -T::lit(2.5) {
        T::lit(2.0) - erfc_cf(-x)
    } else {
        T::one() - erf_series(x)
    }
}

// erf(x) = (2/√π) e^{−x²} Σ 2ⁿ x^{2n+1} / (2n+1)!!, all terms positive
fn erf_series<T: Real>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = T::one();
    loop {
        term = term * T::lit(2.0) * x2 / (T::lit(2.0) * n + T::one());
        sum = sum + term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
        n = n + T::one();
    }
    T::lit(2.0) / T::PI().sqrt() * (-x2).exp() * sum
}

// continued fraction x + (1/2)/(x + 1/(x + (3/2)/(x + ...))), modified Lentz
fn erfc_cf<T: Real>(x: T) -> T {
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    let mut n = T::one();
    for _ in 0..500 {
        let a = n / T::lit(2.0);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        d = T::one() / d;
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() < T::epsilon() {
            break;
        }
        n = n + T::one();
    }
    (-x * x).exp() / (T::PI().sqrt() * f)
}
