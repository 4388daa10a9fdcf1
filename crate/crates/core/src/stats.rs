//! Moments, expectations and the CDF of expansion-represented densities.

use crate::gmra_core::GmraExpansion;
use crate::product::TiltedExpansion;
use crate::quadrature::{adaptive_integrate, AdaptiveConfig};
use crate::special_fn::erfc;
use crate::{GmraError, Result};

/// `∫ u^n √(α/π) e^{−α(u−k)²} du`: `μ⁽⁰⁾ = 1`, `μ⁽¹⁾ = k`,
/// `μ⁽ⁿ⁾ = k μ⁽ⁿ⁻¹⁾ + (n−1)/(2α) μ⁽ⁿ⁻²⁾`.
pub fn basis_moment(k: f64, n: u32, alpha: f64) -> f64 {
    basis_moments(k, n, alpha)[n as usize]
}

fn basis_moments(k: f64, n: u32, alpha: f64) -> Vec<f64> {
    let mut mu = Vec::with_capacity(n as usize + 1);
    mu.push(1.0);
    if n >= 1 {
        mu.push(k);
    }
    for i in 2..=n as usize {
        let v = k * mu[i - 1] + (i - 1) as f64 / (2.0 * alpha) * mu[i - 2];
        mu.push(v);
    }
    mu
}

/// Raw moments `M⁽⁰⁾ … M⁽ⁿ⁾`, accumulated scale by scale.
pub fn moments(e: &GmraExpansion<f64>, n: u32) -> Result<Vec<f64>> {
    if e.heavy_tailed && n >= 1 {
        return Err(GmraError::MomentDivergence(n));
    }
    let alpha = e.params.alpha;
    let mut out = vec![0.0; n as usize + 1];
    for (j, b) in e.bands() {
        let mut per = vec![0.0; n as usize + 1];
        for (i, &w) in b.w.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let mu = basis_moments((b.k0 + i as i64) as f64, n, alpha);
            for (p, m) in per.iter_mut().zip(&mu) {
                *p += w * m;
            }
        }
        let inv = 2f64.powi(-j);
        let mut f = inv.sqrt();
        for (o, p) in out.iter_mut().zip(&per) {
            *o += f * p;
            f *= inv;
        }
    }
    Ok(out)
}

/// Raw moment `M⁽ⁿ⁾ = ∫ tⁿ p(t) dt`.
pub fn moment(e: &GmraExpansion<f64>, n: u32) -> Result<f64> {
    moments(e, n).map(|m| m[n as usize])
}

/// Mean and variance from the first two moments, normalised by `M⁽⁰⁾`.
pub fn mean_variance(e: &GmraExpansion<f64>) -> Result<(f64, f64)> {
    let m = moments(e, 2)?;
    let mean = m[1] / m[0];
    Ok((mean, m[2] / m[0] - mean * mean))
}

/// Anything that can be integrated against: a pointwise density with a finite
/// effective support.
pub trait Density {
    fn density(&self, t: f64) -> f64;
    fn effective_support(&self) -> Option<(f64, f64)>;
}

impl Density for GmraExpansion<f64> {
    fn density(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn effective_support(&self) -> Option<(f64, f64)> {
        self.support()
    }
}

impl Density for TiltedExpansion {
    fn density(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn effective_support(&self) -> Option<(f64, f64)> {
        self.body.support()
    }
}

/// `∫ u(t) p(t) dt` over the effective support, split at the origin where
/// product densities are singular.
pub fn expectation<U: Fn(f64) -> f64, D: Density + ?Sized>(u: U, e: &D, cfg: &AdaptiveConfig) -> Result<f64> {
    let Some((lo, hi)) = e.effective_support() else {
        return Ok(0.0);
    };
    let f = |t: f64| u(t) * e.density(t);
    let mut cuts = vec![lo];
    if lo < 0.0 && hi > 0.0 {
        cuts.push(0.0);
    }
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adaptive_integrate(f, w[0], w[1], cfg)?;
    }
    Ok(total)
}

/// `Σ w 2^{−j/2} erfc(−√α(2^j t − k))/2`.
pub fn cdf(e: &GmraExpansion<f64>, t: f64) -> f64 {
    let sa = e.params.alpha.sqrt();
    // erfc(7) < 5e-23
    let far = 7.0 / sa;
    let mut total = 0.0;
    for (j, b) in e.bands() {
        let c = 2f64.powi(j) * t;
        let mut s = 0.0;
        for (i, &w) in b.w.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let d = c - (b.k0 + i as i64) as f64;
            if d > far {
                s += w;
            } else if d > -far {
                s += 0.5 * w * erfc(-sa * d);
            }
        }
        total += s * 2f64.powi(-j).sqrt();
    }
    total
}
