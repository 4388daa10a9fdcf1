//! Gaussian mixture fits of input densities.
//!
//! Two constructions are provided. The unit Laplace density is written as a
//! trapezoidal discretization of a Gaussian integral representation. Any
//! other density that is smooth and negligible outside an interval is sampled
//! on a uniform grid and converted to coefficients of the interpolating
//! combination of shifted Gaussians with one FFT round trip.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::gmra_core::{project_gaussian, GmraExpansion, GmraParams};
use crate::product::DistributionSpec;
use crate::special_fn::{erfc, theta3};
use crate::{GmraError, Result};

/// One term `c e^{−β(x−s)²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureTerm {
    pub c: f64,
    pub beta: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianMixture {
    pub terms: Vec<MixtureTerm>,
    /// How the mixture was produced.
    pub provenance: Option<String>,
}

impl GaussianMixture {
    pub fn new(terms: Vec<MixtureTerm>) -> Result<Self> {
        for t in &terms {
            if !(t.beta > 0.0 && t.beta.is_finite()) || !t.c.is_finite() || !t.s.is_finite() {
                return Err(GmraError::Parameter(format!("bad mixture term {t:?}")));
            }
        }
        Ok(Self { terms, provenance: None })
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = Some(p.into());
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let d = x - t.s;
                t.c * (-t.beta * d * d).exp()
            })
            .sum()
    }

    /// `Σ c √(π/β)`.
    pub fn mass(&self) -> f64 {
        self.terms.iter().map(|t| t.c * (std::f64::consts::PI / t.beta).sqrt()).sum()
    }

    /// First moment `∫ x m(x) dx`.
    pub fn first_moment(&self) -> f64 {
        self.terms.iter().map(|t| t.c * (std::f64::consts::PI / t.beta).sqrt() * t.s).sum()
    }

    /// Second moment `∫ x² m(x) dx`.
    pub fn second_moment(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.c * (std::f64::consts::PI / t.beta).sqrt() * (t.s * t.s + 0.5 / t.beta))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let m = t.c * (std::f64::consts::PI / t.beta).sqrt();
                0.5 * m * erfc(-t.beta.sqrt() * (x - t.s))
            })
            .sum()
    }

    /// Density of `μ + σX` when `self` is the density of `X`.
    pub fn affine(&self, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() {
            return Err(GmraError::Parameter(format!("affine map needs sigma > 0, got {sigma}")));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| MixtureTerm { c: t.c / sigma, beta: t.beta / (sigma * sigma), s: mu + sigma * t.s })
            .collect();
        Ok(Self { terms, provenance: self.provenance.clone() })
    }

    /// Smallest interval outside which every term is below `e^{−log_floor}` of its peak.
    pub fn support(&self, log_floor: f64) -> Option<(f64, f64)> {
        self.terms.iter().fold(None, |acc, t| {
            let r = (log_floor / t.beta).sqrt();
            let (lo, hi) = (t.s - r, t.s + r);
            Some(match acc {
                None => (lo, hi),
                Some((a, b)) => (f64::min(a, lo), f64::max(b, hi)),
            })
        })
    }

    /// Projects every term onto its scale and sums the results.
    pub fn to_expansion(&self, params: GmraParams<f64>) -> Result<GmraExpansion<f64>> {
        let mut e = GmraExpansion::new(params);
        for t in &self.terms {
            if t.c == 0.0 {
                continue;
            }
            let p = project_gaussian(t.beta, t.s, &params)?;
            e.add_projected(&p, t.c)?;
        }
        e.metadata = self.provenance.clone();
        Ok(e)
    }
}

pub const LAPLACE_TERMS: usize = 120;
pub const LAPLACE_STEP: f64 = 5.0 / 12.0;
pub const LAPLACE_T0: f64 = -40.0;

/// 120-term mixture for `e^{−|x|}/2`.
pub fn fit_laplace_unit() -> GaussianMixture {
    let h = LAPLACE_STEP;
    let pre = h / (4.0 * std::f64::consts::PI.sqrt());
    let terms = (0..LAPLACE_TERMS)
        .map(|n| {
            let t = LAPLACE_T0 + h * n as f64;
            MixtureTerm { c: pre * (-t.exp() / 4.0 + t / 2.0).exp(), beta: (-t).exp(), s: 0.0 }
        })
        .collect();
    GaussianMixture { terms, provenance: Some("laplace(0,1) integral representation, 120 terms".into()) }
}

/// `√(α/π) θ₃(πp, e^{−α}) = Σ_n φ(n) e^{2πinp}`, the symbol of `φ` sampled on the integers.
pub fn interpolating_denominator(p: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(GmraError::Parameter(format!("alpha = {alpha} must be positive")));
    }
    Ok((alpha / std::f64::consts::PI).sqrt() * theta3(std::f64::consts::PI * p, (-alpha).exp())?)
}

fn smooth_length(n: usize) -> bool {
    let mut m = n;
    for p in [2, 3, 5] {
        while m.is_multiple_of(p) {
            m /= p;
        }
    }
    m == 1
}

/// Coefficients `g_k` with `Σ_k g_k N^{1/2} φ(Ns − k) = samples[k]` at `s = k/N`,
/// the samples being treated as one period.
pub fn fit_sampled(samples: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 8 || !smooth_length(n) {
        return Err(GmraError::Parameter(format!("sample count {n} must be >= 8 with factors 2, 3, 5 only")));
    }
    let den = (0..n)
        .map(|i| interpolating_denominator(i as f64 / n as f64, alpha).map(|d| d * (n as f64).sqrt()))
        .collect::<Result<Vec<_>>>()?;
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (b, d) in buf.iter_mut().zip(&den) {
        *b /= d;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    let scale = buf.iter().map(|c| c.re.abs()).fold(1.0, f64::max) * inv_n;
    let residue = buf.iter().map(|c| c.im.abs()).fold(0.0, f64::max) * inv_n;
    if residue > 1e-10 * scale.max(1.0) {
        return Err(GmraError::Conditioning(residue));
    }
    Ok(buf.iter().map(|c| c.re * inv_n).collect())
}

/// Samples `pdf` at `a + (b−a)k/N` and returns the interpolating mixture on `[a, b]`.
pub fn fit_sampled_density<F: Fn(f64) -> f64>(
    pdf: F,
    interval: (f64, f64),
    n: usize,
    alpha: f64,
) -> Result<GaussianMixture> {
    let (a, b) = interval;
    if !(a < b) {
        return Err(GmraError::Parameter(format!("empty interval [{a}, {b}]")));
    }
    let width = b - a;
    let samples: Vec<f64> = (0..n).map(|k| pdf(a + width * k as f64 / n as f64)).collect();
    if let Some(x) = samples.iter().position(|v| !v.is_finite()) {
        return Err(GmraError::NonFinite { x: a + width * x as f64 / n as f64 });
    }
    let g = fit_sampled(&samples, alpha)?;
    let nf = n as f64;
    let beta = alpha * (nf / width).powi(2);
    let pre = nf.sqrt() * (alpha / std::f64::consts::PI).sqrt();
    let terms = g
        .iter()
        .enumerate()
        .map(|(k, &gk)| MixtureTerm { c: gk * pre, beta, s: a + width * k as f64 / nf })
        .collect();
    GaussianMixture::new(terms)
        .map(|m| m.with_provenance(format!("sampled on [{a}, {b}], N = {n}, alpha = {alpha}")))
}

/// Default fitting grid for the standard Gumbel density.
pub const GUMBEL_INTERVAL: (f64, f64) = (-6.0, 50.0);
pub const GUMBEL_POINTS: usize = 300;

/// Mixture approximation of `spec` on `interval` with `n` samples.
///
/// Normals are returned as one exact term and the Laplace family is an affine
/// image of [`fit_laplace_unit`]; everything else goes through
/// [`fit_sampled_density`].
pub fn fit_distribution(
    spec: &DistributionSpec,
    interval: (f64, f64),
    n: usize,
    alpha: f64,
) -> Result<GaussianMixture> {
    spec.validate()?;
    let (a, b) = interval;
    if !(a < b) {
        return Err(GmraError::Parameter(format!("empty interval [{a}, {b}]")));
    }
    if spec.is_heavy_tailed() {
        return Err(GmraError::Parameter(format!("{spec} is heavy-tailed and cannot be fit on an interval")));
    }
    if let Some(outside) = spec.mass_outside(a, b) {
        if outside > 1e-10 {
            return Err(GmraError::Coverage(outside));
        }
    }
    let name = spec.to_string();
    match *spec {
        DistributionSpec::Normal { mu, sigma } => {
            let beta = 0.5 / (sigma * sigma);
            let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
            Ok(GaussianMixture::new(vec![MixtureTerm { c, beta, s: mu }])?.with_provenance(name))
        }
        DistributionSpec::Laplace { mu, b: scale } => {
            let base = fit_laplace_unit();
            let p = format!("{name}: {}", base.provenance.clone().unwrap_or_default());
            Ok(base.affine(mu, scale)?.with_provenance(p))
        }
        _ => {
            let m = fit_sampled_density(|x| spec.pdf(x), interval, n, alpha)?;
            let p = format!("{name}: {}", m.provenance.clone().unwrap_or_default());
            Ok(m.with_provenance(p))
        }
    }
}

/// Fits the standard member of the family on its default interval and maps it
/// to the requested location and scale.
pub fn fit_default(spec: &DistributionSpec, alpha: f64) -> Result<GaussianMixture> {
    spec.validate()?;
    match *spec {
        DistributionSpec::Gumbel { mu, sigma } => {
            let base = DistributionSpec::Gumbel { mu: 0.0, sigma: 1.0 };
            let m = fit_distribution(&base, GUMBEL_INTERVAL, GUMBEL_POINTS, alpha)?;
            let p = format!("{spec} by rescaling {}", m.provenance.clone().unwrap_or_default());
            Ok(m.affine(mu, sigma)?.with_provenance(p))
        }
        DistributionSpec::Mixture(ref m) => Ok(m.clone()),
        _ => {
            let interval = spec
                .support()
                .ok_or_else(|| GmraError::Parameter(format!("{spec} has no finite fitting interval")))?;
            fit_distribution(spec, interval, GUMBEL_POINTS, alpha)
        }
    }
}
