//! The Gaussian multiresolution basis `φ_{jk}(x) = 2^{j/2} √(α/π) e^{−α(2^j x − k)²}`.
//!
//! [`GmraExpansion`] stores coefficients as one contiguous shift band per
//! scale. [`project_gaussian`] writes an arbitrary Gaussian `e^{−β(x−s)²}` on
//! the single scale selected by its exponent, with relative error `ε(α)`.

use std::collections::BTreeMap;

use crate::special_fn::epsilon_of_alpha;
use crate::{GmraError, Real, Result};

/// Basis functions are skipped once `α d² > EVAL_LOG_CUTOFF`, `d` the shift distance.
const EVAL_LOG_CUTOFF: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmraParams<T> {
    /// Exponent of the scaling function.
    pub alpha: T,
    /// Basis accuracy, always `epsilon_of_alpha(alpha)`.
    pub epsilon: T,
    pub j_min: i32,
    pub j_max: i32,
    /// Relative coefficient drop level used by the product pipelines.
    pub drop_threshold: T,
}

impl<T: Real> GmraParams<T> {
    pub fn new(alpha: T, j_min: i32, j_max: i32) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::lit(0.5)) {
            return Err(GmraError::Parameter(format!("alpha = {alpha} outside (0, 0.5]")));
        }
        if j_min > j_max {
            return Err(GmraError::Parameter(format!("scale window [{j_min}, {j_max}] is empty")));
        }
        Ok(Self {
            alpha,
            epsilon: epsilon_of_alpha(alpha)?,
            j_min,
            j_max,
            drop_threshold: T::zero(),
        })
    }

    pub fn with_window(self, j_min: i32, j_max: i32) -> Result<Self> {
        Self::new(self.alpha, j_min, j_max).map(|p| p.with_threshold(self.drop_threshold))
    }

    pub fn with_threshold(mut self, drop_threshold: T) -> Self {
        self.drop_threshold = drop_threshold;
        self
    }

    pub fn contains_scale(&self, j: i32) -> bool {
        (self.j_min..=self.j_max).contains(&j)
    }

    fn check_scale(&self, j: i32) -> Result<()> {
        if self.contains_scale(j) {
            Ok(())
        } else {
            Err(GmraError::ScaleOverflow { required: j, j_min: self.j_min, j_max: self.j_max })
        }
    }

    /// `√(α/π)`, the peak of `φ`.
    pub fn norm(&self) -> T {
        (self.alpha / T::PI()).sqrt()
    }

    /// Value of `φ_{jk}(t)`.
    pub fn basis(&self, j: i32, k: i64, t: T) -> T {
        let two = T::lit(2.0);
        let d = two.powi(j) * t - T::lit(k as f64);
        two.powi(j).sqrt() * self.norm() * (-self.alpha * d * d).exp()
    }
}

impl Default for GmraParams<f64> {
    fn default() -> Self {
        Self::new(0.25, -40, 100).expect("default parameters are valid")
    }
}

/// Coefficients `w_{j,k}` for `k = k0, k0+1, …` on one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Band<T> {
    pub k0: i64,
    pub w: Vec<T>,
}

impl<T: Real> Band<T> {
    pub fn k_end(&self) -> i64 {
        self.k0 + self.w.len() as i64
    }

    pub fn get(&self, k: i64) -> T {
        if k >= self.k0 && k < self.k_end() {
            self.w[(k - self.k0) as usize]
        } else {
            T::zero()
        }
    }

    fn add(&mut self, k: i64, v: T) {
        if self.w.is_empty() {
            self.k0 = k;
            self.w.push(v);
            return;
        }
        if k < self.k0 {
            let extra = (self.k0 - k) as usize;
            let mut w = vec![T::zero(); extra];
            w.append(&mut self.w);
            self.w = w;
            self.k0 = k;
        } else if k >= self.k_end() {
            let new_len = (k - self.k0 + 1) as usize;
            self.w.resize(new_len, T::zero());
        }
        let i = (k - self.k0) as usize;
        self.w[i] = self.w[i] + v;
    }

    fn trim(&mut self) {
        let first = self.w.iter().position(|v| *v != T::zero());
        match first {
            None => self.w.clear(),
            Some(f) => {
                let last = self.w.iter().rposition(|v| *v != T::zero()).unwrap_or(f);
                self.w.truncate(last + 1);
                self.w.drain(..f);
                self.k0 += f as i64;
            }
        }
    }
}

/// Sparse multiscale expansion `Σ_j Σ_k w_{j,k} φ_{jk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmraExpansion<T> {
    pub params: GmraParams<T>,
    bands: BTreeMap<i32, Band<T>>,
    /// Free-form provenance.
    pub metadata: Option<String>,
    /// Set when the represented density has no finite moments of order ≥ 1.
    pub heavy_tailed: bool,
}

impl<T: Real> GmraExpansion<T> {
    pub fn new(params: GmraParams<T>) -> Self {
        Self { params, bands: BTreeMap::new(), metadata: None, heavy_tailed: false }
    }

    /// Adds `w` to the coefficient at `(j, k)`.
    pub fn add(&mut self, j: i32, k: i64, w: T) -> Result<()> {
        self.params.check_scale(j)?;
        self.bands.entry(j).or_insert_with(|| Band { k0: k, w: Vec::new() }).add(k, w);
        Ok(())
    }

    /// Adds a contiguous run of coefficients starting at shift `k0`.
    pub fn add_band(&mut self, j: i32, k0: i64, w: &[T]) -> Result<()> {
        if w.is_empty() {
            return Ok(());
        }
        self.params.check_scale(j)?;
        let band = self.bands.entry(j).or_insert_with(|| Band { k0, w: Vec::new() });
        // touch both ends once so the band grows a single time
        band.add(k0, T::zero());
        band.add(k0 + w.len() as i64 - 1, T::zero());
        let off = (k0 - band.k0) as usize;
        for (dst, &v) in band.w[off..off + w.len()].iter_mut().zip(w) {
            *dst = *dst + v;
        }
        Ok(())
    }

    pub fn add_projected(&mut self, p: &ProjectedGaussian<T>, weight: T) -> Result<()> {
        let scaled: Vec<T> = p.coeffs.iter().map(|&g| g * weight).collect();
        self.add_band(p.j, p.k_start, &scaled)
    }

    pub fn get(&self, j: i32, k: i64) -> T {
        self.bands.get(&j).map_or(T::zero(), |b| b.get(k))
    }

    pub fn band(&self, j: i32) -> Option<&Band<T>> {
        self.bands.get(&j)
    }

    pub fn bands(&self) -> impl Iterator<Item = (i32, &Band<T>)> {
        self.bands.iter().map(|(&j, b)| (j, b))
    }

    /// Nonzero coefficients as `(j, k, w)`, ordered by scale then shift.
    pub fn coefficients(&self) -> impl Iterator<Item = (i32, i64, T)> + '_ {
        self.bands.iter().flat_map(|(&j, b)| {
            b.w.iter()
                .enumerate()
                .filter(|(_, w)| **w != T::zero())
                .map(move |(i, &w)| (j, b.k0 + i as i64, w))
        })
    }

    /// Number of nonzero coefficients.
    pub fn len(&self) -> usize {
        self.coefficients().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(j, nonzero count)` for every stored scale.
    pub fn counts_per_scale(&self) -> Vec<(i32, usize)> {
        self.bands
            .iter()
            .map(|(&j, b)| (j, b.w.iter().filter(|w| **w != T::zero()).count()))
            .filter(|(_, n)| *n > 0)
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.coefficients().fold(T::zero(), |m, (_, _, w)| m.max(w.abs()))
    }

    /// Coefficient-set union with summation on shared `(j, k)`.
    pub fn merge(&mut self, other: &GmraExpansion<T>) -> Result<()> {
        for (&j, b) in &other.bands {
            self.add_band(j, b.k0, &b.w)?;
        }
        self.heavy_tailed |= other.heavy_tailed;
        Ok(())
    }

    /// Removes and returns the band stored at scale `j`.
    pub fn remove_scale(&mut self, j: i32) -> Option<Band<T>> {
        self.bands.remove(&j)
    }

    /// Replaces the band at scale `j`, trimming zero ends.
    pub fn set_band(&mut self, j: i32, k0: i64, w: Vec<T>) -> Result<()> {
        self.params.check_scale(j)?;
        let mut b = Band { k0, w };
        b.trim();
        if b.w.is_empty() {
            self.bands.remove(&j);
        } else {
            self.bands.insert(j, b);
        }
        Ok(())
    }

    /// Multiplies every coefficient by `c`.
    pub fn scale(&mut self, c: T) {
        for b in self.bands.values_mut() {
            b.w.iter_mut().for_each(|w| *w = *w * c);
        }
    }

    pub fn eval(&self, t: T) -> T {
        let two = T::lit(2.0);
        let alpha = self.params.alpha;
        let cut = (T::lit(EVAL_LOG_CUTOFF) / alpha).sqrt();
        let mut sum = T::zero();
        for (&j, b) in &self.bands {
            let c = two.powi(j) * t;
            let lo = (c - cut).ceil();
            let hi = (c + cut).floor();
            if !lo.is_finite() || !hi.is_finite() {
                continue;
            }
            let k_lo = lo.to_i64().unwrap_or(i64::MIN).max(b.k0);
            let k_hi = hi.to_i64().unwrap_or(i64::MAX).min(b.k_end() - 1);
            let mut s = T::zero();
            for k in k_lo..=k_hi {
                let w = b.w[(k - b.k0) as usize];
                if w != T::zero() {
                    let d = c - T::lit(k as f64);
                    s = s + w * (-alpha * d * d).exp();
                }
            }
            sum = sum + s * two.powi(j).sqrt();
        }
        sum * self.params.norm()
    }

    /// Smallest interval holding every stored basis center ± 10 widths.
    pub fn support(&self) -> Option<(T, T)> {
        let two = T::lit(2.0);
        // width of φ_{jk} in shift units is 1/√(2α)
        let r = T::lit(10.0) / (T::lit(2.0) * self.params.alpha).sqrt();
        let mut out: Option<(T, T)> = None;
        for (&j, b) in &self.bands {
            if b.w.iter().all(|w| *w == T::zero()) {
                continue;
            }
            let s = two.powi(-j);
            let lo = (T::lit(b.k0 as f64) - r) * s;
            let hi = (T::lit((b.k_end() - 1) as f64) + r) * s;
            out = Some(match out {
                None => (lo, hi),
                Some((a, c)) => (a.min(lo), c.max(hi)),
            });
        }
        out
    }

    /// Per-scale supports in `x`, as `(j, lo, hi)`.
    pub fn scale_supports(&self) -> Vec<(i32, T, T)> {
        let two = T::lit(2.0);
        let r = T::lit(10.0) / (T::lit(2.0) * self.params.alpha).sqrt();
        self.bands
            .iter()
            .filter(|(_, b)| b.w.iter().any(|w| *w != T::zero()))
            .map(|(&j, b)| {
                let s = two.powi(-j);
                (j, (T::lit(b.k0 as f64) - r) * s, (T::lit((b.k_end() - 1) as f64) + r) * s)
            })
            .collect()
    }

    fn trim(&mut self) {
        for b in self.bands.values_mut() {
            b.trim();
        }
        self.bands.retain(|_, b| !b.w.is_empty());
    }
}

/// Free-function form of [`GmraExpansion::eval`].
pub fn eval_expansion<T: Real>(e: &GmraExpansion<T>, t: T) -> T {
    e.eval(t)
}

/// Drops coefficients with `|w| < rel_threshold · max|w|`.
pub fn compress<T: Real>(e: &GmraExpansion<T>, rel_threshold: T) -> Result<GmraExpansion<T>> {
    if !(rel_threshold >= T::zero() && rel_threshold < T::one()) {
        return Err(GmraError::Parameter(format!("threshold {rel_threshold} outside [0, 1)")));
    }
    let mut out = e.clone();
    if rel_threshold == T::zero() {
        return Ok(out);
    }
    let cut = rel_threshold * e.max_abs();
    for b in out.bands.values_mut() {
        for w in b.w.iter_mut() {
            if w.abs() < cut {
                *w = T::zero();
            }
        }
    }
    out.trim();
    Ok(out)
}

/// The scale `j` with `4^{j−2} α < β ≤ 4^{j−1} α`.
pub fn scale_for_exponent<T: Real>(beta: T, params: &GmraParams<T>) -> i32 {
    let alpha = params.alpha;
    let four = T::lit(4.0);
    let r = (beta / alpha).ln() / four.ln();
    let mut j = r.ceil().to_i32().unwrap_or(0) + 1;
    while beta > four.powi(j - 1) * alpha {
        j += 1;
    }
    while beta <= four.powi(j - 2) * alpha {
        j -= 1;
    }
    j
}

/// Coefficients `g_k` of one Gaussian on scale `j`, shifts `k_start, k_start+1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGaussian<T> {
    pub j: i32,
    pub k_start: i64,
    pub coeffs: Vec<T>,
}

impl<T: Real> ProjectedGaussian<T> {
    pub fn shifts(&self) -> std::ops::Range<i64> {
        self.k_start..self.k_start + self.coeffs.len() as i64
    }

    pub fn get(&self, k: i64) -> T {
        if self.shifts().contains(&k) {
            self.coeffs[(k - self.k_start) as usize]
        } else {
            T::zero()
        }
    }

    pub fn eval(&self, params: &GmraParams<T>, t: T) -> T {
        self.shifts().zip(&self.coeffs).fold(T::zero(), |s, (k, &g)| s + g * params.basis(self.j, k, t))
    }

    pub fn to_expansion(&self, params: GmraParams<T>) -> Result<GmraExpansion<T>> {
        let mut e = GmraExpansion::new(params);
        e.add_band(self.j, self.k_start, &self.coeffs)?;
        Ok(e)
    }
}

/// Projects `e^{−β(x−s)²}` onto its scale `j`,
/// `g_k = 2^{−j/2} √(α/(α − 4^{−j}β)) e^{−(αβ/(α−4^{−j}β))(2^{−j}k − s)²}`, keeping shifts whose Gaussian factor
/// is at least the working epsilon.
pub fn project_gaussian<T: Real>(beta: T, s: T, params: &GmraParams<T>) -> Result<ProjectedGaussian<T>> {
    project_gaussian_with_floor(beta, s, params, -T::epsilon().ln())
}

/// As [`project_gaussian`], keeping shifts whose Gaussian factor is at least
/// `e^{−log_floor}`. A deeper floor keeps the relative error bound valid
/// further into the tails of the target.
pub fn project_gaussian_with_floor<T: Real>(
    beta: T,
    s: T,
    params: &GmraParams<T>,
    log_floor: T,
) -> Result<ProjectedGaussian<T>> {
    if !(beta > T::zero()) || !beta.is_finite() || !s.is_finite() {
        return Err(GmraError::Parameter(format!("bad Gaussian beta = {beta}, s = {s}")));
    }
    let j = scale_for_exponent(beta, params);
    params.check_scale(j)?;
    let alpha = params.alpha;
    let two = T::lit(2.0);
    let inv4j = T::lit(4.0).powi(-j);
    let denom = alpha - inv4j * beta;
    let c = alpha * beta / denom;
    let pre = two.powi(-j).sqrt() * (alpha / denom).sqrt();
    let radius = (log_floor / c).sqrt();
    let scale = two.powi(j);
    let lo = (scale * (s - radius)).ceil();
    let hi = (scale * (s + radius)).floor();
    let k_lo = lo.to_i64().ok_or_else(|| GmraError::Parameter(format!("shift {lo} out of range")))?;
    let k_hi = hi.to_i64().ok_or_else(|| GmraError::Parameter(format!("shift {hi} out of range")))?;
    let inv = two.powi(-j);
    let coeffs = (k_lo..=k_hi)
        .map(|k| {
            let d = inv * T::lit(k as f64) - s;
            pre * (-c * d * d).exp()
        })
        .collect();
    Ok(ProjectedGaussian { j, k_start: k_lo, coeffs })
}

/// Two-scale coefficients `h_k = √(4α/(3π)) e^{−αk²/3}` with
/// `φ(x) ≈ Σ_k h_k φ(2x − k)`; entry `i` holds `k = i − len/2`.
pub fn two_scale_coeffs<T: Real>(params: &GmraParams<T>) -> Vec<T> {
    let alpha = params.alpha;
    let kmax = (T::lit(3.0) * (-T::epsilon().ln()) / alpha).sqrt().floor().to_i64().unwrap_or(0);
    let pre = (T::lit(4.0) * alpha / (T::lit(3.0) * T::PI())).sqrt();
    (-kmax..=kmax)
        .map(|k| {
            let kf = T::lit(k as f64);
            pre * (-alpha * kf * kf / T::lit(3.0)).exp()
        })
        .collect()
}
