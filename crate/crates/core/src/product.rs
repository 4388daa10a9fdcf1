//! Densities of products `Z = XY` of random variables as multiscale expansions.
//!
//! The basic step writes the density of `XY`, `Y ∼ N(μ, σ²)`, directly in the
//! basis: every coefficient is a one-dimensional integral over `τ ∈ [0, 1]`
//! of the pointwise density of `X` against a Gaussian in the shift `k`.
//! Products of two expansions decompose one factor into its basis functions,
//! each of which is a normal density, and reuse the same integral.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::gmra_core::{compress, GmraExpansion, GmraParams};
use crate::mixture::{fit_default, GaussianMixture};
use crate::quadrature::{adaptive_integrate_vec, AdaptiveConfig};
use crate::special_fn::{erfc, gauss_legendre, EULER_GAMMA};
use crate::stats;
use crate::{GmraError, Result};

/// Relative level below which coefficients of one scale are dropped.
pub const BAND_CUTOFF: f64 = 1e-17;
/// Gaussian factors `e^{−x}` with `x` above this are treated as zero.
const LOG_CUT: f64 = 40.0;
/// Widest shift range (per side) a decomposed factor may produce.
const MAX_SHIFTS: i64 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    Normal { mu: f64, sigma: f64 },
    Laplace { mu: f64, b: f64 },
    Gumbel { mu: f64, sigma: f64 },
    Cauchy { x0: f64, gamma: f64 },
    Mixture(GaussianMixture),
    Expansion(GmraExpansion<f64>),
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal { mu, sigma } => write!(f, "normal({mu},{sigma})"),
            Self::Laplace { mu, b } => write!(f, "laplace({mu},{b})"),
            Self::Gumbel { mu, sigma } => write!(f, "gumbel({mu},{sigma})"),
            Self::Cauchy { x0, gamma } => write!(f, "cauchy({x0},{gamma})"),
            Self::Mixture(m) => write!(f, "mixture({} terms)", m.len()),
            Self::Expansion(e) => write!(f, "expansion({} coefficients)", e.len()),
        }
    }
}

impl std::str::FromStr for DistributionSpec {
    type Err = GmraError;

    /// `normal(mu,sigma)`, `laplace(mu,b)`, `gumbel(mu,sigma)` or `cauchy(x0,gamma)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| GmraError::Parameter(format!("distribution {s:?}: {why}"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| bad("expected name(a,b)"))?;
        let body = s[open + 1..].strip_suffix(')').ok_or_else(|| bad("missing ')'"))?;
        let args = body
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad("parameters must be decimal numbers")))
            .collect::<Result<Vec<_>>>()?;
        let &[a, b] = args.as_slice() else {
            return Err(bad("expected two parameters"));
        };
        let d = match s[..open].trim() {
            "normal" => Self::Normal { mu: a, sigma: b },
            "laplace" => Self::Laplace { mu: a, b },
            "gumbel" => Self::Gumbel { mu: a, sigma: b },
            "cauchy" => Self::Cauchy { x0: a, gamma: b },
            other => return Err(bad(&format!("unknown family {other:?}"))),
        };
        d.validate()?;
        Ok(d)
    }
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let (loc, scale) = match *self {
            Self::Normal { mu, sigma } => (mu, sigma),
            Self::Laplace { mu, b } => (mu, b),
            Self::Gumbel { mu, sigma } => (mu, sigma),
            Self::Cauchy { x0, gamma } => (x0, gamma),
            _ => return Ok(()),
        };
        if !loc.is_finite() || !(scale > 0.0 && scale.is_finite()) {
            return Err(GmraError::Parameter(format!("{self}: location must be finite and scale positive")));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / ((2.0 * PI).sqrt() * sigma)
            }
            Self::Laplace { mu, b } => (-(x - mu).abs() / b).exp() / (2.0 * b),
            Self::Gumbel { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-z - (-z).exp()).exp() / sigma
            }
            Self::Cauchy { x0, gamma } => {
                let z = (x - x0) / gamma;
                1.0 / (PI * gamma * (1.0 + z * z))
            }
            Self::Mixture(m) => m.eval(x),
            Self::Expansion(e) => e.eval(x),
        }
    }

    /// `P(X < a)`.
    pub fn lower_tail(&self, a: f64) -> f64 {
        match self {
            Self::Normal { mu, sigma } => 0.5 * erfc(-(a - mu) / (sigma * 2f64.sqrt())),
            Self::Laplace { mu, b } => {
                let z = (a - mu) / b;
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Self::Gumbel { mu, sigma } => (-(-(a - mu) / sigma).exp()).exp(),
            Self::Cauchy { x0, gamma } => 0.5 + ((a - x0) / gamma).atan() / PI,
            Self::Mixture(m) => m.cdf(a),
            Self::Expansion(e) => stats::cdf(e, a),
        }
    }

    /// `P(X > b)`.
    pub fn upper_tail(&self, b: f64) -> f64 {
        match self {
            Self::Normal { mu, sigma } => 0.5 * erfc((b - mu) / (sigma * 2f64.sqrt())),
            Self::Laplace { mu, b: s } => {
                let z = (b - mu) / s;
                if z > 0.0 {
                    0.5 * (-z).exp()
                } else {
                    1.0 - 0.5 * z.exp()
                }
            }
            Self::Gumbel { mu, sigma } => -(-(-(b - mu) / sigma).exp()).exp_m1(),
            Self::Cauchy { x0, gamma } => 0.5 - ((b - x0) / gamma).atan() / PI,
            Self::Mixture(m) => m.mass() - m.cdf(b),
            Self::Expansion(e) => stats::moment(e, 0).unwrap_or(1.0) - stats::cdf(e, b),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.lower_tail(x)
    }

    /// Probability mass outside `[a, b]`.
    pub fn mass_outside(&self, a: f64, b: f64) -> Option<f64> {
        let v = self.lower_tail(a) + self.upper_tail(b);
        v.is_finite().then_some(v.max(0.0))
    }

    pub fn is_heavy_tailed(&self) -> bool {
        match self {
            Self::Cauchy { .. } => true,
            Self::Expansion(e) => e.heavy_tailed,
            _ => false,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        match self {
            Self::Normal { mu, .. } | Self::Laplace { mu, .. } => Some(*mu),
            Self::Gumbel { mu, sigma } => Some(mu + EULER_GAMMA * sigma),
            Self::Cauchy { .. } => None,
            Self::Mixture(m) => Some(m.first_moment() / m.mass()),
            Self::Expansion(e) => stats::mean_variance(e).ok().map(|(m, _)| m),
        }
    }

    pub fn variance(&self) -> Option<f64> {
        match self {
            Self::Normal { sigma, .. } => Some(sigma * sigma),
            Self::Laplace { b, .. } => Some(2.0 * b * b),
            Self::Gumbel { sigma, .. } => Some(PI * PI * sigma * sigma / 6.0),
            Self::Cauchy { .. } => None,
            Self::Mixture(m) => {
                let mean = m.first_moment() / m.mass();
                Some(m.second_moment() / m.mass() - mean * mean)
            }
            Self::Expansion(e) => stats::mean_variance(e).ok().map(|(_, v)| v),
        }
    }

    /// `μ²/(2σ²)`; `None` without a finite variance.
    pub fn ratio(&self) -> Option<f64> {
        let (m, v) = (self.mean()?, self.variance()?);
        (v > 0.0).then(|| m * m / (2.0 * v))
    }

    /// Interval outside which the density is below `10⁻²⁰` of its peak;
    /// `None` for heavy tails.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Normal { mu, sigma } => Some((mu - 10.0 * sigma, mu + 10.0 * sigma)),
            Self::Laplace { mu, b } => Some((mu - 50.0 * b, mu + 50.0 * b)),
            Self::Gumbel { mu, sigma } => Some((mu - 6.0 * sigma, mu + 50.0 * sigma)),
            Self::Cauchy { .. } => None,
            Self::Mixture(m) => m.support(50.0),
            Self::Expansion(e) => {
                if e.heavy_tailed {
                    None
                } else {
                    e.support()
                }
            }
        }
    }

    /// Basis representation of this density in `params`.
    pub fn to_expansion(&self, params: GmraParams<f64>) -> Result<GmraExpansion<f64>> {
        self.validate()?;
        match self {
            Self::Expansion(e) => Ok(e.clone()),
            Self::Mixture(m) => m.to_expansion(params),
            Self::Cauchy { .. } => {
                Err(GmraError::Parameter(format!("{self} has no finite-interval basis representation")))
            }
            _ => {
                let mut e = fit_default(self, params.alpha)?.to_expansion(params)?;
                e.metadata = Some(self.to_string());
                Ok(e)
            }
        }
    }
}

/// Orders two factors so the first has the larger `μ²/(2σ²)`; ties and
/// incomparable pairs keep input order, except that a factor without finite
/// variance always goes first.
pub fn order_factors<'a>(
    x: &'a DistributionSpec,
    y: &'a DistributionSpec,
) -> (&'a DistributionSpec, &'a DistributionSpec) {
    match (x.ratio(), y.ratio()) {
        (Some(a), Some(b)) if b > a => (y, x),
        (Some(_), None) => (y, x),
        _ => (x, y),
    }
}

fn scale_lower_bound(support: Option<(f64, f64)>, shift: f64, width: f64, params: &GmraParams<f64>) -> i32 {
    // scale J sees |x| ∈ [2^{1−J+shift}/width, 2^{2−J+shift}/width]
    match support {
        Some((a, b)) => {
            let r = a.abs().max(b.abs());
            let j = (1.0 + shift - (r * width).log2()).floor();
            (j as i32).max(params.j_min)
        }
        None => params.j_min,
    }
}

fn trim_band(w: &mut [f64]) {
    let m = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = BAND_CUTOFF * m;
    for v in w.iter_mut() {
        if v.abs() < cut {
            *v = 0.0;
        }
    }
}

/// Drops scales that matter neither for point values nor for mass:
/// both `max|w| 2^{j/2}` and `max|w| 2^{−j/2}` fall below `rel` of their
/// largest value over all scales.
pub fn prune_negligible_scales(e: &mut GmraExpansion<f64>, rel: f64) {
    let stats: Vec<(i32, f64, f64)> = e
        .bands()
        .map(|(j, b)| {
            let m = b.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let s = 2f64.powi(j).sqrt();
            (j, m * s, m / s)
        })
        .collect();
    let amp = stats.iter().fold(0.0f64, |m, s| m.max(s.1));
    let mass = stats.iter().fold(0.0f64, |m, s| m.max(s.2));
    for (j, a, m) in stats {
        if a < rel * amp && m < rel * mass {
            e.remove_scale(j);
        }
    }
}

fn finish(mut e: GmraExpansion<f64>, heavy: bool, meta: String) -> Result<GmraExpansion<f64>> {
    prune_negligible_scales(&mut e, BAND_CUTOFF);
    e.heavy_tailed = heavy;
    let mut e = compress(&e, e.params.drop_threshold)?;
    e.metadata = Some(meta);
    Ok(e)
}

/// Density of `XY` with `X ∼ f` and `Y ∼ N(μ_y, σ_y²)`.
pub fn product_with_normal(
    f: &DistributionSpec,
    mu_y: f64,
    sigma_y: f64,
    params: &GmraParams<f64>,
) -> Result<GmraExpansion<f64>> {
    product_with_normal_using(f, mu_y, sigma_y, params, &AdaptiveConfig::default())
}

pub fn product_with_normal_using(
    f: &DistributionSpec,
    mu_y: f64,
    sigma_y: f64,
    params: &GmraParams<f64>,
    cfg: &AdaptiveConfig,
) -> Result<GmraExpansion<f64>> {
    f.validate()?;
    if !mu_y.is_finite() || !(sigma_y > 0.0 && sigma_y.is_finite()) {
        return Err(GmraError::Parameter(format!("normal factor N({mu_y}, {sigma_y}²) is invalid")));
    }
    let alpha = params.alpha;
    let width = (2.0 * alpha).sqrt() * sigma_y;
    let q = mu_y / width;
    // the Gaussian in k is centred in ±[2q, 4q]; its exponent is at least α/15
    let radius = (LOG_CUT * 15.0 / alpha).sqrt();
    let reach = 4.0 * q.abs() + radius;
    let (k_lo, k_hi) = (-reach.ceil() as i64, reach.ceil() as i64);
    if k_hi > MAX_SHIFTS {
        return Err(GmraError::Parameter(format!("normal factor mean/scale ratio {q} needs too many shifts")));
    }
    let n = (k_hi - k_lo + 1) as usize;
    let j_lo = scale_lower_bound(f.support(), 0.0, width, params);
    let pre = LN_2 / ((2.0 * PI).sqrt() * sigma_y);

    let rows: Vec<(i32, Vec<f64>)> = (j_lo..=params.j_max)
        .into_par_iter()
        .map(|j| {
            let base = 2f64.powi(2 - j) / width;
            let integrand = |tau: f64, out: &mut [f64]| {
                let x = base * (-tau).exp2();
                let (fp, fm) = (f.pdf(x), f.pdf(-x));
                if fp == 0.0 && fm == 0.0 {
                    return;
                }
                let r = (2.0 * tau - 4.0).exp2();
                let a = alpha * r / (1.0 - r);
                let rho = 1.0 / (1.0 - r).sqrt();
                let c = q * (2.0 - tau).exp2();
                for (i, o) in out.iter_mut().enumerate() {
                    let k = (k_lo + i as i64) as f64;
                    let (dm, dp) = (k - c, k + c);
                    *o = rho * (fp * (-a * dm * dm).exp() + fm * (-a * dp * dp).exp());
                }
            };
            let v = adaptive_integrate_vec(integrand, n, 0.0, 1.0, cfg).map_err(|e| GmraError::Coefficient {
                j,
                k: (3.0 * q).round() as i64,
                source: Box::new(e),
            })?;
            let s = pre * 2f64.powi(-j).sqrt();
            let mut w: Vec<f64> = v.into_iter().map(|x| x * s).collect();
            trim_band(&mut w);
            Ok((j, w))
        })
        .collect::<Result<_>>()?;

    let mut e = GmraExpansion::new(*params);
    for (j, w) in rows {
        e.set_band(j, k_lo, w)?;
    }
    finish(e, f.is_heavy_tailed(), format!("{f} x normal({mu_y},{sigma_y})"))
}

struct Node {
    eta: f64,
    tau: f64,
    g: Vec<f64>,
}

/// `Σ_{m'} w_{m'} e^{−a(v−m')²}` sampled at `v = 2^{τ−2}k`, `k ∈ [−K, K]`,
/// at the quadrature nodes of dyadic `τ`-intervals.
struct SmoothedBand<'a> {
    alpha: f64,
    k_max: i64,
    m0: i64,
    w: &'a [f64],
    reach: f64,
    rule: Vec<(f64, f64)>,
    cache: Mutex<HashMap<(u32, u64), Arc<Vec<Node>>>>,
}

const CACHE_DEPTH: u32 = 7;

impl<'a> SmoothedBand<'a> {
    fn nodes(&self, depth: u32, idx: u64) -> Arc<Vec<Node>> {
        if depth <= CACHE_DEPTH {
            if let Some(v) = self.cache.lock().expect("cache lock").get(&(depth, idx)) {
                return v.clone();
            }
        }
        let h = (-(depth as f64)).exp2();
        let lo = idx as f64 * h;
        let v = Arc::new(
            self.rule
                .iter()
                .map(|&(x, wt)| {
                    let tau = lo + 0.5 * h * (x + 1.0);
                    self.node(tau, 0.5 * h * wt)
                })
                .collect::<Vec<_>>(),
        );
        if depth <= CACHE_DEPTH {
            self.cache.lock().expect("cache lock").insert((depth, idx), v.clone());
        }
        v
    }

    fn node(&self, tau: f64, wt: f64) -> Node {
        let r = (2.0 * tau - 4.0).exp2();
        let a = self.alpha / (1.0 - r);
        let delta = (tau - 2.0).exp2();
        let m_end = self.m0 + self.w.len() as i64 - 1;
        let g = (-self.k_max..=self.k_max)
            .map(|k| {
                let v = delta * k as f64;
                let lo = ((v - self.reach).ceil() as i64).max(self.m0);
                let hi = ((v + self.reach).floor() as i64).min(m_end);
                (lo..=hi)
                    .map(|m| {
                        let d = v - m as f64;
                        self.w[(m - self.m0) as usize] * (-a * d * d).exp()
                    })
                    .sum()
            })
            .collect();
        Node { eta: wt / (1.0 - r).sqrt(), tau, g }
    }
}

/// Density of `XY` with `X ∼ f` evaluated pointwise and `Y` given by the
/// expansion `g`, decomposed into its basis functions.
pub fn product_with_expansion(
    f: &DistributionSpec,
    g: &GmraExpansion<f64>,
    params: &GmraParams<f64>,
    cfg: &AdaptiveConfig,
) -> Result<GmraExpansion<f64>> {
    f.validate()?;
    cfg.validate()?;
    if g.params.alpha != params.alpha {
        return Err(GmraError::Parameter("factors use different alpha".into()));
    }
    let alpha = params.alpha;
    let rule: Vec<(f64, f64)> = {
        let r = gauss_legendre::<f64>(cfg.order)?;
        r.nodes.iter().copied().zip(r.weights.iter().copied()).collect()
    };
    let reach = (LOG_CUT * 15.0 / (16.0 * alpha)).sqrt();
    let support = f.support();
    let mut acc: HashMap<i32, (i64, Vec<f64>)> = HashMap::new();

    for (l, band) in g.bands() {
        let m_end = band.k_end() - 1;
        let m_abs = (band.k0.abs().max(m_end.abs())) as f64;
        let k_max = (4.0 * (m_abs + reach)).ceil() as i64;
        if k_max > MAX_SHIFTS {
            return Err(GmraError::Parameter(format!(
                "decomposing scale {l} needs {k_max} shifts; evaluate that factor pointwise instead"
            )));
        }
        let sb = SmoothedBand {
            alpha,
            k_max,
            m0: band.k0,
            w: &band.w,
            reach,
            rule: rule.clone(),
            cache: Mutex::new(HashMap::new()),
        };
        let n = (2 * k_max + 1) as usize;
        // basis functions of scale l are normals with √(2α)σ = 2^{−l}
        let j_lo = scale_lower_bound(support, l as f64, 1.0, params);
        let pre_l = LN_2 * 2f64.powi(l).sqrt() * (alpha / PI).sqrt();

        let rows: Vec<(i32, Vec<f64>)> = (j_lo..=params.j_max)
            .into_par_iter()
            .map(|j| {
                let xs = 2f64.powi(2 - j + l);
                let sum = |depth: u32, idx: u64| -> Vec<f64> {
                    let mut out = vec![0.0; n];
                    for node in sb.nodes(depth, idx).iter() {
                        let x = xs * (-node.tau).exp2();
                        let (fp, fm) = (node.eta * f.pdf(x), node.eta * f.pdf(-x));
                        if fp == 0.0 && fm == 0.0 {
                            continue;
                        }
                        for (i, o) in out.iter_mut().enumerate() {
                            *o += fp * node.g[i] + fm * node.g[n - 1 - i];
                        }
                    }
                    out
                };
                let mut total = vec![0.0; n];
                let mut stack = vec![(0u32, 0u64, sum(0, 0))];
                while let Some((d, idx, s)) = stack.pop() {
                    let s1 = sum(d + 1, 2 * idx);
                    let s2 = sum(d + 1, 2 * idx + 1);
                    let worst = s1.iter().zip(&s2).zip(&s).map(|((a, b), c)| (a + b - c).abs()).fold(0.0, f64::max);
                    if !worst.is_finite() {
                        let tau = idx as f64 * (-(d as f64)).exp2();
                        return Err(GmraError::Coefficient { j, k: 0, source: Box::new(GmraError::NonFinite { x: tau }) });
                    }
                    if worst > cfg.tol {
                        if d as usize + 1 > cfg.max_depth || stack.len() + 2 > cfg.max_intervals {
                            let h = (-(d as f64)).exp2();
                            let k = s.iter().enumerate().fold((0, 0.0), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b }).0;
                            return Err(GmraError::Coefficient {
                                j,
                                k: k as i64 - k_max,
                                source: Box::new(GmraError::NonConvergence { a: idx as f64 * h, b: (idx + 1) as f64 * h, depth: d as usize }),
                            });
                        }
                        stack.push((d + 1, 2 * idx + 1, s2));
                        stack.push((d + 1, 2 * idx, s1));
                    } else {
                        for ((t, a), b) in total.iter_mut().zip(&s1).zip(&s2) {
                            *t += a + b;
                        }
                    }
                }
                let s = pre_l * 2f64.powi(-j).sqrt();
                total.iter_mut().for_each(|v| *v *= s);
                Ok((j, total))
            })
            .collect::<Result<_>>()?;

        for (j, w) in rows {
            let entry = acc.entry(j).or_insert_with(|| (-k_max, vec![0.0; n]));
            if entry.0 > -k_max {
                let grow = (entry.0 + k_max) as usize;
                let mut v = vec![0.0; grow];
                v.extend_from_slice(&entry.1);
                entry.1 = v;
                entry.0 = -k_max;
            }
            if entry.1.len() < n {
                entry.1.resize(n, 0.0);
            }
            let off = (-k_max - entry.0) as usize;
            for (d, v) in entry.1[off..off + n].iter_mut().zip(&w) {
                *d += v;
            }
        }
    }

    let mut e = GmraExpansion::new(*params);
    for (j, (k0, mut w)) in acc {
        trim_band(&mut w);
        e.set_band(j, k0, w)?;
    }
    finish(e, f.is_heavy_tailed() || g.heavy_tailed, format!("{f} x expansion({} coefficients)", g.len()))
}

/// Product density of two expansions. The factor with the larger
/// `μ²/(2σ²)` is evaluated pointwise, the other is decomposed.
pub fn product_gmra(
    f_exp: &GmraExpansion<f64>,
    g_exp: &GmraExpansion<f64>,
    params: &GmraParams<f64>,
    cfg: &AdaptiveConfig,
) -> Result<GmraExpansion<f64>> {
    let (a, b) = (DistributionSpec::Expansion(f_exp.clone()), DistributionSpec::Expansion(g_exp.clone()));
    let (f, g) = order_factors(&a, &b);
    let DistributionSpec::Expansion(ge) = g else { unreachable!() };
    product_with_expansion(f, ge, params, cfg)
}

/// Density of `XY` for independent `X ∼ x`, `Y ∼ y`.
///
/// A normal factor is always used through the closed-form route; otherwise
/// the factor with the smaller `μ²/(2σ²)` is fit and decomposed.
pub fn product(x: &DistributionSpec, y: &DistributionSpec, params: &GmraParams<f64>) -> Result<GmraExpansion<f64>> {
    product_using(x, y, params, &AdaptiveConfig::default())
}

pub fn product_using(
    x: &DistributionSpec,
    y: &DistributionSpec,
    params: &GmraParams<f64>,
    cfg: &AdaptiveConfig,
) -> Result<GmraExpansion<f64>> {
    use DistributionSpec::Normal;
    let (f, g) = match (x, y) {
        (Normal { .. }, Normal { .. }) => order_factors(x, y),
        (_, Normal { .. }) => (x, y),
        (Normal { .. }, _) => (y, x),
        _ => order_factors(x, y),
    };
    if let Normal { mu, sigma } = *g {
        return product_with_normal_using(f, mu, sigma, params, cfg);
    }
    if g.is_heavy_tailed() {
        return Err(GmraError::Parameter(format!("cannot multiply two heavy-tailed factors ({f}, {g})")));
    }
    let ge = g.to_expansion(*params)?;
    product_with_expansion(f, &ge, params, cfg)
}

/// Precomputed Gaussian factors of basis-pair products on a fixed `τ` rule.
#[derive(Debug, Clone)]
pub struct BasisProductTables {
    pub alpha: f64,
    pub tau: Vec<f64>,
    /// `w_i (1 − 4^{τ_i−2})^{−1/2}`.
    pub eta: Vec<f64>,
    pub m_range: (i64, i64),
    pub m2_range: (i64, i64),
    pub j_range: (i32, i32),
    pub k_range: (i64, i64),
    pub cutoff: f64,
    u_minus: Vec<f64>,
    u_plus: Vec<f64>,
    v_minus: Vec<f64>,
    v_plus: Vec<f64>,
}

fn span(r: (i64, i64)) -> usize {
    (r.1 - r.0 + 1).max(0) as usize
}

fn cut(v: f64, cutoff: f64) -> f64 {
    if v < cutoff {
        0.0
    } else {
        v
    }
}

/// Tables `U^±_{j,m} = e^{−α(2^{2−j−τ_i} ± m)²}` and
/// `V^±_{k,m'} = e^{−(α/(1−4^{τ_i−2}))(2^{τ_i−2}k ± m')²}` on `nodes`
/// Gauss–Legendre points in `[0, 1]`; entries below `10⁻¹⁷` are stored as zero.
pub fn build_basis_tables(
    params: &GmraParams<f64>,
    nodes: usize,
    m_range: (i64, i64),
    m2_range: (i64, i64),
    j_range: (i32, i32),
    k_range: (i64, i64),
) -> Result<BasisProductTables> {
    if m_range.0 > m_range.1 || m2_range.0 > m2_range.1 || j_range.0 > j_range.1 || k_range.0 > k_range.1 {
        return Err(GmraError::Parameter("empty table range".into()));
    }
    let alpha = params.alpha;
    let cutoff = BAND_CUTOFF;
    let rule = gauss_legendre::<f64>(nodes)?;
    let (tau, w): (Vec<f64>, Vec<f64>) = rule.mapped(0.0, 1.0).unzip();
    let eta: Vec<f64> = tau.iter().zip(&w).map(|(t, w)| w / (1.0 - (2.0 * t - 4.0).exp2()).sqrt()).collect();
    let mm = nodes;
    let mut u_minus = Vec::with_capacity(span((j_range.0 as i64, j_range.1 as i64)) * span(m_range) * mm);
    let mut u_plus = Vec::with_capacity(u_minus.capacity());
    for j in j_range.0..=j_range.1 {
        for m in m_range.0..=m_range.1 {
            for &t in &tau {
                let x = (2.0 - j as f64 - t).exp2();
                let (dm, dp) = (x - m as f64, x + m as f64);
                u_minus.push(cut((-alpha * dm * dm).exp(), cutoff));
                u_plus.push(cut((-alpha * dp * dp).exp(), cutoff));
            }
        }
    }
    let mut v_minus = Vec::with_capacity(span(k_range) * span(m2_range) * mm);
    let mut v_plus = Vec::with_capacity(v_minus.capacity());
    for k in k_range.0..=k_range.1 {
        for m2 in m2_range.0..=m2_range.1 {
            for &t in &tau {
                let r = (2.0 * t - 4.0).exp2();
                let a = alpha / (1.0 - r);
                let v = (t - 2.0).exp2() * k as f64;
                let (dm, dp) = (v - m2 as f64, v + m2 as f64);
                v_minus.push(cut((-a * dm * dm).exp(), cutoff));
                v_plus.push(cut((-a * dp * dp).exp(), cutoff));
            }
        }
    }
    Ok(BasisProductTables { alpha, tau, eta, m_range, m2_range, j_range, k_range, cutoff, u_minus, u_plus, v_minus, v_plus })
}

impl BasisProductTables {
    pub fn nodes(&self) -> usize {
        self.tau.len()
    }

    fn check(&self, m: i64, m2: i64, j: i32, k: i64) -> Result<()> {
        let inside = (self.m_range.0..=self.m_range.1).contains(&m)
            && (self.m2_range.0..=self.m2_range.1).contains(&m2)
            && (self.j_range.0..=self.j_range.1).contains(&j)
            && (self.k_range.0..=self.k_range.1).contains(&k);
        if inside {
            Ok(())
        } else {
            Err(GmraError::TableRange { m, m2, j, k })
        }
    }

    fn u_row(&self, plus: bool, j: i32, m: i64) -> &[f64] {
        let mm = self.nodes();
        let row = (j - self.j_range.0) as usize * span(self.m_range) + (m - self.m_range.0) as usize;
        let t = if plus { &self.u_plus } else { &self.u_minus };
        &t[row * mm..(row + 1) * mm]
    }

    fn v_row(&self, plus: bool, k: i64, m2: i64) -> &[f64] {
        let mm = self.nodes();
        let row = (k - self.k_range.0) as usize * span(self.m2_range) + (m2 - self.m2_range.0) as usize;
        let t = if plus { &self.v_plus } else { &self.v_minus };
        &t[row * mm..(row + 1) * mm]
    }

    /// `U^{±}_{j,m}` at node `i`.
    pub fn u(&self, plus: bool, j: i32, m: i64, i: usize) -> Result<f64> {
        self.check(m, self.m2_range.0, j, self.k_range.0)?;
        Ok(self.u_row(plus, j, m)[i])
    }

    /// `V^{±}_{k,m'}` at node `i`.
    pub fn v(&self, plus: bool, k: i64, m2: i64, i: usize) -> Result<f64> {
        self.check(self.m_range.0, m2, self.j_range.0, k)?;
        Ok(self.v_row(plus, k, m2)[i])
    }

    /// `Σ_i η_i (U^−_{j,m} V^−_{k,m'} + U^+_{j,m} V^+_{k,m'})`.
    pub fn pair_integral(&self, j: i32, k: i64, m: i64, m2: i64) -> Result<f64> {
        self.check(m, m2, j, k)?;
        let (um, up) = (self.u_row(false, j, m), self.u_row(true, j, m));
        let (vm, vp) = (self.v_row(false, k, m2), self.v_row(true, k, m2));
        Ok((0..self.nodes()).map(|i| self.eta[i] * (um[i] * vm[i] + up[i] * vp[i])).sum())
    }

    /// Coefficient at scale `j`, shift `k` of the product density of
    /// `w_f φ_{0,m}` and `w_g φ_{0,m'}`.
    pub fn pair_coefficient(&self, j: i32, k: i64, m: i64, m2: i64, w_f: f64, w_g: f64) -> Result<f64> {
        let u = self.pair_integral(j, k, m, m2)?;
        Ok(w_f * w_g * (self.alpha / PI) * LN_2 * 2f64.powi(-j).sqrt() * u)
    }
}

/// Pairwise product of two expansions through precomputed tables. The pair
/// `(φ_{n,m}, φ_{l,m'})` contributes its scale-0 coefficients to scale `j+n+l`.
/// Accurate when the fixed `τ` rule resolves every pair, i.e. for small shifts.
pub fn product_gmra_tables(
    f_exp: &GmraExpansion<f64>,
    g_exp: &GmraExpansion<f64>,
    tables: &BasisProductTables,
    params: &GmraParams<f64>,
) -> Result<GmraExpansion<f64>> {
    if (tables.alpha - params.alpha).abs() > 0.0 {
        return Err(GmraError::Parameter("tables built for a different alpha".into()));
    }
    let mut f: Vec<(i32, i64, f64)> = f_exp.coefficients().collect();
    let mut g: Vec<(i32, i64, f64)> = g_exp.coefficients().collect();
    f.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    g.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    let fmax = f.first().map_or(0.0, |c| c.2.abs());
    let gmax = g.first().map_or(0.0, |c| c.2.abs());
    let floor = BAND_CUTOFF * fmax * gmax;
    let mut e = GmraExpansion::new(*params);
    for &(n, m, wf) in &f {
        for &(l, m2, wg) in &g {
            if (wf * wg).abs() < floor {
                break;
            }
            let (m, m2) = if m.abs() >= m2.abs() { (m, m2) } else { (m2, m) };
            for j in tables.j_range.0..=tables.j_range.1 {
                let out = j + n + l;
                if !params.contains_scale(out) {
                    continue;
                }
                for k in tables.k_range.0..=tables.k_range.1 {
                    let c = tables.pair_coefficient(j, k, m, m2, wf, wg)?;
                    if c != 0.0 {
                        e.add(out, k, c)?;
                    }
                }
            }
        }
    }
    finish(e, f_exp.heavy_tailed || g_exp.heavy_tailed, "table product".into())
}

/// `e^{c t + d} · body(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedExpansion {
    pub tilt_c: f64,
    pub tilt_d: f64,
    pub body: GmraExpansion<f64>,
}

impl TiltedExpansion {
    pub fn eval(&self, t: f64) -> f64 {
        let b = self.body.eval(t);
        if b == 0.0 {
            return 0.0;
        }
        (self.tilt_c * t + self.tilt_d).exp() * b
    }
}

/// Density of `XY` for jointly normal `(X, Y)` with correlation `rho`.
///
/// The body is the product density of two independent normals with centres
/// `μ_x − ρσ_x μ_y/σ_y`, `μ_y − ρσ_y μ_x/σ_x` and standard deviations
/// `σ√(1−ρ²)`; the tilt carries everything else, so `tilt_d` is zero at `ρ = 0`.
pub fn product_bivariate_normal(
    mu_x: f64,
    mu_y: f64,
    sigma_x: f64,
    sigma_y: f64,
    rho: f64,
    params: &GmraParams<f64>,
) -> Result<TiltedExpansion> {
    if !(rho.abs() < 1.0) {
        return Err(GmraError::Parameter(format!("correlation {rho} outside (-1, 1)")));
    }
    if !(sigma_x > 0.0 && sigma_y > 0.0) {
        return Err(GmraError::Parameter("standard deviations must be positive".into()));
    }
    let (qx, qy) = (mu_x / sigma_x, mu_y / sigma_y);
    let s = 1.0 - rho * rho;
    let x = DistributionSpec::Normal { mu: mu_x - rho * sigma_x * qy, sigma: sigma_x * s.sqrt() };
    let y = DistributionSpec::Normal { mu: mu_y - rho * sigma_y * qx, sigma: sigma_y * s.sqrt() };
    let body = product(&x, &y, params)?;
    let tilt_c = rho / (s * sigma_x * sigma_y);
    let tilt_d = -rho * qx * qy / s + rho * rho / (2.0 * s) * (qx * qx + qy * qy) + 0.5 * s.ln();
    Ok(TiltedExpansion { tilt_c, tilt_d, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmra_core::project_gaussian;
    use crate::quadrature::adaptive_integrate;
    use crate::special_fn::bessel_k0;

    fn params() -> GmraParams<f64> {
        GmraParams::new(0.25, -40, 100).unwrap()
    }

    fn normal(mu: f64, sigma: f64) -> DistributionSpec {
        DistributionSpec::Normal { mu, sigma }
    }

    #[test]
    fn pdf_and_tails() {
        let specs = [
            normal(0.5, 2.0),
            DistributionSpec::Laplace { mu: 3.0, b: 1.0 },
            DistributionSpec::Gumbel { mu: 2.0, sigma: 3.0 },
            DistributionSpec::Cauchy { x0: -2.0, gamma: 1.0 },
        ];
        let cfg = AdaptiveConfig::default();
        for s in &specs {
            let (a, b) = (-3.0, 4.0);
            let inner = adaptive_integrate(|x| s.pdf(x), a, b, &cfg).unwrap();
            let total = inner + s.lower_tail(a) + s.upper_tail(b);
            assert!((total - 1.0).abs() < 1e-13, "{s}: {total}");
        }
        assert!(DistributionSpec::Laplace { mu: 0.0, b: -1.0 }.validate().is_err());
    }

    #[test]
    fn ordering_examples() {
        let (a, b) = (normal(6.0, 1.0), normal(2.0, 1.0));
        assert_eq!(order_factors(&b, &a).0, &a);
        assert_eq!(order_factors(&a, &b).0, &a);
        let (c, d) = (normal(0.0, 1.0), normal(0.0, 2.0));
        assert_eq!(order_factors(&c, &d).0, &c);
        assert_eq!(order_factors(&d, &c).0, &d);
        let cauchy = DistributionSpec::Cauchy { x0: 0.0, gamma: 1.0 };
        assert_eq!(order_factors(&a, &cauchy).0, &cauchy);
        // basis functions φ_{0,3} and φ_{0,1}: ratios are k²α
        let p = params();
        let e3 = project_gaussian(0.25, 3.0, &p).unwrap().to_expansion(p).unwrap();
        let e1 = project_gaussian(0.25, 1.0, &p).unwrap().to_expansion(p).unwrap();
        let (x3, x1) = (DistributionSpec::Expansion(e3.clone()), DistributionSpec::Expansion(e1));
        assert_eq!(order_factors(&x1, &x3).0, &x3);
    }

    #[test]
    fn standard_normal_product_is_k0() {
        let e = product(&normal(0.0, 1.0), &normal(0.0, 1.0), &params()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..60 {
            let t = 10f64.powf(-27.0 + 27.0 * i as f64 / 59.0);
            let want = bessel_k0(t).unwrap() / PI;
            worst = worst.max((e.eval(t) - want).abs() / want);
        }
        assert!(worst <= 5e-13, "{worst:e}");
        assert!((stats::moment(&e, 0).unwrap() - 1.0).abs() < 1e-12);
        for t in [1e-9, 0.3, 2.0, 7.0] {
            let (a, b) = (e.eval(t), e.eval(-t));
            assert!((a - b).abs() <= 1e-13 * a, "{t}");
        }
    }

    #[test]
    fn shifted_normals_mass_and_mean() {
        let e = product(&normal(2.0, 1.0), &normal(1.0, 1.0), &params()).unwrap();
        let m = stats::moments(&e, 2).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12, "{}", m[0]);
        assert!((m[1] - 2.0).abs() < 1e-10, "{}", m[1]);
        assert!((m[2] - m[1] * m[1] - 6.0).abs() < 1e-9, "{}", m[2] - m[1] * m[1]);
    }

    #[test]
    fn parses_named_families() {
        let d: DistributionSpec = " gumbel( 2 , 3 ) ".parse().unwrap();
        assert_eq!(d, DistributionSpec::Gumbel { mu: 2.0, sigma: 3.0 });
        assert_eq!("cauchy(-2,1)".parse::<DistributionSpec>().unwrap().to_string(), "cauchy(-2,1)");
        for bad in ["normal(0)", "normal(0,1,2)", "normal(0,-1)", "weibull(1,1)", "normal 0,1", "normal(a,1)"] {
            assert!(bad.parse::<DistributionSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn cauchy_times_normal_mass() {
        let c = DistributionSpec::Cauchy { x0: -2.0, gamma: 1.0 };
        let e = product(&c, &normal(1.5, 1.0), &params()).unwrap();
        assert!(e.heavy_tailed);
        let m0 = stats::moment(&e, 0).unwrap();
        // the coarsest scale sees |x| up to 2^{2−j_min}/(√(2α)σ_y); the Cauchy
        // mass beyond that is all that is missing
        let p = params();
        let x_max = (2.0 - p.j_min as f64).exp2() / (2.0 * p.alpha).sqrt();
        let tail = c.lower_tail(-x_max) + c.upper_tail(x_max);
        assert!((m0 - (1.0 - tail)).abs() <= 1e-14, "{:e} {:e}", m0 - 1.0, tail);
        assert!(stats::moment(&e, 1).is_err());
    }

    #[test]
    fn order_invariance_of_values() {
        let p = params();
        let (a, b) = (normal(6.0, 1.0), normal(2.0, 1.0));
        let e1 = product_with_normal(&a, 2.0, 1.0, &p).unwrap();
        let e2 = product_with_normal(&b, 6.0, 1.0, &p).unwrap();
        for i in 0..1000 {
            let t = -10.0 + 60.0 * i as f64 / 999.0;
            let (u, v) = (e1.eval(t), e2.eval(t));
            assert!((u - v).abs() <= 10.0 * p.epsilon * u.abs().max(v.abs()), "{t}: {u} {v}");
        }
        // the wider factor decomposed costs fewer coefficients
        assert!(e1.len() < e2.len(), "{} {}", e1.len(), e2.len());
    }

    #[test]
    fn global_drop_threshold_thins_fine_scales() {
        let mut p = params();
        p.drop_threshold = 1e-17;
        let (a, b) = (normal(6.0, 1.0), normal(2.0, 1.0));
        let e1 = product_with_normal(&a, 2.0, 1.0, &p).unwrap();
        let e2 = product_with_normal(&b, 6.0, 1.0, &p).unwrap();
        assert!(e1.counts_per_scale().len() < e2.counts_per_scale().len());
        for i in 0..100 {
            let t = -10.0 + 60.0 * i as f64 / 99.0;
            let (u, v) = (e1.eval(t), e2.eval(t));
            assert!((u - v).abs() <= 10.0 * p.epsilon * u.abs().max(v.abs()), "{t}: {u} {v}");
        }
    }

    #[test]
    fn tables_basic_properties() {
        let p = params();
        let t = build_basis_tables(&p, 16, (0, 4), (-3, 3), (-3, 3), (-30, 30)).unwrap();
        for i in 0..t.nodes() {
            assert!(t.eta[i] > 0.0);
            for k in -30..=30 {
                assert_eq!(t.v(true, k, 2, i).unwrap(), t.v(false, -k, 2, i).unwrap());
            }
        }
        assert!(matches!(t.pair_integral(0, 0, 9, 0), Err(GmraError::TableRange { m: 9, .. })));
        // U^- peaks where m = 2^{2−j−τ}: j = 0, τ with 2^{2−τ} = 3
        let tau = 2.0 - 3f64.log2();
        let x = (2.0 - tau).exp2();
        assert!(((-p.alpha * (x - 3.0) * (x - 3.0)).exp() - 1.0).abs() < 1e-15);
        let far = build_basis_tables(&p, 4, (0, 0), (0, 0), (0, 0), (80, 80)).unwrap();
        // |2^{τ−2}·80 − 0| ≥ 20 so every entry is below the cutoff
        for i in 0..4 {
            assert_eq!(far.v(false, 80, 0, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn table_pair_matches_adaptive_integral() {
        let p = params();
        let t = build_basis_tables(&p, 64, (0, 2), (-1, 1), (-2, 2), (-8, 8)).unwrap();
        let cfg = AdaptiveConfig::default();
        for &(j, k, m, m2) in &[(0, 1, 1, 0), (-1, 3, 2, 1), (1, -2, 1, -1), (2, 0, 0, 0)] {
            let direct = adaptive_integrate(
                |tau: f64| {
                    let r = (2.0 * tau - 4.0).exp2();
                    let x = (2.0 - j as f64 - tau).exp2();
                    let a = p.alpha / (1.0 - r);
                    let v = (tau - 2.0).exp2() * k as f64;
                    let um = (-p.alpha * (x - m as f64).powi(2)).exp();
                    let up = (-p.alpha * (x + m as f64).powi(2)).exp();
                    let vm = (-a * (v - m2 as f64).powi(2)).exp();
                    let vp = (-a * (v + m2 as f64).powi(2)).exp();
                    (um * vm + up * vp) / (1.0 - r).sqrt()
                },
                0.0,
                1.0,
                &cfg,
            )
            .unwrap();
            let tab = t.pair_integral(j, k, m, m2).unwrap();
            assert!((tab - direct).abs() < 1e-13, "{j} {k} {m} {m2}: {tab} {direct}");
        }
    }

    fn basis_expansion(p: GmraParams<f64>, j: i32, k: i64, w: f64) -> GmraExpansion<f64> {
        let mut e = GmraExpansion::new(p);
        e.add(j, k, w).unwrap();
        e
    }

    #[test]
    fn single_basis_pair_mass() {
        let p = GmraParams::new(0.25, -10, 60).unwrap();
        let f = basis_expansion(p, 0, 0, 1.0);
        let g = basis_expansion(p, 0, 0, 1.0);
        // each φ_{0,0} integrates to 1
        let e = product_gmra(&f, &g, &p, &AdaptiveConfig::default()).unwrap();
        let m0 = stats::moment(&e, 0).unwrap();
        assert!((m0 - 1.0).abs() < 1e-10, "{m0}");
        let tables = build_basis_tables(&p, 64, (0, 0), (0, 0), (-10, 60), (-60, 60)).unwrap();
        let et = product_gmra_tables(&f, &g, &tables, &p).unwrap();
        let mt = stats::moment(&et, 0).unwrap();
        assert!((mt - 1.0).abs() < 1e-10, "{mt}");
    }

    #[test]
    fn table_and_adaptive_products_agree() {
        let p = GmraParams::new(0.25, -10, 60).unwrap();
        let f = basis_expansion(p, 1, 2, 0.7);
        let g = basis_expansion(p, 0, -1, 1.3);
        let ea = product_with_expansion(&DistributionSpec::Expansion(f.clone()), &g, &p, &AdaptiveConfig::default()).unwrap();
        let tables = build_basis_tables(&p, 64, (-2, 2), (-2, 2), (-11, 60), (-60, 60)).unwrap();
        let et = product_gmra_tables(&f, &g, &tables, &p).unwrap();
        for i in 0..200 {
            let t = -4.0 + 8.0 * i as f64 / 199.0 + 1e-3;
            let (a, b) = (ea.eval(t), et.eval(t));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "{t}: {a} {b}");
        }
    }

    #[test]
    fn expansion_pipeline_matches_normal_pipeline() {
        let p = params();
        let y = normal(1.0, 0.8);
        let x = normal(2.0, 1.0);
        let direct = product_with_normal(&x, 1.0, 0.8, &p).unwrap();
        let ye = y.to_expansion(p).unwrap();
        let via = product_with_expansion(&x, &ye, &p, &AdaptiveConfig::default()).unwrap();
        for i in 0..1000 {
            let t = -6.0 + 16.0 * i as f64 / 999.0;
            let (a, b) = (direct.eval(t), via.eval(t));
            assert!((a - b).abs() <= 10.0 * p.epsilon * a.abs() + 1e-18, "{t}: {a} {b}");
        }
    }

    #[test]
    fn bivariate_reduces_at_zero_correlation() {
        let p = params();
        let z = product_bivariate_normal(1.0, -0.5, 1.2, 0.7, 0.0, &p).unwrap();
        assert_eq!(z.tilt_c, 0.0);
        assert_eq!(z.tilt_d, 0.0);
        let e = product(&normal(1.0, 1.2), &normal(-0.5, 0.7), &p).unwrap();
        for i in 0..200 {
            let t = -5.0 + 10.0 * i as f64 / 199.0 + 1e-4;
            assert!((z.eval(t) - e.eval(t)).abs() <= 1e-12 * e.eval(t).max(1e-300));
        }
        assert!(product_bivariate_normal(0.0, 0.0, 1.0, 1.0, 1.0, &p).is_err());
    }

    #[test]
    fn bivariate_correlated_moments() {
        let p = params();
        let z = product_bivariate_normal(0.0, 0.0, 1.0, 1.0, 0.5, &p).unwrap();
        let cfg = AdaptiveConfig::default();
        let mass = stats::expectation(|_| 1.0, &z, &cfg).unwrap();
        let mean = stats::expectation(|t| t, &z, &cfg).unwrap();
        assert!((mass - 1.0).abs() < 1e-8, "{mass}");
        assert!((mean - 0.5).abs() < 1e-8, "{mean}");
    }
}
