//! Seeded Monte-Carlo histograms of `XY` for comparison with an expansion.

use anyhow::{bail, Result};
use gmra::product::DistributionSpec;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Gumbel, Normal};
use rayon::prelude::*;

/// Samples per independent random stream.
const CHUNK: u64 = 1 << 20;

enum Sampler {
    Normal(Normal<f64>),
    Laplace { mu: f64, b: f64 },
    Gumbel(Gumbel<f64>),
    Cauchy(Cauchy<f64>),
    Mixture { pick: WeightedIndex<f64>, parts: Vec<Normal<f64>> },
}

impl Sampler {
    fn new(spec: &DistributionSpec) -> Result<Self> {
        Ok(match spec {
            DistributionSpec::Normal { mu, sigma } => Sampler::Normal(Normal::new(*mu, *sigma)?),
            DistributionSpec::Laplace { mu, b } => Sampler::Laplace { mu: *mu, b: *b },
            DistributionSpec::Gumbel { mu, sigma } => Sampler::Gumbel(Gumbel::new(*mu, *sigma)?),
            DistributionSpec::Cauchy { x0, gamma } => Sampler::Cauchy(Cauchy::new(*x0, *gamma)?),
            DistributionSpec::Mixture(m) => {
                if m.terms.iter().any(|t| t.c < 0.0) {
                    bail!("cannot sample {spec}: it has negative weights");
                }
                let mass = m.terms.iter().map(|t| t.c * (std::f64::consts::PI / t.beta).sqrt());
                let pick = WeightedIndex::new(mass)?;
                let parts = m
                    .terms
                    .iter()
                    .map(|t| Normal::new(t.s, (0.5 / t.beta).sqrt()))
                    .collect::<Result<_, _>>()?;
                Sampler::Mixture { pick, parts }
            }
            DistributionSpec::Expansion(_) => bail!("cannot sample {spec}: no sampler for stored expansions"),
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Laplace { mu, b } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                mu - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Sampler::Gumbel(d) => d.sample(rng),
            Sampler::Cauchy(d) => d.sample(rng),
            Sampler::Mixture { pick, parts } => parts[pick.sample(rng)].sample(rng),
        }
    }
}

/// Bin counts of `n` draws of `XY` over `bins` equal bins of `[a, b]`.
///
/// Draw `i` comes from stream `i / 2^20` of a ChaCha8 generator keyed by
/// `seed`, so the counts do not depend on the number of threads.
pub fn histogram(
    x: &DistributionSpec,
    y: &DistributionSpec,
    n: u64,
    bins: usize,
    range: (f64, f64),
    seed: u64,
) -> Result<Vec<u64>> {
    if n == 0 {
        bail!("need at least one sample");
    }
    if bins == 0 {
        bail!("need at least one bin");
    }
    let (a, b) = range;
    if !(a < b) {
        bail!("empty histogram range [{a}, {b}]");
    }
    let (sx, sy) = (Sampler::new(x)?, Sampler::new(y)?);
    let h = (b - a) / bins as f64;
    let chunks = n.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let mut counts = vec![0u64; bins];
            let len = CHUNK.min(n - c * CHUNK);
            for _ in 0..len {
                let z = sx.draw(&mut rng) * sy.draw(&mut rng);
                if z >= a && z < b {
                    let i = (((z - a) / h) as usize).min(bins - 1);
                    counts[i] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; bins],
            |mut acc, c| {
                acc.iter_mut().zip(&c).for_each(|(s, v)| *s += v);
                acc
            },
        );
    Ok(counts)
}
