mod grid;
mod mc;

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gmra::filters::{filter_m0, filter_m00, filter_m0_exact, filter_m_exact, filter_ma};
use gmra::io::{self as gio, Stored};
use gmra::mixture::{fit_default, fit_sampled_density};
use gmra::product::{product_using, DistributionSpec};
use gmra::quadrature::AdaptiveConfig;
use gmra::special_fn::bessel_k0;
use gmra::{stats, Expansion, Params};

use crate::grid::Grid;

#[derive(Parser)]
#[command(name = "gmra", version, about = "Product densities of random variables in a Gaussian multiresolution basis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BasisArgs {
    /// Exponent of the scaling function, in (0, 0.5].
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    /// Coarsest scale.
    #[arg(long, default_value_t = -40, allow_negative_numbers = true)]
    jmin: i32,
    /// Finest scale.
    #[arg(long, default_value_t = 100, allow_negative_numbers = true)]
    jmax: i32,
    /// Drop coefficients below this fraction of the largest one.
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
}

impl BasisArgs {
    fn params(&self) -> Result<Params> {
        Ok(Params::new(self.alpha, self.jmin, self.jmax)?.with_threshold(self.drop))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Density of the product of two independent random variables.
    Product {
        /// First factor, e.g. "normal(0,1)" or "file:fit.json".
        x: String,
        /// Second factor.
        y: String,
        #[command(flatten)]
        basis: BasisArgs,
        /// Where to write the expansion.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gaussian mixture fit of a distribution.
    Fit {
        spec: String,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        /// Fitting interval "A,B"; defaults to the family's standard interval.
        #[arg(long, allow_hyphen_values = true)]
        interval: Option<String>,
        /// Samples on the interval (factors 2, 3 and 5 only).
        #[arg(long, default_value_t = 300)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored density (or its CDF) on a grid.
    Eval {
        file: PathBuf,
        /// lin:A,B,N or log:X0,X1,N (t = 10^x).
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        cdf: bool,
        /// Extra columns against a known density; only "k0" (K₀(|t|)/π).
        #[arg(long)]
        reference: Option<String>,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raw moments, mean and variance of a stored expansion.
    Moments {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: u32,
    },
    /// Compare a product density with a seeded Monte-Carlo histogram.
    McCompare {
        x: String,
        y: String,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 1000)]
        bins: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Histogram range "A,B"; defaults to the 0.1% and 99.9% quantiles.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the two-scale filters over one period.
    FiltersCheck {
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    configure_threads()?;
    match Cli::parse().command {
        Command::Product { x, y, basis, out } => cmd_product(&x, &y, &basis, out.as_deref()),
        Command::Fit { spec, alpha, interval, points, out } => cmd_fit(&spec, alpha, interval.as_deref(), points, &out),
        Command::Eval { file, grid, cdf, reference, out } => cmd_eval(&file, &grid, cdf, reference.as_deref(), out.as_deref()),
        Command::Moments { file, order } => cmd_moments(&file, order),
        Command::McCompare { x, y, samples, bins, seed, range, basis, out } => {
            cmd_mc_compare(&x, &y, samples, bins, seed, range.as_deref(), &basis, out.as_deref())
        }
        Command::FiltersCheck { alpha, points, out } => cmd_filters(alpha, points, out.as_deref()),
    }
}

/// `GMRA_THREADS` caps the worker pool; 0 or unset leaves it automatic.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("GMRA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("GMRA_THREADS={v:?} is not a count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').with_context(|| format!("{what} {s:?}: expected A,B"))?;
    let a: f64 = a.trim().parse().with_context(|| format!("{what} {s:?}"))?;
    let b: f64 = b.trim().parse().with_context(|| format!("{what} {s:?}"))?;
    if !(a < b) {
        bail!("{what} {s:?}: need A < B");
    }
    Ok((a, b))
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn compute_product(x: &str, y: &str, basis: &BasisArgs) -> Result<Expansion> {
    let (fx, fy) = (gio::parse_spec(x)?, gio::parse_spec(y)?);
    Ok(product_using(&fx, &fy, &basis.params()?, &AdaptiveConfig::default())?)
}

fn cmd_product(x: &str, y: &str, basis: &BasisArgs, out: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let e = compute_product(x, y, basis)?;
    let elapsed = start.elapsed().as_secs_f64();
    println!("epsilon = {:e}", e.params.epsilon);
    for (j, n) in e.counts_per_scale() {
        println!("scale {j}: {n} coefficients");
    }
    println!("coefficients = {}", e.len());
    println!("M0 = {}", num(stats::moment(&e, 0)?));
    if !e.heavy_tailed {
        let m = stats::moments(&e, 2)?;
        println!("M1 = {}", num(m[1]));
        println!("M2 = {}", num(m[2]));
    }
    println!("time = {elapsed:.3} s");
    if let Some(p) = out {
        gio::write_expansion(p, &e)?;
    }
    Ok(())
}

fn cmd_fit(spec: &str, alpha: f64, interval: Option<&str>, points: usize, out: &Path) -> Result<()> {
    let d = gio::parse_spec(spec)?;
    let m = match interval {
        Some(s) => {
            let iv = parse_pair(s, "interval")?;
            fit_sampled_density(|x| d.pdf(x), iv, points, alpha)?
        }
        None => fit_default(&d, alpha)?,
    };
    let (a, b) = match interval {
        Some(s) => parse_pair(s, "interval")?,
        None => d.support().context("no interval to check the fit on")?,
    };
    let worst = (0..=2000)
        .map(|i| a + (b - a) * i as f64 / 2000.0)
        .map(|t| (m.eval(t) - d.pdf(t)).abs())
        .fold(0.0, f64::max);
    println!("terms = {}", m.len());
    println!("mass = {}", num(m.mass()));
    println!("max abs error on [{a}, {b}] = {worst:e}");
    gio::write_mixture(out, &m)?;
    Ok(())
}

enum Curve {
    Expansion(Expansion),
    Mixture(gmra::Mixture),
}

impl Curve {
    fn load(path: &Path) -> Result<Self> {
        Ok(match gio::read_stored(path)? {
            Stored::Expansion(e) => Curve::Expansion(e),
            Stored::Mixture(m) => Curve::Mixture(m),
        })
    }

    fn pdf(&self, t: f64) -> f64 {
        match self {
            Curve::Expansion(e) => e.eval(t),
            Curve::Mixture(m) => m.eval(t),
        }
    }

    fn cdf(&self, t: f64) -> f64 {
        match self {
            Curve::Expansion(e) => stats::cdf(e, t),
            Curve::Mixture(m) => m.cdf(t),
        }
    }
}

fn cmd_eval(file: &Path, grid: &str, cdf: bool, reference: Option<&str>, out: Option<&Path>) -> Result<()> {
    let grid: Grid = grid.parse()?;
    if let Some(r) = reference {
        if r != "k0" {
            bail!("unknown reference {r:?}; only k0 is available");
        }
        if cdf {
            bail!("--reference compares densities and cannot be combined with --cdf");
        }
    }
    let curve = Curve::load(file)?;
    let mut w = csv_writer(out)?;
    let mut header = vec!["t", if cdf { "cdf" } else { "pdf" }];
    if reference.is_some() {
        header.extend(["reference", "rel_error"]);
    }
    w.write_record(&header)?;
    for t in grid.points() {
        let v = if cdf { curve.cdf(t) } else { curve.pdf(t) };
        let mut row = vec![num(t), num(v)];
        if reference.is_some() {
            let r = bessel_k0(t.abs())? / std::f64::consts::PI;
            row.push(num(r));
            row.push(num((v - r).abs() / r));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_moments(file: &Path, order: u32) -> Result<()> {
    let e = gio::read_expansion(file)?;
    println!("M0 = {}", num(stats::moment(&e, 0)?));
    let m = stats::moments(&e, order)?;
    for (n, v) in m.iter().enumerate().skip(1) {
        println!("M{n} = {}", num(*v));
    }
    if order >= 2 {
        let mean = m[1] / m[0];
        println!("mean = {}", num(mean));
        println!("variance = {}", num(m[2] / m[0] - mean * mean));
    }
    Ok(())
}

/// Smallest `t` with `cdf(t) ≥ q`, by bisection inside the support.
fn quantile(e: &Expansion, q: f64) -> Result<f64> {
    let (mut a, mut b) = e.support().context("empty expansion")?;
    let total = stats::moment(e, 0)?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if stats::cdf(e, m) < q * total {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

#[allow(clippy::too_many_arguments)]
fn cmd_mc_compare(
    x: &str,
    y: &str,
    samples: u64,
    bins: usize,
    seed: u64,
    range: Option<&str>,
    basis: &BasisArgs,
    out: Option<&Path>,
) -> Result<()> {
    if samples == 0 {
        bail!("--samples must be positive");
    }
    let (fx, fy) = (gio::parse_spec(x)?, gio::parse_spec(y)?);
    if matches!(fx, DistributionSpec::Expansion(_)) || matches!(fy, DistributionSpec::Expansion(_)) {
        bail!("Monte-Carlo needs sampleable factors, not stored expansions");
    }
    let e = product_using(&fx, &fy, &basis.params()?, &AdaptiveConfig::default())?;
    let (a, b) = match range {
        Some(s) => parse_pair(s, "range")?,
        None => (quantile(&e, 1e-3)?, quantile(&e, 1.0 - 1e-3)?),
    };
    let counts = mc::histogram(&fx, &fy, samples, bins, (a, b), seed)?;
    let h = (b - a) / bins as f64;
    let n = samples as f64;
    let mut w = csv_writer(out)?;
    w.write_record(["center", "mc", "gmra", "diff"])?;
    let (mut worst, mut worst_z) = (0.0f64, 0.0f64);
    let mut lo = stats::cdf(&e, a);
    for (i, &c) in counts.iter().enumerate() {
        let right = a + (i + 1) as f64 * h;
        let hi = stats::cdf(&e, right);
        let p = (hi - lo).max(0.0);
        lo = hi;
        let mc = c as f64 / (n * h);
        let gm = p / h;
        let d = mc - gm;
        worst = worst.max(d.abs());
        let sd = (p * (1.0 - p) / n).sqrt() / h;
        if sd > 0.0 {
            worst_z = worst_z.max(d.abs() / sd);
        }
        w.write_record([num(a + (i as f64 + 0.5) * h), num(mc), num(gm), num(d)])?;
    }
    w.flush()?;
    eprintln!("range = [{a}, {b}], bin width = {h:e}");
    eprintln!("max |mc - gmra| = {worst:e}");
    eprintln!("max deviation in standard errors = {worst_z:.3}");
    eprintln!("relative MC noise ~ 1/sqrt(samples per bin) = {:e}", (bins as f64 / n).sqrt());
    Ok(())
}

fn cmd_filters(alpha: f64, points: usize, out: Option<&Path>) -> Result<()> {
    if points < 2 {
        bail!("--points must be at least 2");
    }
    if alpha < 0.3 {
        eprintln!("note: alpha = {alpha}: the dual filter m00 spans a large dynamic range");
    }
    let mut w = csv_writer(out)?;
    w.write_record(["p", "m0", "ma", "m00", "m0_exact", "m_exact"])?;
    let (mut qmf, mut dual) = (0.0f64, 0.0f64);
    for i in 0..points {
        let p = -0.5 + i as f64 / (points - 1) as f64;
        let row = [
            filter_m0(p, alpha)?,
            filter_ma(p, alpha)?,
            filter_m00(p, alpha)?,
            filter_m0_exact(p, alpha)?,
            filter_m_exact(p, alpha)?,
        ];
        qmf = qmf.max((row[3].powi(2) + filter_m0_exact(p + 0.5, alpha)?.powi(2) - 1.0).abs());
        dual = dual.max((row[0] * row[2] + filter_m0(p + 0.5, alpha)? * filter_m00(p + 0.5, alpha)? - 1.0).abs());
        let mut rec = vec![num(p)];
        rec.extend(row.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    eprintln!("max |M0(p)^2 + M0(p+1/2)^2 - 1| = {qmf:e}");
    eprintln!("max |m0 m00 + shifted - 1| = {dual:e}");
    Ok(())
}
