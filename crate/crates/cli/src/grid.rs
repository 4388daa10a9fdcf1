use std::str::FromStr;

use anyhow::{bail, Context};

/// Evaluation points: `lin:A,B,N` (N points from A to B) or `log:X0,X1,N`
/// (t = 10^x for N values of x from X0 to X1).
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Linear { a: f64, b: f64, n: usize },
    Log { x0: f64, x1: f64, n: usize },
}

impl FromStr for Grid {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let (kind, rest) = s.split_once(':').with_context(|| format!("grid {s:?}: expected lin:A,B,N or log:X0,X1,N"))?;
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        let [a, b, n] = parts.as_slice() else {
            bail!("grid {s:?}: expected three comma-separated values");
        };
        let a: f64 = a.parse().with_context(|| format!("grid {s:?}: bad start"))?;
        let b: f64 = b.parse().with_context(|| format!("grid {s:?}: bad end"))?;
        let n: usize = n.parse().with_context(|| format!("grid {s:?}: bad point count"))?;
        if !a.is_finite() || !b.is_finite() {
            bail!("grid {s:?}: endpoints must be finite");
        }
        match kind.trim() {
            "lin" => Ok(Grid::Linear { a, b, n }),
            "log" => Ok(Grid::Log { x0: a, x1: b, n }),
            other => bail!("grid {s:?}: unknown kind {other:?}"),
        }
    }
}

fn spaced(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 })
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match *self {
            Grid::Linear { a, b, n } => spaced(a, b, n).collect(),
            Grid::Log { x0, x1, n } => spaced(x0, x1, n).map(|x| 10f64.powf(x)).collect(),
        }
    }
}
