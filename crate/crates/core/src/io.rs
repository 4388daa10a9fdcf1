//! Text storage for expansions and mixtures.
//!
//! Both are JSON objects whose real numbers are decimal strings with 17
//! significant digits, which round-trip every `f64` exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gmra_core::{GmraExpansion, GmraParams};
use crate::mixture::{GaussianMixture, MixtureTerm};
use crate::product::DistributionSpec;
use crate::{GmraError, Result};

/// `x` with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| GmraError::Format(format!("number {s:?}: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct ExpansionDoc {
    alpha: String,
    epsilon: String,
    j_min: i32,
    j_max: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    drop_threshold: Option<String>,
    #[serde(default)]
    heavy_tailed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<String>,
    coeffs: Vec<(i32, i64, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MixtureDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    terms: Vec<(String, String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Doc {
    Expansion(ExpansionDoc),
    Mixture(MixtureDoc),
}

/// Either kind of stored density.
#[derive(Debug, Clone, PartialEq)]
pub enum Stored {
    Expansion(GmraExpansion<f64>),
    Mixture(GaussianMixture),
}

fn expansion_doc(e: &GmraExpansion<f64>) -> ExpansionDoc {
    let p = &e.params;
    ExpansionDoc {
        alpha: fmt_real(p.alpha),
        epsilon: fmt_real(p.epsilon),
        j_min: p.j_min,
        j_max: p.j_max,
        drop_threshold: (p.drop_threshold != 0.0).then(|| fmt_real(p.drop_threshold)),
        heavy_tailed: e.heavy_tailed,
        metadata: e.metadata.clone(),
        coeffs: e.coefficients().filter(|c| c.2 != 0.0).map(|(j, k, w)| (j, k, fmt_real(w))).collect(),
    }
}

fn from_expansion_doc(d: ExpansionDoc) -> Result<GmraExpansion<f64>> {
    let mut params = GmraParams::new(parse_real(&d.alpha)?, d.j_min, d.j_max)?;
    let eps = parse_real(&d.epsilon)?;
    if (eps - params.epsilon).abs() > 1e-6 * params.epsilon {
        return Err(GmraError::Format(format!(
            "stored epsilon {eps:e} does not belong to alpha = {}",
            params.alpha
        )));
    }
    if let Some(t) = &d.drop_threshold {
        params.drop_threshold = parse_real(t)?;
    }
    let mut e = GmraExpansion::new(params);
    for (j, k, w) in &d.coeffs {
        e.add(*j, *k, parse_real(w)?)?;
    }
    e.heavy_tailed = d.heavy_tailed;
    e.metadata = d.metadata;
    Ok(e)
}

fn mixture_doc(m: &GaussianMixture) -> MixtureDoc {
    MixtureDoc {
        provenance: m.provenance.clone(),
        terms: m.terms.iter().map(|t| (fmt_real(t.c), fmt_real(t.beta), fmt_real(t.s))).collect(),
    }
}

fn from_mixture_doc(d: MixtureDoc) -> Result<GaussianMixture> {
    let terms = d
        .terms
        .iter()
        .map(|(c, b, s)| Ok(MixtureTerm { c: parse_real(c)?, beta: parse_real(b)?, s: parse_real(s)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut m = GaussianMixture::new(terms)?;
    m.provenance = d.provenance;
    Ok(m)
}

fn to_json(d: &Doc) -> Result<String> {
    serde_json::to_string_pretty(d).map_err(|e| GmraError::Format(e.to_string()))
}

pub fn expansion_to_string(e: &GmraExpansion<f64>) -> Result<String> {
    to_json(&Doc::Expansion(expansion_doc(e)))
}

pub fn mixture_to_string(m: &GaussianMixture) -> Result<String> {
    to_json(&Doc::Mixture(mixture_doc(m)))
}

/// Parses either kind of document.
pub fn stored_from_str(s: &str) -> Result<Stored> {
    let d: Doc = serde_json::from_str(s).map_err(|e| GmraError::Format(e.to_string()))?;
    match d {
        Doc::Expansion(d) => from_expansion_doc(d).map(Stored::Expansion),
        Doc::Mixture(d) => from_mixture_doc(d).map(Stored::Mixture),
    }
}

pub fn expansion_from_str(s: &str) -> Result<GmraExpansion<f64>> {
    match stored_from_str(s)? {
        Stored::Expansion(e) => Ok(e),
        Stored::Mixture(_) => Err(GmraError::Format("expected an expansion, found a mixture".into())),
    }
}

pub fn mixture_from_str(s: &str) -> Result<GaussianMixture> {
    match stored_from_str(s)? {
        Stored::Mixture(m) => Ok(m),
        Stored::Expansion(_) => Err(GmraError::Format("expected a mixture, found an expansion".into())),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| GmraError::Format(format!("{}: {e}", path.display())))
}

fn write(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| GmraError::Format(format!("{}: {e}", path.display())))
}

pub fn read_stored(path: &Path) -> Result<Stored> {
    stored_from_str(&read(path)?)
}

pub fn read_expansion(path: &Path) -> Result<GmraExpansion<f64>> {
    expansion_from_str(&read(path)?)
}

pub fn write_expansion(path: &Path, e: &GmraExpansion<f64>) -> Result<()> {
    write(path, &expansion_to_string(e)?)
}

pub fn read_mixture(path: &Path) -> Result<GaussianMixture> {
    mixture_from_str(&read(path)?)
}

pub fn write_mixture(path: &Path, m: &GaussianMixture) -> Result<()> {
    write(path, &mixture_to_string(m)?)
}

/// A distribution from the command mini-language: a named family such as
/// `normal(0,1)`, or `file:PATH` for a stored expansion or mixture.
pub fn parse_spec(s: &str) -> Result<DistributionSpec> {
    match s.trim().strip_prefix("file:") {
        Some(path) => Ok(match read_stored(Path::new(path))? {
            Stored::Expansion(e) => DistributionSpec::Expansion(e),
            Stored::Mixture(m) => DistributionSpec::Mixture(m),
        }),
        None => s.parse(),
    }
}
