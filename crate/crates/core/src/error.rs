use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GmraError {
    #[error("{what}: argument {value} outside the domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("scale {required} outside window [{j_min}, {j_max}]")]
    ScaleOverflow { required: i32, j_min: i32, j_max: i32 },

    #[error("integrand not finite at x = {x}")]
    NonFinite { x: f64 },

    #[error("adaptive integration did not converge on [{a}, {b}] at depth {depth}")]
    NonConvergence { a: f64, b: f64, depth: usize },

    #[error("coefficient (j = {j}, k = {k}): {source}")]
    Coefficient {
        j: i32,
        k: i64,
        #[source]
        source: Box<GmraError>,
    },

    #[error("inverse transform left an imaginary residue of {0:e}")]
    Conditioning(f64),

    #[error("interval misses {0:e} of the density mass")]
    Coverage(f64),

    #[error("basis tables do not cover m = {m}, m' = {m2}, j = {j}, k = {k}")]
    TableRange { m: i64, m2: i64, j: i32, k: i64 },

    #[error("moment of order {0} diverges for a heavy-tailed expansion")]
    MomentDivergence(u32),

    #[error("radicand {0:e} is negative beyond rounding")]
    NumericalConsistency(f64),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, GmraError>;
