use thiserror::Error;

/// Errors produced by the model, oracle, simulator and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("{0} is undefined (zero denominator)")]
    Undefined(&'static str),

    #[error("truncation at n_max = {n_max} leaves tail mass {tail:e} (bound {bound:e}); raise n_max")]
    Truncation { n_max: usize, tail: f64, bound: f64 },

    #[error("negative storage time {0:e} s")]
    NegativeStorage(f64),

    #[error("no trial count in 1..={n_limit} satisfies g2 <= {g2_max}")]
    Infeasible { g2_max: f64, n_limit: u32 },

    #[error("fit did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("degenerate fit input: {0}")]
    Degenerate(&'static str),

    #[error("malformed record stream: {0}")]
    Malformed(String),

    #[error("record needs {needed} bytes, over the {budget}-byte memory budget; stream it to a file instead")]
    MemoryBudget { needed: usize, budget: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    ok: bool,
    domain: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain,
        })
    }
}
