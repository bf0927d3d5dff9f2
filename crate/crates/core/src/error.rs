use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("invalid network: {0}")]
    Network(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    /// `(V, Gamma)` lies outside the admissible window.
    #[error("(V = {v}, Gamma = {gamma}) outside window: 0 < V <= {v_max}, {gamma_min} <= Gamma <= {gamma_max}")]
    Window {
        v: f64,
        gamma: f64,
        v_max: f64,
        gamma_min: f64,
        gamma_max: f64,
    },

    #[error("utility for node {node}, flow {flow} is not concave on [0, R_max]")]
    NonConcaveUtility { node: usize, flow: usize },

    #[error("solver `{solver}` failed after {iterations} iterations: {detail}")]
    Solver {
        solver: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("invariant violated at slot {slot}: {what}\n{dump}")]
    Invariant {
        slot: u64,
        what: String,
        dump: String,
    },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("config: {0}")]
    Config(String),

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Strips `Run` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            e => e,
        }
    }
}
