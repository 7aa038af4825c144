use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("ambiguous projection: candidates at s={s_a} and s={s_b}")]
    AmbiguousProjection { s_a: f64, s_b: f64 },
    #[error("non-convex quadratic program: minimum eigenvalue {min_eig}")]
    NonConvex { min_eig: f64 },
    #[error("every lattice path is blocked")]
    BlockedPath,
    #[error("no finite-cost endpoint on the ST horizon")]
    InfeasibleHorizon,
    #[error("corridor collapsed at station {station}")]
    CorridorCollapse { station: usize },
    #[error("scenario identity mismatch")]
    ScenarioMismatch,
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
