use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix outside tubular neighbourhood: singular values in [{smin:.4}, {smax:.4}], allowed [1-{delta}, 1+{delta}]")]
    OutsideTubularNeighbourhood { smin: f64, smax: f64, delta: f64 },

    #[error("clustering condition violated: statistic {statistic:.4e} >= {bound:.4e}{}", match .projection { Some((a, b)) => format!(" (linear mean singular values {a:.4}..{b:.4})"), None => String::new() })]
    ClusteringViolated { statistic: f64, bound: f64, projection: Option<(f64, f64)> },

    #[error("logarithm undefined: eigenvalue on the branch cut (-1)")]
    LogBranchCut,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("path passes within {rho:.3e} of the singular set (clearance {clearance:.3e})")]
    PathHitsSingularSet { rho: f64, clearance: f64 },

    #[error("triangle passes within {rho:.3e} of the singular set (clearance {clearance:.3e})")]
    TriangleHitsSingularSet { rho: f64, clearance: f64 },

    #[error("no convergence after {steps} steps")]
    NoConvergence { steps: usize },

    #[error("sampling exhausted after {draws} draws")]
    SamplingExhausted { draws: usize },

    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("cutoff weight mass {mass:.3e} below required {required:.3e} at node {node}")]
    WeightMassTooSmall { mass: f64, required: f64, node: usize },

    #[error("{dropped} of {total} nodes dropped for clustering violations (limit {limit:.1}%)")]
    TooManyDrops { dropped: usize, total: usize, limit: f64 },

    #[error("cutoff leaves {count} nodes outside the gauge mask uncovered")]
    MaskMismatch { count: usize },

    #[error("iteration diverged at step {iteration} (residual {residual:.3e})")]
    IterationDiverged { iteration: usize, residual: f64 },

    #[error("constraint violated: {what} = {value:.3e}")]
    ConstraintViolated { what: String, value: f64 },

    #[error("unsupported generator spec: {0}")]
    UnsupportedSpec(String),

    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or missing files).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::OutsideTubularNeighbourhood { .. }
                | Error::ClusteringViolated { .. }
                | Error::LogBranchCut
                | Error::PathHitsSingularSet { .. }
                | Error::TriangleHitsSingularSet { .. }
                | Error::NoConvergence { .. }
                | Error::SamplingExhausted { .. }
                | Error::WeightMassTooSmall { .. }
                | Error::TooManyDrops { .. }
                | Error::MaskMismatch { .. }
                | Error::IterationDiverged { .. }
                | Error::ConstraintViolated { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
