use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty depot set")]
    EmptyDepotSet,

    #[error("vertex {vertex} out of range for {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("depot set has {size} members, budget is {budget}")]
    BudgetExceeded { size: usize, budget: usize },

    #[error("uniform instance: no secondary metric c")]
    UniformInstance,

    #[error("instance has no vehicle capacity Q")]
    MissingCapacity,

    #[error("unsplit infeasible: vertex {vertex} has demand {demand} > capacity {capacity}")]
    UnsplitInfeasible {
        vertex: usize,
        demand: f64,
        capacity: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size guard exceeded: {count} candidates > limit {limit}")]
    Guard { count: u128, limit: u128 },

    #[error("routing bound violated: cost {cost} > 2·Flow + 2·Tree = {bound}")]
    BoundViolated { cost: f64, bound: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported EDGE_WEIGHT_TYPE {0}")]
    UnsupportedEdgeWeightType(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
