use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid resolution {res:?}: {reason}")]
    Resolution { res: [usize; 3], reason: String },

    #[error("invalid material: {0}")]
    Material(String),

    #[error("singular diagonal block at level {level}, vertex {vertex:?}")]
    SingularDiagonal { level: usize, vertex: [usize; 3] },

    #[error("coarsest-level factorization failed ({dofs} unknowns): operator is singular beyond rigid translations")]
    CoarseFactorization { dofs: usize },

    #[error("multigrid did not reach tolerance for load case {load}: relative residual {residual:e} after {cycles} cycles")]
    NotConverged {
        load: usize,
        residual: f64,
        cycles: usize,
    },

    #[error("non-finite residual in load case {load}")]
    Diverged { load: usize },

    #[error("field size mismatch: expected {expected} values, got {got}")]
    FieldSize { expected: usize, got: usize },

    #[error("density out of range: {0}")]
    DensityRange(String),

    #[error("symmetry {sym} requires a cubic grid, got {res:?}")]
    Symmetry { sym: String, res: [usize; 3] },

    #[error(transparent)]
    Expr(#[from] crate::objective::ExprError),

    #[error("configuration: {0}")]
    Config(String),

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
