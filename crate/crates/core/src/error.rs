use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh level {0} (supported range 0..={max})", max = crate::mesh::MAX_LEVEL)]
    InvalidLevel(u32),

    #[error("cell id {0} out of range")]
    InvalidCell(usize),

    #[error("cell {0} has no fluid measure")]
    NoFluidMeasure(usize),

    #[error("cell {0} is not cut by the interface")]
    NotCut(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x}, {y}) lies on neither the interface nor the outer boundary")]
    NotOnBoundary { x: f64, y: f64 },

    #[error("cells {0} and {1} do not share a face")]
    NotNeighbors(usize, usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("linear solve inaccurate: relative residual {0:.3e}")]
    InaccurateSolve(f64),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("slab {slab}: {source}")]
    Slab {
        slab: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
