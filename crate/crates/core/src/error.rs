use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("correlation {0} must lie strictly inside (-1, 1)")]
    InvalidCorrelation(f64),

    #[error("this operation divides by the correlation and rejects rho = 0")]
    ZeroCorrelation,

    #[error("finite-difference step {step} around rho = {rho} leaves the valid range")]
    StepOutOfRange { rho: f64, step: f64 },

    #[error("integration budget is empty")]
    EmptyBudget,

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("cell index {index} out of range for {cells} cells")]
    IndexOutOfRange { index: usize, cells: usize },

    #[error("interface ({0}, {1}) is empty")]
    EmptyInterface(usize, usize),

    #[error("boundary samples must carry positive finite surface weights")]
    UnweightedBoundary,

    #[error("cell {cell}: volume defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    VolumeConstraint { cell: usize, defect: f64, tolerance: f64 },

    #[error("partitions have {0} and {1} cells")]
    CellCountMismatch(usize, usize),

    #[error("cell {cell}: measures {left:.6} and {right:.6} differ beyond tolerance")]
    MeasureConstraint { cell: usize, left: f64, right: f64 },

    #[error("measure {0} must lie strictly inside (0, 1)")]
    InvalidMeasure(f64),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
