use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid box [{0}, {1}, {2}, {3}]: coordinates must be finite with positive extent")]
    InvalidBox(f64, f64, f64, f64),

    #[error("degenerate scene: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    DimensionMismatch { expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },

    #[error("value {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfUnitInterval { row: usize, col: usize, value: f64 },

    #[error("invalid anchor grid: {0}")]
    InvalidGrid(String),

    #[error("invalid matching configuration: {0}")]
    InvalidConfig(String),

    #[error("point ({x}, {y}) is not strictly inside the box")]
    PointOutsideBox { x: f64, y: f64 },

    #[error("invalid scene specification: {0}")]
    InvalidScene(String),

    #[error("could not place {requested} objects within {attempts} attempts")]
    PlacementFailed { requested: usize, attempts: usize },

    #[error("invalid detection: {0}")]
    InvalidDetection(String),
}
