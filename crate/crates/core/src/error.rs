use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operation that needs at least one point got none.
    EmptyCloud,
    EmptyNeighborhood,
    /// A numeric parameter is outside its domain.
    InvalidParameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    NonFiniteCoordinate {
        index: usize,
    },
    ColorOutOfRange {
        index: usize,
    },
    AsymmetricMatrix {
        deviation: f64,
    },
    MissingColor,
    MissingLabels,
    /// Training data with fewer than two distinct classes.
    SingleClass,
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NonFiniteFeature {
        row: usize,
        column: usize,
    },
    LabelOutOfRange {
        row: usize,
        label: u8,
    },
    ColumnMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCloud => f.write_str("point cloud is empty"),
            Error::EmptyNeighborhood => f.write_str("neighborhood is empty"),
            Error::InvalidParameter {
                name,
                value,
                expected,
            } => write!(f, "invalid {name} = {value}: expected {expected}"),
            Error::NonFiniteCoordinate { index } => {
                write!(f, "point {index} has a non-finite coordinate")
            }
            Error::ColorOutOfRange { index } => {
                write!(f, "point {index} has a color channel outside [0, 1]")
            }
            Error::AsymmetricMatrix { deviation } => {
                write!(f, "matrix is not symmetric (max deviation {deviation:e})")
            }
            Error::MissingColor => f.write_str("color features requested but the cloud has no color"),
            Error::MissingLabels => f.write_str("operation requires a labeled cloud"),
            Error::SingleClass => f.write_str("training data must contain at least two classes"),
            Error::ShapeMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected {expected}, found {found}"),
            Error::NonFiniteFeature { row, column } => {
                write!(f, "feature value at row {row}, column {column} is not finite")
            }
            Error::LabelOutOfRange { row, label } => {
                write!(f, "label {label} at row {row} is outside the class range")
            }
            Error::ColumnMismatch {
                missing,
                unexpected,
            } => write!(
                f,
                "feature columns do not match the model: missing [{}], unexpected [{}]",
                missing.join(", "),
                unexpected.join(", ")
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
