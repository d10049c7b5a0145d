use std::io;
use std::path::PathBuf;

use spadqrng_core::Error as CoreError;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// IO and malformed input data.
pub const EXIT_IO: i32 = 1;
/// Bad configuration or parameters.
pub const EXIT_CONFIG: i32 = 2;
/// Oracle regression or no certifiable output.
pub const EXIT_VALIDATION: i32 = 3;
/// The statistical battery rejected the data.
pub const EXIT_BATTERY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("statistical battery failed: {0}")]
    BatteryFailed(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Io { .. } => EXIT_IO,
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Validation(_) => EXIT_VALIDATION,
            AppError::BatteryFailed(_) => EXIT_BATTERY,
            AppError::Core(e) => match e {
                CoreError::InvalidParameter(_)
                | CoreError::InfeasibleTarget { .. }
                | CoreError::CutoffTooSmall { .. }
                | CoreError::TooLargeForEnumeration { .. } => EXIT_CONFIG,
                CoreError::NoExtractableBits => EXIT_VALIDATION,
                _ => EXIT_IO,
            },
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
