use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes, widths or hyperparameters that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// A batch too small or malformed for the requested pair construction.
    #[error("batch error: {0}")]
    Batch(String),
    /// The feeder handed the loss an impossible selection.
    #[error("curriculum error: {0}")]
    Curriculum(String),
    /// Non-finite values during optimisation.
    #[error("training error: {0}")]
    Training(String),
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("internal error: {0}")]
    Internal(String),
}

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use config_err;
