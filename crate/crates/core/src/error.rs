use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is invalid. `key` names the offending setting.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("two-time storage needs {required} bytes, budget is {budget} bytes")]
    Capacity { required: u64, budget: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity detected in the propagated state.
    #[error("non-finite values at step {step}: {what}")]
    Poisoned { step: usize, what: String },
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
