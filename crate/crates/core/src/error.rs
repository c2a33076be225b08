use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("state has {got} values, chain has {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("chain is not serial: {0}")]
    NotSerial(String),
    #[error("invalid joint `{name}`: {reason}")]
    InvalidJoint { name: String, reason: String },
    #[error("invalid link `{name}`: {reason}")]
    InvalidLink { name: String, reason: String },
    #[error("chain has no virtual joint")]
    NoVirtualJoint,
    #[error("chain already carries a virtual joint")]
    AlreadyAttached,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("unsupported primitive pair {0}-{1}")]
    UnsupportedPair(&'static str, &'static str),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}, column {column}: {msg}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{path}: line {line}: {source}")]
    Invalid {
        path: String,
        line: usize,
        source: KinematicsError,
    },
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("manipulator inertia matrix is singular")]
    SingularInertia,
    #[error("pitch {0} rad too close to gimbal lock")]
    GimbalLock(f64),
}
