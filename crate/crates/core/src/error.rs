use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("link domain violation at observation {obs}: {detail}")]
    LinkDomain { obs: usize, detail: String },

    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Rows count data rows from 1.
    #[error("response value {value} at row {row} is outside (0, 1)")]
    ResponseOutOfRange { row: usize, value: f64 },

    #[error("CSV parse error at row {row}, column '{column}': {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("singular information matrix (condition estimate {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("line search left the model domain and could not recover: {0}")]
    DomainWandering(String),

    #[error("{failed} of {total} bootstrap refits failed (at most {allowed} allowed)")]
    TooManyFailures {
        failed: usize,
        total: usize,
        allowed: usize,
    },

    #[error("scheme '{0}' is missing a prerequisite: {1}")]
    MissingPrerequisite(String, String),

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("null model is not nested in the full model: {0}")]
    NotNested(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable category, used as the CLI error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::LinkDomain { .. } => "link_domain",
            Error::Syntax { .. } => "syntax",
            Error::UnknownIdentifier(_) => "unknown_identifier",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidData(_) => "invalid_data",
            Error::ResponseOutOfRange { .. } => "response_out_of_range",
            Error::Csv { .. } => "csv",
            Error::SingularInformation { .. } => "singular_information",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DomainWandering(_) => "domain_wandering",
            Error::TooManyFailures { .. } => "bootstrap_failures",
            Error::MissingPrerequisite(..) => "missing_prerequisite",
            Error::SizeGuard(_) => "size_guard",
            Error::NotNested(_) => "not_nested",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }

    /// Process exit status for the CLI; distinct per category family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Syntax { .. } | Error::UnknownIdentifier(_) => 2,
            Error::Io(_) | Error::Csv { .. } => 3,
            Error::InvalidData(_) | Error::ResponseOutOfRange { .. } => 4,
            Error::InvalidModel(_) | Error::NotNested(_) | Error::SizeGuard(_) => 5,
            Error::NonConvergence { .. } | Error::DomainWandering(_) => 6,
            Error::SingularInformation { .. } => 7,
            Error::TooManyFailures { .. } | Error::MissingPrerequisite(..) => 8,
            Error::Domain(_) | Error::LinkDomain { .. } => 9,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
