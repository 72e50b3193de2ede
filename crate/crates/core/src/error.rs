use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate RPC: denominator {0:e} is too close to zero")]
    DegenerateRpc(f64),
    #[error("latitude {0}° is outside the UTM domain")]
    UnsupportedLatitude(f64),
    #[error("affine fit failed: {0}")]
    Fit(String),
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("localization failed: {0}")]
    Localization(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Image(_) | Error::Evaluation(_) => 3,
            Error::DegenerateRpc(_)
            | Error::UnsupportedLatitude(_)
            | Error::Fit(_)
            | Error::DegenerateCamera(_)
            | Error::Localization(_)
            | Error::Training(_) => 4,
        }
    }
}
