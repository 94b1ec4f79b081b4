//! Exit-code mapping: every library failure lands in one of four buckets.

use gvarfsv::data::DataError;
use gvarfsv::gibbs::GibbsError;
use gvarfsv::ident::IdentError;
use gvarfsv::irf::IrfError;
use gvarfsv::sim::SimError;

/// A CLI failure with its documented exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit 2: configuration problems — bad JSON, invalid spec, missing
    /// referenced paths, inconsistent requests.
    #[error("{0}")]
    Config(String),
    /// Exit 3: data problems — unreadable or malformed inputs and outputs.
    #[error("{0}")]
    Data(String),
    /// Exit 4: numerical failures inside the samplers or linear algebra.
    #[error("{0}")]
    Numerical(String),
    /// Exit 5: identification exhausted its rotation budget on every draw.
    #[error("{0}")]
    Exhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Exhausted(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GibbsError> for CliError {
    fn from(e: GibbsError) -> Self {
        match e {
            GibbsError::BadConfig(_) | GibbsError::Json(_) => CliError::Config(e.to_string()),
            GibbsError::Data(_)
            | GibbsError::Io { .. }
            | GibbsError::BinIo(_)
            | GibbsError::CheckpointMismatch(_) => CliError::Data(e.to_string()),
            GibbsError::NonSpdCovariance { .. }
            | GibbsError::NonFinite(_)
            | GibbsError::Sampler(_)
            | GibbsError::Model(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<IdentError> for CliError {
    fn from(e: IdentError) -> Self {
        match e {
            IdentError::BadTable(_) | IdentError::BadRequest(_) | IdentError::Json(_) => {
                CliError::Config(e.to_string())
            }
            IdentError::Io { .. } => CliError::Data(e.to_string()),
            IdentError::NonSpd { .. } | IdentError::DimensionMismatch { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<IrfError> for CliError {
    fn from(e: IrfError) -> Self {
        match e {
            IrfError::BadConfig(_) | IrfError::Json(_) => CliError::Config(e.to_string()),
            IrfError::EmptyDraws => CliError::Exhausted(
                "no identified draw survived propagation; nothing to summarize".into(),
            ),
            IrfError::MissingLedger { .. } | IrfError::Io { .. } | IrfError::Csv { .. } => {
                CliError::Data(e.to_string())
            }
            IrfError::Model(_) | IrfError::DimensionMismatch { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            // Unstable or malformed truth parameters are bad inputs, caught
            // before any simulation runs.
            SimError::Unstable { .. } | SimError::BadRequest(_) | SimError::Model(_) => {
                CliError::Config(e.to_string())
            }
            SimError::Explosive { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
