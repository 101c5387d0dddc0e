use std::fmt;
use std::process::ExitCode;

use removal_lab::constants::ConstantsError;
use removal_lab::driver::DriverError;
use removal_lab::instances::InstanceError;
use removal_lab::regularity::RegularityError;
use removal_lab::shattering::ShatterError;
use removal_lab::tester::TesterError;
use removal_lab::{GraphError, PatternError};

/// A failed command. `Precondition` exits 1, `Budget` exits 2.
#[derive(Debug)]
pub enum CliError {
    Precondition(String),
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Precondition(_) => ExitCode::from(1),
            CliError::Budget(_) => ExitCode::from(2),
        }
    }

    pub fn pre(msg: impl Into<String>) -> Self {
        CliError::Precondition(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Precondition(m) => write!(f, "precondition error: {m}"),
            CliError::Budget(m) => write!(f, "budget error: {m}"),
        }
    }
}

macro_rules! precondition_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Precondition(e.to_string())
            }
        }
    )*};
}

precondition_from!(GraphError, InstanceError, TesterError, ConstantsError, std::io::Error, serde_json::Error);

impl From<PatternError> for CliError {
    fn from(e: PatternError) -> Self {
        match e {
            PatternError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<RegularityError> for CliError {
    fn from(e: RegularityError) -> Self {
        match e {
            RegularityError::ExhaustiveTooLarge { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<ShatterError> for CliError {
    fn from(e: ShatterError) -> Self {
        match e {
            ShatterError::ScaleInfeasible(_) => CliError::Budget(e.to_string()),
            ShatterError::Pattern(p) => p.into(),
            ShatterError::Regularity(r) => r.into(),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<DriverError> for CliError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Pattern(p) => p.into(),
            DriverError::Shatter(s) => s.into(),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}
