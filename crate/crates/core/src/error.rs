use std::path::PathBuf;

use crate::clearance::ClearanceViolation;
use crate::lp::LpError;
use crate::network::{BusId, NetworkViolation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    /// A malformed row in a delimited input file.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<NetworkViolation>),

    #[error("line {index} ({from}-{to}) has neither susceptance nor reactance")]
    MissingSusceptance { index: usize, from: BusId, to: BusId },

    #[error("reduced susceptance matrix is singular; check network connectivity")]
    SingularSystem,

    #[error("no injection given for bus {0}")]
    MissingInjection(BusId),

    #[error("trade {trade}: unknown bus {bus}")]
    UnknownBus { trade: String, bus: BusId },

    #[error("trade {trade}: the reference bus cannot buy or sell")]
    ReferenceBusTrade { trade: String },

    #[error("trade {trade}: quantity must be positive and finite, got {quantity}")]
    InvalidTradeQuantity { trade: String, quantity: f64 },

    #[error("order {order}: {message}")]
    InvalidOrder { order: String, message: String },

    #[error("invalid daylight window [{sunrise}, {sunset})")]
    InvalidWindow { sunrise: u32, sunset: u32 },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("clearance infeasible: {}", join(.0))]
    Infeasible(Vec<ClearanceViolation>),

    #[error("hour {hour}")]
    Hour {
        hour: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("{} hour block(s) failed: {}", .0.len(), join_chains(.0))]
    Blocks(Vec<Error>),
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Each error with its sources, `outer: inner: ...`.
fn join_chains(errors: &[Error]) -> String {
    errors
        .iter()
        .map(|e| {
            let mut text = e.to_string();
            let mut source = std::error::Error::source(e);
            while let Some(s) = source {
                text.push_str(": ");
                text.push_str(&s.to_string());
                source = s.source();
            }
            text
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }
}
