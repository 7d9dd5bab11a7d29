use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate flow record ({date}, {origin} -> {destination})")]
    DuplicateFlow {
        date: NaiveDate,
        origin: String,
        destination: String,
    },

    #[error("unresolvable unit ids: {}", .0.join(", "))]
    UnknownUnits(Vec<String>),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("unit {unit}: missing days {}", fmt_dates(.dates))]
    MissingDays { unit: String, dates: Vec<NaiveDate> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank-deficient design (effective df {effective_df:.2}): {message}")]
    RankDeficient { effective_df: f64, message: String },

    #[error("empty common domain for units: {}", .0.join(", "))]
    EmptyDomain(Vec<String>),

    #[error("curve does not share the expected basis: {0}")]
    BasisMismatch(String),

    #[error("need at least {needed} units, got {got}")]
    TooFewUnits { needed: usize, got: usize },

    #[error("constant input: {0}")]
    ConstantInput(String),

    #[error("simulated cases exceeded cap {cap} on day {day}; use a smaller R or a shorter domain")]
    Explosive { day: usize, cap: f64 },

    #[error("missing prerequisite artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

fn fmt_dates(dates: &[NaiveDate]) -> String {
    const SHOWN: usize = 5;
    let mut s: Vec<String> = dates.iter().take(SHOWN).map(|d| d.to_string()).collect();
    if dates.len() > SHOWN {
        s.push(format!("... ({} total)", dates.len()));
    }
    s.join(", ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
