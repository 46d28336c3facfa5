//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate symbol name {0:?}")]
    DuplicateSymbol(String),
    #[error("symbol name {0:?} is reserved or empty")]
    BadSymbolName(String),
    #[error("alphabet must contain at least one symbol")]
    EmptyAlphabet,
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("context-dependent symbol {0} is not in the inventory")]
    MissingCdSymbol(String),
    #[error("operation requires an order-{expected} alphabet, got order {got}")]
    WrongOrder { expected: u8, got: u8 },
    #[error("operation requires blank mode {0}")]
    WrongBlankMode(&'static str),
    #[error("transcript longer than utterance: no accepting path of length {frames}")]
    NoAcceptingPath { frames: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("score matrix contains a non-finite entry at frame {t}, label {label}")]
    NonFiniteScore { t: usize, label: usize },
    #[error("enumeration guard exceeded: {strings} strings > {guard}")]
    EnumerationGuard { strings: u64, guard: u64 },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("no prototype for symbol {0}: not in the look-up table")]
    MissingPrototype(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unrealizable transcript: {0}")]
    Unrealizable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
