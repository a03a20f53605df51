use std::fmt;

/// Errors produced by hash construction, experiment configuration and the
/// self-checking diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A key schema with zero characters, zero-width characters or more than 64 key bits.
    InvalidSchema { chars: u32, char_bits: u32 },
    /// Output width outside `1..=64`.
    InvalidOutBits(u32),
    /// A key that does not fit in the schema's key width.
    KeyOutOfRange { key: u64, key_bits: u32 },
    /// A position character outside `[c] x [2^char_bits]`.
    PositionCharOutOfRange { position: u32, character: u64 },
    /// `split_k` asked for views that do not tile the output bits.
    InvalidSplit { out_bits: u32, k: u32, r: u32 },
    /// Projector with `n == 0` or `n > 2^r`.
    InvalidProjector { out_bits: u32, n: u64 },
    /// Bin index not below `n`.
    BinOutOfRange { bin: u64, n: u64 },
    /// Polynomial family with a modulus that is too small or not prime.
    InvalidPrime { prime: u64, key_bits: u32 },
    /// Any other parameter combination that cannot be honoured.
    InvalidParameter(String),
    /// Exhaustive enumeration would exceed the configured limit.
    EnumerationTooLarge { log2_size: u32, limit_log2: u32 },
    /// A key set that cannot be generated inside the key universe.
    KeySetTooLarge { requested: u64, universe_log2: u32 },
    /// An internal guarantee failed; carries a human-readable witness.
    CheckFailed(String),
    /// Serialization or I/O failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSchema { chars, char_bits } => write!(
                f,
                "invalid key schema: c={chars}, char_bits={char_bits} (need c>=1, char_bits>=1, c*char_bits<=64)"
            ),
            Error::InvalidOutBits(r) => write!(f, "output bits must be in 1..=64, got {r}"),
            Error::KeyOutOfRange { key, key_bits } => {
                write!(f, "key {key} does not fit in {key_bits} bits")
            }
            Error::PositionCharOutOfRange {
                position,
                character,
            } => write!(f, "position character ({position}, {character}) out of range"),
            Error::InvalidSplit { out_bits, k, r } => {
                write!(f, "cannot split {out_bits} output bits into {k} views of {r} bits")
            }
            Error::InvalidProjector { out_bits, n } => {
                write!(f, "cannot project {out_bits}-bit values onto {n} bins")
            }
            Error::BinOutOfRange { bin, n } => write!(f, "bin {bin} out of range for {n} bins"),
            Error::InvalidPrime { prime, key_bits } => write!(
                f,
                "modulus {prime} is not a prime >= 2^{key_bits}"
            ),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::EnumerationTooLarge {
                log2_size,
                limit_log2,
            } => write!(
                f,
                "enumeration of 2^{log2_size} cases exceeds limit 2^{limit_log2}"
            ),
            Error::KeySetTooLarge {
                requested,
                universe_log2,
            } => write!(
                f,
                "cannot draw {requested} distinct keys from a universe of 2^{universe_log2}"
            ),
            Error::CheckFailed(msg) => write!(f, "internal check failed: {msg}"),
            Error::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
