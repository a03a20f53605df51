mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "tabhash",
    version,
    about = "Simple tabulation hashing experiments"
)]
struct Cli {
    /// Master seed for every random choice in the run.
    #[arg(long, global = true, env = "TABHASH_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write the subcommand's CSV table here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Record elapsed wall-clock time in the manifest (makes reports differ between runs).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo occupancy of m keys in n bins.
    Bins(BinsArgs),
    /// Exact occupancy law by enumerating every table filling.
    Exact(ExactArgs),
    /// Build a Bloom filter and measure its false-positive rate.
    Bloom(BloomArgs),
    /// Simulate the filter-hashing cascade with its cuckoo backstop.
    Filter(FilterArgs),
    /// Group ordering, internal collisions, d-boundedness and dependent tuples.
    Diagnose(DiagnoseArgs),
    /// Evaluate reference values and tail curves.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct SchemaArgs {
    /// Characters per key.
    #[arg(long = "c", default_value_t = 2)]
    chars: u32,
    /// Bits per character.
    #[arg(long, default_value_t = 8)]
    char_bits: u32,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BinsArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Output bits of the hash function.
    #[arg(long)]
    r: u32,
    /// Number of bins (defaults to 2^r).
    #[arg(long)]
    n: Option<u64>,
    /// Key set: grid:AxB, hcube:L,M, pairs:T,M, interval:M, rand:M[,SEED], all.
    #[arg(long)]
    keyset: String,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    /// simple-tabulation, fully-random or poly-K.
    #[arg(long, default_value = "simple-tabulation")]
    family: String,
    /// Bin to track: a number, or "query" for the bin of a key outside the set.
    #[arg(long, default_value = "0")]
    target: String,
    /// Failure exponent for high-probability levels.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Comma-separated deviations for the tail table.
    #[arg(long, value_delimiter = ',')]
    tail_grid: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ExactArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    r: u32,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    keyset: String,
    /// Bin whose hit probability is reported.
    #[arg(long, default_value_t = 0)]
    bin: u64,
    /// Also report the probability that this key's bin is hit.
    #[arg(long)]
    query_key: Option<u64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BloomArgs {
    #[arg(long = "c", default_value_t = 4)]
    chars: u32,
    #[arg(long, default_value_t = 8)]
    char_bits: u32,
    /// Number of keys to insert.
    #[arg(long)]
    m: u64,
    /// Number of bit arrays.
    #[arg(long)]
    k: u32,
    /// Bits per array (defaults to round(m / ln 2)).
    #[arg(long)]
    bits: Option<u64>,
    /// Hash output bits (defaults to the least r with 2^r >= bits^2).
    #[arg(long)]
    r: Option<u32>,
    /// Refuse to spread views over several tabulations.
    #[arg(long)]
    single_instance: bool,
    /// Key set to insert (defaults to m random keys).
    #[arg(long)]
    keyset: Option<String>,
    #[arg(long, default_value_t = 1_000_000)]
    queries: u64,
    /// Save the filter in binary form.
    #[arg(long)]
    save: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FilterArgs {
    #[arg(long = "c", default_value_t = 4)]
    chars: u32,
    #[arg(long, default_value_t = 8)]
    char_bits: u32,
    /// Number of keys, a power of two >= 16.
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 0.125)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Size filters with "largest power of two <= x" instead of "< x".
    #[arg(long)]
    inclusive: bool,
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// Cuckoo load slack.
    #[arg(long, default_value_t = 0.1)]
    slack: f64,
    /// Cuckoo displacement chain limit (defaults to 32 log2 n').
    #[arg(long)]
    max_chain: Option<u32>,
    #[arg(long, default_value_t = 10)]
    max_retries: u32,
    /// Write (key, table, slot) of trial 0 as CSV.
    #[arg(long)]
    dump_placement: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DiagnoseArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    keyset: String,
    /// Order the characters of this key first.
    #[arg(long)]
    query_key: Option<u64>,
    /// Hash output bits for the collision and boundedness trials.
    #[arg(long)]
    r: u32,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Search for dependent 2t-tuples drawn from the key set.
    #[arg(long)]
    tuples: Option<u32>,
    /// Write (character, position, group size) as CSV.
    #[arg(long)]
    dump_groups: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    m: u64,
    #[arg(long = "c")]
    chars: u32,
    /// Comma-separated deviations.
    #[arg(long, value_delimiter = ',')]
    t: Vec<f64>,
    /// quad-upper, quad-lower, sparse-upper or sparse-lower (default: all).
    #[arg(long)]
    which: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &tabhash::Error) -> u8 {
    match e {
        tabhash::Error::CheckFailed(_) => 3,
        tabhash::Error::Io(_) => 1,
        _ => 2,
    }
}
