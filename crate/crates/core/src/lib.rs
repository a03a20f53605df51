pub mod bloom;
pub mod bounds;
pub mod cuckoo;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod family;
pub mod filter;
pub mod keyset;
pub mod occupancy;
pub mod par;
pub mod projector;
pub mod rng;
pub mod stats;
pub mod tabulation;

pub use bloom::{BloomFilter, BloomParams, BloomSizing};
pub use bounds::{mu0, p0, tail_bound, ExactRatio, TailBound};
pub use cuckoo::{CuckooConfig, CuckooFailure, CuckooTable};
pub use diagnostics::{
    compute_group_ordering, count_internal_collisions, find_dependent_tuples, GroupOrdering,
};
pub use error::{Error, Result};
pub use exact::{exact_hit_probability, exact_occupancy_distribution, ExactOccupancy};
pub use family::{FamilySpec, FullyRandom, HashFamily, PolyHash};
pub use filter::{
    plan_cascade, plan_cascade_with, simulate_cascade, BelowRule, CascadeConfig, CascadePlan,
    CascadeReport, FilterCascade, Placement,
};
pub use keyset::KeySetSpec;
pub use occupancy::{run_occupancy, Experiment, OccupancyConfig, OccupancyReport, QueryMode};
pub use par::Execution;
pub use projector::RangeProjector;
pub use tabulation::{KeySchema, PositionCharacter, SimpleTabulation, SplitHash};
