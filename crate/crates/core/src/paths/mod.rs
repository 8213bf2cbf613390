//! Minimum-cost paths between premise and hypothesis concepts, per-instance
//! path bundles and their statistics.

mod bundle;
mod search;
mod stats;

pub use bundle::{
    contextualize_all, contextualize_instance, read_bundles, round_significant, write_bundles,
    BundleRecord, PathBundle, PathRecord, RelStep,
};
pub use search::{shortest_path, Direction, HopLimit, Path, PathSearcher, SearchOptions, TieBreak};
pub use stats::{bundle_stats, BundleStats};
