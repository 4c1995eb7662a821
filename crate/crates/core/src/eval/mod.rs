//! Metrics, synthetic phantoms, and benchmark sweeps.

pub mod bench;
pub mod metrics;
pub mod phantom;

pub use bench::{parse_config_list, run_benchmark, Aggregate, BenchConfig, BenchReport, BenchRow, Summary};
pub use metrics::{dice, seed_counts, seed_error, Metrics, SeedCounts};
pub use phantom::{make_phantom, parse_phantom_list, Phantom, PhantomDescriptor, PhantomShape};
