//! Snowflake-and-fold maps on finite metric spaces.
//!
//! The crate builds colored multiscale covers of a finite metric space,
//! sums bump functions over those covers into a folding map
//! `f: (X, d^eps) -> R^(K-1)`, and measures how Lipschitz and how light the
//! result is. The `pullback` module computes the metric `d_f` induced by a
//! map on small graph spaces and checks the factorization through it.
//!
//! Inner loops (per-point map evaluation, pairwise Lipschitz scans, lightness
//! sweeps, pullback searches) run on rayon when the `parallel` feature is on
//! (the default) and sequentially otherwise. Results are identical either way.

pub mod cli;
pub mod covers;
pub mod embedding;
pub mod error;
pub mod io;
pub mod lightness;
pub mod metric;
pub mod pullback;
pub mod spaces;

mod dsu;
mod par;

pub use covers::{build_greedy_colored_cover, build_hierarchy, build_interval_cover, verify_cover};
pub use covers::{ColoredCover, CoverHierarchy, CoverStrategy, CoverViolation, HierarchyParams, Member};
pub use embedding::{build_folding_map, select_scale_ratio, FoldingMap, PointMap};
pub use error::{Error, Result};
pub use lightness::{LightnessReport, ProbeSettings};
pub use par::is_parallel;
pub use metric::{FiniteMetricSpace, Metric, SnowflakeView, ValidationReport};
pub use spaces::{SpaceKind, SpaceRecipe};

/// Version string embedded into every report for provenance.
pub const ARTIFACT_VERSION: &str = concat!("snowfold ", env!("CARGO_PKG_VERSION"));
