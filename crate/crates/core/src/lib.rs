//! Bimodal coreset selection by collapse-aware topology fusion and
//! multi-scale wavelet matching.
//!
//! The pipeline, stage by stage:
//!
//! 1. [`topology`]: a fuzzy k-NN graph per modality;
//! 2. [`refinement`]: collapse detection and bounded cross-modal compensation;
//! 3. [`fusion`]: entropy-weighted wavelet consensus and the unified graph `B*`;
//! 4. [`matching`]: fused representation `Z` and wavelet-domain losses;
//! 5. [`lsrc`]: relational coverage over a spatial relation graph;
//! 6. [`optimizer`]: gradient descent on continuous proxies;
//! 7. [`assignment`]: Hungarian assignment of proxies to real samples.
//!
//! [`pipeline`] strings them together:
//!
//! ```
//! use cast_core::harness::{gen_synthetic, SyntheticSpec};
//! use cast_core::{pipeline, RunConfig};
//!
//! let data = gen_synthetic(&SyntheticSpec { n_modes: 3, n_per_mode: 20, ..Default::default() })?;
//! let mut cfg = RunConfig::default();
//! cfg.k = 5;
//! cfg.steps = 20;
//! let sel = pipeline::select(&data.img, &data.txt, 3, &cfg)?;
//! assert_eq!(sel.coreset.len(), 3);
//! # Ok::<(), cast_core::Error>(())
//! ```

pub mod assignment;
pub mod config;
pub mod error;
pub mod feature_store;
pub mod fusion;
pub mod graph;
pub mod harness;
pub mod lsrc;
pub mod matching;
pub mod optimizer;
pub mod pipeline;
pub mod refinement;
pub mod topology;

pub use assignment::{hungarian, Coreset, Manifest};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use feature_store::{read_feature_file, write_feature_file, FeatureMatrix};
pub use graph::SparseGraph;
pub use pipeline::{prepare, select, Prepared, Selection};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/coverage.md")]
    mod coverage {}
    #[doc = include_str!("../../../book/src/optimisation.md")]
    mod optimisation {}
    #[doc = include_str!("../../../book/src/assignment.md")]
    mod assignment {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}
