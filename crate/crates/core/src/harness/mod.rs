//! Synthetic data, reference selectors and fidelity metrics.

pub mod baselines;
pub mod fidelity;
pub mod synthetic;

pub use baselines::{baseline_select, herding, kcenter, random_select, Baseline};
pub use fidelity::{fidelity, modes_covered, redundancy_rate, swd_to_full, FidelityReport};
pub use synthetic::{gen_synthetic, read_labels, write_labels, Synthetic, SyntheticSpec};
