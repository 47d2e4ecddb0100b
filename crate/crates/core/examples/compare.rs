//! Scores CAST and the reference selectors on one imbalanced synthetic set.
//!
//! `cargo run --release -p cast-core --example compare -- [seed] [k]`

use cast_core::harness::{baseline_select, fidelity, gen_synthetic, Baseline, SyntheticSpec};
use cast_core::{prepare, RunConfig};

fn main() -> cast_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let spec = SyntheticSpec {
        collapse_txt: 0.4,
        seed,
        ..Default::default()
    };
    let data = gen_synthetic(&spec)?;
    let cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let prep = prepare(&data.img, &data.txt, &cfg)?;
    let z = &prep.z.z;
    let tau_red = prep.relation.sigma_r;

    let mut rows = vec![("cast", prep.select(k)?.coreset.indices)];
    for method in [Baseline::Random, Baseline::Herding, Baseline::KCenter] {
        rows.push((method.name(), baseline_select(method, z, k, seed)?));
    }
    println!(
        "{:<8} {:>12} {:>6} {:>10}",
        "method", "swd_to_full", "modes", "redundant"
    );
    for (name, idx) in rows {
        let f = fidelity(z, &idx, Some(&data.labels), tau_red, 64, seed)?;
        println!(
            "{name:<8} {:>12.4e} {:>6} {:>10.3}",
            f.swd_to_full, f.modes_covered, f.redundancy_rate
        );
    }
    Ok(())
}
