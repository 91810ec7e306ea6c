//! Fixtures shared by the benchmarks in `benches/`.

use modrule_core::synthgen::{generate_log, sample_ground_truth, SynthConfig};
use modrule_core::EventLog;

/// A synthetic log of at least `events` events from a fixed 5-rule model.
pub fn synthetic_log(events: usize) -> EventLog {
    let config = SynthConfig { seed: 3, n_events: events, ..SynthConfig::default() };
    let gt = sample_ground_truth(&config).expect("default config is feasible");
    generate_log(&gt, &config).expect("generation cannot fail on a sampled model")
}
