//! Workloads shared by the benchmarks and their smoke test.

use petriflow::wavefront::{gen_functional, gen_grid, Rates};
use petriflow::{Horizon, PetriNet, SimConfig, TimedNet, Timing, TimingSpec};

pub const WAVEFRONT3_SOURCE: &str = include_str!("../../../models/wavefront3.lang");

pub fn grid(n: usize) -> TimedNet {
    gen_grid(n, Rates::default()).expect("grid generator")
}

pub fn functional(n: usize, decoupled: bool) -> PetriNet {
    gen_functional(n, decoupled).expect("functional generator")
}

/// Functional net with every transition exponential of mean `mean`.
pub fn timed_functional(n: usize, mean: f64) -> TimedNet {
    let net = functional(n, false);
    let mut timing = TimingSpec::new();
    for t in net.transitions() {
        timing.set(t.clone(), Timing::exponential(mean));
    }
    TimedNet { net, timing }
}

pub fn short_sim(firings: u64) -> SimConfig {
    SimConfig {
        horizon: Horizon::Firings(firings),
        replications: 1,
        ..SimConfig::default()
    }
}
