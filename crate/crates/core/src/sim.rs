//! Discrete-event simulation of timed nets and CoV sweeps.
//!
//! Timed transitions are single-server with a race policy: a clock is drawn
//! when the transition becomes enabled and discarded when it is disabled
//! (preemptive repeat, different sample). Immediate transitions fire in zero
//! time; conflicts among them are resolved at random in proportion to their
//! weights.
//!
//! Replication `r` of a run with master seed `s` draws from a ChaCha8 stream
//! seeded with [`split_seed`]`(s, r)`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::net::{CompiledNet, PetriNet};
use crate::timing::{Family, Timing, TimingError, TimingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation dead at t = {time}: no transition enabled")]
    DeadSimulation { time: f64 },
    #[error(transparent)]
    InvalidDistributionParams(#[from] TimingError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("more than {0} consecutive immediate firings")]
    ImmediateLivelock(u64),
    #[error("P-semiflow {index} changed value from {expected} to {got} at t = {time}")]
    InvariantViolation { index: usize, expected: i64, got: i64, time: f64 },
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "unit", content = "value")]
pub enum Horizon {
    /// firings of the reference transition
    Firings(u64),
    /// model seconds
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: Horizon,
    pub warmup: f64,
    pub replications: usize,
    pub seed: u64,
    /// reference transition for the firing horizon (default: the first one)
    pub reference: Option<String>,
    /// check every P-semiflow each 10^4 events
    pub check_invariants: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: Horizon::Firings(100_000),
            warmup: 0.2,
            replications: 10,
            seed: 1,
            reference: None,
            check_invariants: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(SimError::Config(format!("warmup must lie in [0, 1), got {}", self.warmup)));
        }
        if self.replications == 0 {
            return Err(SimError::Config("at least one replication is required".into()));
        }
        match self.horizon {
            Horizon::Firings(0) => Err(SimError::Config("horizon must be positive".into())),
            Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
                Err(SimError::Config("horizon must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub transitions: Vec<String>,
    pub places: Vec<String>,
    pub throughput: Vec<f64>,
    pub throughput_std: Vec<f64>,
    /// 95% Student-t half-width; NaN with a single replication
    pub ci_halfwidth: Vec<f64>,
    pub mean_marking: Vec<f64>,
    /// per-replication throughputs, `[replication][transition]`
    pub replications: Vec<Vec<f64>>,
    pub events: u64,
    pub config: SimConfig,
}

impl SimResult {
    pub fn index(&self, transition: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t == transition)
    }

    /// `(mean, ci_halfwidth)` for one transition.
    pub fn of(&self, transition: &str) -> Option<(f64, f64)> {
        self.index(transition).map(|t| (self.throughput[t], self.ci_halfwidth[t]))
    }
}

/// SplitMix64 finaliser applied to `seed + (r + 1) * golden gamma`.
pub fn split_seed(seed: u64, replication: u64) -> u64 {
    let mut z = seed.wrapping_add((replication + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one delay.
pub fn sample<R: Rng + ?Sized>(timing: &Timing, rng: &mut R) -> Result<f64, SimError> {
    timing.validate("sample")?;
    Ok(sample_unchecked(timing, rng))
}

fn sample_unchecked<R: Rng + ?Sized>(timing: &Timing, rng: &mut R) -> f64 {
    match *timing {
        Timing::Immediate { .. } => 0.0,
        Timing::Deterministic { delay } => delay,
        Timing::Stochastic { family, mean, cov } => match family {
            Family::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e * mean
            }
            Family::Uniform => {
                let h = 3f64.sqrt() * cov * mean;
                if h == 0.0 {
                    mean
                } else {
                    rng.gen_range(mean - h..mean + h)
                }
            }
            Family::Normal => loop {
                let z: f64 = StandardNormal.sample(rng);
                let x = mean + mean * cov * z;
                if x >= 0.0 {
                    break x;
                }
            },
            Family::Gamma => {
                let k = 1.0 / (cov * cov);
                Gamma::new(k, mean * cov * cov)
                    .expect("validated gamma parameters")
                    .sample(rng)
            }
        },
    }
}

struct Model {
    cn: CompiledNet,
    timing: Vec<Timing>,
    immediate: Vec<usize>,
    /// transitions whose enabling may change when `t` fires
    affected: Vec<Vec<usize>>,
    reference: usize,
    /// `(place, delta)` per transition
    delta: Vec<Vec<(usize, i64)>>,
    semiflows: Vec<Vec<i64>>,
}

impl Model {
    fn new(net: &PetriNet, timing: &TimingSpec, config: &SimConfig) -> Result<Self, SimError> {
        timing.validate(net)?;
        config.validate()?;
        let nt = net.num_transitions();
        if nt == 0 {
            return Err(SimError::DeadSimulation { time: 0.0 });
        }
        let reference = match &config.reference {
            Some(name) => net.transition(name)?,
            None => 0,
        };
        let c = net.incidence();
        let delta: Vec<Vec<(usize, i64)>> = (0..nt)
            .map(|t| (0..net.num_places()).filter(|&p| c[p][t] != 0).map(|p| (p, c[p][t])).collect())
            .collect();
        let affected = (0..nt)
            .map(|t| {
                (0..nt)
                    .filter(|&u| delta[t].iter().any(|&(p, _)| net.pre(p, u) > 0))
                    .collect()
            })
            .collect();
        let timing: Vec<Timing> = timing.resolve(net);
        let immediate = (0..nt).filter(|&t| timing[t].is_immediate()).collect();
        let semiflows = if config.check_invariants {
            crate::structural::minimal_p_semiflows(net)
                .into_iter()
                .map(|f| f.coefficients.into_iter().map(|v| v as i64).collect())
                .collect()
        } else {
            Vec::new()
        };
        Ok(Model {
            cn: CompiledNet::new(net),
            timing,
            immediate,
            affected,
            reference,
            delta,
            semiflows,
        })
    }
}

struct Replication {
    throughput: Vec<f64>,
    mean_marking: Vec<f64>,
    events: u64,
}

const LIVELOCK: u64 = 10_000_000;

fn weighted_value(y: &[i64], m: &[u32]) -> i64 {
    y.iter().zip(m).map(|(a, &b)| a * i64::from(b)).sum()
}

fn run_replication(model: &Model, m0: &[u32], config: &SimConfig, seed: u64) -> Result<Replication, SimError> {
    let nt = model.timing.len();
    let np = m0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = m0.to_vec();
    let mut enabled: Vec<bool> = (0..nt).map(|t| model.cn.is_enabled(&m, t)).collect();
    let mut generation = vec![0u64; nt];
    let mut scheduled = vec![false; nt];
    let mut heap: BinaryHeap<Reverse<(u64, usize, u64)>> = BinaryHeap::new();
    let mut now = 0.0f64;

    let mut counts = vec![0u64; nt];
    let mut warm_counts = vec![0u64; nt];
    let mut warm_time = 0.0;
    let mut warmed = config.warmup == 0.0;
    let mut integral = vec![0.0f64; np];
    let mut last_change = vec![0.0f64; np];
    let mut events = 0u64;
    let invariants: Vec<i64> = model.semiflows.iter().map(|y| weighted_value(y, m0)).collect();

    let (warm_at_fire, end_at_fire, warm_at_time, end_at_time) = match config.horizon {
        Horizon::Firings(h) => ((config.warmup * h as f64).ceil() as u64, h, f64::INFINITY, f64::INFINITY),
        Horizon::Time(t) => (u64::MAX, u64::MAX, config.warmup * t, t),
    };

    let schedule = |t: usize, now: f64, rng: &mut ChaCha8Rng, generation: &mut Vec<u64>, heap: &mut BinaryHeap<_>| {
        generation[t] += 1;
        let due = now + sample_unchecked(&model.timing[t], rng);
        heap.push(Reverse((due.to_bits(), t, generation[t])));
    };

    for t in 0..nt {
        if enabled[t] && !model.timing[t].is_immediate() {
            scheduled[t] = true;
            schedule(t, now, &mut rng, &mut generation, &mut heap);
        }
    }

    loop {
        // vanishing phase
        let mut burst = 0u64;
        loop {
            let total: f64 = model
                .immediate
                .iter()
                .filter(|&&t| enabled[t])
                .map(|&t| match model.timing[t] {
                    Timing::Immediate { weight } => weight,
                    _ => 0.0,
                })
                .sum();
            if total == 0.0 {
                break;
            }
            let mut pick = rng.gen::<f64>() * total;
            let mut chosen = None;
            for &t in &model.immediate {
                if !enabled[t] {
                    continue;
                }
                let Timing::Immediate { weight } = model.timing[t] else { unreachable!() };
                chosen = Some(t);
                if pick < weight {
                    break;
                }
                pick -= weight;
            }
            let t = chosen.expect("positive total weight");
            fire(model, t, now, &mut m, &mut integral, &mut last_change, warmed);
            counts[t] += 1;
            events += 1;
            refresh(model, t, now, &m, &mut enabled, &mut scheduled, &mut rng, &mut generation, &mut heap, &schedule);
            burst += 1;
            if burst > LIVELOCK {
                return Err(SimError::ImmediateLivelock(LIVELOCK));
            }
            if t == model.reference && check_horizon(counts[t], warm_at_fire, end_at_fire, &mut warmed, &mut warm_counts, &counts, &mut warm_time, now, &m, &mut integral, &mut last_change) {
                return Ok(finish(&counts, &warm_counts, warm_time, now, &m, &mut integral, &last_change, events));
            }
        }
        // timed phase
        let (t, due) = loop {
            let Some(Reverse((bits, t, g))) = heap.pop() else {
                return Err(SimError::DeadSimulation { time: now });
            };
            if g == generation[t] && scheduled[t] {
                break (t, f64::from_bits(bits));
            }
        };
        if !warmed && due >= warm_at_time {
            now = warm_at_time;
            start_window(&mut warmed, &mut warm_counts, &counts, &mut warm_time, now, &m, &mut integral, &mut last_change);
        }
        if due >= end_at_time {
            now = end_at_time;
            return Ok(finish(&counts, &warm_counts, warm_time, now, &m, &mut integral, &last_change, events));
        }
        now = due;
        scheduled[t] = false;
        fire(model, t, now, &mut m, &mut integral, &mut last_change, warmed);
        counts[t] += 1;
        events += 1;
        refresh(model, t, now, &m, &mut enabled, &mut scheduled, &mut rng, &mut generation, &mut heap, &schedule);
        if !model.semiflows.is_empty() && events % 10_000 == 0 {
            for (k, y) in model.semiflows.iter().enumerate() {
                let got = weighted_value(y, &m);
                if got != invariants[k] {
                    return Err(SimError::InvariantViolation {
                        index: k,
                        expected: invariants[k],
                        got,
                        time: now,
                    });
                }
            }
        }
        if t == model.reference && check_horizon(counts[t], warm_at_fire, end_at_fire, &mut warmed, &mut warm_counts, &counts, &mut warm_time, now, &m, &mut integral, &mut last_change) {
            return Ok(finish(&counts, &warm_counts, warm_time, now, &m, &mut integral, &last_change, events));
        }
    }
}

fn fire(model: &Model, t: usize, now: f64, m: &mut [u32], integral: &mut [f64], last_change: &mut [f64], warmed: bool) {
    for &(p, d) in &model.delta[t] {
        if warmed {
            integral[p] += f64::from(m[p]) * (now - last_change[p]);
        }
        last_change[p] = now;
        m[p] = (i64::from(m[p]) + d) as u32;
    }
}

#[allow(clippy::too_many_arguments)]
fn refresh<F>(
    model: &Model,
    t: usize,
    now: f64,
    m: &[u32],
    enabled: &mut [bool],
    scheduled: &mut [bool],
    rng: &mut ChaCha8Rng,
    generation: &mut Vec<u64>,
    heap: &mut BinaryHeap<Reverse<(u64, usize, u64)>>,
    schedule: &F,
) where
    F: Fn(usize, f64, &mut ChaCha8Rng, &mut Vec<u64>, &mut BinaryHeap<Reverse<(u64, usize, u64)>>),
{
    let touch = |u: usize, enabled: &mut [bool], scheduled: &mut [bool], rng: &mut ChaCha8Rng, generation: &mut Vec<u64>, heap: &mut BinaryHeap<_>| {
        let e = model.cn.is_enabled(m, u);
        enabled[u] = e;
        if model.timing[u].is_immediate() {
            return;
        }
        if e && !scheduled[u] {
            scheduled[u] = true;
            schedule(u, now, rng, generation, heap);
        } else if !e && scheduled[u] {
            scheduled[u] = false;
            generation[u] += 1;
        }
    };
    for &u in &model.affected[t] {
        touch(u, enabled, scheduled, rng, generation, heap);
    }
    // the fired transition needs a fresh clock even if its inputs were untouched
    touch(t, enabled, scheduled, rng, generation, heap);
}

#[allow(clippy::too_many_arguments)]
fn start_window(
    warmed: &mut bool,
    warm_counts: &mut [u64],
    counts: &[u64],
    warm_time: &mut f64,
    now: f64,
    _m: &[u32],
    integral: &mut [f64],
    last_change: &mut [f64],
) {
    *warmed = true;
    warm_counts.copy_from_slice(counts);
    *warm_time = now;
    integral.iter_mut().for_each(|v| *v = 0.0);
    last_change.iter_mut().for_each(|v| *v = now);
}

#[allow(clippy::too_many_arguments)]
fn check_horizon(
    fired: u64,
    warm_at: u64,
    end_at: u64,
    warmed: &mut bool,
    warm_counts: &mut [u64],
    counts: &[u64],
    warm_time: &mut f64,
    now: f64,
    m: &[u32],
    integral: &mut [f64],
    last_change: &mut [f64],
) -> bool {
    if !*warmed && fired >= warm_at {
        start_window(warmed, warm_counts, counts, warm_time, now, m, integral, last_change);
    }
    fired >= end_at
}

#[allow(clippy::too_many_arguments)]
fn finish(
    counts: &[u64],
    warm_counts: &[u64],
    warm_time: f64,
    now: f64,
    m: &[u32],
    integral: &mut [f64],
    last_change: &[f64],
    events: u64,
) -> Replication {
    let span = now - warm_time;
    for p in 0..m.len() {
        integral[p] += f64::from(m[p]) * (now - last_change[p]);
    }
    let throughput = counts
        .iter()
        .zip(warm_counts)
        .map(|(&c, &w)| if span > 0.0 { (c - w) as f64 / span } else { 0.0 })
        .collect();
    let mean_marking = integral
        .iter()
        .zip(m)
        .map(|(&v, &cur)| if span > 0.0 { v / span } else { f64::from(cur) })
        .collect();
    Replication {
        throughput,
        mean_marking,
        events,
    }
}

/// 95% two-sided Student-t quantile with `df` degrees of freedom.
pub fn t_quantile(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// `(mean, sample std, 95% half-width)`.
pub fn summarize(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (mean, sd, t_quantile(xs.len() - 1) * sd / n.sqrt())
}

pub fn simulate(net: &PetriNet, timing: &TimingSpec, config: &SimConfig) -> Result<SimResult, SimError> {
    let model = Model::new(net, timing, config)?;
    if crate::structural::classify(net).is_marked_graph {
        let live = crate::structural::liveness_marked_graph(net).map_err(|e| SimError::Config(e.to_string()))?;
        if let Some(w) = live.witness {
            return Err(SimError::Config(format!("marked graph is not live: circuit {w:?} has no token")));
        }
    }
    let m0 = net.initial_marking().0;
    let reps: Vec<Replication> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(&model, &m0, config, split_seed(config.seed, r)))
        .collect::<Result<_, _>>()?;
    let nt = net.num_transitions();
    let np = net.num_places();
    let mut throughput = Vec::with_capacity(nt);
    let mut throughput_std = Vec::with_capacity(nt);
    let mut ci_halfwidth = Vec::with_capacity(nt);
    for t in 0..nt {
        let xs: Vec<f64> = reps.iter().map(|r| r.throughput[t]).collect();
        let (mean, sd, hw) = summarize(&xs);
        throughput.push(mean);
        throughput_std.push(sd);
        ci_halfwidth.push(hw);
    }
    let mean_marking = (0..np)
        .map(|p| reps.iter().map(|r| r.mean_marking[p]).sum::<f64>() / reps.len() as f64)
        .collect();
    Ok(SimResult {
        transitions: net.transitions().to_vec(),
        places: net.places().to_vec(),
        throughput,
        throughput_std,
        ci_halfwidth,
        mean_marking,
        events: reps.iter().map(|r| r.events).sum(),
        replications: reps.into_iter().map(|r| r.throughput).collect(),
        config: config.clone(),
    })
}

/// One axis of a CoV sweep: the transitions it retimes and their family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub family: Family,
    pub covs: Vec<f64>,
    pub transitions: Vec<String>,
}

impl SweepAxis {
    fn points(&self) -> Vec<f64> {
        if self.family == Family::Exponential {
            vec![1.0]
        } else {
            self.covs.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub inj_family: Family,
    pub inj_cov: f64,
    pub srv_family: Family,
    pub srv_cov: f64,
    pub mean_throughput: f64,
    pub ci_halfwidth: f64,
}

fn retime(base: &TimingSpec, net: &PetriNet, axis: &SweepAxis, cov: f64) -> Result<TimingSpec, SimError> {
    let mut spec = base.clone();
    for name in &axis.transitions {
        net.transition(name)?;
        let mean = base.get(name).mean();
        if mean <= 0.0 {
            return Err(SimError::Config(format!("swept transition `{name}` has no positive mean")));
        }
        spec.set(name.clone(), Timing::with_cov(axis.family, mean, cov));
    }
    spec.validate(net)?;
    Ok(spec)
}

/// Throughput of `config.reference` (or the first transition) over the
/// cartesian product of injection and service CoVs; means come from `base`.
pub fn cov_sweep(
    net: &PetriNet,
    base: &TimingSpec,
    injection: &SweepAxis,
    service: &SweepAxis,
    config: &SimConfig,
) -> Result<Vec<SweepRow>, SimError> {
    let reference = config.reference.clone().unwrap_or_else(|| net.transition_name(0).to_string());
    let mut rows = Vec::new();
    for ic in injection.points() {
        for sc in service.points() {
            let spec = retime(&retime(base, net, injection, ic)?, net, service, sc)?;
            let res = simulate(net, &spec, config)?;
            let (mean, hw) = res.of(&reference).expect("reference transition exists");
            rows.push(SweepRow {
                inj_family: injection.family,
                inj_cov: ic,
                srv_family: service.family,
                srv_cov: sc,
                mean_throughput: mean,
                ci_halfwidth: hw,
            });
        }
    }
    Ok(rows)
}

/// CSV with the parameters echoed as `#` comment lines.
pub fn sweep_csv(rows: &[SweepRow], config: &SimConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("# seed={}\n", config.seed));
    out.push_str(&format!("# horizon={:?}\n", config.horizon));
    out.push_str(&format!("# warmup={}\n", config.warmup));
    out.push_str(&format!("# replications={}\n", config.replications));
    for (k, v) in extra {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str("inj_family,inj_cov,srv_family,srv_cov,mean_throughput,ci_halfwidth\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.inj_family, r.inj_cov, r.srv_family, r.srv_cov, r.mean_throughput, r.ci_halfwidth
        ));
    }
    out
}
