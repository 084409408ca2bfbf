//! Exact GSPN analysis: reachability graph, vanishing-marking elimination,
//! CTMC steady state and transition throughputs.
//!
//! Timed transitions are exponential with single-server semantics (rate
//! `1/mean` whenever enabled). Immediate transitions preempt timed ones and
//! resolve conflicts by normalized weights.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::net::{CompiledNet, PetriNet};
use crate::statespace::{structural_place_bounds, StateEncoding, StateStore};
use crate::timing::{Family, Timing, TimingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GspnError {
    #[error("state cap of {cap} exceeded ({explored} states explored, frontier {frontier})")]
    CapExceeded {
        cap: usize,
        explored: usize,
        frontier: usize,
    },
    #[error("net is unbounded: place `{place}` grows without limit")]
    Unbounded { place: String },
    #[error("transition `{0}` has non-exponential timing; GSPN analysis needs exponential or immediate")]
    NonExponential(String),
    #[error("vanishing markings form a trap with no tangible exit (state {0})")]
    VanishingTrap(usize),
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("steady-state solver did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Tangible,
    Vanishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub transition: u32,
    pub target: u32,
}

/// Transition semantics extracted from a [`TimingSpec`].
#[derive(Debug, Clone)]
pub struct GspnTiming {
    /// Rate for timed transitions, `None` for immediate.
    pub rate: Vec<Option<f64>>,
    /// Weight for immediate transitions.
    pub weight: Vec<f64>,
}

impl GspnTiming {
    pub fn from_spec(net: &PetriNet, spec: &TimingSpec) -> Result<Self, GspnError> {
        let mut rate = Vec::new();
        let mut weight = Vec::new();
        for (t, timing) in spec.resolve(net).into_iter().enumerate() {
            match timing {
                Timing::Immediate { weight: w } => {
                    rate.push(None);
                    weight.push(w);
                }
                Timing::Stochastic {
                    family: Family::Exponential,
                    mean,
                    ..
                } => {
                    rate.push(Some(1.0 / mean));
                    weight.push(0.0);
                }
                _ => return Err(GspnError::NonExponential(net.transition_name(t).to_string())),
            }
        }
        Ok(GspnTiming { rate, weight })
    }

    pub fn is_immediate(&self, t: usize) -> bool {
        self.rate[t].is_none()
    }
}

/// Full reachability graph in BFS order from `m0`, tangible and vanishing states.
#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    store: StateStore,
    kinds: Vec<StateKind>,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
    num_places: usize,
}

impl ReachabilityGraph {
    pub fn num_states(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_tangible(&self) -> usize {
        self.kinds.iter().filter(|k| **k == StateKind::Tangible).count()
    }

    pub fn kind(&self, s: usize) -> StateKind {
        self.kinds[s]
    }

    pub fn edges(&self, s: usize) -> &[Edge] {
        &self.edges[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn marking(&self, s: usize) -> Vec<u32> {
        self.store.marking(s)
    }

    pub fn num_places(&self) -> usize {
        self.num_places
    }

    pub fn memory_bytes(&self) -> usize {
        self.store.memory_bytes()
            + self.kinds.capacity()
            + self.offsets.capacity() * 8
            + self.edges.capacity() * 8
    }

    /// Index of the state with marking `m`, if reached.
    pub fn find(&self, m: &[u32]) -> Option<usize> {
        let enc = self.store.encoding();
        let mut buf = vec![0; enc.words()];
        enc.encode(m, &mut buf)?;
        self.store.find(&buf)
    }
}

/// Explores the reachability graph. Timed transitions only fire from
/// tangible states; immediate transitions preempt them.
pub fn explore(net: &PetriNet, timing: &TimingSpec, state_cap: usize) -> Result<ReachabilityGraph, GspnError> {
    let gt = GspnTiming::from_spec(net, timing)?;
    explore_with(net, &gt, state_cap)
}

pub fn explore_with(net: &PetriNet, gt: &GspnTiming, state_cap: usize) -> Result<ReachabilityGraph, GspnError> {
    let cn = CompiledNet::new(net);
    let bounds = structural_place_bounds(net);
    let bounded = bounds.iter().all(Option::is_some);
    let enc = StateEncoding::from_bounds(&bounds);
    let words = enc.words();
    let mut store = StateStore::new(enc.clone());
    let np = net.num_places();
    let nt = net.num_transitions();

    let mut buf = vec![0u64; words];
    let m0: Vec<u32> = net.initial_marking().0;
    encode_or_unbounded(net, &enc, &m0, &mut buf)?;
    store.intern(&buf);

    // parent pointers only needed for the covering check on unbounded nets
    let mut parent: Vec<u32> = if bounded { Vec::new() } else { vec![u32::MAX] };
    let mut kinds = Vec::new();
    let mut offsets = vec![0usize];
    let mut edges = Vec::new();
    let mut m = vec![0u32; np];
    let mut next = vec![0u32; np];
    let mut anc = vec![0u32; np];
    let mut enabled_imm = Vec::with_capacity(nt);
    let mut enabled_timed = Vec::with_capacity(nt);

    let mut s = 0usize;
    while s < store.len() {
        store.decode(s, &mut m);
        enabled_imm.clear();
        enabled_timed.clear();
        for t in 0..nt {
            if cn.is_enabled(&m, t) {
                if gt.is_immediate(t) {
                    enabled_imm.push(t);
                } else {
                    enabled_timed.push(t);
                }
            }
        }
        let (kind, firing) = if enabled_imm.is_empty() {
            (StateKind::Tangible, &enabled_timed)
        } else {
            (StateKind::Vanishing, &enabled_imm)
        };
        kinds.push(kind);
        for &t in firing.iter() {
            next.copy_from_slice(&m);
            cn.fire_in_place(&mut next, t);
            encode_or_unbounded(net, &enc, &next, &mut buf)?;
            let (target, inserted) = store.intern(&buf);
            if inserted {
                if store.len() > state_cap {
                    return Err(GspnError::CapExceeded {
                        cap: state_cap,
                        explored: s + 1,
                        frontier: store.len() - s - 1,
                    });
                }
                if !bounded {
                    parent.push(s as u32);
                    check_covering(net, &store, &parent, s, &next, &mut anc)?;
                }
            }
            edges.push(Edge {
                transition: t as u32,
                target: target as u32,
            });
        }
        offsets.push(edges.len());
        s += 1;
    }
    Ok(ReachabilityGraph {
        store,
        kinds,
        offsets,
        edges,
        num_places: np,
    })
}

fn encode_or_unbounded(net: &PetriNet, enc: &StateEncoding, m: &[u32], buf: &mut [u64]) -> Result<(), GspnError> {
    enc.encode(m, buf).ok_or_else(|| {
        let p = (0..m.len())
            .find(|&p| u64::from(m[p]) > enc.capacity(p))
            .unwrap_or(0);
        GspnError::Unbounded {
            place: net.place_name(p).to_string(),
        }
    })
}

/// Karp-Miller style check: a new marking strictly covering an ancestor on
/// its BFS path proves unboundedness.
fn check_covering(
    net: &PetriNet,
    store: &StateStore,
    parent: &[u32],
    from: usize,
    m: &[u32],
    anc: &mut [u32],
) -> Result<(), GspnError> {
    let mut cur = from;
    loop {
        store.decode(cur, anc);
        let covers = m.iter().zip(anc.iter()).all(|(a, b)| a >= b);
        if covers {
            if let Some(p) = (0..m.len()).find(|&p| m[p] > anc[p]) {
                return Err(GspnError::Unbounded {
                    place: net.place_name(p).to_string(),
                });
            }
        }
        let up = parent[cur];
        if up == u32::MAX {
            return Ok(());
        }
        cur = up as usize;
    }
}

/// Tangible-only CTMC. Off-diagonal rates are stored row-wise; self loops
/// are dropped since they do not affect the stationary distribution.
#[derive(Debug, Clone)]
pub struct Generator {
    /// graph state index of each tangible state
    pub tangible: Vec<u32>,
    /// `(target tangible index, rate)` per row, merged and sorted
    pub rows: Vec<Vec<(u32, f64)>>,
    /// total outflow rate (excluding self loops)
    pub out_rate: Vec<f64>,
    /// tangible distribution reached from each graph state (identity for tangible)
    resolution: Vec<Vec<(u32, f64)>>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.tangible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tangible.is_empty()
    }

    /// Tangible distribution at time zero (the initial marking may be vanishing).
    pub fn initial_distribution(&self) -> &[(u32, f64)] {
        &self.resolution[0]
    }

    /// Row sums of the full generator (should be zero).
    pub fn max_row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.out_rate)
            .map(|(row, &out)| (row.iter().map(|e| e.1).sum::<f64>() - out).abs())
            .fold(0.0, f64::max)
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, r) in row {
                q[i][j as usize] += r;
            }
            q[i][i] -= self.out_rate[i];
        }
        q
    }
}

/// Probability of each immediate edge out of a vanishing state.
fn switch_probs(graph: &ReachabilityGraph, gt: &GspnTiming, s: usize) -> Vec<f64> {
    let edges = graph.edges(s);
    let total: f64 = edges.iter().map(|e| gt.weight[e.transition as usize]).sum();
    edges
        .iter()
        .map(|e| gt.weight[e.transition as usize] / total)
        .collect()
}

/// Strongly connected components of the vanishing subgraph, sinks first.
fn vanishing_sccs(graph: &ReachabilityGraph) -> Vec<Vec<usize>> {
    let n = graph.num_states();
    let mut index = vec![u32::MAX; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut sccs = Vec::new();
    let mut counter = 0u32;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if graph.kind(root) != StateKind::Vanishing || index[root] != u32::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut ei)) = call.last_mut() {
            let edges = graph.edges(v);
            if *ei < edges.len() {
                let w = edges[*ei].target as usize;
                *ei += 1;
                if graph.kind(w) != StateKind::Vanishing {
                    continue;
                }
                if index[w] == u32::MAX {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    sccs.push(comp);
                }
            }
        }
    }
    sccs
}

fn merge_dist(mut d: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
    d.sort_by_key(|e| e.0);
    let mut out: Vec<(u32, f64)> = Vec::with_capacity(d.len());
    for (k, v) in d {
        match out.last_mut() {
            Some(last) if last.0 == k => last.1 += v,
            _ => out.push((k, v)),
        }
    }
    out
}

/// Dense Gaussian elimination with partial pivoting; solves `A X = B` in place.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [Vec<f64>]) -> Option<()> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..b[row].len() {
                b[row][k] -= f * b[col][k];
            }
        }
    }
    for col in (0..n).rev() {
        let p = a[col][col];
        for k in 0..b[col].len() {
            let mut v = b[col][k];
            for j in col + 1..n {
                v -= a[col][j] * b[j][k];
            }
            b[col][k] = v / p;
        }
    }
    Some(())
}

/// Removes vanishing states, redistributing their outflow by switch probabilities.
pub fn eliminate_vanishing(graph: &ReachabilityGraph, timing: &GspnTiming) -> Result<Generator, GspnError> {
    let n = graph.num_states();
    let mut tidx = vec![u32::MAX; n];
    let mut tangible = Vec::new();
    for s in 0..n {
        if graph.kind(s) == StateKind::Tangible {
            tidx[s] = tangible.len() as u32;
            tangible.push(s as u32);
        }
    }
    let mut resolution: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for &s in &tangible {
        resolution[s as usize] = vec![(tidx[s as usize], 1.0)];
    }
    for comp in vanishing_sccs(graph) {
        let cyclic = comp.len() > 1
            || graph
                .edges(comp[0])
                .iter()
                .any(|e| e.target as usize == comp[0]);
        if !cyclic {
            let v = comp[0];
            let probs = switch_probs(graph, timing, v);
            let mut d = Vec::new();
            for (e, p) in graph.edges(v).iter().zip(probs) {
                d.extend(resolution[e.target as usize].iter().map(|&(k, q)| (k, q * p)));
            }
            resolution[v] = merge_dist(d);
            continue;
        }
        // (I - P_cc) X = P_exit * R_exit
        let local: std::collections::HashMap<usize, usize> =
            comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut targets: Vec<u32> = Vec::new();
        let mut exits: Vec<Vec<(u32, f64)>> = vec![Vec::new(); comp.len()];
        let mut a = vec![vec![0.0; comp.len()]; comp.len()];
        for (i, &v) in comp.iter().enumerate() {
            a[i][i] += 1.0;
            let probs = switch_probs(graph, timing, v);
            for (e, p) in graph.edges(v).iter().zip(probs) {
                let w = e.target as usize;
                if let Some(&j) = local.get(&w) {
                    a[i][j] -= p;
                } else {
                    for &(k, q) in &resolution[w] {
                        exits[i].push((k, q * p));
                        targets.push(k);
                    }
                }
            }
        }
        targets.sort_unstable();
        targets.dedup();
        if targets.is_empty() {
            return Err(GspnError::VanishingTrap(comp[0]));
        }
        let col: std::collections::HashMap<u32, usize> =
            targets.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut b = vec![vec![0.0; targets.len()]; comp.len()];
        for (i, ex) in exits.iter().enumerate() {
            for &(k, q) in ex {
                b[i][col[&k]] += q;
            }
        }
        solve_dense(&mut a, &mut b).ok_or(GspnError::VanishingTrap(comp[0]))?;
        for (i, &v) in comp.iter().enumerate() {
            resolution[v] = targets
                .iter()
                .zip(&b[i])
                .filter(|(_, &q)| q.abs() > 1e-15)
                .map(|(&k, &q)| (k, q))
                .collect();
        }
    }

    let mut rows = Vec::with_capacity(tangible.len());
    let mut out_rate = Vec::with_capacity(tangible.len());
    for (i, &s) in tangible.iter().enumerate() {
        let mut row = Vec::new();
        for e in graph.edges(s as usize) {
            let r = timing.rate[e.transition as usize].expect("timed edge from tangible state");
            for &(k, q) in &resolution[e.target as usize] {
                if k as usize != i {
                    row.push((k, r * q));
                }
            }
        }
        let row = merge_dist(row);
        out_rate.push(row.iter().map(|e| e.1).sum());
        rows.push(row);
    }
    Ok(Generator {
        tangible,
        rows,
        out_rate,
        resolution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Gaussian elimination on the dense generator.
    Dense,
    /// Gauss-Seidel sweeps on `pi Q = 0`.
    GaussSeidel,
    /// Power iteration on the uniformized chain.
    Power,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Residual tolerance on `||pi Q||_1 / max_rate`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::GaussSeidel,
            tolerance: 1e-12,
            max_iterations: 200_000,
        }
    }
}

/// Scaled residual `||pi Q||_1 / max_rate`.
pub fn residual(gen: &Generator, pi: &[f64]) -> f64 {
    let n = gen.len();
    let mut r = vec![0.0; n];
    for (i, row) in gen.rows.iter().enumerate() {
        for &(j, q) in row {
            r[j as usize] += pi[i] * q;
        }
        r[i] -= pi[i] * gen.out_rate[i];
    }
    let max_rate = gen.out_rate.iter().cloned().fold(0.0, f64::max).max(1e-300);
    r.iter().map(|v| v.abs()).sum::<f64>() / max_rate
}

fn check_ergodic(gen: &Generator) -> Result<(), GspnError> {
    let n = gen.len();
    if n == 0 {
        return Err(GspnError::NotErgodic("no tangible states".into()));
    }
    // forward reachability from the initial distribution, then check every
    // reached state can reach every other (single closed class)
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, row) in gen.rows.iter().enumerate() {
        for &(j, _) in row {
            rev[j as usize].push(i as u32);
        }
    }
    let reach = |start: usize, adj: &dyn Fn(usize) -> Vec<u32>| {
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = q.pop_front() {
            for w in adj(v) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    q.push_back(w as usize);
                }
            }
        }
        seen
    };
    let start = gen.initial_distribution()[0].0 as usize;
    let fwd = reach(start, &|v| gen.rows[v].iter().map(|e| e.0).collect());
    // a closed class reachable from start: take any state with no escape
    let bwd_from_start = reach(start, &|v| rev[v].clone());
    if fwd.iter().zip(&bwd_from_start).all(|(&f, &b)| !f || b) {
        return Ok(());
    }
    // some reachable state cannot return to start: count closed classes
    let absorbing = (0..n).filter(|&i| fwd[i] && gen.out_rate[i] == 0.0).count();
    Err(GspnError::NotErgodic(format!(
        "reachable tangible states do not form a single recurrent class ({absorbing} absorbing)"
    )))
}

/// Stationary distribution over tangible states.
pub fn steady_state(gen: &Generator, opts: &SolverOptions) -> Result<Vec<f64>, GspnError> {
    check_ergodic(gen)?;
    match opts.method {
        SolverMethod::Dense => dense_solve(gen),
        SolverMethod::GaussSeidel => gauss_seidel(gen, opts),
        SolverMethod::Power => power(gen, opts),
    }
}

fn dense_solve(gen: &Generator) -> Result<Vec<f64>, GspnError> {
    let n = gen.len();
    let q = gen.dense();
    // Q^T pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| q[j][i]).collect()).collect();
    a[n - 1] = vec![1.0; n];
    let mut b: Vec<Vec<f64>> = vec![vec![0.0]; n];
    b[n - 1][0] = 1.0;
    solve_dense(&mut a, &mut b).ok_or_else(|| GspnError::NotErgodic("singular generator".into()))?;
    Ok(b.into_iter().map(|r| r[0].max(0.0)).collect())
}

fn incoming(gen: &Generator) -> Vec<Vec<(u32, f64)>> {
    let mut inc: Vec<Vec<(u32, f64)>> = vec![Vec::new(); gen.len()];
    for (i, row) in gen.rows.iter().enumerate() {
        for &(j, q) in row {
            inc[j as usize].push((i as u32, q));
        }
    }
    inc
}

fn normalize(pi: &mut [f64]) {
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
}

fn gauss_seidel(gen: &Generator, opts: &SolverOptions) -> Result<Vec<f64>, GspnError> {
    let n = gen.len();
    let inc = incoming(gen);
    let mut pi = vec![1.0 / n as f64; n];
    let mut res = f64::INFINITY;
    for it in 0..opts.max_iterations {
        for j in 0..n {
            if gen.out_rate[j] == 0.0 {
                continue;
            }
            let s: f64 = inc[j].iter().map(|&(i, q)| pi[i as usize] * q).sum();
            pi[j] = s / gen.out_rate[j];
        }
        normalize(&mut pi);
        if it % 10 == 9 || n < 64 {
            res = residual(gen, &pi);
            if res < opts.tolerance {
                return Ok(pi);
            }
        }
    }
    Err(GspnError::NoConvergence {
        residual: res,
        iterations: opts.max_iterations,
    })
}

fn power(gen: &Generator, opts: &SolverOptions) -> Result<Vec<f64>, GspnError> {
    let n = gen.len();
    // uniformization constant slightly above the largest exit rate keeps the
    // DTMC aperiodic
    let lambda = gen.out_rate.iter().cloned().fold(0.0, f64::max) * 1.02 + 1e-12;
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut res = f64::INFINITY;
    for it in 0..opts.max_iterations {
        for (j, v) in next.iter_mut().enumerate() {
            *v = pi[j] * (1.0 - gen.out_rate[j] / lambda);
        }
        for (i, row) in gen.rows.iter().enumerate() {
            let w = pi[i] / lambda;
            for &(j, q) in row {
                next[j as usize] += w * q;
            }
        }
        std::mem::swap(&mut pi, &mut next);
        if it % 50 == 49 {
            normalize(&mut pi);
            res = residual(gen, &pi);
            if res < opts.tolerance {
                return Ok(pi);
            }
        }
    }
    Err(GspnError::NoConvergence {
        residual: res,
        iterations: opts.max_iterations,
    })
}

/// Firings per second of every transition.
///
/// Timed: `sum pi(s) * rate` over tangible states enabling it. Immediate:
/// the rate at which vanishing states are entered, pushed through the
/// switch probabilities.
pub fn throughputs(graph: &ReachabilityGraph, gen: &Generator, timing: &GspnTiming, pi: &[f64]) -> Vec<f64> {
    let nt = timing.rate.len();
    let n = graph.num_states();
    let mut thr = vec![0.0; nt];
    // inflow into vanishing states
    let mut inflow = vec![0.0; n];
    for (i, &s) in gen.tangible.iter().enumerate() {
        for e in graph.edges(s as usize) {
            let r = timing.rate[e.transition as usize].unwrap_or(0.0);
            thr[e.transition as usize] += pi[i] * r;
            if graph.kind(e.target as usize) == StateKind::Vanishing {
                inflow[e.target as usize] += pi[i] * r;
            }
        }
    }
    // SCCs come sinks first; push flow in reverse (sources first)
    let sccs = vanishing_sccs(graph);
    for comp in sccs.iter().rev() {
        let flows: Vec<f64> = if comp.len() == 1
            && !graph.edges(comp[0]).iter().any(|e| e.target as usize == comp[0])
        {
            vec![inflow[comp[0]]]
        } else {
            // f = inflow + P_cc^T f
            let local: std::collections::HashMap<usize, usize> =
                comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let k = comp.len();
            let mut a = vec![vec![0.0; k]; k];
            let mut b = vec![vec![0.0]; k];
            for (i, &v) in comp.iter().enumerate() {
                a[i][i] += 1.0;
                b[i][0] = inflow[v];
            }
            for (i, &v) in comp.iter().enumerate() {
                let probs = switch_probs(graph, timing, v);
                for (e, p) in graph.edges(v).iter().zip(probs) {
                    if let Some(&j) = local.get(&(e.target as usize)) {
                        a[j][i] -= p;
                    }
                }
            }
            if solve_dense(&mut a, &mut b).is_none() {
                vec![0.0; k]
            } else {
                b.into_iter().map(|r| r[0]).collect()
            }
        };
        for (&v, &f) in comp.iter().zip(&flows) {
            let probs = switch_probs(graph, timing, v);
            for (e, p) in graph.edges(v).iter().zip(probs) {
                thr[e.transition as usize] += f * p;
                let w = e.target as usize;
                if graph.kind(w) == StateKind::Vanishing && !comp.contains(&w) {
                    inflow[w] += f * p;
                }
            }
        }
    }
    thr
}

/// Expected tokens per place under the stationary distribution.
pub fn mean_marking(graph: &ReachabilityGraph, gen: &Generator, pi: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; graph.num_places()];
    for (i, &s) in gen.tangible.iter().enumerate() {
        for (p, k) in graph.marking(s as usize).into_iter().enumerate() {
            out[p] += pi[i] * f64::from(k);
        }
    }
    out
}

/// Steady-state result of a GSPN.
#[derive(Debug, Clone, Serialize)]
pub struct CtmcResult {
    pub num_states: usize,
    pub num_tangible: usize,
    pub probabilities: Vec<f64>,
    /// firings/sec per transition, indexed like the net's transitions
    pub throughput: Vec<f64>,
    pub mean_marking: Vec<f64>,
    pub residual: f64,
}

impl CtmcResult {
    pub fn mean_cycle_time(&self, t: usize) -> f64 {
        1.0 / self.throughput[t]
    }
}

/// Explore, eliminate, solve and measure in one go.
pub fn analyze(
    net: &PetriNet,
    timing: &TimingSpec,
    state_cap: usize,
    opts: &SolverOptions,
) -> Result<CtmcResult, GspnError> {
    let gt = GspnTiming::from_spec(net, timing)?;
    let graph = explore_with(net, &gt, state_cap)?;
    let gen = eliminate_vanishing(&graph, &gt)?;
    let pi = steady_state(&gen, opts)?;
    let throughput = throughputs(&graph, &gen, &gt, &pi);
    Ok(CtmcResult {
        num_states: graph.num_states(),
        num_tangible: gen.len(),
        residual: residual(&gen, &pi),
        mean_marking: mean_marking(&graph, &gen, &pi),
        probabilities: pi,
        throughput,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cycle(rate1: f64, rate2: f64) -> (PetriNet, TimingSpec) {
        let mut n = PetriNet::new();
        n.add_place("p1", 1).unwrap();
        n.add_place("p2", 0).unwrap();
        n.add_simple_transition("t1", &["p1"], &["p2"]).unwrap();
        n.add_simple_transition("t2", &["p2"], &["p1"]).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("t1", Timing::exponential(1.0 / rate1));
        tm.set("t2", Timing::exponential(1.0 / rate2));
        (n, tm)
    }

    #[test]
    fn two_place_cycle_graph() {
        let (n, tm) = cycle(1.0, 1.0);
        let g = explore(&n, &tm, 100).unwrap();
        assert_eq!(g.num_states(), 2);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn single_cycle_throughput_is_lambda_over_length() {
        let (n, tm) = cycle(4.0, 4.0);
        let r = analyze(&n, &tm, 100, &SolverOptions::default()).unwrap();
        assert_relative_eq!(r.throughput[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(r.throughput[1], 2.0, epsilon = 1e-10);
        // unequal rates: renewal cycle of mean 1/2 + 1/3
        let (n, tm) = cycle(2.0, 3.0);
        let r = analyze(&n, &tm, 100, &SolverOptions::default()).unwrap();
        assert_relative_eq!(r.throughput[0], 1.0 / (0.5 + 1.0 / 3.0), epsilon = 1e-10);
    }

    #[test]
    fn immediate_throughput_follows_switch_probabilities() {
        // p1 -t(exp 1)-> p2 ; p2 -a(w=1)-> p1 ; p2 -b(w=3)-> p1
        let mut n = PetriNet::new();
        n.add_place("p1", 1).unwrap();
        n.add_place("p2", 0).unwrap();
        n.add_simple_transition("t", &["p1"], &["p2"]).unwrap();
        n.add_simple_transition("a", &["p2"], &["p1"]).unwrap();
        n.add_simple_transition("b", &["p2"], &["p1"]).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("t", Timing::exponential(1.0));
        tm.set("b", Timing::Immediate { weight: 3.0 });
        let r = analyze(&n, &tm, 100, &SolverOptions::default()).unwrap();
        assert_eq!(r.num_tangible, 1);
        assert_relative_eq!(r.throughput[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.throughput[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(r.throughput[2], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn vanishing_cycle_is_resolved() {
        // two immediate transitions bouncing a token between v1 and v2, with a
        // weighted exit back to the tangible place
        let mut n = PetriNet::new();
        n.add_place("t0", 1).unwrap();
        n.add_place("v1", 0).unwrap();
        n.add_place("v2", 0).unwrap();
        n.add_simple_transition("go", &["t0"], &["v1"]).unwrap();
        n.add_simple_transition("a", &["v1"], &["v2"]).unwrap();
        n.add_simple_transition("b", &["v2"], &["v1"]).unwrap();
        n.add_simple_transition("out", &["v2"], &["t0"]).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("go", Timing::exponential(0.5));
        let r = analyze(&n, &tm, 100, &SolverOptions::default()).unwrap();
        assert_relative_eq!(r.throughput[0], 2.0, epsilon = 1e-10);
        // each visit to v2 leaves w.p. 1/2: expected 2 visits of a, 1 of b
        assert_relative_eq!(r.throughput[1], 4.0, epsilon = 1e-9);
        assert_relative_eq!(r.throughput[2], 2.0, epsilon = 1e-9);
        assert_relative_eq!(r.throughput[3], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn vanishing_trap_detected() {
        let mut n = PetriNet::new();
        n.add_place("t0", 1).unwrap();
        n.add_place("v1", 0).unwrap();
        n.add_place("v2", 0).unwrap();
        n.add_simple_transition("go", &["t0"], &["v1"]).unwrap();
        n.add_simple_transition("a", &["v1"], &["v2"]).unwrap();
        n.add_simple_transition("b", &["v2"], &["v1"]).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("go", Timing::exponential(1.0));
        let err = analyze(&n, &tm, 100, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, GspnError::VanishingTrap(_)));
    }

    #[test]
    fn cap_and_unbounded() {
        let mut n = PetriNet::new();
        n.add_place("p", 1).unwrap();
        n.add_place("acc", 0).unwrap();
        n.add_transition("t").unwrap();
        n.add_input_arc("p", "t", 1).unwrap();
        n.add_output_arc("t", "p", 1).unwrap();
        n.add_output_arc("t", "acc", 1).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("t", Timing::exponential(1.0));
        assert!(matches!(explore(&n, &tm, 1000), Err(GspnError::Unbounded { .. })));
        let (c, tm) = cycle(1.0, 1.0);
        assert!(matches!(explore(&c, &tm, 1), Err(GspnError::CapExceeded { .. })));
    }

    #[test]
    fn solvers_agree() {
        // three-station closed tandem with two customers
        let mut n = PetriNet::new();
        n.add_place("a", 2).unwrap();
        n.add_place("b", 0).unwrap();
        n.add_place("c", 0).unwrap();
        n.add_simple_transition("x", &["a"], &["b"]).unwrap();
        n.add_simple_transition("y", &["b"], &["c"]).unwrap();
        n.add_simple_transition("z", &["c"], &["a"]).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("x", Timing::exponential(1.0));
        tm.set("y", Timing::exponential(0.5));
        tm.set("z", Timing::exponential(0.25));
        let gt = GspnTiming::from_spec(&n, &tm).unwrap();
        let g = explore_with(&n, &gt, 100).unwrap();
        let gen = eliminate_vanishing(&g, &gt).unwrap();
        let dense = steady_state(&gen, &SolverOptions { method: SolverMethod::Dense, ..Default::default() }).unwrap();
        for method in [SolverMethod::GaussSeidel, SolverMethod::Power] {
            let pi = steady_state(&gen, &SolverOptions { method, ..Default::default() }).unwrap();
            for (a, b) in pi.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        assert!(gen.max_row_sum_error() < 1e-12);
    }

    #[test]
    fn absorbing_chain_is_not_ergodic() {
        let mut n = PetriNet::new();
        n.add_place("a", 1).unwrap();
        n.add_place("b", 0).unwrap();
        n.add_simple_transition("t", &["a"], &["b"]).unwrap();
        let mut tm = TimingSpec::new();
        tm.set("t", Timing::exponential(1.0));
        let err = analyze(&n, &tm, 10, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, GspnError::NotErgodic(_)));
    }

    #[test]
    fn deterministic_timing_rejected() {
        let (n, mut tm) = cycle(1.0, 1.0);
        tm.set("t1", Timing::Deterministic { delay: 1.0 });
        assert!(matches!(explore(&n, &tm, 10), Err(GspnError::NonExponential(_))));
    }
}
