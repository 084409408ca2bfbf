//! Structural throughput bounds for timed marked graphs.

use serde::Serialize;
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, Relation};
use crate::net::PetriNet;
use crate::structural::{minimal_p_semiflows, AnnullerKind, AnnullerVector, MarkedGraph, StructuralError};
use crate::timing::TimingSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("bound LP infeasible or unbounded: {0}")]
    InfeasibleLP(String),
    #[error("circuit {0:?} carries no token; cycle time is unbounded")]
    NonpositiveTokens(Vec<String>),
    #[error("delay vector has {got} entries, net has {expected} transitions")]
    Length { expected: usize, got: usize },
    #[error("negative or non-finite delay {1} on transition `{0}`")]
    BadDelay(String, f64),
    #[error("LP optimum {lp} disagrees with max cycle ratio {ratio}")]
    Disagreement { lp: f64, ratio: f64 },
    #[error("liveness bound of `{0}` must be at least 1")]
    BadLivenessBound(String),
    #[error(transparent)]
    Structural(#[from] StructuralError),
}

#[derive(Debug, Clone, Serialize)]
pub struct Circuit {
    pub transitions: Vec<String>,
    pub places: Vec<String>,
    pub delay: f64,
    pub tokens: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundResult {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub critical_semiflow: AnnullerVector,
    pub critical_circuit: Option<Circuit>,
    pub longest_circuit: Option<Circuit>,
    pub throughput_upper: f64,
    pub throughput_lower: f64,
}

fn check_theta(net: &PetriNet, theta: &[f64]) -> Result<(), BoundsError> {
    if theta.len() != net.num_transitions() {
        return Err(BoundsError::Length {
            expected: net.num_transitions(),
            got: theta.len(),
        });
    }
    for (t, &d) in theta.iter().enumerate() {
        if !(d.is_finite() && d >= 0.0) {
            return Err(BoundsError::BadDelay(net.transition_name(t).into(), d));
        }
    }
    Ok(())
}

/// `max Y^T Pre theta  s.t.  Y^T C = 0, Y^T m0 = 1, Y >= 0`.
pub fn gamma_min_lp(net: &PetriNet, theta: &[f64]) -> Result<(f64, Vec<f64>), BoundsError> {
    check_theta(net, theta)?;
    let (np, nt) = (net.num_places(), net.num_transitions());
    let c = net.incidence();
    let obj: Vec<f64> = (0..np)
        .map(|p| (0..nt).map(|t| f64::from(net.pre(p, t)) * theta[t]).sum())
        .collect();
    let mut lp = LinearProgram::maximize(obj);
    let err = |e: LpError| BoundsError::InfeasibleLP(e.to_string());
    for t in 0..nt {
        lp.constraint((0..np).map(|p| c[p][t] as f64).collect(), Relation::Eq, 0.0)
            .map_err(err)?;
    }
    lp.constraint((0..np).map(|p| f64::from(net.m0(p))).collect(), Relation::Eq, 1.0)
        .map_err(err)?;
    let sol = lp.solve().map_err(err)?;
    Ok((sol.value, sol.x))
}

fn circuit_of(net: &PetriNet, g: &MarkedGraph, edges: &[usize], theta: &[f64]) -> Circuit {
    let mut c = Circuit {
        transitions: Vec::new(),
        places: Vec::new(),
        delay: 0.0,
        tokens: 0,
    };
    for &e in edges {
        let (from, _, p, tok) = g.edges[e];
        c.transitions.push(net.transition_name(from).to_string());
        c.places.push(net.place_name(p).to_string());
        c.delay += theta[from];
        c.tokens += u64::from(tok);
    }
    c
}

/// Positive cycle under weights `theta(src) - lambda * tokens`, found by
/// Bellman-Ford longest paths from a virtual source.
fn positive_cycle(g: &MarkedGraph, theta: &[f64], lambda: f64) -> Option<Vec<usize>> {
    let n = g.num_transitions;
    let mut dist = vec![0.0f64; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let eps = 1e-12 * (1.0 + lambda.abs());
    let mut last = None;
    for _ in 0..=n {
        last = None;
        for (e, &(from, to, _, tok)) in g.edges.iter().enumerate() {
            let w = theta[from] - lambda * f64::from(tok);
            if dist[from] + w > dist[to] + eps {
                dist[to] = dist[from] + w;
                pred[to] = Some(e);
                last = Some(to);
            }
        }
        last?;
    }
    let mut v = last?;
    for _ in 0..n {
        v = g.edges[pred[v]?].0;
    }
    let start = v;
    let mut cycle = Vec::new();
    loop {
        let e = pred[v]?;
        cycle.push(e);
        v = g.edges[e].0;
        if v == start {
            break;
        }
    }
    cycle.reverse();
    Some(cycle)
}

/// Maximum over circuits of delay/tokens, by Dinkelbach iteration on an
/// exact circuit ratio. Returns the critical circuit.
pub fn max_cycle_ratio(net: &PetriNet, theta: &[f64]) -> Result<(f64, Circuit), BoundsError> {
    check_theta(net, theta)?;
    let g = MarkedGraph::new(net)?;
    // zero-token circuits make the ratio unbounded
    let live = crate::structural::liveness_marked_graph(net)?;
    if let Some(w) = live.witness {
        return Err(BoundsError::NonpositiveTokens(w));
    }
    let start = (0..g.num_transitions)
        .find_map(|t| g.min_circuit_through(t))
        .ok_or_else(|| BoundsError::InfeasibleLP("net has no circuit".into()))?;
    let mut best = circuit_of(net, &g, &start.1, theta);
    let mut lambda = best.delay / best.tokens as f64;
    while let Some(c) = positive_cycle(&g, theta, lambda) {
        let cand = circuit_of(net, &g, &c, theta);
        let r = cand.delay / cand.tokens as f64;
        if r <= lambda {
            break;
        }
        lambda = r;
        best = cand;
    }
    Ok((lambda, best))
}

/// Lower bound on the mean cycle time. For marked graphs the LP optimum is
/// cross-checked against the combinatorial max cycle ratio.
pub fn gamma_min(net: &PetriNet, theta: &[f64]) -> Result<(f64, AnnullerVector), BoundsError> {
    let (lp, y) = gamma_min_lp(net, theta)?;
    if crate::structural::classify(net).is_marked_graph {
        let (ratio, circuit) = max_cycle_ratio(net, theta)?;
        if (lp - ratio).abs() > 1e-9 * ratio.abs().max(1e-300) {
            return Err(BoundsError::Disagreement { lp, ratio });
        }
        let mut coefficients = vec![0u64; net.num_places()];
        for p in &circuit.places {
            coefficients[net.place_index(p).expect("circuit place")] = 1;
        }
        return Ok((
            ratio,
            AnnullerVector {
                kind: AnnullerKind::PSemiflow,
                coefficients,
                minimal_support: true,
            },
        ));
    }
    // scale the LP vertex to an integer-looking canonical form
    let min_pos = y.iter().copied().filter(|&v| v > 1e-9).fold(f64::INFINITY, f64::min);
    let coefficients = y
        .iter()
        .map(|&v| if v > 1e-9 { (v / min_pos).round() as u64 } else { 0 })
        .collect();
    Ok((
        lp,
        AnnullerVector {
            kind: AnnullerKind::PSemiflow,
            coefficients,
            minimal_support: false,
        },
    ))
}

/// Minimum tokens over circuits through `t`.
pub fn liveness_bound(net: &PetriNet, t: &str) -> Result<u64, BoundsError> {
    let g = MarkedGraph::new(net)?;
    let idx = net.transition(t).map_err(StructuralError::from)?;
    match g.min_circuit_through(idx) {
        Some((0, c)) => Err(BoundsError::NonpositiveTokens(g.circuit_names(net, &c))),
        Some((k, _)) => Ok(k),
        None => Err(BoundsError::InfeasibleLP(format!("`{t}` lies on no circuit"))),
    }
}

/// Upper bound on the mean cycle time: the largest `sum theta/lb` over the
/// circuits (minimal P-semiflows) of a marked graph.
pub fn gamma_max(net: &PetriNet, theta: &[f64], lb: &[u64]) -> Result<(f64, Circuit), BoundsError> {
    check_theta(net, theta)?;
    let g = MarkedGraph::new(net)?;
    if let Some(t) = lb.iter().position(|&l| l == 0) {
        return Err(BoundsError::BadLivenessBound(net.transition_name(t).into()));
    }
    let flows = minimal_p_semiflows(net);
    let mut best: Option<(f64, Circuit)> = None;
    for f in &flows {
        let mut edges = Vec::new();
        for p in f.support() {
            edges.push(g.edges.iter().position(|e| e.2 == p).expect("one edge per place"));
        }
        // order edges along the circuit
        let mut ordered = vec![edges[0]];
        while ordered.len() < edges.len() {
            let to = g.edges[*ordered.last().unwrap()].1;
            let next = *edges.iter().find(|&&e| g.edges[e].0 == to).expect("closed circuit");
            ordered.push(next);
        }
        let c = circuit_of(net, &g, &ordered, theta);
        if c.tokens == 0 {
            return Err(BoundsError::NonpositiveTokens(g.circuit_names(net, &ordered)));
        }
        let value: f64 = ordered
            .iter()
            .map(|&e| {
                let t = g.edges[e].0;
                theta[t] / lb.get(t).copied().unwrap_or(1) as f64
            })
            .sum();
        if best.as_ref().map_or(true, |(b, _)| value > *b) {
            best = Some((value, c));
        }
    }
    best.ok_or_else(|| BoundsError::InfeasibleLP("net has no circuit".into()))
}

/// Both bounds with liveness bounds computed per transition.
pub fn bounds(net: &PetriNet, timing: &TimingSpec) -> Result<BoundResult, BoundsError> {
    let theta = timing.means(net);
    let (gmin, critical_semiflow) = gamma_min(net, &theta)?;
    let (_, critical) = max_cycle_ratio(net, &theta)?;
    let lb: Vec<u64> = net
        .transitions()
        .iter()
        .map(|t| liveness_bound(net, t))
        .collect::<Result<_, _>>()?;
    let (gmax, longest) = gamma_max(net, &theta, &lb)?;
    Ok(BoundResult {
        gamma_min: gmin,
        gamma_max: gmax,
        critical_semiflow,
        critical_circuit: Some(critical),
        longest_circuit: Some(longest),
        throughput_upper: 1.0 / gmin,
        throughput_lower: 1.0 / gmax,
    })
}
