//! Structural analysis: semiflows, marked-graph classification, liveness,
//! synchronic leads and concurrency limits.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::composition::{make_dtp, CompositionError, TimedNet};
use crate::net::{CompiledNet, PetriNet};
use crate::statespace::{structural_place_bounds, StateEncoding, StateStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StructuralError {
    #[error("net is not a marked graph (place `{0}` does not have exactly one input and one output transition)")]
    NotMarkedGraph(String),
    #[error("marked graph is not live: circuit {0:?} carries no token")]
    NotLive(Vec<String>),
    #[error("reachability set exceeds {0} markings")]
    TooManyMarkings(usize),
    #[error("expected 4 transitions, got {0}")]
    QuadSize(usize),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnullerKind {
    PSemiflow,
    TInvariant,
}

/// Nonnegative integer left (P) or right (T) annuller of the incidence matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnullerVector {
    pub kind: AnnullerKind,
    pub coefficients: Vec<u64>,
    pub minimal_support: bool,
}

impl AnnullerVector {
    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&i| self.coefficients[i] > 0)
            .collect()
    }

    /// Names of the supporting places or transitions.
    pub fn support_names<'a>(&self, net: &'a PetriNet) -> Vec<&'a str> {
        let names = match self.kind {
            AnnullerKind::PSemiflow => net.places(),
            AnnullerKind::TInvariant => net.transitions(),
        };
        self.support().into_iter().map(|i| names[i].as_str()).collect()
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Clone)]
struct FRow {
    /// remaining columns of the matrix being annulled
    c: Vec<i128>,
    /// coefficient vector
    y: Vec<i128>,
    support: Vec<u64>,
}

impl FRow {
    fn normalize(&mut self) {
        let g = self.c.iter().chain(&self.y).fold(0, |g, &v| gcd(g, v));
        if g > 1 {
            self.c.iter_mut().chain(self.y.iter_mut()).for_each(|v| *v /= g);
        }
    }
}

fn support_of(y: &[i128]) -> Vec<u64> {
    let mut s = vec![0u64; y.len().div_ceil(64)];
    for (i, &v) in y.iter().enumerate() {
        if v != 0 {
            s[i / 64] |= 1 << (i % 64);
        }
    }
    s
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

/// Minimal-support nonnegative integer vectors `y` with `y^T A = 0`, where
/// `a` is given row-wise (one row per entry of `y`). Fourier-Motzkin style
/// elimination with support pruning after every column.
fn farkas(a: &[Vec<i64>]) -> Vec<Vec<u64>> {
    let n = a.len();
    let m = a.first().map_or(0, Vec::len);
    let mut rows: Vec<FRow> = (0..n)
        .map(|i| {
            let mut y = vec![0i128; n];
            y[i] = 1;
            FRow {
                c: a[i].iter().map(|&v| i128::from(v)).collect(),
                support: support_of(&y),
                y,
            }
        })
        .collect();
    for col in 0..m {
        let (zero, nonzero): (Vec<FRow>, Vec<FRow>) = rows.into_iter().partition(|r| r.c[col] == 0);
        let (pos, neg): (Vec<FRow>, Vec<FRow>) = nonzero.into_iter().partition(|r| r.c[col] > 0);
        let mut next = zero;
        let mut fresh: Vec<FRow> = Vec::new();
        for p in &pos {
            for q in &neg {
                let support: Vec<u64> = p.support.iter().zip(&q.support).map(|(a, b)| a | b).collect();
                // a combination whose support contains a kept row's support is never minimal
                if next.iter().any(|r| subset(&r.support, &support)) {
                    continue;
                }
                let (a, b) = (p.c[col], -q.c[col]);
                let g = gcd(a, b);
                let (fa, fb) = (b / g, a / g);
                let mut row = FRow {
                    c: p.c.iter().zip(&q.c).map(|(x, y)| fa * x + fb * y).collect(),
                    y: p.y.iter().zip(&q.y).map(|(x, y)| fa * x + fb * y).collect(),
                    support,
                };
                row.normalize();
                fresh.push(row);
            }
        }
        // keep only support-minimal fresh rows
        fresh.sort_by_key(|r| r.support.iter().map(|w| w.count_ones()).sum::<u32>());
        let mut kept: Vec<FRow> = Vec::new();
        for r in fresh {
            if kept.iter().any(|k| subset(&k.support, &r.support)) {
                continue;
            }
            kept.push(r);
        }
        next.extend(kept);
        rows = next;
    }
    let mut out: Vec<Vec<u64>> = rows
        .into_iter()
        .map(|r| r.y.into_iter().map(|v| v as u64).collect())
        .collect();
    // final minimality pass (rows kept early may strictly contain later ones)
    let supports: Vec<Vec<u64>> = out
        .iter()
        .map(|y| support_of(&y.iter().map(|&v| v as i128).collect::<Vec<_>>()))
        .collect();
    let keep: Vec<bool> = (0..out.len())
        .map(|i| {
            !(0..out.len()).any(|j| {
                j != i
                    && subset(&supports[j], &supports[i])
                    && (supports[j] != supports[i] || j < i)
            })
        })
        .collect();
    let mut k = keep.into_iter();
    out.retain(|_| k.next().unwrap_or(false));
    out.sort();
    out.dedup();
    out
}

/// All minimal-support P-semiflows (`Y^T C = 0`), canonical (gcd 1, sorted).
pub fn minimal_p_semiflows(net: &PetriNet) -> Vec<AnnullerVector> {
    farkas(&net.incidence())
        .into_iter()
        .map(|coefficients| AnnullerVector {
            kind: AnnullerKind::PSemiflow,
            coefficients,
            minimal_support: true,
        })
        .collect()
}

/// All minimal-support T-invariants (`C X = 0`).
pub fn minimal_t_invariants(net: &PetriNet) -> Vec<AnnullerVector> {
    let c = net.incidence();
    let ct: Vec<Vec<i64>> = (0..net.num_transitions())
        .map(|t| (0..net.num_places()).map(|p| c[p][t]).collect())
        .collect();
    farkas(&ct)
        .into_iter()
        .map(|coefficients| AnnullerVector {
            kind: AnnullerKind::TInvariant,
            coefficients,
            minimal_support: true,
        })
        .collect()
}

/// True when every place lies in the support of some P-semiflow.
pub fn is_conservative(net: &PetriNet) -> bool {
    let flows = minimal_p_semiflows(net);
    (0..net.num_places()).all(|p| flows.iter().any(|f| f.coefficients[p] > 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub is_marked_graph: bool,
    pub is_strongly_connected: bool,
}

pub fn classify(net: &PetriNet) -> Classification {
    let is_marked_graph = marked_graph_violation(net).is_none();
    Classification {
        is_marked_graph,
        is_strongly_connected: strongly_connected(net),
    }
}

fn marked_graph_violation(net: &PetriNet) -> Option<String> {
    (0..net.num_places())
        .find(|&p| {
            let ins = net.place_producers(p);
            let outs = net.place_consumers(p);
            ins.len() != 1
                || outs.len() != 1
                || net.post(p, ins[0]) != 1
                || net.pre(p, outs[0]) != 1
        })
        .map(|p| net.place_name(p).to_string())
}

/// Strong connectivity of the bipartite node graph (places and transitions).
fn strongly_connected(net: &PetriNet) -> bool {
    let (np, nt) = (net.num_places(), net.num_transitions());
    let n = np + nt;
    if n == 0 {
        return true;
    }
    // node ids: places 0..np, transitions np..
    let mut fwd: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut bwd: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..np {
        for t in 0..nt {
            if net.pre(p, t) > 0 {
                fwd[p].push(np + t);
                bwd[np + t].push(p);
            }
            if net.post(p, t) > 0 {
                fwd[np + t].push(p);
                bwd[p].push(np + t);
            }
        }
    }
    let all = |adj: &Vec<Vec<usize>>| {
        let mut seen = vec![false; n];
        let mut q = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    all(&fwd) && all(&bwd)
}

/// Transition digraph of a marked graph: one edge per place, weighted by its
/// initial tokens.
#[derive(Debug, Clone)]
pub struct MarkedGraph {
    /// `(from transition, to transition, place, tokens)`
    pub edges: Vec<(usize, usize, usize, u32)>,
    pub out: Vec<Vec<usize>>,
    pub num_transitions: usize,
}

impl MarkedGraph {
    pub fn new(net: &PetriNet) -> Result<Self, StructuralError> {
        if let Some(p) = marked_graph_violation(net) {
            return Err(StructuralError::NotMarkedGraph(p));
        }
        let nt = net.num_transitions();
        let mut edges = Vec::with_capacity(net.num_places());
        let mut out = vec![Vec::new(); nt];
        for p in 0..net.num_places() {
            let from = net.place_producers(p)[0];
            let to = net.place_consumers(p)[0];
            out[from].push(edges.len());
            edges.push((from, to, p, net.m0(p)));
        }
        Ok(MarkedGraph {
            edges,
            out,
            num_transitions: nt,
        })
    }

    /// Dijkstra on token counts from `src`; returns distances and the edge
    /// used to reach each transition.
    pub fn token_distances(&self, src: usize) -> (Vec<u64>, Vec<Option<usize>>) {
        let mut dist = vec![u64::MAX; self.num_transitions];
        let mut via = vec![None; self.num_transitions];
        let mut heap = BinaryHeap::new();
        dist[src] = 0;
        heap.push(Reverse((0u64, src)));
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &e in &self.out[v] {
                let (_, w, _, tok) = self.edges[e];
                let nd = d + u64::from(tok);
                if nd < dist[w] {
                    dist[w] = nd;
                    via[w] = Some(e);
                    heap.push(Reverse((nd, w)));
                }
            }
        }
        (dist, via)
    }

    /// Minimum-token circuit through `t` as a list of edge indices.
    pub fn min_circuit_through(&self, t: usize) -> Option<(u64, Vec<usize>)> {
        let (dist, via) = self.token_distances(t);
        let mut best: Option<(u64, usize)> = None;
        for (e, &(from, to, _, tok)) in self.edges.iter().enumerate() {
            if to == t && dist[from] != u64::MAX {
                let total = dist[from] + u64::from(tok);
                if best.map_or(true, |(b, _)| total < b) {
                    best = Some((total, e));
                }
            }
        }
        let (total, last) = best?;
        let mut path = vec![last];
        let mut v = self.edges[last].0;
        while v != t {
            let e = via[v].expect("reachable");
            path.push(e);
            v = self.edges[e].0;
        }
        path.reverse();
        Some((total, path))
    }

    /// Whether some reachable marking puts at least `need[p]` tokens on every
    /// place of a live marked graph: no circuit may need more tokens than it
    /// holds (Bellman-Ford on `tokens - need`).
    pub fn can_cover(&self, need: &[u32]) -> bool {
        let mut dist = vec![0i64; self.num_transitions];
        for round in 0..=self.num_transitions {
            let mut changed = false;
            for &(from, to, p, tok) in &self.edges {
                let w = i64::from(tok) - i64::from(need[p]);
                if dist[from] + w < dist[to] {
                    dist[to] = dist[from] + w;
                    changed = true;
                }
            }
            if !changed {
                return true;
            }
            if round == self.num_transitions {
                break;
            }
        }
        false
    }

    /// Alternating node names of a circuit given by edge indices.
    pub fn circuit_names(&self, net: &PetriNet, edges: &[usize]) -> Vec<String> {
        let mut out = Vec::new();
        for &e in edges {
            let (from, _, p, _) = self.edges[e];
            out.push(net.transition_name(from).to_string());
            out.push(net.place_name(p).to_string());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Liveness {
    pub live: bool,
    pub min_circuit_tokens: Option<u64>,
    /// zero-token circuit as alternating transition/place names
    pub witness: Option<Vec<String>>,
}

/// A marked graph is live iff every circuit carries a token; decided by a
/// minimum-token circuit search rather than circuit enumeration.
pub fn liveness_marked_graph(net: &PetriNet) -> Result<Liveness, StructuralError> {
    let g = MarkedGraph::new(net)?;
    let mut best: Option<(u64, Vec<usize>)> = None;
    for t in 0..g.num_transitions {
        if let Some((tok, c)) = g.min_circuit_through(t) {
            if best.as_ref().map_or(true, |(b, _)| tok < *b) {
                best = Some((tok, c));
            }
        }
    }
    Ok(match best {
        Some((0, c)) => Liveness {
            live: false,
            min_circuit_tokens: Some(0),
            witness: Some(g.circuit_names(net, &c)),
        },
        Some((tok, _)) => Liveness {
            live: true,
            min_circuit_tokens: Some(tok),
            witness: None,
        },
        // acyclic: transitions without input places fire forever, others die
        None => Liveness {
            live: false,
            min_circuit_tokens: None,
            witness: None,
        },
    })
}

/// Maximum over firing sequences of `#t_a - #t_b`: the minimum token count
/// over directed paths from `t_b` to `t_a`. `None` means unbounded.
pub fn synchronic_lead(net: &PetriNet, t_a: &str, t_b: &str) -> Result<Option<u64>, StructuralError> {
    let (a, b) = (net.transition(t_a)?, net.transition(t_b)?);
    let g = MarkedGraph::new(net)?;
    let live = liveness_marked_graph(net)?;
    if !live.live {
        return Err(StructuralError::NotLive(live.witness.unwrap_or_default()));
    }
    if a == b {
        return Ok(Some(0));
    }
    let (dist, _) = g.token_distances(b);
    Ok((dist[a] != u64::MAX).then_some(dist[a]))
}

/// Synchronic distance: the larger of the two leads.
pub fn synchronic_distance(net: &PetriNet, t_a: &str, t_b: &str) -> Result<Option<u64>, StructuralError> {
    let ab = synchronic_lead(net, t_a, t_b)?;
    let ba = synchronic_lead(net, t_b, t_a)?;
    Ok(match (ab, ba) {
        (Some(x), Some(y)) => Some(x.max(y)),
        _ => None,
    })
}

/// Breadth-first reachability set.
pub fn reachable_markings(net: &PetriNet, cap: usize) -> Result<StateStore, StructuralError> {
    let cn = CompiledNet::new(net);
    let enc = StateEncoding::from_bounds(&structural_place_bounds(net));
    let mut store = StateStore::new(enc.clone());
    let mut buf = vec![0u64; enc.words()];
    let too_many = || StructuralError::TooManyMarkings(cap);
    enc.encode(&net.initial_marking().0, &mut buf).ok_or_else(too_many)?;
    store.intern(&buf);
    let mut m = vec![0u32; net.num_places()];
    let mut s = 0;
    while s < store.len() {
        store.decode(s, &mut m);
        for t in 0..net.num_transitions() {
            if cn.is_enabled(&m, t) {
                let mut next = m.clone();
                cn.fire_in_place(&mut next, t);
                enc.encode(&next, &mut buf).ok_or_else(too_many)?;
                store.intern(&buf);
                if store.len() > cap {
                    return Err(too_many());
                }
            }
        }
        s += 1;
    }
    Ok(store)
}

/// Largest subset of `quad` that is concurrently enabled (as a step) at some
/// reachable marking. Live marked graphs are decided from their circuits;
/// other nets by enumerating at most `cap` markings.
pub fn concurrency_quad_check(net: &PetriNet, quad: &[&str], cap: usize) -> Result<usize, StructuralError> {
    if quad.len() != 4 {
        return Err(StructuralError::QuadSize(quad.len()));
    }
    let ts: Vec<usize> = quad
        .iter()
        .map(|t| net.transition(t))
        .collect::<Result<_, _>>()?;
    let need = |mask: u32| -> Vec<u32> {
        (0..net.num_places())
            .map(|p| (0..4).filter(|k| mask & (1 << k) != 0).map(|k| net.pre(p, ts[k])).sum())
            .collect()
    };
    if let Ok(g) = MarkedGraph::new(net) {
        if liveness_marked_graph(net)?.live {
            return Ok((1u32..16)
                .filter(|&mask| g.can_cover(&need(mask)))
                .map(|mask| mask.count_ones() as usize)
                .max()
                .unwrap_or(0));
        }
    }
    concurrency_by_enumeration(net, &ts, cap)
}

/// Same as [`concurrency_quad_check`] by exhaustive reachability.
pub fn concurrency_by_enumeration(net: &PetriNet, ts: &[usize], cap: usize) -> Result<usize, StructuralError> {
    let store = reachable_markings(net, cap)?;
    let mut m = vec![0u32; net.num_places()];
    let mut best = 0;
    let k = ts.len();
    for s in 0..store.len() {
        store.decode(s, &mut m);
        for mask in 1u32..(1 << k) {
            let size = mask.count_ones() as usize;
            if size <= best {
                continue;
            }
            let step_enabled = (0..net.num_places()).all(|p| {
                let need: u32 = (0..k)
                    .filter(|j| mask & (1 << j) != 0)
                    .map(|j| net.pre(p, ts[j]))
                    .sum();
                m[p] >= need
            });
            if step_enabled {
                best = size;
            }
        }
        if best == k {
            break;
        }
    }
    Ok(best)
}

/// Inserts a DTP of `capacity` between two horizontally adjacent wavefront
/// cells whose End/Sync transitions were fused into `Sync_{b}`. The arcs on
/// cell `a`'s own places move to a recreated `End_{a}`, which then feeds
/// `Sync_{b}` through the new `H_{a}` DTP.
pub fn decouple_row_cells(net: &TimedNet, a: &str, b: &str, capacity: usize) -> Result<TimedNet, StructuralError> {
    let mut out = net.clone();
    let sync_b = format!("Sync_{b}");
    let end_a = format!("End_{a}");
    let t = out.net.transition(&sync_b)?;
    let suffix = format!("_{a}");
    // cell-local places carry the cell suffix and no module prefix
    let owned: Vec<usize> = (0..out.net.num_places())
        .filter(|&p| {
            let name = out.net.place_name(p);
            name.ends_with(&suffix) && !name.contains('.')
        })
        .collect();
    let e = out.net.add_transition(&end_a)?;
    for &p in &owned {
        let (pre, post) = (out.net.pre(p, t), out.net.post(p, t));
        out.net.set_pre(p, e, pre);
        out.net.set_post(p, e, post);
        out.net.set_pre(p, t, 0);
        out.net.set_post(p, t, 0);
    }
    let dtp = TimedNet::from(make_dtp(capacity)?.net);
    let prefix = format!("H_{a}");
    out.merge(&dtp, Some(&prefix))?;
    out.fuse_transitions(&end_a, &format!("{prefix}.BeginTransmission"), &end_a)?;
    out.fuse_transitions(&format!("{prefix}.EndTransmission"), &sync_b, &sync_b)?;
    Ok(out)
}
