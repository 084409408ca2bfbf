//! Place/transition nets with weighted arcs and an initial marking.
//!
//! Pre and post are stored densely as `|P| x |T|` matrices. Every analysis in
//! the crate consumes this one representation; graph algorithms derive their
//! adjacency lists from it on demand.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate {kind} name `{name}`")]
    Duplicate { kind: NodeKind, name: String },
    #[error("matrix dimensions do not match {places} places x {transitions} transitions")]
    Dimension { places: usize, transitions: usize },
    #[error("transition `{0}` is not enabled")]
    NotEnabled(String),
    #[error("marking has {got} entries, net has {expected} places")]
    MarkingLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Place,
    Transition,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Place => f.write_str("place"),
            NodeKind::Transition => f.write_str("transition"),
        }
    }
}

/// A node reference resolved against a concrete net.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Place(usize),
    Transition(usize),
}

/// Token counts indexed by place.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Marking(pub Vec<u32>);

impl Marking {
    pub fn zeros(places: usize) -> Self {
        Marking(vec![0; places])
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&k| u64::from(k)).sum()
    }

    /// Weighted token sum `y . m`.
    pub fn weighted(&self, weights: &[i64]) -> i64 {
        self.0
            .iter()
            .zip(weights)
            .map(|(&m, &w)| i64::from(m) * w)
            .sum()
    }
}

impl std::ops::Index<usize> for Marking {
    type Output = u32;
    fn index(&self, p: usize) -> &u32 {
        &self.0[p]
    }
}

/// Arc list entry: `(place index, weight)`.
pub type Arc = (usize, u32);

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PetriNet {
    places: Vec<String>,
    transitions: Vec<String>,
    /// `pre[p][t]`
    pre: Vec<Vec<u32>>,
    /// `post[p][t]`
    post: Vec<Vec<u32>>,
    m0: Vec<u32>,
    /// Opaque action labels attached to transitions (never evaluated).
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

impl PetriNet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a net from its matrices, checking dimensions and name uniqueness.
    pub fn from_parts(
        places: Vec<String>,
        transitions: Vec<String>,
        pre: Vec<Vec<u32>>,
        post: Vec<Vec<u32>>,
        m0: Vec<u32>,
    ) -> Result<Self, NetError> {
        let (np, nt) = (places.len(), transitions.len());
        let dims_ok = pre.len() == np
            && post.len() == np
            && m0.len() == np
            && pre.iter().chain(post.iter()).all(|row| row.len() == nt);
        if !dims_ok {
            return Err(NetError::Dimension {
                places: np,
                transitions: nt,
            });
        }
        check_unique(&places, NodeKind::Place)?;
        check_unique(&transitions, NodeKind::Transition)?;
        Ok(PetriNet {
            places,
            transitions,
            pre,
            post,
            m0,
            labels: BTreeMap::new(),
        })
    }

    pub fn places(&self) -> &[String] {
        &self.places
    }

    pub fn transitions(&self) -> &[String] {
        &self.transitions
    }

    pub fn num_places(&self) -> usize {
        self.places.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn place_name(&self, p: usize) -> &str {
        &self.places[p]
    }

    pub fn transition_name(&self, t: usize) -> &str {
        &self.transitions[t]
    }

    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.places.iter().position(|p| p == name)
    }

    pub fn transition_index(&self, name: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t == name)
    }

    pub fn place(&self, name: &str) -> Result<usize, NetError> {
        self.place_index(name)
            .ok_or_else(|| NetError::UnknownPlace(name.to_string()))
    }

    pub fn transition(&self, name: &str) -> Result<usize, NetError> {
        self.transition_index(name)
            .ok_or_else(|| NetError::UnknownTransition(name.to_string()))
    }

    /// Resolves a name to a place or transition. Places win if both exist.
    pub fn node(&self, name: &str) -> Result<Node, NetError> {
        if let Some(p) = self.place_index(name) {
            Ok(Node::Place(p))
        } else if let Some(t) = self.transition_index(name) {
            Ok(Node::Transition(t))
        } else {
            Err(NetError::UnknownNode(name.to_string()))
        }
    }

    pub fn node_name(&self, node: Node) -> &str {
        match node {
            Node::Place(p) => &self.places[p],
            Node::Transition(t) => &self.transitions[t],
        }
    }

    pub fn pre(&self, p: usize, t: usize) -> u32 {
        self.pre[p][t]
    }

    pub fn post(&self, p: usize, t: usize) -> u32 {
        self.post[p][t]
    }

    pub fn pre_matrix(&self) -> &[Vec<u32>] {
        &self.pre
    }

    pub fn post_matrix(&self) -> &[Vec<u32>] {
        &self.post
    }

    pub fn initial_marking(&self) -> Marking {
        Marking(self.m0.clone())
    }

    pub fn m0(&self, p: usize) -> u32 {
        self.m0[p]
    }

    pub fn labels(&self) -> &BTreeMap<String, String> {
        &self.labels
    }

    pub fn label(&self, transition: &str) -> Option<&str> {
        self.labels.get(transition).map(String::as_str)
    }

    pub fn set_label(&mut self, transition: &str, label: impl Into<String>) -> Result<(), NetError> {
        self.transition(transition)?;
        self.labels.insert(transition.to_string(), label.into());
        Ok(())
    }

    pub fn add_place(&mut self, name: impl Into<String>, tokens: u32) -> Result<usize, NetError> {
        let name = name.into();
        if self.place_index(&name).is_some() {
            return Err(NetError::Duplicate {
                kind: NodeKind::Place,
                name,
            });
        }
        let nt = self.transitions.len();
        self.places.push(name);
        self.pre.push(vec![0; nt]);
        self.post.push(vec![0; nt]);
        self.m0.push(tokens);
        Ok(self.places.len() - 1)
    }

    pub fn add_transition(&mut self, name: impl Into<String>) -> Result<usize, NetError> {
        let name = name.into();
        if self.transition_index(&name).is_some() {
            return Err(NetError::Duplicate {
                kind: NodeKind::Transition,
                name,
            });
        }
        for row in self.pre.iter_mut().chain(self.post.iter_mut()) {
            row.push(0);
        }
        self.transitions.push(name);
        Ok(self.transitions.len() - 1)
    }

    /// Adds `weight` to the place -> transition arc.
    pub fn add_input_arc(&mut self, place: &str, transition: &str, weight: u32) -> Result<(), NetError> {
        let (p, t) = (self.place(place)?, self.transition(transition)?);
        self.pre[p][t] += weight;
        Ok(())
    }

    /// Adds `weight` to the transition -> place arc.
    pub fn add_output_arc(&mut self, transition: &str, place: &str, weight: u32) -> Result<(), NetError> {
        let (p, t) = (self.place(place)?, self.transition(transition)?);
        self.post[p][t] += weight;
        Ok(())
    }

    /// Convenience for a transition consuming one token from each of `inputs`
    /// and producing one into each of `outputs`. Creates the transition.
    pub fn add_simple_transition(
        &mut self,
        name: &str,
        inputs: &[&str],
        outputs: &[&str],
    ) -> Result<usize, NetError> {
        let t = self.add_transition(name)?;
        for p in inputs {
            self.add_input_arc(p, name, 1)?;
        }
        for p in outputs {
            self.add_output_arc(name, p, 1)?;
        }
        Ok(t)
    }

    pub fn set_pre(&mut self, p: usize, t: usize, w: u32) {
        self.pre[p][t] = w;
    }

    pub fn set_post(&mut self, p: usize, t: usize, w: u32) {
        self.post[p][t] = w;
    }

    pub fn set_initial_tokens(&mut self, p: usize, tokens: u32) {
        self.m0[p] = tokens;
    }

    pub fn rename_place(&mut self, p: usize, name: impl Into<String>) -> Result<(), NetError> {
        let name = name.into();
        if let Some(q) = self.place_index(&name) {
            if q != p {
                return Err(NetError::Duplicate {
                    kind: NodeKind::Place,
                    name,
                });
            }
        }
        self.places[p] = name;
        Ok(())
    }

    pub fn rename_transition(&mut self, t: usize, name: impl Into<String>) -> Result<(), NetError> {
        let name = name.into();
        if let Some(u) = self.transition_index(&name) {
            if u != t {
                return Err(NetError::Duplicate {
                    kind: NodeKind::Transition,
                    name,
                });
            }
        }
        if let Some(label) = self.labels.remove(&self.transitions[t]) {
            self.labels.insert(name.clone(), label);
        }
        self.transitions[t] = name;
        Ok(())
    }

    pub fn remove_place(&mut self, p: usize) {
        self.places.remove(p);
        self.pre.remove(p);
        self.post.remove(p);
        self.m0.remove(p);
    }

    pub fn remove_transition(&mut self, t: usize) {
        let name = self.transitions.remove(t);
        self.labels.remove(&name);
        for row in self.pre.iter_mut().chain(self.post.iter_mut()) {
            row.remove(t);
        }
    }

    /// Disjoint union; names of `other` are prefixed with `prefix` when given.
    pub fn merge(&mut self, other: &PetriNet, prefix: Option<&str>) -> Result<(), NetError> {
        let rename = |n: &str| match prefix {
            Some(pre) => format!("{pre}.{n}"),
            None => n.to_string(),
        };
        let base_t = self.transitions.len();
        for t in &other.transitions {
            self.add_transition(rename(t))?;
        }
        for (q, name) in other.places.iter().enumerate() {
            let p = self.add_place(rename(name), other.m0[q])?;
            for t in 0..other.transitions.len() {
                self.pre[p][base_t + t] = other.pre[q][t];
                self.post[p][base_t + t] = other.post[q][t];
            }
        }
        for (t, label) in &other.labels {
            self.labels.insert(rename(t), label.clone());
        }
        Ok(())
    }

    /// Input arcs of transition `t` as `(place, weight)`.
    pub fn inputs_of(&self, t: usize) -> Vec<Arc> {
        (0..self.places.len())
            .filter(|&p| self.pre[p][t] > 0)
            .map(|p| (p, self.pre[p][t]))
            .collect()
    }

    pub fn outputs_of(&self, t: usize) -> Vec<Arc> {
        (0..self.places.len())
            .filter(|&p| self.post[p][t] > 0)
            .map(|p| (p, self.post[p][t]))
            .collect()
    }

    /// Transitions consuming from place `p`.
    pub fn place_consumers(&self, p: usize) -> Vec<usize> {
        (0..self.transitions.len()).filter(|&t| self.pre[p][t] > 0).collect()
    }

    /// Transitions producing into place `p`.
    pub fn place_producers(&self, p: usize) -> Vec<usize> {
        (0..self.transitions.len()).filter(|&t| self.post[p][t] > 0).collect()
    }

    /// `C = post - pre`, indexed `[p][t]`.
    pub fn incidence(&self) -> Vec<Vec<i64>> {
        self.pre
            .iter()
            .zip(&self.post)
            .map(|(pre, post)| {
                pre.iter()
                    .zip(post)
                    .map(|(&a, &b)| i64::from(b) - i64::from(a))
                    .collect()
            })
            .collect()
    }

    fn check_marking(&self, m: &Marking) -> Result<(), NetError> {
        if m.len() != self.places.len() {
            return Err(NetError::MarkingLength {
                expected: self.places.len(),
                got: m.len(),
            });
        }
        Ok(())
    }

    pub fn is_enabled(&self, m: &Marking, t: usize) -> bool {
        (0..self.places.len()).all(|p| m.0[p] >= self.pre[p][t])
    }

    /// Transitions enabled at `m`, in index order.
    pub fn enabled(&self, m: &Marking) -> Vec<usize> {
        (0..self.transitions.len())
            .filter(|&t| self.is_enabled(m, t))
            .collect()
    }

    pub fn fire(&self, m: &Marking, t: usize) -> Result<Marking, NetError> {
        self.check_marking(m)?;
        if !self.is_enabled(m, t) {
            return Err(NetError::NotEnabled(self.transitions[t].clone()));
        }
        let tokens = (0..self.places.len())
            .map(|p| m.0[p] - self.pre[p][t] + self.post[p][t])
            .collect();
        Ok(Marking(tokens))
    }

    pub fn fire_named(&self, m: &Marking, t: &str) -> Result<Marking, NetError> {
        self.fire(m, self.transition(t)?)
    }

    /// Index maps for fast name lookup.
    pub fn index_maps(&self) -> (HashMap<&str, usize>, HashMap<&str, usize>) {
        let places = self.places.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let trans = self
            .transitions
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        (places, trans)
    }
}

fn check_unique(names: &[String], kind: NodeKind) -> Result<(), NetError> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(NetError::Duplicate {
                kind,
                name: n.clone(),
            });
        }
    }
    Ok(())
}

/// Sparse per-transition view used by the state-space and simulation engines.
#[derive(Debug, Clone)]
pub struct CompiledNet {
    pub inputs: Vec<Vec<Arc>>,
    pub outputs: Vec<Vec<Arc>>,
    /// Transitions whose enabling may change when place `p` changes.
    pub place_consumers: Vec<Vec<usize>>,
    pub num_places: usize,
}

impl CompiledNet {
    pub fn new(net: &PetriNet) -> Self {
        let nt = net.num_transitions();
        let inputs: Vec<_> = (0..nt).map(|t| net.inputs_of(t)).collect();
        let outputs: Vec<_> = (0..nt).map(|t| net.outputs_of(t)).collect();
        let place_consumers = (0..net.num_places()).map(|p| net.place_consumers(p)).collect();
        CompiledNet {
            inputs,
            outputs,
            place_consumers,
            num_places: net.num_places(),
        }
    }

    #[inline]
    pub fn is_enabled(&self, m: &[u32], t: usize) -> bool {
        self.inputs[t].iter().all(|&(p, w)| m[p] >= w)
    }

    #[inline]
    pub fn fire_in_place(&self, m: &mut [u32], t: usize) {
        for &(p, w) in &self.inputs[t] {
            m[p] -= w;
        }
        for &(p, w) in &self.outputs[t] {
            m[p] += w;
        }
    }

    /// How many times `t` could fire concurrently with itself at `m`.
    pub fn enabling_degree(&self, m: &[u32], t: usize) -> u32 {
        self.inputs[t]
            .iter()
            .map(|&(p, w)| m[p] / w)
            .min()
            .unwrap_or(u32::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle() -> PetriNet {
        let mut n = PetriNet::new();
        n.add_place("p1", 1).unwrap();
        n.add_place("p2", 0).unwrap();
        n.add_simple_transition("t1", &["p1"], &["p2"]).unwrap();
        n.add_simple_transition("t2", &["p2"], &["p1"]).unwrap();
        n
    }

    #[test]
    fn incidence_of_two_place_cycle() {
        let c = cycle().incidence();
        assert_eq!(c[0][0], -1);
        assert_eq!(c[1][0], 1);
        assert_eq!(c[0][1], 1);
        assert_eq!(c[1][1], -1);
    }

    #[test]
    fn isolated_transition_has_zero_column() {
        let mut n = cycle();
        n.add_transition("lonely").unwrap();
        let t = n.transition("lonely").unwrap();
        assert!(n.incidence().iter().all(|row| row[t] == 0));
    }

    #[test]
    fn one_token_cycle_enables_first_transition_only() {
        let n = cycle();
        assert_eq!(n.enabled(&n.initial_marking()), vec![0]);
        assert!(n.enabled(&Marking::zeros(2)).is_empty());
    }

    #[test]
    fn firing_moves_the_token() {
        let n = cycle();
        let m = n.fire(&n.initial_marking(), 0).unwrap();
        assert_eq!(m, Marking(vec![0, 1]));
        assert_eq!(
            n.fire(&n.initial_marking(), 1),
            Err(NetError::NotEnabled("t2".into()))
        );
    }

    #[test]
    fn self_loop_leaves_place_unchanged() {
        let mut n = cycle();
        n.add_place("guard", 2).unwrap();
        n.add_input_arc("guard", "t1", 1).unwrap();
        n.add_output_arc("t1", "guard", 1).unwrap();
        let m = n.fire(&n.initial_marking(), 0).unwrap();
        assert_eq!(m[2], 2);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut n = cycle();
        assert!(matches!(n.add_place("p1", 0), Err(NetError::Duplicate { .. })));
        assert!(PetriNet::from_parts(
            vec!["a".into(), "a".into()],
            vec![],
            vec![vec![], vec![]],
            vec![vec![], vec![]],
            vec![0, 0]
        )
        .is_err());
    }

    #[test]
    fn from_parts_checks_dimensions() {
        let err = PetriNet::from_parts(
            vec!["a".into()],
            vec!["t".into()],
            vec![vec![1]],
            vec![vec![]],
            vec![0],
        );
        assert!(matches!(err, Err(NetError::Dimension { .. })));
    }

    #[test]
    fn merge_prefixes_names() {
        let mut a = PetriNet::new();
        a.merge(&cycle(), Some("c1")).unwrap();
        a.merge(&cycle(), Some("c2")).unwrap();
        assert_eq!(a.num_places(), 4);
        assert!(a.place_index("c2.p1").is_some());
        assert_eq!(a.m0(a.place("c2.p1").unwrap()), 1);
    }
}
