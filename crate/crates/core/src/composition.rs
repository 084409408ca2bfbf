//! Modular net construction: computational and data-transmission blocks and
//! the split / fusion / copy operator calculus used to glue them together.

use thiserror::Error;

use crate::net::{NetError, Node, NodeKind, PetriNet};
use crate::timing::{Timing, TimingSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositionError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("cannot combine `{0}` with itself")]
    SameNode(String),
    #[error("`{a}` is a {ka} but `{b}` is a {kb}")]
    KindMismatch {
        a: String,
        ka: NodeKind,
        b: String,
        kb: NodeKind,
    },
    #[error("expected a {expected}, `{name}` is a {found}")]
    WrongKind {
        name: String,
        expected: NodeKind,
        found: NodeKind,
    },
    #[error("both `{0}` and `{1}` are timed; fused transition would carry two delays")]
    ConflictingTiming(String, String),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, CompositionError>;

/// Initial marking of a place produced by fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarkingRule {
    #[default]
    Max,
    Sum,
    Explicit(u32),
}

/// A net together with the timing of its transitions. All operators keep
/// the two in sync under fusion and renaming.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimedNet {
    pub net: PetriNet,
    pub timing: TimingSpec,
}

impl From<PetriNet> for TimedNet {
    fn from(net: PetriNet) -> Self {
        TimedNet {
            net,
            timing: TimingSpec::new(),
        }
    }
}

impl TimedNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_parts(self) -> (PetriNet, TimingSpec) {
        (self.net, self.timing)
    }

    /// Disjoint union with `other`, whose names become `prefix.name`.
    pub fn merge(&mut self, other: &TimedNet, prefix: Option<&str>) -> Result<()> {
        self.net.merge(&other.net, prefix)?;
        for (t, timing) in other.timing.iter() {
            let name = match prefix {
                Some(p) => format!("{p}.{t}"),
                None => t.clone(),
            };
            self.timing.set(name, *timing);
        }
        Ok(())
    }

    pub fn add_block(&mut self, block: &ModuleBlock, prefix: &str) -> Result<()> {
        self.merge(&TimedNet::from(block.net.clone()), Some(prefix))
    }

    fn kind_of(&self, name: &str) -> Result<(NodeKind, usize)> {
        match self.net.node(name)? {
            Node::Place(p) => Ok((NodeKind::Place, p)),
            Node::Transition(t) => Ok((NodeKind::Transition, t)),
        }
    }

    fn expect_transition(&self, name: &str) -> Result<usize> {
        match self.net.node(name)? {
            Node::Transition(t) => Ok(t),
            Node::Place(_) => Err(CompositionError::WrongKind {
                name: name.into(),
                expected: NodeKind::Transition,
                found: NodeKind::Place,
            }),
        }
    }

    fn expect_place(&self, name: &str) -> Result<usize> {
        match self.net.node(name)? {
            Node::Place(p) => Ok(p),
            Node::Transition(_) => Err(CompositionError::WrongKind {
                name: name.into(),
                expected: NodeKind::Place,
                found: NodeKind::Transition,
            }),
        }
    }

    /// Renames a place or transition, carrying its timing along.
    pub fn rename(&mut self, old: &str, new: &str) -> Result<()> {
        match self.kind_of(old)? {
            (NodeKind::Place, p) => self.net.rename_place(p, new)?,
            (NodeKind::Transition, t) => {
                self.net.rename_transition(t, new)?;
                if let Some(tm) = self.timing.remove(old) {
                    self.timing.set(new, tm);
                }
            }
        }
        Ok(())
    }

    /// Replaces `t1` and `t2` by one transition carrying the union of their
    /// arcs (weights summed on shared places).
    pub fn fuse_transitions(&mut self, t1: &str, t2: &str, new_name: &str) -> Result<()> {
        if t1 == t2 {
            return Err(CompositionError::SameNode(t1.into()));
        }
        let a = self.expect_transition(t1)?;
        let b = self.expect_transition(t2)?;
        let (ta, tb) = (self.timing.explicit(t1), self.timing.explicit(t2));
        let timing = match (ta, tb) {
            (Some(x), Some(y)) if !x.is_immediate() && !y.is_immediate() => {
                return Err(CompositionError::ConflictingTiming(t1.into(), t2.into()))
            }
            (Some(x), Some(y)) => Some(if x.is_immediate() { y } else { x }),
            (x, y) => x.or(y),
        };
        let label = match (self.net.label(t1), self.net.label(t2)) {
            (Some(x), Some(y)) => Some(format!("{x}; {y}")),
            (x, y) => x.or(y).map(str::to_string),
        };
        for p in 0..self.net.num_places() {
            let (pre, post) = (self.net.pre(p, a) + self.net.pre(p, b), self.net.post(p, a) + self.net.post(p, b));
            self.net.set_pre(p, a, pre);
            self.net.set_post(p, a, post);
        }
        self.net.remove_transition(b);
        self.timing.remove(t1);
        self.timing.remove(t2);
        let a = self.net.transition(t1)?;
        self.net.rename_transition(a, new_name)?;
        if let Some(tm) = timing {
            self.timing.set(new_name, tm);
        }
        if let Some(l) = label {
            self.net.set_label(new_name, l)?;
        }
        Ok(())
    }

    /// Replaces `p1` and `p2` by one place with the union of their arcs.
    pub fn fuse_places(&mut self, p1: &str, p2: &str, new_name: &str, rule: MarkingRule) -> Result<()> {
        if p1 == p2 {
            return Err(CompositionError::SameNode(p1.into()));
        }
        let a = self.expect_place(p1)?;
        let b = self.expect_place(p2)?;
        let (ma, mb) = (self.net.m0(a), self.net.m0(b));
        let m0 = match rule {
            MarkingRule::Max => ma.max(mb),
            MarkingRule::Sum => ma + mb,
            MarkingRule::Explicit(k) => k,
        };
        for t in 0..self.net.num_transitions() {
            let (pre, post) = (self.net.pre(a, t) + self.net.pre(b, t), self.net.post(a, t) + self.net.post(b, t));
            self.net.set_pre(a, t, pre);
            self.net.set_post(a, t, post);
        }
        self.net.set_initial_tokens(a, m0);
        self.net.remove_place(b);
        let a = self.net.place(p1)?;
        self.net.rename_place(a, new_name)?;
        Ok(())
    }

    /// Fuses a list of nodes of the same kind left to right.
    pub fn fuse_all(&mut self, nodes: &[&str], new_name: &str, rule: MarkingRule) -> Result<()> {
        let [first, rest @ ..] = nodes else {
            return Err(CompositionError::Invalid("fusion needs at least one node".into()));
        };
        let (kind, _) = self.kind_of(first)?;
        for n in rest {
            let (k, _) = self.kind_of(n)?;
            if k != kind {
                return Err(CompositionError::KindMismatch {
                    a: first.to_string(),
                    ka: kind,
                    b: n.to_string(),
                    kb: k,
                });
            }
        }
        if rest.is_empty() {
            return self.rename(first, new_name);
        }
        let mut acc = first.to_string();
        for (i, n) in rest.iter().enumerate() {
            let target = if i + 1 == rest.len() {
                new_name.to_string()
            } else {
                format!("{new_name}#fuse{i}")
            };
            match kind {
                NodeKind::Place => self.fuse_places(&acc, n, &target, rule)?,
                NodeKind::Transition => self.fuse_transitions(&acc, n, &target)?,
            }
            acc = target;
        }
        Ok(())
    }

    /// Replaces `node` by `a` (all input arcs) and `b` (all output arcs).
    /// A split place keeps its initial tokens on `b`, where they stay
    /// available to the original consumers.
    pub fn split_node(&mut self, node: &str, a: &str, b: &str) -> Result<()> {
        match self.kind_of(node)? {
            (NodeKind::Place, p) => {
                let pa = self.net.add_place(a, 0)?;
                let pb = self.net.add_place(b, self.net.m0(p))?;
                for t in 0..self.net.num_transitions() {
                    self.net.set_post(pa, t, self.net.post(p, t));
                    self.net.set_pre(pb, t, self.net.pre(p, t));
                }
                self.net.remove_place(p);
            }
            (NodeKind::Transition, t) => {
                let ta = self.net.add_transition(a)?;
                let tb = self.net.add_transition(b)?;
                for p in 0..self.net.num_places() {
                    self.net.set_pre(p, ta, self.net.pre(p, t));
                    self.net.set_post(p, tb, self.net.post(p, t));
                }
                if let Some(tm) = self.timing.remove(node) {
                    self.timing.set(a, tm);
                }
                self.net.remove_transition(t);
            }
        }
        Ok(())
    }

    /// Adds `new_name`, a node with the same arcs (and marking) as `node`.
    pub fn copy_node(&mut self, node: &str, new_name: &str) -> Result<()> {
        match self.kind_of(node)? {
            (NodeKind::Place, p) => {
                let q = self.net.add_place(new_name, self.net.m0(p))?;
                for t in 0..self.net.num_transitions() {
                    self.net.set_pre(q, t, self.net.pre(p, t));
                    self.net.set_post(q, t, self.net.post(p, t));
                }
            }
            (NodeKind::Transition, t) => {
                let u = self.net.add_transition(new_name)?;
                for p in 0..self.net.num_places() {
                    self.net.set_pre(p, u, self.net.pre(p, t));
                    self.net.set_post(p, u, self.net.post(p, t));
                }
                if let Some(tm) = self.timing.explicit(node) {
                    self.timing.set(new_name, tm);
                }
            }
        }
        Ok(())
    }

    /// Keeps `place` and adds a split copy of it: `request` is fed by the
    /// place's producers, `ret` feeds its consumers.
    pub fn split_copy(&mut self, place: &str, request: &str, ret: &str) -> Result<()> {
        self.expect_place(place)?;
        let tmp = format!("{place}#copy");
        self.copy_node(place, &tmp)?;
        self.split_node(&tmp, request, ret)
    }

    /// Refines functional activity `place` by an implementation between the
    /// operational transitions `op_sync` and `op_end`: the request half of a
    /// split copy feeds `op_sync`, `op_end` feeds the return half. Timing of
    /// the refined functional transitions is dropped.
    pub fn impl_link(&mut self, place: &str, request: &str, ret: &str, op_sync: &str, op_end: &str) -> Result<()> {
        let p = self.expect_place(place)?;
        self.expect_transition(op_sync)?;
        self.expect_transition(op_end)?;
        let refined: Vec<String> = self
            .net
            .place_producers(p)
            .into_iter()
            .chain(self.net.place_consumers(p))
            .map(|t| self.net.transition_name(t).to_string())
            .collect();
        self.split_copy(place, request, ret)?;
        self.net.add_input_arc(request, op_sync, 1)?;
        self.net.add_output_arc(op_end, ret, 1)?;
        for t in refined {
            if let Some(tm) = self.timing.explicit(&t) {
                if !tm.is_immediate() {
                    self.timing.remove(&t);
                }
            }
        }
        Ok(())
    }

    /// Place-argument form of `impl`: split-copy `place`, then fuse the
    /// halves with the operational places `op_in` and `op_out`.
    pub fn impl_places(&mut self, place: &str, op_in: &str, op_out: &str) -> Result<()> {
        let req = format!("{place}#req");
        let ret = format!("{place}#ret");
        self.split_copy(place, &req, &ret)?;
        self.fuse_places(&req, op_in, op_in, MarkingRule::Max)?;
        self.fuse_places(&ret, op_out, op_out, MarkingRule::Max)
    }

    /// Four-argument `impl`: fuse `a` with `c` and `b` with `d`.
    pub fn impl_pairs(&mut self, a: &str, b: &str, c: &str, d: &str) -> Result<()> {
        self.fuse_all(&[a, c], c, MarkingRule::Max)?;
        self.fuse_all(&[b, d], d, MarkingRule::Max)
    }

    /// Adds a timed place-transition-place sequence in parallel with
    /// `place`: its producers also mark `{transition}.start`, its consumers
    /// also need `{transition}.done`.
    pub fn add_timed_sequence(&mut self, place: &str, transition: &str, timing: Timing) -> Result<()> {
        let p = self.expect_place(place)?;
        let producers = self.net.place_producers(p);
        let consumers = self.net.place_consumers(p);
        let start = format!("{transition}.start");
        let done = format!("{transition}.done");
        let ps = self.net.add_place(&start, self.net.m0(p))?;
        let pd = self.net.add_place(&done, 0)?;
        let t = self.net.add_transition(transition)?;
        self.net.set_pre(ps, t, 1);
        self.net.set_post(pd, t, 1);
        for u in producers {
            let w = self.net.post(p, u);
            self.net.set_post(ps, u, w);
        }
        for u in consumers {
            let w = self.net.pre(p, u);
            self.net.set_pre(pd, u, w);
        }
        self.timing.set(transition, timing);
        Ok(())
    }
}

/// A reusable fragment with named ports.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleBlock {
    pub net: PetriNet,
    pub input_ports: Vec<String>,
    pub output_ports: Vec<String>,
    /// Conservative resource places; capacity is the initial marking.
    pub resource_places: Vec<String>,
}

/// Computational process: `Idle` (marked `max_threads`) feeding a chain of
/// `num_stages` operation places. Stage `k` holds one unit of
/// `resource_demand[k]` while active; an empty name means no resource.
pub fn make_cp(num_stages: usize, max_threads: u32, resource_demand: &[&str]) -> Result<ModuleBlock> {
    if num_stages == 0 || max_threads == 0 {
        return Err(CompositionError::Invalid(
            "a computational process needs at least one stage and one thread".into(),
        ));
    }
    if resource_demand.len() > num_stages {
        return Err(CompositionError::Invalid(format!(
            "{} resource demands for {num_stages} stages",
            resource_demand.len()
        )));
    }
    let mut net = PetriNet::new();
    net.add_place("Idle", max_threads)?;
    let ops: Vec<String> = (1..=num_stages).map(|k| format!("Operation{k}")).collect();
    for op in &ops {
        net.add_place(op, 0)?;
    }
    let mut resources = Vec::new();
    for r in resource_demand.iter().filter(|r| !r.is_empty()) {
        if net.place_index(r).is_none() {
            net.add_place(*r, max_threads)?;
            resources.push(r.to_string());
        }
    }
    let mut trans = vec!["InputDataStream".to_string()];
    trans.extend((1..num_stages).map(|k| format!("Next{k}")));
    trans.push("OutputDataStream".into());
    for (k, t) in trans.iter().enumerate() {
        net.add_transition(t)?;
        let from = if k == 0 { "Idle" } else { &ops[k - 1] };
        let to = if k == num_stages { "Idle" } else { &ops[k] };
        net.add_input_arc(from, t, 1)?;
        net.add_output_arc(t, to, 1)?;
        if k > 0 {
            if let Some(r) = resource_demand.get(k - 1).filter(|r| !r.is_empty()) {
                net.add_output_arc(t, r, 1)?;
            }
        }
        if let Some(r) = resource_demand.get(k).filter(|r| !r.is_empty()) {
            if k < num_stages {
                net.add_input_arc(r, t, 1)?;
            }
        }
    }
    Ok(ModuleBlock {
        net,
        input_ports: vec!["InputDataStream".into()],
        output_ports: vec!["OutputDataStream".into()],
        resource_places: resources,
    })
}

/// Data transmission process holding up to `capacity` records in order:
/// `capacity` elementary stages (`Transmission{k}` guarded by `Capacity{k}`)
/// chained by transition fusion. A capacity-1 DTP names its nodes
/// `Transmission` and `Capacity`.
pub fn make_dtp(capacity: usize) -> Result<ModuleBlock> {
    if capacity == 0 {
        return Err(CompositionError::Invalid("DTP capacity must be positive".into()));
    }
    let suffix = |k: usize| if capacity == 1 { String::new() } else { k.to_string() };
    let mut net = PetriNet::new();
    for k in 1..=capacity {
        net.add_place(format!("Transmission{}", suffix(k)), 0)?;
        net.add_place(format!("Capacity{}", suffix(k)), 1)?;
    }
    let mut trans = vec!["BeginTransmission".to_string()];
    trans.extend((1..capacity).map(|k| format!("Move{k}")));
    trans.push("EndTransmission".into());
    for (k, t) in trans.iter().enumerate() {
        net.add_transition(t)?;
        if k < capacity {
            let (tr, cap) = (format!("Transmission{}", suffix(k + 1)), format!("Capacity{}", suffix(k + 1)));
            net.add_input_arc(&cap, t, 1)?;
            net.add_output_arc(t, &tr, 1)?;
        }
        if k > 0 {
            let (tr, cap) = (format!("Transmission{}", suffix(k)), format!("Capacity{}", suffix(k)));
            net.add_input_arc(&tr, t, 1)?;
            net.add_output_arc(t, &cap, 1)?;
        }
    }
    let resources = (1..=capacity).map(|k| format!("Capacity{}", suffix(k))).collect();
    Ok(ModuleBlock {
        net,
        input_ports: vec!["BeginTransmission".into()],
        output_ports: vec!["EndTransmission".into()],
        resource_places: resources,
    })
}

/// Routes several capacity-1 DTPs through one low-level channel of
/// `channel_capacity`. Fragment `k` is merged under prefix `P{k}`; its
/// `Transmission` place is split into `P{k}.Request` and `P{k}.Done`.
/// Requests are served in fixed cyclic order and acknowledged in the same
/// order.
pub fn share_channel(fragments: &[ModuleBlock], channel_capacity: u32) -> Result<TimedNet> {
    if fragments.is_empty() {
        return Err(CompositionError::Invalid("share_channel needs at least one fragment".into()));
    }
    if channel_capacity == 0 {
        return Err(CompositionError::Invalid("channel capacity must be positive".into()));
    }
    let n = fragments.len();
    let mut out = TimedNet::new();
    for (k, f) in fragments.iter().enumerate() {
        if f.net.place_index("Transmission").is_none() {
            return Err(CompositionError::Invalid(format!(
                "fragment {} is not a capacity-1 DTP",
                k + 1
            )));
        }
        let pre = format!("P{}", k + 1);
        out.add_block(f, &pre)?;
        out.split_node(&format!("{pre}.Transmission"), &format!("{pre}.Request"), &format!("{pre}.Done"))?;
    }
    let net = &mut out.net;
    net.add_place("Channel.Capacity", channel_capacity)?;
    for k in 1..=n {
        net.add_place(format!("Channel.Poll{k}"), u32::from(k == 1))?;
        net.add_place(format!("Channel.AckPoll{k}"), u32::from(k == 1))?;
        net.add_place(format!("Channel.Busy{k}"), 0)?;
    }
    for k in 1..=n {
        let next = k % n + 1;
        let serve = format!("Channel.Serve{k}");
        net.add_transition(&serve)?;
        net.add_input_arc(&format!("P{k}.Request"), &serve, 1)?;
        net.add_input_arc(&format!("Channel.Poll{k}"), &serve, 1)?;
        net.add_input_arc("Channel.Capacity", &serve, 1)?;
        net.add_output_arc(&serve, &format!("Channel.Busy{k}"), 1)?;
        net.add_output_arc(&serve, &format!("Channel.Poll{next}"), 1)?;
        let ack = format!("Channel.Ack{k}");
        net.add_transition(&ack)?;
        net.add_input_arc(&format!("Channel.Busy{k}"), &ack, 1)?;
        net.add_input_arc(&format!("Channel.AckPoll{k}"), &ack, 1)?;
        net.add_output_arc(&ack, "Channel.Capacity", 1)?;
        net.add_output_arc(&ack, &format!("P{k}.Done"), 1)?;
        net.add_output_arc(&ack, &format!("Channel.AckPoll{next}"), 1)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[String]) -> Vec<&str> {
        let mut v: Vec<&str> = v.iter().map(String::as_str).collect();
        v.sort();
        v
    }

    #[test]
    fn two_stage_cp_with_resources() {
        let b = make_cp(2, 1, &["Resource1", "Resource2"]).unwrap();
        assert_eq!(
            names(b.net.places()),
            vec!["Idle", "Operation1", "Operation2", "Resource1", "Resource2"]
        );
        assert_eq!(b.net.num_transitions(), 3);
        let next = b.net.transition("Next1").unwrap();
        let r1 = b.net.place("Resource1").unwrap();
        let r2 = b.net.place("Resource2").unwrap();
        assert_eq!(b.net.post(r1, next), 1);
        assert_eq!(b.net.pre(r2, next), 1);
    }

    #[test]
    fn minimal_cp() {
        let b = make_cp(1, 1, &[]).unwrap();
        assert_eq!(b.net.num_places(), 2);
        assert_eq!(b.net.num_transitions(), 2);
    }

    #[test]
    fn dtp_shapes() {
        let d = make_dtp(1).unwrap();
        assert_eq!(names(d.net.places()), vec!["Capacity", "Transmission"]);
        assert_eq!(d.net.num_transitions(), 2);
        let d2 = make_dtp(2).unwrap();
        assert_eq!(d2.net.num_transitions(), 3);
        assert_eq!(d2.resource_places.len(), 2);
    }

    #[test]
    fn fusion_unions_arcs() {
        let mut n = TimedNet::from(make_dtp(1).unwrap().net);
        n.net.add_transition("free").unwrap();
        let before = n.net.clone();
        n.fuse_transitions("BeginTransmission", "free", "B").unwrap();
        let b = n.net.transition("B").unwrap();
        let old = before.transition("BeginTransmission").unwrap();
        for p in 0..n.net.num_places() {
            assert_eq!(n.net.pre(p, b), before.pre(p, old));
            assert_eq!(n.net.post(p, b), before.post(p, old));
        }
    }

    #[test]
    fn fused_name_may_reuse_an_argument() {
        let mut n = TimedNet::new();
        n.net.add_place("a", 1).unwrap();
        n.net.add_simple_transition("x", &["a"], &[]).unwrap();
        n.net.add_simple_transition("y", &[], &["a"]).unwrap();
        n.timing.set("y", Timing::exponential(1.0));
        n.fuse_transitions("x", "y", "y").unwrap();
        assert_eq!(n.net.num_transitions(), 1);
        assert_eq!(n.timing.get("y"), Timing::exponential(1.0));
    }

    #[test]
    fn two_timed_transitions_do_not_fuse() {
        let mut n = TimedNet::new();
        n.net.add_transition("x").unwrap();
        n.net.add_transition("y").unwrap();
        n.timing.set("x", Timing::exponential(1.0));
        n.timing.set("y", Timing::exponential(2.0));
        assert!(matches!(
            n.fuse_transitions("x", "y", "z"),
            Err(CompositionError::ConflictingTiming(..))
        ));
    }

    #[test]
    fn place_fusion_marking_rules() {
        let mut n = TimedNet::new();
        n.net.add_place("r1", 2).unwrap();
        n.net.add_place("r2", 3).unwrap();
        let mut m = n.clone();
        n.fuse_places("r1", "r2", "r", MarkingRule::Max).unwrap();
        assert_eq!(n.net.m0(0), 3);
        m.fuse_places("r1", "r2", "r", MarkingRule::Sum).unwrap();
        assert_eq!(m.net.m0(0), 5);
        assert!(matches!(
            m.fuse_places("r", "r", "q", MarkingRule::Max),
            Err(CompositionError::SameNode(_))
        ));
    }

    #[test]
    fn split_then_fuse_restores_node() {
        let mut n = TimedNet::from(make_dtp(1).unwrap().net);
        let before = n.net.clone();
        n.split_node("Transmission", "s1", "s2").unwrap();
        let s1 = n.net.place("s1").unwrap();
        let s2 = n.net.place("s2").unwrap();
        let begin = n.net.transition("BeginTransmission").unwrap();
        let end = n.net.transition("EndTransmission").unwrap();
        assert_eq!(n.net.post(s1, begin), 1);
        assert_eq!(n.net.pre(s2, end), 1);
        assert_eq!(n.net.pre(s1, end), 0);
        n.fuse_places("s1", "s2", "Transmission", MarkingRule::Sum).unwrap();
        let p = n.net.place("Transmission").unwrap();
        let q = before.place("Transmission").unwrap();
        for t in 0..2 {
            assert_eq!(n.net.pre(p, t), before.pre(q, t));
            assert_eq!(n.net.post(p, t), before.post(q, t));
        }
    }

    #[test]
    fn copy_duplicates_row_and_marking() {
        let mut n = TimedNet::from(make_cp(1, 2, &[]).unwrap().net);
        n.copy_node("Idle", "Idle2").unwrap();
        let (a, b) = (n.net.place("Idle").unwrap(), n.net.place("Idle2").unwrap());
        assert_eq!(n.net.m0(b), 2);
        assert_eq!(n.net.pre_matrix()[a], n.net.pre_matrix()[b]);
        assert_eq!(n.net.post_matrix()[a], n.net.post_matrix()[b]);
    }

    #[test]
    fn timed_sequence_runs_in_parallel() {
        let mut n = TimedNet::from(make_cp(1, 1, &[]).unwrap().net);
        n.add_timed_sequence("Operation1", "Work", Timing::Deterministic { delay: 2.0 })
            .unwrap();
        let m = n.net.initial_marking();
        let m = n.net.fire_named(&m, "InputDataStream").unwrap();
        let out = n.net.transition("OutputDataStream").unwrap();
        assert!(!n.net.is_enabled(&m, out));
        let m = n.net.fire_named(&m, "Work").unwrap();
        assert!(n.net.is_enabled(&m, out));
        assert_eq!(n.timing.get("Work"), Timing::Deterministic { delay: 2.0 });
    }

    #[test]
    fn impl_link_routes_through_operational_layer() {
        let mut n = TimedNet::from(make_cp(1, 1, &[]).unwrap().net);
        n.net.add_place("R", 1).unwrap();
        n.net.add_place("Busy", 0).unwrap();
        n.net.add_simple_transition("OpSync", &["R"], &["Busy"]).unwrap();
        n.net.add_simple_transition("OpEnd", &["Busy"], &["R"]).unwrap();
        n.impl_link("Operation1", "I", "O", "OpSync", "OpEnd").unwrap();
        let mut m = n.net.initial_marking();
        for t in ["InputDataStream", "OpSync", "OpEnd", "OutputDataStream"] {
            m = n.net.fire_named(&m, t).unwrap();
        }
        assert_eq!(m, n.net.initial_marking());
        let m = n.net.fire_named(&n.net.initial_marking(), "InputDataStream").unwrap();
        assert!(!n.net.is_enabled(&m, n.net.transition("OutputDataStream").unwrap()));
    }
}
