//! Generators for the n x n wavefront array (Z = Y + A X) in its functional,
//! grid and pipeline mappings.
//!
//! Naming: cell `(i, j)` owns places `Idle_i_j` (1 token) and `Compute_i_j`
//! and transitions `Sync_i_j` / `End_i_j`. Streams enter through the DTPs
//! `X_j` (top) and `Y_i` (left) whose sources are `IX_j` / `IY_i`, leave
//! through `Z_i` whose sink is `OZ_i`, and travel down through `V_i_j`.
//! Horizontally, `End_i_j` is fused with `Sync_i_{j+1}` unless the cells are
//! decoupled by an `H_i_j` DTP.
//!
//! Closed forms (coupled functional): `4n^2 + 4n` places, `n^2 + 4n`
//! transitions. Decoupling adds `2(n-1)n` places per unit of H capacity and
//! `n(n-1)` transitions per unit of H capacity.

use serde::{Deserialize, Serialize};

use crate::composition::{make_dtp, CompositionError, TimedNet};
use crate::net::PetriNet;
use crate::structural::{decouple_row_cells, StructuralError};
use crate::timing::{Timing, TimingSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// mean injection interval (s)
    pub injection: f64,
    /// mean operation time (s)
    pub operation: f64,
    /// mean transmission time (s)
    pub transmission: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            injection: 0.1,
            operation: 0.1,
            transmission: 0.001,
        }
    }
}

impl Rates {
    fn validate(&self) -> Result<(), StructuralError> {
        for v in [self.injection, self.operation, self.transmission] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CompositionError::Invalid(format!("rates must be positive, got {v}")).into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    FunctionalOnly,
    Grid,
    Pipeline,
}

impl std::str::FromStr for Mapping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "functional" | "functional-only" => Ok(Mapping::FunctionalOnly),
            "grid" => Ok(Mapping::Grid),
            "pipeline" => Ok(Mapping::Pipeline),
            other => Err(format!("unknown mapping `{other}` (expected functional, grid or pipeline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavefrontSpec {
    pub n: usize,
    pub decoupled: bool,
    pub mapping: Mapping,
    pub rates: Rates,
    /// pipeline only; defaults to the widest diagonal
    pub stage_resources: Option<u32>,
}

impl WavefrontSpec {
    pub fn generate(&self) -> Result<TimedNet, StructuralError> {
        match self.mapping {
            Mapping::FunctionalOnly => Ok(gen_functional(self.n, self.decoupled)?.into()),
            Mapping::Grid => gen_grid(self.n, self.rates),
            Mapping::Pipeline => gen_pipeline(self.n, self.rates, self.stage_resources),
        }
    }
}

pub fn cell(i: usize, j: usize) -> String {
    format!("{i}_{j}")
}

pub fn sync(i: usize, j: usize) -> String {
    format!("Sync_{i}_{j}")
}

/// The four Sync transitions of the 2x2 block whose top-left cell is `(i, j)`.
pub fn sync_quad(i: usize, j: usize) -> [String; 4] {
    [sync(i, j), sync(i, j + 1), sync(i + 1, j), sync(i + 1, j + 1)]
}

fn check_n(n: usize) -> Result<(), StructuralError> {
    if n == 0 {
        return Err(CompositionError::Invalid("array dimension must be at least 1".into()).into());
    }
    Ok(())
}

/// Adds a DTP under `prefix`, with its ends renamed to `begin` / `end`.
fn add_dtp(net: &mut TimedNet, prefix: &str, capacity: usize, begin: &str, end: &str) -> Result<(), StructuralError> {
    net.add_block(&make_dtp(capacity)?, prefix)?;
    net.rename(&format!("{prefix}.BeginTransmission"), begin)?;
    net.rename(&format!("{prefix}.EndTransmission"), end)?;
    Ok(())
}

/// Coupled n x n array with vertical DTPs of capacity `vcap`.
fn coupled(n: usize, vcap: usize) -> Result<TimedNet, StructuralError> {
    check_n(n)?;
    let mut net = TimedNet::new();
    for i in 1..=n {
        for j in 1..=n {
            let c = cell(i, j);
            let (idle, comp) = (format!("Idle_{c}"), format!("Compute_{c}"));
            net.net.add_place(&idle, 1)?;
            net.net.add_place(&comp, 0)?;
            net.net.add_simple_transition(&format!("Sync_{c}"), &[&idle], &[&comp])?;
            net.net.add_simple_transition(&format!("End_{c}"), &[&comp], &[&idle])?;
            net.net.set_label(&format!("Sync_{c}"), format!("z{i} := z{i} + a{i}{j} * x{j}"))?;
        }
    }
    for j in 1..=n {
        let end = format!("X_{j}.end");
        add_dtp(&mut net, &format!("X_{j}"), 1, &format!("IX_{j}"), &end)?;
        net.fuse_transitions(&end, &sync(1, j), &sync(1, j))?;
    }
    for i in 1..=n {
        let end = format!("Y_{i}.end");
        add_dtp(&mut net, &format!("Y_{i}"), 1, &format!("IY_{i}"), &end)?;
        net.fuse_transitions(&end, &sync(i, 1), &sync(i, 1))?;
    }
    for i in 1..n {
        for j in 1..=n {
            let p = format!("V_{}", cell(i, j));
            let (b, e) = (format!("{p}.begin"), format!("{p}.end"));
            add_dtp(&mut net, &p, vcap, &b, &e)?;
            net.fuse_transitions(&sync(i, j), &b, &sync(i, j))?;
            net.fuse_transitions(&e, &sync(i + 1, j), &sync(i + 1, j))?;
        }
    }
    for i in 1..=n {
        let p = format!("Z_{i}");
        let b = format!("{p}.begin");
        add_dtp(&mut net, &p, 1, &b, &format!("OZ_{i}"))?;
        let end = format!("End_{}", cell(i, n));
        net.fuse_transitions(&end, &b, &end)?;
    }
    for i in 1..=n {
        for j in 1..n {
            net.fuse_transitions(&format!("End_{}", cell(i, j)), &sync(i, j + 1), &sync(i, j + 1))?;
        }
    }
    Ok(net)
}

fn decouple_all(mut net: TimedNet, n: usize, capacity: usize) -> Result<TimedNet, StructuralError> {
    for i in 1..=n {
        for j in 1..n {
            net = decouple_row_cells(&net, &cell(i, j), &cell(i, j + 1), capacity)?;
        }
    }
    Ok(net)
}

/// Untimed functional model; `decoupled` separates horizontal neighbours
/// by a unit-capacity DTP and doubles the vertical link capacity.
pub fn gen_functional(n: usize, decoupled: bool) -> Result<PetriNet, StructuralError> {
    let net = coupled(n, if decoupled { 2 } else { 1 })?;
    let net = if decoupled { decouple_all(net, n, 1)? } else { net };
    Ok(net.net)
}

/// Grid mapping: one dedicated resource per cell and per link. Every link
/// is a functional DTP stage followed by an operational stage that carries
/// the transmission delay, so H and V links hold two items.
pub fn gen_grid(n: usize, rates: Rates) -> Result<TimedNet, StructuralError> {
    rates.validate()?;
    let mut net = decouple_all(coupled(n, 2)?, n, 2)?;
    let inj = Timing::exponential(rates.injection);
    let op = Timing::exponential(rates.operation);
    let tx = Timing::exponential(rates.transmission);
    let mut timing = TimingSpec::new();
    for k in 1..=n {
        timing.set(format!("IX_{k}"), inj.clone());
        timing.set(format!("IY_{k}"), inj.clone());
        timing.set(format!("OZ_{k}"), tx.clone());
    }
    for i in 1..=n {
        for j in 1..=n {
            let c = cell(i, j);
            timing.set(format!("End_{c}"), op.clone());
            if j < n {
                timing.set(format!("H_{c}.Move1"), tx.clone());
            }
            if i < n {
                timing.set(format!("V_{c}.Move1"), tx.clone());
            }
        }
    }
    net.timing = timing;
    Ok(net)
}

/// Pipeline mapping: the cells of diagonal `k = i + j - 1` share the
/// resource place `Stage_k`. A single token per stage can deadlock.
pub fn gen_pipeline(n: usize, rates: Rates, stage_resources: Option<u32>) -> Result<TimedNet, StructuralError> {
    let mut net = gen_grid(n, rates)?;
    let tokens = stage_resources.unwrap_or(n as u32);
    if tokens == 0 {
        return Err(CompositionError::Invalid("a stage needs at least one resource".into()).into());
    }
    for k in 1..=2 * n - 1 {
        let stage = format!("Stage_{k}");
        net.net.add_place(&stage, tokens)?;
        for i in 1..=n {
            if k + 1 <= i || k + 1 - i > n {
                continue;
            }
            let j = k + 1 - i;
            net.net.add_input_arc(&stage, &sync(i, j), 1)?;
            net.net.add_output_arc(&format!("End_{}", cell(i, j)), &stage, 1)?;
        }
    }
    Ok(net)
}

/// Closed-form node counts `(places, transitions)` of the functional model.
pub fn functional_counts(n: usize, decoupled: bool) -> (usize, usize) {
    let (p, t) = (4 * n * n + 4 * n, n * n + 4 * n);
    if decoupled {
        (p + 4 * n * (n - 1), t + 2 * n * (n - 1))
    } else {
        (p, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structural::{classify, liveness_marked_graph};

    #[test]
    fn single_cell() {
        let net = gen_functional(1, false).unwrap();
        let mut t: Vec<&str> = net.transitions().iter().map(String::as_str).collect();
        t.sort();
        assert_eq!(t, vec!["End_1_1", "IX_1", "IY_1", "OZ_1", "Sync_1_1"]);
        assert_eq!((net.num_places(), net.num_transitions()), functional_counts(1, false));
    }

    #[test]
    fn counts_follow_closed_form() {
        for n in 1..=5 {
            for d in [false, true] {
                let net = gen_functional(n, d).unwrap();
                assert_eq!((net.num_places(), net.num_transitions()), functional_counts(n, d), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn generated_nets_are_live_marked_graphs() {
        for n in 1..=3 {
            for net in [gen_functional(n, false).unwrap(), gen_functional(n, true).unwrap(), gen_grid(n, Rates::default()).unwrap().net] {
                let c = classify(&net);
                assert!(c.is_marked_graph && c.is_strongly_connected);
                assert!(liveness_marked_graph(&net).unwrap().live);
            }
        }
    }

    #[test]
    fn decoupling_frees_the_sync_quad() {
        use crate::structural::{concurrency_by_enumeration, concurrency_quad_check};
        for (d, want) in [(false, 2), (true, 4)] {
            let net = gen_functional(2, d).unwrap();
            let quad = sync_quad(1, 1);
            let names: Vec<&str> = quad.iter().map(String::as_str).collect();
            let ts: Vec<usize> = names.iter().map(|q| net.transition_index(q).unwrap()).collect();
            assert_eq!(concurrency_by_enumeration(&net, &ts, 1_000_000).unwrap(), want);
            assert_eq!(concurrency_quad_check(&net, &names, 1_000_000).unwrap(), want);
        }
    }

    #[test]
    fn pipeline_is_not_a_marked_graph() {
        let net = gen_pipeline(3, Rates::default(), None).unwrap();
        assert!(!classify(&net.net).is_marked_graph);
        assert_eq!(net.net.places().iter().filter(|p| p.starts_with("Stage_")).count(), 5);
        assert!(gen_pipeline(3, Rates::default(), Some(0)).is_err());
    }

    #[test]
    fn grid_timing_covers_sources_cells_and_links() {
        let g = gen_grid(2, Rates::default()).unwrap();
        g.timing.validate(&g.net).unwrap();
        let timed = g.timing.iter().count();
        // 2n sources + n sinks + n^2 cells + 2n(n-1) links
        assert_eq!(timed, 4 + 2 + 4 + 4);
    }

    #[test]
    fn bad_inputs() {
        assert!(gen_functional(0, false).is_err());
        let bad = Rates {
            injection: 0.0,
            ..Rates::default()
        };
        assert!(gen_grid(2, bad).is_err());
    }
}
