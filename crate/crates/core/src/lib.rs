//! Compositional modelling and performance evaluation of parallel programs
//! with Petri nets: a component language, composition operators,
//! structural analysis, throughput bounds, an exact GSPN solver and a
//! discrete-event simulator.

pub mod bounds;
pub mod composition;
pub mod dsl;
pub mod econ;
pub mod gspn;
pub mod lp;
pub mod net;
pub mod pnml;
pub mod sim;
pub mod statespace;
pub mod structural;
pub mod timing;
pub mod wavefront;

pub use bounds::{bounds, gamma_max, gamma_min, BoundResult, BoundsError};
pub use composition::{make_cp, make_dtp, CompositionError, MarkingRule, ModuleBlock, TimedNet};
pub use dsl::DslError;
pub use econ::{CostParams, CostReport, EconError};
pub use gspn::{analyze, CtmcResult, GspnError, SolverMethod, SolverOptions};
pub use net::{Marking, NetError, Node, NodeKind, PetriNet};
pub use pnml::PnmlError;
pub use sim::{simulate, Horizon, SimConfig, SimError, SimResult};
pub use structural::{AnnullerKind, AnnullerVector, StructuralError};
pub use timing::{Family, Timing, TimingError, TimingSpec};
pub use wavefront::{Mapping, Rates, WavefrontSpec};
