//! Online bin covering with a few bits of advice.
//!
//! The crate provides exact dyadic arithmetic, an advice tape with
//! self-delimiting codes, the online strategies (dual next fit, dual
//! harmonic, and the advice-driven `DH^b_2`), the offline oracle that writes
//! the advice, an exact optimum for small instances, and seeded instance
//! generators with an experiment runner.

pub mod advice;
pub mod advicetape;
pub mod dyadic;
pub mod experiment;
pub mod generators;
pub mod model;
pub mod opt;
pub mod oracle;
pub mod rational;
pub mod strategies;

pub use advice::{Dh2bAdvice, LastCase, Selector};
pub use advicetape::{AdviceTape, BitBudgetReport, TapeError};
pub use dyadic::{ApproxParams, Dyadic, DyadicError, Rounding};
pub use model::{
    classify_item, covering_score, partition_groups, validate_covering, Bin, BinRole, Color,
    Covering, GroupKey, GroupedPartition, Instance, Item, ItemClass, ValidationReport, Violation,
};
pub use opt::{canonicalize, exact_opt, load_upper_bound, OptError, OptMethod, OptResult};
pub use oracle::{compute_advice, theoretical_bound, CaseKind, OracleError, OraclePlan};
pub use strategies::{run, RunOutcome, StrategyError, StrategyKind};
