//! Comparison strategies and the centralized benchmark.

mod cutoff;
mod da;
mod patient;

pub use cutoff::{simple_cutoff_strategy, RandomProposing, Scripted, SimpleCutoff};
pub use da::{
    blocking_pairs, deferred_acceptance, deferred_acceptance_ordered, read_da_instance,
    write_da_instance, DaInstance,
};
pub use patient::{
    bellman_iterate, bellman_residual, patient_strategy_step, BellmanSamples, BellmanSolution,
    ReservationSchedule,
};
