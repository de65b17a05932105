//! Reordering buffer management (RBM): a size-k buffer reorders a stream of
//! colored items to minimize the number of maximal same-color runs in the
//! output. This crate provides the problem model and feasibility checkers
//! ([`core`]), exact exponential-time oracles ([`oracle`]), an online
//! primal-dual solver for the LP relaxation ([`engine`]), randomized rounding
//! of fractional solutions to eviction schedules ([`rounding`]), and seeded
//! instance generators ([`gen`]).

pub mod core;
pub mod engine;
pub mod gen;
pub mod oracle;
pub mod rounding;
