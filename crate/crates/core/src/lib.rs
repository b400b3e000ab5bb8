// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod failures;
pub mod optimizer;
pub mod performance;
pub mod runner;
pub mod topology;
pub mod traffic;
