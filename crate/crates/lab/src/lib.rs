//! Scenario files, coupling generators, execution and output for the
//! consensus stability toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;
pub mod topology;
