#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod distances;
pub mod env;
pub mod error;
pub mod geometry;
pub mod goalgen;
pub mod goalgraph;
pub mod learner;
pub mod replay;
pub mod trainer;
