#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod eval;
pub mod factors;
pub mod geometry;
pub mod map;
mod math;
pub mod graph;
pub mod linalg;
pub mod optimizer;
pub mod pipeline;
pub mod semantic;
pub mod sim;
