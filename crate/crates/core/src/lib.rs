#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamic;
pub mod etl_sim;
pub mod fortune;
pub mod geometry;
pub mod spatial_index;
pub mod zcurve;
