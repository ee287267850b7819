#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli_io;
pub mod ergodic_opt;
pub mod graph;
pub mod limits;
pub mod par;
pub mod potential;
pub mod rpf_finite;
pub mod shift_model;
