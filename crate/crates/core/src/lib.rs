//! Intra-pair skew modelling for cascaded coupled transmission lines.

// negated comparisons below are deliberate: they reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod config;
pub mod error;
mod fit;
pub mod ispg;
pub mod mode_solver;
pub mod model;
pub mod skew;
pub mod sparam;
pub mod table;
pub mod touchstone;

pub use error::{Error, ErrorClass, Result};
pub use mode_solver::{AsymmetryPerturbation, LcMatrices, ModeSolution};
pub use model::{
    make_grid, validate_segment, Block, FourPortResponse, FrequencyGrid, MixedModeResponse,
    PhysicalLine, SegmentKind, SegmentSpec, SkewProfile, Spacing,
};
pub use ispg::{Direction, IspgGraph};
