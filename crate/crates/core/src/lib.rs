//! Local search for sum-of-squares facility location and bicriteria k-means,
//! together with the ball-separator partition machinery used to certify it.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod error;
pub mod geometry;
pub mod grouping;
pub mod harness;
pub mod instance;
pub mod io;
pub mod kmeans;
mod lp;
pub mod oracle;
pub mod partition;
pub mod separator;
pub mod sosfl;
pub mod swap;

pub use error::{GeoError, Result};
pub use geometry::{
    centroid, kmeans_cost, nearest, sosfl_cost, sq_dist, sse_about, voronoi_assign, CostBreakdown,
    Point, PointSet,
};
