//! Periodic grids, field storage, spectral operators, interpolation, closed
//! loops, and snapshot I/O.

mod field;
mod grid;
mod interp;
mod loops;
mod snapshot;
mod spectral;

pub(crate) use field::pairwise_sum;
pub(crate) use spectral::coulomb_project;
pub use field::{ComplexField, ScalarField, VectorField};
pub use grid::Grid;
pub(crate) use interp::cubic_weights;
pub use interp::{interpolate, interpolate_vector, FourierEvaluator, Interpolation};
pub use loops::{circle_loop, line_integral, Loop};
pub use snapshot::{
    encode_snapshot, read_snapshot, snapshot_to_csv, write_snapshot, FieldData, Snapshot,
    SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
};
pub use spectral::{
    curl, derivative, derivative_complex, divergence, gradient, gradient_complex,
    inverse_laplacian, laplacian, laplacian_complex, planar_curl, smooth_scalar,
    smooth_vector,
};
