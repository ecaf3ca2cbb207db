//! Transfer-matrix solver for the Floquet problem of one channel.

pub mod cone;
pub mod floquet;
pub mod profile;
pub mod rk;
pub mod transfer;

pub use cone::ConeBasis;
pub use floquet::{band_edges, floquet_eigenvalues, monodromy, BandEdge, FloquetSolver, Invariants, Monodromy};
pub use profile::{Profile, Segment, SegmentKind};
pub use transfer::{
    cone_propagator_pair, cone_propagator_scalar, interface_map, segment_propagator, MatchingOptions, Side, Transfer,
};
