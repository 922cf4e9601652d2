//! Simulation and characterization of a mixed-species two-qubit light-shift
//! gate: channel algebra, gate physics, the two-qubit Clifford group,
//! interleaved randomized benchmarking, gate set tomography and partial
//! Bell-state tomography, plus the shared dataset and circuit formats.

pub mod clifford;
pub mod gatesim;
pub mod gst;
pub mod harness;
pub mod pst;
pub mod qcore;
pub mod rbm;
