//! Loop quantization toolkit on finite based graphs.
//!
//! * [`algebra`]: SU(2)/U(1) arithmetic and Haar sampling
//! * [`hoops`]: based graphs and reduced loop words
//! * [`connections`]: holonomies, gauge action, Wilson functions
//! * [`triples`]: per-edge triple data and the loop phases `P_α`
//! * [`cylfn`]: cylindrical functions and their integration
//! * [`phase`]: Poisson structure, the derivation `N_F` and the form `Ω`

pub mod algebra;
pub mod connections;
pub mod cylfn;
pub mod hoops;
pub mod phase;
pub mod triples;
