//! Controllable unital channels for polarization qubits.
//!
//! The crate models the four-birefringent-crystal channel (three tunable
//! half-wave plates between four crystals), the Soleil-Babinet dephaser, and
//! the tomography pipeline used to characterize them:
//!
//! - [`polarization`]: density matrices, Stokes vectors, basis states.
//! - [`channel`]: process matrices, D matrices and the tetrahedron picture,
//!   process fidelity.
//! - [`crystal`]: the temporal-bin simulator and its closed-form D vector.
//! - [`sbc`]: the Soleil-Babinet dephaser and the S2 oscillation fit.
//! - [`reachability`]: sweeps over wave-plate angles, the dephasing locus and
//!   the angle search for target channels.
//! - [`tomography`]: simulated counts, maximum-likelihood state and process
//!   tomography, Monte-Carlo error bars.
//! - [`io`]: JSON and CSV formats shared with the CLI.

pub mod channel;
pub mod cli;
pub mod crystal;
pub mod error;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod polarization;
pub mod reachability;
pub mod sbc;
pub mod tomography;

pub use error::{Error, Result};
