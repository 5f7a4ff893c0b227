//! Optimal error-feedback quantizers (delta-sigma noise shaping).
//!
//! * [`spectral`]: frequency grids, amplitude responses, norms and log
//!   integrals, transfer functions.
//! * [`design`]: the optimal shaping amplitude, its distortion and the
//!   rate-distortion sweep.
//! * [`fit`]: realizable shaping filters (Yule-Walker magnitude fit and a
//!   norm-constrained FIR least-squares solution).
//! * [`simulate`]: time-domain feedback-loop simulation.
//! * [`verify`]: numerical invariant checks with measured values.

pub mod design;
pub mod error;
pub mod fit;
pub mod poly;
pub mod simulate;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};

/// The fourth-order example plant, `P(s)`, sampled at `T_s = 0.1`.
pub fn example_plant() -> spectral::ContinuousTF {
    spectral::ContinuousTF::new(
        vec![1.029, 4.589, 7.146, 3.882],
        vec![1.0, 5.088, 9.789, 8.296, 2.548],
        0.1,
    )
    .expect("example plant is stable and proper")
}

/// Pole of the continuous-time input spectrum `c / |j w + 2.62|^2`.
pub const EXAMPLE_INPUT_POLE: f64 = 2.62;
