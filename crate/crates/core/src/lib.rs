//! Continuous-aperture integrated sensing and communication (ISAC) beamforming.
//!
//! The crate models a transmit/receive surface pair whose radiated field is
//! controlled in the wavenumber (spatial Fourier) domain, and solves the joint
//! transmit-receive beamforming problem that maximizes the minimum sensing
//! SINR across radar targets subject to per-user communication SINR floors:
//!
//! * [`aperture`] / [`channel`] — closed-form far-field Green's-function
//!   Fourier coefficients and channel synthesis on a truncated order grid.
//! * [`sinr`] / [`beampattern`] — communication and sensing SINR evaluation in
//!   both covariance and beamformer form, plus azimuth beampattern cuts.
//! * [`conic`] — a dense homogeneous self-dual interior-point solver for the
//!   semidefinite feasibility subproblems (Hermitian blocks, trace
//!   inequalities, PSD couplings).
//! * [`txbf`] / [`rxbf`] / [`ao`] — max-min SINR bisection with adaptive
//!   bracketing, rank-one beamformer recovery, generalized Rayleigh-quotient
//!   receive filtering, and the alternating optimization driver.
//! * [`baseline`] — a half-wavelength discrete-array counterpart sharing the
//!   same aperture and optimization pipeline.
//! * [`scenario`] / [`sweep`] / [`report`] — scenario configuration, sweep
//!   orchestration, and CSV/JSON report emission.

pub mod aperture;
pub mod ao;
pub mod baseline;
pub mod beampattern;
pub mod channel;
pub mod conic;
pub mod noise;
pub mod report;
pub mod rxbf;
pub mod scenario;
pub mod sinr;
pub mod sweep;
pub mod txbf;

pub use aperture::{ApertureSpec, FarFieldPoint, WavenumberGrid};
pub use channel::ChannelSet;
pub use sinr::{BeamformerSet, CovariancePack, NoiseModel};
pub use txbf::BisectionBracket;

use std::os::raw::c_int;
use std::sync::Once;

extern "C" {
    fn openblas_set_num_threads(n: c_int);
}

static BLAS_THREADS: Once = Once::new();

/// Pin BLAS to one thread. Parallelism lives at the scenario/sweep level, so
/// threaded BLAS only oversubscribes the cores and hurts the small dense
/// factorizations used here.
pub fn configure_blas_single_thread() {
    BLAS_THREADS.call_once(|| unsafe {
        openblas_set_num_threads(1);
    });
}

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMat = ndarray::Array2<C64>;
/// Dense complex vector.
pub type CVec = ndarray::Array1<C64>;
