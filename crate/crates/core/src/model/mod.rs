//! Parameter records and the elementary complex response functions.

mod curve;
mod membrane;
mod params;
mod response;

pub use curve::{unwrap_phase, TransferCurve};
pub use membrane::{membrane_modes, MembraneGeometry, MembraneMode};
pub use params::{
    CavityParams, FeedbackConfig, GainModel, MechanicsParams, Port, PortGeometry,
    DEFAULT_WAVELENGTH,
};
pub use response::{
    cavity_susceptibility, input_phase_shifts, photon_number_and_coupling, zeta_cavity, zeta_out,
};

pub type C64 = num_complex::Complex64;
