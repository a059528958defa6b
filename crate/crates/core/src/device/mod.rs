//! Closed-form physics of flux-tunable transmons and linear flux crosstalk.

mod crosstalk;
mod junction;
mod transmon;

pub use crosstalk::{CrosstalkMatrix, DEFAULT_DET_FLOOR};
pub use junction::{ej_for_f01_max, ej_of_flux, f01_from_ej, junction_asymmetry, Junction, JunctionDesign};
pub use transmon::{idle_flux, Branch, Role, TransmonParams};
