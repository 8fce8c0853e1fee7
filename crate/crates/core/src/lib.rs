pub mod dressing;
pub mod error;
pub mod grid;
pub mod gsge;
pub mod io;
pub mod isothermic;
pub mod matrix;
pub mod sge;
pub mod surfaces;
pub mod sweep;
pub mod tolerances;
pub mod zero_curvature;

pub use error::{Error, Result};
pub use grid::{Accuracy, Field, GridSpec};
pub use matrix::{CMat, RMat};
pub use sweep::{MidpointRule, SweepOptions, SweepOrder};
pub use zero_curvature::{Connection, Frame};
