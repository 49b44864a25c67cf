//! Rescaled homoenergetic shear-flow kinetics.
//!
//! * [`tensor`]: 2×2 symmetric tensor algebra and shear geometry.
//! * [`moments`]: stress ODE, coefficient frames, fourth/sixth moment systems.
//! * [`fp`]: finite-volume solver for the rescaled Fokker-Planck shape equation.
//! * [`dsmc`]: hard-sphere particle simulation in shear flow.
//! * [`diagnostics`]: rate fits, asymptotics tables, verdicts and manifests.

pub mod error;
pub mod tensor;

pub use error::{Error, Result};
pub mod fit;
pub mod moments;
pub mod ode;
pub mod fp;
pub mod dsmc;
pub mod diagnostics;
