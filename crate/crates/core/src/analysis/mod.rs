pub mod experiments;
pub mod fit;

pub use fit::{fit_damped_sine, fit_damped_sine_with, DampedSineFit, FitError, FitOptions};
