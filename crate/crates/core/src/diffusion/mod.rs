//! Forward noising schedules, the denoising objective and training.

mod objective;
mod schedule;
mod train;

pub use objective::{denoising_loss, make_batch, Batch, TargetScale};
pub use schedule::{ve_sigma, vp_coeffs, NoiseSchedule};
pub use train::{train, validation_drift, EpochRecord, TrainConfig, TrainReport, Validation, ValidationMode};

#[cfg(test)]
mod tests;
