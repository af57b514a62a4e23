//! Single-image defocus deblurring with defocus-map-conditioned spatial
//! feature modulation.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] reverse-mode autodiff engine, Adam, finite-difference checks
//! * [`blur`] spatially varying Gaussian blur model and synthetic data
//! * [`nets`] defocus map estimation, condition and deblurring networks
//! * [`train`] losses, augmentation and the staged training schedule
//! * [`metrics`] MAE/MSE/PSNR/SSIM and dataset evaluation reports
//! * [`formats`] defocus map, checkpoint, config, manifest and report files
//! * [`dataset`] synthetic triplets on disk and in memory
//! * [`checks`] the registered finite-difference gradient suite

pub mod par;
pub mod tensor;
pub mod blur;
pub mod image;
pub mod nets;
pub mod train;
pub mod metrics;
pub mod formats;
pub mod dataset;
pub mod checks;
