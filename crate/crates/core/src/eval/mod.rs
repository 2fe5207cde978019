//! Evaluation: Parzen-window likelihood, image-recovery metrics, and an
//! exact finite-state simulator of cooperative learning.

mod fixed_point;
mod image_metrics;
mod parzen;

pub use fixed_point::{
    fixed_point_sim, kl, softmax_row, total_variation, write_trace_csv, DiscreteCoopSystem, KernelKind, TraceRow,
};
pub use image_metrics::{psnr, ssim, SsimParams, PSNR_CAP_DB};
pub use parzen::{default_bandwidth_grid, parzen_loglik, select_bandwidth, ParzenEstimator, ParzenReport};
