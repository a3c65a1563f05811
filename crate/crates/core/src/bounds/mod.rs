//! Numerical checks of the kernel, convolution-power and summability bounds.

pub mod envelope;
pub mod group;
pub mod kernel;

pub use envelope::{
    annuli_series, default_c_grid, dyadic_annuli_sum, envelope_annuli_sum, evaluate_envelope, fit_envelope,
    log_grid,
    AnnuliSums, EnvelopeDatum, EnvelopeFit, EnvelopePoint,
};
pub use group::{
    difference_bound_check, group_mu_k, group_power, summability_profile, DifferenceReport, Group,
    GroupKind, GroupMeasure, GroupSpec, SummabilityProfile,
};
pub use kernel::{
    bilinear_bound_check, explicit_bound_data, explicit_bound_fit, explicit_kernel,
    explicit_kernel_from_coefficients, explicit_segment, fit_class_profile, kernel_bound_check, scale_and_gamma,
    volume_ratio_check, BilinearReport, ClassFit, KernelBoundReport, VolumeRatioReport,
};
