use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wavelength {wavelength_nm} nm outside table `{material}` range [{min_nm}, {max_nm}] nm")]
    WavelengthOutOfRange { material: String, wavelength_nm: f64, min_nm: f64, max_nm: f64 },

    #[error("invalid material table: {0}")]
    InvalidTable(String),

    #[error("invalid layer stack: {0}")]
    InvalidStack(String),

    #[error("invalid argument: {0}")]
    Domain(String),

    #[error("total round-trip loss {total} >= 1, low-loss finesse formula does not apply")]
    ModelValidity { total: f64 },

    #[error("total mirror loss is zero")]
    ZeroLoss,

    #[error("unstable resonator: length {length_nm} nm not inside (0, r_c = {radius_nm} nm)")]
    Unstable { length_nm: f64, radius_nm: f64 },

    #[error("length calibration failed: best residual {residual_nm} nm exceeds {limit_nm} nm")]
    Calibration { residual_nm: f64, limit_nm: f64 },

    #[error("integral did not converge ({context}); remaining tail bounded by {bound:e}")]
    NonConvergent { context: String, bound: f64 },

    #[error("wavelength grid covers only {covered:.4} of the spectral weight (need 0.99)")]
    Coverage { covered: f64 },

    #[error("no guided mode resolved: n_eff - 1 = {excess:e} is below resolution")]
    Cutoff { excess: f64 },

    #[error("fit failed after {starts} starts, best weighted residual {best_residual}")]
    FitFailure { starts: usize, best_residual: f64 },

    #[error("empty photon stream")]
    EmptyStream,
}
