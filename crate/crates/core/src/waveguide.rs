//! Fundamental TE mode of a symmetric dielectric slab in air.
//!
//! The crystal is treated as a one-dimensional guide of half-width `b`
//! and index `n_d`. The even mode has a cosine core and exponential
//! cladding; matching the field and its derivative at `|r| = b` gives
//!
//! ```text
//! kappa sin(kappa b) - gamma cos(kappa b) = 0
//! kappa = k sqrt(n_d² - n_eff²),  gamma = k sqrt(n_eff² - 1)
//! ```
//!
//! with `kappa b` in `(0, pi/2)` for the fundamental mode.

use std::f64::consts::PI;

use serde::Serialize;

use crate::cavity::purcell_factor;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::roots::{bisect, brent, golden_min};

/// `n_eff - 1` below which the mode is treated as unresolved.
pub const CUTOFF_RESOLUTION: f64 = 1e-6;
const ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootFinder {
    Brent,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlabMode {
    pub half_width_nm: f64,
    pub guide_index: f64,
    pub wavelength_nm: f64,
    pub effective_index: f64,
    /// Propagation constant `k n_eff` in rad/nm.
    pub propagation_constant: f64,
    /// Transverse wavenumber in the core, 1/nm.
    pub core_wavenumber: f64,
    /// Field decay constant in the cladding, 1/nm.
    pub decay_constant: f64,
    /// Field amplitude at the center for unit `∫ E² dr`.
    pub amplitude: f64,
    /// Half-width at which the field amplitude falls to 1/e² of its peak.
    pub mode_radius_nm: f64,
    /// Half-width at which the intensity falls to 1/e² of its peak.
    pub intensity_radius_nm: f64,
    /// Waist `w` of the Gaussian `exp(-2 r²/w²)` best fitting the intensity.
    pub gaussian_radius_nm: f64,
}

impl SlabMode {
    /// Normalized transverse field.
    pub fn field(&self, r_nm: f64) -> f64 {
        let r = r_nm.abs();
        let b = self.half_width_nm;
        if r <= b {
            self.amplitude * (self.core_wavenumber * r).cos()
        } else {
            self.amplitude * (self.core_wavenumber * b).cos() * (-self.decay_constant * (r - b)).exp()
        }
    }

    pub fn intensity(&self, r_nm: f64) -> f64 {
        self.field(r_nm).powi(2)
    }

    /// Residual of the matching condition, scaled by the vacuum wavenumber.
    pub fn dispersion_residual(&self) -> f64 {
        dispersion(self.half_width_nm, self.guide_index, self.wavelength_nm, self.effective_index)
    }

    /// Half-width where the normalized field drops to `level` of its peak.
    pub fn radius_at(&self, level: f64) -> f64 {
        let (kappa, gamma, b) = (self.core_wavenumber, self.decay_constant, self.half_width_nm);
        let edge = (kappa * b).cos();
        if edge > level {
            b + (edge / level).ln() / gamma
        } else {
            level.acos() / kappa
        }
    }
}

fn wavenumbers(wavelength_nm: f64, guide_index: f64, n_eff: f64) -> (f64, f64) {
    let k = 2.0 * PI / wavelength_nm;
    (k * (guide_index * guide_index - n_eff * n_eff).max(0.0).sqrt(), k * (n_eff * n_eff - 1.0).max(0.0).sqrt())
}

fn dispersion(b: f64, guide_index: f64, wavelength_nm: f64, n_eff: f64) -> f64 {
    let (kappa, gamma) = wavenumbers(wavelength_nm, guide_index, n_eff);
    let k = 2.0 * PI / wavelength_nm;
    (kappa * (kappa * b).sin() - gamma * (kappa * b).cos()) / k
}

/// Fundamental even TE mode of a slab of half-width `half_width_nm`.
pub fn solve_fundamental_mode(half_width_nm: f64, guide_index: f64, wavelength_nm: f64) -> Result<SlabMode> {
    solve_with(half_width_nm, guide_index, wavelength_nm, RootFinder::Brent)
}

pub fn solve_with(half_width_nm: f64, guide_index: f64, wavelength_nm: f64, finder: RootFinder) -> Result<SlabMode> {
    if !(half_width_nm > 0.0 && half_width_nm.is_finite()) {
        return Err(Error::Domain(format!("slab half-width must be positive, got {half_width_nm} nm")));
    }
    if !(guide_index > 1.0) {
        return Err(Error::Domain(format!("guide index must exceed the cladding index 1, got {guide_index}")));
    }
    if !(wavelength_nm > 0.0) {
        return Err(Error::Domain(format!("wavelength must be positive, got {wavelength_nm} nm")));
    }
    let k = 2.0 * PI / wavelength_nm;
    let b = half_width_nm;
    // kappa b = pi/2 at the lower end of the fundamental branch
    let quarter = PI / (2.0 * k * b);
    let lower = (guide_index * guide_index - quarter * quarter).max(1.0).sqrt();
    let f = |n: f64| dispersion(b, guide_index, wavelength_nm, n);
    let n_eff = match finder {
        RootFinder::Brent => brent(f, lower, guide_index, ROOT_TOL)?,
        RootFinder::Bisection => bisect(f, lower, guide_index, ROOT_TOL)?,
    };
    if n_eff - 1.0 < CUTOFF_RESOLUTION {
        return Err(Error::Cutoff { excess: n_eff - 1.0 });
    }
    let (kappa, gamma) = wavenumbers(wavelength_nm, guide_index, n_eff);
    let edge = (kappa * b).cos();
    let norm = b + (2.0 * kappa * b).sin() / (2.0 * kappa) + edge * edge / gamma;
    let mut mode = SlabMode {
        half_width_nm: b,
        guide_index,
        wavelength_nm,
        effective_index: n_eff,
        propagation_constant: k * n_eff,
        core_wavenumber: kappa,
        decay_constant: gamma,
        amplitude: norm.recip().sqrt(),
        mode_radius_nm: 0.0,
        intensity_radius_nm: 0.0,
        gaussian_radius_nm: 0.0,
    };
    mode.mode_radius_nm = mode.radius_at((-2.0f64).exp());
    mode.intensity_radius_nm = mode.radius_at((-1.0f64).exp());
    mode.gaussian_radius_nm = gaussian_fit(&mode);
    Ok(mode)
}

/// Least-squares Gaussian waist for the peak-normalized intensity profile.
fn gaussian_fit(mode: &SlabMode) -> f64 {
    let peak = mode.intensity(0.0);
    let b = mode.half_width_nm;
    let far = b + 40.0 / mode.decay_constant;
    let cost = |w: f64| {
        let g = |r: f64| (mode.intensity(r) / peak - (-2.0 * r * r / (w * w)).exp()).powi(2);
        integrate(g, 0.0, far, &[b], Tolerance::relative(1e-10)).value
    };
    let guess = mode.intensity_radius_nm;
    golden_min(cost, 0.2 * guess, 5.0 * guess, 1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfinementSweep {
    pub points: Vec<SlabMode>,
    /// Sweep point with the smallest mode radius.
    pub best_sample: SlabMode,
    /// Minimum of the mode radius refined between the neighbouring samples.
    pub optimum: SlabMode,
}

/// Mode radius against slab half-width.
pub fn confinement_sweep(half_widths_nm: &[f64], guide_index: f64, wavelength_nm: f64) -> Result<ConfinementSweep> {
    if half_widths_nm.is_empty() || half_widths_nm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("half-widths must be non-empty and strictly ascending".into()));
    }
    let points = half_widths_nm
        .iter()
        .map(|&b| solve_fundamental_mode(b, guide_index, wavelength_nm))
        .collect::<Result<Vec<_>>>()?;
    let i = (0..points.len())
        .min_by(|&a, &b| points[a].mode_radius_nm.total_cmp(&points[b].mode_radius_nm))
        .unwrap_or(0);
    let best_sample = points[i];
    let lo = half_widths_nm[i.saturating_sub(1)];
    let hi = half_widths_nm[(i + 1).min(points.len() - 1)];
    let optimum = if hi > lo {
        let radius = |b: f64| solve_fundamental_mode(b, guide_index, wavelength_nm).map_or(f64::INFINITY, |m| m.mode_radius_nm);
        solve_fundamental_mode(golden_min(radius, lo, hi, 1e-6), guide_index, wavelength_nm)?
    } else {
        best_sample
    };
    Ok(ConfinementSweep { points, best_sample, optimum })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridEstimate {
    /// `pi w0² lambda / (8 n_eff)` in nm³.
    pub volume_cubic_nm: f64,
    /// The same volume in units of `(lambda/n_eff)³`.
    pub volume_cubic_material_wavelengths: f64,
    pub c_eff: f64,
}

/// Slab-mode segment in a half-wave planar cavity of length `lambda/(2 n_eff)`.
pub fn hybrid_purcell(effective_index: f64, mode_radius_nm: f64, wavelength_nm: f64, q_eff: f64) -> Result<HybridEstimate> {
    for (name, v) in [
        ("effective index", effective_index),
        ("mode radius", mode_radius_nm),
        ("wavelength", wavelength_nm),
        ("effective quality", q_eff),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let volume_cubic_nm = PI * mode_radius_nm * mode_radius_nm * wavelength_nm / (8.0 * effective_index);
    let unit = (wavelength_nm / effective_index).powi(3);
    let volume_cubic_material_wavelengths = volume_cubic_nm / unit;
    let c_eff = purcell_factor(effective_index, q_eff, volume_cubic_nm / wavelength_nm.powi(3));
    Ok(HybridEstimate { volume_cubic_nm, volume_cubic_material_wavelengths, c_eff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::DIAMOND_INDEX;

    #[test]
    fn seventy_nanometre_guide() {
        let m = solve_fundamental_mode(70.0, DIAMOND_INDEX, 700.0).unwrap();
        assert!((m.effective_index - 1.88).abs() < 0.08, "{m:?}");
        assert!(m.dispersion_residual().abs() < 1e-10);
        assert!(m.intensity_radius_nm < m.mode_radius_nm);
    }

    #[test]
    fn bulk_and_thin_limits() {
        let thick = solve_fundamental_mode(5000.0, DIAMOND_INDEX, 700.0).unwrap();
        assert!((thick.effective_index / DIAMOND_INDEX - 1.0).abs() < 0.01);
        let excess: Vec<f64> = [40.0, 20.0, 10.0, 5.0, 2.0]
            .iter()
            .map(|&b| solve_fundamental_mode(b, DIAMOND_INDEX, 700.0).unwrap().effective_index - 1.0)
            .collect();
        assert!(excess.windows(2).all(|w| w[1] < w[0]));
        // weak-guidance limit n_eff - 1 ≈ (k b (n² - 1))² / 2
        let k = 2.0 * PI / 700.0;
        let approx = (k * 2.0 * (DIAMOND_INDEX.powi(2) - 1.0)).powi(2) / 2.0;
        assert!((excess[4] / approx - 1.0).abs() < 0.05, "{} vs {approx}", excess[4]);
        assert!(matches!(solve_fundamental_mode(0.001, DIAMOND_INDEX, 700.0), Err(Error::Cutoff { .. })));
    }

    #[test]
    fn field_is_normalized_and_smooth() {
        let m = solve_fundamental_mode(70.0, DIAMOND_INDEX, 700.0).unwrap();
        let b = m.half_width_nm;
        let far = b + 60.0 / m.decay_constant;
        let total = 2.0 * integrate(|r| m.intensity(r), 0.0, far, &[b], Tolerance::relative(1e-12)).value;
        assert!((total - 1.0).abs() < 1e-8);
        let h = 1e-6;
        assert!((m.field(b - h) - m.field(b + h)).abs() < 1e-8);
        let (kappa, gamma) = (m.core_wavenumber, m.decay_constant);
        let slope_in = -m.amplitude * kappa * (kappa * b).sin();
        let slope_out = -m.amplitude * gamma * (kappa * b).cos();
        assert!((slope_in - slope_out).abs() < 1e-8 * m.amplitude * kappa);
    }

    #[test]
    fn root_finders_agree() {
        for b in [15.0, 70.0, 300.0] {
            let a = solve_with(b, DIAMOND_INDEX, 700.0, RootFinder::Brent).unwrap();
            let c = solve_with(b, DIAMOND_INDEX, 700.0, RootFinder::Bisection).unwrap();
            assert!((a.effective_index - c.effective_index).abs() < 1e-9);
        }
    }

    #[test]
    fn confinement_optimum() {
        let bs: Vec<f64> = (20..=200).step_by(5).map(f64::from).collect();
        let sweep = confinement_sweep(&bs, DIAMOND_INDEX, 700.0).unwrap();
        let best = sweep.optimum;
        assert!((best.half_width_nm - 70.0).abs() < 15.0, "{best:?}");
        assert!((best.mode_radius_nm - 160.0).abs() < 30.0, "{best:?}");
        let i = sweep.points.iter().position(|p| *p == sweep.best_sample).unwrap();
        assert!(sweep.points[..=i].windows(2).all(|w| w[1].mode_radius_nm < w[0].mode_radius_nm));
        assert!(sweep.points[i..].windows(2).all(|w| w[1].mode_radius_nm > w[0].mode_radius_nm));
    }

    #[test]
    fn scale_invariance() {
        let bs: Vec<f64> = (40..=120).map(f64::from).collect();
        let a = confinement_sweep(&bs, DIAMOND_INDEX, 700.0).unwrap().optimum;
        let scaled: Vec<f64> = bs.iter().map(|b| 1.5 * b).collect();
        let c = confinement_sweep(&scaled, DIAMOND_INDEX, 1050.0).unwrap().optimum;
        assert!((c.mode_radius_nm / a.mode_radius_nm - 1.5).abs() < 1e-6);
    }

    #[test]
    fn hybrid_volume_and_purcell() {
        let h = hybrid_purcell(1.88, 160.0, 700.0, 8.0).unwrap();
        assert!((h.volume_cubic_material_wavelengths - 0.07).abs() < 0.01, "{h:?}");
        assert!((h.c_eff - 8.0).abs() < 1.6, "{h:?}");
        let q2 = hybrid_purcell(1.88, 160.0, 700.0, 16.0).unwrap();
        assert!((q2.c_eff / h.c_eff - 2.0).abs() < 1e-12);
        let w2 = hybrid_purcell(1.88, 320.0, 700.0, 8.0).unwrap();
        assert!((w2.volume_cubic_nm / h.volume_cubic_nm - 4.0).abs() < 1e-12);
        assert!((h.c_eff / w2.c_eff - 4.0).abs() < 1e-12);
        assert!(hybrid_purcell(0.0, 160.0, 700.0, 8.0).is_err());
    }
}
