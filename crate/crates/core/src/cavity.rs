//! Fabry-Perot mode geometry, resonance conditions, Airy spectra and the
//! simple Purcell / collection formulas.
//!
//! Lengths are in nm unless the name says otherwise; mode waists and radii
//! of curvature are in µm. A radius of curvature of `f64::INFINITY` denotes
//! a plane-plane resonator.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::multilayer::{coatings, LayerStack, LossBudget, Polarization, StackResponse};

const NM_PER_UM: f64 = 1000.0;
const FIXED_POINT_TOL_NM: f64 = 1e-6;
const FIXED_POINT_MAX_ITER: usize = 100;

fn positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Gouy phase `arccos sqrt(1 - d/r_c)` of a plano-concave resonator.
pub fn gouy_phase(length_nm: f64, radius_um: f64) -> Result<f64> {
    let rc = radius_um * NM_PER_UM;
    if radius_um == f64::INFINITY {
        return Ok(0.0);
    }
    if !(length_nm > 0.0 && length_nm < rc) {
        return Err(Error::Unstable { length_nm, radius_nm: rc });
    }
    Ok((1.0 - length_nm / rc).sqrt().acos())
}

/// Mode waist `w0 = sqrt(lambda/pi * sqrt(r_c d - d^2))` in µm.
pub fn mode_waist(radius_um: f64, length_nm: f64, wavelength_nm: f64) -> Result<f64> {
    positive("wavelength", wavelength_nm)?;
    positive("radius of curvature", radius_um)?;
    let rc = radius_um * NM_PER_UM;
    if !(length_nm > 0.0 && length_nm < rc) {
        return Err(Error::Unstable { length_nm, radius_nm: rc });
    }
    let w0_sq = wavelength_nm / PI * (rc * length_nm - length_nm * length_nm).sqrt();
    Ok(w0_sq.sqrt() / NM_PER_UM)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeVolume {
    pub cubic_um: f64,
    /// Volume in units of the cubed wavelength.
    pub cubic_wavelengths: f64,
}

/// Gaussian mode volume `pi w0^2 d / 4`.
pub fn mode_volume(waist_um: f64, length_nm: f64, wavelength_nm: f64) -> Result<ModeVolume> {
    positive("mode waist", waist_um)?;
    positive("length", length_nm)?;
    positive("wavelength", wavelength_nm)?;
    let cubic_um = PI * waist_um * waist_um * (length_nm / NM_PER_UM) / 4.0;
    let lambda_um = wavelength_nm / NM_PER_UM;
    Ok(ModeVolume { cubic_um, cubic_wavelengths: cubic_um / lambda_um.powi(3) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceLengths {
    /// Optical length including the Gouy correction.
    pub optical_nm: f64,
    /// Geometric mirror separation including the reflection-phase correction.
    pub geometric_nm: f64,
    pub gouy_phase: f64,
    pub iterations: usize,
}

/// Solves `d = lambda/2 (q + zeta(d)/pi)` by fixed-point iteration and
/// returns `d` and `d0 = lambda/2 (q + (zeta - phi)/pi)`, where `phi` is
/// the mean reflection-phase deviation from pi.
pub fn resonance_lengths(q: u32, wavelength_nm: f64, radius_um: f64, phase_deviation: f64) -> Result<ResonanceLengths> {
    if q == 0 {
        return Err(Error::Domain("mode order must be at least 1".into()));
    }
    positive("wavelength", wavelength_nm)?;
    if !(radius_um > 0.0) {
        return Err(Error::Domain(format!("radius of curvature must be positive, got {radius_um} µm")));
    }
    if !(phase_deviation.abs() < PI) {
        return Err(Error::Domain(format!("phase deviation {phase_deviation} outside (-pi, pi)")));
    }
    let half = wavelength_nm / 2.0;
    let mut d = half * q as f64;
    let mut zeta = 0.0;
    let mut iterations = 0;
    loop {
        if iterations == FIXED_POINT_MAX_ITER {
            return Err(Error::NonConvergent {
                context: "resonance length fixed point".into(),
                bound: (half * (q as f64 + zeta / PI) - d).abs(),
            });
        }
        iterations += 1;
        zeta = gouy_phase(d, radius_um)?;
        let next = half * (q as f64 + zeta / PI);
        let step = (next - d).abs();
        d = next;
        if step < FIXED_POINT_TOL_NM {
            break;
        }
    }
    // final consistency check against the instability boundary
    let zeta = gouy_phase(d, radius_um)?;
    let geometric_nm = half * (q as f64 + (zeta - phase_deviation) / PI);
    Ok(ResonanceLengths { optical_nm: d, geometric_nm, gouy_phase: zeta, iterations })
}

/// Wraps an angle into (-pi, pi].
fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Mean deviation of two mirror reflection phases from pi, in (-pi, pi].
/// Phases are `arg r` of the tangential field as reported by
/// [`StackResponse`]; an ideal mirror has deviation 0.
pub fn mean_phase_deviation(phase_1: f64, phase_2: f64) -> f64 {
    let phase_2 = phase_1 + wrap(phase_2 - phase_1);
    wrap(PI + 0.5 * (phase_1 + phase_2))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthCalibration {
    pub optical_nm: f64,
    /// Mode order assigned to each input wavelength, in input order.
    pub orders: Vec<u32>,
    /// Largest `|q lambda/2 - d|` over the resonances.
    pub residual_nm: f64,
}

/// Optical length from a set of resonance wavelengths of one mirror
/// separation. A single resonance needs `prior_order`.
pub fn length_from_spectrum(resonances_nm: &[f64], prior_order: Option<u32>) -> Result<LengthCalibration> {
    for &l in resonances_nm {
        positive("resonance wavelength", l)?;
    }
    match resonances_nm {
        [] => Err(Error::Domain("no resonance wavelengths given".into())),
        [l] => {
            let q = prior_order.ok_or_else(|| Error::Domain("a single resonance needs a prior mode order".into()))?;
            if q == 0 {
                return Err(Error::Domain("mode order must be at least 1".into()));
            }
            Ok(LengthCalibration { optical_nm: q as f64 * l / 2.0, orders: vec![q], residual_nm: 0.0 })
        }
        _ => {
            let mut sorted = resonances_nm.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let (la, lb) = (sorted[0], sorted[1]);
            if la == lb {
                return Err(Error::Calibration { residual_nm: f64::INFINITY, limit_nm: la / 20.0 });
            }
            let first_guess = la * lb / (2.0 * (la - lb));
            let orders: Vec<u32> =
                resonances_nm.iter().map(|&l| (2.0 * first_guess / l).round().max(1.0) as u32).collect();
            let optical_nm = resonances_nm.iter().zip(&orders).map(|(&l, &q)| q as f64 * l / 2.0).sum::<f64>()
                / resonances_nm.len() as f64;
            let mut residual_nm: f64 = 0.0;
            let mut worst_limit = f64::INFINITY;
            for (&l, &q) in resonances_nm.iter().zip(&orders) {
                let res = (q as f64 * l / 2.0 - optical_nm).abs();
                residual_nm = residual_nm.max(res);
                worst_limit = worst_limit.min(l / 20.0);
            }
            let mut unique = orders.clone();
            unique.sort_unstable();
            unique.dedup();
            if residual_nm >= worst_limit || unique.len() != orders.len() {
                return Err(Error::Calibration { residual_nm, limit_nm: worst_limit });
            }
            Ok(LengthCalibration { optical_nm, orders, residual_nm })
        }
    }
}

/// Two mirrors facing each other across an air gap. Both stacks have the
/// gap medium as their incident half-space. Mirror 1 is the outcoupler.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorPair {
    pub outcoupler: LayerStack,
    pub back: LayerStack,
    /// Radius of curvature of the curved mirror in µm, infinite for plane-plane.
    pub radius_um: f64,
}

/// Per-wavelength mirror data entering the Airy function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MirrorData {
    pub outcoupler: StackResponse,
    pub back: StackResponse,
}

impl MirrorData {
    pub fn loss_budget(&self) -> LossBudget {
        LossBudget::from_responses(&self.outcoupler, &self.back)
    }

    pub fn phase_deviation(&self) -> f64 {
        mean_phase_deviation(self.outcoupler.reflection_phase, self.back.reflection_phase)
    }

    /// Exact Airy finesse `pi / (2 asin((1 - rho) / (2 sqrt rho)))` with
    /// `rho = sqrt(R1 R2)`.
    pub fn airy_finesse(&self) -> f64 {
        let rho = (self.outcoupler.reflectivity * self.back.reflectivity).sqrt();
        let s = (1.0 - rho) / (2.0 * rho.sqrt());
        if s >= 1.0 {
            return 1.0;
        }
        PI / (2.0 * s.asin())
    }
}

impl MirrorPair {
    /// Plano-concave fiber cavity: 33 nm silver planar outcoupler, 60 nm
    /// silver fiber mirror.
    pub fn fiber_cavity(radius_um: f64) -> Self {
        Self { outcoupler: coatings::planar_mirror(), back: coatings::fiber_mirror(), radius_um }
    }

    /// Plane-plane cavity with the thick-cap planar mirror.
    pub fn plane_plane() -> Self {
        Self { outcoupler: coatings::planar_mirror_thick_cap(), back: coatings::fiber_mirror(), radius_um: f64::INFINITY }
    }

    pub fn mirror_data(&self, wavelength_nm: f64) -> Result<MirrorData> {
        Ok(MirrorData {
            outcoupler: self.outcoupler.response(wavelength_nm, 0.0, Polarization::TE)?,
            back: self.back.response(wavelength_nm, 0.0, Polarization::TE)?,
        })
    }

    /// Round-trip phase `2 k d0 + phi1 + phi2 - 2 zeta`, with the Gouy phase
    /// evaluated at the optical length implied by the mirror phases.
    pub fn round_trip_phase(&self, mirrors: &MirrorData, wavelength_nm: f64, gap_nm: f64) -> Result<f64> {
        let k = 2.0 * PI / wavelength_nm;
        let optical = gap_nm + wavelength_nm / 2.0 * mirrors.phase_deviation() / PI;
        let zeta = if self.radius_um.is_infinite() { 0.0 } else { gouy_phase(optical.max(f64::MIN_POSITIVE), self.radius_um)? };
        Ok(2.0 * k * gap_nm + mirrors.outcoupler.reflection_phase + mirrors.back.reflection_phase - 2.0 * zeta)
    }

    /// Power transmission of the cavity at one wavelength and gap.
    pub fn transmission(&self, wavelength_nm: f64, gap_nm: f64) -> Result<f64> {
        let m = self.mirror_data(wavelength_nm)?;
        self.transmission_with(&m, wavelength_nm, gap_nm)
    }

    fn transmission_with(&self, m: &MirrorData, wavelength_nm: f64, gap_nm: f64) -> Result<f64> {
        positive("gap", gap_nm)?;
        let phase = self.round_trip_phase(m, wavelength_nm, gap_nm)?;
        let rho = (m.outcoupler.reflectivity * m.back.reflectivity).sqrt();
        let denom = (Complex64::new(1.0, 0.0) - rho * Complex64::from_polar(1.0, phase)).norm_sqr();
        Ok(m.outcoupler.transmissivity * m.back.transmissivity / denom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumSample {
    pub wavelength_nm: f64,
    pub gap_nm: f64,
    pub transmission: f64,
}

/// Axis of a transmission scan.
#[derive(Debug, Clone, PartialEq)]
pub enum Scan {
    /// Fixed wavelength, varying mirror separation.
    Length { wavelength_nm: f64, gaps_nm: Vec<f64> },
    /// Fixed mirror separation, varying wavelength.
    Wavelength { gap_nm: f64, wavelengths_nm: Vec<f64> },
}

/// Airy transmission curve of the mirror pair along `scan`.
pub fn transmission_spectrum(mirrors: &MirrorPair, scan: &Scan) -> Result<Vec<SpectrumSample>> {
    match scan {
        Scan::Length { wavelength_nm, gaps_nm } => {
            let m = mirrors.mirror_data(*wavelength_nm)?;
            gaps_nm
                .iter()
                .map(|&g| {
                    Ok(SpectrumSample {
                        wavelength_nm: *wavelength_nm,
                        gap_nm: g,
                        transmission: mirrors.transmission_with(&m, *wavelength_nm, g)?,
                    })
                })
                .collect()
        }
        Scan::Wavelength { gap_nm, wavelengths_nm } => wavelengths_nm
            .iter()
            .map(|&l| {
                Ok(SpectrumSample { wavelength_nm: l, gap_nm: *gap_nm, transmission: mirrors.transmission(l, *gap_nm)? })
            })
            .collect(),
    }
}

/// Local maxima of a sampled curve, refined by parabolic interpolation.
/// Returns `(position, value)` pairs.
pub fn find_peaks(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut peaks = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
            let curvature = y0 - 2.0 * y1 + y2;
            let shift = if curvature != 0.0 { 0.5 * (y0 - y2) / curvature } else { 0.0 };
            let h = 0.5 * (x[i + 1] - x[i - 1]);
            peaks.push((x[i] + shift * h, y1 - 0.25 * (y0 - y2) * shift));
        }
    }
    peaks
}

/// Cavity quality factor `2 d F / lambda`.
pub fn cavity_quality(length_nm: f64, finesse: f64, wavelength_nm: f64) -> f64 {
    2.0 * length_nm * finesse / wavelength_nm
}

/// `(1/Q_c + 1/Q_em)^-1`.
pub fn effective_quality(q_cavity: f64, q_emitter: f64) -> f64 {
    1.0 / (1.0 / q_cavity + 1.0 / q_emitter)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurcellEstimate {
    pub q_eff: f64,
    pub c_eff: f64,
}

/// `C = 3 (lambda/n)^3 / (4 pi^2) * Q / V` with `V` in units of `lambda^3`.
pub fn purcell_factor(index: f64, q: f64, volume_cubic_wavelengths: f64) -> f64 {
    3.0 / (4.0 * PI * PI * index.powi(3)) * q / volume_cubic_wavelengths
}

/// Purcell factor of a broadband emitter in a cavity of quality `q_cavity`.
pub fn purcell_simple(index: f64, q_cavity: f64, q_emitter: f64, volume_cubic_wavelengths: f64) -> Result<PurcellEstimate> {
    positive("refractive index", index)?;
    positive("cavity quality", q_cavity)?;
    positive("emitter quality", q_emitter)?;
    positive("mode volume", volume_cubic_wavelengths)?;
    let q_eff = effective_quality(q_cavity, q_emitter);
    Ok(PurcellEstimate { q_eff, c_eff: purcell_factor(index, q_eff, volume_cubic_wavelengths) })
}

/// Fraction of emission into the cavity mode, `C / (C + 1)`.
pub fn collection_beta(c_eff: f64) -> Result<f64> {
    if !(c_eff >= 0.0 && c_eff.is_finite()) {
        return Err(Error::Domain(format!("Purcell factor must be non-negative, got {c_eff}")));
    }
    Ok(c_eff / (c_eff + 1.0))
}

/// Expected count-rate enhancement `C eta_c / eta_omega` over free-space
/// collection.
pub fn enhancement_ratio(c_eff: f64, outcoupling: f64, collection: f64) -> Result<f64> {
    if !(c_eff >= 0.0) {
        return Err(Error::Domain(format!("Purcell factor must be non-negative, got {c_eff}")));
    }
    if !(outcoupling > 0.0 && outcoupling <= 1.0) || !(collection > 0.0 && collection <= 1.0) {
        return Err(Error::Domain("efficiencies must lie in (0, 1]".into()));
    }
    Ok(c_eff * outcoupling / collection)
}

/// Detection spot size in µm: the excitation mode `sqrt(lambda_e/lambda) w0`
/// combined with the emission mode `w0`.
pub fn psf_size(waist_um: f64, excitation_nm: f64, wavelength_nm: f64) -> Result<f64> {
    positive("mode waist", waist_um)?;
    positive("excitation wavelength", excitation_nm)?;
    positive("wavelength", wavelength_nm)?;
    let we = (excitation_nm / wavelength_nm).sqrt() * waist_um;
    Ok(we * waist_um / (we * we + waist_um * waist_um).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsfSample {
    pub length_nm: f64,
    pub waist_um: f64,
    pub psf_um: f64,
}

pub fn psf_sweep(radius_um: f64, lengths_nm: &[f64], excitation_nm: f64, wavelength_nm: f64) -> Result<Vec<PsfSample>> {
    lengths_nm
        .iter()
        .map(|&d| {
            let waist_um = mode_waist(radius_um, d, wavelength_nm)?;
            Ok(PsfSample { length_nm: d, waist_um, psf_um: psf_size(waist_um, excitation_nm, wavelength_nm)? })
        })
        .collect()
}

/// Full geometry of one longitudinal mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityGeometry {
    pub radius_um: f64,
    pub order: u32,
    pub wavelength_nm: f64,
    pub optical_nm: f64,
    pub geometric_nm: f64,
    pub gouy_phase: f64,
    pub waist_um: f64,
    pub volume: ModeVolume,
}

impl CavityGeometry {
    pub fn solve(order: u32, wavelength_nm: f64, radius_um: f64, phase_deviation: f64) -> Result<Self> {
        let res = resonance_lengths(order, wavelength_nm, radius_um, phase_deviation)?;
        let waist_um = mode_waist(radius_um, res.optical_nm, wavelength_nm)?;
        let volume = mode_volume(waist_um, res.optical_nm, wavelength_nm)?;
        Ok(Self {
            radius_um,
            order,
            wavelength_nm,
            optical_nm: res.optical_nm,
            geometric_nm: res.geometric_nm,
            gouy_phase: res.gouy_phase,
            waist_um,
            volume,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpectrumShape {
    /// `exp(-((lambda - lambda0) / (w/2))^2)`, `w` the full width at 1/e.
    Gaussian,
    /// `1 / (1 + ((lambda - lambda0) / (w/2))^2)`, `w` the FWHM.
    Lorentzian,
}

/// Emitter spectral density `S(lambda)`, unnormalized with peak 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionSpectrum {
    pub center_nm: f64,
    pub width_nm: f64,
    pub shape: SpectrumShape,
}

impl EmissionSpectrum {
    pub fn gaussian_1e_full_width(center_nm: f64, width_nm: f64) -> Result<Self> {
        positive("center wavelength", center_nm)?;
        positive("spectral width", width_nm)?;
        Ok(Self { center_nm, width_nm, shape: SpectrumShape::Gaussian })
    }

    pub fn lorentzian_fwhm(center_nm: f64, fwhm_nm: f64) -> Result<Self> {
        positive("center wavelength", center_nm)?;
        positive("spectral width", fwhm_nm)?;
        Ok(Self { center_nm, width_nm: fwhm_nm, shape: SpectrumShape::Lorentzian })
    }

    pub fn density(&self, wavelength_nm: f64) -> f64 {
        let x = (wavelength_nm - self.center_nm) / (0.5 * self.width_nm);
        match self.shape {
            SpectrumShape::Gaussian => (-x * x).exp(),
            SpectrumShape::Lorentzian => 1.0 / (1.0 + x * x),
        }
    }

    pub fn fwhm_nm(&self) -> f64 {
        match self.shape {
            SpectrumShape::Gaussian => self.width_nm * std::f64::consts::LN_2.sqrt(),
            SpectrumShape::Lorentzian => self.width_nm,
        }
    }

    /// Emitter quality factor `lambda0 / FWHM`.
    pub fn quality_factor(&self) -> f64 {
        self.center_nm / self.fwhm_nm()
    }

    /// Integral of `S` over `[a, b]`.
    pub fn weight_between(&self, a_nm: f64, b_nm: f64) -> f64 {
        let h = 0.5 * self.width_nm;
        let (xa, xb) = ((a_nm - self.center_nm) / h, (b_nm - self.center_nm) / h);
        match self.shape {
            SpectrumShape::Gaussian => h * PI.sqrt() / 2.0 * (erf(xb) - erf(xa)),
            SpectrumShape::Lorentzian => h * (xb.atan() - xa.atan()),
        }
    }

    pub fn total_weight(&self) -> f64 {
        let h = 0.5 * self.width_nm;
        match self.shape {
            SpectrumShape::Gaussian => h * PI.sqrt(),
            SpectrumShape::Lorentzian => h * PI,
        }
    }
}
