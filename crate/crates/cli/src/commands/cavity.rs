use std::f64::consts::PI;

use nvcavity::cavity::{
    cavity_quality, collection_beta, find_peaks, length_from_spectrum, psf_sweep, purcell_simple, transmission_spectrum,
    CavityGeometry, MirrorPair, Scan,
};
use nvcavity::multilayer::finesse_from_losses;

use super::coating::check_range;
use crate::config::{grid, require, ScanAxis};
use crate::error::{Classify, CliError};
use crate::output::Table;
use crate::{row, Session};

pub fn run(s: &mut Session) -> Result<(), CliError> {
    let cfg = s.config.cavity.clone().unwrap_or_default();
    let lam = cfg.lambda_nm;
    require("cavity.r_c_um must be positive and finite", cfg.r_c_um > 0.0 && cfg.r_c_um.is_finite())?;
    require("cavity.lambda_nm must be positive", lam > 0.0 && lam.is_finite())?;
    require("cavity.q must list mode orders >= 1", !cfg.q.is_empty() && cfg.q.iter().all(|&q| q >= 1))?;
    require("cavity.index must be positive", cfg.index > 0.0)?;
    require("cavity.emitter_fwhm_nm must be positive", cfg.emitter_fwhm_nm > 0.0)?;
    require("cavity.finesse must be positive", cfg.finesse.is_none_or(|f| f > 0.0))?;
    require("cavity.phi_over_pi must lie in (-1, 1)", cfg.phi_over_pi.is_none_or(|p| p.abs() < 1.0))?;
    let pair = MirrorPair {
        outcoupler: s.catalog.stack(&cfg.outcoupler)?,
        back: s.catalog.stack(&cfg.back)?,
        radius_um: cfg.r_c_um,
    };
    let sp = &cfg.spectrum;
    let scan = match sp.scan {
        ScanAxis::Length => {
            require("cavity.spectrum.gap_start_nm must be positive", sp.gap_start_nm > 0.0)?;
            Scan::Length { wavelength_nm: lam, gaps_nm: grid("cavity gap scan", sp.gap_start_nm, sp.gap_stop_nm, sp.gap_step_nm)? }
        }
        ScanAxis::Wavelength => {
            require("cavity.spectrum.gap_nm must be positive", sp.gap_nm > 0.0)?;
            require("cavity.spectrum.wavelength_start_nm must be positive", sp.wavelength_start_nm > 0.0)?;
            Scan::Wavelength {
                gap_nm: sp.gap_nm,
                wavelengths_nm: grid("cavity wavelength scan", sp.wavelength_start_nm, sp.wavelength_stop_nm, sp.wavelength_step_nm)?,
            }
        }
    };
    let (lo, hi) = match &scan {
        Scan::Length { .. } => (lam, lam),
        Scan::Wavelength { wavelengths_nm, .. } => (wavelengths_nm[0].min(lam), wavelengths_nm[wavelengths_nm.len() - 1].max(lam)),
    };
    check_range(&cfg.outcoupler, &pair.outcoupler, lo, hi)?;
    check_range(&cfg.back, &pair.back, lo, hi)?;
    require("cavity.psf.excitation_nm must be positive", cfg.psf.excitation_nm > 0.0)?;
    require("cavity.psf.length_start_nm must be positive", cfg.psf.length_start_nm > 0.0)?;
    let psf_lengths = grid("cavity PSF lengths", cfg.psf.length_start_nm, cfg.psf.length_stop_nm, cfg.psf.length_step_nm)?;
    if let Some(c) = &cfg.calibration {
        require("cavity.calibration.resonances_nm must be positive", !c.resonances_nm.is_empty() && c.resonances_nm.iter().all(|&l| l > 0.0))?;
    }
    s.begin(&cfg, &[]);

    let mirrors = pair.mirror_data(lam).numerical("mirror response")?;
    let (phi, phi_source) = match cfg.phi_over_pi {
        Some(p) => (p * PI, "configured"),
        None => (mirrors.phase_deviation(), "computed from the mirror stacks"),
    };
    let (finesse, finesse_source) = match cfg.finesse {
        Some(f) => (f, "configured"),
        None => (finesse_from_losses(&mirrors.loss_budget()).numerical("finesse")?, "low-loss finesse of the mirror stacks"),
    };
    let q_emitter = lam / cfg.emitter_fwhm_nm;
    let mut modes = Table::new(
        "cavity_modes",
        &[
            "q",
            "lambda_nm",
            "optical_length_nm",
            "gap_nm",
            "gouy_phase_rad",
            "waist_um",
            "volume_um3",
            "volume_cubic_wavelengths",
            "finesse",
            "q_cavity",
            "q_emitter",
            "q_eff",
            "c_eff",
            "beta",
        ],
    );
    modes.note(format!("phi_over_pi = {} ({phi_source})", phi / PI));
    modes.note(format!("finesse {finesse_source}"));
    modes.note("q_cavity = 2 d F / lambda from the optical length d; an assumption, not a measured linewidth");
    for &q in &cfg.q {
        let g = CavityGeometry::solve(q, lam, cfg.r_c_um, phi).numerical(&format!("mode order {q}"))?;
        let q_cavity = cavity_quality(g.optical_nm, finesse, lam);
        let p = purcell_simple(cfg.index, q_cavity, q_emitter, g.volume.cubic_wavelengths).numerical("Purcell factor")?;
        modes.push(row![
            q,
            lam,
            g.optical_nm,
            g.geometric_nm,
            g.gouy_phase,
            g.waist_um,
            g.volume.cubic_um,
            g.volume.cubic_wavelengths,
            finesse,
            q_cavity,
            q_emitter,
            p.q_eff,
            p.c_eff,
            collection_beta(p.c_eff).numerical("collection beta")?,
        ]);
    }
    s.sink.table(&modes)?;

    let samples = transmission_spectrum(&pair, &scan).numerical("transmission spectrum")?;
    let mut spectrum = Table::new("cavity_spectrum", &["wavelength_nm", "gap_nm", "transmission"]);
    for p in &samples {
        spectrum.push(row![p.wavelength_nm, p.gap_nm, p.transmission]);
    }
    s.sink.table(&spectrum)?;
    let (axis, x): (&str, Vec<f64>) = match sp.scan {
        ScanAxis::Length => ("gap_nm", samples.iter().map(|p| p.gap_nm).collect()),
        ScanAxis::Wavelength => ("wavelength_nm", samples.iter().map(|p| p.wavelength_nm).collect()),
    };
    let y: Vec<f64> = samples.iter().map(|p| p.transmission).collect();
    let mut peaks = Table::new("cavity_peaks", &[axis, "transmission"]);
    for (pos, t) in find_peaks(&x, &y) {
        peaks.push(row![pos, t]);
    }
    s.sink.table(&peaks)?;

    let mut psf = Table::new("cavity_psf", &["length_nm", "waist_um", "psf_um"]);
    for p in psf_sweep(cfg.r_c_um, &psf_lengths, cfg.psf.excitation_nm, lam).numerical("PSF sweep")? {
        psf.push(row![p.length_nm, p.waist_um, p.psf_um]);
    }
    s.sink.table(&psf)?;

    if let Some(c) = &cfg.calibration {
        let cal = length_from_spectrum(&c.resonances_nm, c.prior_order).numerical("length calibration")?;
        let mut t = Table::new("cavity_calibration", &["resonance_nm", "order", "optical_length_nm", "residual_nm"]);
        for (&l, &q) in c.resonances_nm.iter().zip(&cal.orders) {
            t.push(row![l, q, cal.optical_nm, (q as f64 * l / 2.0 - cal.optical_nm).abs()]);
        }
        t.note(format!("largest residual {} nm", cal.residual_nm));
        s.sink.table(&t)?;
    }
    Ok(())
}
