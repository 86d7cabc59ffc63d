use std::f64::consts::PI;

use nvcavity::cavity::MirrorData;
use nvcavity::multilayer::{finesse_from_losses, outcoupling_efficiency, LayerStack};

use crate::config::{grid, require};
use crate::error::{Classify, CliError};
use crate::output::Table;
use crate::{row, Session};

/// Fails early when a stack cannot be evaluated anywhere in `[lo, hi]`.
pub fn check_range(name: &str, stack: &LayerStack, lo: f64, hi: f64) -> Result<(), CliError> {
    for l in [lo, hi] {
        stack.resolve(l).config(&format!("stack `{name}`"))?;
    }
    Ok(())
}

pub fn run(s: &mut Session) -> Result<(), CliError> {
    let cfg = s.config.coating.clone().unwrap_or_default();
    let wavelengths = grid("coating wavelength sweep", cfg.wavelength_start_nm, cfg.wavelength_stop_nm, cfg.wavelength_step_nm)?;
    require("coating.wavelength_start_nm must be positive", cfg.wavelength_start_nm > 0.0)?;
    require("coating.angle_deg must lie in [0, 90)", (0.0..90.0).contains(&cfg.angle_deg))?;
    require("coating.scattering must lie in [0, 1)", (0.0..1.0).contains(&cfg.scattering))?;
    let outcoupler = s.catalog.stack(&cfg.outcoupler)?;
    let back = s.catalog.stack(&cfg.back)?;
    let (lo, hi) = (wavelengths[0].min(cfg.reference_wavelength_nm), wavelengths[wavelengths.len() - 1].max(cfg.reference_wavelength_nm));
    require("coating.reference_wavelength_nm must be positive", cfg.reference_wavelength_nm > 0.0)?;
    check_range(&cfg.outcoupler, &outcoupler, lo, hi)?;
    check_range(&cfg.back, &back, lo, hi)?;
    s.begin(&cfg, &[]);
    let angle = cfg.angle_deg.to_radians();

    let mut spectrum = Table::new(
        "coating_spectrum",
        &["stack", "wavelength_nm", "reflectivity", "transmissivity", "absorption", "reflection_phase_over_pi"],
    );
    for (name, stack) in [(&cfg.outcoupler, &outcoupler), (&cfg.back, &back)] {
        for &l in &wavelengths {
            let r = stack.response(l, angle, cfg.polarization).numerical(&format!("stack `{name}` at {l} nm"))?;
            spectrum.push(row![name.as_str(), l, r.reflectivity, r.transmissivity, r.absorption, r.reflection_phase / PI]);
        }
    }
    s.sink.table(&spectrum)?;

    let lam = cfg.reference_wavelength_nm;
    let m = MirrorData {
        outcoupler: outcoupler.response(lam, angle, cfg.polarization).numerical("outcoupler response")?,
        back: back.response(lam, angle, cfg.polarization).numerical("back mirror response")?,
    };
    let losses = m.loss_budget().with_scattering(cfg.scattering);
    let mut budget = Table::quantities(
        "coating_budget",
        [
            ("reference_wavelength_nm", lam.into()),
            ("outcoupler_transmission", m.outcoupler.transmissivity.into()),
            ("outcoupler_absorption", m.outcoupler.absorption.into()),
            ("outcoupler_reflectivity", m.outcoupler.reflectivity.into()),
            ("outcoupler_phase_over_pi", (m.outcoupler.reflection_phase / PI).into()),
            ("back_transmission", m.back.transmissivity.into()),
            ("back_absorption", m.back.absorption.into()),
            ("back_reflectivity", m.back.reflectivity.into()),
            ("back_phase_over_pi", (m.back.reflection_phase / PI).into()),
            ("phase_deviation_over_pi", (m.phase_deviation() / PI).into()),
            ("scattering", cfg.scattering.into()),
            ("total_loss", losses.total().into()),
        ],
    );
    let finesse = finesse_from_losses(&losses).numerical("finesse")?;
    let eta = outcoupling_efficiency(&losses).numerical("outcoupling efficiency")?;
    budget.push(row!["finesse", finesse]);
    budget.push(row!["finesse_airy", m.airy_finesse()]);
    budget.push(row!["outcoupling_efficiency", eta]);
    if cfg.scattering > 0.0 {
        budget.note("finesse_airy uses the mirror reflectivities only and ignores scattering");
    }
    s.sink.table(&budget)
}
