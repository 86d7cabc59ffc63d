use nvcavity::cavity::EmissionSpectrum;
use nvcavity::dipole_ldos::{
    collection_efficiency, lifetime_curve, lifetime_minima, oscillation_period, purcell_spectrum, relative_decay_rate,
    spectral_average_enhancement, Boundary, Crystal, DecayBreakdown, DipoleEnvironment, Orientation, PlanarCavity,
};
use nvcavity::multilayer::LayerStack;

use super::coating::check_range;
use crate::config::{grid, require};
use crate::error::{Classify, CliError};
use crate::output::Table;
use crate::{row, Session};

fn breakdown_rows(table: &mut Table, configuration: &str, b: &DecayBreakdown) {
    for (name, o) in [("parallel", Orientation::Parallel), ("normal", Orientation::Normal), ("isotropic", Orientation::Isotropic)] {
        let total = b.total.get(o);
        table.push(row![
            configuration,
            name,
            total,
            b.radiative.get(o),
            b.quenched.get(o),
            b.absorbed.get(o),
            b.propagating.get(o),
            b.escaped_below.get(o),
            b.escaped_above.get(o),
            b.quenched.get(o) / total,
        ]);
    }
}

pub fn run(s: &mut Session) -> Result<(), CliError> {
    let cfg = s.config.ldos.clone().unwrap_or_default();
    require("ldos.wavelength_nm must be positive", cfg.wavelength_nm > 0.0)?;
    require("ldos.crystal_thickness_nm must be non-negative", cfg.crystal_thickness_nm >= 0.0)?;
    let thickness = cfg.crystal_thickness_nm;
    let height = match (cfg.dipole_height_nm, thickness > 0.0) {
        (Some(h), _) => h,
        (None, true) => 0.5 * thickness,
        (None, false) => return Err(CliError::Config("ldos.dipole_height_nm is required without a crystal slab".into())),
    };
    require("ldos.dipole_height_nm must be non-negative", height >= 0.0)?;
    require("ldos.emission_width_nm must be positive", cfg.emission_width_nm > 0.0 && cfg.emission_center_nm > 0.0)?;
    require("ldos.min_prominence must be non-negative", cfg.min_prominence >= 0.0)?;
    require("ldos.mirror_lifetime_ns must be positive", cfg.mirror_lifetime_ns > 0.0)?;
    require("ldos.spectrum_start_nm must be positive", cfg.spectrum_start_nm > 0.0)?;
    let wavelengths = grid("ldos spectral grid", cfg.spectrum_start_nm, cfg.spectrum_stop_nm, cfg.spectrum_step_nm)?;
    require("ldos spectral grid needs at least two points", wavelengths.len() >= 2)?;
    let d0s = grid("ldos mirror separations", cfg.d0_start_nm, cfg.d0_stop_nm, cfg.d0_step_nm)?;
    require("ldos.d0_start_nm must exceed the crystal thickness", cfg.d0_start_nm > thickness && cfg.d0_nm > thickness)?;

    let cavity = PlanarCavity {
        lower: s.catalog.stack(&cfg.lower)?,
        upper: s.catalog.stack(&cfg.upper)?,
        gap_medium: s.catalog.material(&cfg.gap_medium)?,
        crystal: if thickness > 0.0 {
            Some(Crystal { material: s.catalog.material(&cfg.crystal_material)?, thickness_nm: thickness })
        } else {
            None
        },
        dipole_height_nm: height,
        orientation: cfg.orientation,
    };
    let lo = wavelengths[0].min(cfg.wavelength_nm);
    let hi = wavelengths[wavelengths.len() - 1].max(cfg.wavelength_nm);
    check_range(&cfg.lower, &cavity.lower, lo, hi)?;
    check_range(&cfg.upper, &cavity.upper, lo, hi)?;
    let closed = cavity.environment(cfg.d0_nm, true).config("ldos environment")?;
    let open = cavity.environment(cfg.d0_nm, false).config("ldos environment")?;
    let spectrum = EmissionSpectrum::gaussian_1e_full_width(cfg.emission_center_nm, cfg.emission_width_nm).config("emission spectrum")?;
    let covered = spectrum.weight_between(wavelengths[0], wavelengths[wavelengths.len() - 1]) / spectrum.total_weight();
    require(
        &format!("ldos spectral grid covers only {covered:.4} of the emission spectrum (need 0.99)"),
        covered >= 0.99,
    )?;

    let c = &cfg.collection;
    require("ldos.collection.wavelength_nm must be positive", c.wavelength_nm > 0.0)?;
    let host = s.catalog.material(&c.host)?;
    let interface = LayerStack::interface(host.clone(), s.catalog.material(&c.substrate)?);
    interface.resolve(c.wavelength_nm).config("collection substrate")?;
    let on_substrate = DipoleEnvironment::above_boundary(host, Boundary::Stack(interface), c.height_nm).config("collection environment")?;
    s.begin(&cfg, &[]);

    let mut breakdown = Table::new(
        "ldos_breakdown",
        &[
            "configuration",
            "orientation",
            "total",
            "radiative",
            "quenched",
            "absorbed",
            "propagating",
            "escaped_below",
            "escaped_above",
            "nonradiative_fraction",
        ],
    );
    breakdown.note(format!("rates relative to the unbounded host at {} nm, d0 = {} nm", cfg.wavelength_nm, cfg.d0_nm));
    breakdown_rows(&mut breakdown, "cavity", &relative_decay_rate(&closed, cfg.wavelength_nm).numerical("decay breakdown")?);
    breakdown_rows(&mut breakdown, "mirror_only", &relative_decay_rate(&open, cfg.wavelength_nm).numerical("decay breakdown")?);
    s.sink.table(&breakdown)?;

    let samples = purcell_spectrum(&cavity, cfg.d0_nm, &wavelengths).numerical("rate spectrum")?;
    let mut rates = Table::new("ldos_rates", &["wavelength_nm", "rate_with_cavity", "rate_mirror_only", "rate_ratio"]);
    for p in &samples {
        rates.push(row![p.wavelength_nm, p.with_cavity, p.mirror_only, p.with_cavity / p.mirror_only]);
    }
    let with: Vec<f64> = samples.iter().map(|p| p.with_cavity).collect();
    let mirror: Vec<f64> = samples.iter().map(|p| p.mirror_only).collect();
    let avg = spectral_average_enhancement(&wavelengths, &with, &mirror, &spectrum).numerical("spectral average")?;
    rates.note(format!("spectrally averaged rate ratio {} (lifetime ratio {})", avg.enhancement, avg.lifetime_ratio));
    s.sink.table(&rates)?;

    let curve = lifetime_curve(&cavity, &d0s, &wavelengths, &spectrum).numerical("lifetime curve")?;
    let mut lifetime = Table::new("ldos_lifetime", &["d0_nm", "lifetime_ratio", "lifetime_ns"]);
    for p in &curve {
        lifetime.push(row![p.d0_nm, p.lifetime_ratio, p.lifetime_ratio * cfg.mirror_lifetime_ns]);
    }
    s.sink.table(&lifetime)?;

    let count = (cfg.d0_stop_nm / (0.5 * cfg.emission_center_nm)).ceil() as usize + 2;
    let resonances = cavity.resonance_separations(cfg.emission_center_nm, count).numerical("resonance separations")?;
    let mut minima = Table::new("ldos_minima", &["d0_nm", "lifetime_ratio", "nearest_resonance_nm", "offset_nm"]);
    for m in lifetime_minima(&curve, cfg.min_prominence) {
        let nearest = resonances.iter().copied().min_by(|a, b| (a - m.d0_nm).abs().total_cmp(&(b - m.d0_nm).abs())).unwrap_or(f64::NAN);
        minima.push(row![m.d0_nm, m.lifetime_ratio, nearest, m.d0_nm - nearest]);
    }
    s.sink.table(&minima)?;

    let half = 0.5 * cfg.emission_center_nm;
    let mut summary = Table::quantities(
        "ldos_summary",
        [
            ("deepest_lifetime_ratio", curve.iter().map(|p| p.lifetime_ratio).fold(f64::INFINITY, f64::min).into()),
            ("largest_lifetime_ratio", curve.iter().map(|p| p.lifetime_ratio).fold(f64::NEG_INFINITY, f64::max).into()),
            ("minima_found", minima.len().into()),
        ],
    );
    if curve.len() >= 3 && cfg.d0_stop_nm - cfg.d0_start_nm > 2.0 * half {
        let period = oscillation_period(&curve, 0.6 * half, 1.4 * half).numerical("oscillation period")?;
        summary.push(row!["oscillation_period_nm", period]);
    }
    s.sink.table(&summary)?;

    let col = collection_efficiency(&on_substrate, c.wavelength_nm, c.na, c.orientation, c.side).numerical("collection efficiency")?;
    let collection = Table::quantities(
        "ldos_collection",
        [
            ("wavelength_nm", c.wavelength_nm.into()),
            ("na", c.na.into()),
            ("height_nm", c.height_nm.into()),
            ("relative_to_host", col.relative_to_host.into()),
            ("fraction_of_emission", col.fraction_of_emission.into()),
        ],
    );
    s.sink.table(&collection)
}
