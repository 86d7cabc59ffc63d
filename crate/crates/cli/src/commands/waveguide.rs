use nvcavity::waveguide::{confinement_sweep, hybrid_purcell, solve_with, RootFinder};

use crate::config::{grid, require, RootMethod};
use crate::error::{Classify, CliError};
use crate::output::Table;
use crate::{row, Session};

pub fn run(s: &mut Session) -> Result<(), CliError> {
    let cfg = s.config.waveguide.clone().unwrap_or_default();
    require("waveguide.lambda_nm must be positive", cfg.lambda_nm > 0.0 && cfg.lambda_nm.is_finite())?;
    require("waveguide.guide_index must exceed 1", cfg.guide_index > 1.0 && cfg.guide_index.is_finite())?;
    require("waveguide.half_width_nm must be positive", cfg.half_width_nm > 0.0)?;
    require("waveguide.half_width_start_nm must be positive", cfg.half_width_start_nm > 0.0)?;
    require("waveguide.q_eff must be positive", cfg.q_eff > 0.0)?;
    let widths = grid("waveguide half-width sweep", cfg.half_width_start_nm, cfg.half_width_stop_nm, cfg.half_width_step_nm)?;
    let radii = grid("waveguide profile", 0.0, cfg.profile_extent_nm, cfg.profile_step_nm)?;
    let external = match (cfg.hybrid_effective_index, cfg.hybrid_mode_radius_nm) {
        (Some(n), Some(r)) => Some((n, r)),
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "waveguide.hybrid_effective_index and waveguide.hybrid_mode_radius_nm must be given together".into(),
            ))
        }
    };
    s.begin(&cfg, &[]);
    let finder = match cfg.root_finder {
        RootMethod::Brent => RootFinder::Brent,
        RootMethod::Bisection => RootFinder::Bisection,
    };

    let mode = solve_with(cfg.half_width_nm, cfg.guide_index, cfg.lambda_nm, finder).numerical("mode solve")?;
    let summary = Table::quantities(
        "waveguide_mode",
        [
            ("half_width_nm", mode.half_width_nm.into()),
            ("guide_index", mode.guide_index.into()),
            ("lambda_nm", mode.wavelength_nm.into()),
            ("n_eff", mode.effective_index.into()),
            ("propagation_constant_per_nm", mode.propagation_constant.into()),
            ("core_wavenumber_per_nm", mode.core_wavenumber.into()),
            ("decay_constant_per_nm", mode.decay_constant.into()),
            ("mode_radius_nm", mode.mode_radius_nm.into()),
            ("intensity_radius_nm", mode.intensity_radius_nm.into()),
            ("gaussian_radius_nm", mode.gaussian_radius_nm.into()),
            ("dispersion_residual", mode.dispersion_residual().into()),
        ],
    );
    s.sink.table(&summary)?;

    let mut profile = Table::new("waveguide_profile", &["r_nm", "field", "intensity"]);
    for &r in &radii {
        profile.push(row![r, mode.field(r), mode.intensity(r)]);
    }
    s.sink.table(&profile)?;

    let sweep = confinement_sweep(&widths, cfg.guide_index, cfg.lambda_nm).numerical("confinement sweep")?;
    let mut table = Table::new("waveguide_sweep", &["b_nm", "n_eff", "mode_radius_nm", "intensity_radius_nm"]);
    for m in &sweep.points {
        table.push(row![m.half_width_nm, m.effective_index, m.mode_radius_nm, m.intensity_radius_nm]);
    }
    table.note(format!(
        "smallest mode radius {} nm at b = {} nm (refined between samples)",
        sweep.optimum.mode_radius_nm, sweep.optimum.half_width_nm
    ));
    s.sink.table(&table)?;

    let mut hybrid = Table::new(
        "waveguide_hybrid",
        &["source", "n_eff", "mode_radius_nm", "q_eff", "volume_nm3", "volume_material_wavelengths", "c_eff"],
    );
    let mut inputs = vec![("sweep_optimum", sweep.optimum.effective_index, sweep.optimum.mode_radius_nm)];
    if let Some((n, r)) = external {
        inputs.push(("configured", n, r));
    }
    for (source, n, r) in inputs {
        let h = hybrid_purcell(n, r, cfg.lambda_nm, cfg.q_eff).numerical("hybrid Purcell estimate")?;
        hybrid.push(row![source, n, r, cfg.q_eff, h.volume_cubic_nm, h.volume_cubic_material_wavelengths, h.c_eff]);
    }
    s.sink.table(&hybrid)
}
