//! Run configuration: one TOML file with optional per-subcommand sections.
//! Physical quantities carry their unit in the key name.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nvcavity::dipole_ldos::{CollectionSide, Orientation};
use nvcavity::material::{Material, MaterialTable};
use nvcavity::multilayer::{coatings, LayerStack, Polarization};
use nvcavity::photostats::DecayKind;
use serde::{Deserialize, Serialize};

use crate::error::{Classify, CliError};
use crate::output::{Format, TimestampFormat};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    #[serde(default)]
    pub materials: Vec<MaterialEntry>,
    #[serde(default)]
    pub stacks: Vec<StackEntry>,
    pub coating: Option<CoatingConfig>,
    pub cavity: Option<CavityConfig>,
    pub ldos: Option<LdosConfig>,
    pub waveguide: Option<WaveguideConfig>,
    pub photons: Option<PhotonsConfig>,
    pub reproduce: Option<ReproduceConfig>,
}

/// Tabulated material read from a `wavelength_nm, n_real, n_imag` CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialEntry {
    pub name: String,
    pub table: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackEntry {
    pub name: String,
    #[serde(default = "air")]
    pub incident: String,
    #[serde(default = "glass")]
    pub exit: String,
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub material: String,
    pub thickness_nm: f64,
}

fn air() -> String {
    "air".into()
}

fn glass() -> String {
    "glass".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoatingConfig {
    pub wavelength_start_nm: f64,
    pub wavelength_stop_nm: f64,
    pub wavelength_step_nm: f64,
    pub angle_deg: f64,
    pub polarization: Polarization,
    /// Wavelength of the loss budget table.
    pub reference_wavelength_nm: f64,
    pub outcoupler: String,
    pub back: String,
    /// Round-trip scattering loss added to the budget.
    pub scattering: f64,
}

impl Default for CoatingConfig {
    fn default() -> Self {
        Self {
            wavelength_start_nm: 500.0,
            wavelength_stop_nm: 900.0,
            wavelength_step_nm: 5.0,
            angle_deg: 0.0,
            polarization: Polarization::TE,
            reference_wavelength_nm: 700.0,
            outcoupler: "planar".into(),
            back: "fiber".into(),
            scattering: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityConfig {
    pub r_c_um: f64,
    pub lambda_nm: f64,
    /// Longitudinal mode orders to tabulate.
    pub q: Vec<u32>,
    /// Mean reflection-phase deviation from pi, in units of pi. Taken from
    /// the mirror stacks when absent.
    pub phi_over_pi: Option<f64>,
    pub outcoupler: String,
    pub back: String,
    /// Finesse for the quality factor; the low-loss finesse of the mirror
    /// stacks when absent.
    pub finesse: Option<f64>,
    pub emitter_fwhm_nm: f64,
    pub index: f64,
    pub spectrum: SpectrumConfig,
    pub psf: PsfConfig,
    pub calibration: Option<CalibrationConfig>,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            r_c_um: 90.0,
            lambda_nm: 690.0,
            q: vec![1, 2, 3, 4, 5, 6],
            phi_over_pi: None,
            outcoupler: "planar".into(),
            back: "fiber".into(),
            finesse: None,
            emitter_fwhm_nm: 90.0,
            index: 1.0,
            spectrum: SpectrumConfig::default(),
            psf: PsfConfig::default(),
            calibration: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanAxis {
    Length,
    Wavelength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub scan: ScanAxis,
    pub gap_start_nm: f64,
    pub gap_stop_nm: f64,
    pub gap_step_nm: f64,
    /// Fixed mirror separation of a wavelength scan.
    pub gap_nm: f64,
    pub wavelength_start_nm: f64,
    pub wavelength_stop_nm: f64,
    pub wavelength_step_nm: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            scan: ScanAxis::Length,
            gap_start_nm: 150.0,
            gap_stop_nm: 2000.0,
            gap_step_nm: 0.5,
            gap_nm: 1000.0,
            wavelength_start_nm: 550.0,
            wavelength_stop_nm: 850.0,
            wavelength_step_nm: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsfConfig {
    pub excitation_nm: f64,
    pub length_start_nm: f64,
    pub length_stop_nm: f64,
    pub length_step_nm: f64,
}

impl Default for PsfConfig {
    fn default() -> Self {
        Self { excitation_nm: 532.0, length_start_nm: 300.0, length_stop_nm: 5000.0, length_step_nm: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub resonances_nm: Vec<f64>,
    pub prior_order: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdosConfig {
    pub wavelength_nm: f64,
    pub orientation: Orientation,
    pub lower: String,
    pub upper: String,
    pub gap_medium: String,
    pub crystal_material: String,
    /// Zero places the emitter in the gap medium without a crystal slab.
    pub crystal_thickness_nm: f64,
    /// Height above the lower mirror; the slab center when absent.
    pub dipole_height_nm: Option<f64>,
    /// Mirror separation of the rate spectrum and the decay breakdown.
    pub d0_nm: f64,
    pub spectrum_start_nm: f64,
    pub spectrum_stop_nm: f64,
    pub spectrum_step_nm: f64,
    pub emission_center_nm: f64,
    /// Full width at 1/e of the Gaussian emission spectrum.
    pub emission_width_nm: f64,
    pub d0_start_nm: f64,
    pub d0_stop_nm: f64,
    pub d0_step_nm: f64,
    /// Lifetime minima shallower than this are not reported.
    pub min_prominence: f64,
    /// Lifetime with the lower mirror only, to convert ratios into ns.
    pub mirror_lifetime_ns: f64,
    pub collection: CollectionConfig,
}

impl Default for LdosConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 690.0,
            orientation: Orientation::Parallel,
            lower: "planar_thick_cap".into(),
            upper: "fiber".into(),
            gap_medium: "air".into(),
            crystal_material: "diamond".into(),
            crystal_thickness_nm: 30.0,
            dipole_height_nm: None,
            d0_nm: 345.0,
            spectrum_start_nm: 580.0,
            spectrum_stop_nm: 800.0,
            spectrum_step_nm: 5.0,
            emission_center_nm: 690.0,
            emission_width_nm: 110.0,
            d0_start_nm: 100.0,
            d0_stop_nm: 2500.0,
            d0_step_nm: 5.0,
            min_prominence: 0.005,
            mirror_lifetime_ns: nvcavity::dipole_ldos::MIRROR_LIFETIME_NS,
            collection: CollectionConfig::default(),
        }
    }
}

/// Emitter at `height_nm` above a `host`/`substrate` interface, collected
/// through the substrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectionConfig {
    pub wavelength_nm: f64,
    pub host: String,
    pub substrate: String,
    pub height_nm: f64,
    pub na: f64,
    pub orientation: Orientation,
    pub side: CollectionSide,
}

impl Default for CollectionConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 690.0,
            host: "air".into(),
            substrate: "glass".into(),
            height_nm: 0.0,
            na: 0.75,
            orientation: Orientation::Isotropic,
            side: CollectionSide::Below,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootMethod {
    Brent,
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideConfig {
    pub lambda_nm: f64,
    pub guide_index: f64,
    pub half_width_nm: f64,
    pub root_finder: RootMethod,
    pub half_width_start_nm: f64,
    pub half_width_stop_nm: f64,
    pub half_width_step_nm: f64,
    pub q_eff: f64,
    pub profile_extent_nm: f64,
    pub profile_step_nm: f64,
    /// Optional external mode data for a second hybrid estimate; both or
    /// neither must be given.
    pub hybrid_effective_index: Option<f64>,
    pub hybrid_mode_radius_nm: Option<f64>,
}

impl Default for WaveguideConfig {
    fn default() -> Self {
        Self {
            lambda_nm: 700.0,
            guide_index: 2.4,
            half_width_nm: 70.0,
            root_finder: RootMethod::Brent,
            half_width_start_nm: 20.0,
            half_width_stop_nm: 200.0,
            half_width_step_nm: 5.0,
            q_eff: 8.0,
            profile_extent_nm: 600.0,
            profile_step_nm: 5.0,
            hybrid_effective_index: None,
            hybrid_mode_radius_nm: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotonsConfig {
    pub simulate: SimulateConfig,
    pub histogram: HistogramConfig,
    pub fit_g2: FitG2Config,
    pub fit_sat: FitSatConfig,
    pub fit_lifetime: FitLifetimeConfig,
    pub budget: BudgetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub excitation_rate_per_ns: f64,
    pub radiative_rate_per_ns: f64,
    pub shelving_rate_per_ns: f64,
    pub deshelving_rate_per_ns: f64,
    pub detection_efficiency: f64,
    pub background_rate_per_ns: f64,
    pub duration_ns: u64,
    pub timestamp_format: TimestampFormat,
    /// File stem of the timestamp output.
    pub output_name: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            excitation_rate_per_ns: 0.05,
            radiative_rate_per_ns: 1.0 / 12.0,
            shelving_rate_per_ns: 0.01,
            deshelving_rate_per_ns: 1.0 / 150.0,
            detection_efficiency: 0.1,
            background_rate_per_ns: 5e-4,
            duration_ns: 200_000_000,
            timestamp_format: TimestampFormat::Binary,
            output_name: "photons".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    /// Timestamp file, binary unless the extension is `.csv`.
    pub input: Option<PathBuf>,
    pub duration_ns: Option<u64>,
    pub bin_ns: f64,
    pub window_ns: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { input: None, duration_ns: None, bin_ns: 2.0, window_ns: 600.0 }
    }
}

/// Fits timestamps from `input`, or a synthetic histogram drawn from the
/// model parameters when no input is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitG2Config {
    pub input: Option<PathBuf>,
    pub duration_ns: Option<u64>,
    pub bin_ns: f64,
    pub window_ns: f64,
    pub single_emitter_threshold: f64,
    pub p: f64,
    pub b: f64,
    pub tau1_ns: f64,
    pub tau2_ns: f64,
    pub coincidences: f64,
}

impl Default for FitG2Config {
    fn default() -> Self {
        Self {
            input: None,
            duration_ns: None,
            bin_ns: 4.0,
            window_ns: 1500.0,
            single_emitter_threshold: nvcavity::photostats::SINGLE_EMITTER_THRESHOLD,
            p: 0.73,
            b: 0.5,
            tau1_ns: 12.0,
            tau2_ns: 200.0,
            coincidences: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Uniform,
    Relative,
    Absolute,
}

/// Fits `intensity_w_per_m2, rate_per_s[, sigma_per_s]` rows from `input`,
/// or synthetic points from the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSatConfig {
    pub input: Option<PathBuf>,
    pub weights: WeightMode,
    pub relative_noise: f64,
    pub k_inf_per_s: f64,
    pub i_sat_w_per_m2: f64,
    pub a_per_s_per_w_per_m2: f64,
    pub intensities_w_per_m2: Vec<f64>,
}

impl Default for FitSatConfig {
    fn default() -> Self {
        Self {
            input: None,
            weights: WeightMode::Relative,
            relative_noise: 0.03,
            k_inf_per_s: 6.9e5,
            i_sat_w_per_m2: 0.49e9,
            a_per_s_per_w_per_m2: 1e-4,
            intensities_w_per_m2: [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0]
                .iter()
                .map(|x| x * 1e9)
                .collect(),
        }
    }
}

/// Fits `start_ns, stop_ns, counts` rows from `input`, or a synthetic decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitLifetimeConfig {
    pub input: Option<PathBuf>,
    pub kind: DecayKind,
    pub tau_ns: f64,
    pub beta: f64,
    pub amplitude_per_bin: f64,
    pub background_per_bin: f64,
    pub start_ns: f64,
    pub stop_ns: f64,
    pub bin_ns: f64,
}

impl Default for FitLifetimeConfig {
    fn default() -> Self {
        Self {
            input: None,
            kind: DecayKind::Mono,
            tau_ns: 18.9,
            beta: 1.0,
            amplitude_per_bin: 1e4,
            background_per_bin: 10.0,
            start_ns: 0.0,
            stop_ns: 200.0,
            bin_ns: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub detected_rate_per_s: f64,
    pub path_efficiency: f64,
    pub detector_efficiency: f64,
    /// Power transmitted through the outcoupling mirror, for the intensity.
    pub transmitted_power_w: Option<f64>,
    pub excitation_waist_um: f64,
    pub mirror_transmission: f64,
    /// Saturation rate of a reference emitter for the enhancement ratio.
    pub reference_rate_per_s: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            detected_rate_per_s: 6.9e5,
            path_efficiency: 0.67,
            detector_efficiency: 0.65,
            transmitted_power_w: Some(27e-6),
            excitation_waist_um: 0.97,
            mirror_transmission: 0.15,
            reference_rate_per_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceConfig {
    pub criteria: Vec<u8>,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self { criteria: (1..=8).collect() }
    }
}

/// Reads and parses a config file. Files with nothing but whitespace and
/// comments are rejected.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("config file {} does not exist", path.display())));
    }
    let text = fs::read_to_string(path).config(&format!("reading {}", path.display()))?;
    let meaningful = text.lines().map(str::trim).any(|l| !l.is_empty() && !l.starts_with('#'));
    if !meaningful {
        return Err(CliError::EmptyConfig(path.to_path_buf()));
    }
    parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))
}

/// Resolves `path` against the directory of the config file.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Requires an existing regular file.
pub fn existing_file(base: &Path, path: &Path, what: &str) -> Result<PathBuf, CliError> {
    let p = resolve(base, path);
    if !p.is_file() {
        return Err(CliError::Config(format!("{what}: {} is not a readable file", p.display())));
    }
    Ok(p)
}

/// Evenly spaced samples `start, start + step, ...` up to `stop`.
pub fn grid(what: &str, start: f64, stop: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(start.is_finite() && stop.is_finite() && stop >= start && step > 0.0 && step.is_finite()) {
        return Err(CliError::Config(format!("{what}: need finite start <= stop and a positive step")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(CliError::Config(format!("{what}: {n} samples exceeds the limit of 10^6")));
    }
    Ok((0..n).map(|i| start + step * i as f64).collect())
}

pub fn require(what: &str, ok: bool) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(what.into()))
    }
}

/// Materials and layer stacks available to a run by name.
#[derive(Debug, Clone)]
pub struct Catalog {
    materials: BTreeMap<String, Material>,
    stacks: BTreeMap<String, LayerStack>,
}

/// Built-in stack names.
pub const BUILTIN_STACKS: [&str; 3] = ["planar", "fiber", "planar_thick_cap"];

impl Catalog {
    pub fn load(cfg: &RunConfig, base: &Path) -> Result<Self, CliError> {
        let mut materials = BTreeMap::new();
        for m in &cfg.materials {
            let path = existing_file(base, &m.table, &format!("material `{}`", m.name))?;
            let text = fs::read_to_string(&path).config(&format!("reading {}", path.display()))?;
            let table = MaterialTable::from_csv(m.name.clone(), &text).config(&path.display().to_string())?;
            if materials.insert(m.name.to_ascii_lowercase(), Material::Tabulated(table.into())).is_some() {
                return Err(CliError::Config(format!("material `{}` defined twice", m.name)));
            }
        }
        let mut catalog = Self { materials, stacks: BTreeMap::new() };
        for s in &cfg.stacks {
            let films = s
                .layers
                .iter()
                .map(|l| Ok((catalog.material(&l.material)?, l.thickness_nm)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let stack = LayerStack::from_films(catalog.material(&s.incident)?, films, catalog.material(&s.exit)?)
                .config(&format!("stack `{}`", s.name))?;
            if catalog.stacks.insert(s.name.clone(), stack).is_some() {
                return Err(CliError::Config(format!("stack `{}` defined twice", s.name)));
            }
        }
        Ok(catalog)
    }

    pub fn material(&self, name: &str) -> Result<Material, CliError> {
        match self.materials.get(&name.trim().to_ascii_lowercase()) {
            Some(m) => Ok(m.clone()),
            None => Material::builtin(name).config("material"),
        }
    }

    pub fn stack(&self, name: &str) -> Result<LayerStack, CliError> {
        if let Some(s) = self.stacks.get(name) {
            return Ok(s.clone());
        }
        match name {
            "planar" => Ok(coatings::planar_mirror()),
            "fiber" => Ok(coatings::fiber_mirror()),
            "planar_thick_cap" => Ok(coatings::planar_mirror_thick_cap()),
            _ => Err(CliError::Config(format!(
                "unknown stack `{name}`; define it under [[stacks]] or use one of {}",
                BUILTIN_STACKS.join(", ")
            ))),
        }
    }
}
