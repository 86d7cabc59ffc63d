mod commands;
mod config;
mod error;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Catalog, RunConfig};
use crate::error::CliError;
use crate::output::{Format, Provenance, Sink};

/// Fiber-cavity optics, dipole emission in layered media and photon
/// statistics, driven by TOML config files.
#[derive(Debug, Parser)]
#[command(name = "nvcavity", version)]
struct Cli {
    /// TOML config file; built-in defaults are used when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default `out`, or `out_dir` from the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed for synthetic data and simulations (default 1).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Table format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reflectivity, transmission, absorption and phase of mirror coatings.
    Coating,
    /// Resonance lengths, waist, mode volume, spectra, PSF and calibration.
    Cavity,
    /// Dipole decay rates, lifetime against mirror separation, collection.
    Ldos,
    /// Slab-guide mode solve, confinement sweep and hybrid Purcell estimate.
    Waveguide,
    /// Photon streams, correlation histograms and fits.
    #[command(subcommand)]
    Photons(PhotonsCommand),
    /// Recompute every headline number and compare against its target range.
    ReproducePaper,
}

#[derive(Debug, Subcommand)]
enum PhotonsCommand {
    /// Simulate a three-level emitter with background.
    Simulate,
    /// Coincidence histogram of a timestamp file.
    Histogram,
    /// Fit the antibunching/bunching model.
    FitG2,
    /// Fit the saturation curve.
    FitSat,
    /// Fit a mono or stretched exponential decay.
    FitLifetime,
    /// Detection efficiency, excitation intensity and rate budget.
    Budget,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Coating => "coating",
            Command::Cavity => "cavity",
            Command::Ldos => "ldos",
            Command::Waveguide => "waveguide",
            Command::Photons(p) => match p {
                PhotonsCommand::Simulate => "photons simulate",
                PhotonsCommand::Histogram => "photons histogram",
                PhotonsCommand::FitG2 => "photons fit-g2",
                PhotonsCommand::FitSat => "photons fit-sat",
                PhotonsCommand::FitLifetime => "photons fit-lifetime",
                PhotonsCommand::Budget => "photons budget",
            },
            Command::ReproducePaper => "reproduce-paper",
        }
    }
}

/// Everything a subcommand needs: the parsed config, where relative paths
/// start, and the output sink.
pub struct Session {
    pub subcommand: &'static str,
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub seed: u64,
    pub catalog: Catalog,
    pub sink: Sink,
}

impl Session {
    /// Records the resolved configuration for the provenance header of all
    /// subsequent outputs. `inputs` are hashed by content.
    pub fn begin(&mut self, section: &impl Serialize, inputs: &[PathBuf]) {
        let digests: Vec<(String, String)> = inputs
            .iter()
            .map(|p| (p.display().to_string(), fs::read(p).map(|b| output::sha256_hex(&b)).unwrap_or_default()))
            .collect();
        let resolved = serde_json::json!({
            "materials": self.config.materials,
            "stacks": self.config.stacks,
            "section": section,
            "inputs": digests,
        });
        self.sink.begin(Provenance::new(self.subcommand, self.seed, &resolved));
    }
}

fn prepare(cli: &Cli) -> Result<Session, CliError> {
    let (config, base_dir) = match &cli.config {
        Some(path) => {
            let cfg = config::load(path)?;
            let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
            (cfg, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(1);
    let format = cli.format.or(config.format).unwrap_or_default();
    let out = match (&cli.out, &config.out_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => config::resolve(&base_dir, o),
        (None, None) => PathBuf::from("out"),
    };
    if out.exists() && !out.is_dir() {
        return Err(CliError::Config(format!("output path {} exists and is not a directory", out.display())));
    }
    fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", out.display())))?;
    let stale = out.join("partial.json");
    if stale.is_file() {
        fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    let catalog = Catalog::load(&config, &base_dir)?;
    Ok(Session { subcommand: cli.command.name(), config, base_dir, seed, catalog, sink: Sink::new(out, format) })
}

fn dispatch(command: &Command, s: &mut Session) -> Result<(), CliError> {
    match command {
        Command::Coating => commands::coating::run(s),
        Command::Cavity => commands::cavity::run(s),
        Command::Ldos => commands::ldos::run(s),
        Command::Waveguide => commands::waveguide::run(s),
        Command::Photons(p) => match p {
            PhotonsCommand::Simulate => commands::photons::simulate(s),
            PhotonsCommand::Histogram => commands::photons::histogram(s),
            PhotonsCommand::FitG2 => commands::photons::fit_g2(s),
            PhotonsCommand::FitSat => commands::photons::fit_sat(s),
            PhotonsCommand::FitLifetime => commands::photons::fit_lifetime(s),
            PhotonsCommand::Budget => commands::photons::budget(s),
        },
        Command::ReproducePaper => commands::reproduce::run(s),
    }
}

fn fail(err: &CliError, written: &[PathBuf], out_dir: Option<&Path>) -> ExitCode {
    if let CliError::EmptyConfig(_) = err {
        eprintln!("{}", Cli::command().render_usage());
    }
    let diag = err.diagnostic(written);
    if let (false, Some(dir)) = (written.is_empty(), out_dir) {
        // flag partial outputs next to the files themselves
        let mut s = serde_json::to_string_pretty(&diag).expect("diagnostic serializes");
        s.push('\n');
        let _ = fs::write(dir.join("partial.json"), s);
    }
    eprintln!("{diag}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Config(e.kind().to_string());
            eprintln!("{}", err.diagnostic(&[]));
            return ExitCode::from(err.exit_code());
        }
    };
    let mut session = match prepare(&cli) {
        Ok(s) => s,
        Err(e) => return fail(&e, &[], None),
    };
    match dispatch(&cli.command, &mut session) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, session.sink.written(), Some(session.sink.dir())),
    }
}
