use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nvcavity::photostats::{
    binned_g2, coincidence_histogram, count_budget, count_rate_enhancement, excitation_intensity, fit_g2 as fit_g2_model,
    fit_lifetime as fit_decay, fit_saturation, is_single_emitter, synthetic_correlation, synthetic_decay,
    synthetic_saturation, Correlation, DecayKind, DecayModel, G2Model, Histogram, PhotonStream, RateWeights,
    SaturationModel, ThreeLevelEmitter,
};
use serde::Deserialize;
use serde_json::json;

use crate::config::{existing_file, grid, require, WeightMode};
use crate::error::{Classify, CliError};
use crate::output::{sidecar_path, Cell, Table};
use crate::{row, Session};

/// Reads timestamps; the duration comes from `duration_ns`, else from the
/// sidecar or CSV header, else the last timestamp.
fn load_stream(path: &Path, duration_ns: Option<u64>) -> Result<PhotonStream, CliError> {
    let what = format!("timestamps {}", path.display());
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
        let mut header_duration = None;
        let mut body = String::with_capacity(text.len());
        for line in text.lines() {
            match line.trim().strip_prefix('#') {
                Some(comment) => {
                    if let Some(v) = comment.trim().strip_prefix("duration_ns:") {
                        header_duration = Some(v.trim().parse::<u64>().config(&what)?);
                    }
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        PhotonStream::read_csv(body.as_bytes(), duration_ns.or(header_duration)).config(&what)
    } else {
        let sidecar = sidecar_path(path);
        let side_duration = if duration_ns.is_none() && sidecar.is_file() {
            let meta: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&sidecar).config(&what)?).config(&sidecar.display().to_string())?;
            meta["duration_ns"].as_u64()
        } else {
            None
        };
        let file = File::open(path).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
        PhotonStream::read_binary(BufReader::new(file), duration_ns.or(side_duration)).config(&what)
    }
}

fn check_binning(section: &str, bin_ns: f64, window_ns: f64) -> Result<(), CliError> {
    require(&format!("{section}: need 1 ns <= bin_ns <= window_ns"), bin_ns >= 1.0 && window_ns >= bin_ns && window_ns.is_finite())
}

/// Measured data read from a file, or a model to draw synthetic data from.
enum Source<D, M> {
    File(D, PathBuf),
    Model(M),
}

impl<D, M> Source<D, M> {
    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Source::File(_, p) => vec![p.clone()],
            Source::Model(_) => Vec::new(),
        }
    }
}

fn photons_section(s: &Session) -> crate::config::PhotonsConfig {
    s.config.photons.clone().unwrap_or_default()
}

pub fn simulate(s: &mut Session) -> Result<(), CliError> {
    let c = photons_section(s).simulate;
    let emitter = ThreeLevelEmitter {
        excitation_rate: c.excitation_rate_per_ns,
        radiative_rate: c.radiative_rate_per_ns,
        shelving_rate: c.shelving_rate_per_ns,
        deshelving_rate: c.deshelving_rate_per_ns,
        detection_efficiency: c.detection_efficiency,
        background_rate: c.background_rate_per_ns,
    };
    emitter.validate().config("photons.simulate")?;
    require("photons.simulate.duration_ns must be positive", c.duration_ns > 0)?;
    require(
        "photons.simulate.output_name must be a plain file stem",
        !c.output_name.is_empty() && !c.output_name.contains(['/', '\\']) && c.output_name != "." && c.output_name != "..",
    )?;
    let model = emitter.g2_model().config("photons.simulate")?;
    s.begin(&c, &[]);

    let stream = emitter.simulate(c.duration_ns, s.seed).numerical("simulation")?;
    s.sink.timestamps(&c.output_name, &stream, c.timestamp_format, json!(c))?;
    let summary = Table::quantities(
        "simulation_summary",
        [
            ("photons", stream.timestamps_ns.len().into()),
            ("duration_ns", stream.duration_ns.into()),
            ("detected_rate_per_ns", stream.rate_per_ns().into()),
            ("expected_signal_rate_per_ns", emitter.signal_rate().into()),
            ("background_rate_per_ns", emitter.background_rate.into()),
            ("p", model.p.into()),
            ("b", model.b.into()),
            ("tau1_ns", model.tau1_ns.into()),
            ("tau2_ns", model.tau2_ns.into()),
            ("g2_zero", model.at_zero().into()),
        ],
    );
    s.sink.table(&summary)
}

fn correlation_table(corr: &Correlation, model: Option<&G2Model>) -> Table {
    let mut cols = vec!["delay_ns", "coincidences", "uncorrelated", "g2", "g2_sigma"];
    if model.is_some() {
        cols.push("g2_model");
    }
    let mut t = Table::new(if model.is_some() { "g2_curve" } else { "g2_histogram" }, &cols);
    let (g2, sigma) = (corr.g2(), corr.g2_sigma());
    for (i, w) in corr.histogram.edges_ns.windows(2).enumerate() {
        let mut r = row![0.5 * (w[0] + w[1]), corr.histogram.counts[i], corr.uncorrelated[i], g2[i], sigma[i]];
        if let Some(m) = model {
            r.push(binned_g2(m, w[0], w[1]).into());
        }
        t.push(r);
    }
    if corr.photons > 0 {
        t.note(format!("{} photons over {} ns", corr.photons, corr.duration_ns));
    }
    t
}

pub fn histogram(s: &mut Session) -> Result<(), CliError> {
    let c = photons_section(s).histogram;
    let input = c.input.as_ref().ok_or_else(|| CliError::Config("photons.histogram.input is required".into()))?;
    let path = existing_file(&s.base_dir, input, "photons.histogram.input")?;
    check_binning("photons.histogram", c.bin_ns, c.window_ns)?;
    let stream = load_stream(&path, c.duration_ns)?;
    require("photons.histogram: the input needs at least two photons", stream.timestamps_ns.len() >= 2)?;
    s.begin(&c, &[path]);
    let corr = coincidence_histogram(&stream, c.bin_ns, c.window_ns).numerical("coincidence histogram")?;
    s.sink.table(&correlation_table(&corr, None))
}

fn parameter_table(name: &str, rows: Vec<(&str, Cell, Cell)>) -> Table {
    let mut t = Table::new(name, &["parameter", "value", "sigma"]);
    for (p, v, e) in rows {
        t.push(vec![p.into(), v, e]);
    }
    t
}

fn none() -> Cell {
    Cell::Text(String::new())
}

pub fn fit_g2(s: &mut Session) -> Result<(), CliError> {
    let c = photons_section(s).fit_g2;
    check_binning("photons.fit_g2", c.bin_ns, c.window_ns)?;
    require("photons.fit_g2.single_emitter_threshold must lie in (0, 1]", c.single_emitter_threshold > 0.0 && c.single_emitter_threshold <= 1.0)?;
    let source = match &c.input {
        Some(input) => {
            let path = existing_file(&s.base_dir, input, "photons.fit_g2.input")?;
            let stream = load_stream(&path, c.duration_ns)?;
            require("photons.fit_g2: the input needs at least two photons", stream.timestamps_ns.len() >= 2)?;
            Source::File(stream, path)
        }
        None => {
            require("photons.fit_g2.coincidences must be positive", c.coincidences > 0.0)?;
            Source::Model(G2Model::new(c.p, c.b, c.tau1_ns, c.tau2_ns).config("photons.fit_g2 model")?)
        }
    };
    s.begin(&c, &source.inputs());
    let corr = match &source {
        Source::File(stream, _) => coincidence_histogram(stream, c.bin_ns, c.window_ns).numerical("coincidence histogram")?,
        Source::Model(model) => {
            synthetic_correlation(model, c.bin_ns, c.window_ns, c.coincidences, s.seed).numerical("synthetic histogram")?
        }
    };
    let fit = fit_g2_model(&corr).numerical("g2 fit")?;
    let m = fit.model;
    let mut t = parameter_table(
        "g2_fit",
        vec![
            ("p", m.p.into(), fit.sigma[0].into()),
            ("b", m.b.into(), fit.sigma[1].into()),
            ("tau1_ns", m.tau1_ns.into(), fit.sigma[2].into()),
            ("tau2_ns", m.tau2_ns.into(), fit.sigma[3].into()),
            ("g2_zero", fit.g2_zero.into(), fit.g2_zero_sigma.into()),
            ("reduced_chi2", fit.reduced_chi2.into(), none()),
            ("single_emitter", is_single_emitter(fit.g2_zero, c.single_emitter_threshold).into(), none()),
        ],
    );
    t.note(format!("single_emitter: g2_zero below {}", c.single_emitter_threshold));
    if let Source::Model(_) = source {
        t.note("synthetic data drawn from the configured model");
    }
    s.sink.table(&t)?;
    s.sink.table(&correlation_table(&corr, Some(&m)))
}

#[derive(Debug, Deserialize)]
struct SaturationRow {
    intensity_w_per_m2: f64,
    rate_per_s: f64,
    #[serde(default)]
    sigma_per_s: Option<f64>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let what = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path).config(&what)?;
    reader.deserialize().map(|r| r.config(&what)).collect()
}

pub fn fit_sat(s: &mut Session) -> Result<(), CliError> {
    let c = photons_section(s).fit_sat;
    require("photons.fit_sat.relative_noise must be positive", c.relative_noise > 0.0)?;
    let data = match &c.input {
        Some(input) => {
            let path = existing_file(&s.base_dir, input, "photons.fit_sat.input")?;
            let rows: Vec<SaturationRow> = read_rows(&path)?;
            require("photons.fit_sat: the input needs at least 5 points", rows.len() >= 5)?;
            Source::File(rows, path)
        }
        None => {
            require("photons.fit_sat: need at least 5 intensities", c.intensities_w_per_m2.len() >= 5)?;
            require("photons.fit_sat: intensities must be non-negative", c.intensities_w_per_m2.iter().all(|&i| i >= 0.0))?;
            Source::Model(SaturationModel::new(c.k_inf_per_s, c.i_sat_w_per_m2, c.a_per_s_per_w_per_m2).config("photons.fit_sat model")?)
        }
    };
    let weights = match (c.weights, &data) {
        (WeightMode::Uniform, _) => RateWeights::Uniform,
        (WeightMode::Relative, _) => RateWeights::Relative(c.relative_noise),
        (WeightMode::Absolute, Source::File(rows, _)) => RateWeights::Absolute(
            rows.iter()
                .map(|r| r.sigma_per_s.filter(|&v| v > 0.0))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| CliError::Config("absolute weights need a positive sigma_per_s on every row".into()))?,
        ),
        (WeightMode::Absolute, Source::Model(model)) => {
            RateWeights::Absolute(c.intensities_w_per_m2.iter().map(|&i| c.relative_noise * model.eval(i)).collect())
        }
    };
    s.begin(&c, &data.inputs());
    let points: Vec<(f64, f64)> = match &data {
        Source::File(rows, _) => rows.iter().map(|r| (r.intensity_w_per_m2, r.rate_per_s)).collect(),
        Source::Model(model) => synthetic_saturation(model, &c.intensities_w_per_m2, c.relative_noise, s.seed),
    };
    let fit = fit_saturation(&points, &weights).numerical("saturation fit")?;
    let m = fit.model;
    let mut t = parameter_table(
        "saturation_fit",
        vec![
            ("K_inf", m.k_inf.into(), fit.sigma[0].into()),
            ("I_sat", m.i_sat.into(), fit.sigma[1].into()),
            ("a", m.a.into(), fit.sigma[2].into()),
            ("reduced_chi2", fit.reduced_chi2.into(), none()),
            ("ill_conditioned", fit.ill_conditioned.into(), none()),
        ],
    );
    t.note("K_inf in 1/s, I_sat in W/m^2, a in 1/s per W/m^2");
    if fit.ill_conditioned {
        t.note("the intensities do not bracket I_sat; K_inf and I_sat are poorly constrained");
    }
    s.sink.table(&t)?;
    let mut curve = Table::new("saturation_curve", &["intensity_w_per_m2", "rate_per_s", "model_per_s", "emitter_per_s"]);
    for (&(i, k), &(_, e)) in points.iter().zip(&fit.background_subtracted) {
        curve.push(row![i, k, m.eval(i), e]);
    }
    s.sink.table(&curve)
}

#[derive(Debug, Deserialize)]
struct DecayRow {
    start_ns: f64,
    stop_ns: f64,
    counts: u64,
}

pub fn fit_lifetime(s: &mut Session) -> Result<(), CliError> {
    let c = photons_section(s).fit_lifetime;
    let data = match &c.input {
        Some(input) => {
            let path = existing_file(&s.base_dir, input, "photons.fit_lifetime.input")?;
            let rows: Vec<DecayRow> = read_rows(&path)?;
            require("photons.fit_lifetime: the input needs at least 8 bins", rows.len() >= 8)?;
            require(
                "photons.fit_lifetime: bins must be contiguous (each start_ns equal to the previous stop_ns)",
                rows.windows(2).all(|w| w[1].start_ns == w[0].stop_ns),
            )?;
            let mut edges: Vec<f64> = rows.iter().map(|r| r.start_ns).collect();
            edges.push(rows[rows.len() - 1].stop_ns);
            let hist = Histogram::new(edges, rows.iter().map(|r| r.counts).collect()).config(&path.display().to_string())?;
            Source::File(hist, path)
        }
        None => {
            let edges = grid("photons.fit_lifetime bins", c.start_ns, c.stop_ns, c.bin_ns)?;
            require("photons.fit_lifetime: need at least 8 bins", edges.len() >= 9)?;
            let model = if c.beta == 1.0 {
                DecayModel::mono(c.tau_ns, c.amplitude_per_bin, c.background_per_bin)
            } else {
                DecayModel::stretched(c.tau_ns, c.beta, c.amplitude_per_bin, c.background_per_bin)
            };
            model.validate().config("photons.fit_lifetime model")?;
            Source::Model((model, edges))
        }
    };
    s.begin(&c, &data.inputs());
    let hist = match data {
        Source::File(h, _) => h,
        Source::Model((model, edges)) => synthetic_decay(&model, &edges, s.seed).numerical("synthetic decay")?,
    };
    let fit = fit_decay(&hist, c.kind).numerical("lifetime fit")?;
    let m = fit.model;
    let mut t = parameter_table(
        "lifetime_fit",
        vec![
            ("tau_ns", m.tau_ns.into(), fit.sigma[0].into()),
            ("beta", m.beta.into(), if c.kind == DecayKind::Mono { none() } else { fit.sigma[1].into() }),
            ("amplitude", m.amplitude.into(), fit.sigma[2].into()),
            ("background", m.background.into(), fit.sigma[3].into()),
            ("mean_lifetime_ns", fit.mean_lifetime_ns.into(), none()),
            ("reduced_chi2", fit.reduced_chi2.into(), none()),
            ("reliable", fit.reliable.into(), none()),
        ],
    );
    if !fit.reliable {
        t.note("the histogram spans less than three lifetimes");
    }
    s.sink.table(&t)?;
    let t0 = hist.edges_ns[0];
    let mut curve = Table::new("lifetime_curve", &["start_ns", "stop_ns", "counts", "model"]);
    for (i, w) in hist.edges_ns.windows(2).enumerate() {
        curve.push(row![w[0], w[1], hist.counts[i], m.eval(0.5 * (w[0] + w[1]) - t0)]);
    }
    s.sink.table(&curve)
}

pub fn budget(s: &mut Session) -> Result<(), CliError> {
    let c = photons_section(s).budget;
    let b = count_budget(c.detected_rate_per_s, c.path_efficiency, c.detector_efficiency).config("photons.budget")?;
    let intensity = c
        .transmitted_power_w
        .map(|p| excitation_intensity(p, c.excitation_waist_um, c.mirror_transmission))
        .transpose()
        .config("photons.budget excitation")?;
    let enhancement = c
        .reference_rate_per_s
        .map(|r| count_rate_enhancement(c.detected_rate_per_s, r))
        .transpose()
        .config("photons.budget enhancement")?;
    s.begin(&c, &[]);
    let mut t = Table::quantities(
        "count_budget",
        [
            ("detected_rate_per_s", c.detected_rate_per_s.into()),
            ("detection_efficiency", b.detection_efficiency.into()),
            ("first_lens_rate_per_s", b.first_lens_rate.into()),
        ],
    );
    if let Some(i) = intensity {
        t.push(row!["excitation_intensity_w_per_m2", i]);
    }
    if let Some(e) = enhancement {
        t.push(row!["count_rate_enhancement", e]);
    }
    s.sink.table(&t)
}
