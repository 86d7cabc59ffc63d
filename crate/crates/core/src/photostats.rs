//! Photon statistics: correlation, saturation and decay models, their fits,
//! a three-level emitter simulator and count-rate bookkeeping.

use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fit::{perturbed_starts, Bound, FitResult, Problem};
use crate::quadrature::{integrate, Tolerance};

/// `g²(0)` below which an emitter counts as single without background.
pub const SINGLE_EMITTER_THRESHOLD: f64 = 0.5;
/// Relaxed single-emitter threshold under the measured background.
pub const BACKGROUND_SINGLE_EMITTER_THRESHOLD: f64 = 0.7;

/// `g²(tau) = 1 + p (b e^{-|tau|/tau2} - (1 + b) e^{-|tau|/tau1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Model {
    pub p: f64,
    pub b: f64,
    pub tau1_ns: f64,
    pub tau2_ns: f64,
}

impl G2Model {
    pub fn new(p: f64, b: f64, tau1_ns: f64, tau2_ns: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(b >= 0.0) || !(tau1_ns > 0.0) || !(tau2_ns > 0.0) {
            return Err(Error::Domain(format!(
                "invalid g2 model: p = {p} (need [0, 1]), b = {b} (need >= 0), tau1 = {tau1_ns}, tau2 = {tau2_ns} (need > 0)"
            )));
        }
        Ok(Self { p, b, tau1_ns, tau2_ns })
    }

    pub fn eval(&self, tau_ns: f64) -> f64 {
        g2_eval(self, tau_ns)
    }

    pub fn at_zero(&self) -> f64 {
        1.0 - self.p
    }
}

pub fn g2_eval(model: &G2Model, tau_ns: f64) -> f64 {
    let t = tau_ns.abs();
    // written around tau = 0 so that g2(0) = 1 - p holds exactly
    (1.0 - model.p) + model.p * (model.b * (-t / model.tau2_ns).exp_m1() - (1.0 + model.b) * (-t / model.tau1_ns).exp_m1())
}

/// Integer delays `k` with `lo <= k < hi`.
fn integer_delays(lo: f64, hi: f64) -> (i64, i64) {
    (lo.ceil() as i64, hi.ceil() as i64 - 1)
}

/// `∫_a^b e^{-|t|/tau} (alpha + beta t) dt`.
fn exp_linear_integral(tau: f64, a: f64, b: f64, alpha: f64, beta: f64) -> f64 {
    let positive = |a: f64, b: f64, alpha: f64, beta: f64| {
        let antiderivative = |t: f64| -tau * (t + tau) * (-t / tau).exp();
        alpha * tau * ((-a / tau).exp() - (-b / tau).exp()) + beta * (antiderivative(b) - antiderivative(a))
    };
    if a >= 0.0 {
        positive(a, b, alpha, beta)
    } else if b <= 0.0 {
        positive(-b, -a, alpha, -beta)
    } else {
        positive(0.0, b, alpha, beta) + positive(0.0, -a, alpha, -beta)
    }
}

/// Mean of `g²` over the integer delays in `[lo, hi)`, each smeared by the
/// triangular kernel of 1 ns timestamp quantization. This is what a
/// normalized coincidence bin measures.
pub fn binned_g2(model: &G2Model, lo_ns: f64, hi_ns: f64) -> f64 {
    let (k1, k2) = integer_delays(lo_ns, hi_ns);
    if k2 < k1 {
        return model.eval(0.5 * (lo_ns + hi_ns));
    }
    let (k1, k2) = (k1 as f64, k2 as f64);
    // sum of unit triangles on k1..=k2: ramps on [k1-1, k1] and [k2, k2+1], flat between
    let weighted = |tau: f64| {
        exp_linear_integral(tau, k1 - 1.0, k1, 1.0 - k1, 1.0)
            + exp_linear_integral(tau, k1, k2, 1.0, 0.0)
            + exp_linear_integral(tau, k2, k2 + 1.0, k2 + 1.0, -1.0)
    };
    let count = k2 - k1 + 1.0;
    1.0 + model.p * (model.b * weighted(model.tau2_ns) - (1.0 + model.b) * weighted(model.tau1_ns)) / count
}

/// Single-emitter test on `g²(0)`.
pub fn is_single_emitter(g2_zero: f64, threshold: f64) -> bool {
    g2_zero < threshold
}

/// `K(I) = K_inf I / (I_sat + I) + a I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationModel {
    /// Saturation count rate, 1/s.
    #[serde(rename = "K_inf")]
    pub k_inf: f64,
    /// Saturation intensity, W/m².
    #[serde(rename = "I_sat")]
    pub i_sat: f64,
    /// Linear background slope, (1/s) per (W/m²).
    pub a: f64,
}

impl SaturationModel {
    pub fn new(k_inf: f64, i_sat: f64, a: f64) -> Result<Self> {
        if !(k_inf >= 0.0 && i_sat > 0.0 && a >= 0.0) {
            return Err(Error::Domain(format!("invalid saturation model: K_inf = {k_inf}, I_sat = {i_sat}, a = {a}")));
        }
        Ok(Self { k_inf, i_sat, a })
    }

    pub fn eval(&self, intensity: f64) -> f64 {
        self.emitter(intensity) + self.a * intensity
    }

    /// Background-free emitter part `K_inf I / (I_sat + I)`.
    pub fn emitter(&self, intensity: f64) -> f64 {
        self.k_inf * intensity / (self.i_sat + intensity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayKind {
    Mono,
    Stretched,
}

/// `amplitude exp(-(t/tau)^beta) + background`, with `beta = 1` for `Mono`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    pub kind: DecayKind,
    pub tau_ns: f64,
    pub beta: f64,
    pub amplitude: f64,
    pub background: f64,
}

impl DecayModel {
    pub fn mono(tau_ns: f64, amplitude: f64, background: f64) -> Self {
        Self { kind: DecayKind::Mono, tau_ns, beta: 1.0, amplitude, background }
    }

    pub fn stretched(tau_ns: f64, beta: f64, amplitude: f64, background: f64) -> Self {
        Self { kind: DecayKind::Stretched, tau_ns, beta, amplitude, background }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_ns > 0.0) || !(self.beta > 0.0 && self.beta <= 1.0) || !(self.amplitude >= 0.0) {
            return Err(Error::Domain(format!("invalid decay model {self:?}")));
        }
        Ok(())
    }

    pub fn eval(&self, t_ns: f64) -> f64 {
        let t = t_ns.max(0.0);
        self.amplitude * (-(t / self.tau_ns).powf(self.beta)).exp() + self.background
    }

    /// Mean lifetime `(tau/beta) Gamma(1/beta)`, the time integral of the
    /// normalized decay; equals `tau` for a single exponential.
    pub fn mean_lifetime_ns(&self) -> f64 {
        self.tau_ns / self.beta * gamma(1.0 / self.beta)
    }
}

/// Binned counts over `edges.len() - 1` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges_ns: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(edges_ns: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if edges_ns.len() != counts.len() + 1 || edges_ns.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("histogram needs strictly increasing edges, one more than bins".into()));
        }
        Ok(Self { edges_ns, counts })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges_ns.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merges adjacent pairs of bins; an odd trailing bin is kept as is.
    pub fn rebin_pairs(&self) -> Self {
        let n = self.counts.len();
        let mut edges_ns: Vec<f64> = self.edges_ns.iter().step_by(2).copied().collect();
        if n % 2 == 1 {
            edges_ns.push(self.edges_ns[n]);
        }
        Self { edges_ns, counts: self.counts.chunks(2).map(|c| c.iter().sum()).collect() }
    }
}

/// Photon arrival times in ns from the start of the acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonStream {
    pub timestamps_ns: Vec<u64>,
    pub duration_ns: u64,
}

impl PhotonStream {
    pub fn new(timestamps_ns: Vec<u64>, duration_ns: u64) -> Result<Self> {
        if timestamps_ns.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("timestamps must be nondecreasing".into()));
        }
        if timestamps_ns.last().is_some_and(|&t| t > duration_ns) {
            return Err(Error::Domain("timestamp beyond the acquisition duration".into()));
        }
        Ok(Self { timestamps_ns, duration_ns })
    }

    /// Union of two streams recorded over the same interval.
    pub fn merge(&self, other: &Self) -> Self {
        let mut timestamps_ns = Vec::with_capacity(self.timestamps_ns.len() + other.timestamps_ns.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.timestamps_ns, &other.timestamps_ns);
        while i < a.len() || j < b.len() {
            if j == b.len() || (i < a.len() && a[i] <= b[j]) {
                timestamps_ns.push(a[i]);
                i += 1;
            } else {
                timestamps_ns.push(b[j]);
                j += 1;
            }
        }
        Self { timestamps_ns, duration_ns: self.duration_ns.max(other.duration_ns) }
    }

    /// Mean count rate in 1/ns.
    pub fn rate_per_ns(&self) -> f64 {
        self.timestamps_ns.len() as f64 / self.duration_ns as f64
    }

    /// Little-endian u64 records.
    pub fn write_binary(&self, mut w: impl Write) -> io::Result<()> {
        for t in &self.timestamps_ns {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads little-endian u64 records; the duration is taken as the last
    /// timestamp unless given.
    pub fn read_binary(mut r: impl Read, duration_ns: Option<u64>) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::Domain(format!("reading timestamps: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Domain(format!("binary timestamp file length {} is not a multiple of 8", bytes.len())));
        }
        let ts: Vec<u64> = bytes.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
        let duration = duration_ns.unwrap_or_else(|| ts.last().copied().unwrap_or(0));
        Self::new(ts, duration)
    }

    /// One timestamp per line; a non-numeric first line is treated as a header.
    pub fn read_csv(r: impl BufRead, duration_ns: Option<u64>) -> Result<Self> {
        let mut ts = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Domain(format!("reading timestamps: {e}")))?;
            let field = line.split(',').next().unwrap_or("").trim();
            if field.is_empty() {
                continue;
            }
            match field.parse::<u64>() {
                Ok(t) => ts.push(t),
                Err(_) if i == 0 => continue,
                Err(_) => return Err(Error::Domain(format!("line {}: `{field}` is not a timestamp", i + 1))),
            }
        }
        let duration = duration_ns.unwrap_or_else(|| ts.last().copied().unwrap_or(0));
        Self::new(ts, duration)
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "timestamp_ns")?;
        for t in &self.timestamps_ns {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }
}

/// Coincidence histogram with its Poisson normalization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub histogram: Histogram,
    /// Expected counts per bin for uncorrelated light.
    pub uncorrelated: Vec<f64>,
    pub photons: usize,
    pub duration_ns: u64,
}

impl Correlation {
    /// Normalized `g²` estimate per bin.
    pub fn g2(&self) -> Vec<f64> {
        self.histogram.counts.iter().zip(&self.uncorrelated).map(|(&c, &u)| c as f64 / u).collect()
    }

    /// Poisson standard deviation of each `g²` value.
    pub fn g2_sigma(&self) -> Vec<f64> {
        self.histogram.counts.iter().zip(&self.uncorrelated).map(|(&c, &u)| (c.max(1) as f64).sqrt() / u).collect()
    }

    pub fn delays_ns(&self) -> Vec<f64> {
        self.histogram.centers()
    }
}

/// All ordered photon pairs with delay in `[-window, window]`, in half-open
/// bins `[k w - w/2, k w + w/2)` of width `w = bin_ns`.
pub fn coincidence_histogram(stream: &PhotonStream, bin_ns: f64, window_ns: f64) -> Result<Correlation> {
    let ts = &stream.timestamps_ns;
    if ts.len() < 2 {
        return Err(Error::EmptyStream);
    }
    if !(bin_ns >= 1.0 && window_ns >= bin_ns) {
        return Err(Error::Domain(format!("need 1 ns <= bin ({bin_ns} ns) <= window ({window_ns} ns)")));
    }
    let half = (window_ns / bin_ns).floor() as i64;
    let nbins = (2 * half + 1) as usize;
    let mut counts = vec![0u64; nbins];
    let reach = ((half as f64 + 0.5) * bin_ns).floor() as u64;
    for (i, &t0) in ts.iter().enumerate() {
        for &t1 in &ts[i + 1..] {
            let d = t1 - t0;
            if d > reach {
                break;
            }
            let d = d as f64;
            let after = (d / bin_ns + 0.5).floor() as i64;
            let before = (-d / bin_ns + 0.5).floor() as i64;
            if after <= half {
                counts[(half + after) as usize] += 1;
            }
            if before >= -half {
                counts[(half + before) as usize] += 1;
            }
        }
    }
    let edges_ns: Vec<f64> = (0..=nbins).map(|i| (i as f64 - half as f64 - 0.5) * bin_ns).collect();
    let n = ts.len() as f64;
    let t = stream.duration_ns as f64;
    // uniform integer timestamps: N(N-1)(T - |k|)/T² pairs at each integer delay k
    let uncorrelated = edges_ns
        .windows(2)
        .map(|w| {
            let (k1, k2) = integer_delays(w[0], w[1]);
            (k1..=k2).map(|k| n * (n - 1.0) * (t - (k as f64).abs()) / (t * t)).sum()
        })
        .collect();
    Ok(Correlation { histogram: Histogram { edges_ns, counts }, uncorrelated, photons: ts.len(), duration_ns: stream.duration_ns })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G2Fit {
    pub model: G2Model,
    /// One-sigma uncertainties of `(p, b, tau1, tau2)`.
    pub sigma: [f64; 4],
    pub g2_zero: f64,
    pub g2_zero_sigma: f64,
    pub reduced_chi2: f64,
}

const REWEIGHT_PASSES: usize = 3;

/// Fits counts `c_i ≈ exposure_i · model(x_i)` with Poisson variances. The
/// first pass weights by the observed counts; later passes use the fitted
/// expectation, which removes the low-count bias of data weights.
fn fit_poisson<F: Fn(&[f64], f64) -> f64>(
    model: F,
    x: &[f64],
    counts: &[u64],
    exposure: &[f64],
    bounds: &[Bound],
    starts: &[Vec<f64>],
) -> Result<FitResult> {
    let y: Vec<f64> = counts.iter().zip(exposure).map(|(&c, &u)| c as f64 / u).collect();
    let mut sigma: Vec<f64> = counts.iter().zip(exposure).map(|(&c, &u)| (c.max(1) as f64).sqrt() / u).collect();
    let mut fit = Problem { model: &model, x, y: &y, sigma: &sigma, bounds, scale_covariance: false }.solve_multistart(starts)?;
    for _ in 0..REWEIGHT_PASSES {
        sigma = x.iter().zip(exposure).map(|(&xi, &u)| (model(&fit.params, xi) * u).max(1.0).sqrt() / u).collect();
        let problem = Problem { model: &model, x, y: &y, sigma: &sigma, bounds, scale_covariance: false };
        fit = problem.solve(&fit.params)?;
    }
    Ok(fit)
}

fn g2_heuristics(delays: &[f64], g2: &[f64]) -> [f64; 4] {
    let i0 = delays
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map_or(0, |(i, _)| i);
    let g0 = g2[i0].clamp(0.0, 0.95);
    let p = (1.0 - g0).max(0.05);
    let target = g0 + (1.0 - g0) * (1.0 - (-1.0f64).exp());
    let tau1 = delays[i0..]
        .iter()
        .zip(&g2[i0..])
        .find(|(_, &g)| g >= target)
        .map_or(1.0, |(&d, _)| d.abs().max(0.5));
    let (peak_i, peak) = g2[i0..].iter().enumerate().fold((0, 1.0), |acc, (i, &g)| if g > acc.1 { (i, g) } else { acc });
    let b = ((peak - 1.0) / p).max(0.02);
    let excess_target = 1.0 + (peak - 1.0) / std::f64::consts::E;
    let tau2 = delays[i0 + peak_i..]
        .iter()
        .zip(&g2[i0 + peak_i..])
        .find(|(_, &g)| g <= excess_target)
        .map_or(10.0 * tau1, |(&d, _)| d.abs().max(2.0 * tau1));
    [p, b, tau1, tau2]
}

/// Fits [`binned_g2`] to a correlation histogram with Poisson weights.
pub fn fit_g2(correlation: &Correlation) -> Result<G2Fit> {
    let delays = correlation.delays_ns();
    if delays.len() < 20 {
        return Err(Error::Domain(format!("g2 fit needs at least 20 bins, got {}", delays.len())));
    }
    let g2 = correlation.g2();
    let edges = &correlation.histogram.edges_ns;
    let width = edges[1] - edges[0];
    let bounds = [Bound::new(0.0, 1.0), Bound::new(0.0, 1e3), Bound::POSITIVE, Bound::POSITIVE];
    let fit = fit_poisson(
        |p: &[f64], lo: f64| binned_g2(&G2Model { p: p[0], b: p[1], tau1_ns: p[2], tau2_ns: p[3] }, lo, lo + width),
        &edges[..edges.len() - 1],
        &correlation.histogram.counts,
        &correlation.uncorrelated,
        &bounds,
        &perturbed_starts(&g2_heuristics(&delays, &g2), &bounds),
    )?;
    let [p, b, tau1, tau2] = [fit.params[0], fit.params[1], fit.params[2], fit.params[3]];
    Ok(G2Fit {
        model: G2Model { p, b, tau1_ns: tau1, tau2_ns: tau2 },
        sigma: [fit.sigmas[0], fit.sigmas[1], fit.sigmas[2], fit.sigmas[3]],
        g2_zero: 1.0 - p,
        g2_zero_sigma: fit.sigmas[0],
        reduced_chi2: fit.reduced_chi2(),
    })
}

/// Uncertainty model for saturation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateWeights {
    /// Equal weights; the covariance is scaled by the reduced chi-square.
    Uniform,
    /// Known standard deviation per point.
    Absolute(Vec<f64>),
    /// Standard deviation proportional to the rate, taken from the fitted model.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaturationFit {
    pub model: SaturationModel,
    /// One-sigma uncertainties of `(K_inf, I_sat, a)`.
    pub sigma: [f64; 3],
    /// `(I, K - a I)` for each input point.
    pub background_subtracted: Vec<(f64, f64)>,
    /// Set when the intensities do not bracket the fitted `I_sat`.
    pub ill_conditioned: bool,
    pub reduced_chi2: f64,
}

/// Fits `K = K_inf I/(I_sat + I) + a I` to `(I, K)` points.
pub fn fit_saturation(points: &[(f64, f64)], weights: &RateWeights) -> Result<SaturationFit> {
    if points.len() < 5 {
        return Err(Error::Domain(format!("saturation fit needs at least 5 points, got {}", points.len())));
    }
    if points.iter().any(|&(i, k)| !(i >= 0.0 && k.is_finite())) {
        return Err(Error::Domain("intensities must be non-negative and rates finite".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let sigma = match weights {
        RateWeights::Uniform => vec![scale; points.len()],
        RateWeights::Absolute(s) if s.len() == points.len() => s.clone(),
        RateWeights::Absolute(_) => return Err(Error::Domain("sigma length differs from the number of points".into())),
        RateWeights::Relative(r) if *r > 0.0 => y.iter().map(|k| r * k.abs().max(1e-12 * scale)).collect(),
        RateWeights::Relative(r) => return Err(Error::Domain(format!("relative noise must be positive, got {r}"))),
    };
    let n = sorted.len();
    let (i_hi, k_hi) = sorted[n - 1];
    let (i_prev, k_prev) = sorted[n - 2];
    let a0 = ((k_hi - k_prev) / (i_hi - i_prev)).max(0.0);
    let k_inf0 = (k_hi - a0 * i_hi).max(0.5 * k_hi).max(1e-12);
    let half = sorted.iter().find(|&&(i, k)| k - a0 * i >= 0.5 * k_inf0).map_or(i_hi, |p| p.0);
    let i_sat0 = half.max(1e-12 * i_hi.max(1.0));
    let bounds = [Bound::new(0.0, f64::INFINITY), Bound::POSITIVE, Bound::new(0.0, f64::INFINITY)];
    let model = |p: &[f64], i: f64| p[0] * i / (p[1] + i) + p[2] * i;
    let uniform = matches!(weights, RateWeights::Uniform);
    let starts = perturbed_starts(&[k_inf0, i_sat0, a0.max(1e-12 * k_inf0 / i_sat0)], &bounds);
    let mut fit = Problem { model, x: &x, y: &y, sigma: &sigma, bounds: &bounds, scale_covariance: uniform }.solve_multistart(&starts)?;
    if let RateWeights::Relative(r) = weights {
        for _ in 0..REWEIGHT_PASSES {
            let sigma: Vec<f64> = x.iter().map(|&i| r * model(&fit.params, i).abs().max(1e-12 * scale)).collect();
            fit = Problem { model, x: &x, y: &y, sigma: &sigma, bounds: &bounds, scale_covariance: false }.solve(&fit.params)?;
        }
    }
    let model = SaturationModel { k_inf: fit.params[0], i_sat: fit.params[1], a: fit.params[2] };
    let ill_conditioned = !(sorted[0].0 < model.i_sat && i_hi > model.i_sat);
    Ok(SaturationFit {
        model,
        sigma: [fit.sigmas[0], fit.sigmas[1], fit.sigmas[2]],
        background_subtracted: points.iter().map(|&(i, k)| (i, k - model.a * i)).collect(),
        ill_conditioned,
        reduced_chi2: fit.reduced_chi2(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifetimeFit {
    pub model: DecayModel,
    /// One-sigma uncertainties of `(tau, beta, amplitude, background)`;
    /// `beta` is zero for a mono-exponential fit.
    pub sigma: [f64; 4],
    pub mean_lifetime_ns: f64,
    /// False when the histogram spans less than three fitted lifetimes.
    pub reliable: bool,
    pub reduced_chi2: f64,
}

/// Fits a decay histogram whose first edge is the excitation time.
pub fn fit_lifetime(hist: &Histogram, kind: DecayKind) -> Result<LifetimeFit> {
    let t0 = hist.edges_ns[0];
    let x: Vec<f64> = hist.centers().iter().map(|c| c - t0).collect();
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    if x.len() < 8 {
        return Err(Error::Domain(format!("lifetime fit needs at least 8 bins, got {}", x.len())));
    }
    let tail = (x.len() / 10).max(1);
    let bg0 = y[x.len() - tail..].iter().sum::<f64>() / tail as f64;
    let peak = y.iter().cloned().fold(0.0, f64::max);
    let amp0 = (peak - bg0).max(1.0);
    let tau0 = x
        .iter()
        .zip(&y)
        .find(|(_, &v)| v - bg0 <= amp0 / std::f64::consts::E)
        .map_or(0.3 * x[x.len() - 1], |(&t, _)| t.max(x[1] - x[0]));
    let span = hist.edges_ns[hist.edges_ns.len() - 1] - t0;
    let exposure = vec![1.0; x.len()];
    let (model, sigma, reduced_chi2) = match kind {
        DecayKind::Mono => {
            let bounds = [Bound::POSITIVE, Bound::new(0.0, f64::INFINITY), Bound::FREE];
            let f = fit_poisson(
                |p: &[f64], t: f64| p[1] * (-t / p[0]).exp() + p[2],
                &x,
                &hist.counts,
                &exposure,
                &bounds,
                &perturbed_starts(&[tau0, amp0, bg0], &bounds),
            )?;
            (DecayModel::mono(f.params[0], f.params[1], f.params[2]), [f.sigmas[0], 0.0, f.sigmas[1], f.sigmas[2]], f.reduced_chi2())
        }
        DecayKind::Stretched => {
            let bounds = [Bound::POSITIVE, Bound::new(0.05, 1.0), Bound::new(0.0, f64::INFINITY), Bound::FREE];
            let mut starts = perturbed_starts(&[tau0, 0.9, amp0, bg0], &bounds);
            for s in &mut starts[1..] {
                s[1] = s[1].min(0.95);
            }
            let f = fit_poisson(
                |p: &[f64], t: f64| p[2] * (-(t / p[0]).powf(p[1])).exp() + p[3],
                &x,
                &hist.counts,
                &exposure,
                &bounds,
                &starts,
            )?;
            (
                DecayModel::stretched(f.params[0], f.params[1], f.params[2], f.params[3]),
                [f.sigmas[0], f.sigmas[1], f.sigmas[2], f.sigmas[3]],
                f.reduced_chi2(),
            )
        }
    };
    Ok(LifetimeFit {
        mean_lifetime_ns: model.mean_lifetime_ns(),
        reliable: span >= 3.0 * model.tau_ns,
        model,
        sigma,
        reduced_chi2,
    })
}

/// Expected counts `model(t_center)` per bin with Poisson noise.
pub fn synthetic_decay(model: &DecayModel, edges_ns: &[f64], seed: u64) -> Result<Histogram> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = edges_ns.first().copied().unwrap_or(0.0);
    let counts = edges_ns.windows(2).map(|w| poisson(&mut rng, model.eval(0.5 * (w[0] + w[1]) - t0))).collect();
    Histogram::new(edges_ns.to_vec(), counts)
}

/// Decay histogram of a mixture of mono-exponential components
/// `(tau, weight)` normalized to `photons` in total, with Poisson noise.
pub fn synthetic_mixture(components: &[(f64, f64)], photons: f64, background: f64, edges_ns: &[f64], seed: u64) -> Result<Histogram> {
    let total: f64 = components.iter().map(|c| c.1).sum();
    if components.is_empty() || !(total > 0.0) || components.iter().any(|c| !(c.0 > 0.0 && c.1 >= 0.0)) {
        return Err(Error::Domain("mixture needs positive lifetimes and weights".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = edges_ns.first().copied().unwrap_or(0.0);
    let counts = edges_ns
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0] - t0, w[1] - t0);
            let expected: f64 = components.iter().map(|&(tau, wt)| wt / total * ((-a / tau).exp() - (-b / tau).exp())).sum();
            poisson(&mut rng, photons * expected + background)
        })
        .collect();
    Histogram::new(edges_ns.to_vec(), counts)
}

/// Binned `g²` values (see [`binned_g2`]) with Poisson noise on
/// `coincidences` total counts spread over the bins.
pub fn synthetic_correlation(model: &G2Model, bin_ns: f64, window_ns: f64, coincidences: f64, seed: u64) -> Result<Correlation> {
    let half = (window_ns / bin_ns).floor() as i64;
    let nbins = (2 * half + 1) as usize;
    let edges_ns: Vec<f64> = (0..=nbins).map(|i| (i as f64 - half as f64 - 0.5) * bin_ns).collect();
    let shape: Vec<f64> = edges_ns.windows(2).map(|w| binned_g2(model, w[0], w[1])).collect();
    let level = coincidences / shape.iter().sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = shape.iter().map(|g| poisson(&mut rng, level * g)).collect();
    Ok(Correlation {
        histogram: Histogram::new(edges_ns, counts)?,
        uncorrelated: vec![level; nbins],
        photons: 0,
        duration_ns: 0,
    })
}

/// Saturation data at the given intensities with relative Gaussian noise.
pub fn synthetic_saturation(model: &SaturationModel, intensities: &[f64], relative_noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    intensities
        .iter()
        .map(|&i| {
            let k = model.eval(i);
            (i, k * (1.0 + relative_noise * normal.sample(&mut rng)))
        })
        .collect()
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
    }
}

/// Three-level emitter (ground, excited, metastable) with detection
/// efficiency and an independent Poisson background. Rates in 1/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeLevelEmitter {
    pub excitation_rate: f64,
    pub radiative_rate: f64,
    /// Excited to metastable (shelving).
    pub shelving_rate: f64,
    /// Metastable back to ground.
    pub deshelving_rate: f64,
    pub detection_efficiency: f64,
    /// Detected background counts per ns.
    pub background_rate: f64,
}

impl ThreeLevelEmitter {
    pub fn validate(&self) -> Result<()> {
        let ok = self.excitation_rate > 0.0
            && self.radiative_rate > 0.0
            && self.shelving_rate >= 0.0
            && self.deshelving_rate > 0.0
            && self.detection_efficiency > 0.0
            && self.detection_efficiency <= 1.0
            && self.background_rate >= 0.0;
        if !ok {
            return Err(Error::Domain(format!("invalid emitter rates {self:?}")));
        }
        Ok(())
    }

    /// Steady-state populations `(excited, metastable)`.
    pub fn steady_state(&self) -> (f64, f64) {
        let (kx, kr, ki, ks) = (self.excitation_rate, self.radiative_rate, self.shelving_rate, self.deshelving_rate);
        let pe = kx * ks / (ks * (kx + kr + ki) + kx * ki);
        (pe, ki / ks * pe)
    }

    /// Detected emitter counts per ns.
    pub fn signal_rate(&self) -> f64 {
        self.detection_efficiency * self.radiative_rate * self.steady_state().0
    }

    /// Exact correlation of the detected light as a [`G2Model`].
    ///
    /// The emitter part is `P_e(tau | ground) / P_e(inf)`, a sum of two
    /// exponentials from the eigenvalues of the population dynamics;
    /// background dilutes the contrast to `p = (S/(S+B))²`.
    pub fn g2_model(&self) -> Result<G2Model> {
        self.validate()?;
        let (kx, kr, ki, ks) = (self.excitation_rate, self.radiative_rate, self.shelving_rate, self.deshelving_rate);
        // d/dt (P_e, P_s) = A (P_e, P_s) + (kx, 0)
        let a = [[-(kx + kr + ki), -kx], [ki, -ks]];
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        let (l1, l2) = (0.5 * (tr - disc), 0.5 * (tr + disc));
        let (pe, ps) = self.steady_state();
        let v = [-pe, -ps];
        // e^{A t} = [(A - l2) e^{l1 t} - (A - l1) e^{l2 t}] / (l1 - l2), first row applied to v
        let row = |l: f64| (a[0][0] - l) * v[0] + a[0][1] * v[1];
        let modes = if (l1 - l2).abs() > 1e-12 * l1.abs() {
            [(row(l2) / ((l1 - l2) * pe), l1), (-row(l1) / ((l1 - l2) * pe), l2)]
        } else {
            [(-1.0, l1), (0.0, l2)]
        };
        // the antibunching mode carries the negative weight, the bunching mode the rest
        let (anti, bunch) = if modes[0].0 <= modes[1].0 { (modes[0], modes[1]) } else { (modes[1], modes[0]) };
        debug_assert!((anti.0 + bunch.0 + 1.0).abs() < 1e-9);
        let s = self.signal_rate();
        let rho = s / (s + self.background_rate);
        G2Model::new(rho * rho, bunch.0.max(0.0), -1.0 / anti.1, -1.0 / bunch.1)
    }

    /// Simulates detected photons over `duration_ns`.
    pub fn simulate(&self, duration_ns: u64, seed: u64) -> Result<PhotonStream> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let end = duration_ns as f64;
        let excite = Exp::new(self.excitation_rate).unwrap();
        let decay = Exp::new(self.radiative_rate + self.shelving_rate).unwrap();
        let leave_shelf = Exp::new(self.deshelving_rate).unwrap();
        let p_radiative = self.radiative_rate / (self.radiative_rate + self.shelving_rate);
        let mut signal = Vec::new();
        let mut t = 0.0;
        loop {
            t += excite.sample(&mut rng);
            t += decay.sample(&mut rng);
            if t >= end {
                break;
            }
            if rng.random::<f64>() < p_radiative {
                if rng.random::<f64>() < self.detection_efficiency {
                    signal.push(t as u64);
                }
            } else {
                t += leave_shelf.sample(&mut rng);
            }
        }
        let mut background = Vec::new();
        if self.background_rate > 0.0 {
            let gap = Exp::new(self.background_rate).unwrap();
            let mut t = gap.sample(&mut rng);
            while t < end {
                background.push(t as u64);
                t += gap.sample(&mut rng);
            }
        }
        let a = PhotonStream { timestamps_ns: signal, duration_ns };
        let b = PhotonStream { timestamps_ns: background, duration_ns };
        Ok(a.merge(&b))
    }
}

/// Expected counts per coincidence bin for a stream of `photons` over
/// `duration_ns` whose correlation is `model`, including the 1 ns
/// timestamp quantization (a triangular kernel on the delay).
pub fn expected_coincidences(model: &G2Model, correlation: &Correlation) -> Vec<f64> {
    let n = correlation.photons as f64;
    let t = correlation.duration_ns as f64;
    let level = n * (n - 1.0) / (t * t);
    let tol = Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 200 };
    correlation
        .histogram
        .edges_ns
        .windows(2)
        .map(|w| {
            let first = w[0].ceil() as i64;
            let last = (w[1].ceil() as i64) - 1;
            (first..=last)
                .map(|k| {
                    let k = k as f64;
                    let bp = if (-k).abs() < 1.0 { vec![-k] } else { vec![] };
                    let kernel = integrate(|x: f64| model.eval(k + x) * (1.0 - x.abs()), -1.0, 1.0, &bp, tol).value;
                    level * (t - k.abs()) * kernel
                })
                .sum()
        })
        .collect()
}

/// Pearson chi-square per bin of observed against expected counts.
pub fn chi2_per_bin(observed: &[u64], expected: &[f64]) -> f64 {
    let chi2: f64 = observed.iter().zip(expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    chi2 / observed.len() as f64
}

/// Peak excitation intensity `8 P / (pi w_e² T1)` in W/m² for power `P`
/// (W) transmitted through a mirror of transmission `T1` into a mode of
/// waist `w_e` (µm).
pub fn excitation_intensity(power_w: f64, waist_um: f64, transmission: f64) -> Result<f64> {
    if !(power_w > 0.0 && waist_um > 0.0 && transmission > 0.0 && transmission <= 1.0) {
        return Err(Error::Domain("power and waist must be positive, transmission in (0, 1]".into()));
    }
    let w = waist_um * 1e-6;
    Ok(8.0 * power_w / (PI * w * w * transmission))
}

/// Inverse of [`excitation_intensity`]: transmitted power in W.
pub fn power_for_intensity(intensity: f64, waist_um: f64, transmission: f64) -> Result<f64> {
    if !(intensity > 0.0 && waist_um > 0.0 && transmission > 0.0 && transmission <= 1.0) {
        return Err(Error::Domain("intensity and waist must be positive, transmission in (0, 1]".into()));
    }
    let w = waist_um * 1e-6;
    Ok(intensity * PI * w * w * transmission / 8.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CountBudget {
    pub detection_efficiency: f64,
    /// Photon rate at the first lens, 1/s.
    pub first_lens_rate: f64,
}

pub fn count_budget(detected_rate: f64, path_efficiency: f64, detector_qe: f64) -> Result<CountBudget> {
    for (name, v) in [("path efficiency", path_efficiency), ("detector efficiency", detector_qe)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    if !(detected_rate >= 0.0) {
        return Err(Error::Domain(format!("count rate must be non-negative, got {detected_rate}")));
    }
    let detection_efficiency = path_efficiency * detector_qe;
    Ok(CountBudget { detection_efficiency, first_lens_rate: detected_rate / detection_efficiency })
}

/// Ratio of saturation count rates, cavity over reference.
pub fn count_rate_enhancement(cavity_rate: f64, reference_rate: f64) -> Result<f64> {
    if !(cavity_rate >= 0.0 && reference_rate > 0.0) {
        return Err(Error::Domain("count rates must be positive".into()));
    }
    Ok(cavity_rate / reference_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_stream(rate_per_ns: f64, duration_ns: u64, seed: u64) -> PhotonStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = Exp::new(rate_per_ns).unwrap();
        let mut ts = Vec::new();
        let mut t = gap.sample(&mut rng);
        while t < duration_ns as f64 {
            ts.push(t as u64);
            t += gap.sample(&mut rng);
        }
        PhotonStream::new(ts, duration_ns).unwrap()
    }

    fn two_level(excitation_rate: f64, background_rate: f64) -> ThreeLevelEmitter {
        ThreeLevelEmitter {
            excitation_rate,
            radiative_rate: 1.0 / 12.0,
            shelving_rate: 0.0,
            deshelving_rate: 1.0,
            detection_efficiency: 0.2,
            background_rate,
        }
    }

    #[test]
    fn g2_zero_delay_and_limits() {
        let m = G2Model::new(0.73, 0.5, 20.0, 200.0).unwrap();
        assert_eq!(g2_eval(&m, 0.0), 1.0 - 0.73);
        assert_eq!(m.at_zero(), 1.0 - m.p);
        assert!((g2_eval(&m, 1e5) - 1.0).abs() < 1e-12);
        assert_eq!(g2_eval(&m, 37.0), g2_eval(&m, -37.0));
        assert!(G2Model::new(1.2, 0.5, 20.0, 200.0).is_err());
        assert!(G2Model::new(0.5, -0.1, 20.0, 200.0).is_err());
        assert!(G2Model::new(0.5, 0.1, 0.0, 200.0).is_err());
    }

    #[test]
    fn single_emitter_classification() {
        assert!(is_single_emitter(0.27, SINGLE_EMITTER_THRESHOLD));
        assert!(!is_single_emitter(0.6, SINGLE_EMITTER_THRESHOLD));
        assert!(is_single_emitter(0.6, BACKGROUND_SINGLE_EMITTER_THRESHOLD));
    }

    #[test]
    fn binned_model_matches_quadrature_oracle() {
        let m = G2Model::new(0.6, 0.8, 6.0, 90.0).unwrap();
        let stream = PhotonStream::new(vec![0, 10_000_000], 400_000_000).unwrap();
        let mut corr = coincidence_histogram(&stream, 3.0, 120.0).unwrap();
        corr.photons = 1_000_000;
        let n = corr.photons as f64;
        let t = corr.duration_ns as f64;
        corr.uncorrelated = corr
            .histogram
            .edges_ns
            .windows(2)
            .map(|w| {
                let (k1, k2) = integer_delays(w[0], w[1]);
                (k1..=k2).map(|k| n * (n - 1.0) * (t - (k as f64).abs()) / (t * t)).sum()
            })
            .collect();
        let expected = expected_coincidences(&m, &corr);
        for ((w, e), u) in corr.histogram.edges_ns.windows(2).zip(&expected).zip(&corr.uncorrelated) {
            let analytic = binned_g2(&m, w[0], w[1]) * u;
            assert!((analytic - e).abs() < 1e-7 * e, "bin {w:?}: {analytic} vs {e}");
        }
    }

    #[test]
    fn g2_round_trip_at_1e5_coincidences() {
        let truth = G2Model::new(0.73, 0.5, 20.0, 200.0).unwrap();
        let corr = synthetic_correlation(&truth, 4.0, 1500.0, 1e5, 11).unwrap();
        let fit = fit_g2(&corr).unwrap();
        let est = [fit.model.p, fit.model.b, fit.model.tau1_ns, fit.model.tau2_ns];
        let tru = [truth.p, truth.b, truth.tau1_ns, truth.tau2_ns];
        for k in 0..4 {
            assert!((est[k] - tru[k]).abs() <= 3.0 * fit.sigma[k], "{fit:?}");
        }
        assert_eq!(fit.g2_zero, 1.0 - fit.model.p);
    }

    #[test]
    fn flat_histogram_has_no_contrast() {
        let flat = G2Model::new(0.0, 0.0, 10.0, 100.0).unwrap();
        let corr = synthetic_correlation(&flat, 4.0, 1000.0, 1e5, 5).unwrap();
        let fit = fit_g2(&corr).unwrap();
        assert!(fit.model.p <= 3.0 * fit.sigma[0], "{fit:?}");
    }

    #[test]
    fn poisson_stream_is_uncorrelated() {
        let stream = poisson_stream(0.002, 500_000_000, 3);
        let corr = coincidence_histogram(&stream, 4.0, 600.0).unwrap();
        let g2 = corr.g2();
        let sigma = corr.g2_sigma();
        let inside = g2.iter().zip(&sigma).filter(|(g, s)| (*g - 1.0).abs() <= 3.0 * *s).count();
        assert!(inside as f64 >= 0.99 * g2.len() as f64, "{inside} of {}", g2.len());
        let flat = G2Model { p: 0.0, b: 0.0, tau1_ns: 1.0, tau2_ns: 1.0 };
        let chi2 = chi2_per_bin(&corr.histogram.counts, &expected_coincidences(&flat, &corr));
        assert!((0.8..=1.2).contains(&chi2), "{chi2}");
    }

    #[test]
    fn histogram_total_matches_pair_count() {
        let stream = poisson_stream(0.01, 2_000_000, 8);
        let corr = coincidence_histogram(&stream, 2.5, 60.0).unwrap();
        let (lo, hi) = (corr.histogram.edges_ns[0], *corr.histogram.edges_ns.last().unwrap());
        let ts = &stream.timestamps_ns;
        let mut pairs = 0u64;
        for i in 0..ts.len() {
            for j in 0..ts.len() {
                let d = ts[j] as f64 - ts[i] as f64;
                if i != j && d >= lo && d < hi {
                    pairs += 1;
                }
            }
        }
        assert_eq!(corr.histogram.total(), pairs);
        let merged = corr.histogram.rebin_pairs();
        assert_eq!(merged.total(), pairs);
        assert_eq!(merged.edges_ns.len(), merged.counts.len() + 1);
        assert_eq!(merged.edges_ns.last(), corr.histogram.edges_ns.last());
    }

    #[test]
    fn empty_stream_is_an_error() {
        let stream = PhotonStream::new(vec![], 1000).unwrap();
        assert!(matches!(coincidence_histogram(&stream, 1.0, 10.0), Err(Error::EmptyStream)));
        assert!(PhotonStream::new(vec![5, 3], 10).is_err());
    }

    #[test]
    fn two_level_mapping_is_closed_form() {
        let e = two_level(0.05, 0.0);
        let m = e.g2_model().unwrap();
        assert!((m.p - 1.0).abs() < 1e-12 && m.b.abs() < 1e-9);
        assert!((m.tau1_ns - 1.0 / (0.05 + 1.0 / 12.0)).abs() < 1e-9);
        let (pe, ps) = e.steady_state();
        assert!((pe - 0.05 / (0.05 + 1.0 / 12.0)).abs() < 1e-12 && ps == 0.0);
    }

    #[test]
    fn simulated_histogram_matches_rate_model() {
        let e = ThreeLevelEmitter {
            excitation_rate: 0.05,
            radiative_rate: 1.0 / 12.0,
            shelving_rate: 0.01,
            deshelving_rate: 1.0 / 150.0,
            detection_efficiency: 0.1,
            background_rate: 5e-4,
        };
        let duration = (1e6 / (e.signal_rate() + e.background_rate)) as u64;
        let stream = e.simulate(duration, 21).unwrap();
        assert!((stream.timestamps_ns.len() as f64 - 1e6).abs() < 5e3);
        let corr = coincidence_histogram(&stream, 2.0, 600.0).unwrap();
        let chi2 = chi2_per_bin(&corr.histogram.counts, &expected_coincidences(&e.g2_model().unwrap(), &corr));
        assert!((0.8..=1.2).contains(&chi2), "{chi2}");
    }

    #[test]
    fn no_shelving_means_no_bunching() {
        let e = two_level(0.03, 0.0);
        let stream = e.simulate(300_000_000, 4).unwrap();
        let fit = fit_g2(&coincidence_histogram(&stream, 2.0, 400.0).unwrap()).unwrap();
        assert!(fit.model.b <= 3.0 * fit.sigma[1], "{fit:?}");
    }

    #[test]
    fn ideal_emitter_is_antibunched_to_zero() {
        let e = two_level(0.01, 0.0);
        let stream = e.simulate(600_000_000, 6).unwrap();
        let fit = fit_g2(&coincidence_histogram(&stream, 2.0, 400.0).unwrap()).unwrap();
        assert!(fit.g2_zero <= 3.0 * fit.g2_zero_sigma, "{fit:?}");
        assert!(is_single_emitter(fit.g2_zero, SINGLE_EMITTER_THRESHOLD));
    }

    #[test]
    fn two_emitters_give_one_half() {
        let e = two_level(0.03, 0.0);
        let a = e.simulate(300_000_000, 31).unwrap();
        let b = e.simulate(300_000_000, 32).unwrap();
        let fit = fit_g2(&coincidence_histogram(&a.merge(&b), 2.0, 400.0).unwrap()).unwrap();
        assert!((fit.g2_zero - 0.5).abs() <= 3.0 * fit.g2_zero_sigma, "{fit:?}");
        assert!(!is_single_emitter(fit.g2_zero, SINGLE_EMITTER_THRESHOLD));
    }

    #[test]
    fn simulation_is_bit_reproducible() {
        let e = ThreeLevelEmitter { background_rate: 1e-3, shelving_rate: 0.01, deshelving_rate: 0.005, ..two_level(0.05, 0.0) };
        let a = e.simulate(20_000_000, 99).unwrap();
        assert_eq!(a, e.simulate(20_000_000, 99).unwrap());
        assert_ne!(a, e.simulate(20_000_000, 100).unwrap());
    }

    #[test]
    fn timestamp_files_round_trip() {
        let stream = PhotonStream::new(vec![0, 3, 3, 17, 1 << 40], 1 << 41).unwrap();
        let mut bin = Vec::new();
        stream.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 40);
        assert_eq!(PhotonStream::read_binary(&bin[..], Some(1 << 41)).unwrap(), stream);
        assert!(PhotonStream::read_binary(&bin[..13], None).is_err());
        let mut csv = Vec::new();
        stream.write_csv(&mut csv).unwrap();
        assert_eq!(PhotonStream::read_csv(&csv[..], Some(1 << 41)).unwrap(), stream);
        assert!(PhotonStream::read_csv(&b"timestamp_ns\n5\nabc\n"[..], None).is_err());
    }

    #[test]
    fn saturation_model_limits() {
        let m = SaturationModel::new(6.9e5, 0.49e9, 1e-4).unwrap();
        assert!((m.eval(m.i_sat) - (m.k_inf / 2.0 + m.a * m.i_sat)).abs() < 1e-9 * m.k_inf);
        let pure = SaturationModel::new(6.9e5, 0.49e9, 0.0).unwrap();
        assert!((pure.eval(1e20) - pure.k_inf).abs() < 1e-6 * pure.k_inf);
        assert!(SaturationModel::new(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn saturation_round_trip_and_subtracted_curve() {
        let truth = SaturationModel::new(6.9e5, 0.49e9, 1e-4).unwrap();
        let intensities: Vec<f64> = (1..=12).map(|k| truth.i_sat * 0.1 * 1.45f64.powi(k)).collect();
        let noisy = synthetic_saturation(&truth, &intensities, 0.02, 17);
        let fit = fit_saturation(&noisy, &RateWeights::Relative(0.02)).unwrap();
        assert!((fit.model.k_inf - truth.k_inf).abs() <= 3.0 * fit.sigma[0], "{fit:?}");
        assert!((fit.model.i_sat - truth.i_sat).abs() <= 3.0 * fit.sigma[1], "{fit:?}");
        assert!((fit.model.a - truth.a).abs() <= 3.0 * fit.sigma[2], "{fit:?}");
        assert!(!fit.ill_conditioned);

        let exact: Vec<(f64, f64)> = intensities.iter().map(|&i| (i, truth.eval(i))).collect();
        let fit = fit_saturation(&exact, &RateWeights::Uniform).unwrap();
        let curve = &fit.background_subtracted;
        assert!(curve.windows(2).all(|w| w[1].1 > w[0].1));
        assert!(curve.iter().all(|p| p.1 <= fit.model.k_inf * (1.0 + 1e-9)));
    }

    #[test]
    fn saturation_flags_low_intensity_design() {
        let truth = SaturationModel::new(6.9e5, 0.49e9, 1e-4).unwrap();
        let low: Vec<(f64, f64)> = (1..=6).map(|k| (k as f64 * 1e6, truth.eval(k as f64 * 1e6))).collect();
        match fit_saturation(&low, &RateWeights::Uniform) {
            Ok(fit) => assert!(fit.ill_conditioned),
            Err(e) => assert!(matches!(e, Error::FitFailure { .. })),
        }
        assert!(fit_saturation(&low[..4], &RateWeights::Uniform).is_err());
    }

    fn decay_edges(step: f64, bins: usize) -> Vec<f64> {
        (0..=bins).map(|k| k as f64 * step).collect()
    }

    #[test]
    fn mono_lifetime_recovered_within_two_percent() {
        let truth = DecayModel::mono(19.3, 2000.0, 3.0);
        let hist = synthetic_decay(&truth, &decay_edges(0.5, 400), 2).unwrap();
        let fit = fit_lifetime(&hist, DecayKind::Mono).unwrap();
        assert!((fit.model.tau_ns / 19.3 - 1.0).abs() < 0.02, "{fit:?}");
        assert!(fit.reliable);
        assert!((fit.model.tau_ns - 19.3).abs() <= 3.0 * fit.sigma[0]);
    }

    #[test]
    fn stretched_fit_of_mono_decay_has_unit_exponent() {
        let truth = DecayModel::mono(19.3, 2000.0, 3.0);
        let hist = synthetic_decay(&truth, &decay_edges(0.5, 400), 12).unwrap();
        let fit = fit_lifetime(&hist, DecayKind::Stretched).unwrap();
        assert!(1.0 - fit.model.beta <= 3.0 * fit.sigma[1].max(1e-3), "{fit:?}");
    }

    #[test]
    fn short_tail_is_flagged() {
        let truth = DecayModel::mono(19.3, 2000.0, 0.0);
        let hist = synthetic_decay(&truth, &decay_edges(0.5, 60), 1).unwrap();
        assert!(!fit_lifetime(&hist, DecayKind::Mono).unwrap().reliable);
    }

    #[test]
    fn stretched_mean_lifetime_is_the_decay_integral() {
        for beta in [0.4, 0.7, 1.0] {
            let m = DecayModel::stretched(10.0, beta, 1.0, 0.0);
            let tol = Tolerance { abs: 1e-12, rel: 1e-10, max_intervals: 400 };
            let integral = integrate(|t: f64| m.eval(t), 0.0, 1e6, &[1.0, 10.0, 100.0, 1e3, 1e4, 1e5], tol).value;
            assert!((integral - m.mean_lifetime_ns()).abs() < 1e-6 * integral, "beta {beta}");
        }
        assert!((DecayModel::stretched(10.0, 0.5, 1.0, 0.0).mean_lifetime_ns() - 20.0).abs() < 1e-10);
    }

    /// Ensemble of random dipole orientations: the parallel rate scales by
    /// `enhancement`, the normal rate is fixed; every orientation emits the
    /// same number of photons.
    fn orientation_ensemble(enhancement: f64) -> Vec<(f64, f64)> {
        (0..20)
            .map(|k| {
                let u = (k as f64 + 0.5) / 20.0;
                (19.3 / (enhancement * (1.0 - u * u) + u * u), 1.0)
            })
            .collect()
    }

    #[test]
    fn mixture_fits_bracket_and_stretch_the_modulation() {
        let edges = decay_edges(0.4, 500);
        let hist = synthetic_mixture(&[(8.0, 0.5), (25.0, 0.5)], 2e6, 5.0, &edges, 3).unwrap();
        let mono = fit_lifetime(&hist, DecayKind::Mono).unwrap();
        assert!(mono.model.tau_ns > 8.0 && mono.model.tau_ns < 25.0);

        let (mut mono_taus, mut stretched_taus) = (vec![], vec![]);
        for (k, enhancement) in [0.6, 0.8, 1.0, 1.3, 1.7].into_iter().enumerate() {
            let hist = synthetic_mixture(&orientation_ensemble(enhancement), 2e6, 5.0, &edges, 40 + k as u64).unwrap();
            mono_taus.push(fit_lifetime(&hist, DecayKind::Mono).unwrap().model.tau_ns);
            stretched_taus.push(fit_lifetime(&hist, DecayKind::Stretched).unwrap().mean_lifetime_ns);
        }
        let contrast = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(contrast(&stretched_taus) > contrast(&mono_taus), "{mono_taus:?} {stretched_taus:?}");
    }

    #[test]
    fn excitation_intensity_scaling_and_inversion() {
        let i = excitation_intensity(27e-6, 0.97, 0.15).unwrap();
        assert!((excitation_intensity(54e-6, 0.97, 0.15).unwrap() / i - 2.0).abs() < 1e-12);
        assert!((excitation_intensity(27e-6, 0.485, 0.15).unwrap() / i - 4.0).abs() < 1e-12);
        let p = power_for_intensity(0.49e9, 0.97, 0.15).unwrap();
        assert!((p - 27e-6).abs() < 0.5e-6, "{p}");
        assert!((excitation_intensity(p, 0.97, 0.15).unwrap() - 0.49e9).abs() < 1e-3);
        assert!(excitation_intensity(1e-6, 0.0, 0.15).is_err());
    }

    #[test]
    fn count_budget_and_enhancement() {
        let b = count_budget(6.9e5, 0.67, 0.65).unwrap();
        assert!((b.detection_efficiency - 0.4355).abs() < 1e-12);
        assert!((b.first_lens_rate - 1.6e6).abs() < 0.05e6, "{}", b.first_lens_rate);
        assert_eq!(count_budget(6.9e5, 1.0, 1.0).unwrap().first_lens_rate, 6.9e5);
        assert!(count_budget(1.0, 1.2, 0.5).is_err());
        assert!((count_rate_enhancement(5.7e5, 1.5e5).unwrap() - 3.8).abs() < 1e-12);
    }
}
