//! Classical dipole emission in planar layered media.
//!
//! The emitter sits in a lossless host layer bounded below and/or above by
//! reflecting structures. Decay rates are normalized to the same dipole in
//! the unbounded host and follow from an angular-spectrum integral over the
//! in-plane wavevector `u = k_x / (k0 n_host)`:
//!
//! ```text
//! parallel: 3/4 Re ∫ u/w [F_s + w² F_p∥] du      normal: 3/2 Re ∫ u³/w F_p⊥ du
//! ```
//!
//! with `w = sqrt(1 - u²)` and `F` the multiple-reflection factors of the
//! two boundaries. Only `F - 1` is integrated numerically, along a
//! semi-ellipse in the lower half of the complex `u` plane (away from
//! guided-mode poles) followed by a real-axis tail for absorbing media.
//!
//! Power absorbed in the boundaries and power escaping into the outer
//! half-spaces are obtained from real-axis flux integrals.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cavity::{EmissionSpectrum, MirrorPair};
use crate::error::{Error, Result};
use crate::material::Material;
use crate::multilayer::{coatings, normal_component, Amplitudes, LayerStack, Polarization, ResolvedStack};
use crate::quadrature::{integrate, integrate_tail, Tolerance, Vector};

/// Free-space lifetime inferred for the nanodiamond ensemble, in ns.
pub const FREE_SPACE_LIFETIME_NS: f64 = 34.0;
/// Measured lifetime on the planar mirror without the fiber mirror, in ns.
pub const MIRROR_LIFETIME_NS: f64 = 18.9;

/// Default relative tolerance of the decay-rate integrals.
pub const DEFAULT_REL_TOL: f64 = 1e-6;
const TAIL_CUTOFF: f64 = 1e-10;
const MAX_U: f64 = 1e6;
const REAL_AXIS_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Dipole moment parallel to the interfaces.
    Parallel,
    /// Dipole moment along the surface normal.
    Normal,
    /// Orientation average, 2/3 parallel + 1/3 normal.
    Isotropic,
}

impl Orientation {
    /// Weight of the parallel and normal contributions.
    pub fn weights(self) -> (f64, f64) {
        match self {
            Orientation::Parallel => (1.0, 0.0),
            Orientation::Normal => (0.0, 1.0),
            Orientation::Isotropic => (2.0 / 3.0, 1.0 / 3.0),
        }
    }
}

/// A value for the two principal dipole orientations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrientationPair {
    pub parallel: f64,
    pub normal: f64,
}

impl OrientationPair {
    pub fn get(&self, orientation: Orientation) -> f64 {
        let (a, b) = orientation.weights();
        a * self.parallel + b * self.normal
    }

    fn zip(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self { parallel: f(self.parallel, other.parallel), normal: f(self.normal, other.normal) }
    }
}

/// Structure bounding the host layer on one side.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// Layered structure; its incident half-space is replaced by the host.
    Stack(LayerStack),
    /// Ideal mirror (`r_s = -1`, `r_p = +1`).
    PerfectConductor,
}

/// Dipole position and surroundings.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleEnvironment {
    host: Material,
    below: Option<Boundary>,
    above: Option<Boundary>,
    gap_nm: f64,
    height_nm: f64,
}

impl DipoleEnvironment {
    /// Dipole in the unbounded host.
    pub fn homogeneous(host: Material) -> Self {
        Self { host, below: None, above: None, gap_nm: f64::INFINITY, height_nm: 0.0 }
    }

    /// Host layer of thickness `gap_nm` (infinite if there is no upper
    /// boundary) with the dipole `height_nm` above the lower boundary.
    pub fn new(
        host: Material,
        below: Option<Boundary>,
        above: Option<Boundary>,
        gap_nm: f64,
        height_nm: f64,
    ) -> Result<Self> {
        if !(height_nm >= 0.0 && height_nm.is_finite()) {
            return Err(Error::Domain(format!("dipole height must be finite and non-negative, got {height_nm} nm")));
        }
        if above.is_some() {
            if !(gap_nm.is_finite() && gap_nm >= height_nm) {
                return Err(Error::Domain(format!("dipole height {height_nm} nm outside the gap [0, {gap_nm}] nm")));
            }
        } else if gap_nm < height_nm {
            return Err(Error::Domain(format!("dipole height {height_nm} nm exceeds gap {gap_nm} nm")));
        }
        let adapt = |b: Option<Boundary>| match b {
            Some(Boundary::Stack(s)) => Some(Boundary::Stack(s.with_incident(host.clone()))),
            other => other,
        };
        let below = adapt(below);
        let above = adapt(above);
        Ok(Self { host, below, above, gap_nm, height_nm })
    }

    /// Dipole at `height_nm` above a single boundary.
    pub fn above_boundary(host: Material, below: Boundary, height_nm: f64) -> Result<Self> {
        Self::new(host, Some(below), None, f64::INFINITY, height_nm)
    }

    pub fn host(&self) -> &Material {
        &self.host
    }

    pub fn below(&self) -> Option<&Boundary> {
        self.below.as_ref()
    }

    pub fn above(&self) -> Option<&Boundary> {
        self.above.as_ref()
    }

    pub fn gap_nm(&self) -> f64 {
        self.gap_nm
    }

    pub fn height_nm(&self) -> f64 {
        self.height_nm
    }

    fn resolve(&self, wavelength_nm: f64) -> Result<Evaluator> {
        let n = self.host.index_at(wavelength_nm)?;
        if n.im != 0.0 || n.re <= 0.0 {
            return Err(Error::Domain(format!("host medium must be lossless, got n = {n}")));
        }
        let side = |b: &Option<Boundary>, distance: f64| -> Result<Side> {
            Ok(match b {
                None => Side { boundary: Resolved::Open, distance },
                Some(Boundary::PerfectConductor) => Side { boundary: Resolved::Conductor, distance },
                Some(Boundary::Stack(s)) => Side { boundary: Resolved::Stack(s.resolve(wavelength_nm)?), distance },
            })
        };
        let below = side(&self.below, self.height_nm)?;
        let above = side(&self.above, self.gap_nm - self.height_nm)?;
        let mut max_index = n.re;
        for s in [&below, &above] {
            if let Resolved::Stack(r) = &s.boundary {
                for e in r.permittivities() {
                    max_index = max_index.max(e.sqrt().norm());
                }
            }
        }
        Ok(Evaluator { k0: 2.0 * PI / wavelength_nm, host_index: n.re, below, above, max_index })
    }
}

enum Resolved {
    Open,
    Conductor,
    Stack(ResolvedStack),
}

struct Side {
    boundary: Resolved,
    distance: f64,
}

impl Side {
    fn amplitudes(&self, kx: Complex64, pol: Polarization) -> Option<Amplitudes> {
        match &self.boundary {
            Resolved::Stack(s) => Some(s.amplitudes(kx, pol)),
            _ => None,
        }
    }

    fn reflection(&self, amp: &Option<Amplitudes>, pol: Polarization) -> Complex64 {
        match (&self.boundary, amp) {
            (Resolved::Stack(_), Some(a)) => a.r,
            (Resolved::Conductor, _) => match pol {
                Polarization::TE => Complex64::new(-1.0, 0.0),
                Polarization::TM => Complex64::new(1.0, 0.0),
            },
            _ => Complex64::new(0.0, 0.0),
        }
    }

    fn exit_lossless(&self) -> bool {
        match &self.boundary {
            Resolved::Stack(s) => s.permittivities().last().is_some_and(|e| e.im == 0.0),
            _ => true,
        }
    }
}

/// Per-orientation flux densities leaving the host layer.
#[derive(Clone, Copy)]
struct Fluxes {
    absorbed_below: [f64; 2],
    absorbed_above: [f64; 2],
    escaped_below: [f64; 2],
    escaped_above: [f64; 2],
}

impl Fluxes {
    fn to_vector(self) -> Vector<f64, 8> {
        Vector([
            self.absorbed_below[0],
            self.absorbed_below[1],
            self.absorbed_above[0],
            self.absorbed_above[1],
            self.escaped_below[0],
            self.escaped_below[1],
            self.escaped_above[0],
            self.escaped_above[1],
        ])
    }
}

struct Evaluator {
    k0: f64,
    host_index: f64,
    below: Side,
    above: Side,
    max_index: f64,
}

impl Evaluator {
    /// `exp(2 i k z w)` round-trip factor to a boundary at distance `z`.
    fn round_trip(&self, w: Complex64, z: f64) -> Complex64 {
        if z == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            (Complex64::i() * (2.0 * self.k0 * self.host_index * z) * w).exp()
        }
    }

    /// Reflection coefficients times round-trip factors: `(r_a E_a, r_b E_b)`.
    fn dressed(&self, u: Complex64, w: Complex64, pol: Polarization) -> (Complex64, Complex64) {
        let kx = u * self.host_index;
        let ra = self.above.reflection(&self.above.amplitudes(kx, pol), pol);
        let rb = self.below.reflection(&self.below.amplitudes(kx, pol), pol);
        let ra_e = if ra == Complex64::new(0.0, 0.0) { ra } else { ra * self.round_trip(w, self.above.distance) };
        let rb_e = if rb == Complex64::new(0.0, 0.0) { rb } else { rb * self.round_trip(w, self.below.distance) };
        (ra_e, rb_e)
    }

    /// Integrand of the decay-rate correction `Gamma - 1` for (parallel, normal).
    fn rate_integrand(&self, u: Complex64) -> Vector<Complex64, 2> {
        let w = normal_component(Complex64::new(1.0, 0.0), u);
        let (a, b) = self.dressed(u, w, Polarization::TE);
        let fs = (a + b + 2.0 * a * b) / (1.0 - a * b);
        let (a, b) = self.dressed(u, w, Polarization::TM);
        let den = 1.0 - a * b;
        let f_par = (2.0 * a * b - a - b) / den;
        let f_perp = (a + b + 2.0 * a * b) / den;
        let uw = u / w;
        Vector([0.75 * uw * (fs + w * w * f_par), 1.5 * uw * u * u * f_perp])
    }

    /// `1 + Re ∫_0^1` of the rate integrand: power in waves propagating in the host.
    pub(crate) fn propagating_part(&self, rel_tol: f64) -> OrientationPair {
        let tol = Tolerance { abs: 1e-3 * rel_tol, rel: rel_tol, max_intervals: 4000 };
        // substitute u = sin t to remove the 1/w endpoint singularity
        let r = integrate(
            |t: f64| {
                let (s, c) = t.sin_cos();
                let f = self.rate_integrand(Complex64::new(s, 0.0));
                Vector([f.0[0].re * c, f.0[1].re * c])
            },
            0.0,
            0.5 * PI,
            &[],
            tol,
        );
        OrientationPair { parallel: 1.0 + r.value.0[0], normal: 1.0 + r.value.0[1] }
    }

    /// Upper end of the complex contour: beyond every layer index.
    fn contour_end(&self) -> f64 {
        self.max_index / self.host_index + 1.0
    }

    fn decay_rates(&self, rel_tol: f64) -> Result<(OrientationPair, f64)> {
        if matches!(self.below.boundary, Resolved::Open) && matches!(self.above.boundary, Resolved::Open) {
            return Ok((OrientationPair { parallel: 1.0, normal: 1.0 }, 0.0));
        }
        let ue = self.contour_end();
        let depth = 0.5_f64.min(0.25 * ue);
        let tol = Tolerance { abs: 1e-3 * rel_tol, rel: rel_tol, max_intervals: 4000 };
        let mut peak: f64 = 0.0;
        let contour = integrate(
            |t: f64| {
                let (s, c) = t.sin_cos();
                let u = Complex64::new(0.5 * ue * (1.0 - c), -depth * s);
                let du = Complex64::new(0.5 * ue * s, -depth * c);
                let f = self.rate_integrand(u);
                peak = peak.max(f.0[0].norm()).max(f.0[1].norm());
                Vector([f.0[0] * du, f.0[1] * du])
            },
            0.0,
            PI,
            &[],
            tol,
        );
        if !contour.converged {
            return Err(Error::NonConvergent { context: "decay-rate contour integral".into(), bound: contour.error });
        }
        let tail = integrate_tail(
            |x: f64| {
                let f = self.rate_integrand(Complex64::new(x, 0.0));
                Vector([f.0[0].re, f.0[1].re])
            },
            ue,
            1.0,
            peak,
            TAIL_CUTOFF,
            MAX_U,
            tol,
        )
        .map_err(|bound| Error::NonConvergent { context: "evanescent decay-rate tail".into(), bound })?;
        let rates = OrientationPair {
            parallel: 1.0 + contour.value.0[0].re + tail.value.0[0],
            normal: 1.0 + contour.value.0[1].re + tail.value.0[1],
        };
        Ok((rates, tail.bound + contour.error))
    }

    fn flux_channel(&self, u: f64, w: Complex64, pol: Polarization, sign: f64) -> ([f64; 2], [f64; 2]) {
        let kx = Complex64::new(u * self.host_index, 0.0);
        let amp_a = self.above.amplitudes(kx, pol);
        let amp_b = self.below.amplitudes(kx, pol);
        let ra = self.above.reflection(&amp_a, pol);
        let rb = self.below.reflection(&amp_b, pol);
        let ea = self.round_trip(w, self.above.distance);
        let eb = self.round_trip(w, self.below.distance);
        let ra_e = if ra == Complex64::new(0.0, 0.0) { ra } else { ra * ea };
        let rb_e = if rb == Complex64::new(0.0, 0.0) { rb } else { rb * eb };
        let den = (1.0 - ra_e * rb_e).norm_sqr();
        // |propagation factor to the boundary|^2
        let damping = |z: f64| {
            if z.is_infinite() {
                if w.im == 0.0 { 1.0 } else { 0.0 }
            } else {
                (-2.0 * self.k0 * self.host_index * z * w.im).exp()
            }
        };
        let gb = damping(self.below.distance) * (1.0 + sign * ra_e).norm_sqr() / den;
        let ga = damping(self.above.distance) * (1.0 + sign * rb_e).norm_sqr() / den;
        let q_host = match pol {
            Polarization::TE => w * self.host_index,
            Polarization::TM => w / self.host_index,
        };
        let split = |side: &Side, amp: &Option<Amplitudes>, g: f64| -> (f64, f64) {
            match (&side.boundary, amp) {
                (Resolved::Stack(_), Some(a)) => {
                    let incoming = a.q_in.re * (1.0 - a.r.norm_sqr()) + 2.0 * a.q_in.im * a.r.im;
                    if side.exit_lossless() {
                        let out = a.transmitted_flux();
                        (g * (incoming - out), g * out)
                    } else {
                        (g * incoming, 0.0)
                    }
                }
                (Resolved::Open, _) => (0.0, g * q_host.re),
                _ => (0.0, 0.0),
            }
        };
        let (abs_b, esc_b) = split(&self.below, &amp_b, gb);
        let (abs_a, esc_a) = split(&self.above, &amp_a, ga);
        ([abs_b, abs_a], [esc_b, esc_a])
    }

    /// Flux densities per unit `u` on the real axis.
    fn fluxes(&self, u: f64) -> Fluxes {
        let w = normal_component(Complex64::new(1.0, 0.0), Complex64::new(u, 0.0));
        let w2 = w.norm_sqr();
        let nh = self.host_index;
        let weight_s = 0.375 * u / (w2 * nh);
        let weight_par = 0.375 * u * nh;
        let weight_perp = 0.75 * u * u * u * nh / w2;
        let (abs_s, esc_s) = self.flux_channel(u, w, Polarization::TE, 1.0);
        let (abs_pp, esc_pp) = self.flux_channel(u, w, Polarization::TM, -1.0);
        let (abs_pn, esc_pn) = self.flux_channel(u, w, Polarization::TM, 1.0);
        let par = |s: f64, p: f64| weight_s * s + weight_par * p;
        Fluxes {
            absorbed_below: [par(abs_s[0], abs_pp[0]), weight_perp * abs_pn[0]],
            absorbed_above: [par(abs_s[1], abs_pp[1]), weight_perp * abs_pn[1]],
            escaped_below: [par(esc_s[0], esc_pp[0]), weight_perp * esc_pn[0]],
            escaped_above: [par(esc_s[1], esc_pp[1]), weight_perp * esc_pn[1]],
        }
    }

    fn real_axis_breakpoints(&self, upper: f64) -> Vec<f64> {
        let mut points = vec![1.0];
        for s in [&self.below, &self.above] {
            if let Resolved::Stack(r) = &s.boundary {
                points.extend(r.permittivities().iter().map(|e| e.sqrt().re / self.host_index));
            }
        }
        let steps = (upper / REAL_AXIS_STEP).ceil() as usize;
        points.extend((1..steps).map(|i| i as f64 * REAL_AXIS_STEP));
        points.retain(|&p| p > 0.0 && p < upper);
        points
    }

    fn flux_integral(&self, lower: f64, upper: f64, rel_tol: f64) -> Result<Vector<f64, 8>> {
        let tol = Tolerance { abs: 1e-3 * rel_tol, rel: rel_tol, max_intervals: 20_000 };
        let mut bps = self.real_axis_breakpoints(upper);
        bps.retain(|&p| p > lower);
        let main = integrate(|u: f64| self.fluxes(u).to_vector(), lower, upper, &bps, tol);
        if !main.converged {
            return Err(Error::NonConvergent { context: "flux integral".into(), bound: main.error });
        }
        Ok(main.value)
    }
}

/// Decay rates with both orientations, normalized to the unbounded host.
pub fn decay_rates(env: &DipoleEnvironment, wavelength_nm: f64) -> Result<OrientationPair> {
    decay_rates_with_tolerance(env, wavelength_nm, DEFAULT_REL_TOL)
}

pub fn decay_rates_with_tolerance(env: &DipoleEnvironment, wavelength_nm: f64, rel_tol: f64) -> Result<OrientationPair> {
    Ok(env.resolve(wavelength_nm)?.decay_rates(rel_tol)?.0)
}

/// Where the emitted power goes, all normalized to the unbounded-host rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayBreakdown {
    pub total: OrientationPair,
    /// Power dissipated in absorbing layers.
    pub absorbed: OrientationPair,
    /// Part of `absorbed` carried by wavevectors evanescent in the host:
    /// near-field coupling into the absorber (nonradiative decay).
    pub quenched: OrientationPair,
    /// `total - quenched`.
    pub radiative: OrientationPair,
    /// Contribution of in-plane wavevectors that propagate in the host
    /// (`u < 1`), including the unbounded-host emission.
    pub propagating: OrientationPair,
    /// Power escaping into the lower and upper outer half-spaces.
    pub escaped_below: OrientationPair,
    pub escaped_above: OrientationPair,
    /// Estimated truncation error of the evanescent tail.
    pub tail_bound: f64,
}

impl DecayBreakdown {
    /// Power carried by lossless guided modes of the structure.
    pub fn guided(&self) -> OrientationPair {
        let lost = self.escaped_below.zip(self.escaped_above, |a, b| a + b).zip(self.absorbed, |e, a| e + a);
        self.total.zip(lost, |t, l| t - l)
    }
}

/// Total decay rate and its split into absorbed and radiated parts.
pub fn relative_decay_rate(env: &DipoleEnvironment, wavelength_nm: f64) -> Result<DecayBreakdown> {
    let ev = env.resolve(wavelength_nm)?;
    let (total, bound) = ev.decay_rates(DEFAULT_REL_TOL)?;
    let ue = ev.contour_end();
    let propagating_flux = ev.flux_integral(0.0, 1.0, DEFAULT_REL_TOL)?;
    let evanescent_flux = ev.flux_integral(1.0, ue, DEFAULT_REL_TOL)?;
    let tol = Tolerance { abs: 1e-9, rel: DEFAULT_REL_TOL, max_intervals: 4000 };
    let tail = integrate_tail(|u: f64| ev.fluxes(u).to_vector(), ue, 1.0, 0.0, TAIL_CUTOFF, MAX_U, tol)
        .map_err(|bound| Error::NonConvergent { context: "absorbed-power tail".into(), bound })?;
    let evanescent = (evanescent_flux + tail.value).0;
    let v = (propagating_flux + Vector(evanescent)).0;
    let pair = |v: &[f64; 8], i: usize| OrientationPair { parallel: v[i], normal: v[i + 1] };
    let absorbed = pair(&v, 0).zip(pair(&v, 2), |a, b| a + b);
    let quenched = pair(&evanescent, 0).zip(pair(&evanescent, 2), |a, b| a + b);
    Ok(DecayBreakdown {
        total,
        absorbed,
        radiative: total.zip(quenched, |t, q| t - q),
        propagating: ev.propagating_part(DEFAULT_REL_TOL),
        quenched,
        escaped_below: pair(&v, 4),
        escaped_above: pair(&v, 6),
        tail_bound: bound + tail.bound,
    })
}

/// Fraction of the decay lost to near-field absorption (`quenched / total`).
///
/// Power reaching an absorber through waves that propagate in the host,
/// such as modes guided by an extended host slab, is not counted: for a
/// subwavelength crystal those channels radiate.
pub fn nonradiative_fraction(env: &DipoleEnvironment, wavelength_nm: f64, orientation: Orientation) -> Result<f64> {
    let b = relative_decay_rate(env, wavelength_nm)?;
    Ok(b.quenched.get(orientation) / b.total.get(orientation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionSide {
    /// Through the lower structure into its exit half-space.
    Below,
    /// Through the upper structure into its exit half-space.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Collection {
    /// Collected power relative to the decay rate in the unbounded host.
    pub relative_to_host: f64,
    /// Collected power as a fraction of the total decay rate in this
    /// environment.
    pub fraction_of_emission: f64,
}

/// Power emitted into a cone of numerical aperture `na` on one side.
pub fn collection_efficiency(
    env: &DipoleEnvironment,
    wavelength_nm: f64,
    na: f64,
    orientation: Orientation,
    side: CollectionSide,
) -> Result<Collection> {
    let ev = env.resolve(wavelength_nm)?;
    let s = match side {
        CollectionSide::Below => &ev.below,
        CollectionSide::Above => &ev.above,
    };
    let exit_index = match &s.boundary {
        Resolved::Open => ev.host_index,
        Resolved::Conductor => 0.0,
        Resolved::Stack(r) => {
            let e = *r.permittivities().last().unwrap();
            if e.im != 0.0 {
                0.0
            } else {
                e.re.sqrt()
            }
        }
    };
    if !(na > 0.0 && na <= exit_index) {
        return Err(Error::Domain(format!(
            "numerical aperture {na} must lie in (0, {exit_index}] for the collection medium"
        )));
    }
    let (total, _) = ev.decay_rates(DEFAULT_REL_TOL)?;
    let upper = na / ev.host_index;
    let mut bps = vec![1.0];
    let steps = (upper / REAL_AXIS_STEP).ceil() as usize;
    bps.extend((1..steps).map(|i| i as f64 * REAL_AXIS_STEP));
    let idx = match side {
        CollectionSide::Below => 4,
        CollectionSide::Above => 6,
    };
    let tol = Tolerance { abs: 1e-12, rel: DEFAULT_REL_TOL, max_intervals: 20_000 };
    let r = integrate(
        |u: f64| {
            let v = ev.fluxes(u).to_vector().0;
            Vector([v[idx], v[idx + 1]])
        },
        0.0,
        upper,
        &bps,
        tol,
    );
    let collected = OrientationPair { parallel: r.value.0[0], normal: r.value.0[1] };
    let relative_to_host = collected.get(orientation);
    Ok(Collection { relative_to_host, fraction_of_emission: relative_to_host / total.get(orientation) })
}

/// Nanocrystal modeled as a planar slab resting on the lower mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct Crystal {
    pub material: Material,
    pub thickness_nm: f64,
}

/// Plane-plane cavity template: a lower mirror, an upper mirror at
/// separation `d0`, optionally a crystal slab on the lower mirror holding
/// the emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarCavity {
    /// Lower mirror as seen from the gap.
    pub lower: LayerStack,
    /// Upper (fiber) mirror as seen from the gap.
    pub upper: LayerStack,
    pub gap_medium: Material,
    pub crystal: Option<Crystal>,
    /// Emitter height above the lower mirror surface.
    pub dipole_height_nm: f64,
    pub orientation: Orientation,
}

impl PlanarCavity {
    /// The plane-plane cavity of the lifetime measurements with the emitter
    /// at the center of a diamond slab of the given thickness.
    pub fn diamond_slab(thickness_nm: f64, orientation: Orientation) -> Self {
        Self {
            lower: coatings::planar_mirror_thick_cap(),
            upper: coatings::fiber_mirror(),
            gap_medium: Material::air(),
            crystal: Some(Crystal { material: Material::diamond(), thickness_nm }),
            dipole_height_nm: 0.5 * thickness_nm,
            orientation,
        }
    }

    /// Environment at mirror separation `d0_nm`; `with_upper = false` removes
    /// the upper mirror.
    pub fn environment(&self, d0_nm: f64, with_upper: bool) -> Result<DipoleEnvironment> {
        let lower = Some(Boundary::Stack(self.lower.clone()));
        match &self.crystal {
            None => {
                let above = with_upper.then(|| Boundary::Stack(self.upper.clone()));
                let gap = if with_upper { d0_nm } else { f64::INFINITY };
                DipoleEnvironment::new(self.gap_medium.clone(), lower, above, gap, self.dipole_height_nm)
            }
            Some(c) => {
                let above = if with_upper {
                    let air = d0_nm - c.thickness_nm;
                    if air < 0.0 {
                        return Err(Error::Domain(format!(
                            "mirror separation {d0_nm} nm smaller than crystal thickness {} nm",
                            c.thickness_nm
                        )));
                    }
                    let mut films = vec![(self.gap_medium.clone(), air)];
                    films.extend(self.upper.films().iter().map(|l| (l.material.clone(), l.thickness_nm)));
                    LayerStack::from_films(c.material.clone(), films, self.upper.exit().clone())?
                } else {
                    LayerStack::interface(c.material.clone(), self.gap_medium.clone())
                };
                DipoleEnvironment::new(
                    c.material.clone(),
                    lower,
                    Some(Boundary::Stack(above)),
                    c.thickness_nm,
                    self.dipole_height_nm,
                )
            }
        }
    }
}

impl PlanarCavity {
    /// Lower mirror including the crystal slab, seen from the gap medium.
    pub fn loaded_lower_mirror(&self) -> Result<LayerStack> {
        match &self.crystal {
            None => Ok(self.lower.with_incident(self.gap_medium.clone())),
            Some(c) => {
                let mut films = vec![(c.material.clone(), c.thickness_nm)];
                films.extend(self.lower.films().iter().map(|l| (l.material.clone(), l.thickness_nm)));
                LayerStack::from_films(self.gap_medium.clone(), films, self.lower.exit().clone())
            }
        }
    }

    /// Mirror separations `d0` of the first `count` normal-incidence
    /// resonances at `wavelength_nm`, accounting for the crystal slab.
    pub fn resonance_separations(&self, wavelength_nm: f64, count: usize) -> Result<Vec<f64>> {
        let mirrors = MirrorPair {
            outcoupler: self.loaded_lower_mirror()?,
            back: self.upper.with_incident(self.gap_medium.clone()),
            radius_um: f64::INFINITY,
        };
        let dev = mirrors.mirror_data(wavelength_nm)?.phase_deviation();
        let offset = self.crystal.as_ref().map_or(0.0, |c| c.thickness_nm);
        let n_gap = self.gap_medium.index_at(wavelength_nm)?.re;
        Ok((0..)
            .map(|q| (q as f64 - dev / PI) * wavelength_nm / (2.0 * n_gap))
            .filter(|&gap| gap > 0.0)
            .take(count)
            .map(|gap| gap + offset)
            .collect())
    }
}

/// Interior local minima of a lifetime curve that dip at least
/// `min_prominence` below the maxima enclosing them.
pub fn lifetime_minima(curve: &[LifetimePoint], min_prominence: f64) -> Vec<LifetimePoint> {
    let y: Vec<f64> = curve.iter().map(|p| p.lifetime_ratio).collect();
    let candidates: Vec<usize> = (1..y.len().saturating_sub(1)).filter(|&i| y[i] < y[i - 1] && y[i] <= y[i + 1]).collect();
    candidates
        .iter()
        .enumerate()
        .filter(|&(k, &i)| {
            let from = if k == 0 { 0 } else { candidates[k - 1] };
            let to = candidates.get(k + 1).copied().unwrap_or(y.len() - 1);
            let left = y[from..i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let right = y[i + 1..=to].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // a flank cut off by the end of the curve does not bound the dip
            let bound = match (k == 0, k + 1 == candidates.len()) {
                (true, true) => left.max(right),
                (true, false) => right,
                (false, true) => left,
                (false, false) => left.min(right),
            };
            bound - y[i] >= min_prominence
        })
        .map(|(_, &i)| curve[i])
        .collect()
}

/// Dominant oscillation period of `tau/tau_m - 1` from a periodogram scan
/// over trial periods in `[min_nm, max_nm]` (0.05 nm steps).
pub fn oscillation_period(curve: &[LifetimePoint], min_nm: f64, max_nm: f64) -> Result<f64> {
    if curve.len() < 3 || !(min_nm > 0.0 && max_nm > min_nm) {
        return Err(Error::Domain("need at least three points and a valid period range".into()));
    }
    let steps = ((max_nm - min_nm) / 0.05).ceil() as usize;
    let power = |p: f64| {
        let (re, im) = curve.iter().fold((0.0, 0.0), |(re, im), pt| {
            let (s, c) = (2.0 * PI * pt.d0_nm / p).sin_cos();
            let y = pt.lifetime_ratio - 1.0;
            (re + y * c, im + y * s)
        });
        re * re + im * im
    };
    Ok((0..=steps)
        .map(|k| min_nm + (max_nm - min_nm) * k as f64 / steps as f64)
        .map(|p| (p, power(p)))
        .fold((min_nm, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurcellSample {
    pub wavelength_nm: f64,
    /// Decay rate with both mirrors.
    pub with_cavity: f64,
    /// Decay rate with the upper mirror removed.
    pub mirror_only: f64,
}

/// Decay-rate spectra with and without the upper mirror at separation `d0_nm`.
pub fn purcell_spectrum(cavity: &PlanarCavity, d0_nm: f64, wavelengths_nm: &[f64]) -> Result<Vec<PurcellSample>> {
    let closed = cavity.environment(d0_nm, true)?;
    let open = cavity.environment(d0_nm, false)?;
    wavelengths_nm
        .iter()
        .map(|&l| {
            Ok(PurcellSample {
                wavelength_nm: l,
                with_cavity: decay_rates(&closed, l)?.get(cavity.orientation),
                mirror_only: decay_rates(&open, l)?.get(cavity.orientation),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralAverage {
    /// Spectrally averaged rate ratio `∫ (C/C_m) S dλ / ∫ S dλ`.
    pub enhancement: f64,
    /// Lifetime ratio `tau_c / tau_m`, the inverse of `enhancement`.
    pub lifetime_ratio: f64,
    /// Fraction of the spectral weight inside the wavelength grid.
    pub coverage: f64,
}

fn coverage(wavelengths_nm: &[f64], spectrum: &EmissionSpectrum) -> Result<f64> {
    if wavelengths_nm.len() < 2 || wavelengths_nm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("wavelength grid must be strictly increasing with at least two points".into()));
    }
    let covered =
        spectrum.weight_between(wavelengths_nm[0], *wavelengths_nm.last().unwrap()) / spectrum.total_weight();
    if covered < 0.99 {
        return Err(Error::Coverage { covered });
    }
    Ok(covered)
}

/// Averages the rate ratio `C/C_m` over the emission spectrum (trapezoidal
/// rule on the given grid).
pub fn spectral_average_enhancement(
    wavelengths_nm: &[f64],
    with_cavity: &[f64],
    mirror_only: &[f64],
    spectrum: &EmissionSpectrum,
) -> Result<SpectralAverage> {
    if with_cavity.len() != wavelengths_nm.len() || mirror_only.len() != wavelengths_nm.len() {
        return Err(Error::Domain("spectra and wavelength grid differ in length".into()));
    }
    let covered = coverage(wavelengths_nm, spectrum)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..wavelengths_nm.len() - 1 {
        let h = wavelengths_nm[i + 1] - wavelengths_nm[i];
        let (s0, s1) = (spectrum.density(wavelengths_nm[i]), spectrum.density(wavelengths_nm[i + 1]));
        num += 0.5 * h * (with_cavity[i] / mirror_only[i] * s0 + with_cavity[i + 1] / mirror_only[i + 1] * s1);
        den += 0.5 * h * (s0 + s1);
    }
    let enhancement = num / den;
    Ok(SpectralAverage { enhancement, lifetime_ratio: 1.0 / enhancement, coverage: covered })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LifetimePoint {
    pub d0_nm: f64,
    /// `tau(d0) / tau_m`.
    pub lifetime_ratio: f64,
}

/// Spectrally averaged lifetime relative to the mirror-only lifetime for
/// each mirror separation.
pub fn lifetime_curve(
    cavity: &PlanarCavity,
    d0_nm: &[f64],
    wavelengths_nm: &[f64],
    spectrum: &EmissionSpectrum,
) -> Result<Vec<LifetimePoint>> {
    if d0_nm.windows(2).any(|w| !(w[1] > w[0])) || d0_nm.first().is_some_and(|&d| d <= 0.0) {
        return Err(Error::Domain("mirror separations must be positive and ascending".into()));
    }
    coverage(wavelengths_nm, spectrum)?;
    let open = cavity.environment(d0_nm.first().copied().unwrap_or(1.0), false)?;
    let mirror_only: Vec<f64> = wavelengths_nm
        .iter()
        .map(|&l| Ok(decay_rates(&open, l)?.get(cavity.orientation)))
        .collect::<Result<_>>()?;
    d0_nm
        .iter()
        .map(|&d0| {
            let env = cavity.environment(d0, true)?;
            let with_cavity: Vec<f64> = wavelengths_nm
                .iter()
                .map(|&l| Ok(decay_rates(&env, l)?.get(cavity.orientation)))
                .collect::<Result<_>>()?;
            let avg = spectral_average_enhancement(wavelengths_nm, &with_cavity, &mirror_only, spectrum)?;
            Ok(LifetimePoint { d0_nm: d0, lifetime_ratio: avg.lifetime_ratio })
        })
        .collect()
}

/// Effective Purcell factor `tau0/tau_c - 1`.
pub fn purcell_from_lifetimes(free_space_ns: f64, cavity_ns: f64) -> Result<f64> {
    if !(free_space_ns > 0.0 && cavity_ns > 0.0) {
        return Err(Error::Domain("lifetimes must be positive".into()));
    }
    Ok(free_space_ns / cavity_ns - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mirror_oracle(x: f64) -> (f64, f64) {
        let (s, c) = x.sin_cos();
        let par = 1.0 - 1.5 * (s / x + c / (x * x) - s / (x * x * x));
        let perp = 1.0 + 3.0 * (s / (x * x * x) - c / (x * x));
        (par, perp)
    }

    #[test]
    fn homogeneous_host_is_unity() {
        let env = DipoleEnvironment::homogeneous(Material::diamond());
        let r = decay_rates(&env, 690.0).unwrap();
        assert_eq!((r.parallel, r.normal), (1.0, 1.0));
        let glass_in_glass = DipoleEnvironment::above_boundary(
            Material::glass(),
            Boundary::Stack(LayerStack::interface(Material::glass(), Material::glass())),
            50.0,
        )
        .unwrap();
        let r = decay_rates(&glass_in_glass, 690.0).unwrap();
        assert_relative_eq!(r.parallel, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.normal, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ideal_mirror_matches_closed_form() {
        let lam = 600.0;
        for z in [10.0, 37.0, 100.0, 250.0, 700.0, 2000.0] {
            let env = DipoleEnvironment::above_boundary(Material::vacuum(), Boundary::PerfectConductor, z).unwrap();
            let r = decay_rates(&env, lam).unwrap();
            let (par, perp) = mirror_oracle(4.0 * PI * z / lam);
            assert!((r.parallel - par).abs() < 1e-6, "z={z}: {} vs {par}", r.parallel);
            assert!((r.normal - perp).abs() < 1e-6, "z={z}: {} vs {perp}", r.normal);
        }
    }

    #[test]
    fn lossless_structures_have_no_absorption() {
        let below = LayerStack::from_films(Material::vacuum(), [(Material::diamond(), 120.0)], Material::glass()).unwrap();
        let env = DipoleEnvironment::above_boundary(Material::vacuum(), Boundary::Stack(below), 30.0).unwrap();
        let b = relative_decay_rate(&env, 690.0).unwrap();
        assert!(b.absorbed.parallel.abs() < 1e-6 && b.absorbed.normal.abs() < 1e-6, "{b:?}");
        let below = LayerStack::interface(Material::vacuum(), Material::glass());
        let env = DipoleEnvironment::above_boundary(Material::diamond(), Boundary::Stack(below), 30.0).unwrap();
        for o in [Orientation::Parallel, Orientation::Normal] {
            assert!(nonradiative_fraction(&env, 690.0, o).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn quenching_is_the_evanescent_part_of_the_rate() {
        let lower = LayerStack::from_films(Material::air(), [(Material::glass(), 20.0), (Material::silver(), 33.0)], Material::glass()).unwrap();
        let above = LayerStack::interface(Material::air(), Material::air());
        let env = DipoleEnvironment::new(Material::diamond(), Some(Boundary::Stack(lower)), Some(Boundary::Stack(above)), 30.0, 15.0)
            .unwrap();
        let b = relative_decay_rate(&env, 690.0).unwrap();
        for o in [Orientation::Parallel, Orientation::Normal] {
            let evanescent = b.total.get(o) - b.propagating.get(o);
            assert!((b.quenched.get(o) - evanescent).abs() < 1e-5 * b.total.get(o), "{o:?} {b:?}");
        }
    }

    #[test]
    fn power_balance_above_silver() {
        let below = LayerStack::from_films(Material::vacuum(), [(Material::silver(), 33.0)], Material::glass()).unwrap();
        let env = DipoleEnvironment::above_boundary(Material::vacuum(), Boundary::Stack(below), 40.0).unwrap();
        let b = relative_decay_rate(&env, 690.0).unwrap();
        let g = b.guided();
        assert!(g.parallel.abs() < 1e-4 && g.normal.abs() < 1e-4, "{b:?}");
        assert!(b.absorbed.normal > b.absorbed.parallel);
    }

    #[test]
    fn homogeneous_hemisphere_collects_half() {
        let env = DipoleEnvironment::homogeneous(Material::glass());
        for o in [Orientation::Parallel, Orientation::Normal, Orientation::Isotropic] {
            let c = collection_efficiency(&env, 690.0, 1.46, o, CollectionSide::Below).unwrap();
            assert_relative_eq!(c.fraction_of_emission, 0.5, epsilon = 1e-6);
        }
        assert!(collection_efficiency(&env, 690.0, 1.5, Orientation::Parallel, CollectionSide::Below).is_err());
    }

    #[test]
    fn spectral_average_identities() {
        let s = EmissionSpectrum::gaussian_1e_full_width(690.0, 110.0).unwrap();
        let grid: Vec<f64> = (0..=60).map(|i| 540.0 + 5.0 * i as f64).collect();
        let cm: Vec<f64> = grid.iter().map(|l| 1.0 + 0.001 * l).collect();
        let c2: Vec<f64> = cm.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(spectral_average_enhancement(&grid, &cm, &cm, &s).unwrap().enhancement, 1.0, epsilon = 1e-14);
        assert_relative_eq!(spectral_average_enhancement(&grid, &c2, &cm, &s).unwrap().enhancement, 2.0, epsilon = 1e-14);
        let narrow: Vec<f64> = (0..=20).map(|i| 640.0 + 5.0 * i as f64).collect();
        let c: Vec<f64> = narrow.iter().map(|_| 1.0).collect();
        assert!(matches!(spectral_average_enhancement(&narrow, &c, &c, &s), Err(Error::Coverage { .. })));
    }

    #[test]
    fn lifetime_purcell_extraction() {
        assert!((purcell_from_lifetimes(34.0, 11.2).unwrap() - 2.04).abs() < 0.01);
        assert_eq!(purcell_from_lifetimes(20.0, 20.0).unwrap(), 0.0);
        assert!((purcell_from_lifetimes(34.0, 6.7).unwrap() - 4.07).abs() < 0.01);
    }

    fn spacer_environment(spacer_nm: f64) -> DipoleEnvironment {
        let lower = LayerStack::from_films(
            Material::air(),
            [(Material::glass(), spacer_nm), (Material::silver(), 33.0)],
            Material::glass(),
        )
        .unwrap();
        let above = LayerStack::interface(Material::diamond(), Material::air());
        DipoleEnvironment::new(Material::diamond(), Some(Boundary::Stack(lower)), Some(Boundary::Stack(above)), 30.0, 15.0)
            .unwrap()
    }

    #[test]
    fn quenching_falls_with_spacer_thickness() {
        let fractions: Vec<f64> = [5.0, 20.0, 40.0, 60.0, 80.0, 100.0]
            .iter()
            .map(|&d| nonradiative_fraction(&spacer_environment(d), 690.0, Orientation::Parallel).unwrap())
            .collect();
        assert!(fractions.windows(2).all(|w| w[1] < w[0]), "{fractions:?}");
        assert!(fractions[3] < 0.10, "{fractions:?}");
    }

    #[test]
    fn isotropic_is_weighted_mean() {
        let env = spacer_environment(60.0);
        let r = decay_rates(&env, 650.0).unwrap();
        let iso = r.get(Orientation::Isotropic);
        assert!((iso - (2.0 * r.parallel + r.normal) / 3.0).abs() < 1e-12);
        assert!(iso >= r.parallel.min(r.normal) && iso <= r.parallel.max(r.normal));
    }

    #[test]
    fn collection_grows_with_aperture() {
        let below = LayerStack::interface(Material::air(), Material::glass());
        let env = DipoleEnvironment::above_boundary(Material::air(), Boundary::Stack(below), 0.0).unwrap();
        let mut last = 0.0;
        for na in [0.01, 0.2, 0.5, 0.75, 0.99, 1.01, 1.3, 1.46] {
            let c = collection_efficiency(&env, 690.0, na, Orientation::Isotropic, CollectionSide::Below).unwrap();
            assert!(c.relative_to_host >= last, "NA {na}");
            last = c.relative_to_host;
        }
        let small = collection_efficiency(&env, 690.0, 1e-3, Orientation::Isotropic, CollectionSide::Below).unwrap();
        assert!(small.relative_to_host < 1e-5);
        let c = collection_efficiency(&env, 690.0, 0.75, Orientation::Isotropic, CollectionSide::Below).unwrap();
        assert!((c.relative_to_host - 0.16).abs() < 0.02, "{c:?}");
    }

    #[test]
    fn distant_upper_mirror_leaves_rate_unchanged() {
        let cavity = PlanarCavity::diamond_slab(30.0, Orientation::Parallel);
        let wl: Vec<f64> = (0..=10).map(|i| 600.0 + 20.0 * i as f64).collect();
        for d0 in [5000.0, 8000.0] {
            for s in purcell_spectrum(&cavity, d0, &wl).unwrap() {
                assert!((s.with_cavity / s.mirror_only - 1.0).abs() < 0.05, "{d0} {s:?}");
            }
        }
    }

    #[test]
    fn rate_peak_sits_just_blue_of_airy_resonance() {
        let mut cavity = PlanarCavity::diamond_slab(30.0, Orientation::Parallel);
        cavity.crystal = None;
        let d0 = cavity.resonance_separations(690.0, 2).unwrap()[1];
        cavity.dipole_height_nm = 0.5 * d0;
        let wl: Vec<f64> = (0..=200).map(|i| 590.0 + i as f64).collect();
        let rates: Vec<f64> = purcell_spectrum(&cavity, d0, &wl).unwrap().iter().map(|s| s.with_cavity).collect();
        let peak = crate::cavity::find_peaks(&wl, &rates)[0].0;
        let mirrors = MirrorPair::plane_plane();
        let f = mirrors.mirror_data(690.0).unwrap().airy_finesse();
        // Airy linewidth in wavelength at optical order 2
        let linewidth = 690.0 / (2.0 * f);
        assert!(peak < 690.0 && 690.0 - peak < 2.0 * linewidth, "peak {peak} linewidth {linewidth}");
    }

    #[test]
    fn resonances_match_airy_transmission() {
        let mut cavity = PlanarCavity::diamond_slab(30.0, Orientation::Parallel);
        cavity.crystal = None;
        let gaps = cavity.resonance_separations(690.0, 3).unwrap();
        let mirrors = MirrorPair::plane_plane();
        let scan: Vec<f64> = (0..=12000).map(|i| 100.0 + 0.1 * i as f64).collect();
        let t = crate::cavity::transmission_spectrum(&mirrors, &crate::cavity::Scan::Length { wavelength_nm: 690.0, gaps_nm: scan.clone() })
            .unwrap();
        let y: Vec<f64> = t.iter().map(|s| s.transmission).collect();
        let peaks = crate::cavity::find_peaks(&scan, &y);
        for (g, p) in gaps.iter().zip(&peaks) {
            assert!((g - p.0).abs() < 0.5, "{g} vs {p:?}");
        }
    }

    #[test]
    fn slab_on_mirror_shortens_lifetime_against_free_space() {
        let above = LayerStack::interface(Material::diamond(), Material::air());
        let env = DipoleEnvironment::new(
            Material::diamond(),
            Some(Boundary::Stack(coatings::planar_mirror_thick_cap())),
            Some(Boundary::Stack(above)),
            155.0,
            80.0,
        )
        .unwrap();
        let vs_vacuum = decay_rates(&env, 690.0).unwrap().get(Orientation::Isotropic) * crate::material::DIAMOND_INDEX;
        assert!((vs_vacuum - 1.8).abs() < 0.5, "{vs_vacuum}");
    }

    #[test]
    fn tighter_tolerance_is_stable() {
        let cavity = PlanarCavity::diamond_slab(30.0, Orientation::Parallel);
        let env = cavity.environment(400.0, true).unwrap();
        let a = decay_rates_with_tolerance(&env, 690.0, 1e-6).unwrap();
        let b = decay_rates_with_tolerance(&env, 690.0, 1e-7).unwrap();
        assert!(((a.parallel - b.parallel) / b.parallel).abs() < 1e-4);
        assert!(((a.normal - b.normal) / b.normal).abs() < 1e-4);
    }

    #[test]
    fn minima_ignore_shallow_ripple() {
        let curve: Vec<LifetimePoint> = [1.0, 0.8, 1.1, 1.0999, 1.1, 0.95, 1.05, 1.049, 1.06]
            .iter()
            .enumerate()
            .map(|(i, &r)| LifetimePoint { d0_nm: 10.0 * i as f64, lifetime_ratio: r })
            .collect();
        let d: Vec<f64> = lifetime_minima(&curve, 0.005).iter().map(|p| p.d0_nm).collect();
        assert_eq!(d, vec![10.0, 50.0]);
        assert_eq!(lifetime_minima(&curve, 0.0).len(), 4);
    }

    #[test]
    fn lifetime_curve_limits() {
        let cavity = PlanarCavity::diamond_slab(30.0, Orientation::Parallel);
        let s = EmissionSpectrum::gaussian_1e_full_width(690.0, 110.0).unwrap();
        let grid: Vec<f64> = (0..=44).map(|i| 580.0 + 5.0 * i as f64).collect();
        let c = lifetime_curve(&cavity, &[105.0, 350.0, 5000.0, 6000.0], &grid, &s).unwrap();
        assert!(c[0].lifetime_ratio < 0.85, "{c:?}");
        assert!(c[1].lifetime_ratio > 1.05, "{c:?}");
        assert!(c[2..].iter().all(|p| (p.lifetime_ratio - 1.0).abs() < 0.05), "{c:?}");
        assert!(lifetime_curve(&cavity, &[300.0, 200.0], &grid, &s).is_err());
    }
}
