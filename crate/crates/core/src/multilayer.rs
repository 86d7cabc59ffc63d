//! Planar multilayer optics.
//!
//! A [`LayerStack`] runs from an incident half-space through any number of
//! finite films to an exit half-space. Amplitudes are computed with an
//! Airy-type recursion from the exit side, which stays finite for
//! evanescent and strongly absorbing layers where a characteristic-matrix
//! product would overflow.
//!
//! Conventions: time dependence `exp(-i omega t)`, absorbing media have
//! `Im n >= 0`, and the normal wavevector component `kz` is taken with
//! `Im kz >= 0` (decaying away from each interface). TE amplitudes refer to
//! the electric field, TM amplitudes to the magnetic field. The reflection
//! coefficient in [`StackResponse`] is the tangential electric field ratio for
//! both polarizations, so the two coincide at normal incidence.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::Material;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarization {
    /// Electric field parallel to the interfaces (s).
    TE,
    /// Magnetic field parallel to the interfaces (p).
    TM,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::TE, Polarization::TM];
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalLayer {
    pub material: Material,
    /// Thickness in nm, `f64::INFINITY` for the bounding half-spaces.
    pub thickness_nm: f64,
}

impl OpticalLayer {
    pub fn new(material: Material, thickness_nm: f64) -> Self {
        Self { material, thickness_nm }
    }

    pub fn half_space(material: Material) -> Self {
        Self { material, thickness_nm: f64::INFINITY }
    }
}

/// Ordered layers from the incident side to the exit side.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<OpticalLayer>,
}

impl LayerStack {
    /// Validates that exactly the outer two layers are half-spaces and all
    /// films have finite, non-negative thickness.
    pub fn new(layers: Vec<OpticalLayer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidStack("a stack needs two bounding half-spaces".into()));
        }
        let last = layers.len() - 1;
        for (i, layer) in layers.iter().enumerate() {
            let outer = i == 0 || i == last;
            let t = layer.thickness_nm;
            if outer && t != f64::INFINITY {
                return Err(Error::InvalidStack(format!("layer {i} must be a half-space (infinite thickness)")));
            }
            if !outer && !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidStack(format!("layer {i} has invalid thickness {t} nm")));
            }
        }
        Ok(Self { layers })
    }

    /// Builds `incident | films... | exit` from `(material, thickness_nm)` pairs.
    pub fn from_films(incident: Material, films: impl IntoIterator<Item = (Material, f64)>, exit: Material) -> Result<Self> {
        let mut layers = vec![OpticalLayer::half_space(incident)];
        layers.extend(films.into_iter().map(|(m, t)| OpticalLayer::new(m, t)));
        layers.push(OpticalLayer::half_space(exit));
        Self::new(layers)
    }

    /// A single interface between two half-spaces.
    pub fn interface(incident: Material, exit: Material) -> Self {
        Self { layers: vec![OpticalLayer::half_space(incident), OpticalLayer::half_space(exit)] }
    }

    pub fn layers(&self) -> &[OpticalLayer] {
        &self.layers
    }

    pub fn incident(&self) -> &Material {
        &self.layers[0].material
    }

    pub fn exit(&self) -> &Material {
        &self.layers[self.layers.len() - 1].material
    }

    /// Finite films between the half-spaces.
    pub fn films(&self) -> &[OpticalLayer] {
        &self.layers[1..self.layers.len() - 1]
    }

    /// The same stack traversed from the exit side.
    pub fn reversed(&self) -> Self {
        let mut layers = self.layers.clone();
        layers.reverse();
        Self { layers }
    }

    /// Replaces the incident half-space material.
    pub fn with_incident(&self, material: Material) -> Self {
        let mut layers = self.layers.clone();
        layers[0].material = material;
        Self { layers }
    }

    /// Total film thickness in nm.
    pub fn film_thickness_nm(&self) -> f64 {
        self.films().iter().map(|l| l.thickness_nm).sum()
    }

    /// Looks up all indices at one wavelength. Zero-thickness films are dropped.
    pub fn resolve(&self, wavelength_nm: f64) -> Result<ResolvedStack> {
        if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
            return Err(Error::Domain(format!("wavelength must be positive, got {wavelength_nm} nm")));
        }
        let mut eps = Vec::with_capacity(self.layers.len());
        let mut thickness_nm = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let interior = i != 0 && i != self.layers.len() - 1;
            if interior && layer.thickness_nm == 0.0 {
                continue;
            }
            let n = layer.material.index_at(wavelength_nm)?;
            eps.push(n * n);
            thickness_nm.push(if interior { layer.thickness_nm } else { 0.0 });
        }
        Ok(ResolvedStack { wavelength_nm, eps, thickness_nm })
    }

    pub fn response(&self, wavelength_nm: f64, angle_rad: f64, polarization: Polarization) -> Result<StackResponse> {
        self.resolve(wavelength_nm)?.response(angle_rad, polarization)
    }
}

/// Reflectivity, transmissivity, absorption and reflection phase of a stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StackResponse {
    pub reflectivity: f64,
    pub transmissivity: f64,
    pub absorption: f64,
    /// `arg r` of the tangential electric field, in (-pi, pi].
    pub reflection_phase: f64,
}

/// Response of `stack` at the given wavelength, incidence angle (in the
/// incident medium) and polarization.
pub fn stack_response(
    stack: &LayerStack,
    wavelength_nm: f64,
    angle_rad: f64,
    polarization: Polarization,
) -> Result<StackResponse> {
    stack.response(wavelength_nm, angle_rad, polarization)
}

/// Complex amplitudes for one in-plane wavevector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitudes {
    /// Reflection coefficient (E field for TE, H field for TM).
    pub r: Complex64,
    /// Transmission coefficient into the exit half-space, same field as `r`.
    pub t: Complex64,
    /// Admittance of the incident half-space (`kz/k0`, divided by `eps` for TM).
    pub q_in: Complex64,
    /// Admittance of the exit half-space.
    pub q_out: Complex64,
}

impl Amplitudes {
    /// Power transmitted into the exit half-space per unit incident flux
    /// normalization `Re(q_in)`.
    pub fn transmitted_flux(&self) -> f64 {
        self.q_out.re * self.t.norm_sqr()
    }

    /// Net power absorbed in the films, in the same units as
    /// [`transmitted_flux`](Self::transmitted_flux). Valid for evanescent
    /// incidence too, where the incident and reflected waves carry flux only
    /// through their interference term.
    pub fn absorbed_flux(&self) -> f64 {
        self.q_in.re * (1.0 - self.r.norm_sqr()) + 2.0 * self.q_in.im * self.r.im - self.transmitted_flux()
    }
}

/// A stack with its permittivities evaluated at one wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedStack {
    wavelength_nm: f64,
    eps: Vec<Complex64>,
    thickness_nm: Vec<f64>,
}

/// Normal wavevector component over `k0`, on the decaying branch.
pub fn normal_component(eps: Complex64, kx: Complex64) -> Complex64 {
    let kz = (eps - kx * kx).sqrt();
    if kz.im < 0.0 || (kz.im == 0.0 && kz.re < 0.0) {
        -kz
    } else {
        kz
    }
}

impl ResolvedStack {
    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn permittivities(&self) -> &[Complex64] {
        &self.eps
    }

    pub fn incident_index(&self) -> Complex64 {
        self.eps[0].sqrt()
    }

    pub fn exit_index(&self) -> Complex64 {
        self.eps[self.eps.len() - 1].sqrt()
    }

    /// Amplitudes for in-plane wavevector `kx` in units of `k0`. Complex
    /// `kx` is allowed for contour integration.
    pub fn amplitudes(&self, kx: Complex64, polarization: Polarization) -> Amplitudes {
        let k0 = 2.0 * PI / self.wavelength_nm;
        let admittance = |eps: Complex64| {
            let kz = normal_component(eps, kx);
            match polarization {
                Polarization::TE => (kz, kz),
                Polarization::TM => (kz / eps, kz),
            }
        };
        let n = self.eps.len();
        let (mut q_next, mut kz_next) = admittance(self.eps[n - 1]);
        let q_out = q_next;
        let mut r = Complex64::new(0.0, 0.0);
        let mut t = Complex64::new(1.0, 0.0);
        let mut d_next = 0.0;
        for j in (0..n - 1).rev() {
            let (q, kz) = admittance(self.eps[j]);
            let phase = (Complex64::i() * k0 * kz_next * d_next).exp();
            let sum = q + q_next;
            let r_ij = (q - q_next) / sum;
            let t_ij = 2.0 * q / sum;
            let rp2 = r * phase * phase;
            let denom = 1.0 + r_ij * rp2;
            t = t_ij * t * phase / denom;
            r = (r_ij + rp2) / denom;
            q_next = q;
            kz_next = kz;
            d_next = self.thickness_nm[j];
        }
        Amplitudes { r, t, q_in: q_next, q_out }
    }

    /// Plane-wave response at incidence angle `angle_rad` from the first medium.
    pub fn response(&self, angle_rad: f64, polarization: Polarization) -> Result<StackResponse> {
        if !(0.0..PI / 2.0).contains(&angle_rad) {
            return Err(Error::Domain(format!("incidence angle {angle_rad} rad outside [0, pi/2)")));
        }
        let n0 = self.incident_index();
        if n0.im != 0.0 {
            return Err(Error::InvalidStack("incident medium must be non-absorbing".into()));
        }
        let kx = Complex64::new(n0.re * angle_rad.sin(), 0.0);
        let amp = self.amplitudes(kx, polarization);
        let r_tangential = match polarization {
            Polarization::TE => amp.r,
            Polarization::TM => -amp.r,
        };
        let reflectivity = amp.r.norm_sqr();
        let transmissivity = amp.transmitted_flux() / amp.q_in.re;
        let absorption = (1.0 - reflectivity - transmissivity).max(0.0);
        let mut reflection_phase = r_tangential.arg();
        if reflection_phase <= -PI {
            reflection_phase = PI;
        }
        Ok(StackResponse { reflectivity, transmissivity, absorption, reflection_phase })
    }
}

/// Mirror losses of a two-mirror resonator, all as power fractions.
/// Mirror 1 is the outcoupling mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub transmission_1: f64,
    pub transmission_2: f64,
    pub absorption_1: f64,
    pub absorption_2: f64,
    #[serde(default)]
    pub scattering: f64,
}

impl LossBudget {
    pub fn new(transmission_1: f64, transmission_2: f64, absorption_1: f64, absorption_2: f64) -> Self {
        Self { transmission_1, transmission_2, absorption_1, absorption_2, scattering: 0.0 }
    }

    pub fn with_scattering(self, scattering: f64) -> Self {
        Self { scattering, ..self }
    }

    /// Budget from the responses of the outcoupling mirror and the back mirror.
    pub fn from_responses(outcoupler: &StackResponse, back: &StackResponse) -> Self {
        Self::new(outcoupler.transmissivity, back.transmissivity, outcoupler.absorption, back.absorption)
    }

    pub fn total(&self) -> f64 {
        self.transmission_1 + self.transmission_2 + self.absorption_1 + self.absorption_2 + self.scattering
    }

    fn validate(&self) -> Result<f64> {
        let parts = [self.transmission_1, self.transmission_2, self.absorption_1, self.absorption_2, self.scattering];
        if let Some(bad) = parts.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Error::Domain(format!("loss fraction {bad} outside [0, 1)")));
        }
        let total = self.total();
        if total == 0.0 {
            return Err(Error::ZeroLoss);
        }
        Ok(total)
    }
}

/// Low-loss finesse `2 pi / (T1 + T2 + A1 + A2 + S)`.
pub fn finesse_from_losses(budget: &LossBudget) -> Result<f64> {
    let total = budget.validate()?;
    if total >= 1.0 {
        return Err(Error::ModelValidity { total });
    }
    Ok(2.0 * PI / total)
}

/// Fraction of intracavity loss leaving through mirror 1.
pub fn outcoupling_efficiency(budget: &LossBudget) -> Result<f64> {
    let total = budget.validate()?;
    Ok(budget.transmission_1 / total)
}

/// The mirror coatings of the fiber cavity, seen from the air gap.
pub mod coatings {
    use super::*;

    /// Glass cap thickness of the standard coatings.
    pub const CAP_NM: f64 = 20.0;
    /// Thicker cap of the large mirror in the plane-plane cavity.
    pub const THICK_CAP_NM: f64 = 60.0;
    pub const PLANAR_SILVER_NM: f64 = 33.0;
    pub const FIBER_SILVER_NM: f64 = 60.0;

    fn coating(cap_nm: f64, silver_nm: f64) -> LayerStack {
        LayerStack::from_films(
            Material::air(),
            [(Material::glass(), cap_nm), (Material::silver(), silver_nm)],
            Material::glass(),
        )
        .expect("coating layers are valid")
    }

    /// Large planar mirror (outcoupling side): 33 nm silver, 20 nm cap.
    pub fn planar_mirror() -> LayerStack {
        coating(CAP_NM, PLANAR_SILVER_NM)
    }

    /// Fiber-tip mirror: 60 nm silver, 20 nm cap.
    pub fn fiber_mirror() -> LayerStack {
        coating(CAP_NM, FIBER_SILVER_NM)
    }

    /// Large mirror of the plane-plane cavity: 33 nm silver, 60 nm cap.
    pub fn planar_mirror_thick_cap() -> LayerStack {
        coating(THICK_CAP_NM, PLANAR_SILVER_NM)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fresnel_te(n1: f64, n2: f64, theta: f64) -> (f64, f64) {
        let cos_t = (1.0 - (n1 / n2 * theta.sin()).powi(2)).sqrt();
        let a = n1 * theta.cos();
        let b = n2 * cos_t;
        let r = (a - b) / (a + b);
        let t = 2.0 * a / (a + b);
        (r * r, b / a * t * t)
    }

    fn fresnel_tm(n1: f64, n2: f64, theta: f64) -> (f64, f64) {
        let cos_t = (1.0 - (n1 / n2 * theta.sin()).powi(2)).sqrt();
        let a = n2 * theta.cos();
        let b = n1 * cos_t;
        let r = (a - b) / (a + b);
        let t = 2.0 * n1 * theta.cos() / (a + b);
        (r * r, n2 * cos_t / (n1 * theta.cos()) * t * t)
    }

    #[test]
    fn single_interface_matches_fresnel() {
        let stack = LayerStack::interface(Material::vacuum(), Material::real("g", 1.5));
        let resp = stack.response(633.0, 0.0, Polarization::TE).unwrap();
        assert_relative_eq!(resp.reflectivity, 0.04, epsilon = 1e-14);
        assert_relative_eq!(resp.transmissivity, 0.96, epsilon = 1e-14);
        assert!(resp.absorption < 1e-15);
        assert_relative_eq!(resp.reflection_phase, PI, epsilon = 1e-15);
        for deg in [10.0_f64, 35.0, 56.3, 80.0] {
            let th = deg.to_radians();
            let te = stack.response(633.0, th, Polarization::TE).unwrap();
            let tm = stack.response(633.0, th, Polarization::TM).unwrap();
            let (r_s, t_s) = fresnel_te(1.0, 1.5, th);
            let (r_p, t_p) = fresnel_tm(1.0, 1.5, th);
            assert_relative_eq!(te.reflectivity, r_s, epsilon = 1e-13);
            assert_relative_eq!(te.transmissivity, t_s, epsilon = 1e-13);
            assert_relative_eq!(tm.reflectivity, r_p, epsilon = 1e-13);
            assert_relative_eq!(tm.transmissivity, t_p, epsilon = 1e-13);
        }
    }

    #[test]
    fn empty_stack_is_transparent() {
        let stack = LayerStack::interface(Material::vacuum(), Material::vacuum());
        let resp = stack.response(700.0, 0.3, Polarization::TM).unwrap();
        assert_eq!(resp.reflectivity, 0.0);
        assert_relative_eq!(resp.transmissivity, 1.0, epsilon = 1e-15);
        assert_eq!(resp.absorption, 0.0);
    }

    #[test]
    fn quarter_wave_antireflection() {
        let ns = 2.25_f64;
        let nc = ns.sqrt();
        let lam = 600.0;
        let stack =
            LayerStack::from_films(Material::vacuum(), [(Material::real("c", nc), lam / (4.0 * nc))], Material::real("s", ns))
                .unwrap();
        let resp = stack.response(lam, 0.0, Polarization::TE).unwrap();
        assert!(resp.reflectivity < 1e-28);
    }

    #[test]
    fn absorbing_film_matches_characteristic_matrix() {
        // independent 2x2 characteristic-matrix evaluation at normal incidence
        let n = [Complex64::new(1.0, 0.0), Complex64::new(1.46, 0.0), Complex64::new(0.15, 4.4), Complex64::new(1.46, 0.0)];
        let d = [20.0, 33.0];
        let lam = 700.0;
        let k0 = 2.0 * PI / lam;
        let mut m = [[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]];
        for (nj, dj) in n[1..3].iter().zip(d) {
            let delta = k0 * nj * dj;
            let l = [[delta.cos(), -Complex64::i() * delta.sin() / nj], [-Complex64::i() * nj * delta.sin(), delta.cos()]];
            m = [
                [m[0][0] * l[0][0] + m[0][1] * l[1][0], m[0][0] * l[0][1] + m[0][1] * l[1][1]],
                [m[1][0] * l[0][0] + m[1][1] * l[1][0], m[1][0] * l[0][1] + m[1][1] * l[1][1]],
            ];
        }
        let b = m[0][0] + m[0][1] * n[3];
        let c = m[1][0] + m[1][1] * n[3];
        let r = (n[0] * b - c) / (n[0] * b + c);
        let t = 2.0 * n[0] / (n[0] * b + c);

        let stack = LayerStack::from_films(
            Material::vacuum(),
            [(Material::glass(), 20.0), (Material::constant("m", n[2]), 33.0)],
            Material::glass(),
        )
        .unwrap();
        let resp = stack.response(lam, 0.0, Polarization::TE).unwrap();
        assert_relative_eq!(resp.reflectivity, r.norm_sqr(), epsilon = 1e-12);
        assert_relative_eq!(resp.transmissivity, 1.46 * t.norm_sqr(), epsilon = 1e-12);
        assert_relative_eq!(resp.reflection_phase, r.arg(), epsilon = 1e-12);
    }

    #[test]
    fn evanescent_layers_do_not_overflow() {
        let stack = LayerStack::from_films(
            Material::real("hi", 2.4),
            [(Material::vacuum(), 5000.0), (Material::constant("m", Complex64::new(0.1, 4.5)), 500.0)],
            Material::real("hi", 2.4),
        )
        .unwrap();
        let resp = stack.response(700.0, 1.2, Polarization::TM).unwrap();
        assert!(resp.reflectivity.is_finite());
        assert_relative_eq!(resp.reflectivity, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_thickness_films_vanish() {
        let a = coatings::planar_mirror();
        let mut layers = a.layers().to_vec();
        layers.insert(2, OpticalLayer::new(Material::diamond(), 0.0));
        let b = LayerStack::new(layers).unwrap();
        for pol in Polarization::BOTH {
            let ra = a.response(650.0, 0.4, pol).unwrap();
            let rb = b.response(650.0, 0.4, pol).unwrap();
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn invalid_stacks_rejected() {
        assert!(LayerStack::new(vec![OpticalLayer::half_space(Material::air())]).is_err());
        assert!(LayerStack::new(vec![OpticalLayer::new(Material::air(), 10.0), OpticalLayer::half_space(Material::air())]).is_err());
        assert!(LayerStack::from_films(Material::air(), [(Material::glass(), -1.0)], Material::air()).is_err());
        assert!(LayerStack::from_films(Material::air(), [(Material::glass(), f64::INFINITY)], Material::air()).is_err());
        assert!(matches!(
            coatings::planar_mirror().response(2000.0, 0.0, Polarization::TE),
            Err(Error::WavelengthOutOfRange { .. })
        ));
    }

    #[test]
    fn loss_budget_formulas() {
        let b = LossBudget::new(0.08, 0.008, 0.04, 0.03);
        assert_relative_eq!(finesse_from_losses(&b).unwrap(), 2.0 * PI / 0.158, epsilon = 1e-12);
        assert_relative_eq!(outcoupling_efficiency(&b).unwrap(), 0.08 / 0.158, epsilon = 1e-12);
        assert_eq!(outcoupling_efficiency(&LossBudget::new(0.3, 0.0, 0.0, 0.0)).unwrap(), 1.0);
        assert_eq!(finesse_from_losses(&LossBudget::new(0.0, 0.0, 0.0, 0.0)), Err(Error::ZeroLoss));
        assert_eq!(outcoupling_efficiency(&LossBudget::new(0.0, 0.0, 0.0, 0.0)), Err(Error::ZeroLoss));
        assert!(matches!(
            finesse_from_losses(&LossBudget::new(0.5, 0.3, 0.2, 0.1)),
            Err(Error::ModelValidity { .. })
        ));
        assert!(finesse_from_losses(&LossBudget::new(1.2, 0.0, 0.0, 0.0)).is_err());
    }
}
