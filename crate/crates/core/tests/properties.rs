use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use nvcavity::cavity::{collection_beta, mode_volume, mode_waist, purcell_simple};
use nvcavity::dipole_ldos::{
    collection_efficiency, relative_decay_rate, Boundary, CollectionSide, DipoleEnvironment, Orientation,
};
use nvcavity::material::Material;
use nvcavity::multilayer::{coatings, LayerStack, OpticalLayer, Polarization};
use nvcavity::photostats::{excitation_intensity, G2Model, Histogram};
use nvcavity::waveguide::{solve_with, RootFinder};

fn polarization() -> impl Strategy<Value = Polarization> {
    prop_oneof![Just(Polarization::TE), Just(Polarization::TM)]
}

fn film() -> impl Strategy<Value = (Material, f64)> {
    let material = prop_oneof![
        Just(Material::silver()),
        Just(Material::glass()),
        Just(Material::diamond()),
        (1.0..3.0f64, 0.0..0.5f64).prop_map(|(n, k)| Material::constant("film", Complex64::new(n, k))),
    ];
    (material, 0.0..120.0f64)
}

fn lossless_film() -> impl Strategy<Value = (Material, f64)> {
    ((1.0..3.0f64).prop_map(|n| Material::real("film", n)), 0.0..400.0f64)
}

fn stack(films: Vec<(Material, f64)>) -> LayerStack {
    LayerStack::from_films(Material::air(), films, Material::glass()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn energy_is_conserved(
        films in prop::collection::vec(film(), 0..5),
        lambda in 500.0..800.0f64,
        angle_deg in 0.0..89.0f64,
        pol in polarization(),
    ) {
        let r = stack(films).response(lambda, angle_deg.to_radians(), pol).unwrap();
        prop_assert!(close(r.reflectivity + r.transmissivity + r.absorption, 1.0, 1e-9));
        for v in [r.reflectivity, r.transmissivity, r.absorption] {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!(r.reflection_phase > -PI && r.reflection_phase <= PI);
    }

    #[test]
    fn transmission_is_reciprocal(
        films in prop::collection::vec(film(), 1..4),
        lambda in 500.0..800.0f64,
        angle_deg in 0.0..80.0f64,
        pol in polarization(),
    ) {
        let forward = stack(films);
        let angle = angle_deg.to_radians();
        let glass_angle = (angle.sin() / Material::glass().index_at(lambda).unwrap().re).asin();
        let t_forward = forward.response(lambda, angle, pol).unwrap().transmissivity;
        let t_backward = forward.reversed().response(lambda, glass_angle, pol).unwrap().transmissivity;
        prop_assert!(close(t_forward, t_backward, 1e-9), "{} vs {}", t_forward, t_backward);
    }

    #[test]
    fn lossless_stacks_absorb_nothing(
        films in prop::collection::vec(lossless_film(), 0..6),
        lambda in 500.0..800.0f64,
        angle_deg in 0.0..89.0f64,
        pol in polarization(),
    ) {
        let r = stack(films).response(lambda, angle_deg.to_radians(), pol).unwrap();
        prop_assert!(r.absorption.abs() < 1e-12);
    }

    #[test]
    fn zero_thickness_layers_are_invisible(
        films in prop::collection::vec(film(), 1..4),
        insert_at in 0usize..4,
        extra in film(),
        lambda in 500.0..800.0f64,
        angle_deg in 0.0..89.0f64,
        pol in polarization(),
    ) {
        let mut padded = films.clone();
        padded.insert(insert_at.min(films.len()), (extra.0, 0.0));
        let a = stack(films).response(lambda, angle_deg.to_radians(), pol).unwrap();
        let b = stack(padded).response(lambda, angle_deg.to_radians(), pol).unwrap();
        prop_assert!(close(a.reflectivity, b.reflectivity, 1e-12));
        prop_assert!(close(a.transmissivity, b.transmissivity, 1e-12));
        prop_assert!(close(a.absorption, b.absorption, 1e-12));
        prop_assert!(close(a.reflection_phase, b.reflection_phase, 1e-12));
    }

    #[test]
    fn polarizations_agree_at_normal_incidence(
        films in prop::collection::vec(film(), 0..5),
        lambda in 500.0..800.0f64,
    ) {
        let s = stack(films);
        let te = s.response(lambda, 0.0, Polarization::TE).unwrap();
        let tm = s.response(lambda, 0.0, Polarization::TM).unwrap();
        prop_assert!(close(te.reflectivity, tm.reflectivity, 1e-12));
        prop_assert!(close(te.transmissivity, tm.transmissivity, 1e-12));
        prop_assert!(close(te.absorption, tm.absorption, 1e-12));
        let dphi = (te.reflection_phase - tm.reflection_phase).rem_euclid(2.0 * PI);
        prop_assert!(dphi < 1e-9 || 2.0 * PI - dphi < 1e-9);
    }

    #[test]
    fn waist_scales_with_geometry(r_c in 20.0..500.0f64, frac in 0.0001..0.9f64, lambda in 400.0..1000.0f64) {
        let d = frac * r_c * 1000.0;
        let w = mode_waist(r_c, d, lambda).unwrap();
        let w4 = mode_waist(4.0 * r_c, 4.0 * d, lambda).unwrap();
        prop_assert!(close(w4 / w, 2.0, 1e-12));
        let expected = (lambda * 1e-3 / PI * (r_c * d * 1e-3 - (d * 1e-3).powi(2)).sqrt()).sqrt();
        prop_assert!(close(w, expected, 1e-12 * expected));
    }

    #[test]
    fn mode_volume_scales_with_waist_and_length(w in 0.5..5.0f64, d in 100.0..5000.0f64, lambda in 400.0..1000.0f64) {
        let v = mode_volume(w, d, lambda).unwrap();
        let v2 = mode_volume(2.0 * w, d, lambda).unwrap();
        let v3 = mode_volume(w, 3.0 * d, lambda).unwrap();
        prop_assert!(close(v2.cubic_um / v.cubic_um, 4.0, 1e-12));
        prop_assert!(close(v3.cubic_um / v.cubic_um, 3.0, 1e-12));
        prop_assert!(close(v.cubic_wavelengths, v.cubic_um / (lambda * 1e-3).powi(3), 1e-12 * v.cubic_wavelengths));
    }

    #[test]
    fn purcell_is_monotone(
        q_c in 1.0..1e5f64,
        q_em in 1.0..1e3f64,
        v in 0.1..100.0f64,
        factor in 1.01..10.0f64,
    ) {
        let base = purcell_simple(1.0, q_c, q_em, v).unwrap().c_eff;
        prop_assert!(purcell_simple(1.0, q_c * factor, q_em, v).unwrap().c_eff > base);
        prop_assert!(purcell_simple(1.0, q_c, q_em * factor, v).unwrap().c_eff > base);
        prop_assert!(purcell_simple(1.0, q_c, q_em, v * factor).unwrap().c_eff < base);
    }

    #[test]
    fn beta_increases_inside_unit_interval(c in 1e-6..1e6f64, factor in 1.001..100.0f64) {
        let b = collection_beta(c).unwrap();
        let b2 = collection_beta(c * factor).unwrap();
        prop_assert!(b > 0.0 && b < 1.0);
        prop_assert!(b2 > b);
    }

    #[test]
    fn g2_is_even_and_non_negative(
        p in 0.0..=1.0f64,
        b in 0.0..5.0f64,
        tau1 in 0.5..50.0f64,
        slower in 1.0..100.0f64,
        tau in 0.0..5000.0f64,
    ) {
        let m = G2Model::new(p, b, tau1, tau1 * slower).unwrap();
        prop_assert_eq!(m.eval(tau), m.eval(-tau));
        prop_assert!(m.eval(tau) >= 0.0);
        prop_assert_eq!(m.eval(0.0), 1.0 - p);
        prop_assert_eq!(m.at_zero(), 1.0 - p);
    }

    #[test]
    fn rebinning_conserves_counts(
        counts in prop::collection::vec(0u64..100_000, 1..300),
        start in -50.0..50.0f64,
        width in 0.01..10.0f64,
    ) {
        let edges: Vec<f64> = (0..=counts.len()).map(|i| start + width * i as f64).collect();
        let h = Histogram::new(edges.clone(), counts.clone()).unwrap();
        let r = h.rebin_pairs();
        prop_assert_eq!(r.total(), h.total());
        prop_assert_eq!(r.counts.len(), counts.len().div_ceil(2));
        prop_assert_eq!(r.edges_ns.len(), r.counts.len() + 1);
        prop_assert_eq!(r.edges_ns[0], edges[0]);
        prop_assert_eq!(*r.edges_ns.last().unwrap(), *edges.last().unwrap());
        prop_assert!(Histogram::new(r.edges_ns.clone(), r.counts.clone()).is_ok());
    }

    #[test]
    fn excitation_intensity_scaling(
        power in 1e-7..1e-2f64,
        waist in 0.2..10.0f64,
        transmission in 0.01..=1.0f64,
        k in 0.1..10.0f64,
    ) {
        let i = excitation_intensity(power, waist, transmission).unwrap();
        let ip = excitation_intensity(k * power, waist, transmission).unwrap();
        let iw = excitation_intensity(power, k * waist, transmission).unwrap();
        prop_assert!(close(ip / i, k, 1e-12 * k));
        prop_assert!(close(iw * k * k / i, 1.0, 1e-12));
    }

    #[test]
    fn slab_mode_is_guided_and_consistent(b in 10.0..400.0f64, n in 1.3..3.5f64, lambda in 400.0..1000.0f64) {
        let brent = solve_with(b, n, lambda, RootFinder::Brent).unwrap();
        let bisect = solve_with(b, n, lambda, RootFinder::Bisection).unwrap();
        prop_assert!(brent.effective_index > 1.0 && brent.effective_index < n);
        prop_assert!(brent.dispersion_residual().abs() < 1e-10);
        prop_assert!(close(brent.effective_index, bisect.effective_index, 1e-9));
        let (inside, outside) = (brent.field(b * (1.0 - 1e-12)), brent.field(b * (1.0 + 1e-12)));
        prop_assert!(close(inside, outside, 1e-8 * brent.field(0.0).abs()));
        let wider = solve_with(b * 1.1, n, lambda, RootFinder::Brent).unwrap();
        prop_assert!(wider.effective_index > brent.effective_index);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ideal_mirror_matches_closed_form(z in 10.0..2000.0f64, lambda in 500.0..800.0f64) {
        let env = DipoleEnvironment::above_boundary(Material::vacuum(), Boundary::PerfectConductor, z).unwrap();
        let rates = relative_decay_rate(&env, lambda).unwrap().total;
        let x = 4.0 * PI * z / lambda;
        let (s, c) = x.sin_cos();
        let parallel = 1.0 - 1.5 * (s / x + c / (x * x) - s / (x * x * x));
        let normal = 1.0 + 3.0 * (s / (x * x * x) - c / (x * x));
        prop_assert!(close(rates.parallel, parallel, 1e-6));
        prop_assert!(close(rates.normal, normal, 1e-6));
    }

    #[test]
    fn isotropic_average_is_bracketed(z in 5.0..1500.0f64, lambda in 550.0..800.0f64) {
        let env = DipoleEnvironment::above_boundary(Material::air(), Boundary::Stack(coatings::planar_mirror()), z).unwrap();
        let total = relative_decay_rate(&env, lambda).unwrap().total;
        let iso = total.get(Orientation::Isotropic);
        prop_assert!(close(iso, (2.0 * total.parallel + total.normal) / 3.0, 1e-12 * iso.abs().max(1.0)));
        prop_assert!(iso >= total.parallel.min(total.normal) && iso <= total.parallel.max(total.normal));
    }

    #[test]
    fn homogeneous_host_rate_is_one(n in 1.0..3.0f64, lambda in 400.0..1000.0f64) {
        let env = DipoleEnvironment::homogeneous(Material::real("host", n));
        let total = relative_decay_rate(&env, lambda).unwrap().total;
        prop_assert!(close(total.parallel, 1.0, 1e-12));
        prop_assert!(close(total.normal, 1.0, 1e-12));
    }

    #[test]
    fn collection_grows_with_aperture(z in 0.0..500.0f64, na in 0.05..0.95f64, dna in 0.01..0.4f64) {
        let interface = LayerStack::new(vec![OpticalLayer::half_space(Material::air()), OpticalLayer::half_space(Material::glass())]).unwrap();
        let env = DipoleEnvironment::above_boundary(Material::air(), Boundary::Stack(interface), z).unwrap();
        let wider = (na + dna).min(1.4);
        let a = collection_efficiency(&env, 690.0, na, Orientation::Isotropic, CollectionSide::Below).unwrap();
        let b = collection_efficiency(&env, 690.0, wider, Orientation::Isotropic, CollectionSide::Below).unwrap();
        prop_assert!(b.relative_to_host >= a.relative_to_host - 1e-9);
        prop_assert!(a.fraction_of_emission >= 0.0 && b.fraction_of_emission <= 1.0);
    }
}
