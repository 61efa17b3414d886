use std::f64::consts::{FRAC_PI_4, PI};

use deflect_core::config::RunConfig;
use deflect_core::observables::*;
use deflect_core::pumping::{AtomicStructure, BeamParameters};
use deflect_core::spin::{
    natural_to_laser, rotate_density, DensityMatrix, EulerAngles, Frame, IncidentDirection, PolarisationMode,
};
use deflect_core::Error;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn beam() -> BeamParameters {
    RunConfig::default().mean_deflection_beam().unwrap()
}

fn axial() -> IncidentDirection {
    IncidentDirection::new("axial", [0.0, 0.0, -1.0])
}

fn sets(structure: &AtomicStructure, dir: &IncidentDirection) -> Vec<DeflectionParameterSet> {
    PolarisationMode::PURE
        .iter()
        .map(|&m| DParamCache::global().get_or_compute(m, dir, structure, &beam(), 1.0).unwrap())
        .collect()
}

fn set(sets: &[DeflectionParameterSet], mode: PolarisationMode) -> &DeflectionParameterSet {
    sets.iter().find(|s| s.mode == mode).unwrap()
}

fn random_density(rng: &mut impl Rng, f: u32, frame: Frame) -> DensityMatrix {
    let d = (2 * f + 1) as usize;
    let a = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    DensityMatrix::from_unnormalised(f, &m, frame).unwrap()
}

fn random_diagonal(rng: &mut impl Rng, f: u32, frame: Frame) -> DensityMatrix {
    let d = (2 * f + 1) as usize;
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    let m = DMatrix::from_fn(d, d, |i, j| if i == j { Complex64::new(w[i], 0.0) } else { Complex64::new(0.0, 0.0) });
    DensityMatrix::from_unnormalised(f, &m, frame).unwrap()
}

#[test]
fn circular_modes_mirror_each_other() {
    let s = AtomicStructure::sodium_d2();
    let all = sets(&s, &axial());
    let (p, m) = (set(&all, PolarisationMode::SigmaPlus), set(&all, PolarisationMode::SigmaMinus));
    for g in -2..=2 {
        assert!((m.d(g) - p.d(-g)).abs() < 1e-9, "g={g}: {} vs {}", m.d(g), p.d(-g));
    }
}

#[test]
fn linear_modes_share_parameters_and_are_symmetric() {
    let s = AtomicStructure::sodium_d2();
    let all = sets(&s, &axial());
    let pi0 = set(&all, PolarisationMode::Pi0);
    for mode in [PolarisationMode::Pi45, PolarisationMode::Pi90, PolarisationMode::Pi135] {
        assert_eq!(set(&all, mode).d_values, pi0.d_values);
    }
    for g in 1..=2 {
        assert!((pi0.d(g) - pi0.d(-g)).abs() < 1e-9);
    }
}

#[test]
fn no_interaction_no_momentum() {
    let s = AtomicStructure::sodium_d2();
    let b = BeamParameters {
        interaction_time: 0.0,
        ..beam()
    };
    for mode in PolarisationMode::PURE {
        let d = compute_deflection_parameters(mode, &axial(), &s, &b, 1.0).unwrap();
        assert!(d.d_values.iter().all(|v| *v == 0.0));
        assert!(d.retained.iter().all(|r| (r - 1.0).abs() < 1e-12));
    }
    let sp = compute_deflection_parameters(PolarisationMode::SigmaPlus, &axial(), &s, &b, 1.0).unwrap();
    let k = k_coefficients(&sp).unwrap();
    assert_eq!((k.k1, k.k2), (0.0, 0.0));
    assert!(matches!(l_perp_from_measurement(0.0, k.k2), Err(Error::Conditioning(_))));
}

#[test]
fn stretched_sublevel_deflects_most_on_closed_transition() {
    let s = AtomicStructure::sodium_d2().with_closed_transition(2, 3);
    let d = compute_deflection_parameters(PolarisationMode::SigmaPlus, &axial(), &s, &beam(), 1.0).unwrap();
    for g in -2..2 {
        assert!(d.d(2) > d.d(g), "D22 = {} not above D{g}{g} = {}", d.d(2), d.d(g));
    }
    // closed two-level limit: the stretched atom scatters at the saturated
    // rate Ω²/4 / (δ² + 1/4 + Ω²/2), after the transient
    let rate = 0.25 / (0.25 + 0.5);
    assert!((d.d(2) / (rate * beam().interaction_time) - 1.0).abs() < 0.05);
    assert!(d.retained.iter().all(|r| (r - 1.0).abs() < 1e-9));
}

#[test]
fn linear_model_matches_propagation_for_diagonal_states() {
    let s = AtomicStructure::sodium_d2();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mode in [PolarisationMode::SigmaPlus, PolarisationMode::Pi0] {
        let dset = compute_deflection_parameters(mode, &axial(), &s, &beam(), 1.0).unwrap();
        for _ in 0..3 {
            let rho = random_diagonal(&mut rng, 2, Frame::Laser);
            let c = compare_with_propagation(&rho, &dset, &s, &beam()).unwrap();
            assert!(c.deviation() < 1e-6, "{mode}: {c:?}");
        }
    }
}

#[test]
fn coherences_are_invisible_to_circular_light() {
    // σ light conserves m in its own frame, so laser-frame coherences do not
    // change the momentum
    let s = AtomicStructure::sodium_d2();
    let dset = compute_deflection_parameters(PolarisationMode::SigmaPlus, &axial(), &s, &beam(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rho = random_density(&mut rng, 2, Frame::Laser);
    let c = compare_with_propagation(&rho, &dset, &s, &beam()).unwrap();
    assert!(c.deviation() < 1e-6, "{c:?}");
}

#[test]
fn coherent_linear_deviation_is_reported() {
    let s = AtomicStructure::sodium_d2();
    let dset = compute_deflection_parameters(PolarisationMode::Pi0, &axial(), &s, &beam(), 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rho = random_density(&mut rng, 2, Frame::Laser);
    let c = compare_with_propagation(&rho, &dset, &s, &beam()).unwrap();
    println!(
        "linear light, coherent state: model {:.6} propagation {:.6} deviation {:.3e}",
        c.linear_model,
        c.full_propagation,
        c.deviation()
    );
    assert!(c.deviation().is_finite());
}

#[test]
fn frame_and_manifold_are_checked() {
    let s = AtomicStructure::sodium_d2();
    let all = sets(&s, &axial());
    let natural = DensityMatrix::maximally_mixed(2, Frame::Natural);
    assert!(deflected_momentum(&natural, &all[0]).is_err());
    let wrong_f = DensityMatrix::maximally_mixed(1, Frame::Laser);
    assert!(deflected_momentum(&wrong_f, &all[0]).is_err());
    let laser = DensityMatrix::maximally_mixed(2, Frame::Laser);
    assert!(shape_from_density(&laser).is_err());
    assert!(k_coefficients(set(&all, PolarisationMode::Pi0)).is_err());
    assert!(coherence_coefficient(set(&all, PolarisationMode::SigmaPlus)).is_err());
}

#[test]
fn maximally_mixed_state_sees_the_mean() {
    let s = AtomicStructure::sodium_d2();
    for d in sets(&s, &axial()) {
        let rho = DensityMatrix::maximally_mixed(2, Frame::Laser);
        let mean = d.d_values.iter().sum::<f64>() / 5.0;
        assert!((deflected_momentum(&rho, &d).unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn expansions_match_simulated_measurements() {
    let s = AtomicStructure::sodium_d2();
    let dir = axial();
    let all = sets(&s, &dir);
    let k = k_coefficients(set(&all, PolarisationMode::SigmaPlus)).unwrap();
    let ka = alignment_coefficients(set(&all, PolarisationMode::Pi0)).unwrap();
    let kg = coherence_coefficient(set(&all, PolarisationMode::Pi0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let rho = random_density(&mut rng, 2, Frame::Natural);
        let p = measure_momenta(&rho, &dir, &all).unwrap();
        assert!((p.orientation() - orientation_expansion(&rho, &k).unwrap()).abs() < 1e-9);
        assert!((p.alignment() - alignment_expansion(&rho, &ka).unwrap()).norm() < 1e-9);
        assert!((p.coherence() - coherence_expansion(&rho, kg).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn diagonal_states_carry_no_alignment_or_coherence_signal() {
    let s = AtomicStructure::sodium_d2();
    let dir = axial();
    let all = sets(&s, &dir);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let rho = random_diagonal(&mut rng, 2, Frame::Natural);
        let p = measure_momenta(&rho, &dir, &all).unwrap();
        assert!(p.alignment().norm() < 1e-10);
        assert!(p.coherence().abs() < 1e-10);
    }
}

#[test]
fn coherence_parameter_tracks_the_stretched_coherence() {
    let s = AtomicStructure::sodium_d2();
    let dir = axial();
    let all = sets(&s, &dir);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let ratios: Vec<f64> = (0..20)
        .filter_map(|_| {
            let rho = random_density(&mut rng, 2, Frame::Natural);
            let c = rho.get(2, -2).re;
            (c.abs() > 0.02).then(|| measure_momenta(&rho, &dir, &all).unwrap().coherence() / c)
        })
        .collect();
    assert!(ratios.len() > 5);
    let kg = coherence_coefficient(set(&all, PolarisationMode::Pi0)).unwrap();
    for r in &ratios {
        assert!((r / kg - 1.0).abs() < 1e-4, "ratio {r} vs K^g {kg}");
    }

    let p = measure_momenta(&stretched_superposition(0.0), &dir, &all).unwrap();
    assert!((p.coherence() - 0.5 * kg).abs() < 1e-9);
}

#[test]
fn rotation_about_the_quantisation_axis() {
    let s = AtomicStructure::sodium_d2();
    let dir = axial();
    let all = sets(&s, &dir);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rho = random_density(&mut rng, 2, Frame::Natural);
    let p = measure_momenta(&rho, &dir, &all).unwrap();
    let phi = 0.37;
    let rotated = rotate_density(&rho, &EulerAngles::new(phi, 0.0, 0.0).unwrap()).unwrap();
    let q = measure_momenta(&rotated, &dir, &all).unwrap();
    // every Δm = 2 coherence picks up the same phase
    let expected = p.alignment() * Complex64::from_polar(1.0, -2.0 * phi);
    assert!((q.alignment() - expected).norm() < 1e-9);
    assert!((q.orientation() - p.orientation()).abs() < 1e-9);

    let sup = stretched_superposition(0.0);
    let turned = rotate_density(&sup, &EulerAngles::new(FRAC_PI_4, 0.0, 0.0).unwrap()).unwrap();
    let a = measure_momenta(&sup, &dir, &all).unwrap().coherence();
    let b = measure_momenta(&turned, &dir, &all).unwrap().coherence();
    assert!(a.abs() > 0.05);
    assert!((a + b).abs() < 1e-9);
}

#[test]
fn shape_parameters_of_reference_states() {
    let up = DensityMatrix::pure(2, 2, Frame::Natural).unwrap();
    assert_eq!(shape_from_density(&up).unwrap(), ShapeParameters { l_perp_2: 2.0, l_perp_1: 0.0 });
    let down = DensityMatrix::pure(2, -1, Frame::Natural).unwrap();
    assert_eq!(shape_from_density(&down).unwrap(), ShapeParameters { l_perp_2: 0.0, l_perp_1: -1.0 });
    let mixed = shape_from_density(&DensityMatrix::maximally_mixed(2, Frame::Natural)).unwrap();
    assert!(mixed.l_perp_2.abs() < 1e-15 && mixed.l_perp_1.abs() < 1e-15);

    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let rho = random_diagonal(&mut rng, 2, Frame::Natural);
    let s = shape_from_density(&rho).unwrap();
    let fz: f64 = (-2..=2).map(|m| m as f64 * rho.population(m)).sum();
    assert!((s.l_perp_2 + s.l_perp_1 - fz).abs() < 1e-12);
}

#[test]
fn stretched_state_is_recovered_from_orientation() {
    let s = AtomicStructure::sodium_d2();
    let dir = axial();
    let all = sets(&s, &dir);
    let k = k_coefficients(set(&all, PolarisationMode::SigmaPlus)).unwrap();
    for (m, truth) in [(2, 2.0), (-2, -2.0)] {
        let rho = DensityMatrix::pure(2, m, Frame::Natural).unwrap();
        let p = measure_momenta(&rho, &dir, &all).unwrap();
        let l = l_perp_from_measurement(p.orientation(), k.k2).unwrap();
        assert!((l - truth).abs() < 1e-9);
    }
    // the L⊥1 term is what the single-coefficient inversion drops
    let rho = DensityMatrix::pure(2, 1, Frame::Natural).unwrap();
    let p = measure_momenta(&rho, &dir, &all).unwrap();
    assert!((p.orientation() - k.k1).abs() < 1e-9);
}

#[test]
fn orientation_sign_follows_the_incidence_direction() {
    let s = AtomicStructure::sodium_d2();
    let up = IncidentDirection::new("up", [0.0, 0.0, 1.0]);
    let down = axial();
    let rho = DensityMatrix::pure(2, 2, Frame::Natural).unwrap();
    let a = measure_momenta(&rho, &up, &sets(&s, &up)).unwrap().orientation();
    let b = measure_momenta(&rho, &down, &sets(&s, &down)).unwrap().orientation();
    assert!(b > 1.0);
    assert!((a + b).abs() < 1e-9);
}

#[test]
fn sigma_u_scales_every_coefficient() {
    let s = AtomicStructure::sodium_d2();
    let a = compute_deflection_parameters(PolarisationMode::SigmaPlus, &axial(), &s, &beam(), 1.0).unwrap();
    let mut b = a.clone();
    b.sigma_u = 1.5;
    let (ka, kb) = (k_coefficients(&a).unwrap(), k_coefficients(&b).unwrap());
    assert!((kb.k2 - 1.5 * ka.k2).abs() < 1e-12);
    assert!((kb.k1 - 1.5 * ka.k1).abs() < 1e-12);
}

#[test]
fn natural_to_laser_preserves_the_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let rho = random_density(&mut rng, 2, Frame::Natural);
    let dir = IncidentDirection::new("oblique", [0.0, 0.6, -0.8]);
    for mode in PolarisationMode::PURE {
        let l = natural_to_laser(&rho, &dir, mode).unwrap();
        assert_eq!(l.frame(), Frame::Laser);
        let mut a = l.eigenvalues();
        let mut b = rho.eigenvalues();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn deflection_table_round_trips() {
    let s = AtomicStructure::sodium_d2();
    let all = sets(&s, &axial());
    let mut buf = Vec::new();
    write_dparams(&all, "abc123", &mut buf).unwrap();
    let (back, hash) = read_dparams(buf.as_slice()).unwrap();
    assert_eq!(hash, "abc123");
    assert_eq!(back.len(), all.len());
    for (a, b) in all.iter().zip(&back) {
        assert_eq!(a.mode, b.mode);
        assert_eq!(a.direction, b.direction);
        assert_eq!(a.d_values, b.d_values);
        assert_eq!(a.retained, b.retained);
    }

    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(4).map(|l| format!("{l}\n")).collect();
    assert!(matches!(read_dparams(truncated.as_bytes()), Err(Error::Parse(_))));
}

#[test]
fn cache_reuses_sets_across_modes_of_a_class() {
    let s = AtomicStructure::sodium_d2();
    let cache = DParamCache::default();
    let b = beam();
    let first = cache.get_or_compute(PolarisationMode::Pi0, &axial(), &s, &b, 1.0).unwrap();
    let misses = cache.misses();
    let other = IncidentDirection::new("other", [0.0, 1.0, 0.0]);
    let again = cache.get_or_compute(PolarisationMode::Pi135, &other, &s, &b, 1.0).unwrap();
    assert_eq!(cache.misses(), misses);
    assert_eq!(again.mode, PolarisationMode::Pi135);
    assert_eq!(again.direction, "other");
    assert_eq!(again.d_values, first.d_values);
    let shifted = BeamParameters { detuning: 0.5, ..b };
    cache.get_or_compute(PolarisationMode::Pi0, &axial(), &s, &shifted, 1.0).unwrap();
    assert_eq!(cache.misses(), misses + 1);
}

#[test]
fn preparation_angle_sets_the_orientation_sign() {
    let cfg = RunConfig::default();
    let s = cfg.structure().unwrap();
    let prep = cfg.mean_preparation_beam().unwrap();
    let plus = deflect_core::pumping::simulate_preparation(FRAC_PI_4, &s, &prep).unwrap();
    let minus = deflect_core::pumping::simulate_preparation(3.0 * FRAC_PI_4, &s, &prep).unwrap();
    let lp = shape_from_density(plus.manifold(2).unwrap()).unwrap().l_perp_2;
    let lm = shape_from_density(minus.manifold(2).unwrap()).unwrap().l_perp_2;
    assert!(lp > 1.9 && lm < -1.9, "{lp} {lm}");
    let lin = deflect_core::pumping::simulate_preparation(PI / 2.0, &s, &prep).unwrap();
    assert!(shape_from_density(lin.manifold(2).unwrap()).unwrap().l_perp_2.abs() < 1e-6);
}
