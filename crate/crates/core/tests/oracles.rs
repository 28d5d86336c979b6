//! Independent oracles: full tensor-product spin chains, the unnormalised
//! operator product for projective measurements, and closed forms.

mod common;

use common::{c, full_coupling, full_hamiltonian, on_sites, one_hot, reduce};
use zeno_core::chain::{coupling_hamiltonian, hamiltonian, projector, site_state, w_state, zeno_hamiltonian};
use zeno_core::protocols::{run_continuous, run_projective_intervals, run_pulsed_intervals};
use zeno_core::stochastics::{sample_intervals, weak_zeno_margin};
use zeno_core::theory::{edge_variance, pstar_weak, three_level_survival, variance_h_pi};
use zeno_core::{
    hermitian_eig, propagator, sqrt_psd, ChainSpec, ComplexMatrix, IntervalDistribution, SeededSampler, StateVector,
    DEFAULT_RATE,
};

const B: f64 = DEFAULT_RATE;

#[test]
fn sector_reduction_matches_tensor_products() {
    for n in 3..=6 {
        for &(alpha, phase) in &[(0.7 * B, true), (B, false)] {
            let spec = ChainSpec::new_relaxed(n, alpha, B, 1).unwrap().with_field_phase(phase);
            let full = full_hamiltonian(n, if phase { alpha } else { 0.0 }, B);
            let diff = reduce(&full, n).max_abs_diff(&hamiltonian(&spec).unwrap());
            assert!(diff <= 1e-12, "N = {n}, phase = {phase}: {diff:e}");
        }
        for lambda in 1..=n - 2 {
            let spec = ChainSpec::new_relaxed(n, B, B, lambda).unwrap();
            let diff = reduce(&full_coupling(n, lambda), n).max_abs_diff(&coupling_hamiltonian(&spec).unwrap());
            assert!(diff <= 1e-12, "H_c, N = {n}, lambda = {lambda}: {diff:e}");
        }
    }
}

#[test]
fn hamiltonian_conserves_excitation_number() {
    for n in 3..=6 {
        let number = (0..n).fold(ComplexMatrix::zeros(1 << n), |acc, i| {
            &acc + &(&on_sites(n, &[(i, 'z')]) + &ComplexMatrix::identity(1 << n)).scale_real(0.5)
        });
        let h = full_hamiltonian(n, B, B);
        assert!(h.commutator(&number).max_abs() <= 1e-12);
        assert!(full_coupling(n, 0).commutator(&number).max_abs() <= 1e-12);
    }
    let n = 4;
    let u = propagator(&full_hamiltonian(n, B, B), 37.0).unwrap();
    let psi = u.apply(&StateVector::basis(1 << n, one_hot(n, 0)));
    let outside: f64 =
        psi.amplitudes().iter().enumerate().filter(|(k, _)| k.count_ones() != 1).map(|(_, z)| z.norm_sqr()).sum();
    assert!(outside <= 1e-20, "{outside:e}");
}

#[test]
fn zeno_hamiltonian_is_projected_block() {
    let spec = ChainSpec::with_default_rates(12, 9).unwrap();
    let p = projector(&spec);
    let php = &(&p * &hamiltonian(&spec).unwrap()) * &p;
    assert!(php.principal_block(9).max_abs_diff(&zeno_hamiltonian(&spec).unwrap()) <= 1e-14);
    let rank: f64 = p.trace().re;
    assert_eq!(rank, 9.0);
}

/// `|| Pi U_m ... Pi U_1 psi0 ||^2`, with no renormalisation.
fn unnormalised_survival(spec: &ChainSpec, psi0: &StateVector, intervals: &[f64]) -> Vec<f64> {
    let h = hamiltonian(spec).unwrap();
    let p = projector(spec);
    let mut psi = psi0.clone();
    intervals
        .iter()
        .map(|&mu| {
            psi = p.apply(&propagator(&h, mu).unwrap().apply(&psi));
            psi.norm_sqr()
        })
        .collect()
}

#[test]
fn projective_survival_matches_operator_product() {
    let d = IntervalDistribution::bimodal(1.0, 0.5, 5.0).unwrap();
    for (n, lambda) in [(3, 1), (4, 2), (5, 3), (6, 2), (6, 4)] {
        let spec = ChainSpec::new_relaxed(n, B, B, lambda).unwrap();
        for psi0 in [w_state(n, lambda), site_state(n, 1).unwrap()] {
            let intervals = sample_intervals(&d, &mut SeededSampler::new(n as u64 * 31 + lambda as u64), 300);
            let tr = run_projective_intervals(&spec, &psi0, &intervals).unwrap();
            let oracle = unnormalised_survival(&spec, &psi0, &intervals);
            for (j, (a, b)) in tr.cumulative_survival.iter().zip(&oracle).enumerate() {
                assert!((a - b).abs() <= 1e-10, "N = {n}, lambda = {lambda}, step {j}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn two_site_rabi_factor() {
    let spec = ChainSpec::new_relaxed(2, B, B, 1).unwrap();
    let tr = run_projective_intervals(&spec, &site_state(2, 1).unwrap(), &[1.0]).unwrap();
    assert!((tr.survival_factors[0] - (B).cos().powi(2)).abs() < 1e-14);
    assert!((tr.survival_factors[0] - 0.999013).abs() < 5e-7);
}

#[test]
fn field_phase_is_a_global_phase() {
    let d = IntervalDistribution::bimodal(1.0, 0.5, 5.0).unwrap();
    let intervals = sample_intervals(&d, &mut SeededSampler::new(3), 200);
    let off = ChainSpec::with_default_rates(8, 3).unwrap();
    let on = off.clone().with_field_phase(true);
    let psi0 = site_state(8, 1).unwrap();
    let a = run_projective_intervals(&off, &psi0, &intervals).unwrap();
    let b = run_projective_intervals(&on, &psi0, &intervals).unwrap();
    for (x, y) in a.survival_factors.iter().zip(&b.survival_factors) {
        assert!((x - y).abs() <= 1e-10);
    }
    let pa = a.final_state.populations();
    let pb = b.final_state.populations();
    assert!(pa.iter().zip(&pb).all(|(x, y)| (x - y).abs() <= 1e-10));
}

#[test]
fn pulsed_swap_angle() {
    // The kick exp(-i H_c s) rotates the pair by angle 2 s: s = pi/4 swaps the
    // two amplitudes, s = pi/2 returns them with a sign flip.
    let spec = ChainSpec::with_default_rates(6, 2).unwrap();
    let hc = coupling_hamiltonian(&spec).unwrap();
    let psi = StateVector::from_real(&[0.0, 0.0, 0.8, 0.6, 0.0, 0.0]);
    let swapped = propagator(&hc, std::f64::consts::FRAC_PI_4).unwrap().apply(&psi).populations();
    assert!((swapped[2] - 0.36).abs() < 1e-10 && (swapped[3] - 0.64).abs() < 1e-10);
    let flipped = propagator(&hc, std::f64::consts::FRAC_PI_2).unwrap().apply(&psi);
    assert!(flipped.max_abs_diff(&StateVector::from_real(&[0.0, 0.0, -0.8, -0.6, 0.0, 0.0])) < 1e-12);

    let psi0 = w_state(6, 2);
    let tr = run_pulsed_intervals(&spec, &psi0, &[3.0; 400], std::f64::consts::FRAC_PI_2).unwrap();
    assert!((tr.final_state.norm_sqr() - 1.0).abs() <= 1e-10);
}

#[test]
fn continuous_three_site_maps_to_three_level_model() {
    // Sites 1-2 hop with beta; sites 2-3 with beta + 2 g.
    let spec = ChainSpec::new_relaxed(3, B, B, 1).unwrap();
    let psi0 = site_state(3, 1).unwrap();
    for g in [0.0, 0.05, 0.3] {
        let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.5).collect();
        let tr = run_continuous(&spec, &psi0, 200.0, g, &times).unwrap();
        for (t, pop) in times.iter().zip(&tr.subspace_population) {
            let expected = three_level_survival(B, B + 2.0 * g, *t);
            assert!((pop - expected).abs() <= 1e-8, "g = {g}, t = {t}: {pop} vs {expected}");
        }
    }
}

#[test]
fn continuous_leakage_scales_inverse_square() {
    let spec = ChainSpec::with_default_rates(8, 3).unwrap();
    let psi0 = w_state(8, 3);
    let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.25).collect();
    let leak = |g: f64| {
        let tr = run_continuous(&spec, &psi0, 500.0, g, &times).unwrap();
        1.0 - tr.subspace_population.iter().copied().fold(1.0, f64::min)
    };
    let (l1, l2, l4) = (leak(2.0), leak(4.0), leak(8.0));
    assert!(l1 > l2 && l2 > l4);
    assert!((l2 / l4 - 4.0).abs() < 0.4, "{}", l2 / l4);
}

#[test]
fn continuous_zero_coupling_is_free_evolution() {
    let spec = ChainSpec::with_default_rates(7, 3).unwrap();
    let psi0 = w_state(7, 3);
    let tr = run_continuous(&spec, &psi0, 50.0, 0.0, &[50.0]).unwrap();
    let free = propagator(&hamiltonian(&spec).unwrap(), 50.0).unwrap().apply(&psi0);
    assert!(tr.final_state.max_abs_diff(&free) <= 1e-10);
}

fn random_hermitian(dim: usize, seed: u64) -> ComplexMatrix {
    let mut s = SeededSampler::new(seed);
    let mut a = ComplexMatrix::from_fn(dim, |_, _| c(s.next_f64() * 2.0 - 1.0, s.next_f64() * 2.0 - 1.0));
    a = &a + &a.adjoint();
    a.scale_real(0.5)
}

#[test]
fn eig_reconstructs_random_hermitian() {
    let a = random_hermitian(8, 42);
    let eig = hermitian_eig(&a).unwrap();
    assert!(eig.reconstruct().max_abs_diff(&a) <= 1e-10);
    let v = &eig.eigenvectors;
    assert!((&v.adjoint() * v).max_abs_diff(&ComplexMatrix::identity(8)) <= 1e-10);
}

#[test]
fn two_by_two_closed_forms() {
    let h = ComplexMatrix::from_real_rows(&[&[0.0, B], &[B, 0.0]]).unwrap();
    let eig = hermitian_eig(&h).unwrap();
    assert!((eig.eigenvalues[0] + B).abs() < 1e-15 && (eig.eigenvalues[1] - B).abs() < 1e-15);
    let t = 13.7;
    let u = propagator(&h, t).unwrap();
    assert!((u[(0, 0)] - c((B * t).cos(), 0.0)).norm() < 1e-12);
    assert!((u[(0, 1)] - c(0.0, -(B * t).sin())).norm() < 1e-12);
}

#[test]
fn sqrt_of_random_gram_matrix() {
    let mut s = SeededSampler::new(7);
    let b = ComplexMatrix::from_fn(4, |_, _| c(s.next_f64() - 0.5, s.next_f64() - 0.5));
    let a = &b.adjoint() * &b;
    let r = sqrt_psd(&a).unwrap();
    assert!((&r * &r).max_abs_diff(&a) <= 1e-8);
    assert!(r.hermitian_deviation() <= 1e-12);
    assert!(hermitian_eig(&r).unwrap().eigenvalues[0] >= -1e-12);
}

#[test]
fn moments_by_direct_summation() {
    let d = IntervalDistribution::bimodal(1.0, 0.5, 5.0).unwrap();
    let m = d.moments();
    assert!((m.mean - 3.0).abs() < 1e-15);
    assert!((m.variance - 4.0).abs() < 1e-14);
    assert!((m.kappa - 4.0 / 9.0).abs() < 1e-15);
    assert!((m.third_raw - 63.0).abs() < 1e-12);
    let wide = IntervalDistribution::bimodal(1.0, 0.8, 11.0).unwrap().moments();
    assert!((wide.mean - 3.0).abs() < 1e-14);
    assert!((wide.kappa - 16.0 / 9.0).abs() < 1e-14);
    assert_eq!(format!("{:.3}", wide.kappa), "1.778");
    assert!((weak_zeno_margin(&d, 100, 1e-4) - 0.63).abs() < 1e-12);
}

#[test]
fn sampling_frequencies_concentrate() {
    let d = IntervalDistribution::bimodal(1.0, 0.5, 5.0).unwrap();
    let xs = sample_intervals(&d, &mut SeededSampler::new(1), 100_000);
    let f = xs.iter().filter(|&&x| x == 1.0).count() as f64 / xs.len() as f64;
    assert!((0.49..=0.51).contains(&f), "{f}");
}

#[test]
fn leakage_variance_by_matrix_oracle() {
    let spec = ChainSpec::with_default_rates(12, 4).unwrap();
    let w = w_state(12, 4);
    assert!((variance_h_pi(&w, &spec).unwrap() - B * B / 4.0).abs() < 1e-15);
    assert!((edge_variance(&w, &spec) - B * B / 4.0).abs() < 1e-18);
    let edge = site_state(12, 4).unwrap();
    assert!((variance_h_pi(&edge, &spec).unwrap() - B * B).abs() < 1e-15);
    assert_eq!(variance_h_pi(&site_state(12, 1).unwrap(), &spec).unwrap(), 0.0);
}

#[test]
fn weak_prediction_arithmetic() {
    let d = IntervalDistribution::bimodal(1.0, 0.5, 5.0).unwrap();
    let p = pstar_weak(500, &d, B * B / 2.0);
    let x = 500.0 * (B * B / 2.0) * (1.0 + 4.0 / 9.0) * 9.0;
    assert!((p.ln_pstar + x).abs() < 1e-12);
    assert!((p.ln_pstar + 3.208).abs() < 1e-3);
    assert!((p.pstar - 0.0404).abs() < 1e-4);
}
