use proptest::prelude::*;
use shearkin::dsmc::*;
use shearkin::tensor::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;

fn rotated_shear(mu: f64, phi: f64) -> ShearFrame {
    let (s, c) = phi.sin_cos();
    ShearFrame::new(mu, [c, s], [-s, c]).unwrap()
}

#[test]
fn drift_composes_additively() {
    let shear = rotated_shear(1.3, 0.7);
    let mut a = ParticleEnsemble::maxwellian(1000, 1.0, 4).unwrap();
    let mut b = a.clone();
    drift_step(&mut a, &shear, 0.05);
    drift_step(&mut a, &shear, 0.05);
    drift_step(&mut b, &shear, 0.1);
    for (x, y) in a.velocities.iter().zip(&b.velocities) {
        assert!(norm([x[0] - y[0], x[1] - y[1]]) <= 1e-14 * (1.0 + norm(*y)));
    }
    // Standard axes: β·w is untouched, so the composition is exact up to one rounding.
    let mut c = ParticleEnsemble::from_velocities(vec![[0.25, 1.0], [1.0, -0.5]], 0).unwrap();
    drift_step(&mut c, &ShearFrame::standard(1.0), 0.125);
    drift_step(&mut c, &ShearFrame::standard(1.0), 0.125);
    assert_eq!(c.velocities, vec![[0.0, 1.0], [1.125, -0.5]]);
}

#[test]
fn collisions_conserve_mass_momentum_energy() {
    let mut e = ParticleEnsemble::maxwellian(5000, 1.0, 11).unwrap();
    let (m0, p0, th0) = (e.mass(), e.momentum(), e.theta());
    let mut cfg = CollisionConfig::new(0.05);
    let mut total = 0;
    for _ in 0..40 {
        cfg.refresh(&e);
        let st = collide_step(&mut e, &cfg).unwrap();
        assert!(st.max_momentum_defect <= 1e-12 && st.max_energy_defect <= 1e-12);
        total += st.accepted;
    }
    assert!(total > 1000);
    assert_eq!(e.mass(), m0);
    assert!(norm([e.momentum()[0] - p0[0], e.momentum()[1] - p0[1]]) < 1e-13);
    assert!((e.theta() - th0).abs() < 1e-12 * th0);
}

#[test]
fn collision_rate_matches_hard_disc_frequency() {
    // Loss rate per particle for a standard Maxwellian: ∫ g(w') 2|w − w'| dw'
    // averaged over g, i.e. 2 E|u| with u ~ N(0, 2 Id), which is 2√π.
    let mut e = ParticleEnsemble::maxwellian(20_000, 1.0, 2).unwrap();
    let mut cfg = CollisionConfig::new(0.01);
    let mut accepted = 0;
    for _ in 0..20 {
        cfg.refresh(&e);
        accepted += collide_step(&mut e, &cfg).unwrap().accepted;
    }
    // Each collision removes two particles from their state.
    let rate = 2.0 * accepted as f64 / (20_000.0 * 0.2);
    assert!((rate / (2.0 * PI.sqrt()) - 1.0).abs() < 0.03, "rate {rate}");
}

/// Pearson statistic of |w|²/(2θ) against Exp(1) in equiprobable bins.
fn chi_square_energy(e: &ParticleEnsemble, bins: usize) -> f64 {
    let th = e.theta();
    let mut counts = vec![0usize; bins];
    for w in &e.velocities {
        let x = dot(*w, *w) / (2.0 * th);
        let cdf = 1.0 - (-x).exp();
        counts[((cdf * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expect = e.len() as f64 / bins as f64;
    counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum()
}

#[test]
fn equilibrium_is_statistically_stationary() {
    let bins = 20;
    let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
    let mut e = ParticleEnsemble::maxwellian(10_000, 1.0, 21).unwrap();
    assert!(chi_square_energy(&e, bins) < crit);
    let mut cfg = CollisionConfig::new(0.01);
    for step in 1..=1000 {
        drift_step(&mut e, &ShearFrame::standard(0.0), 0.01);
        cfg.refresh(&e);
        collide_step(&mut e, &cfg).unwrap();
        if step % 250 == 0 {
            let chi = chi_square_energy(&e, bins);
            assert!(chi < crit, "step {step}: chi² {chi} ≥ {crit}");
        }
    }
}

#[test]
fn empirical_stress_and_frame() {
    let e = ParticleEnsemble::maxwellian(40_000, 1.0, 5).unwrap();
    let t = empirical_stress(&e);
    let tol = 4.0 / (40_000f64).sqrt();
    assert!((t.xx - 0.5).abs() < tol && t.xy.abs() < tol && (t.yy - 0.5).abs() < tol);
    let f = update_frame(&e).unwrap();
    let r = f.renormalized_stress(&e);
    assert!(r.sub(&SymTensor2::IDENTITY).max_abs() < 1e-12);
}

#[test]
fn defect_tensor_vanishes_at_identity() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(100);
    for _ in 0..100 {
        let phi = rand::Rng::gen::<f64>(&mut rng) * 2.0 * PI;
        let c = energy_defect_tensor(&SymTensor2::IDENTITY, [phi.cos(), phi.sin()]).unwrap();
        assert_eq!(c, SymTensor2::ZERO);
    }
}

#[test]
fn stress_rate_trace_at_identity_is_zero() {
    let e = ParticleEnsemble::maxwellian(10_000, 1.0, 8).unwrap();
    let r = stress_rate_trace(&e, &SymTensor2::IDENTITY, 100_000, 1).unwrap();
    assert!(r.estimate.abs() <= 3.0 * r.stderr);
    // The same holds off-equilibrium: the identity frame has no energy defect.
    let b = ParticleEnsemble::bimodal(10_000, 3.0, 0.5, 8).unwrap();
    let r = stress_rate_trace(&b, &SymTensor2::IDENTITY, 100_000, 1).unwrap();
    assert!(r.estimate.abs() <= 3.0 * r.stderr);
}

/// ¼ ∫ ρ(u) ∫ Δ(ηu, ν) [ν·u]₊ dν du on a 64² midpoint grid with 256
/// directions, ρ the N(0, Σ) density of u = w − w', and Δ the kinetic energy
/// change of the rescaled collision computed from the p₊ maps directly.
fn trace_oracle(eta: &SymTensor2, sigma: [f64; 2]) -> f64 {
    let (n, m, l) = (64, 256, 10.0);
    let h = 2.0 * l / n as f64;
    let inv = eta.inverse().unwrap();
    let mut total = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            let u = [-l + (ix as f64 + 0.5) * h, -l + (iy as f64 + 0.5) * h];
            let rho = (-0.5 * (u[0] * u[0] / sigma[0] + u[1] * u[1] / sigma[1])).exp()
                / (2.0 * PI * (sigma[0] * sigma[1]).sqrt());
            let q = eta.apply(u);
            for k in 0..m {
                let phi = (k as f64 + 0.5) * 2.0 * PI / m as f64;
                let nu = [phi.cos(), phi.sin()];
                let kern = dot(nu, inv.apply(q)).max(0.0);
                // p = q, p' = 0 suffices: Δ depends on p − p' only.
                let s = dot(nu, inv.apply(q));
                let en = eta.apply(nu);
                let ps = [q[0] - s * en[0], q[1] - s * en[1]];
                let pp = [s * en[0], s * en[1]];
                let delta = dot(ps, ps) + dot(pp, pp) - dot(q, q);
                total += rho * delta * kern;
            }
        }
    }
    0.25 * total * h * h * 2.0 * PI / m as f64
}

#[test]
fn stress_rate_trace_matches_quadrature() {
    let eta = SymTensor2::diag(2.0, 1.0);
    // Ensemble Maxwellian in the rescaled variables: p = ηw standard normal.
    let mut e = ParticleEnsemble::maxwellian(100_000, 1.0, 13).unwrap();
    for w in &mut e.velocities {
        w[0] *= 0.5;
    }
    let oracle = trace_oracle(&eta, [0.5, 2.0]);
    assert!((oracle - 1.557530).abs() < 1e-5, "oracle {oracle}");
    let r = stress_rate_trace(&e, &eta, 1_000_000, 3).unwrap();
    assert!(r.estimate > 0.0 && (r.estimate - oracle).abs() < 4.0 * r.stderr, "{r:?} vs {oracle}");
    // A Maxwellian in w is a zero of Q, so P vanishes in every frame.
    let oracle_w = trace_oracle(&eta, [2.0, 2.0]);
    assert!(oracle_w.abs() < 1e-12);
}

#[test]
fn stress_rate_stderr_scales_as_inverse_root() {
    let e = ParticleEnsemble::maxwellian(10_000, 1.0, 17).unwrap();
    let eta = SymTensor2::diag(2.0, 1.0);
    let a = stress_rate_trace(&e, &eta, 100_000, 1).unwrap();
    let b = stress_rate_trace(&e, &eta, 200_000, 2).unwrap();
    let ratio = a.stderr / (b.stderr * 2f64.sqrt());
    assert!((ratio - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn entropy_production_separates_equilibrium() {
    let eq = |n| {
        let e = ParticleEnsemble::maxwellian(n, 1.0, 1).unwrap();
        entropy_production_estimate(&e, &SymTensor2::IDENTITY, 32, 200_000, 5).unwrap()
    };
    let b = ParticleEnsemble::bimodal(100_000, 4.0, 0.5, 1).unwrap();
    let bim = entropy_production_estimate(&b, &SymTensor2::IDENTITY, 32, 200_000, 5).unwrap();
    assert!(bim.quartic.estimate < -3.0 * bim.quartic.stderr);
    // The Maxwellian value is the histogram noise floor: small and shrinking with N.
    let (small, large) = (eq(100_000), eq(400_000));
    assert!(small.quartic.estimate <= 0.0 && large.quartic.estimate <= 0.0);
    assert!(small.quartic.estimate.abs() < 0.02 * bim.quartic.estimate.abs());
    assert!(large.quartic.estimate.abs() < 0.5 * small.quartic.estimate.abs());
    assert!(entropy_production_estimate(&b, &SymTensor2::IDENTITY, 16, 10, 5).is_err());
}

fn short_run(mu: f64, seed: u64) -> (DsmcRun, ParticleEnsemble) {
    let mut e = ParticleEnsemble::maxwellian(20_000, 1.0, seed).unwrap();
    let mut cfg = DsmcConfig::new(0.02, 2.0, seed);
    cfg.record_every = 10;
    let r = run(&mut e, &ShearFrame::standard(mu), &cfg).unwrap();
    (r, e)
}

#[test]
fn shear_run_energy_bound_and_stress_growth() {
    let (r, _) = short_run(1.0, 3);
    assert_eq!(r.mass_initial, r.mass_final);
    let bound = 1.0 + 3.0 * r.theta0_stderr / r.records[0].theta;
    assert!(r.energy_growth_ratio(1.0) <= bound);
    let (first, last) = (&r.records[0], r.records.last().unwrap());
    assert!(last.theta > 1.1 * first.theta);
    // The sheared component grows fastest and the shear stress turns negative.
    assert!(last.stress.xx - first.stress.xx > last.stress.yy - first.stress.yy);
    assert!(last.stress.xy < -0.05);
    let l1: Vec<f64> = r.records.iter().filter_map(|x| x.hist_l1_prev).collect();
    let half = l1.len() / 2;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    assert!(mean(&l1[half..]) <= 1.2 * mean(&l1[..half]));
}

#[test]
fn unsheared_run_keeps_energy() {
    let (r, _) = short_run(0.0, 4);
    let th0 = r.records[0].theta;
    for x in &r.records {
        assert!((x.theta - th0).abs() < 1e-12 * th0);
        assert!(x.tr_f.map_or(true, |f| f.abs() < 0.1));
    }
}

#[test]
fn runs_are_bit_identical() {
    let (a, ea) = short_run(0.5, 9);
    let (b, eb) = short_run(0.5, 9);
    assert_eq!(a, b);
    assert_eq!(ea, eb);
    let (c, _) = short_run(0.5, 10);
    assert_ne!(a.records.last().unwrap().theta, c.records.last().unwrap().theta);
}

#[test]
fn maxwellian_is_not_stationary_under_shear() {
    let r = maxwellian_residual_check(&ShearFrame::standard(1.0), 32).unwrap();
    assert!(r.collision_part <= r.quadrature_error);
    assert!(r.margin() >= 10.0, "margin {}", r.margin());
    assert!(!r.stationary);
    // Drift field against −(μ/2) p₁p₂ G^M, and its sign pattern.
    for (p, v) in &r.drift_field {
        let gm = (-0.25 * dot(*p, *p)).exp() / (4.0 * PI);
        assert!((v + 0.5 * p[0] * p[1] * gm).abs() < 1e-15);
    }
    let peak = |mu| maxwellian_residual_check(&ShearFrame::standard(mu), 16).unwrap().drift_part;
    assert!((peak(2.0) / peak(1.0) - 2.0).abs() < 1e-12);
    let still = maxwellian_residual_check(&ShearFrame::standard(0.0), 16).unwrap();
    assert!(still.stationary && still.drift_part == 0.0);
}

#[test]
fn drift_field_matches_finite_differences() {
    // −∇·(G^M F p) by centred differences of the flux, F = −μ α⊗β.
    let shear = rotated_shear(0.8, 0.3);
    let r = maxwellian_residual_check(&shear, 16).unwrap();
    let f = shear.shear_matrix().scale(-shear.mu);
    let flux = |p: Vec2| {
        let g = (-0.25 * dot(p, p)).exp() / (4.0 * PI);
        let v = f.apply(p);
        [g * v[0], g * v[1]]
    };
    let h = 1e-5;
    for (p, v) in &r.drift_field {
        let div = (flux([p[0] + h, p[1]])[0] - flux([p[0] - h, p[1]])[0]
            + flux([p[0], p[1] + h])[1]
            - flux([p[0], p[1] - h])[1])
            / (2.0 * h);
        assert!((v + div).abs() < 1e-9, "{p:?}: {v} vs {}", -div);
    }
}

proptest! {
    #[test]
    fn pair_collision_conserves(w in prop::array::uniform2(-8.0..8.0f64), wp in prop::array::uniform2(-8.0..8.0f64), phi in 0.0..(2.0 * PI)) {
        let nu = [phi.cos(), phi.sin()];
        let (a, b) = collide_pair(w, wp, nu);
        let scale = 1.0 + norm(w) + norm(wp);
        prop_assert!((a[0] + b[0] - w[0] - wp[0]).abs() <= 1e-12 * scale);
        prop_assert!((a[1] + b[1] - w[1] - wp[1]).abs() <= 1e-12 * scale);
        prop_assert!((dot(a, a) + dot(b, b) - dot(w, w) - dot(wp, wp)).abs() <= 1e-12 * scale * scale);
    }

    #[test]
    fn defect_tensor_gives_rescaled_energy_change(
        l in prop::array::uniform2(0.2..3.0f64), rot in 0.0..PI, phi in 0.0..(2.0 * PI),
        p in prop::array::uniform2(-4.0..4.0f64), pp in prop::array::uniform2(-4.0..4.0f64),
    ) {
        let (s, c) = rot.sin_cos();
        let eta = SymTensor2 { xx: l[0] * c * c + l[1] * s * s, xy: (l[0] - l[1]) * c * s, yy: l[0] * s * s + l[1] * c * c };
        let nu = [phi.cos(), phi.sin()];
        let q = [p[0] - pp[0], p[1] - pp[1]];
        let k = dot(nu, eta.inverse().unwrap().apply(q));
        let en = eta.apply(nu);
        let ps = [p[0] - k * en[0], p[1] - k * en[1]];
        let pps = [pp[0] + k * en[0], pp[1] + k * en[1]];
        let change = dot(ps, ps) + dot(pps, pps) - dot(p, p) - dot(pp, pp);
        let c = energy_defect_tensor(&eta, nu).unwrap();
        prop_assert!((change - 2.0 * c.quad(q)).abs() <= 1e-9 * (1.0 + dot(q, q)) * (1.0 + eta.max_abs().powi(2)));
    }

    #[test]
    fn drift_preserves_transverse_component(w in prop::array::uniform2(-5.0..5.0f64), mu in -2.0..2.0f64, dt in 0.0..0.5f64) {
        let mut e = ParticleEnsemble::from_velocities(vec![w, [0.0, 0.0]], 0).unwrap();
        drift_step(&mut e, &ShearFrame::standard(mu), dt);
        prop_assert_eq!(e.velocities[0][1], w[1]);
        prop_assert!((e.velocities[0][0] - (w[0] - mu * dt * w[1])).abs() <= 1e-15 * (1.0 + w[0].abs() + (mu * dt * w[1]).abs()));
    }
}
