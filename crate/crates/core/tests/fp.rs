use proptest::prelude::*;
use shearkin::fp::coupled::*;
use shearkin::fp::hypoco::*;
use shearkin::fp::io::*;
use shearkin::fp::mu_zero::*;
use shearkin::fp::scheme::*;
use shearkin::fp::*;
use shearkin::moments::*;
use shearkin::tensor::*;

fn l1(r: &[f64], grid: VelocityGrid) -> f64 {
    r.iter().map(|v| v.abs()).sum::<f64>() * grid.h() * grid.h()
}

fn two_bump() -> InitialData {
    InitialData::TwoBump { sep: 3.0, cov: [0.5, 0.0, 2.0] }
}

#[test]
fn centred_residual_is_second_order() {
    let traj = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), 10.0, 1e-12).unwrap();
    let frames = [CoefficientFrame::ornstein_uhlenbeck(), coefficient_frame(&traj, 3.0).unwrap()];
    for frame in frames {
        let res: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let g = VelocityGrid::new(n, 8.0).unwrap();
                l1(&shape_rhs(&DensityField::maxwellian(g), &frame, FluxScheme::Centered), g)
            })
            .collect();
        for w in res.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "order {order} from {res:?}");
        }
        let g = VelocityGrid::new(128, 8.0).unwrap();
        let bal = l1(&shape_rhs(&DensityField::maxwellian_discrete(g), &frame, FluxScheme::Balanced), g);
        assert!(bal <= res[1], "balanced {bal:e} vs centred {:e}", res[1]);
    }
}

#[test]
fn stepped_maxwellian_does_not_drift() {
    let g = VelocityGrid::new(64, 8.0).unwrap();
    let traj = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), 10.0, 1e-12).unwrap();
    let coef = ShapeCoefficients::from_frame(&coefficient_frame(&traj, 2.0).unwrap());
    let op = ShapeOperator::new(g, FluxScheme::Balanced);
    let m = DensityField::maxwellian_discrete(g);
    let dt = 0.9 * op.cfl_bound(&coef);
    let mut f = m.clone();
    for _ in 0..1000 {
        f = op.step(&f, &coef, dt).unwrap();
    }
    assert!(f.l1_distance(&m) <= 1e-6, "{:e}", f.l1_distance(&m));
}

#[test]
fn literal_dissipation_targets_the_other_gaussian() {
    // With ½∫G p⊗p = Id the equilibrium is e^{−|p|²/4}; the literal
    // |η(Gp + ∇G)|²/G integrand vanishes on e^{−|p|²/2} instead.
    let g = VelocityGrid::new(128, 8.0).unwrap();
    let traj = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), 10.0, 1e-12).unwrap();
    let frame = coefficient_frame(&traj, 2.0).unwrap();
    let gm = DensityField::maxwellian_discrete(g);
    assert!(entropy_dissipation(&gm, &frame).abs() < 1e-14);
    assert!(entropy_dissipation_literal(&gm, &frame) < -0.1);
    let f = normalized_initial(g, |p| two_bump().density(p)).unwrap();
    assert!(entropy_dissipation(&f, &frame) < 0.0);
}

struct Coupled {
    run: CoupledRun,
    traj: StressTrajectory,
}

fn coupled(n: usize, t_end: f64) -> Coupled {
    let g = VelocityGrid::new(n, 8.0).unwrap();
    let g0 = normalized_initial(g, |p| two_bump().density(p)).unwrap();
    let traj = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), t_end, 1e-10).unwrap();
    let mut opts = CoupledOptions::default();
    opts.outputs = log_times(1.0, t_end, 10);
    let run = run_coupled(&g0, &traj, (1.0, t_end), &opts).unwrap();
    Coupled { run, traj }
}

#[test]
fn coupled_run_relaxes_with_entropy_identity() {
    let Coupled { run, traj } = coupled(64, 100.0);
    let l1: Vec<f64> = run.records.iter().map(|r| r.l1_to_maxwellian).collect();
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "{l1:?}");
    assert!(l1.last().unwrap() < &(1e-3 * l1[0]));
    for r in &run.records {
        assert!((r.mass - 1.0).abs() < 1e-10);
        assert!(r.covariance_error < 5e-3);
    }
    assert!(run.max_entropy_increase() <= 1e-8);
    assert_eq!(run.large_undershoots, 0);
    for r in run.records.iter().filter(|r| r.t >= 2.0 && r.dissipation.abs() >= 1e-13) {
        let rate = run.entropy_rate_at_time(r.t).unwrap();
        assert!((rate / r.dissipation - 1.0).abs() < 0.05, "t = {}: {rate:e} vs {:e}", r.t, r.dissipation);
    }
    // Fourth moments follow the moment ODE while they are resolved.
    let h0 = run.records[0].moments.clone();
    let ode = integrate_moments(&h0, &traj, 1.0, 100.0, 1e-10).unwrap();
    for r in run.records.iter().filter(|r| r.t <= 10.0) {
        let want = &ode.at(r.t).unwrap()[0];
        let err = r.moments[0].h.iter().zip(&want.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.05 * want.norm(), "t = {}: {err:e} vs {:e}", r.t, want.norm());
    }
}

#[test]
fn coupled_runs_are_bit_identical() {
    let a = coupled(32, 5.0).run;
    let b = coupled(32, 5.0).run;
    assert_eq!(a.final_field, b.final_field);
    assert_eq!(a.entropy_steps, b.entropy_steps);
}

#[test]
fn physical_density_respects_shear_invariance() {
    let g = VelocityGrid::new(64, 8.0).unwrap();
    let field = normalized_initial(g, |p| two_bump().density(p)).unwrap();
    let shear = ShearFrame::new(0.7, [0.6, 0.8], [-0.8, 0.6]).unwrap();
    let eta = SymTensor2::new(0.9, 0.2, 1.3);
    let f = reconstruct_physical(&field, &eta, &shear).unwrap();
    let (z, w) = ([0.3, -1.1], [0.4, 0.2]);
    for (x, y) in [(1.0, 0.0), (0.0, 1.0), (-2.5, 0.7)] {
        let z2 = [z[0] + x * shear.alpha[0] + y * shear.beta[0], z[1] + x * shear.alpha[1] + y * shear.beta[1]];
        let w2 = [w[0] + shear.mu * y * shear.alpha[0], w[1] + shear.mu * y * shear.alpha[1]];
        assert!((f.eval(z2, w2) - f.eval(z, w)).abs() < 1e-12);
    }
    let at0 = f.eval([0.0, 0.0], w);
    assert!((at0 - eta.det() * field.interpolate(eta.apply(w))).abs() < 1e-15);
    let still = reconstruct_physical(&field, &eta, &ShearFrame::standard(0.0)).unwrap();
    assert_eq!(still.eval([5.0, -3.0], w), still.eval([0.0, 0.0], w));
    assert!(reconstruct_physical(&field, &SymTensor2::new(1.0, 2.0, 1.0), &shear).is_err());
}

#[test]
fn unsheared_maxwellian_is_stationary() {
    let g = VelocityGrid::new(48, 8.0).unwrap();
    let m = MaxwellianParams { c: -2.0, k: [0.2, 0.1], beta: 0.9 }.field(g);
    let r = mu_zero_run(&m, 5.0, 0.5).unwrap();
    let drift = r.records.iter().map(|x| x.l1_to_matched).fold(0.0, f64::max);
    assert!(drift <= 1e-6, "{drift:e}");
    assert!(r.max_conservation_error() <= 1e-10);
}

#[test]
fn unsheared_bimodal_relaxes_exponentially() {
    let g = VelocityGrid::new(48, 8.0).unwrap();
    let g0 = DensityField::from_fn(g, |w| {
        (-((w[0] - 1.5).powi(2) + w[1] * w[1]) / 0.8).exp() + (-((w[0] + 1.5).powi(2) + (w[1] - 0.3).powi(2)) / 0.8).exp()
    });
    let r = mu_zero_run(&g0, 20.0, 0.25).unwrap();
    assert!(r.max_conservation_error() <= 1e-6);
    let fit = r.exponential_fit(1e-10, 1e-2).unwrap();
    assert!(fit.exponent < 0.0 && fit.r_squared >= 0.99, "{fit:?}");
}

#[test]
fn hypocoercive_operators() {
    let g = VelocityGrid::new(64, 8.0).unwrap();
    let ops = HypoOperators::new(g);
    let fine = HypoOperators::new(VelocityGrid::new(128, 8.0).unwrap());
    let (e0, e1) = (ops.commutator_error(cubic_test, cubic_test_d1, 4.0), fine.commutator_error(cubic_test, cubic_test_d1, 4.0));
    assert!(((e0 / e1).log2() - 2.0).abs() < 0.1, "{e0:e} {e1:e}");
    assert!(ops.commutator_error(|p| p[0], |_| 1.0, 4.0) < 1e-12);
    let u = ops.sample(|p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() * (p[0] + p[1] * p[1]));
    let v = ops.sample(|p| (-((p[0] - 0.5).powi(2) + p[1] * p[1])).exp());
    assert!(ops.adjointness_defect(&u, &v) < 1e-13);
    let c = coercivity_estimate(g, 60).unwrap();
    assert!((c.kappa - 1.5).abs() < 1e-3, "{c:?}");
    let d = autonomous_decay_run(VelocityGrid::new(48, 8.0).unwrap(), |p| p[0], 12.0, 4.0).unwrap();
    assert!((d.fit.exponent + 0.5).abs() < 0.01 && d.fit.r_squared > 0.999, "{:?}", d.fit);
    assert!(d.mean_drift < 1e-12);
}

#[test]
fn snapshot_file_round_trip() {
    let g = VelocityGrid::new(32, 8.0).unwrap();
    let f = normalized_initial(g, |p| two_bump().density(p)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.bin");
    write_snapshot(&mut std::fs::File::create(&path).unwrap(), &f, 3.5).unwrap();
    let (back, t) = read_snapshot(&mut std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!((back, t), (f, 3.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalization_hits_reference_moments(sep in 0.0..4.0f64, a in 0.3..3.0f64, b in 0.3..3.0f64, c in -0.2..0.2f64) {
        let g = VelocityGrid::new(64, 8.0).unwrap();
        let f = normalized_initial(g, |p| InitialData::TwoBump { sep, cov: [a, c, b] }.density(p)).unwrap();
        prop_assert!((f.mass() - 1.0).abs() < 1e-12);
        let m = f.mean();
        prop_assert!(m[0].abs() < 1e-10 && m[1].abs() < 1e-10);
        prop_assert!(f.covariance_error() < 1e-6);
    }

    #[test]
    fn both_schemes_conserve_mass(d in prop::array::uniform4(-1.0..1.0f64), dxx in 0.1..2.0f64, dyy in 0.1..2.0f64, dxy in -0.05..0.05f64) {
        let g = VelocityGrid::new(32, 8.0).unwrap();
        let coef = ShapeCoefficients { drift: Mat2([[d[0], d[1]], [d[2], d[3]]]), diffusion: SymTensor2::new(dxx, dxy, dyy) };
        let f = DensityField::from_fn(g, |p| (-(p[0] - 0.5).powi(2) / 2.0 - p[1] * p[1] / 3.0).exp());
        for scheme in [FluxScheme::Centered, FluxScheme::Balanced] {
            let r = ShapeOperator::new(g, scheme).shape_rhs(&f, &coef);
            let total: f64 = r.iter().sum();
            prop_assert!(total.abs() < 1e-12);
        }
    }

    #[test]
    fn moment_lock_freezes_second_moments(d in prop::array::uniform4(-1.0..1.0f64), dyy in 0.5..2.0f64) {
        let g = VelocityGrid::new(32, 8.0).unwrap();
        let coef = ShapeCoefficients { drift: Mat2([[d[0], d[1]], [d[2], d[3]]]), diffusion: SymTensor2::new(0.5, 0.0, dyy) };
        let f = normalized_initial(g, |p| two_bump().density(p)).unwrap();
        let op = ShapeOperator::new(g, FluxScheme::Balanced).with_moment_lock(true);
        let r = op.shape_rhs(&f, &coef);
        let rates = op.moment_rates(&r);
        prop_assert!(rates.iter().all(|x| x.abs() < 1e-12), "{rates:?}");
        let free = ShapeOperator::new(g, FluxScheme::Balanced).moment_rates(&ShapeOperator::new(g, FluxScheme::Balanced).shape_rhs(&f, &coef));
        prop_assert!(free.iter().any(|x| x.abs() > 1e-6));
    }
}
