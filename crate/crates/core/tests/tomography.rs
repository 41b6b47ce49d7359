use gem_xpm::lindblad::*;
use gem_xpm::tomography::*;
use gem_xpm::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn unit(i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(i, j)] = c(1.0);
    m
}

fn max_dev(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Choi state built straight from a unitary: `|v><v|` with `v[4i + a] = U[a, i] / 2`.
fn choi_of_unitary(u: &CMatrix) -> CMatrix {
    let mut v = CMatrix::zeros(16, 1);
    for i in 0..4 {
        for a in 0..4 {
            v[(4 * i + a, 0)] = u[(a, i)] * 0.5;
        }
    }
    &v * v.adjoint()
}

#[test]
fn idle_system_gives_identity_channel() {
    let params = GateParams {
        g: 0.0,
        gamma: 0.0,
        ..GateParams::default()
    };
    let ch = channel_from_gate(&params, 15.0).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!(max_dev(ch.image(i, j), &unit(i, j)) < 1e-8);
        }
    }
    let chi = choi_matrix(&ch);
    let f = process_fidelity(&chi, &ideal_cphase_choi(0.0)).unwrap();
    assert!((f - 1.0).abs() < 1e-8);
    assert!(chi.report.tp_residual < 1e-3);
}

#[test]
fn pure_dephasing_damps_spin_coherences() {
    let rate = 0.3;
    let sigma_z = Operator::projector(Level::ProbeSpin).plus(&Operator::projector(Level::ProbeGround).scaled(c(-1.0)));
    let model = LindbladModel::new(Operator::zero(), vec![sigma_z.scaled(c((rate / 2.0f64).sqrt()))]);
    let t = 4.0;
    let ch = channel_from_model(&model, t, 0.05, LeakageHandling::TraceDecreasing).unwrap();
    let damping = (-rate * t).exp();
    for i in 0..4 {
        for j in 0..4 {
            let same_spin = i % 2 == j % 2;
            let expected = unit(i, j) * c(if same_spin { 1.0 } else { damping });
            assert!(max_dev(ch.image(i, j), &expected) < 1e-10, "({i}, {j})");
        }
    }
}

#[test]
fn channel_acts_linearly_on_fresh_inputs() {
    let params = GateParams::default();
    let model = LindbladModel::for_gate(&params);
    let t = 15.0;
    let ch = channel_from_model(&model, t, CHANNEL_STEP, LeakageHandling::TraceDecreasing).unwrap();
    let amps = [c(0.3), Complex64::new(0.1, -0.5), Complex64::new(-0.4, 0.2), Complex64::new(0.6, 0.3)];
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let mut psi = vec![c(0.0); HilbertSpace::DIM];
    let mut q = CMatrix::zeros(4, 1);
    for (k, a) in amps.iter().enumerate() {
        psi[qubit_basis_state(k)] = a / norm;
        q[(k, 0)] = a / norm;
    }
    let direct = evolve(
        &DensityOperator::pure(&psi).unwrap(),
        &model,
        &EvolveOptions {
            t_end: t,
            dt: CHANNEL_STEP,
            record_every: usize::MAX,
            integrator: Integrator::Exact,
        },
    )
    .unwrap();
    let (projected, _) = project_qubits(direct.last());
    let via_channel = ch.apply(&(&q * q.adjoint())).unwrap();
    assert!(max_dev(&projected, &via_channel) < 1e-8);

    let rho1 = unit(0, 0) * c(0.5) + unit(1, 1) * c(0.5);
    let rho2 = &q * q.adjoint();
    let mix = ch.apply(&((&rho1 + &rho2) * c(0.5))).unwrap();
    let sum = (ch.apply(&rho1).unwrap() + ch.apply(&rho2).unwrap()) * c(0.5);
    assert!(max_dev(&mix, &sum) < 1e-12);
}

#[test]
fn cphase_pi_sign_pattern() {
    let chi = ideal_cphase_choi(std::f64::consts::PI);
    let direct = choi_of_unitary(&cphase(std::f64::consts::PI));
    assert!(max_dev(chi.matrix(), &direct) < 1e-8);
    for i in 0..4 {
        for j in 0..4 {
            let sign = if (i == 3) != (j == 3) { -1.0 } else { 1.0 };
            assert!((chi.matrix()[(5 * i, 5 * j)] - c(0.25 * sign)).norm() < 1e-8);
        }
    }
    let off_pattern = (0..16)
        .flat_map(|r| (0..16).map(move |s| (r, s)))
        .filter(|(r, s)| r % 5 != 0 || s % 5 != 0)
        .map(|(r, s)| chi.matrix()[(r, s)].norm())
        .fold(0.0, f64::max);
    assert_eq!(off_pattern, 0.0);
}

#[test]
fn textbook_channels() {
    let id = choi_matrix(&TwoQubitChannel::identity());
    assert!((id.report.purity - 1.0).abs() < 1e-12);
    let quarter = id.matrix().iter().filter(|v| (**v - c(0.25)).norm() < 1e-15).count();
    assert_eq!(quarter, 16);
    let eig_sum: f64 = id.eigenvalues().iter().sum();
    assert!((eig_sum - 1.0).abs() < 1e-8);

    let dep = choi_matrix(&TwoQubitChannel::depolarizing());
    assert!(max_dev(dep.matrix(), &(CMatrix::identity(16, 16) / c(16.0))) < 1e-15);

    let f = process_fidelity(&id, &ideal_cphase_choi(std::f64::consts::PI)).unwrap();
    assert!((f - 0.25).abs() < 1e-8);
}

#[test]
fn strong_pumping_reports_leakage() {
    let pump = Operator::transition(Level::ProbeExcited, Level::ProbeGround).scaled(c(2.0));
    let model = LindbladModel::new(Operator::zero(), vec![pump]);
    match channel_from_model(&model, 2.0, 0.05, LeakageHandling::Renormalize) {
        Err(Error::Leakage { leakage, .. }) => assert!(leakage > MAX_LEAKAGE),
        other => panic!("expected leakage error, got {other:?}"),
    }
}

#[test]
fn default_gate_channel_is_cptp() {
    let ch = channel_from_gate(&GateParams::default(), 15.0).unwrap();
    let chi = choi_matrix(&ch);
    assert!((chi.report.trace - 1.0).abs() < 1e-8);
    assert!(chi.report.min_eigenvalue >= -1e-8);
    assert!(chi.report.hermiticity_error < 1e-12);
    assert!(chi.report.tp_residual < 1e-10);
    assert!(ch.max_leakage() < 1e-3);
    assert_eq!(ch.leakage.len(), 16);

    let raw = channel_from_model(
        &LindbladModel::for_gate(&GateParams::default()),
        15.0,
        CHANNEL_STEP,
        LeakageHandling::TraceDecreasing,
    )
    .unwrap();
    let raw_chi = choi_matrix(&raw);
    assert!(raw_chi.report.trace <= 1.0 + 1e-12);
    assert!(raw_chi.report.min_eigenvalue >= -1e-8);
}

#[test]
fn fidelity_rejects_unnormalized_states() {
    let chi = ChoiMatrix::from_matrix(CMatrix::identity(16, 16) / c(8.0)).unwrap();
    assert!(matches!(
        process_fidelity(&chi, &ideal_cphase_choi(0.0)),
        Err(Error::Normalization(_))
    ));
}

#[test]
fn decay_never_helps() {
    let mut last = f64::INFINITY;
    for gamma in [0.0, 0.5, 1.0, 2.0] {
        let a = assess_gate(&GateParams { gamma, ..GateParams::default() }, 15.0).unwrap();
        let against_extracted = a.candidates.iter().find(|k| k.name.contains("phi")).unwrap().fidelity;
        assert!(against_extracted <= last + 1e-12, "gamma {gamma}: {against_extracted} after {last}");
        last = against_extracted;
    }
}

proptest! {
    #[test]
    fn cphase_overlaps_match_trace_formula(a in -3.2f64..3.2, b in -3.2f64..3.2) {
        let (ca, cb) = (ideal_cphase_choi(a), ideal_cphase_choi(b));
        let f = process_fidelity(&ca, &cb).unwrap();
        let expected = (c(3.0) + Complex64::from_polar(1.0, b - a)).norm_sqr() / 16.0;
        prop_assert!((f - expected).abs() < 1e-12);
        prop_assert!((f - process_fidelity(&cb, &ca).unwrap()).abs() < 1e-14);
        prop_assert!((ca.report.purity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_symmetric_for_pure_ideal(phi in -3.2f64..3.2, weight in 0.0f64..1.0) {
        let id = choi_matrix(&TwoQubitChannel::identity());
        let dep = choi_matrix(&TwoQubitChannel::depolarizing());
        let mixed = ChoiMatrix::from_matrix(id.matrix() * c(weight) + dep.matrix() * c(1.0 - weight)).unwrap();
        let ideal = ideal_cphase_choi(phi);
        let (x, y) = (process_fidelity(&mixed, &ideal).unwrap(), process_fidelity(&ideal, &mixed).unwrap());
        prop_assert!((x - y).abs() < 1e-14);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
    }
}
