use gem_xpm::lindblad::*;
use gem_xpm::tomography::assess_gate;
use gem_xpm::Error;
use num_complex::Complex64;
use proptest::prelude::*;

const DIM: usize = HilbertSpace::DIM;

fn exact(t_end: f64, dt: f64) -> EvolveOptions {
    EvolveOptions {
        t_end,
        dt,
        record_every: 1,
        integrator: Integrator::Exact,
    }
}

fn excited_state() -> DensityOperator {
    let mut psi = vec![Complex64::new(0.0, 0.0); DIM];
    psi[HilbertSpace::index(Level::ProbeExcited, 0, 0)] = Complex64::new(1.0, 0.0);
    DensityOperator::pure(&psi).unwrap()
}

fn bare_decay() -> LindbladModel {
    LindbladModel::new(
        Operator::zero(),
        vec![Operator::transition(Level::ProbeGround, Level::ProbeExcited)],
    )
}

#[test]
fn default_gate_run_stays_physical() {
    let model = LindbladModel::for_gate(&GateParams::default());
    let traj = evolve(&initial_state(), &model, &exact(15.0, 0.05)).unwrap();
    for s in &traj.states {
        assert!((s.trace().re - 1.0).abs() < 1e-8);
        assert!(s.trace().im.abs() < 1e-12);
        assert!(s.min_eigenvalue() >= -1e-8);
        assert!(s.hermiticity_error() < 1e-12);
    }
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    assert!((traj.times.last().unwrap() - 15.0).abs() < 1e-12);
}

#[test]
fn lossless_run_is_unitary() {
    let params = GateParams {
        gamma: 0.0,
        ..GateParams::default()
    };
    let model = LindbladModel::for_gate(&params);
    let rho0 = initial_state();
    let traj = evolve(&rho0, &model, &exact(15.0, 0.05)).unwrap();
    let eig0 = rho0.eigenvalues();
    for s in traj.states.iter().step_by(30) {
        assert!((s.purity() - rho0.purity()).abs() < 1e-8);
        for (a, b) in s.eigenvalues().iter().zip(&eig0) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn two_level_decay_matches_exponential() {
    let model = bare_decay();
    for integrator in [Integrator::Exact, Integrator::Rk4] {
        let traj = evolve(
            &excited_state(),
            &model,
            &EvolveOptions {
                t_end: 5.0,
                dt: 0.01,
                record_every: 50,
                integrator,
            },
        )
        .unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let p = s.population(Level::ProbeExcited);
            assert!((p - (-t).exp()).abs() < 1e-6, "{integrator:?} t {t}: {p}");
            assert!((s.population(Level::ProbeGround) + p - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn frozen_when_nothing_acts() {
    let model = LindbladModel::new(Operator::zero(), Vec::new());
    let rho0 = initial_state();
    let traj = evolve(&rho0, &model, &exact(3.0, 0.1)).unwrap();
    assert_eq!(traj.last().matrix(), rho0.matrix());
    let traj = evolve(
        &rho0,
        &model,
        &EvolveOptions {
            integrator: Integrator::Rk4,
            ..exact(3.0, 0.1)
        },
    )
    .unwrap();
    assert_eq!(traj.last().matrix(), rho0.matrix());
}

#[test]
fn explicit_step_bound_is_enforced() {
    let params = GateParams::default();
    let model = LindbladModel::for_gate(&params);
    let opts = EvolveOptions {
        t_end: 0.01,
        dt: 1e-3,
        record_every: 1,
        integrator: Integrator::Rk4,
    };
    assert!(matches!(evolve(&initial_state(), &model, &opts), Err(Error::Unstable { .. })));
    assert!(params.max_step() < 2e-4);
}

#[test]
fn explicit_and_exact_agree_over_a_short_window() {
    let params = GateParams::default();
    let model = LindbladModel::for_gate(&params);
    let rho0 = initial_state();
    let a = evolve(&rho0, &model, &exact(0.5, 0.05)).unwrap();
    let deviation = |dt: f64| {
        let b = evolve(
            &rho0,
            &model,
            &EvolveOptions {
                t_end: 0.5,
                dt,
                record_every: 1000,
                integrator: Integrator::Rk4,
            },
        )
        .unwrap();
        (a.last().matrix() - b.last().matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    };
    let (d1, d2) = (deviation(params.max_step()), deviation(params.max_step() / 2.0));
    assert!(d1 < 1e-3, "max deviation {d1}");
    // Fourth-order convergence towards the exact propagator.
    let order = (d1 / d2).log2();
    assert!((order - 4.0).abs() < 0.5, "observed order {order}");
}

#[test]
fn phase_converges_in_step() {
    let params = GateParams::default();
    let coarse = phase_trace(&params, 15.0, 0.1, 1000).unwrap();
    let fine = phase_trace(&params, 15.0, 0.05, 1000).unwrap();
    let (a, b) = (*coarse.phi.last().unwrap(), *fine.phi.last().unwrap());
    assert!((a - b).abs() < 0.01 * b.abs());
}

#[test]
fn conditional_phase_ignores_global_phase() {
    let model = LindbladModel::for_gate(&GateParams::default());
    let rho = evolve(&initial_state(), &model, &exact(5.0, 0.05)).unwrap().last().clone();
    let phi = conditional_phase(&rho).unwrap();
    for theta in [0.3, -1.7, 3.0] {
        assert!((conditional_phase(&rho.with_global_phase(theta)).unwrap() - phi).abs() < 1e-14);
    }
}

#[test]
fn initial_state_has_no_conditional_phase() {
    assert_eq!(conditional_phase(&initial_state()).unwrap(), 0.0);
    let trace = phase_trace(&GateParams::default(), 1.0, 0.1, 2).unwrap();
    assert_eq!(trace.phi[0], 0.0);
    assert!(trace.times.windows(2).all(|w| w[1] > w[0]));
    let mut empty = vec![Complex64::new(0.0, 0.0); DIM];
    empty[HilbertSpace::index(Level::ProbeGround, 0, 0)] = Complex64::new(1.0, 0.0);
    let ground = DensityOperator::pure(&empty).unwrap();
    assert!(matches!(conditional_phase(&ground), Err(Error::UndefinedPhase(_))));
    assert!(matches!(gate_fidelity(&excited_state(), 0.0), Err(Error::LeftSubspace(_))));
}

#[test]
fn phase_rate_follows_stark_shift_of_dressed_photon() {
    let params = GateParams::default();
    let trace = phase_trace(&params, 15.0, 0.05, 20).unwrap();
    let at = |t: f64| {
        let i = trace.times.iter().position(|x| (x - t).abs() < 1e-9).unwrap();
        trace.phi[i]
    };
    let rate = (at(15.0) - at(10.0)) / 5.0;
    let g = params.effective_g24();
    let oracle = g * g * params.delta4 / (params.gamma * params.gamma + params.delta4 * params.delta4);
    let ratio = rate.abs() / oracle;
    assert!((0.5..=2.0).contains(&ratio), "rate {rate} oracle {oracle}");
}

#[test]
fn far_detuned_lossless_gate_is_clean() {
    let params = GateParams {
        gamma: 0.0,
        delta4: 2000.0,
        ..GateParams::default()
    };
    let model = LindbladModel::for_gate(&params);
    let rho = evolve(&initial_state(), &model, &exact(15.0, 0.05)).unwrap().last().clone();
    let phi = conditional_phase(&rho).unwrap();
    let f = gate_fidelity(&rho, phi).unwrap();
    assert!(f > 0.999, "fidelity {f}");
}

#[test]
fn state_and_process_fidelity_agree() {
    let a = assess_gate(&GateParams::default(), 15.0).unwrap();
    let process = a.best_candidate().fidelity;
    assert!((a.state_fidelity - process).abs() < 0.05, "state {} process {}", a.state_fidelity, process);
}

#[test]
fn hamiltonian_structure() {
    let params = GateParams::default();
    let h = build_hamiltonian(&params).to_dense();
    assert_eq!(h.adjoint(), h);
    let e = h[(
        HilbertSpace::index(Level::ProbeExcited, 0, 0),
        HilbertSpace::index(Level::ProbeGround, 1, 0),
    )];
    assert!((e.re - 0.085 * 1e7f64.sqrt()).abs() < 1e-12 && e.im == 0.0);
    let dark = GateParams {
        g: 0.0,
        omega_c: 0.0,
        omega_c_prime: 0.0,
        ..params
    };
    let d = build_hamiltonian(&dark).to_dense();
    for r in 0..DIM {
        for c in 0..DIM {
            if r != c {
                assert_eq!(d[(r, c)], Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn decay_fills_ground_states() {
    let model = LindbladModel::for_gate(&GateParams {
        g: 0.0,
        omega_c: 0.0,
        omega_c_prime: 0.0,
        ..GateParams::default()
    });
    let mixed = DensityOperator::from_matrix(gem_xpm::lindblad::CMatrix::identity(DIM, DIM) / Complex64::new(DIM as f64, 0.0)).unwrap();
    let d = lindblad_rhs(&mixed, &model).unwrap();
    for i in 0..DIM {
        let (level, _, _) = HilbertSpace::decompose(i);
        if level.is_excited() {
            assert!(d[(i, i)].re < 0.0);
        } else {
            assert!(d[(i, i)].re >= 0.0);
        }
    }
}

fn random_state() -> impl Strategy<Value = DensityOperator> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), DIM)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| {
            let psi: Vec<Complex64> = v.iter().map(|(a, b)| Complex64::new(*a, *b)).collect();
            let n = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            DensityOperator::pure(&psi.iter().map(|c| c / n).collect::<Vec<_>>()).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_is_traceless_and_hermitian(rho in random_state(), gamma in 0.0f64..3.0) {
        let model = LindbladModel::for_gate(&GateParams { gamma, ..GateParams::default() });
        let d = lindblad_rhs(&rho, &model).unwrap();
        let scale = d.iter().map(|v| v.norm()).fold(1.0, f64::max);
        prop_assert!(d.trace().norm() < 1e-12 * scale);
        let asym = (&d - d.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!(asym < 1e-12 * scale);
    }

    #[test]
    fn short_evolution_keeps_state_physical(rho in random_state(), t in 0.1f64..3.0) {
        let model = LindbladModel::for_gate(&GateParams::default());
        let out = evolve(&rho, &model, &exact(t, 0.05)).unwrap();
        let last = out.last();
        prop_assert!((last.trace().re - 1.0).abs() < 1e-8);
        prop_assert!(last.min_eigenvalue() >= -1e-8);
        prop_assert!(last.purity() <= 1.0 + 1e-8);
    }
}
