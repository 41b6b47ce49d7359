use gem_xpm::maxwell_bloch::*;
use gem_xpm::model::*;
use gem_xpm::xpm::*;
use gem_xpm::Error;
use proptest::prelude::*;

fn desk() -> EnsembleParams {
    EnsembleParams::desk_scale()
}

fn short_setup() -> StorageSetup {
    let params = desk();
    StorageSetup {
        grid: build_grid(&params, 64, 1024, 40.0).unwrap(),
        gradient: GradientSchedule::storage(2.0, 20.0, 40.0).unwrap(),
        coupling: CouplingSchedule::always_on(),
        params,
    }
}

/// Phase of a constant envelope written out by hand.
fn rectangle_oracle(omega: f64, delta: f64, gamma: f64, span: f64) -> f64 {
    span * omega * omega * delta / (gamma * gamma + delta * delta)
}

#[test]
fn free_signal_values() {
    assert_eq!(phi_free_signal(0.0, 5.0, 2.0, 1.0).unwrap(), 0.0);
    assert!((phi_free_signal(1.0, 1.0, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
    assert!(matches!(phi_free_signal(1.0, 0.0, 1.0, 0.0), Err(Error::Singular(_))));
    let mut last = f64::INFINITY;
    for d in [1.0, 2.0, 5.0, 50.0, 500.0] {
        let v = phi_free_signal(3.0, d, 2.0, 1.0).unwrap();
        assert!(v < last);
        last = v;
    }
    let far = phi_free_signal(3.0, 1e6, 2.0, 1.0).unwrap();
    assert!((far / (9.0 * 2.0 / 2e6) - 1.0).abs() < 1e-9);
}

#[test]
fn stored_pair_trivial_cases() {
    let zero = phi_stored_pair(&[0.0; 64], 20.0, 1.0, 0.0, 10.0).unwrap();
    assert_eq!((zero.phase, zero.loss_factor), (0.0, 1.0));

    let resonant = phi_stored_pair(&[2.0; 100], 0.0, 1.0, 0.0, 3.0).unwrap();
    assert_eq!(resonant.phase, 0.0);
    assert!((resonant.loss_factor - (-12.0f64).exp()).abs() < 1e-15);

    assert!(phi_stored_pair(&[1.0; 63], 20.0, 1.0, 0.0, 1.0).is_err());
    assert!(phi_stored_pair(&[1.0; 64], 20.0, 1.0, 2.0, 2.0).is_err());
    assert!(matches!(phi_stored_pair(&[1.0; 64], 0.0, 0.0, 0.0, 1.0), Err(Error::Singular(_))));
}

#[test]
fn coupling_loss_values() {
    assert_eq!(coupling_loss_rate(0.0, 600.0, 1.0).unwrap(), 0.0);
    let r = coupling_loss_rate(20.0, 600.0, 1.0).unwrap();
    assert!((r - 1.0 / 900.0).abs() < 1e-15);
    let quarter = coupling_loss_rate(20.0, 1200.0, 1.0).unwrap();
    assert!((quarter * 4.0 - r).abs() < 1e-15);
    assert!(matches!(coupling_loss_rate(20.0, 0.0, 1.0), Err(Error::Singular(_))));
}

#[test]
fn scattering_exponent_from_recall_drop() {
    let x = scattering_consistency(0.07, 0.53).unwrap();
    assert!((x - (53.0f64 / 7.0).ln()).abs() < 1e-14);
    assert!((x - 2.02).abs() < 0.01);
    assert_eq!(scattering_consistency(0.4, 0.4).unwrap(), 0.0);
    assert!(scattering_consistency(0.5, 0.4).is_err());
    assert!(scattering_consistency(0.0, 0.4).is_err());
}

#[test]
fn single_photon_estimate_order_of_magnitude() {
    let mode = PhotonMode {
        beam_waist: 5e-3,
        pulse_duration: 1e-6,
    };
    let t = TransitionData::rb87_d2();
    let delta = 2.0e9 / 6.0666e6;
    let e = single_photon_estimate(&mode, delta, 1.0, &t).unwrap();
    assert!(e.phase > 1e-13 && e.phase < 1e-11, "phase {}", e.phase);
    let closer = single_photon_estimate(&mode, delta / 100.0, 1.0, &t).unwrap();
    let ratio = closer.phase / e.phase;
    let exact = (1.0 + delta * delta) / (1.0 + delta * delta / 1e4) / 100.0;
    assert!((ratio / exact - 1.0).abs() < 1e-9);
    assert!((ratio / 100.0 - 1.0).abs() < 0.1, "ratio {ratio}");
    let dark = TransitionData {
        dipole_moment: 0.0,
        ..t
    };
    assert_eq!(single_photon_estimate(&mode, delta, 1.0, &dark).unwrap().phase, 0.0);
    let bad = PhotonMode {
        beam_waist: 0.0,
        ..mode
    };
    assert!(single_photon_estimate(&bad, delta, 1.0, &t).is_err());
}

#[test]
fn line_fit_recovers_exact_line() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 1.0).collect();
    let f = LineFit::fit(&x, &y).unwrap();
    assert!((f.slope - 0.5).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
    assert!((f.r_squared - 1.0).abs() < 1e-14);
    assert!(LineFit::fit(&[1.0], &[1.0]).is_err());
}

#[test]
fn spm_scan_single_factor_matches_propagate() {
    let setup = short_setup();
    let probe = PulseSpec::new(1.0, 8.0, 3.0).unwrap();
    let scan = spm_scan(&setup, &probe, &[1.0], None).unwrap();
    let direct = propagate(&setup.params, &probe, &setup.gradient, &setup.grid, None).unwrap();
    assert_eq!(scan, vec![(1.0, direct.echo_phase.unwrap())]);
    assert!(spm_scan(&setup, &probe, &[1.0, -2.0], None).is_err());
}

#[test]
fn spm_scan_phase_independent_of_probe_amplitude() {
    let setup = short_setup();
    let probe = PulseSpec::new(1.0, 8.0, 3.0).unwrap();
    let factors = [0.1, 1.0, 10.0];
    let plain = spm_scan(&setup, &probe, &factors, None).unwrap();
    let drive = apply_stark_drive(&PulseSpec::new(4.0, 15.0, 2.0).unwrap(), &setup.params, SignalRoute::Stored);
    let driven = spm_scan(&setup, &probe, &factors, Some(&drive)).unwrap();
    for rows in [&plain, &driven] {
        for (a, b) in rows.iter().zip(rows.iter().skip(1)) {
            assert!((a.1 - b.1).abs() < 1e-6);
        }
    }
    assert!(wrap_phase(driven[0].1 - plain[0].1).abs() > 0.1);
}

#[test]
fn linearity_scan_needs_enough_points() {
    let setup = short_setup();
    let probe = PulseSpec::new(1.0, 8.0, 3.0).unwrap();
    let signal = PulseSpec::new(1.0, 15.0, 2.0).unwrap();
    assert!(matches!(
        xpm_linearity_scan(&setup, &probe, &signal, &[1.0, 2.0, 3.0], SignalRoute::Free),
        Err(Error::Fit(_))
    ));
}

#[test]
fn linearity_scan_short_grid() {
    let setup = short_setup();
    let probe = PulseSpec::new(1.0, 8.0, 3.0).unwrap();
    let signal = PulseSpec::new(1.0, 15.0, 2.0).unwrap();
    let amps = [2.0, 4.0, 6.0, 8.0, 10.0];
    let report = xpm_linearity_scan(&setup, &probe, &signal, &amps, SignalRoute::Free).unwrap();
    assert!((report.analytic_fit.r_squared - 1.0).abs() < 1e-12);
    assert!(report.analytic_fit.intercept.abs() < 1e-12);
    assert!(report.numeric_fit.r_squared > 0.999);
    assert!(report.numeric_relative_intercept() < 0.01);
    // The solver applies the full Stark shift; the closed form carries a 1/2.
    let ratio = report.numeric_fit.slope / report.analytic_fit.slope;
    assert!((ratio - 2.0).abs() < 0.02, "slope ratio {ratio}");
    let phases: Vec<f64> = report.rows.iter().map(|r| r.numeric_phase).collect();
    assert!(phases.windows(2).all(|w| w[1] > w[0]));
}

fn double_scenario(hold: f64) -> (EnsembleParams, PulseSpec, PulseSpec, GradientSchedule, Grid) {
    let p = desk();
    let (tau1, tau2) = (12.0, 12.0 + hold);
    let t_max = tau2 + 23.0;
    let probe = PulseSpec::new(1.0, 3.0, 1.5).unwrap();
    let signal = PulseSpec::new(1.0, 5.0, 2.0).unwrap();
    let sched = GradientSchedule::with_hold(2.0, tau1, tau2, t_max).unwrap();
    let grid = build_grid(&p, 256, 4096, t_max).unwrap();
    (p, probe, signal, sched, grid)
}

#[test]
fn double_storage_matches_quadrature() {
    let (p, probe, signal, sched, grid) = double_scenario(10.0);
    let r = double_storage_run(&p, &probe, &signal, &sched, &grid).unwrap();
    let (tau1, tau2) = r.hold;
    let envelope = r.weighted_signal_envelope(257);
    let quad = phi_stored_pair(&envelope, p.delta4, p.gamma, tau1, tau2).unwrap();
    assert!(r.xpm.phase > 0.0);
    assert!((r.xpm.phase / quad.phase - 1.0).abs() < 0.1, "solver {} quadrature {}", r.xpm.phase, quad.phase);
    assert!(r.xpm.loss_factor > 0.0 && r.xpm.loss_factor <= 1.0);
    assert_eq!(r.xpm.interaction_time, 10.0);
}

#[test]
fn double_storage_phase_grows_with_hold() {
    let run = |hold| {
        let (p, probe, signal, sched, grid) = double_scenario(hold);
        double_storage_run(&p, &probe, &signal, &sched, &grid).unwrap().xpm.phase
    };
    let ratio = run(20.0) / run(10.0);
    assert!((ratio - 2.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn double_storage_without_signal_has_no_phase() {
    let (p, probe, signal, sched, grid) = double_scenario(10.0);
    let r = double_storage_run(&p, &probe, &signal.with_amplitude(0.0), &sched, &grid).unwrap();
    assert_eq!(r.xpm.phase, 0.0);
    assert_eq!(r.xpm.loss_factor, 1.0);
}

#[test]
fn double_storage_wavenumbers_run_opposite_then_freeze() {
    let (p, probe, signal, sched, grid) = double_scenario(10.0);
    let r = double_storage_run(&p, &probe, &signal, &sched, &grid).unwrap();
    let slope = |traj: &[(f64, f64)], a: f64, b: f64| {
        let pts: Vec<_> = traj.iter().filter(|(t, _)| *t >= a && *t <= b).collect();
        (pts.last().unwrap().1 - pts[0].1) / (pts.last().unwrap().0 - pts[0].0)
    };
    let probe_k = coherence_peak_trajectory(r.probe_coherence(), 8);
    let signal_k = coherence_peak_trajectory(r.signal_coherence(), 8);
    let (before_p, before_s) = (slope(&probe_k, 7.0, 11.5), slope(&signal_k, 8.0, 11.5));
    assert!(before_p < 0.0 && before_s > 0.0, "slopes {before_p} {before_s}");
    assert_eq!(slope(&probe_k, 12.5, 21.5), 0.0);
    assert_eq!(slope(&signal_k, 12.5, 21.5), 0.0);
}

#[test]
fn double_storage_protocol_checks() {
    let (p, probe, signal, sched, grid) = double_scenario(10.0);
    let plain = GradientSchedule::storage(2.0, 12.0, grid.t_max).unwrap();
    assert!(matches!(double_storage_run(&p, &probe, &signal, &plain, &grid), Err(Error::Protocol(_))));
    assert!(matches!(double_storage_run(&p, &signal, &probe, &sched, &grid), Err(Error::Protocol(_))));
    let late = PulseSpec::new(1.0, 13.0, 1.0).unwrap();
    assert!(matches!(double_storage_run(&p, &probe, &late, &sched, &grid), Err(Error::Protocol(_))));
    let frozen = GradientSchedule::with_hold(0.0, 12.0, 22.0, grid.t_max).unwrap();
    assert!(matches!(double_storage_run(&p, &probe, &signal, &frozen, &grid), Err(Error::Protocol(_))));
}

proptest! {
    #[test]
    fn rectangle_matches_closed_form(
        omega in 0.01f64..50.0,
        delta in -500.0f64..500.0,
        gamma in 0.1f64..5.0,
        tau1 in 0.0f64..50.0,
        span in 0.1f64..30.0,
        samples in 64usize..400,
    ) {
        let r = phi_stored_pair(&vec![omega; samples], delta, gamma, tau1, tau1 + span).unwrap();
        let expected = rectangle_oracle(omega, delta, gamma, span);
        prop_assert!((r.phase - expected).abs() <= 1e-10 * expected.abs().max(1e-300));
    }

    #[test]
    fn stored_form_is_twice_free_form(
        omega in 0.01f64..50.0,
        delta in 0.1f64..500.0,
        span in 0.1f64..30.0,
    ) {
        let stored = phi_stored_pair(&vec![omega; 128], delta, 1.0, 0.0, span).unwrap().phase;
        let free = phi_free_signal(omega, delta, span, 1.0).unwrap();
        prop_assert!((stored / free - 2.0).abs() < 1e-12);
    }

    #[test]
    fn time_translation_invariant(
        amps in prop::collection::vec(0.0f64..5.0, 64..200),
        shift in -100.0f64..100.0,
        tau1 in 0.0f64..10.0,
        span in 0.5f64..20.0,
    ) {
        let a = phi_stored_pair(&amps, 20.0, 1.0, tau1, tau1 + span).unwrap();
        let b = phi_stored_pair(&amps, 20.0, 1.0, tau1 + shift, tau1 + span + shift).unwrap();
        prop_assert!((a.phase - b.phase).abs() <= 1e-9 * a.phase.abs().max(1e-12));
        prop_assert!((a.loss_factor - b.loss_factor).abs() <= 1e-9);
    }

    #[test]
    fn loss_monotone_in_intensity(
        amps in prop::collection::vec(0.0f64..5.0, 64..200),
        scale in 1.0f64..3.0,
        delta in -50.0f64..50.0,
    ) {
        let louder: Vec<f64> = amps.iter().map(|a| a * scale).collect();
        let a = phi_stored_pair(&amps, delta, 1.0, 0.0, 5.0).unwrap();
        let b = phi_stored_pair(&louder, delta, 1.0, 0.0, 5.0).unwrap();
        prop_assert!(b.loss_factor <= a.loss_factor);
        prop_assert!((0.0..=1.0).contains(&b.loss_factor));
    }
}
