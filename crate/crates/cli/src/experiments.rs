//! One runner per experiment kind. Every runner takes a config already in
//! units of the decay rate.

use gem_xpm::lindblad::phase_trace;
use gem_xpm::maxwell_bloch::{excitation_residual, polariton_transform, verify_fourier_relation, StorageRun};
use gem_xpm::model::build_grid;
use gem_xpm::tomography::{assess_gate, channel_from_gate, choi_matrix, ideal_cphase_choi};
use gem_xpm::xpm::{
    coherence_peak_trajectory, double_storage_run, phi_free_signal, phi_stored_pair, xpm_linearity_scan, LineFit,
    StorageSetup,
};
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, GradientSpec};
use crate::error::CliError;
use crate::output::{RunOutput, Scalar, Table};

const RAD: &str = "rad";
const TIME: &str = "1/gamma";
const RATE: &str = "gamma";

/// Run a single (non-sweep) experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    match cfg.experiment {
        ExperimentKind::Storage => storage(cfg),
        ExperimentKind::XpmFree => xpm_free(cfg),
        ExperimentKind::XpmDouble => xpm_double(cfg),
        ExperimentKind::Gate => gate(cfg),
        ExperimentKind::Tomography => tomography(cfg),
        ExperimentKind::Sweep => Err(CliError::Config("sweeps are run through `gemxpm sweep`".into())),
    }
}

fn setup(cfg: &ExperimentConfig) -> Result<StorageSetup, CliError> {
    let params = cfg.ensemble_params();
    params.validate()?;
    let g = cfg.grid.as_ref().ok_or_else(|| CliError::Config("grid: missing".into()))?;
    let grid = build_grid(&params, g.nz, g.nt, g.t_max)?;
    let gradient = cfg
        .gradient
        .as_ref()
        .ok_or_else(|| CliError::Config("gradient: missing".into()))?
        .build(g.t_max)?;
    Ok(StorageSetup {
        params,
        grid,
        gradient,
        coupling: cfg.coupling.clone().unwrap_or_default(),
    })
}

fn storage(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let p = &s.params;
    for probe in &cfg.probe {
        probe.validate()?;
    }
    let drive = cfg.stark.as_ref().map(|st| st.drive(p));
    let mut run = StorageRun::new(p, s.grid, &s.gradient)
        .coupling(s.coupling.clone())
        .stark(drive.as_ref());
    for probe in &cfg.probe {
        run = run.input(*probe);
    }
    let r = run.run()?;
    let diag = cfg.diagnostics.clone().unwrap_or_default();

    let mut exit = Table::new(
        "exit_field",
        &[("t_gamma", TIME), ("re_E", "1"), ("im_E", "1"), ("abs_E", "1")],
    );
    for (n, e) in r.field.exit_series().iter().enumerate().step_by(diag.output_stride) {
        exit.push(vec![s.grid.t(n), e.re, e.im, e.norm()]);
    }

    let mut out = RunOutput::default();
    out.scalars = vec![
        Scalar::new("efficiency", r.efficiency, "1"),
        Scalar::new("input_energy", r.input_energy, "field^2/gamma"),
        Scalar::new("transmitted_energy", r.transmitted_energy, "field^2/gamma"),
        Scalar::new("echo_energy", r.echo_energy, "field^2/gamma"),
        Scalar::maybe("echo_centroid", r.echo_centroid, TIME),
        Scalar::maybe("echo_phase", r.echo_phase, RAD),
        Scalar::new("recall_time", r.recall_time, TIME),
    ];
    if p.gamma0 == 0.0 && drive.is_none() {
        out.scalars
            .push(Scalar::new("excitation_residual", excitation_residual(&r, p, 8), "1"));
    }
    out.tables.push(exit);

    if let Some([t0, t1]) = diag.fourier_window {
        let pol = polariton_transform(&r.field, &r.coherence, p)?;
        let mut table = Table::new(
            "polariton",
            &[("t_gamma", TIME), ("peak_k", "1/L"), ("coherence_peak_k", "1/L"), ("fourier_residual", "1")],
        );
        let mut worst: f64 = 0.0;
        for n in (pol.sample_at(t0)..=pol.sample_at(t1)).step_by(diag.k_stride) {
            let t = s.grid.t(n);
            let residual = verify_fourier_relation(&pol, p, t)?;
            worst = worst.max(residual);
            table.push(vec![t, pol.peak_k(n), pol.coherence_peak_k(n), residual]);
        }
        let fit = LineFit::fit(&table.column("t_gamma").unwrap(), &table.column("peak_k").unwrap())?;
        out.scalars.push(Scalar::new("k_bin_width", pol.bin_width(), "1/L"));
        out.scalars.push(Scalar::new("peak_k_slope", fit.slope, "gamma/L"));
        out.scalars.push(Scalar::new("max_fourier_residual", worst, "1"));
        out.tables.push(table);
    }
    Ok(out)
}

fn xpm_free(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let x = cfg.xpm_free.as_ref().ok_or_else(|| CliError::Config("xpm_free: missing".into()))?;
    let p = cfg.ensemble_params();
    p.validate()?;
    let mut out = RunOutput::default();

    let mut theory = Table::new("phase_theory", &[("Omega_s", RATE), ("phi_rad", RAD)]);
    for &a in &x.amplitudes {
        theory.push(vec![a, phi_free_signal(a, p.delta3, x.tau, p.gamma)?]);
    }
    if x.amplitudes.len() >= 2 {
        let sq: Vec<f64> = x.amplitudes.iter().map(|a| a * a).collect();
        let fit = LineFit::fit(&sq, &theory.column("phi_rad").unwrap())?;
        out.scalars.push(Scalar::new("theory_slope", fit.slope, "rad/gamma^2"));
    }
    out.tables.push(theory);

    if let Some(signal) = &x.signal {
        let s = setup(cfg)?;
        let probe = cfg.probe[0];
        let report = xpm_linearity_scan(&s, &probe, signal, &x.amplitudes, gem_xpm::maxwell_bloch::SignalRoute::Free)?;
        let mut scan = Table::new(
            "phase_scan",
            &[("Omega_s", RATE), ("phi_analytic_rad", RAD), ("phi_numeric_rad", RAD), ("efficiency", "1")],
        );
        for r in &report.rows {
            scan.push(vec![r.omega_s, r.analytic_phase, r.numeric_phase, r.efficiency]);
        }
        out.tables.push(scan);
        out.scalars.extend([
            Scalar::new("analytic_slope", report.analytic_fit.slope, "rad/gamma^2"),
            Scalar::new("numeric_slope", report.numeric_fit.slope, "rad/gamma^2"),
            Scalar::new("numeric_intercept", report.numeric_fit.intercept, RAD),
            Scalar::new("numeric_r_squared", report.numeric_fit.r_squared, "1"),
            Scalar::new("numeric_relative_intercept", report.numeric_relative_intercept(), "1"),
            Scalar::new("slope_ratio", report.numeric_fit.slope / report.analytic_fit.slope, "1"),
            Scalar::new("reference_efficiency", report.reference_efficiency, "1"),
        ]);
    }
    Ok(out)
}

fn xpm_double(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let d = cfg.double.as_ref().ok_or_else(|| CliError::Config("double: missing".into()))?;
    if let Some(GradientSpec::Storage { .. }) = cfg.gradient {
        return Err(CliError::Config("gradient.kind: needs a hold window".into()));
    }
    let s = setup(cfg)?;
    let probe = cfg.probe[0];
    probe.validate()?;
    d.signal.validate()?;
    let r = double_storage_run(&s.params, &probe, &d.signal, &s.gradient, &s.grid)?;
    let (tau1, tau2) = r.hold;
    let envelope = r.weighted_signal_envelope(d.envelope_samples);
    let quad = phi_stored_pair(&envelope, s.params.delta4, s.params.gamma, tau1, tau2)?;

    let mut traj = Table::new("k_trajectory", &[("t_gamma", TIME), ("probe_k", "1/L"), ("signal_k", "1/L")]);
    let probe_k = coherence_peak_trajectory(r.probe_coherence(), d.k_stride);
    let signal_k = coherence_peak_trajectory(r.signal_coherence(), d.k_stride);
    for ((t, kp), (_, ks)) in probe_k.iter().zip(&signal_k) {
        traj.push(vec![*t, *kp, *ks]);
    }
    let mut env = Table::new("hold_envelope", &[("t_gamma", TIME), ("signal_envelope", "1")]);
    let n = envelope.len();
    for (i, e) in envelope.iter().enumerate() {
        env.push(vec![tau1 + (tau2 - tau1) * i as f64 / (n - 1) as f64, *e]);
    }
    let mut out = RunOutput::default();
    out.scalars = vec![
        Scalar::new("phase", r.xpm.phase, RAD),
        Scalar::new("loss_factor", r.xpm.loss_factor, "1"),
        Scalar::new("interaction_time", r.xpm.interaction_time, TIME),
        Scalar::new("quadrature_phase", quad.phase, RAD),
        Scalar::new("quadrature_loss_factor", quad.loss_factor, "1"),
        Scalar::new("reference_efficiency", r.reference.efficiency, "1"),
        Scalar::new("driven_efficiency", r.driven.efficiency, "1"),
    ];
    out.tables = vec![traj, env];
    Ok(out)
}

fn gate(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let tr = cfg.trace.as_ref().ok_or_else(|| CliError::Config("trace: missing".into()))?;
    let params = cfg.gate_params();
    let trace = phase_trace(&params, tr.t_end, tr.dt, tr.record_every)?;
    let mut table = Table::new("phase_trace", &[("t_gamma", TIME), ("phi_rad", RAD), ("fidelity", "1")]);
    for i in 0..trace.times.len() {
        table.push(vec![trace.times[i], trace.phi[i], trace.fidelity[i]]);
    }
    let nearest = trace
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - params.gate_time).abs().total_cmp(&(b.1 - params.gate_time).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut out = RunOutput::default();
    out.scalars = vec![
        Scalar::new("gate_time", trace.times[nearest], TIME),
        Scalar::new("phase_at_gate", trace.phi[nearest], RAD),
        Scalar::new("fidelity_at_gate", trace.fidelity[nearest], "1"),
        Scalar::new("final_phase", *trace.phi.last().unwrap(), RAD),
        Scalar::new("final_fidelity", *trace.fidelity.last().unwrap(), "1"),
    ];
    out.tables.push(table);
    Ok(out)
}

fn tomography(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let spec = cfg.tomography.clone().unwrap_or(crate::config::TomographySpec {
        t_gate: 15.0,
        export_ideal: true,
    });
    let params = cfg.gate_params();
    let a = assess_gate(&params, spec.t_gate)?;
    let channel = channel_from_gate(&params, spec.t_gate)?;
    let chi = choi_matrix(&channel);
    let mut out = RunOutput::default();
    out.scalars = vec![
        Scalar::new("gate_time", spec.t_gate, TIME),
        Scalar::new("conditional_phase", a.conditional_phase, RAD),
        Scalar::new("state_fidelity", a.state_fidelity, "1"),
        Scalar::new("max_leakage", channel.max_leakage(), "1"),
        Scalar::new("choi_min_eigenvalue", a.cptp.min_eigenvalue, "1"),
        Scalar::new("choi_tp_residual", a.cptp.tp_residual, "1"),
    ];
    for c in &a.candidates {
        out.scalars.push(Scalar::new(&format!("process_fidelity[{}]", c.name), c.fidelity, "1"));
    }
    let details = json!({
        "gate_time": spec.t_gate,
        "conditional_phase": a.conditional_phase,
        "leakage": a.leakage,
        "candidates": a.candidates,
        "best": a.best_candidate().name,
        "leakage_handling": "renormalize",
    });
    out.chois.push(("choi".into(), chi, details));
    if spec.export_ideal {
        let phi = a.conditional_phase;
        out.chois.push((
            "choi_ideal".into(),
            ideal_cphase_choi(phi),
            json!({ "gate": "cphase", "phi": phi }),
        ));
    }
    Ok(out)
}
