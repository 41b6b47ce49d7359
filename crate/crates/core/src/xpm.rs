//! Cross-phase modulation from the ac-Stark effect: closed-form and
//! quadrature phase calculators, probe- and signal-amplitude scans, the
//! single-photon estimate and the double-storage protocol.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maxwell_bloch::{
    apply_stark_drive, CoherenceRecord, SignalRoute, StarkDrive, StorageResult, StorageRun,
};
use crate::model::{CouplingSchedule, EnsembleParams, GradientSchedule, Grid, PulseSpec};
use crate::spectral::{peak_bin, SpatialTransform};

/// Phase and surviving amplitude of the stored probe coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XpmResult {
    /// Radians.
    pub phase: f64,
    /// Fraction of the coherence amplitude that survives scattering.
    pub loss_factor: f64,
    pub interaction_time: f64,
}

/// `Omega_s^2 delta3 tau / (2 (gamma^2 + delta3^2))` for a signal of Rabi
/// frequency `omega_s` and duration `tau` passing through the memory.
pub fn phi_free_signal(omega_s: f64, delta3: f64, tau: f64, gamma: f64) -> Result<f64> {
    let denom = gamma * gamma + delta3 * delta3;
    if denom == 0.0 {
        return Err(Error::Singular("gamma and delta3 both vanish"));
    }
    Ok(omega_s * omega_s * delta3 * tau / (2.0 * denom))
}

/// Composite Simpson rule on uniform samples. An odd number of panels is
/// closed with Simpson's 3/8 rule on the last three.
pub fn simpson(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (samples[0] + samples[1]),
        3 => h / 3.0 * (samples[0] + 4.0 * samples[1] + samples[2]),
        _ => {
            let panels = n - 1;
            let even_end = if panels.is_multiple_of(2) { n - 1 } else { n - 4 };
            let mut acc = samples[0] + samples[even_end];
            for (i, v) in samples.iter().enumerate().take(even_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * h / 3.0;
            if panels % 2 == 1 {
                let s = &samples[n - 4..];
                total += 3.0 * h / 8.0 * (s[0] + 3.0 * s[1] + 3.0 * s[2] + s[3]);
            }
            total
        }
    }
}

/// Minimum number of envelope samples accepted by [`phi_stored_pair`].
pub const MIN_ENVELOPE_SAMPLES: usize = 64;

/// Phase `int |g E_s|^2 delta4 / (gamma^2 + delta4^2) dt` and surviving
/// amplitude `exp(-int |g E_s|^2 gamma / (gamma^2 + delta4^2) dt)` for a
/// signal envelope `|g E_s|` sampled uniformly over `[tau1, tau2]`.
pub fn phi_stored_pair(signal_envelope: &[f64], delta4: f64, gamma: f64, tau1: f64, tau2: f64) -> Result<XpmResult> {
    if !(tau2 > tau1) {
        return Err(invalid("tau2", format!("{tau2} must exceed tau1 = {tau1}")));
    }
    if signal_envelope.len() < MIN_ENVELOPE_SAMPLES {
        return Err(invalid(
            "signal_envelope",
            format!("{} samples; need at least {MIN_ENVELOPE_SAMPLES}", signal_envelope.len()),
        ));
    }
    let denom = gamma * gamma + delta4 * delta4;
    if denom == 0.0 {
        return Err(Error::Singular("gamma and delta4 both vanish"));
    }
    let h = (tau2 - tau1) / (signal_envelope.len() - 1) as f64;
    let intensity: Vec<f64> = signal_envelope.iter().map(|e| e * e).collect();
    let dose = simpson(&intensity, h);
    Ok(XpmResult {
        phase: dose * delta4 / denom,
        loss_factor: (-dose * gamma / denom).exp(),
        interaction_time: tau2 - tau1,
    })
}

/// Amplitude decay rate `gamma (Omega'_c / Delta')^2` of the stored signal
/// coherence.
pub fn coupling_loss_rate(omega_c_prime: f64, delta_prime: f64, gamma: f64) -> Result<f64> {
    if delta_prime == 0.0 {
        return Err(Error::Singular("delta_prime = 0"));
    }
    let r = omega_c_prime / delta_prime;
    Ok(gamma * r * r)
}

/// Everything a storage run needs besides its input pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSetup {
    pub params: EnsembleParams,
    pub grid: Grid,
    pub gradient: GradientSchedule,
    #[serde(default)]
    pub coupling: CouplingSchedule,
}

impl StorageSetup {
    pub fn run(&self, probe: &PulseSpec, stark: Option<&StarkDrive>) -> Result<StorageResult> {
        StorageRun::new(&self.params, self.grid, &self.gradient)
            .coupling(self.coupling.clone())
            .input(*probe)
            .stark(stark)
            .run()
    }
}

/// Recalled echo phase at each probe-amplitude factor.
pub fn spm_scan(
    setup: &StorageSetup,
    base_probe: &PulseSpec,
    amplitude_factors: &[f64],
    stark: Option<&StarkDrive>,
) -> Result<Vec<(f64, f64)>> {
    if let Some(f) = amplitude_factors.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(invalid("amplitude_factors", format!("factor {f} is not positive")));
    }
    amplitude_factors
        .par_iter()
        .map(|&f| {
            let probe = base_probe.with_amplitude(base_probe.peak_amplitude * f);
            let r = setup.run(&probe, stark)?;
            let phase = r
                .echo_phase
                .ok_or_else(|| Error::Protocol(format!("no echo at amplitude factor {f}")))?;
            Ok((f, phase))
        })
        .collect()
}

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LineFit {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Fit(format!("{} points", x.len())));
        }
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        if sxx == 0.0 {
            return Err(Error::Fit("all abscissae coincide".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
        let ss_res: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - (slope * a + intercept);
                r * r
            })
            .sum();
        let r_squared = if ss_tot == 0.0 {
            if ss_res == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 - ss_res / ss_tot
        };
        Ok(Self {
            slope,
            intercept,
            r_squared,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityRow {
    pub omega_s: f64,
    /// Closed form with the rectangular-equivalent signal duration.
    pub analytic_phase: f64,
    /// Echo phase shift from the full solver.
    pub numeric_phase: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub rows: Vec<LinearityRow>,
    /// Both fits are against `omega_s^2`.
    pub analytic_fit: LineFit,
    pub numeric_fit: LineFit,
    pub reference_efficiency: f64,
}

impl LinearityReport {
    /// `|intercept| / max |phase|` of the numeric fit.
    pub fn numeric_relative_intercept(&self) -> f64 {
        let max = self.rows.iter().map(|r| r.numeric_phase.abs()).fold(0.0, f64::max);
        if max == 0.0 {
            0.0
        } else {
            self.numeric_fit.intercept.abs() / max
        }
    }
}

/// Minimum number of signal amplitudes in a linearity scan.
pub const MIN_LINEARITY_POINTS: usize = 4;

/// Echo phase shift against `Omega_s^2`, from the closed form and from the
/// solver with a space-uniform drive of the given `route`.
pub fn xpm_linearity_scan(
    setup: &StorageSetup,
    probe: &PulseSpec,
    signal: &PulseSpec,
    signal_amplitudes: &[f64],
    route: SignalRoute,
) -> Result<LinearityReport> {
    if signal_amplitudes.len() < MIN_LINEARITY_POINTS {
        return Err(Error::Fit(format!(
            "{} signal amplitudes; need at least {MIN_LINEARITY_POINTS}",
            signal_amplitudes.len()
        )));
    }
    let p = &setup.params;
    let detuning = match route {
        SignalRoute::Free => p.delta3,
        SignalRoute::Stored => p.delta4,
    };
    let reference = setup.run(probe, None)?;
    let rows: Vec<LinearityRow> = signal_amplitudes
        .par_iter()
        .map(|&omega| {
            let pulse = signal.with_amplitude(omega);
            let drive = apply_stark_drive(&pulse, p, route);
            let r = setup.run(probe, Some(&drive))?;
            let numeric_phase = r
                .phase_shift_from(&reference)
                .ok_or_else(|| Error::Protocol("no echo".into()))?;
            Ok(LinearityRow {
                omega_s: omega,
                analytic_phase: phi_free_signal(omega, detuning, pulse.equivalent_duration(), p.gamma)?,
                numeric_phase,
                efficiency: r.efficiency,
            })
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = rows.iter().map(|r| r.omega_s * r.omega_s).collect();
    let ya: Vec<f64> = rows.iter().map(|r| r.analytic_phase).collect();
    let yn: Vec<f64> = rows.iter().map(|r| r.numeric_phase).collect();
    Ok(LinearityReport {
        analytic_fit: LineFit::fit(&x, &ya)?,
        numeric_fit: LineFit::fit(&x, &yn)?,
        rows,
        reference_efficiency: reference.efficiency,
    })
}

/// Optical mode of a single signal photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonMode {
    /// Beam radius in metres.
    pub beam_waist: f64,
    /// Pulse duration in seconds.
    pub pulse_duration: f64,
}

/// Dipole data of the optical transition, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionData {
    /// Dipole matrix element in C m.
    pub dipole_moment: f64,
    /// Optical angular frequency in rad/s.
    pub angular_frequency: f64,
    /// The rate `gamma` in s^-1, which fixes the unit system.
    pub gamma: f64,
}

impl TransitionData {
    /// Rubidium-87 D2 line, cycling dipole moment.
    pub fn rb87_d2() -> Self {
        Self {
            dipole_moment: 3.584_244e-29,
            angular_frequency: 2.0 * PI * 384.230_484_468_5e12,
            gamma: 2.0 * PI * 6.0666e6,
        }
    }
}

const HBAR: f64 = 1.054_571_817e-34;
const EPSILON_0: f64 = 8.854_187_812_8e-12;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinglePhotonEstimate {
    pub phase: f64,
    /// Single-photon Rabi frequency in units of `gamma`.
    pub rabi_frequency: f64,
    /// Single-photon field amplitude in V/m.
    pub field_amplitude: f64,
    /// `pi w^2 c tau` in m^3.
    pub mode_volume: f64,
    /// Pulse duration in units of `1/gamma`.
    pub duration: f64,
    pub mode: PhotonMode,
    pub transition: TransitionData,
    pub delta: f64,
    pub gamma: f64,
}

/// Order-of-magnitude XPM phase between single photons, with the
/// single-photon Rabi frequency `d sqrt(hbar w / (2 eps0 V)) / hbar` of a
/// pulse filling `V = pi w^2 c tau`. `delta` and `gamma` are in units of
/// `transition.gamma`.
pub fn single_photon_estimate(
    mode: &PhotonMode,
    delta: f64,
    gamma: f64,
    transition: &TransitionData,
) -> Result<SinglePhotonEstimate> {
    if !(mode.beam_waist > 0.0 && mode.pulse_duration > 0.0) {
        return Err(invalid("mode", "beam waist and pulse duration must be positive"));
    }
    if !(transition.gamma > 0.0 && transition.angular_frequency > 0.0) {
        return Err(invalid("transition", "rates must be positive"));
    }
    let volume = PI * mode.beam_waist * mode.beam_waist * SPEED_OF_LIGHT * mode.pulse_duration;
    let field = (HBAR * transition.angular_frequency / (2.0 * EPSILON_0 * volume)).sqrt();
    let rabi = transition.dipole_moment * field / HBAR / transition.gamma;
    let duration = mode.pulse_duration * transition.gamma;
    Ok(SinglePhotonEstimate {
        phase: phi_free_signal(rabi, delta, duration, gamma)?,
        rabi_frequency: rabi,
        field_amplitude: field,
        mode_volume: volume,
        duration,
        mode: *mode,
        transition: *transition,
        delta,
        gamma,
    })
}

/// Integrated intensity scattering exponent `-ln(eff_with / eff_without)`
/// implied by a drop in recall efficiency. Efficiency is intensity-like, so
/// this equals `2 int Gs dt` for an amplitude loss rate `Gs`.
pub fn scattering_consistency(eff_with: f64, eff_without: f64) -> Result<f64> {
    if !(eff_with > 0.0 && eff_with <= eff_without && eff_without <= 1.0) {
        return Err(invalid(
            "efficiency",
            format!("need 0 < {eff_with} <= {eff_without} <= 1"),
        ));
    }
    Ok(-(eff_with / eff_without).ln())
}

/// Result of the double-storage protocol.
#[derive(Debug, Clone)]
pub struct DoubleStorageResult {
    pub xpm: XpmResult,
    pub hold: (f64, f64),
    /// Probe run without the signal.
    pub reference: StorageResult,
    /// Probe run under the signal's Stark drive.
    pub driven: StorageResult,
    /// Signal memory run (opposite gradient, coupling left on).
    pub signal: StorageResult,
}

impl DoubleStorageResult {
    /// `sigma_12` under the signal drive.
    pub fn probe_coherence(&self) -> &CoherenceRecord {
        &self.driven.coherence
    }

    /// `sigma_1'2'`.
    pub fn signal_coherence(&self) -> &CoherenceRecord {
        &self.signal.coherence
    }

    /// Signal intensity seen by the stored probe during the hold, averaged
    /// over `z` with weight `|sigma_12(z, tau1)|^2`, returned as an envelope
    /// `sqrt(I)` on `samples` uniform points over the hold.
    pub fn weighted_signal_envelope(&self, samples: usize) -> Vec<f64> {
        let grid = *self.reference.coherence.grid();
        let (tau1, tau2) = self.hold;
        let n1 = ((tau1 / grid.dt()).ceil() as usize).min(grid.nt - 1);
        let weights: Vec<f64> = self.reference.coherence.slice(n1).iter().map(|v| v.norm_sqr()).collect();
        let total: f64 = weights.iter().sum();
        let field = &self.signal.field;
        let dt = grid.dt();
        (0..samples)
            .map(|i| {
                let t = tau1 + (tau2 - tau1) * i as f64 / (samples - 1) as f64;
                let x = t / dt;
                let n = (x.floor() as usize).min(grid.nt - 1);
                let f = x - n as f64;
                let intensity: f64 = (0..grid.nz)
                    .map(|j| {
                        let a = field.at(n, j).norm_sqr();
                        let b = if n + 1 < grid.nt {
                            field.at(n + 1, j).norm_sqr()
                        } else {
                            a
                        };
                        weights[j] * (a + (b - a) * f)
                    })
                    .sum::<f64>()
                    / total.max(f64::MIN_POSITIVE);
                intensity.sqrt()
            })
            .collect()
    }
}

/// Peak `k` of `|sigma(k)|` every `stride` samples, as `(t, k)` pairs.
pub fn coherence_peak_trajectory(coherence: &CoherenceRecord, stride: usize) -> Vec<(f64, f64)> {
    let grid = *coherence.grid();
    let transform = SpatialTransform::new(grid.nz, grid.length);
    let k = transform.k_axis();
    (0..grid.nt)
        .step_by(stride.max(1))
        .map(|n| {
            let s = transform.forward(coherence.slice(n));
            (grid.t(n), k[peak_bin(k, &s)])
        })
        .collect()
}

/// Store a probe and a later signal in two memories with opposite gradients,
/// freeze both with `eta = 0` on the hold window, switch the probe coupling
/// off while the signal coupling stays on, and let the signal's photonic
/// component Stark-shift the probe coherence. The phase is measured against
/// a signal-free reference run.
pub fn double_storage_run(
    params: &EnsembleParams,
    probe: &PulseSpec,
    signal: &PulseSpec,
    schedule: &GradientSchedule,
    grid: &Grid,
) -> Result<DoubleStorageResult> {
    const PATTERN: &str = "store under +eta, hold eta = 0 on [tau1, tau2], recall under -eta";
    let (tau1, tau2) = schedule
        .hold_window()
        .ok_or_else(|| Error::Protocol(format!("schedule has no hold window; expected: {PATTERN}")))?;
    if schedule.segments().first().map(|s| s.eta) == Some(0.0) {
        return Err(Error::Protocol(format!("storage starts with eta = 0; expected: {PATTERN}")));
    }
    if signal.center_time <= probe.center_time {
        return Err(Error::Protocol(format!(
            "signal (t = {}) must arrive after the probe (t = {})",
            signal.center_time, probe.center_time
        )));
    }
    if signal.center_time >= tau1 {
        return Err(Error::Protocol(format!(
            "signal (t = {}) must enter before the hold starts at {tau1}",
            signal.center_time
        )));
    }

    let signal_gradient = schedule.negated();
    let signal_run = StorageRun::new(params, *grid, &signal_gradient)
        .raman_ratio(params.raman_ratio_prime())
        .input(*signal)
        .run()?;

    let drive = StarkDrive::from_field(&signal_run.field, (tau1, tau2), params.delta4, params.gamma);
    let probe_coupling = CouplingSchedule::off_during(tau1, tau2);
    let probe_run = |stark: Option<&StarkDrive>| {
        StorageRun::new(params, *grid, schedule)
            .coupling(probe_coupling.clone())
            .input(*probe)
            .stark(stark)
            .run()
    };
    let reference = probe_run(None)?;
    let driven = probe_run(Some(&drive))?;
    let phase = driven
        .phase_shift_from(&reference)
        .ok_or_else(|| Error::Protocol("probe produced no echo".into()))?;
    let loss_factor = if reference.efficiency > 0.0 {
        (driven.efficiency / reference.efficiency).sqrt().min(1.0)
    } else {
        0.0
    };
    Ok(DoubleStorageResult {
        xpm: XpmResult {
            phase,
            loss_factor,
            interaction_time: tau2 - tau1,
        },
        hold: (tau1, tau2),
        reference,
        driven,
        signal: signal_run,
    })
}
