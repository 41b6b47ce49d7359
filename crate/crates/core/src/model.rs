//! Shared parameter sets, pulse shapes, gradient schedules and grids.
//!
//! Every quantity is expressed in units of the excited-state decay rate
//! `gamma`: rates and Rabi frequencies in units of `gamma`, times in units of
//! `1/gamma`. Lengths are measured along the ensemble, `z` in `[0, L]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Ensemble and field parameters shared by the semiclassical solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    /// Excited-state decay rate. The unit of rate.
    pub gamma: f64,
    /// Ground-state decoherence rate.
    #[serde(default)]
    pub gamma0: f64,
    /// Single-atom coupling constant.
    pub g: f64,
    /// Atom number.
    pub atom_number: f64,
    /// Ensemble length.
    pub length: f64,
    /// Effective linear atomic density. The field equation is
    /// `d(gE)/dz = i g N (Omega_c/Delta) sigma`, so that
    /// `k E(k) = N (Omega_c/Delta) sigma(k)` holds exactly.
    pub linear_density: f64,
    /// Raman detuning of the probe memory.
    pub delta: f64,
    /// Raman detuning of the signal memory.
    pub delta_prime: f64,
    /// Detuning of a freely propagating signal from the F=2 -> F'=3 line.
    pub delta3: f64,
    /// Detuning of the stored signal on the |2> -> |4> transition.
    pub delta4: f64,
    /// Probe-memory coupling Rabi frequency.
    pub omega_c: f64,
    /// Signal-memory coupling Rabi frequency.
    pub omega_c_prime: f64,
}

impl EnsembleParams {
    /// Desk-scale memory: the coupling and detunings of the gate simulation
    /// with a density chosen so that `g N (Omega_c/Delta)^2 = 2`, an amplitude
    /// optical depth of `pi` at `eta = 2`.
    pub fn desk_scale() -> Self {
        let omega_c = 20.0;
        let delta = 30.0 * omega_c;
        let g = 0.085;
        let ratio = omega_c / delta;
        Self {
            gamma: 1.0,
            gamma0: 0.0,
            g,
            atom_number: 1.0e7,
            length: 1.0,
            linear_density: 2.0 / (g * ratio * ratio),
            delta,
            delta_prime: delta,
            delta3: 2000.0 / 6.07,
            delta4: 20.0,
            omega_c,
            omega_c_prime: omega_c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be positive and finite"));
        }
        if !(self.gamma0 >= 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0", "must be non-negative"));
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(invalid("g", "must be non-negative"));
        }
        if !(self.atom_number >= 1.0 && self.atom_number.is_finite()) {
            return Err(invalid("atom_number", "must be at least 1"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(invalid("length", "must be positive"));
        }
        if !(self.linear_density >= 0.0 && self.linear_density.is_finite()) {
            return Err(invalid("linear_density", "must be non-negative"));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("delta_prime", self.delta_prime),
            ("delta3", self.delta3),
            ("delta4", self.delta4),
            ("omega_c", self.omega_c),
            ("omega_c_prime", self.omega_c_prime),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.delta == 0.0 {
            return Err(invalid("delta", "Raman detuning must be nonzero"));
        }
        if self.delta_prime == 0.0 {
            return Err(invalid("delta_prime", "Raman detuning must be nonzero"));
        }
        Ok(())
    }

    /// `Omega_c / Delta` of the probe memory.
    pub fn raman_ratio(&self) -> f64 {
        self.omega_c / self.delta
    }

    /// `Omega'_c / Delta'` of the signal memory.
    pub fn raman_ratio_prime(&self) -> f64 {
        self.omega_c_prime / self.delta_prime
    }

    /// Amplitude optical depth `pi g N (Omega_c/Delta)^2 / |eta|` of the probe
    /// memory under gradient `eta`: a resonant spectral component leaves the
    /// medium with amplitude `exp(-depth)`.
    pub fn optical_depth(&self, eta: f64) -> f64 {
        let a = self.raman_ratio();
        PI * self.g * self.linear_density * a * a / eta.abs()
    }
}

/// A Gaussian pulse envelope, `peak * exp(-(t - center)^2 / duration^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    /// Peak Rabi frequency `g|E|` at the pulse center.
    pub peak_amplitude: f64,
    pub center_time: f64,
    /// 1/e half-width of the amplitude.
    pub duration: f64,
}

impl PulseSpec {
    pub fn new(peak_amplitude: f64, center_time: f64, duration: f64) -> Result<Self> {
        let spec = Self {
            peak_amplitude,
            center_time,
            duration,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid("duration", "must be positive"));
        }
        if !(self.peak_amplitude >= 0.0 && self.peak_amplitude.is_finite()) {
            return Err(invalid("peak_amplitude", "must be non-negative"));
        }
        if !self.center_time.is_finite() {
            return Err(invalid("center_time", "must be finite"));
        }
        Ok(())
    }

    pub fn with_amplitude(self, peak_amplitude: f64) -> Self {
        Self {
            peak_amplitude,
            ..self
        }
    }

    /// Real envelope value at `t`.
    pub fn amplitude(&self, t: f64) -> f64 {
        let x = (t - self.center_time) / self.duration;
        self.peak_amplitude * (-x * x).exp()
    }

    /// Length of the rectangular pulse with the same peak and the same
    /// integrated intensity: `duration * sqrt(pi / 2)`.
    pub fn equivalent_duration(&self) -> f64 {
        self.duration * (PI / 2.0).sqrt()
    }

    /// `int |amplitude|^2 dt` over the whole real line.
    pub fn energy(&self) -> f64 {
        self.peak_amplitude * self.peak_amplitude * self.equivalent_duration()
    }
}

/// Complex envelope of a pulse at time `t`; the carrier phase is zero.
pub fn gaussian_envelope(spec: &PulseSpec, t: f64) -> Complex64 {
    Complex64::new(spec.amplitude(t), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientSegment {
    pub start: f64,
    pub end: f64,
    /// Signed gradient of the two-photon detuning per unit length.
    pub eta: f64,
}

/// Piecewise-constant gradient `eta(t)`, right-continuous at the switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GradientSegment>", into = "Vec<GradientSegment>")]
pub struct GradientSchedule {
    segments: Vec<GradientSegment>,
}

impl TryFrom<Vec<GradientSegment>> for GradientSchedule {
    type Error = Error;

    fn try_from(segments: Vec<GradientSegment>) -> Result<Self> {
        Self::new(segments)
    }
}

impl From<GradientSchedule> for Vec<GradientSegment> {
    fn from(s: GradientSchedule) -> Self {
        s.segments
    }
}

const SWITCH_TOL: f64 = 1e-9;

impl GradientSchedule {
    pub fn new(segments: Vec<GradientSegment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidSchedule("no segments".into()))?;
        if first.start.abs() > SWITCH_TOL {
            return Err(Error::InvalidSchedule(format!(
                "first segment starts at {} instead of 0",
                first.start
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.end.is_finite() && s.eta.is_finite()) {
                return Err(Error::InvalidSchedule(format!("segment {i} is not finite")));
            }
            if s.end <= s.start {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i} has end {} <= start {}",
                    s.end, s.start
                )));
            }
            if i > 0 && (s.start - segments[i - 1].end).abs() > SWITCH_TOL {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i} starts at {} but segment {} ends at {}",
                    s.start,
                    i - 1,
                    segments[i - 1].end
                )));
            }
        }
        Ok(Self { segments })
    }

    /// Store under `+eta`, flip to `-eta` at `t_flip`.
    pub fn storage(eta: f64, t_flip: f64, t_max: f64) -> Result<Self> {
        Self::new(vec![
            GradientSegment {
                start: 0.0,
                end: t_flip,
                eta,
            },
            GradientSegment {
                start: t_flip,
                end: t_max,
                eta: -eta,
            },
        ])
    }

    /// Store under `+eta`, hold with `eta = 0` on `[tau1, tau2]`, recall
    /// under `-eta`.
    pub fn with_hold(eta: f64, tau1: f64, tau2: f64, t_max: f64) -> Result<Self> {
        Self::new(vec![
            GradientSegment {
                start: 0.0,
                end: tau1,
                eta,
            },
            GradientSegment {
                start: tau1,
                end: tau2,
                eta: 0.0,
            },
            GradientSegment {
                start: tau2,
                end: t_max,
                eta: -eta,
            },
        ])
    }

    pub fn segments(&self) -> &[GradientSegment] {
        &self.segments
    }

    pub fn end_time(&self) -> f64 {
        self.segments.last().map(|s| s.end).unwrap_or(0.0)
    }

    pub fn covers(&self, t_max: f64) -> bool {
        self.end_time() >= t_max - SWITCH_TOL * t_max.abs().max(1.0)
    }

    /// `eta(t)`; right-continuous, and the last segment extends past its end.
    pub fn eta_at(&self, t: f64) -> f64 {
        for s in &self.segments {
            if t < s.end {
                return s.eta;
            }
        }
        self.segments.last().map(|s| s.eta).unwrap_or(0.0)
    }

    pub fn max_abs_eta(&self) -> f64 {
        self.segments.iter().map(|s| s.eta.abs()).fold(0.0, f64::max)
    }

    /// The same switching times with every gradient sign reversed.
    pub fn negated(&self) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| GradientSegment { eta: -s.eta, ..*s })
                .collect(),
        }
    }

    /// Start of the first segment whose gradient has the opposite sign of the
    /// first nonzero gradient.
    pub fn recall_time(&self) -> Option<f64> {
        let first = self.segments.iter().find(|s| s.eta != 0.0)?;
        let sign = first.eta.signum();
        self.segments
            .iter()
            .find(|s| s.eta != 0.0 && s.eta.signum() != sign)
            .map(|s| s.start)
    }

    /// The first zero-gradient segment preceded and followed by nonzero
    /// gradients of opposite sign.
    pub fn hold_window(&self) -> Option<(f64, f64)> {
        let segs = &self.segments;
        for i in 1..segs.len().saturating_sub(1) {
            if segs[i].eta == 0.0 {
                let before = segs[..i].iter().rev().find(|s| s.eta != 0.0);
                let after = segs[i + 1..].iter().find(|s| s.eta != 0.0);
                if let (Some(b), Some(a)) = (before, after) {
                    if b.eta.signum() != a.eta.signum() {
                        return Some((segs[i].start, segs[i].end));
                    }
                }
            }
        }
        None
    }
}

/// On/off switching of a coupling field, as a multiplier of its Rabi
/// frequency. An empty schedule is always on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSchedule {
    /// Intervals `[start, end)` during which the field is off.
    #[serde(default)]
    pub off: Vec<(f64, f64)>,
}

impl CouplingSchedule {
    pub fn always_on() -> Self {
        Self::default()
    }

    pub fn off_during(start: f64, end: f64) -> Self {
        Self {
            off: vec![(start, end)],
        }
    }

    pub fn factor_at(&self, t: f64) -> f64 {
        if self.off.iter().any(|&(a, b)| t >= a && t < b) {
            0.0
        } else {
            1.0
        }
    }
}

/// Uniform space-time sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nz: usize,
    pub nt: usize,
    pub t_max: f64,
    pub length: f64,
}

/// Largest number of space-time cells a single run may allocate.
pub const MAX_CELLS: usize = 1 << 28;

impl Grid {
    pub fn dz(&self) -> f64 {
        self.length / (self.nz - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_max / (self.nt - 1) as f64
    }

    pub fn z(&self, j: usize) -> f64 {
        j as f64 * self.dz()
    }

    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn cells(&self) -> usize {
        self.nz * self.nt
    }

    /// The same window sampled with twice the resolution in both axes.
    pub fn refined(&self) -> Self {
        Self {
            nz: 2 * self.nz - 1,
            nt: 2 * self.nt - 1,
            ..*self
        }
    }
}

pub fn build_grid(params: &EnsembleParams, nz: usize, nt: usize, t_max: f64) -> Result<Grid> {
    if nz < 2 {
        return Err(Error::InvalidGrid(format!("nz = {nz}; need at least 2")));
    }
    if nt < 2 {
        return Err(Error::InvalidGrid(format!("nt = {nt}; need at least 2")));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidGrid(format!("t_max = {t_max}; must be positive")));
    }
    if !(params.length > 0.0 && params.length.is_finite()) {
        return Err(invalid("length", "must be positive"));
    }
    match nz.checked_mul(nt) {
        Some(c) if c <= MAX_CELLS => {}
        _ => {
            return Err(Error::InvalidGrid(format!(
                "{nz} x {nt} cells exceeds the limit of {MAX_CELLS}"
            )))
        }
    }
    Ok(Grid {
        nz,
        nt,
        t_max,
        length: params.length,
    })
}
