//! Experiment configuration files.
//!
//! A config is a TOML document. Unknown keys are rejected everywhere. Every
//! physical block is a set of overrides on a built-in default, so a config
//! only needs to name what it changes.

use gem_xpm::lindblad::GateParams;
use gem_xpm::maxwell_bloch::{SignalRoute, StarkDrive};
use gem_xpm::model::{CouplingSchedule, EnsembleParams, GradientSchedule, GradientSegment, PulseSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Store and recall probe pulses, optionally under a Stark drive.
    Storage,
    /// Phase imprinted by a signal passing through the memory.
    XpmFree,
    /// Probe and signal stored in two memories, interacting during a hold.
    XpmDouble,
    /// Conditional phase and fidelity of the two-photon gate against time.
    Gate,
    /// Process tomography of the gate.
    Tomography,
    /// One base experiment repeated over values of a single parameter.
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Storage => "storage",
            Self::XpmFree => "xpm-free",
            Self::XpmDouble => "xpm-double",
            Self::Gate => "gate",
            Self::Tomography => "tomography",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitSystem {
    /// Rates in units of the excited-state decay rate, times in its inverse.
    #[default]
    Gamma,
    /// Angular rates in 1/us (rad/us) and times in us.
    Lab,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    #[serde(default)]
    pub system: UnitSystem,
    /// Decay rate in the lab unit of rate. Required when `system = "lab"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

macro_rules! overrides {
    ($(#[$meta:meta])* $name:ident for $target:ty { $($field:ident: $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            pub fn apply(&self, mut base: $target) -> $target {
                $(
                    if let Some(v) = self.$field {
                        base.$field = v;
                    }
                )*
                base
            }
        }
    };
}

overrides! {
    /// Changes to the desk-scale ensemble.
    EnsembleOverrides for EnsembleParams {
        gamma: f64,
        gamma0: f64,
        g: f64,
        atom_number: f64,
        length: f64,
        linear_density: f64,
        delta: f64,
        delta_prime: f64,
        delta3: f64,
        delta4: f64,
        omega_c: f64,
        omega_c_prime: f64,
    }
}

overrides! {
    /// Changes to the default gate parameters.
    GateOverrides for GateParams {
        gamma: f64,
        omega_c: f64,
        omega_c_prime: f64,
        delta: f64,
        delta_prime: f64,
        delta4: f64,
        g: f64,
        atom_number: f64,
        photon_bandwidth: f64,
        gate_time: f64,
        probe_coupling_on: bool,
        signal_dressing: bool,
        signal_loss: bool,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nz: usize,
    pub nt: usize,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradientSpec {
    /// `+eta` until `flip`, then `-eta`.
    Storage { eta: f64, flip: f64 },
    /// `+eta`, then zero on `[tau1, tau2]`, then `-eta`.
    Hold { eta: f64, tau1: f64, tau2: f64 },
    /// Explicit piecewise-constant schedule.
    Segments { segments: Vec<GradientSegment> },
}

impl GradientSpec {
    pub fn build(&self, t_max: f64) -> gem_xpm::Result<GradientSchedule> {
        match self {
            Self::Storage { eta, flip } => GradientSchedule::storage(*eta, *flip, t_max),
            Self::Hold { eta, tau1, tau2 } => GradientSchedule::with_hold(*eta, *tau1, *tau2, t_max),
            Self::Segments { segments } => GradientSchedule::new(segments.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Free,
    Stored,
}

impl From<Route> for SignalRoute {
    fn from(r: Route) -> Self {
        match r {
            Route::Free => SignalRoute::Free,
            Route::Stored => SignalRoute::Stored,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

fn is_true(x: &bool) -> bool {
    *x
}

/// A signal pulse illuminating the whole cell during a storage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkSpec {
    pub signal: PulseSpec,
    pub route: Route,
    /// Multiplier on the scattering loss rate.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub loss_scale: f64,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub shift: bool,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub loss: bool,
}

impl StarkSpec {
    pub fn drive(&self, params: &EnsembleParams) -> StarkDrive {
        let detuning = match self.route {
            Route::Free => params.delta3,
            Route::Stored => params.delta4,
        };
        let mut d = StarkDrive::from_pulse(self.signal, detuning, params.gamma).scale_loss(self.loss_scale);
        if !self.shift {
            d = d.without_shift();
        }
        if !self.loss {
            d = d.without_loss();
        }
        d
    }
}

fn default_stride() -> usize {
    1
}

fn default_k_stride() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    /// Time window over which the polariton is analysed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier_window: Option<[f64; 2]>,
    #[serde(default = "default_k_stride")]
    pub k_stride: usize,
    /// Keep every n-th time sample of the exit field.
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            fourier_window: None,
            k_stride: default_k_stride(),
            output_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XpmFreeSpec {
    /// Signal Rabi frequencies.
    pub amplitudes: Vec<f64>,
    /// Signal duration of the closed form.
    pub tau: f64,
    /// Signal pulse shape for a full solver scan; its amplitude is replaced
    /// by each entry of `amplitudes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<PulseSpec>,
}

fn default_envelope_samples() -> usize {
    257
}

fn default_double_stride() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSpec {
    pub signal: PulseSpec,
    #[serde(default = "default_envelope_samples")]
    pub envelope_samples: usize,
    #[serde(default = "default_double_stride")]
    pub k_stride: usize,
}

fn default_gate_time() -> f64 {
    15.0
}

fn default_trace_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub t_end: f64,
    #[serde(default = "default_trace_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySpec {
    #[serde(default = "default_gate_time")]
    pub t_gate: f64,
    /// Also export the Choi matrix of `CPHASE(phi)` at the extracted phase.
    #[serde(default = "yes")]
    pub export_ideal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ExperimentKind,
    /// Dotted path of the swept value, e.g. `probe.0.peak_amplitude`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default)]
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<GradientSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingSchedule>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe: Vec<PulseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stark: Option<StarkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xpm_free: Option<XpmFreeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub double: Option<DoubleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn missing(section: &str, kind: ExperimentKind) -> CliError {
    CliError::Config(format!("{section}: required for experiment `{}`", kind.name()))
}

fn require<'a, T>(v: &'a Option<T>, section: &str, kind: ExperimentKind) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| missing(section, kind))
}

impl ExperimentConfig {
    /// Parse and check a config document.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let value: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_table(value)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn ensemble_params(&self) -> EnsembleParams {
        let base = EnsembleParams::desk_scale();
        match &self.ensemble {
            Some(o) => o.apply(base),
            None => base,
        }
    }

    pub fn gate_params(&self) -> GateParams {
        let base = GateParams::default();
        match &self.gate {
            Some(o) => o.apply(base),
            None => base,
        }
    }

    /// Structural checks: the sections each experiment needs are present and
    /// the unit system is complete.
    pub fn check(&self) -> Result<(), CliError> {
        let kind = self.experiment;
        if self.units.system == UnitSystem::Lab {
            match self.units.gamma {
                Some(g) if g > 0.0 && g.is_finite() => {}
                Some(g) => return Err(CliError::Config(format!("units.gamma: {g} must be positive"))),
                None => return Err(CliError::Config("units.gamma: required for lab units".into())),
            }
        }
        match kind {
            ExperimentKind::Storage => {
                require(&self.grid, "grid", kind)?;
                require(&self.gradient, "gradient", kind)?;
                if self.probe.is_empty() {
                    return Err(missing("probe", kind));
                }
            }
            ExperimentKind::XpmFree => {
                let x = require(&self.xpm_free, "xpm_free", kind)?;
                if x.amplitudes.is_empty() {
                    return Err(CliError::Config("xpm_free.amplitudes: empty".into()));
                }
                if x.signal.is_some() {
                    require(&self.grid, "grid", kind)?;
                    require(&self.gradient, "gradient", kind)?;
                    if self.probe.is_empty() {
                        return Err(missing("probe", kind));
                    }
                }
            }
            ExperimentKind::XpmDouble => {
                require(&self.grid, "grid", kind)?;
                require(&self.double, "double", kind)?;
                match require(&self.gradient, "gradient", kind)? {
                    GradientSpec::Hold { .. } | GradientSpec::Segments { .. } => {}
                    GradientSpec::Storage { .. } => {
                        return Err(CliError::Config(
                            "gradient.kind: the double-storage protocol needs a hold window".into(),
                        ))
                    }
                }
                if self.probe.len() != 1 {
                    return Err(CliError::Config("probe: exactly one probe pulse expected".into()));
                }
            }
            ExperimentKind::Gate => {
                require(&self.trace, "trace", kind)?;
            }
            ExperimentKind::Tomography => {}
            ExperimentKind::Sweep => {
                let s = require(&self.sweep, "sweep", kind)?;
                if s.base == ExperimentKind::Sweep {
                    return Err(CliError::Config("sweep.base: a sweep cannot sweep a sweep".into()));
                }
                if s.values.is_empty() {
                    return Err(CliError::Config("sweep.values: need at least one value".into()));
                }
                if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                    return Err(CliError::Config(format!("sweep.values: {v} is not finite")));
                }
            }
        }
        if let Some(d) = &self.diagnostics {
            if d.k_stride == 0 || d.output_stride == 0 {
                return Err(CliError::Config("diagnostics: strides must be positive".into()));
            }
        }
        Ok(())
    }

    /// The same config with every quantity in units of the decay rate.
    /// Rates are divided by `units.gamma` and times multiplied by it.
    pub fn to_gamma_units(&self) -> Result<Self, CliError> {
        if self.units.system == UnitSystem::Gamma {
            return Ok(self.clone());
        }
        let g = match self.units.gamma {
            Some(g) if g > 0.0 && g.is_finite() => g,
            _ => return Err(CliError::Config("units.gamma: required for lab units".into())),
        };
        let rate = |x: f64| x / g;
        let time = |x: f64| x * g;
        let rate_opt = |x: &mut Option<f64>| {
            if let Some(v) = x {
                *v = rate(*v);
            }
        };
        let pulse = |p: &PulseSpec| PulseSpec {
            peak_amplitude: rate(p.peak_amplitude),
            center_time: time(p.center_time),
            duration: time(p.duration),
        };

        let mut c = self.clone();
        c.units = Units::default();
        if let Some(e) = &mut c.ensemble {
            for f in [
                &mut e.gamma,
                &mut e.gamma0,
                &mut e.g,
                &mut e.delta,
                &mut e.delta_prime,
                &mut e.delta3,
                &mut e.delta4,
                &mut e.omega_c,
                &mut e.omega_c_prime,
            ] {
                rate_opt(f);
            }
        }
        if let Some(q) = &mut c.gate {
            for f in [
                &mut q.gamma,
                &mut q.omega_c,
                &mut q.omega_c_prime,
                &mut q.delta,
                &mut q.delta_prime,
                &mut q.delta4,
                &mut q.g,
                &mut q.photon_bandwidth,
            ] {
                rate_opt(f);
            }
            if let Some(t) = &mut q.gate_time {
                *t = time(*t);
            }
        }
        if let Some(grid) = &mut c.grid {
            grid.t_max = time(grid.t_max);
        }
        if let Some(gr) = &mut c.gradient {
            match gr {
                GradientSpec::Storage { eta, flip } => {
                    *eta = rate(*eta);
                    *flip = time(*flip);
                }
                GradientSpec::Hold { eta, tau1, tau2 } => {
                    *eta = rate(*eta);
                    *tau1 = time(*tau1);
                    *tau2 = time(*tau2);
                }
                GradientSpec::Segments { segments } => {
                    for s in segments {
                        s.eta = rate(s.eta);
                        s.start = time(s.start);
                        s.end = time(s.end);
                    }
                }
            }
        }
        if let Some(cp) = &mut c.coupling {
            for w in &mut cp.off {
                *w = (time(w.0), time(w.1));
            }
        }
        c.probe = c.probe.iter().map(pulse).collect();
        if let Some(s) = &mut c.stark {
            s.signal = pulse(&s.signal);
        }
        if let Some(d) = &mut c.diagnostics {
            if let Some(w) = &mut d.fourier_window {
                *w = [time(w[0]), time(w[1])];
            }
        }
        if let Some(x) = &mut c.xpm_free {
            x.amplitudes = x.amplitudes.iter().map(|a| rate(*a)).collect();
            x.tau = time(x.tau);
            x.signal = x.signal.as_ref().map(pulse);
        }
        if let Some(d) = &mut c.double {
            d.signal = pulse(&d.signal);
        }
        if let Some(t) = &mut c.trace {
            t.t_end = time(t.t_end);
            t.dt = time(t.dt);
        }
        if let Some(t) = &mut c.tomography {
            t.t_gate = time(t.t_gate);
        }
        Ok(c)
    }
}

/// Replace the value at a dotted path (`probe.0.peak_amplitude`) in a raw
/// config table. Only existing numeric entries can be replaced.
pub fn set_path(table: &mut toml::Table, path: &str, value: f64) -> Result<(), CliError> {
    let not_found = || CliError::Config(format!("sweep.parameter: `{path}` not found in config"));
    let parts: Vec<&str> = path.split('.').collect();
    let (last, head) = parts.split_last().ok_or_else(not_found)?;
    let mut node = table.get_mut(parts[0]).ok_or_else(not_found)?;
    if head.is_empty() {
        return replace_number(table, last, value).ok_or_else(not_found);
    }
    for key in &head[1..] {
        node = match node {
            toml::Value::Table(t) => t.get_mut(*key),
            toml::Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(not_found)?;
    }
    let slot = match node {
        toml::Value::Table(t) => t.get_mut(*last),
        toml::Value::Array(a) => last.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        _ => None,
    }
    .ok_or_else(not_found)?;
    match slot {
        toml::Value::Float(_) | toml::Value::Integer(_) => {
            *slot = toml::Value::Float(value);
            Ok(())
        }
        _ => Err(CliError::Config(format!("sweep.parameter: `{path}` is not a number"))),
    }
}

fn replace_number(table: &mut toml::Table, key: &str, value: f64) -> Option<()> {
    let slot = table.get_mut(key)?;
    matches!(slot, toml::Value::Float(_) | toml::Value::Integer(_)).then(|| *slot = toml::Value::Float(value))
}
