//! One-dimensional Maxwell-Bloch integrator for a Raman gradient echo memory.
//!
//! The adiabatically eliminated Λ system reduces to a spin coherence
//! `sigma(z, t)` driven by the probe envelope `E(z, t) = g * Efield`:
//!
//! ```text
//! d sigma / dt = -[gamma0 + Gs(z,t) + i (eta(t) (z - L/2) + dac(z,t))] sigma + i a(t) E
//! d E / dz     =  i g N a(t) sigma
//! ```
//!
//! with `a(t) = Omega_c(t) / Delta`. The field equation has no time
//! derivative (the pulse is far longer than the cell transit time), so at
//! every time the field is rebuilt by a fourth-order cumulative integral
//! along `z` and the coherence is advanced with classical RK4.
//!
//! With this normalization `k E(k) = N a sigma(k)` holds exactly in the
//! spatial Fourier domain (up to the boundary flux), and the group velocity
//! of a polariton held at wavenumber `k` is `g N a^2 / k^2`.

use std::ops::Deref;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CouplingSchedule, EnsembleParams, GradientSchedule, Grid, PulseSpec};
use crate::spectral::{peak_bin, SpatialTransform};

/// Largest `dt * rate` accepted by the RK4 step.
pub const RK4_STABILITY_LIMIT: f64 = 2.5;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Complex samples on a [`Grid`], stored time-major: `values[n * nz + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTime {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpaceTime {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.cells()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn at(&self, n: usize, j: usize) -> Complex64 {
        self.values[n * self.grid.nz + j]
    }

    pub fn slice(&self, n: usize) -> &[Complex64] {
        let nz = self.grid.nz;
        &self.values[n * nz..(n + 1) * nz]
    }

    fn slice_mut(&mut self, n: usize) -> &mut [Complex64] {
        let nz = self.grid.nz;
        &mut self.values[n * nz..(n + 1) * nz]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Time series at `z = L`.
    pub fn exit_series(&self) -> Vec<Complex64> {
        (0..self.grid.nt).map(|n| self.at(n, self.grid.nz - 1)).collect()
    }

    /// Time series at `z = 0`.
    pub fn entry_series(&self) -> Vec<Complex64> {
        (0..self.grid.nt).map(|n| self.at(n, 0)).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Probe envelope `g * E(z, t)` in units of `gamma`, together with the
/// effective `Omega_c(t) / Delta` that coupled it to the coherence.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecord {
    data: SpaceTime,
    raman: Vec<f64>,
}

impl FieldRecord {
    /// `Omega_c(t_n) / Delta` at each time sample; zero while the coupling
    /// field is off.
    pub fn raman_ratio(&self) -> &[f64] {
        &self.raman
    }
}

impl Deref for FieldRecord {
    type Target = SpaceTime;
    fn deref(&self) -> &SpaceTime {
        &self.data
    }
}

/// Spin coherence `sigma_12(z, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRecord {
    data: SpaceTime,
}

impl Deref for CoherenceRecord {
    type Target = SpaceTime;
    fn deref(&self) -> &SpaceTime {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DriveProfile {
    Uniform(PulseSpec),
    Sampled {
        grid: Grid,
        intensity: Vec<f64>,
        window: (f64, f64),
    },
}

/// ac-Stark shift and scattering loss imposed on the stored coherence by a
/// far-detuned signal field of intensity `I = |g E_s|^2`:
/// `dac = I * delta / (gamma^2 + delta^2)`, `Gs = I * gamma / (gamma^2 + delta^2)`.
///
/// `Gs` is an amplitude decay rate; recall efficiency falls as
/// `exp(-2 int Gs dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarkDrive {
    profile: DriveProfile,
    shift_per_intensity: f64,
    loss_per_intensity: f64,
}

/// Which detuning of [`EnsembleParams`] the signal sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalRoute {
    /// A signal propagating freely through the memory (`delta3`).
    Free,
    /// A stored signal acting on the `|2> -> |4>` transition (`delta4`).
    Stored,
}

fn stark_coefficients(detuning: f64, gamma: f64) -> (f64, f64) {
    let denom = gamma * gamma + detuning * detuning;
    if denom == 0.0 {
        (0.0, 0.0)
    } else {
        (detuning / denom, gamma / denom)
    }
}

impl StarkDrive {
    /// Space-uniform drive from a signal pulse that illuminates the whole cell.
    pub fn from_pulse(signal: PulseSpec, detuning: f64, gamma: f64) -> Self {
        let (shift, loss) = stark_coefficients(detuning, gamma);
        Self {
            profile: DriveProfile::Uniform(signal),
            shift_per_intensity: shift,
            loss_per_intensity: loss,
        }
    }

    /// Drive from a simulated signal envelope, active only on `window`.
    pub fn from_field(field: &FieldRecord, window: (f64, f64), detuning: f64, gamma: f64) -> Self {
        let (shift, loss) = stark_coefficients(detuning, gamma);
        Self {
            profile: DriveProfile::Sampled {
                grid: *field.grid(),
                intensity: field.values().iter().map(|v| v.norm_sqr()).collect(),
                window,
            },
            shift_per_intensity: shift,
            loss_per_intensity: loss,
        }
    }

    /// The same drive with its scattering loss removed.
    pub fn without_loss(mut self) -> Self {
        self.loss_per_intensity = 0.0;
        self
    }

    /// The same drive with its Stark shift removed.
    pub fn without_shift(mut self) -> Self {
        self.shift_per_intensity = 0.0;
        self
    }

    /// Multiply the loss coefficient by `factor`.
    pub fn scale_loss(mut self, factor: f64) -> Self {
        self.loss_per_intensity *= factor;
        self
    }

    pub fn shift_per_intensity(&self) -> f64 {
        self.shift_per_intensity
    }

    pub fn loss_per_intensity(&self) -> f64 {
        self.loss_per_intensity
    }

    /// `|g E_s|^2` at time `t` and grid point `j`.
    pub fn intensity(&self, t: f64, j: usize) -> f64 {
        match &self.profile {
            DriveProfile::Uniform(p) => {
                let a = p.amplitude(t);
                a * a
            }
            DriveProfile::Sampled {
                grid,
                intensity,
                window,
            } => {
                if t < window.0 || t >= window.1 {
                    return 0.0;
                }
                let x = (t / grid.dt()).max(0.0);
                let n = (x.floor() as usize).min(grid.nt - 1);
                let frac = x - n as f64;
                let a = intensity[n * grid.nz + j];
                if n + 1 < grid.nt && frac > 0.0 {
                    let b = intensity[(n + 1) * grid.nz + j];
                    a + (b - a) * frac
                } else {
                    a
                }
            }
        }
    }

    pub fn shift(&self, t: f64, j: usize) -> f64 {
        self.shift_per_intensity * self.intensity(t, j)
    }

    pub fn loss(&self, t: f64, j: usize) -> f64 {
        self.loss_per_intensity * self.intensity(t, j)
    }

    pub fn max_intensity(&self) -> f64 {
        match &self.profile {
            DriveProfile::Uniform(p) => p.peak_amplitude * p.peak_amplitude,
            DriveProfile::Sampled { intensity, .. } => intensity.iter().copied().fold(0.0, f64::max),
        }
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if let DriveProfile::Sampled { grid: g, .. } = &self.profile {
            if g.nz != grid.nz {
                return Err(Error::Dimension {
                    expected: grid.nz,
                    found: g.nz,
                });
            }
        }
        Ok(())
    }
}

/// The Stark drive of a signal pulse, using `delta3` for a freely
/// propagating signal and `delta4` for a stored one.
pub fn apply_stark_drive(signal: &PulseSpec, params: &EnsembleParams, route: SignalRoute) -> StarkDrive {
    let detuning = match route {
        SignalRoute::Free => params.delta3,
        SignalRoute::Stored => params.delta4,
    };
    StarkDrive::from_pulse(*signal, detuning, params.gamma)
}

/// Outcome of a storage-and-recall run.
#[derive(Debug, Clone)]
pub struct StorageResult {
    pub field: FieldRecord,
    pub coherence: CoherenceRecord,
    /// `int |E(0,t)|^2 dt` before the recall switch.
    pub input_energy: f64,
    /// `int |E(L,t)|^2 dt` before the recall switch (leakage).
    pub transmitted_energy: f64,
    /// `int |E(L,t)|^2 dt` from the recall switch to the end of the run.
    pub echo_energy: f64,
    pub efficiency: f64,
    /// Energy-weighted mean time of the echo.
    pub echo_centroid: Option<f64>,
    /// Phase of the exit field at the echo centroid.
    pub echo_phase: Option<f64>,
    /// Start of the echo window.
    pub recall_time: f64,
}

impl StorageResult {
    /// Phase removed from the echo relative to `reference`, wrapped to
    /// `(-pi, pi]`. Positive for a positive Stark shift.
    pub fn phase_shift_from(&self, reference: &StorageResult) -> Option<f64> {
        Some(wrap_phase(reference.echo_phase? - self.echo_phase?))
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut y = x % tau;
    if y <= -std::f64::consts::PI {
        y += tau;
    } else if y > std::f64::consts::PI {
        y -= tau;
    }
    y
}

/// Builder for one run of the solver.
#[derive(Debug, Clone)]
pub struct StorageRun<'a> {
    params: &'a EnsembleParams,
    grid: Grid,
    gradient: &'a GradientSchedule,
    coupling: CouplingSchedule,
    raman_ratio: f64,
    input: Vec<PulseSpec>,
    stark: Option<&'a StarkDrive>,
}

impl<'a> StorageRun<'a> {
    pub fn new(params: &'a EnsembleParams, grid: Grid, gradient: &'a GradientSchedule) -> Self {
        Self {
            params,
            grid,
            gradient,
            coupling: CouplingSchedule::always_on(),
            raman_ratio: params.raman_ratio(),
            input: Vec::new(),
            stark: None,
        }
    }

    /// Add an input pulse at `z = 0`; pulses superpose.
    pub fn input(mut self, pulse: PulseSpec) -> Self {
        self.input.push(pulse);
        self
    }

    pub fn coupling(mut self, schedule: CouplingSchedule) -> Self {
        self.coupling = schedule;
        self
    }

    /// Override `Omega_c / Delta`, e.g. to run the signal memory.
    pub fn raman_ratio(mut self, ratio: f64) -> Self {
        self.raman_ratio = ratio;
        self
    }

    pub fn stark(mut self, drive: Option<&'a StarkDrive>) -> Self {
        self.stark = drive;
        self
    }

    /// Bound on the magnitude of the right-hand side's eigenvalues.
    pub fn max_rate(&self) -> f64 {
        let p = self.params;
        let detuning = self.gradient.max_abs_eta() * p.length / 2.0;
        let coupling = p.g * p.linear_density * self.raman_ratio * self.raman_ratio * p.length;
        let stark = self.stark.map_or(0.0, |s| {
            s.max_intensity() * (s.shift_per_intensity.abs() + s.loss_per_intensity.abs())
        });
        detuning + coupling + stark + p.gamma0
    }

    fn input_at(&self, t: f64) -> Complex64 {
        Complex64::new(self.input.iter().map(|p| p.amplitude(t)).sum(), 0.0)
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for p in &self.input {
            p.validate()?;
        }
        let g = &self.grid;
        if g.nz < 16 || g.nt < 16 {
            return Err(Error::InvalidGrid(format!(
                "{} x {} samples; the solver needs at least 16 in each axis",
                g.nz, g.nt
            )));
        }
        if (g.length - self.params.length).abs() > 1e-12 * self.params.length {
            return Err(Error::InvalidGrid(format!(
                "grid length {} differs from ensemble length {}",
                g.length, self.params.length
            )));
        }
        if !self.gradient.covers(g.t_max) {
            return Err(Error::InvalidSchedule(format!(
                "schedule ends at {} before t_max = {}",
                self.gradient.end_time(),
                g.t_max
            )));
        }
        if let Some(s) = self.stark {
            s.check_grid(g)?;
        }
        let rate = self.max_rate();
        let dt = g.dt();
        if dt * rate > RK4_STABILITY_LIMIT {
            return Err(Error::Unstable {
                dt,
                rate,
                required: RK4_STABILITY_LIMIT / rate,
            });
        }
        Ok(())
    }

    pub fn run(&self) -> Result<StorageResult> {
        self.validate()?;
        let grid = self.grid;
        let (nz, nt) = (grid.nz, grid.nt);
        let dt = grid.dt();
        let p = self.params;
        let stepper = Stepper {
            offsets: (0..nz).map(|j| grid.z(j) - p.length / 2.0).collect(),
            dz: grid.dz(),
            field_coef: p.g * p.linear_density,
            gamma0: p.gamma0,
            stark: self.stark,
        };

        let mut field = SpaceTime::zeros(grid);
        let mut coherence = SpaceTime::zeros(grid);
        let mut raman = vec![0.0; nt];

        let mut sigma = vec![Complex64::new(0.0, 0.0); nz];
        let mut work = Work::new(nz);

        for n in 0..nt {
            let t = grid.t(n);
            let a_now = self.raman_ratio * self.coupling.factor_at(t);
            raman[n] = a_now;
            stepper.field(self.input_at(t), a_now, &sigma, field.slice_mut(n));
            coherence.slice_mut(n).copy_from_slice(&sigma);
            if n + 1 == nt {
                break;
            }
            let mid = t + 0.5 * dt;
            let controls = Controls {
                eta: self.gradient.eta_at(mid),
                a: self.raman_ratio * self.coupling.factor_at(mid),
                input: [self.input_at(t), self.input_at(mid), self.input_at(t + dt)],
            };
            stepper.rk4(t, dt, &controls, &mut sigma, &mut work);
            if sigma.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(Error::NonFinite { t: t + dt, index: n + 1 });
            }
        }

        Ok(summarize(
            FieldRecord { data: field, raman },
            CoherenceRecord { data: coherence },
            self.gradient,
        ))
    }
}

/// Convenience wrapper: store and recall a single probe pulse with the
/// coupling field always on.
pub fn propagate(
    params: &EnsembleParams,
    probe: &PulseSpec,
    schedule: &GradientSchedule,
    grid: &Grid,
    stark: Option<&StarkDrive>,
) -> Result<StorageResult> {
    StorageRun::new(params, *grid, schedule)
        .input(*probe)
        .stark(stark)
        .run()
}

struct Controls {
    eta: f64,
    a: f64,
    /// Input field at the start, middle and end of the step.
    input: [Complex64; 3],
}

struct Work {
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    field: Vec<Complex64>,
}

impl Work {
    fn new(nz: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); nz];
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z.clone(),
            field: z,
        }
    }
}

struct Stepper<'a> {
    offsets: Vec<f64>,
    dz: f64,
    field_coef: f64,
    gamma0: f64,
    stark: Option<&'a StarkDrive>,
}

impl Stepper<'_> {
    /// `E(z) = E(0) + i g N a int_0^z sigma`, fourth order in `dz`.
    fn field(&self, entry: Complex64, a: f64, sigma: &[Complex64], out: &mut [Complex64]) {
        let nz = sigma.len();
        out[0] = entry;
        if a == 0.0 || self.field_coef == 0.0 {
            out.iter_mut().for_each(|v| *v = entry);
            return;
        }
        let c = I * (self.field_coef * a * self.dz / 24.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..nz - 1 {
            let piece = if i == 0 {
                sigma[0] * 9.0 + sigma[1] * 19.0 - sigma[2] * 5.0 + sigma[3]
            } else if i == nz - 2 {
                sigma[nz - 4] - sigma[nz - 3] * 5.0 + sigma[nz - 2] * 19.0 + sigma[nz - 1] * 9.0
            } else {
                (sigma[i] + sigma[i + 1]) * 13.0 - sigma[i - 1] - sigma[i + 2]
            };
            acc += piece;
            out[i + 1] = entry + c * acc;
        }
    }

    fn rhs(&self, t: f64, eta: f64, a: f64, entry: Complex64, sigma: &[Complex64], field: &mut [Complex64], out: &mut [Complex64]) {
        self.field(entry, a, sigma, field);
        for j in 0..sigma.len() {
            let (shift, loss) = match self.stark {
                Some(s) => (s.shift(t, j), s.loss(t, j)),
                None => (0.0, 0.0),
            };
            let decay = Complex64::new(self.gamma0 + loss, eta * self.offsets[j] + shift);
            out[j] = -decay * sigma[j] + I * a * field[j];
        }
    }

    fn rk4(&self, t: f64, dt: f64, c: &Controls, sigma: &mut [Complex64], w: &mut Work) {
        let nz = sigma.len();
        let half = 0.5 * dt;
        let [k1, k2, k3, k4] = &mut w.k;
        self.rhs(t, c.eta, c.a, c.input[0], sigma, &mut w.field, k1);
        for j in 0..nz {
            w.tmp[j] = sigma[j] + k1[j] * half;
        }
        self.rhs(t + half, c.eta, c.a, c.input[1], &w.tmp, &mut w.field, k2);
        for j in 0..nz {
            w.tmp[j] = sigma[j] + k2[j] * half;
        }
        self.rhs(t + half, c.eta, c.a, c.input[1], &w.tmp, &mut w.field, k3);
        for j in 0..nz {
            w.tmp[j] = sigma[j] + k3[j] * dt;
        }
        self.rhs(t + dt, c.eta, c.a, c.input[2], &w.tmp, &mut w.field, k4);
        let s = dt / 6.0;
        for j in 0..nz {
            sigma[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * s;
        }
    }
}

/// Trapezoid integral of `values` over the samples whose times lie in `[a, b]`.
pub(crate) fn window_integral(values: &[f64], dt: f64, a: f64, b: f64) -> f64 {
    let lo = ((a / dt).ceil().max(0.0)) as usize;
    let hi = (((b / dt) + 1e-9).floor() as usize).min(values.len().saturating_sub(1));
    if hi <= lo {
        return 0.0;
    }
    let inner: f64 = values[lo + 1..hi].iter().sum();
    dt * (inner + 0.5 * (values[lo] + values[hi]))
}

fn summarize(field: FieldRecord, coherence: CoherenceRecord, gradient: &GradientSchedule) -> StorageResult {
    let grid = *field.grid();
    let dt = grid.dt();
    let recall_time = gradient.recall_time().unwrap_or(grid.t_max).min(grid.t_max);
    let entry: Vec<f64> = field.entry_series().iter().map(|v| v.norm_sqr()).collect();
    let exit_c = field.exit_series();
    let exit: Vec<f64> = exit_c.iter().map(|v| v.norm_sqr()).collect();

    let input_energy = window_integral(&entry, dt, 0.0, recall_time);
    let transmitted_energy = window_integral(&exit, dt, 0.0, recall_time);
    let echo_energy = window_integral(&exit, dt, recall_time, grid.t_max);
    let efficiency = if input_energy > 0.0 {
        echo_energy / input_energy
    } else {
        0.0
    };

    let first = (recall_time / dt).ceil() as usize;
    let (mut w, mut wt) = (0.0, 0.0);
    for (n, &e) in exit.iter().enumerate().skip(first) {
        w += e;
        wt += e * grid.t(n);
    }
    let echo_centroid = (w > 0.0).then(|| wt / w);
    let echo_phase = echo_centroid.map(|tc| interpolate(&exit_c, dt, tc).arg());

    StorageResult {
        field,
        coherence,
        input_energy,
        transmitted_energy,
        echo_energy,
        efficiency,
        echo_centroid,
        echo_phase,
        recall_time,
    }
}

pub(crate) fn interpolate(series: &[Complex64], dt: f64, t: f64) -> Complex64 {
    let x = (t / dt).max(0.0);
    let n = (x.floor() as usize).min(series.len() - 1);
    if n + 1 >= series.len() {
        return series[n];
    }
    let f = x - n as f64;
    series[n] * (1.0 - f) + series[n + 1] * f
}

/// Field, coherence and polariton in the spatial Fourier domain, one row per
/// time sample.
#[derive(Debug, Clone)]
pub struct PolaritonRecord {
    grid: Grid,
    k: Vec<f64>,
    bin_width: f64,
    /// `E(k) = (g E)(k) / g`.
    field_k: Vec<Complex64>,
    coherence_k: Vec<Complex64>,
    /// `psi = k E(k) + N a sigma(k)`.
    psi: Vec<Complex64>,
    /// `N a(t_n)`.
    weight: Vec<f64>,
}

impl PolaritonRecord {
    pub fn k_axis(&self) -> &[f64] {
        &self.k
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn row<'b>(&self, v: &'b [Complex64], n: usize) -> &'b [Complex64] {
        let nk = self.k.len();
        &v[n * nk..(n + 1) * nk]
    }

    pub fn psi(&self, n: usize) -> &[Complex64] {
        self.row(&self.psi, n)
    }

    pub fn field(&self, n: usize) -> &[Complex64] {
        self.row(&self.field_k, n)
    }

    pub fn coherence(&self, n: usize) -> &[Complex64] {
        self.row(&self.coherence_k, n)
    }

    /// Time sample nearest to `t`.
    pub fn sample_at(&self, t: f64) -> usize {
        ((t / self.grid.dt()).round().max(0.0) as usize).min(self.grid.nt - 1)
    }

    /// Wavenumber of the largest `|psi|` at sample `n`.
    pub fn peak_k(&self, n: usize) -> f64 {
        self.k[peak_bin(&self.k, self.psi(n))]
    }

    /// Wavenumber of the largest `|sigma(k)|` at sample `n`.
    pub fn coherence_peak_k(&self, n: usize) -> f64 {
        self.k[peak_bin(&self.k, self.coherence(n))]
    }
}

/// Spatial Fourier transform of a run at every time sample.
pub fn polariton_transform(
    field: &FieldRecord,
    coherence: &CoherenceRecord,
    params: &EnsembleParams,
) -> Result<PolaritonRecord> {
    let grid = *field.grid();
    if coherence.grid() != &grid {
        return Err(Error::InvalidGrid("field and coherence grids differ".into()));
    }
    if params.g <= 0.0 {
        return Err(Error::Singular("polariton field component needs g > 0"));
    }
    let transform = SpatialTransform::new(grid.nz, grid.length);
    let k = transform.k_axis().to_vec();
    let nk = k.len();
    let mut field_k = Vec::with_capacity(nk * grid.nt);
    let mut coherence_k = Vec::with_capacity(nk * grid.nt);
    let mut psi = Vec::with_capacity(nk * grid.nt);
    let weight: Vec<f64> = field
        .raman_ratio()
        .iter()
        .map(|a| params.linear_density * a)
        .collect();
    for n in 0..grid.nt {
        let e = transform.forward(field.slice(n));
        let s = transform.forward(coherence.slice(n));
        for m in 0..nk {
            let ek = e[m] / params.g;
            field_k.push(ek);
            coherence_k.push(s[m]);
            psi.push(ek * k[m] + s[m] * weight[n]);
        }
    }
    Ok(PolaritonRecord {
        grid,
        bin_width: transform.bin_width(),
        k,
        field_k,
        coherence_k,
        psi,
        weight,
    })
}

/// Relative residual of `k E(k) = N a sigma(k)` over `k != 0` at the sample
/// nearest `t`.
///
/// The coupling history is read from the record, so `_params` only documents
/// which ensemble the record belongs to.
pub fn verify_fourier_relation(record: &PolaritonRecord, _params: &EnsembleParams, t: f64) -> Result<f64> {
    let n = record.sample_at(t);
    let w = record.weight[n];
    if w == 0.0 {
        return Err(Error::CouplingOff(t));
    }
    let e = record.field(n);
    let s = record.coherence(n);
    let scale = s.iter().map(|v| (v * w).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let worst = record
        .k
        .iter()
        .enumerate()
        .filter(|(_, k)| **k != 0.0)
        .map(|(m, k)| (e[m] * *k - s[m] * w).norm())
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

/// `v_g = g N (Omega_c/Delta)^2 / k^2`.
pub fn group_velocity(k: f64, params: &EnsembleParams) -> Result<f64> {
    if k == 0.0 {
        return Err(Error::Singular("group velocity diverges at k = 0"));
    }
    let a = params.raman_ratio();
    Ok(params.g * params.linear_density * a * a / (k * k))
}

/// Energy-weighted centroid of `|E(z)|^2` at sample `n`.
pub fn field_centroid(field: &FieldRecord, n: usize) -> Option<f64> {
    let grid = field.grid();
    let (mut w, mut wz) = (0.0, 0.0);
    for (j, v) in field.slice(n).iter().enumerate() {
        let e = v.norm_sqr();
        w += e;
        wz += e * grid.z(j);
    }
    (w > 0.0).then(|| wz / w)
}

/// Largest relative violation of the excitation balance
/// `g N int |sigma|^2 dz + int |E(L)|^2 dt = int |E(0)|^2 dt`, checked at
/// every `stride`-th sample. Holds when `gamma0 = 0` and no drive is applied.
pub fn excitation_residual(result: &StorageResult, params: &EnsembleParams, stride: usize) -> f64 {
    let grid = *result.field.grid();
    let dt = grid.dt();
    let dz = grid.dz();
    let coef = params.g * params.linear_density;
    let entry: Vec<f64> = result.field.entry_series().iter().map(|v| v.norm_sqr()).collect();
    let exit: Vec<f64> = result.field.exit_series().iter().map(|v| v.norm_sqr()).collect();
    let total_in = window_integral(&entry, dt, 0.0, grid.t_max);
    if total_in == 0.0 {
        return 0.0;
    }
    let (mut cum_in, mut cum_out, mut worst) = (0.0, 0.0, 0.0f64);
    for n in 0..grid.nt {
        if n > 0 {
            cum_in += 0.5 * dt * (entry[n - 1] + entry[n]);
            cum_out += 0.5 * dt * (exit[n - 1] + exit[n]);
        }
        if n % stride.max(1) != 0 && n + 1 != grid.nt {
            continue;
        }
        let s = result.coherence.slice(n);
        let stored = simpson_z(s, dz) * coef;
        worst = worst.max((stored + cum_out - cum_in).abs() / total_in);
    }
    worst
}

fn simpson_z(s: &[Complex64], dz: f64) -> f64 {
    let v: Vec<f64> = s.iter().map(|x| x.norm_sqr()).collect();
    let n = v.len();
    if n % 2 == 1 {
        let mut acc = v[0] + v[n - 1];
        for (i, x) in v.iter().enumerate().take(n - 1).skip(1) {
            acc += if i % 2 == 1 { 4.0 * x } else { 2.0 * x };
        }
        acc * dz / 3.0
    } else {
        let inner: f64 = v[1..n - 1].iter().sum();
        dz * (inner + 0.5 * (v[0] + v[n - 1]))
    }
}
