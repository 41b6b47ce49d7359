//! Master-equation model of the two-photon gate: one collective emitter with
//! seven levels and two single-photon modes, evolved under a Lindblad
//! generator with spontaneous decay from the excited levels.
//!
//! Basis states are `|level, n_p, n_s>` with index `4 * level + 2 * n_p + n_s`
//! (atomic-major), so the dimension is `7 * 2 * 2 = 28`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Atomic levels of the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// `|1>`, ground state of the probe memory.
    ProbeGround,
    /// `|2>`, spin state holding the stored probe.
    ProbeSpin,
    /// `|3>`, excited state of the probe Raman transition.
    ProbeExcited,
    /// `|4>`, excited state reached from `|2>` by the signal photon.
    StarkExcited,
    /// `|1'>`, ground state of the signal memory.
    SignalGround,
    /// `|2'>`, spin state holding the stored signal.
    SignalSpin,
    /// `|3'>`, excited state of the signal Raman transition.
    SignalExcited,
}

impl Level {
    pub const ALL: [Level; 7] = [
        Level::ProbeGround,
        Level::ProbeSpin,
        Level::ProbeExcited,
        Level::StarkExcited,
        Level::SignalGround,
        Level::SignalSpin,
        Level::SignalExcited,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Levels of the probe memory (`|1>` to `|4>`).
    pub fn is_probe_manifold(self) -> bool {
        self.index() < 4
    }

    pub fn is_excited(self) -> bool {
        matches!(self, Level::ProbeExcited | Level::StarkExcited | Level::SignalExcited)
    }
}

/// Photon mode carrying the probe (`p`) or the signal (`s`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Probe,
    Signal,
}

/// Fixed basis of the 28-dimensional gate space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HilbertSpace;

impl HilbertSpace {
    pub const DIM: usize = 28;

    pub fn index(level: Level, n_p: usize, n_s: usize) -> usize {
        debug_assert!(n_p < 2 && n_s < 2);
        4 * level.index() + 2 * n_p + n_s
    }

    pub fn decompose(index: usize) -> (Level, usize, usize) {
        assert!(index < Self::DIM, "basis index {index} out of range");
        (Level::ALL[index / 4], (index / 2) % 2, index % 2)
    }

    pub fn label(index: usize) -> String {
        let (level, p, s) = Self::decompose(index);
        format!("{level:?},p={p},s={s}")
    }
}

/// Sparse operator on [`HilbertSpace`], stored as `(row, col, value)` entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Operator {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Operator {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    fn push(&mut self, row: usize, col: usize, value: Complex64) {
        if value != ZERO {
            match self.entries.iter_mut().find(|e| e.0 == row && e.1 == col) {
                Some(e) => e.2 += value,
                None => self.entries.push((row, col, value)),
            }
        }
    }

    /// `|to><from|` on the atom, tensored with the identity on both modes.
    pub fn transition(to: Level, from: Level) -> Self {
        let mut op = Self::zero();
        for p in 0..2 {
            for s in 0..2 {
                op.push(HilbertSpace::index(to, p, s), HilbertSpace::index(from, p, s), ONE);
            }
        }
        op
    }

    /// `a |to><from|`: the mode loses its photon while the atom goes `from -> to`.
    pub fn absorb(to: Level, from: Level, mode: Mode) -> Self {
        let mut op = Self::zero();
        for other in 0..2 {
            let (src, dst) = match mode {
                Mode::Probe => (HilbertSpace::index(from, 1, other), HilbertSpace::index(to, 0, other)),
                Mode::Signal => (HilbertSpace::index(from, other, 1), HilbertSpace::index(to, other, 0)),
            };
            op.push(dst, src, ONE);
        }
        op
    }

    /// `a` on one mode restricted to the given atomic levels.
    pub fn annihilate(mode: Mode, levels: &[Level]) -> Self {
        let mut op = Self::zero();
        for &l in levels {
            op = op.plus(&Self::absorb(l, l, mode));
        }
        op
    }

    /// `|l><l|` tensored with the mode identity.
    pub fn projector(level: Level) -> Self {
        Self::transition(level, level)
    }

    pub fn scaled(&self, c: impl Into<Complex64>) -> Self {
        let c = c.into();
        let mut op = Self::zero();
        for &(r, k, v) in &self.entries {
            op.push(r, k, v * c);
        }
        op
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut op = self.clone();
        for &(r, k, v) in &other.entries {
            op.push(r, k, v);
        }
        op
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&(r, k, v)| (k, r, v.conj())).collect(),
        }
    }

    /// `self + self^dagger`.
    pub fn with_adjoint(&self) -> Self {
        self.plus(&self.adjoint())
    }

    /// Sparse product `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut op = Self::zero();
        for &(r, k, v) in &self.entries {
            for &(r2, k2, v2) in &other.entries {
                if k == r2 {
                    op.push(r, k2, v * v2);
                }
            }
        }
        op
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(HilbertSpace::DIM, HilbertSpace::DIM);
        for &(r, k, v) in &self.entries {
            m[(r, k)] += v;
        }
        m
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.entries
            .iter()
            .filter(|e| e.0 == row && e.1 == col)
            .map(|e| e.2)
            .sum()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().map(|e| e.2.norm()).fold(0.0, f64::max)
    }

    /// `self * m`.
    fn mul_dense(&self, m: &CMatrix, out: &mut CMatrix) {
        out.fill(ZERO);
        let n = m.ncols();
        for &(r, k, v) in &self.entries {
            for c in 0..n {
                out[(r, c)] += v * m[(k, c)];
            }
        }
    }

    /// `out += self * m * self^dagger`.
    fn sandwich_add(&self, m: &CMatrix, out: &mut CMatrix) {
        for &(r1, k1, v1) in &self.entries {
            for &(r2, k2, v2) in &self.entries {
                out[(r1, r2)] += v1 * m[(k1, k2)] * v2.conj();
            }
        }
    }
}

/// Density matrix on [`HilbertSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != HilbertSpace::DIM || matrix.ncols() != HilbertSpace::DIM {
            return Err(Error::Dimension {
                expected: HilbertSpace::DIM,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { matrix })
    }

    /// `|psi><psi|` for a normalized state vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        if psi.len() != HilbertSpace::DIM {
            return Err(Error::Dimension {
                expected: HilbertSpace::DIM,
                found: psi.len(),
            });
        }
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Normalization(norm));
        }
        let v = nalgebra::DVector::from_column_slice(psi);
        Ok(Self { matrix: &v * v.adjoint() })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Largest entry of `|rho - rho^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn population(&self, level: Level) -> f64 {
        (0..4).map(|m| self.matrix[(4 * level.index() + m, 4 * level.index() + m)].re).sum()
    }

    /// Conjugation by `e^{i theta}` times the identity.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let u = Complex64::from_polar(1.0, theta);
        Self {
            matrix: self.matrix.map(|v| u * v * u.conj()),
        }
    }

    fn symmetrize(&mut self) {
        let adj = self.matrix.adjoint();
        self.matrix += adj;
        self.matrix *= Complex64::new(0.5, 0.0);
    }
}

/// Gate parameters in units of `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateParams {
    pub gamma: f64,
    /// Probe coupling Rabi frequency.
    pub omega_c: f64,
    /// Signal coupling Rabi frequency.
    pub omega_c_prime: f64,
    pub delta: f64,
    pub delta_prime: f64,
    /// Detuning of `|4>`.
    pub delta4: f64,
    /// Single-atom coupling.
    pub g: f64,
    pub atom_number: f64,
    /// Rate at which a photon wavepacket feeds into its mode.
    pub photon_bandwidth: f64,
    /// Duration of the interaction window over which the feeding is averaged.
    pub gate_time: f64,
    /// Keep the probe coupling on while the gate runs. Off by default: the
    /// probe is held in the spin wave with its coupling switched off.
    #[serde(default)]
    pub probe_coupling_on: bool,
    /// Scale the signal photon's coupling to `|2> -> |4>` by the fraction of
    /// time it spends as light inside the signal memory.
    #[serde(default = "yes")]
    pub signal_dressing: bool,
    /// Leak the signal photon at the spin-wave loss rate of its memory.
    #[serde(default = "yes")]
    pub signal_loss: bool,
}

fn yes() -> bool {
    true
}

impl Default for GateParams {
    fn default() -> Self {
        let omega_c = 20.0;
        Self {
            gamma: 1.0,
            omega_c,
            omega_c_prime: omega_c,
            delta: 30.0 * omega_c,
            delta_prime: 30.0 * omega_c,
            delta4: 20.0,
            g: 0.085,
            atom_number: 1.0e7,
            photon_bandwidth: 1.0,
            gate_time: 15.0,
            probe_coupling_on: false,
            signal_dressing: true,
            signal_loss: true,
        }
    }
}

impl GateParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma", self.gamma),
            ("omega_c", self.omega_c),
            ("omega_c_prime", self.omega_c_prime),
            ("delta", self.delta),
            ("delta_prime", self.delta_prime),
            ("delta4", self.delta4),
            ("g", self.g),
            ("atom_number", self.atom_number),
            ("photon_bandwidth", self.photon_bandwidth),
            ("gate_time", self.gate_time),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
            let ok = match name {
                "gamma" | "omega_c" | "omega_c_prime" | "g" => v >= 0.0,
                "delta4" => true,
                "atom_number" => v >= 1.0,
                _ => v > 0.0,
            };
            if !ok {
                return Err(invalid(name, format!("{v} is out of range")));
            }
        }
        Ok(())
    }

    /// Collective coupling of the probe mode on `|1> -> |3>`.
    pub fn g13(&self) -> f64 {
        self.g * self.atom_number.sqrt()
    }

    /// Collective coupling of the signal mode on `|1'> -> |3'>`.
    pub fn g1p3p(&self) -> f64 {
        self.g13()
    }

    /// Bare single-atom coupling of the signal mode on `|2> -> |4>`.
    pub fn g24(&self) -> f64 {
        self.g
    }

    /// Fraction `Omega'^2 / (Omega'^2 + g^2 N)` of the signal dark-state
    /// polariton that is photonic.
    pub fn dressing_factor(&self) -> f64 {
        let w = self.omega_c_prime * self.omega_c_prime;
        let gn = self.g1p3p() * self.g1p3p();
        if w + gn == 0.0 {
            1.0
        } else {
            w / (w + gn)
        }
    }

    /// Mean of `1 - exp(-B t)` over the gate window: the average mode
    /// occupation of a photon fed in at bandwidth `B`.
    pub fn bandwidth_factor(&self) -> f64 {
        let x = self.photon_bandwidth * self.gate_time;
        1.0 - (-x).exp_m1().abs() / x
    }

    /// Coupling of the signal photon on `|2> -> |4>` used in the Hamiltonian.
    pub fn effective_g24(&self) -> f64 {
        if self.signal_dressing {
            self.g24() * (self.dressing_factor() * self.bandwidth_factor()).sqrt()
        } else {
            self.g24()
        }
    }

    /// `gamma (Omega'_c / Delta')^2`.
    pub fn signal_loss_rate(&self) -> f64 {
        let r = self.omega_c_prime / self.delta_prime;
        self.gamma * r * r
    }

    /// Largest frequency scale, which bounds the explicit time step.
    pub fn fastest_rate(&self) -> f64 {
        self.delta.abs().max(self.delta_prime.abs()).max(self.g13())
    }

    /// Largest step accepted by the explicit integrator.
    pub fn max_step(&self) -> f64 {
        0.1 / self.fastest_rate()
    }
}

/// Hamiltonian in the frame rotating with all optical carriers.
pub fn build_hamiltonian(params: &GateParams) -> Operator {
    use Level::*;
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut coupling = Operator::absorb(ProbeExcited, ProbeGround, Mode::Probe)
        .scaled(c(params.g13()))
        .plus(&Operator::absorb(StarkExcited, ProbeSpin, Mode::Signal).scaled(c(params.effective_g24())))
        .plus(&Operator::absorb(SignalExcited, SignalGround, Mode::Signal).scaled(c(params.g1p3p())))
        .plus(&Operator::transition(SignalExcited, SignalSpin).scaled(c(params.omega_c_prime)));
    if params.probe_coupling_on {
        coupling = coupling.plus(&Operator::transition(ProbeExcited, ProbeSpin).scaled(c(params.omega_c)));
    }
    coupling
        .with_adjoint()
        .plus(&Operator::projector(ProbeExcited).scaled(c(params.delta)))
        .plus(&Operator::projector(SignalExcited).scaled(c(params.delta_prime)))
        .plus(&Operator::projector(StarkExcited).scaled(c(params.delta4)))
}

/// Collapse operators with their rates folded in. Each excited level decays
/// at total rate `gamma`, split equally among its ground channels.
pub fn decay_operators(params: &GateParams) -> Vec<Operator> {
    use Level::*;
    let channels: [(Level, &[Level]); 3] = [
        (ProbeExcited, &[ProbeGround, ProbeSpin]),
        (StarkExcited, &[ProbeSpin]),
        (SignalExcited, &[SignalGround, SignalSpin]),
    ];
    let mut ops = Vec::new();
    if params.gamma > 0.0 {
        for (from, targets) in channels {
            let rate = params.gamma / targets.len() as f64;
            for &to in targets {
                ops.push(Operator::transition(to, from).scaled(rate.sqrt()));
            }
        }
    }
    let loss = params.signal_loss_rate();
    if params.signal_loss && loss > 0.0 {
        let probe_levels = [ProbeGround, ProbeSpin, ProbeExcited, StarkExcited];
        ops.push(Operator::annihilate(Mode::Signal, &probe_levels).scaled(loss.sqrt()));
    }
    ops
}

/// `rho(0) = rho_atom (x) rho_photon` with
/// `rho_atom = (|1'><1'| + |psi0><psi0|) / 2`, `|psi0> = (|1> + |2>)/sqrt 2`,
/// and the photon state `|0_p> (|0_s> + |1_s>)/sqrt 2`.
pub fn initial_state() -> DensityOperator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut spin = vec![ZERO; HilbertSpace::DIM];
    let mut signal = vec![ZERO; HilbertSpace::DIM];
    for s in 0..2 {
        for level in [Level::ProbeGround, Level::ProbeSpin] {
            spin[HilbertSpace::index(level, 0, s)] = Complex64::new(h * h, 0.0);
        }
        signal[HilbertSpace::index(Level::SignalGround, 0, s)] = Complex64::new(h, 0.0);
    }
    let a = DensityOperator::pure(&spin).expect("normalized");
    let b = DensityOperator::pure(&signal).expect("normalized");
    DensityOperator {
        matrix: (a.matrix + b.matrix) * Complex64::new(0.5, 0.0),
    }
}

/// Generator of the master equation.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    pub hamiltonian: Operator,
    /// Collapse operators with rates folded in.
    pub collapse: Vec<Operator>,
    /// `H - (i/2) sum c^dagger c`.
    effective: Operator,
}

impl LindbladModel {
    pub fn new(hamiltonian: Operator, collapse: Vec<Operator>) -> Self {
        let mut effective = hamiltonian.clone();
        for c in &collapse {
            effective = effective.plus(&c.adjoint().compose(c).scaled(Complex64::new(0.0, -0.5)));
        }
        Self {
            hamiltonian,
            collapse,
            effective,
        }
    }

    pub fn for_gate(params: &GateParams) -> Self {
        Self::new(build_hamiltonian(params), decay_operators(params))
    }

    /// `-i (H_eff rho - rho H_eff^dagger) + sum c rho c^dagger`, valid for any
    /// `rho`, Hermitian or not.
    fn rhs_into(&self, rho: &CMatrix, scratch: &mut CMatrix, out: &mut CMatrix) {
        self.effective.mul_dense(rho, scratch);
        let n = rho.nrows();
        for &(r, k, v) in self.effective.entries() {
            // (rho H^dagger)[i, r] = sum_k rho[i, k] conj(H[r, k])
            let vc = v.conj();
            for i in 0..n {
                scratch[(i, r)] -= rho[(i, k)] * vc;
            }
        }
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = -I * s;
        }
        for op in &self.collapse {
            op.sandwich_add(rho, out);
        }
    }

    /// Superoperator acting on `rho` stacked column by column.
    pub fn liouvillian(&self) -> CMatrix {
        let d = HilbertSpace::DIM;
        let mut l = CMatrix::zeros(d * d, d * d);
        let mut basis = CMatrix::zeros(d, d);
        let mut scratch = CMatrix::zeros(d, d);
        let mut out = CMatrix::zeros(d, d);
        for j in 0..d {
            for i in 0..d {
                basis[(i, j)] = ONE;
                self.rhs_into(&basis, &mut scratch, &mut out);
                basis[(i, j)] = ZERO;
                for (k, v) in out.iter().enumerate() {
                    l[(k, i + j * d)] = *v;
                }
            }
        }
        l
    }
}

/// `d rho / dt = -i [H, rho] + sum_j D[c_j] rho`.
pub fn lindblad_rhs(rho: &DensityOperator, model: &LindbladModel) -> Result<CMatrix> {
    let d = HilbertSpace::DIM;
    let m = rho.matrix();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            found: m.nrows(),
        });
    }
    let mut scratch = CMatrix::zeros(d, d);
    let mut out = CMatrix::zeros(d, d);
    model.rhs_into(m, &mut scratch, &mut out);
    Ok(out)
}

/// Time stepping scheme for [`evolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta, re-symmetrized every step.
    Rk4,
    /// Exact propagator `exp(L dt)`, built block by block over the
    /// decoupled sectors of the Liouvillian.
    #[default]
    Exact,
}

/// Largest tolerated `|Tr rho - 1|` before evolution aborts.
pub const TRACE_ABORT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Store every `record_every` steps (plus the final state).
    pub record_every: usize,
    pub integrator: Integrator,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityOperator>,
    /// Step actually used (`t_end` divided by a whole number of steps).
    pub dt: f64,
}

impl Trajectory {
    pub fn last(&self) -> &DensityOperator {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Exact propagator over one time step, stored per connected block.
#[derive(Debug, Clone)]
pub struct SectorPropagator {
    blocks: Vec<(Vec<usize>, CMatrix)>,
    dt: f64,
}

impl SectorPropagator {
    pub fn new(model: &LindbladModel, dt: f64) -> Self {
        let l = model.liouvillian();
        let n = l.nrows();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for c in 0..n {
            for r in 0..n {
                if l[(r, c)] != ZERO {
                    let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        let blocks = groups
            .into_values()
            .filter(|idx| idx.len() > 1 || l[(idx[0], idx[0])] != ZERO)
            .map(|idx| {
                let m = idx.len();
                let block = CMatrix::from_fn(m, m, |r, c| l[(idx[r], idx[c])] * dt);
                (idx, block.exp())
            })
            .collect();
        Self { blocks, dt }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Size of the largest decoupled sector.
    pub fn largest_block(&self) -> usize {
        self.blocks.iter().map(|b| b.0.len()).max().unwrap_or(0)
    }

    pub fn step(&self, rho: &mut CMatrix) {
        let flat = rho.as_mut_slice();
        for (idx, prop) in &self.blocks {
            let v: Vec<Complex64> = idx.iter().map(|&i| flat[i]).collect();
            for (r, &i) in idx.iter().enumerate() {
                let mut acc = ZERO;
                for (c, x) in v.iter().enumerate() {
                    acc += prop[(r, c)] * x;
                }
                flat[i] = acc;
            }
        }
    }
}

struct Rk4Work {
    k: [CMatrix; 4],
    stage: CMatrix,
    scratch: CMatrix,
}

/// `y += a x`.
fn axpy(y: &mut CMatrix, a: Complex64, x: &CMatrix) {
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += a * xv;
    }
}

fn rk4_step(model: &LindbladModel, rho: &mut CMatrix, dt: f64, w: &mut Rk4Work) {
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    model.rhs_into(rho, &mut w.scratch, &mut w.k[0]);
    w.stage.copy_from(rho);
    axpy(&mut w.stage, half, &w.k[0]);
    model.rhs_into(&w.stage, &mut w.scratch, &mut w.k[1]);
    w.stage.copy_from(rho);
    axpy(&mut w.stage, half, &w.k[1]);
    model.rhs_into(&w.stage, &mut w.scratch, &mut w.k[2]);
    w.stage.copy_from(rho);
    axpy(&mut w.stage, full, &w.k[2]);
    model.rhs_into(&w.stage, &mut w.scratch, &mut w.k[3]);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    let third = Complex64::new(dt / 3.0, 0.0);
    axpy(rho, sixth, &w.k[0]);
    axpy(rho, third, &w.k[1]);
    axpy(rho, third, &w.k[2]);
    axpy(rho, sixth, &w.k[3]);
}

/// Integrate the master equation from `rho0` to `t_end`.
pub fn evolve(rho0: &DensityOperator, model: &LindbladModel, options: &EvolveOptions) -> Result<Trajectory> {
    let EvolveOptions {
        t_end,
        dt,
        record_every,
        integrator,
    } = *options;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("t_end", "must be non-negative"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if integrator == Integrator::Rk4 {
        let bound = 0.1 / model.hamiltonian.max_abs_entry().max(f64::MIN_POSITIVE);
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::Unstable {
                dt,
                rate: model.hamiltonian.max_abs_entry(),
                required: bound,
            });
        }
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let step = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let stride = record_every.max(1);

    let mut rho = rho0.clone();
    let mut times = vec![0.0];
    let mut states = vec![rho.clone()];
    let propagator = (integrator == Integrator::Exact && steps > 0).then(|| SectorPropagator::new(model, step));
    let d = HilbertSpace::DIM;
    let mut work = Rk4Work {
        k: std::array::from_fn(|_| CMatrix::zeros(d, d)),
        stage: CMatrix::zeros(d, d),
        scratch: CMatrix::zeros(d, d),
    };
    let trace0 = rho0.trace().re;
    for n in 1..=steps {
        match &propagator {
            Some(p) => p.step(&mut rho.matrix),
            None => rk4_step(model, &mut rho.matrix, step, &mut work),
        }
        rho.symmetrize();
        let t = n as f64 * step;
        let drift = (rho.trace().re - trace0).abs();
        if !drift.is_finite() || drift > TRACE_ABORT {
            return Err(Error::TraceDrift { t, drift });
        }
        if n % stride == 0 || n == steps {
            times.push(t);
            states.push(rho.clone());
        }
    }
    Ok(Trajectory { times, states, dt: step })
}

/// Magnitude below which a coherence carries no usable phase.
pub const PHASE_FLOOR: f64 = 1e-14;

/// `<2, n_s| rho |1, n_s>` summed over the probe-mode occupation.
pub fn spin_coherence(rho: &DensityOperator, n_s: usize) -> Complex64 {
    (0..2)
        .map(|p| {
            rho.element(
                HilbertSpace::index(Level::ProbeSpin, p, n_s),
                HilbertSpace::index(Level::ProbeGround, p, n_s),
            )
        })
        .sum()
}

/// Phase of the spin-wave coherence with one signal photon present,
/// relative to the phase without it. Positive when the photon advances
/// `|2>` relative to `|1>`, matching `diag(1, 1, 1, e^{i phi})`.
pub fn conditional_phase(rho: &DensityOperator) -> Result<f64> {
    let with = spin_coherence(rho, 1);
    let without = spin_coherence(rho, 0);
    let m = with.norm().min(without.norm());
    if m < PHASE_FLOOR {
        return Err(Error::UndefinedPhase(m));
    }
    Ok((with * without.conj()).arg())
}

/// Two-qubit index `2 n_s + a`, where `a = 0` is `|1>` and `a = 1` is `|2>`.
pub fn qubit_index(n_s: usize, spin: usize) -> usize {
    2 * n_s + spin
}

/// Embedding of qubit index `q` in [`HilbertSpace`] with the probe mode empty.
pub fn qubit_basis_state(q: usize) -> usize {
    let level = if q.is_multiple_of(2) { Level::ProbeGround } else { Level::ProbeSpin };
    HilbertSpace::index(level, 0, q / 2)
}

/// Block of `rho` on the qubit subspace, with the probe mode traced out,
/// and its trace before renormalization.
pub fn project_qubits(rho: &DensityOperator) -> (CMatrix, f64) {
    let mut q = CMatrix::zeros(4, 4);
    for a in 0..4 {
        for b in 0..4 {
            q[(a, b)] = (0..2)
                .map(|p| {
                    let (ra, rb) = (qubit_basis_state(a) + 2 * p, qubit_basis_state(b) + 2 * p);
                    rho.element(ra, rb)
                })
                .sum();
        }
    }
    let weight = q.trace().re;
    (q, weight)
}

/// Smallest qubit-subspace weight accepted by [`gate_fidelity`].
pub const MIN_QUBIT_WEIGHT: f64 = 1e-6;

/// Ideal two-qubit image `CPHASE(phi) |+>|+>` of the initial product state.
pub fn ideal_image(phi: f64) -> [Complex64; 4] {
    let h = Complex64::new(0.5, 0.0);
    [h, h, h, h * Complex64::from_polar(1.0, phi)]
}

/// Overlap of the renormalized qubit block of `rho` with the ideal image.
pub fn gate_fidelity(rho: &DensityOperator, phi: f64) -> Result<f64> {
    let (q, weight) = project_qubits(rho);
    if weight < MIN_QUBIT_WEIGHT {
        return Err(Error::LeftSubspace(weight));
    }
    let psi = ideal_image(phi);
    let mut f = ZERO;
    for a in 0..4 {
        for b in 0..4 {
            f += psi[a].conj() * q[(a, b)] * psi[b];
        }
    }
    Ok(f.re / weight)
}

/// Conditional phase and gate fidelity against time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub fidelity: Vec<f64>,
}

/// Evolve [`initial_state`] and record the conditional phase (unwrapped)
/// and the fidelity to `CPHASE(phi)` every `record_every` steps of `dt`.
pub fn phase_trace(params: &GateParams, t_end: f64, dt: f64, record_every: usize) -> Result<PhaseTrace> {
    params.validate()?;
    let model = LindbladModel::for_gate(params);
    let traj = evolve(
        &initial_state(),
        &model,
        &EvolveOptions {
            t_end,
            dt,
            record_every,
            integrator: Integrator::Exact,
        },
    )?;
    let mut phi = Vec::with_capacity(traj.states.len());
    let mut fidelity = Vec::with_capacity(traj.states.len());
    let mut last = 0.0;
    for s in &traj.states {
        let raw = conditional_phase(s)?;
        let mut unwrapped = raw;
        while unwrapped - last > std::f64::consts::PI {
            unwrapped -= 2.0 * std::f64::consts::PI;
        }
        while unwrapped - last < -std::f64::consts::PI {
            unwrapped += 2.0 * std::f64::consts::PI;
        }
        last = unwrapped;
        phi.push(unwrapped);
        fidelity.push(gate_fidelity(s, unwrapped)?);
    }
    Ok(PhaseTrace {
        times: traj.times,
        phi,
        fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        for i in 0..HilbertSpace::DIM {
            let (l, p, s) = HilbertSpace::decompose(i);
            assert_eq!(HilbertSpace::index(l, p, s), i);
        }
        assert_eq!(HilbertSpace::index(Level::SignalExcited, 1, 1), 27);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let h = build_hamiltonian(&GateParams::default()).to_dense();
        assert_eq!((&h - h.adjoint()).camax(), 0.0);
    }

    #[test]
    fn collective_matrix_element() {
        let p = GateParams::default();
        let h = build_hamiltonian(&p);
        for s in 0..2 {
            let e = h.element(
                HilbertSpace::index(Level::ProbeExcited, 0, s),
                HilbertSpace::index(Level::ProbeGround, 1, s),
            );
            assert_eq!(e, Complex64::new(0.085 * 1e7f64.sqrt(), 0.0));
        }
    }

    #[test]
    fn uncoupled_hamiltonian_is_diagonal() {
        let p = GateParams {
            g: 0.0,
            omega_c: 0.0,
            omega_c_prime: 0.0,
            probe_coupling_on: true,
            ..GateParams::default()
        };
        assert!(build_hamiltonian(&p).entries().iter().all(|e| e.0 == e.1));
    }

    #[test]
    fn initial_state_values() {
        let r = initial_state();
        assert!((r.trace() - ONE).norm() < 1e-15);
        let e = r.element(
            HilbertSpace::index(Level::ProbeGround, 0, 0),
            HilbertSpace::index(Level::ProbeSpin, 0, 0),
        );
        assert!((e.re - 0.125).abs() < 1e-15 && e.im == 0.0);
        for l in Level::ALL.into_iter().filter(|l| l.is_excited()) {
            assert_eq!(r.population(l), 0.0);
        }
        assert_eq!(conditional_phase(&r).unwrap(), 0.0);
    }

    #[test]
    fn rhs_is_traceless() {
        let model = LindbladModel::for_gate(&GateParams::default());
        let mut rho = initial_state().into_matrix();
        rho[(8, 8)] = Complex64::new(0.1, 0.0);
        rho[(0, 0)] -= Complex64::new(0.1, 0.0);
        let d = lindblad_rhs(&DensityOperator::from_matrix(rho).unwrap(), &model).unwrap();
        assert!(d.trace().norm() < 1e-12);
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(matches!(
            DensityOperator::from_matrix(CMatrix::zeros(4, 4)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fidelity_of_ideal_image_is_one() {
        let phi = 0.3;
        let psi = ideal_image(phi);
        let mut v = vec![ZERO; HilbertSpace::DIM];
        for q in 0..4 {
            v[qubit_basis_state(q)] = psi[q];
        }
        let rho = DensityOperator::pure(&v).unwrap();
        assert!((gate_fidelity(&rho, phi).unwrap() - 1.0).abs() < 1e-14);
        assert!((conditional_phase(&rho).unwrap() - phi).abs() < 1e-14);
    }

    #[test]
    fn bandwidth_factor_limits() {
        let p = GateParams::default();
        let expected = 1.0 - (1.0 - (-15.0f64).exp()) / 15.0;
        assert!((p.bandwidth_factor() - expected).abs() < 1e-15);
        let fast = GateParams {
            photon_bandwidth: 1e6,
            ..p
        };
        assert!((fast.bandwidth_factor() - 1.0).abs() < 1e-6);
    }
}
