//! Process tomography of the two-qubit gate: the channel on the
//! (signal photon) x (spin wave) qubit pair, its Choi matrix, and
//! trace-overlap fidelities against ideal controlled-phase gates.
//!
//! Two-qubit index `q = 2 n_s + a`, with `a = 0` for `|1>` and `a = 1` for `|2>`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad::{
    conditional_phase, evolve, gate_fidelity, initial_state, project_qubits, qubit_basis_state, CMatrix,
    DensityOperator, EvolveOptions, GateParams, HilbertSpace, Integrator, LindbladModel, SectorPropagator,
};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// How outputs that leak out of the qubit subspace are mapped back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageHandling {
    /// Leaked weight is returned as the channel's mean output state,
    /// `L(rho) + (Tr rho - Tr L(rho)) L(I/4) / Tr L(I/4)`. Unlike rescaling
    /// each output separately this keeps the map linear and completely
    /// positive, and makes it exactly trace-preserving.
    #[default]
    Renormalize,
    /// Keep the projected outputs as they are; the map is trace-decreasing.
    TraceDecreasing,
}

/// Largest leakage out of the qubit subspace accepted for any input.
pub const MAX_LEAKAGE: f64 = 0.2;

/// Evolution step used when building a channel from the gate model.
pub const CHANNEL_STEP: f64 = 0.01;

/// Linear map on 4x4 two-qubit operators, stored as the images of the
/// matrix units `|i><j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitChannel {
    images: Vec<CMatrix>,
    pub evolution_time: f64,
    pub handling: LeakageHandling,
    /// Leakage of each of the 16 pure inputs: the four basis states, then
    /// `(|i> + |j>)/sqrt 2` and `(|i> + i|j>)/sqrt 2` for each pair `i < j`.
    pub leakage: Vec<f64>,
}

impl TwoQubitChannel {
    /// Channel with the given images of `|i><j|` (index `4 i + j`).
    pub fn from_images(images: Vec<CMatrix>, evolution_time: f64) -> Result<Self> {
        if images.len() != 16 || images.iter().any(|m| m.shape() != (4, 4)) {
            return Err(Error::Dimension {
                expected: 16,
                found: images.len(),
            });
        }
        Ok(Self {
            images,
            evolution_time,
            handling: LeakageHandling::TraceDecreasing,
            leakage: vec![0.0; 16],
        })
    }

    /// `rho -> U rho U^dagger`.
    pub fn unitary(u: &CMatrix) -> Result<Self> {
        if u.shape() != (4, 4) {
            return Err(Error::Dimension {
                expected: 4,
                found: u.nrows(),
            });
        }
        let images = (0..16)
            .map(|n| {
                let mut e = CMatrix::zeros(4, 4);
                e[(n / 4, n % 4)] = ONE;
                u * e * u.adjoint()
            })
            .collect();
        Self::from_images(images, 0.0)
    }

    pub fn identity() -> Self {
        Self::unitary(&CMatrix::identity(4, 4)).expect("4x4")
    }

    /// `rho -> Tr(rho) I / 4`.
    pub fn depolarizing() -> Self {
        let images = (0..16)
            .map(|n| {
                if n / 4 == n % 4 {
                    CMatrix::identity(4, 4) * Complex64::new(0.25, 0.0)
                } else {
                    CMatrix::zeros(4, 4)
                }
            })
            .collect();
        Self::from_images(images, 0.0).expect("16 images")
    }

    /// Image of `|i><j|`.
    pub fn image(&self, i: usize, j: usize) -> &CMatrix {
        &self.images[4 * i + j]
    }

    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        if rho.shape() != (4, 4) {
            return Err(Error::Dimension {
                expected: 4,
                found: rho.nrows(),
            });
        }
        let mut out = CMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                if rho[(i, j)] != ZERO {
                    out += self.image(i, j) * rho[(i, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn max_leakage(&self) -> f64 {
        self.leakage.iter().copied().fold(0.0, f64::max)
    }
}

/// The 16 pure inputs of the polarization scheme, in the order documented
/// on [`TwoQubitChannel::leakage`].
fn probe_states() -> Vec<[Complex64; 4]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut states = Vec::with_capacity(16);
    for i in 0..4 {
        let mut v = [ZERO; 4];
        v[i] = ONE;
        states.push(v);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let mut plus = [ZERO; 4];
            plus[i] = Complex64::new(h, 0.0);
            plus[j] = Complex64::new(h, 0.0);
            let mut plus_i = plus;
            plus_i[j] = Complex64::new(0.0, h);
            states.push(plus);
            states.push(plus_i);
        }
    }
    states
}

/// Channel of an arbitrary master-equation model on the embedded qubits,
/// evolved for `t_gate` in steps of at most `dt`.
pub fn channel_from_model(
    model: &LindbladModel,
    t_gate: f64,
    dt: f64,
    handling: LeakageHandling,
) -> Result<TwoQubitChannel> {
    if !(t_gate >= 0.0 && t_gate.is_finite()) {
        return Err(invalid("t_gate", "must be non-negative"));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let steps = ((t_gate / dt) - 1e-9).ceil().max(0.0) as usize;
    let propagator = (steps > 0).then(|| SectorPropagator::new(model, t_gate / steps as f64));

    let outputs: Vec<(CMatrix, f64)> = probe_states()
        .par_iter()
        .enumerate()
        .map(|(input, amps)| {
            let mut psi = vec![ZERO; HilbertSpace::DIM];
            for (q, a) in amps.iter().enumerate() {
                psi[qubit_basis_state(q)] = *a;
            }
            let mut m = DensityOperator::pure(&psi)?.into_matrix();
            if let Some(p) = &propagator {
                for _ in 0..steps {
                    p.step(&mut m);
                }
            }
            let (q, weight) = project_qubits(&DensityOperator::from_matrix(m)?);
            let leakage = 1.0 - weight;
            if leakage > MAX_LEAKAGE {
                return Err(Error::Leakage { input, leakage });
            }
            Ok((q, leakage))
        })
        .collect::<Result<_>>()?;

    let mut images = vec![CMatrix::zeros(4, 4); 16];
    for i in 0..4 {
        images[5 * i] = outputs[i].0.clone();
    }
    let mut n = 4;
    for i in 0..4 {
        for j in i + 1..4 {
            let plus = &outputs[n].0;
            let plus_i = &outputs[n + 1].0;
            n += 2;
            let half = Complex64::new(0.5, 0.5);
            let ij = plus + plus_i * I - (&images[5 * i] + &images[5 * j]) * half;
            images[4 * j + i] = ij.adjoint();
            images[4 * i + j] = ij;
        }
    }
    if handling == LeakageHandling::Renormalize {
        let mean: CMatrix = (0..4).map(|i| &images[5 * i]).sum::<CMatrix>();
        let mean = &mean / mean.trace();
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { ONE } else { ZERO };
                let missing = target - images[4 * i + j].trace();
                images[4 * i + j] += &mean * missing;
            }
        }
    }
    Ok(TwoQubitChannel {
        images,
        evolution_time: t_gate,
        handling,
        leakage: outputs.iter().map(|o| o.1).collect(),
    })
}

/// Gate channel after `t_gate`, with per-input renormalization.
pub fn channel_from_gate(params: &GateParams, t_gate: f64) -> Result<TwoQubitChannel> {
    params.validate()?;
    channel_from_model(&LindbladModel::for_gate(params), t_gate, CHANNEL_STEP, LeakageHandling::Renormalize)
}

/// Hermiticity, trace, positivity and trace-preservation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptpReport {
    pub trace: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Largest entry of `|Tr_out chi - I/4|`.
    pub tp_residual: f64,
    pub purity: f64,
}

impl CptpReport {
    pub fn is_cp(&self) -> bool {
        self.min_eigenvalue >= -1e-8
    }

    pub fn is_tp(&self) -> bool {
        self.tp_residual < 1e-3
    }
}

/// Choi state `chi = (1/4) sum_ij |i><j| (x) L(|i><j|)`, with the input
/// factor first: `chi[(4 i + a, 4 j + b)] = L(|i><j|)[a, b] / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    matrix: CMatrix,
    pub report: CptpReport,
}

impl ChoiMatrix {
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.shape() != (16, 16) {
            return Err(Error::Dimension {
                expected: 16,
                found: matrix.nrows(),
            });
        }
        let report = cptp_report(&matrix);
        Ok(Self { matrix, report })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }
}

fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn cptp_report(chi: &CMatrix) -> CptpReport {
    let mut tp_residual: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let partial: Complex64 = (0..4).map(|a| chi[(4 * i + a, 4 * j + a)]).sum();
            let target = if i == j { 0.25 } else { 0.0 };
            tp_residual = tp_residual.max((partial - target).norm());
        }
    }
    CptpReport {
        trace: chi.trace().re,
        hermiticity_error: (chi - chi.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max),
        min_eigenvalue: hermitian_eigenvalues(chi)[0],
        tp_residual,
        purity: (chi * chi).trace().re,
    }
}

pub fn choi_matrix(channel: &TwoQubitChannel) -> ChoiMatrix {
    let mut chi = CMatrix::zeros(16, 16);
    for i in 0..4 {
        for j in 0..4 {
            let img = channel.image(i, j);
            for a in 0..4 {
                for b in 0..4 {
                    chi[(4 * i + a, 4 * j + b)] = img[(a, b)] * 0.25;
                }
            }
        }
    }
    ChoiMatrix::from_matrix(chi).expect("16x16")
}

/// `diag(1, 1, 1, e^{i phi})`.
pub fn cphase(phi: f64) -> CMatrix {
    let mut u = CMatrix::identity(4, 4);
    u[(3, 3)] = Complex64::from_polar(1.0, phi);
    u
}

/// Choi state of `diag(1, 1, 1, e^{i phi})`.
pub fn ideal_cphase_choi(phi: f64) -> ChoiMatrix {
    choi_matrix(&TwoQubitChannel::unitary(&cphase(phi)).expect("4x4"))
}

/// Largest accepted deviation of a Choi trace from one.
pub const TRACE_TOLERANCE: f64 = 1e-8;

/// `Re Tr(chi_ideal chi)`.
pub fn process_fidelity(chi: &ChoiMatrix, chi_ideal: &ChoiMatrix) -> Result<f64> {
    for c in [chi, chi_ideal] {
        if (c.report.trace - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::Normalization(c.report.trace));
        }
    }
    let overlap = (chi_ideal.matrix() * chi.matrix()).trace();
    if overlap.im.abs() >= 1e-10 {
        return Err(Error::Normalization(overlap.im));
    }
    Ok(overlap.re)
}

/// Fidelity of the gate channel against one ideal candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFidelity {
    pub name: String,
    pub phi: f64,
    pub fidelity: f64,
}

/// Everything needed to compare a gate run with reference values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateAssessment {
    pub params: GateParams,
    pub gate_time: f64,
    /// Radians.
    pub conditional_phase: f64,
    pub state_fidelity: f64,
    pub candidates: Vec<CandidateFidelity>,
    /// Index into `candidates` of the highest fidelity.
    pub best: usize,
    pub leakage: Vec<f64>,
    pub cptp: CptpReport,
}

impl GateAssessment {
    pub fn best_candidate(&self) -> &CandidateFidelity {
        &self.candidates[self.best]
    }

    pub fn phase_mrad(&self) -> f64 {
        self.conditional_phase * 1e3
    }

    /// Text report of the run, for runs that fall outside expected ranges.
    pub fn discrepancy_report(&self, phase_mrad: (f64, f64), fidelity: (f64, f64)) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "gate assessment at t = {} / gamma", self.gate_time);
        let _ = writeln!(
            s,
            "  params: gamma={} omega_c={} omega_c'={} delta={} delta'={} delta4={} g={} N={:e} bandwidth={}",
            p.gamma, p.omega_c, p.omega_c_prime, p.delta, p.delta_prime, p.delta4, p.g, p.atom_number, p.photon_bandwidth
        );
        let _ = writeln!(
            s,
            "  model: probe_coupling_on={} signal_dressing={} signal_loss={} effective_g24={:.6e}",
            p.probe_coupling_on,
            p.signal_dressing,
            p.signal_loss,
            p.effective_g24()
        );
        let _ = writeln!(
            s,
            "  |phi| = {:.6} mrad (expected [{}, {}])",
            self.phase_mrad().abs(),
            phase_mrad.0,
            phase_mrad.1
        );
        for c in &self.candidates {
            let _ = writeln!(s, "  F[{}] (phi = {:.6e}) = {:.6}", c.name, c.phi, c.fidelity);
        }
        let _ = writeln!(
            s,
            "  best candidate: {} (expected fidelity [{}, {}])",
            self.best_candidate().name,
            fidelity.0,
            fidelity.1
        );
        let _ = writeln!(s, "  state fidelity: {:.6}", self.state_fidelity);
        let _ = writeln!(
            s,
            "  leakage per input: max {:.3e}, mean {:.3e}",
            self.leakage.iter().copied().fold(0.0, f64::max),
            self.leakage.iter().sum::<f64>() / self.leakage.len() as f64
        );
        let _ = writeln!(
            s,
            "  choi: min eigenvalue {:.3e}, tp residual {:.3e}, purity {:.6}",
            self.cptp.min_eigenvalue, self.cptp.tp_residual, self.cptp.purity
        );
        s
    }
}

/// Conditional phase, state fidelity and process fidelities against the
/// identity, `CPHASE(phi)` and `CPHASE(pi)` after `t_gate`.
pub fn assess_gate(params: &GateParams, t_gate: f64) -> Result<GateAssessment> {
    params.validate()?;
    let model = LindbladModel::for_gate(params);
    let traj = evolve(
        &initial_state(),
        &model,
        &EvolveOptions {
            t_end: t_gate,
            dt: CHANNEL_STEP,
            record_every: usize::MAX,
            integrator: Integrator::Exact,
        },
    )?;
    let rho = traj.last();
    let phi = conditional_phase(rho)?;
    let state_fidelity = gate_fidelity(rho, phi)?;
    let channel = channel_from_model(&model, t_gate, CHANNEL_STEP, LeakageHandling::Renormalize)?;
    let chi = choi_matrix(&channel);
    let candidates: Vec<CandidateFidelity> = [("identity", 0.0), ("cphase(phi)", phi), ("cphase(pi)", std::f64::consts::PI)]
        .into_iter()
        .map(|(name, p)| {
            Ok(CandidateFidelity {
                name: name.to_string(),
                phi: p,
                fidelity: process_fidelity(&chi, &ideal_cphase_choi(p))?,
            })
        })
        .collect::<Result<_>>()?;
    let best = candidates
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.fidelity.total_cmp(&b.1.fidelity))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(GateAssessment {
        params: *params,
        gate_time: t_gate,
        conditional_phase: phi,
        state_fidelity,
        candidates,
        best,
        leakage: channel.leakage.clone(),
        cptp: chi.report,
    })
}

/// Real and imaginary parts of a matrix, row by row.
pub fn split_parts(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|v| v.re), m.map(|v| v.im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_choi_is_maximally_entangled() {
        let chi = choi_matrix(&TwoQubitChannel::identity());
        for r in 0..16 {
            for c in 0..16 {
                let expected = if r % 5 == 0 && c % 5 == 0 { 0.25 } else { 0.0 };
                assert!((chi.matrix()[(r, c)] - Complex64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
        assert!((chi.report.purity - 1.0).abs() < 1e-14);
        assert!(chi.report.tp_residual < 1e-15);
    }

    #[test]
    fn depolarizing_choi_is_flat() {
        let chi = choi_matrix(&TwoQubitChannel::depolarizing());
        let flat = CMatrix::identity(16, 16) / Complex64::new(16.0, 0.0);
        assert!((chi.matrix() - flat).iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn identity_vs_cphase_pi() {
        let f = process_fidelity(&ideal_cphase_choi(0.0), &ideal_cphase_choi(std::f64::consts::PI)).unwrap();
        assert!((f - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_choi_rejected() {
        let m = CMatrix::identity(16, 16) / Complex64::new(8.0, 0.0);
        let bad = ChoiMatrix::from_matrix(m).unwrap();
        assert!(matches!(
            process_fidelity(&bad, &ideal_cphase_choi(0.0)),
            Err(Error::Normalization(_))
        ));
    }

    #[test]
    fn polarization_inputs_are_normalized() {
        for s in probe_states() {
            let n: f64 = s.iter().map(|c| c.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-15);
        }
    }
}
