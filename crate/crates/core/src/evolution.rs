//! Time evolution `exp(-i H t)`, exactly through the spectral oracle or as a
//! second-order product formula.

use serde::{Deserialize, Serialize};

use crate::error::{PshoError, Result};
use crate::hamiltonian::{Hamiltonian, PauliMasks};
use crate::oracle;
use crate::statevector::{Control, OneQubitGate, StateVector};

/// Remainder steps shorter than this are dropped.
pub const REMAINDER_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvolutionMode {
    Exact,
    Trotter { delta: f64 },
}

impl EvolutionMode {
    pub fn trotter(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(PshoError::InvalidArgument(format!("Trotter step must be positive, got {delta}")));
        }
        Ok(EvolutionMode::Trotter { delta })
    }
}

impl std::fmt::Display for EvolutionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvolutionMode::Exact => write!(f, "exact"),
            EvolutionMode::Trotter { delta } => write!(f, "trotter:{delta}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    OneQubit { qubit: usize, gate: OneQubitGate },
    /// `exp(-i * angle * P)`; an all-zero mask is the identity string.
    Rotation { pauli: PauliMasks, angle: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateRecord {
    pub gate: Gate,
    pub control: Option<Control>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub total: usize,
    pub rotations: usize,
    pub one_qubit: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GateSequence {
    gates: Vec<GateRecord>,
    counts: GateCounts,
}

impl GateSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, gate: Gate, control: Option<Control>) {
        match gate {
            Gate::OneQubit { .. } => self.counts.one_qubit += 1,
            Gate::Rotation { .. } => self.counts.rotations += 1,
        }
        self.counts.total += 1;
        self.gates.push(GateRecord { gate, control });
    }

    pub fn extend(&mut self, other: &GateSequence) {
        for g in &other.gates {
            self.push(g.gate.clone(), g.control);
        }
    }

    pub fn gates(&self) -> &[GateRecord] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn counts(&self) -> GateCounts {
        self.counts
    }

    /// The same gates, each additionally conditioned on `control`.
    pub fn controlled(&self, control: Control) -> Result<GateSequence> {
        let mut out = GateSequence::new();
        for g in &self.gates {
            if g.control.is_some() {
                return Err(PshoError::InvalidArgument("gate already carries a control".into()));
            }
            out.push(g.gate.clone(), Some(control));
        }
        Ok(out)
    }

    /// Reversed order with every gate replaced by its adjoint.
    pub fn inverse(&self) -> GateSequence {
        let mut out = GateSequence::new();
        for g in self.gates.iter().rev() {
            let gate = match &g.gate {
                Gate::OneQubit { qubit, gate } => Gate::OneQubit { qubit: *qubit, gate: gate.adjoint() },
                Gate::Rotation { pauli, angle } => Gate::Rotation { pauli: *pauli, angle: -angle },
            };
            out.push(gate, g.control);
        }
        out
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        for g in &self.gates {
            match &g.gate {
                Gate::OneQubit { qubit, gate } => state.apply_one_qubit_gate_controlled(*qubit, gate, g.control)?,
                Gate::Rotation { pauli, angle } => state.apply_pauli_rotation(*pauli, *angle, g.control)?,
            }
        }
        Ok(())
    }
}

pub fn gate_count(seq: &GateSequence) -> GateCounts {
    seq.counts()
}

fn rotation(seq: &mut GateSequence, coefficient: f64, pauli: PauliMasks, time: f64) {
    seq.push(Gate::Rotation { pauli, angle: coefficient * time }, None);
}

/// `e^{-i h_1 d/2} ... e^{-i h_Z d} ... e^{-i h_1 d/2}` over the canonical term order.
pub fn trotter_step_u2(h: &Hamiltonian, delta: f64) -> GateSequence {
    let terms = h.terms();
    let mut seq = GateSequence::new();
    let Some((last, rest)) = terms.split_last() else {
        return seq;
    };
    for t in rest {
        rotation(&mut seq, t.coefficient(), t.masks(), delta / 2.0);
    }
    rotation(&mut seq, last.coefficient(), last.masks(), delta);
    for t in rest.iter().rev() {
        rotation(&mut seq, t.coefficient(), t.masks(), delta / 2.0);
    }
    seq
}

/// First-order step `e^{-i h_1 d} ... e^{-i h_Z d}`. Kept for comparisons.
pub fn trotter_step_u1(h: &Hamiltonian, delta: f64) -> GateSequence {
    let mut seq = GateSequence::new();
    for t in h.terms() {
        rotation(&mut seq, t.coefficient(), t.masks(), delta);
    }
    seq
}

/// Number of full steps and the remainder for evolving `|t|` with step `delta`.
pub fn step_split(t: f64, delta: f64) -> (usize, f64) {
    let span = t.abs();
    let k = (span / delta + 1e-9).floor();
    let rem = (span - k * delta).max(0.0);
    (k as usize, if rem < REMAINDER_CUTOFF { 0.0 } else { rem })
}

/// `floor(|t|/delta)` steps of `U2(delta)` plus one remainder step.
///
/// For negative `t` the sequence is the exact inverse of the one for `|t|`,
/// so forward and backward evolutions cancel gate by gate.
pub fn evolution_sequence(h: &Hamiltonian, t: f64, delta: f64) -> GateSequence {
    let (k, rem) = step_split(t, delta);
    let mut seq = GateSequence::new();
    if rem > 0.0 {
        seq.extend(&trotter_step_u2(h, rem));
    }
    let full = trotter_step_u2(h, delta);
    for _ in 0..k {
        seq.extend(&full);
    }
    if t < 0.0 {
        seq.inverse()
    } else {
        seq
    }
}

/// Apply `exp(-i H t)` to the register occupying qubits `0..h.n_qubits()` of
/// `state`, optionally conditioned on a qubit above the register.
pub fn apply_evolution(
    state: &mut StateVector,
    h: &Hamiltonian,
    t: f64,
    mode: EvolutionMode,
    control: Option<Control>,
) -> Result<()> {
    let n = h.n_qubits();
    if n > state.n_qubits() {
        return Err(PshoError::DimensionMismatch { left: n, right: state.n_qubits() });
    }
    if let Some(c) = control {
        if c.qubit >= state.n_qubits() {
            return Err(PshoError::QubitOutOfRange { qubit: c.qubit, n_qubits: state.n_qubits() });
        }
        if c.qubit < n {
            return Err(PshoError::OverlappingControl(c.qubit));
        }
    }
    match mode {
        EvolutionMode::Trotter { delta } => {
            if !(delta.is_finite() && delta > 0.0) {
                return Err(PshoError::InvalidArgument(format!("Trotter step must be positive, got {delta}")));
            }
            let seq = evolution_sequence(h, t, delta);
            match control {
                Some(c) => seq.controlled(c)?.apply(state),
                None => seq.apply(state),
            }
        }
        EvolutionMode::Exact => {
            let block = 1usize << n;
            let phase = |e: f64| num_complex::Complex64::from_polar(1.0, -e * t);
            for (b, chunk) in state.amplitudes_mut().chunks_mut(block).enumerate() {
                let selected = control.is_none_or(|c| ((b * block) >> c.qubit) & 1 == c.polarity as usize);
                if !selected || chunk.iter().all(|a| a.norm_sqr() == 0.0) {
                    continue;
                }
                let spectrum = oracle::spectrum_for_amplitudes(h, chunk)?;
                spectrum.apply_function_in_place(chunk, phase)?;
            }
            Ok(())
        }
    }
}
