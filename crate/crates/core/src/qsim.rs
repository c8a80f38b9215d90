//! Dense statevector simulation.
//!
//! Bit ordering: wire `w` is bit `w` of the amplitude index, so wire 0 is the
//! least-significant bit. Every kernel, oracle and expectation value in the
//! crate follows this convention.
//!
//! For the dense matrices returned by [`Gate::matrix`], a two-qubit gate acting
//! on wires `(a, b)` uses the row/column index `2 * bit_a + bit_b`, i.e. the
//! first listed wire is the more significant one (textbook `|ab⟩` ordering).

use num_complex::Complex64;
use thiserror::Error;

/// Qubit count used by the H2O model.
pub const MODEL_QUBITS: usize = 9;

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("wire {wire} out of range for a {qubits}-qubit register")]
    WireOutOfRange { wire: usize, qubits: usize },
    #[error("two-qubit gate {gate} needs distinct wires, got ({wire}, {wire})")]
    DuplicateWire { gate: &'static str, wire: usize },
    #[error("gate {gate} acts on {expected} wire(s), {got} given")]
    Arity {
        gate: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("register size {0} unsupported (1..={MAX_QUBITS} qubits)")]
    QubitCount(usize),
    #[error("state sizes differ: {0} vs {1} qubits")]
    SizeMismatch(usize, usize),
}

/// Pauli axis, shared by rotations, Ising couplings and measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        match self {
            Pauli::X => 0,
            Pauli::Y => 1,
            Pauli::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Pauli> {
        Pauli::ALL.get(i).copied()
    }

    pub fn rotation(self, theta: f64) -> Gate {
        match self {
            Pauli::X => Gate::Rx(theta),
            Pauli::Y => Gate::Ry(theta),
            Pauli::Z => Gate::Rz(theta),
        }
    }

    pub fn ising(self, theta: f64) -> Gate {
        match self {
            Pauli::X => Gate::XX(theta),
            Pauli::Y => Gate::YY(theta),
            Pauli::Z => Gate::ZZ(theta),
        }
    }
}

/// The gate set of the QGNN circuit. Angles are in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    PauliX,
    PauliY,
    PauliZ,
    Hadamard,
    Rx(f64),
    Ry(f64),
    Rz(f64),
    XX(f64),
    YY(f64),
    ZZ(f64),
    Swap,
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::PauliX => "X",
            Gate::PauliY => "Y",
            Gate::PauliZ => "Z",
            Gate::Hadamard => "H",
            Gate::Rx(_) => "RX",
            Gate::Ry(_) => "RY",
            Gate::Rz(_) => "RZ",
            Gate::XX(_) => "XX",
            Gate::YY(_) => "YY",
            Gate::ZZ(_) => "ZZ",
            Gate::Swap => "SWAP",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Gate::XX(_) | Gate::YY(_) | Gate::ZZ(_) | Gate::Swap => 2,
            _ => 1,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx(t) | Gate::Ry(t) | Gate::Rz(t) | Gate::XX(t) | Gate::YY(t) | Gate::ZZ(t) => {
                Some(t)
            }
            _ => None,
        }
    }

    /// Same gate kind with a different angle; fixed gates are returned as-is.
    pub fn with_angle(&self, theta: f64) -> Gate {
        match self {
            Gate::Rx(_) => Gate::Rx(theta),
            Gate::Ry(_) => Gate::Ry(theta),
            Gate::Rz(_) => Gate::Rz(theta),
            Gate::XX(_) => Gate::XX(theta),
            Gate::YY(_) => Gate::YY(theta),
            Gate::ZZ(_) => Gate::ZZ(theta),
            other => *other,
        }
    }

    /// Dense unitary: 2×2 for single-qubit gates, 4×4 for two-qubit gates.
    pub fn matrix(&self) -> Vec<Vec<Complex64>> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let z = c(0.0, 0.0);
        let one = c(1.0, 0.0);
        match *self {
            Gate::PauliX => vec![vec![z, one], vec![one, z]],
            Gate::PauliY => vec![vec![z, c(0.0, -1.0)], vec![c(0.0, 1.0), z]],
            Gate::PauliZ => vec![vec![one, z], vec![z, -one]],
            Gate::Hadamard => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                vec![vec![c(h, 0.0), c(h, 0.0)], vec![c(h, 0.0), c(-h, 0.0)]]
            }
            Gate::Rx(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![vec![c(co, 0.0), c(0.0, -s)], vec![c(0.0, -s), c(co, 0.0)]]
            }
            Gate::Ry(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![vec![c(co, 0.0), c(-s, 0.0)], vec![c(s, 0.0), c(co, 0.0)]]
            }
            Gate::Rz(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                vec![vec![c(co, -s), z], vec![z, c(co, s)]]
            }
            Gate::XX(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                let (d, o) = (c(co, 0.0), c(0.0, -s));
                vec![
                    vec![d, z, z, o],
                    vec![z, d, o, z],
                    vec![z, o, d, z],
                    vec![o, z, z, d],
                ]
            }
            Gate::YY(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                let d = c(co, 0.0);
                vec![
                    vec![d, z, z, c(0.0, s)],
                    vec![z, d, c(0.0, -s), z],
                    vec![z, c(0.0, -s), d, z],
                    vec![c(0.0, s), z, z, d],
                ]
            }
            Gate::ZZ(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                let (m, p) = (c(co, -s), c(co, s));
                vec![
                    vec![m, z, z, z],
                    vec![z, p, z, z],
                    vec![z, z, p, z],
                    vec![z, z, z, m],
                ]
            }
            Gate::Swap => vec![
                vec![one, z, z, z],
                vec![z, z, one, z],
                vec![z, one, z, z],
                vec![z, z, z, one],
            ],
        }
    }
}

/// A gate bound to the wires it acts on. `param` tags gates whose angle is a
/// trainable parameter (index into the flat theta vector).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Op {
    pub gate: Gate,
    pub wires: [usize; 2],
    pub param: Option<usize>,
}

impl Op {
    pub fn one(gate: Gate, wire: usize) -> Op {
        Op {
            gate,
            wires: [wire, wire],
            param: None,
        }
    }

    pub fn two(gate: Gate, a: usize, b: usize) -> Op {
        Op {
            gate,
            wires: [a, b],
            param: None,
        }
    }

    pub fn trainable(gate: Gate, wire: usize, param: usize) -> Op {
        Op {
            gate,
            wires: [wire, wire],
            param: Some(param),
        }
    }

    pub fn wires(&self) -> &[usize] {
        &self.wires[..self.gate.arity()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `qubits` wires.
    pub fn zero(qubits: usize) -> Result<StateVector, SimError> {
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(SimError::QubitCount(qubits));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { qubits, amps })
    }

    /// The 9-qubit all-zeros state used by the model.
    pub fn zero_state() -> StateVector {
        StateVector::zero(MODEL_QUBITS).expect("9 qubits is in range")
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(qubits: usize, index: usize) -> Result<StateVector, SimError> {
        let mut s = StateVector::zero(qubits)?;
        if index >= s.amps.len() {
            return Err(SimError::WireOutOfRange {
                wire: index,
                qubits,
            });
        }
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Wraps raw amplitudes; the length must be a power of two. No
    /// normalization is applied.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<StateVector, SimError> {
        let n = amps.len();
        if n < 2 || !n.is_power_of_two() || n.trailing_zeros() as usize > MAX_QUBITS {
            return Err(SimError::QubitCount(n.max(1).ilog2() as usize));
        }
        Ok(StateVector {
            qubits: n.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_wire(&self, wire: usize) -> Result<(), SimError> {
        if wire >= self.qubits {
            Err(SimError::WireOutOfRange {
                wire,
                qubits: self.qubits,
            })
        } else {
            Ok(())
        }
    }

    /// Applies `gate` to `wires` in place.
    pub fn apply(&mut self, gate: &Gate, wires: &[usize]) -> Result<(), SimError> {
        if wires.len() != gate.arity() {
            return Err(SimError::Arity {
                gate: gate.name(),
                expected: gate.arity(),
                got: wires.len(),
            });
        }
        for &w in wires {
            self.check_wire(w)?;
        }
        if wires.len() == 2 && wires[0] == wires[1] {
            return Err(SimError::DuplicateWire {
                gate: gate.name(),
                wire: wires[0],
            });
        }
        self.apply_unchecked(gate, wires);
        Ok(())
    }

    pub fn apply_op(&mut self, op: &Op) -> Result<(), SimError> {
        self.apply(&op.gate, op.wires())
    }

    /// Applies a sequence of ops.
    pub fn run(&mut self, ops: &[Op]) -> Result<(), SimError> {
        ops.iter().try_for_each(|op| self.apply_op(op))
    }

    fn apply_unchecked(&mut self, gate: &Gate, wires: &[usize]) {
        let i = Complex64::i();
        match *gate {
            Gate::PauliX => self.pair_map(wires[0], |a, b| (b, a)),
            Gate::PauliY => self.pair_map(wires[0], |a, b| (-i * b, i * a)),
            Gate::PauliZ => self.phase_map(wires[0], Complex64::new(1.0, 0.0), -Complex64::new(1.0, 0.0)),
            Gate::Hadamard => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.pair_map(wires[0], |a, b| ((a + b) * h, (a - b) * h))
            }
            Gate::Rx(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                // -i s z = (s·im, -s·re)
                self.pair_map(wires[0], |a, b| {
                    (
                        Complex64::new(c * a.re + s * b.im, c * a.im - s * b.re),
                        Complex64::new(c * b.re + s * a.im, c * b.im - s * a.re),
                    )
                })
            }
            Gate::Ry(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                self.pair_map(wires[0], |a, b| (a * c - b * s, a * s + b * c))
            }
            Gate::Rz(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                self.phase_map(wires[0], Complex64::new(c, -s), Complex64::new(c, s))
            }
            Gate::XX(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                self.ising_flip(wires[0], wires[1], c, s, false)
            }
            Gate::YY(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                self.ising_flip(wires[0], wires[1], c, s, true)
            }
            Gate::ZZ(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                let even = Complex64::new(c, -s);
                let odd = Complex64::new(c, s);
                let (ma, mb) = (1usize << wires[0], 1usize << wires[1]);
                for (idx, amp) in self.amps.iter_mut().enumerate() {
                    let parity = ((idx & ma) != 0) != ((idx & mb) != 0);
                    *amp *= if parity { odd } else { even };
                }
            }
            Gate::Swap => {
                let (ma, mb) = (1usize << wires[0], 1usize << wires[1]);
                for idx in 0..self.amps.len() {
                    // visit each (a=1,b=0) index once and exchange with (a=0,b=1)
                    if idx & ma != 0 && idx & mb == 0 {
                        self.amps.swap(idx, idx ^ ma ^ mb);
                    }
                }
            }
        }
    }

    /// Stride kernel over amplitude pairs differing only in bit `wire`.
    #[inline]
    fn pair_map<F>(&mut self, wire: usize, f: F)
    where
        F: Fn(Complex64, Complex64) -> (Complex64, Complex64),
    {
        let stride = 1usize << wire;
        for chunk in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (na, nb) = f(*a, *b);
                *a = na;
                *b = nb;
            }
        }
    }

    #[inline]
    fn phase_map(&mut self, wire: usize, p0: Complex64, p1: Complex64) {
        let stride = 1usize << wire;
        for chunk in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = chunk.split_at_mut(stride);
            lo.iter_mut().for_each(|a| *a *= p0);
            hi.iter_mut().for_each(|b| *b *= p1);
        }
    }

    /// `cos·I − i·sin·P⊗P` for P = X (`yy = false`) or P = Y (`yy = true`).
    /// Y⊗Y maps |00⟩↔|11⟩ with a factor −1 and |01⟩↔|10⟩ with +1.
    fn ising_flip(&mut self, wa: usize, wb: usize, c: f64, s: f64, yy: bool) {
        let (ma, mb) = (1usize << wa, 1usize << wb);
        let flip = ma | mb;
        for idx in 0..self.amps.len() {
            if idx & ma != 0 {
                continue;
            }
            let jdx = idx ^ flip;
            let (x, y) = (self.amps[idx], self.amps[jdx]);
            // off-diagonal coefficient -i·s·η
            let eta = if yy && (idx & mb == 0) { -1.0 } else { 1.0 };
            let k = s * eta;
            self.amps[idx] = Complex64::new(c * x.re + k * y.im, c * x.im - k * y.re);
            self.amps[jdx] = Complex64::new(c * y.re + k * x.im, c * y.im - k * x.re);
        }
    }

    /// `⟨ψ|σ_axis(wire)|ψ⟩`.
    pub fn expectation(&self, axis: Pauli, wire: usize) -> Result<f64, SimError> {
        self.check_wire(wire)?;
        Ok(self.expectation_unchecked(axis, wire))
    }

    pub(crate) fn expectation_unchecked(&self, axis: Pauli, wire: usize) -> f64 {
        let stride = 1usize << wire;
        let mut acc = 0.0;
        for chunk in self.amps.chunks_exact(stride << 1) {
            let (lo, hi) = chunk.split_at(stride);
            match axis {
                Pauli::Z => {
                    for (a, b) in lo.iter().zip(hi) {
                        acc += a.norm_sqr() - b.norm_sqr();
                    }
                }
                Pauli::X => {
                    for (a, b) in lo.iter().zip(hi) {
                        acc += 2.0 * (a.re * b.re + a.im * b.im);
                    }
                }
                Pauli::Y => {
                    // 2·Im(conj(a)·b)
                    for (a, b) in lo.iter().zip(hi) {
                        acc += 2.0 * (a.re * b.im - a.im * b.re);
                    }
                }
            }
        }
        acc
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64, SimError> {
        if self.qubits != other.qubits {
            return Err(SimError::SizeMismatch(self.qubits, other.qubits));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨a|b⟩|²`, clamped into [0, 1] against rounding.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, SimError> {
        Ok(self.inner(other)?.norm_sqr().clamp(0.0, 1.0))
    }
}
