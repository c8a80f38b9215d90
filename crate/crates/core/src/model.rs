//! The QGNN circuit for H2O and its classical read-out.
//!
//! One qubit per (atom, axis) coordinate. A complete layer is
//! encoding → edge → embedding; the encoding is re-uploaded at the start of
//! every layer, the edge layer of layer `n` raises distances to the power `n`,
//! and the embedding layer ends with H1↔H2 SWAPs except on the last layer.
//! Measured `⟨σ_c⟩` on each wire gives the nine raw forces, which are scaled
//! per component, shifted by one shared bias, and sum-pooled into the energy.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{Gate, Op, Pauli, StateVector, MODEL_QUBITS};

/// Coordinate axis; identical to the Pauli axis used for that coordinate's
/// rotations, couplings and measurement.
pub type Axis = Pauli;

/// Trainable angles per complete layer: two rotations on each of nine wires.
pub const THETAS_PER_LAYER: usize = 18;
/// 9 force scales, 1 force bias, 3 pooling scales, 1 pooling bias.
pub const CLASSICAL_PARAMS: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Atom {
    O,
    H1,
    H2,
}

impl Atom {
    pub const ALL: [Atom; 3] = [Atom::O, Atom::H1, Atom::H2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Atom::O => "O",
            Atom::H1 => "H1",
            Atom::H2 => "H2",
        }
    }
}

/// Atom pairs in D-tensor column order.
pub const PAIRS: [(Atom, Atom); 3] = [(Atom::O, Atom::H1), (Atom::O, Atom::H2), (Atom::H1, Atom::H2)];

/// Fixed bijection (atom, axis) → wire, `wire = 3·atom + axis`. The same index
/// orders coordinates, forces and force scales everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WireLayout;

impl WireLayout {
    pub fn wire(atom: Atom, axis: Axis) -> usize {
        3 * atom.index() + axis.index()
    }

    pub fn atom_axis(wire: usize) -> (Atom, Axis) {
        (Atom::ALL[wire / 3], Pauli::ALL[wire % 3])
    }

    /// Labels such as `"H1_y"`, in wire order.
    pub fn labels() -> Vec<String> {
        (0..MODEL_QUBITS)
            .map(|w| {
                let (atom, axis) = Self::atom_axis(w);
                format!("{}_{}", atom.label(), ["x", "y", "z"][axis.index()])
            })
            .collect()
    }

    /// Theta slot (within one layer) of the `j`-th rotation on `wire`; the two
    /// rotation axes are the ones other than the wire's own, ascending.
    pub fn theta_slot(wire: usize, j: usize) -> usize {
        2 * wire + j
    }

    pub fn embedding_axes(own: Axis) -> [Axis; 2] {
        match own {
            Pauli::X => [Pauli::Y, Pauli::Z],
            Pauli::Y => [Pauli::X, Pauli::Z],
            Pauli::Z => [Pauli::X, Pauli::Y],
        }
    }
}

/// Nine forces (wire order) and one energy; used for labels and predictions alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub forces: [f64; 9],
    pub energy: f64,
}

/// A preprocessed molecule ready for the circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledSample {
    /// Scaled coordinates in wire order, each in [0, 1].
    pub coords: [f64; 9],
    /// Rows x, y, z; columns O–H1, O–H2, H1–H2; each in [0, 1].
    pub distances: [[f64; 3]; 3],
    pub labels: Option<Targets>,
}

impl ScaledSample {
    /// Builds the D tensor from scaled coordinates as plain per-axis absolute
    /// differences (no extra normalization).
    pub fn from_coords(coords: [f64; 9], labels: Option<Targets>) -> ScaledSample {
        ScaledSample {
            coords,
            distances: distance_tensor(&coords),
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &c) in self.coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invalid(format!(
                    "coordinate {} = {c} outside [0, 1]",
                    WireLayout::labels()[i]
                )));
            }
        }
        for (r, row) in self.distances.iter().enumerate() {
            for (col, &d) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::invalid(format!(
                        "distance D[{r}][{col}] = {d} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The same molecule with H1 and H2 relabelled.
    pub fn exchanged_hydrogens(&self) -> ScaledSample {
        let mut out = self.clone();
        for axis in Pauli::ALL {
            let (a, b) = (WireLayout::wire(Atom::H1, axis), WireLayout::wire(Atom::H2, axis));
            out.coords.swap(a, b);
            out.distances[axis.index()].swap(0, 1);
            if let Some(l) = out.labels.as_mut() {
                l.forces.swap(a, b);
            }
        }
        out
    }
}

/// Per-axis absolute differences `|α_c − j_c|` in D-tensor layout.
pub fn distance_tensor(coords: &[f64; 9]) -> [[f64; 3]; 3] {
    let mut d = [[0.0; 3]; 3];
    for axis in Pauli::ALL {
        for (p, (a, b)) in PAIRS.iter().enumerate() {
            d[axis.index()][p] =
                (coords[WireLayout::wire(*a, axis)] - coords[WireLayout::wire(*b, axis)]).abs();
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_layers: usize,
    /// Layer-major, `THETAS_PER_LAYER` per layer.
    pub thetas: Vec<f64>,
    /// One scale per force component, wire order.
    pub force_scales: [f64; 9],
    pub force_bias: f64,
    /// One scale per pooled axis sum (x, y, z).
    pub pool_scales: [f64; 3],
    pub pool_bias: f64,
}

impl ModelParams {
    /// Zero angles, unit scales, zero biases.
    pub fn neutral(n_layers: usize) -> Result<ModelParams> {
        if n_layers == 0 {
            return Err(Error::invalid("model needs at least one layer"));
        }
        Ok(ModelParams {
            n_layers,
            thetas: vec![0.0; n_layers * THETAS_PER_LAYER],
            force_scales: [1.0; 9],
            force_bias: 0.0,
            pool_scales: [1.0; 3],
            pool_bias: 0.0,
        })
    }

    pub fn count_for(n_layers: usize) -> usize {
        THETAS_PER_LAYER * n_layers + CLASSICAL_PARAMS
    }

    pub fn param_count(&self) -> usize {
        Self::count_for(self.n_layers)
    }

    pub fn layer_thetas(&self, layer: usize) -> &[f64] {
        &self.thetas[layer * THETAS_PER_LAYER..(layer + 1) * THETAS_PER_LAYER]
    }

    /// Flat layout: thetas, force scales, force bias, pool scales, pool bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.thetas);
        v.extend_from_slice(&self.force_scales);
        v.push(self.force_bias);
        v.extend_from_slice(&self.pool_scales);
        v.push(self.pool_bias);
        v
    }

    pub fn from_flat(n_layers: usize, flat: &[f64]) -> Result<ModelParams> {
        if n_layers == 0 {
            return Err(Error::invalid("model needs at least one layer"));
        }
        let expected = Self::count_for(n_layers);
        if flat.len() != expected {
            return Err(Error::invalid(format!(
                "{n_layers}-layer model has {expected} parameters, got {}",
                flat.len()
            )));
        }
        let nq = n_layers * THETAS_PER_LAYER;
        let mut force_scales = [0.0; 9];
        force_scales.copy_from_slice(&flat[nq..nq + 9]);
        let mut pool_scales = [0.0; 3];
        pool_scales.copy_from_slice(&flat[nq + 10..nq + 13]);
        Ok(ModelParams {
            n_layers,
            thetas: flat[..nq].to_vec(),
            force_scales,
            force_bias: flat[nq + 9],
            pool_scales,
            pool_bias: flat[nq + 13],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::invalid("model needs at least one layer"));
        }
        if self.thetas.len() != self.n_layers * THETAS_PER_LAYER {
            return Err(Error::invalid(format!(
                "expected {} thetas for {} layers, got {}",
                self.n_layers * THETAS_PER_LAYER,
                self.n_layers,
                self.thetas.len()
            )));
        }
        Ok(())
    }

    /// Parameters with the H1 and H2 embedding slices and force scales
    /// exchanged.
    pub fn exchanged_hydrogens(&self) -> ModelParams {
        let mut out = self.clone();
        for layer in 0..self.n_layers {
            let base = layer * THETAS_PER_LAYER;
            for axis in Pauli::ALL {
                let (a, b) = (WireLayout::wire(Atom::H1, axis), WireLayout::wire(Atom::H2, axis));
                for j in 0..2 {
                    out.thetas
                        .swap(base + WireLayout::theta_slot(a, j), base + WireLayout::theta_slot(b, j));
                }
            }
        }
        for axis in Pauli::ALL {
            out.force_scales
                .swap(WireLayout::wire(Atom::H1, axis), WireLayout::wire(Atom::H2, axis));
        }
        out
    }
}

fn check_unit(value: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} = {value} outside [0, 1]")))
    }
}

/// Ops for the encoding layer: Hadamards on the z wires (first layer only),
/// then `R_c(2π·α_c)` on every wire.
pub fn encoding_ops(sample: &ScaledSample, is_first_layer: bool, out: &mut Vec<Op>) -> Result<()> {
    for (w, &c) in sample.coords.iter().enumerate() {
        check_unit(c, &format!("coordinate {}", WireLayout::labels()[w]))?;
    }
    if is_first_layer {
        for atom in Atom::ALL {
            out.push(Op::one(Gate::Hadamard, WireLayout::wire(atom, Pauli::Z)));
        }
    }
    for (w, &c) in sample.coords.iter().enumerate() {
        let (_, axis) = WireLayout::atom_axis(w);
        out.push(Op::one(axis.rotation(TAU * c), w));
    }
    Ok(())
}

/// Ops for the edge layer of complete layer `layer` (1-based): per axis, one
/// Ising coupling of that axis per atom pair with angle `2π·dⁿ`.
pub fn edge_ops(sample: &ScaledSample, layer: usize, out: &mut Vec<Op>) -> Result<()> {
    if layer == 0 {
        return Err(Error::invalid("edge-layer exponent is 1-based"));
    }
    let exponent = i32::try_from(layer).map_err(|_| Error::invalid("layer index too large"))?;
    for axis in Pauli::ALL {
        for (p, (a, b)) in PAIRS.iter().enumerate() {
            let d = sample.distances[axis.index()][p];
            check_unit(d, &format!("distance D[{}][{p}]", axis.index()))?;
            out.push(Op::two(
                axis.ising(TAU * d.powi(exponent)),
                WireLayout::wire(*a, axis),
                WireLayout::wire(*b, axis),
            ));
        }
    }
    Ok(())
}

/// Ops for one embedding layer. `param_offset` is the flat index of
/// `thetas[0]`, recorded on each op for gradient bookkeeping.
pub fn embedding_ops(
    thetas: &[f64],
    param_offset: usize,
    is_last_layer: bool,
    out: &mut Vec<Op>,
) -> Result<()> {
    if thetas.len() != THETAS_PER_LAYER {
        return Err(Error::invalid(format!(
            "embedding layer takes {THETAS_PER_LAYER} angles, got {}",
            thetas.len()
        )));
    }
    for w in 0..MODEL_QUBITS {
        let (_, own) = WireLayout::atom_axis(w);
        for (j, axis) in WireLayout::embedding_axes(own).into_iter().enumerate() {
            let slot = WireLayout::theta_slot(w, j);
            out.push(Op::trainable(axis.rotation(TAU * thetas[slot]), w, param_offset + slot));
        }
    }
    if !is_last_layer {
        for axis in Pauli::ALL {
            out.push(Op::two(
                Gate::Swap,
                WireLayout::wire(Atom::H1, axis),
                WireLayout::wire(Atom::H2, axis),
            ));
        }
    }
    Ok(())
}

/// The full op sequence for `sample` under `params`.
pub fn circuit_ops(sample: &ScaledSample, params: &ModelParams) -> Result<Vec<Op>> {
    params.validate()?;
    let n = params.n_layers;
    let mut ops = Vec::with_capacity(n * 48 + 3);
    for layer in 0..n {
        encoding_ops(sample, layer == 0, &mut ops)?;
        edge_ops(sample, layer + 1, &mut ops)?;
        embedding_ops(
            params.layer_thetas(layer),
            layer * THETAS_PER_LAYER,
            layer + 1 == n,
            &mut ops,
        )?;
    }
    Ok(ops)
}

pub fn apply_encoding_layer(state: &mut StateVector, sample: &ScaledSample, is_first_layer: bool) -> Result<()> {
    let mut ops = Vec::new();
    encoding_ops(sample, is_first_layer, &mut ops)?;
    Ok(state.run(&ops)?)
}

pub fn apply_edge_layer(state: &mut StateVector, sample: &ScaledSample, layer: usize) -> Result<()> {
    let mut ops = Vec::new();
    edge_ops(sample, layer, &mut ops)?;
    Ok(state.run(&ops)?)
}

pub fn apply_embedding_layer(state: &mut StateVector, thetas: &[f64], is_last_layer: bool) -> Result<()> {
    let mut ops = Vec::new();
    embedding_ops(thetas, 0, is_last_layer, &mut ops)?;
    Ok(state.run(&ops)?)
}

/// `⟨σ_c⟩` on every wire, in wire order.
pub fn measure_forces(state: &StateVector) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (w, v) in out.iter_mut().enumerate() {
        let (_, axis) = WireLayout::atom_axis(w);
        *v = state.expectation_unchecked(axis, w);
    }
    out
}

/// Output state of the circuit, before measurement.
pub fn final_state(sample: &ScaledSample, params: &ModelParams) -> Result<StateVector> {
    let ops = circuit_ops(sample, params)?;
    let mut state = StateVector::zero_state();
    state.run(&ops)?;
    Ok(state)
}

/// Raw (unprocessed) forces, each in [−1, 1].
pub fn forward(sample: &ScaledSample, params: &ModelParams) -> Result<[f64; 9]> {
    Ok(measure_forces(&final_state(sample, params)?))
}

/// `F = k·F_u + b` with one scale per component and a shared bias.
pub fn postprocess_forces(raw: &[f64; 9], params: &ModelParams) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (i, o) in out.iter_mut().enumerate() {
        *o = params.force_scales[i] * raw[i] + params.force_bias;
    }
    out
}

/// Per-axis force sums `p_c = Σ_α F(α, c)`.
pub fn axis_sums(forces: &[f64; 9]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for axis in Pauli::ALL {
        p[axis.index()] = Atom::ALL
            .iter()
            .map(|&a| forces[WireLayout::wire(a, axis)])
            .sum();
    }
    p
}

/// Energy `Σ_c s_c·p_c + β`.
pub fn pool_energy(forces: &[f64; 9], params: &ModelParams) -> f64 {
    let p = axis_sums(forces);
    (0..3).map(|c| params.pool_scales[c] * p[c]).sum::<f64>() + params.pool_bias
}

/// Which forces feed the energy pooling: labels during training, predictions
/// at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolingSource {
    TrueForces,
    PredictedForces,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub raw_forces: [f64; 9],
    pub forces: [f64; 9],
    pub energy: f64,
}

impl Prediction {
    pub fn targets(&self) -> Targets {
        Targets {
            forces: self.forces,
            energy: self.energy,
        }
    }
}

pub fn predict(sample: &ScaledSample, params: &ModelParams, pooling: PoolingSource) -> Result<Prediction> {
    let pool_input = match pooling {
        PoolingSource::TrueForces => Some(sample.labels.ok_or(Error::Unlabeled)?.forces),
        PoolingSource::PredictedForces => None,
    };
    let raw_forces = forward(sample, params)?;
    Ok(finish_prediction(raw_forces, params, pool_input.as_ref()))
}

/// Post-processing and pooling from already-measured raw forces.
pub(crate) fn finish_prediction(raw_forces: [f64; 9], params: &ModelParams, true_forces: Option<&[f64; 9]>) -> Prediction {
    let forces = postprocess_forces(&raw_forces, params);
    let energy = pool_energy(true_forces.unwrap_or(&forces), params);
    Prediction {
        raw_forces,
        forces,
        energy,
    }
}
