//! Gradients of model outputs and of the batch loss.
//!
//! Quantum angles are differentiated with the parameter-shift rule. Every
//! trainable gate is `R_P(2π·θ)` with a single Pauli generator, so
//!
//! ```text
//! ∂f/∂θ = π · [ f(θ + 1/4) − f(θ − 1/4) ]
//! ```
//!
//! exactly (a ±π/2 shift of the gate angle times the chain-rule factor 2π).
//! The state just before each trainable gate is cached during the forward
//! pass, so a shifted evaluation only replays the suffix of the circuit.
//! Classical post-processing and pooling parameters use the chain rule.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, ModelParams, ScaledSample, Targets};
use crate::qsim::StateVector;
use crate::training::{kli_term, kli_term_derivative, LossBreakdown, LossConfig};

/// `∂L/∂p` in the flat [`ModelParams::to_flat`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub n_layers: usize,
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(n_layers: usize) -> GradientVector {
        GradientVector {
            n_layers,
            values: vec![0.0; ModelParams::count_for(n_layers)],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Portion belonging to the quantum angles.
    pub fn quantum(&self) -> &[f64] {
        &self.values[..self.n_layers * model::THETAS_PER_LAYER]
    }
}

/// Raw forces and their derivatives with respect to every theta.
#[derive(Debug, Clone)]
pub struct RawJacobian {
    pub raw: [f64; 9],
    /// `d_raw[k][j] = ∂ raw_j / ∂ θ_k`.
    pub d_raw: Vec<[f64; 9]>,
}

/// Parameter-shift Jacobian of all nine raw forces.
pub fn raw_force_jacobian(sample: &ScaledSample, params: &ModelParams) -> Result<RawJacobian> {
    let ops = model::circuit_ops(sample, params)?;
    let mut state = StateVector::zero_state();
    let mut cached = Vec::with_capacity(params.thetas.len());
    for (pos, op) in ops.iter().enumerate() {
        if op.param.is_some() {
            cached.push((pos, state.clone()));
        }
        state.apply_op(op)?;
    }
    let raw = model::measure_forces(&state);

    let mut d_raw = vec![[0.0; 9]; params.thetas.len()];
    for (pos, prefix) in cached {
        let op = &ops[pos];
        let k = op.param.expect("cached positions are trainable");
        let angle = op.gate.angle().expect("trainable gates are rotations");
        let suffix = &ops[pos + 1..];

        let mut plus = prefix.clone();
        plus.apply(&op.gate.with_angle(angle + FRAC_PI_2), op.wires())?;
        plus.run(suffix)?;
        let mut minus = prefix;
        minus.apply(&op.gate.with_angle(angle - FRAC_PI_2), op.wires())?;
        minus.run(suffix)?;

        let (fp, fm) = (model::measure_forces(&plus), model::measure_forces(&minus));
        for j in 0..9 {
            d_raw[k][j] = PI * (fp[j] - fm[j]);
        }
    }
    Ok(RawJacobian { raw, d_raw })
}

/// `∂ raw_force[output_index] / ∂θ` for every quantum angle.
pub fn parameter_shift_grad(
    sample: &ScaledSample,
    params: &ModelParams,
    output_index: usize,
) -> Result<Vec<f64>> {
    if output_index >= 9 {
        return Err(Error::invalid(format!("output index {output_index} out of range 0..9")));
    }
    let jac = raw_force_jacobian(sample, params)?;
    Ok(jac.d_raw.iter().map(|row| row[output_index]).collect())
}

/// Per-sample forward data needed by the batch gradient.
struct SampleTerms {
    labels: Targets,
    jac: RawJacobian,
    prediction: Targets,
    true_sums: [f64; 3],
}

/// Batch loss and its gradient with train-time pooling (true forces feed the
/// energy, so the quantum angles only receive gradient through the forces).
pub fn loss_gradient(
    batch: &[ScaledSample],
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(f64, GradientVector)> {
    batch_gradient(batch, params, cfg).map(|(l, g)| (l.total, g))
}

/// [`loss_gradient`] plus the per-axis force loss of the same predictions.
pub(crate) fn batch_gradient(
    batch: &[ScaledSample],
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, GradientVector)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    cfg.validate()?;
    let terms: Vec<SampleTerms> = batch
        .par_iter()
        .map(|s| {
            let labels = s.labels.ok_or(Error::Unlabeled)?;
            let jac = raw_force_jacobian(s, params)?;
            let p = model::finish_prediction(jac.raw, params, Some(&labels.forces));
            Ok(SampleTerms {
                labels,
                jac,
                prediction: p.targets(),
                true_sums: model::axis_sums(&labels.forces),
            })
        })
        .collect::<Result<_>>()?;

    let inv_b = 1.0 / batch.len() as f64;
    let mut mse = 0.0;
    let mut kli = 0.0;
    let mut axis = [0.0; 3];
    for t in &terms {
        mse += (t.labels.energy - t.prediction.energy).powi(2);
        kli += kli_term(t.labels.energy, t.prediction.energy, cfg.epsilon);
        for j in 0..9 {
            let sq = (t.labels.forces[j] - t.prediction.forces[j]).powi(2);
            mse += sq;
            axis[j % 3] += sq;
            kli += kli_term(t.labels.forces[j], t.prediction.forces[j], cfg.epsilon);
        }
    }
    mse *= inv_b;
    kli *= inv_b;
    let kli_active = !cfg.clip_kli || kli > 0.0;
    let kli_used = if kli_active { kli } else { 0.0 };
    let loss = mse + cfg.gamma * kli_used;
    let kli_weight = if kli_active { cfg.gamma } else { 0.0 };

    let nq = params.thetas.len();
    let mut grad = GradientVector::zeros(params.n_layers);
    for t in &terms {
        let d_energy = inv_b
            * (-2.0 * (t.labels.energy - t.prediction.energy)
                + kli_weight * kli_term_derivative(t.labels.energy, t.prediction.energy, cfg.epsilon));
        let mut d_force = [0.0; 9];
        for j in 0..9 {
            d_force[j] = inv_b
                * (-2.0 * (t.labels.forces[j] - t.prediction.forces[j])
                    + kli_weight
                        * kli_term_derivative(t.labels.forces[j], t.prediction.forces[j], cfg.epsilon));
        }
        let g = &mut grad.values;
        for (k, row) in t.jac.d_raw.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..9 {
                acc += d_force[j] * params.force_scales[j] * row[j];
            }
            g[k] += acc;
        }
        for j in 0..9 {
            g[nq + j] += d_force[j] * t.jac.raw[j];
            g[nq + 9] += d_force[j];
        }
        for c in 0..3 {
            g[nq + 10 + c] += d_energy * t.true_sums[c];
        }
        g[nq + 13] += d_energy;
    }
    let losses = LossBreakdown {
        total: loss,
        axis: axis.map(|a| a * inv_b),
    };
    Ok((losses, grad))
}

/// Central finite differences of `f` over every flat parameter.
pub fn finite_diff_grad<F>(f: F, params: &ModelParams, h: f64) -> Result<GradientVector>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let flat = params.to_flat();
    let mut grad = GradientVector::zeros(params.n_layers);
    for i in 0..flat.len() {
        let mut up = flat.clone();
        let mut down = flat.clone();
        up[i] += h;
        down[i] -= h;
        let fu = f(&ModelParams::from_flat(params.n_layers, &up)?)?;
        let fd = f(&ModelParams::from_flat(params.n_layers, &down)?)?;
        grad.values[i] = (fu - fd) / (2.0 * h);
    }
    Ok(grad)
}
