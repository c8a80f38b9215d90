//! Expressibility: KL divergence between the circuit's pairwise-fidelity
//! distribution and that of Haar-random states.
//!
//! For dimension `d` the Haar fidelity density is `(d − 1)(1 − F)^{d−2}`, so
//! a bin `[lo, hi)` has mass `(1 − lo)^{d−1} − (1 − hi)^{d−1}`. With
//! `d = 512` those powers underflow, so masses are handled as logarithms.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{equilibrium_geometry, OracleConfig};
use crate::error::{Error, Result};
use crate::model::{self, ModelParams, ScaledSample};
use crate::qsim::{StateVector, MODEL_QUBITS};

pub const DEFAULT_SAMPLES: usize = 5000;
pub const DEFAULT_BINS: usize = 75;

/// The circuit input held fixed while parameters vary: the equilibrium
/// geometry centred in a box of half-width `r0` on every axis. Distances are
/// the plain per-axis differences of those coordinates.
pub fn reference_sample(oracle: &OracleConfig) -> ScaledSample {
    let geom = equilibrium_geometry(oracle);
    let mut centre = [0.0; 3];
    for atom in &geom {
        for c in 0..3 {
            centre[c] += atom[c] / 3.0;
        }
    }
    let coords = std::array::from_fn(|i| {
        let (a, c) = (i / 3, i % 3);
        ((geom[a][c] - centre[c] + oracle.r0) / (2.0 * oracle.r0)).clamp(0.0, 1.0)
    });
    ScaledSample::from_coords(coords, None)
}

/// `|⟨ψ(a)|ψ(b)⟩|²` for `samples` independent pairs of N(0, 1) parameter
/// vectors. Parameters are drawn serially from `seed`, so the result does not
/// depend on the thread count.
pub fn sample_fidelities_for<F>(ansatz: F, n_params: usize, samples: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<StateVector> + Sync,
{
    if samples == 0 {
        return Err(Error::invalid("need at least one fidelity sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..2 * samples * n_params).map(|_| StandardNormal.sample(&mut rng)).collect();
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let pair = &draws[i * 2 * n_params..(i + 1) * 2 * n_params];
            let (a, b) = pair.split_at(n_params);
            Ok(ansatz(a)?.fidelity(&ansatz(b)?)?)
        })
        .collect()
}

/// Fidelities of the QGNN's quantum part at a fixed input.
pub fn sample_fidelities(n_layers: usize, samples: usize, seed: u64, input: &ScaledSample) -> Result<Vec<f64>> {
    let base = ModelParams::neutral(n_layers)?;
    let n = base.thetas.len();
    sample_fidelities_for(
        |thetas| {
            let mut p = base.clone();
            p.thetas.copy_from_slice(thetas);
            model::final_state(input, &p)
        },
        n,
        samples,
        seed,
    )
}

/// Normalized histogram of fidelities over `bins` equal bins of [0, 1];
/// a fidelity of exactly 1 lands in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityHistogram {
    pub probabilities: Vec<f64>,
    pub samples: usize,
}

impl FidelityHistogram {
    pub fn from_fidelities(fidelities: &[f64], bins: usize) -> Result<FidelityHistogram> {
        if bins == 0 {
            return Err(Error::invalid("need at least one bin"));
        }
        if fidelities.is_empty() {
            return Err(Error::invalid("no fidelities to bin"));
        }
        let mut counts = vec![0usize; bins];
        for &f in fidelities {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Numerical(format!("fidelity {f} outside [0, 1]")));
            }
            counts[((f * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let n = fidelities.len() as f64;
        Ok(FidelityHistogram {
            probabilities: counts.into_iter().map(|c| c as f64 / n).collect(),
            samples: fidelities.len(),
        })
    }

    pub fn bins(&self) -> usize {
        self.probabilities.len()
    }
}

/// `ln P_Haar(lo ≤ F < hi)` for Hilbert-space dimension `dim`.
pub fn haar_log_probability(lo: f64, hi: f64, dim: usize) -> f64 {
    assert!(dim >= 2 && (0.0..=1.0).contains(&lo) && lo < hi && hi <= 1.0);
    let k = (dim - 1) as f64;
    let a = k * (-lo).ln_1p();
    let b = k * (-hi).ln_1p();
    // exp(a) − exp(b) = exp(a)·(1 − exp(b − a))
    a + (-(b - a).exp_m1()).ln()
}

pub fn haar_probability(lo: f64, hi: f64, dim: usize) -> f64 {
    haar_log_probability(lo, hi, dim).exp()
}

/// `Σ P̂ ln(P̂ / P_Haar)` over the histogram's bins; empty bins contribute 0.
pub fn kl_to_haar(hist: &FidelityHistogram, dim: usize) -> f64 {
    let bins = hist.bins() as f64;
    let kl: f64 = hist
        .probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| {
            let lo = i as f64 / bins;
            let hi = ((i + 1) as f64 / bins).min(1.0);
            p * (p.ln() - haar_log_probability(lo, hi, dim))
        })
        .sum();
    kl.max(0.0)
}

/// Expressibility of an `n_layers` QGNN at the reference input.
pub fn expressibility(n_layers: usize, samples: usize, bins: usize, seed: u64) -> Result<f64> {
    let input = reference_sample(&OracleConfig::default());
    let f = sample_fidelities(n_layers, samples, seed, &input)?;
    let hist = FidelityHistogram::from_fidelities(&f, bins)?;
    Ok(kl_to_haar(&hist, 1 << MODEL_QUBITS))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_layers: usize,
    pub kl_divergence: f64,
    pub samples: usize,
    pub bins: usize,
    pub seed: u64,
}

/// One expressibility value per layer count, all with the same seed.
pub fn layer_sweep(layers: &[usize], samples: usize, bins: usize, seed: u64) -> Result<Vec<SweepRow>> {
    if layers.is_empty() {
        return Err(Error::invalid("empty layer range"));
    }
    layers
        .iter()
        .map(|&n| {
            Ok(SweepRow {
                n_layers: n,
                kl_divergence: expressibility(n, samples, bins, seed)?,
                samples,
                bins,
                seed,
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
