//! Synthetic water data: oracle potential, augmentation, scaling, splits and
//! the JSON-lines dataset file.
//!
//! The oracle is a harmonic bond + angle potential
//!
//! ```text
//! E = ½k_b(r₁ − r₀)² + ½k_b(r₂ − r₀)² + ½k_a(θ − θ₀)²
//! ```
//!
//! with analytic forces. Coordinates are stored atom-major (O, H1, H2) with
//! axes x, y, z, which flattens to the model's wire order.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{distance_tensor, ScaledSample, Targets};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

pub type Vec3 = [f64; 3];

/// Constants of the oracle potential and the sampling of geometries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Equilibrium O–H bond length.
    pub r0: f64,
    /// Equilibrium H–O–H angle in degrees.
    pub theta0_deg: f64,
    pub k_bond: f64,
    pub k_angle: f64,
    /// Std-dev of the per-coordinate Gaussian perturbation.
    pub noise_sigma: f64,
    /// Half-width of the uniform rigid translation per axis.
    pub translation: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            r0: 0.9572,
            theta0_deg: 104.52,
            k_bond: 1.0,
            k_angle: 0.5,
            noise_sigma: 0.05 * 0.9572,
            translation: 0.1,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("r0", self.r0), ("theta0_deg", self.theta0_deg)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.theta0_deg < 180.0) {
            return Err(Error::invalid(format!("theta0_deg must be below 180, got {}", self.theta0_deg)));
        }
        let non_negative = [
            ("k_bond", self.k_bond),
            ("k_angle", self.k_angle),
            ("noise_sigma", self.noise_sigma),
            ("translation", self.translation),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn theta0(&self) -> f64 {
        self.theta0_deg.to_radians()
    }
}

/// An unscaled molecule: rows O, H1, H2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub coords: [Vec3; 3],
    pub forces: [Vec3; 3],
    pub energy: f64,
}

impl RawSample {
    pub fn flat_coords(&self) -> [f64; 9] {
        flatten(&self.coords)
    }

    pub fn flat_forces(&self) -> [f64; 9] {
        flatten(&self.forces)
    }

    pub fn net_force(&self) -> Vec3 {
        let mut net = [0.0; 3];
        for f in &self.forces {
            net = add(net, *f);
        }
        net
    }
}

fn flatten(rows: &[Vec3; 3]) -> [f64; 9] {
    let mut out = [0.0; 9];
    for (a, row) in rows.iter().enumerate() {
        out[3 * a..3 * a + 3].copy_from_slice(row);
    }
    out
}

fn unflatten(flat: &[f64; 9]) -> [Vec3; 3] {
    [
        [flat[0], flat[1], flat[2]],
        [flat[3], flat[4], flat[5]],
        [flat[6], flat[7], flat[8]],
    ]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn centroid(coords: &[Vec3; 3]) -> Vec3 {
    scale(add(add(coords[0], coords[1]), coords[2]), 1.0 / 3.0)
}

/// O at the origin, H1 on +x, H2 in the xy-plane.
pub fn equilibrium_geometry(cfg: &OracleConfig) -> [Vec3; 3] {
    let t = cfg.theta0();
    [
        [0.0, 0.0, 0.0],
        [cfg.r0, 0.0, 0.0],
        [cfg.r0 * t.cos(), cfg.r0 * t.sin(), 0.0],
    ]
}

pub fn oracle_energy(coords: &[Vec3; 3], cfg: &OracleConfig) -> f64 {
    let b1 = sub(coords[1], coords[0]);
    let b2 = sub(coords[2], coords[0]);
    let (r1, r2) = (norm(b1), norm(b2));
    let cos = (dot(b1, b2) / (r1 * r2)).clamp(-1.0, 1.0);
    let theta = cos.acos();
    0.5 * cfg.k_bond * ((r1 - cfg.r0).powi(2) + (r2 - cfg.r0).powi(2)) + 0.5 * cfg.k_angle * (theta - cfg.theta0()).powi(2)
}

/// Energy and forces `−∇E`. Rejects collapsed or linear geometries, where the
/// angle term is not differentiable.
pub fn oracle_energy_forces(coords: &[Vec3; 3], cfg: &OracleConfig) -> Result<(f64, [Vec3; 3])> {
    let b1 = sub(coords[1], coords[0]);
    let b2 = sub(coords[2], coords[0]);
    let (r1, r2) = (norm(b1), norm(b2));
    if !(r1 > 1e-12 && r2 > 1e-12) {
        return Err(Error::Numerical("hydrogen coincides with oxygen".into()));
    }
    let (u1, u2) = (scale(b1, 1.0 / r1), scale(b2, 1.0 / r2));
    let cos = dot(u1, u2).clamp(-1.0, 1.0);
    let sin = (1.0 - cos * cos).sqrt();
    if !(sin > 1e-12) {
        return Err(Error::Numerical("linear geometry: bond angle gradient undefined".into()));
    }
    let theta = cos.acos();
    let d_theta = theta - cfg.theta0();
    let energy = 0.5 * cfg.k_bond * ((r1 - cfg.r0).powi(2) + (r2 - cfg.r0).powi(2)) + 0.5 * cfg.k_angle * d_theta.powi(2);

    // ∂θ/∂H1 = −(u2 − cos·u1)/(r1·sinθ), symmetric for H2.
    let dtheta_h1 = scale(sub(u2, scale(u1, cos)), -1.0 / (r1 * sin));
    let dtheta_h2 = scale(sub(u1, scale(u2, cos)), -1.0 / (r2 * sin));
    let grad_h1 = add(scale(u1, cfg.k_bond * (r1 - cfg.r0)), scale(dtheta_h1, cfg.k_angle * d_theta));
    let grad_h2 = add(scale(u2, cfg.k_bond * (r2 - cfg.r0)), scale(dtheta_h2, cfg.k_angle * d_theta));
    let grad_o = scale(add(grad_h1, grad_h2), -1.0);
    Ok((energy, [scale(grad_o, -1.0), scale(grad_h1, -1.0), scale(grad_h2, -1.0)]))
}

/// Builds a labelled sample from coordinates via the oracle.
pub fn label(coords: [Vec3; 3], cfg: &OracleConfig) -> Result<RawSample> {
    let (energy, forces) = oracle_energy_forces(&coords, cfg)?;
    Ok(RawSample { coords, forces, energy })
}

/// `v cosθ + (k × v) sinθ + k (k·v)(1 − cosθ)` for a unit axis `k`.
pub fn rodrigues_rotate(v: Vec3, k: Vec3, theta: f64) -> Result<Vec3> {
    let len = norm(k);
    if !((len - 1.0).abs() <= 1e-9) {
        return Err(Error::invalid(format!("rotation axis must be unit length, got ‖k‖ = {len}")));
    }
    let (s, c) = theta.sin_cos();
    Ok(add(add(scale(v, c), scale(cross(k, v), s)), scale(k, dot(k, v) * (1.0 - c))))
}

/// Uniform axis on the unit sphere and uniform angle in [0, 2π).
pub fn random_rotation(rng: &mut impl Rng) -> (Vec3, f64) {
    loop {
        let g: Vec3 = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = norm(g);
        if n > 1e-9 {
            return (scale(g, 1.0 / n), rng.random_range(0.0..TAU));
        }
    }
}

/// Rotates coordinates about the centroid and the force vectors alike.
pub fn rotate_sample(sample: &RawSample, axis: Vec3, theta: f64) -> Result<RawSample> {
    let c = centroid(&sample.coords);
    let mut out = *sample;
    for a in 0..3 {
        out.coords[a] = add(c, rodrigues_rotate(sub(sample.coords[a], c), axis, theta)?);
        out.forces[a] = rodrigues_rotate(sample.forces[a], axis, theta)?;
    }
    Ok(out)
}

/// Perturbed, rigidly rotated and translated equilibrium geometries.
pub fn generate_synthetic(n: usize, seed: u64, cfg: &OracleConfig) -> Result<Vec<RawSample>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be ≥ 1"));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let eq = equilibrium_geometry(cfg);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut coords = eq;
        for atom in coords.iter_mut() {
            for x in atom.iter_mut() {
                *x += noise.sample(&mut rng);
            }
        }
        let (axis, theta) = random_rotation(&mut rng);
        let c = centroid(&coords);
        let shift: Vec3 = if cfg.translation > 0.0 {
            std::array::from_fn(|_| rng.random_range(-cfg.translation..=cfg.translation))
        } else {
            [0.0; 3]
        };
        for atom in coords.iter_mut() {
            *atom = add(add(c, rodrigues_rotate(sub(*atom, c), axis, theta)?), shift);
        }
        match label(coords, cfg) {
            Ok(s) => out.push(s),
            // a (vanishingly rare) degenerate draw is redrawn
            Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Each sample followed by `factor − 1` randomly rotated copies.
pub fn augment(samples: &[RawSample], factor: usize, seed: u64) -> Result<Vec<RawSample>> {
    if factor == 0 {
        return Err(Error::invalid("augmentation factor must be ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples.len() * factor);
    for s in samples {
        out.push(*s);
        for _ in 1..factor {
            let (axis, theta) = random_rotation(&mut rng);
            out.push(rotate_sample(s, axis, theta)?);
        }
    }
    Ok(out)
}

/// Min-max coordinate scaling per axis, max-abs label scaling and the global
/// distance maximum, all fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalers {
    pub coord_min: Vec3,
    pub coord_max: Vec3,
    pub force_max_abs: f64,
    pub energy_max_abs: f64,
    pub distance_max: f64,
}

impl Scalers {
    /// Degenerate spreads (a constant axis, all-zero labels) fall back to a
    /// unit divisor so that scaling stays the identity shift.
    pub fn fit(samples: &[RawSample]) -> Result<Scalers> {
        if samples.is_empty() {
            return Err(Error::invalid("cannot fit scalers on an empty split"));
        }
        let mut coord_min = [f64::INFINITY; 3];
        let mut coord_max = [f64::NEG_INFINITY; 3];
        let mut force_max_abs = 0.0f64;
        let mut energy_max_abs = 0.0f64;
        for s in samples {
            for atom in 0..3 {
                for c in 0..3 {
                    let x = s.coords[atom][c];
                    let f = s.forces[atom][c];
                    if !x.is_finite() || !f.is_finite() {
                        return Err(Error::Numerical("non-finite value in training split".into()));
                    }
                    coord_min[c] = coord_min[c].min(x);
                    coord_max[c] = coord_max[c].max(x);
                    force_max_abs = force_max_abs.max(f.abs());
                }
            }
            if !s.energy.is_finite() {
                return Err(Error::Numerical("non-finite energy in training split".into()));
            }
            energy_max_abs = energy_max_abs.max(s.energy.abs());
        }
        let mut scalers = Scalers {
            coord_min,
            coord_max,
            force_max_abs: if force_max_abs > 0.0 { force_max_abs } else { 1.0 },
            energy_max_abs: if energy_max_abs > 0.0 { energy_max_abs } else { 1.0 },
            distance_max: 1.0,
        };
        let mut d_max = 0.0f64;
        for s in samples {
            let coords = scalers.scale_coords(&s.flat_coords()).0;
            for row in distance_tensor(&coords) {
                for d in row {
                    d_max = d_max.max(d);
                }
            }
        }
        scalers.distance_max = if d_max > 0.0 { d_max } else { 1.0 };
        Ok(scalers)
    }

    pub fn validate(&self) -> Result<()> {
        for c in 0..3 {
            if !(self.coord_min[c].is_finite() && self.coord_max[c].is_finite() && self.coord_min[c] <= self.coord_max[c]) {
                return Err(Error::Schema(format!(
                    "invalid coordinate range [{}, {}] on axis {c}",
                    self.coord_min[c], self.coord_max[c]
                )));
            }
        }
        for (name, v) in [
            ("force_max_abs", self.force_max_abs),
            ("energy_max_abs", self.energy_max_abs),
            ("distance_max", self.distance_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    fn coord_span(&self, axis: usize) -> f64 {
        let span = self.coord_max[axis] - self.coord_min[axis];
        if span > 0.0 {
            span
        } else {
            1.0
        }
    }

    /// Scaled coordinates clamped to [0, 1], plus the number of clamps.
    pub fn scale_coords(&self, flat: &[f64; 9]) -> ([f64; 9], usize) {
        let mut clamped = 0;
        let out = std::array::from_fn(|i| {
            let c = i % 3;
            let s = (flat[i] - self.coord_min[c]) / self.coord_span(c);
            clamp_count(s, 0.0, 1.0, &mut clamped)
        });
        (out, clamped)
    }

    pub fn unscale_coords(&self, scaled: &[f64; 9]) -> [f64; 9] {
        std::array::from_fn(|i| self.coord_min[i % 3] + scaled[i] * self.coord_span(i % 3))
    }

    pub fn scale_targets(&self, forces: &[f64; 9], energy: f64) -> (Targets, usize) {
        let mut clamped = 0;
        let forces = std::array::from_fn(|j| clamp_count(forces[j] / self.force_max_abs, -1.0, 1.0, &mut clamped));
        let energy = clamp_count(energy / self.energy_max_abs, -1.0, 1.0, &mut clamped);
        (Targets { forces, energy }, clamped)
    }

    /// Back to raw force and energy units.
    pub fn unscale_targets(&self, t: &Targets) -> Targets {
        Targets {
            forces: t.forces.map(|f| f * self.force_max_abs),
            energy: t.energy * self.energy_max_abs,
        }
    }

    /// Full preprocessing of one sample; returns the number of clamped values.
    pub fn apply(&self, sample: &RawSample) -> (ScaledSample, usize) {
        let (coords, c1) = self.scale_coords(&sample.flat_coords());
        let (labels, c2) = self.scale_targets(&sample.flat_forces(), sample.energy);
        let mut c3 = 0;
        let distances = distance_tensor(&coords).map(|row| row.map(|d| clamp_count(d / self.distance_max, 0.0, 1.0, &mut c3)));
        (
            ScaledSample {
                coords,
                distances,
                labels: Some(labels),
            },
            c1 + c2 + c3,
        )
    }
}

fn clamp_count(x: f64, lo: f64, hi: f64, count: &mut usize) -> f64 {
    if x < lo {
        *count += 1;
        lo
    } else if x > hi {
        *count += 1;
        hi
    } else {
        x
    }
}

/// Scales `samples` with already fitted scalers. Values outside the fitted
/// range are clamped and counted in a single warning.
pub fn preprocess(samples: &[RawSample], scalers: &Scalers) -> Result<Vec<ScaledSample>> {
    scalers.validate()?;
    let mut clamped = 0;
    let out = samples
        .iter()
        .map(|s| {
            let (scaled, c) = scalers.apply(s);
            clamped += c;
            scaled
        })
        .collect();
    if clamped > 0 {
        warn!("{clamped} values fell outside the fitted scaler range and were clamped");
    }
    Ok(out)
}

/// Train/validation/test index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn select<T: Clone>(indices: &[usize], items: &[T]) -> Vec<T> {
        indices.iter().map(|&i| items[i].clone()).collect()
    }
}

/// Seeded shuffle, then 80% / 10% / remainder.
pub fn split(n: usize, seed: u64) -> Result<DatasetSplit> {
    if n < 10 {
        return Err(Error::invalid(format!("need at least 10 samples to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let test = idx.split_off(n_train + n_val);
    let validation = idx.split_off(n_train);
    Ok(DatasetSplit {
        train: idx,
        validation,
        test,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub force: String,
    pub energy: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            length: "reduced length".into(),
            force: "reduced energy / reduced length".into(),
            energy: "reduced energy".into(),
        }
    }
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub count: usize,
    pub n_raw: usize,
    pub factor: usize,
    /// Data seed; the three seeds below are derived from it.
    pub seed: u64,
    pub generation_seed: u64,
    pub augment_seed: u64,
    pub split_seed: u64,
    pub oracle: OracleConfig,
    pub units: Units,
}

/// How a dataset is generated. One data seed drives generation,
/// augmentation and the split through derived sub-seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_raw: usize,
    pub factor: usize,
    pub seed: u64,
    pub oracle: OracleConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_raw: 1000,
            factor: 10,
            seed: 1,
            oracle: OracleConfig::default(),
        }
    }
}

impl DataConfig {
    /// `(generation, augmentation, split)` seeds.
    pub fn sub_seeds(&self) -> (u64, u64, u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (rng.random(), rng.random(), rng.random())
    }

    pub fn header(&self) -> DatasetHeader {
        let (generation_seed, augment_seed, split_seed) = self.sub_seeds();
        DatasetHeader {
            schema_version: DATASET_SCHEMA_VERSION,
            count: self.n_raw * self.factor,
            n_raw: self.n_raw,
            factor: self.factor,
            seed: self.seed,
            generation_seed,
            augment_seed,
            split_seed,
            oracle: self.oracle,
            units: Units::default(),
        }
    }
}

/// Generates and augments a full dataset.
pub fn build_dataset(cfg: &DataConfig) -> Result<(DatasetHeader, Vec<RawSample>)> {
    let header = cfg.header();
    let raw = generate_synthetic(cfg.n_raw, header.generation_seed, &cfg.oracle)?;
    let samples = augment(&raw, cfg.factor, header.augment_seed)?;
    Ok((header, samples))
}

/// Split, scalers fitted on the training part, and the three scaled splits.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: DatasetSplit,
    pub scalers: Scalers,
    pub train: Vec<ScaledSample>,
    pub validation: Vec<ScaledSample>,
    pub test: Vec<ScaledSample>,
}

impl PreparedData {
    pub fn new(samples: &[RawSample], split_seed: u64) -> Result<PreparedData> {
        let split = split(samples.len(), split_seed)?;
        PreparedData::with_split(samples, split, None)
    }

    /// Uses given scalers (e.g. from a checkpoint) instead of fitting.
    pub fn with_split(samples: &[RawSample], split: DatasetSplit, scalers: Option<Scalers>) -> Result<PreparedData> {
        let train_raw = DatasetSplit::select(&split.train, samples);
        let scalers = match scalers {
            Some(s) => s,
            None => Scalers::fit(&train_raw)?,
        };
        Ok(PreparedData {
            train: preprocess(&train_raw, &scalers)?,
            validation: preprocess(&DatasetSplit::select(&split.validation, samples), &scalers)?,
            test: preprocess(&DatasetSplit::select(&split.test, samples), &scalers)?,
            split,
            scalers,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    coords: Vec<f64>,
    forces: Vec<f64>,
    energy: f64,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DatasetHeader,
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[RawSample]) -> Result<()> {
    if header.count != samples.len() {
        return Err(Error::invalid(format!(
            "header announces {} records but {} were given",
            header.count,
            samples.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: String| -> Result<()> {
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    emit(serde_json::to_string(&HeaderLine { header: header.clone() }).expect("header serializes"))?;
    for s in samples {
        let rec = Record {
            coords: s.flat_coords().to_vec(),
            forces: s.flat_forces().to_vec(),
            energy: s.energy,
        };
        emit(serde_json::to_string(&rec).map_err(|e| Error::Numerical(e.to_string()))?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a dataset file; records are numbered from 0 after the header.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<RawSample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        Some(line) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::Schema(format!("{}: empty dataset file", path.display()))),
    };
    let header = serde_json::from_str::<HeaderLine>(&first)
        .map_err(|e| Error::Schema(format!("{}: bad header: {e}", path.display())))?
        .header;
    if header.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "{}: unsupported schema version {} (expected {DATASET_SCHEMA_VERSION})",
            path.display(),
            header.schema_version
        )));
    }
    let parse_err = |record: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        record,
        message,
    };
    let mut samples = Vec::with_capacity(header.count);
    for (record, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(record, e.to_string()))?;
        let coords: [f64; 9] = rec
            .coords
            .try_into()
            .map_err(|v: Vec<f64>| parse_err(record, format!("coords has {} values, expected 9", v.len())))?;
        let forces: [f64; 9] = rec
            .forces
            .try_into()
            .map_err(|v: Vec<f64>| parse_err(record, format!("forces has {} values, expected 9", v.len())))?;
        if coords.iter().chain(&forces).any(|v| !v.is_finite()) || !rec.energy.is_finite() {
            return Err(parse_err(record, "non-finite value".into()));
        }
        samples.push(RawSample {
            coords: unflatten(&coords),
            forces: unflatten(&forces),
            energy: rec.energy,
        });
    }
    if samples.len() != header.count {
        return Err(Error::Schema(format!(
            "{}: header announces {} records, found {}",
            path.display(),
            header.count,
            samples.len()
        )));
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OracleConfig {
        OracleConfig::default()
    }

    #[test]
    fn equilibrium_is_the_minimum() {
        let (e, f) = oracle_energy_forces(&equilibrium_geometry(&cfg()), &cfg()).unwrap();
        assert!(e.abs() < 1e-20);
        for v in f.iter().flatten() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn forces_match_finite_differences() {
        let c = cfg();
        let h = 1e-6;
        for s in generate_synthetic(20, 3, &c).unwrap() {
            for a in 0..3 {
                for x in 0..3 {
                    let (mut up, mut down) = (s.coords, s.coords);
                    up[a][x] += h;
                    down[a][x] -= h;
                    let fd = -(oracle_energy(&up, &c) - oracle_energy(&down, &c)) / (2.0 * h);
                    assert!((fd - s.forces[a][x]).abs() < 1e-5, "atom {a} axis {x}: {fd} vs {}", s.forces[a][x]);
                }
            }
            assert!(norm(s.net_force()) < 1e-8);
        }
    }

    #[test]
    fn zero_count_rejected() {
        assert!(generate_synthetic(0, 1, &cfg()).is_err());
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(generate_synthetic(5, 9, &cfg()).unwrap(), generate_synthetic(5, 9, &cfg()).unwrap());
        assert_ne!(generate_synthetic(5, 9, &cfg()).unwrap(), generate_synthetic(5, 10, &cfg()).unwrap());
    }

    #[test]
    fn rodrigues_elementary_cases() {
        let r = rodrigues_rotate([1.0, 0.0, 0.0], [0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2).unwrap();
        assert!(norm(sub(r, [0.0, 1.0, 0.0])) < 1e-15);
        let v = [0.3, -1.2, 2.0];
        assert_eq!(rodrigues_rotate(v, [0.0, 1.0, 0.0], 0.0).unwrap(), v);
        assert!(rodrigues_rotate(v, [0.0, 2.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn rodrigues_matches_rotation_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (k, t) = random_rotation(&mut rng);
            let v: Vec3 = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            // R = I cosθ + sinθ [k]ₓ + (1 − cosθ) k kᵀ
            let (s, c) = t.sin_cos();
            let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
            let expected: Vec3 = std::array::from_fn(|i| {
                (0..3)
                    .map(|j| {
                        let id = if i == j { 1.0 } else { 0.0 };
                        (id * c + s * kx[i][j] + (1.0 - c) * k[i] * k[j]) * v[j]
                    })
                    .sum()
            });
            let got = rodrigues_rotate(v, k, t).unwrap();
            assert!(norm(sub(got, expected)) < 1e-12);
            assert!((norm(got) - norm(v)).abs() < 1e-12);
        }
    }

    #[test]
    fn augmentation_preserves_physics() {
        let c = cfg();
        let raw = generate_synthetic(10, 1, &c).unwrap();
        let aug = augment(&raw, 10, 2).unwrap();
        assert_eq!(aug.len(), 100);
        for (i, s) in aug.iter().enumerate() {
            let orig = &raw[i / 10];
            if i % 10 == 0 {
                assert_eq!(s, orig);
            }
            assert_eq!(s.energy, orig.energy);
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                let d0 = norm(sub(orig.coords[a], orig.coords[b]));
                let d1 = norm(sub(s.coords[a], s.coords[b]));
                assert!((d0 - d1).abs() < 1e-10);
            }
            for a in 0..3 {
                assert!((norm(orig.forces[a]) - norm(s.forces[a])).abs() < 1e-10);
            }
            // rotated forces are still the oracle's forces at the rotated geometry
            let (_, f) = oracle_energy_forces(&s.coords, &c).unwrap();
            for a in 0..3 {
                assert!(norm(sub(f[a], s.forces[a])) < 1e-10);
            }
        }
        assert!(augment(&raw, 0, 2).is_err());
    }

    #[test]
    fn fitted_training_split_is_in_range() {
        let raw = augment(&generate_synthetic(50, 4, &cfg()).unwrap(), 4, 5).unwrap();
        let scalers = Scalers::fit(&raw).unwrap();
        let scaled = preprocess(&raw, &scalers).unwrap();
        for (s, r) in scaled.iter().zip(&raw) {
            s.validate().unwrap();
            let l = s.labels.unwrap();
            assert!(l.forces.iter().chain([&l.energy]).all(|v| (-1.0..=1.0).contains(v)));
            let back = scalers.unscale_targets(&l);
            let ff = r.flat_forces();
            for j in 0..9 {
                assert!((back.forces[j] - ff[j]).abs() < 1e-12);
            }
            assert!((back.energy - r.energy).abs() < 1e-12);
            let coords = scalers.unscale_coords(&s.coords);
            for (a, b) in coords.iter().zip(r.flat_coords()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_entries_follow_table_layout() {
        let raw = generate_synthetic(30, 8, &cfg()).unwrap();
        let scalers = Scalers::fit(&raw).unwrap();
        let (s, _) = scalers.apply(&raw[3]);
        // row x, column (H1, H2)
        let expected = (s.coords[3] - s.coords[6]).abs() / scalers.distance_max;
        assert!((s.distances[0][2] - expected).abs() < 1e-15);
    }

    #[test]
    fn unseen_extremes_are_clamped() {
        let raw = generate_synthetic(30, 8, &cfg()).unwrap();
        let scalers = Scalers::fit(&raw[..10]).unwrap();
        let mut far = raw[20];
        far.coords[0][0] += 100.0;
        far.energy = 1e6;
        let (s, clamped) = scalers.apply(&far);
        assert!(clamped >= 2);
        s.validate().unwrap();
        assert_eq!(s.labels.unwrap().energy, 1.0);
    }

    #[test]
    fn invalid_scalers_rejected() {
        let mut s = Scalers::fit(&generate_synthetic(5, 1, &cfg()).unwrap()).unwrap();
        s.force_max_abs = 0.0;
        assert!(preprocess(&[], &s).is_err());
    }

    #[test]
    fn built_dataset_is_seeded_and_sized() {
        let cfg = DataConfig {
            n_raw: 12,
            factor: 3,
            ..DataConfig::default()
        };
        let (h, a) = build_dataset(&cfg).unwrap();
        assert_eq!((h.count, a.len()), (36, 36));
        assert_eq!(build_dataset(&cfg).unwrap().1, a);
        let data = PreparedData::new(&a, h.split_seed).unwrap();
        assert_eq!(data.train.len() + data.validation.len() + data.test.len(), 36);
    }

    #[test]
    fn split_sizes_and_coverage() {
        let s = split(10000, 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8000, 1000, 1000));
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10000).collect::<Vec<_>>());
        assert_eq!(s, split(10000, 7).unwrap());
        assert!(split(9, 7).is_err());
    }

    #[test]
    fn file_round_trip_and_record_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let samples = generate_synthetic(4, 1, &cfg()).unwrap();
        let header = DataConfig {
            n_raw: 4,
            factor: 1,
            ..DataConfig::default()
        }
        .header();
        write_dataset(&path, &header, &samples).unwrap();
        let (h, back) = read_dataset(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, samples);

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = r#"{"coords":[1,2],"forces":[0,0,0,0,0,0,0,0,0],"energy":0}"#;
        std::fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset(&path) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
