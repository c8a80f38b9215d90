//! Independent dense-matrix oracles. Gate matrices are written out from their
//! textbook definitions and embedded into the full register by brute force,
//! without touching the simulator's kernels or the model's op builders.
#![allow(dead_code, clippy::needless_range_loop)]

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64 as C;

pub type Mat = Vec<Vec<C>>;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn identity(dim: usize) -> Mat {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

/// Axis 0, 1, 2 = x, y, z.
pub fn pauli(axis: usize) -> Mat {
    match axis {
        0 => vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]],
        1 => vec![vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]],
        _ => vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]],
    }
}

pub fn hadamard() -> Mat {
    let h = c(FRAC_1_SQRT_2, 0.0);
    vec![vec![h, h], vec![h, -h]]
}

pub fn swap() -> Mat {
    let mut m = vec![vec![c(0.0, 0.0); 4]; 4];
    m[0][0] = c(1.0, 0.0);
    m[1][2] = c(1.0, 0.0);
    m[2][1] = c(1.0, 0.0);
    m[3][3] = c(1.0, 0.0);
    m
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (na, nb) = (a.len(), b.len());
    let mut m = vec![vec![c(0.0, 0.0); na * nb]; na * nb];
    for i in 0..na {
        for j in 0..na {
            for k in 0..nb {
                for l in 0..nb {
                    m[i * nb + k][j * nb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    m
}

/// `exp(−iθG/2)` for an involutory generator `G` (`G² = I`).
pub fn exp_involution(generator: &Mat, theta: f64) -> Mat {
    let (s, co) = (theta / 2.0).sin_cos();
    let id = identity(generator.len());
    id.iter()
        .zip(generator)
        .map(|(ri, rg)| ri.iter().zip(rg).map(|(&a, &g)| a * co + g * c(0.0, -s)).collect())
        .collect()
}

pub fn rotation(axis: usize, theta: f64) -> Mat {
    exp_involution(&pauli(axis), theta)
}

pub fn ising(axis: usize, theta: f64) -> Mat {
    exp_involution(&kron(&pauli(axis), &pauli(axis)), theta)
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut m = vec![vec![c(0.0, 0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == c(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                m[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    m
}

pub fn dagger(a: &Mat) -> Mat {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| a[j][i].conj()).collect()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Lifts a gate on `wires` (first wire = most significant bit of the gate's
/// own index) to an `n`-qubit register whose wire 0 is the least significant
/// bit of the basis index.
pub fn embed(gate: &Mat, wires: &[usize], n: usize) -> Mat {
    let dim = 1usize << n;
    let k = wires.len();
    let sub = |idx: usize| -> usize {
        wires
            .iter()
            .fold(0, |acc, &w| (acc << 1) | ((idx >> w) & 1))
    };
    let mask: usize = wires.iter().map(|&w| 1usize << w).sum();
    let mut m = vec![vec![c(0.0, 0.0); dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            if i & !mask == j & !mask {
                m[i][j] = gate[sub(i)][sub(j)];
            }
        }
    }
    debug_assert_eq!(gate.len(), 1 << k);
    m
}

pub fn apply(m: &Mat, v: &[C]) -> Vec<C> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn zero_state(n: usize) -> Vec<C> {
    let mut v = vec![c(0.0, 0.0); 1 << n];
    v[0] = c(1.0, 0.0);
    v
}

pub fn expectation(v: &[C], axis: usize, wire: usize, n: usize) -> f64 {
    let pv = apply(&embed(&pauli(axis), &[wire], n), v);
    v.iter().zip(&pv).map(|(a, b)| (a.conj() * b).re).sum()
}

/// The nine-qubit model circuit written out directly: wire `3·atom + axis`,
/// atoms O, H1, H2. Returns the nine `⟨σ_axis⟩` values in wire order.
///
/// `coords` are the scaled coordinates, `dist[axis][pair]` the distance tensor
/// with pairs (O,H1), (O,H2), (H1,H2), and `thetas` layer-major with slot
/// `2·wire + j` for the `j`-th non-own axis in ascending order.
pub fn model_expectations(coords: &[f64; 9], dist: &[[f64; 3]; 3], thetas: &[f64], n_layers: usize) -> [f64; 9] {
    let n = 9;
    let wire = |atom: usize, axis: usize| 3 * atom + axis;
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut gates: Vec<(Mat, Vec<usize>)> = Vec::new();
    for layer in 1..=n_layers {
        for w in 0..9 {
            let axis = w % 3;
            if layer == 1 && axis == 2 {
                gates.push((hadamard(), vec![w]));
            }
            gates.push((rotation(axis, TAU * coords[w]), vec![w]));
        }
        for axis in 0..3 {
            for (p, &(a, b)) in pairs.iter().enumerate() {
                let angle = TAU * dist[axis][p].powi(layer as i32);
                gates.push((ising(axis, angle), vec![wire(a, axis), wire(b, axis)]));
            }
        }
        let t = &thetas[(layer - 1) * 18..layer * 18];
        for w in 0..9 {
            let own = w % 3;
            let others: Vec<usize> = (0..3).filter(|&a| a != own).collect();
            for (j, &axis) in others.iter().enumerate() {
                gates.push((rotation(axis, TAU * t[2 * w + j]), vec![w]));
            }
        }
        if layer < n_layers {
            for axis in 0..3 {
                gates.push((swap(), vec![wire(1, axis), wire(2, axis)]));
            }
        }
    }
    let mut v = zero_state(n);
    for (g, wires) in &gates {
        v = apply(&embed(g, wires, n), &v);
    }
    std::array::from_fn(|w| expectation(&v, w % 3, w, n))
}
