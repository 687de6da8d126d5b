//! Shared helpers for the acceptance checklist: verdict reporting and an
//! independent dense-grid plus discrete-Fourier oracle used to cross-check
//! the sparse composition and pullback code paths.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use torlin::Field;

/// Print the single verdict line for one checklist item; panic with the
/// collected failures when the item did not pass.
pub fn verdict(name: &str, failures: &[String], detail: &str) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("[acceptance] {name}: {status} ({detail})");
    assert!(failures.is_empty(), "{name}: {}", failures.join(" | "));
}

/// Visit every node of the uniform grid with `n` points per coordinate in
/// row-major order (first axis slowest), passing the flat index and the
/// angular coordinates `x_j = 2pi idx_j / n`.
pub fn for_each_grid_point(d: usize, n: usize, mut visit: impl FnMut(usize, &[f64])) {
    let step = std::f64::consts::TAU / n as f64;
    let total = n.pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0f64; d];
    for flat in 0..total {
        for j in 0..d {
            x[j] = idx[j] as f64 * step;
        }
        visit(flat, &x);
        for axis in (0..d).rev() {
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Centered alias representative of grid index `m`, in `[-n/2, n/2)`.
pub fn centered(m: usize, n: usize) -> i64 {
    let (m, n) = (m as i64, n as i64);
    if m >= n / 2 {
        m - n
    } else {
        m
    }
}

/// Discrete Fourier analysis of grid samples (row-major, first axis slowest):
/// the centered coefficient map, normalized so that sampling
/// `sum_k u(k) e^{i k.x}` on the grid and transforming recovers each
/// coefficient folded onto its alias class.
pub fn dft_centered(samples: &[C64], d: usize, n: usize) -> BTreeMap<Vec<i64>, C64> {
    let total = n.pow(d as u32);
    assert_eq!(samples.len(), total, "sample count must be n^d");
    let tw: Vec<C64> = (0..n)
        .map(|t| C64::from_polar(1.0, -std::f64::consts::TAU * t as f64 / n as f64))
        .collect();
    let mut data = samples.to_vec();
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for base in 0..total {
            if !(base / stride).is_multiple_of(n) {
                continue;
            }
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[base + j * stride];
            }
            for k in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, v) in line.iter().enumerate() {
                    acc += v * tw[(j * k) % n];
                }
                data[base + k * stride] = acc;
            }
        }
    }
    let scale = 1.0 / total as f64;
    let mut out = BTreeMap::new();
    for (flat, v) in data.iter().enumerate() {
        let k: Vec<i64> = (0..d)
            .map(|axis| {
                let stride = n.pow((d - 1 - axis) as u32);
                centered((flat / stride) % n, n)
            })
            .collect();
        out.insert(k, v * scale);
    }
    out
}

/// Fold one component of a sparse field onto the grid's centered aliases;
/// in exact arithmetic this is what the discrete analysis of its grid
/// samples returns.
pub fn fold_modes(f: &Field, comp: usize, n: usize) -> BTreeMap<Vec<i64>, C64> {
    let mut out: BTreeMap<Vec<i64>, C64> = BTreeMap::new();
    for (k, c) in f.iter() {
        let alias: Vec<i64> =
            k.iter().map(|v| centered(v.rem_euclid(n as i64) as usize, n)).collect();
        *out.entry(alias).or_insert_with(|| C64::new(0.0, 0.0)) += c[comp];
    }
    out
}

/// Largest coefficient deviation between two centered maps.
pub fn coeff_sup_diff(a: &BTreeMap<Vec<i64>, C64>, b: &BTreeMap<Vec<i64>, C64>) -> f64 {
    let zero = C64::new(0.0, 0.0);
    let mut worst = 0.0f64;
    for (k, v) in a {
        let w = b.get(k).copied().unwrap_or(zero);
        worst = worst.max((v - w).norm());
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            worst = worst.max(v.norm());
        }
    }
    worst
}
