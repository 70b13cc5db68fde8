//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `G Gᵀ / m + δ I` with a random diagonal scale so eigenvalue spreads vary.
pub fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, m, m + 2);
    let scale = DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| rng.random_range(0.2..5.0)));
    let core = &scale * (&g * g.transpose()) * &scale / m as f64;
    let spd = core + DMatrix::identity(m, m) * 0.05;
    (&spd + spd.transpose()) * 0.5
}

/// Trace of `Y X⁻¹` by forming the dense product with an LU inverse.
pub fn dense_trace(y: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let x_inv = x.clone().lu().try_inverse().expect("invertible");
    (y * x_inv).trace()
}

/// Sphericity via the eigenvalues of `B^{-1/2} A B^{-1/2}`: arithmetic over
/// harmonic mean of the eigenvalues, logged.
pub fn eigen_sphericity(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let eig_b = b.clone().symmetric_eigen();
    let inv_sqrt = &eig_b.eigenvectors
        * DMatrix::from_diagonal(&eig_b.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig_b.eigenvectors.transpose();
    let mut w = &inv_sqrt * a * &inv_sqrt;
    w = (&w + w.transpose()) * 0.5;
    let lambdas = w.symmetric_eigen().eigenvalues;
    let m = lambdas.len() as f64;
    let am = lambdas.iter().sum::<f64>() / m;
    let hm = m / lambdas.iter().map(|l| 1.0 / l).sum::<f64>();
    (am / hm).ln()
}

/// Solves the order-`p` autocorrelation normal equations
/// `Σ_k a_k r[|j-k|] = r[j]`, `j = 1..p`, with a dense LU factorization.
pub fn dense_normal_equations(r: &[f64], p: usize) -> Vec<f64> {
    let toeplitz = DMatrix::from_fn(p, p, |i, j| r[i.abs_diff(j)]);
    let rhs = DVector::from_fn(p, |i, _| r[i + 1]);
    toeplitz
        .lu()
        .solve(&rhs)
        .expect("nonsingular Toeplitz")
        .iter()
        .copied()
        .collect()
}

/// Coefficients of `Π (1 - z_i q^{-1})` for conjugate-paired poles with
/// radius at most `max_radius`, returned as predictor weights `a_1..a_p`
/// (`x[n] = Σ a_k x[n-k] + e[n]`).
pub fn random_stable_ar(rng: &mut ChaCha8Rng, p: usize, max_radius: f64) -> Vec<f64> {
    // Polynomial in q^{-1}, constant term first.
    let mut poly = vec![1.0];
    let mut remaining = p;
    while remaining > 0 {
        let radius = rng.random_range(0.1..max_radius);
        if remaining >= 2 {
            let theta: f64 = rng.random_range(0.05..std::f64::consts::PI - 0.05);
            // 1 - 2 r cos θ q^{-1} + r² q^{-2}
            let quad = [1.0, -2.0 * radius * theta.cos(), radius * radius];
            poly = convolve(&poly, &quad);
            remaining -= 2;
        } else {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            poly = convolve(&poly, &[1.0, -sign * radius]);
            remaining -= 1;
        }
    }
    poly[1..].iter().map(|c| -c).collect()
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Drives the AR filter with white noise and returns the biased sample
/// autocorrelation up to lag `p`.
pub fn ar_autocorrelation(rng: &mut ChaCha8Rng, a: &[f64], n: usize) -> Vec<f64> {
    let burn = 500;
    let mut x = vec![0.0; n + burn];
    for t in 0..x.len() {
        let mut v: f64 = rng.sample(StandardNormal);
        for (k, ak) in a.iter().enumerate() {
            if t > k {
                v += ak * x[t - k - 1];
            }
        }
        x[t] = v;
    }
    let x = &x[burn..];
    (0..=a.len())
        .map(|k| x[k..].iter().zip(x).map(|(u, v)| u * v).sum())
        .collect()
}

pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let diff: f64 = got.iter().zip(want).map(|(g, w)| (g - w) * (g - w)).sum::<f64>().sqrt();
    let norm: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}
