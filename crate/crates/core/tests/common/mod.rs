//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use xp300::patterns::FlashPattern;
use xp300::xdawn::build_toeplitz;

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Exhaustive check of a pattern: `(bijective, balanced, adjacency collisions)`.
pub fn pattern_oracle(p: &FlashPattern) -> (bool, bool, usize) {
    let n = p.n;
    let mut pairs = HashSet::new();
    let mut row_counts = vec![0usize; n + 1];
    let mut col_counts = vec![0usize; n + 1];
    for a in 0..n {
        for b in 0..n {
            let (r, c) = (p.r_hat[a][b] as usize, p.c_hat[a][b] as usize);
            pairs.insert((r, c));
            row_counts[r] += 1;
            col_counts[c] += 1;
        }
    }
    let bijective = pairs.len() == n * n && pairs.iter().all(|&(r, c)| (1..=n).contains(&r) && (1..=n).contains(&c));
    let balanced = row_counts[1..].iter().chain(&col_counts[1..]).all(|&k| k == n);
    let mut collisions = 0;
    for m in [&p.r_hat, &p.c_hat] {
        for a in 0..n {
            for b in 0..n {
                if a + 1 < n && m[a][b] == m[a + 1][b] {
                    collisions += 1;
                }
                if b + 1 < n && m[a][b] == m[a][b + 1] {
                    collisions += 1;
                }
            }
        }
    }
    (bijective, balanced, collisions)
}

/// A random xDAWN problem: `(X, D)` with a planted response of distinct
/// strength per source.
pub fn xdawn_problem(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(3..=8);
    let t = rng.random_range(600..=2000);
    let erp_len = rng.random_range(5..=20);
    let n_onsets = rng.random_range(10..=40);
    let mut onsets: Vec<usize> = (0..n_onsets).map(|_| rng.random_range(0..t - erp_len)).collect();
    onsets.sort_unstable();
    onsets.dedup();
    let d = build_toeplitz(&onsets, erp_len, t).unwrap().to_dense();
    let mut a = gaussian_matrix(&mut rng, erp_len, c);
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= 1.0 + j as f64;
    }
    let x = gaussian_matrix(&mut rng, t, c) + &d * a;
    (x, d, erp_len)
}

/// Generalized eigenvectors of `(XᵀP_D X, XᵀX)` by Cholesky whitening,
/// sorted by decreasing eigenvalue, unit length, largest entry positive.
pub fn xdawn_oracle(x: &DMatrix<f64>, d: &DMatrix<f64>) -> (Vec<DVector<f64>>, Vec<f64>) {
    let dtx = d.tr_mul(x);
    let dtd = d.tr_mul(d).cholesky().expect("design has full column rank");
    let a = dtx.transpose() * dtd.solve(&dtx);
    let l = x.tr_mul(x).cholesky().expect("signal has full column rank").l();
    let l_inv = l.try_inverse().expect("invertible factor");
    let m = &l_inv * a * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vectors = order
        .iter()
        .map(|&i| {
            let mut u = l_inv.tr_mul(&eig.eigenvectors.column(i).into_owned());
            u /= u.norm();
            let pivot = u.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
            if pivot < 0.0 {
                u = -u;
            }
            u
        })
        .collect();
    (vectors, order.iter().map(|&i| eig.eigenvalues[i]).collect())
}

/// Angle between the lines spanned by two vectors.
pub fn line_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let a = a / a.norm();
    let mut b = b / b.norm();
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    let residual = (&a - &b * a.dot(&b)).norm();
    residual.min(1.0).asin()
}

/// Penalised least squares `argmin ‖Gᵀw − t‖² + λ Σ pᵢwᵢ²` through QR of the
/// stacked system `[Gᵀ; diag(√(λpᵢ))]`.
pub fn ridge_oracle(g: &DMatrix<f64>, t: &DVector<f64>, lambda: f64, penalty: &DVector<f64>) -> DVector<f64> {
    let (dim, e) = g.shape();
    let mut a = DMatrix::zeros(e + dim, dim);
    a.view_mut((0, 0), (e, dim)).copy_from(&g.transpose());
    for i in 0..dim {
        a[(e + i, i)] = (lambda * penalty[i]).sqrt();
    }
    let mut b = DVector::zeros(e + dim);
    b.rows_mut(0, e).copy_from(t);
    let qr = a.qr();
    let qtb = qr.q().tr_mul(&b);
    qr.r().solve_upper_triangular(&qtb).expect("full rank")
}

/// A random classification problem `(features E×D, labels)`.
pub fn classification_problem(seed: u64, e: usize, d: usize, shift: f64) -> (DMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..e).map(|i| i % 6 == 0 || rng.random_bool(0.1)).collect();
    let direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let x = DMatrix::from_fn(e, d, |i, j| {
        let noise: f64 = rng.sample(StandardNormal);
        noise + if labels[i] { shift * direction[j] } else { 0.0 }
    });
    (x, labels)
}

/// Brute-force pairwise AUC.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (s_pos, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (s_neg, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1.0;
            wins += if s_pos > s_neg {
                1.0
            } else if s_pos == s_neg {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}
