#![allow(dead_code, clippy::needless_range_loop)]

//! Independent reference implementations used by the integration tests.
//! Everything here works on plain `Vec<Vec<f64>>` so it shares no code
//! with the library kernels.

use rand::Rng;
use teaser_core::linalg::{DenseMatrix, SparseBinaryMatrix};
use teaser_core::rng::stream;
use teaser_core::solver::Hyperparams;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a[0].len());
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn frob_sq(a: &Mat) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

/// Random binary interactions (every row and column non-empty) and a
/// binary decoder with a trailing popularity column.
pub fn random_instance(
    seed: u64,
    m: usize,
    n: usize,
    t: usize,
) -> (SparseBinaryMatrix, DenseMatrix) {
    let mut rng = stream(seed, &[99]);
    let mut rows: Vec<Vec<usize>> = (0..m)
        .map(|_| (0..n).filter(|_| rng.random_bool(0.4)).collect())
        .collect();
    for (u, r) in rows.iter_mut().enumerate() {
        if r.is_empty() {
            r.push(u % n);
        }
    }
    for i in 0..n {
        if !rows.iter().any(|r| r.contains(&i)) {
            rows[i % m].push(i);
        }
    }
    let x = SparseBinaryMatrix::from_rows(n, rows).unwrap();
    let counts = x.column_counts();
    let max = *counts.iter().max().unwrap() as f64;
    let binary_tags = t - 1;
    let mut d = DenseMatrix::zeros(n, t);
    for i in 0..n {
        d.set(i, i % binary_tags, 1.0);
        for j in 0..binary_tags {
            if rng.random_bool(0.3) {
                d.set(i, j, 1.0);
            }
        }
        d.set(i, binary_tags, counts[i] as f64 / max);
    }
    (x, d)
}

/// `‖X − X·P(EDᵀ)‖² + λ1‖P(EDᵀ)‖² + λ2‖E‖²` with `P` zeroing the diagonal.
pub fn reference_objective(e: &Mat, x: &Mat, d: &Mat, hp: &Hyperparams) -> f64 {
    let mut w = mul(e, &transpose(d));
    for (i, row) in w.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let xw = mul(x, &w);
    let mut fit = 0.0;
    for (xr, wr) in x.iter().zip(&xw) {
        for (a, b) in xr.iter().zip(wr) {
            fit += (a - b) * (a - b);
        }
    }
    fit + hp.lambda1 * frob_sq(&w) + hp.lambda2 * frob_sq(e)
}

/// Gradient of [`reference_objective`]:
/// `2·P(XᵀX·P(EDᵀ) − XᵀX + λ1·P(EDᵀ))·D + 2λ2·E`.
fn diagonal_free_gradient(e: &Mat, xtx: &Mat, d: &Mat, hp: &Hyperparams) -> Mat {
    let n = e.len();
    let mut w = mul(e, &transpose(d));
    for (i, row) in w.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let mut inner = mul(xtx, &w);
    for i in 0..n {
        for j in 0..n {
            inner[i][j] += hp.lambda1 * w[i][j] - xtx[i][j];
        }
        inner[i][i] = 0.0;
    }
    let mut g = mul(&inner, d);
    for i in 0..n {
        for j in 0..g[0].len() {
            g[i][j] = 2.0 * g[i][j] + 2.0 * hp.lambda2 * e[i][j];
        }
    }
    g
}

/// Minimizes the diagonal-free objective by accelerated gradient descent
/// from several random starts; returns the best value found.
pub fn brute_force_minimum(x: &Mat, d: &Mat, hp: &Hyperparams, restarts: u64) -> f64 {
    let n = d.len();
    let t = d[0].len();
    let xtx = mul(&transpose(x), x);
    // Lipschitz bound: 2 (‖XᵀX‖_F + λ1) ‖D‖_F² + 2λ2
    let lip = 2.0 * (frob_sq(&xtx).sqrt() + hp.lambda1) * frob_sq(d) + 2.0 * hp.lambda2;
    let step = 1.0 / lip;
    let mut best = f64::INFINITY;
    for r in 0..restarts {
        let mut rng = stream(1234, &[r]);
        let mut e: Mat = (0..n)
            .map(|_| (0..t).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut prev = e.clone();
        let mut last = f64::INFINITY;
        for k in 0..200_000usize {
            let momentum = k as f64 / (k as f64 + 3.0);
            let y: Mat = e
                .iter()
                .zip(&prev)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(u, v)| u + momentum * (u - v))
                        .collect()
                })
                .collect();
            let g = diagonal_free_gradient(&y, &xtx, d, hp);
            prev = e;
            e = y
                .iter()
                .zip(&g)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u - step * v).collect())
                .collect();
            if k % 1000 == 999 {
                let f = reference_objective(&e, x, d, hp);
                if (last - f).abs() <= 1e-15 * f.abs() {
                    break;
                }
                last = f;
            }
        }
        best = best.min(reference_objective(&e, x, d, hp));
    }
    best
}

/// Gaussian elimination with partial pivoting for `A·x = b`.
pub fn solve_dense(mut a: Mat, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Solves `(XᵀX + λ1 I)·E·DᵀD + λ2·E = rhs` through its `nt × nt`
/// vectorized form, `E[i][j]` at index `i·t + j`.
pub fn vectorized_sylvester(xtx: &Mat, dtd: &Mat, rhs: &Mat, hp: &Hyperparams) -> Mat {
    let n = xtx.len();
    let t = dtd.len();
    let mut a = zeros(n * t, n * t);
    for i in 0..n {
        for j in 0..t {
            let row = i * t + j;
            for k in 0..n {
                let left = xtx[i][k] + if i == k { hp.lambda1 } else { 0.0 };
                for l in 0..t {
                    a[row][k * t + l] += left * dtd[l][j];
                }
            }
            a[row][row] += hp.lambda2;
        }
    }
    let b: Vec<f64> = rhs.iter().flatten().copied().collect();
    let v = solve_dense(a, b);
    (0..n).map(|i| v[i * t..(i + 1) * t].to_vec()).collect()
}

/// The surrogate augmented Lagrangian minimized by each ADMM block step:
/// objective + 2ργᵀ(β − d) + ρ(‖EDᵀ − dm(β)‖² − ‖EDᵀ‖² + ‖β‖²), `d = diag(EDᵀ)`.
pub fn surrogate_lagrangian(
    e: &Mat,
    beta: &[f64],
    gamma: &[f64],
    x: &Mat,
    d: &Mat,
    hp: &Hyperparams,
) -> f64 {
    let n = d.len();
    let w = mul(e, &transpose(d));
    let xw = mul(x, &w);
    let mut fit = 0.0;
    for (u, xr) in x.iter().enumerate() {
        for i in 0..n {
            let r = xr[i] * (1.0 + beta[i]) - xw[u][i];
            fit += r * r;
        }
    }
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = w[i][j] - if i == j { beta[i] } else { 0.0 };
            off += v * v;
        }
    }
    let mut lag = 0.0;
    let mut beta_sq = 0.0;
    for i in 0..n {
        lag += gamma[i] * (beta[i] - w[i][i]);
        beta_sq += beta[i] * beta[i];
    }
    fit + hp.lambda1 * off
        + hp.lambda2 * frob_sq(e)
        + 2.0 * hp.rho * lag
        + hp.rho * (off - frob_sq(&w) + beta_sq)
}

/// Recall by direct counting over the full ranking.
pub fn brute_recall(ranking: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut hits = 0.0;
    for r in 0..k.min(ranking.len()) {
        if truth.contains(&ranking[r]) {
            hits += 1.0;
        }
    }
    hits / k.min(truth.len()) as f64
}

/// nDCG by the textbook formula with one-based ranks.
pub fn brute_ndcg(ranking: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut dcg = 0.0;
    for r in 1..=k.min(ranking.len()) {
        if truth.contains(&ranking[r - 1]) {
            dcg += 1.0 / (r as f64 + 1.0).log2();
        }
    }
    let mut idcg = 0.0;
    for r in 1..=k.min(truth.len()) {
        idcg += 1.0 / (r as f64 + 1.0).log2();
    }
    dcg / idcg
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Planted-preference data run through ingestion with a 60/20/20 user split.
pub fn planted_dataset(seed: u64) -> teaser_core::dataset::PreparedDataset {
    use teaser_core::dataset::{prepare, EncodingConfig, SplitSpec};
    use teaser_core::synthetic::{planted_preferences, PlantedConfig};
    let data = planted_preferences(&PlantedConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let spec = SplitSpec {
        train_fraction: 0.6,
        validation_fraction: 0.2,
        test_fraction: 0.2,
        seed,
        ..Default::default()
    };
    prepare(
        &data.interactions,
        &data.metadata,
        &EncodingConfig::default(),
        &spec,
    )
    .unwrap()
}
