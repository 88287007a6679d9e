//! Test-side oracles, written independently of the library code paths.
#![allow(dead_code)]

use bss_core::linalg::{CMat, CVec, C64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn to_rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.dim()).map(|i| (0..m.dim()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn from_rows(r: &[Vec<C64>]) -> CMat {
    CMat::from_fn(r.len(), |i, j| r[i][j]).unwrap()
}

/// Gauss-Jordan with full row pivoting on plain nested vectors.
pub fn gj_inverse(a: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = a.len();
    let mut m: Vec<Vec<C64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }));
            row
        })
        .collect();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, p);
        let piv = m[col][col];
        for v in m[col].iter_mut() {
            *v /= piv;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn matmul(a: &[Vec<C64>], b: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

pub fn matvec(a: &[Vec<C64>], v: &[C64]) -> Vec<C64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// `v^H M v` without the library.
pub fn quad(m: &CMat, v: &[C64]) -> f64 {
    let mut acc = c(0.0, 0.0);
    for i in 0..v.len() {
        for j in 0..v.len() {
            acc += v[i].conj() * m[(i, j)] * v[j];
        }
    }
    acc.re
}

pub fn random_matrix(rng: &mut ChaCha8Rng, k: usize) -> CMat {
    CMat::from_fn(k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap()
}

/// `B B^H + d I`.
pub fn random_hpd(rng: &mut ChaCha8Rng, k: usize, d: f64) -> CMat {
    let b = random_matrix(rng, k);
    (b * b.adjoint()).hermitian_part().diag_load(d)
}

/// Largest eigenvalue of `N^{-1} S` by power iteration on plain vectors.
pub fn power_top_eig(s: &CMat, n: &CMat, iters: usize) -> (f64, Vec<C64>) {
    let k = s.dim();
    let ninv = gj_inverse(&to_rows(n));
    let m = matmul(&ninv, &to_rows(s));
    let mut v: Vec<C64> = (0..k).map(|i| c(1.0 + i as f64 * 0.37, 0.1 * i as f64)).collect();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let next = matvec(&m, &v);
        let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v = next.into_iter().map(|z| z / norm).collect();
        lambda = quad(s, &v) / quad(n, &v);
    }
    (lambda, v)
}

pub fn cvec(v: &[C64]) -> CVec {
    CVec::from_slice(v)
}
