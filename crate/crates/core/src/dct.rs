//! Orthonormal two-dimensional DCT-II and its inverse.
//!
//! Separable matrix form: `Y = C_h · X · C_wᵀ`, `X = C_hᵀ · Y · C_w`, where
//! `C_n[u][x] = a(u) cos(π (2x + 1) u / 2n)` with `a(0) = √(1/n)` and
//! `a(u) = √(2/n)`. `O(HW(H+W))`, which is plenty for small images.

use crate::error::{Error, Result};

/// Row-major `n × n` orthonormal DCT-II basis.
pub fn dct_basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let nf = n as f64;
    for u in 0..n {
        let a = if u == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for x in 0..n {
            c[u * n + x] = a * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2.0 * nf)).cos();
        }
    }
    c
}

fn check(data: &[f64], rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::param("DCT input must be non-empty"));
    }
    if data.len() != rows * cols {
        return Err(Error::param(format!(
            "{rows}x{cols} matrix needs {} values, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(())
}

/// `out = L · X · Rᵀ` for square `L` (`rows²`) and `R` (`cols²`).
fn sandwich(l: &[f64], x: &[f64], r: &[f64], rows: usize, cols: usize, transpose: bool) -> Vec<f64> {
    // Rows first: tmp[i][v] = Σ_j x[i][j] · R'[v][j].
    let mut tmp = vec![0.0; rows * cols];
    for i in 0..rows {
        let xi = &x[i * cols..(i + 1) * cols];
        for v in 0..cols {
            let mut acc = 0.0;
            for (j, &xv) in xi.iter().enumerate() {
                let rv = if transpose { r[j * cols + v] } else { r[v * cols + j] };
                acc += rv * xv;
            }
            tmp[i * cols + v] = acc;
        }
    }
    // Then columns: out[u][v] = Σ_i L'[u][i] · tmp[i][v].
    let mut out = vec![0.0; rows * cols];
    for u in 0..rows {
        for i in 0..rows {
            let lv = if transpose { l[i * rows + u] } else { l[u * rows + i] };
            let src = &tmp[i * cols..(i + 1) * cols];
            for (o, &t) in out[u * cols..(u + 1) * cols].iter_mut().zip(src) {
                *o += lv * t;
            }
        }
    }
    out
}

/// Forward transform of a `rows × cols` row-major matrix.
pub fn dct2(data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    check(data, rows, cols)?;
    Ok(sandwich(&dct_basis(rows), data, &dct_basis(cols), rows, cols, false))
}

/// Inverse of [`dct2`] (DCT-III with matching normalization).
pub fn idct2(coeffs: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    check(coeffs, rows, cols)?;
    Ok(sandwich(&dct_basis(rows), coeffs, &dct_basis(cols), rows, cols, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn alpha(u: usize, n: usize) -> f64 {
        if u == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        }
    }

    /// Quadruple sum straight from the definition.
    fn naive_dct(x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for u in 0..h {
            for v in 0..w {
                let mut s = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        s += x[i * w + j]
                            * (PI * (2 * i + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                            * (PI * (2 * j + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                    }
                }
                out[u * w + v] = alpha(u, h) * alpha(v, w) * s;
            }
        }
        out
    }

    fn naive_idct(c: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let mut s = 0.0;
                for u in 0..h {
                    for v in 0..w {
                        s += alpha(u, h)
                            * alpha(v, w)
                            * c[u * w + v]
                            * (PI * (2 * i + 1) as f64 * u as f64 / (2 * h) as f64).cos()
                            * (PI * (2 * j + 1) as f64 * v as f64 / (2 * w) as f64).cos();
                    }
                }
                out[i * w + j] = s;
            }
        }
        out
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_is_dc_only() {
        let c = 0.3;
        let y = dct2(&[c; 16], 4, 4).unwrap();
        assert!((y[0] - 4.0 * c).abs() < 1e-12);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dc_delta_inverts_to_constant() {
        let mut c = vec![0.0; 12];
        c[0] = 2.0;
        let x = idct2(&c, 3, 4).unwrap();
        let expect = 2.0 / 12f64.sqrt();
        assert!(x.iter().all(|v| (v - expect).abs() < 1e-12));
    }

    #[test]
    fn roundtrip() {
        let x = random(64, 1);
        let back = idct2(&dct2(&x, 8, 8).unwrap(), 8, 8).unwrap();
        assert!(max_diff(&x, &back) < 1e-10);
    }

    #[test]
    fn matches_naive_definitions() {
        let x = random(35, 2);
        assert!(max_diff(&dct2(&x, 5, 7).unwrap(), &naive_dct(&x, 5, 7)) < 1e-8);
        let c = random(35, 3);
        assert!(max_diff(&idct2(&c, 5, 7).unwrap(), &naive_idct(&c, 5, 7)) < 1e-8);
    }

    #[test]
    fn parseval() {
        let x = random(9 * 13, 4);
        let y = dct2(&x, 9, 13).unwrap();
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        assert!((ex - ey).abs() < 1e-8);
    }

    #[test]
    fn empty_and_mismatched_input() {
        assert!(dct2(&[], 0, 3).is_err());
        assert!(idct2(&[], 2, 0).is_err());
        assert!(dct2(&[1.0; 5], 2, 3).is_err());
    }
}
