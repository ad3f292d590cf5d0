//! Small dense symmetric linear algebra on row-major `f64` slices.

use super::{ClassifyError, Result};

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

pub const JACOBI_TOLERANCE: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations. Stops when the off-diagonal Frobenius norm falls
/// below `JACOBI_TOLERANCE` times the matrix norm, or after
/// `JACOBI_MAX_SWEEPS` sweeps.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymmetricEigen> {
    if matrix.len() != n * n || n == 0 {
        return Err(ClassifyError::InvalidArgument(format!(
            "expected a {n}x{n} matrix, got {} values",
            matrix.len()
        )));
    }
    let mut a = matrix.to_vec();
    // symmetrize so rounding asymmetry in the caller cannot stall convergence
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let threshold = JACOBI_TOLERANCE * scale.max(f64::MIN_POSITIVE);
    // rows of `vt` converge to the eigenvectors
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];
    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS && off_diagonal_norm(&a, n) > threshold {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                row_p.copy_from_slice(&a[p * n..(p + 1) * n]);
                row_q.copy_from_slice(&a[q * n..(q + 1) * n]);
                for k in 0..n {
                    let (xp, xq) = (row_p[k], row_q[k]);
                    a[p * n + k] = c * xp - s * xq;
                    a[q * n + k] = s * xp + c * xq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        a[k * n + p] = a[p * n + k];
                        a[k * n + q] = a[q * n + k];
                    }
                }
                let (vp, vq) = if p < q {
                    let (lo, hi) = vt.split_at_mut(q * n);
                    (&mut lo[p * n..(p + 1) * n], &mut hi[..n])
                } else {
                    unreachable!("q > p")
                };
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| a[i * n + i]).collect(),
        vectors: order
            .iter()
            .map(|&i| vt[i * n..(i + 1) * n].to_vec())
            .collect(),
        sweeps,
    })
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(ClassifyError::InvalidArgument("cholesky: not square".into()));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(ClassifyError::NotPositiveDefinite);
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L·y = b` by forward substitution.
pub fn forward_substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64;

    fn random_symmetric(rng: &mut XorShift64, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform(-1.0, 1.0);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }
        a
    }

    #[test]
    fn two_by_two_closed_form() {
        let mut rng = XorShift64::new(1);
        for _ in 0..50 {
            let (a, b, d) = (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0));
            let e = symmetric_eigen(&[a, b, b, d], 2).unwrap();
            // roots of λ² − (a+d)λ + (ad − b²)
            let mean = 0.5 * (a + d);
            let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            assert!((e.values[0] - (mean + disc)).abs() < 1e-12);
            assert!((e.values[1] - (mean - disc)).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstructs_random_matrices() {
        let mut rng = XorShift64::new(2);
        for n in [1usize, 3, 6, 12] {
            let a = random_symmetric(&mut rng, n);
            let e = symmetric_eigen(&a, n).unwrap();
            for w in e.values.windows(2) {
                assert!(w[0] >= w[1]);
            }
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|k| e.vectors[i][k] * e.vectors[j][k]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                    let rec: f64 = (0..n)
                        .map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j])
                        .sum();
                    assert!((rec - a[i * n + j]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn diagonal_needs_no_sweeps() {
        let e = symmetric_eigen(&[1.0, 0.0, 0.0, 3.0], 2).unwrap();
        assert_eq!(e.sweeps, 0);
        assert_eq!(e.values, vec![3.0, 1.0]);
    }

    #[test]
    fn cholesky_solves() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let l = cholesky(&a, 2).unwrap();
        assert_eq!(l, vec![2.0, 0.0, 1.0, 2f64.sqrt()]);
        let y = forward_substitute(&l, 2, &[2.0, 1.0]);
        assert!((y[0] - 1.0).abs() < 1e-15 && y[1].abs() < 1e-15);
        assert!(matches!(
            cholesky(&[1.0, 2.0, 2.0, 1.0], 2),
            Err(ClassifyError::NotPositiveDefinite)
        ));
    }
}
