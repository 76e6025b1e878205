//! Small dense helpers: column statistics and a cyclic Jacobi eigensolver.

use crate::error::{Error, Result};

pub fn column_means(x: &[Vec<f64>]) -> Vec<f64> {
    let d = x.first().map_or(0, |r| r.len());
    let mut m = vec![0.0; d];
    for r in x {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = x.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Population standard deviation per column.
pub fn column_stds(x: &[Vec<f64>], means: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; means.len()];
    for r in x {
        for ((a, v), m) in s.iter_mut().zip(r).zip(means) {
            *a += (v - m) * (v - m);
        }
    }
    let n = x.len().max(1) as f64;
    s.iter().map(|a| (a / n).sqrt()).collect()
}

/// Sample covariance (n − 1) about `center`, row-major d × d.
pub fn covariance(x: &[Vec<f64>], center: &[f64]) -> Vec<f64> {
    let d = center.len();
    let mut c = vec![0.0; d * d];
    let mut dev = vec![0.0; d];
    for r in x {
        for i in 0..d {
            dev[i] = r[i] - center[i];
        }
        for i in 0..d {
            for j in i..d {
                c[i * d + j] += dev[i] * dev[j];
            }
        }
    }
    let denom = (x.len() as f64 - 1.0).max(1.0);
    for i in 0..d {
        for j in i..d {
            c[i * d + j] /= denom;
            c[j * d + i] = c[i * d + j];
        }
    }
    c
}

pub struct SymEigen {
    /// descending
    pub values: Vec<f64>,
    /// column j is the eigenvector for `values[j]`; row-major d × d
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

fn off_norm(a: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += a[i * d + j] * a[i * d + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm is at most
/// `tol` (scaled by the matrix norm when that exceeds 1). Columns sorted by descending eigenvalue; each column's
/// largest-magnitude entry is made positive (first such entry on ties).
pub fn jacobi_eigen(a: &[f64], d: usize, tol: f64) -> Result<SymEigen> {
    if a.len() != d * d {
        return Err(Error::Shape {
            expected: d * d,
            got: a.len(),
        });
    }
    for i in 0..d {
        for j in 0..i {
            if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 * (1.0 + a[i * d + j].abs()) {
                return Err(Error::Domain("matrix is not symmetric".into()));
            }
        }
    }
    let mut a = a.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = tol * fro.max(1.0);
    let mut sweeps = 0;
    while off_norm(&a, d) > tol {
        if sweeps >= 100 {
            return Err(Error::Domain("Jacobi iteration did not converge".into()));
        }
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let mut vectors = vec![0.0; d * d];
    for (col, &src) in order.iter().enumerate() {
        let mut best = 0;
        for r in 0..d {
            if v[r * d + src].abs() > v[best * d + src].abs() {
                best = r;
            }
        }
        let sign = if v[best * d + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            vectors[r * d + col] = sign * v[r * d + src];
        }
    }
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}
