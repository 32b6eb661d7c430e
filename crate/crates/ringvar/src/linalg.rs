//! Small dense SVD (one-sided Jacobi).
//!
//! The matrices here are a few dozen columns at most and often rank
//! deficient, where accuracy of the small singular values matters more
//! than speed.

/// Column-major `rows × cols` matrix.
#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Mat {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.data[i * self.rows + j])
    }
}

/// Thin SVD `A = U Σ Vᵀ` with `k = min(rows, cols)` triplets, sorted by
/// decreasing singular value. Singular vectors belonging to zero singular
/// values may be zero.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn svd(a: &Mat) -> Svd {
    if a.rows < a.cols {
        let t = svd(&a.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let (m, n) = (a.rows, a.cols);
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.col(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&w[i], &w[i]);
                let beta = dot(&w[j], &w[j]);
                let gamma = dot(&w[i], &w[j]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (w[i][k], w[j][k]);
                    w[i][k] = c * x - s * y;
                    w[j][k] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[i][k], v[j][k]);
                    v[i][k] = c * x - s * y;
                    v[j][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut trip: Vec<(f64, Vec<f64>, Vec<f64>)> = w
        .into_iter()
        .zip(v)
        .map(|(col, vj)| {
            let s = dot(&col, &col).sqrt();
            let u = if s > 0.0 {
                col.iter().map(|x| x / s).collect()
            } else {
                vec![0.0; m]
            };
            (s, u, vj)
        })
        .collect();
    // stable: equal singular values keep column order
    trip.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Svd {
        u: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
    };
    for (s, u, vj) in trip {
        out.sigma.push(s);
        out.u.push(u);
        out.v.push(vj);
    }
    out
}

/// Minimum-norm least squares solution, ignoring singular values at or
/// below `rel_tol` times the largest one.
pub fn lstsq(a: &Mat, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let d = svd(a);
    let tol = rel_tol * d.sigma.first().copied().unwrap_or(0.0);
    let mut x = vec![0.0; a.cols];
    for ((s, u), v) in d.sigma.iter().zip(&d.u).zip(&d.v) {
        if *s > tol && *s > 0.0 {
            let c = dot(u, b) / s;
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += c * vi;
            }
        }
    }
    x
}
