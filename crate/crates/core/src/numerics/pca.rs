//! PCA by cyclic Jacobi eigendecomposition of the covariance matrix.
//!
//! Feature dimensions stay small here (D ≤ 64), so an exact dense
//! eigensolver with no iteration-count tuning is the right tool.

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Principal components of a data matrix.
#[derive(Debug, Clone)]
pub struct Pca {
    /// k×D, orthonormal rows, descending eigenvalue order.
    pub components: Tensor2,
    /// N×k, projections of the centered data onto the components.
    pub projections: Tensor2,
    /// Column means of the input.
    pub mean: Vec<f64>,
    /// Eigenvalues matching `components`, descending.
    pub eigenvalues: Vec<f64>,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
/// Returns (eigenvalues, eigenvectors as columns), unsorted.
pub fn jacobi_eigen_symmetric(m: &Tensor2) -> Result<(Vec<f64>, Tensor2)> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch {
            context: format!("jacobi needs a square matrix, got {}x{}", m.rows(), m.cols()),
        });
    }
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Tensor2::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let frob: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = (1e-15 * frob).max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let app = a.get(p, p);
                let aqq = a.get(q, q);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a.get(i, p);
                        let aiq = a.get(i, q);
                        a.set(i, p, c * aip - s * aiq);
                        a.set(p, i, c * aip - s * aiq);
                        a.set(i, q, s * aip + c * aiq);
                        a.set(q, i, s * aip + c * aiq);
                    }
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let values = (0..n).map(|i| a.get(i, i)).collect();
    Ok((values, v))
}

/// Top-k principal components of X (N×D) under the sample covariance
/// (divide by N−1). The sign of each component is fixed so its
/// largest-magnitude entry is nonnegative, ties broken by lowest index.
pub fn pca_top_k(x: &Tensor2, k: usize) -> Result<Pca> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::ConfigInvalid {
            context: format!("pca needs at least 2 points, got {n}"),
        });
    }
    if k > n.min(d) {
        return Err(Error::ConfigInvalid {
            context: format!("pca k={k} exceeds min(N,D)=min({n},{d})"),
        });
    }
    let mean = x.mean_rows();
    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centered.transpose().matmul(&centered)?;
    let denom = (n - 1) as f64;
    for v in cov.data_mut() {
        *v /= denom;
    }

    let (values, vectors) = jacobi_eigen_symmetric(&cov)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());

    let mut components = Tensor2::zeros(k, d);
    let mut eigenvalues = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        eigenvalues.push(values[src]);
        for j in 0..d {
            components.set(row, j, vectors.get(j, src));
        }
        // Sign convention: largest-magnitude entry nonnegative.
        let comp = components.row(row);
        let mut best = 0;
        for j in 1..d {
            if comp[j].abs() > comp[best].abs() {
                best = j;
            }
        }
        if comp[best] < 0.0 {
            for v in components.row_mut(row) {
                *v = -*v;
            }
        }
    }
    let projections = centered.matmul_nt(&components)?;
    Ok(Pca {
        components,
        projections,
        mean,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    #[test]
    fn line_through_origin_recovers_direction() {
        // Points on y = 2x: first component must be parallel to [1,2]/sqrt 5.
        let x = Tensor2::from_vec(4, 2, vec![1.0, 2.0, -1.0, -2.0, 2.0, 4.0, 0.5, 1.0]).unwrap();
        let pca = pca_top_k(&x, 1).unwrap();
        let c = pca.components.row(0);
        let expect = [1.0 / 5.0f64.sqrt(), 2.0 / 5.0f64.sqrt()];
        assert!((c[0] - expect[0]).abs() < 1e-12);
        assert!((c[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn components_are_orthonormal() {
        let mut rng = seeded_rng(21);
        let x = Tensor2::from_vec(10, 5, (0..50).map(|_| rng.next_range(-1.0, 1.0)).collect())
            .unwrap();
        let pca = pca_top_k(&x, 3).unwrap();
        let gram = pca.components.matmul_nt(&pca.components).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram.get(i, j) - expect).abs() < 1e-9,
                    "gram[{i}][{j}] = {}",
                    gram.get(i, j)
                );
            }
        }
    }

    #[test]
    fn projection_variance_equals_eigenvalue() {
        let mut rng = seeded_rng(31);
        let n = 12;
        let x = Tensor2::from_vec(
            n,
            4,
            (0..n * 4).map(|_| rng.next_range(-2.0, 2.0)).collect(),
        )
        .unwrap();
        let pca = pca_top_k(&x, 4).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..n).map(|i| pca.projections.get(i, j)).collect();
            let mean: f64 = col.iter().sum::<f64>() / n as f64;
            let var: f64 =
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            assert!(
                (var - pca.eigenvalues[j]).abs() < 1e-8,
                "column {j}: var {var} vs eigenvalue {}",
                pca.eigenvalues[j]
            );
        }
    }

    /// Independent oracle: power iteration with deflation on the same
    /// covariance. Different algorithm family from the Jacobi path.
    fn power_iteration_top_k(x: &Tensor2, k: usize) -> Vec<Vec<f64>> {
        let n = x.rows();
        let d = x.cols();
        let mean = x.mean_rows();
        let mut cov = vec![vec![0.0; d]; d];
        for i in 0..n {
            let r = x.row(i);
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n as f64 - 1.0);
                }
            }
        }
        let mut comps: Vec<Vec<f64>> = Vec::new();
        for c in 0..k {
            let mut v: Vec<f64> = (0..d).map(|i| ((i + c + 1) as f64).sin() + 0.5).collect();
            for _ in 0..20_000 {
                // Deflate previously found directions.
                for prev in &comps {
                    let proj: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                    for (vi, pi) in v.iter_mut().zip(prev) {
                        *vi -= proj * pi;
                    }
                }
                let mut next = vec![0.0; d];
                for a in 0..d {
                    for b in 0..d {
                        next[a] += cov[a][b] * v[b];
                    }
                }
                let nn: f64 = next.iter().map(|x| x * x).sum::<f64>().sqrt();
                for x in &mut next {
                    *x /= nn;
                }
                v = next;
            }
            comps.push(v);
        }
        comps
    }

    #[test]
    fn subspace_matches_power_iteration_oracle() {
        let mut rng = seeded_rng(77);
        let x = Tensor2::from_vec(4, 3, (0..12).map(|_| rng.next_range(-1.0, 1.0)).collect())
            .unwrap();
        let k = 2;
        let pca = pca_top_k(&x, k).unwrap();
        let oracle = power_iteration_top_k(&x, k);
        // Principal angles: |cos| between matched components should be 1.
        for (row, oracle_c) in oracle.iter().enumerate() {
            let mine = pca.components.row(row);
            let cosine: f64 = mine.iter().zip(oracle_c).map(|(a, b)| a * b).sum();
            assert!(
                (cosine.abs() - 1.0).abs() < 1e-6,
                "component {row}: |cos| = {}",
                cosine.abs()
            );
        }
    }

    #[test]
    fn pca_rejects_degenerate_requests() {
        let x = Tensor2::zeros(1, 3);
        assert!(pca_top_k(&x, 1).is_err());
        let x = Tensor2::zeros(4, 3);
        assert!(pca_top_k(&x, 4).is_err());
    }

    #[test]
    fn sign_convention_prefers_nonnegative_peak() {
        let mut rng = seeded_rng(5);
        let x = Tensor2::from_vec(8, 4, (0..32).map(|_| rng.next_range(-1.0, 1.0)).collect())
            .unwrap();
        let pca = pca_top_k(&x, 3).unwrap();
        for r in 0..3 {
            let comp = pca.components.row(r);
            let mut best = 0;
            for j in 1..4 {
                if comp[j].abs() > comp[best].abs() {
                    best = j;
                }
            }
            assert!(comp[best] >= 0.0);
        }
    }
}
