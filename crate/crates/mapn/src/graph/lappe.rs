//! Laplacian positional encoding.
//!
//! The encoding is built on the type-erased undirected skeleton: the
//! symmetric-normalized Laplacian `L = I - D^{-1/2} A D^{-1/2}` (isolated
//! nodes get a zero diagonal), eigendecomposed densely, with the `k`
//! eigenvectors of smallest eigenvalue above numerical zero returned as
//! per-node rows. Each eigenvector's sign is fixed by making its
//! largest-magnitude entry positive.

use super::{GraphError, HeteroGraph};
use crate::Tensor64;

const ZERO_EIGENVALUE_TOL: f64 = 1e-9;

pub struct LapPe {
    /// `n x k` matrix; row `v` is node `v`'s encoding.
    pub encodings: Tensor64,
    /// Eigenvalues of the selected columns, ascending.
    pub eigenvalues: Vec<f64>,
    /// Number of numerically zero eigenvalues (= connected components,
    /// counting isolated nodes).
    pub components: usize,
}

/// Dense symmetric-normalized Laplacian of the skeleton.
pub fn sym_normalized_laplacian(graph: &HeteroGraph) -> Vec<Vec<f64>> {
    let n = graph.n_nodes();
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|v| {
            let d = graph.degree(v);
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();
    let mut l = vec![vec![0.0; n]; n];
    for v in 0..n {
        if graph.degree(v) > 0 {
            l[v][v] = 1.0;
        }
        for &w in graph.skeleton_neighbors(v) {
            l[v][w] -= inv_sqrt_deg[v] * inv_sqrt_deg[w];
        }
    }
    l
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues ascending, eigenvectors as columns of `v`).
pub fn jacobi_eigh(mat: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let mut vectors = vec![vec![0.0; n]; n];
    for (col_out, &col_in) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r][col_out] = v[r][col_in];
        }
    }
    (eigenvalues, vectors)
}

/// Positional encoding from the `k` lowest nonzero-eigenvalue eigenvectors.
pub fn lap_pe(graph: &HeteroGraph, k: usize) -> Result<LapPe, GraphError> {
    let n = graph.n_nodes();
    if k >= n {
        return Err(GraphError::KTooLarge { k, available: n.saturating_sub(1), components: 0, n });
    }
    let l = sym_normalized_laplacian(graph);
    let (vals, vecs) = jacobi_eigh(&l);
    let components = vals.iter().filter(|&&x| x < ZERO_EIGENVALUE_TOL).count();
    let available = n - components;
    if k > available {
        return Err(GraphError::KTooLarge { k, available, components, n });
    }
    let selected: Vec<usize> = (components..components + k).collect();
    let mut data = vec![0.0; n * k];
    for (j, &col) in selected.iter().enumerate() {
        // sign fix: largest-magnitude entry positive (first index on ties)
        let mut best = 0usize;
        for r in 1..n {
            if vecs[r][col].abs() > vecs[best][col].abs() + 1e-15 {
                best = r;
            }
        }
        let sign = if vecs[best][col] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            data[r * k + j] = sign * vecs[r][col];
        }
    }
    Ok(LapPe {
        encodings: Tensor64::matrix(n, k, data),
        eigenvalues: selected.iter().map(|&c| vals[c]).collect(),
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth::{complete_graph, cycle_graph, path_graph};

    fn residual(l: &[Vec<f64>], vec: &[f64], lambda: f64) -> f64 {
        let n = l.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let lv: f64 = (0..n).map(|j| l[i][j] * vec[j]).sum();
            worst = worst.max((lv - lambda * vec[i]).abs());
        }
        worst
    }

    #[test]
    fn complete_graph_k4_eigenpair() {
        let g = complete_graph(4, 2, 0);
        let pe = lap_pe(&g, 1).unwrap();
        assert_eq!(pe.components, 1);
        let lambda = pe.eigenvalues[0];
        assert!((lambda - 4.0 / 3.0).abs() < 1e-10, "K4 nonzero eigenvalue 4/3, got {lambda}");
        let v: Vec<f64> = (0..4).map(|r| pe.encodings.at(r, 0)).collect();
        let l = sym_normalized_laplacian(&g);
        assert!(residual(&l, &v, lambda) < 1e-8);
        let sum: f64 = v.iter().sum();
        assert!(sum.abs() < 1e-8, "K4 eigenvector entries sum to 0 (regular graph)");
    }

    #[test]
    fn path_graph_p3_eigenpair() {
        let g = path_graph(3, 2, 0);
        let pe = lap_pe(&g, 1).unwrap();
        let lambda = pe.eigenvalues[0];
        let v: Vec<f64> = (0..3).map(|r| pe.encodings.at(r, 0)).collect();
        let l = sym_normalized_laplacian(&g);
        assert!(residual(&l, &v, lambda) < 1e-8);
        // orthogonal to the degree-weighted constant vector D^{1/2} 1
        let dsqrt = [1.0f64, 2.0f64.sqrt(), 1.0];
        let ip: f64 = v.iter().zip(&dsqrt).map(|(a, b)| a * b).sum();
        assert!(ip.abs() < 1e-8, "inner product {ip}");
    }

    #[test]
    fn k_equal_to_node_count_errors() {
        let g = cycle_graph(5, 2, 0);
        assert!(matches!(lap_pe(&g, 5), Err(GraphError::KTooLarge { .. })));
    }

    #[test]
    fn disconnected_graph_reports_components() {
        use crate::graph::GraphBuilder;
        // two triangles, no connection
        let mut b = GraphBuilder::new();
        for v in 0..6 {
            b.add_node(&v.to_string(), "n").unwrap();
            b.set_feature_row(&v.to_string(), vec![0.0]).unwrap();
        }
        for (s, d) in [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)] {
            b.add_edge(&s.to_string(), &d.to_string(), "e", None).unwrap();
        }
        let g = b.build().unwrap();
        let pe = lap_pe(&g, 2).unwrap();
        assert_eq!(pe.components, 2);
        for &lambda in &pe.eigenvalues {
            assert!(lambda > 1e-9);
        }
        // asking for more than n - components fails
        assert!(matches!(lap_pe(&g, 5), Err(GraphError::KTooLarge { .. })));
    }

    #[test]
    fn columns_orthonormal() {
        let g = cycle_graph(9, 2, 1);
        let pe = lap_pe(&g, 4).unwrap();
        let n = 9;
        for i in 0..4 {
            for j in i..4 {
                let mut ip = 0.0;
                for r in 0..n {
                    ip += pe.encodings.at(r, i) * pe.encodings.at(r, j);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-6, "col {i}·col {j} = {ip}");
            }
        }
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let g = path_graph(6, 2, 3);
        let pe = lap_pe(&g, 3).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..6).map(|r| pe.encodings.at(r, j)).collect();
            let best = col.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(best > 0.0, "column {j} largest entry {best} should be positive");
        }
    }
}
