use serde::{Deserialize, Serialize};

use crate::graph;
use crate::par::{self, Execution};

/// `log(sum exp(v))` over the finite entries; `-inf` for an empty sum.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut s = 0.0;
    for v in values {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if v > m {
            s = s * (m - v).exp() + 1.0;
            m = v;
        } else {
            s += (v - m).exp();
        }
    }
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + s.ln()
    }
}

/// Nonnegative matrix stored through the logarithms of its entries; absent
/// entries are `-inf`. Entries are never exponentiated eagerly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogMatrix {
    /// Row-major `n x n`.
    Dense { n: usize, w: Vec<f64> },
    /// CSR with a transposed copy for column sweeps.
    Sparse {
        n: usize,
        row_ptr: Vec<usize>,
        cols: Vec<usize>,
        w: Vec<f64>,
        col_ptr: Vec<usize>,
        rows: Vec<usize>,
        wt: Vec<f64>,
    },
    /// Full support with `w_ij = row_i + col_j` (a rank-one matrix).
    Outer { row: Vec<f64>, col: Vec<f64> },
}

impl LogMatrix {
    pub fn dense(n: usize, w: Vec<f64>) -> Self {
        assert_eq!(w.len(), n * n, "dense matrix needs n*n entries");
        LogMatrix::Dense { n, w }
    }

    pub fn outer(row: Vec<f64>, col: Vec<f64>) -> Self {
        assert_eq!(row.len(), col.len());
        LogMatrix::Outer { row, col }
    }

    /// Sparse matrix from `(i, j, log w)` triples; later duplicates win.
    pub fn from_edges(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Self {
        edges.sort_by_key(|a| (a.0, a.1));
        edges.dedup_by(|later, earlier| {
            if (later.0, later.1) == (earlier.0, earlier.1) {
                earlier.2 = later.2;
                true
            } else {
                false
            }
        });
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &edges {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let cols = edges.iter().map(|e| e.1).collect();
        let w = edges.iter().map(|e| e.2).collect();

        let mut col_ptr = vec![0usize; n + 1];
        for &(_, j, _) in &edges {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut fill = col_ptr.clone();
        let mut rows = vec![0usize; edges.len()];
        let mut wt = vec![0.0; edges.len()];
        for &(i, j, x) in &edges {
            rows[fill[j]] = i;
            wt[fill[j]] = x;
            fill[j] += 1;
        }
        LogMatrix::Sparse {
            n,
            row_ptr,
            cols,
            w,
            col_ptr,
            rows,
            wt,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            LogMatrix::Dense { n, .. } | LogMatrix::Sparse { n, .. } => *n,
            LogMatrix::Outer { row, .. } => row.len(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            LogMatrix::Dense { n, w } => w[i * n + j],
            LogMatrix::Sparse {
                row_ptr, cols, w, ..
            } => {
                let lo = row_ptr[i];
                let hi = row_ptr[i + 1];
                match cols[lo..hi].binary_search(&j) {
                    Ok(p) => w[lo + p],
                    Err(_) => f64::NEG_INFINITY,
                }
            }
            LogMatrix::Outer { row, col } => row[i] + col[j],
        }
    }

    /// Visit the finite entries of row `i` in column order.
    pub fn for_each_in_row(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            LogMatrix::Dense { n, w } => {
                for (j, &x) in w[i * n..(i + 1) * n].iter().enumerate() {
                    if x != f64::NEG_INFINITY {
                        f(j, x);
                    }
                }
            }
            LogMatrix::Sparse {
                row_ptr, cols, w, ..
            } => {
                for p in row_ptr[i]..row_ptr[i + 1] {
                    f(cols[p], w[p]);
                }
            }
            LogMatrix::Outer { row, col } => {
                for (j, &c) in col.iter().enumerate() {
                    f(j, row[i] + c);
                }
            }
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            LogMatrix::Dense { w, .. } => w.iter().filter(|x| **x != f64::NEG_INFINITY).count(),
            LogMatrix::Sparse { w, .. } => w.len(),
            LogMatrix::Outer { row, .. } => row.len() * row.len(),
        }
    }

    /// `y_i = log sum_j exp(w_ij + x_j)`.
    pub fn matvec(&self, x: &[f64], exec: Execution) -> Vec<f64> {
        let n = self.n();
        let exec = par::for_size(exec, n);
        match self {
            LogMatrix::Dense { w, .. } => par::map_range(exec, n, |i| {
                log_sum_exp(w[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a + b))
            }),
            LogMatrix::Sparse {
                row_ptr, cols, w, ..
            } => par::map_range(exec, n, |i| {
                log_sum_exp((row_ptr[i]..row_ptr[i + 1]).map(|p| w[p] + x[cols[p]]))
            }),
            LogMatrix::Outer { row, col } => {
                let s = log_sum_exp(col.iter().zip(x).map(|(a, b)| a + b));
                row.iter().map(|r| r + s).collect()
            }
        }
    }

    /// `y_j = log sum_i exp(x_i + w_ij)`.
    pub fn vecmat(&self, x: &[f64], exec: Execution) -> Vec<f64> {
        let n = self.n();
        let exec = par::for_size(exec, n);
        match self {
            LogMatrix::Dense { w, .. } => par::map_range(exec, n, |j| {
                log_sum_exp((0..n).map(|i| x[i] + w[i * n + j]))
            }),
            LogMatrix::Sparse {
                col_ptr, rows, wt, ..
            } => par::map_range(exec, n, |j| {
                log_sum_exp((col_ptr[j]..col_ptr[j + 1]).map(|p| x[rows[p]] + wt[p]))
            }),
            LogMatrix::Outer { row, col } => {
                let s = log_sum_exp(row.iter().zip(x).map(|(a, b)| a + b));
                col.iter().map(|c| c + s).collect()
            }
        }
    }

    /// Entrywise `w_ij + row_add[i] + col_add[j] + c`, same support.
    pub fn rescaled(&self, row_add: &[f64], col_add: &[f64], c: f64) -> Self {
        match self {
            LogMatrix::Dense { n, w } => {
                let n = *n;
                let mut out = w.clone();
                for i in 0..n {
                    for j in 0..n {
                        let x = &mut out[i * n + j];
                        if *x != f64::NEG_INFINITY {
                            *x += row_add[i] + col_add[j] + c;
                        }
                    }
                }
                LogMatrix::Dense { n, w: out }
            }
            LogMatrix::Sparse {
                n,
                row_ptr,
                cols,
                w,
                col_ptr,
                rows,
                wt,
            } => {
                let mut w2 = w.clone();
                for i in 0..*n {
                    for p in row_ptr[i]..row_ptr[i + 1] {
                        w2[p] += row_add[i] + col_add[cols[p]] + c;
                    }
                }
                let mut wt2 = wt.clone();
                for j in 0..*n {
                    for p in col_ptr[j]..col_ptr[j + 1] {
                        wt2[p] += row_add[rows[p]] + col_add[j] + c;
                    }
                }
                LogMatrix::Sparse {
                    n: *n,
                    row_ptr: row_ptr.clone(),
                    cols: cols.clone(),
                    w: w2,
                    col_ptr: col_ptr.clone(),
                    rows: rows.clone(),
                    wt: wt2,
                }
            }
            LogMatrix::Outer { row, col } => LogMatrix::Outer {
                row: row.iter().zip(row_add).map(|(a, b)| a + b + c).collect(),
                col: col.iter().zip(col_add).map(|(a, b)| a + b).collect(),
            },
        }
    }

    /// `log sum_j exp(w_ij)` for every row.
    pub fn row_log_sums(&self, exec: Execution) -> Vec<f64> {
        self.matvec(&vec![0.0; self.n()], exec)
    }

    /// Support graph as sorted successor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.n())
            .map(|i| {
                let mut s = Vec::new();
                self.for_each_in_row(i, |j, _| s.push(j));
                s
            })
            .collect()
    }

    /// Period of the support graph (assumed irreducible).
    pub fn period(&self) -> usize {
        match self {
            LogMatrix::Outer { .. } => 1,
            _ => graph::period(&self.adjacency()),
        }
    }

    pub fn is_irreducible(&self) -> bool {
        if let LogMatrix::Outer { .. } = self {
            return self.n() > 0;
        }
        let adj = self.adjacency();
        let comps = graph::tarjan_scc(&adj);
        comps.len() == 1 && graph::has_cycle(&adj, &comps[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;

    #[test]
    fn lse_basics() {
        assert_eq!(log_sum_exp([NEG, NEG]), NEG);
        assert!((log_sum_exp([0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp([-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([3.0, NEG]), 3.0);
    }

    #[test]
    fn representations_agree() {
        let row = vec![0.1, -0.7, 1.3];
        let col = vec![-0.2, 0.4, 0.0];
        let outer = LogMatrix::outer(row.clone(), col.clone());
        let mut w = Vec::new();
        let mut edges = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                w.push(row[i] + col[j]);
                edges.push((i, j, row[i] + col[j]));
            }
        }
        let dense = LogMatrix::dense(3, w);
        let sparse = LogMatrix::from_edges(3, edges);
        let x = vec![0.5, -1.0, 2.0];
        for m in [&dense, &sparse] {
            for (a, b) in m.matvec(&x, Execution::Sequential).iter().zip(outer.matvec(&x, Execution::Sequential)) {
                assert!((a - b).abs() < 1e-14);
            }
            for (a, b) in m.vecmat(&x, Execution::Sequential).iter().zip(outer.vecmat(&x, Execution::Sequential)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let r = outer.rescaled(&[1.0, 2.0, 3.0], &[0.0, 0.5, 0.0], -1.0);
        let s = sparse.rescaled(&[1.0, 2.0, 3.0], &[0.0, 0.5, 0.0], -1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.get(i, j) - s.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sparse_support() {
        let m = LogMatrix::from_edges(2, vec![(1, 0, -3.0), (0, 1, -1.0)]);
        assert_eq!(m.get(0, 0), NEG);
        assert_eq!(m.get(1, 0), -3.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.period(), 2);
        assert!(m.is_irreducible());
    }
}
