//! Communication graphs, Laplacian spectra and the selection matrices used
//! by the estimation dynamics.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Undirected, connected, time-invariant communication graph on players
/// `0..n` (no self-loops). Construction rejects disconnected graphs.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::Graph("graph needs at least two nodes".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        let mut canon: Vec<(usize, usize)> = Vec::new();
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Graph(format!(
                    "edge ({i},{j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(Error::Graph(format!("self-loop at node {i}")));
            }
            let e = (i.min(j), i.max(j));
            if canon.contains(&e) {
                continue;
            }
            canon.push(e);
            neighbors[e.0].push(e.1);
            neighbors[e.1].push(e.0);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        let g = Graph {
            n,
            edges: canon,
            neighbors,
        };
        if !g.is_connected() {
            return Err(Error::Graph("graph is disconnected".into()));
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut e = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                e.push((i, j));
            }
        }
        Graph::new(n, &e)
    }

    pub fn ring(n: usize) -> Result<Self> {
        let e: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::new(n, &e)
    }

    pub fn path(n: usize) -> Result<Self> {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::new(n, &e)
    }

    /// Erdos-Renyi G(n, p) with rejection resampling until connected.
    pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Graph("edge probability must be in [0, 1]".into()));
        }
        for _ in 0..10_000 {
            let mut e = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.gen::<f64>() < p {
                        e.push((i, j));
                    }
                }
            }
            if let Ok(g) = Graph::new(n, &e) {
                return Ok(g);
            }
        }
        Err(Error::Graph(
            "erdos_renyi: no connected sample found (p too small?)".into(),
        ))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    /// Laplacian `L = D - Adj`: symmetric with zero row sums.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as f64;
        }
        for &(i, j) in &self.edges {
            l[(i, j)] = -1.0;
            l[(j, i)] = -1.0;
        }
        l
    }

    /// Smallest positive and largest Laplacian eigenvalues, and their ratio
    /// `sigma_L = lambda_max / lambda_2`.
    pub fn spectrum(&self) -> Result<SpectrumSummary> {
        let eig = self.laplacian().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lambda2 = ev[1];
        let lambda_max = *ev.last().unwrap();
        if lambda2 <= 1e-10 {
            return Err(Error::Graph(
                "spectrum: lambda_2 ~ 0 (graph disconnected)".into(),
            ));
        }
        Ok(SpectrumSummary {
            lambda2,
            lambda_max,
            sigma_l: lambda_max / lambda2,
        })
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SpectrumSummary {
    pub lambda2: f64,
    pub lambda_max: f64,
    pub sigma_l: f64,
}

/// Per-player selection matrices for the stacked estimate vector
/// `e = (e^1, ..., e^n)` of length `n^2`:
///
/// * `P_i` (1 x n) selects player i's own entry of `e^i`,
/// * `Q_i` ((n-1) x n) deletes it,
/// * `P = diag(P_i)`, `Q = diag(Q_i)` act blockwise on `e`,
///
/// with `P P^T = I_n`, `Q Q^T = I_{n^2-n}` and `P Q^T = 0` exactly.
/// The stacked estimate is reconstructed as `psi(q, qhat) = P^T q + Q^T qhat`.
#[derive(Debug, Clone)]
pub struct SelectionMatrices {
    pub n: usize,
}

impl SelectionMatrices {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("selection matrices need n >= 2"));
        }
        Ok(SelectionMatrices { n })
    }

    pub fn p_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut p = DMatrix::zeros(n, n * n);
        for i in 0..n {
            p[(i, i * n + i)] = 1.0;
        }
        p
    }

    pub fn q_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut q = DMatrix::zeros(n * n - n, n * n);
        let mut row = 0;
        for i in 0..n {
            for j in 0..n {
                if j != i {
                    q[(row, i * n + j)] = 1.0;
                    row += 1;
                }
            }
        }
        q
    }

    /// Dense communication matrix `L_big = Laplacian kron I_n`.
    pub fn l_big_dense(&self, g: &Graph) -> DMatrix<f64> {
        let n = self.n;
        let l = g.laplacian();
        let mut out = DMatrix::zeros(n * n, n * n);
        for bi in 0..n {
            for bj in 0..n {
                let v = l[(bi, bj)];
                if v != 0.0 {
                    for k in 0..n {
                        out[(bi * n + k, bj * n + k)] = v;
                    }
                }
            }
        }
        out
    }

    /// `psi(q, qhat) = P^T q + Q^T qhat`: block i holds player i's estimate
    /// of the full action vector, with its own action in slot i exactly.
    pub fn psi(&self, q: &[f64], q_hat: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.n * self.n);
        self.psi_into(q, q_hat, &mut out)?;
        Ok(out)
    }

    pub fn psi_into(&self, q: &[f64], q_hat: &[f64], out: &mut DVector<f64>) -> Result<()> {
        let n = self.n;
        if q.len() != n || q_hat.len() != n * n - n || out.len() != n * n {
            return Err(Error::domain("psi: dimension mismatch"));
        }
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = if j == i {
                    q[i]
                } else {
                    let v = q_hat[k];
                    k += 1;
                    v
                };
            }
        }
        // q_hat blocks are stored player-major, own entry deleted, so the
        // interleave above consumes them in order.
        debug_assert_eq!(k, n * n - n);
        Ok(())
    }

    /// `P e`: own entries of each block.
    pub fn apply_p(&self, e: &DVector<f64>, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = e[i * n + i];
        }
    }

    /// `Q e`: blocks with own entries deleted.
    pub fn apply_q(&self, e: &DVector<f64>, out: &mut [f64]) {
        let n = self.n;
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                if j != i {
                    out[k] = e[i * n + j];
                    k += 1;
                }
            }
        }
    }

    /// `h(q) = Q (1_n kron q)`: the consensus target for the estimates.
    pub fn consensus_target(&self, q: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                if j != i {
                    out[k] = q[j];
                    k += 1;
                }
            }
        }
    }

    /// `(Laplacian kron I_n) e`, computed blockwise from the adjacency so the
    /// hot path avoids the dense `n^2 x n^2` product:
    /// block i of the result is `deg(i) e^i - sum_{j in N(i)} e^j`.
    pub fn apply_comm(&self, g: &Graph, e: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.n;
        debug_assert_eq!(e.len(), n * n);
        debug_assert_eq!(out.len(), n * n);
        for i in 0..n {
            let deg = g.degree(i) as f64;
            for k in 0..n {
                out[i * n + k] = deg * e[i * n + k];
            }
            for &j in g.neighbors(i) {
                for k in 0..n {
                    out[i * n + k] -= e[j * n + k];
                }
            }
        }
    }
}
