//! Partial-information dynamics with consensus-based action estimation.
//!
//! Each player augments its momentum state with estimates of the other
//! players' actions, stacked as `qhat` of length `n^2 - n`. With
//! `psi(q, qhat) = P^T q + Q^T qhat` and the communication matrix
//! `L_big = Laplacian kron I_n`, the flows are
//!
//! ```text
//! qdot    = 2 D(tau)^-1 (p - q) - P L_big psi(q, qhat)
//! pdot    = -2 D(tau) Ghat(psi(q, qhat))
//! taudot  = eta 1_n
//! qhatdot = -(1/eps) Q L_big psi(q, qhat)
//! ```
//!
//! where `Ghat` evaluates each player's own partial at that player's
//! estimate block (`Ghat(1 kron q) = G(q)`), and the high gain `1/eps`
//! separates the consensus time scale from the game dynamics. Jumps act on
//! `(q, p, tau)` exactly as in the full-information system and leave `qhat`
//! unchanged.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;

use crate::engine::{HybridSystem, Perturbation};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::graph::{Graph, SelectionMatrices};
use crate::momentum::{self, HmNssParams, StateLayout, JUMP_SET_TOL};

struct H2Scratch {
    stacked: DVector<f64>,
    comm: DVector<f64>,
    pert: Vec<f64>,
}

/// The estimation-augmented hybrid system.
pub struct H2System {
    pub game: Arc<GameSpec>,
    pub graph: Graph,
    pub sel: SelectionMatrices,
    pub params: HmNssParams,
    /// Consensus gain reciprocal; the estimate flow carries `1/epsilon`.
    pub epsilon: f64,
    pub perturbation: Perturbation,
    scratch: RefCell<H2Scratch>,
}

impl H2System {
    pub fn new(
        game: Arc<GameSpec>,
        graph: Graph,
        params: HmNssParams,
        epsilon: f64,
    ) -> Result<Self> {
        if graph.n() != params.n || game.n != params.n {
            return Err(Error::domain("H2: game, graph and params disagree on n"));
        }
        if epsilon <= 0.0 {
            return Err(Error::domain("H2: epsilon must be positive"));
        }
        let n = params.n;
        Ok(H2System {
            game,
            graph,
            sel: SelectionMatrices::new(n)?,
            params,
            epsilon,
            perturbation: Perturbation::None,
            scratch: RefCell::new(H2Scratch {
                stacked: DVector::zeros(n * n),
                comm: DVector::zeros(n * n),
                pert: vec![0.0; n],
            }),
        })
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.perturbation = p;
        self
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::h2(self.params.n)
    }

    /// Initial state; estimates default to each player's own action
    /// replicated (an agnostic prior).
    pub fn initial(
        &self,
        q0: &[f64],
        p0: Option<&[f64]>,
        tau0: Option<&[f64]>,
        qhat0: Option<&[f64]>,
    ) -> DVector<f64> {
        momentum::build_initial(self.layout(), &self.params, q0, p0, tau0, None, qhat0)
    }

    /// Recommended flow step `min(h, eps/10)`, resolving the fast consensus
    /// mode within the explicit integrator's stability range.
    pub fn stiff_step(&self, h: f64) -> f64 {
        h.min(self.epsilon / 10.0)
    }
}

/// Consensus error `|theta| = |qhat - Q (1_n kron q)|`.
pub fn consensus_error(sel: &SelectionMatrices, q: &[f64], q_hat: &[f64]) -> f64 {
    let mut target = vec![0.0; q_hat.len()];
    sel.consensus_target(q, &mut target);
    q_hat
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

impl HybridSystem for H2System {
    fn dim(&self) -> usize {
        self.layout().dim()
    }

    fn flow(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        let n = self.params.n;
        let layout = self.layout();
        let xs = x.as_slice();
        let q = layout.q(xs);
        let p = layout.p(xs);
        let tau = layout.tau(xs);
        let q_hat = layout.qhat(xs);
        let s = &mut *self.scratch.borrow_mut();
        self.sel.psi_into(q, q_hat, &mut s.stacked)?;
        self.sel.apply_comm(&self.graph, &s.stacked, &mut s.comm);
        let perturbed = !matches!(self.perturbation, Perturbation::None);
        if perturbed {
            self.perturbation.eval_into(t, &mut s.pert);
        }
        for i in 0..n {
            if tau[i] <= 0.0 {
                return Err(Error::domain(format!("flow: tau_{i} = {} <= 0", tau[i])));
            }
            // Own-entry of block i of L_big psi is the P-projection.
            out[i] = 2.0 / tau[i] * (p[i] - q[i]) - s.comm[i * n + i];
            let ghat_i = if perturbed {
                // Perturbed oracle: shift player i's estimate block.
                let block = &s.stacked.as_slice()[i * n..(i + 1) * n];
                let shifted: Vec<f64> = block.iter().zip(&s.pert).map(|(v, e)| v + e).collect();
                self.game.pseudogradient_component(i, &shifted)? + s.pert[i]
            } else {
                self.game
                    .pseudogradient_component(i, &s.stacked.as_slice()[i * n..(i + 1) * n])?
            };
            out[n + i] = -2.0 * tau[i] * ghat_i;
            out[2 * n + i] = self.params.eta;
        }
        // Q-projection of the communication term, scaled by the high gain.
        let mut k = 0;
        let base = layout.qhat_range().start;
        for i in 0..n {
            for j in 0..n {
                if j != i {
                    out[base + k] = -s.comm[i * n + j] / self.epsilon;
                    k += 1;
                }
            }
        }
        Ok(())
    }

    fn in_flow_set(&self, x: &DVector<f64>) -> bool {
        let n = self.params.n;
        momentum::tau_in_flow_set(&x.as_slice()[2 * n..3 * n], self.params.t0, self.params.t)
    }

    fn in_jump_set(&self, x: &DVector<f64>) -> bool {
        self.event_value(x) >= -JUMP_SET_TOL
    }

    fn event_value(&self, x: &DVector<f64>) -> f64 {
        let n = self.params.n;
        momentum::event_value(&x.as_slice()[2 * n..3 * n], self.params.t)
    }

    /// `G_2 = G_1 x {qhat}`: the base jumps, the estimates are untouched.
    fn jump(
        &self,
        x: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, Option<usize>, String)> {
        let n = self.params.n;
        let base = DVector::from_column_slice(&x.as_slice()[..3 * n]);
        let (jumped, player, branch) =
            momentum::jump_map_g1(&self.params, &self.graph, &base, rng)?;
        let mut out = x.clone();
        out.as_mut_slice()[..3 * n].copy_from_slice(jumped.as_slice());
        Ok((out, Some(player), branch))
    }

    fn cascade_guard(&self) -> usize {
        10 * self.params.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn game_n2() -> Arc<GameSpec> {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, -1.0, 3.0]);
        let b = DVector::from_column_slice(&[0.5, -0.25]);
        Arc::new(GameSpec::quadratic(a, b).unwrap())
    }

    fn params(n: usize) -> HmNssParams {
        HmNssParams::new(n, 0.5, 0.1, 1.1).unwrap()
    }

    #[test]
    fn consensus_error_examples() {
        let sel = SelectionMatrices::new(2).unwrap();
        // At consensus the error vanishes.
        let q = [1.0, 2.0];
        let mut target = vec![0.0; 2];
        sel.consensus_target(&q, &mut target);
        assert_eq!(consensus_error(&sel, &q, &target), 0.0);
        // q = 0, qhat = (3, 4): |theta| = 5.
        assert_eq!(consensus_error(&sel, &[0.0, 0.0], &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn consensus_error_shift_invariance() {
        // Shifting q by c and all estimates consistently leaves |theta| fixed.
        let sel = SelectionMatrices::new(3).unwrap();
        let q = [1.0, -2.0, 0.5];
        let qh = [4.0, 1.0, 0.0, 2.0, -1.0, 3.0];
        let c = 10.0;
        let q2: Vec<f64> = q.iter().map(|v| v + c).collect();
        let qh2: Vec<f64> = qh.iter().map(|v| v + c).collect();
        let e1 = consensus_error(&sel, &q, &qh);
        let e2 = consensus_error(&sel, &q2, &qh2);
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn flow_reduces_to_full_information_at_consensus() {
        let game = game_n2();
        let graph = Graph::complete(2).unwrap();
        let pr = params(2);
        let h2 = H2System::new(game.clone(), graph.clone(), pr.clone(), 0.37).unwrap();
        let h1 = momentum::H1System::new(game, graph, pr).unwrap();

        let q = [1.5, -0.5];
        let mut qh = vec![0.0; 2];
        h2.sel.consensus_target(&q, &mut qh);
        let x2 = h2.initial(&q, Some(&[2.0, 0.1]), Some(&[0.4, 0.9]), Some(&qh));
        let x1 = h1.initial(&q, Some(&[2.0, 0.1]), Some(&[0.4, 0.9]));

        let mut d2 = DVector::zeros(h2.dim());
        let mut d1 = DVector::zeros(h1.dim());
        h2.flow(0.0, &x2, &mut d2).unwrap();
        h1.flow(0.0, &x1, &mut d1).unwrap();
        for i in 0..6 {
            assert!((d2[i] - d1[i]).abs() < 1e-14, "component {i}");
        }
        // qhatdot = 0 at consensus.
        for i in 6..8 {
            assert!(d2[i].abs() < 1e-14);
        }
    }

    #[test]
    fn flow_matches_dense_matrix_oracle() {
        // One hand evaluation against the dense P, Q, L_big arithmetic.
        let game = game_n2();
        let graph = Graph::complete(2).unwrap();
        let pr = params(2);
        let eps = 1.0;
        let h2 = H2System::new(game.clone(), graph.clone(), pr, eps).unwrap();
        let q = DVector::from_column_slice(&[1.0, 2.0]);
        let p = DVector::from_column_slice(&[0.3, -0.6]);
        let tau = DVector::from_column_slice(&[1.0, 1.0]);
        let qh = DVector::from_column_slice(&[5.0, 7.0]);
        let x = h2.initial(
            q.as_slice(),
            Some(p.as_slice()),
            Some(tau.as_slice()),
            Some(qh.as_slice()),
        );
        let mut d = DVector::zeros(8);
        h2.flow(0.0, &x, &mut d).unwrap();

        let sel = SelectionMatrices::new(2).unwrap();
        let pm = sel.p_dense();
        let qm = sel.q_dense();
        let lb = sel.l_big_dense(&graph);
        let e = pm.transpose() * &q + qm.transpose() * &qh;
        assert_eq!(e.as_slice(), &[1.0, 5.0, 7.0, 2.0]);
        let le = &lb * &e;
        let qdot_ref = DVector::from_fn(2, |i, _| 2.0 / tau[i] * (p[i] - q[i])) - &pm * &le;
        let ghat = DVector::from_fn(2, |i, _| {
            game.pseudogradient_component(i, &e.as_slice()[i * 2..(i + 1) * 2])
                .unwrap()
        });
        let pdot_ref = DVector::from_fn(2, |i, _| -2.0 * tau[i] * ghat[i]);
        let qhdot_ref = -(&qm * &le) / eps;
        for i in 0..2 {
            assert!((d[i] - qdot_ref[i]).abs() < 1e-12);
            assert!((d[2 + i] - pdot_ref[i]).abs() < 1e-12);
            assert!((d[6 + i] - qhdot_ref[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn halving_epsilon_doubles_estimate_rate_only() {
        let game = game_n2();
        let graph = Graph::complete(2).unwrap();
        let x = {
            let h2 = H2System::new(game.clone(), graph.clone(), params(2), 1.0).unwrap();
            h2.initial(&[1.0, 2.0], None, None, Some(&[5.0, 7.0]))
        };
        let mut d1 = DVector::zeros(8);
        let mut d2 = DVector::zeros(8);
        H2System::new(game.clone(), graph.clone(), params(2), 1.0)
            .unwrap()
            .flow(0.0, &x, &mut d1)
            .unwrap();
        H2System::new(game, graph, params(2), 0.5)
            .unwrap()
            .flow(0.0, &x, &mut d2)
            .unwrap();
        for i in 0..6 {
            assert_eq!(d1[i], d2[i]);
        }
        for i in 6..8 {
            assert!((d2[i] - 2.0 * d1[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn jumps_leave_estimates_bitwise_unchanged() {
        let game = game_n2();
        let graph = Graph::complete(2).unwrap();
        let h2 = H2System::new(game, graph, params(2), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let qh: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let x = h2.initial(&[0.2, 0.4], None, Some(&[1.1, 0.6]), Some(&qh));
        let mut y = x.clone();
        let mut jumps = 0;
        while h2.in_jump_set(&y) {
            let (ny, _, _) = h2.jump(&y, &mut rng).unwrap();
            y = ny;
            jumps += 1;
            assert!(jumps <= 2);
        }
        for k in 0..2 {
            assert_eq!(x[6 + k].to_bits(), y[6 + k].to_bits());
        }
        // Post-cascade timers at T0.
        assert_eq!((y[4], y[5]), (0.1, 0.1));
    }
}
