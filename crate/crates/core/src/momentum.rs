//! Full-information momentum dynamics with coordinated restarts.
//!
//! Each player holds `x_i = (q_i, p_i, tau_i)`. During flows
//!
//! ```text
//! qdot = 2 D(tau)^-1 (p - q),   pdot = -2 D(tau) G(q),   taudot = eta 1_n,
//! ```
//!
//! valid while `tau` is in `[T0, T]^n`. When `max_i tau_i = T`, one player
//! with a saturated timer resets `(p_i, tau_i)` per its policy `alpha_i` and
//! pulses its graph neighbors, whose timers snap to `T` or `T0` through the
//! set-valued coordination map. Cascades of such jumps synchronize all
//! timers in fixed time, after which the network restarts in lockstep.
//!
//! The module also provides the un-restarted baseline ODE (single shared
//! `tau`, no jumps) and the plain pseudogradient flow `qdot = -G(q)`, used
//! as negative and reference examples.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{HybridSystem, Perturbation};
use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::graph::Graph;

/// Membership tolerance for the jump set `max_i tau_i = T`; event
/// localization guarantees `max tau` lands in `[T - 1e-8, T + 1e-10]`.
pub const JUMP_SET_TOL: f64 = 1e-8;

/// Floor for the timer in the baseline ODE, whose flow divides by `tau`
/// while allowing `tau(0) = T0 = 0`.
pub const TAU_FLOOR: f64 = 1e-6;

/// Which player resets when several timers saturate simultaneously. Any
/// selection yields a solution of the set-valued jump map, which contains
/// all sequential orderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum JumpPolicy {
    LowestIndex,
    Random,
}

/// Tuning parameters `(eta, T0, T)`, per-player reset policies `alpha`,
/// coordination thresholds `r_j` and the jump selection policy.
#[derive(Debug, Clone)]
pub struct HmNssParams {
    pub n: usize,
    pub eta: f64,
    pub t0: f64,
    pub t: f64,
    /// `alpha_i = true` keeps `p_i` across resets; `false` resets `p_i = q_i`.
    pub alpha: Vec<bool>,
    /// Coordination thresholds, each strictly inside `(0, (T - T0)/n)`.
    pub r: Vec<f64>,
    pub coordination: bool,
    pub policy: JumpPolicy,
}

impl HmNssParams {
    /// Defaults: `alpha = 0` (momentum reset), `r_j = (T - T0)/(2n)`,
    /// coordination on, lowest-index selection.
    pub fn new(n: usize, eta: f64, t0: f64, t: f64) -> Result<Self> {
        let r = vec![(t - t0) / (2.0 * n as f64); n];
        HmNssParams {
            n,
            eta,
            t0,
            t,
            alpha: vec![false; n],
            r,
            coordination: true,
            policy: JumpPolicy::LowestIndex,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.t > self.t0 && self.t0 > 0.0) {
            return Err(Error::domain(format!(
                "timer range must satisfy T > T0 > 0 (got T = {}, T0 = {})",
                self.t, self.t0
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(Error::domain(format!(
                "eta must lie in (0, 1/2], got {}",
                self.eta
            )));
        }
        if self.alpha.len() != self.n || self.r.len() != self.n {
            return Err(Error::domain("alpha and r must have one entry per player"));
        }
        let r_max = (self.t - self.t0) / self.n as f64;
        for (j, &rj) in self.r.iter().enumerate() {
            if !(rj > 0.0 && rj < r_max) {
                return Err(Error::domain(format!(
                    "r[{j}] = {rj} outside (0, (T - T0)/n) = (0, {r_max})"
                )));
            }
        }
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: Vec<bool>) -> Result<Self> {
        self.alpha = alpha;
        self.validated()
    }

    pub fn with_policy(mut self, policy: JumpPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn uncoordinated(mut self) -> Self {
        self.coordination = false;
        self
    }

    pub fn alpha_min(&self) -> f64 {
        if self.alpha.iter().all(|&a| a) {
            1.0
        } else {
            0.0
        }
    }

    /// Length `(T - T0)/eta` of a synchronized flow interval.
    pub fn flow_interval(&self) -> f64 {
        (self.t - self.t0) / self.eta
    }

    /// Fixed-time synchronization horizon `T* = (T - T0)/eta + n`: all
    /// recorded `(t, j)` with `t + j >= T*` have timers in the sync set.
    pub fn t_star(&self) -> f64 {
        self.flow_interval() + self.n as f64
    }

    /// Default integrator step `1e-3 (T - T0)/eta`.
    pub fn default_step(&self) -> f64 {
        1e-3 * self.flow_interval()
    }

    pub fn sigma_r(&self) -> f64 {
        self.t / self.t0
    }
}

/// State layout for the momentum family: `q = x[0..n]`, `p = x[n..2n]`,
/// `tau = x[2n..3n]`, then optionally `mu` (2n oscillator entries) and
/// `qhat` (n^2 - n estimates).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n: usize,
    pub has_mu: bool,
    pub has_qhat: bool,
}

impl StateLayout {
    pub fn h1(n: usize) -> Self {
        StateLayout {
            n,
            has_mu: false,
            has_qhat: false,
        }
    }
    pub fn h2(n: usize) -> Self {
        StateLayout {
            n,
            has_mu: false,
            has_qhat: true,
        }
    }
    pub fn h3(n: usize) -> Self {
        StateLayout {
            n,
            has_mu: true,
            has_qhat: false,
        }
    }
    pub fn h4(n: usize) -> Self {
        StateLayout {
            n,
            has_mu: true,
            has_qhat: true,
        }
    }

    pub fn dim(&self) -> usize {
        let mut d = 3 * self.n;
        if self.has_mu {
            d += 2 * self.n;
        }
        if self.has_qhat {
            d += self.n * self.n - self.n;
        }
        d
    }

    pub fn q_range(&self) -> std::ops::Range<usize> {
        0..self.n
    }
    pub fn p_range(&self) -> std::ops::Range<usize> {
        self.n..2 * self.n
    }
    pub fn tau_range(&self) -> std::ops::Range<usize> {
        2 * self.n..3 * self.n
    }
    pub fn mu_range(&self) -> std::ops::Range<usize> {
        debug_assert!(self.has_mu);
        3 * self.n..5 * self.n
    }
    pub fn qhat_range(&self) -> std::ops::Range<usize> {
        debug_assert!(self.has_qhat);
        let base = if self.has_mu { 5 * self.n } else { 3 * self.n };
        base..base + self.n * self.n - self.n
    }

    pub fn q<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.q_range()]
    }
    pub fn p<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.p_range()]
    }
    pub fn tau<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.tau_range()]
    }
    pub fn mu<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.mu_range()]
    }
    pub fn qhat<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.qhat_range()]
    }

    /// Indices of the `(q, p, tau)` sub-state, shared by all variants.
    pub fn base_dims(&self) -> Vec<usize> {
        (0..3 * self.n).collect()
    }
}

/// Signed distance of the timers to the jump set: `max_i tau_i - T`.
pub fn event_value(tau: &[f64], t: f64) -> f64 {
    tau.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t
}

/// Per-player reset `R_i`: `q_i` unchanged, `p_i <- alpha_i p_i +
/// (1 - alpha_i) q_i`, `tau_i <- T0` exactly.
pub fn reset_player(params: &HmNssParams, x: &mut DVector<f64>, i: usize) {
    let n = params.n;
    if !params.alpha[i] {
        x[n + i] = x[i];
    }
    x[2 * n + i] = params.t0;
}

/// The set-valued coordination target for a pulsed neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinationTarget {
    /// `tau_j in (T0 + r_j, T]`: snap up to `T`.
    Up,
    /// `tau_j = T0 + r_j` (within the event tolerance): both endpoints.
    Tie,
    /// `tau_j in [T0, T0 + r_j)`: snap down to `T0`.
    Down,
}

/// Evaluates the coordination map for player `j`'s timer value.
pub fn coordination_map(params: &HmNssParams, tau_j: f64, j: usize) -> Result<CoordinationTarget> {
    let (t0, t) = (params.t0, params.t);
    if tau_j < t0 - 1e-9 || tau_j > t + 1e-9 {
        return Err(Error::domain(format!(
            "coordination map: tau_{j} = {tau_j} outside [T0, T]"
        )));
    }
    let threshold = t0 + params.r[j];
    if (tau_j - threshold).abs() <= crate::engine::TOL_EVENT {
        Ok(CoordinationTarget::Tie)
    } else if tau_j > threshold {
        Ok(CoordinationTarget::Up)
    } else {
        Ok(CoordinationTarget::Down)
    }
}

/// One selection of the jump map: resets `resetter` and, when coordination
/// is enabled, pulses its graph neighbors through the coordination map.
/// Ties resolve to `T` unless `tie_to_t0` is set.
pub fn jump_with_resetter(
    params: &HmNssParams,
    graph: &Graph,
    x: &DVector<f64>,
    resetter: usize,
    tie_to_t0: bool,
) -> Result<(DVector<f64>, String)> {
    let n = params.n;
    let tau_r = x[2 * n + resetter];
    if tau_r < params.t - JUMP_SET_TOL {
        return Err(Error::precondition(format!(
            "jump map: tau_{resetter} = {tau_r} below T - {JUMP_SET_TOL:.0e}"
        )));
    }
    let mut out = x.clone();
    reset_player(params, &mut out, resetter);
    let mut up = Vec::new();
    let mut down = Vec::new();
    if params.coordination {
        for &j in graph.neighbors(resetter) {
            match coordination_map(params, x[2 * n + j], j)? {
                CoordinationTarget::Up => {
                    out[2 * n + j] = params.t;
                    up.push(j);
                }
                CoordinationTarget::Down => {
                    out[2 * n + j] = params.t0;
                    down.push(j);
                }
                CoordinationTarget::Tie => {
                    if tie_to_t0 {
                        out[2 * n + j] = params.t0;
                        down.push(j);
                    } else {
                        out[2 * n + j] = params.t;
                        up.push(j);
                    }
                }
            }
        }
    }
    let branch = format!("reset:{resetter} up:{up:?} down:{down:?}");
    Ok((out, branch))
}

/// Selects the resetting player among saturated timers per the policy and
/// applies [`jump_with_resetter`].
pub fn jump_map_g1(
    params: &HmNssParams,
    graph: &Graph,
    x: &DVector<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(DVector<f64>, usize, String)> {
    let n = params.n;
    let tau = &x.as_slice()[2 * n..3 * n];
    let candidates: Vec<usize> = (0..n)
        .filter(|&i| tau[i] >= params.t - JUMP_SET_TOL)
        .collect();
    if candidates.is_empty() {
        return Err(Error::precondition("jump map called with max tau below T"));
    }
    let resetter = match params.policy {
        JumpPolicy::LowestIndex => candidates[0],
        JumpPolicy::Random => candidates[rng.gen_range(0..candidates.len())],
    };
    let tie_to_t0 = match params.policy {
        JumpPolicy::LowestIndex => false,
        JumpPolicy::Random => rng.gen::<bool>(),
    };
    let (out, branch) = jump_with_resetter(params, graph, x, resetter, tie_to_t0)?;
    Ok((out, resetter, branch))
}

struct FlowScratch {
    grad: DVector<f64>,
    pert: DVector<f64>,
    shifted: DVector<f64>,
}

impl FlowScratch {
    fn new(n: usize) -> Self {
        FlowScratch {
            grad: DVector::zeros(n),
            pert: DVector::zeros(n),
            shifted: DVector::zeros(n),
        }
    }
}

/// Evaluates the (possibly perturbed) pseudogradient `G(q + e(t)) + e(t)`
/// into `grad`, using the scratch buffers for the shift.
fn perturbed_gradient(
    game: &GameSpec,
    perturbation: &Perturbation,
    t: f64,
    q: &[f64],
    s: &mut FlowScratch,
) -> Result<()> {
    match perturbation {
        Perturbation::None => game.pseudogradient_into(q, &mut s.grad),
        _ => {
            perturbation.eval_into(t, s.pert.as_mut_slice());
            for i in 0..q.len() {
                s.shifted[i] = q[i] + s.pert[i];
            }
            let FlowScratch {
                grad,
                shifted,
                pert,
            } = s;
            game.pseudogradient_into(shifted.as_slice(), grad)?;
            *grad += &*pert;
            Ok(())
        }
    }
}

/// The full-information hybrid system.
pub struct H1System {
    pub game: Arc<GameSpec>,
    pub graph: Graph,
    pub params: HmNssParams,
    pub perturbation: Perturbation,
    scratch: RefCell<FlowScratch>,
}

impl H1System {
    pub fn new(game: Arc<GameSpec>, graph: Graph, params: HmNssParams) -> Result<Self> {
        if graph.n() != params.n || game.n != params.n {
            return Err(Error::domain("H1: game, graph and params disagree on n"));
        }
        let n = params.n;
        Ok(H1System {
            game,
            graph,
            params,
            perturbation: Perturbation::None,
            scratch: RefCell::new(FlowScratch::new(n)),
        })
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.perturbation = p;
        self
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::h1(self.params.n)
    }

    /// Initial state with `p(0) = q(0)` and `tau(0) = T0 1` unless given.
    pub fn initial(&self, q0: &[f64], p0: Option<&[f64]>, tau0: Option<&[f64]>) -> DVector<f64> {
        build_initial(self.layout(), &self.params, q0, p0, tau0, None, None)
    }
}

pub(crate) fn build_initial(
    layout: StateLayout,
    params: &HmNssParams,
    q0: &[f64],
    p0: Option<&[f64]>,
    tau0: Option<&[f64]>,
    mu0: Option<&[f64]>,
    qhat0: Option<&[f64]>,
) -> DVector<f64> {
    let n = params.n;
    let mut x = DVector::zeros(layout.dim());
    x.as_mut_slice()[..n].copy_from_slice(q0);
    match p0 {
        Some(p) => x.as_mut_slice()[n..2 * n].copy_from_slice(p),
        None => {
            let q = q0.to_vec();
            x.as_mut_slice()[n..2 * n].copy_from_slice(&q);
        }
    }
    match tau0 {
        Some(tv) => x.as_mut_slice()[2 * n..3 * n].copy_from_slice(tv),
        None => x.as_mut_slice()[2 * n..3 * n].fill(params.t0),
    }
    if layout.has_mu {
        let r = layout.mu_range();
        match mu0 {
            Some(m) => x.as_mut_slice()[r].copy_from_slice(m),
            None => {
                // mu_i(0) = (0, 1) on the unit circle.
                for i in 0..n {
                    x[3 * n + 2 * i] = 0.0;
                    x[3 * n + 2 * i + 1] = 1.0;
                }
            }
        }
    }
    if layout.has_qhat {
        let r = layout.qhat_range();
        match qhat0 {
            Some(qh) => x.as_mut_slice()[r].copy_from_slice(qh),
            None => {
                // Each player seeds every estimate with its own action.
                let start = r.start;
                let mut k = 0;
                for i in 0..n {
                    for j in 0..n {
                        if j != i {
                            x[start + k] = q0[i];
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn tau_in_flow_set(tau: &[f64], t0: f64, t: f64) -> bool {
    tau.iter().all(|&v| v >= t0 - 1e-9 && v <= t + 1e-9)
}

impl HybridSystem for H1System {
    fn dim(&self) -> usize {
        3 * self.params.n
    }

    fn flow(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        let n = self.params.n;
        let xs = x.as_slice();
        let (q, rest) = xs.split_at(n);
        let (p, tau) = rest.split_at(n);
        let mut s = self.scratch.borrow_mut();
        perturbed_gradient(&self.game, &self.perturbation, t, q, &mut s)?;
        for i in 0..n {
            if tau[i] <= 0.0 {
                return Err(Error::domain(format!("flow: tau_{i} = {} <= 0", tau[i])));
            }
            out[i] = 2.0 / tau[i] * (p[i] - q[i]);
            out[n + i] = -2.0 * tau[i] * s.grad[i];
            out[2 * n + i] = self.params.eta;
        }
        Ok(())
    }

    fn in_flow_set(&self, x: &DVector<f64>) -> bool {
        let n = self.params.n;
        tau_in_flow_set(&x.as_slice()[2 * n..3 * n], self.params.t0, self.params.t)
    }

    fn in_jump_set(&self, x: &DVector<f64>) -> bool {
        self.event_value(x) >= -JUMP_SET_TOL
    }

    fn event_value(&self, x: &DVector<f64>) -> f64 {
        let n = self.params.n;
        event_value(&x.as_slice()[2 * n..3 * n], self.params.t)
    }

    fn jump(
        &self,
        x: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, Option<usize>, String)> {
        let (out, player, branch) = jump_map_g1(&self.params, &self.graph, x, rng)?;
        Ok((out, Some(player), branch))
    }

    fn cascade_guard(&self) -> usize {
        10 * self.params.n
    }
}

/// The un-restarted baseline ODE with a single shared momentum coefficient:
/// state `(q, p, tau)` of dimension `2n + 1`, empty jump set.
pub struct BaselineOde {
    pub game: Arc<GameSpec>,
    pub eta: f64,
    pub perturbation: Perturbation,
    scratch: RefCell<FlowScratch>,
}

impl BaselineOde {
    pub fn new(game: Arc<GameSpec>, eta: f64) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::domain("baseline: eta must be positive"));
        }
        let n = game.n;
        Ok(BaselineOde {
            game,
            eta,
            perturbation: Perturbation::None,
            scratch: RefCell::new(FlowScratch::new(n)),
        })
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.perturbation = p;
        self
    }

    /// Initial state; `tau(0)` is floored at [`TAU_FLOOR`] since the flow
    /// divides by `tau` while `T0 = 0` is admissible.
    pub fn initial(&self, q0: &[f64], p0: Option<&[f64]>, tau0: f64) -> DVector<f64> {
        let n = self.game.n;
        let mut x = DVector::zeros(2 * n + 1);
        x.as_mut_slice()[..n].copy_from_slice(q0);
        x.as_mut_slice()[n..2 * n].copy_from_slice(p0.unwrap_or(q0));
        x[2 * n] = tau0.max(TAU_FLOOR);
        x
    }
}

impl HybridSystem for BaselineOde {
    fn dim(&self) -> usize {
        2 * self.game.n + 1
    }

    fn flow(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        let n = self.game.n;
        let xs = x.as_slice();
        let (q, rest) = xs.split_at(n);
        let (p, tau) = rest.split_at(n);
        let tau = tau[0].max(TAU_FLOOR);
        let mut s = self.scratch.borrow_mut();
        perturbed_gradient(&self.game, &self.perturbation, t, q, &mut s)?;
        for i in 0..n {
            out[i] = 2.0 / tau * (p[i] - q[i]);
            out[n + i] = -2.0 * tau * s.grad[i];
        }
        out[2 * n] = self.eta;
        Ok(())
    }

    fn in_flow_set(&self, _x: &DVector<f64>) -> bool {
        true
    }
    fn in_jump_set(&self, _x: &DVector<f64>) -> bool {
        false
    }
    fn event_value(&self, _x: &DVector<f64>) -> f64 {
        f64::NEG_INFINITY
    }
    fn jump(
        &self,
        _x: &DVector<f64>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, Option<usize>, String)> {
        Err(Error::precondition("baseline ODE has no jumps"))
    }
}

/// Plain pseudogradient flow `qdot = -G(q)` (the classical reference).
pub struct PsgFlow {
    pub game: Arc<GameSpec>,
    pub perturbation: Perturbation,
    scratch: RefCell<FlowScratch>,
}

impl PsgFlow {
    pub fn new(game: Arc<GameSpec>) -> Self {
        let n = game.n;
        PsgFlow {
            game,
            perturbation: Perturbation::None,
            scratch: RefCell::new(FlowScratch::new(n)),
        }
    }
}

impl HybridSystem for PsgFlow {
    fn dim(&self) -> usize {
        self.game.n
    }

    fn flow(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
        let mut s = self.scratch.borrow_mut();
        perturbed_gradient(&self.game, &self.perturbation, t, x.as_slice(), &mut s)?;
        for i in 0..self.game.n {
            out[i] = -s.grad[i];
        }
        Ok(())
    }

    fn in_flow_set(&self, _x: &DVector<f64>) -> bool {
        true
    }
    fn in_jump_set(&self, _x: &DVector<f64>) -> bool {
        false
    }
    fn event_value(&self, _x: &DVector<f64>) -> f64 {
        f64::NEG_INFINITY
    }
    fn jump(
        &self,
        _x: &DVector<f64>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, Option<usize>, String)> {
        Err(Error::precondition("pseudogradient flow has no jumps"))
    }
}

/// Distance of a timer vector to the synchronization set
/// `{T0, T}^n union 1_n [T0, T]` (endpoint configurations or all-equal).
pub fn sync_distance(tau: &[f64], t0: f64, t: f64) -> f64 {
    let corner: f64 = tau
        .iter()
        .map(|&v| {
            let d = (v - t0).abs().min((v - t).abs());
            d * d
        })
        .sum::<f64>()
        .sqrt();
    let mean = tau.iter().sum::<f64>() / tau.len() as f64;
    let a = mean.clamp(t0, t);
    let diag: f64 = tau.iter().map(|&v| (v - a) * (v - a)).sum::<f64>().sqrt();
    corner.min(diag)
}

/// Exhaustive post-cascade states over every sequential ordering of
/// simultaneous saturated-timer resets (test oracle; limited to `n <= 4`).
pub fn enumerate_cascade_outcomes(
    params: &HmNssParams,
    graph: &Graph,
    x0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    if params.n > 4 {
        return Err(Error::precondition(
            "cascade enumeration supported only for n <= 4",
        ));
    }
    let mut terminal: Vec<DVector<f64>> = Vec::new();
    let mut stack = vec![(x0.clone(), 0usize)];
    while let Some((x, depth)) = stack.pop() {
        if depth > 10 * params.n {
            return Err(Error::numerical(
                "cascade enumeration exceeded the Zeno guard",
            ));
        }
        let tau = &x.as_slice()[2 * params.n..3 * params.n];
        let candidates: Vec<usize> = (0..params.n)
            .filter(|&i| tau[i] >= params.t - JUMP_SET_TOL)
            .collect();
        if candidates.is_empty() {
            if !terminal.iter().any(|y| (y - &x).amax() < 1e-12) {
                terminal.push(x);
            }
            continue;
        }
        for i in candidates {
            let (next, _) = jump_with_resetter(params, graph, &x, i, false)?;
            stack.push((next, depth + 1));
        }
    }
    Ok(terminal)
}
