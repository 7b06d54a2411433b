//! Generic hybrid-system simulator.
//!
//! A hybrid system `H = (C, F, D, G)` flows with `xdot = F(x)` while `x` is
//! in the flow set `C` and jumps with `x+ in G(x)` while in the jump set
//! `D`. Solutions are indexed by hybrid time `(t, j)`: `t` advances during
//! flows, `j` counts jumps. The simulator integrates flows with fixed-step
//! RK4, localizes jump-set entry by bisecting the last step on the system's
//! scalar event function, and resolves jumps sequentially (one selection of
//! the set-valued map per jump) until the jump set empties.
//!
//! Divergence and Zeno-guard trips are measured outcomes, recorded on the
//! arc, not errors.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Event-localization tolerance: the bisection stops once the event value
/// is within this distance of zero.
pub const TOL_EVENT: f64 = 1e-10;

/// Sup-norm threshold beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Hybrid time: continuous time `t` and jump count `j`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HybridTime {
    pub t: f64,
    pub j: u32,
}

/// One recorded state along an arc.
#[derive(Debug, Clone)]
pub struct Sample {
    pub time: HybridTime,
    pub x: DVector<f64>,
}

/// One resolved jump: the hybrid time *before* the jump, the player whose
/// reset triggered it (when the system reports one) and the branch of the
/// set-valued jump map that was selected.
#[derive(Debug, Clone)]
pub struct JumpEvent {
    pub t: f64,
    pub j_before: u32,
    pub player: Option<usize>,
    pub branch: String,
}

/// Run-level outcomes.
#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct Annotations {
    pub diverged: bool,
    pub zeno_tripped: bool,
    /// Largest invariant drift corrected by `HybridSystem::project`.
    pub projection_drift_max: f64,
}

/// A recorded hybrid arc: samples ordered lexicographically in `(t, j)`,
/// plus jump records and run annotations.
#[derive(Debug, Clone, Default)]
pub struct HybridArc {
    pub samples: Vec<Sample>,
    pub events: Vec<JumpEvent>,
    pub annotations: Annotations,
}

impl HybridArc {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Checks hybrid-time-domain well-formedness: `(t, j)` lexicographically
    /// monotone, `t` strictly increasing at fixed `j`, and every jump record
    /// incrementing `j` by one at unchanged `t`.
    pub fn validate_domain(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            let (a, b) = (w[0].time, w[1].time);
            if b.t < a.t || b.j < a.j {
                return Err(Error::numerical(format!(
                    "arc domain not monotone: ({}, {}) -> ({}, {})",
                    a.t, a.j, b.t, b.j
                )));
            }
            if b.j == a.j && !(b.t > a.t) {
                return Err(Error::numerical(format!(
                    "flow samples must advance t: ({}, {}) -> ({}, {})",
                    a.t, a.j, b.t, b.j
                )));
            }
            if b.j > a.j && (b.j - a.j != 1 || b.t != a.t) {
                return Err(Error::numerical(format!(
                    "jump must increment j once at fixed t: ({}, {}) -> ({}, {})",
                    a.t, a.j, b.t, b.j
                )));
            }
        }
        Ok(())
    }

    /// Maximal cascades: runs of consecutive jumps at a single `t`, returned
    /// as `(t, j_first_before, length)`.
    pub fn cascades(&self) -> Vec<(f64, u32, usize)> {
        let mut out: Vec<(f64, u32, usize)> = Vec::new();
        for ev in &self.events {
            match out.last_mut() {
                Some((t, j0, len)) if *t == ev.t && ev.j_before == *j0 + *len as u32 => *len += 1,
                _ => out.push((ev.t, ev.j_before, 1)),
            }
        }
        out
    }
}

/// The data of a hybrid system, plus simulation hooks.
///
/// `event_value` is the signed distance to the jump-set boundary used by the
/// bisection (zero exactly on the boundary, negative in the interior of the
/// flow set). `project` may re-impose algebraic invariants after each
/// integrator step and returns the drift it corrected.
pub trait HybridSystem {
    fn dim(&self) -> usize;
    fn flow(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()>;
    fn in_flow_set(&self, x: &DVector<f64>) -> bool;
    fn in_jump_set(&self, x: &DVector<f64>) -> bool;
    fn event_value(&self, x: &DVector<f64>) -> f64;
    fn jump(
        &self,
        x: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(DVector<f64>, Option<usize>, String)>;
    fn project(&self, _x: &mut DVector<f64>) -> f64 {
        0.0
    }
    /// Cascade-length guard; the theory for the reset dynamics bounds
    /// cascades by the player count, so `10 n` catches implementation bugs.
    fn cascade_guard(&self) -> usize {
        10 * self.dim()
    }
}

/// Bounded additive perturbation `e(t)` entering the perturbed hybrid
/// system form `xdot = F(x + e) + e`, applied by the momentum flow maps to
/// the pseudogradient argument and output.
#[derive(Debug, Clone)]
pub enum Perturbation {
    None,
    /// `e(t) = delta sin(omega t + phase) * 1/sqrt(n)`, so `|e(t)| <= delta`.
    Sinusoid {
        delta: f64,
        omega: f64,
        phase: f64,
    },
    /// Piecewise-constant seeded noise, resampled every `hold` seconds from
    /// the uniform cube and scaled so `|e(t)| <= delta`. Deterministic in
    /// `t`, so event bisection re-evaluates consistently.
    SeededNoise {
        delta: f64,
        seed: u64,
        hold: f64,
    },
}

impl Perturbation {
    pub fn amplitude(&self) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Sinusoid { delta, .. } | Perturbation::SeededNoise { delta, .. } => {
                *delta
            }
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        match self {
            Perturbation::None => out.fill(0.0),
            Perturbation::Sinusoid {
                delta,
                omega,
                phase,
            } => {
                let s = delta * (omega * t + phase).sin() / (n as f64).sqrt();
                out.fill(s);
            }
            Perturbation::SeededNoise { delta, seed, hold } => {
                let k = (t / hold).floor() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k.wrapping_mul(0x9E37)));
                let scale = delta / (n as f64).sqrt();
                for v in out.iter_mut() {
                    *v = scale * (2.0 * rand::Rng::gen::<f64>(&mut rng) - 1.0);
                }
            }
        }
    }
}

/// Simulation horizon in hybrid time.
#[derive(Debug, Clone, Copy)]
pub struct Horizon {
    pub t_max: f64,
    pub j_max: u32,
}

/// Fixed-step integrator and recording options.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// RK4 step.
    pub step: f64,
    /// Record every `record_stride`-th flow step (jump boundary states are
    /// always recorded).
    pub record_stride: usize,
    /// Seed for the per-run RNG consumed by random jump selections.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            step: 1e-3,
            record_stride: 10,
            seed: 0,
        }
    }
}

struct Rk4Scratch {
    k1: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl Rk4Scratch {
    fn new(dim: usize) -> Self {
        Rk4Scratch {
            k1: DVector::zeros(dim),
            k2: DVector::zeros(dim),
            k3: DVector::zeros(dim),
            k4: DVector::zeros(dim),
            tmp: DVector::zeros(dim),
        }
    }
}

fn rk4_step(
    sys: &dyn HybridSystem,
    t: f64,
    x: &DVector<f64>,
    h: f64,
    s: &mut Rk4Scratch,
    out: &mut DVector<f64>,
) -> Result<()> {
    sys.flow(t, x, &mut s.k1)?;
    s.tmp.copy_from(x);
    s.tmp.axpy(h / 2.0, &s.k1, 1.0);
    sys.flow(t + h / 2.0, &s.tmp, &mut s.k2)?;
    s.tmp.copy_from(x);
    s.tmp.axpy(h / 2.0, &s.k2, 1.0);
    sys.flow(t + h / 2.0, &s.tmp, &mut s.k3)?;
    s.tmp.copy_from(x);
    s.tmp.axpy(h, &s.k3, 1.0);
    sys.flow(t + h, &s.tmp, &mut s.k4)?;
    out.copy_from(x);
    out.axpy(h / 6.0, &s.k1, 1.0);
    out.axpy(h / 3.0, &s.k2, 1.0);
    out.axpy(h / 3.0, &s.k3, 1.0);
    out.axpy(h / 6.0, &s.k4, 1.0);
    Ok(())
}

fn is_divergent(x: &DVector<f64>) -> bool {
    !x.iter().all(|v| v.is_finite()) || x.amax() > DIVERGENCE_NORM
}

/// Outcome of a single flow phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowHit {
    /// The jump set was reached; the returned state is event-localized.
    Event,
    /// `max_flow` elapsed without reaching the jump set.
    Timeout,
    /// The state left the admissible range (measured outcome, not an error).
    Diverged,
}

/// Integrates the flow from `x0` for at most `max_flow` seconds of
/// continuous time, returning the reached state and the elapsed time.
///
/// After each RK4 step the jump set is tested; on first entry the last step
/// is bisected until the event value is within [`TOL_EVENT`] of zero.
pub fn integrate_flow(
    sys: &dyn HybridSystem,
    x0: &DVector<f64>,
    max_flow: f64,
    step: f64,
) -> Result<(DVector<f64>, f64, FlowHit)> {
    if step <= 0.0 {
        return Err(Error::config("integrate_flow: step must be positive"));
    }
    if !sys.in_flow_set(x0) {
        return Err(Error::precondition(
            "integrate_flow: initial state outside the flow set",
        ));
    }
    let mut x = x0.clone();
    let mut drift = 0.0;
    let (elapsed, hit) = flow_phase(sys, 0.0, &mut x, max_flow, step, &mut drift, &mut |_, _| {})?;
    Ok((x, elapsed, hit))
}

/// Core flow loop; `record` is invoked on every accepted step with the
/// absolute time and the new state.
fn flow_phase(
    sys: &dyn HybridSystem,
    t0: f64,
    x: &mut DVector<f64>,
    max_flow: f64,
    step: f64,
    drift_max: &mut f64,
    record: &mut dyn FnMut(f64, &DVector<f64>),
) -> Result<(f64, FlowHit)> {
    let mut scratch = Rk4Scratch::new(sys.dim());
    let mut next = DVector::zeros(sys.dim());
    let mut elapsed = 0.0_f64;
    loop {
        if elapsed >= max_flow - 1e-15 {
            return Ok((elapsed, FlowHit::Timeout));
        }
        let h = step.min(max_flow - elapsed);
        rk4_step(sys, t0 + elapsed, x, h, &mut scratch, &mut next)?;
        let d = sys.project(&mut next);
        *drift_max = drift_max.max(d);
        if is_divergent(&next) {
            x.copy_from(&next);
            return Ok((elapsed + h, FlowHit::Diverged));
        }
        if sys.event_value(&next) >= 0.0 {
            // Bisect the step until the event value sits within TOL_EVENT.
            let (s_hit, x_hit) = bisect_event(sys, t0 + elapsed, x, h, &mut scratch)?;
            x.copy_from(&x_hit);
            elapsed += s_hit;
            record(t0 + elapsed, x);
            return Ok((elapsed, FlowHit::Event));
        }
        x.copy_from(&next);
        elapsed += h;
        record(t0 + elapsed, x);
    }
}

fn bisect_event(
    sys: &dyn HybridSystem,
    t: f64,
    x0: &DVector<f64>,
    h: f64,
    scratch: &mut Rk4Scratch,
) -> Result<(f64, DVector<f64>)> {
    let mut lo = 0.0_f64;
    let mut hi = h;
    let mut x_hi = DVector::zeros(sys.dim());
    rk4_step(sys, t, x0, hi, scratch, &mut x_hi)?;
    sys.project(&mut x_hi);
    let mut x_mid = DVector::zeros(sys.dim());
    for _ in 0..200 {
        let e_hi = sys.event_value(&x_hi);
        if e_hi >= 0.0 && e_hi <= TOL_EVENT {
            break;
        }
        let mid = 0.5 * (lo + hi);
        rk4_step(sys, t, x0, mid, scratch, &mut x_mid)?;
        sys.project(&mut x_mid);
        let e_mid = sys.event_value(&x_mid);
        if e_mid >= 0.0 {
            hi = mid;
            x_hi.copy_from(&x_mid);
        } else {
            lo = mid;
        }
        if hi - lo < f64::EPSILON * h.max(1.0) {
            break;
        }
    }
    Ok((hi, x_hi))
}

/// Runs the hybrid system from `x0` until the horizon is exhausted,
/// alternating flow phases and jump cascades. Deterministic for fixed
/// `(system, x0, options)`.
pub fn run(
    sys: &dyn HybridSystem,
    x0: &DVector<f64>,
    horizon: Horizon,
    opts: RunOptions,
) -> Result<HybridArc> {
    if opts.step <= 0.0 {
        return Err(Error::config("run: step must be positive"));
    }
    if !(sys.in_flow_set(x0) || sys.in_jump_set(x0)) {
        return Err(Error::precondition("run: x0 outside C union D"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut arc = HybridArc::default();
    let mut x = x0.clone();
    let mut t = 0.0_f64;
    let mut j = 0_u32;
    let stride = opts.record_stride.max(1);
    arc.samples.push(Sample {
        time: HybridTime { t, j },
        x: x.clone(),
    });

    'outer: loop {
        // Resolve the pending cascade, one selection per jump.
        let mut cascade_len = 0usize;
        while sys.in_jump_set(&x) {
            if j >= horizon.j_max {
                break 'outer;
            }
            if cascade_len >= sys.cascade_guard() {
                arc.annotations.zeno_tripped = true;
                break 'outer;
            }
            let (x_next, player, branch) = sys.jump(&x, &mut rng)?;
            debug_assert!(sys.in_flow_set(&x_next) || sys.in_jump_set(&x_next));
            arc.events.push(JumpEvent {
                t,
                j_before: j,
                player,
                branch,
            });
            j += 1;
            cascade_len += 1;
            x = x_next;
            arc.samples.push(Sample {
                time: HybridTime { t, j },
                x: x.clone(),
            });
        }
        if t >= horizon.t_max - 1e-15 || j >= horizon.j_max {
            break;
        }
        let mut step_count = 0usize;
        let mut recorder = |tt: f64, xx: &DVector<f64>| {
            step_count += 1;
            if step_count % stride == 0 {
                arc.samples.push(Sample {
                    time: HybridTime { t: tt, j },
                    x: xx.clone(),
                });
            }
        };
        let t_before = t;
        let (elapsed, hit) = flow_phase(
            sys,
            t,
            &mut x,
            horizon.t_max - t,
            opts.step,
            &mut arc.annotations.projection_drift_max,
            &mut recorder,
        )?;
        t = t_before + elapsed;
        match hit {
            FlowHit::Event => {
                // The recorder already stored the event state; ensure it was
                // not swallowed by the stride.
                if arc.samples.last().map(|s| s.time.t) != Some(t) {
                    arc.samples.push(Sample {
                        time: HybridTime { t, j },
                        x: x.clone(),
                    });
                }
            }
            FlowHit::Timeout => {
                if arc.samples.last().map(|s| s.time) != Some(HybridTime { t, j }) {
                    arc.samples.push(Sample {
                        time: HybridTime { t, j },
                        x: x.clone(),
                    });
                }
                break;
            }
            FlowHit::Diverged => {
                arc.annotations.diverged = true;
                arc.samples.push(Sample {
                    time: HybridTime { t, j },
                    x: x.clone(),
                });
                break;
            }
        }
    }
    // Final state, if the last push predates it.
    if arc.samples.last().map(|s| s.time) != Some(HybridTime { t, j }) {
        arc.samples.push(Sample {
            time: HybridTime { t, j },
            x,
        });
    }
    Ok(arc)
}

/// `(T, J, eps)`-closeness of two hybrid arcs: the smallest `eps` (up to the
/// recorded grid resolution) such that each arc's samples with `t <= T`,
/// `j <= J` are matched by the other arc at the same jump index within `eps`
/// in both time and state, interpolating linearly in `t` inside each flow
/// interval. Returns infinity when one arc lacks a jump index the other
/// reaches below `J`.
pub fn closeness(a: &HybridArc, b: &HybridArc, t_max: f64, j_max: u32) -> f64 {
    let all: Vec<usize> = (0..a.samples.first().map_or(0, |s| s.x.len())).collect();
    closeness_on(a, b, t_max, j_max, &all)
}

/// [`closeness`] restricted to the state coordinates in `dims` (used to
/// compare systems whose states embed a common sub-state).
pub fn closeness_on(a: &HybridArc, b: &HybridArc, t_max: f64, j_max: u32, dims: &[usize]) -> f64 {
    let eps_ab = directed_closeness(a, b, t_max, j_max, dims);
    let eps_ba = directed_closeness(b, a, t_max, j_max, dims);
    eps_ab.max(eps_ba)
}

fn segments(arc: &HybridArc) -> Vec<(u32, usize, usize)> {
    let mut segs = Vec::new();
    let mut start = 0usize;
    for i in 1..=arc.samples.len() {
        if i == arc.samples.len() || arc.samples[i].time.j != arc.samples[start].time.j {
            segs.push((arc.samples[start].time.j, start, i));
            start = i;
        }
    }
    segs
}

fn sub_dist(x: &DVector<f64>, y: &DVector<f64>, dims: &[usize]) -> f64 {
    dims.iter()
        .map(|&d| (x[d] - y[d]).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn interp_state(s0: &Sample, s1: &Sample, t: f64) -> DVector<f64> {
    let span = s1.time.t - s0.time.t;
    if span <= 0.0 {
        return s0.x.clone();
    }
    let w = ((t - s0.time.t) / span).clamp(0.0, 1.0);
    &s0.x * (1.0 - w) + &s1.x * w
}

fn directed_closeness(a: &HybridArc, b: &HybridArc, t_max: f64, j_max: u32, dims: &[usize]) -> f64 {
    let segs_b = segments(b);
    let mut eps = 0.0_f64;
    for sample in &a.samples {
        let (t, j) = (sample.time.t, sample.time.j);
        if t > t_max || j > j_max {
            continue;
        }
        let seg = segs_b.iter().find(|(jj, _, _)| *jj == j);
        let Some(&(_, lo, hi)) = seg else {
            return f64::INFINITY;
        };
        let slice = &b.samples[lo..hi];
        let mut best = f64::INFINITY;
        // Interpolated candidate at s = t (clamped into the segment).
        let first = &slice[0];
        let last = &slice[slice.len() - 1];
        let tc = t.clamp(first.time.t, last.time.t);
        let k = slice
            .partition_point(|s| s.time.t < tc)
            .min(slice.len() - 1);
        let (s0, s1) = if k == 0 {
            (&slice[0], &slice[0])
        } else {
            (&slice[k - 1], &slice[k])
        };
        let xi = interp_state(s0, s1, tc);
        best = best.min(((t - tc).abs()).max(sub_dist(&sample.x, &xi, dims)));
        // Sample candidates, expanding around t until |t - s| exceeds best.
        let pivot = slice.partition_point(|s| s.time.t < t);
        let mut offset = 0usize;
        loop {
            let mut advanced = false;
            if pivot + offset < slice.len() {
                let s = &slice[pivot + offset];
                if (s.time.t - t).abs() <= best {
                    best = best.min((s.time.t - t).abs().max(sub_dist(&sample.x, &s.x, dims)));
                    advanced = true;
                }
            }
            if offset < pivot {
                let s = &slice[pivot - offset - 1];
                if (s.time.t - t).abs() <= best {
                    best = best.min((s.time.t - t).abs().max(sub_dist(&sample.x, &s.x, dims)));
                    advanced = true;
                }
            }
            offset += 1;
            if !advanced || offset > slice.len() {
                break;
            }
        }
        eps = eps.max(best);
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Flow-only system `xdot = c` with an optional event at `x[0] = level`.
    struct Linear {
        c: Vec<f64>,
        level: Option<f64>,
    }

    impl HybridSystem for Linear {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn flow(&self, _t: f64, _x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
            for (o, c) in out.iter_mut().zip(&self.c) {
                *o = *c;
            }
            Ok(())
        }
        fn in_flow_set(&self, _x: &DVector<f64>) -> bool {
            true
        }
        fn in_jump_set(&self, x: &DVector<f64>) -> bool {
            self.event_value(x) >= -1e-8
        }
        fn event_value(&self, x: &DVector<f64>) -> f64 {
            match self.level {
                Some(l) => x[0] - l,
                None => f64::NEG_INFINITY,
            }
        }
        fn jump(
            &self,
            _x: &DVector<f64>,
            _rng: &mut ChaCha8Rng,
        ) -> Result<(DVector<f64>, Option<usize>, String)> {
            Err(Error::precondition("no jumps"))
        }
    }

    #[test]
    fn zero_field_stays_put() {
        let sys = Linear {
            c: vec![0.0, 0.0],
            level: None,
        };
        let x0 = DVector::from_column_slice(&[1.5, -2.5]);
        let (x, elapsed, hit) = integrate_flow(&sys, &x0, 1.0, 1e-2).unwrap();
        assert_eq!(hit, FlowHit::Timeout);
        assert!((elapsed - 1.0).abs() < 1e-12);
        assert_eq!(x, x0);
    }

    #[test]
    fn timer_event_localized() {
        // tau' = 0.5 from 0.1, event at 1.1 => t = 2.0 within 1e-8.
        let sys = Linear {
            c: vec![0.5],
            level: Some(1.1),
        };
        let x0 = DVector::from_column_slice(&[0.1]);
        let (x, elapsed, hit) = integrate_flow(&sys, &x0, 10.0, 1e-3).unwrap();
        assert_eq!(hit, FlowHit::Event);
        assert!((elapsed - 2.0).abs() < 1e-8, "event time {elapsed}");
        assert!((x[0] - 1.1).abs() <= TOL_EVENT + 1e-12);
    }

    /// Harmonic oscillator for integrator accuracy.
    struct Harmonic;

    impl HybridSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn flow(&self, _t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
            out[0] = x[1];
            out[1] = -x[0];
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
            Err(Error::precondition("no jumps"))
        }
    }

    #[test]
    fn harmonic_returns_after_one_period() {
        let x0 = DVector::from_column_slice(&[1.0, 0.0]);
        let (x, _, hit) = integrate_flow(&Harmonic, &x0, 2.0 * std::f64::consts::PI, 1e-3).unwrap();
        assert_eq!(hit, FlowHit::Timeout);
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6);
    }

    #[test]
    fn run_pure_flow_has_no_jumps() {
        let sys = Linear {
            c: vec![1.0],
            level: None,
        };
        let arc = run(
            &sys,
            &DVector::zeros(1),
            Horizon {
                t_max: 1.0,
                j_max: 100,
            },
            RunOptions::default(),
        )
        .unwrap();
        assert!(arc.events.is_empty());
        assert!(arc.samples.iter().all(|s| s.time.j == 0));
        arc.validate_domain().unwrap();
    }

    #[test]
    fn divergence_is_annotated_not_fatal() {
        struct Exploding;
        impl HybridSystem for Exploding {
            fn dim(&self) -> usize {
                1
            }
            fn flow(&self, _t: f64, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
                out[0] = x[0] * x[0] + 1.0;
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
                Err(Error::precondition("no jumps"))
            }
        }
        let arc = run(
            &Exploding,
            &DVector::from_column_slice(&[1.0]),
            Horizon {
                t_max: 10.0,
                j_max: 10,
            },
            RunOptions {
                step: 1e-3,
                record_stride: 100,
                seed: 0,
            },
        )
        .unwrap();
        assert!(arc.annotations.diverged);
    }

    #[test]
    fn closeness_reflexive_and_offset() {
        let mk = |x0: f64| {
            let sys = Linear {
                c: vec![0.0, 0.0],
                level: None,
            };
            run(
                &sys,
                &DVector::from_column_slice(&[x0, 0.0]),
                Horizon {
                    t_max: 1.0,
                    j_max: 10,
                },
                RunOptions {
                    step: 1e-2,
                    record_stride: 5,
                    seed: 0,
                },
            )
            .unwrap()
        };
        let a = mk(0.0);
        let b = mk(0.1);
        assert_eq!(closeness(&a, &a, 1.0, 5), 0.0);
        let eps = closeness(&a, &b, 1.0, 5);
        assert!((eps - 0.1).abs() < 1e-9, "eps = {eps}");
    }

    #[test]
    fn closeness_disjoint_j_ranges_is_infinite() {
        let sys = Linear {
            c: vec![0.0],
            level: None,
        };
        let a = run(
            &sys,
            &DVector::zeros(1),
            Horizon {
                t_max: 1.0,
                j_max: 5,
            },
            RunOptions::default(),
        )
        .unwrap();
        let mut b = a.clone();
        for s in &mut b.samples {
            s.time.j += 1;
        }
        assert!(closeness(&a, &b, 1.0, 5).is_infinite());
    }

    #[test]
    fn perturbation_norm_bound() {
        for p in [
            Perturbation::Sinusoid {
                delta: 0.7,
                omega: 3.0,
                phase: 0.4,
            },
            Perturbation::SeededNoise {
                delta: 0.7,
                seed: 4,
                hold: 0.05,
            },
        ] {
            let mut e = vec![0.0; 4];
            for k in 0..200 {
                p.eval_into(k as f64 * 0.013, &mut e);
                let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm <= 0.7 + 1e-12);
            }
        }
    }
}
