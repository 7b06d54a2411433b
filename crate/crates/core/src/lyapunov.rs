//! Lyapunov evaluation and trajectory analytics.
//!
//! Along recorded arcs this module evaluates
//!
//! ```text
//! V1 = 1/4 |p - q|^2          V2 = 1/4 dist(p, A_NE)^2
//! V3 = (|tau|^2 / n) Perr(q)              (potential games)
//! Vt3 = c_o |tau|^2 |G(q)|^2 / (2 n)      (non-potential games)
//! V_G = (1 - d) (V1 + V2 + Vt3) + d/2 |theta|^2   (estimation dynamics)
//! ```
//!
//! and checks the decrease properties the convergence analysis relies on:
//! no increase along synchronized flows, per-cascade contraction by
//! `1 - gamma(rho_J)` under full momentum resets, the `c_j / tau^2`
//! semi-acceleration envelopes, and closed-form distance bounds. It also
//! fits exponential rates by log-linear least squares.

use nalgebra::DVector;

use crate::certificates;
use crate::engine::{HybridArc, HybridTime};
use crate::error::{Error, Result};
use crate::estimation::consensus_error;
use crate::game::GameSpec;
use crate::graph::SelectionMatrices;
use crate::momentum::{HmNssParams, StateLayout};

/// Relative tolerance for decrease checks: violations must exceed
/// `TOL_LYAP * (1 + V)`.
pub const TOL_LYAP: f64 = 1e-6;

/// Which total Lyapunov function to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovVariant {
    /// `V1 + V2 + V3`; needs a potential evaluator and a stored NE.
    Potential,
    /// `V1 + V2 + Vt3`; needs the cocoercivity constant.
    NonPotential,
    /// `(1 - d) (V1 + V2 + Vt3) + d V_theta` on estimation states.
    Graph { d: f64 },
}

/// Lyapunov components at one sample. Unused components are `None`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LyapunovSample {
    pub time: HybridTime,
    pub v1: f64,
    pub v2: f64,
    pub v3: Option<f64>,
    pub vt3: Option<f64>,
    pub v_theta: Option<f64>,
    pub v_total: f64,
}

/// Evaluates the selected Lyapunov function at a raw state vector.
pub fn eval_lyapunov(
    game: &GameSpec,
    variant: LyapunovVariant,
    layout: StateLayout,
    time: HybridTime,
    x: &DVector<f64>,
) -> Result<LyapunovSample> {
    let xs = x.as_slice();
    let n = layout.n;
    let q = layout.q(xs);
    let p = layout.p(xs);
    let tau = layout.tau(xs);
    let v1 = 0.25
        * q.iter()
            .zip(p)
            .map(|(qi, pi)| (pi - qi) * (pi - qi))
            .sum::<f64>();
    let p_vec = DVector::from_column_slice(p);
    let v2 = 0.25 * game.dist_to_ne(&p_vec)?.powi(2);
    let tau_sq: f64 = tau.iter().map(|v| v * v).sum();
    let mut sample = LyapunovSample {
        time,
        v1,
        v2,
        v3: None,
        vt3: None,
        v_theta: None,
        v_total: 0.0,
    };
    let base = match variant {
        LyapunovVariant::Potential => {
            let perr = game.potential_error(&DVector::from_column_slice(q))?;
            let v3 = tau_sq / n as f64 * perr;
            sample.v3 = Some(v3);
            v1 + v2 + v3
        }
        LyapunovVariant::NonPotential | LyapunovVariant::Graph { .. } => {
            let c_o = game
                .constants
                .and_then(|c| c.cocoercivity)
                .ok_or_else(|| Error::config("Lyapunov: cocoercivity constant not provided"))?;
            let g = game.pseudogradient(&DVector::from_column_slice(q))?;
            let vt3 = c_o * tau_sq * g.norm_squared() / (2.0 * n as f64);
            sample.vt3 = Some(vt3);
            v1 + v2 + vt3
        }
    };
    sample.v_total = match variant {
        LyapunovVariant::Graph { d } => {
            if !(0.0..1.0).contains(&d) || d == 0.0 {
                return Err(Error::config("Lyapunov graph variant needs d in (0, 1)"));
            }
            if !layout.has_qhat {
                return Err(Error::config(
                    "Lyapunov graph variant needs an estimation state",
                ));
            }
            let sel = SelectionMatrices::new(n)?;
            let theta = consensus_error(&sel, q, layout.qhat(xs));
            sample.v_theta = Some(0.5 * theta * theta);
            (1.0 - d) * base + d * 0.5 * theta * theta
        }
        _ => base,
    };
    Ok(sample)
}

/// Evaluates the Lyapunov function on every sample of an arc.
pub fn evaluate_arc(
    game: &GameSpec,
    variant: LyapunovVariant,
    layout: StateLayout,
    arc: &HybridArc,
) -> Result<Vec<LyapunovSample>> {
    arc.samples
        .iter()
        .map(|s| eval_lyapunov(game, variant, layout, s.time, &s.x))
        .collect()
}

/// Report of [`check_flow_decrease`].
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct FlowDecreaseReport {
    pub checked: usize,
    pub violations: Vec<(HybridTime, f64)>,
    pub max_positive_vdot: f64,
}

/// Flags samples in the synchronized regime (`t + j >= t_star`) where the
/// centered finite difference of `V` along a flow interval exceeds
/// `TOL_LYAP * (1 + V)`.
pub fn check_flow_decrease(
    game: &GameSpec,
    variant: LyapunovVariant,
    layout: StateLayout,
    arc: &HybridArc,
    t_star: f64,
) -> Result<FlowDecreaseReport> {
    let values = evaluate_arc(game, variant, layout, arc)?;
    let mut report = FlowDecreaseReport::default();
    for w in values.windows(3) {
        let (a, b, c) = (&w[0], &w[1], &w[2]);
        // Interior points of one flow interval only: never across jumps.
        if a.time.j != b.time.j || b.time.j != c.time.j {
            continue;
        }
        if b.time.t + (b.time.j as f64) < t_star {
            continue;
        }
        let dt = c.time.t - a.time.t;
        if dt <= 0.0 {
            continue;
        }
        let vdot = (c.v_total - a.v_total) / dt;
        report.checked += 1;
        if vdot > TOL_LYAP * (1.0 + b.v_total) {
            report.violations.push((b.time, vdot));
        }
        report.max_positive_vdot = report.max_positive_vdot.max(vdot);
    }
    Ok(report)
}

/// Per-cascade summary from [`check_jump_decrease`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct CascadeDelta {
    pub t: f64,
    pub j_before: u32,
    pub len: usize,
    pub v_pre: f64,
    pub v_post: f64,
}

/// Report of [`check_jump_decrease`].
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct JumpDecreaseReport {
    pub cascades: Vec<CascadeDelta>,
    pub increase_violations: usize,
    /// Worst contraction factor `V_post / V_pre` among synchronized complete
    /// cascades (populated when `rho_j` is supplied and `alpha = 0`).
    pub max_contraction_factor: Option<f64>,
    pub contraction_bound: Option<f64>,
    pub contraction_violations: usize,
}

/// Checks `V(post) - V(pre) <= TOL_LYAP (1 + V_pre)` across every complete
/// cascade and, when `rho_j` is given with the full-reset policy, the
/// per-cascade contraction `V(post) <= (1 - gamma(rho_J) + 1e-6) V(pre)` on
/// synchronized cascades (length `n`, `t + j >= t_star`).
pub fn check_jump_decrease(
    game: &GameSpec,
    variant: LyapunovVariant,
    layout: StateLayout,
    arc: &HybridArc,
    params: &HmNssParams,
    rho_j: Option<f64>,
) -> Result<JumpDecreaseReport> {
    let mut report = JumpDecreaseReport::default();
    let check_contraction = rho_j.is_some() && params.alpha.iter().all(|&a| !a);
    let bound = rho_j.map(|r| 1.0 - certificates::gamma(params.t, params.t0, r) + 1e-6);
    report.contraction_bound = bound;
    for (t, j_before, len) in arc.cascades() {
        let pre = arc
            .samples
            .iter()
            .rfind(|s| s.time.t == t && s.time.j == j_before)
            .ok_or_else(|| Error::numerical("cascade pre-state not recorded"))?;
        let post = arc
            .samples
            .iter()
            .find(|s| s.time.t == t && s.time.j == j_before + len as u32)
            .ok_or_else(|| Error::numerical("cascade post-state not recorded"))?;
        let v_pre = eval_lyapunov(game, variant, layout, pre.time, &pre.x)?.v_total;
        let v_post = eval_lyapunov(game, variant, layout, post.time, &post.x)?.v_total;
        if v_post - v_pre > TOL_LYAP * (1.0 + v_pre) {
            report.increase_violations += 1;
        }
        let synced = len == layout.n && t + j_before as f64 >= params.t_star();
        if check_contraction && synced && v_pre > 1e-12 {
            let factor = v_post / v_pre;
            let b = bound.unwrap();
            if factor > b {
                report.contraction_violations += 1;
            }
            report.max_contraction_factor = Some(
                report
                    .max_contraction_factor
                    .map_or(factor, |m: f64| m.max(factor)),
            );
        }
        report.cascades.push(CascadeDelta {
            t,
            j_before,
            len,
            v_pre,
            v_post,
        });
    }
    Ok(report)
}

/// Which convergence bound to verify on an arc.
#[derive(Debug, Clone, Copy)]
pub enum RateBoundCheck {
    /// Semi-acceleration envelope for monotone potential games with
    /// `alpha = 1`: within each synchronized flow interval
    /// `Perr(q) tau_s^2` is non-increasing, and the interval constants
    /// `c_j = 2 V(s_j, j)` decrease.
    SemiAccelerationPotential,
    /// The analogue with `|G(q)|^2 tau_s^2` and `c~_j = 2 ell Vt(s_j, j)`
    /// for cocoercive non-potential games.
    SemiAccelerationNonPotential { ell: f64 },
    /// `|q - q*| <= sigma_r sqrt(sigma_phi) (1 - gamma(1/kappa))^(a(j)/2) M0`
    /// for strongly monotone potential games with `alpha = 0`.
    ContractionPotential { kappa: f64, ell: f64 },
    /// `|q - q*| <= sigma_r sigma_phi (1 - gamma(sigma_phi^2/kappa))^(a(j)/2) M0`
    /// for strongly monotone non-potential games with `alpha = 0`.
    ContractionNonPotential { kappa: f64, ell: f64 },
    /// Settling under the quasi-optimal restart: `|q - q*| <= nu` for all
    /// `t >= t_opt_nu`.
    Settling { kappa: f64, ell: f64, nu: f64 },
}

/// Report of [`check_rate_bounds`].
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct RateBoundReport {
    pub m0: f64,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `bound - measured` over the checked samples (negative means
    /// a violation).
    pub worst_margin: f64,
    /// Interval constants for the semi-acceleration envelopes.
    pub interval_constants: Vec<f64>,
    pub constants_monotone: bool,
    pub within_interval_violations: usize,
}

/// Verifies the selected bound on an arc generated by a matching
/// configuration. `M0` is the maximum of the relevant norm over the
/// pre-synchronization samples (`t + j < t_star`).
pub fn check_rate_bounds(
    game: &GameSpec,
    layout: StateLayout,
    arc: &HybridArc,
    params: &HmNssParams,
    check: RateBoundCheck,
) -> Result<RateBoundReport> {
    let ne = game
        .known_ne
        .first()
        .ok_or_else(|| Error::config("rate bounds need a stored NE"))?
        .clone();
    let t_star = params.t_star();
    let dist_q = |x: &DVector<f64>| -> f64 {
        layout
            .q(x.as_slice())
            .iter()
            .zip(ne.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut report = RateBoundReport {
        worst_margin: f64::INFINITY,
        ..Default::default()
    };

    match check {
        RateBoundCheck::ContractionPotential { kappa, ell }
        | RateBoundCheck::ContractionNonPotential { kappa, ell } => {
            let potential = matches!(check, RateBoundCheck::ContractionPotential { .. });
            let sigma_phi = ell / kappa;
            let (rho_j, pref) = if potential {
                (1.0 / kappa, params.sigma_r() * sigma_phi.sqrt())
            } else {
                (sigma_phi * sigma_phi / kappa, params.sigma_r() * sigma_phi)
            };
            let gam = certificates::gamma(params.t, params.t0, rho_j);
            if !(0.0..1.0).contains(&gam) {
                return Err(Error::config(format!(
                    "contraction bound needs gamma in (0, 1); got {gam} (check RC1)"
                )));
            }
            report.m0 = arc
                .samples
                .iter()
                .filter(|s| s.time.t + s.time.j as f64 <= t_star)
                .map(|s| dist_q(&s.x))
                .fold(0.0, f64::max);
            let n = layout.n as f64;
            for s in &arc.samples {
                if s.time.t + (s.time.j as f64) < t_star {
                    continue;
                }
                let aj = ((s.time.j as f64 - n) / n).floor().max(0.0);
                let bound = pref * (1.0 - gam).powf(aj / 2.0) * report.m0;
                let margin = bound - dist_q(&s.x);
                report.checked += 1;
                report.worst_margin = report.worst_margin.min(margin);
                if margin < -1e-9 * (1.0 + bound) {
                    report.violations += 1;
                }
            }
        }
        RateBoundCheck::SemiAccelerationPotential
        | RateBoundCheck::SemiAccelerationNonPotential { .. } => {
            let weight = |x: &DVector<f64>| -> Result<f64> {
                match check {
                    RateBoundCheck::SemiAccelerationPotential => {
                        game.potential_error(&DVector::from_column_slice(layout.q(x.as_slice())))
                    }
                    _ => Ok(game
                        .pseudogradient(&DVector::from_column_slice(layout.q(x.as_slice())))?
                        .norm_squared()),
                }
            };
            let (variant, scale) = match check {
                RateBoundCheck::SemiAccelerationPotential => (LyapunovVariant::Potential, 2.0),
                RateBoundCheck::SemiAccelerationNonPotential { ell } => {
                    (LyapunovVariant::NonPotential, 2.0 * ell)
                }
                _ => unreachable!(),
            };
            // Split into synchronized flow intervals.
            let mut intervals: Vec<&[crate::engine::Sample]> = Vec::new();
            let mut start = 0usize;
            for i in 1..=arc.samples.len() {
                if i == arc.samples.len() || arc.samples[i].time.j != arc.samples[start].time.j {
                    let seg = &arc.samples[start..i];
                    if seg.len() >= 2 && seg[0].time.t + seg[0].time.j as f64 >= t_star {
                        intervals.push(seg);
                    }
                    start = i;
                }
            }
            for seg in intervals {
                let first = &seg[0];
                let c_j =
                    scale * eval_lyapunov(game, variant, layout, first.time, &first.x)?.v_total;
                report.interval_constants.push(c_j);
                let mut prev: Option<f64> = None;
                for s in seg {
                    let tau = layout.tau(s.x.as_slice());
                    let tau_s = tau.iter().sum::<f64>() / tau.len() as f64;
                    let v = tau_s * tau_s * weight(&s.x)?;
                    report.checked += 1;
                    // Envelope margin against the interval constant.
                    let margin = c_j - v;
                    report.worst_margin = report.worst_margin.min(margin);
                    if margin < -1e-9 * (1.0 + c_j) {
                        report.violations += 1;
                    }
                    if let Some(pv) = prev {
                        if v - pv > TOL_LYAP * (1.0 + pv) {
                            report.within_interval_violations += 1;
                        }
                    }
                    prev = Some(v);
                }
            }
            report.constants_monotone = report
                .interval_constants
                .windows(2)
                .all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15);
            report.m0 = report.interval_constants.first().copied().unwrap_or(0.0);
        }
        RateBoundCheck::Settling { kappa, ell, nu } => {
            let sigma_phi = ell / kappa;
            report.m0 = arc
                .samples
                .iter()
                .filter(|s| s.time.t + s.time.j as f64 <= t_star)
                .map(|s| dist_q(&s.x))
                .fold(0.0, f64::max);
            let t_nu = certificates::settling_time(
                kappa,
                sigma_phi,
                params.sigma_r(),
                params.eta,
                params.t0,
                nu,
                report.m0,
            )?;
            for s in &arc.samples {
                if s.time.t < t_nu {
                    continue;
                }
                report.checked += 1;
                let margin = nu - dist_q(&s.x);
                report.worst_margin = report.worst_margin.min(margin);
                if margin < -1e-9 * (1.0 + nu) {
                    report.violations += 1;
                }
            }
        }
    }
    if report.worst_margin == f64::INFINITY {
        report.worst_margin = 0.0;
    }
    Ok(report)
}

/// Log-linear rate fit of `ln dist(q, NE)` against `t` over `[w0, w1]`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RateFit {
    pub lambda_hat: f64,
    pub r_squared: f64,
    /// Set when a zero distance was clipped at 1e-14 before the log.
    pub clipped: bool,
}

pub fn fit_exponential_rate(
    arc: &HybridArc,
    layout: StateLayout,
    ne: &DVector<f64>,
    window: (f64, f64),
) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut clipped = false;
    for s in &arc.samples {
        if s.time.t < window.0 || s.time.t > window.1 {
            continue;
        }
        let d: f64 = layout
            .q(s.x.as_slice())
            .iter()
            .zip(ne.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let d = if d < 1e-14 {
            clipped = true;
            1e-14
        } else {
            d
        };
        xs.push(s.time.t);
        ys.push(d.ln());
    }
    if xs.len() < 2 {
        return Err(Error::domain(
            "rate fit: window contains fewer than two samples",
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::domain("rate fit: degenerate time window"));
    }
    let slope = sxy / sxx;
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if syy <= 1e-30 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok(RateFit {
        lambda_hat: -slope,
        r_squared: r2,
        clipped,
    })
}

/// First hybrid time `t + j` from which every later recorded sample keeps
/// the timers within `1e-6` of the synchronization set.
pub fn observed_sync_time(arc: &HybridArc, layout: StateLayout, t0: f64, t: f64) -> Option<f64> {
    let ok: Vec<bool> = arc
        .samples
        .iter()
        .map(|s| crate::momentum::sync_distance(layout.tau(s.x.as_slice()), t0, t) <= 1e-6)
        .collect();
    let mut idx = None;
    for i in (0..ok.len()).rev() {
        if ok[i] {
            idx = Some(i);
        } else {
            break;
        }
    }
    idx.map(|i| arc.samples[i].time.t + arc.samples[i].time.j as f64)
}
