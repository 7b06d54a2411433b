//! Closed-form tuning certificates for the reset dynamics.
//!
//! Reset conditions `RC1`-`RC3` bound how often players may restart; the
//! contraction coefficient `gamma(rho_J) = 1 - 1/sigma_r^2 - rho_J/(2 T^2)`
//! governs per-cascade decrease; the state-dependent matrix
//! `M_delta(q, rho_F) = I - S_delta S_delta^T` with
//! `S_delta = chi(rho_F, delta)^{1/2} (rho_F I - dG(q))` certifies flow
//! dissipativity for non-potential games (global contractivity, GC); and
//! `eps*_delta` bounds the consensus gain of the estimation dynamics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{GameSpec, SampleBox};

/// Condition numbers of the game, the reset mechanism and the graph:
/// `sigma_phi = ell/kappa`, `sigma_r = T/T0`, `sigma_L = lambda_max/lambda_2`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConditionNumbers {
    pub sigma_phi: f64,
    pub sigma_r: f64,
    pub sigma_l: Option<f64>,
}

impl ConditionNumbers {
    pub fn new(kappa: f64, ell: f64, t0: f64, t: f64, sigma_l: Option<f64>) -> Result<Self> {
        if kappa <= 0.0 || ell <= 0.0 || t0 <= 0.0 || t <= 0.0 {
            return Err(Error::domain(
                "condition numbers need positive kappa, ell, T0, T",
            ));
        }
        Ok(ConditionNumbers {
            sigma_phi: ell / kappa,
            sigma_r: t / t0,
            sigma_l,
        })
    }
}

/// `RC1`: `T^2 - T0^2 > (rho_J / 2)(1 - alpha_min)`, the lower bound on the
/// reset period. Always satisfied when every player keeps its momentum
/// (`alpha = 1`, right side zero).
pub fn check_rc1(t: f64, t0: f64, rho_j: f64, alpha: &[bool]) -> bool {
    let alpha_min = if !alpha.is_empty() && alpha.iter().all(|&a| a) {
        1.0
    } else {
        0.0
    };
    t * t - t0 * t0 > 0.5 * rho_j * (1.0 - alpha_min)
}

/// Per-cascade contraction coefficient
/// `gamma(rho_J) = 1 - 1/sigma_r^2 - rho_J/(2 T^2)` (no clamping).
pub fn gamma(t: f64, t0: f64, rho_j: f64) -> f64 {
    1.0 - (t0 * t0) / (t * t) - rho_j / (2.0 * t * t)
}

/// `RC2`: `0 < T^2 < (1 - eta)/(2 ell)`; sufficient for `S_0` to be
/// `ell`-GC in cocoercive strictly monotone games.
pub fn check_rc2(t: f64, eta: f64, ell: f64) -> bool {
    t > 0.0 && t * t < (1.0 - eta) / (2.0 * ell)
}

/// Result of the `RC3` test. `bound = None` marks the degenerate fraction
/// (`sigma_phi ell = kappa` with `delta = 0`), where any `T > 0` is
/// admissible and the test reports `unbounded`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Rc3Check {
    pub holds: bool,
    pub bound: Option<f64>,
    pub unbounded: bool,
    pub delta: f64,
}

/// `RC3`: `0 < T^2 < (1 - eta - delta sigma_phi ell) /
/// (sigma_phi ell - kappa + delta (1 - eta - delta sigma_phi ell))` with
/// `0 <= delta < (1 - eta)/(sigma_phi ell)`; sufficient for `S_delta` to be
/// `(sigma_phi ell)`-GC in strongly monotone Lipschitz games.
pub fn check_rc3(
    t: f64,
    eta: f64,
    sigma_phi: f64,
    ell: f64,
    kappa: f64,
    delta: f64,
) -> Result<Rc3Check> {
    let rho = sigma_phi * ell;
    if !(delta >= 0.0 && delta < (1.0 - eta) / rho) {
        return Err(Error::domain(format!(
            "RC3: delta = {delta} outside [0, (1 - eta)/(sigma_phi ell)) = [0, {})",
            (1.0 - eta) / rho
        )));
    }
    let numer = 1.0 - eta - delta * rho;
    let denom = rho - kappa + delta * numer;
    if denom <= 0.0 {
        // sigma_phi ell = kappa and delta = 0: the fraction degenerates and
        // the inequality holds for every positive T.
        return Ok(Rc3Check {
            holds: t > 0.0,
            bound: None,
            unbounded: true,
            delta,
        });
    }
    let bound = numer / denom;
    Ok(Rc3Check {
        holds: t > 0.0 && t * t < bound,
        bound: Some(bound),
        unbounded: false,
        delta,
    })
}

/// Contraction scale `chi(rho_F, delta) = T^2/(1 - delta T^2) *
/// 1/(rho_F (1 - eta) - delta rho_F^2)`.
///
/// Both domain readings are enforced (`delta T^2 < 1`, matching the
/// denominator, and `delta^2 T^2 < 1` as stated alongside the definition);
/// inputs on which the two disagree are rejected with an explicit message.
pub fn chi(rho_f: f64, delta: f64, t: f64, eta: f64) -> Result<f64> {
    if rho_f <= 0.0 || delta < 0.0 || t <= 0.0 {
        return Err(Error::domain("chi: need rho_F > 0, delta >= 0, T > 0"));
    }
    let c1 = delta * t * t < 1.0;
    let c2 = delta * delta * t * t < 1.0;
    if c1 != c2 {
        return Err(Error::domain(format!(
            "chi: domain conditions disagree at delta = {delta}, T = {t} \
             (delta T^2 < 1 is {c1}, delta^2 T^2 < 1 is {c2})"
        )));
    }
    if !c1 {
        return Err(Error::domain("chi: delta T^2 must be < 1"));
    }
    let damping = rho_f * (1.0 - eta) - delta * rho_f * rho_f;
    if damping <= 0.0 {
        return Err(Error::domain(
            "chi: need rho_F (1 - eta) - delta rho_F^2 > 0",
        ));
    }
    Ok(t * t / (1.0 - delta * t * t) / damping)
}

/// `M_delta(q, rho_F) = I - chi (rho_F I - dG(q)) (rho_F I - dG(q))^T`.
pub fn m_delta(
    game: &GameSpec,
    q: &DVector<f64>,
    rho_f: f64,
    delta: f64,
    t: f64,
    eta: f64,
) -> Result<DMatrix<f64>> {
    let x = chi(rho_f, delta, t, eta)?;
    let jac = game.jacobian(q)?;
    let n = game.n;
    let s = DMatrix::identity(n, n) * rho_f - jac;
    Ok(DMatrix::identity(n, n) - (&s * s.transpose()) * x)
}

fn min_eig_symmetric(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Positive-definiteness threshold for the GC tests.
pub const GC_PD_TOL: f64 = 1e-10;

/// Outcome of a global-contractivity test: minimum eigenvalue of `M_delta`
/// over the evaluation set. `exact` marks the constant-Jacobian quadratic
/// path; otherwise this is a sampled certificate over the grid, not a proof.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct GcCertificate {
    pub holds: bool,
    pub min_eig: f64,
    pub exact: bool,
    pub rho_f: f64,
    pub delta: f64,
}

/// Tests `rho_F`-global contractivity: `M_delta(q, rho_F) > 0` away from
/// the NE set. Quadratic games use one exact eigenvalue test; analytic
/// games sample `grid_size` Sobol points in `sample_box` plus any supplied
/// trajectory points.
#[allow(clippy::too_many_arguments)]
pub fn is_globally_contractive(
    game: &GameSpec,
    rho_f: f64,
    delta: f64,
    t: f64,
    eta: f64,
    sample_box: Option<&SampleBox>,
    grid_size: usize,
    extra_points: &[DVector<f64>],
) -> Result<GcCertificate> {
    if game.is_quadratic() {
        let m = m_delta(game, &DVector::zeros(game.n), rho_f, delta, t, eta)?;
        let min_eig = min_eig_symmetric(&m);
        return Ok(GcCertificate {
            holds: min_eig > GC_PD_TOL,
            min_eig,
            exact: true,
            rho_f,
            delta,
        });
    }
    let boxx = sample_box.ok_or_else(|| {
        Error::config("GC grid certificate needs a sample box for analytic games")
    })?;
    let points = sobol_points(grid_size, game.n);
    let mut min_eig = f64::INFINITY;
    let eval = |q: &DVector<f64>| -> Result<f64> {
        Ok(min_eig_symmetric(&m_delta(game, q, rho_f, delta, t, eta)?))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let vals: Result<Vec<f64>> = points.par_iter().map(|u| eval(&boxx.lerp(u))).collect();
        min_eig = vals?.into_iter().fold(min_eig, f64::min);
    }
    #[cfg(not(feature = "parallel"))]
    {
        for u in &points {
            min_eig = min_eig.min(eval(&boxx.lerp(u))?);
        }
    }
    for q in extra_points {
        min_eig = min_eig.min(eval(q)?);
    }
    Ok(GcCertificate {
        holds: min_eig > GC_PD_TOL,
        min_eig,
        exact: false,
        rho_f,
        delta,
    })
}

/// Low-discrepancy points in the unit cube (Sobol sequence).
fn sobol_points(count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count as u32)
        .map(|i| {
            (0..dim)
                .map(|d| sobol_burley::sample(i, d as u32, 0) as f64)
                .collect()
        })
        .collect()
}

/// Largest `T` (to `tol`) at which `M_delta` stays positive definite for a
/// quadratic game, located by bisection on the minimum eigenvalue.
pub fn gc_threshold_t(
    game: &GameSpec,
    rho_f: f64,
    delta: f64,
    eta: f64,
    t_hi_start: f64,
    tol: f64,
) -> Result<f64> {
    if !game.is_quadratic() {
        return Err(Error::precondition("gc_threshold_t: quadratic games only"));
    }
    let origin = DVector::zeros(game.n);
    let min_eig_at = |t: f64| -> Result<f64> {
        Ok(min_eig_symmetric(&m_delta(
            game, &origin, rho_f, delta, t, eta,
        )?))
    };
    let mut lo = 1e-9;
    let mut hi = t_hi_start;
    if min_eig_at(lo)? <= 0.0 {
        return Err(Error::numerical(
            "gc_threshold_t: no positive-definite T found",
        ));
    }
    let mut guard = 0;
    while min_eig_at(hi)? > 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 || (delta > 0.0 && delta * hi * hi >= 1.0) {
            return Err(Error::numerical(
                "gc_threshold_t: M_delta never loses definiteness",
            ));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if min_eig_at(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quasi-optimal restart period
/// `T_opt = e sigma_phi sqrt(1/(2 kappa) + T0^2/sigma_phi^2)`.
pub fn t_opt(kappa: f64, sigma_phi: f64, t0: f64) -> f64 {
    std::f64::consts::E
        * sigma_phi
        * (1.0 / (2.0 * kappa) + t0 * t0 / (sigma_phi * sigma_phi)).sqrt()
}

/// [`t_opt`] together with the feasibility of `RC1` (at
/// `rho_J = sigma_phi^2 / kappa`) and `RC3` evaluated at `T = T_opt`;
/// restarts must land in a frequency band, and the quasi-optimal period can
/// fall outside it.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TOptReport {
    pub t_opt: f64,
    pub rc1_holds: bool,
    pub rc3: Rc3Check,
}

pub fn t_opt_report(
    kappa: f64,
    ell: f64,
    t0: f64,
    eta: f64,
    delta: f64,
    alpha: &[bool],
) -> Result<TOptReport> {
    let sigma_phi = ell / kappa;
    let t = t_opt(kappa, sigma_phi, t0);
    let rho_j = sigma_phi * sigma_phi / kappa;
    Ok(TOptReport {
        t_opt: t,
        rc1_holds: check_rc1(t, t0, rho_j, alpha),
        rc3: check_rc3(t, eta, sigma_phi, ell, kappa, delta)?,
    })
}

/// Settling time to the `nu`-ball under the quasi-optimal restart:
/// `(1/eta)(T_opt - T0) ln(sigma_phi sigma_r M0 / nu)`; zero when the
/// initial bound is already inside the ball.
pub fn settling_time(
    kappa: f64,
    sigma_phi: f64,
    sigma_r: f64,
    eta: f64,
    t0: f64,
    nu: f64,
    m0: f64,
) -> Result<f64> {
    if nu <= 0.0 || m0 <= 0.0 {
        return Err(Error::domain("settling_time: need nu > 0 and M0 > 0"));
    }
    let start = sigma_phi * sigma_r * m0;
    if nu >= start {
        return Ok(0.0);
    }
    Ok((t_opt(kappa, sigma_phi, t0) - t0) / eta * (start / nu).ln())
}

/// Upper bound on the admissible consensus gain of the estimation dynamics:
///
/// ```text
/// eps*_delta = 1/(2 sigma_L sqrt(n)) *
///   (1 + sigma_r^2 max{1/T^2 + 4 ell/(T lambda_max), 2 + 2 ell/(T lambda_max)}
///        / (delta min{1, zeta^2}))^-1
/// ```
#[allow(clippy::too_many_arguments)]
pub fn epsilon_star(
    sigma_l: f64,
    sigma_r: f64,
    n: usize,
    t: f64,
    ell: f64,
    lambda_max: f64,
    delta: f64,
    zeta: f64,
) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::domain(
            "epsilon_star: bound degenerates at delta = 0",
        ));
    }
    if zeta <= 0.0 {
        return Err(Error::domain(
            "epsilon_star: need the reverse-Lipschitz constant zeta > 0",
        ));
    }
    let coupling = ell / (t * lambda_max);
    let inner = (1.0 / (t * t) + 4.0 * coupling).max(2.0 + 2.0 * coupling);
    let denom = 1.0 + sigma_r * sigma_r * inner / (delta * zeta.powi(2).min(1.0));
    Ok(1.0 / (2.0 * sigma_l * (n as f64).sqrt()) / denom)
}

/// Feasibility of the joint reset band (`RC1` and `RC3` simultaneously,
/// `rho_J = sigma_phi^2/kappa`, small `delta`):
/// `sigma_phi^4 - sigma_phi^2 < 2 (1 - eta)`.
pub fn reset_band_feasible(sigma_phi: f64, eta: f64) -> bool {
    sigma_phi.powi(4) - sigma_phi.powi(2) < 2.0 * (1.0 - eta)
}

/// Aggregated certificate report for a `(game, params)` pair.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CertificateReport {
    pub condition_numbers: ConditionNumbers,
    pub rho_j: f64,
    pub rc1_holds: bool,
    pub rc2_holds: bool,
    pub rc2_bound: f64,
    pub rc3: Rc3Check,
    /// Absent when the contraction scale is undefined at the requested
    /// `(T, delta)`; the reason lands in `notes`.
    pub gc: Option<GcCertificate>,
    pub gamma: f64,
    pub t_opt: f64,
    pub epsilon_star: Option<f64>,
    pub feasibility_holds: bool,
    pub notes: Vec<String>,
}

/// Builds the full report. `rho_j` defaults to `kappa^-1` for potential
/// games and `sigma_phi^2 kappa^-1` otherwise when not supplied. The
/// `epsilon_star` line is omitted unless the graph spectrum and a
/// reverse-Lipschitz constant are available.
#[allow(clippy::too_many_arguments)]
pub fn certificate_report(
    game: &GameSpec,
    kappa: f64,
    ell: f64,
    params: &crate::momentum::HmNssParams,
    delta: f64,
    rho_j: Option<f64>,
    spectrum: Option<crate::graph::SpectrumSummary>,
    sample_box: Option<&SampleBox>,
    grid_size: usize,
) -> Result<CertificateReport> {
    let sigma_phi = ell / kappa;
    let cn = ConditionNumbers::new(kappa, ell, params.t0, params.t, spectrum.map(|s| s.sigma_l))?;
    let rho_j = rho_j.unwrap_or(if game.class.potential {
        1.0 / kappa
    } else {
        sigma_phi * sigma_phi / kappa
    });
    let rho_f = if game.class.potential {
        ell
    } else {
        sigma_phi * ell
    };
    let mut notes = Vec::new();
    // An undefined contraction scale at this (T, delta) means no
    // certificate, which is a reportable outcome rather than a failure.
    let gc = match is_globally_contractive(
        game,
        rho_f,
        delta,
        params.t,
        params.eta,
        sample_box,
        grid_size,
        &[],
    ) {
        Ok(gc) => Some(gc),
        Err(Error::Domain(msg)) => {
            notes.push(format!("GC test undefined: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };
    let eps = match (spectrum, game.constants.and_then(|c| c.reverse_lipschitz)) {
        (Some(s), Some(zeta)) if delta > 0.0 => Some(epsilon_star(
            s.sigma_l,
            params.sigma_r(),
            params.n,
            params.t,
            ell,
            s.lambda_max,
            delta,
            zeta,
        )?),
        _ => None,
    };
    Ok(CertificateReport {
        condition_numbers: cn,
        rho_j,
        rc1_holds: check_rc1(params.t, params.t0, rho_j, &params.alpha),
        rc2_holds: check_rc2(params.t, params.eta, ell),
        rc2_bound: (1.0 - params.eta) / (2.0 * ell),
        rc3: check_rc3(params.t, params.eta, sigma_phi, ell, kappa, delta)?,
        gc,
        gamma: gamma(params.t, params.t0, rho_j),
        t_opt: t_opt(kappa, sigma_phi, params.t0),
        epsilon_star: eps,
        feasibility_holds: reset_band_feasible(sigma_phi, params.eta),
        notes,
    })
}
