//! Game synthesis: seeded random quadratic games with prescribed constants,
//! and the built-in catalog used by experiment configs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::game::{solve_quadratic_ne, GameClass, GameConstants, GameSpec, ScalarFn};

/// Targets for [`generate_random_game`].
#[derive(Debug, Clone, Copy)]
pub struct RandomGameSpec {
    pub n: usize,
    pub kappa: f64,
    pub ell: f64,
    /// Symmetric `A` (a potential game) when set.
    pub potential: bool,
    pub seed: u64,
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the sign convention so the factorization is unique.
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Seeded quadratic game with `lambda_min((A + A^T)/2) = kappa` and
/// `sigma_max(A) = ell` (exact up to floating point), NE placed at a seeded
/// random point via `b = -A q*`.
///
/// Symmetric construction: eigenvalues `{kappa, ell, uniform(kappa, ell)}`
/// in a random orthogonal basis. Non-potential construction: orthogonally
/// conjugated 2x2 rotation blocks `[[a, c], [-c, a]]`, one of which pins
/// `a = kappa`, `sqrt(a^2 + c^2) = ell`.
pub fn generate_random_game(spec: RandomGameSpec) -> Result<GameSpec> {
    if !(spec.kappa > 0.0 && spec.ell >= spec.kappa) {
        return Err(Error::config(format!(
            "random game: need 0 < kappa <= ell (got kappa = {}, ell = {})",
            spec.kappa, spec.ell
        )));
    }
    let n = spec.n;
    if n < 1 {
        return Err(Error::config("random game: need n >= 1"));
    }
    if !spec.potential && spec.ell == spec.kappa && n > 1 {
        // A skew part would push sigma_max above kappa; fall through to the
        // symmetric construction which satisfies both targets.
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let a = if spec.potential || spec.ell == spec.kappa {
        let mut eig = vec![0.0; n];
        eig[0] = spec.kappa;
        if n > 1 {
            eig[n - 1] = spec.ell;
        }
        for e in eig.iter_mut().take(n.saturating_sub(1)).skip(1) {
            *e = rng.gen_range(spec.kappa..=spec.ell);
        }
        let q = random_orthogonal(n, &mut rng);
        &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose()
    } else {
        // Pair players into rotation blocks; odd n leaves one scalar block.
        let c_max = (spec.ell * spec.ell - spec.kappa * spec.kappa).sqrt();
        let mut blocks = DMatrix::zeros(n, n);
        let pairs = n / 2;
        for b in 0..pairs {
            let (a_b, c_b) = if b == 0 {
                (spec.kappa, c_max)
            } else {
                let a_b = rng.gen_range(spec.kappa..=0.5 * (spec.kappa + spec.ell));
                let lim = (spec.ell * spec.ell - a_b * a_b).sqrt();
                (a_b, rng.gen_range(0.0..lim))
            };
            let i = 2 * b;
            blocks[(i, i)] = a_b;
            blocks[(i + 1, i + 1)] = a_b;
            blocks[(i, i + 1)] = c_b;
            blocks[(i + 1, i)] = -c_b;
        }
        if n % 2 == 1 {
            blocks[(n - 1, n - 1)] = if n == 1 {
                spec.kappa
            } else {
                rng.gen_range(spec.kappa..=spec.ell)
            };
        }
        let q = random_orthogonal(n, &mut rng);
        &q * blocks * q.transpose()
    };
    let q_star = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let b = -(&a * &q_star);
    let kappa = spec.kappa;
    let ell = spec.ell;
    let game = GameSpec::quadratic(a, b)?
        .with_class(
            GameClass {
                monotone: true,
                strictly_monotone: true,
                strongly_monotone: true,
                potential: spec.potential,
                quadratic: true,
                cocoercive: true,
            }
            .closed(),
        )
        .with_constants(GameConstants {
            kappa,
            ell,
            // kappa-strongly monotone and ell-Lipschitz maps are
            // kappa/ell^2-cocoercive; strong monotonicity also gives the
            // reverse-Lipschitz constant zeta = kappa.
            cocoercivity: Some(kappa / (ell * ell)),
            reverse_lipschitz: Some(kappa),
        })?
        .with_known_ne(q_star)?;
    Ok(game)
}

/// Built-in analytic/quadratic games addressable from experiment configs.
/// `n` applies to the parametric families and is ignored by the fixed ones.
pub fn catalog(name: &str, n: Option<usize>) -> Result<GameSpec> {
    match name {
        // Two-firm market game with symmetric interaction; strongly
        // monotone potential game with kappa = 5, ell = 15.
        "duopoly_frihauf" => {
            let a = DMatrix::from_row_slice(2, 2, &[10.0, -5.0, -5.0, 10.0]);
            let b = DVector::from_column_slice(&[-250.0, -150.0]);
            let game = GameSpec::quadratic(a, b)?;
            let ne = solve_quadratic_ne(&game)?;
            let mut game = game
                .with_class(
                    GameClass {
                        strongly_monotone: true,
                        potential: true,
                        quadratic: true,
                        cocoercive: true,
                        ..Default::default()
                    }
                    .closed(),
                )
                .with_constants(GameConstants {
                    kappa: 5.0,
                    ell: 15.0,
                    cocoercivity: Some(5.0 / 225.0),
                    reverse_lipschitz: Some(5.0),
                })?
                .with_known_ne(ne)?;
            game.notes.push(
                "duopoly_frihauf: NE computed from A, b is (130/3, 110/3); the value \
                 (130/3, 101/3) quoted with the original description of this game does \
                 not solve A q + b = 0, so the linear solve is authoritative."
                    .to_string(),
            );
            Ok(game)
        }
        // Rotational 2-player game G(q) = B (q - q*), B = [[6, 1.5], [-1.5, 6]],
        // q* = (2, -2); strongly monotone, non-potential, kappa = 6.
        "example4" => {
            let a = DMatrix::from_row_slice(2, 2, &[6.0, 1.5, -1.5, 6.0]);
            let q_star = DVector::from_column_slice(&[2.0, -2.0]);
            let b = -(&a * &q_star);
            let ell = 38.25f64.sqrt();
            GameSpec::quadratic(a, b)?
                .with_class(
                    GameClass {
                        strongly_monotone: true,
                        quadratic: true,
                        cocoercive: true,
                        ..Default::default()
                    }
                    .closed(),
                )
                .with_constants(GameConstants {
                    kappa: 6.0,
                    ell,
                    cocoercivity: Some(6.0 / 38.25),
                    reverse_lipschitz: Some(6.0),
                })?
                .with_known_ne(q_star)
        }
        // Decoupled potential game with saturating gradients
        // G_i(q) = q_i / sqrt(1 + q_i^2): strictly but not strongly
        // monotone (curvature vanishes at infinity), unique NE at 0,
        // potential P(q) = sum_i (sqrt(1 + q_i^2) - 1).
        "saturating_gradients" => {
            let n = n.unwrap_or(2);
            let mut costs: Vec<ScalarFn> = Vec::with_capacity(n);
            let mut partials: Vec<ScalarFn> = Vec::with_capacity(n);
            for i in 0..n {
                costs.push(Arc::new(move |q: &[f64]| (1.0 + q[i] * q[i]).sqrt() - 1.0));
                partials.push(Arc::new(move |q: &[f64]| q[i] / (1.0 + q[i] * q[i]).sqrt()));
            }
            GameSpec::analytic(costs, partials)?
                .with_potential(Arc::new(|q: &[f64]| {
                    q.iter().map(|v| (1.0 + v * v).sqrt() - 1.0).sum()
                }))?
                .with_class(
                    GameClass {
                        monotone: true,
                        strictly_monotone: true,
                        potential: true,
                        ..Default::default()
                    }
                    .closed(),
                )
                .with_constants(GameConstants {
                    kappa: 0.0,
                    ell: 1.0,
                    cocoercivity: Some(1.0),
                    reverse_lipschitz: None,
                })?
                .with_known_ne(DVector::zeros(n))
        }
        // Decoupled quartic potential game G_i(q) = q_i^3: strictly
        // monotone with vanishing curvature at the NE.
        "quartic_potential" => {
            let n = n.unwrap_or(2);
            let mut costs: Vec<ScalarFn> = Vec::with_capacity(n);
            let mut partials: Vec<ScalarFn> = Vec::with_capacity(n);
            for i in 0..n {
                costs.push(Arc::new(move |q: &[f64]| 0.25 * q[i].powi(4)));
                partials.push(Arc::new(move |q: &[f64]| q[i].powi(3)));
            }
            GameSpec::analytic(costs, partials)?
                .with_potential(Arc::new(|q: &[f64]| {
                    q.iter().map(|v| 0.25 * v.powi(4)).sum()
                }))?
                .with_class(
                    GameClass {
                        monotone: true,
                        strictly_monotone: true,
                        potential: true,
                        ..Default::default()
                    }
                    .closed(),
                )
                .with_known_ne(DVector::zeros(n))
        }
        _ => Err(Error::config(format!("unknown catalog game '{name}'"))),
    }
}
