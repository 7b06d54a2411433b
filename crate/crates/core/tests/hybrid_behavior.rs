//! Cross-module behavior of the hybrid dynamics: coupling bounds between
//! the estimation and full-information flows, jump-count windows, and
//! Lyapunov flow-decrease behavior on and off the certificate region.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hybrid_nss::engine::{self, Horizon, HybridSystem, Perturbation, RunOptions};
use hybrid_nss::error::Result;
use hybrid_nss::estimation::{consensus_error, H2System};
use hybrid_nss::game::{GameConstants, GameSpec};
use hybrid_nss::graph::{Graph, SelectionMatrices};
use hybrid_nss::lyapunov::{check_flow_decrease, LyapunovVariant};
use hybrid_nss::momentum::{H1System, HmNssParams, StateLayout};
use hybrid_nss::synth::{catalog, generate_random_game, RandomGameSpec};

fn strongly_monotone_game(n: usize, seed: u64) -> Arc<GameSpec> {
    Arc::new(
        generate_random_game(RandomGameSpec {
            n,
            kappa: 1.0,
            ell: 1.4,
            potential: false,
            seed,
        })
        .unwrap(),
    )
}

/// The estimation flow restricted to `(q, p, tau)` deviates from the
/// full-information flow by at most a Lipschitz multiple of the consensus
/// error: `lambda_max(L) + 2 T ell` bounds the coupling constant.
#[test]
fn estimation_flow_coupled_to_theta() {
    let n = 4;
    let game = strongly_monotone_game(n, 31);
    let graph = Graph::ring(n).unwrap();
    let params = HmNssParams::new(n, 0.5, 0.2, 1.0).unwrap();
    let h1 = H1System::new(game.clone(), graph.clone(), params.clone()).unwrap();
    let h2 = H2System::new(game.clone(), graph.clone(), params.clone(), 0.3).unwrap();
    let sel = SelectionMatrices::new(n).unwrap();
    let lambda_max = graph.spectrum().unwrap().lambda_max;
    let ell = 1.4;
    let bound = (lambda_max + 2.0 * params.t * ell) * 2.0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ratio = 0.0f64;
    for _ in 0..200 {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(params.t0..params.t)).collect();
        let qh: Vec<f64> = (0..n * n - n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x1 = h1.initial(&q, Some(&p), Some(&tau));
        let x2 = h2.initial(&q, Some(&p), Some(&tau), Some(&qh));
        let mut d1 = DVector::zeros(h1.dim());
        let mut d2 = DVector::zeros(h2.dim());
        h1.flow(0.0, &x1, &mut d1).unwrap();
        h2.flow(0.0, &x2, &mut d2).unwrap();
        let theta = consensus_error(&sel, &q, &qh);
        let gap: f64 = (0..3 * n)
            .map(|i| (d1[i] - d2[i]) * (d1[i] - d2[i]))
            .sum::<f64>()
            .sqrt();
        if theta > 1e-12 {
            worst_ratio = worst_ratio.max(gap / theta);
        } else {
            assert!(gap < 1e-12);
        }
    }
    assert!(
        worst_ratio <= bound,
        "coupling ratio {worst_ratio} exceeded the Lipschitz bound {bound}"
    );
}

/// At most `n` jumps occur in any continuous-time window of length
/// `(T - T0)/eta`.
#[test]
fn jump_count_bounded_per_window() {
    let n = 5;
    let game = strongly_monotone_game(n, 77);
    let params = HmNssParams::new(n, 0.5, 0.1, 0.9).unwrap();
    let sys = H1System::new(game, Graph::ring(n).unwrap(), params.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let tau0: Vec<f64> = (0..n).map(|_| rng.gen_range(params.t0..params.t)).collect();
    let x0 = sys.initial(&q0, None, Some(&tau0));
    let arc = engine::run(
        &sys,
        &x0,
        Horizon {
            t_max: 10.0 * params.flow_interval(),
            j_max: 100_000,
        },
        RunOptions {
            step: params.default_step(),
            record_stride: 50,
            seed: 0,
        },
    )
    .unwrap();
    let times: Vec<f64> = arc.events.iter().map(|e| e.t).collect();
    let window = params.flow_interval();
    for (i, &t_start) in times.iter().enumerate() {
        let in_window = times[i..]
            .iter()
            .take_while(|&&t| t < t_start + window - 1e-12)
            .count();
        assert!(
            in_window <= n,
            "{in_window} jumps within one window at t = {t_start}"
        );
    }
}

/// Strongly monotone potential game under the reset condition: the full
/// Lyapunov function never increases along synchronized flows.
#[test]
fn flow_decrease_clean_under_certificate() {
    let n = 4;
    let game = Arc::new(
        generate_random_game(RandomGameSpec {
            n,
            kappa: 1.0,
            ell: 2.0,
            potential: true,
            seed: 9,
        })
        .unwrap(),
    );
    let params = HmNssParams::new(n, 0.5, 0.12, 1.2).unwrap();
    let sys = H1System::new(game.clone(), Graph::complete(n).unwrap(), params.clone()).unwrap();
    let x0 = sys.initial(&[2.0, -1.0, 0.5, 1.5], None, None);
    let arc = engine::run(
        &sys,
        &x0,
        Horizon {
            t_max: 20.0,
            j_max: 100_000,
        },
        RunOptions {
            step: params.default_step(),
            record_stride: 10,
            seed: 0,
        },
    )
    .unwrap();
    let rep = check_flow_decrease(
        &game,
        LyapunovVariant::Potential,
        StateLayout::h1(n),
        &arc,
        params.t_star(),
    )
    .unwrap();
    assert!(rep.checked > 100);
    assert_eq!(
        rep.violations.len(),
        0,
        "max positive vdot {}",
        rep.max_positive_vdot
    );
}

/// Past the contraction threshold the non-potential Lyapunov function
/// gains sign-indefinite stretches during flows; the checker must flag
/// them rather than average them away.
#[test]
fn flow_decrease_violations_past_threshold() {
    let game = Arc::new(catalog("example4", None).unwrap());
    let t_bar = (4.0f64 / 3.0).sqrt();
    let params = HmNssParams::new(2, 0.5, 1.0, 2.0 * t_bar)
        .unwrap()
        .with_alpha(vec![true, true])
        .unwrap();
    let sys = H1System::new(game.clone(), Graph::complete(2).unwrap(), params.clone()).unwrap();
    let x0 = sys.initial(&[4.0, 1.0], None, None);
    let arc = engine::run(
        &sys,
        &x0,
        Horizon {
            t_max: 60.0,
            j_max: 100_000,
        },
        RunOptions {
            step: params.default_step(),
            record_stride: 5,
            seed: 0,
        },
    )
    .unwrap();
    let rep = check_flow_decrease(
        &game,
        LyapunovVariant::NonPotential,
        StateLayout::h1(2),
        &arc,
        params.t_star(),
    )
    .unwrap();
    assert!(
        !rep.violations.is_empty(),
        "expected recorded increase stretches past the threshold"
    );
}

/// A jump map that refuses to leave the jump set trips the Zeno guard and
/// is reported as an annotation, not an error.
#[test]
fn zeno_guard_reports_and_stops() {
    struct Stuck;
    impl HybridSystem for Stuck {
        fn dim(&self) -> usize {
            1
        }
        fn flow(&self, _t: f64, _x: &DVector<f64>, out: &mut DVector<f64>) -> Result<()> {
            out[0] = 1.0;
            Ok(())
        }
        fn in_flow_set(&self, _x: &DVector<f64>) -> bool {
            true
        }
        fn in_jump_set(&self, x: &DVector<f64>) -> bool {
            x[0] >= 1.0
        }
        fn event_value(&self, x: &DVector<f64>) -> f64 {
            x[0] - 1.0
        }
        fn jump(
            &self,
            x: &DVector<f64>,
            _rng: &mut ChaCha8Rng,
        ) -> Result<(DVector<f64>, Option<usize>, String)> {
            Ok((x.clone(), None, "noop".into()))
        }
        fn cascade_guard(&self) -> usize {
            10
        }
    }
    let arc = engine::run(
        &Stuck,
        &DVector::from_column_slice(&[1.0]),
        Horizon {
            t_max: 5.0,
            j_max: 1000,
        },
        RunOptions::default(),
    )
    .unwrap();
    assert!(arc.annotations.zeno_tripped);
    assert!(arc.events.len() <= 10);
}

/// Perturbed runs remain deterministic: the seeded-noise signal is a
/// function of time alone, so bisection re-evaluation cannot fork arcs.
#[test]
fn seeded_noise_is_reproducible_through_events() {
    let n = 3;
    let game = strongly_monotone_game(n, 15);
    let params = HmNssParams::new(n, 0.5, 0.1, 0.8).unwrap();
    let mk = || {
        let sys = H1System::new(game.clone(), Graph::complete(n).unwrap(), params.clone())
            .unwrap()
            .with_perturbation(Perturbation::SeededNoise {
                delta: 0.2,
                seed: 9,
                hold: 0.05,
            });
        let x0 = sys.initial(&[1.0, -1.0, 0.5], None, None);
        engine::run(
            &sys,
            &x0,
            Horizon {
                t_max: 6.0,
                j_max: 10_000,
            },
            RunOptions {
                step: params.default_step(),
                record_stride: 10,
                seed: 3,
            },
        )
        .unwrap()
    };
    let a = mk();
    let b = mk();
    assert_eq!(a.samples.len(), b.samples.len());
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        for (va, vb) in sa.x.iter().zip(sb.x.iter()) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }
}

/// Quadratic-game canonical costs and the dense matrix route agree on the
/// estimation flow for a bigger graph, exercising the blockwise
/// communication product at scale.
#[test]
fn blockwise_comm_matches_dense_on_random_graph() {
    let n = 8;
    let game = strongly_monotone_game(n, 23);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let graph = Graph::erdos_renyi(n, 0.4, &mut rng).unwrap();
    let sel = SelectionMatrices::new(n).unwrap();
    let dense = sel.l_big_dense(&graph);
    for _ in 0..20 {
        let e = DVector::from_fn(n * n, |_, _| rng.gen_range(-4.0..4.0));
        let mut fast = DVector::zeros(n * n);
        sel.apply_comm(&graph, &e, &mut fast);
        assert!((&dense * &e - fast).amax() < 1e-12);
    }
    // Hand-check one full estimation flow entry against explicit algebra.
    let params = HmNssParams::new(n, 0.5, 0.1, 1.0).unwrap();
    let h2 = H2System::new(game.clone(), graph.clone(), params, 0.25).unwrap();
    let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let qh: Vec<f64> = (0..n * n - n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = h2.initial(&q, None, None, Some(&qh));
    let mut d = DVector::zeros(h2.dim());
    h2.flow(0.0, &x, &mut d).unwrap();
    let e = sel.psi(&q, &qh).unwrap();
    let le = &dense * &e;
    let qdot0 = 2.0 / 0.1 * (q[0] - q[0]) - le[0];
    assert!((d[0] - qdot0).abs() < 1e-12);
}

/// Quasi-optimal restart: with T = T_opt feasible (RC1 holds and the
/// contraction certificate survives at that period), the trajectory enters
/// the nu-ball no later than the closed-form settling time.
#[test]
fn settling_time_bound_holds_at_quasi_optimal_restart() {
    use hybrid_nss::certificates::{check_rc1, is_globally_contractive, t_opt};
    use hybrid_nss::lyapunov::{check_rate_bounds, RateBoundCheck};
    let n = 4;
    let (kappa, ell) = (1.0, 1.05);
    let sigma_phi = ell / kappa;
    let game = Arc::new(
        generate_random_game(RandomGameSpec {
            n,
            kappa,
            ell,
            potential: false,
            seed: 55,
        })
        .unwrap(),
    );
    let t0 = 0.1;
    let t = t_opt(kappa, sigma_phi, t0);
    let params = HmNssParams::new(n, 0.5, t0, t).unwrap();
    let rho_j = sigma_phi * sigma_phi / kappa;
    assert!(check_rc1(t, t0, rho_j, &params.alpha));
    assert!(
        is_globally_contractive(&game, sigma_phi * ell, 0.01, t, params.eta, None, 0, &[])
            .unwrap()
            .holds
    );
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let sys = H1System::new(game.clone(), Graph::complete(n).unwrap(), params.clone()).unwrap();
    let x0 = sys.initial(&q0, None, None);
    let arc = engine::run(
        &sys,
        &x0,
        Horizon {
            t_max: 60.0,
            j_max: 100_000,
        },
        RunOptions {
            step: params.default_step(),
            record_stride: 20,
            seed: 0,
        },
    )
    .unwrap();
    let rep = check_rate_bounds(
        &game,
        StateLayout::h1(n),
        &arc,
        &params,
        RateBoundCheck::Settling {
            kappa,
            ell,
            nu: 1e-3,
        },
    )
    .unwrap();
    assert!(rep.checked > 10, "settling window must contain samples");
    assert_eq!(
        rep.violations, 0,
        "worst settling margin {}",
        rep.worst_margin
    );
}

/// The quasi-optimal restart report surfaces infeasibility instead of
/// reconciling it: for the shallow non-potential constants the RC1 side
/// holds at T_opt while RC3 does not.
#[test]
fn t_opt_report_surfaces_feasibility() {
    use hybrid_nss::certificates::t_opt_report;
    let rep = t_opt_report(0.02, 0.0214, 0.1, 0.5, 0.0, &[false; 30]).unwrap();
    assert!((rep.t_opt - 14.545).abs() < 1e-3);
    assert!(rep.rc1_holds);
    assert!(
        !rep.rc3.holds,
        "RC3 bound {:?} should exclude T_opt",
        rep.rc3.bound
    );
}

/// Without disturbances the un-restarted ODE does converge on a strongly
/// convex potential game (the instability needs the perturbation).
#[test]
fn baseline_converges_without_noise() {
    let game = Arc::new(catalog("duopoly_frihauf", None).unwrap());
    let ne = game.known_ne[0].clone();
    let sys = hybrid_nss::momentum::BaselineOde::new(game, 0.5).unwrap();
    let x0 = sys.initial(&[0.0, 0.0], None, 2.0 * 2.0f64.sqrt() * 1e-3);
    let arc = engine::run(
        &sys,
        &x0,
        Horizon {
            t_max: 200.0,
            j_max: 1,
        },
        RunOptions {
            step: 1e-3,
            record_stride: 200,
            seed: 0,
        },
    )
    .unwrap();
    let d0: f64 = (0..2)
        .map(|i| (arc.samples[0].x[i] - ne[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let d1: f64 = (0..2)
        .map(|i| (arc.last().unwrap().x[i] - ne[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(
        d1 < 0.05 * d0,
        "baseline did not approach the NE: {d1} from {d0}"
    );
}

/// The non-potential Lyapunov variant needs the cocoercivity constant and
/// says so; with it, evaluation succeeds on the same state.
#[test]
fn lyapunov_config_errors_are_actionable() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, -0.4, 2.0]);
    let q_star = DVector::zeros(2);
    let b = -(&a * &q_star);
    let bare = GameSpec::quadratic(a.clone(), b.clone())
        .unwrap()
        .with_known_ne(q_star.clone())
        .unwrap();
    let x = DVector::from_column_slice(&[1.0, 0.0, 1.0, 0.0, 0.5, 0.5]);
    let err = hybrid_nss::lyapunov::eval_lyapunov(
        &bare,
        LyapunovVariant::NonPotential,
        StateLayout::h1(2),
        hybrid_nss::engine::HybridTime { t: 0.0, j: 0 },
        &x,
    )
    .unwrap_err();
    assert!(err.to_string().contains("cocoercivity"));
    let with = GameSpec::quadratic(a, b)
        .unwrap()
        .with_constants(GameConstants {
            kappa: 2.0,
            ell: 2.04,
            cocoercivity: Some(2.0 / (2.04 * 2.04)),
            reverse_lipschitz: Some(2.0),
        })
        .unwrap()
        .with_known_ne(q_star)
        .unwrap();
    assert!(hybrid_nss::lyapunov::eval_lyapunov(
        &with,
        LyapunovVariant::NonPotential,
        StateLayout::h1(2),
        hybrid_nss::engine::HybridTime { t: 0.0, j: 0 },
        &x,
    )
    .is_ok());
}
