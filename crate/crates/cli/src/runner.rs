//! Experiment execution: single runs, sweeps, certificate-only runs and
//! arc comparison.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use hybrid_nss::batch;
use hybrid_nss::certificates::{certificate_report, CertificateReport};
use hybrid_nss::engine::{self, Horizon, HybridArc, RunOptions};
use hybrid_nss::estimation::H2System;
use hybrid_nss::game::{GameSpec, SampleBox};
use hybrid_nss::graph::Graph;
use hybrid_nss::lyapunov::{self, LyapunovVariant, RateFit};
use hybrid_nss::momentum::{BaselineOde, H1System, HmNssParams, PsgFlow, StateLayout};
use hybrid_nss::payoff::{H3System, H4System};

use crate::config::{build_game, parse_config, patch_scalar, ExperimentConfig, Variant};
use crate::output::{fmt_f64, write_trajectory_csv};

/// CLI-level error carrying the exit-code class.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration: exit 2.
    Config(String),
    /// Internal numerical failure: exit 3.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Internal(m) => m,
        }
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

fn core_err(e: hybrid_nss::Error) -> CliError {
    match crate::config::exit_code_for(&e) {
        2 => CliError::Config(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

#[derive(Debug, serde::Serialize)]
pub struct LyapunovSummary {
    pub variant: String,
    pub flow_checked: usize,
    pub flow_violations: usize,
    pub max_positive_vdot: f64,
    pub cascades: usize,
    pub jump_increase_violations: usize,
    pub max_contraction_factor: Option<f64>,
    pub contraction_bound: Option<f64>,
    pub contraction_violations: usize,
}

/// Deterministic run summary (wall time goes to stderr, not here, so that
/// identical configs reproduce byte-identical JSON).
#[derive(Debug, serde::Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub variant: String,
    pub n: usize,
    pub initial_dist: Option<f64>,
    pub final_dist: Option<f64>,
    pub diverged: bool,
    pub zeno_tripped: bool,
    pub jump_count: u32,
    pub sample_count: usize,
    pub sync_time_observed: Option<f64>,
    /// `sup dist` after the minimum over `min dist`: large values flag the
    /// dip-then-grow signature of unstable runs.
    pub instability_ratio: Option<f64>,
    pub oscillatory_growth: Option<bool>,
    pub oscillator_drift_max: Option<f64>,
    pub lyapunov: Option<LyapunovSummary>,
    pub fitted_rate: Option<RateFit>,
    pub certificates: Option<CertificateReport>,
    pub notes: Vec<String>,
}

struct BuiltRun {
    arc: HybridArc,
    layout: StateLayout,
    variant: Variant,
    game: Arc<GameSpec>,
    params: Option<HmNssParams>,
}

fn build_and_run(cfg: &ExperimentConfig) -> Result<BuiltRun, CliError> {
    let built = build_game(&cfg.game).map_err(CliError::Config)?;
    let game = built.game.clone();
    let n = game.n;
    let variant = Variant::parse(&cfg.dynamics.variant).map_err(CliError::Config)?;
    let q0 = cfg.init.q0(n).map_err(CliError::Config)?;
    let p0 = cfg.init.p.clone();
    if let Some(p) = &p0 {
        if p.len() != n {
            return cfg_err(format!("init.p: need {n} entries"));
        }
    }
    let integ = cfg.integrator.as_ref();
    let stride = integ.and_then(|s| s.record_stride).unwrap_or(10);
    let seed = integ.and_then(|s| s.seed).unwrap_or(0);
    let j_max = cfg.horizon.j_max.unwrap_or(1_000_000);
    let horizon = Horizon {
        t_max: cfg.horizon.t_max,
        j_max,
    };
    let perturbation = match &cfg.perturbation {
        Some(p) => p.build().map_err(CliError::Config)?,
        None => engine::Perturbation::None,
    };

    let needs_graph = matches!(
        variant,
        Variant::H1 | Variant::H2 | Variant::H3 | Variant::H4
    );
    let graph: Option<Graph> = if needs_graph {
        Some(match &cfg.graph {
            Some(g) => g.build(n).map_err(CliError::Config)?,
            None => Graph::complete(n).map_err(core_err)?,
        })
    } else {
        None
    };
    let params: Option<HmNssParams> = match variant {
        Variant::H1 | Variant::H2 | Variant::H3 | Variant::H4 => Some(
            cfg.params
                .as_ref()
                .ok_or_else(|| CliError::Config("params section required".into()))?
                .build(n)
                .map_err(CliError::Config)?,
        ),
        _ => None,
    };

    let (arc, layout) = match variant {
        Variant::PsgFlow => {
            let mut sys = PsgFlow::new(game.clone());
            sys.perturbation = perturbation;
            let step = integ.and_then(|s| s.step).unwrap_or(1e-3);
            let x0 = DVector::from_column_slice(&q0);
            let arc = engine::run(
                &sys,
                &x0,
                horizon,
                RunOptions {
                    step,
                    record_stride: stride,
                    seed,
                },
            )
            .map_err(core_err)?;
            (
                arc,
                StateLayout {
                    n,
                    has_mu: false,
                    has_qhat: false,
                },
            )
        }
        Variant::BaselineOde => {
            let ps = cfg
                .params
                .as_ref()
                .ok_or_else(|| CliError::Config("params section required (eta, t0)".into()))?;
            let sys = BaselineOde::new(game.clone(), ps.eta)
                .map_err(core_err)?
                .with_perturbation(perturbation);
            let step = integ.and_then(|s| s.step).unwrap_or(1e-3);
            let x0 = sys.initial(&q0, p0.as_deref(), ps.t0);
            let arc = engine::run(
                &sys,
                &x0,
                horizon,
                RunOptions {
                    step,
                    record_stride: stride,
                    seed,
                },
            )
            .map_err(core_err)?;
            (
                arc,
                StateLayout {
                    n,
                    has_mu: false,
                    has_qhat: false,
                },
            )
        }
        Variant::H1 => {
            let params = params.clone().unwrap();
            let tau0 = cfg.init.tau0(&params).map_err(CliError::Config)?;
            let sys = H1System::new(game.clone(), graph.unwrap(), params.clone())
                .map_err(core_err)?
                .with_perturbation(perturbation);
            let step = integ
                .and_then(|s| s.step)
                .unwrap_or_else(|| params.default_step());
            let x0 = sys.initial(&q0, p0.as_deref(), tau0.as_deref());
            let arc = engine::run(
                &sys,
                &x0,
                horizon,
                RunOptions {
                    step,
                    record_stride: stride,
                    seed,
                },
            )
            .map_err(core_err)?;
            (arc, sys.layout())
        }
        Variant::H2 => {
            let params = params.clone().unwrap();
            let tau0 = cfg.init.tau0(&params).map_err(CliError::Config)?;
            let vs = cfg.variant.as_ref();
            let epsilon = vs
                .and_then(|v| v.epsilon)
                .ok_or_else(|| CliError::Config("variant.epsilon required for h2".into()))?;
            let sys = H2System::new(game.clone(), graph.unwrap(), params.clone(), epsilon)
                .map_err(core_err)?
                .with_perturbation(perturbation);
            let base_step = integ
                .and_then(|s| s.step)
                .unwrap_or_else(|| params.default_step());
            let step = sys.stiff_step(base_step);
            if let Some(qh) = &cfg.init.qhat {
                if qh.len() != n * n - n {
                    return cfg_err(format!("init.qhat: need {} entries", n * n - n));
                }
            }
            let x0 = sys.initial(
                &q0,
                p0.as_deref(),
                tau0.as_deref(),
                cfg.init.qhat.as_deref(),
            );
            let arc = engine::run(
                &sys,
                &x0,
                horizon,
                RunOptions {
                    step,
                    record_stride: stride,
                    seed,
                },
            )
            .map_err(core_err)?;
            (arc, sys.layout())
        }
        Variant::H3 | Variant::H4 => {
            let params = params.clone().unwrap();
            let tau0 = cfg.init.tau0(&params).map_err(CliError::Config)?;
            let vs = cfg
                .variant
                .as_ref()
                .cloned()
                .unwrap_or(crate::config::VariantSection {
                    epsilon: None,
                    eps_a: None,
                    eps_p: None,
                    eps_c: None,
                    freqs: None,
                });
            let bank = vs.oscillator_bank(n).map_err(CliError::Config)?;
            let costs = game.costs().map_err(core_err)?;
            if let Some(mu) = &cfg.init.mu {
                if mu.len() != 2 * n {
                    return cfg_err(format!("init.mu: need {} entries", 2 * n));
                }
            }
            let base_step = integ
                .and_then(|s| s.step)
                .unwrap_or_else(|| params.default_step());
            if matches!(variant, Variant::H3) {
                let sys =
                    H3System::new(costs, graph.unwrap(), params.clone(), bank).map_err(core_err)?;
                let step = sys.bank.stiff_step(base_step);
                let x0 = sys.initial(&q0, p0.as_deref(), tau0.as_deref(), cfg.init.mu.as_deref());
                let arc = engine::run(
                    &sys,
                    &x0,
                    horizon,
                    RunOptions {
                        step,
                        record_stride: stride,
                        seed,
                    },
                )
                .map_err(core_err)?;
                (arc, sys.layout())
            } else {
                let eps_c = vs
                    .eps_c
                    .ok_or_else(|| CliError::Config("variant.eps_c required for h4".into()))?;
                let sys = H4System::new(costs, graph.unwrap(), params.clone(), bank, eps_c)
                    .map_err(core_err)?;
                let step = sys.stiff_step(base_step);
                if let Some(qh) = &cfg.init.qhat {
                    if qh.len() != n * n - n {
                        return cfg_err(format!("init.qhat: need {} entries", n * n - n));
                    }
                }
                let x0 = sys.initial(
                    &q0,
                    p0.as_deref(),
                    tau0.as_deref(),
                    cfg.init.mu.as_deref(),
                    cfg.init.qhat.as_deref(),
                );
                let arc = engine::run(
                    &sys,
                    &x0,
                    horizon,
                    RunOptions {
                        step,
                        record_stride: stride,
                        seed,
                    },
                )
                .map_err(core_err)?;
                (arc, sys.layout())
            }
        }
    };
    Ok(BuiltRun {
        arc,
        layout,
        variant,
        game,
        params,
    })
}

fn pick_lyapunov_variant(
    cfg: &ExperimentConfig,
    game: &GameSpec,
    layout: StateLayout,
) -> Option<LyapunovVariant> {
    let choice = cfg
        .diagnostics
        .as_ref()
        .and_then(|d| d.lyapunov.clone())
        .unwrap_or_else(|| "auto".to_string());
    let d = cfg.diagnostics.as_ref().and_then(|x| x.d).unwrap_or(0.5);
    let has_potential =
        game.class.potential && game.potential_error(game.known_ne.first()?).is_ok();
    let has_co = game.constants.and_then(|c| c.cocoercivity).is_some();
    match choice.as_str() {
        "none" => None,
        "potential" => Some(LyapunovVariant::Potential),
        "nonpotential" => Some(LyapunovVariant::NonPotential),
        "graph" => Some(LyapunovVariant::Graph { d }),
        _ => {
            if layout.has_qhat && has_co {
                Some(LyapunovVariant::Graph { d })
            } else if has_potential {
                Some(LyapunovVariant::Potential)
            } else if has_co {
                Some(LyapunovVariant::NonPotential)
            } else {
                None
            }
        }
    }
}

/// Runs one experiment and writes `trajectory.csv` + `summary.json` under
/// `out_dir`. Returns the summary.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    config_hash: &str,
) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let run = build_and_run(cfg)?;
    let layout = run.layout;
    let game = run.game.clone();
    let n = game.n;

    // Per-sample distance to the stored NE set.
    let ne_known = !game.known_ne.is_empty();
    let dist: Vec<f64> = run
        .arc
        .samples
        .iter()
        .map(|s| {
            if ne_known {
                game.dist_to_ne(&DVector::from_column_slice(layout.q(s.x.as_slice())))
                    .unwrap_or(f64::NAN)
            } else {
                f64::NAN
            }
        })
        .collect();

    // Lyapunov evaluation only applies to the state layouts that carry the
    // full (q, p, tau) structure.
    let full_layout = run.arc.samples.first().map(|s| s.x.len()) == Some(layout.dim());
    let lyap_variant = if full_layout {
        pick_lyapunov_variant(cfg, &game, layout)
    } else {
        None
    };
    let v_total: Vec<f64> = match lyap_variant {
        Some(v) => run
            .arc
            .samples
            .iter()
            .map(|s| {
                lyapunov::eval_lyapunov(&game, v, layout, s.time, &s.x)
                    .map(|l| l.v_total)
                    .unwrap_or(f64::NAN)
            })
            .collect(),
        None => vec![f64::NAN; run.arc.samples.len()],
    };

    let lyap_summary = match (lyap_variant, &run.params) {
        (Some(v), Some(params)) => {
            let flow = lyapunov::check_flow_decrease(&game, v, layout, &run.arc, params.t_star())
                .map_err(core_err)?;
            let rho_j = cfg.diagnostics.as_ref().and_then(|d| d.rho_j);
            let jump = lyapunov::check_jump_decrease(&game, v, layout, &run.arc, params, rho_j)
                .map_err(core_err)?;
            Some(LyapunovSummary {
                variant: format!("{v:?}"),
                flow_checked: flow.checked,
                flow_violations: flow.violations.len(),
                max_positive_vdot: flow.max_positive_vdot,
                cascades: jump.cascades.len(),
                jump_increase_violations: jump.increase_violations,
                max_contraction_factor: jump.max_contraction_factor,
                contraction_bound: jump.contraction_bound,
                contraction_violations: jump.contraction_violations,
            })
        }
        _ => None,
    };

    // Rate fit over the requested window (default: the second half).
    let fitted_rate = if ne_known {
        let window = cfg
            .diagnostics
            .as_ref()
            .and_then(|d| d.fit_window)
            .map(|w| (w[0], w[1]))
            .unwrap_or((cfg.horizon.t_max / 2.0, cfg.horizon.t_max));
        lyapunov::fit_exponential_rate(&run.arc, layout, &game.known_ne[0], window).ok()
    } else {
        None
    };

    let sync_time = match &run.params {
        Some(p) if full_layout => lyapunov::observed_sync_time(&run.arc, layout, p.t0, p.t),
        _ => None,
    };

    // Instability signature: growth after the minimum distance.
    let (instability_ratio, oscillatory_growth) = if ne_known && !dist.is_empty() {
        let (k_min, d_min) = dist.iter().enumerate().filter(|(_, d)| d.is_finite()).fold(
            (0usize, f64::INFINITY),
            |acc, (k, &d)| if d < acc.1 { (k, d) } else { acc },
        );
        let sup_after = dist[k_min..].iter().cloned().fold(0.0, f64::max);
        let ratio = sup_after / d_min.max(1e-300);
        (Some(ratio), Some(ratio >= 10.0))
    } else {
        (None, None)
    };

    // Certificates, when the constants and reset parameters are available.
    let built = build_game(&cfg.game).map_err(CliError::Config)?;
    let certificates = match (&run.params, built.kappa, built.ell) {
        (Some(params), Some(kappa), Some(ell)) if kappa > 0.0 => {
            let cert_cfg = cfg.certificates.as_ref();
            let delta = cert_cfg.and_then(|c| c.delta).unwrap_or(0.0);
            let rho_j = cert_cfg.and_then(|c| c.rho_j);
            let grid = cert_cfg.and_then(|c| c.grid).unwrap_or(10_000);
            let spectrum = match &cfg.graph {
                Some(g) => Some(
                    g.build(n)
                        .map_err(CliError::Config)?
                        .spectrum()
                        .map_err(core_err)?,
                ),
                None => Some(
                    Graph::complete(n)
                        .map_err(core_err)?
                        .spectrum()
                        .map_err(core_err)?,
                ),
            };
            let boxx = if game.is_quadratic() {
                None
            } else {
                let hw = cert_cfg.and_then(|c| c.box_half_width).unwrap_or(5.0);
                Some(SampleBox::centered(n, hw).map_err(core_err)?)
            };
            Some(
                certificate_report(
                    &game,
                    kappa,
                    ell,
                    params,
                    delta,
                    rho_j,
                    spectrum,
                    boxx.as_ref(),
                    grid,
                )
                .map_err(core_err)?,
            )
        }
        _ => None,
    };

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Internal(format!("creating {}: {e}", out_dir.display())))?;
    write_trajectory_csv(
        &out_dir.join("trajectory.csv"),
        run.variant.name(),
        layout,
        &run.arc,
        &dist,
        &v_total,
    )
    .map_err(|e| CliError::Internal(format!("writing trajectory.csv: {e}")))?;

    let summary = RunSummary {
        config_hash: config_hash.to_string(),
        variant: run.variant.name().to_string(),
        n,
        initial_dist: dist.first().copied().filter(|d| d.is_finite()),
        final_dist: dist.last().copied().filter(|d| d.is_finite()),
        diverged: run.arc.annotations.diverged,
        zeno_tripped: run.arc.annotations.zeno_tripped,
        jump_count: run.arc.events.len() as u32,
        sample_count: run.arc.samples.len(),
        sync_time_observed: sync_time,
        instability_ratio,
        oscillatory_growth,
        oscillator_drift_max: if layout.has_mu {
            Some(run.arc.annotations.projection_drift_max)
        } else {
            None
        },
        lyapunov: lyap_summary,
        fitted_rate,
        certificates,
        notes: game.notes.clone(),
    };
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")
        .map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!(
        "[run] variant={} samples={} jumps={} wall={:.3}s",
        run.variant.name(),
        summary.sample_count,
        summary.jump_count,
        started.elapsed().as_secs_f64()
    );
    Ok(summary)
}

/// One sweep row: run index, the patched `(path, value)` assignments and
/// the run's summary.
pub type SweepRow = (usize, Vec<(String, f64)>, RunSummary);

/// Cartesian sweep over the config's axes; one run per grid point executed
/// in parallel with stable output ordering under `out_root/run_XYZ/`.
pub fn run_sweep(
    raw: &toml::Value,
    cfg: &ExperimentConfig,
    out_root: &Path,
    config_hash: &str,
) -> Result<Vec<SweepRow>, CliError> {
    if cfg.sweep.is_empty() {
        return cfg_err("sweep: config declares no sweep axes");
    }
    for axis in &cfg.sweep {
        if axis.values.is_empty() {
            return cfg_err(format!("sweep axis '{}': empty value list", axis.path));
        }
    }
    // Build the cartesian product of axis assignments.
    let mut grid: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for axis in &cfg.sweep {
        let mut next = Vec::new();
        for point in &grid {
            for &v in &axis.values {
                let mut p = point.clone();
                p.push((axis.path.clone(), v));
                next.push(p);
            }
        }
        grid = next;
    }
    // Pre-parse every patched config so config errors surface before any run.
    let mut configs = Vec::with_capacity(grid.len());
    for point in &grid {
        let mut doc = raw.clone();
        if let Some(t) = doc.as_table_mut() {
            t.remove("sweep");
        }
        for (path, v) in point {
            patch_scalar(&mut doc, path, *v).map_err(CliError::Config)?;
        }
        let text = toml::to_string(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
        configs.push(parse_config(&text).map_err(CliError::Config)?);
    }
    let results: Vec<Result<RunSummary, CliError>> = batch::run_batch(configs.len(), |i| {
        let dir = out_root.join(format!("run_{i:03}"));
        run_experiment(&configs[i], &dir, config_hash)
    });
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        out.push((i, grid[i].clone(), r?));
    }
    Ok(out)
}

/// Certificate-only evaluation (no simulation).
pub fn certify(cfg: &ExperimentConfig) -> Result<CertificateReport, CliError> {
    let built = build_game(&cfg.game).map_err(CliError::Config)?;
    let game = built.game;
    let (kappa, ell) = match (built.kappa, built.ell) {
        (Some(k), Some(l)) if k > 0.0 => (k, l),
        _ => return cfg_err("certify: game constants (kappa > 0, ell) are required"),
    };
    let params = cfg
        .params
        .as_ref()
        .ok_or_else(|| CliError::Config("certify: params section required".into()))?
        .build(game.n)
        .map_err(CliError::Config)?;
    let cert_cfg = cfg.certificates.as_ref();
    let delta = cert_cfg.and_then(|c| c.delta).unwrap_or(0.0);
    let rho_j = cert_cfg.and_then(|c| c.rho_j);
    let grid = cert_cfg.and_then(|c| c.grid).unwrap_or(10_000);
    let spectrum = match &cfg.graph {
        Some(g) => g
            .build(game.n)
            .map_err(CliError::Config)?
            .spectrum()
            .map_err(core_err)?,
        None => Graph::complete(game.n)
            .map_err(core_err)?
            .spectrum()
            .map_err(core_err)?,
    };
    let boxx = if game.is_quadratic() {
        None
    } else {
        let hw = cert_cfg.and_then(|c| c.box_half_width).unwrap_or(5.0);
        Some(SampleBox::centered(game.n, hw).map_err(core_err)?)
    };
    certificate_report(
        &game,
        kappa,
        ell,
        &params,
        delta,
        rho_j,
        Some(spectrum),
        boxx.as_ref(),
        grid,
    )
    .map_err(core_err)
}

/// `(T, J, eps)`-closeness of two recorded trajectories.
pub fn compare(a: &Path, b: &Path, t_max: f64, j_max: u32) -> Result<f64, CliError> {
    let arc_a = crate::output::read_trajectory_csv(a).map_err(CliError::Config)?;
    let arc_b = crate::output::read_trajectory_csv(b).map_err(CliError::Config)?;
    let da = arc_a.samples[0].x.len();
    let db = arc_b.samples[0].x.len();
    let dims: Vec<usize> = (0..da.min(db)).collect();
    Ok(engine::closeness_on(&arc_a, &arc_b, t_max, j_max, &dims))
}

/// Stable output directory for a config file: `<output.dir>/<file stem>`.
pub fn out_dir_for(cfg: &ExperimentConfig, config_path: &Path) -> PathBuf {
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string());
    let stem = stem.unwrap_or_else(|| "experiment".to_string());
    PathBuf::from(&cfg.output.dir).join(stem)
}

/// One pass/fail style console line per certificate, for `certify`.
pub fn print_certificates(report: &CertificateReport) {
    println!(
        "condition numbers: sigma_phi={} sigma_r={} sigma_L={}",
        fmt_f64(report.condition_numbers.sigma_phi),
        fmt_f64(report.condition_numbers.sigma_r),
        report
            .condition_numbers
            .sigma_l
            .map(fmt_f64)
            .unwrap_or_else(|| "n/a".into()),
    );
    println!(
        "RC1 (rho_J={}): {}",
        fmt_f64(report.rho_j),
        verdict(report.rc1_holds)
    );
    println!(
        "RC2 (T^2 < {}): {}",
        fmt_f64(report.rc2_bound),
        verdict(report.rc2_holds)
    );
    match (report.rc3.unbounded, report.rc3.bound) {
        (true, _) => println!(
            "RC3: degenerate fraction; any T > 0 admissible (delta={})",
            report.rc3.delta
        ),
        (false, Some(b)) => println!(
            "RC3 (T^2 < {}, delta={}): {}",
            fmt_f64(b),
            report.rc3.delta,
            verdict(report.rc3.holds)
        ),
        (false, None) => unreachable!(),
    }
    match &report.gc {
        Some(gc) => println!(
            "GC (rho_F={}, delta={}, min_eig={}, {}): {}",
            fmt_f64(gc.rho_f),
            gc.delta,
            fmt_f64(gc.min_eig),
            if gc.exact {
                "exact"
            } else {
                "grid certificate only"
            },
            verdict(gc.holds)
        ),
        None => println!("GC: undefined at this (T, delta); see notes"),
    }
    println!("gamma(rho_J) = {}", fmt_f64(report.gamma));
    println!("T_opt = {}", fmt_f64(report.t_opt));
    match report.epsilon_star {
        Some(e) => println!("eps* = {}", fmt_f64(e)),
        None => println!("eps* = n/a (needs delta > 0 and a reverse-Lipschitz constant)"),
    }
    println!(
        "reset-band feasibility: {}",
        verdict(report.feasibility_holds)
    );
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
