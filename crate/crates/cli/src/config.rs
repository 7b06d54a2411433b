//! Experiment configuration schema and builders.
//!
//! Configs are TOML with nested sections; unknown keys are rejected
//! (fail-closed). Every source of randomness carries an explicit seed, so a
//! config file fully determines its outputs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use hybrid_nss::engine::Perturbation;
use hybrid_nss::error::Error as CoreError;
use hybrid_nss::game::{GameConstants, GameSpec};
use hybrid_nss::graph::Graph;
use hybrid_nss::momentum::{HmNssParams, JumpPolicy};
use hybrid_nss::payoff::{Frequency, OscillatorBank};
use hybrid_nss::synth::{catalog, generate_random_game, RandomGameSpec};

pub type ConfigResult<T> = Result<T, String>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSection,
    #[serde(default)]
    pub graph: Option<GraphSection>,
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub params: Option<ParamsSection>,
    #[serde(default)]
    pub variant: Option<VariantSection>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSection>,
    pub init: InitSection,
    pub horizon: HorizonSection,
    #[serde(default)]
    pub integrator: Option<IntegratorSection>,
    pub output: OutputSection,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(default)]
    pub certificates: Option<CertificatesSection>,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    pub kind: String,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    pub name: Option<String>,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
    pub ell: Option<f64>,
    pub potential: Option<bool>,
    pub seed: Option<u64>,
    pub constants: Option<ConstantsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    pub kappa: f64,
    pub ell: f64,
    pub cocoercivity: Option<f64>,
    pub reverse_lipschitz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: String,
    pub edges: Option<Vec<Vec<usize>>>,
    pub p: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub variant: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub eta: f64,
    pub t0: f64,
    pub t: Option<f64>,
    pub alpha: Option<Vec<u8>>,
    pub r: Option<Vec<f64>>,
    pub coordination: Option<bool>,
    pub jump_policy: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    pub epsilon: Option<f64>,
    pub eps_a: Option<f64>,
    pub eps_p: Option<f64>,
    pub eps_c: Option<f64>,
    /// Rational frequencies as `[numerator, denominator]` pairs.
    pub freqs: Option<Vec<[u64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub mode: String,
    pub delta: Option<f64>,
    pub omega: Option<f64>,
    pub phase: Option<f64>,
    pub seed: Option<u64>,
    pub hold: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub q: Option<Vec<f64>>,
    pub q_box: Option<BoxSection>,
    pub p: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    /// Seeded uniform timers in `[T0, T]`.
    pub tau_seed: Option<u64>,
    pub qhat: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t_max: f64,
    pub j_max: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub step: Option<f64>,
    pub record_stride: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// "auto" | "potential" | "nonpotential" | "graph" | "none"
    pub lyapunov: Option<String>,
    pub d: Option<f64>,
    pub rho_j: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificatesSection {
    pub delta: Option<f64>,
    pub rho_j: Option<f64>,
    pub grid: Option<usize>,
    pub box_half_width: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path of a scalar field, e.g. `params.t` or `variant.epsilon`.
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Variant {
    BaselineOde,
    PsgFlow,
    H1,
    H2,
    H3,
    H4,
}

impl Variant {
    pub fn parse(s: &str) -> ConfigResult<Self> {
        match s {
            "baseline_ode" => Ok(Variant::BaselineOde),
            "psg_flow" => Ok(Variant::PsgFlow),
            "h1" => Ok(Variant::H1),
            "h2" => Ok(Variant::H2),
            "h3" => Ok(Variant::H3),
            "h4" => Ok(Variant::H4),
            other => Err(format!("dynamics.variant: unknown variant '{other}'")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::BaselineOde => "baseline_ode",
            Variant::PsgFlow => "psg_flow",
            Variant::H1 => "h1",
            Variant::H2 => "h2",
            Variant::H3 => "h3",
            Variant::H4 => "h4",
        }
    }
}

pub fn parse_config(text: &str) -> ConfigResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
}

/// Applies one sweep patch to a raw TOML document.
pub fn patch_scalar(doc: &mut toml::Value, path: &str, value: f64) -> ConfigResult<()> {
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| format!("sweep path '{path}': '{key}' is not a table"))?;
        if i + 1 == parts.len() {
            match table.get(*key) {
                Some(toml::Value::Float(_)) | Some(toml::Value::Integer(_)) | None => {}
                Some(_) => return Err(format!("sweep path '{path}' is not a scalar")),
            }
            table.insert((*key).to_string(), toml::Value::Float(value));
            return Ok(());
        }
        node = table
            .get_mut(*key)
            .ok_or_else(|| format!("sweep path '{path}': missing section '{key}'"))?;
    }
    unreachable!()
}

impl GameSection {
    pub fn build(&self) -> ConfigResult<GameSpec> {
        let mut game = match self.kind.as_str() {
            "quadratic" => {
                let a = self.a.as_ref().ok_or("game: quadratic kind needs `a`")?;
                let b = self.b.as_ref().ok_or("game: quadratic kind needs `b`")?;
                let n = a.len();
                if a.iter().any(|row| row.len() != n) || b.len() != n {
                    return Err("game: `a` must be square with matching `b`".into());
                }
                let flat: Vec<f64> = a.iter().flatten().cloned().collect();
                let spec = GameSpec::quadratic(
                    DMatrix::from_row_slice(n, n, &flat),
                    DVector::from_column_slice(b),
                )
                .map_err(|e| e.to_string())?;
                // Store the solved NE when A is invertible.
                match hybrid_nss::game::solve_quadratic_ne(&spec) {
                    Ok(ne) => spec.with_known_ne(ne).map_err(|e| e.to_string())?,
                    Err(_) => spec,
                }
            }
            "catalog" => {
                let name = self
                    .name
                    .as_ref()
                    .ok_or("game: catalog kind needs `name`")?;
                catalog(name, self.n).map_err(|e| e.to_string())?
            }
            "random" => {
                let spec = RandomGameSpec {
                    n: self.n.ok_or("game: random kind needs `n`")?,
                    kappa: self.kappa.ok_or("game: random kind needs `kappa`")?,
                    ell: self.ell.ok_or("game: random kind needs `ell`")?,
                    potential: self.potential.unwrap_or(false),
                    seed: self.seed.ok_or("game: random kind needs `seed`")?,
                };
                generate_random_game(spec).map_err(|e| e.to_string())?
            }
            other => return Err(format!("game.kind: unknown kind '{other}'")),
        };
        if let Some(c) = &self.constants {
            game = game
                .with_constants(GameConstants {
                    kappa: c.kappa,
                    ell: c.ell,
                    cocoercivity: c.cocoercivity,
                    reverse_lipschitz: c.reverse_lipschitz,
                })
                .map_err(|e| e.to_string())?;
        }
        Ok(game)
    }
}

impl GraphSection {
    pub fn build(&self, n: usize) -> ConfigResult<Graph> {
        match self.kind.as_str() {
            "complete" => Graph::complete(n).map_err(|e| e.to_string()),
            "ring" => Graph::ring(n).map_err(|e| e.to_string()),
            "path" => Graph::path(n).map_err(|e| e.to_string()),
            "edges" => {
                let edges = self
                    .edges
                    .as_ref()
                    .ok_or("graph: edges kind needs `edges`")?;
                let mut pairs = Vec::with_capacity(edges.len());
                for e in edges {
                    if e.len() != 2 || e[0] == 0 || e[1] == 0 {
                        return Err("graph.edges: entries are 1-based pairs [i, j]".into());
                    }
                    pairs.push((e[0] - 1, e[1] - 1));
                }
                Graph::new(n, &pairs).map_err(|e| e.to_string())
            }
            "erdos_renyi" => {
                let p = self.p.ok_or("graph: erdos_renyi needs `p`")?;
                let seed = self.seed.ok_or("graph: erdos_renyi needs `seed`")?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Graph::erdos_renyi(n, p, &mut rng).map_err(|e| e.to_string())
            }
            other => Err(format!("graph.kind: unknown kind '{other}'")),
        }
    }
}

impl ParamsSection {
    pub fn build(&self, n: usize) -> ConfigResult<HmNssParams> {
        let t = self.t.ok_or("params: `t` is required for reset dynamics")?;
        let mut params = HmNssParams::new(n, self.eta, self.t0, t).map_err(|e| e.to_string())?;
        if let Some(alpha) = &self.alpha {
            let alpha = if alpha.len() == 1 {
                vec![alpha[0] != 0; n]
            } else {
                alpha.iter().map(|&a| a != 0).collect()
            };
            params = params.with_alpha(alpha).map_err(|e| e.to_string())?;
        }
        if let Some(r) = &self.r {
            params.r = if r.len() == 1 {
                vec![r[0]; n]
            } else {
                r.clone()
            };
            params = params.validated().map_err(|e| e.to_string())?;
        }
        if let Some(c) = self.coordination {
            params.coordination = c;
        }
        if let Some(p) = &self.jump_policy {
            params.policy = match p.as_str() {
                "lowest_index" => JumpPolicy::LowestIndex,
                "random" => JumpPolicy::Random,
                other => return Err(format!("params.jump_policy: unknown policy '{other}'")),
            };
        }
        Ok(params)
    }
}

impl PerturbationSection {
    pub fn build(&self) -> ConfigResult<Perturbation> {
        match self.mode.as_str() {
            "none" => Ok(Perturbation::None),
            "sinusoid" => Ok(Perturbation::Sinusoid {
                delta: self.delta.ok_or("perturbation: sinusoid needs `delta`")?,
                omega: self.omega.ok_or("perturbation: sinusoid needs `omega`")?,
                phase: self.phase.unwrap_or(0.0),
            }),
            "noise" => Ok(Perturbation::SeededNoise {
                delta: self.delta.ok_or("perturbation: noise needs `delta`")?,
                seed: self.seed.ok_or("perturbation: noise needs `seed`")?,
                hold: self.hold.unwrap_or(0.05),
            }),
            other => Err(format!("perturbation.mode: unknown mode '{other}'")),
        }
    }
}

impl VariantSection {
    pub fn frequencies(&self, n: usize) -> ConfigResult<Vec<Frequency>> {
        match &self.freqs {
            Some(list) => {
                if list.len() != n {
                    return Err(format!("variant.freqs: need {n} entries"));
                }
                Ok(list
                    .iter()
                    .map(|[num, den]| Frequency::new(*num, *den))
                    .collect())
            }
            None => Ok(hybrid_nss::payoff::default_frequencies(n)),
        }
    }

    pub fn oscillator_bank(&self, n: usize) -> ConfigResult<OscillatorBank> {
        let eps_p = self.eps_p.unwrap_or(1e-2);
        let eps_a = self.eps_a.unwrap_or(5e-2);
        OscillatorBank::new(self.frequencies(n)?, eps_p, eps_a).map_err(|e| e.to_string())
    }
}

impl InitSection {
    pub fn q0(&self, n: usize) -> ConfigResult<Vec<f64>> {
        match (&self.q, &self.q_box) {
            (Some(q), None) => {
                if q.len() != n {
                    return Err(format!("init.q: need {n} entries"));
                }
                Ok(q.clone())
            }
            (None, Some(bx)) => {
                if !(bx.hi > bx.lo) {
                    return Err("init.q_box: need hi > lo".into());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(bx.seed);
                Ok((0..n).map(|_| rng.gen_range(bx.lo..bx.hi)).collect())
            }
            (Some(_), Some(_)) => Err("init: give `q` or `q_box`, not both".into()),
            (None, None) => Err("init: one of `q` or `q_box` is required".into()),
        }
    }

    pub fn tau0(&self, params: &HmNssParams) -> ConfigResult<Option<Vec<f64>>> {
        match (&self.tau, self.tau_seed) {
            (Some(tau), None) => {
                let tau = if tau.len() == 1 {
                    vec![tau[0]; params.n]
                } else {
                    tau.clone()
                };
                if tau.len() != params.n {
                    return Err(format!("init.tau: need {} entries", params.n));
                }
                Ok(Some(tau))
            }
            (None, Some(seed)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(Some(
                    (0..params.n)
                        .map(|_| rng.gen_range(params.t0..params.t))
                        .collect(),
                ))
            }
            (None, None) => Ok(None),
            (Some(_), Some(_)) => Err("init: give `tau` or `tau_seed`, not both".into()),
        }
    }
}

/// Maps core errors to the CLI exit-code contract: config errors exit 2,
/// numerical/internal errors exit 3.
pub fn exit_code_for(e: &CoreError) -> i32 {
    match e {
        CoreError::Config(_) | CoreError::Domain(_) | CoreError::Graph(_) => 2,
        _ => 3,
    }
}

/// Shared handle used by the runner.
pub struct BuiltGame {
    pub game: Arc<GameSpec>,
    /// Exact constants when available (quadratic), else declared constants.
    pub kappa: Option<f64>,
    pub ell: Option<f64>,
}

pub fn build_game(section: &GameSection) -> ConfigResult<BuiltGame> {
    let game = section.build()?;
    let (kappa, ell) = match game.constants {
        Some(c) => (Some(c.kappa), Some(c.ell)),
        None if game.is_quadratic() => {
            let boxx =
                hybrid_nss::game::SampleBox::centered(game.n, 1.0).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let c = hybrid_nss::game::estimate_constants(&game, &boxx, 2, &mut rng)
                .map_err(|e| e.to_string())?;
            (Some(c.kappa), Some(c.ell))
        }
        None => (None, None),
    };
    Ok(BuiltGame {
        game: Arc::new(game),
        kappa,
        ell,
    })
}
