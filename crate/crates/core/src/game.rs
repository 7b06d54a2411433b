//! Games, pseudogradients, Jacobians and monotonicity classification.
//!
//! A game is described by its pseudogradient `G(q) = (d phi_1/d q_1, ...,
//! d phi_n/d q_n)`. Quadratic games carry `G(q) = A q + b` exactly; analytic
//! games carry per-player cost and partial-derivative evaluators. Nash
//! equilibria are exactly the zeros of `G` for monotone games.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Residual tolerance for validating stored Nash equilibria.
pub const TOL_NE: f64 = 1e-8;

/// Scalar function of the full action vector.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Monotonicity classification declared for a game and used by the
/// certificate checks. Strong monotonicity implies strict monotonicity
/// implies monotonicity; the constructor closes the flags upward.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct GameClass {
    pub monotone: bool,
    pub strictly_monotone: bool,
    pub strongly_monotone: bool,
    pub potential: bool,
    pub quadratic: bool,
    pub cocoercive: bool,
}

impl GameClass {
    pub fn closed(mut self) -> Self {
        if self.strongly_monotone {
            self.strictly_monotone = true;
        }
        if self.strictly_monotone {
            self.monotone = true;
        }
        self
    }
}

/// Known constants of the game: strong-monotonicity modulus `kappa`,
/// Lipschitz constant `ell`, cocoercivity constant and the reverse-Lipschitz
/// constant `zeta` used by the consensus-gain bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct GameConstants {
    pub kappa: f64,
    pub ell: f64,
    pub cocoercivity: Option<f64>,
    pub reverse_lipschitz: Option<f64>,
}

/// The two supported game representations.
pub enum GameKind {
    /// `G(q) = A q + b`.
    Quadratic { a: DMatrix<f64>, b: DVector<f64> },
    /// Cost evaluators `phi_i` and analytic own-partial evaluators
    /// `d phi_i / d q_i`, with an optional potential `P` (`G = grad P`).
    Analytic {
        costs: Vec<ScalarFn>,
        partials: Vec<ScalarFn>,
        potential: Option<ScalarFn>,
    },
}

impl fmt::Debug for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameKind::Quadratic { a, .. } => write!(f, "Quadratic(n={})", a.nrows()),
            GameKind::Analytic { costs, .. } => write!(f, "Analytic(n={})", costs.len()),
        }
    }
}

/// An n-player game: pseudogradient, optional known equilibria, declared
/// constants and classification. Immutable after construction; share with
/// `Arc` across parallel runs.
pub struct GameSpec {
    pub n: usize,
    pub kind: GameKind,
    pub known_ne: Vec<DVector<f64>>,
    pub constants: Option<GameConstants>,
    pub class: GameClass,
    /// Measured-cost overrides for payoff-based dynamics. These may differ
    /// from the canonical costs by terms in the opponents' actions only, so
    /// the pseudogradient is unchanged while cost *measurements* are not.
    pub measured_costs: Option<Vec<ScalarFn>>,
    /// Free-form provenance notes, copied into experiment summaries.
    pub notes: Vec<String>,
}

impl GameSpec {
    pub fn quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.len() != n {
            return Err(Error::domain(
                "quadratic game: A must be n x n and b length n",
            ));
        }
        let symmetric = is_symmetric(&a, 1e-12);
        let spec = GameSpec {
            n,
            kind: GameKind::Quadratic { a, b },
            known_ne: Vec::new(),
            constants: None,
            class: GameClass {
                quadratic: true,
                potential: symmetric,
                ..Default::default()
            },
            measured_costs: None,
            notes: Vec::new(),
        };
        Ok(spec)
    }

    pub fn analytic(costs: Vec<ScalarFn>, partials: Vec<ScalarFn>) -> Result<Self> {
        let n = costs.len();
        if n == 0 || partials.len() != n {
            return Err(Error::domain(
                "analytic game: need one cost and one partial per player",
            ));
        }
        Ok(GameSpec {
            n,
            kind: GameKind::Analytic {
                costs,
                partials,
                potential: None,
            },
            known_ne: Vec::new(),
            constants: None,
            class: GameClass::default(),
            measured_costs: None,
            notes: Vec::new(),
        })
    }

    pub fn with_class(mut self, class: GameClass) -> Self {
        self.class = class.closed();
        self
    }

    pub fn with_constants(mut self, constants: GameConstants) -> Result<Self> {
        if constants.kappa > 0.0 && constants.ell < constants.kappa {
            return Err(Error::domain(format!(
                "inconsistent constants: ell = {} < kappa = {}",
                constants.ell, constants.kappa
            )));
        }
        self.constants = Some(constants);
        Ok(self)
    }

    /// Stores a known NE after validating its pseudogradient residual.
    pub fn with_known_ne(mut self, ne: DVector<f64>) -> Result<Self> {
        let res = self.pseudogradient(&ne)?.norm();
        if res > TOL_NE {
            return Err(Error::domain(format!(
                "stored NE has pseudogradient residual {res:.3e} > {TOL_NE:.0e}"
            )));
        }
        self.known_ne.push(ne);
        Ok(self)
    }

    pub fn with_potential(mut self, p: ScalarFn) -> Result<Self> {
        match &mut self.kind {
            GameKind::Analytic { potential, .. } => {
                *potential = Some(p);
                self.class.potential = true;
                Ok(self)
            }
            GameKind::Quadratic { .. } => Err(Error::domain(
                "quadratic games derive their potential from a symmetric A",
            )),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, GameKind::Quadratic { .. })
    }

    /// Evaluates the pseudogradient `G(q)`. Rejects non-finite inputs; the
    /// unchecked [`Self::pseudogradient_into`] path lets flow maps propagate
    /// NaN so the engine's divergence guard can observe it.
    pub fn pseudogradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("pseudogradient: non-finite action vector"));
        }
        let mut out = DVector::zeros(self.n);
        self.pseudogradient_into(q.as_slice(), &mut out)?;
        Ok(out)
    }

    pub(crate) fn pseudogradient_into(&self, q: &[f64], out: &mut DVector<f64>) -> Result<()> {
        if q.len() != self.n {
            return Err(Error::domain("pseudogradient: dimension mismatch"));
        }
        match &self.kind {
            GameKind::Quadratic { a, b } => {
                for i in 0..self.n {
                    let mut acc = b[i];
                    for j in 0..self.n {
                        acc += a[(i, j)] * q[j];
                    }
                    out[i] = acc;
                }
            }
            GameKind::Analytic { partials, .. } => {
                for i in 0..self.n {
                    out[i] = partials[i](q);
                }
            }
        }
        Ok(())
    }

    /// Player `i`'s own partial derivative evaluated at an arbitrary full
    /// action vector (used by the estimation dynamics, where each player
    /// evaluates at its own estimate of the action profile).
    pub fn pseudogradient_component(&self, i: usize, x: &[f64]) -> Result<f64> {
        if x.len() != self.n || i >= self.n {
            return Err(Error::domain(
                "pseudogradient component: dimension mismatch",
            ));
        }
        match &self.kind {
            GameKind::Quadratic { a, b } => {
                let mut acc = b[i];
                for j in 0..self.n {
                    acc += a[(i, j)] * x[j];
                }
                Ok(acc)
            }
            GameKind::Analytic { partials, .. } => Ok(partials[i](x)),
        }
    }

    /// Jacobian of the pseudogradient. Exact (`A`) for quadratic games;
    /// central finite differences with step `max(1e-6, 1e-6 |q|_inf)` for
    /// analytic games.
    pub fn jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        if !q.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("jacobian: non-finite action vector"));
        }
        match &self.kind {
            GameKind::Quadratic { a, .. } => Ok(a.clone()),
            GameKind::Analytic { .. } => {
                let h = 1e-6_f64.max(1e-6 * q.amax());
                let mut jac = DMatrix::zeros(self.n, self.n);
                let mut qp = q.clone();
                let mut qm = q.clone();
                let mut gp = DVector::zeros(self.n);
                let mut gm = DVector::zeros(self.n);
                for j in 0..self.n {
                    qp[j] = q[j] + h;
                    qm[j] = q[j] - h;
                    self.pseudogradient_into(qp.as_slice(), &mut gp)?;
                    self.pseudogradient_into(qm.as_slice(), &mut gm)?;
                    for i in 0..self.n {
                        jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
                    }
                    qp[j] = q[j];
                    qm[j] = q[j];
                }
                if !jac.iter().all(|v| v.is_finite()) {
                    return Err(Error::numerical(
                        "jacobian: non-finite finite-difference entries",
                    ));
                }
                Ok(jac)
            }
        }
    }

    /// Cost evaluator for player `i`. Analytic games return the stored
    /// evaluator; quadratic games synthesize the canonical cost
    /// `phi_i(q) = 1/2 A_ii q_i^2 + q_i (sum_{j != i} A_ij q_j + b_i)`,
    /// whose own-partial is row `i` of `A q + b`. A `measured_costs`
    /// override takes precedence.
    pub fn cost(&self, i: usize) -> Result<ScalarFn> {
        if i >= self.n {
            return Err(Error::domain("cost: player index out of range"));
        }
        if let Some(mc) = &self.measured_costs {
            return Ok(mc[i].clone());
        }
        match &self.kind {
            GameKind::Analytic { costs, .. } => Ok(costs[i].clone()),
            GameKind::Quadratic { a, b } => {
                let row: Vec<f64> = (0..self.n).map(|j| a[(i, j)]).collect();
                let bi = b[i];
                Ok(Arc::new(move |q: &[f64]| {
                    let mut cross = bi;
                    for (j, (&aij, &qj)) in row.iter().zip(q.iter()).enumerate() {
                        if j != i {
                            cross += aij * qj;
                        }
                    }
                    0.5 * row[i] * q[i] * q[i] + q[i] * cross
                }))
            }
        }
    }

    /// All cost evaluators, for handing to payoff-based dynamics.
    pub fn costs(&self) -> Result<Vec<ScalarFn>> {
        (0..self.n).map(|i| self.cost(i)).collect()
    }

    /// Potential error `P(q) - P(A_NE)` for potential games.
    pub fn potential_error(&self, q: &DVector<f64>) -> Result<f64> {
        let p = self.potential_value(q.as_slice())?;
        let ne = self
            .known_ne
            .first()
            .ok_or_else(|| Error::config("potential_error: game has no stored NE"))?;
        let p_star = self.potential_value(ne.as_slice())?;
        Ok(p - p_star)
    }

    pub(crate) fn potential_value(&self, q: &[f64]) -> Result<f64> {
        match &self.kind {
            GameKind::Quadratic { a, b } => {
                if !is_symmetric(a, 1e-12) {
                    return Err(Error::config("potential: quadratic game with asymmetric A"));
                }
                let qv = DVector::from_column_slice(q);
                Ok(0.5 * qv.dot(&(a * &qv)) + qv.dot(b))
            }
            GameKind::Analytic { potential, .. } => match potential {
                Some(p) => Ok(p(q)),
                None => Err(Error::config(
                    "potential: analytic game has no potential evaluator",
                )),
            },
        }
    }

    /// Distance of `z` to the stored NE set (minimum over the finite set).
    pub fn dist_to_ne(&self, z: &DVector<f64>) -> Result<f64> {
        if self.known_ne.is_empty() {
            return Err(Error::config("dist_to_ne: game has no stored NE"));
        }
        Ok(self
            .known_ne
            .iter()
            .map(|s| (z - s).norm())
            .fold(f64::INFINITY, f64::min))
    }
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("known_ne", &self.known_ne)
            .field("constants", &self.constants)
            .field("class", &self.class)
            .finish()
    }
}

fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Axis-aligned sampling box used for constant estimation and grid
/// certificates on analytic games.
#[derive(Debug, Clone)]
pub struct SampleBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl SampleBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::domain("sample box: dimension mismatch"));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(h > l)) {
            return Err(Error::domain(
                "sample box: degenerate (need hi > lo componentwise)",
            ));
        }
        Ok(SampleBox { lo, hi })
    }

    pub fn centered(n: usize, half_width: f64) -> Result<Self> {
        SampleBox::new(
            DVector::from_element(n, -half_width),
            DVector::from_element(n, half_width),
        )
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.lo.len(), |i, _| rng.gen_range(self.lo[i]..self.hi[i]))
    }

    /// Maps a point of the unit cube into the box.
    pub fn lerp(&self, u: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.lo.len(), |i, _| {
            self.lo[i] + (self.hi[i] - self.lo[i]) * u[i]
        })
    }
}

/// Result of [`estimate_constants`]: `exact` marks the closed-form
/// quadratic path; sampled values are statistical lower/upper bounds.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConstantsEstimate {
    pub kappa: f64,
    pub ell: f64,
    pub exact: bool,
}

/// Strong-monotonicity modulus and Lipschitz constant of the game.
///
/// Quadratic games: exact `kappa = lambda_min((A + A^T)/2)` and
/// `ell = sigma_max(A)`. Analytic games: sampled bounds over random pairs
/// in `sample_box` (a lower bound on `kappa`, an upper estimate of `ell`).
pub fn estimate_constants(
    game: &GameSpec,
    sample_box: &SampleBox,
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<ConstantsEstimate> {
    if n_samples < 2 {
        return Err(Error::domain("estimate_constants: need n_samples >= 2"));
    }
    if sample_box.lo.len() != game.n {
        return Err(Error::domain("estimate_constants: box dimension mismatch"));
    }
    match &game.kind {
        GameKind::Quadratic { a, .. } => {
            let sym = (a + a.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let kappa = eig
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let ell = a
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .cloned()
                .fold(0.0, f64::max);
            Ok(ConstantsEstimate {
                kappa,
                ell,
                exact: true,
            })
        }
        GameKind::Analytic { .. } => {
            let mut kappa = f64::INFINITY;
            let mut ell = 0.0_f64;
            for _ in 0..n_samples {
                let q = sample_box.sample(rng);
                let qp = sample_box.sample(rng);
                let d = &q - &qp;
                let dn2 = d.norm_squared();
                if dn2 < 1e-24 {
                    continue;
                }
                let dg = game.pseudogradient(&q)? - game.pseudogradient(&qp)?;
                kappa = kappa.min(dg.dot(&d) / dn2);
                ell = ell.max(dg.norm() / dn2.sqrt());
            }
            if !kappa.is_finite() {
                return Err(Error::numerical(
                    "estimate_constants: no usable sample pairs",
                ));
            }
            Ok(ConstantsEstimate {
                kappa,
                ell,
                exact: false,
            })
        }
    }
}

/// Solves `A q* = -b` for a quadratic game; the unique NE when `A` is
/// invertible. The residual is validated against `1e-10 * |b|`.
pub fn solve_quadratic_ne(game: &GameSpec) -> Result<DVector<f64>> {
    match &game.kind {
        GameKind::Quadratic { a, b } => {
            let lu = a.clone().lu();
            let q = lu
                .solve(&(-b))
                .ok_or_else(|| Error::SingularMatrix("quadratic NE solve: A is singular".into()))?;
            let resid = (a * &q + b).norm();
            if resid > 1e-10 * b.norm().max(1.0) {
                return Err(Error::numerical(format!(
                    "quadratic NE solve: residual {resid:.3e} too large"
                )));
            }
            Ok(q)
        }
        GameKind::Analytic { .. } => Err(Error::precondition(
            "solve_quadratic_ne: game is not quadratic",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn duopoly() -> GameSpec {
        let a = DMatrix::from_row_slice(2, 2, &[10.0, -5.0, -5.0, 10.0]);
        let b = DVector::from_column_slice(&[-250.0, -150.0]);
        GameSpec::quadratic(a, b).unwrap()
    }

    fn example4_like() -> GameSpec {
        // G(q) = B (q - q*) with q* = (2, -2), B = [[6, 1.5], [-1.5, 6]].
        let a = DMatrix::from_row_slice(2, 2, &[6.0, 1.5, -1.5, 6.0]);
        let qstar = DVector::from_column_slice(&[2.0, -2.0]);
        let b = -(&a * &qstar);
        GameSpec::quadratic(a, b).unwrap()
    }

    #[test]
    fn duopoly_pseudogradient_at_origin_is_b() {
        let g = duopoly();
        let v = g.pseudogradient(&DVector::zeros(2)).unwrap();
        assert_eq!(v.as_slice(), &[-250.0, -150.0]);
    }

    #[test]
    fn pseudogradient_rejects_non_finite() {
        let g = duopoly();
        let q = DVector::from_column_slice(&[f64::NAN, 0.0]);
        assert!(matches!(g.pseudogradient(&q), Err(Error::Domain(_))));
    }

    #[test]
    fn example4_pseudogradient_hand_value() {
        // q = (3, -2): B (1, 0) = (6, -1.5).
        let g = example4_like();
        let v = g
            .pseudogradient(&DVector::from_column_slice(&[3.0, -2.0]))
            .unwrap();
        assert!((v[0] - 6.0).abs() < 1e-12 && (v[1] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn quadratic_jacobian_is_constant_a() {
        let g = duopoly();
        let j = g
            .jacobian(&DVector::from_column_slice(&[3.0, 7.0]))
            .unwrap();
        assert_eq!(j[(0, 0)], 10.0);
        assert_eq!(j[(0, 1)], -5.0);
        assert_eq!(j[(1, 0)], -5.0);
        assert_eq!(j[(1, 1)], 10.0);
    }

    fn duopoly_analytic() -> GameSpec {
        // Same costs as the quadratic duopoly, wrapped as closures.
        let a = [[10.0, -5.0], [-5.0, 10.0]];
        let b = [-250.0, -150.0];
        let mut costs: Vec<ScalarFn> = Vec::new();
        let mut partials: Vec<ScalarFn> = Vec::new();
        for i in 0..2 {
            let (ai, bi) = (a[i], b[i]);
            costs.push(Arc::new(move |q: &[f64]| {
                let other = if i == 0 { ai[1] * q[1] } else { ai[0] * q[0] };
                0.5 * ai[i] * q[i] * q[i] + q[i] * (other + bi)
            }));
            partials.push(Arc::new(move |q: &[f64]| ai[0] * q[0] + ai[1] * q[1] + bi));
        }
        GameSpec::analytic(costs, partials).unwrap()
    }

    #[test]
    fn analytic_jacobian_matches_quadratic_within_fd_tolerance() {
        let ga = duopoly_analytic();
        let gq = duopoly();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let q = DVector::from_fn(2, |_, _| rng.gen_range(-50.0..50.0));
            let ja = ga.jacobian(&q).unwrap();
            let jq = gq.jacobian(&q).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((ja[(i, j)] - jq[(i, j)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pseudogradient_matches_central_difference_of_costs() {
        // Own-partial consistency on 100 random points.
        let g = duopoly_analytic();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-20.0..20.0)).collect();
            let grad = g.pseudogradient(&DVector::from_column_slice(&q)).unwrap();
            for i in 0..2 {
                let h = 1e-6_f64.max(1e-6 * q.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                let cost = g.cost(i).unwrap();
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fd = (cost(&qp) - cost(&qm)) / (2.0 * h);
                let denom = 1.0f64.max(grad[i].abs());
                assert!(
                    ((fd - grad[i]) / denom).abs() < 1e-6,
                    "player {i}: fd {fd} vs grad {}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn estimate_constants_duopoly_exact() {
        // Symmetric A with eigenvalues {5, 15}.
        let g = duopoly();
        let boxx = SampleBox::centered(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = estimate_constants(&g, &boxx, 10, &mut rng).unwrap();
        assert!(c.exact);
        assert!((c.kappa - 5.0).abs() < 1e-10);
        assert!((c.ell - 15.0).abs() < 1e-10);
    }

    #[test]
    fn estimate_constants_example4_kappa_six() {
        let g = example4_like();
        let boxx = SampleBox::centered(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = estimate_constants(&g, &boxx, 10, &mut rng).unwrap();
        assert!((c.kappa - 6.0).abs() < 1e-10);
        // ell = sigma_max = sqrt(36 + 2.25)
        assert!((c.ell - 38.25f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn estimate_constants_identity() {
        let g = GameSpec::quadratic(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let boxx = SampleBox::centered(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = estimate_constants(&g, &boxx, 10, &mut rng).unwrap();
        assert!((c.kappa - 1.0).abs() < 1e-12 && (c.ell - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        let lo = DVector::zeros(2);
        let hi = DVector::zeros(2);
        assert!(SampleBox::new(lo, hi).is_err());
    }

    #[test]
    fn solve_ne_identity() {
        let g = GameSpec::quadratic(
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[-1.0, -2.0]),
        )
        .unwrap();
        let q = solve_quadratic_ne(&g).unwrap();
        assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solve_ne_example4_recovers_qstar() {
        let g = example4_like();
        let q = solve_quadratic_ne(&g).unwrap();
        assert!((q[0] - 2.0).abs() < 1e-10 && (q[1] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn solve_ne_duopoly_from_linear_solve() {
        // Direct solve gives (130/3, 110/3); the second coordinate differs
        // from the value quoted alongside the original duopoly description,
        // so the solve is authoritative here.
        let g = duopoly();
        let q = solve_quadratic_ne(&g).unwrap();
        assert!((q[0] - 130.0 / 3.0).abs() < 1e-9);
        assert!((q[1] - 110.0 / 3.0).abs() < 1e-9);
        let residual = g.pseudogradient(&q).unwrap().norm();
        assert!(residual <= TOL_NE);
    }

    #[test]
    fn singular_solve_rejected() {
        let g = GameSpec::quadratic(DMatrix::zeros(2, 2), DVector::from_element(2, 1.0)).unwrap();
        assert!(matches!(
            solve_quadratic_ne(&g),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn stored_ne_residual_validated() {
        let g = duopoly();
        let ne = solve_quadratic_ne(&g).unwrap();
        let g = duopoly().with_known_ne(ne).unwrap();
        assert_eq!(g.known_ne.len(), 1);
        assert!(duopoly().with_known_ne(DVector::zeros(2)).is_err());
    }

    #[test]
    fn monotonicity_and_cocoercivity_spot_checks() {
        // kappa-strong monotonicity and 1/ell-cocoercivity on 1000 random
        // pairs for the duopoly (kappa = 5, ell = 15).
        let g = duopoly();
        let (kappa, ell) = (5.0, 15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let boxx = SampleBox::centered(2, 100.0).unwrap();
        for _ in 0..1000 {
            let q = boxx.sample(&mut rng);
            let qp = boxx.sample(&mut rng);
            let d = &q - &qp;
            let dg = g.pseudogradient(&q).unwrap() - g.pseudogradient(&qp).unwrap();
            let inner = dg.dot(&d);
            assert!(inner >= kappa * d.norm_squared() - 1e-9);
            assert!(inner >= dg.norm_squared() / ell - 1e-9);
        }
    }

    #[test]
    fn inconsistent_constants_rejected() {
        let r = duopoly().with_constants(GameConstants {
            kappa: 2.0,
            ell: 1.0,
            cocoercivity: None,
            reverse_lipschitz: None,
        });
        assert!(r.is_err());
    }

    #[test]
    fn class_closure() {
        let c = GameClass {
            strongly_monotone: true,
            ..Default::default()
        }
        .closed();
        assert!(c.strictly_monotone && c.monotone);
    }
}
