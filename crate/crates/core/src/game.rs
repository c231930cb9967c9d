//! Aggregate games: per-player cost oracles that depend on the player's own
//! action and the aggregate `x̄ = Σ_j x_j`, box strategy sets, the stacked
//! gradient map, and the Cournot family with its equilibrium oracle.
//!
//! Profiles are flat vectors: player `i` owns `x[i*d..(i+1)*d]`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::{self, DenseMatrix, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("map {0:?} is not a permutation")]
    NotBijective(Vec<usize>),
    #[error("equilibrium iteration did not converge (residual {residual:e})")]
    NonConvergence { last: Vec<f64>, residual: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Axis-aligned box `lo ≤ x ≤ hi` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl StrategyBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GameError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(GameError::Dimension(format!(
                "box bounds of lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || l.is_nan()) {
            return Err(GameError::Invalid(format!("empty box {lo:?}..{hi:?}")));
        }
        Ok(StrategyBox { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, GameError> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn unbounded(dim: usize) -> Self {
        StrategyBox {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Euclidean projection, i.e. the componentwise clamp.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for ((v, lo), hi) in x.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lo)
                .zip(&self.hi)
                .all(|((v, lo), hi)| lo <= v && v <= hi)
    }

    /// Strictly inside every coordinate bound.
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((v, lo), hi)| lo < v && v < hi)
    }

    pub fn intersect(&self, other: &StrategyBox) -> Option<StrategyBox> {
        if self.dim() != other.dim() {
            return None;
        }
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        StrategyBox::new(lo, hi).ok()
    }

    /// Uniform sample; infinite sides are truncated to 100 units past the
    /// finite side (or to ±100).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&lo, &hi)| {
                let (l, h) = match (lo.is_finite(), hi.is_finite()) {
                    (true, true) => (lo, hi),
                    (true, false) => (lo, lo + 100.0),
                    (false, true) => (hi - 100.0, hi),
                    (false, false) => (-100.0, 100.0),
                };
                if l == h {
                    l
                } else {
                    rng.random_range(l..=h)
                }
            })
            .collect()
    }
}

/// A player's cost `f_i(x_i, u)` where `u` stands for the aggregate decision.
pub trait PlayerCost: fmt::Debug + Send + Sync {
    fn cost(&self, x: &[f64], aggregate: &[f64]) -> f64;

    /// Derivative of `x_i ↦ f_i(x_i, x_i + rest)` evaluated at aggregate
    /// `u`: own-action partial plus the aggregate partial.
    fn gradient(&self, x: &[f64], aggregate: &[f64], out: &mut [f64]);

    /// Stable text identifying the cost, used for game hashes.
    fn fingerprint(&self) -> String;
}

/// `c(x) − x(a − b u)` with `c(x) = ζ2 x² + ζ1 x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CournotCost {
    pub a: f64,
    pub b: f64,
    pub zeta2: f64,
    pub zeta1: f64,
}

impl PlayerCost for CournotCost {
    fn cost(&self, x: &[f64], aggregate: &[f64]) -> f64 {
        let (x, u) = (x[0], aggregate[0]);
        self.zeta2 * x * x + self.zeta1 * x - x * (self.a - self.b * u)
    }

    fn gradient(&self, x: &[f64], aggregate: &[f64], out: &mut [f64]) {
        let (x, u) = (x[0], aggregate[0]);
        out[0] = 2.0 * self.zeta2 * x + self.zeta1 - self.a + self.b * u + self.b * x;
    }

    fn fingerprint(&self) -> String {
        format!(
            "cournot(a={:?},b={:?},zeta2={:?},zeta1={:?})",
            self.a, self.b, self.zeta2, self.zeta1
        )
    }
}

type CostFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Cost built from closures; handy for ad-hoc games.
#[derive(Clone)]
pub struct FnCost {
    label: String,
    cost: Arc<CostFn>,
    grad: Arc<GradFn>,
}

impl FnCost {
    pub fn new<C, G>(label: impl Into<String>, cost: C, grad: G) -> Self
    where
        C: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        FnCost {
            label: label.into(),
            cost: Arc::new(cost),
            grad: Arc::new(grad),
        }
    }

    /// `f(x) = scale·‖x‖²/2`, ignoring the aggregate.
    pub fn half_square(scale: f64) -> Self {
        FnCost::new(
            format!("half_square({scale:?})"),
            move |x, _| scale * 0.5 * numerics::dot(x, x),
            move |x, _, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = scale * v;
                }
            },
        )
    }

    pub fn zero() -> Self {
        FnCost::new("zero", |_, _| 0.0, |_, _, out| out.fill(0.0))
    }
}

impl fmt::Debug for FnCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnCost({})", self.label)
    }
}

impl PlayerCost for FnCost {
    fn cost(&self, x: &[f64], aggregate: &[f64]) -> f64 {
        (self.cost)(x, aggregate)
    }

    fn gradient(&self, x: &[f64], aggregate: &[f64], out: &mut [f64]) {
        (self.grad)(x, aggregate, out)
    }

    fn fingerprint(&self) -> String {
        self.label.clone()
    }
}

/// Bijection on player labels. Player `i` of a permuted game owns what player
/// `map[i]` owned before.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl TryFrom<Vec<usize>> for Permutation {
    type Error = GameError;

    fn try_from(map: Vec<usize>) -> Result<Self, GameError> {
        Permutation::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self, GameError> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || seen[m] {
                return Err(GameError::NotBijective(map));
            }
            seen[m] = true;
        }
        Ok(Permutation(map))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn swap(n: usize, i: usize, j: usize) -> Result<Self, GameError> {
        if i >= n || j >= n {
            return Err(GameError::Invalid(format!("swap ({i}, {j}) outside 0..{n}")));
        }
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(i, j);
        Ok(Permutation(map))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &m)| i == m)
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&o| self.0[o]).collect())
    }

    /// Transpositions `t_1, …, t_m` with `self = t_1 ∘ t_2 ∘ … ∘ t_m`.
    pub fn transpositions(&self) -> Vec<(usize, usize)> {
        let n = self.0.len();
        let mut current: Vec<usize> = (0..n).collect();
        let mut out = Vec::new();
        // Build self as current ∘ swaps, fixing positions left to right.
        for i in 0..n {
            if current[i] != self.0[i] {
                let j = (i + 1..n).find(|&j| current[j] == self.0[i]).expect("bijection");
                current.swap(i, j);
                out.push((i, j));
            }
        }
        out
    }
}

/// An aggregate game: per-player cost oracles and strategy boxes.
#[derive(Clone)]
pub struct GameSpec {
    dim: usize,
    players: Vec<Arc<dyn PlayerCost>>,
    boxes: Vec<StrategyBox>,
    /// Lipschitz constant of the gradients, when known.
    pub lipschitz: Option<f64>,
    /// Bound on gradient norms over the strategy sets, when known.
    pub gradient_bound: Option<f64>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("dim", &self.dim)
            .field("players", &self.players)
            .field("boxes", &self.boxes)
            .finish()
    }
}

impl GameSpec {
    pub fn new(dim: usize, players: Vec<Arc<dyn PlayerCost>>, boxes: Vec<StrategyBox>) -> Result<Self, GameError> {
        if players.is_empty() || players.len() != boxes.len() {
            return Err(GameError::Dimension(format!(
                "{} players with {} boxes",
                players.len(),
                boxes.len()
            )));
        }
        if dim == 0 || boxes.iter().any(|b| b.dim() != dim) {
            return Err(GameError::Dimension(format!("boxes must all have dimension {dim}")));
        }
        Ok(GameSpec {
            dim,
            players,
            boxes,
            lipschitz: None,
            gradient_bound: None,
        })
    }

    pub fn players(&self) -> usize {
        self.players.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn strategy_box(&self, i: usize) -> &StrategyBox {
        &self.boxes[i]
    }

    pub fn cost(&self, i: usize, x: &[f64], aggregate: &[f64]) -> f64 {
        self.players[i].cost(x, aggregate)
    }

    pub fn gradient(&self, i: usize, x: &[f64], aggregate: &[f64], out: &mut [f64]) {
        self.players[i].gradient(x, aggregate, out)
    }

    fn check_profile(&self, x: &[f64]) -> Result<(), GameError> {
        if x.len() != self.players() * self.dim {
            return Err(GameError::Dimension(format!(
                "profile of length {} for {} players of dimension {}",
                x.len(),
                self.players(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Sum of the players' actions.
    pub fn aggregate(&self, x: &[f64]) -> Vec<f64> {
        let mut agg = vec![0.0; self.dim];
        for chunk in x.chunks(self.dim) {
            for (a, v) in agg.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        agg
    }

    /// Stacked gradient map: player gradients evaluated at the true aggregate.
    pub fn phi(&self, x: &[f64]) -> Result<Vec<f64>, GameError> {
        self.check_profile(x)?;
        let agg = self.aggregate(x);
        let mut out = vec![0.0; x.len()];
        for (i, (xi, oi)) in x.chunks(self.dim).zip(out.chunks_mut(self.dim)).enumerate() {
            self.players[i].gradient(xi, &agg, oi);
        }
        Ok(out)
    }

    pub fn project_profile(&self, x: &[f64]) -> Result<Vec<f64>, GameError> {
        self.check_profile(x)?;
        let mut out = x.to_vec();
        for (i, chunk) in out.chunks_mut(self.dim).enumerate() {
            self.boxes[i].project_in_place(chunk);
        }
        Ok(out)
    }

    pub fn contains_profile(&self, x: &[f64]) -> bool {
        x.len() == self.players() * self.dim && x.chunks(self.dim).enumerate().all(|(i, c)| self.boxes[i].contains(c))
    }

    /// Whether the single point `p` lies in every player's box.
    pub fn common_point_feasible(&self, p: &[f64]) -> bool {
        self.boxes.iter().all(|b| b.contains(p))
    }

    /// Game with player `i` owning the cost and box of player `perm(i)`.
    pub fn permute(&self, perm: &Permutation) -> Result<GameSpec, GameError> {
        if perm.len() != self.players() {
            return Err(GameError::Dimension(format!(
                "permutation on {} labels for {} players",
                perm.len(),
                self.players()
            )));
        }
        let players = (0..self.players())
            .map(|i| self.players[perm.apply(i)].clone())
            .collect();
        let boxes = (0..self.players()).map(|i| self.boxes[perm.apply(i)].clone()).collect();
        Ok(GameSpec {
            dim: self.dim,
            players,
            boxes,
            lipschitz: self.lipschitz,
            gradient_bound: self.gradient_bound,
        })
    }

    /// SHA-256 over player fingerprints and boxes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("dim={}\n", self.dim));
        for (p, b) in self.players.iter().zip(&self.boxes) {
            h.update(p.fingerprint());
            h.update(format!("|{:?}|{:?}\n", b.lo, b.hi));
        }
        hex::encode(h.finalize())
    }

    /// Largest gradient norm seen over `samples` random profiles.
    pub fn sampled_gradient_bound(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for _ in 0..samples {
            let x: Vec<f64> = self.boxes.iter().flat_map(|b| b.sample(&mut rng)).collect();
            let g = self.phi(&x).expect("sampled profile has the right shape");
            for chunk in g.chunks(self.dim) {
                best = best.max(numerics::norm(chunk));
            }
        }
        best
    }
}

/// Result of [`check_strict_monotone`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// Minimum of `[φ(x) − φ(x')]ᵀ(x − x') / ‖x − x'‖²` over sampled pairs.
    pub min_quotient: f64,
    pub pairs: usize,
    pub violated: bool,
}

/// Sampling falsifier for strict monotonicity of the gradient map.
pub fn check_strict_monotone(spec: &GameSpec, samples: usize, seed: u64) -> MonotonicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_q = f64::INFINITY;
    let mut pairs = 0;
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { spec.boxes.iter().flat_map(|b| b.sample(rng)).collect() };
    while pairs < samples.max(1) {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dist2 = numerics::dot(&diff, &diff);
        if dist2 == 0.0 {
            continue;
        }
        let px = spec.phi(&x).expect("profile shape");
        let py = spec.phi(&y).expect("profile shape");
        let dphi: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        min_q = min_q.min(numerics::dot(&dphi, &diff) / dist2);
        pairs += 1;
    }
    MonotonicityReport {
        min_quotient: min_q,
        pairs,
        violated: !(min_q > 0.0),
    }
}

/// Cournot competition: price `a − b·x̄`, cost `ζ2 x² + ζ1 x`, scalar actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CournotFile", into = "CournotFile")]
pub struct CournotGame {
    pub a: f64,
    pub b: f64,
    pub zeta2: Vec<f64>,
    pub zeta1: Vec<f64>,
    pub boxes: Vec<StrategyBox>,
}

/// JSON form: a common `box` or per-player `boxes`.
#[derive(Serialize, Deserialize)]
struct CournotFile {
    a: f64,
    b: f64,
    zeta2: Vec<f64>,
    zeta1: Vec<f64>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    common_box: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boxes: Option<Vec<[f64; 2]>>,
}

impl TryFrom<CournotFile> for CournotGame {
    type Error = GameError;

    fn try_from(f: CournotFile) -> Result<Self, GameError> {
        let n = f.zeta2.len();
        let boxes = match (f.common_box, f.boxes) {
            (Some(b), None) => vec![StrategyBox::interval(b[0], b[1])?; n],
            (None, Some(list)) => list
                .iter()
                .map(|b| StrategyBox::interval(b[0], b[1]))
                .collect::<Result<_, _>>()?,
            _ => {
                return Err(GameError::Invalid(
                    "exactly one of `box` and `boxes` must be given".into(),
                ))
            }
        };
        CournotGame::new(f.a, f.b, f.zeta2, f.zeta1, boxes)
    }
}

impl From<CournotGame> for CournotFile {
    fn from(g: CournotGame) -> Self {
        let first = &g.boxes[0];
        let common = g.boxes.iter().all(|b| b == first);
        let pair = |b: &StrategyBox| [b.lo[0], b.hi[0]];
        CournotFile {
            a: g.a,
            b: g.b,
            common_box: common.then(|| pair(first)),
            boxes: (!common).then(|| g.boxes.iter().map(pair).collect()),
            zeta2: g.zeta2,
            zeta1: g.zeta1,
        }
    }
}

/// Output of [`CournotGame::nash_equilibrium`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashEquilibrium {
    pub profile: Vec<f64>,
    /// Every action strictly inside its box.
    pub interior: bool,
    /// Fixed-point iterations used; zero when the first-order system sufficed.
    pub iterations: usize,
}

impl NashEquilibrium {
    pub fn aggregate(&self) -> f64 {
        self.profile.iter().sum()
    }
}

impl CournotGame {
    pub fn new(a: f64, b: f64, zeta2: Vec<f64>, zeta1: Vec<f64>, boxes: Vec<StrategyBox>) -> Result<Self, GameError> {
        let n = zeta2.len();
        if n == 0 || zeta1.len() != n || boxes.len() != n {
            return Err(GameError::Dimension(format!(
                "{} quadratic, {} linear coefficients and {} boxes",
                n,
                zeta1.len(),
                boxes.len()
            )));
        }
        if !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(GameError::Invalid(format!("need finite a and b > 0, got a={a}, b={b}")));
        }
        if let Some(z) = zeta2.iter().find(|z| !(**z >= 0.0) || !z.is_finite()) {
            return Err(GameError::Invalid(format!(
                "quadratic cost coefficient {z} must be >= 0"
            )));
        }
        if zeta1.iter().any(|z| !z.is_finite()) {
            return Err(GameError::Invalid("linear cost coefficients must be finite".into()));
        }
        if boxes.iter().any(|bx| bx.dim() != 1) {
            return Err(GameError::Dimension("Cournot actions are scalar".into()));
        }
        let mut common = boxes[0].clone();
        for bx in &boxes[1..] {
            common = common
                .intersect(bx)
                .ok_or_else(|| GameError::Invalid("strategy boxes have empty intersection".into()))?;
        }
        Ok(CournotGame {
            a,
            b,
            zeta2,
            zeta1,
            boxes,
        })
    }

    /// Coefficients drawn uniformly from the given ranges.
    pub fn sample<R: Rng>(
        n: usize,
        a: f64,
        b: f64,
        zeta2_range: (f64, f64),
        zeta1_range: (f64, f64),
        strategy_box: StrategyBox,
        rng: &mut R,
    ) -> Result<Self, GameError> {
        let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let mut zeta2 = Vec::with_capacity(n);
        let mut zeta1 = Vec::with_capacity(n);
        for _ in 0..n {
            zeta2.push(draw(zeta2_range));
            zeta1.push(draw(zeta1_range));
        }
        CournotGame::new(a, b, zeta2, zeta1, vec![strategy_box; n])
    }

    pub fn players(&self) -> usize {
        self.zeta2.len()
    }

    pub fn player_cost(&self, i: usize) -> CournotCost {
        CournotCost {
            a: self.a,
            b: self.b,
            zeta2: self.zeta2[i],
            zeta1: self.zeta1[i],
        }
    }

    pub fn to_spec(&self) -> GameSpec {
        let players: Vec<Arc<dyn PlayerCost>> = (0..self.players())
            .map(|i| Arc::new(self.player_cost(i)) as Arc<dyn PlayerCost>)
            .collect();
        let mut spec = GameSpec::new(1, players, self.boxes.clone()).expect("validated at construction");
        let n = self.players() as f64;
        let max_curv = self.zeta2.iter().fold(0.0f64, |m, z| m.max(2.0 * z));
        spec.lipschitz = Some(max_curv + self.b * (n + 1.0));
        spec.gradient_bound = self.gradient_bound();
        spec
    }

    /// Sup of |∇| over the boxes when they are bounded (gradients are affine,
    /// so the sup is attained at a vertex of the joint box).
    fn gradient_bound(&self) -> Option<f64> {
        if self.boxes.iter().any(|b| !b.lo[0].is_finite() || !b.hi[0].is_finite()) {
            return None;
        }
        let agg_lo: f64 = self.boxes.iter().map(|b| b.lo[0]).sum();
        let agg_hi: f64 = self.boxes.iter().map(|b| b.hi[0]).sum();
        let mut best: f64 = 0.0;
        for i in 0..self.players() {
            let c = self.player_cost(i);
            let (lo, hi) = (self.boxes[i].lo[0], self.boxes[i].hi[0]);
            for x in [lo, hi] {
                // rest of the aggregate ranges over the other boxes
                for rest in [agg_lo - lo, agg_hi - hi] {
                    let mut g = [0.0];
                    c.gradient(&[x], &[x + rest], &mut g);
                    best = best.max(g[0].abs());
                }
            }
        }
        Some(best)
    }

    /// Solves the interior first-order conditions
    /// `(2ζ2_i + b) x_i + b x̄ = a − ζ1_i`; when that point leaves a box, runs
    /// full-information projected gradient iteration to a fixed point.
    pub fn nash_equilibrium(&self) -> Result<NashEquilibrium, GameError> {
        let n = self.players();
        let mut m = DenseMatrix::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.b;
            }
            m[(i, i)] += 2.0 * self.zeta2[i] + self.b;
            rhs[i] = self.a - self.zeta1[i];
        }
        let x = numerics::solve_linear(&m, &rhs)?;
        if x.iter().zip(&self.boxes).all(|(v, b)| b.contains(&[*v])) {
            let interior = x.iter().zip(&self.boxes).all(|(v, b)| b.interior_contains(&[*v]));
            return Ok(NashEquilibrium {
                profile: x,
                interior,
                iterations: 0,
            });
        }

        let spec = self.to_spec();
        let step = 1.0 / spec.lipschitz.expect("set by to_spec");
        let mut x = spec.project_profile(&x)?;
        for it in 1..=1_000_000 {
            let g = spec.phi(&x)?;
            let trial: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v - step * gi).collect();
            let next = spec.project_profile(&trial)?;
            let moved = next.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            x = next;
            if moved < 1e-12 {
                let interior = x.iter().zip(&self.boxes).all(|(v, b)| b.interior_contains(&[*v]));
                return Ok(NashEquilibrium {
                    profile: x,
                    interior,
                    iterations: it,
                });
            }
        }
        let g = spec.phi(&x)?;
        let trial: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v - step * gi).collect();
        let next = spec.project_profile(&trial)?;
        let residual = next.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        Err(GameError::NonConvergence { last: x, residual })
    }

    /// Swaps coefficients and boxes according to `perm`.
    pub fn permute(&self, perm: &Permutation) -> Result<CournotGame, GameError> {
        if perm.len() != self.players() {
            return Err(GameError::Dimension("permutation size".into()));
        }
        let pick = |v: &Vec<f64>| (0..v.len()).map(|i| v[perm.apply(i)]).collect();
        Ok(CournotGame {
            a: self.a,
            b: self.b,
            zeta2: pick(&self.zeta2),
            zeta1: pick(&self.zeta1),
            boxes: (0..self.players()).map(|i| self.boxes[perm.apply(i)].clone()).collect(),
        })
    }
}

/// Cournot game as a generic [`GameSpec`].
pub fn cournot_as_gamespec(g: &CournotGame) -> GameSpec {
    g.to_spec()
}

pub fn nash_oracle_cournot(g: &CournotGame) -> Result<NashEquilibrium, GameError> {
    g.nash_equilibrium()
}

pub fn permute_game(spec: &GameSpec, perm: &Permutation) -> Result<GameSpec, GameError> {
    spec.permute(perm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn symmetric_pair() -> CournotGame {
        CournotGame::new(
            6.0,
            1.0,
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![StrategyBox::interval(0.0, 5.0).unwrap(); 2],
        )
        .unwrap()
    }

    fn asymmetric(n: usize, seed: u64) -> CournotGame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CournotGame::sample(
            n,
            6.0,
            0.5,
            (0.0, 0.5),
            (0.0, 1.0),
            StrategyBox::interval(0.0, 5.0).unwrap(),
            &mut rng,
        )
        .unwrap()
    }

    /// Central differences of `t ↦ f_i(x_i + t e_c, x̄ + t e_c)`.
    fn fd_phi(spec: &GameSpec, x: &[f64], h: f64) -> Vec<f64> {
        let d = spec.dim();
        let mut out = vec![0.0; x.len()];
        for p in 0..x.len() {
            let i = p / d;
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[p] += h;
            minus[p] -= h;
            let fp = spec.cost(i, &plus[i * d..(i + 1) * d], &spec.aggregate(&plus));
            let fm = spec.cost(i, &minus[i * d..(i + 1) * d], &spec.aggregate(&minus));
            out[p] = (fp - fm) / (2.0 * h);
        }
        out
    }

    #[test]
    fn cournot_gradient_formula() {
        let c = CournotCost {
            a: 0.0,
            b: 1.0,
            zeta2: 0.0,
            zeta1: 0.0,
        };
        let mut g = [0.0];
        c.gradient(&[1.0], &[3.0], &mut g);
        assert_eq!(g[0], 4.0);

        let pair = symmetric_pair().to_spec();
        pair.gradient(0, &[1.2], &[2.4], &mut g);
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let b = StrategyBox::interval(0.0, 5.0).unwrap();
        assert_eq!(b.project(&[7.0]), vec![5.0]);
        assert_eq!(b.project(&[3.0]), vec![3.0]);
        assert_eq!(b.project(&[-2.0]), vec![0.0]);
        assert!(StrategyBox::interval(1.0, 0.0).is_err());
    }

    #[test]
    fn phi_examples() {
        let pair = symmetric_pair().to_spec();
        let g = pair.phi(&[1.2, 1.2]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));

        let single = GameSpec::new(
            1,
            vec![Arc::new(FnCost::half_square(1.0))],
            vec![StrategyBox::unbounded(1)],
        )
        .unwrap();
        assert_eq!(single.phi(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(single.phi(&[2.5]).unwrap(), vec![2.5]);
        assert!(single.phi(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn phi_matches_finite_differences() {
        let spec = asymmetric(6, 2).to_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..4.9)).collect();
            let exact = spec.phi(&x).unwrap();
            let approx = fd_phi(&spec, &x, 1e-6);
            for (e, a) in exact.iter().zip(&approx) {
                worst = worst.max((e - a).abs() / (1.0 + e.abs()));
            }
        }
        assert!(worst < 1e-5, "worst relative deviation {worst}");
    }

    #[test]
    fn monotonicity_examples() {
        let report = check_strict_monotone(&asymmetric(5, 4).to_spec(), 1000, 1);
        assert!(!report.violated && report.min_quotient > 0.0);
        assert_eq!(report.pairs, 1000);

        let zero = GameSpec::new(
            1,
            vec![Arc::new(FnCost::zero()), Arc::new(FnCost::zero())],
            vec![StrategyBox::interval(0.0, 1.0).unwrap(); 2],
        )
        .unwrap();
        let report = check_strict_monotone(&zero, 50, 1);
        assert_eq!(report.min_quotient, 0.0);
        assert!(report.violated);

        let single = GameSpec::new(
            1,
            vec![Arc::new(FnCost::half_square(1.0))],
            vec![StrategyBox::interval(-3.0, 3.0).unwrap()],
        )
        .unwrap();
        let report = check_strict_monotone(&single, 50, 1);
        assert!((report.min_quotient - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nash_oracle_examples() {
        let ne = symmetric_pair().nash_equilibrium().unwrap();
        assert!(ne.profile.iter().all(|v| (v - 1.2).abs() < 1e-12));
        assert!(ne.interior);

        let single = |hi: f64| {
            CournotGame::new(
                6.0,
                1.0,
                vec![0.0],
                vec![0.0],
                vec![StrategyBox::interval(0.0, hi).unwrap()],
            )
            .unwrap()
        };
        let ne = single(5.0).nash_equilibrium().unwrap();
        assert!((ne.profile[0] - 3.0).abs() < 1e-12);
        assert_eq!(ne.iterations, 0);

        let ne = single(2.0).nash_equilibrium().unwrap();
        assert!((ne.profile[0] - 2.0).abs() < 1e-12);
        assert!(ne.iterations > 0);
        assert!(!ne.interior);
    }

    #[test]
    fn nash_oracle_solves_variational_inequality() {
        for seed in 0..5 {
            // b = 0.1 pushes several players onto the upper bound
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let game = CournotGame::sample(
                10,
                6.0,
                0.1,
                (0.0, 0.5),
                (0.0, 1.0),
                StrategyBox::interval(0.0, 5.0).unwrap(),
                &mut rng,
            )
            .unwrap();
            let spec = game.to_spec();
            let z = game.nash_equilibrium().unwrap().profile;
            let phi = spec.phi(&z).unwrap();
            for _ in 0..100 {
                let y: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..=5.0)).collect();
                let gap: f64 = phi.iter().zip(y.iter().zip(&z)).map(|(p, (a, b))| p * (a - b)).sum();
                assert!(gap >= -1e-7, "VI gap {gap}");
            }
        }
    }

    #[test]
    fn permutation_basics() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![1, 2]).is_err());
        let s = Permutation::swap(4, 1, 3).unwrap();
        assert_eq!(s.compose(&s), Permutation::identity(4));
        let p = Permutation::new(vec![2, 0, 3, 1]).unwrap();
        let rebuilt = p
            .transpositions()
            .iter()
            .fold(Permutation::identity(4), |acc, &(i, j)| {
                acc.compose(&Permutation::swap(4, i, j).unwrap())
            });
        assert_eq!(rebuilt, p);
    }

    #[test]
    fn permute_game_examples() {
        let game = asymmetric(2, 8);
        let spec = game.to_spec();
        let id = spec.permute(&Permutation::identity(2)).unwrap();
        assert_eq!(id.fingerprint(), spec.fingerprint());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..5.0)).collect();
            assert_eq!(id.phi(&x).unwrap(), spec.phi(&x).unwrap());
        }

        let swap = Permutation::swap(2, 0, 1).unwrap();
        let twice = spec.permute(&swap).unwrap().permute(&swap).unwrap();
        assert_eq!(twice.fingerprint(), spec.fingerprint());

        let ne = game.nash_equilibrium().unwrap();
        let swapped = game.permute(&swap).unwrap().nash_equilibrium().unwrap();
        assert!((swapped.profile[0] - ne.profile[1]).abs() < 1e-12);
        assert!((swapped.profile[1] - ne.profile[0]).abs() < 1e-12);
        assert!((swapped.aggregate() - ne.aggregate()).abs() < 1e-9);
        assert_eq!(
            game.permute(&swap).unwrap().to_spec().fingerprint(),
            spec.permute(&swap).unwrap().fingerprint()
        );
    }

    #[test]
    fn cournot_json_schema() {
        let json = r#"{"a":6,"b":0.1,"zeta2":[0.1,0.2],"zeta1":[0.5,0.7],"box":[0,5]}"#;
        let g: CournotGame = serde_json::from_str(json).unwrap();
        assert_eq!(g.players(), 2);
        assert_eq!(g.boxes[1], StrategyBox::interval(0.0, 5.0).unwrap());
        let back = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<CournotGame>(&back).unwrap(), g);
        assert!(back.contains(r#""box":[0.0,5.0]"#));

        let bad = r#"{"a":6,"b":0.0,"zeta2":[0.1],"zeta1":[0.5],"box":[0,5]}"#;
        assert!(serde_json::from_str::<CournotGame>(bad).is_err());
        let disjoint = r#"{"a":6,"b":1,"zeta2":[0.1,0.1],"zeta1":[0.5,0.5],"boxes":[[0,1],[2,3]]}"#;
        assert!(serde_json::from_str::<CournotGame>(disjoint).is_err());
    }

    proptest! {
        #[test]
        fn permutation_preserves_equilibrium_aggregate(seed in 0u64..500, n in 2usize..7, shuffle_seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let game = asymmetric(n, seed);
            let mut map: Vec<usize> = (0..n).collect();
            map.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
            let perm = Permutation::new(map).unwrap();
            let a = game.nash_equilibrium().unwrap().aggregate();
            let b = game.permute(&perm).unwrap().nash_equilibrium().unwrap().aggregate();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn projection_is_idempotent_and_nonexpansive(x in -10.0f64..10.0, y in -10.0f64..10.0, lo in -3.0f64..0.0, w in 0.0f64..6.0) {
            let b = StrategyBox::interval(lo, lo + w).unwrap();
            let px = b.project(&[x]);
            prop_assert_eq!(b.project(&px), px.clone());
            let py = b.project(&[y]);
            prop_assert!((px[0] - py[0]).abs() <= (x - y).abs());
        }
    }
}
