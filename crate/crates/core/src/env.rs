//! Finite-horizon episodic environments and trajectory simulation.
//!
//! Two kinds of environment are supported: the one-dimensional continuous
//! environment with dynamics `S' = (2A − 1)·f(S)`, reward `2S'` and a uniform
//! initial law on `[-2, 2]`, and small tabular MDPs whose states are stored
//! as integral `f64` values so both kinds share one trajectory layout.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BSplineBasis, DEFAULT_DEGREE};
use crate::error::{Error, Result};
use crate::policy::PolicySpec;

pub const STATE_LO: f64 = -2.0;
pub const STATE_HI: f64 = 2.0;

/// Grid size for the `sup |f| ≤ 2` check.
pub const SUP_CHECK_POINTS: usize = 10_001;

/// Coefficients of the shipped transition curve: a clamped cubic B-spline
/// with 8 basis functions and equally spaced knots on `[-2, 2]`.
pub const DEFAULT_F_COEFFICIENTS: [f64; 8] = [1.2, 1.8, 0.9, -1.1, -1.6, 0.3, 1.4, 0.6];

const TABULAR_TOL: f64 = 1e-9;

// ── seeds ──────────────────────────────────────────────────────────────

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a sequence of indices by
/// folding each part through the splitmix64 finalizer.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Stable 64-bit FNV-1a hash, used to fold names into seeds.
pub fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ── transition curve ───────────────────────────────────────────────────

/// The transition curve `f` on `[-2, 2]`, a clamped cubic B-spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCurve {
    basis: BSplineBasis,
    coefficients: Vec<f64>,
}

impl TransitionCurve {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() < DEFAULT_DEGREE + 1 {
            return Err(Error::InvalidEnv(format!(
                "need at least {} spline coefficients, got {}",
                DEFAULT_DEGREE + 1,
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidEnv("non-finite coefficient".into()));
        }
        let basis = BSplineBasis::clamped_uniform(STATE_LO, STATE_HI, coefficients.len(), DEFAULT_DEGREE)?;
        let curve = Self { basis, coefficients };
        let sup = curve.sup_abs();
        if sup > STATE_HI {
            return Err(Error::InvalidEnv(format!(
                "sup |f| = {sup} exceeds 2; states would leave [-2, 2]"
            )));
        }
        Ok(curve)
    }

    pub fn default_curve() -> Self {
        Self::new(DEFAULT_F_COEFFICIENTS.to_vec()).expect("default curve is valid")
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.basis.combine(&self.coefficients, s)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    fn grid() -> impl Iterator<Item = f64> {
        let step = (STATE_HI - STATE_LO) / (SUP_CHECK_POINTS - 1) as f64;
        (0..SUP_CHECK_POINTS).map(move |i| STATE_LO + step * i as f64)
    }

    /// `max |f|` over the dense check grid.
    pub fn sup_abs(&self) -> f64 {
        Self::grid().map(|s| self.eval(s).abs()).fold(0.0, f64::max)
    }

    /// Sign changes of `f` on `[-2, 2]`, located by bisection between
    /// neighbouring grid points.
    pub fn roots(&self) -> Vec<f64> {
        let pts: Vec<f64> = Self::grid().collect();
        let mut roots = Vec::new();
        for w in pts.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 {
                roots.push(a);
                continue;
            }
            if fa * fb >= 0.0 {
                continue;
            }
            let mut fa = fa;
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let fm = self.eval(m);
                if (fm > 0.0) == (fa > 0.0) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        roots
    }
}

// ── tabular model ──────────────────────────────────────────────────────

/// Time-homogeneous finite MDP: `transitions[s][a][s']`, mean rewards
/// `rewards[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl TabularModel {
    pub fn states(&self) -> usize {
        self.transitions.len()
    }

    pub fn actions(&self) -> usize {
        self.rewards[0].len()
    }

    /// Exact `Q_t` for `t = 1..=T` by backward dynamic programming.
    pub fn q_functions(&self, policy: &PolicySpec, horizon: usize) -> Vec<Vec<Vec<f64>>> {
        let (ns, na) = (self.states(), self.actions());
        let mut q = vec![vec![vec![0.0; na]; ns]; horizon];
        let mut v_next = vec![0.0; ns];
        for t in (1..=horizon).rev() {
            for s in 0..ns {
                for a in 0..na {
                    let cont: f64 = self.transitions[s][a]
                        .iter()
                        .zip(&v_next)
                        .map(|(p, v)| p * v)
                        .sum();
                    q[t - 1][s][a] = self.rewards[s][a] + cont;
                }
            }
            v_next = (0..ns)
                .map(|s| {
                    let probs = policy.probs(t, s as f64);
                    q[t - 1][s].iter().zip(probs.iter()).map(|(q, p)| q * p).sum()
                })
                .collect();
        }
        q
    }
}

// ── environment ────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// `S' = (2A − 1)·f(S)`, `R = 2S'`.
    Curve { f: TransitionCurve },
    Tabular(TabularModel),
}

/// Initial state law `ρ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Uniform { lo: f64, hi: f64 },
    Discrete { pmf: Vec<f64> },
}

impl InitialLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitialLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            InitialLaw::Discrete { pmf } => sample_index(pmf, rng) as f64,
        }
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last index with positive mass
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(pmf.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    horizon: usize,
    actions: usize,
    dynamics: Dynamics,
    initial: InitialLaw,
}

/// The continuous environment with transition curve coefficients `f_coefficients`.
pub fn make_paper_env(f_coefficients: &[f64], horizon: usize) -> Result<EnvSpec> {
    if horizon == 0 {
        return Err(Error::InvalidEnv("horizon must be at least 1".into()));
    }
    let f = TransitionCurve::new(f_coefficients.to_vec())?;
    Ok(EnvSpec {
        horizon,
        actions: 2,
        dynamics: Dynamics::Curve { f },
        initial: InitialLaw::Uniform {
            lo: STATE_LO,
            hi: STATE_HI,
        },
    })
}

pub fn make_tabular_env(
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    initial: Vec<f64>,
    horizon: usize,
) -> Result<EnvSpec> {
    if horizon == 0 {
        return Err(Error::InvalidEnv("horizon must be at least 1".into()));
    }
    let ns = transitions.len();
    if ns == 0 || rewards.len() != ns || initial.len() != ns {
        return Err(Error::InvalidEnv(
            "transitions, rewards and initial pmf must cover the same states".into(),
        ));
    }
    let na = rewards[0].len();
    if na == 0 {
        return Err(Error::InvalidEnv("need at least one action".into()));
    }
    check_pmf(&initial, "initial pmf")?;
    for s in 0..ns {
        if transitions[s].len() != na || rewards[s].len() != na {
            return Err(Error::InvalidEnv(format!("state {s} has the wrong action count")));
        }
        if rewards[s].iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidEnv(format!("non-finite reward at state {s}")));
        }
        for a in 0..na {
            if transitions[s][a].len() != ns {
                return Err(Error::InvalidEnv(format!("row ({s},{a}) has the wrong length")));
            }
            check_pmf(&transitions[s][a], &format!("transition row ({s},{a})"))?;
        }
    }
    Ok(EnvSpec {
        horizon,
        actions: na,
        dynamics: Dynamics::Tabular(TabularModel {
            transitions,
            rewards,
        }),
        initial: InitialLaw::Discrete { pmf: initial },
    })
}

pub(crate) fn check_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidEnv(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > TABULAR_TOL {
        return Err(Error::InvalidEnv(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl EnvSpec {
    pub fn paper_default(horizon: usize) -> Result<Self> {
        make_paper_env(&DEFAULT_F_COEFFICIENTS, horizon)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    /// Same dynamics with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidEnv("horizon must be at least 1".into()));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    pub fn curve(&self) -> Option<&TransitionCurve> {
        match &self.dynamics {
            Dynamics::Curve { f } => Some(f),
            Dynamics::Tabular(_) => None,
        }
    }

    pub fn tabular(&self) -> Option<&TabularModel> {
        match &self.dynamics {
            Dynamics::Tabular(m) => Some(m),
            Dynamics::Curve { .. } => None,
        }
    }

    /// Number of states for tabular environments.
    pub fn state_count(&self) -> Option<usize> {
        self.tabular().map(TabularModel::states)
    }

    pub fn contains(&self, s: f64) -> bool {
        match &self.dynamics {
            Dynamics::Curve { .. } => (STATE_LO..=STATE_HI).contains(&s),
            Dynamics::Tabular(m) => s >= 0.0 && s.fract() == 0.0 && (s as usize) < m.states(),
        }
    }

    /// One transition: returns `(next state, reward)`.
    pub fn step<R: Rng + ?Sized>(&self, s: f64, a: usize, rng: &mut R) -> (f64, f64) {
        match &self.dynamics {
            Dynamics::Curve { f } => {
                let sign = 2.0 * a as f64 - 1.0;
                let next = sign * f.eval(s);
                (next, 2.0 * next)
            }
            Dynamics::Tabular(m) => {
                let si = s as usize;
                let next = sample_index(&m.transitions[si][a], rng);
                (next as f64, m.rewards[si][a])
            }
        }
    }
}

// ── trajectories ───────────────────────────────────────────────────────

/// `n` episodes of horizon `T`. Steps are 1-based in the accessors:
/// states exist for `t = 1..=T+1`, actions and rewards for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    n: usize,
    horizon: usize,
    states: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn new(
        n: usize,
        horizon: usize,
        states: Vec<f64>,
        actions: Vec<usize>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || horizon == 0 {
            return Err(Error::Data("batch needs n >= 1 and T >= 1".into()));
        }
        if states.len() != n * (horizon + 1) || actions.len() != n * horizon || rewards.len() != n * horizon {
            return Err(Error::DimensionMismatch(format!(
                "arrays do not match n = {n}, T = {horizon}"
            )));
        }
        if states.iter().chain(&rewards).any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite state or reward".into()));
        }
        Ok(Self {
            n,
            horizon,
            states,
            actions,
            rewards,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state(&self, i: usize, t: usize) -> f64 {
        self.states[i * (self.horizon + 1) + t - 1]
    }

    pub fn action(&self, i: usize, t: usize) -> usize {
        self.actions[i * self.horizon + t - 1]
    }

    pub fn reward(&self, i: usize, t: usize) -> f64 {
        self.rewards[i * self.horizon + t - 1]
    }

    /// All states at step `t`.
    pub fn states_at(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.state(i, t)).collect()
    }

    pub fn actions_at(&self, t: usize) -> Vec<usize> {
        (0..self.n).map(|i| self.action(i, t)).collect()
    }

    pub fn rewards_at(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.reward(i, t)).collect()
    }

    pub fn max_action(&self) -> usize {
        self.actions.iter().copied().max().unwrap_or(0)
    }

    /// Mean over episodes of the total reward.
    pub fn mean_return(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.n as f64
    }

    /// Checks the batch against an environment's state and action sets.
    pub fn validate_for(&self, env: &EnvSpec) -> Result<()> {
        if let Some(s) = self.states.iter().find(|&&s| !env.contains(s)) {
            return Err(Error::Data(format!("state {s} outside the environment's domain")));
        }
        if self.max_action() >= env.actions() {
            return Err(Error::Data(format!(
                "action {} out of range for {} actions",
                self.max_action(),
                env.actions()
            )));
        }
        Ok(())
    }

    /// CSV with header `episode,t,state,action,reward`; row `t = T+1`
    /// carries the terminal state with empty action and reward.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "t", "state", "action", "reward"])?;
        for i in 0..self.n {
            for t in 1..=self.horizon {
                w.write_record([
                    i.to_string(),
                    t.to_string(),
                    fmt_f64(self.state(i, t)),
                    self.action(i, t).to_string(),
                    fmt_f64(self.reward(i, t)),
                ])?;
            }
            w.write_record([
                i.to_string(),
                (self.horizon + 1).to_string(),
                fmt_f64(self.state(i, self.horizon + 1)),
                String::new(),
                String::new(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != ["episode", "t", "state", "action", "reward"] {
            return Err(Error::Data(format!("unexpected header {header:?}")));
        }
        let mut rows: Vec<(usize, usize, f64, Option<usize>, Option<f64>)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Data(format!("row {}: bad {what}", line + 2));
            let episode = rec[0].parse().map_err(|_| bad("episode"))?;
            let t = rec[1].parse().map_err(|_| bad("t"))?;
            let state = rec[2].parse().map_err(|_| bad("state"))?;
            let action = match &rec[3] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("action"))?),
            };
            let reward = match &rec[4] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad("reward"))?),
            };
            rows.push((episode, t, state, action, reward));
        }
        if rows.is_empty() {
            return Err(Error::Data("no trajectory rows".into()));
        }
        let n = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let t_max = rows.iter().map(|r| r.1).max().unwrap();
        if t_max < 2 {
            return Err(Error::Data("episodes need at least one step".into()));
        }
        let horizon = t_max - 1;
        if rows.len() != n * (horizon + 1) {
            return Err(Error::Data(format!(
                "{} rows do not form {n} complete episodes of horizon {horizon}",
                rows.len()
            )));
        }
        let mut states = vec![f64::NAN; n * (horizon + 1)];
        let mut actions = vec![usize::MAX; n * horizon];
        let mut rewards = vec![f64::NAN; n * horizon];
        for (i, t, s, a, r) in rows {
            if t == 0 || t > horizon + 1 {
                return Err(Error::Data(format!("step {t} out of range")));
            }
            states[i * (horizon + 1) + t - 1] = s;
            if t <= horizon {
                let (Some(a), Some(r)) = (a, r) else {
                    return Err(Error::Data(format!("episode {i} step {t} lacks action or reward")));
                };
                actions[i * horizon + t - 1] = a;
                rewards[i * horizon + t - 1] = r;
            }
        }
        if actions.contains(&usize::MAX) || states.iter().any(|s| s.is_nan()) {
            return Err(Error::Data("duplicate or missing rows".into()));
        }
        Self::new(n, horizon, states, actions, rewards)
    }
}

/// Shortest decimal representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    // normalise -0 so outputs do not depend on the sign of zero
    format!("{}", x + 0.0)
}

/// Draws `n` i.i.d. episodes of `env` under `policy`. A pure function of its
/// arguments.
pub fn simulate(env: &EnvSpec, policy: &PolicySpec, n: usize, seed: u64) -> Result<TrajectoryBatch> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    policy.check_compatible(env)?;
    let horizon = env.horizon();
    let mut rng = rng_from_seed(seed);
    let mut states = Vec::with_capacity(n * (horizon + 1));
    let mut actions = Vec::with_capacity(n * horizon);
    let mut rewards = Vec::with_capacity(n * horizon);
    for _ in 0..n {
        let mut s = env.initial().sample(&mut rng);
        states.push(s);
        for t in 1..=horizon {
            let probs = policy.probs(t, s);
            let a = sample_index(&probs, &mut rng);
            let (next, r) = env.step(s, a, &mut rng);
            actions.push(a);
            rewards.push(r);
            states.push(next);
            s = next;
        }
    }
    TrajectoryBatch::new(n, horizon, states, actions, rewards)
}
