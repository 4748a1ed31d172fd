//! Distributional policy evaluation with the projected Bellman operator.
//!
//! One sweep maps a table of per-(state, action) return distributions to
//!
//! ```text
//! η'(s,a) = Σ_{s'} P(s'|s,a) Π_C (b_{C(s,a,s'),γ})_# Σ_{a'} π(a'|s') η(s',a')
//! ```
//!
//! synchronously for every pair, which is a √γ-contraction in the supremum
//! Cramér distance. Terminal pairs hold the projection of δ_0.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, SoftmaxPolicy, TabularMdp};
use crate::measure::{
    cramer_between, CategoricalDistribution, PushforwardMap, SupportGrid, SIMPLEX_TOL,
};

/// One categorical return distribution per `(s, a)` on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDistributionTable {
    grid: SupportGrid,
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl ReturnDistributionTable {
    /// Every entry is a point mass on the atom nearest to zero.
    pub fn cold_start(grid: SupportGrid, n_states: usize, n_actions: usize) -> Self {
        let n = grid.n_atoms();
        let zero = grid.nearest_index(0.0);
        let mut probs = vec![0.0; n_states * n_actions * n];
        for sa in 0..n_states * n_actions {
            probs[sa * n + zero] = 1.0;
        }
        Self {
            grid,
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn from_entries(
        grid: SupportGrid,
        n_states: usize,
        n_actions: usize,
        entries: Vec<CategoricalDistribution>,
    ) -> Result<Self> {
        if entries.len() != n_states * n_actions {
            return Err(Error::dim(format!(
                "expected {} entries, got {}",
                n_states * n_actions,
                entries.len()
            )));
        }
        let mut probs = Vec::with_capacity(entries.len() * grid.n_atoms());
        for e in entries {
            grid.ensure_same(e.grid())?;
            probs.extend(e.into_probs());
        }
        Ok(Self {
            grid,
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.grid.n_atoms()
    }

    pub fn entry(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.probs[o..o + self.grid.n_atoms()]
    }

    fn entry_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let o = self.offset(s, a);
        let n = self.grid.n_atoms();
        &mut self.probs[o..o + n]
    }

    pub fn distribution(&self, s: usize, a: usize) -> Result<CategoricalDistribution> {
        CategoricalDistribution::new(self.grid, self.entry(s, a).to_vec())
    }

    /// Checks every entry is a probability vector within `tol`.
    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for (sa, chunk) in self.probs.chunks_exact(self.grid.n_atoms()).enumerate() {
            let total: f64 = chunk.iter().sum();
            if (total - 1.0).abs() > tol || chunk.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::invalid(format!(
                    "entry {}:{} is not a distribution (mass {total})",
                    sa / self.n_actions,
                    sa % self.n_actions
                )));
            }
        }
        Ok(())
    }

    fn ensure_compatible(&self, other: &Self) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::dim("tables have different shapes"));
        }
        Ok(())
    }

    fn ensure_fits(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::dim(format!(
                "table is {}x{} but MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    /// `max_{(s,a)} ℓ2(self(s,a), other(s,a))`.
    pub fn sup_cramer(&self, other: &Self) -> Result<f64> {
        self.ensure_compatible(other)?;
        Ok(self.sup_cramer_unchecked(other))
    }

    fn sup_cramer_unchecked(&self, other: &Self) -> f64 {
        let n = self.grid.n_atoms();
        self.probs
            .chunks_exact(n)
            .zip(other.probs.chunks_exact(n))
            .map(|(p, q)| cramer_between(&self.grid, p, q))
            .fold(0.0, f64::max)
    }

    /// `Σ_a π(a|s) η(s,a)` written into `out`.
    fn mixture_into(&self, pi: &[f64], s: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (a, &pa) in pi.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.entry(s, a)) {
                *o += pa * p;
            }
        }
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

impl Serialize for ReturnDistributionTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.n_states * self.n_actions))?;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let d = CategoricalDistribution::new(self.grid, self.entry(s, a).to_vec())
                    .map_err(serde::ser::Error::custom)?;
                map.serialize_entry(&format!("{s}:{a}"), &d)?;
            }
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ReturnDistributionTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: HashMap<String, CategoricalDistribution> = HashMap::deserialize(deserializer)?;
        let mut keyed = Vec::with_capacity(raw.len());
        for (key, dist) in raw {
            let (s, a) = key
                .split_once(':')
                .and_then(|(s, a)| Some((s.parse::<usize>().ok()?, a.parse::<usize>().ok()?)))
                .ok_or_else(|| D::Error::custom(format!("bad table key {key:?}")))?;
            keyed.push(((s, a), dist));
        }
        if keyed.is_empty() {
            return Err(D::Error::custom("empty table"));
        }
        keyed.sort_by_key(|(k, _)| *k);
        let n_states = keyed.iter().map(|((s, _), _)| s + 1).max().unwrap_or(0);
        let n_actions = keyed.iter().map(|((_, a), _)| a + 1).max().unwrap_or(0);
        if keyed.len() != n_states * n_actions {
            return Err(D::Error::custom("table keys do not cover every (s, a)"));
        }
        let grid = *keyed[0].1.grid();
        let entries = keyed.into_iter().map(|(_, d)| d).collect();
        ReturnDistributionTable::from_entries(grid, n_states, n_actions, entries)
            .map_err(D::Error::custom)
    }
}

/// `η^s = Σ_a π(a|s) η^{(s,a)}`.
pub fn state_distribution(
    table: &ReturnDistributionTable,
    policy: &SoftmaxPolicy,
    s: usize,
) -> Result<CategoricalDistribution> {
    if s >= table.n_states || policy.n_states() != table.n_states {
        return Err(Error::invalid(format!("state {s} does not fit the table")));
    }
    let mut out = vec![0.0; table.grid.n_atoms()];
    table.mixture_into(&policy.action_probs(s), s, &mut out);
    CategoricalDistribution::new(table.grid, out)
}

/// Precomputed structure of the projected Bellman operator for one MDP and grid.
///
/// Successor distributions are pushed forward once per distinct
/// `(successor, cost)` pair and then shared by every `(s, a)` that reaches it.
#[derive(Debug, Clone)]
pub struct BackupPlan {
    grid: SupportGrid,
    n_states: usize,
    n_actions: usize,
    terminal: Vec<bool>,
    maps: Vec<PushforwardMap>,
    /// `(successor, map index)`
    keys: Vec<(usize, usize)>,
    /// per `(s, a)`: `(key index, probability)`
    entries: Vec<Vec<(usize, f64)>>,
    terminal_entry: Vec<f64>,
}

impl BackupPlan {
    pub fn new(mdp: &TabularMdp, grid: SupportGrid) -> Result<Self> {
        let mut maps: Vec<PushforwardMap> = Vec::new();
        let mut map_ids: HashMap<u64, usize> = HashMap::new();
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut key_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut entries = Vec::with_capacity(mdp.n_states() * mdp.n_actions());
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let mut entry = Vec::new();
                if !mdp.is_terminal(s) {
                    for next in 0..mdp.n_states() {
                        let p = mdp.prob(s, a, next);
                        if p == 0.0 {
                            continue;
                        }
                        let c = mdp.cost(s, a, next);
                        let map = match map_ids.get(&c.to_bits()) {
                            Some(&m) => m,
                            None => {
                                maps.push(PushforwardMap::new(grid, c, mdp.gamma())?);
                                map_ids.insert(c.to_bits(), maps.len() - 1);
                                maps.len() - 1
                            }
                        };
                        let key = *key_ids.entry((next, map)).or_insert_with(|| {
                            keys.push((next, map));
                            keys.len() - 1
                        });
                        entry.push((key, p));
                    }
                }
                entries.push(entry);
            }
        }
        let terminal_entry = CategoricalDistribution::projected_dirac(grid, 0.0)?.into_probs();
        Ok(Self {
            grid,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            terminal: (0..mdp.n_states()).map(|s| mdp.is_terminal(s)).collect(),
            maps,
            keys,
            entries,
            terminal_entry,
        })
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    fn check(&self, table: &ReturnDistributionTable, policy: &SoftmaxPolicy) -> Result<()> {
        self.grid.ensure_same(&table.grid)?;
        if table.n_states != self.n_states || table.n_actions != self.n_actions {
            return Err(Error::dim("table does not match the MDP"));
        }
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::dim("policy does not match the MDP"));
        }
        Ok(())
    }

    /// Per-state action mixtures of `table` under `policy`, row-major.
    fn mixtures(&self, table: &ReturnDistributionTable, policy: &SoftmaxPolicy) -> Vec<f64> {
        let n = self.grid.n_atoms();
        let mut mix = vec![0.0; self.n_states * n];
        let mut pi = vec![0.0; self.n_actions];
        for (s, out) in mix.chunks_exact_mut(n).enumerate() {
            policy.action_probs_into(s, &mut pi);
            table.mixture_into(&pi, s, out);
        }
        mix
    }

    /// One synchronous application of `Π_C T^π`.
    pub fn sweep(
        &self,
        table: &ReturnDistributionTable,
        policy: &SoftmaxPolicy,
    ) -> Result<ReturnDistributionTable> {
        self.check(table, policy)?;
        Ok(self.sweep_unchecked(table, policy))
    }

    fn sweep_unchecked(
        &self,
        table: &ReturnDistributionTable,
        policy: &SoftmaxPolicy,
    ) -> ReturnDistributionTable {
        let n = self.grid.n_atoms();
        let mix = self.mixtures(table, policy);
        let mut pushed = vec![0.0; self.keys.len() * n];
        for (out, &(next, map)) in pushed.chunks_exact_mut(n).zip(&self.keys) {
            self.maps[map].apply_add(&mix[next * n..(next + 1) * n], 1.0, out);
        }
        let mut probs = vec![0.0; self.n_states * self.n_actions * n];
        for (sa, out) in probs.chunks_exact_mut(n).enumerate() {
            if self.terminal[sa / self.n_actions] {
                out.copy_from_slice(&self.terminal_entry);
                continue;
            }
            for &(key, p) in &self.entries[sa] {
                for (o, &v) in out.iter_mut().zip(&pushed[key * n..(key + 1) * n]) {
                    *o += p * v;
                }
            }
        }
        ReturnDistributionTable {
            grid: self.grid,
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        }
    }

    /// Supremum-Cramér distance between `table` and its one-step backup.
    pub fn residual(&self, table: &ReturnDistributionTable, policy: &SoftmaxPolicy) -> Result<f64> {
        let next = self.sweep(table, policy)?;
        Ok(next.sup_cramer_unchecked(table))
    }
}

/// One synchronous sweep of the projected distributional Bellman operator.
pub fn bellman_backup(
    table: &ReturnDistributionTable,
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
) -> Result<ReturnDistributionTable> {
    table.ensure_fits(mdp)?;
    BackupPlan::new(mdp, table.grid)?.sweep(table, policy)
}

/// Supremum over `(s, a)` of the Cramér distance between the table and its backup.
pub fn bellman_residual(
    table: &ReturnDistributionTable,
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
) -> Result<f64> {
    table.ensure_fits(mdp)?;
    BackupPlan::new(mdp, table.grid)?.residual(table, policy)
}

/// Returns a warning if discounted returns can leave the grid.
pub fn grid_coverage_warning(mdp: &TabularMdp, grid: &SupportGrid) -> Option<String> {
    let (lo, hi) = mdp.return_bounds();
    (lo < grid.z_min() || hi > grid.z_max()).then(|| {
        format!(
            "returns may span [{lo:.3}, {hi:.3}] but the grid covers [{}, {}]; \
             out-of-range mass is clamped to the boundary atoms",
            grid.z_min(),
            grid.z_max()
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    ModelBased,
    SampleBased,
}

/// How many sweeps each evaluation runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SweepSchedule {
    /// Iterate until the successive sup-Cramér distance drops below the tolerance.
    Tolerance,
    /// Exactly `ceil(kappa * N * (|τ| + 1))` sweeps for a trajectory of length `|τ|`.
    Kappa { kappa: f64 },
}

impl SweepSchedule {
    pub fn fixed_sweeps(&self, n_atoms: usize, trajectory_len: usize) -> Option<usize> {
        match *self {
            SweepSchedule::Tolerance => None,
            SweepSchedule::Kappa { kappa } => {
                Some(kappa_sweeps(kappa, n_atoms, trajectory_len))
            }
        }
    }
}

/// `k = ceil(κ N (|τ| + 1))`, at least one sweep.
pub fn kappa_sweeps(kappa: f64, n_atoms: usize, trajectory_len: usize) -> usize {
    ((kappa * n_atoms as f64 * (trajectory_len + 1) as f64).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub max_sweeps: usize,
    /// Stop once successive tables are closer than this in sup-Cramér distance.
    pub tolerance: f64,
    pub warm_start: bool,
    /// Stop after this many consecutive sweeps without a decrease in distance.
    pub early_stop_patience: usize,
    pub mode: EvalMode,
    pub td_step_size: f64,
    pub schedule: SweepSchedule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10_000,
            tolerance: 1e-8,
            warm_start: true,
            early_stop_patience: 5,
            mode: EvalMode::ModelBased,
            td_step_size: 0.1,
            schedule: SweepSchedule::Tolerance,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("eval.tolerance must be positive".into()));
        }
        if self.early_stop_patience < 1 {
            return Err(Error::Config("eval.early_stop_patience must be at least 1".into()));
        }
        if self.max_sweeps < 1 {
            return Err(Error::Config("eval.max_sweeps must be at least 1".into()));
        }
        if !(self.td_step_size > 0.0 && self.td_step_size <= 1.0) {
            return Err(Error::Config("eval.td_step_size must lie in (0, 1]".into()));
        }
        if let SweepSchedule::Kappa { kappa } = self.schedule {
            if !(kappa > 0.0) {
                return Err(Error::Config("eval.schedule.kappa must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    EarlyStopped,
    MaxSweeps,
    FixedSweeps,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub table: ReturnDistributionTable,
    pub sweeps: usize,
    /// Sup-Cramér distance between the last two iterates.
    pub residual: f64,
    /// Distance after every sweep, in order.
    pub history: Vec<f64>,
    pub stop: StopReason,
}

impl EvalOutcome {
    /// Writes `sweep,residual` rows.
    pub fn write_residual_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep", "residual"])?;
        for (k, r) in self.history.iter().enumerate() {
            w.write_record([(k + 1).to_string(), format!("{r:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn initial_table(
    mdp: &TabularMdp,
    grid: SupportGrid,
    config: &EvalConfig,
    warm: Option<&ReturnDistributionTable>,
) -> Result<ReturnDistributionTable> {
    match warm {
        Some(t) if config.warm_start => {
            grid.ensure_same(&t.grid)?;
            t.ensure_fits(mdp)?;
            Ok(t.clone())
        }
        _ => Ok(ReturnDistributionTable::cold_start(
            grid,
            mdp.n_states(),
            mdp.n_actions(),
        )),
    }
}

/// Tracks the tolerance and early-stopping rules across sweeps.
struct StopRule {
    tolerance: f64,
    patience: usize,
    stalled: usize,
    previous: f64,
}

impl StopRule {
    fn new(config: &EvalConfig) -> Self {
        Self {
            tolerance: config.tolerance,
            patience: config.early_stop_patience,
            stalled: 0,
            previous: f64::INFINITY,
        }
    }

    fn observe(&mut self, distance: f64) -> Option<StopReason> {
        if distance < self.tolerance {
            return Some(StopReason::Converged);
        }
        if distance >= self.previous {
            self.stalled += 1;
        } else {
            self.stalled = 0;
        }
        self.previous = distance;
        (self.stalled >= self.patience).then_some(StopReason::EarlyStopped)
    }
}

/// Model-based evaluation with the tolerance and early-stopping rules.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    config: &EvalConfig,
    warm: Option<&ReturnDistributionTable>,
) -> Result<EvalOutcome> {
    config.validate()?;
    let plan = BackupPlan::new(mdp, grid)?;
    evaluate_with_plan(&plan, mdp, policy, config, warm)
}

pub(crate) fn evaluate_with_plan(
    plan: &BackupPlan,
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    config: &EvalConfig,
    warm: Option<&ReturnDistributionTable>,
) -> Result<EvalOutcome> {
    let mut table = initial_table(mdp, plan.grid, config, warm)?;
    plan.check(&table, policy)?;
    let mut rule = StopRule::new(config);
    let mut history = Vec::new();
    let mut stop = StopReason::MaxSweeps;
    for _ in 0..config.max_sweeps {
        let next = plan.sweep_unchecked(&table, policy);
        let d = next.sup_cramer_unchecked(&table);
        history.push(d);
        table = next;
        if let Some(reason) = rule.observe(d) {
            stop = reason;
            break;
        }
    }
    debug_assert!(table.check_simplex(SIMPLEX_TOL).is_ok());
    Ok(EvalOutcome {
        table,
        sweeps: history.len(),
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        history,
        stop,
    })
}

/// Exactly `sweeps` applications of the projected operator.
pub fn evaluate_policy_fixed(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    sweeps: usize,
    warm: Option<&ReturnDistributionTable>,
) -> Result<EvalOutcome> {
    let plan = BackupPlan::new(mdp, grid)?;
    fixed_with_plan(&plan, mdp, policy, sweeps, warm)
}

pub(crate) fn fixed_with_plan(
    plan: &BackupPlan,
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    sweeps: usize,
    warm: Option<&ReturnDistributionTable>,
) -> Result<EvalOutcome> {
    let config = EvalConfig {
        warm_start: warm.is_some(),
        ..EvalConfig::default()
    };
    let mut table = initial_table(mdp, plan.grid, &config, warm)?;
    plan.check(&table, policy)?;
    let mut history = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let next = plan.sweep_unchecked(&table, policy);
        history.push(next.sup_cramer_unchecked(&table));
        table = next;
    }
    Ok(EvalOutcome {
        table,
        sweeps,
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        history,
        stop: StopReason::FixedSweeps,
    })
}

/// One online categorical TD update of entry `(s, a)` from the transition
/// `(s, a, cost, next)`.
#[allow(clippy::too_many_arguments)]
pub fn categorical_td_update(
    table: &mut ReturnDistributionTable,
    s: usize,
    a: usize,
    cost: f64,
    next: usize,
    policy: &SoftmaxPolicy,
    gamma: f64,
    step_size: f64,
) -> Result<()> {
    if !(step_size > 0.0 && step_size <= 1.0) {
        return Err(Error::invalid(format!(
            "TD step size must lie in (0, 1], got {step_size}"
        )));
    }
    if s >= table.n_states || a >= table.n_actions {
        return Err(Error::invalid(format!("({s}, {a}) does not fit the table")));
    }
    let target = state_distribution(table, policy, next)?.pushforward(cost, gamma)?;
    let entry = table.entry_mut(s, a);
    if step_size == 1.0 {
        entry.copy_from_slice(target.probs());
    } else {
        for (e, &t) in entry.iter_mut().zip(target.probs()) {
            *e = (1.0 - step_size) * *e + step_size * t;
        }
    }
    Ok(())
}

/// Sample-based evaluation: each sweep draws one successor per non-terminal
/// `(s, a)` from the model and applies a categorical TD update in place.
pub fn evaluate_policy_td<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &SoftmaxPolicy,
    grid: SupportGrid,
    config: &EvalConfig,
    warm: Option<&ReturnDistributionTable>,
    rng: &mut R,
) -> Result<EvalOutcome> {
    config.validate()?;
    policy.check_compatible(mdp)?;
    let mut table = initial_table(mdp, grid, config, warm)?;
    let terminal = CategoricalDistribution::projected_dirac(grid, 0.0)?.into_probs();
    for t in mdp.terminals() {
        for a in 0..mdp.n_actions() {
            table.entry_mut(t, a).copy_from_slice(&terminal);
        }
    }
    let mut rule = StopRule::new(config);
    let mut history = Vec::new();
    let mut stop = StopReason::MaxSweeps;
    for _ in 0..config.max_sweeps {
        let before = table.clone();
        for s in (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)) {
            for a in 0..mdp.n_actions() {
                let next = sample_index(mdp.transition_row(s, a), rng.random::<f64>());
                let cost = mdp.cost(s, a, next);
                categorical_td_update(
                    &mut table,
                    s,
                    a,
                    cost,
                    next,
                    policy,
                    mdp.gamma(),
                    config.td_step_size,
                )?;
            }
        }
        let d = table.sup_cramer_unchecked(&before);
        history.push(d);
        if let Some(reason) = rule.observe(d) {
            stop = reason;
            break;
        }
    }
    Ok(EvalOutcome {
        table,
        sweeps: history.len(),
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        history,
        stop,
    })
}
