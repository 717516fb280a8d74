//! Sequential testing procedures as state machines over a wealth ledger.
//!
//! Wealth is kept in the natural units of each kind: α-wealth for Alpha
//! Spending and ASR, potential units otherwise. Allocations are always in
//! potential units; [`ProcedureState::scale`] converts between the two.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{best_power, TestSpec};
use crate::error::{Error, Result};
use crate::tradeoff::{ero_level, max_reward, Allocation, CONSTRAINT_TOLERANCE};

/// Wealth at or below this is treated as depleted by the constant scheme.
pub const DEPLETED: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureKind {
    AlphaSpending,
    AlphaInvesting,
    Generalized,
    Asr,
    Ero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcedureConfig {
    pub kind: ProcedureKind,
    pub alpha: f64,
    pub eta: f64,
    pub k: f64,
    pub omega: f64,
}

impl ProcedureConfig {
    /// Defaults: `η = 1 − α`, `k = 1`, `ω = α`.
    pub fn new(kind: ProcedureKind, alpha: f64) -> Self {
        Self { kind, alpha, eta: 1.0 - alpha, k: 1.0, omega: alpha }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain("alpha must lie in (0,1)"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::domain("eta must be positive"));
        }
        if !(self.omega >= 0.0 && self.omega <= self.alpha) {
            return Err(Error::domain("omega must lie in [0, alpha]"));
        }
        if !(self.k >= 1.0 - self.alpha && self.k.is_finite()) {
            return Err(Error::domain("k must be at least 1 - alpha"));
        }
        Ok(())
    }

    /// Potential units per unit of natural wealth.
    pub fn scale(&self) -> f64 {
        match self.kind {
            ProcedureKind::Asr => self.k,
            ProcedureKind::AlphaSpending => 1.0 - self.alpha,
            _ => 1.0,
        }
    }

    pub fn initial_wealth(&self) -> f64 {
        self.alpha * self.eta / self.scale()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationScheme {
    /// Budget `min(W(0)·fraction, W(j−1))` until wealth is depleted.
    Constant,
    /// Budget `W(j−1)·fraction` until wealth falls below `W(0)·stop_threshold`.
    Relative,
    /// Budget `W(j−1)·fraction` for exactly `fixed_m` tests.
    RelativeFixedM,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationRule {
    pub scheme: AllocationScheme,
    #[serde(default = "AllocationRule::default_fraction")]
    pub fraction: f64,
    #[serde(default = "AllocationRule::default_stop_threshold")]
    pub stop_threshold: f64,
    #[serde(default = "AllocationRule::default_fixed_m")]
    pub fixed_m: u64,
}

impl AllocationRule {
    fn default_fraction() -> f64 {
        0.1
    }

    fn default_stop_threshold() -> f64 {
        1e-3
    }

    fn default_fixed_m() -> u64 {
        200
    }

    pub fn new(scheme: AllocationScheme) -> Self {
        Self {
            scheme,
            fraction: Self::default_fraction(),
            stop_threshold: Self::default_stop_threshold(),
            fixed_m: Self::default_fixed_m(),
        }
    }

    pub fn constant() -> Self {
        Self::new(AllocationScheme::Constant)
    }

    pub fn relative() -> Self {
        Self::new(AllocationScheme::Relative)
    }

    pub fn relative_fixed_m(m: u64) -> Self {
        Self { fixed_m: m, ..Self::new(AllocationScheme::RelativeFixedM) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::domain("fraction must lie in (0,1]"));
        }
        if !(self.stop_threshold >= 0.0 && self.stop_threshold < 1.0) {
            return Err(Error::domain("stop threshold must lie in [0,1)"));
        }
        if self.scheme == AllocationScheme::RelativeFixedM && self.fixed_m == 0 {
            return Err(Error::domain("fixed_m must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub j: u64,
    #[serde(flatten)]
    pub allocation: Allocation,
    pub p_value: f64,
    pub rejected: bool,
    pub wealth_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureState {
    pub config: ProcedureConfig,
    pub wealth: f64,
    pub step_index: u64,
    pub rejections: u64,
    pub history: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunTotals {
    pub tests: u64,
    pub rejections: u64,
}

impl ProcedureState {
    pub fn init(config: ProcedureConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, wealth: config.initial_wealth(), step_index: 0, rejections: 0, history: Vec::new() })
    }

    pub fn initial_wealth(&self) -> f64 {
        self.config.initial_wealth()
    }

    pub fn scale(&self) -> f64 {
        self.config.scale()
    }

    /// Wealth expressed in potential units.
    pub fn potential(&self) -> f64 {
        self.wealth * self.scale()
    }

    /// Budget for the next test in natural units, or `None` when the rule stops.
    pub fn budget(&self, rule: &AllocationRule) -> Option<f64> {
        let w0 = self.initial_wealth();
        match rule.scheme {
            AllocationScheme::Constant => (self.wealth > DEPLETED).then(|| (w0 * rule.fraction).min(self.wealth)),
            AllocationScheme::Relative => {
                (self.wealth >= w0 * rule.stop_threshold && self.wealth > 0.0).then(|| self.wealth * rule.fraction)
            }
            AllocationScheme::RelativeFixedM => {
                (self.step_index < rule.fixed_m && self.wealth > 0.0).then(|| self.wealth * rule.fraction)
            }
        }
    }

    /// Next allocation, or `None` when the rule's stopping condition holds.
    ///
    /// The generalized kind has no built-in rule; use [`Self::propose_with`].
    pub fn propose(&self, rule: &AllocationRule, spec: &TestSpec) -> Result<Option<Allocation>> {
        rule.validate()?;
        let Some(budget) = self.budget(rule) else {
            return Ok(None);
        };
        let cfg = &self.config;
        let allocation = match cfg.kind {
            ProcedureKind::AlphaSpending => {
                Allocation { cost: budget * (1.0 - cfg.alpha), reward: 0.0, level: budget }
            }
            ProcedureKind::AlphaInvesting => {
                Allocation { cost: budget, reward: budget + cfg.omega, level: budget / (1.0 + budget) }
            }
            ProcedureKind::Asr => {
                let level = budget;
                let cost = cfg.k * level;
                let rho_bar = best_power(spec, level)?;
                Allocation { cost, reward: max_reward(cost, level, rho_bar, cfg.alpha), level }
            }
            ProcedureKind::Ero => ero_level(spec, budget, cfg.alpha)?,
            ProcedureKind::Generalized => {
                return Err(Error::InvalidAllocation(
                    "generalized procedures need a caller-supplied allocation".into(),
                ))
            }
        };
        self.validate_allocation(&allocation, spec)?;
        Ok(Some(allocation))
    }

    /// Lets the caller choose the triple from the rule's budget (in potential
    /// units). The result is validated against the reward constraint.
    pub fn propose_with<F>(&self, rule: &AllocationRule, spec: &TestSpec, choose: F) -> Result<Option<Allocation>>
    where
        F: FnOnce(f64) -> Allocation,
    {
        rule.validate()?;
        let Some(budget) = self.budget(rule) else {
            return Ok(None);
        };
        let allocation = choose(budget * self.scale());
        self.validate_allocation(&allocation, spec)?;
        Ok(Some(allocation))
    }

    pub fn validate_allocation(&self, allocation: &Allocation, spec: &TestSpec) -> Result<()> {
        let rho_bar = best_power(spec, allocation.level)?;
        allocation.check(rho_bar, self.config.alpha, CONSTRAINT_TOLERANCE)?;
        let available = self.potential();
        if allocation.cost > available * (1.0 + 1e-12) {
            return Err(Error::InvalidAllocation(format!(
                "cost {} exceeds available wealth {available}",
                allocation.cost
            )));
        }
        Ok(())
    }

    /// Applies the outcome of one test.
    pub fn step(&mut self, allocation: Allocation, p_value: f64) -> Result<LedgerEntry> {
        if !(0.0..=1.0).contains(&p_value) {
            return Err(Error::domain(format!("p-value {p_value} outside [0,1]")));
        }
        if !(allocation.level > 0.0 && allocation.level < 1.0) {
            return Err(Error::InvalidAllocation(format!("level {} outside (0,1)", allocation.level)));
        }
        let scale = self.scale();
        let rejected = p_value <= allocation.level;
        let natural_units = matches!(self.config.kind, ProcedureKind::AlphaSpending | ProcedureKind::Asr);
        let charge = if natural_units { allocation.level } else { allocation.cost };
        if charge > self.wealth * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Err(Error::InsufficientWealth { cost: charge, wealth: self.wealth });
        }
        let mut wealth = self.wealth - charge;
        if rejected {
            wealth += if natural_units { allocation.reward / scale } else { allocation.reward };
        }
        self.wealth = wealth.max(0.0);
        self.step_index += 1;
        if rejected {
            self.rejections += 1;
        }
        let entry = LedgerEntry { j: self.step_index, allocation, p_value, rejected, wealth_after: self.wealth };
        self.history.push(entry);
        Ok(entry)
    }

    /// Proposes and steps through `stream` until the rule stops.
    pub fn run<I>(&mut self, rule: &AllocationRule, stream: I) -> Result<RunTotals>
    where
        I: IntoIterator<Item = (TestSpec, f64)>,
    {
        let mut stream = stream.into_iter();
        let mut totals = RunTotals::default();
        loop {
            let next = stream.next();
            let spec = match &next {
                Some((spec, _)) => *spec,
                None => {
                    // Peek whether the rule would stop anyway.
                    if self.budget(rule).is_none() {
                        return Ok(totals);
                    }
                    return Err(Error::StreamExhausted { tests: totals.tests as usize });
                }
            };
            let Some(allocation) = self.propose(rule, &spec)? else {
                return Ok(totals);
            };
            let (_, p) = next.expect("checked above");
            let entry = self.step(allocation, p)?;
            totals.tests += 1;
            totals.rejections += u64::from(entry.rejected);
        }
    }

    /// Recomputes the wealth trajectory from `history` and checks it matches.
    pub fn replay(config: ProcedureConfig, history: &[LedgerEntry]) -> Result<Self> {
        let mut state = Self::init(config)?;
        for (i, e) in history.iter().enumerate() {
            let got = state.step(e.allocation, e.p_value)?;
            if got.rejected != e.rejected || got.wealth_after != e.wealth_after {
                return Err(Error::ReplayDiverged {
                    index: i,
                    reason: format!("wealth {} vs recorded {}", got.wealth_after, e.wealth_after),
                });
            }
        }
        Ok(state)
    }

    /// Writes the ledger as JSON lines.
    pub fn write_ledger<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.history {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Observed-means estimate of `mFDR_η`.
pub fn mfdr_hat(total_false_rejects: f64, total_rejects: f64, eta: f64) -> f64 {
    total_false_rejects / (total_rejects + eta)
}
