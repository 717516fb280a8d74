//! Quality preserving database manager: cost quoting, level allocation and
//! wealth accounting for the `as`, `asr` and `asr_opt` variants.

use serde::{Deserialize, Serialize};

use crate::distributions::{best_power, power, LevelSampleFn, TestRequest, POWER_TOLERANCE};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_COST: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpdVariant {
    As,
    Asr,
    AsrOpt,
}

impl QpdVariant {
    pub const ALL: [QpdVariant; 3] = [QpdVariant::As, QpdVariant::Asr, QpdVariant::AsrOpt];

    pub fn name(&self) -> &'static str {
        match self {
            QpdVariant::As => "as",
            QpdVariant::Asr => "asr",
            QpdVariant::AsrOpt => "asr_opt",
        }
    }
}

/// Alternative used for the best power in `asr` rewards when `k > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardAlternative {
    #[default]
    DeclaredEffect,
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpdConfig {
    pub variant: QpdVariant,
    pub alpha: f64,
    #[serde(default = "QpdConfig::default_eta")]
    pub eta: f64,
    pub q: f64,
    pub n0: u64,
    #[serde(default = "QpdConfig::default_k")]
    pub k: f64,
    #[serde(default = "QpdConfig::default_max_cost")]
    pub max_cost: u64,
    #[serde(default)]
    pub reward_alternative: RewardAlternative,
}

impl QpdConfig {
    fn default_eta() -> f64 {
        0.95
    }

    fn default_k() -> f64 {
        1.0
    }

    fn default_max_cost() -> u64 {
        DEFAULT_MAX_COST
    }

    pub fn new(variant: QpdVariant, alpha: f64, eta: f64, q: f64, n0: u64) -> Self {
        Self {
            variant,
            alpha,
            eta,
            q,
            n0,
            k: 1.0,
            max_cost: DEFAULT_MAX_COST,
            reward_alternative: RewardAlternative::DeclaredEffect,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain("alpha must lie in (0,1)"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::domain("eta must be positive"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::domain("q must lie in (0,1)"));
        }
        if self.n0 < 1 {
            return Err(Error::domain("n0 must be at least 1"));
        }
        if !(self.k >= 1.0 - self.alpha && self.k.is_finite()) {
            return Err(Error::domain("k must be at least 1 - alpha"));
        }
        if self.max_cost < 1 {
            return Err(Error::domain("max_cost must be positive"));
        }
        Ok(())
    }

    /// Initial wealth of the decaying pool.
    pub fn initial_wealth(&self) -> f64 {
        match self.variant {
            QpdVariant::As => self.alpha,
            QpdVariant::Asr => self.alpha * self.eta / self.k,
            QpdVariant::AsrOpt => self.alpha * self.eta,
        }
    }

    /// Guaranteed lower bound on the wealth once the database holds `n` samples.
    pub fn wealth_floor(&self, n: u64) -> f64 {
        self.initial_wealth() * self.q.powf(n as f64 - self.n0 as f64)
    }
}

/// `1 − q^c` without cancellation for small `c`.
fn spend_fraction(q: f64, c: u64) -> f64 {
    -(c as f64 * q.ln()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostQuote {
    pub cost: u64,
    pub level: f64,
    pub n_after: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_bound: Option<f64>,
    /// Number of tests executed when the quote was made.
    pub tests_done: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpdLedgerEntry {
    pub j: u64,
    pub request: TestRequest,
    pub quote: CostQuote,
    pub p_value: f64,
    pub rejected: bool,
    pub reward: f64,
    pub pool_a: f64,
    pub pool_b: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub rejected: bool,
    pub level: f64,
    pub cost: u64,
    pub reward: f64,
    pub pool_a: f64,
    pub pool_b: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpdState {
    pub config: QpdConfig,
    pub pool_a: f64,
    pub pool_b: f64,
    pub n: u64,
    pub tests_done: u64,
    pub rejections: u64,
    #[serde(default)]
    pub ledger: Vec<QpdLedgerEntry>,
}

impl QpdState {
    pub fn new(config: QpdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            pool_a: config.initial_wealth(),
            pool_b: 0.0,
            n: config.n0,
            tests_done: 0,
            rejections: 0,
            ledger: Vec::new(),
        })
    }

    pub fn wealth(&self) -> f64 {
        self.pool_a + self.pool_b
    }

    pub fn wealth_floor(&self) -> f64 {
        self.config.wealth_floor(self.n)
    }

    /// Empirical rejection rate of the tests so far; 0 before the first test.
    pub fn rejection_rate(&self) -> f64 {
        if self.tests_done == 0 {
            0.0
        } else {
            self.rejections as f64 / self.tests_done as f64
        }
    }

    /// Amount drawn from the reward pool regardless of cost.
    pub fn free_allocation(&self) -> f64 {
        match self.config.variant {
            QpdVariant::AsrOpt => (self.rejection_rate() * self.config.alpha).min(self.pool_b),
            _ => 0.0,
        }
    }

    /// Level granted for a test charged `c` samples.
    pub fn allocation_for_cost(&self, c: u64) -> f64 {
        self.pool_a * spend_fraction(self.config.q, c) + self.free_allocation()
    }

    /// Cost ceiling for requests whose level-sample function satisfies
    /// `L(n) ≤ b·qⁿ`.
    pub fn stability_bound(&self, b: f64) -> Result<f64> {
        stability_bound(&self.config, b)
    }

    pub fn quote(&self, request: &TestRequest) -> Result<CostQuote> {
        request.validate()?;
        self.quote_with(request, None)
    }

    /// Minimal cost search using `levels` as the level-sample function. With an
    /// envelope constant `b` the scan is capped at `ceil(c*)`.
    pub fn quote_with<L: LevelSampleFn + ?Sized>(&self, levels: &L, envelope: Option<f64>) -> Result<CostQuote> {
        let bound = envelope.map(|b| self.stability_bound(b)).transpose()?;
        let cap = match bound {
            Some(c_star) => (c_star.ceil() as u64).min(self.config.max_cost),
            None => self.config.max_cost,
        };
        for c in 0..=cap {
            let allocation = self.allocation_for_cost(c);
            if allocation <= 0.0 {
                continue;
            }
            let n_after = self.n + c;
            if levels.level_at(n_after)? <= allocation {
                return Ok(CostQuote {
                    cost: c,
                    level: allocation,
                    n_after,
                    stability_bound: bound,
                    tests_done: self.tests_done,
                });
            }
        }
        Err(Error::Infeasible { max_cost: cap })
    }

    /// True when the quoted level and sample count deliver the requested power.
    pub fn power_guarantee_check(request: &TestRequest, quote: &CostQuote) -> bool {
        if !(quote.level > 0.0 && quote.level < 1.0) {
            return quote.level >= 1.0;
        }
        match power(&request.spec_at(quote.n_after), quote.level, request.target()) {
            Ok(p) => p >= request.required_power - POWER_TOLERANCE,
            Err(_) => false,
        }
    }

    fn asr_reward(&self, request: &TestRequest, quote: &CostQuote) -> Result<f64> {
        let cfg = &self.config;
        let cap = 1.0 - (1.0 - cfg.alpha) / cfg.k;
        if cfg.k <= 1.0 {
            return Ok(cap.max(0.0));
        }
        let rho_bar = match cfg.reward_alternative {
            RewardAlternative::Unbounded => 1.0,
            RewardAlternative::DeclaredEffect if quote.level >= 1.0 => 1.0,
            RewardAlternative::DeclaredEffect => best_power(&request.spec_at(quote.n_after), quote.level)?,
        };
        Ok((quote.level / rho_bar + cfg.alpha / cfg.k).min(cap).max(0.0))
    }

    /// Executes a previously quoted test with the observed p-value.
    pub fn execute(&mut self, request: &TestRequest, quote: &CostQuote, p_value: f64) -> Result<Decision> {
        if !(0.0..=1.0).contains(&p_value) {
            return Err(Error::domain(format!("p-value {p_value} outside [0,1]")));
        }
        if quote.tests_done != self.tests_done || quote.n_after != self.n + quote.cost {
            return Err(Error::StaleQuote { quoted_n: quote.n_after - quote.cost, current_n: self.n });
        }
        let cfg = self.config;
        let rejected = p_value <= quote.level;
        let n_after = quote.n_after;
        let mut reward = 0.0;
        match cfg.variant {
            QpdVariant::As => {
                self.pool_a = cfg.wealth_floor(n_after);
            }
            QpdVariant::Asr => {
                reward = self.asr_reward(request, quote)?;
                let mut w = self.pool_a - quote.level;
                if rejected {
                    w += reward;
                }
                self.pool_a = w.max(0.0);
            }
            QpdVariant::AsrOpt => {
                let withdrawn = self.free_allocation();
                self.pool_a = cfg.wealth_floor(n_after);
                reward = cfg.alpha;
                self.pool_b = (self.pool_b - withdrawn).max(0.0) + if rejected { cfg.alpha } else { 0.0 };
            }
        }
        self.n = n_after;
        self.tests_done += 1;
        if rejected {
            self.rejections += 1;
        }
        self.ledger.push(QpdLedgerEntry {
            j: self.tests_done,
            request: *request,
            quote: *quote,
            p_value,
            rejected,
            reward,
            pool_a: self.pool_a,
            pool_b: self.pool_b,
            n: self.n,
        });
        Ok(Decision {
            rejected,
            level: quote.level,
            cost: quote.cost,
            reward,
            pool_a: self.pool_a,
            pool_b: self.pool_b,
            n: self.n,
        })
    }

    /// Quotes and executes in one step.
    pub fn quote_and_execute(&mut self, request: &TestRequest, p_value: f64) -> Result<Decision> {
        let quote = self.quote(request)?;
        self.execute(request, &quote, p_value)
    }

    /// Rebuilds a state from its configuration and recorded ledger, checking
    /// that every recomputed quote and pool matches the record.
    pub fn replay(config: QpdConfig, ledger: &[QpdLedgerEntry]) -> Result<Self> {
        let mut state = Self::new(config)?;
        for (index, entry) in ledger.iter().enumerate() {
            let quote = state.quote(&entry.request).map_err(|e| Error::ReplayDiverged {
                index,
                reason: format!("quote failed: {e}"),
            })?;
            if quote.cost != entry.quote.cost || quote.level != entry.quote.level {
                return Err(Error::ReplayDiverged {
                    index,
                    reason: format!("quote {quote:?} differs from recorded {:?}", entry.quote),
                });
            }
            let decision = state.execute(&entry.request, &entry.quote, entry.p_value).map_err(|e| {
                Error::ReplayDiverged { index, reason: format!("execute failed: {e}") }
            })?;
            if decision.rejected != entry.rejected
                || decision.pool_a != entry.pool_a
                || decision.pool_b != entry.pool_b
                || decision.n != entry.n
            {
                return Err(Error::ReplayDiverged { index, reason: "pools differ from record".into() });
            }
        }
        Ok(state)
    }
}

/// `c* = log_q(F / (b + F))` with `F = W(0)·q^(−n₀)`.
pub fn stability_bound(config: &QpdConfig, b: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain("envelope constant b must be positive"));
    }
    let ln_q = config.q.ln();
    // log_q(F/(b+F)) = −ln(1 + b/F)/ln q, with b/F = (b/W0)·q^{n0}.
    let ln_ratio = (b / config.initial_wealth()).ln() + config.n0 as f64 * ln_q;
    let ln1p = if ln_ratio > 30.0 { ln_ratio + (-ln_ratio).exp().ln_1p() } else { ln_ratio.exp().ln_1p() };
    Ok(-ln1p / ln_q)
}

/// Smallest `b` with `L(n) ≤ b·qⁿ` for every `n` in `range`.
pub fn envelope_constant<L: LevelSampleFn + ?Sized>(
    levels: &L,
    q: f64,
    range: std::ops::RangeInclusive<u64>,
) -> Result<f64> {
    let ln_q = q.ln();
    let mut best = f64::NEG_INFINITY;
    for n in range {
        let l = levels.level_at(n)?;
        if l > 0.0 {
            best = best.max(l.ln() - n as f64 * ln_q);
        }
    }
    Ok(best.exp())
}

/// Envelope constant valid for all `n ≥ 1` for a z-family request, found by
/// scanning until the level-sample function underflows.
pub fn z_envelope(request: &TestRequest, q: f64) -> Result<f64> {
    use crate::distributions::{level_sample, Family};
    if request.family == Family::TOneSample {
        return Err(Error::domain("z_envelope needs a z or Neyman-Pearson request"));
    }
    let sigma = request.sigma.unwrap_or(1.0);
    let rate = 0.5 * (request.effect_size / sigma).powi(2);
    if rate <= -q.ln() {
        return Err(Error::domain("level-sample function decays slower than q^n"));
    }
    let ln_q = q.ln();
    let mut best = f64::NEG_INFINITY;
    let mut n = 1u64;
    loop {
        let l = level_sample(request, n)?;
        if l <= 0.0 {
            break;
        }
        best = best.max(l.ln() - n as f64 * ln_q);
        n += 1;
        if n > 100_000_000 {
            return Err(Error::SolverFailure("envelope scan did not terminate".into()));
        }
    }
    Ok(best.exp())
}
