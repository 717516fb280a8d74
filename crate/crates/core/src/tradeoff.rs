//! The reward constraint, the level/reward trade-off curve, and the ERO solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{best_power, power, Alternative, TestSpec};
use crate::error::{Error, Result};

/// Tolerance used when auditing an allocation against the reward constraint.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-12;

/// A cost/reward/level triple produced by an investing rule. Cost and reward
/// are in potential units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub cost: f64,
    pub reward: f64,
    pub level: f64,
}

impl Allocation {
    /// Checks `0 ≤ reward ≤ min(cost/ρ̄ + α, cost/level + α − 1)` up to `tol`.
    pub fn check(&self, rho_bar: f64, alpha: f64, tol: f64) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidAllocation(format!("level {} outside (0,1)", self.level)));
        }
        if !(self.cost >= 0.0) || !self.cost.is_finite() {
            return Err(Error::InvalidAllocation(format!("cost {} is negative", self.cost)));
        }
        if !(self.reward >= 0.0) || !self.reward.is_finite() {
            return Err(Error::InvalidAllocation(format!("reward {} is negative", self.reward)));
        }
        let power_branch = self.cost / rho_bar + alpha;
        let level_branch = self.cost / self.level + alpha - 1.0;
        let bound = power_branch.min(level_branch);
        if self.reward > bound + tol {
            return Err(Error::InvalidAllocation(format!(
                "reward {} exceeds bound {bound} (level {}, cost {})",
                self.reward, self.level, self.cost
            )));
        }
        Ok(())
    }
}

/// `min(cost/ρ̄ + α, cost/level + α − 1)`, clamped at zero.
pub fn max_reward(cost: f64, level: f64, rho_bar: f64, alpha: f64) -> f64 {
    let power_branch = cost / rho_bar + alpha;
    let level_branch = cost / level + alpha - 1.0;
    power_branch.min(level_branch).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    PowerBranch,
    LevelBranch,
    Knee,
}

impl Binding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Binding::PowerBranch => "power_branch",
            Binding::LevelBranch => "level_branch",
            Binding::Knee => "knee",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub level: f64,
    pub reward: f64,
    pub binding: Binding,
}

/// Evaluates the maximal reward at each grid level and inserts the knee.
///
/// The returned points are sorted by level. The knee is included when it lies
/// within the span of the grid.
pub fn tradeoff_curve(spec: &TestSpec, cost: f64, alpha: f64, grid: &[f64]) -> Result<Vec<TradeoffPoint>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let mut points = grid
        .iter()
        .map(|&level| {
            let rho_bar = best_power(spec, level)?;
            let power_branch = cost / rho_bar + alpha;
            let level_branch = cost / level + alpha - 1.0;
            let binding = if power_branch < level_branch { Binding::PowerBranch } else { Binding::LevelBranch };
            Ok(TradeoffPoint { level, reward: power_branch.min(level_branch).max(0.0), binding })
        })
        .collect::<Result<Vec<_>>>()?;
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if cost > 0.0 {
        let knee = ero_level(spec, cost, alpha)?;
        if knee.level >= lo && knee.level <= hi {
            points.push(TradeoffPoint { level: knee.level, reward: knee.reward, binding: Binding::Knee });
        }
    }
    points.sort_by(|a, b| a.level.total_cmp(&b.level));
    Ok(points)
}

fn ero_gap(spec: &TestSpec, cost: f64, level: f64) -> Result<f64> {
    Ok(cost / level - cost / best_power(spec, level)? - 1.0)
}

/// Solves `cost/ρ̄(level) = cost/level − 1` for the ERO level and returns the
/// resulting allocation.
pub fn ero_level(spec: &TestSpec, cost: f64, alpha: f64) -> Result<Allocation> {
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(Error::domain("ERO cost must be positive"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha must lie in (0,1)"));
    }
    spec.validate()?;
    if spec.alternative == Alternative::UnboundedOneSided {
        let level = cost / (1.0 + cost);
        return Ok(Allocation { cost, reward: cost + alpha, level });
    }

    let hi = (cost / (1.0 - alpha)).min(1.0 - 1e-8);
    let mut lo = (1e-8f64).min(hi * 1e-6);
    // Extend the lower end until g(lo) > 0.
    while ero_gap(spec, cost, lo)? <= 0.0 {
        lo *= 1e-6;
        if lo < 1e-250 {
            return Err(Error::SolverFailure(format!("no sign change for ERO equation at cost {cost}")));
        }
    }

    // Scan downward from `hi`, where g < 0, for the first point with g > 0.
    const SCAN: usize = 64;
    let ratio = (hi / lo).ln() / (SCAN - 1) as f64;
    let mut b = hi;
    let mut gb = ero_gap(spec, cost, b)?;
    let mut bracket = None;
    for i in (0..SCAN - 1).rev() {
        let a = if i == 0 { lo } else { lo * (ratio * i as f64).exp() };
        let ga = ero_gap(spec, cost, a)?;
        if ga > 0.0 && gb <= 0.0 {
            bracket = Some((a, ga, b, gb));
            break;
        }
        b = a;
        gb = ga;
    }
    let Some((a, ga, b, gb)) = bracket else {
        return Err(Error::SolverFailure(format!("no sign change for ERO equation at cost {cost}")));
    };
    let (a, ga, b, gb) = brent(|x| ero_gap(spec, cost, x), a, ga, b, gb)?;
    let level = if ga.abs() <= gb.abs() { a } else { b };
    let rho_bar = best_power(spec, level)?;
    Ok(Allocation { cost, reward: max_reward(cost, level, rho_bar, alpha), level })
}

/// Brent's method on a sign-changing bracket, run to machine precision.
/// Returns the final bracket `(a, g(a), b, g(b))`.
fn brent<F>(mut f: F, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb == 0.0 {
            return Ok((b, fb, b, fb));
        }
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs();
        let m = 0.5 * (c - b);
        if m.abs() <= tol {
            return Ok((c, fc, b, fb));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok((c, fc, b, fb))
}

/// Expected reward `γ(level) · d(level)` under true parameter `theta`.
pub fn expected_reward(spec: &TestSpec, cost: f64, alpha: f64, level: f64, theta: f64) -> Result<f64> {
    let rho_bar = best_power(spec, level)?;
    Ok(power(spec, level, theta)? * max_reward(cost, level, rho_bar, alpha))
}

/// Brute-force maximizer of the expected reward over `grid_size` uniform
/// levels in `(0, min(cost/(1−α), 1))`. Slow; meant for cross-checking.
pub fn ero_oracle(spec: &TestSpec, cost: f64, alpha: f64, theta: f64, grid_size: usize) -> Result<f64> {
    let hi = (cost / (1.0 - alpha)).min(1.0 - 1e-8);
    let step = hi / grid_size as f64;
    let best = (1..=grid_size)
        .into_par_iter()
        .map(|i| {
            let level = step * i as f64;
            expected_reward(spec, cost, alpha, level, theta).map(|v| (v, level))
        })
        .try_reduce(
            || (f64::NEG_INFINITY, 0.0),
            |x, y| Ok(if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x }),
        )?;
    Ok(best.1)
}

/// Grid spacing used by [`ero_oracle`] for the same arguments.
pub fn ero_oracle_step(cost: f64, alpha: f64, grid_size: usize) -> f64 {
    (cost / (1.0 - alpha)).min(1.0 - 1e-8) / grid_size as f64
}
