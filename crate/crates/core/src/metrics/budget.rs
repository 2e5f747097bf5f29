use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BoundDirection, MetricBound, MetricContext, MetricKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which budget formulas to use.
///
/// `Published` is the closed-form table: MSE, Var, R² and EVS grow with
/// `|bias^(1)|`. That coefficient underestimates the cross term
/// `2/n Σ ε_i δ_i` whenever the errors `δ_i` have mixed signs (for
/// `δ = [1, -1]` the bias is zero while the cross term reaches `2ε`).
/// `Sound` replaces it with `mean|δ|` for MSE/R² and `mean|δ - δ̄|` for
/// Var/EVS, which bounds the cross term for any `n`, and bounds MAPE for
/// absolute rather than relative perturbations. `Conservative` takes the
/// larger budget of the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetRule {
    Published,
    Sound,
    #[default]
    Conservative,
}

impl fmt::Display for BudgetRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetRule::Published => "published",
            BudgetRule::Sound => "sound",
            BudgetRule::Conservative => "conservative",
        })
    }
}

impl FromStr for BudgetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "published" => Ok(BudgetRule::Published),
            "sound" => Ok(BudgetRule::Sound),
            "conservative" => Ok(BudgetRule::Conservative),
            _ => Err(Error::schema("rule", format!("unknown budget rule `{s}`"))),
        }
    }
}

/// `g(ε) = (quad·ε² + lin·ε) / denom`
#[derive(Debug, Clone, Copy)]
struct Form<T> {
    quad: T,
    lin: T,
    denom: T,
}

impl<T: Scalar> Form<T> {
    fn eval(&self, eps: T) -> T {
        (self.quad * eps * eps + self.lin * eps) / self.denom
    }

    /// Largest `ε >= 0` with `g(ε) <= slack`, for `slack >= 0`.
    fn invert(&self, slack: T) -> T {
        let s = slack * self.denom;
        if s <= T::zero() {
            return T::zero();
        }
        if self.quad.is_zero() {
            return s / self.lin;
        }
        // Positive root of ε² + 2βε = s, written to avoid cancellation.
        let beta = self.lin / T::lit(2.0);
        s / (beta + (beta * beta + s).sqrt())
    }
}

fn form<T: Scalar>(sound: bool, metric: MetricKind, ctx: &MetricContext<T>) -> Result<Form<T>> {
    let need = MetricContext::<T>::need;
    let two = T::lit(2.0);
    let (quad, lin, denom) = match (metric, sound) {
        (MetricKind::Linf | MetricKind::Mae | MetricKind::Bias, _) => (T::zero(), T::one(), T::one()),
        (MetricKind::Mse | MetricKind::Var, false) => (T::one(), two * need(ctx.bias1, "bias1")?, T::one()),
        (MetricKind::R2 | MetricKind::Evs, false) => (
            T::one(),
            two * need(ctx.bias1, "bias1")?,
            need(ctx.var_f, "var_f")?,
        ),
        (MetricKind::Mape, false) => (T::zero(), T::one() + need(ctx.mape1, "mape1")?, T::one()),
        (MetricKind::Mse, true) => (T::one(), two * need(ctx.mae1, "mae1")?, T::one()),
        (MetricKind::Var, true) => (T::one(), two * need(ctx.mad1, "mad1")?, T::one()),
        (MetricKind::R2, true) => (T::one(), two * need(ctx.mae1, "mae1")?, need(ctx.var_f, "var_f")?),
        (MetricKind::Evs, true) => (T::one(), two * need(ctx.mad1, "mad1")?, need(ctx.var_f, "var_f")?),
        (MetricKind::Mape, true) => (T::zero(), need(ctx.inv_gt, "inv_gt")?, T::one()),
        (MetricKind::TopN | MetricKind::Map, _) => {
            return Err(Error::Invalid(format!(
                "{metric} has no closed-form budget; its margin comes from a lookup table"
            )))
        }
    };
    if !(denom > T::zero()) {
        return Err(Error::DegenerateVariance);
    }
    Ok(Form { quad, lin, denom })
}

/// The published budget `g_M(ε)`.
pub fn budget<T: Scalar>(metric: MetricKind, eps: T, ctx: &MetricContext<T>) -> Result<T> {
    budget_with(BudgetRule::Published, metric, eps, ctx)
}

pub fn budget_with<T: Scalar>(rule: BudgetRule, metric: MetricKind, eps: T, ctx: &MetricContext<T>) -> Result<T> {
    match rule {
        BudgetRule::Published => Ok(form(false, metric, ctx)?.eval(eps)),
        BudgetRule::Sound => Ok(form(true, metric, ctx)?.eval(eps)),
        BudgetRule::Conservative => Ok(form(false, metric, ctx)?
            .eval(eps)
            .max(form(true, metric, ctx)?.eval(eps))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginResult<T = f64> {
    pub metric: MetricKind,
    pub direction: BoundDirection,
    pub m1: T,
    pub r: T,
    pub rule: BudgetRule,
    /// The margin `ε_M`; zero when infeasible.
    pub eps: T,
    /// `g_M(ε_M)` under `rule`.
    pub g: T,
    pub feasible: bool,
    /// Margin under the published formula, when the context allows it.
    pub published_eps: Option<T>,
    /// Margin under the sound formula, when the context allows it.
    pub sound_eps: Option<T>,
    /// The published margin exceeds the sound one.
    pub discrepancy: bool,
}

/// Slack between the measured value and the bound; negative when the
/// bound is violated. Bias is bounded in magnitude.
pub(crate) fn slack<T: Scalar>(bound: &MetricBound<T>, m1: T) -> T {
    let m = if bound.metric == MetricKind::Bias { m1.abs() } else { m1 };
    match bound.direction {
        BoundDirection::Le => bound.r - m,
        BoundDirection::Ge => m - bound.r,
    }
}

/// Margin under the published formulas.
pub fn derive_margin<T: Scalar>(bound: &MetricBound<T>, m1: T, ctx: &MetricContext<T>) -> Result<MarginResult<T>> {
    derive_margin_with(BudgetRule::Published, bound, m1, ctx)
}

/// The largest `ε >= 0` such that `M1 + g(ε) <= R` (or `M1 - g(ε) >= R`).
pub fn derive_margin_with<T: Scalar>(
    rule: BudgetRule,
    bound: &MetricBound<T>,
    m1: T,
    ctx: &MetricContext<T>,
) -> Result<MarginResult<T>> {
    let published = form(false, bound.metric, ctx);
    let sound = form(true, bound.metric, ctx);
    let (published, sound) = match rule {
        BudgetRule::Published => (Some(published?), sound.ok()),
        BudgetRule::Sound => (published.ok(), Some(sound?)),
        BudgetRule::Conservative => (Some(published?), Some(sound?)),
    };
    let s = slack(bound, m1);
    let feasible = s >= T::zero();
    let s = s.max(T::zero());
    let published_eps = published.map(|f| f.invert(s));
    let sound_eps = sound.map(|f| f.invert(s));
    let eps = match rule {
        BudgetRule::Published => published_eps,
        BudgetRule::Sound => sound_eps,
        BudgetRule::Conservative => published_eps.zip(sound_eps).map(|(a, b)| a.min(b)),
    }
    .unwrap_or_else(T::zero);
    let g = budget_with(rule, bound.metric, eps, ctx)?;
    let discrepancy = matches!((published_eps, sound_eps), (Some(p), Some(q)) if p > q);
    Ok(MarginResult {
        metric: bound.metric,
        direction: bound.direction,
        m1,
        r: bound.r,
        rule,
        eps,
        g,
        feasible,
        published_eps,
        sound_eps,
        discrepancy,
    })
}
