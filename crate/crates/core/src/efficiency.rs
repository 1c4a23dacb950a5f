//! Parameter efficiency of the four block families against a standard
//! `3 x 3` convolution with the same channels.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, LayerSpec};
use crate::oracles::{divisor_grid_min, GroupConstraint, GroupObjective};

/// Spatial kernel area used by all closed forms.
const AREA: u64 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "DW+PW")]
    DwPw,
    #[serde(rename = "GC+PWG")]
    GcPwg,
    #[serde(rename = "PW+DW+PW")]
    PwDwPw,
    #[serde(rename = "PWG+DW+PWG")]
    PwgDwPwg,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::DwPw, Family::GcPwg, Family::PwDwPw, Family::PwgDwPwg];

    pub fn name(self) -> &'static str {
        match self {
            Family::DwPw => "DW+PW",
            Family::GcPwg => "GC+PWG",
            Family::PwDwPw => "PW+DW+PW",
            Family::PwgDwPwg => "PWG+DW+PWG",
        }
    }

    pub fn has_groups(self) -> bool {
        matches!(self, Family::GcPwg | Family::PwgDwPwg)
    }

    pub fn is_bottleneck(self) -> bool {
        matches!(self, Family::PwDwPw | Family::PwgDwPwg)
    }

    fn objective(self) -> Result<GroupObjective> {
        match self {
            Family::GcPwg => Ok(GroupObjective::GcPwg),
            Family::PwgDwPwg => Ok(GroupObjective::PwgDwPwg),
            _ => Err(Error::InvalidArgument(format!(
                "{} has no group numbers",
                self.name()
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric() || *c == '+')
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "dw+pw" => Ok(Family::DwPw),
            "gc+pwg" => Ok(Family::GcPwg),
            "pw+dw+pw" => Ok(Family::PwDwPw),
            "pwg+dw+pwg" => Ok(Family::PwgDwPwg),
            _ => Err(Error::InvalidArgument(format!("unknown family {s:?}"))),
        }
    }
}

fn bottleneck_width(f: u32) -> Result<u32> {
    if !f.is_multiple_of(4) {
        return Err(Error::Infeasible(format!(
            "bottleneck width F/4 needs 4 | F, got F = {f}"
        )));
    }
    Ok(f / 4)
}

fn need_groups(family: Family, groups: Option<(u32, u32)>) -> Result<(u32, u32)> {
    groups.ok_or_else(|| {
        Error::InvalidArgument(format!("{} needs group numbers (M, N)", family.name()))
    })
}

/// The concrete block, `3 x 3` spatial kernels, `C -> F`.
pub fn family_layers(
    family: Family,
    c: u32,
    f: u32,
    groups: Option<(u32, u32)>,
) -> Result<Vec<LayerSpec>> {
    let dw = KernelKind::depthwise(3)?;
    match family {
        Family::DwPw => Ok(vec![
            LayerSpec::new(dw, c, c)?,
            LayerSpec::new(KernelKind::pointwise(), c, f)?,
        ]),
        Family::GcPwg => {
            let (m, n) = need_groups(family, groups)?;
            Ok(vec![
                LayerSpec::new(KernelKind::group_conv(3, m)?, c, c)?,
                LayerSpec::new(KernelKind::pointwise_group(n), c, f)?,
            ])
        }
        Family::PwDwPw => {
            let k = bottleneck_width(f)?;
            Ok(vec![
                LayerSpec::new(KernelKind::pointwise(), c, k)?,
                LayerSpec::new(dw, k, k)?,
                LayerSpec::new(KernelKind::pointwise(), k, f)?,
            ])
        }
        Family::PwgDwPwg => {
            let k = bottleneck_width(f)?;
            let (m, n) = need_groups(family, groups)?;
            Ok(vec![
                LayerSpec::new(KernelKind::pointwise_group(m), c, k)?,
                LayerSpec::new(dw, k, k)?,
                LayerSpec::new(KernelKind::pointwise_group(n), k, f)?,
            ])
        }
    }
}

/// Design parameters over standard-convolution parameters, exact.
///
/// Group numbers are validated for divisibility and range only; whether they
/// also give a full field is reported by [`analyze`].
pub fn ratio(family: Family, c: u32, f: u32, groups: Option<(u32, u32)>) -> Result<Ratio<u64>> {
    family_layers(family, c, f, groups)?;
    let (cc, ff) = (u64::from(c), u64::from(f));
    let r = |n: u64, d: u64| Ratio::new(n, d);
    Ok(match family {
        Family::DwPw => r(1, ff) + r(1, AREA),
        Family::GcPwg => {
            let (m, n) = need_groups(family, groups)?;
            r(cc, u64::from(m) * ff) + r(1, AREA * u64::from(n))
        }
        Family::PwDwPw => r(cc + ff + AREA, 36 * cc),
        Family::PwgDwPwg => {
            let (m, n) = need_groups(family, groups)?;
            let k = u64::from(bottleneck_width(f)?);
            general_bottleneck_ratio(cc, ff, k, u64::from(m), u64::from(n))
        }
    })
}

/// `K (C/M + 9 + F/N) / 9CF`.
fn general_bottleneck_ratio(c: u64, f: u64, k: u64, m: u64, n: u64) -> Ratio<u64> {
    Ratio::new(k * (c / m) + AREA * k + k * (f / n), AREA * c * f)
}

/// `(C/M + 4M + 9) / 36C`, the bottleneck group form that assumes
/// `M * N = F/4`.
pub fn closed_form_ratio(c: u32, f: u32, m: u32, n: u32) -> Result<Ratio<u64>> {
    let k = bottleneck_width(f)?;
    if u64::from(m) * u64::from(n) != u64::from(k) {
        return Err(Error::InvalidArgument(format!(
            "closed form needs M * N = F/4 = {k}, got {m} * {n}"
        )));
    }
    family_layers(Family::PwgDwPwg, c, f, Some((m, n)))?;
    let (c, m) = (u64::from(c), u64::from(m));
    Ok(Ratio::new(c / m + 4 * m + AREA, 36 * c))
}

/// `M * N = C`.
pub fn theorem1_condition(c: u32, m: u32, n: u32) -> bool {
    u64::from(m) * u64::from(n) == u64::from(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOptimum {
    pub m: f64,
    pub n: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalGroups {
    pub family: Family,
    pub in_channels: u32,
    pub out_channels: u32,
    pub continuous: ContinuousOptimum,
    pub discrete: Vec<(u32, u32)>,
    pub discrete_ratio: Ratio<u64>,
    /// `discrete_ratio - continuous.ratio`, never negative.
    pub gap: f64,
}

pub fn to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Analytic optimum of the ratio over real group numbers.
///
/// Group convolution then pointwise group: `N = sqrt(F)/3`, `M = C/N`.
/// Bottleneck: `M = sqrt(C)/2`, `N = (F/4)/M`.
pub fn continuous_optimum(family: Family, c: u32, f: u32) -> Result<ContinuousOptimum> {
    let (cf, ff) = (f64::from(c), f64::from(f));
    match family {
        Family::GcPwg => {
            let n = ff.sqrt() / 3.0;
            let m = cf / n;
            Ok(ContinuousOptimum {
                m,
                n,
                ratio: cf / (m * ff) + 1.0 / (9.0 * n),
            })
        }
        Family::PwgDwPwg => {
            let k = f64::from(bottleneck_width(f)?);
            let m = cf.sqrt() / 2.0;
            let n = k / m;
            Ok(ContinuousOptimum {
                m,
                n,
                ratio: k * (cf / m + ff / n + 9.0) / (9.0 * cf * ff),
            })
        }
        _ => family.objective().map(|_| unreachable!()),
    }
}

/// Continuous reference and the exact discrete argmin over feasible
/// divisors.
pub fn optimal_group_numbers(family: Family, c: u32, f: u32) -> Result<OptimalGroups> {
    let objective = family.objective()?;
    let continuous = continuous_optimum(family, c, f)?;
    let grid = divisor_grid_min(objective, c, f, GroupConstraint::AtMost)?;
    let discrete_ratio = Ratio::new(grid.min_params, AREA * u64::from(c) * u64::from(f));
    Ok(OptimalGroups {
        family,
        in_channels: c,
        out_channels: f,
        continuous,
        discrete: grid.minimizers,
        discrete_ratio,
        gap: to_f64(discrete_ratio) - continuous.ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub family: Family,
    pub in_channels: u32,
    pub out_channels: u32,
    pub groups: Option<(u32, u32)>,
    pub ratio: Ratio<u64>,
    pub params: u64,
    pub standard_params: u64,
    /// `M * N` does not exceed the intermediate width, so the block still
    /// reaches every input channel.
    pub constraint_ok: bool,
    pub optimal: Option<OptimalGroups>,
}

pub fn analyze(family: Family, c: u32, f: u32, groups: Option<(u32, u32)>) -> Result<EfficiencyReport> {
    let layers = family_layers(family, c, f, groups)?;
    let r = ratio(family, c, f, groups)?;
    let constraint_ok = match (family, groups) {
        (Family::GcPwg, Some((m, n))) => u64::from(m) * u64::from(n) <= u64::from(c),
        (Family::PwgDwPwg, Some((m, n))) => {
            u64::from(m) * u64::from(n) <= u64::from(bottleneck_width(f)?)
        }
        _ => true,
    };
    let optimal = if family.has_groups() {
        optimal_group_numbers(family, c, f).ok()
    } else {
        None
    };
    Ok(EfficiencyReport {
        family,
        in_channels: c,
        out_channels: f,
        groups,
        ratio: r,
        params: layers.iter().map(LayerSpec::param_count).sum(),
        standard_params: AREA * u64::from(c) * u64::from(f),
        constraint_ok,
        optimal,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthReport {
    pub family: Family,
    pub budget: u64,
    pub alpha: Ratio<u32>,
    /// Closed-form real width.
    pub greatest_width: f64,
    /// Largest integer input width whose best legal block fits the budget.
    pub width: u32,
    pub out_width: u32,
    pub groups: Option<(u32, u32)>,
    pub params: u64,
    pub optimality_condition: String,
}

/// Output width, group numbers and parameter count of one block.
pub type BlockChoice = (u32, Option<(u32, u32)>, u64);

/// Cheapest legal block at input width `c`, or `None` when the width admits
/// none.
pub fn best_block_at(family: Family, c: u32, alpha: Ratio<u32>) -> Option<BlockChoice> {
    let scaled = u64::from(c) * u64::from(*alpha.numer());
    if scaled % u64::from(*alpha.denom()) != 0 {
        return None;
    }
    let f = u32::try_from(scaled / u64::from(*alpha.denom())).ok()?;
    if f == 0 {
        return None;
    }
    match family {
        Family::DwPw | Family::PwDwPw => {
            let layers = family_layers(family, c, f, None).ok()?;
            Some((f, None, layers.iter().map(LayerSpec::param_count).sum()))
        }
        Family::GcPwg | Family::PwgDwPwg => {
            let grid = divisor_grid_min(family.objective().ok()?, c, f, GroupConstraint::AtMost).ok()?;
            Some((f, grid.minimizers.first().copied(), grid.min_params))
        }
    }
}

/// Real width at which the continuous optimum spends exactly `budget`.
pub fn closed_form_width(family: Family, budget: u64, alpha: f64) -> f64 {
    let p = budget as f64;
    let a = alpha;
    match family {
        Family::DwPw => (-9.0 + (81.0 + 4.0 * a * p).sqrt()) / (2.0 * a),
        Family::GcPwg => (p / (6.0 * a.sqrt())).powf(2.0 / 3.0),
        Family::PwDwPw => {
            (-9.0 * a + (81.0 * a * a + 16.0 * a * a * p + 16.0 * a * p).sqrt())
                / (2.0 * (a * a + a))
        }
        Family::PwgDwPwg => {
            // P(C) = (a/4) C (9 + 4 sqrt C) is increasing; bisect.
            let cost = |c: f64| a / 4.0 * c * (9.0 + 4.0 * c.sqrt());
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while cost(hi) < p {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if cost(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

fn condition(family: Family) -> &'static str {
    match family {
        Family::DwPw => "9C + aC^2 = P",
        Family::GcPwg => "9N = aM with M*N = C",
        Family::PwDwPw => "K = F/4",
        Family::PwgDwPwg => "aM = N with M*N = F/4",
    }
}

/// Greatest width within a parameter budget, for `F = alpha * C`.
///
/// The discrete count is never below the continuous optimum, so no legal
/// width exceeds the real solution; the scan starts there and walks down.
pub fn greatest_width(family: Family, budget: u64, alpha: Ratio<u32>) -> Result<WidthReport> {
    if *alpha.numer() == 0 {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    let a = f64::from(*alpha.numer()) / f64::from(*alpha.denom());
    let g = closed_form_width(family, budget, a);
    let top = (g + 1e-9).floor().min(f64::from(u32::MAX)) as u32;
    for c in (1..=top).rev() {
        if let Some((f, groups, params)) = best_block_at(family, c, alpha) {
            if params <= budget {
                return Ok(WidthReport {
                    family,
                    budget,
                    alpha,
                    greatest_width: g,
                    width: c,
                    out_width: f,
                    groups,
                    params,
                    optimality_condition: condition(family).to_string(),
                });
            }
        }
    }
    let minimum = (1..=4096)
        .find_map(|c| best_block_at(family, c, alpha).map(|b| b.2))
        .unwrap_or(u64::MAX);
    Err(Error::UnderBudget { budget, minimum })
}
