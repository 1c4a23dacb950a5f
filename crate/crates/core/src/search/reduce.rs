//! Reduction of the valid family set.
//!
//! Three rules, applied in order; a family is dropped by the first that
//! fires:
//!
//! 1. containment: a proper sub-multiset is itself a valid family under a
//!    plan both share;
//! 2. sparsification: replacing one group convolution by a depthwise one
//!    gives a valid family under a shared plan;
//! 3. domination: at every tested width, some strictly shorter valid family
//!    needs strictly fewer parameters.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::infofield::PlanKind;

use super::space::Symbol;
use super::{multiset, valid_witnesses, DesignFamily, SearchConfig};

/// Cheapest parameter count per kernel multiset at one grid point.
type CostTable = BTreeMap<Vec<Symbol>, u64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominationPoint {
    pub channels: u32,
    pub out_channels: u32,
    /// Cheapest valid member of the dropped family, `None` if it has none.
    pub params: Option<u64>,
    pub by: Vec<Symbol>,
    pub by_params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DropReason {
    Containment { by: Vec<Symbol>, plan: PlanKind },
    Sparsification { by: Vec<Symbol>, plan: PlanKind },
    Domination { evidence: Vec<DominationPoint> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedFamily {
    pub family: DesignFamily,
    pub reason: DropReason,
}

fn sub_multisets(m: &[Symbol]) -> BTreeSet<Vec<Symbol>> {
    let n = m.len();
    (1..(1u32 << n) - 1)
        .map(|mask| {
            (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| m[i])
                .collect()
        })
        .collect()
}

fn shared_plan(a: &[PlanKind], b: &[PlanKind]) -> Option<PlanKind> {
    a.iter().find(|p| b.contains(p)).copied()
}

fn structural_reason(
    family: &DesignFamily,
    plans: &BTreeMap<Vec<Symbol>, Vec<PlanKind>>,
) -> Option<DropReason> {
    let m = family.multiset();
    let mine = family.plans();
    for sub in sub_multisets(&m) {
        if let Some(theirs) = plans.get(&sub) {
            if let Some(plan) = shared_plan(&mine, theirs) {
                return Some(DropReason::Containment { by: sub, plan });
            }
        }
    }
    if let Some(pos) = m.iter().position(|s| *s == Symbol::Gc) {
        let mut sparse = m.clone();
        sparse[pos] = Symbol::Dw;
        let sparse = multiset(&sparse);
        if let Some(theirs) = plans.get(&sparse) {
            if let Some(plan) = shared_plan(&mine, theirs) {
                return Some(DropReason::Sparsification { by: sparse, plan });
            }
        }
    }
    None
}

fn min_params_at(
    sequences: &[Vec<Symbol>],
    c: u32,
    f: u32,
    config: &SearchConfig,
) -> CostTable {
    let (_, _, witnesses) = valid_witnesses(sequences, c, f, config);
    let mut out: CostTable = BTreeMap::new();
    for w in witnesses {
        let e = out.entry(multiset(&w.sequence)).or_insert(u64::MAX);
        *e = (*e).min(w.params);
    }
    out
}

fn grid_points(config: &SearchConfig) -> Vec<(u32, u32)> {
    let (c, f) = (config.reference_channels, config.reference_out_channels);
    config
        .domination_grid
        .iter()
        .filter_map(|&gc| {
            let gf = u64::from(gc) * u64::from(f);
            (gf % u64::from(c) == 0).then(|| (gc, (gf / u64::from(c)) as u32))
        })
        .collect()
}

fn domination_evidence(
    m: &[Symbol],
    tables: &[((u32, u32), CostTable)],
) -> Option<Vec<DominationPoint>> {
    if tables.is_empty() {
        return None;
    }
    let mut evidence = Vec::with_capacity(tables.len());
    for ((gc, gf), table) in tables {
        let mine = table.get(m).copied();
        let best = table
            .iter()
            .filter(|(other, p)| other.len() < m.len() && mine.is_none_or(|x| **p < x))
            .min_by_key(|(other, p)| (**p, (*other).clone()))?;
        evidence.push(DominationPoint {
            channels: *gc,
            out_channels: *gf,
            params: mine,
            by: best.0.clone(),
            by_params: *best.1,
        });
    }
    Some(evidence)
}

pub(crate) fn reduce(
    families: Vec<DesignFamily>,
    sequences: &[Vec<Symbol>],
    config: &SearchConfig,
) -> (Vec<DesignFamily>, Vec<DroppedFamily>) {
    let plans: BTreeMap<Vec<Symbol>, Vec<PlanKind>> =
        families.iter().map(|f| (f.multiset(), f.plans())).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut pending = Vec::new();
    for family in families {
        match structural_reason(&family, &plans) {
            Some(reason) => dropped.push(DroppedFamily { family, reason }),
            None => pending.push(family),
        }
    }
    let shortest = pending.iter().map(DesignFamily::len).min().unwrap_or(0);
    let needs_grid = pending.iter().any(|f| f.len() > shortest);
    let tables: Vec<_> = if needs_grid {
        grid_points(config)
            .into_iter()
            .map(|(gc, gf)| ((gc, gf), min_params_at(sequences, gc, gf, config)))
            .collect()
    } else {
        Vec::new()
    };
    for family in pending {
        match domination_evidence(&family.multiset(), &tables) {
            Some(evidence) => dropped.push(DroppedFamily {
                family,
                reason: DropReason::Domination { evidence },
            }),
            None => kept.push(family),
        }
    }
    dropped.sort_by(|a, b| {
        (a.family.len(), &a.family.canonical_sequence)
            .cmp(&(b.family.len(), &b.family.canonical_sequence))
    });
    (kept, dropped)
}
