//! Brute-force verifiers for the information-field calculus and the group
//! number optimum.
//!
//! The graph oracle walks the explicit index sets of every layer backwards
//! from one output activation and counts the input nodes it reaches. It is
//! limited to small shapes on purpose.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infofield::{check_chain, field_of, PlanKind};
use crate::kernels::{KernelKind, LayerSpec};
use crate::search::{all_sequences, build_layers, channel_plan, group_assignments, sequence_name};

pub const MAX_ORACLE_CHANNELS: u32 = 16;
pub const MAX_ORACLE_EXTENT: u32 = 9;
pub const MAX_FALLBACK_CHANNELS: u32 = 8;
pub const MAX_GRID_CHANNELS: u32 = 4096;

/// Channel order presented to each grouped layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationStrategy {
    /// Channels stay in layer order.
    Identity,
    /// Before a grouped layer, the channels produced by the most recent
    /// grouped layer (with `g` groups) are transposed so that consecutive
    /// channels come from different groups.
    Interleave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphField {
    pub spatial_x: u32,
    pub spatial_y: u32,
    pub channels: u32,
}

impl GraphField {
    pub fn triple(&self) -> (u32, u32, u64) {
        (self.spatial_x, self.spatial_y, u64::from(self.channels))
    }
}

/// `new[j] = old[(j % g) * (n / g) + j / g]`.
pub fn interleave(n: u32, g: u32) -> Vec<u32> {
    (0..n).map(|j| (j % g) * (n / g) + j / g).collect()
}

fn check_caps(design: &[LayerSpec], input_channels: u32) -> Result<(u32, u32)> {
    check_chain(design, input_channels)?;
    if design.is_empty() {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    let widest = design
        .iter()
        .map(LayerSpec::out_channels)
        .chain([input_channels])
        .max()
        .unwrap_or(0);
    if widest > MAX_ORACLE_CHANNELS {
        return Err(Error::OracleLimit(format!(
            "{widest} channels exceeds the graph oracle cap of {MAX_ORACLE_CHANNELS}"
        )));
    }
    let ex: u32 = 1 + design.iter().map(|l| l.kind().size().x - 1).sum::<u32>();
    let ey: u32 = 1 + design.iter().map(|l| l.kind().size().y - 1).sum::<u32>();
    if ex.max(ey) > MAX_ORACLE_EXTENT {
        return Err(Error::OracleLimit(format!(
            "field extent {}x{} exceeds the graph oracle cap of {MAX_ORACLE_EXTENT}",
            ex, ey
        )));
    }
    Ok((ex, ey))
}

/// Input channels of `layer` read by output channel `f`.
pub fn read_channels(layer: &LayerSpec, f: u32) -> std::ops::Range<u32> {
    let (c, out) = (layer.in_channels(), layer.out_channels());
    match layer.kind() {
        KernelKind::Standard { .. } | KernelKind::Pointwise => 0..c,
        KernelKind::Depthwise { .. } => f..f + 1,
        KernelKind::GroupConv { groups, .. } | KernelKind::PointwiseGroup { groups } => {
            let group = f / (out / groups);
            let per = c / groups;
            group * per..(group + 1) * per
        }
    }
}

/// Permutation in front of each layer: `perm[i][j]` is the producer channel
/// seen as input channel `j` of layer `i`.
pub fn channel_orders(design: &[LayerSpec], strategy: PermutationStrategy) -> Vec<Vec<u32>> {
    let mut pending: Option<u32> = None;
    design
        .iter()
        .map(|layer| {
            let n = layer.in_channels();
            let identity: Vec<u32> = (0..n).collect();
            let kind = layer.kind();
            match kind {
                KernelKind::Standard { .. } | KernelKind::Pointwise => {
                    pending = None;
                    identity
                }
                KernelKind::Depthwise { .. } => identity,
                KernelKind::GroupConv { groups, .. } | KernelKind::PointwiseGroup { groups } => {
                    let perm = match (strategy, pending) {
                        (PermutationStrategy::Interleave, Some(g)) if n % g == 0 => {
                            interleave(n, g)
                        }
                        _ => identity,
                    };
                    pending = Some(groups);
                    perm
                }
            }
        })
        .collect()
}

/// Reachable input nodes of one output activation.
///
/// The activation sits at the centre of a map just large enough to hold the
/// whole field, so no border clipping happens. Every output channel is
/// tried; the reported field is the widest.
pub fn graph_information_field(
    design: &[LayerSpec],
    input_channels: u32,
    strategy: PermutationStrategy,
) -> Result<GraphField> {
    let (ex, ey) = check_caps(design, input_channels)?;
    let (sx, sy) = (ex as usize * 2 + 1, ey as usize * 2 + 1);
    let perms = channel_orders(design, strategy);
    let last = design.last().expect("design is non-empty");
    let mut best: Option<GraphField> = None;
    for f0 in 0..last.out_channels() {
        // reach[c][y][x] over the current layer's output
        let mut width = last.out_channels() as usize;
        let mut reach = vec![false; width * sx * sy];
        reach[(f0 as usize * sy + sy / 2) * sx + sx / 2] = true;
        for (layer, perm) in design.iter().zip(&perms).rev() {
            let size = layer.kind().size();
            let (rx, ry) = ((size.x / 2) as isize, (size.y / 2) as isize);
            let (lx, ly) = (size.x as isize - 1 - rx, size.y as isize - 1 - ry);
            let cin = layer.in_channels() as usize;
            let mut prev = vec![false; cin * sx * sy];
            for f in 0..width {
                for y in 0..sy {
                    for x in 0..sx {
                        if !reach[(f * sy + y) * sx + x] {
                            continue;
                        }
                        for j in read_channels(layer, f as u32) {
                            let src = perm[j as usize] as usize;
                            for dy in -ry..=ly {
                                for dx in -rx..=lx {
                                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                                    if yy < 0 || xx < 0 || yy >= sy as isize || xx >= sx as isize {
                                        continue;
                                    }
                                    prev[(src * sy + yy as usize) * sx + xx as usize] = true;
                                }
                            }
                        }
                    }
                }
            }
            reach = prev;
            width = cin;
        }
        let mut chans = BTreeSet::new();
        let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
        for c in 0..width {
            for y in 0..sy {
                for x in 0..sx {
                    if reach[(c * sy + y) * sx + x] {
                        chans.insert(c);
                        x0 = x0.min(x);
                        x1 = x1.max(x);
                        y0 = y0.min(y);
                        y1 = y1.max(y);
                    }
                }
            }
        }
        let field = GraphField {
            spatial_x: (x1 - x0 + 1) as u32,
            spatial_y: (y1 - y0 + 1) as u32,
            channels: chans.len() as u32,
        };
        if best.is_none_or(|b| field.channels > b.channels) {
            best = Some(field);
        }
    }
    Ok(best.expect("at least one output channel"))
}

/// Best channel count any choice of channel orders can reach, found by
/// searching every equal-size partition in front of each grouped layer.
///
/// Only channels are tracked; spatial reach does not depend on the
/// permutation.
pub fn best_permutation_channels(design: &[LayerSpec], input_channels: u32) -> Result<u32> {
    check_chain(design, input_channels)?;
    let widest = design
        .iter()
        .map(LayerSpec::out_channels)
        .chain([input_channels])
        .max()
        .unwrap_or(0);
    if widest > MAX_FALLBACK_CHANNELS {
        return Err(Error::OracleLimit(format!(
            "{widest} channels exceeds the permutation search cap of {MAX_FALLBACK_CHANNELS}"
        )));
    }
    let start: Vec<u16> = (0..input_channels).map(|c| 1u16 << c).collect();
    let mut memo = HashMap::new();
    Ok(best_from(design, 0, start, &mut memo))
}

fn best_from(
    design: &[LayerSpec],
    i: usize,
    mut sets: Vec<u16>,
    memo: &mut HashMap<(usize, Vec<u16>), u32>,
) -> u32 {
    sets.sort_unstable();
    if i == design.len() {
        return sets.iter().map(|s| s.count_ones()).max().unwrap_or(0);
    }
    if let Some(v) = memo.get(&(i, sets.clone())) {
        return *v;
    }
    let layer = &design[i];
    let out = layer.out_channels() as usize;
    let result = match layer.kind() {
        KernelKind::Standard { .. } | KernelKind::Pointwise => {
            let all = sets.iter().fold(0u16, |a, s| a | s);
            best_from(design, i + 1, vec![all; out], memo)
        }
        KernelKind::Depthwise { .. } => best_from(design, i + 1, sets.clone(), memo),
        KernelKind::GroupConv { groups, .. } | KernelKind::PointwiseGroup { groups } => {
            let per = sets.len() / groups as usize;
            let reps = out / groups as usize;
            let mut best = 0;
            let mut unions = Vec::new();
            partitions(&sets, per, &mut vec![false; sets.len()], &mut unions, &mut |u| {
                let next: Vec<u16> = u.iter().flat_map(|s| std::iter::repeat_n(*s, reps)).collect();
                best = best.max(best_from(design, i + 1, next, memo));
            });
            best
        }
    };
    memo.insert((i, sets), result);
    result
}

/// Calls `visit` with the group unions of every partition of `sets` into
/// blocks of size `per`. Blocks are built around the lowest unused index so
/// each partition is produced once.
fn partitions(
    sets: &[u16],
    per: usize,
    used: &mut Vec<bool>,
    unions: &mut Vec<u16>,
    visit: &mut dyn FnMut(&[u16]),
) {
    let Some(first) = used.iter().position(|u| !u) else {
        visit(unions);
        return;
    };
    used[first] = true;
    fill(sets, per, used, unions, visit, first + 1, per - 1, sets[first]);
    used[first] = false;
}

#[allow(clippy::too_many_arguments)]
fn fill(
    sets: &[u16],
    per: usize,
    used: &mut Vec<bool>,
    unions: &mut Vec<u16>,
    visit: &mut dyn FnMut(&[u16]),
    from: usize,
    left: usize,
    acc: u16,
) {
    if left == 0 {
        unions.push(acc);
        partitions(sets, per, used, unions, visit);
        unions.pop();
        return;
    }
    for j in from..sets.len() {
        if !used[j] {
            used[j] = true;
            fill(sets, per, used, unions, visit, j + 1, left - 1, acc | sets[j]);
            used[j] = false;
        }
    }
}

/// Parameter formulas with two group numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupObjective {
    /// `9C^2/M + CF/N`, group convolution then pointwise group convolution,
    /// intermediate width `C`.
    GcPwg,
    /// `CK/M + 9K + KF/N` with `K = F/4`.
    PwgDwPwg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupConstraint {
    /// `M * N <= intermediate width`.
    AtMost,
    /// `M * N == intermediate width`.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMin {
    pub objective: GroupObjective,
    pub in_channels: u32,
    pub out_channels: u32,
    pub intermediate: u32,
    pub feasible: Vec<(u32, u32)>,
    pub minimizers: Vec<(u32, u32)>,
    pub min_params: u64,
}

/// Intermediate width of the objective.
pub fn intermediate_width(objective: GroupObjective, c: u32, f: u32) -> Result<u32> {
    match objective {
        GroupObjective::GcPwg => Ok(c),
        GroupObjective::PwgDwPwg if f.is_multiple_of(4) => Ok(f / 4),
        GroupObjective::PwgDwPwg => Err(Error::Infeasible(format!(
            "bottleneck width needs 4 | F, got F = {f}"
        ))),
    }
}

/// Feasible `(M, N)` pairs, in increasing order.
pub fn feasible_pairs(
    objective: GroupObjective,
    c: u32,
    f: u32,
    constraint: GroupConstraint,
) -> Result<Vec<(u32, u32)>> {
    let k = intermediate_width(objective, c, f)?;
    let divides = |d: u32, n: u32| n.is_multiple_of(d);
    let (ms, ns): (Vec<u32>, Vec<u32>) = match objective {
        GroupObjective::GcPwg => (
            (2..c).filter(|&m| divides(m, c) && divides(m, f)).collect(),
            (2..=c).filter(|&n| divides(n, c) && divides(n, f)).collect(),
        ),
        GroupObjective::PwgDwPwg => (
            (2..=k).filter(|&m| divides(m, c) && divides(m, k)).collect(),
            (2..=k).filter(|&n| divides(n, k) && divides(n, f)).collect(),
        ),
    };
    let mut out = Vec::new();
    for &m in &ms {
        for &n in &ns {
            let p = u64::from(m) * u64::from(n);
            let ok = match constraint {
                GroupConstraint::AtMost => p <= u64::from(k),
                GroupConstraint::Equal => p == u64::from(k),
            };
            if ok {
                out.push((m, n));
            }
        }
    }
    Ok(out)
}

/// Exact parameter count of the objective at `(M, N)`.
pub fn objective_params(objective: GroupObjective, c: u32, f: u32, m: u32, n: u32) -> Result<u64> {
    let k = u64::from(intermediate_width(objective, c, f)?);
    let (c, f, m, n) = (u64::from(c), u64::from(f), u64::from(m), u64::from(n));
    Ok(match objective {
        GroupObjective::GcPwg => 9 * c * c / m + c * f / n,
        GroupObjective::PwgDwPwg => c * k / m + 9 * k + k * f / n,
    })
}

/// Evaluates every feasible pair and returns all minimizers.
pub fn divisor_grid_min(
    objective: GroupObjective,
    c: u32,
    f: u32,
    constraint: GroupConstraint,
) -> Result<GridMin> {
    if c == 0 || f == 0 {
        return Err(Error::ZeroChannels);
    }
    if c > MAX_GRID_CHANNELS || f > MAX_GRID_CHANNELS {
        return Err(Error::OracleLimit(format!(
            "divisor grid is limited to {MAX_GRID_CHANNELS} channels"
        )));
    }
    let feasible = feasible_pairs(objective, c, f, constraint)?;
    if feasible.is_empty() {
        return Err(Error::EmptyFeasibleSet(format!(
            "{objective:?} at C={c}, F={f}"
        )));
    }
    let scored: Vec<(u64, (u32, u32))> = feasible
        .iter()
        .map(|&(m, n)| objective_params(objective, c, f, m, n).map(|p| (p, (m, n))))
        .collect::<Result<_>>()?;
    let min_params = scored.iter().map(|s| s.0).min().expect("non-empty");
    Ok(GridMin {
        objective,
        in_channels: c,
        out_channels: f,
        intermediate: intermediate_width(objective, c, f)?,
        minimizers: scored
            .iter()
            .filter(|s| s.0 == min_params)
            .map(|s| s.1)
            .collect(),
        feasible,
        min_params,
    })
}

/// One calculus/graph disagreement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub channels: u32,
    pub sequence: String,
    pub plan: PlanKind,
    pub groups: Vec<Option<u32>>,
    pub calculus: (u32, u32, u64),
    pub graph: (u32, u32, u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceSummary {
    pub channels: Vec<u32>,
    pub max_length: usize,
    pub designs: u64,
    /// Designs where interleave fell short but some permutation matched.
    pub needed_permutation_search: u64,
    pub disagreements: Vec<Disagreement>,
}

/// Compares the calculus with graph reachability for every sequence up to
/// `max_length`, every plan and every group assignment at `C = F`.
pub fn verify_infofield(channels: &[u32], max_length: usize) -> Result<EquivalenceSummary> {
    let mut summary = EquivalenceSummary {
        channels: channels.to_vec(),
        max_length,
        designs: 0,
        needed_permutation_search: 0,
        disagreements: Vec::new(),
    };
    for &c in channels {
        for seq in all_sequences(max_length) {
            for plan in [PlanKind::Plain, PlanKind::Bottleneck] {
                let Some(widths) = channel_plan(&seq, c, c, plan, 4) else {
                    continue;
                };
                for groups in group_assignments(&seq, &widths) {
                    let Ok(layers) = build_layers(&seq, &groups, &widths, 3) else {
                        continue;
                    };
                    summary.designs += 1;
                    let calculus = field_of(&layers, c)?.triple(c);
                    let graph =
                        graph_information_field(&layers, c, PermutationStrategy::Interleave)?.triple();
                    if calculus == graph {
                        continue;
                    }
                    if c <= MAX_FALLBACK_CHANNELS
                        && (graph.0, graph.1) == (calculus.0, calculus.1)
                        && u64::from(best_permutation_channels(&layers, c)?) == calculus.2
                    {
                        summary.needed_permutation_search += 1;
                        continue;
                    }
                    summary.disagreements.push(Disagreement {
                        channels: c,
                        sequence: sequence_name(&seq),
                        plan,
                        groups,
                        calculus,
                        graph,
                    });
                }
            }
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem1Summary {
    pub grids: u64,
    pub skipped_empty: u64,
    /// `(C, F, M, N)` minimizers with `M * N != C`.
    pub counterexamples: Vec<(u32, u32, u32, u32)>,
}

/// Checks that every minimizer of `9C^2/M + CF/N` with `M * N <= C` has
/// `M * N = C`, for each `C` and `F = C * multiplier`.
pub fn verify_theorem1(cs: &[u32], multipliers: &[u32]) -> Result<Theorem1Summary> {
    let mut s = Theorem1Summary {
        grids: 0,
        skipped_empty: 0,
        counterexamples: Vec::new(),
    };
    for &c in cs {
        for &k in multipliers {
            let f = c * k;
            match divisor_grid_min(GroupObjective::GcPwg, c, f, GroupConstraint::AtMost) {
                Ok(g) => {
                    s.grids += 1;
                    s.counterexamples.extend(
                        g.minimizers
                            .iter()
                            .filter(|(m, n)| m * n != c)
                            .map(|&(m, n)| (c, f, m, n)),
                    );
                }
                Err(Error::EmptyFeasibleSet(_)) => s.skipped_empty += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind as K;

    fn l(kind: KernelKind, c: u32, f: u32) -> LayerSpec {
        LayerSpec::new(kind, c, f).unwrap()
    }

    #[test]
    fn small_sweeps() {
        let s = verify_infofield(&[4], 2).unwrap();
        assert!(s.designs > 0 && s.disagreements.is_empty());
        let t = verify_theorem1(&[6, 8, 12], &[1, 2]).unwrap();
        assert_eq!(t.grids, 6);
        assert!(t.counterexamples.is_empty());
    }

    #[test]
    fn interleave_transposes() {
        assert_eq!(interleave(8, 2), vec![0, 4, 1, 5, 2, 6, 3, 7]);
        assert_eq!(interleave(6, 3), vec![0, 2, 4, 1, 3, 5]);
        assert_eq!(interleave(4, 1), vec![0, 1, 2, 3]);
    }

    #[test]
    fn standard_reaches_everything() {
        let d = [l(K::standard(3).unwrap(), 8, 8)];
        let g = graph_information_field(&d, 8, PermutationStrategy::Interleave).unwrap();
        assert_eq!(g.triple(), (3, 3, 8));
    }

    #[test]
    fn gc_then_pwg_is_full() {
        let d = [l(K::group_conv(3, 4).unwrap(), 8, 8), l(K::pointwise_group(2), 8, 8)];
        let g = graph_information_field(&d, 8, PermutationStrategy::Interleave).unwrap();
        assert_eq!(g.triple(), (3, 3, 8));
        // without a shuffle the second layer only sees two of the first groups
        let g = graph_information_field(&d, 8, PermutationStrategy::Identity).unwrap();
        assert_eq!(g.triple(), (3, 3, 4));
    }

    #[test]
    fn depthwise_is_one_channel() {
        let d = [l(K::depthwise(3).unwrap(), 8, 8)];
        let g = graph_information_field(&d, 8, PermutationStrategy::Interleave).unwrap();
        assert_eq!(g.triple(), (3, 3, 1));
    }

    #[test]
    fn caps_are_enforced() {
        let d = [l(K::pointwise(), 32, 32)];
        assert!(matches!(
            graph_information_field(&d, 32, PermutationStrategy::Interleave),
            Err(Error::OracleLimit(_))
        ));
        let dw = l(K::depthwise(3).unwrap(), 4, 4);
        let d = vec![dw; 5];
        assert!(matches!(
            graph_information_field(&d, 4, PermutationStrategy::Interleave),
            Err(Error::OracleLimit(_))
        ));
        let d = [l(K::pointwise(), 16, 16)];
        assert!(matches!(best_permutation_channels(&d, 16), Err(Error::OracleLimit(_))));
    }

    #[test]
    fn permutation_search_recovers_identity_loss() {
        let d = [l(K::group_conv(3, 4).unwrap(), 8, 8), l(K::pointwise_group(2), 8, 8)];
        assert_eq!(best_permutation_channels(&d, 8).unwrap(), 8);
        let d = [l(K::pointwise_group(4), 8, 8), l(K::pointwise_group(4), 8, 8)];
        assert_eq!(best_permutation_channels(&d, 8).unwrap(), 4);
        let d = [l(K::pointwise_group(4), 8, 8), l(K::pointwise_group(8), 8, 8)];
        assert_eq!(best_permutation_channels(&d, 8).unwrap(), 2);
    }

    #[test]
    fn partition_count() {
        let sets: Vec<u16> = (0..6).map(|c| 1 << c).collect();
        let mut n = 0;
        partitions(&sets, 2, &mut vec![false; 6], &mut Vec::new(), &mut |_| n += 1);
        assert_eq!(n, 15);
        let mut n = 0;
        partitions(&sets, 3, &mut vec![false; 6], &mut Vec::new(), &mut |_| n += 1);
        assert_eq!(n, 10);
    }

    #[test]
    fn grid_at_eight() {
        let g = divisor_grid_min(GroupObjective::GcPwg, 8, 8, GroupConstraint::AtMost).unwrap();
        assert_eq!(g.minimizers, vec![(4, 2)]);
        assert_eq!(g.min_params, 176);
        assert_eq!(objective_params(GroupObjective::GcPwg, 8, 8, 2, 4).unwrap(), 304);
    }

    #[test]
    fn grid_at_thirty_six() {
        let g = divisor_grid_min(GroupObjective::GcPwg, 36, 36, GroupConstraint::AtMost).unwrap();
        assert_eq!(g.minimizers, vec![(18, 2)]);
        assert_eq!(g.min_params, 1296);
        assert!(g.minimizers.iter().all(|(m, n)| m * n == 36));
    }

    #[test]
    fn grid_bottleneck() {
        let g = divisor_grid_min(GroupObjective::PwgDwPwg, 64, 64, GroupConstraint::Equal).unwrap();
        assert_eq!(g.intermediate, 16);
        assert_eq!(g.minimizers, vec![(4, 4)]);
        assert_eq!(g.min_params, 656);
        assert!(feasible_pairs(GroupObjective::PwgDwPwg, 64, 62, GroupConstraint::Equal).is_err());
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(matches!(
            divisor_grid_min(GroupObjective::GcPwg, 7, 7, GroupConstraint::AtMost),
            Err(Error::EmptyFeasibleSet(_))
        ));
        assert!(matches!(
            divisor_grid_min(GroupObjective::GcPwg, 8192, 8192, GroupConstraint::AtMost),
            Err(Error::OracleLimit(_))
        ));
    }
}
