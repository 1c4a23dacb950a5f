//! Design-space search over sparse kernel sequences.
//!
//! Pipeline: enumerate sequences, drop repeated patterns, walk group
//! assignments with the information-field early-stop rules, group the valid
//! ones into families by kernel multiset, then reduce the family set.

mod known;
mod reduce;
mod space;
mod walk;

use std::collections::BTreeMap;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infofield::{propagate, InfoField, PlanKind};
use crate::kernels::KernelSize;

pub use known::{identify_known, identify_sequence, KnownArchitecture};
pub use reduce::{DominationPoint, DropReason, DroppedFamily};
pub use space::{
    all_sequences, build_layers, channel_plan, concretize, enumerate_sequences, group_assignments,
    group_options,
    is_repeated, parse_sequence, raw_sequence_count, sequence_name, DesignCandidate, Symbol,
};
pub use walk::VerdictTally;

pub const MAX_SEQUENCE_LENGTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_length: usize,
    pub reference_channels: u32,
    pub reference_out_channels: u32,
    pub kernel_size: u32,
    /// Output width over bottleneck width.
    pub bottleneck_ratio: u32,
    pub enable_bottleneck_variants: bool,
    pub enable_domination_filter: bool,
    /// Input widths at which parameter domination is tested. The output width
    /// follows the reference ratio; points where it is not integral are
    /// skipped.
    pub domination_grid: Vec<u32>,
    /// Worker threads; `None` uses the rayon default. Does not affect output.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_length: MAX_SEQUENCE_LENGTH,
            reference_channels: 64,
            reference_out_channels: 64,
            kernel_size: 3,
            bottleneck_ratio: 4,
            enable_bottleneck_variants: true,
            enable_domination_filter: true,
            domination_grid: vec![16, 32, 64, 128],
            jobs: None,
        }
    }
}

impl SearchConfig {
    pub fn with_channels(c: u32, f: u32) -> Self {
        SearchConfig {
            reference_channels: c,
            reference_out_channels: f,
            ..SearchConfig::default()
        }
    }

    /// `F / C`.
    pub fn alpha(&self) -> Ratio<u32> {
        Ratio::new(self.reference_out_channels, self.reference_channels.max(1))
    }

    pub fn reference_field(&self) -> InfoField {
        InfoField::reference(KernelSize::square(self.kernel_size))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 || self.max_length > MAX_SEQUENCE_LENGTH {
            return Err(Error::InvalidArgument(format!(
                "max length must be in 1..={MAX_SEQUENCE_LENGTH}, got {}",
                self.max_length
            )));
        }
        if self.reference_channels == 0 || self.reference_out_channels == 0 {
            return Err(Error::ZeroChannels);
        }
        if self.kernel_size < 2 {
            return Err(Error::InvalidKernel(format!(
                "spatial kernel size must be at least 2, got {}",
                self.kernel_size
            )));
        }
        if self.bottleneck_ratio == 0 {
            return Err(Error::InvalidArgument("bottleneck ratio must be positive".into()));
        }
        if self.domination_grid.contains(&0) {
            return Err(Error::InvalidArgument("domination grid contains 0".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("jobs must be positive".into()));
        }
        Ok(())
    }
}

/// One valid group assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Witness {
    pub sequence: Vec<Symbol>,
    pub plan: PlanKind,
    pub groups: Vec<Option<u32>>,
    pub params: u64,
}

/// Per-kernel fields of the canonical witness, recomputed without early
/// stopping so the result can be checked independently.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyAudit {
    pub fields: Vec<InfoField>,
    pub all_kernels_contribute: bool,
    pub final_field_matches_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignFamily {
    pub canonical_sequence: Vec<Symbol>,
    /// Set when some witness uses the bottleneck plan.
    pub bottleneck: bool,
    pub canonical_groups: Vec<Option<u32>>,
    pub canonical_plan: PlanKind,
    pub min_params: u64,
    pub witnesses: Vec<Witness>,
    pub audit: FamilyAudit,
}

impl DesignFamily {
    pub fn name(&self) -> String {
        sequence_name(&self.canonical_sequence)
    }

    pub fn len(&self) -> usize {
        self.canonical_sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical_sequence.is_empty()
    }

    /// The kernel multiset, sorted.
    pub fn multiset(&self) -> Vec<Symbol> {
        multiset(&self.canonical_sequence)
    }

    pub fn plans(&self) -> Vec<PlanKind> {
        let mut p: Vec<_> = self.witnesses.iter().map(|w| w.plan).collect();
        p.sort();
        p.dedup();
        p
    }
}

pub(crate) fn multiset(seq: &[Symbol]) -> Vec<Symbol> {
    let mut m = seq.to_vec();
    m.sort();
    m
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub raw_sequences: u64,
    pub repeated_pattern_removed: u64,
    pub sequences_kept: u64,
    /// (sequence, plan) pairs with no legal channel plan or group option.
    pub infeasible_plans: u64,
    pub candidates: VerdictTally,
    pub valid_families: u64,
    pub dropped_containment: u64,
    pub dropped_sparsification: u64,
    pub dropped_domination: u64,
    pub surviving_families: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchReport {
    pub config: SearchConfig,
    pub counts: StageCounts,
    pub families: Vec<DesignFamily>,
    pub dropped: Vec<DroppedFamily>,
}

struct SequenceOutcome {
    tally: VerdictTally,
    infeasible_plans: u64,
    witnesses: Vec<Witness>,
}

fn evaluate_sequence(seq: &[Symbol], c: u32, f: u32, config: &SearchConfig) -> SequenceOutcome {
    let reference = config.reference_field();
    let mut out = SequenceOutcome {
        tally: VerdictTally::default(),
        infeasible_plans: 0,
        witnesses: Vec::new(),
    };
    for plan in space::plans_for(config) {
        let Some(widths) = channel_plan(seq, c, f, plan, config.bottleneck_ratio) else {
            out.infeasible_plans += 1;
            continue;
        };
        let witnesses = &mut out.witnesses;
        let feasible = walk::walk(
            seq,
            &widths,
            config.kernel_size,
            plan,
            &reference,
            &mut out.tally,
            |groups, params| {
                witnesses.push(Witness {
                    sequence: seq.to_vec(),
                    plan,
                    groups: groups.to_vec(),
                    params,
                })
            },
        );
        if !feasible {
            out.infeasible_plans += 1;
        }
    }
    out
}

fn run_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(work()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(work))
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}"))),
    }
}

/// All valid witnesses at `(c, f)` plus the merged tally.
pub(crate) fn valid_witnesses(
    sequences: &[Vec<Symbol>],
    c: u32,
    f: u32,
    config: &SearchConfig,
) -> (VerdictTally, u64, Vec<Witness>) {
    let outcomes: Vec<SequenceOutcome> = sequences
        .par_iter()
        .map(|s| evaluate_sequence(s, c, f, config))
        .collect();
    let mut tally = VerdictTally::default();
    let mut infeasible = 0;
    let mut witnesses = Vec::new();
    for o in outcomes {
        tally = tally.merge(o.tally);
        infeasible += o.infeasible_plans;
        witnesses.extend(o.witnesses);
    }
    (tally, infeasible, witnesses)
}

fn audit(w: &Witness, config: &SearchConfig) -> FamilyAudit {
    let (c, f) = (config.reference_channels, config.reference_out_channels);
    let widths = channel_plan(&w.sequence, c, f, w.plan, config.bottleneck_ratio)
        .expect("witness plan is legal");
    let layers = build_layers(&w.sequence, &w.groups, &widths, config.kernel_size)
        .expect("witness layers are legal");
    let mut fields = Vec::with_capacity(layers.len());
    let mut field = InfoField::initial(c);
    let mut all_contribute = true;
    for layer in &layers {
        let next = propagate(&field, layer, c);
        let exempt = w.plan == PlanKind::Bottleneck && layer.changes_channels();
        if next == field && !exempt {
            all_contribute = false;
        }
        field = next;
        fields.push(next);
    }
    FamilyAudit {
        fields,
        all_kernels_contribute: all_contribute,
        final_field_matches_reference: field == config.reference_field(),
    }
}

/// Groups witnesses by kernel multiset and picks each family's canonical
/// ordering: the cheapest witness, preferring bottleneck witnesses when the
/// family has any, ties broken by symbol precedence then group numbers.
pub(crate) fn build_families(witnesses: Vec<Witness>, config: &SearchConfig) -> Vec<DesignFamily> {
    let mut by_multiset: BTreeMap<Vec<Symbol>, Vec<Witness>> = BTreeMap::new();
    for w in witnesses {
        by_multiset.entry(multiset(&w.sequence)).or_default().push(w);
    }
    let mut families: Vec<DesignFamily> = by_multiset
        .into_values()
        .map(|mut ws| {
            ws.sort();
            let bottleneck = ws.iter().any(|w| w.plan == PlanKind::Bottleneck);
            let preferred = if bottleneck { PlanKind::Bottleneck } else { PlanKind::Plain };
            let canon = ws
                .iter()
                .filter(|w| w.plan == preferred)
                .min_by(|a, b| {
                    (a.params, &a.sequence, &a.groups).cmp(&(b.params, &b.sequence, &b.groups))
                })
                .expect("family has a witness in its preferred plan")
                .clone();
            DesignFamily {
                canonical_sequence: canon.sequence.clone(),
                bottleneck,
                canonical_groups: canon.groups.clone(),
                canonical_plan: canon.plan,
                min_params: canon.params,
                audit: audit(&canon, config),
                witnesses: ws,
            }
        })
        .collect();
    sort_families(&mut families);
    families
}

pub(crate) fn sort_families(families: &mut [DesignFamily]) {
    families.sort_by(|a, b| {
        (a.len(), &a.canonical_sequence).cmp(&(b.len(), &b.canonical_sequence))
    });
}

/// Runs the whole pipeline at the configured reference channels.
pub fn run_search(config: &SearchConfig) -> Result<SearchReport> {
    config.validate()?;
    run_pool(config.jobs, || search_inner(config))?
}

fn search_inner(config: &SearchConfig) -> Result<SearchReport> {
    let raw = raw_sequence_count(config.max_length);
    let sequences: Vec<Vec<Symbol>> = enumerate_sequences(config).collect();
    let mut counts = StageCounts {
        raw_sequences: raw,
        sequences_kept: sequences.len() as u64,
        repeated_pattern_removed: raw - sequences.len() as u64,
        ..StageCounts::default()
    };
    let (c, f) = (config.reference_channels, config.reference_out_channels);
    let (tally, infeasible, witnesses) = valid_witnesses(&sequences, c, f, config);
    counts.candidates = tally;
    counts.infeasible_plans = infeasible;
    let families = build_families(witnesses, config);
    counts.valid_families = families.len() as u64;

    let (families, dropped) = if config.enable_domination_filter {
        reduce::reduce(families, &sequences, config)
    } else {
        (families, Vec::new())
    };
    for d in &dropped {
        match d.reason {
            DropReason::Containment { .. } => counts.dropped_containment += 1,
            DropReason::Sparsification { .. } => counts.dropped_sparsification += 1,
            DropReason::Domination { .. } => counts.dropped_domination += 1,
        }
    }
    counts.surviving_families = families.len() as u64;
    Ok(SearchReport {
        config: config.clone(),
        counts,
        families,
        dropped,
    })
}
