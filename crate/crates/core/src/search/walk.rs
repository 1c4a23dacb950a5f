//! Prefix walk over group assignments with early stopping.
//!
//! A stop at kernel `i` settles every completion of the prefix at once, so
//! the tally is credited with the number of remaining assignments.

use serde::{Deserialize, Serialize};

use crate::infofield::{final_verdict, step, FieldVerdict, InfoField, PlanKind, Step};
use crate::kernels::LayerSpec;

use super::space::{group_options, Symbol};

/// Candidate counts per verdict.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictTally {
    pub examined: u64,
    pub inferior_no_growth: u64,
    pub inferior_early_full: u64,
    pub insufficient_field: u64,
    pub spatial_mismatch: u64,
    pub valid: u64,
}

impl VerdictTally {
    pub fn record(&mut self, verdict: &FieldVerdict, count: u64) {
        let slot = match verdict {
            FieldVerdict::Valid => &mut self.valid,
            FieldVerdict::InferiorNoGrowth { .. } => &mut self.inferior_no_growth,
            FieldVerdict::InferiorEarlyFull { .. } => &mut self.inferior_early_full,
            FieldVerdict::InsufficientField { .. } => &mut self.insufficient_field,
            FieldVerdict::SpatialMismatch { .. } => &mut self.spatial_mismatch,
        };
        *slot += count;
    }

    pub fn merge(mut self, other: VerdictTally) -> VerdictTally {
        self.examined += other.examined;
        self.inferior_no_growth += other.inferior_no_growth;
        self.inferior_early_full += other.inferior_early_full;
        self.insufficient_field += other.insufficient_field;
        self.spatial_mismatch += other.spatial_mismatch;
        self.valid += other.valid;
        self
    }

    pub fn settled(&self) -> u64 {
        self.inferior_no_growth
            + self.inferior_early_full
            + self.insufficient_field
            + self.spatial_mismatch
            + self.valid
    }
}

struct Walk<'a, F> {
    options: Vec<Vec<(Option<u32>, LayerSpec)>>,
    next_exempt: Vec<Option<bool>>,
    suffix: Vec<u64>,
    original: u32,
    reference: &'a InfoField,
    plan: PlanKind,
    tally: &'a mut VerdictTally,
    on_valid: F,
    chosen: Vec<Option<u32>>,
}

impl<F: FnMut(&[Option<u32>], u64)> Walk<'_, F> {
    fn descend(&mut self, i: usize, field: InfoField, params: u64) {
        let n = self.options.len();
        for j in 0..self.options[i].len() {
            let (g, layer) = self.options[i][j];
            let params = params + layer.param_count();
            self.chosen.push(g);
            match step(
                &field,
                &layer,
                self.next_exempt[i],
                i,
                self.original,
                self.reference,
                self.plan,
            ) {
                Step::Stop(v) => self.tally.record(&v, self.suffix[i + 1]),
                Step::Continue(next) if i + 1 == n => {
                    let v = final_verdict(next, self.reference);
                    self.tally.record(&v, 1);
                    if v.is_valid() {
                        (self.on_valid)(&self.chosen, params);
                    }
                }
                Step::Continue(next) => self.descend(i + 1, next, params),
            }
            self.chosen.pop();
        }
    }
}

/// Walks all group assignments of `seq` under one channel plan.
///
/// `on_valid` receives each valid assignment and its parameter count.
/// Returns `false` when some position has no legal option.
pub(crate) fn walk<F: FnMut(&[Option<u32>], u64)>(
    seq: &[Symbol],
    widths: &[(u32, u32)],
    k: u32,
    plan: PlanKind,
    reference: &InfoField,
    tally: &mut VerdictTally,
    on_valid: F,
) -> bool {
    let n = seq.len();
    let mut options = Vec::with_capacity(n);
    for (s, (ci, co)) in seq.iter().zip(widths) {
        let opts: Vec<_> = group_options(*s, *ci, *co)
            .into_iter()
            .filter_map(|g| {
                let kind = s.kernel(k, g).ok()?;
                LayerSpec::new(kind, *ci, *co).ok().map(|l| (g, l))
            })
            .collect();
        if opts.is_empty() {
            return false;
        }
        options.push(opts);
    }
    let mut suffix = vec![1u64; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * options[i].len() as u64;
    }
    let next_exempt = (0..n)
        .map(|i| {
            widths
                .get(i + 1)
                .map(|(ci, co)| plan == PlanKind::Bottleneck && ci != co)
        })
        .collect();
    tally.examined += suffix[0];
    let original = widths[0].0;
    let mut w = Walk {
        options,
        next_exempt,
        suffix,
        original,
        reference,
        plan,
        tally,
        on_valid,
        chosen: Vec::with_capacity(n),
    };
    w.descend(0, InfoField::initial(original), 0);
    true
}
