//! Information-field calculus.
//!
//! An information field is the `(x, y, channels)` region of the original
//! input that a single output activation depends on. It is accumulated left
//! to right over a kernel sequence, starting at `(1, 1, 1 channel)`.
//!
//! Channel coverage is tracked as an exact fraction of the original input
//! channels under the best-case channel permutation: every output channel
//! reading `n` input channels with coverage `a` reaches `min(1, n * a)`. The
//! brute-force check that a concrete permutation achieves this lives in
//! [`crate::oracles`].

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelSize, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InfoField {
    spatial_x: u32,
    spatial_y: u32,
    coverage: Ratio<u64>,
}

impl InfoField {
    pub fn new(spatial_x: u32, spatial_y: u32, coverage: Ratio<u64>) -> Result<Self> {
        if spatial_x == 0 || spatial_y == 0 {
            return Err(Error::InvalidArgument("spatial extent must be >= 1".into()));
        }
        if coverage <= Ratio::from_integer(0) || coverage > Ratio::from_integer(1) {
            return Err(Error::InvalidArgument(format!(
                "coverage {coverage} must lie in (0, 1]"
            )));
        }
        Ok(InfoField {
            spatial_x,
            spatial_y,
            coverage,
        })
    }

    /// One pixel of one channel out of `original_channels`.
    pub fn initial(original_channels: u32) -> Self {
        InfoField {
            spatial_x: 1,
            spatial_y: 1,
            coverage: Ratio::new(1, u64::from(original_channels.max(1))),
        }
    }

    /// The field of a single standard convolution with the given kernel.
    pub fn reference(size: KernelSize) -> Self {
        InfoField {
            spatial_x: size.x,
            spatial_y: size.y,
            coverage: Ratio::from_integer(1),
        }
    }

    pub fn spatial_x(&self) -> u32 {
        self.spatial_x
    }

    pub fn spatial_y(&self) -> u32 {
        self.spatial_y
    }

    pub fn coverage(&self) -> Ratio<u64> {
        self.coverage
    }

    pub fn is_full(&self) -> bool {
        self.coverage == Ratio::from_integer(1)
    }

    /// Coverage expressed as a channel count of the original input.
    pub fn channels(&self, original_channels: u32) -> Ratio<u64> {
        self.coverage * u64::from(original_channels)
    }

    /// `(x, y, channels)` when the covered channel count is integral.
    pub fn triple(&self, original_channels: u32) -> (u32, u32, u64) {
        let ch = self.channels(original_channels);
        (self.spatial_x, self.spatial_y, ch.to_integer())
    }

    fn spatial_exceeds(&self, reference: &InfoField) -> bool {
        self.spatial_x > reference.spatial_x || self.spatial_y > reference.spatial_y
    }
}

impl fmt::Display for InfoField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.spatial_x, self.spatial_y, self.coverage)
    }
}

/// Outcome of walking a design with the early-stop rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FieldVerdict {
    Valid,
    /// The kernel at this index neither grew the field nor played a
    /// bottleneck channel role.
    InferiorNoGrowth { at_kernel_index: usize },
    /// The reference field was already reached at this index while a
    /// non-contributing kernel remained.
    InferiorEarlyFull { at_kernel_index: usize },
    InsufficientField { final_field: InfoField },
    SpatialMismatch { final_field: InfoField },
}

impl FieldVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, FieldVerdict::Valid)
    }

    pub fn label(&self) -> &'static str {
        match self {
            FieldVerdict::Valid => "valid",
            FieldVerdict::InferiorNoGrowth { .. } => "inferior_no_growth",
            FieldVerdict::InferiorEarlyFull { .. } => "inferior_early_full",
            FieldVerdict::InsufficientField { .. } => "insufficient_field",
            FieldVerdict::SpatialMismatch { .. } => "spatial_mismatch",
        }
    }
}

/// How channel changes inside a design are accounted.
///
/// In a bottleneck plan the first kernel reduces to the bottleneck width and
/// the last restores the output width; those channel changes count as a
/// contribution even when the field does not grow. In a plain plan a channel
/// change is just the `C -> F` projection and earns nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Plain,
    Bottleneck,
}

impl PlanKind {
    pub(crate) fn exempts(self, layer: &LayerSpec) -> bool {
        self == PlanKind::Bottleneck && layer.changes_channels()
    }
}

/// Pushes a field through one layer.
///
/// Spatial extents grow by `k - 1`; coverage becomes
/// `min(1, fan_in * coverage)` where `fan_in` is the number of input channels
/// each output channel reads (1 for depthwise, `C / groups` for grouped kinds,
/// `C` for dense kinds).
pub fn propagate(field: &InfoField, layer: &LayerSpec, _original_channels: u32) -> InfoField {
    let size = layer.kind().size();
    let grown = field.coverage * u64::from(layer.fan_in_channels());
    InfoField {
        spatial_x: field.spatial_x + size.x - 1,
        spatial_y: field.spatial_y + size.y - 1,
        coverage: grown.min(Ratio::from_integer(1)),
    }
}

pub fn check_chain(design: &[LayerSpec], input_channels: u32) -> Result<()> {
    let mut expected = input_channels;
    for (index, layer) in design.iter().enumerate() {
        if layer.in_channels() != expected {
            return Err(Error::ChannelMismatch {
                index,
                produced: expected,
                expected: layer.in_channels(),
            });
        }
        expected = layer.out_channels();
    }
    Ok(())
}

/// Full left fold of [`propagate`], without early stopping.
pub fn field_of(design: &[LayerSpec], input_channels: u32) -> Result<InfoField> {
    check_chain(design, input_channels)?;
    Ok(design
        .iter()
        .fold(InfoField::initial(input_channels), |f, l| {
            propagate(&f, l, input_channels)
        }))
}

/// Result of one early-stop step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Step {
    Continue(InfoField),
    Stop(FieldVerdict),
}

/// Applies kernel `index` and the two early-stop checks.
///
/// `next_exempt` is `Some(e)` when another kernel follows, with `e` telling
/// whether that kernel plays a bottleneck channel role; rule (b) only fires
/// when the following kernel would be unable to contribute.
pub(crate) fn step(
    field: &InfoField,
    layer: &LayerSpec,
    next_exempt: Option<bool>,
    index: usize,
    original_channels: u32,
    reference: &InfoField,
    plan: PlanKind,
) -> Step {
    let after = propagate(field, layer, original_channels);
    if after == *field && !plan.exempts(layer) {
        return Step::Stop(FieldVerdict::InferiorNoGrowth {
            at_kernel_index: index,
        });
    }
    if let Some(exempt) = next_exempt {
        if after == *reference && !exempt {
            return Step::Stop(FieldVerdict::InferiorEarlyFull {
                at_kernel_index: index,
            });
        }
    }
    Step::Continue(after)
}

pub(crate) fn final_verdict(field: InfoField, reference: &InfoField) -> FieldVerdict {
    if field == *reference {
        FieldVerdict::Valid
    } else if field.spatial_exceeds(reference) {
        FieldVerdict::SpatialMismatch { final_field: field }
    } else {
        FieldVerdict::InsufficientField { final_field: field }
    }
}

/// Walks `design` with the early-stop mechanism and compares the result with
/// `reference` (normally the standard-convolution field `(k, k, all)`).
pub fn classify(
    design: &[LayerSpec],
    input_channels: u32,
    reference: &InfoField,
    plan: PlanKind,
) -> Result<FieldVerdict> {
    check_chain(design, input_channels)?;
    if design.is_empty() {
        return Err(Error::InvalidArgument("cannot classify an empty design".into()));
    }
    let mut field = InfoField::initial(input_channels);
    for (i, layer) in design.iter().enumerate() {
        match step(
            &field,
            layer,
            design.get(i + 1).map(|n| plan.exempts(n)),
            i,
            input_channels,
            reference,
            plan,
        ) {
            Step::Continue(f) => field = f,
            Step::Stop(v) => return Ok(v),
        }
    }
    Ok(final_verdict(field, reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;
    use proptest::prelude::*;

    fn l(kind: KernelKind, c: u32, f: u32) -> LayerSpec {
        LayerSpec::new(kind, c, f).unwrap()
    }
    fn dw(c: u32) -> LayerSpec {
        l(KernelKind::depthwise(3).unwrap(), c, c)
    }
    fn pw(c: u32, f: u32) -> LayerSpec {
        l(KernelKind::pointwise(), c, f)
    }
    fn gc(m: u32, c: u32, f: u32) -> LayerSpec {
        l(KernelKind::group_conv(3, m).unwrap(), c, f)
    }
    fn pwg(n: u32, c: u32, f: u32) -> LayerSpec {
        l(KernelKind::pointwise_group(n), c, f)
    }
    fn reference() -> InfoField {
        InfoField::reference(KernelSize::square(3))
    }

    #[test]
    fn standard_conv_reaches_full_field() {
        let f = propagate(
            &InfoField::initial(16),
            &l(KernelKind::standard(3).unwrap(), 16, 16),
            16,
        );
        assert_eq!(f.triple(16), (3, 3, 16));
    }

    #[test]
    fn depthwise_keeps_one_channel() {
        let f = propagate(&InfoField::initial(16), &dw(16), 16);
        assert_eq!(f.triple(16), (3, 3, 1));
        assert_eq!(f.coverage(), Ratio::new(1, 16));
    }

    #[test]
    fn gc4_then_pwg2_at_8() {
        let a = propagate(&InfoField::initial(8), &gc(4, 8, 8), 8);
        assert_eq!(a.coverage(), Ratio::new(1, 4));
        let b = propagate(&a, &pwg(2, 8, 8), 8);
        assert_eq!(b.triple(8), (3, 3, 8));
    }

    #[test]
    fn field_of_known_designs() {
        assert_eq!(field_of(&[dw(64), pw(64, 64)], 64).unwrap().triple(64), (3, 3, 64));
        // bottleneck K = F/4
        let d = [pw(64, 16), dw(16), pw(16, 64)];
        assert_eq!(field_of(&d, 64).unwrap().triple(64), (3, 3, 64));
        assert_eq!(field_of(&[dw(64)], 64).unwrap().triple(64), (3, 3, 1));
    }

    #[test]
    fn field_of_reports_boundary() {
        let err = field_of(&[pw(64, 32), dw(64)], 64).unwrap_err();
        assert_eq!(
            err,
            Error::ChannelMismatch {
                index: 1,
                produced: 32,
                expected: 64
            }
        );
    }

    #[test]
    fn classify_examples() {
        let r = reference();
        assert_eq!(
            classify(&[pw(64, 64), pw(64, 64)], 64, &r, PlanKind::Plain).unwrap(),
            FieldVerdict::InferiorNoGrowth { at_kernel_index: 1 }
        );
        for (m, n) in [(2, 32), (4, 16), (8, 8), (32, 2)] {
            let d = [gc(m, 64, 64), pwg(n, 64, 64), dw(64)];
            assert_eq!(
                classify(&d, 64, &r, PlanKind::Plain).unwrap(),
                FieldVerdict::InferiorEarlyFull { at_kernel_index: 1 }
            );
        }
        let v = classify(&[gc(4, 8, 8), pwg(4, 8, 8)], 8, &r, PlanKind::Plain).unwrap();
        match v {
            FieldVerdict::InsufficientField { final_field } => {
                assert_eq!(final_field.coverage(), Ratio::new(1, 2));
                assert_eq!(final_field.triple(8), (3, 3, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bottleneck_exemption() {
        let r = reference();
        let d = [pw(64, 16), dw(16), pw(16, 64)];
        assert_eq!(
            classify(&d, 64, &r, PlanKind::Bottleneck).unwrap(),
            FieldVerdict::Valid
        );
        // Same kernels at constant width die: the DW reaches the reference
        // and the trailing PW cannot contribute.
        let plain = [pw(64, 64), dw(64), pw(64, 64)];
        assert!(matches!(
            classify(&plain, 64, &r, PlanKind::Plain).unwrap(),
            FieldVerdict::InferiorEarlyFull { .. } | FieldVerdict::InferiorNoGrowth { .. }
        ));
        // A C != F projection does not rescue the plain form.
        let plain_wide = [pw(64, 64), dw(64), pw(64, 128)];
        assert!(!classify(&plain_wide, 64, &r, PlanKind::Plain)
            .unwrap()
            .is_valid());
    }

    #[test]
    fn spatial_overshoot_is_mismatch() {
        let r = reference();
        let v = classify(&[dw(8), gc(2, 8, 8), pw(8, 8)], 8, &r, PlanKind::Plain).unwrap();
        assert!(matches!(v, FieldVerdict::SpatialMismatch { .. }), "{v:?}");
        let v = classify(&[dw(8)], 8, &r, PlanKind::Plain).unwrap();
        assert!(matches!(v, FieldVerdict::InsufficientField { .. }));
    }

    #[test]
    fn new_rejects_out_of_range() {
        assert!(InfoField::new(0, 1, Ratio::new(1, 2)).is_err());
        assert!(InfoField::new(1, 1, Ratio::new(3, 2)).is_err());
        assert!(InfoField::new(1, 1, Ratio::from_integer(0)).is_err());
        assert!(InfoField::new(3, 3, Ratio::new(1, 2)).is_ok());
    }

    fn arb_layer(c: u32) -> impl Strategy<Value = LayerSpec> {
        let divs: Vec<u32> = (2..=c).filter(|d| c.is_multiple_of(*d)).collect();
        let gdivs: Vec<u32> = divs.iter().copied().filter(|&d| d < c).collect();
        prop_oneof![
            Just(l(KernelKind::standard(3).unwrap(), c, c)),
            Just(dw(c)),
            Just(pw(c, c)),
            proptest::sample::select(divs).prop_map(move |n| pwg(n, c, c)),
            proptest::sample::select(gdivs).prop_map(move |m| gc(m, c, c)),
        ]
    }

    proptest! {
        #[test]
        fn propagate_never_shrinks(
            layers in proptest::collection::vec(arb_layer(24), 1..6),
        ) {
            let mut f = InfoField::initial(24);
            for layer in &layers {
                let g = propagate(&f, layer, 24);
                prop_assert!(g.spatial_x() >= f.spatial_x());
                prop_assert!(g.spatial_y() >= f.spatial_y());
                prop_assert!(g.coverage() >= f.coverage());
                prop_assert!(g.coverage() <= Ratio::from_integer(1));
                f = g;
            }
            let r = reference();
            let a = classify(&layers, 24, &r, PlanKind::Plain).unwrap();
            let b = classify(&layers, 24, &r, PlanKind::Plain).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
