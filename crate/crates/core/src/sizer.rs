//! Whole-network parameter and MAC accounting for a four-stage layout.
//!
//! Layout: a `3 x 3` stride-2 stem convolution from RGB to `w` channels, a
//! stride-2 max-pool, four stages of `B` blocks at widths `w, 2w, 4w, 8w`
//! (the first block of stages 2 to 4 halves the resolution and doubles the
//! width), global average pooling and a 1000-way fully connected layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::efficiency::Family;
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, LayerSpec};

const SPATIAL: u32 = 3;

fn context(prefix: String, e: Error) -> Error {
    match e {
        Error::Infeasible(msg) => Error::Infeasible(format!("{prefix}: {msg}")),
        other => Error::Infeasible(format!("{prefix}: {other}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "groups", rename_all = "snake_case")]
pub enum KernelTemplate {
    Standard,
    GroupConv(u32),
    Depthwise,
    Pointwise,
    PointwiseGroup(u32),
}

impl KernelTemplate {
    fn kind(self) -> Result<KernelKind> {
        match self {
            KernelTemplate::Standard => KernelKind::standard(SPATIAL),
            KernelTemplate::GroupConv(m) => KernelKind::group_conv(SPATIAL, m),
            KernelTemplate::Depthwise => KernelKind::depthwise(SPATIAL),
            KernelTemplate::Pointwise => Ok(KernelKind::pointwise()),
            KernelTemplate::PointwiseGroup(n) => Ok(KernelKind::pointwise_group(n)),
        }
    }

    fn is_spatial(self) -> bool {
        matches!(
            self,
            KernelTemplate::Standard | KernelTemplate::GroupConv(_) | KernelTemplate::Depthwise
        )
    }
}

impl fmt::Display for KernelTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelTemplate::Standard => write!(f, "STD"),
            KernelTemplate::GroupConv(m) => write!(f, "GC({m})"),
            KernelTemplate::Depthwise => write!(f, "DW"),
            KernelTemplate::Pointwise => write!(f, "PW"),
            KernelTemplate::PointwiseGroup(n) => write!(f, "PWG({n})"),
        }
    }
}

impl FromStr for KernelTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_uppercase();
        let (head, arg) = match s.split_once('(') {
            Some((h, rest)) => {
                let inner = rest.strip_suffix(')').ok_or_else(|| {
                    Error::InvalidKernel(format!("unbalanced parentheses in {s:?}"))
                })?;
                let g = inner
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidKernel(format!("bad group number in {s:?}")))?;
                (h.trim().to_string(), Some(g))
            }
            None => (s.clone(), None),
        };
        match (head.as_str(), arg) {
            ("STD" | "STANDARD", None) => Ok(KernelTemplate::Standard),
            ("DW", None) => Ok(KernelTemplate::Depthwise),
            ("PW", None) => Ok(KernelTemplate::Pointwise),
            ("GC", Some(m)) => Ok(KernelTemplate::GroupConv(m)),
            ("PWG", Some(n)) => Ok(KernelTemplate::PointwiseGroup(n)),
            _ => Err(Error::InvalidKernel(format!(
                "cannot read {s:?}; expected STD, DW, PW, GC(m) or PWG(n)"
            ))),
        }
    }
}

/// The layers of one block, with an optional bottleneck ratio
/// (output width over intermediate width).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockTemplate {
    pub name: String,
    pub layers: Vec<KernelTemplate>,
    pub bottleneck_ratio: Option<u32>,
}

impl BlockTemplate {
    pub fn new(name: impl Into<String>, layers: Vec<KernelTemplate>, bottleneck_ratio: Option<u32>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("block has no layers".into()));
        }
        if bottleneck_ratio == Some(0) {
            return Err(Error::InvalidArgument("bottleneck ratio must be positive".into()));
        }
        Ok(BlockTemplate {
            name: name.into(),
            layers,
            bottleneck_ratio,
        })
    }

    pub fn standard() -> Self {
        BlockTemplate::new("STD", vec![KernelTemplate::Standard], None).expect("static template")
    }

    /// One of the four families; bottleneck families use ratio 4.
    pub fn family(family: Family, groups: Option<(u32, u32)>) -> Result<Self> {
        use KernelTemplate::*;
        let g = || {
            groups.ok_or_else(|| {
                Error::InvalidArgument(format!("{} needs group numbers (M, N)", family.name()))
            })
        };
        let (layers, ratio) = match family {
            Family::DwPw => (vec![Depthwise, Pointwise], None),
            Family::GcPwg => {
                let (m, n) = g()?;
                (vec![GroupConv(m), PointwiseGroup(n)], None)
            }
            Family::PwDwPw => (vec![Pointwise, Depthwise, Pointwise], Some(4)),
            Family::PwgDwPwg => {
                let (m, n) = g()?;
                (vec![PointwiseGroup(m), Depthwise, PointwiseGroup(n)], Some(4))
            }
        };
        let mut t = BlockTemplate::new(family.name(), layers, ratio)?;
        t.name = t.describe();
        Ok(t)
    }

    /// PW, 3x3 standard, PW with ratio 4.
    pub fn resnet_bottleneck() -> Self {
        use KernelTemplate::*;
        BlockTemplate::new("ResNet-bottleneck", vec![Pointwise, Standard, Pointwise], Some(4))
            .expect("static template")
    }

    /// Cardinality 16, ratio 2.
    pub fn resnext() -> Self {
        use KernelTemplate::*;
        BlockTemplate::new("ResNeXt", vec![Pointwise, GroupConv(16), Pointwise], Some(2))
            .expect("static template")
    }

    pub fn xception() -> Self {
        use KernelTemplate::*;
        BlockTemplate::new("Xception", vec![Depthwise, Pointwise], None).expect("static template")
    }

    /// Four groups, ratio 4.
    pub fn shufflenet() -> Self {
        use KernelTemplate::*;
        BlockTemplate::new(
            "ShuffleNet",
            vec![PointwiseGroup(4), Depthwise, PointwiseGroup(4)],
            Some(4),
        )
        .expect("static template")
    }

    /// `"PWG(100)+DW+PWG(2)"` style description.
    pub fn parse(spec: &str, bottleneck_ratio: Option<u32>) -> Result<Self> {
        let layers = spec
            .split('+')
            .map(str::parse)
            .collect::<Result<Vec<KernelTemplate>>>()?;
        let mut t = BlockTemplate::new(String::new(), layers, bottleneck_ratio)?;
        t.name = t.describe();
        Ok(t)
    }

    pub fn describe(&self) -> String {
        let body = self
            .layers
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("+");
        match self.bottleneck_ratio {
            Some(r) => format!("{body} (1:{r})"),
            None => body,
        }
    }

    /// Per-layer `(in, out)` widths for a block from `c_in` to `c_out`.
    fn widths(&self, c_in: u32, c_out: u32) -> Result<Vec<(u32, u32)>> {
        let n = self.layers.len();
        match self.bottleneck_ratio {
            Some(r) => {
                if n < 2 {
                    return Err(Error::Infeasible("a bottleneck block needs two layers".into()));
                }
                if !c_out.is_multiple_of(r) {
                    return Err(Error::Infeasible(format!(
                        "bottleneck width {c_out}/{r} is not integral"
                    )));
                }
                let k = c_out / r;
                Ok((0..n)
                    .map(|j| (if j == 0 { c_in } else { k }, if j == n - 1 { c_out } else { k }))
                    .collect())
            }
            None => {
                let p = self
                    .layers
                    .iter()
                    .rposition(|l| *l != KernelTemplate::Depthwise)
                    .unwrap_or(0);
                Ok((0..n)
                    .map(|j| (if j <= p { c_in } else { c_out }, if j < p { c_in } else { c_out }))
                    .collect())
            }
        }
    }

    /// Concrete layers from `c_in` to `c_out`.
    pub fn instantiate(&self, c_in: u32, c_out: u32) -> Result<Vec<LayerSpec>> {
        self.widths(c_in, c_out)?
            .into_iter()
            .zip(&self.layers)
            .enumerate()
            .map(|(i, ((a, b), t))| {
                LayerSpec::new(t.kind()?, a, b)
                    .map_err(|e| context(format!("layer {} ({t}) at {a} -> {b}", i + 1), e))
            })
            .collect()
    }

    /// Real-valued parameter count ignoring divisibility.
    fn relaxed_params(&self, c_in: f64, c_out: f64) -> f64 {
        let n = self.layers.len();
        let widths: Vec<(f64, f64)> = match self.bottleneck_ratio {
            Some(r) => {
                let k = c_out / f64::from(r);
                (0..n)
                    .map(|j| (if j == 0 { c_in } else { k }, if j == n - 1 { c_out } else { k }))
                    .collect()
            }
            None => {
                let p = self
                    .layers
                    .iter()
                    .rposition(|l| *l != KernelTemplate::Depthwise)
                    .unwrap_or(0);
                (0..n)
                    .map(|j| (if j <= p { c_in } else { c_out }, if j < p { c_in } else { c_out }))
                    .collect()
            }
        };
        self.layers
            .iter()
            .zip(widths)
            .map(|(t, (a, b))| match t {
                KernelTemplate::Standard => 9.0 * a * b,
                KernelTemplate::GroupConv(m) => 9.0 * a * b / f64::from(*m),
                KernelTemplate::Depthwise => 9.0 * a,
                KernelTemplate::Pointwise => a * b,
                KernelTemplate::PointwiseGroup(g) => a * b / f64::from(*g),
            })
            .sum()
    }
}

impl fmt::Display for BlockTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Counting conventions the reference layout leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conventions {
    /// 1x1 stride-2 projection shortcut where a block changes width.
    pub projection_shortcuts: bool,
    /// Final 1000-way classifier weights.
    pub fully_connected: bool,
    /// Batch-norm scale and shift after every convolution, plus the
    /// classifier bias.
    pub norms_and_biases: bool,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            projection_shortcuts: true,
            fully_connected: true,
            norms_and_biases: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub blocks_per_stage: u32,
    pub stages: u32,
    pub image_size: u32,
    pub classes: u32,
    pub conventions: Conventions,
}

impl Default for NetworkLayout {
    fn default() -> Self {
        NetworkLayout {
            blocks_per_stage: 8,
            stages: 4,
            image_size: 224,
            classes: 1000,
            conventions: Conventions::default(),
        }
    }
}

impl NetworkLayout {
    pub fn with_blocks(blocks_per_stage: u32) -> Self {
        NetworkLayout {
            blocks_per_stage,
            ..NetworkLayout::default()
        }
    }

    /// Four blocks per stage, no projection shortcuts, no classifier: the
    /// convention set used when comparing totals with the published table
    /// rows. See the README for how it was chosen.
    pub fn table_preset() -> Self {
        NetworkLayout {
            blocks_per_stage: 4,
            conventions: Conventions {
                projection_shortcuts: false,
                fully_connected: false,
                norms_and_biases: false,
            },
            ..NetworkLayout::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.blocks_per_stage == 0 || self.stages == 0 {
            return Err(Error::InvalidArgument("layout needs at least one stage and one block".into()));
        }
        if self.stages > 16 {
            return Err(Error::InvalidArgument("at most 16 stages".into()));
        }
        if self.image_size < 4 {
            return Err(Error::InvalidArgument("image too small for the stem".into()));
        }
        Ok(())
    }

    /// Spatial size after stem and pool.
    fn stage_resolution(&self, stage: u32) -> u32 {
        ((self.image_size / 4) >> stage).max(1)
    }
}

/// Counted layers: stem, every block layer, classifier.
pub fn depth_of(layout: &NetworkLayout, template: &BlockTemplate) -> u32 {
    1 + layout.stages * layout.blocks_per_stage * template.layers.len() as u32 + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: u32,
    pub in_width: u32,
    pub width: u32,
    pub resolution: u32,
    pub blocks: u32,
    pub block_params: u64,
    pub projection_params: u64,
    pub norm_params: u64,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizingReport {
    pub block: String,
    pub width: u32,
    pub layout: NetworkLayout,
    pub stem_params: u64,
    pub stages: Vec<StageReport>,
    pub head_params: u64,
    pub total_params: u64,
    pub total_macs: u64,
    pub depth: u32,
}

fn norm(layout: &NetworkLayout, channels: u32) -> u64 {
    if layout.conventions.norms_and_biases {
        2 * u64::from(channels)
    } else {
        0
    }
}

/// Parameters and MACs of the whole network at stage-1 width `width`.
pub fn model_params(layout: &NetworkLayout, template: &BlockTemplate, width: u32) -> Result<SizingReport> {
    layout.validate()?;
    if width == 0 {
        return Err(Error::ZeroChannels);
    }
    let top = u64::from(width) << (layout.stages - 1);
    if top > u64::from(u32::MAX) {
        return Err(Error::InvalidArgument(format!("width {width} overflows the last stage")));
    }
    let stem = LayerSpec::new(KernelKind::standard(SPATIAL)?, 3, width)?;
    let stem_res = layout.image_size / 2;
    let stem_params = stem.param_count() + norm(layout, width);
    let mut total_macs = stem.flop_count((stem_res, stem_res));
    let mut stages = Vec::new();
    let mut prev = width;
    for s in 0..layout.stages {
        let w = width << s;
        let res = layout.stage_resolution(s);
        let mut st = StageReport {
            stage: s + 1,
            in_width: prev,
            width: w,
            resolution: res,
            blocks: layout.blocks_per_stage,
            block_params: 0,
            projection_params: 0,
            norm_params: 0,
            params: 0,
            macs: 0,
        };
        for b in 0..layout.blocks_per_stage {
            let c_in = if b == 0 { prev } else { w };
            let in_res = if b == 0 && s > 0 { layout.stage_resolution(s - 1) } else { res };
            let layers = template
                .instantiate(c_in, w)
                .map_err(|e| context(format!("stage {} block {}", s + 1, b + 1), e))?;
            let stride_at = template
                .layers
                .iter()
                .position(|l| l.is_spatial())
                .unwrap_or(0);
            for (i, l) in layers.iter().enumerate() {
                st.block_params += l.param_count();
                st.norm_params += norm(layout, l.out_channels());
                let r = if i < stride_at { in_res } else { res };
                st.macs += l.flop_count((r, r));
            }
            if c_in != w && layout.conventions.projection_shortcuts {
                let proj = u64::from(c_in) * u64::from(w);
                st.projection_params += proj;
                st.norm_params += norm(layout, w);
                st.macs += proj * u64::from(res) * u64::from(res);
            }
        }
        st.params = st.block_params + st.projection_params + st.norm_params;
        total_macs += st.macs;
        stages.push(st);
        prev = w;
    }
    let head_params = if layout.conventions.fully_connected {
        let fc = u64::from(prev) * u64::from(layout.classes);
        total_macs += fc;
        fc + if layout.conventions.norms_and_biases { u64::from(layout.classes) } else { 0 }
    } else {
        0
    };
    let total_params = stem_params + stages.iter().map(|s| s.params).sum::<u64>() + head_params;
    Ok(SizingReport {
        block: template.name.clone(),
        width,
        layout: *layout,
        stem_params,
        stages,
        head_params,
        total_params,
        total_macs,
        depth: depth_of(layout, template),
    })
}

fn relaxed_total(layout: &NetworkLayout, template: &BlockTemplate, width: f64) -> f64 {
    let mut total = 27.0 * width;
    let mut prev = width;
    for s in 0..layout.stages {
        let w = width * f64::from(1u32 << s);
        for b in 0..layout.blocks_per_stage {
            let c_in = if b == 0 { prev } else { w };
            total += template.relaxed_params(c_in, w);
            if c_in != w && layout.conventions.projection_shortcuts {
                total += c_in * w;
            }
        }
        prev = w;
    }
    if layout.conventions.fully_connected {
        total += prev * f64::from(layout.classes);
    }
    total
}

/// Largest stage-1 width whose network fits in `budget` parameters.
///
/// The divisibility-free count bounds the answer from above (norms and
/// biases only add); the exact count then scans down from there.
pub fn solve_width(budget: u64, template: &BlockTemplate, layout: &NetworkLayout) -> Result<SizingReport> {
    layout.validate()?;
    let p = budget as f64;
    let max_width = u32::MAX >> (layout.stages - 1);
    let (mut lo, mut hi) = (0u32, 1u32);
    while hi < max_width && relaxed_total(layout, template, f64::from(hi)) <= p {
        lo = hi;
        hi = hi.saturating_mul(2).min(max_width);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if relaxed_total(layout, template, f64::from(mid)) <= p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let start = lo.saturating_add(2).min(max_width);
    for w in (1..=start).rev() {
        if let Ok(r) = model_params(layout, template, w) {
            if r.total_params <= budget {
                return Ok(r);
            }
        }
    }
    let minimum = (1..=4096)
        .find_map(|w| model_params(layout, template, w).ok().map(|r| r.total_params))
        .unwrap_or(u64::MAX);
    Err(Error::UnderBudget { budget, minimum })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depths() {
        let l8 = NetworkLayout::with_blocks(8);
        let l16 = NetworkLayout::with_blocks(16);
        let three = BlockTemplate::family(Family::PwDwPw, None).unwrap();
        let two = BlockTemplate::family(Family::DwPw, None).unwrap();
        assert_eq!(depth_of(&l8, &three), 98);
        assert_eq!(depth_of(&l16, &three), 194);
        assert_eq!(depth_of(&l8, &two), 66);
    }

    #[test]
    fn width_one_by_hand() {
        // DW+PW at w = 1, B = 1: stage widths 1, 2, 4, 8.
        let layout = NetworkLayout::with_blocks(1);
        let t = BlockTemplate::family(Family::DwPw, None).unwrap();
        let r = model_params(&layout, &t, 1).unwrap();
        let stem = 27;
        let s1 = 9 + 1;
        let s2 = 9 + 2 + 2; // DW(1) + PW(1->2) + projection 1*2
        let s3 = 2 * 9 + 2 * 4 + 2 * 4;
        let s4 = 4 * 9 + 4 * 8 + 4 * 8;
        let fc = 8 * 1000;
        assert_eq!(r.total_params, stem + s1 + s2 + s3 + s4 + fc);
        assert_eq!(r.stages.iter().map(|s| s.params).sum::<u64>() + r.stem_params + r.head_params, r.total_params);
    }

    #[test]
    fn norms_add_two_per_channel() {
        let mut layout = NetworkLayout::with_blocks(1);
        let t = BlockTemplate::standard();
        let base = model_params(&layout, &t, 4).unwrap().total_params;
        layout.conventions.norms_and_biases = true;
        let with = model_params(&layout, &t, 4).unwrap().total_params;
        // stem 4, blocks 4+8+16+32, projections 8+16+32, classifier bias 1000
        assert_eq!(with - base, 2 * (4 + 4 + 8 + 16 + 32 + 8 + 16 + 32) + 1000);
    }

    #[test]
    fn divisibility_error_names_stage() {
        let t = BlockTemplate::family(Family::GcPwg, Some((4, 4))).unwrap();
        let e = model_params(&NetworkLayout::default(), &t, 63).unwrap_err();
        assert!(e.to_string().contains("stage 1 block 1"), "{e}");
    }

    #[test]
    fn template_parsing() {
        let t = BlockTemplate::parse("pwg(100)+dw+PWG(2)", Some(4)).unwrap();
        assert_eq!(t.layers, vec![KernelTemplate::PointwiseGroup(100), KernelTemplate::Depthwise, KernelTemplate::PointwiseGroup(2)]);
        assert_eq!(t.describe(), "PWG(100)+DW+PWG(2) (1:4)");
        assert!(BlockTemplate::parse("GC+PW", None).is_err());
        assert!(BlockTemplate::parse("XX", None).is_err());
    }

    #[test]
    fn solver_matches_exact_count() {
        let layout = NetworkLayout::default();
        let t = BlockTemplate::family(Family::DwPw, None).unwrap();
        let r = model_params(&layout, &t, 100).unwrap();
        let s = solve_width(r.total_params, &t, &layout).unwrap();
        assert_eq!(s.width, 100);
        let s = solve_width(r.total_params - 1, &t, &layout).unwrap();
        assert_eq!(s.width, 99);
    }

    #[test]
    fn solver_under_budget() {
        let t = BlockTemplate::standard();
        assert!(matches!(
            solve_width(10, &t, &NetworkLayout::default()),
            Err(Error::UnderBudget { .. })
        ));
    }

    #[test]
    fn stride_moves_macs_not_params() {
        let layout = NetworkLayout::with_blocks(1);
        let t = BlockTemplate::family(Family::PwDwPw, None).unwrap();
        let r = model_params(&layout, &t, 8).unwrap();
        // stage 2 first block: PW 8->4 at 56, DW 4 at 28, PW 4->16 at 28, projection 8*16 at 28
        let s2 = &r.stages[1];
        assert_eq!(s2.macs, 32 * 56 * 56 + 36 * 28 * 28 + 64 * 28 * 28 + 128 * 28 * 28);
    }
}
