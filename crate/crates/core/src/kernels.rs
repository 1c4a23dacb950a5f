//! Convolution kinds and exact per-layer parameter / MAC counting.
//!
//! Counts cover weights only. Biases and batch-norm affine parameters are
//! left to [`crate::sizer`], which owns whole-model conventions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial extent of a kernel (`x` by `y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KernelSize {
    pub x: u32,
    pub y: u32,
}

impl KernelSize {
    pub const UNIT: KernelSize = KernelSize { x: 1, y: 1 };

    pub const fn square(k: u32) -> Self {
        KernelSize { x: k, y: k }
    }

    pub const fn area(self) -> u64 {
        self.x as u64 * self.y as u64
    }
}

impl Default for KernelSize {
    fn default() -> Self {
        KernelSize::square(3)
    }
}

/// The five convolution kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Standard { size: KernelSize },
    GroupConv { size: KernelSize, groups: u32 },
    Depthwise { size: KernelSize },
    Pointwise,
    PointwiseGroup { groups: u32 },
}

impl KernelKind {
    pub fn standard(k: u32) -> Result<Self> {
        Ok(KernelKind::Standard {
            size: checked_size(k, 1)?,
        })
    }

    pub fn group_conv(k: u32, groups: u32) -> Result<Self> {
        Ok(KernelKind::GroupConv {
            size: checked_size(k, 1)?,
            groups,
        })
    }

    /// Depthwise with `k = 1` is a per-channel scale, not a sparse kernel.
    pub fn depthwise(k: u32) -> Result<Self> {
        Ok(KernelKind::Depthwise {
            size: checked_size(k, 2)?,
        })
    }

    pub const fn pointwise() -> Self {
        KernelKind::Pointwise
    }

    pub const fn pointwise_group(groups: u32) -> Self {
        KernelKind::PointwiseGroup { groups }
    }

    pub fn size(&self) -> KernelSize {
        match *self {
            KernelKind::Standard { size }
            | KernelKind::GroupConv { size, .. }
            | KernelKind::Depthwise { size } => size,
            KernelKind::Pointwise | KernelKind::PointwiseGroup { .. } => KernelSize::UNIT,
        }
    }

    /// Group number, if the kind carries one.
    pub fn groups(&self) -> Option<u32> {
        match *self {
            KernelKind::GroupConv { groups, .. } | KernelKind::PointwiseGroup { groups } => {
                Some(groups)
            }
            _ => None,
        }
    }

    pub fn is_spatial(&self) -> bool {
        self.size() != KernelSize::UNIT
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            KernelKind::Standard { .. } => "STD",
            KernelKind::GroupConv { .. } => "GC",
            KernelKind::Depthwise { .. } => "DW",
            KernelKind::Pointwise => "PW",
            KernelKind::PointwiseGroup { .. } => "PWG",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.groups() {
            Some(g) => write!(f, "{}({g})", self.symbol()),
            None => f.write_str(self.symbol()),
        }
    }
}

fn checked_size(k: u32, min: u32) -> Result<KernelSize> {
    if k < min {
        return Err(Error::InvalidKernel(format!(
            "spatial size {k} is below the minimum {min}"
        )));
    }
    Ok(KernelSize::square(k))
}

/// One layer: a kernel kind applied to `in_channels -> out_channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    kind: KernelKind,
    in_channels: u32,
    out_channels: u32,
}

impl LayerSpec {
    /// Validates channel and group constraints.
    ///
    /// Group ranges exclude the degenerate extremes so the kinds stay
    /// distinct: `GroupConv` needs `2 <= M <= C-1`, `PointwiseGroup` needs
    /// `N >= 2`; both need `groups | C` and `groups | F`.
    pub fn new(kind: KernelKind, in_channels: u32, out_channels: u32) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::ZeroChannels);
        }
        let bad = |groups: u32, reason: &'static str| Error::InvalidGroups {
            kind: kind.symbol(),
            groups,
            in_channels,
            out_channels,
            reason,
        };
        match kind {
            KernelKind::Standard { size } => check_dims(size)?,
            KernelKind::GroupConv { size, groups } => {
                check_dims(size)?;
                if groups < 2 {
                    return Err(bad(groups, "group convolution needs at least 2 groups"));
                }
                if groups >= in_channels {
                    return Err(bad(groups, "group convolution needs fewer groups than input channels"));
                }
                check_divides(groups, in_channels, out_channels).map_err(|r| bad(groups, r))?;
            }
            KernelKind::Depthwise { size } => {
                check_dims(size)?;
                if size.x < 2 && size.y < 2 {
                    return Err(Error::InvalidKernel("depthwise kernel must be spatial".into()));
                }
                if in_channels != out_channels {
                    return Err(Error::DepthwiseChannelChange {
                        in_channels,
                        out_channels,
                    });
                }
            }
            KernelKind::Pointwise => {}
            KernelKind::PointwiseGroup { groups } => {
                if groups < 2 {
                    return Err(bad(groups, "pointwise group convolution needs at least 2 groups"));
                }
                check_divides(groups, in_channels, out_channels).map_err(|r| bad(groups, r))?;
            }
        }
        Ok(LayerSpec {
            kind,
            in_channels,
            out_channels,
        })
    }

    /// Skips the group-range checks. Only divisibility is kept so that the
    /// counting formulas stay exact; used to probe the degenerate extremes.
    #[doc(hidden)]
    pub fn relaxed(kind: KernelKind, in_channels: u32, out_channels: u32) -> Result<Self> {
        if let Some(g) = kind.groups() {
            if g == 0 || !in_channels.is_multiple_of(g) || !out_channels.is_multiple_of(g) {
                return Err(Error::InvalidKernel(format!(
                    "relaxed layer still needs {g} | {in_channels} and {g} | {out_channels}"
                )));
            }
        }
        Ok(LayerSpec {
            kind,
            in_channels,
            out_channels,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn in_channels(&self) -> u32 {
        self.in_channels
    }

    pub fn out_channels(&self) -> u32 {
        self.out_channels
    }

    pub fn changes_channels(&self) -> bool {
        self.in_channels != self.out_channels
    }

    /// Number of input channels each output channel reads.
    pub fn fan_in_channels(&self) -> u32 {
        match self.kind {
            KernelKind::Standard { .. } | KernelKind::Pointwise => self.in_channels,
            KernelKind::GroupConv { groups, .. } | KernelKind::PointwiseGroup { groups } => {
                self.in_channels / groups
            }
            KernelKind::Depthwise { .. } => 1,
        }
    }

    /// Exact weight count (no bias).
    pub fn param_count(&self) -> u64 {
        let area = self.kind.size().area();
        let c = u64::from(self.in_channels);
        let f = u64::from(self.out_channels);
        match self.kind {
            KernelKind::Depthwise { .. } => area * c,
            _ => area * u64::from(self.fan_in_channels()) * f,
        }
    }

    /// Multiply-accumulates for an output map of `out_spatial` positions.
    pub fn flop_count(&self, out_spatial: (u32, u32)) -> u64 {
        self.param_count() * u64::from(out_spatial.0) * u64::from(out_spatial.1)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}->{}]", self.kind, self.in_channels, self.out_channels)
    }
}

fn check_dims(size: KernelSize) -> Result<()> {
    if size.x == 0 || size.y == 0 {
        return Err(Error::InvalidKernel("kernel dimensions must be positive".into()));
    }
    Ok(())
}

fn check_divides(groups: u32, c: u32, f: u32) -> std::result::Result<(), &'static str> {
    if !c.is_multiple_of(groups) {
        return Err("groups must divide the input channels");
    }
    if !f.is_multiple_of(groups) {
        return Err("groups must divide the output channels");
    }
    Ok(())
}

/// Input/output shape of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    channels: u32,
    height: u32,
    width: u32,
}

impl TensorShape {
    pub fn new(channels: u32, height: u32, width: u32) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor shape {channels}x{height}x{width} has a zero extent"
            )));
        }
        Ok(TensorShape {
            channels,
            height,
            width,
        })
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }
}

/// Total weights of a sequence of layers.
pub fn total_params(layers: &[LayerSpec]) -> u64 {
    layers.iter().map(LayerSpec::param_count).sum()
}
