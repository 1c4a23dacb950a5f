use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::space::Symbol;
use super::DesignFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KnownArchitecture {
    MobileNet,
    Xception,
    #[serde(rename = "ResNeXt-extreme")]
    ResNeXtExtreme,
    ShuffleNet,
}

impl KnownArchitecture {
    pub fn name(self) -> &'static str {
        match self {
            KnownArchitecture::MobileNet => "MobileNet",
            KnownArchitecture::Xception => "Xception",
            KnownArchitecture::ResNeXtExtreme => "ResNeXt-extreme",
            KnownArchitecture::ShuffleNet => "ShuffleNet",
        }
    }
}

/// Known architectures that `family` reduces to under the group numbers in
/// `groups` (aligned with the canonical sequence).
///
/// Group convolution with `M = C` followed by a dense pointwise (`N = 1`) is
/// the depthwise separable block, so it is recognised even though those group
/// numbers sit outside the search ranges.
pub fn identify_known(
    family: &DesignFamily,
    groups: &[Option<u32>],
    in_channels: u32,
) -> BTreeSet<KnownArchitecture> {
    identify_sequence(&family.canonical_sequence, family.bottleneck, groups, in_channels)
}

/// [`identify_known`] for a bare sequence.
pub fn identify_sequence(
    sequence: &[Symbol],
    bottleneck: bool,
    groups: &[Option<u32>],
    in_channels: u32,
) -> BTreeSet<KnownArchitecture> {
    use KnownArchitecture::*;
    use Symbol::*;
    let mut out = BTreeSet::new();
    match sequence {
        [Dw, Pw] => {
            out.extend([MobileNet, Xception]);
        }
        [Gc, Pwg] if groups == [Some(in_channels), Some(1)] => {
            out.extend([MobileNet, Xception]);
        }
        [Pw, Dw, Pw] if bottleneck => {
            out.insert(ResNeXtExtreme);
        }
        [Pwg, Dw, Pwg] if groups.len() == 3 && groups[0].is_some() && groups[0] == groups[2] => {
            out.insert(ShuffleNet);
        }
        _ => {}
    }
    out
}
