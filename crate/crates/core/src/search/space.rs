use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infofield::{classify, FieldVerdict, InfoField, PlanKind};
use crate::kernels::{KernelKind, KernelSize, LayerSpec};

use super::SearchConfig;

/// The four sparse kernel kinds the search composes.
///
/// The derived order is the tie-break precedence: spatial kinds first, then
/// lexical.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Symbol {
    #[serde(rename = "GC")]
    Gc,
    #[serde(rename = "DW")]
    Dw,
    #[serde(rename = "PW")]
    Pw,
    #[serde(rename = "PWG")]
    Pwg,
}

impl Symbol {
    pub const ALL: [Symbol; 4] = [Symbol::Gc, Symbol::Dw, Symbol::Pw, Symbol::Pwg];

    pub fn as_str(self) -> &'static str {
        match self {
            Symbol::Gc => "GC",
            Symbol::Dw => "DW",
            Symbol::Pw => "PW",
            Symbol::Pwg => "PWG",
        }
    }

    pub fn takes_groups(self) -> bool {
        matches!(self, Symbol::Gc | Symbol::Pwg)
    }

    /// The concrete kernel for this symbol. `groups` is ignored for kinds
    /// that have none.
    pub fn kernel(self, k: u32, groups: Option<u32>) -> Result<KernelKind> {
        let need = || {
            Error::InvalidArgument(format!("{} needs a group number", self.as_str()))
        };
        match self {
            Symbol::Gc => KernelKind::group_conv(k, groups.ok_or_else(need)?),
            Symbol::Dw => KernelKind::depthwise(k),
            Symbol::Pw => Ok(KernelKind::pointwise()),
            Symbol::Pwg => Ok(KernelKind::pointwise_group(groups.ok_or_else(need)?)),
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "GC" => Ok(Symbol::Gc),
            "DW" => Ok(Symbol::Dw),
            "PW" => Ok(Symbol::Pw),
            "PWG" => Ok(Symbol::Pwg),
            other => Err(Error::InvalidKernel(format!("unknown kernel symbol {other:?}"))),
        }
    }
}

/// Parses `"GC+PWG"` style sequences.
pub fn parse_sequence(s: &str) -> Result<Vec<Symbol>> {
    let seq = s
        .split('+')
        .map(str::parse)
        .collect::<Result<Vec<Symbol>>>()?;
    if seq.is_empty() {
        return Err(Error::InvalidArgument("empty kernel sequence".into()));
    }
    Ok(seq)
}

pub fn sequence_name(seq: &[Symbol]) -> String {
    seq.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+")
}

/// True when the whole sequence is a strict prefix tiled two or more times.
pub fn is_repeated<T: PartialEq>(seq: &[T]) -> bool {
    let n = seq.len();
    (1..n)
        .filter(|d| n.is_multiple_of(*d))
        .any(|d| seq.chunks(d).all(|c| c == &seq[..d]))
}

/// Every sequence of length `1..=max_length`, shortest first, each length in
/// lexical order of [`Symbol`].
pub fn all_sequences(max_length: usize) -> impl Iterator<Item = Vec<Symbol>> {
    (1..=max_length).flat_map(|len| {
        (0..4usize.pow(len as u32)).map(move |mut code| {
            let mut seq = vec![Symbol::Gc; len];
            for slot in seq.iter_mut().rev() {
                *slot = Symbol::ALL[code % 4];
                code /= 4;
            }
            seq
        })
    })
}

pub fn raw_sequence_count(max_length: usize) -> u64 {
    (1..=max_length as u32).map(|l| 4u64.pow(l)).sum()
}

/// [`all_sequences`] without repeated patterns.
pub fn enumerate_sequences(config: &SearchConfig) -> impl Iterator<Item = Vec<Symbol>> {
    all_sequences(config.max_length).filter(|s| !is_repeated(s))
}

/// Per-layer `(in, out)` channels, or `None` when the plan is not legal for
/// the sequence.
///
/// A plain plan keeps `C` up to the last kernel that can change channels and
/// switches to `F` there. A bottleneck plan reduces to `F / ratio` in the
/// first kernel and restores `F` in the last; it needs at least three
/// kernels and neither end may be depthwise.
pub fn channel_plan(
    seq: &[Symbol],
    c: u32,
    f: u32,
    plan: PlanKind,
    bottleneck_ratio: u32,
) -> Option<Vec<(u32, u32)>> {
    let n = seq.len();
    if n == 0 {
        return None;
    }
    match plan {
        PlanKind::Plain => {
            let switch = seq.iter().rposition(|s| *s != Symbol::Dw);
            match switch {
                None if c != f => None,
                _ => {
                    let p = switch.unwrap_or(0);
                    Some(
                        (0..n)
                            .map(|j| {
                                let w_in = if j <= p { c } else { f };
                                let w_out = if j < p { c } else { f };
                                (w_in, w_out)
                            })
                            .collect(),
                    )
                }
            }
        }
        PlanKind::Bottleneck => {
            if n < 3
                || seq[0] == Symbol::Dw
                || seq[n - 1] == Symbol::Dw
                || bottleneck_ratio == 0
                || !f.is_multiple_of(bottleneck_ratio)
            {
                return None;
            }
            let k = f / bottleneck_ratio;
            Some(
                (0..n)
                    .map(|j| {
                        let w_in = if j == 0 { c } else { k };
                        let w_out = if j == n - 1 { f } else { k };
                        (w_in, w_out)
                    })
                    .collect(),
            )
        }
    }
}

/// Legal group numbers for one position.
///
/// Group convolution uses divisors of both channel counts in `2..=C-1`;
/// pointwise group convolution uses divisors `>= 2`. Kinds without groups
/// yield a single `None`, except a depthwise layer asked to change channels,
/// which yields nothing.
pub fn group_options(sym: Symbol, c_in: u32, c_out: u32) -> Vec<Option<u32>> {
    let common = num_integer::gcd(c_in, c_out);
    match sym {
        Symbol::Gc => (2..c_in)
            .filter(|d| common.is_multiple_of(*d))
            .map(Some)
            .collect(),
        Symbol::Pwg => (2..=common)
            .filter(|d| common.is_multiple_of(*d))
            .map(Some)
            .collect(),
        Symbol::Dw if c_in != c_out => Vec::new(),
        Symbol::Dw | Symbol::Pw => vec![None],
    }
}

pub fn build_layers(
    seq: &[Symbol],
    groups: &[Option<u32>],
    widths: &[(u32, u32)],
    k: u32,
) -> Result<Vec<LayerSpec>> {
    if seq.len() != groups.len() || seq.len() != widths.len() {
        return Err(Error::InvalidArgument(
            "sequence, groups and channel plan differ in length".into(),
        ));
    }
    seq.iter()
        .zip(groups)
        .zip(widths)
        .map(|((s, g), (ci, co))| LayerSpec::new(s.kernel(k, *g)?, *ci, *co))
        .collect()
}

/// A fully specified design: sequence, groups and channel plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignCandidate {
    pub sequence: Vec<Symbol>,
    pub groups: Vec<Option<u32>>,
    pub plan: PlanKind,
    pub channel_plan: Vec<(u32, u32)>,
    pub kernel_size: u32,
    pub verdict: FieldVerdict,
}

impl DesignCandidate {
    pub fn is_bottleneck(&self) -> bool {
        self.plan == PlanKind::Bottleneck
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        build_layers(&self.sequence, &self.groups, &self.channel_plan, self.kernel_size)
            .expect("candidate layers were validated on construction")
    }

    pub fn param_count(&self) -> u64 {
        self.layers().iter().map(LayerSpec::param_count).sum()
    }
}

/// Plans that apply to `seq` under `config`, plain first.
pub(crate) fn plans_for(config: &SearchConfig) -> Vec<PlanKind> {
    if config.enable_bottleneck_variants {
        vec![PlanKind::Plain, PlanKind::Bottleneck]
    } else {
        vec![PlanKind::Plain]
    }
}

/// Every legal group assignment for `seq` under the given channel plan.
pub fn group_assignments(seq: &[Symbol], widths: &[(u32, u32)]) -> Vec<Vec<Option<u32>>> {
    let options: Vec<_> = seq
        .iter()
        .zip(widths)
        .map(|(s, (ci, co))| group_options(*s, *ci, *co))
        .collect();
    cartesian(&options)
}

pub(crate) fn cartesian(options: &[Vec<Option<u32>>]) -> Vec<Vec<Option<u32>>> {
    options.iter().fold(vec![Vec::new()], |acc, opts| {
        acc.iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut next = prefix.clone();
                    next.push(*o);
                    next
                })
            })
            .collect()
    })
}

/// Every group assignment and plan for `seq` at the reference channels, each
/// classified without pruning shortcuts.
pub fn concretize(seq: &[Symbol], config: &SearchConfig) -> Vec<DesignCandidate> {
    let (c, f, k) = (config.reference_channels, config.reference_out_channels, config.kernel_size);
    let reference = InfoField::reference(KernelSize::square(k));
    let mut out = Vec::new();
    for plan in plans_for(config) {
        let Some(widths) = channel_plan(seq, c, f, plan, config.bottleneck_ratio) else {
            continue;
        };
        for groups in group_assignments(seq, &widths) {
            let Ok(layers) = build_layers(seq, &groups, &widths, k) else {
                continue;
            };
            let verdict = classify(&layers, c, &reference, plan)
                .expect("channel plan chains by construction");
            out.push(DesignCandidate {
                sequence: seq.to_vec(),
                groups,
                plan,
                channel_plan: widths.clone(),
                kernel_size: k,
                verdict,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Symbol::*;

    #[test]
    fn repeated_patterns() {
        assert!(is_repeated(b"AAAAAA"));
        assert!(is_repeated(b"ABCABC"));
        assert!(!is_repeated(b"ABCAB"));
        assert!(!is_repeated(b"A"));
        assert!(is_repeated(b"ABAB"));
        assert!(!is_repeated(b"ABBA"));
    }

    #[test]
    fn sequence_counts() {
        assert_eq!(all_sequences(6).count(), 5460);
        assert_eq!(raw_sequence_count(6), 5460);
        let one = SearchConfig { max_length: 1, ..SearchConfig::default() };
        assert_eq!(enumerate_sequences(&one).count(), 4);
        let two = SearchConfig { max_length: 2, ..SearchConfig::default() };
        assert_eq!(enumerate_sequences(&two).count(), 4 + 12);
    }

    #[test]
    fn lexical_order() {
        let v: Vec<_> = all_sequences(2).take(6).collect();
        assert_eq!(v[0], vec![Gc]);
        assert_eq!(v[3], vec![Pwg]);
        assert_eq!(v[4], vec![Gc, Gc]);
        assert_eq!(v[5], vec![Gc, Dw]);
    }

    #[test]
    fn parse_and_name_round_trip() {
        let s = parse_sequence("pwg+dw+PWG").unwrap();
        assert_eq!(s, vec![Pwg, Dw, Pwg]);
        assert_eq!(sequence_name(&s), "PWG+DW+PWG");
        assert!(parse_sequence("GC+XX").is_err());
    }

    #[test]
    fn gc_pwg_at_eight_has_six_candidates() {
        let cfg = SearchConfig::with_channels(8, 8);
        let cands = concretize(&[Gc, Pwg], &cfg);
        assert_eq!(cands.len(), 6);
        let mut pairs: Vec<_> = cands.iter().map(|c| (c.groups[0].unwrap(), c.groups[1].unwrap())).collect();
        pairs.sort();
        assert_eq!(pairs, vec![(2, 2), (2, 4), (2, 8), (4, 2), (4, 4), (4, 8)]);
    }

    #[test]
    fn pw_dw_pw_has_plain_and_bottleneck() {
        let cfg = SearchConfig::default();
        let cands = concretize(&[Pw, Dw, Pw], &cfg);
        assert_eq!(cands.len(), 2);
        let b = cands.iter().find(|c| c.is_bottleneck()).unwrap();
        assert_eq!(b.channel_plan, vec![(64, 16), (16, 16), (16, 64)]);
        assert!(b.verdict.is_valid());
    }

    #[test]
    fn dw_dw_single_rejected_candidate() {
        let cands = concretize(&[Dw, Dw], &SearchConfig::default());
        assert_eq!(cands.len(), 1);
        assert!(!cands[0].verdict.is_valid());
    }

    #[test]
    fn plain_plan_switches_at_last_channel_mixer() {
        let w = channel_plan(&[Pw, Dw], 16, 32, PlanKind::Plain, 4).unwrap();
        assert_eq!(w, vec![(16, 32), (32, 32)]);
        let w = channel_plan(&[Dw, Pw], 16, 32, PlanKind::Plain, 4).unwrap();
        assert_eq!(w, vec![(16, 16), (16, 32)]);
        assert!(channel_plan(&[Dw], 16, 32, PlanKind::Plain, 4).is_none());
        assert!(channel_plan(&[Gc, Pwg], 16, 16, PlanKind::Bottleneck, 4).is_none());
        assert!(channel_plan(&[Dw, Pw, Pw], 16, 16, PlanKind::Bottleneck, 4).is_none());
    }

    #[test]
    fn group_option_ranges() {
        assert_eq!(group_options(Gc, 8, 8), vec![Some(2), Some(4)]);
        assert_eq!(group_options(Pwg, 8, 8), vec![Some(2), Some(4), Some(8)]);
        assert_eq!(group_options(Pwg, 8, 12), vec![Some(2), Some(4)]);
        assert!(group_options(Dw, 8, 12).is_empty());
        assert_eq!(group_options(Pw, 8, 12), vec![None]);
    }
}
