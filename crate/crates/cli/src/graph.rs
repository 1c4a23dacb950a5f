//! Graphviz rendering of a design at one spatial position.
//!
//! One node per (tensor, channel). Edge colours: green for a spatial kernel
//! reading its own channel, blue for a pointwise kernel mixing channels,
//! both for a spatial kernel mixing channels. Channel shuffles appear as an
//! extra column of grey nodes.

use std::fmt::Write;

use skdesign::kernels::{KernelKind, LayerSpec};
use skdesign::oracles::{channel_orders, read_channels, PermutationStrategy};

fn edge_color(kind: &KernelKind) -> &'static str {
    match kind {
        KernelKind::Depthwise { .. } => "green",
        KernelKind::Pointwise | KernelKind::PointwiseGroup { .. } => "blue",
        KernelKind::Standard { .. } | KernelKind::GroupConv { .. } => "green:blue",
    }
}

fn column(out: &mut String, id: &str, label: &str, channels: u32, shape: &str) {
    let _ = writeln!(out, "  subgraph cluster_{id} {{");
    let _ = writeln!(out, "    label=\"{label}\";");
    let _ = writeln!(out, "    rank=same;");
    for c in 0..channels {
        let _ = writeln!(out, "    {id}_{c} [label=\"{c}\", shape={shape}];");
    }
    let _ = writeln!(out, "  }}");
}

pub fn to_dot(name: &str, design: &[LayerSpec], strategy: PermutationStrategy) -> String {
    let orders = channel_orders(design, strategy);
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{name}\" {{");
    let _ = writeln!(out, "  rankdir=LR;");
    let _ = writeln!(out, "  node [fontsize=10, width=0.3, height=0.3];");
    let first = design.first().map_or(0, LayerSpec::in_channels);
    column(&mut out, "t0", "input", first, "circle");
    for (i, (layer, order)) in design.iter().zip(&orders).enumerate() {
        let src = format!("t{i}");
        let dst = format!("t{}", i + 1);
        let shuffled = order.iter().enumerate().any(|(j, p)| *p as usize != j);
        let reads = if shuffled {
            let sh = format!("s{}", i + 1);
            column(&mut out, &sh, "shuffle", layer.in_channels(), "point");
            for (j, p) in order.iter().enumerate() {
                let _ = writeln!(out, "  {src}_{p} -> {sh}_{j} [color=gray, style=dashed];");
            }
            sh
        } else {
            src
        };
        column(&mut out, &dst, &layer.to_string(), layer.out_channels(), "circle");
        let color = edge_color(&layer.kind());
        for f in 0..layer.out_channels() {
            for j in read_channels(layer, f) {
                let _ = writeln!(out, "  {reads}_{j} -> {dst}_{f} [color=\"{color}\"];");
            }
        }
    }
    out.push_str("}\n");
    out
}
