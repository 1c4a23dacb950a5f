use std::fmt;

use num_rational::Ratio;
use serde_json::{json, Value};
use skdesign::efficiency::{self, Family};
use skdesign::oracles::{self, PermutationStrategy, MAX_ORACLE_CHANNELS};
use skdesign::search::{identify_known, identify_sequence, parse_sequence, SearchConfig};
use skdesign::sizer::{self, BlockTemplate, Conventions, NetworkLayout, SizingReport};
use skdesign::{KernelKind, LayerSpec, Symbol};

use crate::report::{millions, pairs, sig6, table, verdict_word, Exact, Format, ReportDocument, SCHEMA_VERSION};
use crate::{AnalyzeArgs, BlockArgs, GraphArgs, LayoutArgs, SearchArgs, SizeArgs, StrategyArg, VerifyArgs, WidthArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(skdesign::Error),
    /// An oracle found a counterexample; carries the rendered report.
    Disagreement(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Disagreement(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Validation(e) => write!(f, "{e}"),
            CliError::Disagreement(m) => write!(f, "{m}"),
        }
    }
}

impl From<skdesign::Error> for CliError {
    fn from(e: skdesign::Error) -> Self {
        CliError::Validation(e)
    }
}

pub struct Output {
    config: Value,
    results: Value,
    audit: Option<Value>,
    table: String,
    passed: bool,
}

impl Output {
    fn new(config: Value, results: Value, table: String) -> Self {
        Output {
            config,
            results,
            audit: None,
            table,
            passed: true,
        }
    }

    pub fn render(self, format: Format, argv: Vec<String>) -> Result<String, CliError> {
        let text = match format {
            Format::Json => {
                let doc = ReportDocument {
                    schema_version: SCHEMA_VERSION,
                    command: argv,
                    config: self.config,
                    results: self.results,
                    audit: self.audit,
                };
                serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
            }
            Format::Table => {
                let mut t = self.table;
                if !t.ends_with('\n') {
                    t.push('\n');
                }
                t
            }
        };
        if self.passed {
            Ok(text)
        } else {
            Err(CliError::Disagreement(text))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn parse_list(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u32>()
                .ok()
                .filter(|&g| g > 0)
                .ok_or_else(|| CliError::Usage(format!("bad group number {p:?} in {s:?}")))
        })
        .collect()
}

fn parse_pair(s: &str) -> Result<(u32, u32), CliError> {
    match parse_list(s)?.as_slice() {
        [m, n] => Ok((*m, *n)),
        _ => Err(CliError::Usage(format!("expected two group numbers M,N, got {s:?}"))),
    }
}

fn parse_ratio(s: &str) -> Result<Ratio<u32>, CliError> {
    let bad = || CliError::Usage(format!("bad ratio {s:?}; use a or a/b"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
        None => (s.trim().parse().map_err(|_| bad())?, 1),
    };
    if n == 0 || d == 0 {
        return Err(bad());
    }
    Ok(Ratio::new(n, d))
}

fn parse_family(s: &str) -> Result<Family, CliError> {
    s.parse()
        .map_err(|_| CliError::Usage(format!("unknown family {s:?}; expected dw+pw, gc+pwg, pw+dw+pw or pwg+dw+pwg")))
}

fn design_name(seq: &[Symbol], groups: &[Option<u32>]) -> String {
    seq.iter()
        .zip(groups)
        .map(|(s, g)| match g {
            Some(g) => format!("{s}({g})"),
            None => s.to_string(),
        })
        .collect::<Vec<_>>()
        .join("+")
}

fn family_symbols(f: Family) -> Vec<Symbol> {
    parse_sequence(f.name()).expect("family names are sequences")
}

fn known_names(set: impl IntoIterator<Item = skdesign::search::KnownArchitecture>) -> Vec<&'static str> {
    set.into_iter().map(|k| k.name()).collect()
}

pub fn search(a: &SearchArgs) -> Result<Output, CliError> {
    let c = a.channels;
    let f = match (a.out_channels, a.alpha.as_deref()) {
        (Some(f), None) => f,
        (None, None) => c,
        (out, Some(alpha)) => {
            let r = parse_ratio(alpha)?;
            let scaled = u64::from(c) * u64::from(*r.numer());
            if scaled % u64::from(*r.denom()) != 0 {
                return Err(CliError::Usage(format!("alpha {r} times {c} channels is not an integer")));
            }
            let derived = u32::try_from(scaled / u64::from(*r.denom()))
                .map_err(|_| CliError::Usage("output channels overflow".into()))?;
            if out.is_some_and(|o| o != derived) {
                return Err(CliError::Usage(format!(
                    "--out-channels {} conflicts with --alpha {alpha} (gives {derived})",
                    out.unwrap()
                )));
            }
            derived
        }
    };
    let config = SearchConfig {
        max_length: usize::from(a.max_len),
        reference_channels: c,
        reference_out_channels: f,
        kernel_size: a.kernel,
        enable_bottleneck_variants: !a.no_bottleneck,
        enable_domination_filter: !a.no_domination,
        jobs: a.jobs.map(usize::from),
        ..SearchConfig::default()
    };
    let report = skdesign::run_search(&config)?;
    let standard = u64::from(a.kernel * a.kernel) * u64::from(c) * u64::from(f);

    let mut rows = Vec::new();
    let mut results = Vec::new();
    for fam in &report.families {
        let known = known_names(identify_known(fam, &fam.canonical_groups, c));
        let ratio = Ratio::new(fam.min_params, standard);
        let design = design_name(&fam.canonical_sequence, &fam.canonical_groups);
        rows.push(vec![
            fam.name(),
            if fam.bottleneck { "yes" } else { "no" }.to_string(),
            design.clone(),
            fam.min_params.to_string(),
            sig6(efficiency::to_f64(ratio)),
            known.join(", "),
        ]);
        let mut entry = json!({
            "family": fam.name(),
            "bottleneck": fam.bottleneck,
            "canonical_design": design,
            "canonical_groups": fam.canonical_groups,
            "canonical_plan": fam.canonical_plan,
            "min_params": fam.min_params,
            "ratio_to_standard": Exact::new(ratio),
            "known_architectures": known,
        });
        if a.audit {
            entry["witnesses"] = to_json(&fam.witnesses);
            entry["field_audit"] = to_json(&fam.audit);
        }
        results.push(entry);
    }

    let k = &report.counts;
    let mut text = format!("reference: C={c} F={f} kernel {0}x{0}, standard {standard} params\n\n", a.kernel);
    text += &table(&["family", "bottleneck", "canonical", "params", "ratio", "known"], &rows);
    text += &format!(
        "\n{} sequences, {} repeated removed, {} kept; {} candidates, {} valid families; \
         dropped {} containment, {} sparsification, {} domination; {} remain\n",
        k.raw_sequences,
        k.repeated_pattern_removed,
        k.sequences_kept,
        k.candidates.examined,
        k.valid_families,
        k.dropped_containment,
        k.dropped_sparsification,
        k.dropped_domination,
        k.surviving_families,
    );
    if a.audit {
        for d in &report.dropped {
            text += &format!("  dropped {}: {}\n", d.family.name(), to_json(&d.reason)["rule"].as_str().unwrap_or("?"));
        }
    }

    let mut out = Output::new(to_json(&report.config), Value::Array(results), text);
    let mut audit = json!({ "counts": report.counts });
    if a.audit {
        audit["dropped"] = to_json(&report.dropped);
    }
    out.audit = Some(audit);
    Ok(out)
}

pub fn analyze(a: &AnalyzeArgs) -> Result<Output, CliError> {
    let family = parse_family(&a.family)?;
    let groups = match (&a.groups, family.has_groups()) {
        (Some(_), false) => {
            return Err(CliError::Usage(format!("{} takes no group numbers", family.name())));
        }
        (Some(g), true) => Some(parse_pair(g)?),
        (None, true) => {
            let opt = efficiency::optimal_group_numbers(family, a.c, a.f)?;
            Some(opt.discrete[0])
        }
        (None, false) => None,
    };
    let r = efficiency::analyze(family, a.c, a.f, groups)?;
    let theorem1 = match (family, groups) {
        (Family::GcPwg, Some((m, n))) => Some(efficiency::theorem1_condition(a.c, m, n)),
        _ => None,
    };
    let seq = family_symbols(family);
    let mut it = groups.into_iter().flat_map(|(m, n)| [m, n]);
    let seq_groups: Vec<Option<u32>> = seq
        .iter()
        .map(|s| if s.takes_groups() { it.next() } else { None })
        .collect();
    let known = known_names(identify_sequence(&seq, family.is_bottleneck(), &seq_groups, a.c));

    let mut lines: Vec<(String, String)> = vec![
        ("family".into(), family.name().into()),
        ("C -> F".into(), format!("{} -> {}", a.c, a.f)),
    ];
    if let Some((m, n)) = groups {
        lines.push(("groups M,N".into(), format!("{m},{n}")));
    }
    lines.push(("params".into(), format!("{} (standard {})", r.params, r.standard_params)));
    lines.push(("ratio".into(), format!("{} = {}", r.ratio, sig6(efficiency::to_f64(r.ratio)))));
    lines.push(("full coverage".into(), verdict_word(r.constraint_ok)));
    if let Some(t) = theorem1 {
        lines.push(("M*N = C".into(), verdict_word(t)));
    }
    if let Some(o) = &r.optimal {
        lines.push((
            "continuous optimum".into(),
            format!("M={} N={} ratio {}", sig6(o.continuous.m), sig6(o.continuous.n), sig6(o.continuous.ratio))));
        let mins: Vec<String> = o.discrete.iter().map(|(m, n)| format!("({m},{n})")).collect();
        lines.push((
            "discrete optimum".into(),
            format!("{} ratio {} (gap {})", mins.join(" "), o.discrete_ratio, sig6(o.gap))));
    }
    if !known.is_empty() {
        lines.push(("known as".into(), known.join(", ")));
    }

    let results = json!({
        "family": family,
        "in_channels": a.c,
        "out_channels": a.f,
        "groups": groups,
        "params": r.params,
        "standard_params": r.standard_params,
        "ratio": Exact::new(r.ratio),
        "full_coverage": r.constraint_ok,
        "groups_product_equals_c": theorem1,
        "optimal": r.optimal.as_ref().map(|o| json!({
            "continuous": o.continuous,
            "discrete": o.discrete,
            "discrete_ratio": Exact::new(o.discrete_ratio),
            "gap": o.gap,
        })),
        "known_architectures": known,
    });
    let config = json!({ "family": family, "c": a.c, "f": a.f, "groups": groups });
    Ok(Output::new(config, results, pairs(&lines)))
}

fn block_template(b: &BlockArgs) -> Result<BlockTemplate, CliError> {
    let name = b.family.trim().to_ascii_lowercase();
    let fixed = match name.as_str() {
        "std" | "standard" => Some(BlockTemplate::standard()),
        "resnet-bottleneck" => Some(BlockTemplate::resnet_bottleneck()),
        "resnext" => Some(BlockTemplate::resnext()),
        "xception" => Some(BlockTemplate::xception()),
        "shufflenet" => Some(BlockTemplate::shufflenet()),
        _ => None,
    };
    if let Some(t) = fixed {
        if b.groups.is_some() || b.bottleneck_ratio.is_some() {
            return Err(CliError::Usage(format!("{name} is a fixed block; drop --groups and --bottleneck-ratio")));
        }
        return Ok(t);
    }
    if let Ok(family) = name.parse::<Family>() {
        if b.bottleneck_ratio.is_some() {
            return Err(CliError::Usage("--bottleneck-ratio applies to custom layer lists".into()));
        }
        let groups = match (&b.groups, family.has_groups()) {
            (Some(g), true) => Some(parse_pair(g)?),
            (None, true) => Some((4, 4)),
            (Some(_), false) => {
                return Err(CliError::Usage(format!("{} takes no group numbers", family.name())));
            }
            (None, false) => None,
        };
        return Ok(BlockTemplate::family(family, groups)?);
    }
    if b.groups.is_some() {
        return Err(CliError::Usage("write group numbers inside a custom layer list, e.g. GC(4)+PWG(2)".into()));
    }
    BlockTemplate::parse(&b.family, b.bottleneck_ratio)
        .map_err(|e| CliError::Usage(format!("cannot read block {:?}: {e}", b.family)))
}

fn layout(l: &LayoutArgs) -> NetworkLayout {
    let mut layout = if l.table_preset {
        NetworkLayout::table_preset()
    } else {
        NetworkLayout {
            conventions: Conventions {
                projection_shortcuts: !l.no_projection,
                fully_connected: !l.no_fc,
                norms_and_biases: false,
            },
            ..NetworkLayout::with_blocks(l.blocks)
        }
    };
    layout.conventions.norms_and_biases = l.include_bn;
    layout
}

fn sizing_table(r: &SizingReport) -> String {
    let rows: Vec<Vec<String>> = r
        .stages
        .iter()
        .map(|s| {
            vec![
                s.stage.to_string(),
                format!("{} -> {}", s.in_width, s.width),
                format!("{0}x{0}", s.resolution),
                s.blocks.to_string(),
                s.params.to_string(),
                s.macs.to_string(),
            ]
        })
        .collect();
    let c = r.layout.conventions;
    let mut t = format!(
        "block {} at width {}, {} blocks per stage, depth {}\n\
         conventions: projections {}, classifier {}, norms and biases {}\n\n",
        r.block,
        r.width,
        r.layout.blocks_per_stage,
        r.depth,
        on_off(c.projection_shortcuts),
        on_off(c.fully_connected),
        on_off(c.norms_and_biases),
    );
    t += &table(&["stage", "width", "resolution", "blocks", "params", "MACs"], &rows);
    t += &format!(
        "\nstem {}  head {}\ntotal {} params ({}), {} MACs\n",
        r.stem_params,
        r.head_params,
        r.total_params,
        millions(r.total_params),
        r.total_macs
    );
    t
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

pub fn size(a: &SizeArgs) -> Result<Output, CliError> {
    let template = block_template(&a.block)?;
    let layout = layout(&a.layout);
    let r = sizer::model_params(&layout, &template, a.width)?;
    let config = json!({ "block": template.describe(), "width": a.width, "layout": layout });
    Ok(Output::new(config, to_json(&r), sizing_table(&r)))
}

pub fn width(a: &WidthArgs) -> Result<Output, CliError> {
    if a.single_block {
        let family = parse_family(&a.block.family)?;
        if a.block.groups.is_some() {
            return Err(CliError::Usage("--single-block picks the group numbers itself".into()));
        }
        let alpha = parse_ratio(&a.alpha)?;
        let r = efficiency::greatest_width(family, a.budget, alpha)?;
        let groups = r.groups.map(|(m, n)| format!(" with groups ({m},{n})")).unwrap_or_default();
        let text = format!(
            "{} within {} params at alpha {}\n\
             closed-form width {}\n\
             greatest legal width {} -> {}{}, {} params\n\
             condition: {}\n",
            family.name(),
            a.budget,
            alpha,
            sig6(r.greatest_width),
            r.width,
            r.out_width,
            groups,
            r.params,
            r.optimality_condition,
        );
        let config = json!({ "family": family, "budget": a.budget, "alpha": alpha.to_string(), "single_block": true });
        return Ok(Output::new(config, to_json(&r), text));
    }
    if a.alpha != "1" {
        return Err(CliError::Usage("--alpha applies to --single-block".into()));
    }
    let template = block_template(&a.block)?;
    let layout = layout(&a.layout);
    let r = sizer::solve_width(a.budget, &template, &layout)?;
    let text = format!("widest network within {} params\n", a.budget) + &sizing_table(&r);
    let config = json!({ "block": template.describe(), "budget": a.budget, "layout": layout });
    Ok(Output::new(config, to_json(&r), text))
}

pub fn verify(a: &VerifyArgs) -> Result<Output, CliError> {
    if !a.theorem1 && !a.infofield {
        return Err(CliError::Usage("choose --theorem1, --infofield or both".into()));
    }
    let mut text = String::new();
    let mut results = json!({});
    let mut passed = true;

    if a.theorem1 {
        if a.c_max < 4 {
            return Err(CliError::Usage("--c-max must be at least 4 for --theorem1".into()));
        }
        let cs: Vec<u32> = (4..=a.c_max).step_by(2).collect();
        let s = oracles::verify_theorem1(&cs, &[1, 2, 4])?;
        let ok = s.counterexamples.is_empty();
        passed &= ok;
        text += &format!(
            "group numbers: {} grids over even C in 4..={} with F in {{C, 2C, 4C}}: {}\n",
            s.grids,
            a.c_max,
            verdict_word(ok)
        );
        for (c, f, m, n) in &s.counterexamples {
            text += &format!("  counterexample C={c} F={f}: minimizer ({m},{n}) has M*N != C\n");
        }
        results["theorem1"] = to_json(&s);
    }

    if a.infofield {
        if a.c_max > MAX_ORACLE_CHANNELS {
            return Err(skdesign::Error::OracleLimit(format!(
                "--infofield checks at most {MAX_ORACLE_CHANNELS} channels"
            ))
            .into());
        }
        if a.len_max > 4 {
            return Err(skdesign::Error::OracleLimit(
                "--infofield checks sequences of at most 4 kernels".into(),
            )
            .into());
        }
        let cs: Vec<u32> = (1..=a.c_max / 4).map(|i| 4 * i).collect();
        if cs.is_empty() {
            return Err(CliError::Usage("--c-max must be at least 4 for --infofield".into()));
        }
        let s = oracles::verify_infofield(&cs, usize::from(a.len_max))?;
        let ok = s.disagreements.is_empty();
        passed &= ok;
        text += &format!(
            "information field: {} designs at C in {:?}, length <= {}: {}\n",
            s.designs,
            cs,
            a.len_max,
            verdict_word(ok)
        );
        for d in &s.disagreements {
            text += &format!(
                "  {} ({:?}) at C={}: calculus {:?}, graph {:?}\n",
                design_name(&parse_sequence(&d.sequence)?, &d.groups),
                d.plan,
                d.channels,
                d.calculus,
                d.graph
            );
        }
        results["infofield"] = to_json(&s);
    }

    let config = json!({
        "theorem1": a.theorem1,
        "infofield": a.infofield,
        "c_max": a.c_max,
        "len_max": a.len_max,
    });
    let mut out = Output::new(config, results, text);
    out.passed = passed;
    Ok(out)
}

pub fn graph(a: &GraphArgs) -> Result<Output, CliError> {
    let c = a.channels;
    if c == 0 {
        return Err(skdesign::Error::ZeroChannels.into());
    }
    if c > MAX_ORACLE_CHANNELS {
        return Err(skdesign::Error::OracleLimit(format!("graphs are limited to {MAX_ORACLE_CHANNELS} channels")).into());
    }
    let strategy = match a.permutation {
        StrategyArg::Interleave => PermutationStrategy::Interleave,
        StrategyArg::Identity => PermutationStrategy::Identity,
    };
    let given = a.groups.as_deref().map(parse_list).transpose()?;
    let name = a.design.trim();
    let (title, layers) = if matches!(name.to_ascii_lowercase().as_str(), "std" | "standard") {
        if given.is_some() {
            return Err(CliError::Usage("the standard kernel takes no group numbers".into()));
        }
        ("STD".to_string(), vec![LayerSpec::new(KernelKind::standard(3)?, c, c)?])
    } else {
        let seq = parse_sequence(&name.to_ascii_uppercase())
            .map_err(|e| CliError::Usage(format!("cannot read design {name:?}: {e}")))?;
        let grouped = seq.iter().filter(|s| s.takes_groups()).count();
        let list = match given {
            Some(l) if l.len() != grouped => {
                return Err(CliError::Usage(format!(
                    "{} grouped kernels but {} group numbers",
                    grouped,
                    l.len()
                )));
            }
            Some(l) => l,
            None => vec![2; grouped],
        };
        let mut it = list.into_iter();
        let groups: Vec<Option<u32>> = seq
            .iter()
            .map(|s| if s.takes_groups() { it.next() } else { None })
            .collect();
        let widths = vec![(c, c); seq.len()];
        let layers = skdesign::search::build_layers(&seq, &groups, &widths, 3)?;
        (design_name(&seq, &groups), layers)
    };
    let dot = crate::graph::to_dot(&title, &layers, strategy);
    let field = oracles::graph_information_field(&layers, c, strategy)?;
    let config = json!({
        "design": title,
        "channels": c,
        "permutation": format!("{strategy:?}").to_lowercase(),
        "sequence": sequence_label(&layers),
    });
    let results = json!({ "dot": dot, "information_field": field });
    Ok(Output::new(config, results, dot))
}

fn sequence_label(layers: &[LayerSpec]) -> String {
    layers.iter().map(|l| l.kind().symbol()).collect::<Vec<_>>().join("+")
}
