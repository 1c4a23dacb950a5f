mod commands;
mod graph;
mod report;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::CliError;
use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "skdesign", version, about = "Sparse convolution kernel design search and analysis")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = FormatArg::Table, global = true)]
    format: FormatArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enumerate kernel sequences and report the surviving design families.
    Search(SearchArgs),
    /// Parameter ratio and optimal group numbers of one family.
    Analyze(AnalyzeArgs),
    /// Whole-network parameter count at a given width.
    Size(SizeArgs),
    /// Greatest width within a parameter budget.
    Width(WidthArgs),
    /// Run the brute-force oracles.
    Verify(VerifyArgs),
    /// Graphviz drawing of a design's channel dependencies.
    Graph(GraphArgs),
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Longest kernel sequence.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=6))]
    pub max_len: u8,
    /// Input channels C.
    #[arg(long, default_value_t = 64)]
    pub channels: u32,
    /// Output channels F; defaults to alpha * C.
    #[arg(long)]
    pub out_channels: Option<u32>,
    /// F / C, e.g. 2 or 1/2.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Spatial kernel size.
    #[arg(long, default_value_t = 3)]
    pub kernel: u32,
    /// Skip bottleneck channel plans.
    #[arg(long)]
    pub no_bottleneck: bool,
    /// Keep every valid family instead of reducing the set.
    #[arg(long)]
    pub no_domination: bool,
    /// Include witnesses, dropped families and stage counts.
    #[arg(long)]
    pub audit: bool,
    /// Worker threads.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// dw+pw, gc+pwg, pw+dw+pw or pwg+dw+pwg.
    pub family: String,
    /// Input channels C.
    #[arg(long = "c")]
    pub c: u32,
    /// Output channels F.
    #[arg(long = "f")]
    pub f: u32,
    /// Group numbers M,N.
    #[arg(long)]
    pub groups: Option<String>,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    /// Blocks per stage.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    pub blocks: u32,
    /// Count batch-norm parameters and biases.
    #[arg(long)]
    pub include_bn: bool,
    /// Leave out the projection shortcuts at width changes.
    #[arg(long)]
    pub no_projection: bool,
    /// Leave out the classifier.
    #[arg(long)]
    pub no_fc: bool,
    /// Use the table comparison preset (4 blocks, no projections, no
    /// classifier); overrides the flags above except --include-bn.
    #[arg(long)]
    pub table_preset: bool,
}

#[derive(Debug, Args)]
pub struct BlockArgs {
    /// Family name (std, dw+pw, gc+pwg, pw+dw+pw, pwg+dw+pwg, resnet-bottleneck,
    /// resnext, xception, shufflenet) or a layer list such as PWG(100)+DW+PWG(2).
    #[arg(long)]
    pub family: String,
    /// Group numbers M,N for gc+pwg and pwg+dw+pwg (default 4,4).
    #[arg(long)]
    pub groups: Option<String>,
    /// Output over intermediate width for a custom layer list.
    #[arg(long)]
    pub bottleneck_ratio: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    #[command(flatten)]
    pub block: BlockArgs,
    /// Stage-1 width.
    #[arg(long)]
    pub width: u32,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct WidthArgs {
    #[command(flatten)]
    pub block: BlockArgs,
    /// Parameter budget.
    #[arg(long)]
    pub budget: u64,
    /// Solve for one block (F = alpha * C) instead of the whole network.
    #[arg(long)]
    pub single_block: bool,
    /// F / C for --single-block.
    #[arg(long, default_value = "1")]
    pub alpha: String,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Exhaustive group-number check: minimizers satisfy M * N = C.
    #[arg(long)]
    pub theorem1: bool,
    /// Calculus against dependency-graph reachability.
    #[arg(long)]
    pub infofield: bool,
    /// Largest channel count to test.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    pub c_max: u32,
    /// Longest sequence for --infofield.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=6))]
    pub len_max: u8,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Family name, "standard", or a sequence such as GC+PWG.
    pub design: String,
    /// Channels at every layer.
    #[arg(long, default_value_t = 4)]
    pub channels: u32,
    /// Group numbers for the grouped kernels, in order, e.g. 2,2.
    #[arg(long)]
    pub groups: Option<String>,
    /// Channel order in front of grouped layers.
    #[arg(long, value_enum, default_value_t = StrategyArg::Interleave)]
    pub permutation: StrategyArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Interleave,
    Identity,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let format = match cli.format {
        FormatArg::Table => Format::Table,
        FormatArg::Json => Format::Json,
    };
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let out = match cli.command {
        Command::Search(a) => commands::search(&a)?,
        Command::Analyze(a) => commands::analyze(&a)?,
        Command::Size(a) => commands::size(&a)?,
        Command::Width(a) => commands::width(&a)?,
        Command::Verify(a) => commands::verify(&a)?,
        Command::Graph(a) => commands::graph(&a)?,
    };
    out.render(format, argv)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(CliError::Disagreement(text)) => {
            print!("{text}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
