use thiserror::Error;

/// Errors produced by validation, search and sizing.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("group number {groups} is invalid for {kind} ({in_channels} -> {out_channels} channels): {reason}")]
    InvalidGroups {
        kind: &'static str,
        groups: u32,
        in_channels: u32,
        out_channels: u32,
        reason: &'static str,
    },

    #[error("depthwise convolution must keep the channel count, got {in_channels} -> {out_channels}")]
    DepthwiseChannelChange { in_channels: u32, out_channels: u32 },

    #[error("channel counts must be positive")]
    ZeroChannels,

    #[error("channel mismatch at boundary {index}: layer produces {produced} channels but the next layer expects {expected}")]
    ChannelMismatch {
        index: usize,
        produced: u32,
        expected: u32,
    },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("budget {budget} is below the smallest legal design ({minimum} parameters)")]
    UnderBudget { budget: u64, minimum: u64 },

    #[error("oracle refused: {0}")]
    OracleLimit(String),

    #[error("no feasible group assignment: {0}")]
    EmptyFeasibleSet(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
