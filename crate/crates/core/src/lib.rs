//! Sparse convolution kernel design toolkit.
//!
//! * [`kernels`]: kernel kinds, layer validation, parameter and MAC counts.
//! * [`infofield`]: information-field propagation and the early-stop
//!   classifier.
//! * [`search`]: enumeration and reduction of kernel sequences into design
//!   families.
//! * [`efficiency`]: closed-form parameter ratios, optimal group numbers and
//!   widths under a budget.
//! * [`oracles`]: brute-force checks for the calculus and the optima.
//! * [`sizer`]: whole-network parameter accounting and width solving.

pub mod efficiency;
pub mod error;
pub mod infofield;
pub mod kernels;
pub mod oracles;
pub mod search;
pub mod sizer;

pub use efficiency::Family;
pub use error::{Error, Result};
pub use infofield::{classify, field_of, propagate, FieldVerdict, InfoField, PlanKind};
pub use kernels::{total_params, KernelKind, KernelSize, LayerSpec, TensorShape};
pub use search::{run_search, DesignFamily, SearchConfig, SearchReport, Symbol};
