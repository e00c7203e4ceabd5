//! Cross-language syscall attack-surface analysis.
//!
//! A scripted application and the engine's builtin modules are analyzed as
//! call graphs, the engine's native code as [`nir`] programs. Both meet in a
//! [`mapping`] from builtin methods to syscalls, from which per-thread
//! whitelists, metrics and filter policies are derived and then exercised by
//! the [`enforce`] simulator.

pub mod corpus;
pub mod enforce;
pub mod error;
pub mod jscg;
pub mod mapping;
pub mod metrics;
pub mod native;
pub mod nir;
pub mod pipeline;
pub mod policy;
pub mod syscalls;
pub mod whitelist;

pub use error::{Error, Result};
pub use mapping::{ComposedMapping, LayerMappings, MappingDatabase, MethodKey};
pub use metrics::{compute_metrics, Scalar, SurfaceMetrics};
pub use pipeline::{run_pipeline, PipelineConfig};
pub use policy::Policy;
pub use syscalls::{CommandProfile, EngineBaseline, SyscallTable};
pub use whitelist::{PoolMode, Whitelist};

/// Metrics with a floating-point ratio.
pub type Metrics = SurfaceMetrics<f64>;
/// Metrics with a single-precision ratio.
pub type Metrics32 = SurfaceMetrics<f32>;
/// Metrics with the ratio kept as an exact fraction.
pub type ExactMetrics = SurfaceMetrics<num_rational::Ratio<u64>>;
