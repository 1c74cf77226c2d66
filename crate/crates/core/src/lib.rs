//! A shared-memory data-flow task runtime with discrete and region
//! dependences and barrier-free worksharing tasks.
//!
//! Programs run inside [`run`]: the closure is the implicit main task and
//! spawns children through its [`TaskContext`]. Tasks declare the regions
//! they read and write; the runtime orders conflicting tasks and runs the
//! rest in parallel. A worksharing task is a loop whose iterations are split
//! in chunks among the workers of one team. It has no closing barrier: a
//! worker that runs out of chunks moves on to other work, and the task's
//! dependences are released by whichever worker finishes the last chunk.
//!
//! ```
//! use wstasks::{run, RuntimeConfig, SharedBuffer, Task};
//! use std::sync::Arc;
//!
//! let a = Arc::new(SharedBuffer::new(vec![1.0f64; 1024]));
//! let data = a.clone();
//! run(RuntimeConfig::with_workers(2), move |ctx| {
//!     let buf = data.clone();
//!     ctx.spawn(
//!         Task::worksharing(0..1024, move |range, _| {
//!             // SAFETY: the inout clause below orders every other access.
//!             let a = unsafe { buf.slice_mut(range) };
//!             a.iter_mut().for_each(|x| *x *= 2.0);
//!         })
//!         .inout(data.id(), 0, 1024)
//!         .chunksize(64),
//!     )
//!     .unwrap();
//! })
//! .unwrap();
//! assert!(unsafe { a.snapshot() }.iter().all(|&x| x == 2.0));
//! ```

mod buffer;
pub mod config;
pub mod deps;
pub mod metrics;
pub mod pin;
pub mod region;
mod runtime;
mod scheduler;
pub mod task;
pub mod trace;
pub mod worksharing;

pub use buffer::SharedBuffer;
pub use config::{ConfigError, RuntimeConfig};
pub use region::{conflicts, AccessMode, AccessRegion, DependenceMode, ObjectId};
pub use runtime::{run, RunError, SpawnError, TaskContext};
pub use task::{DataEnv, IterSpace, Task, TaskId, TaskKind, TaskState};
pub use trace::{EventKind, ExecutionTrace, TraceEvent};
pub use worksharing::{default_chunksize, ChunkPolicy, Team, WorkerId};
