//! Data-centric file system stack: a simulated smart storage device that keeps
//! files as containers of typed items and runs pushed-down queries next to the
//! data, the framed protocol that reaches it, and the host-side mediator.

pub mod bench;
pub mod codec;
pub mod device;
pub mod expr;
pub mod host;
pub mod ingest;
pub mod item;
pub mod volume;
pub mod wire;
