//! Online multi-tenant DNN inference scheduling on a heterogeneous
//! multi-accelerator system: workload and trace generation, a deterministic
//! discrete-event simulator with shared-bandwidth contention, per-tenant SLA
//! bookkeeping with (m,k)-firm windows, heuristic baseline schedulers, and a
//! GRU-based DDPG scheduling policy trained from scratch in double precision.

pub mod rlpolicy;
pub mod schedulers;
pub mod simcore;
pub mod sla;
pub mod workload;
