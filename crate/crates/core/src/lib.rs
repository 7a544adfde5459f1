//! Multi-quadrotor trajectory planning with safe flight corridors (SFC) and
//! relative safe flight corridors (RSFC), solved as a single quadratic program.

pub mod bench;
pub mod bernstein;
pub mod error;
pub mod formulation;
pub mod geometry;
pub mod map;
pub mod mapf;
pub mod output;
pub mod pipeline;
pub mod postprocess;
pub mod qp;
pub mod rsfc;
pub mod sfc;
pub mod scenario;
pub mod time_alloc;

pub use error::ScenarioError;
pub use geometry::{Aabb, Vec3};
pub use map::{MapFile, VoxelMap};
pub use scenario::{AgentSpec, PlannerConfig, Scenario};
