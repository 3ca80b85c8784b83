//! Procedural articulated human bodies and the pointing-pose pool.

mod model;
mod pool;
mod pose;

pub use model::{build_human, HumanModel, Joint, Part, Profile, ProfileId, Skeleton, PROFILES};
pub use pool::{
    build_pool, generate_pool, read_pool_header, write_pool, write_pool_file, AgentLookup, AgentPool, PoolEntry, PoolFile,
    POOL_MAGIC,
};
pub use pose::{
    elevation_index, elevation_of_index, pose_agent, pose_pointing, Perturbation, Pose, PosedAgent,
    PosedSkeleton, Side,
};
