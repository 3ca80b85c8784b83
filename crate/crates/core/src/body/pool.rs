use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{HumanModel, ProfileId, PROFILES};
use super::pose::{elevation_index, elevation_of_index, pose_agent, Perturbation, Pose, PosedAgent, PosedSkeleton, Side};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::geom::{erupc, Point3};
use crate::seed::derive_seed;

pub const POOL_MAGIC: &[u8; 8] = b"ERUPOOL1";

/// Landmarks and pose identity of one pooled agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub profile: ProfileId,
    pub side: Side,
    pub elevation: f64,
    pub eye: Point3,
    pub fingertip: Point3,
    pub perturb: Option<Perturbation>,
}

/// Indexed access to a pool of posed agents, ordered profile-major, then
/// side (left first), then ascending elevation.
pub trait AgentLookup: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn entry(&self, index: usize) -> Option<&PoolEntry>;

    /// Full agent including its point cloud.
    fn agent(&self, index: usize) -> Result<PosedAgent>;

    fn elevations_per_side(&self) -> usize;

    fn index_of(&self, profile: ProfileId, side: Side, elevation_k: usize) -> usize {
        let n = self.elevations_per_side();
        (profile.0 as usize * 2 + side.index()) * n + elevation_k
    }

    fn profiles(&self) -> usize {
        self.len() / (2 * self.elevations_per_side().max(1))
    }
}

/// In-memory pool. Clouds are regenerated on demand from the models and the
/// per-pose seed, so the pool itself only holds landmarks.
#[derive(Debug, Clone)]
pub struct AgentPool {
    models: Vec<HumanModel>,
    seed: u64,
    cfg: Config,
    entries: Vec<PoolEntry>,
}

impl AgentPool {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn models(&self) -> &[HumanModel] {
        &self.models
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    fn pose_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

impl AgentLookup for AgentPool {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn entry(&self, index: usize) -> Option<&PoolEntry> {
        self.entries.get(index)
    }

    fn agent(&self, index: usize) -> Result<PosedAgent> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Lookup(format!("agent {index} not in pool of {}", self.len())))?;
        let pose = Pose {
            side: e.side,
            elevation: e.elevation,
            perturb: e.perturb.unwrap_or_default(),
        };
        pose_agent(
            &self.models[e.profile.0 as usize],
            &pose,
            derive_seed(self.pose_seed(index), 1),
            &self.cfg,
        )
    }

    fn elevations_per_side(&self) -> usize {
        self.cfg.elevation_count()
    }
}

/// Enumerates every (profile, side, elevation) combination. Each pose draws
/// its perturbations from a seed derived from `seed` and its index, so the
/// result does not depend on evaluation order.
pub fn generate_pool(mut models: Vec<HumanModel>, seed: u64, cfg: &Config) -> Result<AgentPool> {
    cfg.validate()?;
    if models.len() != PROFILES.len() {
        return Err(Error::invalid(format!(
            "pool needs exactly {} models, got {}",
            PROFILES.len(),
            models.len()
        )));
    }
    models.sort_by_key(|m| m.profile);
    if models.iter().enumerate().any(|(i, m)| m.profile.0 as usize != i) {
        return Err(Error::invalid("pool models must cover each profile exactly once"));
    }
    let per_side = cfg.elevation_count();
    let total = models.len() * 2 * per_side;
    let entries = (0..total)
        .into_par_iter()
        .map(|idx| {
            let profile = idx / (2 * per_side);
            let side = if (idx / per_side) % 2 == 0 { Side::Left } else { Side::Right };
            let elevation = elevation_of_index(idx % per_side, cfg.elevation_step_deg);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx as u64));
            let pose = Pose {
                side,
                elevation,
                perturb: Perturbation::sample(&mut rng, cfg.perturb_sigma_deg, cfg.perturb_range_deg),
            };
            let posed = PosedSkeleton::new(&models[profile].skeleton, &pose);
            PoolEntry {
                profile: ProfileId(profile as u8),
                side,
                elevation,
                eye: posed.eye(),
                fingertip: posed.fingertip(),
                perturb: Some(pose.perturb),
            }
        })
        .collect();
    Ok(AgentPool {
        models,
        seed,
        cfg: cfg.clone(),
        entries,
    })
}

fn put_f32s<W: Write>(w: &mut W, vals: &[f64]) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Streams a pool to `w`: magic, `u32` count, then per agent `u8` profile,
/// `u8` side, `f32` elevation, eye and fingertip as `f32` triples, and the
/// cloud as an ERUPC block.
pub fn write_pool<W: Write>(pool: &(impl AgentLookup + ?Sized), w: &mut W) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<pool stream>", e);
    w.write_all(POOL_MAGIC).map_err(io)?;
    w.write_all(&(pool.len() as u32).to_le_bytes()).map_err(io)?;
    let indices: Vec<usize> = (0..pool.len()).collect();
    for chunk in indices.chunks(64) {
        let agents: Vec<PosedAgent> = chunk
            .par_iter()
            .map(|&i| pool.agent(i))
            .collect::<Result<_>>()?;
        for a in &agents {
            w.write_all(&[a.profile.0, a.side.index() as u8]).map_err(io)?;
            put_f32s(w, &[a.elevation]).map_err(io)?;
            put_f32s(w, &[a.eye.x, a.eye.y, a.eye.z, a.fingertip.x, a.fingertip.y, a.fingertip.z])
                .map_err(io)?;
            erupc::write_block(w, &a.cloud).map_err(io)?;
        }
    }
    Ok(())
}

fn pool_err(message: impl Into<String>) -> Error {
    Error::Format {
        what: "agent pool",
        message: message.into(),
    }
}

/// Builds the ten profile models and the full pool from one seed.
pub fn build_pool(seed: u64, cfg: &Config) -> Result<AgentPool> {
    let models = ProfileId::all()
        .map(|p| super::model::build_human(p, derive_seed(seed, u64::MAX), cfg.surface_density))
        .collect::<Result<Vec<_>>>()?;
    generate_pool(models, seed, cfg)
}

/// Reads the magic and agent count.
pub fn read_pool_header<R: Read>(r: &mut R) -> Result<usize> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| pool_err(e.to_string()))?;
    if &magic != POOL_MAGIC {
        return Err(pool_err("bad magic"));
    }
    let mut n = [0u8; 4];
    r.read_exact(&mut n).map_err(|e| pool_err(e.to_string()))?;
    Ok(u32::from_le_bytes(n) as usize)
}

/// A pool file on disk: landmarks are indexed up front, clouds are read on
/// demand.
#[derive(Debug, Clone)]
pub struct PoolFile {
    path: PathBuf,
    entries: Vec<PoolEntry>,
    offsets: Vec<u64>,
    per_side: usize,
}

impl PoolFile {
    pub fn open(path: &Path) -> Result<PoolFile> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let n = read_pool_header(&mut r)?;
        let groups = 2 * PROFILES.len();
        if n == 0 || n % groups != 0 {
            return Err(pool_err(format!("agent count {n} is not a multiple of {groups}")));
        }
        let per_side = n / groups;
        let step = 180.0 / per_side as f64;
        let mut entries = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for i in 0..n {
            let mut head = [0u8; 2 + 4 * 7];
            r.read_exact(&mut head).map_err(|e| pool_err(format!("agent {i}: {e}")))?;
            let f = |k: usize| f32::from_le_bytes(head[2 + 4 * k..6 + 4 * k].try_into().unwrap()) as f64;
            let side = Side::from_index(head[1]).ok_or_else(|| pool_err(format!("agent {i}: bad side")))?;
            let entry = PoolEntry {
                profile: ProfileId(head[0]),
                side,
                elevation: f(0),
                eye: Point3::new(f(1), f(2), f(3)),
                fingertip: Point3::new(f(4), f(5), f(6)),
                perturb: None,
            };
            let k = elevation_index(entry.elevation, step)
                .map_err(|e| pool_err(format!("agent {i}: {e}")))?;
            let expected = (entry.profile.0 as usize * 2 + side.index()) * per_side + k;
            if expected != i {
                return Err(pool_err(format!("agent {i} is out of order")));
            }
            offsets.push(r.stream_position().map_err(|e| Error::io(path, e))?);
            erupc::skip_block(&mut r)?;
            entries.push(entry);
        }
        Ok(PoolFile {
            path: path.to_path_buf(),
            entries,
            offsets,
            per_side,
        })
    }
}

impl AgentLookup for PoolFile {
    fn len(&self) -> usize {
        self.entries.len()
    }

    fn entry(&self, index: usize) -> Option<&PoolEntry> {
        self.entries.get(index)
    }

    fn agent(&self, index: usize) -> Result<PosedAgent> {
        let e = self
            .entries
            .get(index)
            .ok_or_else(|| Error::Lookup(format!("agent {index} not in pool of {}", self.len())))?;
        let mut f = File::open(&self.path).map_err(|err| Error::io(&self.path, err))?;
        f.seek(SeekFrom::Start(self.offsets[index]))
            .map_err(|err| Error::io(&self.path, err))?;
        let cloud = erupc::read_block(&mut BufReader::new(f))?;
        Ok(PosedAgent {
            profile: e.profile,
            side: e.side,
            elevation: e.elevation,
            perturb: None,
            cloud,
            eye: e.eye,
            fingertip: e.fingertip,
        })
    }

    fn elevations_per_side(&self) -> usize {
        self.per_side
    }
}

/// Writes a pool to a file.
pub fn write_pool_file(pool: &(impl AgentLookup + ?Sized), path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_pool(pool, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}
