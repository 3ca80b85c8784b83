//! Pipeline constants, overridable from a TOML key=value file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Voxel edge for agent clouds, meters.
    pub voxel_size: f64,
    pub agent_points: usize,
    /// Arm fluctuation half-range around the exact pointing elevation, degrees.
    pub fluctuation_deg: f64,
    /// Per-segment perturbation half-range, degrees.
    pub perturb_range_deg: f64,
    pub perturb_sigma_deg: f64,
    pub elevation_step_deg: f64,
    pub distance_min: f64,
    pub distance_max: f64,
    pub footprint_radius: f64,
    pub min_separation: f64,
    pub max_attempts: usize,
    pub pointing_retries: usize,
    /// Capsule surface sampling density, points per m².
    pub surface_density: f64,
    pub w_gesture: f64,
    pub w_language: f64,
    pub fusion: FusionDims,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionDims {
    pub hidden: usize,
    pub heads: usize,
    pub vocab: usize,
    pub embed: usize,
    pub classes: usize,
    pub size_bins: usize,
    pub centroids: usize,
    pub group_size: usize,
    pub group_radius: f64,
    pub proposal_points: usize,
    pub point_mlp: usize,
    /// Keep absolute box-center channels in proposal features.
    pub center_channels: bool,
}

impl Default for FusionDims {
    fn default() -> Self {
        FusionDims {
            hidden: 32,
            heads: 1,
            vocab: 4096,
            embed: 64,
            classes: 18,
            size_bins: 4,
            centroids: 64,
            group_size: 16,
            group_radius: 0.2,
            proposal_points: 32,
            point_mlp: 32,
            center_channels: true,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            voxel_size: 0.0025,
            agent_points: 3000,
            fluctuation_deg: 5.0,
            perturb_range_deg: 3.0,
            perturb_sigma_deg: 1.5,
            elevation_step_deg: 0.5,
            distance_min: 1.0,
            distance_max: 4.0,
            footprint_radius: 0.3,
            min_separation: 0.5,
            max_attempts: 2000,
            pointing_retries: 50,
            surface_density: 4000.0,
            w_gesture: 0.5,
            w_language: 0.5,
            fusion: FusionDims::default(),
            seed: 0,
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: "config".into(),
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of elevation grid values per side, `[-90, 90)` by the step.
    pub fn elevation_count(&self) -> usize {
        (180.0 / self.elevation_step_deg).round() as usize
    }

    /// Worst-case angle between a gesture ray and the eye→target-center
    /// direction: fluctuation + perturbation + quantization.
    pub fn pointing_tolerance_deg(&self) -> f64 {
        self.fluctuation_deg + self.perturb_range_deg + self.elevation_step_deg
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("voxel_size", self.voxel_size),
            ("fluctuation_deg", self.fluctuation_deg),
            ("perturb_range_deg", self.perturb_range_deg),
            ("perturb_sigma_deg", self.perturb_sigma_deg),
            ("elevation_step_deg", self.elevation_step_deg),
            ("distance_min", self.distance_min),
            ("distance_max", self.distance_max),
            ("footprint_radius", self.footprint_radius),
            ("min_separation", self.min_separation),
            ("surface_density", self.surface_density),
            ("fusion.group_radius", self.fusion.group_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("agent_points", self.agent_points),
            ("max_attempts", self.max_attempts),
            ("pointing_retries", self.pointing_retries),
            ("fusion.hidden", self.fusion.hidden),
            ("fusion.heads", self.fusion.heads),
            ("fusion.vocab", self.fusion.vocab),
            ("fusion.embed", self.fusion.embed),
            ("fusion.classes", self.fusion.classes),
            ("fusion.size_bins", self.fusion.size_bins),
            ("fusion.centroids", self.fusion.centroids),
            ("fusion.group_size", self.fusion.group_size),
            ("fusion.proposal_points", self.fusion.proposal_points),
            ("fusion.point_mlp", self.fusion.point_mlp),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.fluctuation_deg > 45.0 {
            return Err(Error::invalid("fluctuation_deg must be at most 45"));
        }
        let steps = 180.0 / self.elevation_step_deg;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::invalid("elevation_step_deg must divide 180 evenly"));
        }
        if self.distance_min >= self.distance_max {
            return Err(Error::invalid("distance_min must be below distance_max"));
        }
        if self.w_gesture < 0.0 || self.w_language < 0.0 || self.w_gesture + self.w_language <= 0.0 {
            return Err(Error::invalid("fusion weights must be non-negative and not both zero"));
        }
        if self.fusion.hidden % self.fusion.heads != 0 {
            return Err(Error::invalid("fusion.heads must divide fusion.hidden"));
        }
        Ok(())
    }
}
