//! Job configuration and the simulate → augment → represent pipeline.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentSpec, ShiftLog};
use crate::classic::{bp, fbp, FilterSpec};
use crate::error::{Error, Result};
use crate::io::Tensor;
use crate::projector::{project, ProjectorSpec};
use crate::stretch::{stretch, Direction, StretchSpec};
use crate::tensor::{linspace_deg, validate_angles, TiltGeometry, TiltStack, Volume};

/// Default acquisition: 8 views spanning −60°..+60° inclusive.
pub fn default_angles() -> Vec<f64> {
    linspace_deg(-60.0, 60.0, 8)
}

/// Parses `start:stop:count` (inclusive linspace) or a comma-separated list.
pub fn parse_angles(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let angles = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::AngleOrder(format!("expected start:stop:count, got `{text}`")));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::AngleOrder(format!("bad angle `{s}`")));
        let count: usize =
            parts[2].trim().parse().map_err(|_| Error::AngleOrder(format!("bad angle count `{}`", parts[2])))?;
        linspace_deg(num(parts[0])?, num(parts[1])?, count)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Error::AngleOrder(format!("bad angle `{s}`"))))
            .collect::<Result<Vec<_>>>()?
    };
    validate_angles(&angles)?;
    Ok(angles)
}

/// Network-input representation of a tilt series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Sinogram,
    #[default]
    Stretch,
    Bp,
    Fbp,
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinogram" => Ok(Representation::Sinogram),
            "stretch" => Ok(Representation::Stretch),
            "bp" => Ok(Representation::Bp),
            "fbp" => Ok(Representation::Fbp),
            other => Err(Error::InvalidSpec(format!("unknown representation `{other}` (sinogram|stretch|bp|fbp)"))),
        }
    }
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Sinogram => "sinogram",
            Representation::Stretch => "stretch",
            Representation::Bp => "bp",
            Representation::Fbp => "fbp",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IoPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Fully resolved description of one simulation/reconstruction job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconJobConfig {
    pub angles_deg: Vec<f64>,
    pub representation: Representation,
    pub augment: AugmentSpec,
    pub projector: ProjectorSpec,
    #[serde(default)]
    pub filter: FilterSpec,
    pub stretch: StretchSpec,
    #[serde(default)]
    pub io: IoPaths,
    #[serde(default)]
    pub seed: u64,
}

impl ReconJobConfig {
    pub fn new(angles_deg: Vec<f64>, volume_dims: [usize; 3], representation: Representation) -> Result<Self> {
        let projector = ProjectorSpec::new(angles_deg.clone(), volume_dims)?;
        let stretch = StretchSpec::new(projector.geometry.clone());
        Ok(Self {
            angles_deg,
            representation,
            augment: AugmentSpec::default(),
            projector,
            filter: FilterSpec::default(),
            stretch,
            io: IoPaths::default(),
            seed: 0,
        })
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.stretch.direction = direction;
        self
    }

    pub fn geometry(&self) -> &TiltGeometry {
        &self.projector.geometry
    }

    pub fn validate(&self) -> Result<()> {
        validate_angles(&self.angles_deg)?;
        self.projector.validate()?;
        if self.projector.geometry.angles_deg() != self.angles_deg.as_slice()
            || self.stretch.geometry != self.projector.geometry
        {
            return Err(Error::InvalidSpec("angles differ between the projector, stretch and job settings".into()));
        }
        self.augment.validate(self.angles_deg.len())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Json { path: PathBuf::from("<config>"), source: e })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything produced by [`simulate`] for one volume.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub raw: TiltStack,
    pub augmented: TiltStack,
    pub shifts: ShiftLog,
    pub input: Tensor,
}

/// Applies the chosen representation to an augmented stack. Backprojected
/// volumes are normalized to zero mean and unit variance.
pub fn represent(augmented: &TiltStack, cfg: &ReconJobConfig) -> Result<Tensor> {
    Ok(match cfg.representation {
        Representation::Sinogram => Tensor::Stack(augmented.clone()),
        Representation::Stretch => Tensor::Stack(stretch(augmented, &cfg.stretch)?),
        Representation::Bp => Tensor::Volume(bp(augmented, &cfg.projector)?.normalized()?),
        Representation::Fbp => Tensor::Volume(fbp(augmented, &cfg.filter, &cfg.projector)?.normalized()?),
    })
}

/// project → augment (noise, misalign, per-view normalize) → represent.
pub fn simulate(x: &Volume, cfg: &ReconJobConfig) -> Result<Simulated> {
    cfg.validate()?;
    let raw = project(x, &cfg.projector)?;
    let (augmented, shifts) = augment(&raw, &cfg.augment)?;
    let input = represent(&augmented, cfg)?;
    Ok(Simulated { raw, augmented, shifts, input })
}
