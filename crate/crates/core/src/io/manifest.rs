use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synth::SceneSpec;
use super::volume::Normalization;
use crate::device::NoiseModel;
use crate::encoder::{EncoderConfig, EncodingMode};
use crate::error::{Error, Result};
use crate::experiments::{DeformationSpec, MatmulSpec};
use crate::field::{AdamConfig, Architecture, DeployConfig, TrainConfig};
use crate::hapo::{HardwareAxes, Orientation, SoftwareAxes, DEFAULT_N_MAX};
use crate::render::{NerfTrainConfig, RenderConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    ImageFit,
    CtDense,
    CtSparse,
    Nerf,
    Dnerf,
    MatmulBench,
    Hapo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetRef {
    /// No input data (matmul benchmark).
    None,
    /// Procedural test image.
    SyntheticImage { width: usize, height: usize, channels: usize },
    /// A PPM or PGM file.
    Image { path: String },
    /// Nested-ellipsoid phantom volume.
    Phantom { slices: usize, width: usize, height: usize },
    /// A slice stack with an index file.
    Volume { path: String, normalization: Option<Normalization> },
    /// Procedural radiance scene rendered on the fly.
    Scene { spec: SceneSpec },
}

/// Training-slice selection for volume tasks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SliceSpec {
    /// Explicit training slices; overrides `count`.
    #[serde(default)]
    pub train: Option<Vec<usize>>,
    /// Number of evenly spaced training slices.
    #[serde(default)]
    pub count: Option<usize>,
    /// Training-slice counts for a PSNR-vs-slices curve.
    #[serde(default)]
    pub sweep: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftwareSearch {
    pub axes: SoftwareAxes,
    pub population: usize,
    pub generations: usize,
    /// Bits per weight used to count cells of software candidates.
    pub bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapoSpec {
    pub omega: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
    /// Defaults to the software PSNR of the trained network.
    #[serde(default)]
    pub psnr_max: Option<f64>,
    pub hardware: HardwareAxes,
    #[serde(default)]
    pub software: Option<SoftwareSearch>,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

fn default_orientation() -> Orientation {
    Orientation::Maximize
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub name: String,
    pub task: Task,
    pub seed: u64,
    pub output_dir: String,
    pub dataset: DatasetRef,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub architecture: Option<Architecture>,
    #[serde(default)]
    pub encoder: Option<EncoderConfig>,
    #[serde(default)]
    pub direction_encoder: Option<EncoderConfig>,
    #[serde(default)]
    pub deformation: Option<DeformationSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub nerf_train: Option<NerfTrainConfig>,
    #[serde(default)]
    pub render: Option<RenderConfig>,
    #[serde(default)]
    pub slices: Option<SliceSpec>,
    #[serde(default)]
    pub matmul: Option<MatmulSpec>,
    #[serde(default)]
    pub hapo: Option<HapoSpec>,
    /// Deployments evaluated after training.
    #[serde(default)]
    pub deploy: Vec<DeployConfig>,
}

impl ExperimentManifest {
    /// Desk-scale defaults for every task.
    pub fn template(task: Task) -> Self {
        let base = Self {
            name: format!("{}-desk", task_name(task)),
            task,
            seed: 0,
            output_dir: format!("runs/{}", task_name(task)),
            dataset: DatasetRef::None,
            noise: NoiseModel::fitted(),
            architecture: None,
            encoder: None,
            direction_encoder: None,
            deformation: None,
            train: None,
            nerf_train: None,
            render: None,
            slices: None,
            matmul: None,
            hapo: None,
            deploy: Vec::new(),
        };
        let image_train = TrainConfig::new(300, 1e-4).with_batch(256).with_adam(AdamConfig::new(1e-4).with_decay(1e-6));
        let volume_train = TrainConfig::new(30, 1e-3).with_batch(512).with_adam(AdamConfig::new(1e-3).with_decay(1e-5));
        let ct_deploy = vec![DeployConfig::ct_default(), DeployConfig::ptq(vec![14, 14, 12])];
        let image = Self {
            dataset: DatasetRef::SyntheticImage { width: 64, height: 64, channels: 1 },
            architecture: Some(Architecture::ct_default()),
            encoder: Some(EncoderConfig::new(EncodingMode::Gaussian, 2, 64).with_sigma(4.0).with_concat(true)),
            train: Some(image_train),
            deploy: ct_deploy.clone(),
            ..base.clone()
        };
        let volume = Self {
            dataset: DatasetRef::Phantom { slices: 16, width: 64, height: 64 },
            architecture: Some(Architecture::ct_default()),
            encoder: Some(EncoderConfig::ct()),
            train: Some(volume_train),
            deploy: ct_deploy,
            ..base.clone()
        };
        let scene = |motion: bool| {
            let spec = if motion { SceneSpec::desk().with_motion([0.4, 0.0, 0.0], 8) } else { SceneSpec::desk() };
            let mut train = NerfTrainConfig::full_scale(300);
            train.batch_rays = 256;
            Self {
                dataset: DatasetRef::Scene { spec },
                architecture: Some(Architecture::Nerf { width: 64, depth: 4, rank: Some(16), skip: 2 }),
                encoder: Some(EncoderConfig::new(EncodingMode::Gaussian, 3, 32).with_sigma(1.0).with_concat(true)),
                direction_encoder: Some(EncoderConfig::new(EncodingMode::Basic, 3, 1)),
                deformation: motion.then(|| DeformationSpec {
                    architecture: Architecture::deformation_default(),
                    encoder: EncoderConfig::new(EncodingMode::Positional, 4, 4).with_concat(true),
                }),
                nerf_train: Some(train),
                render: Some(RenderConfig::default()),
                ..base.clone()
            }
        };
        match task {
            Task::ImageFit => image,
            Task::CtDense => volume,
            Task::CtSparse => Self { slices: Some(SliceSpec { train: None, count: Some(8), sweep: vec![4, 8, 12, 16] }), ..volume },
            Task::Nerf => scene(false),
            Task::Dnerf => scene(true),
            Task::MatmulBench => Self { matmul: Some(MatmulSpec::default()), ..base },
            Task::Hapo => Self {
                train: Some(TrainConfig::new(100, 1e-4).with_batch(256).with_adam(AdamConfig::new(1e-4).with_decay(1e-6))),
                deploy: Vec::new(),
                hapo: Some(HapoSpec {
                    omega: 0.8,
                    n_max: DEFAULT_N_MAX,
                    orientation: Orientation::Maximize,
                    psnr_max: None,
                    hardware: HardwareAxes { bits: vec![vec![8, 12, 14], vec![8, 12, 14], vec![8, 12]], ratios: vec![1.3, 1.5, 1.7] },
                    software: None,
                }),
                ..image
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical serialization used for hashing and for `manifest.toml`.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("manifest serialization: {e}")))
    }

    /// Lowercase hex SHA-256 of [`ExperimentManifest::canonical`].
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical()?.as_bytes())))
    }

    pub fn output_path(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    /// Seed of one named component, derived from the manifest seed.
    pub fn seed_for(&self, component: u64) -> u64 {
        crate::rng::mix(&[self.seed, component])
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::config(format!("{} task needs {what}", task_name(self.task)))) };
        let volume = matches!(self.dataset, DatasetRef::Phantom { .. } | DatasetRef::Volume { .. });
        let image = matches!(self.dataset, DatasetRef::SyntheticImage { .. } | DatasetRef::Image { .. });
        let scene = matches!(self.dataset, DatasetRef::Scene { .. });
        match self.task {
            Task::ImageFit => need(image && self.architecture.is_some() && self.encoder.is_some() && self.train.is_some(), "an image, architecture, encoder and train section")?,
            Task::CtDense => need(volume && self.architecture.is_some() && self.encoder.is_some() && self.train.is_some(), "a volume, architecture, encoder and train section")?,
            Task::CtSparse => need(
                volume && self.architecture.is_some() && self.encoder.is_some() && self.train.is_some() && self.slices.is_some(),
                "a volume, architecture, encoder, train and slices section",
            )?,
            Task::Nerf => need(scene && self.architecture.is_some() && self.encoder.is_some() && self.nerf_train.is_some(), "a scene, architecture, encoder and nerf_train section")?,
            Task::Dnerf => need(
                scene && self.architecture.is_some() && self.encoder.is_some() && self.nerf_train.is_some() && self.deformation.is_some(),
                "a scene, architecture, encoder, nerf_train and deformation section",
            )?,
            Task::MatmulBench => need(self.matmul.is_some(), "a matmul section")?,
            Task::Hapo => need((image || volume) && self.architecture.is_some() && self.encoder.is_some() && self.train.is_some() && self.hapo.is_some(), "data, architecture, encoder, train and hapo sections")?,
        }
        if let Some(e) = &self.encoder {
            e.validate()?;
        }
        if let Some(t) = &self.train {
            t.adam.validate()?;
        }
        for d in &self.deploy {
            d.converters.validate()?;
        }
        if let DatasetRef::Scene { spec } = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::ImageFit => "image-fit",
        Task::CtDense => "ct-dense",
        Task::CtSparse => "ct-sparse",
        Task::Nerf => "nerf",
        Task::Dnerf => "dnerf",
        Task::MatmulBench => "matmul-bench",
        Task::Hapo => "hapo",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TASKS: [Task; 7] = [Task::ImageFit, Task::CtDense, Task::CtSparse, Task::Nerf, Task::Dnerf, Task::MatmulBench, Task::Hapo];

    #[test]
    fn templates_round_trip_losslessly() {
        for t in TASKS {
            let m = ExperimentManifest::template(t);
            m.validate().unwrap();
            let text = m.canonical().unwrap();
            let back = ExperimentManifest::from_toml(&text).unwrap();
            assert_eq!(back, m, "{text}");
            assert_eq!(back.hash().unwrap(), m.hash().unwrap());
        }
    }

    #[test]
    fn hash_ignores_formatting_and_tracks_content() {
        let m = ExperimentManifest::template(Task::MatmulBench);
        let reformatted = m.canonical().unwrap().replace(" = ", "=").replace('\n', "\n\n");
        assert_eq!(ExperimentManifest::from_toml(&reformatted).unwrap().hash().unwrap(), m.hash().unwrap());
        let other = ExperimentManifest { seed: 1, ..m.clone() };
        assert_ne!(other.hash().unwrap(), m.hash().unwrap());
        assert_eq!(m.hash().unwrap().len(), 64);
    }

    #[test]
    fn invalid_manifests_are_config_errors() {
        let mut m = ExperimentManifest::template(Task::ImageFit);
        m.architecture = None;
        assert!(matches!(m.validate(), Err(Error::Config(_))));
        assert!(matches!(ExperimentManifest::from_toml("task = \"bogus\""), Err(Error::Config(_))));
        let mut m = ExperimentManifest::template(Task::Nerf);
        if let DatasetRef::Scene { spec } = &mut m.dataset {
            spec.poses = 0;
        }
        assert!(m.validate().is_err());
    }
}
