//! Run-config file: one JSON object, unknown keys rejected.

use std::path::{Path, PathBuf};

use lawlab_core::configspace::DistanceMode;
use lawlab_core::distill::DistillSettings;
use lawlab_core::lawlab::ExperimentSettings;
use lawlab_core::measures::{load_idx, make_gaussian_mixture, split};
use lawlab_core::{
    Augmentation, Configuration, DeltaMode, Method, ModelKind, ModelSpec, Preconditioner, RngStream, SubsetMode,
    WeightedDataset,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    GaussianMixture {
        num_classes: usize,
        dim: usize,
        n_per_class: usize,
        separation: f64,
        noise_sigma: f64,
        #[serde(default = "half")]
        train_fraction: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

fn half() -> f64 {
    0.5
}

/// One training configuration. `batch_size` omitted means full batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub model: ModelKind,
    #[serde(default = "identity")]
    pub preconditioner: Preconditioner,
    pub step_size: f64,
    #[serde(default = "no_aug")]
    pub augmentation: Augmentation,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn identity() -> Preconditioner {
    Preconditioner::Identity
}

fn no_aug() -> Augmentation {
    Augmentation::None
}

/// Target family as the cross product of its axes, models outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub models: Vec<ModelKind>,
    #[serde(default = "identity_list")]
    pub preconditioners: Vec<Preconditioner>,
    pub step_sizes: Vec<f64>,
    #[serde(default = "no_aug_list")]
    pub augmentations: Vec<Augmentation>,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

fn identity_list() -> Vec<Preconditioner> {
    vec![Preconditioner::Identity]
}

fn no_aug_list() -> Vec<Augmentation> {
    vec![Augmentation::None]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeSpec {
    pub n_anchors: usize,
    pub anchor_steps: usize,
    pub unroll: usize,
    pub eps_path: f64,
    pub safety_factor: f64,
    pub sw1_projections: usize,
    pub lipschitz_samples: usize,
}

impl Default for BridgeSpec {
    fn default() -> Self {
        Self {
            n_anchors: 5,
            anchor_steps: 20,
            unroll: 5,
            eps_path: 0.0,
            safety_factor: 1.5,
            sw1_projections: 32,
            lipschitz_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverSpec {
    pub quantile: f64,
    pub n_theta: usize,
    pub n_batches: usize,
    pub batch_size: usize,
    pub distance_mode: DistanceMode,
}

impl Default for CoverSpec {
    fn default() -> Self {
        Self {
            quantile: 0.5,
            n_theta: 8,
            n_batches: 4,
            batch_size: 64,
            distance_mode: DistanceMode::MeanNormalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub method: Method,
    pub source: ConfigSpec,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    pub ipcs: Vec<usize>,
    pub outer_iters: usize,
    pub outer_lr: f64,
    #[serde(default = "default_steps")]
    pub train_steps: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub mode: DeltaMode,
    #[serde(default)]
    pub subset_mode: SubsetMode,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub distill: DistillSettings,
    #[serde(default)]
    pub bridges: BridgeSpec,
    #[serde(default)]
    pub cover: CoverSpec,
}

fn default_steps() -> usize {
    300
}

fn default_repeats() -> usize {
    5
}

fn default_trials() -> usize {
    5
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Train and test measures after loading.
pub struct Data {
    pub train: WeightedDataset,
    pub test: WeightedDataset,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| bad(format!("invalid run config: {e}")))
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        match &self.dataset {
            DatasetSpec::GaussianMixture { num_classes, dim, n_per_class, separation, noise_sigma, train_fraction } => {
                if *num_classes < 1 || *dim < 1 || *n_per_class < 2 {
                    return Err(bad("gaussian_mixture needs num_classes, dim >= 1 and n_per_class >= 2"));
                }
                if !separation.is_finite() || !(*noise_sigma > 0.0) || !noise_sigma.is_finite() {
                    return Err(bad("separation must be finite and noise_sigma positive"));
                }
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(bad("train_fraction must lie in (0, 1)"));
                }
            }
            DatasetSpec::Idx { train_images, train_labels, test_images, test_labels } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.is_file() {
                        return Err(bad(format!("missing IDX file {}", p.display())));
                    }
                }
            }
        }
        if self.ipcs.is_empty() || self.ipcs[0] == 0 || self.ipcs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad(format!("ipcs must be positive and strictly increasing: {:?}", self.ipcs)));
        }
        if self.trials == 0 {
            return Err(bad("trials must be at least 1"));
        }
        if !(self.cover.quantile > 0.0 && self.cover.quantile < 1.0) {
            return Err(bad("cover.quantile must lie in (0, 1)"));
        }
        if self.cover.n_theta == 0 || self.cover.n_batches == 0 || self.cover.batch_size == 0 {
            return Err(bad("cover probe counts must be positive"));
        }
        let b = &self.bridges;
        if b.n_anchors == 0 || b.unroll == 0 || b.sw1_projections == 0 || b.lipschitz_samples == 0 {
            return Err(bad("bridge counts must be positive"));
        }
        if !(b.eps_path >= 0.0) || !(b.safety_factor >= 1.0) || !b.safety_factor.is_finite() {
            return Err(bad("bridges need eps_path >= 0 and safety_factor >= 1"));
        }
        self.experiment_settings(None).validate().map_err(|e| bad(e.to_string()))?;
        if let Some((dim, classes)) = self.static_dims() {
            self.source_config(dim, classes)?;
            if self.family.is_some() {
                self.family_configs(dim, classes)?;
            }
        }
        Ok(())
    }

    fn static_dims(&self) -> Option<(usize, usize)> {
        match self.dataset {
            DatasetSpec::GaussianMixture { num_classes, dim, .. } => Some((dim, num_classes)),
            DatasetSpec::Idx { .. } => None,
        }
    }

    pub fn experiment_settings(&self, mode: Option<DeltaMode>) -> ExperimentSettings {
        ExperimentSettings {
            method: self.method,
            outer_iters: self.outer_iters,
            outer_lr: self.outer_lr,
            train_steps: self.train_steps,
            repeats: self.repeats,
            mode: mode.unwrap_or(self.mode),
            distill: self.distill.clone(),
        }
    }

    pub fn load_data(&self, root: &RngStream) -> Result<Data, CliError> {
        match &self.dataset {
            DatasetSpec::GaussianMixture { num_classes, dim, n_per_class, separation, noise_sigma, train_fraction } => {
                let all = make_gaussian_mixture(*num_classes, *dim, *n_per_class, *separation, *noise_sigma, &root.fork("data"))?;
                let (train, test) = split(&all, *train_fraction, &root.fork("split"))?;
                Ok(Data { train, test })
            }
            DatasetSpec::Idx { train_images, train_labels, test_images, test_labels } => {
                let train = load_idx(train_images, train_labels)?;
                let test = load_idx(test_images, test_labels)?;
                let c = train.num_classes().max(test.num_classes());
                let widen = |d: WeightedDataset| WeightedDataset::new(d.points().to_vec(), d.weights().to_vec(), c);
                Ok(Data { train: widen(train)?, test: widen(test)? })
            }
        }
    }

    pub fn source_config(&self, dim: usize, classes: usize) -> Result<Configuration, CliError> {
        build(&self.source, "source", dim, classes)
    }

    /// Family members in cross-product order. Repeated members get `#n`
    /// suffixes on their ids.
    pub fn family_configs(&self, dim: usize, classes: usize) -> Result<Vec<Configuration>, CliError> {
        let fam = self.family.as_ref().ok_or_else(|| bad("this command needs a `family` section"))?;
        if fam.models.is_empty() || fam.preconditioners.is_empty() || fam.step_sizes.is_empty() || fam.augmentations.is_empty() {
            return Err(bad("every family axis needs at least one value"));
        }
        let mut out = Vec::new();
        for model in &fam.models {
            for pre in &fam.preconditioners {
                for &eta in &fam.step_sizes {
                    for aug in &fam.augmentations {
                        let spec = ConfigSpec {
                            id: None,
                            model: *model,
                            preconditioner: *pre,
                            step_size: eta,
                            augmentation: *aug,
                            batch_size: fam.batch_size,
                        };
                        out.push(build(&spec, &format!("a{}", out.len()), dim, classes)?);
                    }
                }
            }
        }
        // repeated axis values give identical members; keep them apart by id
        let mut seen = std::collections::BTreeMap::<String, usize>::new();
        for c in &mut out {
            let n = seen.entry(c.id.clone()).or_insert(0);
            *n += 1;
            if *n > 1 {
                c.id = format!("{}#{n}", c.id);
            }
        }
        Ok(out)
    }
}

fn aug_label(a: &Augmentation) -> String {
    match a {
        Augmentation::None => "none".into(),
        Augmentation::GaussianNoise { sigma } => format!("noise{sigma}"),
        Augmentation::CoordFlip { prob } => format!("flip{prob}"),
    }
}

fn build(spec: &ConfigSpec, fallback: &str, dim: usize, classes: usize) -> Result<Configuration, CliError> {
    let model = ModelSpec::new(spec.model, dim, classes).map_err(|e| bad(e.to_string()))?;
    let id = match &spec.id {
        Some(id) => id.clone(),
        None if fallback == "source" => "source".into(),
        None => format!(
            "{}/{}/eta{}/{}",
            model.label(),
            spec.preconditioner.label(),
            spec.step_size,
            aug_label(&spec.augmentation)
        ),
    };
    if id.is_empty() || id.contains([',', '\n', '"']) {
        return Err(bad(format!("configuration id {id:?} must be non-empty without commas, quotes or newlines")));
    }
    let batch = spec.batch_size.unwrap_or(usize::MAX);
    Configuration::new(id, model, spec.preconditioner, spec.step_size, spec.augmentation, batch).map_err(|e| bad(e.to_string()))
}
