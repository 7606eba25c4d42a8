//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinlearn_core::concepts::Concept;
use spinlearn_core::learner::Norm;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sample,
    InvertAudit,
    Learn,
    Influence,
    Anticonc,
    Sweep,
    Generate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sample => "sample",
            ExperimentKind::InvertAudit => "invert-audit",
            ExperimentKind::Learn => "learn",
            ExperimentKind::Influence => "influence",
            ExperimentKind::Anticonc => "anticonc",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Generate => "generate",
        }
    }
}

/// How to obtain the Ising model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum ModelSpec {
    Grid2d { rows: usize, cols: usize, beta: f64, #[serde(default)] h: f64 },
    Path { n: usize, beta: f64, #[serde(default)] h: f64 },
    RandomTree { n: usize, beta: f64, #[serde(default)] h: f64 },
    RandomBoundedDegree { n: usize, max_degree: usize, beta: f64, #[serde(default)] h: f64 },
    /// Fields only, no couplings.
    Product { fields: Vec<f64> },
    /// Explicit couplings `(i, j, A_ij)` and fields.
    Explicit { n: usize, couplings: Vec<(usize, usize, f64)>, fields: Vec<f64> },
    CliqueHardcore { num_cliques: usize, clique_size: usize },
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Ssm,
    Tree,
    LocalTree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    pub kind: SamplerKind,
    pub eps: f64,
    pub c_ssm: f64,
    pub delta: f64,
    pub seed_len: Option<u32>,
    /// Explicit radius in place of the strong-spatial-mixing recipe.
    pub radius: Option<usize>,
    pub root: usize,
    pub eps_prime: f64,
    /// Seeds drawn for Monte Carlo sampler audits.
    pub trials: usize,
    /// Seed budget of the locality audit; 0 skips it.
    pub locality_seeds: usize,
    /// Record the audits without asserting their bounds.
    pub informational: bool,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Ssm,
            eps: 0.1,
            c_ssm: 1.0,
            delta: 0.5,
            seed_len: None,
            radius: None,
            root: 0,
            eps_prime: 0.05,
            trials: 10_000,
            locality_seeds: 0,
            informational: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverterParams {
    pub draws: usize,
    pub uniformity_trials: u64,
    pub attempt_cap: u64,
    /// Uniformity is audited when `n` and `s` are both at most this.
    pub uniformity_max: usize,
    pub max_uniformity_tv: f64,
    pub degree_bases: usize,
}

impl Default for InverterParams {
    fn default() -> Self {
        Self {
            draws: 10_000,
            uniformity_trials: 100_000,
            attempt_cap: spinlearn_core::inverter::DEFAULT_ATTEMPT_CAP,
            uniformity_max: 3,
            max_uniformity_tv: 0.02,
            degree_bases: 8,
        }
    }
}

/// How to obtain the target concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConceptSpec {
    Dictator { index: usize },
    Majority,
    Dnf { terms: Vec<Vec<usize>> },
    RandomDnf { terms: (usize, usize), width: (usize, usize) },
    Halfspace { weights: Vec<f64>, #[serde(default)] theta: f64 },
    /// Random-sign weights of magnitudes in `[1, 1.5]`.
    PlantedHalfspace { #[serde(default)] theta: f64 },
    Inline { concept: Concept },
    File { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Exact,
    Ssm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerParams {
    pub concept: ConceptSpec,
    pub degrees: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub norm: Norm,
    pub noise: f64,
    pub tol: f64,
    pub source: SourceKind,
    /// Skip the sampled fit and only evaluate the exact oracle.
    pub oracle_only: bool,
    pub oracle: bool,
    /// Also compute the other norm's oracle and check `L1 ≤ √L2`.
    pub compare_norms: bool,
    /// When set, `n_train` becomes this many samples per basis element.
    pub train_per_feature: Option<usize>,
    pub max_test_error: Option<f64>,
    /// Largest allowed `|train objective − oracle error|`.
    pub max_oracle_gap: Option<f64>,
    /// Degree from a budget formula, appended to `degrees`.
    pub budget: Option<BudgetSpec>,
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self {
            concept: ConceptSpec::Majority,
            degrees: vec![1, 2],
            n_train: 1000,
            n_test: 1000,
            norm: Norm::L2,
            noise: 0.0,
            tol: 1e-9,
            source: SourceKind::Exact,
            oracle_only: false,
            oracle: true,
            compare_norms: false,
            train_per_feature: None,
            max_test_error: None,
            max_oracle_gap: None,
            budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub theorem: spinlearn_core::learner::DegreeTheorem,
    pub params: spinlearn_core::learner::BudgetParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceMode {
    MonotoneAudit,
    Transfer,
    CliqueTightness,
    Single,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfluenceParams {
    pub mode: InfluenceMode,
    pub count: usize,
    pub dnf_terms: (usize, usize),
    pub dnf_width: (usize, usize),
    /// `(num_cliques, clique_size)` pairs.
    pub cliques: Vec<(usize, usize)>,
    pub max_spread: f64,
    pub concept: Option<ConceptSpec>,
    pub mc_trials: u64,
}

impl Default for InfluenceParams {
    fn default() -> Self {
        Self {
            mode: InfluenceMode::Single,
            count: 20,
            dnf_terms: (1, 4),
            dnf_width: (1, 3),
            cliques: Vec::new(),
            max_spread: 2.0,
            concept: None,
            mc_trials: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `1/√n` in every coordinate.
    Uniform,
    /// `±1/√n` with alternating signs.
    Alternating,
    Explicit { weights: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubgaussianParams {
    pub directions: usize,
    pub samples: usize,
    pub max_ratio: f64,
}

impl Default for SubgaussianParams {
    fn default() -> Self {
        Self { directions: 20, samples: 20_000, max_ratio: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsParams {
    pub weights: Option<WeightSpec>,
    pub regular_eps: f64,
    pub widths: Vec<f64>,
    pub samples: usize,
    pub max_linear_deviation: Option<f64>,
    /// Compare a uniform-model profile with exact subset-sum bands.
    pub uniform_check: bool,
    pub hs_samples: Option<usize>,
    pub max_hs_tv: f64,
    pub subgaussian: Option<SubgaussianParams>,
    pub zeta: Option<f64>,
}

impl Default for AnalyticsParams {
    fn default() -> Self {
        Self {
            weights: None,
            regular_eps: 0.25,
            widths: vec![0.05, 0.1, 0.2, 0.4],
            samples: 100_000,
            max_linear_deviation: None,
            uniform_check: false,
            hs_samples: None,
            max_hs_tv: 0.05,
            subgaussian: None,
            zeta: None,
        }
    }
}

/// One experiment. Sections irrelevant to the experiment are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub inverter: InverterParams,
    #[serde(default)]
    pub learner: LearnerParams,
    #[serde(default)]
    pub influence: InfluenceParams,
    #[serde(default)]
    pub analytics: AnalyticsParams,
    /// Sub-experiments of a sweep.
    #[serde(default)]
    pub runs: Vec<ExperimentConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.set_base_dir(&dir);
        Ok(cfg)
    }

    fn set_base_dir(&mut self, dir: &Path) {
        self.base_dir = dir.to_path_buf();
        for r in &mut self.runs {
            r.set_base_dir(dir);
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Propagates a master seed to every sub-run.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.runs = self.runs.into_iter().map(|r| r.with_seed(seed)).collect();
        self
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        short_hash(text.as_bytes())
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}
