//! Experiment pipelines. Each run yields measurement records and the
//! pass/fail checks asserted along the way.

mod analytics;
mod influence;
mod invert;
mod learn;
mod sample;

use rand::Rng;
use serde::{Deserialize, Serialize};
use spinlearn_core::concepts::{Circuit, Concept, Halfspace, MonotoneDnf};
use spinlearn_core::samplers::{build_plan_with_radius, build_ssm_plan, default_seed_len, tree_plan, LocalSampler, SamplerPlan};
use spinlearn_core::{IsingModel, RngStream};

use crate::config::{ConceptSpec, ExperimentConfig, ExperimentKind, ModelSpec, SamplerKind, SamplerParams};
use crate::error::{HarnessError, Result, StageContext};
use crate::generate::{generate_model, GeneratedModel};
use crate::report::{Check, Record};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub records: Vec<Record>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Accumulates records and checks for one run.
pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    experiment: String,
    model_hash: String,
    config_hash: String,
    out: RunOutput,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ExperimentConfig, kind: ExperimentKind) -> Self {
        Self {
            cfg,
            experiment: format!("{}:{}", kind.name(), cfg.name),
            model_hash: String::new(),
            config_hash: cfg.hash(),
            out: RunOutput::default(),
        }
    }

    pub fn set_model(&mut self, model: &IsingModel) {
        self.model_hash = crate::config::short_hash(model.to_file().to_json().as_bytes());
    }

    pub fn set_model_hash(&mut self, hash: String) {
        self.model_hash = hash;
    }

    pub fn record(&mut self, params: &str, metric: &str, value: f64, stderr: Option<f64>) {
        self.out.records.push(Record {
            experiment: self.experiment.clone(),
            model_hash: self.model_hash.clone(),
            params: params.to_string(),
            metric: metric.to_string(),
            value,
            stderr,
            seed: self.cfg.seed,
            config_hash: self.config_hash.clone(),
            version: VERSION.to_string(),
        });
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.out.checks.push(Check { name: format!("{}: {name}", self.cfg.name), passed, detail: detail.into() });
    }

    pub fn stream(&self, purpose: &str) -> RngStream {
        RngStream::new(self.cfg.seed, "harness", purpose)
    }
}

/// Runs `cfg` as `kind` (or as its own `experiment` field).
pub fn run_experiment(cfg: &ExperimentConfig, kind: Option<ExperimentKind>) -> Result<RunOutput> {
    let kind = match (kind, cfg.experiment) {
        (Some(a), Some(b)) if a != b => {
            return Err(HarnessError::Config(format!(
                "config `{}` is a {} experiment, not {}",
                cfg.name,
                b.name(),
                a.name()
            )))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(HarnessError::Config(format!("config `{}` names no experiment", cfg.name))),
    };
    if kind == ExperimentKind::Sweep {
        let mut out = RunOutput::default();
        for run in &cfg.runs {
            let sub = run_experiment(run, None).stage(&format!("sweep run `{}`", run.name))?;
            out.records.extend(sub.records);
            out.checks.extend(sub.checks);
        }
        return Ok(out);
    }
    let mut ctx = Ctx::new(cfg, kind);
    match kind {
        ExperimentKind::Sample => sample::run(&mut ctx).stage("sample")?,
        ExperimentKind::InvertAudit => invert::run(&mut ctx).stage("invert-audit")?,
        ExperimentKind::Learn => learn::run(&mut ctx).stage("learn")?,
        ExperimentKind::Influence => influence::run(&mut ctx).stage("influence")?,
        ExperimentKind::Anticonc => analytics::run(&mut ctx).stage("anticonc")?,
        ExperimentKind::Generate => generate(&mut ctx).stage("generate")?,
        ExperimentKind::Sweep => unreachable!(),
    }
    Ok(ctx.out)
}

pub(crate) fn generated(cfg: &ExperimentConfig) -> Result<GeneratedModel> {
    let spec = cfg.model.as_ref().ok_or_else(|| HarnessError::Config(format!("config `{}` has no model", cfg.name)))?;
    let spec = match spec {
        ModelSpec::File { path } => ModelSpec::File { path: cfg.resolve(path) },
        other => other.clone(),
    };
    generate_model(&spec, &mut RngStream::new(cfg.seed, "harness", "model").rng())
}

pub(crate) fn build_model(ctx: &mut Ctx<'_>) -> Result<IsingModel> {
    let model = generated(ctx.cfg).stage("model")?.into_ising()?;
    ctx.set_model(&model);
    Ok(model)
}

fn generate(ctx: &mut Ctx<'_>) -> Result<()> {
    let g = generated(ctx.cfg)?;
    let json = g.to_json();
    ctx.set_model_hash(crate::config::short_hash(json.as_bytes()));
    if let Some(out) = &ctx.cfg.out {
        std::fs::write(ctx.cfg.resolve(out), &json)?;
    }
    match g {
        GeneratedModel::Ising(file) => {
            let m = IsingModel::from_file(&file)?;
            let d = m.diagnostics();
            ctx.record("", "n", m.n() as f64, None);
            ctx.record("", "edges", m.couplings().len() as f64, None);
            ctx.record("", "width", d.width, None);
            ctx.record("", "max_degree", d.max_degree as f64, None);
            ctx.record("", "marginal_bound", d.marginal_bound, None);
            if matches!(ctx.cfg.model, Some(ModelSpec::RandomTree { .. })) {
                let connected = m.n() == 0 || m.graph().ball(0, m.n())?.len() == m.n();
                let ok = m.couplings().len() + 1 == m.n() && connected && m.is_forest();
                ctx.check("random tree is a spanning tree", ok, format!("{} edges", m.couplings().len()));
            }
        }
        GeneratedModel::CliqueHardcore { num_cliques, clique_size, p_empty, .. } => {
            ctx.record("", "n", (num_cliques * clique_size) as f64, None);
            ctx.record("", "p_empty", p_empty, None);
        }
    }
    Ok(())
}

/// `(plan, compiled sampler)` for the configured SSM-style or tree plan.
pub(crate) fn build_sampler(model: &IsingModel, p: &SamplerParams) -> Result<(SamplerPlan, LocalSampler)> {
    let eta = model.diagnostics().marginal_bound;
    let plan = match p.kind {
        SamplerKind::Ssm => match p.radius {
            Some(r) => {
                let s = p.seed_len.unwrap_or_else(|| default_seed_len(model.n(), eta, p.eps));
                build_plan_with_radius(model, r, s, p.eps)?
            }
            None => build_ssm_plan(model, p.c_ssm, p.delta, p.eps, p.seed_len)?,
        },
        SamplerKind::Tree | SamplerKind::LocalTree => {
            let s = p.seed_len.unwrap_or_else(|| default_seed_len(model.n(), eta, p.eps));
            tree_plan(model, p.root, s, p.eps)?
        }
    };
    let sampler = LocalSampler::compile(model, &plan)?;
    Ok((plan, sampler))
}

/// Builds a concept on `n` variables, drawing randomness from `rng`.
pub(crate) fn build_concept(cfg: &ExperimentConfig, spec: &ConceptSpec, n: usize, rng: &mut impl Rng) -> Result<Concept> {
    let c = match spec {
        ConceptSpec::Dictator { index } => Concept::Circuit(Circuit::dictator(n, *index)?),
        ConceptSpec::Majority => Concept::majority(n),
        ConceptSpec::Dnf { terms } => Concept::MonotoneDnf(MonotoneDnf::new(n, terms.clone())?),
        ConceptSpec::RandomDnf { terms, width } => Concept::MonotoneDnf(MonotoneDnf::random(n, *terms, *width, rng)?),
        ConceptSpec::Halfspace { weights, theta } => Concept::Halfspace(Halfspace::new(weights, *theta)?),
        ConceptSpec::PlantedHalfspace { theta } => {
            let w: Vec<f64> = (0..n)
                .map(|_| {
                    let m = 1.0 + 0.5 * rng.random::<f64>();
                    if rng.random::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            Concept::Halfspace(Halfspace::new(&w, *theta)?)
        }
        ConceptSpec::Inline { concept } => concept.clone(),
        ConceptSpec::File { path } => {
            let text = std::fs::read_to_string(cfg.resolve(path))?;
            Concept::from_json(&text)?
        }
    };
    if c.n() != n {
        return Err(HarnessError::Config(format!("concept has {} inputs, model has {n}", c.n())));
    }
    Ok(c)
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}
