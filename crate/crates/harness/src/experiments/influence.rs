use rand::Rng;
use spinlearn_core::concepts::{
    influence_transfer_check, monotone_alternative_influence, monotone_influence_audit, mu_influence,
    uniform_influence_of_composition, CliqueFixture, Concept, Halfspace, InfluenceMode as Route, MonotoneDnf,
    UniformMode, INFLUENCE_EXACT_LIMIT, TABULATE_BITS_LIMIT,
};

use super::{build_concept, build_model, build_sampler, fmt_f, Ctx};
use crate::config::{ConceptSpec, InfluenceMode};
use crate::error::{HarnessError, Result};

/// Agreement required between exact routes.
const ROUTE_TOL: f64 = 1e-9;

pub(super) fn run(ctx: &mut Ctx<'_>) -> Result<()> {
    match ctx.cfg.influence.mode {
        InfluenceMode::MonotoneAudit => monotone(ctx),
        InfluenceMode::Transfer => transfer(ctx),
        InfluenceMode::CliqueTightness => cliques(ctx),
        InfluenceMode::Single => single(ctx),
    }
}

fn random_dnfs(ctx: &Ctx<'_>, n: usize) -> Result<Vec<MonotoneDnf>> {
    let p = &ctx.cfg.influence;
    let mut rng = ctx.stream("dnfs").rng();
    (0..p.count).map(|_| Ok(MonotoneDnf::random(n, p.dnf_terms, p.dnf_width, &mut rng)?)).collect()
}

fn monotone(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let n = model.n();
    let dnfs = random_dnfs(ctx, n)?;
    match monotone_influence_audit(&model, &dnfs) {
        Ok(audit) => {
            let params = format!("count={};max_degree={}", dnfs.len(), audit.max_degree);
            let mean = audit.influences.iter().sum::<f64>() / audit.influences.len().max(1) as f64;
            let max = audit.influences.iter().copied().fold(0.0, f64::max);
            ctx.record(&params, "bound", audit.bound, None);
            ctx.record(&params, "mean_influence", mean, None);
            ctx.record(&params, "max_influence", max, None);
            ctx.record(&params, "worst_ratio", audit.worst_ratio, None);
            ctx.check(
                "monotone influence bound",
                true,
                format!("{} functions, worst I/bound {}", dnfs.len(), fmt_f(audit.worst_ratio)),
            );
        }
        Err(spinlearn_core::Error::Violation(msg)) => ctx.check("monotone influence bound", false, msg),
        Err(e) => return Err(e.into()),
    }
    // Second route through the covariance identity for monotone functions.
    let mut worst = 0.0f64;
    for f in &dnfs {
        let c = Concept::MonotoneDnf(f.clone());
        let a = mu_influence(&c, &model, &Route::Exact)?.total;
        let b: f64 = monotone_alternative_influence(&c, &model)?.iter().sum();
        worst = worst.max((a - b).abs());
    }
    ctx.record("", "route_gap", worst, None);
    ctx.check("monotone influence routes agree", worst <= ROUTE_TOL, format!("max gap {worst:.3e}"));
    Ok(())
}

fn transfer(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let n = model.n();
    let (plan, sampler) = build_sampler(&model, &ctx.cfg.sampler)?;
    let p = ctx.cfg.influence.clone();
    let concepts: Vec<Concept> = match &p.concept {
        Some(spec) => vec![build_concept(ctx.cfg, spec, n, &mut ctx.stream("concept").rng())?],
        None => {
            // Alternate monotone DNFs and random halfspaces.
            let dnfs = random_dnfs(ctx, n)?;
            let mut rng = ctx.stream("halfspaces").rng();
            dnfs.into_iter()
                .enumerate()
                .map(|(k, d)| -> Result<Concept> {
                    if k % 2 == 0 {
                        Ok(Concept::MonotoneDnf(d))
                    } else {
                        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let theta = rng.random_range(-0.5..0.5);
                        Ok(Concept::Halfspace(Halfspace::new(&w, theta)?))
                    }
                })
                .collect::<Result<_>>()?
        }
    };
    let base = format!("radius={};s={};chi={}", plan.radius, plan.seed_len, plan.max_dependency_bits());
    let mut violations = 0;
    let mut worst = 0.0f64;
    for (k, c) in concepts.iter().enumerate() {
        let r = influence_transfer_check(c, &model, &sampler)?;
        let params = format!("{base};concept={k}");
        ctx.record(&params, "composed_influence", r.lhs, None);
        ctx.record(&params, "mu_influence", r.mu_influence, None);
        ctx.record(&params, "rhs", r.rhs, None);
        if k == 0 {
            ctx.record(&base, "c_pi", r.c_pi, None);
            ctx.record(&base, "sampler_tv", r.eps, None);
        }
        if r.rhs > 0.0 {
            worst = worst.max(r.lhs / r.rhs);
        }
        // An infinite Poincaré constant would make the bound vacuous.
        violations += usize::from(!r.holds || !r.rhs.is_finite());
    }
    ctx.record(&base, "worst_lhs_over_rhs", worst, None);
    ctx.check(
        "influence transfer",
        violations == 0,
        format!("{violations} violations over {} concepts, worst lhs/rhs {}", concepts.len(), fmt_f(worst)),
    );
    if n * plan.seed_len as usize <= TABULATE_BITS_LIMIT {
        let c = &concepts[0];
        let a = uniform_influence_of_composition(c, &sampler, &UniformMode::Exact)?.total;
        let b = uniform_influence_of_composition(c, &sampler, &UniformMode::Tabulate)?.total;
        ctx.check("composed influence routes agree", (a - b).abs() <= ROUTE_TOL, format!("{a} vs {b}"));
    }
    Ok(())
}

fn cliques(ctx: &mut Ctx<'_>) -> Result<()> {
    let p = ctx.cfg.influence.clone();
    if p.cliques.is_empty() {
        return Err(HarnessError::Config("clique_tightness needs at least one (num_cliques, clique_size)".into()));
    }
    let mut ratios = Vec::new();
    let mut worst_gap = 0.0f64;
    for &(m, c) in &p.cliques {
        let f = CliqueFixture::new(m, c)?;
        let per = f.influence_by_patterns()?;
        let total: f64 = per.iter().sum();
        let closed = f.influence_closed_form();
        worst_gap = worst_gap.max((total - closed).abs());
        if f.n() <= 20 {
            let t: f64 = f.influence_by_table()?.iter().sum();
            worst_gap = worst_gap.max((total - t).abs());
        }
        let ratio = f.tightness_ratio()?;
        let params = format!("D={};n={}", f.degree(), f.n());
        ctx.record(&params, "influence", total, None);
        ctx.record(&params, "closed_form", closed, None);
        ctx.record(&params, "ratio", ratio, None);
        ratios.push(ratio);
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let spread = hi / lo;
    ctx.record("", "ratio_spread", spread, None);
    ctx.check("clique influence routes agree", worst_gap <= ROUTE_TOL, format!("max gap {worst_gap:.3e}"));
    ctx.check(
        "clique tightness spread",
        spread <= p.max_spread,
        format!("ratios in [{}, {}], spread {} vs {}", fmt_f(lo), fmt_f(hi), fmt_f(spread), p.max_spread),
    );
    Ok(())
}

fn single(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let n = model.n();
    let p = ctx.cfg.influence.clone();
    let spec = p.concept.clone().unwrap_or(ConceptSpec::Majority);
    let c = build_concept(ctx.cfg, &spec, n, &mut ctx.stream("concept").rng())?;
    let route = if p.mc_trials > 0 || n > INFLUENCE_EXACT_LIMIT {
        Route::MonteCarlo { trials: p.mc_trials.max(10_000), stream: ctx.stream("mc_influence") }
    } else {
        Route::Exact
    };
    let inf = mu_influence(&c, &model, &route)?;
    ctx.record("", "influence", inf.total, inf.std_error);
    for (j, v) in inf.per_coordinate.iter().enumerate() {
        ctx.record(&format!("j={j}"), "coordinate_influence", *v, None);
    }
    Ok(())
}
