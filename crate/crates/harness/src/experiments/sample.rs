use spinlearn_core::inference::{exact_distribution, tv_distance};
use spinlearn_core::inverter::likelihood_ratio_audit;
use spinlearn_core::samplers::{
    conditional_accuracy_audit, default_seed_len, locality_audit, tree_plan, LocalSampler, LocalTreeSampler, Seed,
};

use super::{build_model, build_sampler, fmt_f, Ctx};
use crate::config::SamplerKind;
use crate::error::Result;

/// Exact audits need the full output table.
const EXACT_AUDIT_LIMIT: usize = 12;

pub(super) fn run(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let p = ctx.cfg.sampler.clone();
    match p.kind {
        SamplerKind::Ssm => ssm(ctx, &model),
        SamplerKind::Tree => tree(ctx, &model),
        SamplerKind::LocalTree => local_tree(ctx, &model),
    }
}

fn ssm(ctx: &mut Ctx<'_>, model: &spinlearn_core::IsingModel) -> Result<()> {
    let p = ctx.cfg.sampler.clone();
    let (plan, sampler) = build_sampler(model, &p)?;
    let n = model.n();
    let params = format!("eps={};radius={};s={}", p.eps, plan.radius, plan.seed_len);
    ctx.record(&params, "radius", plan.radius as f64, None);
    ctx.record(&params, "seed_len", plan.seed_len as f64, None);
    ctx.record(&params, "parts", plan.num_parts() as f64, None);
    ctx.record(&params, "max_cond_set", plan.max_cond_set() as f64, None);
    ctx.record(&params, "max_dependency_bits", plan.max_dependency_bits() as f64, None);
    if p.locality_seeds > 0 {
        let rep = locality_audit(&sampler, model, p.locality_seeds, &ctx.stream("locality"))?;
        ctx.record(&params, "locality_seeds", rep.seeds_checked as f64, None);
        ctx.record(&params, "locality_violations", rep.violations as f64, None);
        ctx.record(&params, "ball_bound_bits", rep.ball_bound_bits as f64, None);
        ctx.check(
            "locality",
            rep.passed(),
            format!(
                "{} violations over {} seeds (exhaustive: {}), dependency bits {} vs ball bound {}",
                rep.violations, rep.seeds_checked, rep.exhaustive, rep.max_dependency_bits, rep.ball_bound_bits
            ),
        );
    }
    if n > EXACT_AUDIT_LIMIT {
        return Ok(());
    }
    let tv = tv_distance(&sampler.output_distribution()?, &exact_distribution(model)?)?;
    let ratio = likelihood_ratio_audit(&sampler, model)?;
    let accuracy = conditional_accuracy_audit(&sampler, model)?;
    ctx.record(&params, "tv", tv, None);
    ctx.record(&params, "likelihood_ratio", ratio, None);
    ctx.record(&params, "conditional_accuracy", accuracy, None);
    if !p.informational {
        ctx.check("sampler tv within eps", tv <= p.eps, format!("tv {} vs eps {}", fmt_f(tv), p.eps));
        let bound = p.eps.exp();
        ctx.check(
            "likelihood ratio within exp(eps)",
            ratio <= bound,
            format!("max ratio {} vs {}", fmt_f(ratio), fmt_f(bound)),
        );
        let bound = 1.0 + p.eps / n as f64;
        ctx.check(
            "conditional accuracy within 1 + eps/n",
            accuracy <= bound,
            format!("max ratio {} vs {}", fmt_f(accuracy), fmt_f(bound)),
        );
    }
    Ok(())
}

fn tree(ctx: &mut Ctx<'_>, model: &spinlearn_core::IsingModel) -> Result<()> {
    let p = ctx.cfg.sampler.clone();
    let n = model.n();
    let eta = model.diagnostics().marginal_bound;
    let s = p.seed_len.unwrap_or_else(|| default_seed_len(n, eta, p.eps));
    let mu = exact_distribution(model)?;
    let tv_at = |s: u32| -> Result<f64> {
        let sampler = LocalSampler::compile(model, &tree_plan(model, p.root, s, p.eps)?)?;
        Ok(tv_distance(&sampler.output_distribution()?, &mu)?)
    };
    let tv = tv_at(s)?;
    let finer = tv_at(s + 4)?;
    // Each block's threshold is off by less than 2^{-s}.
    let bound = n as f64 * 0.5f64.powi(s as i32);
    let target = eta * p.eps / 2.0;
    let params = format!("eps={};s={};root={}", p.eps, s, p.root);
    ctx.record(&params, "tv", tv, None);
    ctx.record(&params, "tv_s_plus_4", finer, None);
    ctx.record(&params, "discretization_bound", bound, None);
    ctx.record(&params, "marginal_bound", eta, None);
    if !p.informational {
        ctx.check("tree tv within n*2^-s", tv <= bound, format!("tv {tv:.3e} vs {bound:.3e}"));
        ctx.check(
            "discretization bound within eta*eps/2",
            bound <= target,
            format!("{bound:.3e} vs {target:.3e}"),
        );
        // Sixteen times finer blocks; allow a factor two of slack.
        let shrinks = tv == 0.0 || finer * 8.0 <= tv;
        ctx.check("four more bits shrink tv 8x", shrinks, format!("{tv:.3e} -> {finer:.3e}"));
    }
    Ok(())
}

fn local_tree(ctx: &mut Ctx<'_>, model: &spinlearn_core::IsingModel) -> Result<()> {
    let p = ctx.cfg.sampler.clone();
    let n = model.n();
    let eta = model.diagnostics().marginal_bound;
    let s = p.seed_len.unwrap_or_else(|| {
        default_seed_len(n, eta, p.eps).max((4.0 / eta).log2().ceil() as u32)
    });
    let local = match p.radius {
        Some(r) => LocalTreeSampler::with_radius(model, p.root, r, eta, s)?,
        None => LocalTreeSampler::new(model, p.root, p.eps_prime, s)?,
    };
    let tree = local.tree_sampler();
    let stream = ctx.stream("local_tree");
    let outcomes = spinlearn_core::exec::map_range(p.trials, |t| -> Result<(bool, usize, bool)> {
        let z = Seed::uniform(n, s, &mut stream.substream(t as u64).rng());
        let a = local.sample(&z)?;
        let b = tree.sample(&z)?;
        Ok((a.spins != b.spins, a.fallback.len(), local.is_nice(&z)))
    });
    let (mut differ, mut fallback, mut nice) = (0usize, 0usize, 0usize);
    for o in outcomes {
        let (d, f, ok) = o?;
        differ += usize::from(d);
        fallback += f;
        nice += usize::from(ok);
    }
    let trials = p.trials.max(1) as f64;
    let rate = differ as f64 / trials;
    let se = (rate * (1.0 - rate) / trials).sqrt();
    let params = format!("eps_prime={};radius={};s={}", p.eps_prime, local.radius(), s);
    ctx.record(&params, "radius", local.radius() as f64, None);
    ctx.record(&params, "tree_depth", local.max_depth() as f64, None);
    ctx.record(&params, "disagreement_rate", rate, Some(se));
    ctx.record(&params, "fallback_per_seed", fallback as f64 / trials, None);
    ctx.record(&params, "nice_rate", nice as f64 / trials, None);
    if !p.informational {
        ctx.check(
            "local tree disagreement within eps'",
            rate <= p.eps_prime,
            format!("{differ}/{} seeds differ, rate {} vs {}", p.trials, fmt_f(rate), p.eps_prime),
        );
    }
    Ok(())
}
