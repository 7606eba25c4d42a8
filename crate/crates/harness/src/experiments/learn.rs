use spinlearn_core::learner::{best_weighted_error, degree_budget, learn_and_test, Labeler, MonomialBasis, Norm, SampleSource};
use spinlearn_core::samplers::ExactSampler;

use super::{build_concept, build_model, build_sampler, fmt_f, Ctx};
use crate::config::SourceKind;
use crate::error::Result;

const ORACLE_MAX_N: usize = 16;
/// Slack for exact-arithmetic comparisons between oracle errors.
const ORACLE_SLACK: f64 = 1e-9;

fn norm_name(norm: Norm) -> &'static str {
    match norm {
        Norm::L1 => "l1",
        Norm::L2 => "l2",
    }
}

pub(super) fn run(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let lp = ctx.cfg.learner.clone();
    let n = model.n();
    let concept = build_concept(ctx.cfg, &lp.concept, n, &mut ctx.stream("concept").rng())?;
    let mut degrees = lp.degrees.clone();
    if let Some(b) = &lp.budget {
        let raw = degree_budget(b.theorem, &b.params)?;
        let theorem = serde_json::to_value(b.theorem)?;
        ctx.record(&format!("theorem={}", theorem.as_str().unwrap_or_default()), "budget_degree", raw, None);
        degrees.push((raw as usize).min(n));
    }
    degrees.sort_unstable();
    degrees.dedup();
    let oracle = lp.oracle && n <= ORACLE_MAX_N;
    let labeler = if lp.noise > 0.0 {
        Labeler::Noisy { concept: concept.clone(), flip: lp.noise }
    } else {
        Labeler::Clean(concept.clone())
    };
    let exact;
    let local;
    let source = match lp.source {
        SourceKind::Exact => {
            exact = ExactSampler::new(&model)?;
            SampleSource::Exact(&exact)
        }
        SourceKind::Ssm => {
            local = build_sampler(&model, &ctx.cfg.sampler)?.1;
            SampleSource::Local(&local)
        }
    };
    let stream = ctx.stream("learn");
    let mut oracle_curve = Vec::new();
    let mut best_test = f64::INFINITY;
    for &k in &degrees {
        let basis_len = MonomialBasis::new(n, k)?.len();
        let params = format!("k={k};norm={};noise={}", norm_name(lp.norm), lp.noise);
        let mut opt = None;
        if oracle {
            let o = best_weighted_error(&model, &concept, k, lp.norm)?;
            ctx.record(&params, "oracle_error", o.error, None);
            if let Some(kkt) = &o.kkt {
                ctx.check(&format!("oracle kkt at k={k}"), kkt.holds, format!("max violation {:.3e}", kkt.max_violation));
            }
            if lp.compare_norms {
                let other = match lp.norm {
                    Norm::L1 => Norm::L2,
                    Norm::L2 => Norm::L1,
                };
                let p = best_weighted_error(&model, &concept, k, other)?;
                ctx.record(&format!("k={k};norm={}", norm_name(other)), "oracle_error", p.error, None);
                let (l1, l2) = if lp.norm == Norm::L1 { (o.error, p.error) } else { (p.error, o.error) };
                ctx.check(
                    &format!("l1 oracle within sqrt(l2) at k={k}"),
                    l1 <= l2.sqrt() + ORACLE_SLACK,
                    format!("l1 {} vs sqrt(l2) {}", fmt_f(l1), fmt_f(l2.sqrt())),
                );
            }
            oracle_curve.push((k, o.error));
            opt = Some(o.error);
        }
        if lp.oracle_only {
            continue;
        }
        let n_train = lp.train_per_feature.map_or(lp.n_train, |per| per * basis_len);
        let rep = learn_and_test(source, &labeler, k, n_train, lp.n_test, lp.norm, lp.tol, &stream.child(&k.to_string()))?;
        let params = format!("{params};n_train={n_train}");
        let se = (rep.test_error * (1.0 - rep.test_error) / lp.n_test.max(1) as f64).sqrt();
        ctx.record(&params, "basis_size", basis_len as f64, None);
        ctx.record(&params, "train_error", rep.train_error, None);
        ctx.record(&params, "train_objective", rep.train_objective, None);
        ctx.record(&params, "test_error", rep.test_error, Some(se));
        best_test = best_test.min(rep.test_error);
        if let Some(kkt) = &rep.kkt {
            ctx.record(&params, "kkt_violation", kkt.max_violation, None);
            ctx.check(&format!("l1 fit kkt at k={k}"), kkt.holds, format!("max violation {:.3e}", kkt.max_violation));
        }
        if let (Some(gap), Some(o)) = (lp.max_oracle_gap, opt) {
            if lp.noise == 0.0 {
                let d = (rep.train_objective - o).abs();
                ctx.record(&params, "oracle_gap", d, None);
                ctx.check(
                    &format!("empirical optimum near oracle at k={k}"),
                    d <= gap,
                    format!("|{} - {}| = {} vs {gap}", fmt_f(rep.train_objective), fmt_f(o), fmt_f(d)),
                );
            }
        }
    }
    if oracle_curve.len() > 1 {
        let monotone = oracle_curve.windows(2).all(|w| w[1].1 <= w[0].1 + ORACLE_SLACK);
        let curve: Vec<String> = oracle_curve.iter().map(|(k, e)| format!("{k}:{e:.4}")).collect();
        ctx.check("oracle error nonincreasing in k", monotone, curve.join(" "));
    }
    if let Some(&(_, e)) = oracle_curve.iter().find(|(k, _)| *k == n) {
        ctx.check("oracle error vanishes at k = n", e <= 1e-6, format!("error {e:.3e}"));
    }
    if let Some(max) = lp.max_test_error {
        ctx.check(
            "min test error",
            best_test <= max,
            format!("best test error {} vs {max}", fmt_f(best_test)),
        );
    }
    Ok(())
}
