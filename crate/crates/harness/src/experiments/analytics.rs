use rand_distr::{Distribution, StandardNormal};
use spinlearn_core::analytics::{
    anticoncentration_profile, band_sup, dense_exact_table, dobrushin_check, exact_linear_atoms, hs_mixture_audit,
    psd_shift, subgaussian_tail_audit,
};
use spinlearn_core::inference::{exact_distribution, tv_distance};
use spinlearn_core::IsingModel;

use super::{build_model, fmt_f, Ctx};
use crate::config::WeightSpec;
use crate::error::{HarnessError, Result};

/// psd_shift must leave the law unchanged up to rounding.
const SHIFT_TV_TOL: f64 = 1e-12;
/// Monte Carlo bands may sit this many standard errors from exact ones.
const BAND_SE: f64 = 5.0;
const UNIFORM_CHECK_LIMIT: usize = 20;

fn weights(ctx: &Ctx<'_>, spec: &WeightSpec, n: usize) -> Result<Vec<f64>> {
    let scale = 1.0 / (n as f64).sqrt();
    let w = match spec {
        WeightSpec::Uniform => vec![scale; n],
        WeightSpec::Alternating => (0..n).map(|i| if i % 2 == 0 { scale } else { -scale }).collect(),
        WeightSpec::Explicit { weights } => weights.clone(),
        WeightSpec::File { path } => {
            let text = std::fs::read_to_string(ctx.cfg.resolve(path))?;
            serde_json::from_str(&text)?
        }
    };
    if w.len() != n {
        return Err(HarnessError::Config(format!("weight vector has {} entries, model has {n}", w.len())));
    }
    Ok(w)
}

pub(super) fn run(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let n = model.n();
    let p = ctx.cfg.analytics.clone();
    let d = model.diagnostics();
    ctx.record("", "width", d.width, None);

    if let Some(zeta) = p.zeta {
        let ok = dobrushin_check(&model, zeta)?;
        ctx.check("dobrushin condition", ok, format!("width {} vs 1 - zeta = {}", fmt_f(d.width), fmt_f(1.0 - zeta)));
    }

    if let Some(samples) = p.hs_samples {
        let shift = psd_shift(&model)?;
        let shifted = dense_exact_table(&shift.matrix, model.fields())?;
        let shift_tv = tv_distance(&shifted, &exact_distribution(&model)?)?;
        let tv = hs_mixture_audit(&model, samples, &ctx.stream("hs_mixture"))?;
        let params = format!("samples={samples}");
        ctx.record(&params, "lambda_min", shift.lambda_min, None);
        ctx.record(&params, "shift_tv", shift_tv, None);
        ctx.record(&params, "mixture_tv", tv, None);
        ctx.check("psd shift leaves the law unchanged", shift_tv <= SHIFT_TV_TOL, format!("tv {shift_tv:.3e}"));
        ctx.check(
            "hs mixture tv",
            tv <= p.max_hs_tv,
            format!("tv {} at {samples} samples vs {}", fmt_f(tv), p.max_hs_tv),
        );
    }

    if let Some(spec) = &p.weights {
        let w = weights(ctx, spec, n)?;
        let prof = anticoncentration_profile(&model, &w, &p.widths, p.regular_eps, p.samples, &ctx.stream("anticonc"))?;
        for (l, b) in prof.widths.iter().zip(&prof.bands) {
            let se = (b * (1.0 - b) / p.samples as f64).sqrt();
            ctx.record(&format!("width={l}"), "band", *b, Some(se));
        }
        let (a, slope, dev) = prof.linear_fit();
        ctx.record("", "fitted_c", prof.fitted_c, None);
        ctx.record("", "linear_intercept", a, None);
        ctx.record("", "linear_slope", slope, None);
        ctx.record("", "linear_max_rel_dev", dev, None);
        ctx.check("weights are regular", prof.regular, format!("eps {}", p.regular_eps));
        let covered = prof.widths.iter().zip(&prof.bands).all(|(l, b)| *b <= prof.fitted_c * (l + p.regular_eps) + 1e-15);
        ctx.check(
            "single constant covers every width",
            prof.fitted_c.is_finite() && prof.fitted_c > 0.0 && covered,
            format!("C = {}", fmt_f(prof.fitted_c)),
        );
        if let Some(max) = p.max_linear_deviation {
            ctx.check("bands are linear in width", dev <= max, format!("max relative deviation {} vs {max}", fmt_f(dev)));
        }
        if p.uniform_check {
            if n > UNIFORM_CHECK_LIMIT {
                return Err(HarnessError::Config(format!("uniform check needs n <= {UNIFORM_CHECK_LIMIT}")));
            }
            let uniform = IsingModel::uniform(n);
            let atoms = exact_linear_atoms(&uniform, &w)?;
            let mc = anticoncentration_profile(&uniform, &w, &p.widths, p.regular_eps, p.samples, &ctx.stream("anticonc_uniform"))?;
            let mut worst = 0.0f64;
            for (l, b) in mc.widths.iter().zip(&mc.bands) {
                let exact = band_sup(&atoms, *l);
                let se = (exact * (1.0 - exact) / p.samples as f64).sqrt().max(f64::MIN_POSITIVE);
                ctx.record(&format!("width={l}"), "uniform_band_mc", *b, Some(se));
                ctx.record(&format!("width={l}"), "uniform_band_exact", exact, None);
                worst = worst.max((b - exact).abs() / se);
            }
            ctx.check(
                "uniform bands match enumeration",
                worst <= BAND_SE,
                format!("worst deviation {worst:.2} standard errors"),
            );
        }
    }

    if let Some(sg) = &p.subgaussian {
        let mut rng = ctx.stream("directions").rng();
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(sg.directions);
        for k in 0..sg.directions {
            let v: Vec<f64> = if k == 0 {
                (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
            } else {
                (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            dirs.push(v.into_iter().map(|x| x / norm).collect());
        }
        let rep = subgaussian_tail_audit(&model, &dirs, sg.samples, &ctx.stream("subgaussian"))?;
        let params = format!("directions={};samples={}", sg.directions, sg.samples);
        ctx.record(&params, "subgaussian_worst", rep.worst, None);
        ctx.record(&params, "subgaussian_worst_direction", rep.worst_direction as f64, None);
        let best = rep.constants.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = rep.worst / best;
        ctx.record(&params, "subgaussian_spread", spread, None);
        ctx.check(
            "subgaussian constants uniform across directions",
            rep.worst.is_finite() && best > 0.0 && spread <= sg.max_ratio,
            format!("max/min fitted C {} vs {}", fmt_f(spread), sg.max_ratio),
        );
    }
    Ok(())
}
