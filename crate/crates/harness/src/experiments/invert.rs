use spinlearn_core::inference::exact_distribution;
use spinlearn_core::inverter::{inv_samp, inverter_degree_audit, preimage_enumerate, preimage_uniformity_audit, pushforward_density};
use spinlearn_core::samplers::{ExactSampler, Seed};
use spinlearn_core::Spin;

use super::{build_model, build_sampler, fmt_f, Ctx};
use crate::error::Result;

/// Preimages are enumerated, and the pushforward audited, up to this many
/// seed bits.
const ENUMERATE_BITS: usize = 20;
/// Seeds are audited exhaustively up to this many bits, by sampling above.
const PUSHFORWARD_EXHAUSTIVE_BITS: usize = 16;
const PUSHFORWARD_SAMPLES: usize = 10_000;
/// Configurations whose preimage uniformity is audited.
const UNIFORMITY_TARGETS: usize = 3;

pub(super) fn run(ctx: &mut Ctx<'_>) -> Result<()> {
    let model = build_model(ctx)?;
    let sp = ctx.cfg.sampler.clone();
    let ip = ctx.cfg.inverter.clone();
    let (plan, sampler) = build_sampler(&model, &sp)?;
    let n = model.n();
    let s = plan.seed_len;
    let bits = n * s as usize;
    let params = format!("n={n};s={s};radius={}", plan.radius);

    let exact = ExactSampler::new(&model)?;
    let draw_stream = ctx.stream("invert_draws");
    let inv_stream = ctx.stream("invert_aux");
    let draws: Vec<Vec<Spin>> = spinlearn_core::exec::map_range(ip.draws, |t| exact.sample_indexed(&draw_stream, t as u64))
        .into_iter()
        .collect::<spinlearn_core::Result<_>>()?;
    let outcomes = spinlearn_core::exec::map_slice(&draws, |y| -> Result<(bool, bool)> {
        let r = inv_samp(&sampler, y, &inv_stream, ip.attempt_cap)?;
        Ok(match &r.seed {
            Some(z) => (true, sampler.sample(z)?.spins == *y),
            None => (false, false),
        })
    });
    let (mut inverted, mut roundtrips) = (0usize, 0usize);
    for o in outcomes {
        let (ok, rt) = o?;
        inverted += usize::from(ok);
        roundtrips += usize::from(rt);
    }
    ctx.record(&params, "draws", ip.draws as f64, None);
    ctx.record(&params, "inversions", inverted as f64, None);
    ctx.record(&params, "roundtrips", roundtrips as f64, None);
    ctx.check(
        "inversion roundtrip",
        roundtrips == ip.draws,
        format!("{roundtrips}/{} draws round-trip", ip.draws),
    );

    if n <= ip.uniformity_max && s as usize <= ip.uniformity_max {
        let mut worst = 0.0f64;
        for (k, y) in draws.iter().take(UNIFORMITY_TARGETS).enumerate() {
            let tv = preimage_uniformity_audit(&sampler, y, ip.uniformity_trials, &ctx.stream("uniformity").child(&k.to_string()))?;
            ctx.record(&format!("{params};target={k}"), "preimage_uniformity_tv", tv, None);
            worst = worst.max(tv);
        }
        ctx.check(
            "preimage uniformity",
            worst <= ip.max_uniformity_tv,
            format!("worst tv {} at {} trials vs {}", fmt_f(worst), ip.uniformity_trials, ip.max_uniformity_tv),
        );
    }

    if bits <= ENUMERATE_BITS {
        let mut factored = 0usize;
        let mut targets = 0usize;
        for m in 0..1u64 << n {
            let y = spinlearn_core::model::spins_from_mask(m, n);
            let pre = preimage_enumerate(&sampler, &y)?;
            targets += 1;
            factored += usize::from(pre.is_product());
        }
        ctx.record(&params, "factorized_targets", factored as f64, None);
        ctx.check("preimage factorization", factored == targets, format!("{factored}/{targets} configurations"));

        let mu = exact_distribution(&model)?;
        let exhaustive = bits <= PUSHFORWARD_EXHAUSTIVE_BITS;
        let count = if exhaustive { 1usize << bits } else { PUSHFORWARD_SAMPLES };
        let push_stream = ctx.stream("pushforward");
        let scale = 2f64.powi(bits as i32);
        let worst = spinlearn_core::exec::map_range(count, |k| {
            let z = if exhaustive {
                Seed::from_code(n, s, k as u128)
            } else {
                Seed::uniform(n, s, &mut push_stream.substream(k as u64).rng())
            };
            pushforward_density(&sampler, &mu, &z) * scale
        })
        .into_iter()
        .fold(0.0f64, f64::max);
        let bound = sp.eps.exp();
        ctx.record(&params, "pushforward_ratio", worst, None);
        ctx.check(
            "pushforward density within exp(eps)*2^-sn",
            worst <= bound,
            format!("max density*2^sn {} vs {} over {count} seeds", fmt_f(worst), fmt_f(bound)),
        );
    }

    let bases: Vec<Vec<Spin>> = draws.iter().take(ip.degree_bases).cloned().collect();
    let stream = ctx.stream("degree_audit");
    match inverter_degree_audit(&sampler, &bases, &stream) {
        Ok(audit) => {
            ctx.record(&params, "inverter_max_degree", audit.max as f64, None);
            ctx.record(&params, "degree_checks", audit.checks as f64, None);
            ctx.check(
                "inverter degree",
                audit.max == plan.max_cond_set(),
                format!("max |T_i| {} over {} flips", audit.max, audit.checks),
            );
        }
        Err(spinlearn_core::Error::Violation(msg)) => ctx.check("inverter degree", false, msg),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}
