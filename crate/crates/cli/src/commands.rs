use rayon::prelude::*;

use gwlab_core::audit::{lemma_audit, rate_check, UnconditionedSample, HARD_SIGMAS};
use gwlab_core::bounds::{
    p_inf, threshold_search, zero_regeneration_probability, BoundReport, CVariant,
};
use gwlab_core::enumerate::{enumerate_paths, MAX_ENUMERATION_LEN};
use gwlab_core::regen::default_margin;
use gwlab_core::report::{Report, Row, Verdict};
use gwlab_core::rng::replica_seed;
use gwlab_core::sampler::{RejectionSampler, SegmentSampler};
use gwlab_core::segments::{
    classify, compare_tallies, gap_estimator, prob_table, speed_gap, speed_regen, SegmentTally,
    ERGODIC_BATCHES, MIN_ERGODIC_STEPS,
};
use gwlab_core::stats::{combined_sigmas, Estimate};
use gwlab_core::{BiasParams, OffspringDistribution, RegenConfig, Walk};

use crate::{BoundsArgs, CliError, EnumerateArgs, LemmaArgs, RunArgs};

const DEFAULT_SEGMENTS: u64 = 1_000_000;
/// Significance level of the one-sided positivity test.
const GAP_LEVEL: f64 = 0.01;
/// Prefix length used to validate the window coefficient before auditing.
const WINDOW_ORACLE_LEN: u32 = 16;

type CliResult<T> = Result<T, CliError>;

struct Setup {
    dist: OffspringDistribution,
    params: BiasParams,
    regen: RegenConfig,
    seeds: Vec<u64>,
}

fn setup(a: &RunArgs, command: &str) -> CliResult<(Setup, Report)> {
    if a.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    if a.steps < MIN_ERGODIC_STEPS {
        return Err(CliError::Usage(format!(
            "--steps must be at least {MIN_ERGODIC_STEPS}"
        )));
    }
    let params = BiasParams::transient(a.beta, a.eps)?;
    let margin = a.margin.unwrap_or_else(|| default_margin(a.beta));
    let regen = RegenConfig::new(a.regen_mode.into(), margin);
    let seeds: Vec<u64> = (0..a.replicas).map(|i| replica_seed(a.seed, i)).collect();

    let mut report = Report::new(command);
    report.set("dist", &a.dist);
    report.set("beta", a.beta);
    report.set("eps", a.eps);
    report.set("steps", a.steps);
    report.set("replicas", a.replicas);
    if let Some(s) = a.segments {
        report.set("segments", s);
    }
    report.set("seed", a.seed);
    report.set("regen_mode", regen.mode);
    report.set("margin", margin);
    report.seeds = seeds.clone();
    Ok((
        Setup {
            dist: a.dist.clone(),
            params,
            regen,
            seeds,
        },
        report,
    ))
}

/// Splits `total` into `parts` near-equal shares, larger shares first.
fn shares(total: u64, parts: u64) -> Vec<u64> {
    (0..parts)
        .map(|i| total / parts + u64::from(i < total % parts))
        .collect()
}

struct ReplicaOutcome {
    tally: SegmentTally,
    invalidations: u64,
    steps: u64,
}

fn merge(outcomes: &[ReplicaOutcome]) -> (SegmentTally, u64, u64) {
    let mut tally = SegmentTally::default();
    let (mut inv, mut steps) = (0, 0);
    for o in outcomes {
        tally.merge(&o.tally);
        inv += o.invalidations;
        steps += o.steps;
    }
    (tally, inv, steps)
}

fn segment_runs(s: &Setup, total: u64) -> CliResult<Vec<ReplicaOutcome>> {
    let targets = shares(total, s.seeds.len() as u64);
    s.seeds
        .par_iter()
        .zip(targets)
        .map(|(&seed, n)| {
            let mut sampler = SegmentSampler::new(&s.dist, s.params, s.regen, seed)?;
            let mut tally = SegmentTally::default();
            let params = s.params;
            sampler.run_segments(n, &mut |seg| tally.add(&classify(seg, params)))?;
            Ok(ReplicaOutcome {
                tally,
                invalidations: sampler.invalidations(),
                steps: sampler.time(),
            })
        })
        .collect()
}

fn structure_rows(tally: &SegmentTally, invalidations: u64, steps: u64) -> Vec<Row> {
    let mut rows: Vec<Row> = tally
        .violations
        .named()
        .iter()
        .map(|&(name, count)| {
            Row::info(format!("violations_{name}"), count as f64)
                .with_bound(0.0)
                .with_verdict(Verdict::from_check(count == 0))
        })
        .collect();
    rows.push(Row::info("segments", tally.segments() as f64));
    rows.push(Row::info("steps", steps as f64));
    rows.push(Row::info("invalidated_regenerations", invalidations as f64));
    rows
}

fn table_rows(tally: &SegmentTally, s: &Setup) -> CliResult<Vec<Row>> {
    let table = prob_table(tally, s.params.beta, s.regen.mode)?;
    let mut rows = Vec::new();
    for r in &table.rows {
        let mut row = Row::info(format!("P[{}]", r.name), r.value).with_stderr(r.stderr);
        if let Some(b) = r.bound {
            row = row.with_bound(b);
        }
        rows.push(row);
        rows.push(Row::info(format!("P[{}].wilson_lo", r.name), r.wilson_lo));
        rows.push(Row::info(format!("P[{}].wilson_hi", r.name), r.wilson_hi));
    }
    Ok(rows)
}

fn check_against(name: &str, e: &Estimate, target: f64) -> Row {
    let m = e.sigmas_from(target);
    Row::estimate(name, e)
        .with_bound(target)
        .with_margin(m)
        .with_verdict(Verdict::from_check(m <= HARD_SIGMAS))
}

pub fn simulate(a: &RunArgs) -> CliResult<Report> {
    let (s, mut report) = setup(a, "simulate")?;
    let outcomes: Vec<(ReplicaOutcome, Estimate, Estimate)> = s
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut sampler = SegmentSampler::new(&s.dist, s.params, s.regen, seed)?
                .with_ergodic(a.steps, ERGODIC_BATCHES)?;
            let mut tally = SegmentTally::default();
            let params = s.params;
            sampler.run_steps(a.steps, &mut |seg| tally.add(&classify(seg, params)))?;
            let erg = sampler.ergodic().expect("recorder attached");
            Ok((
                ReplicaOutcome {
                    tally,
                    invalidations: sampler.invalidations(),
                    steps: sampler.time(),
                },
                erg.estimate(Walk::Beta)?,
                erg.estimate(Walk::BetaEps)?,
            ))
        })
        .collect::<CliResult<_>>()?;
    let ergodic_beta: Vec<Estimate> = outcomes.iter().map(|o| o.1.clone()).collect();
    let ergodic_beta_eps: Vec<Estimate> = outcomes.iter().map(|o| o.2.clone()).collect();
    let replicas: Vec<ReplicaOutcome> = outcomes.into_iter().map(|o| o.0).collect();
    let (tally, invalidations, steps) = merge(&replicas);

    let mut rows = Vec::new();
    for (label, walk, ergodic, bias) in [
        ("beta", Walk::Beta, &ergodic_beta, s.params.beta),
        (
            "beta_eps",
            Walk::BetaEps,
            &ergodic_beta_eps,
            s.params.beta + s.params.eps,
        ),
    ] {
        let erg = Estimate::pool(ergodic, "ergodic average, pooled")?;
        let reg = speed_regen(&tally, walk)?;
        rows.push(Row::estimate(format!("ergodic_{label}"), &erg));
        rows.push(Row::estimate(format!("regen_{label}"), &reg));
        let agree = combined_sigmas(&erg, &reg);
        rows.push(
            Row::info(format!("agreement_{label}"), agree)
                .with_bound(HARD_SIGMAS)
                .with_margin(agree)
                .with_verdict(Verdict::from_check(agree <= HARD_SIGMAS)),
        );
        if s.dist.is_point_mass() {
            // A deterministic d-ary tree projects to a (d*bias)-biased walk
            // on the half-line.
            let b = f64::from(s.dist.min_degree()) * bias;
            let exact = (b - 1.0) / (b + 1.0);
            rows.push(check_against(
                &format!("exact_vs_ergodic_{label}"),
                &erg,
                exact,
            ));
            rows.push(check_against(
                &format!("exact_vs_regen_{label}"),
                &reg,
                exact,
            ));
        }
    }
    if let Ok(gap) = speed_gap(&tally) {
        rows.push(Row::estimate("speed_gap", &gap));
    }
    report.section("speed", rows);
    report.section("structure", structure_rows(&tally, invalidations, steps));
    if let Ok(rows) = table_rows(&tally, &s) {
        report.section("table", rows);
    }
    Ok(report)
}

pub fn monotonicity(a: &RunArgs) -> CliResult<Report> {
    let (s, mut report) = setup(a, "monotonicity")?;
    let total = a.segments.unwrap_or(DEFAULT_SEGMENTS);
    report.set("segments", total);
    let (tally, invalidations, steps) = merge(&segment_runs(&s, total)?);
    let g = gap_estimator(&tally)?;
    let mut rows = vec![
        Row::estimate("mean_gap", &g.estimate),
        Row::info("z", g.z),
        Row::info("p_value", g.p_value)
            .with_bound(GAP_LEVEL)
            .with_verdict(Verdict::from_check(g.p_value < GAP_LEVEL)),
    ];
    if let Ok(gap) = speed_gap(&tally) {
        rows.push(Row::estimate("speed_gap", &gap));
    }
    report.section("gap", rows);
    report.section("structure", structure_rows(&tally, invalidations, steps));
    Ok(report)
}

pub fn rate(a: &RunArgs) -> CliResult<Report> {
    let (s, mut report) = setup(a, "rate")?;
    let total = a.segments.unwrap_or(DEFAULT_SEGMENTS);
    report.set("segments", total);
    let (tally, invalidations, steps) = merge(&segment_runs(&s, total)?);
    report.section("rate", rate_check(&tally, s.params, &s.dist)?);
    report.section("structure", structure_rows(&tally, invalidations, steps));
    Ok(report)
}

struct TrialOutcome {
    unconditioned: UnconditionedSample,
    conditioned: SegmentTally,
}

pub fn lemmas(a: &LemmaArgs) -> CliResult<Report> {
    let (s, mut report) = setup(&a.run, "lemmas")?;
    let total = a.run.segments.unwrap_or(DEFAULT_SEGMENTS);
    report.set("segments", total);
    report.set("trials", a.trials);
    let window = enumerate_paths(WINDOW_ORACLE_LEN, s.regen.mode)?.validated_window();
    report.set("validated_window", window);

    let (tally, invalidations, steps) = merge(&segment_runs(&s, total)?);
    let trial_shares = shares(a.trials, s.seeds.len() as u64);
    let trials: Vec<TrialOutcome> = s
        .seeds
        .par_iter()
        .zip(trial_shares)
        .map(|(&seed, n)| {
            let mut rs = RejectionSampler::new(&s.dist, s.params, s.regen, replica_seed(seed, 1))?;
            let mut out = TrialOutcome {
                unconditioned: UnconditionedSample::default(),
                conditioned: SegmentTally::default(),
            };
            for _ in 0..n {
                let t = rs.trial()?;
                out.unconditioned.add(&t);
                if t.zero_sr {
                    out.conditioned.add(&t.summary);
                }
            }
            Ok(out)
        })
        .collect::<CliResult<_>>()?;
    let mut unconditioned = UnconditionedSample::default();
    let mut conditioned = SegmentTally::default();
    for t in &trials {
        unconditioned.merge(&t.unconditioned);
        conditioned.merge(&t.conditioned);
    }

    report.section(
        "audit",
        lemma_audit(&tally, &unconditioned, s.params, &s.dist, window)?,
    );

    let freq = gwlab_core::stats::proportion(unconditioned.zero_sr, unconditioned.trials);
    let exact = zero_regeneration_probability(s.params.beta, s.regen.mode.is_strict());
    let mut zero = vec![check_against("zero_sr_frequency_vs_exact", &freq, exact)];
    if let Ok(paper) = p_inf(s.params.beta, 1) {
        zero.push(
            Row::estimate("zero_sr_frequency_vs_escape_weight", &freq)
                .with_bound(paper)
                .with_margin(freq.sigmas_from(paper)),
        );
    }
    report.section("zero_sr", zero);

    let mut cross = Vec::new();
    if conditioned.segments() > 0 && tally.segments() > 0 {
        for c in compare_tallies(&tally, &conditioned) {
            cross.push(
                Row::info(c.name, c.left - c.right)
                    .with_bound(HARD_SIGMAS)
                    .with_margin(c.sigmas)
                    .with_verdict(Verdict::from_check(c.sigmas <= HARD_SIGMAS)),
            );
        }
    }
    cross.push(Row::info(
        "conditioned_trials",
        conditioned.segments() as f64,
    ));
    report.section("cross_oracle", cross);
    report.section("structure", structure_rows(&tally, invalidations, steps));
    if let Ok(rows) = table_rows(&tally, &s) {
        report.section("table", rows);
    }
    Ok(report)
}

fn beta_grid(a: &BoundsArgs) -> CliResult<Vec<f64>> {
    if let Some(r) = &a.beta_range {
        let [lo, hi, n] = r[..] else {
            return Err(CliError::Usage("--beta-range takes LO,HI,N".into()));
        };
        if !(lo > 0.0 && hi >= lo && n >= 1.0 && n.fract() == 0.0) {
            return Err(CliError::Usage(format!("bad --beta-range {lo},{hi},{n}")));
        }
        let n = n as usize;
        if n == 1 {
            return Ok(vec![lo]);
        }
        let step = (hi / lo).ln() / (n - 1) as f64;
        return Ok((0..n).map(|i| lo * (step * i as f64).exp()).collect());
    }
    Ok(a.beta.clone())
}

pub fn bounds(a: &BoundsArgs) -> CliResult<Report> {
    let d = a.d.unwrap_or_else(|| a.dist.min_degree());
    if d == 0 {
        return Err(CliError::Usage("--d must be at least 1".into()));
    }
    let grid = beta_grid(a)?;
    let mut report = Report::new("bounds");
    report.set("dist", &a.dist);
    report.set(
        "beta",
        grid.iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";"),
    );
    report.set("eps", a.eps);
    report.set("d", d);

    for &beta in &grid {
        let b = BoundReport::compute(&a.dist, beta, a.eps, d).map_err(|e| match e {
            gwlab_core::Error::NotTransient(x) => {
                CliError::Usage(format!("bounds require d*beta > 1, got {x}"))
            }
            other => other.into(),
        })?;
        let opt = |name: &str, v: Option<f64>| match v {
            Some(x) => Row::info(name, x),
            None => Row::info(name, f64::NAN),
        };
        let mut rows = vec![
            Row::info("p1", b.p1),
            Row::info("q1", b.q1),
            Row::info("p_inf", b.p_inf),
            Row::info("expected_eps", b.expected_eps),
            Row::info("single_return_lower", b.single_return_lower),
            Row::info("multi_return_coefficient", b.multi_return_coefficient),
        ];
        for (k, v) in (2..).zip(&b.multi_return_upper) {
            rows.push(Row::info(format!("multi_return_upper_{k}"), *v));
        }
        rows.push(Row::info("tail_base", b.tail_base).with_bound(1.0));
        rows.push(Row::info("tail_valid", f64::from(u8::from(b.tail_valid))));
        rows.push(opt("series_paper", b.series_paper));
        rows.push(opt("series_direct", b.series_direct));
        rows.push(opt("c_paper", b.c_paper).with_bound(1.0));
        rows.push(opt("c_direct", b.c_direct).with_bound(1.0));
        rows.push(Row::info("predicted_rate", b.predicted_rate));
        report.section(format!("beta={beta}"), rows);
    }

    let mut rows = Vec::new();
    for variant in [CVariant::Paper, CVariant::Direct] {
        let t = threshold_search(d, variant)?;
        let label = match variant {
            CVariant::Paper => "paper",
            CVariant::Direct => "direct",
        };
        rows.push(
            Row::info(format!("threshold_{label}"), t.beta)
                .with_verdict(Verdict::from_check(t.certified)),
        );
        rows.push(Row::info(
            format!("threshold_{label}_times_d"),
            t.beta * f64::from(d),
        ));
    }
    report.section("thresholds", rows);
    Ok(report)
}

pub fn enumerate(a: &EnumerateArgs) -> CliResult<Report> {
    if a.max_len == 0 || a.max_len > MAX_ENUMERATION_LEN {
        return Err(CliError::Usage(format!(
            "--max-len must be in 1..={MAX_ENUMERATION_LEN}"
        )));
    }
    let table = enumerate_paths(a.max_len, a.mode.into())?;
    let mut report = Report::new("enumerate");
    report.set("max_len", a.max_len);
    report.set("mode", table.mode);

    let mut summary = vec![
        Row::info("prefixes", table.prefixes as f64),
        Row::info("resolved", table.resolved as f64),
        Row::info("validated_window", f64::from(table.validated_window())),
    ];
    for w in [3, 4] {
        summary.push(Row::info(
            format!("window_{w}_exceptions"),
            table.window_exceptions(w) as f64,
        ));
    }
    report.section("summary", summary);

    let max_tau = table
        .max_tau_by_b()
        .into_iter()
        .map(|(b, tau)| {
            Row::info(format!("b={b}"), f64::from(tau)).with_bound(f64::from(3 * b + 1))
        })
        .collect();
    report.section("max_tau1", max_tau);

    let pairs = table
        .counts
        .iter()
        .map(|(&(b, tau), &c)| Row::info(format!("b={b},tau1={tau}"), c as f64))
        .collect();
    report.section("counts", pairs);
    let zero = table
        .zero_sr_counts
        .iter()
        .map(|(&(b, tau), &c)| Row::info(format!("b={b},tau1={tau}"), c as f64))
        .collect();
    report.section("zero_sr_counts", zero);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shares_cover_total() {
        assert_eq!(shares(10, 3), vec![4, 3, 3]);
        assert_eq!(shares(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(shares(9, 1), vec![9]);
    }
}
