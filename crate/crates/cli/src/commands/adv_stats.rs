use serde::Serialize;

use spectrakit::advantage::{
    histogram, normal_mass, read_rollouts, summarize, verdict, AdvantageSummary, BinRule,
    EstimatorConfig, Granularity, Histogram, KlDirection, SilvermanConfig, Thresholds,
    TrainabilityVerdict,
};
use spectrakit::{Error, GaeParams, Result};

use super::pair::require_path;
use crate::args::AdvStatsArgs;
use crate::report::{create_dir, num, write_json, Table};

const ENTROPY_NOTE: &str = "Entropy and KL are histogram estimates in nats (see \
summary.estimator_config); the default thresholds (entropy > 2.55, KL < 0.16) come without an \
estimator, so calibrate on runs with a known outcome before relying on the verdict.";

pub struct Prepared {
    args: AdvStatsArgs,
    source: Source,
    summary: AdvantageSummary,
    hist: Histogram,
    verdict: TrainabilityVerdict,
    thresholds: Thresholds,
}

#[derive(Serialize)]
struct Source {
    level: Granularity,
    /// `advantages` when the log carries them, `gae` when recomputed from traces.
    kind: &'static str,
    traces: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

#[derive(Serialize)]
struct Report<'a> {
    source: &'a Source,
    summary: &'a AdvantageSummary,
    thresholds: &'a Thresholds,
    verdict: &'a TrainabilityVerdict,
    entropy_calibration: &'static str,
}

fn parse_bins(s: &str) -> Result<BinRule> {
    if s.eq_ignore_ascii_case("fd") {
        return Ok(BinRule::FreedmanDiaconis);
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(BinRule::Fixed(n)),
        _ => Err(Error::InvalidArgument(format!(
            "--bins must be `fd` or a positive count, got `{s}`"
        ))),
    }
}

fn parse_level(s: &str) -> Result<Granularity> {
    match s {
        "step" => Ok(Granularity::Step),
        "token" => Ok(Granularity::Token),
        _ => Err(Error::InvalidArgument(format!(
            "--level must be step or token, got `{s}`"
        ))),
    }
}

fn parse_direction(s: &str) -> Result<KlDirection> {
    match s {
        "empirical-first" => Ok(KlDirection::EmpiricalFirst),
        "normal-first" => Ok(KlDirection::NormalFirst),
        _ => Err(Error::InvalidArgument(format!(
            "--kl-direction must be empirical-first or normal-first, got `{s}`"
        ))),
    }
}

pub fn prepare(args: AdvStatsArgs) -> Result<Prepared> {
    require_path(&args.input, "input")?;
    require_path(&args.out, "out")?;
    let level = parse_level(&args.level)?;
    let cfg = EstimatorConfig {
        bins: parse_bins(&args.bins)?,
        kl_direction: parse_direction(&args.kl_direction)?,
        min_samples: args.min_samples,
        silverman: SilvermanConfig {
            bootstrap: args.bootstrap,
            seed: args.seed,
            ..SilvermanConfig::default()
        },
        ..EstimatorConfig::default()
    };
    let thresholds = Thresholds::resolve(&args.thresholds)?;
    let gae = GaeParams::new(args.gamma, args.lambda)?;
    let data = read_rollouts(&args.input)?;
    let from_traces = data.advantages.is_empty();
    let source = Source {
        level,
        kind: if from_traces { "gae" } else { "advantages" },
        traces: data.traces.len(),
        gamma: from_traces.then_some(args.gamma),
        lambda: from_traces.then_some(args.lambda),
    };
    let samples = data.samples(gae);
    if samples.len() < cfg.min_samples {
        return Err(Error::TooFewSamples {
            n: samples.len(),
            min: cfg.min_samples,
        });
    }
    let summary = summarize(&samples, &cfg)?;
    let hist = histogram(&samples, &cfg)?;
    let verdict = verdict(&summary, &thresholds);
    Ok(Prepared {
        args,
        source,
        summary,
        hist,
        verdict,
        thresholds,
    })
}

fn write_histogram(path: &std::path::Path, h: &Histogram, s: &AdvantageSummary) -> Result<()> {
    let masses = h.masses();
    let mut t = Table::create(
        path,
        &[
            "bin",
            "left",
            "right",
            "count",
            "mass",
            "density",
            "normal_mass",
            "normal_density",
        ],
    )?;
    for i in 0..h.counts.len() {
        let (a, b) = (h.edges[i], h.edges[i + 1]);
        let q = normal_mass(a, b, s.mu, s.sd);
        t.row([
            i.to_string(),
            num(a),
            num(b),
            h.counts[i].to_string(),
            num(masses[i]),
            num(masses[i] / h.width),
            num(q),
            num(q / h.width),
        ])?;
    }
    t.finish()
}

pub fn execute(p: Prepared) -> Result<()> {
    let (summary, hist) = (&p.summary, &p.hist);
    let out = &p.args.out;
    create_dir(out)?;
    write_histogram(&out.join("histogram.csv"), hist, summary)?;
    if p.args.emit_plot_data {
        let dir = out.join("plot");
        create_dir(&dir)?;
        let mut t = Table::create(
            &dir.join("advantage_density.csv"),
            &["center", "empirical_density", "normal_density"],
        )?;
        let masses = hist.masses();
        for i in 0..hist.counts.len() {
            let (a, b) = (hist.edges[i], hist.edges[i + 1]);
            t.row([
                num(0.5 * (a + b)),
                num(masses[i] / hist.width),
                num(normal_mass(a, b, summary.mu, summary.sd) / hist.width),
            ])?;
        }
        t.finish()?;
    }
    let report = Report {
        source: &p.source,
        summary,
        thresholds: &p.thresholds,
        verdict: &p.verdict,
        entropy_calibration: ENTROPY_NOTE,
    };
    write_json(
        &out.join("adv_stats.json"),
        "adv-stats",
        p.args.stamp,
        &p.args,
        &report,
    )
}
