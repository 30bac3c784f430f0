use std::io::{self, Write};

use serde::Serialize;

use super::metrics::MetricsReport;
use super::runner::{run_with, RunOptions};
use super::scenario::Scenario;
use super::SimError;
use crate::par::{self, Execution};

/// Mean and sample standard deviation of one metric over the runs that define it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub runs: Vec<MetricsReport>,
    pub summary: Vec<MetricSummary>,
}

/// Scalar per-run values that are aggregated across seeds.
fn scalars(m: &MetricsReport) -> Vec<(&'static str, Option<f64>)> {
    let n = &m.network;
    let sessions = &m.sessions;
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    vec![
        ("tsa_attempts", Some(n.tsa_attempts as f64)),
        ("tsa_reselections", Some(n.tsa_reselections as f64)),
        ("tsa_collisions", Some(n.tsa_collisions as f64)),
        ("tsa_no_free", Some(n.tsa_no_free as f64)),
        ("sessions_established", Some(n.sessions_established as f64)),
        ("sessions_failed", Some(n.sessions_failed as f64)),
        ("frames_decoded", Some(n.frames_decoded as f64)),
        ("frames_lost", Some(n.frames_lost as f64)),
        ("collisions_perceived", Some(n.collisions_perceived as f64)),
        ("convergence_time_us", Some(n.convergence_time_us as f64)),
        ("utilization_mgmt", Some(m.utilization.mgmt)),
        ("utilization_rt", Some(m.utilization.rt)),
        ("utilization_be", Some(m.utilization.be)),
        (
            "establishment_latency_us",
            mean(sessions.iter().filter_map(|s| s.establishment_latency_us).map(|v| v as f64).collect()),
        ),
        ("delivery_ratio", mean(sessions.iter().filter_map(|s| s.delivery_ratio).collect())),
        ("latency_p95_us", mean(sessions.iter().filter_map(|s| s.latency_p95_us).map(|v| v as f64).collect())),
        ("latency_max_us", mean(sessions.iter().filter_map(|s| s.latency_max_us).map(|v| v as f64).collect())),
    ]
}

fn summarise(runs: &[MetricsReport]) -> Vec<MetricSummary> {
    let Some(first) = runs.first() else { return Vec::new() };
    let names: Vec<&str> = scalars(first).into_iter().map(|(k, _)| k).collect();
    let per_run: Vec<Vec<Option<f64>>> =
        runs.iter().map(|m| scalars(m).into_iter().map(|(_, v)| v).collect()).collect();
    names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let xs: Vec<f64> = per_run.iter().filter_map(|r| r[k]).collect();
            let n = xs.len();
            let mean = if n == 0 { f64::NAN } else { xs.iter().sum::<f64>() / n as f64 };
            let stddev =
                if n < 2 { 0.0 } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
            MetricSummary { metric: name.to_string(), runs: n, mean, stddev }
        })
        .collect()
}

/// Runs `scenario` once per seed. Results are in seed order whatever `exec` is.
pub fn sweep(scenario: &Scenario, seeds: &[u64], exec: Execution) -> Result<SweepReport, SimError> {
    scenario.validate()?;
    let runs = par::map(exec, seeds.to_vec(), |seed| {
        let mut s = scenario.clone();
        s.seed = seed;
        run_with(&s, RunOptions { keep_trace: false }).map(|o| o.metrics)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let summary = summarise(&runs);
    Ok(SweepReport { runs, summary })
}

impl SweepReport {
    /// `metric,runs,mean,stddev` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.summary {
            w.serialize(s).map_err(io::Error::other)?;
        }
        w.flush()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in &self.summary {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}
