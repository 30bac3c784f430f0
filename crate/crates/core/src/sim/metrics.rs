use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Voice accounting of one receiver of one session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReceiverMetrics {
    pub node: usize,
    pub delivered: u64,
    pub lost: u64,
    pub latency_p50_us: Option<u64>,
    pub latency_p95_us: Option<u64>,
    pub latency_max_us: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub node: usize,
    pub session_id: u16,
    /// `broadcast` or the destination node index.
    pub destination: String,
    pub press_us: u64,
    pub established: bool,
    pub establishment_latency_us: Option<u64>,
    pub failed: bool,
    pub closed: bool,
    pub generated: u64,
    pub transmitted: u64,
    pub dropped_at_release: u64,
    pub queued_at_end: u64,
    pub delivered: u64,
    pub lost: u64,
    pub delivery_ratio: Option<f64>,
    pub latency_p50_us: Option<u64>,
    pub latency_p95_us: Option<u64>,
    pub latency_max_us: Option<u64>,
    pub receivers: Vec<ReceiverMetrics>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub tsa_attempts: u64,
    pub tsa_reselections: u64,
    pub tsa_collisions: u64,
    pub tsa_no_free: u64,
    pub tsa_confirms: u64,
    pub sessions_established: u64,
    pub sessions_failed: u64,
    pub ptt_res_unmatched: u64,
    pub ptt_res_unsendable: u64,
    pub rt_data_dropped: u64,
    pub duplicates_dropped: u64,
    pub frames_decoded: u64,
    pub frames_lost: u64,
    pub collisions_perceived: u64,
    /// End of the last slot with a perceived or reported collision, 0 if none.
    pub convergence_time_us: u64,
}

/// Fraction of slot occurrences carrying at least one transmission.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    pub mgmt: f64,
    pub rt: f64,
    pub be: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub duration_us: u64,
    pub nodes: usize,
    pub network: NetworkMetrics,
    pub utilization: Utilization,
    pub sessions: Vec<SessionMetrics>,
}

/// One `scope,subject,metric,value` row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub scope: String,
    pub subject: String,
    pub metric: String,
    pub value: String,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsReport {
    /// Long-format rows in a fixed order.
    pub fn rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        let mut push = |scope: &str, subject: String, metric: &str, value: String| {
            rows.push(MetricRow { scope: scope.into(), subject, metric: metric.into(), value })
        };
        push("run", String::new(), "seed", self.seed.to_string());
        push("run", String::new(), "duration_us", self.duration_us.to_string());
        push("run", String::new(), "nodes", self.nodes.to_string());
        let n = &self.network;
        for (k, v) in [
            ("tsa_attempts", n.tsa_attempts),
            ("tsa_reselections", n.tsa_reselections),
            ("tsa_collisions", n.tsa_collisions),
            ("tsa_no_free", n.tsa_no_free),
            ("tsa_confirms", n.tsa_confirms),
            ("sessions_established", n.sessions_established),
            ("sessions_failed", n.sessions_failed),
            ("ptt_res_unmatched", n.ptt_res_unmatched),
            ("ptt_res_unsendable", n.ptt_res_unsendable),
            ("rt_data_dropped", n.rt_data_dropped),
            ("duplicates_dropped", n.duplicates_dropped),
            ("frames_decoded", n.frames_decoded),
            ("frames_lost", n.frames_lost),
            ("collisions_perceived", n.collisions_perceived),
            ("convergence_time_us", n.convergence_time_us),
        ] {
            push("network", String::new(), k, v.to_string());
        }
        push("utilization", String::new(), "mgmt", self.utilization.mgmt.to_string());
        push("utilization", String::new(), "rt", self.utilization.rt.to_string());
        push("utilization", String::new(), "be", self.utilization.be.to_string());
        for s in &self.sessions {
            let subject = format!("n{}/s{}", s.node, s.session_id);
            for (k, v) in [
                ("destination", s.destination.clone()),
                ("press_us", s.press_us.to_string()),
                ("established", s.established.to_string()),
                ("establishment_latency_us", opt(s.establishment_latency_us)),
                ("failed", s.failed.to_string()),
                ("closed", s.closed.to_string()),
                ("generated", s.generated.to_string()),
                ("transmitted", s.transmitted.to_string()),
                ("dropped_at_release", s.dropped_at_release.to_string()),
                ("queued_at_end", s.queued_at_end.to_string()),
                ("delivered", s.delivered.to_string()),
                ("lost", s.lost.to_string()),
                ("delivery_ratio", opt(s.delivery_ratio)),
                ("latency_p50_us", opt(s.latency_p50_us)),
                ("latency_p95_us", opt(s.latency_p95_us)),
                ("latency_max_us", opt(s.latency_max_us)),
            ] {
                push("session", subject.clone(), k, v);
            }
            for r in &s.receivers {
                let subject = format!("n{}/s{}->n{}", s.node, s.session_id, r.node);
                for (k, v) in [
                    ("delivered", r.delivered.to_string()),
                    ("lost", r.lost.to_string()),
                    ("latency_p50_us", opt(r.latency_p50_us)),
                    ("latency_p95_us", opt(r.latency_p95_us)),
                    ("latency_max_us", opt(r.latency_max_us)),
                ] {
                    push("receiver", subject.clone(), k, v);
                }
            }
        }
        rows
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in self.rows() {
            w.serialize(row).map_err(io::Error::other)?;
        }
        w.flush()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for row in self.rows() {
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}
