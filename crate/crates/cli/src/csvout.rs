//! CSV writers for experiment outputs, plus a small parser used by tests to
//! verify every emitted file round-trips.

use anyhow::{bail, Result};
use staq_core::sim::EpisodeSummary;
use std::fmt::Write as _;

pub const EPISODE_HEADER: &str =
    "method,n_abstractions,episode,seed,total_reward,n_accepted,n_rejected_policy,n_blocked_full,wall_time_s";

pub const SUMMARY_HEADER: &str =
    "method,n_abstractions,mean_reward,std_error,solve_time_s,status,reason";

pub const DT_SWEEP_HEADER: &str = "dt,n_epochs,mean_reward,std_error,solve_time_s";

/// Formats the abstraction-count column: empty for methods without one.
pub fn n_abstractions_cell(n: Option<usize>) -> String {
    n.map(|v| v.to_string()).unwrap_or_default()
}

pub fn episode_rows(method: &str, n_abstractions: Option<usize>, episodes: &[EpisodeSummary]) -> String {
    let mut out = String::new();
    out.push_str(EPISODE_HEADER);
    out.push('\n');
    let cell = n_abstractions_cell(n_abstractions);
    for e in episodes {
        writeln!(
            out,
            "{method},{cell},{},{},{},{},{},{},{}",
            e.episode, e.seed, e.total_reward, e.accepted, e.rejected_policy, e.blocked_full, e.wall_time_s
        )
        .expect("writing to a string cannot fail");
    }
    out
}

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub method: String,
    pub n_abstractions: Option<usize>,
    pub mean_reward: Option<f64>,
    pub std_error: Option<f64>,
    pub solve_time_s: f64,
    pub status: String,
    pub reason: String,
}

pub fn summary_rows(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            n_abstractions_cell(r.n_abstractions),
            r.mean_reward.map(|v| v.to_string()).unwrap_or_default(),
            r.std_error.map(|v| v.to_string()).unwrap_or_default(),
            r.solve_time_s,
            r.status,
            r.reason
        )
        .expect("writing to a string cannot fail");
    }
    out
}

/// Parses simple comma-separated text (no quoting; none of the writers emit
/// commas inside fields) and checks the expected header and column count.
pub fn parse_csv(text: &str, expected_header: &str) -> Result<Vec<Vec<String>>> {
    let mut lines = text.lines();
    let Some(header) = lines.next() else { bail!("empty CSV") };
    if header != expected_header {
        bail!("unexpected header {header:?}, wanted {expected_header:?}");
    }
    let width = expected_header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_owned).collect();
        if fields.len() != width {
            bail!("row {} has {} fields, wanted {width}", i + 2, fields.len());
        }
        rows.push(fields);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_rows_round_trip() {
        let episodes = vec![EpisodeSummary {
            episode: 0,
            seed: 7,
            total_reward: 123.5,
            accepted: 10,
            rejected_policy: 3,
            blocked_full: 1,
            wall_time_s: 0.25,
        }];
        let text = episode_rows("vi_no_abstr", None, &episodes);
        let rows = parse_csv(&text, EPISODE_HEADER).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][0], "vi_no_abstr");
        assert_eq!(rows[0][1], "");
        assert_eq!(rows[0][4].parse::<f64>().unwrap(), 123.5);
    }

    #[test]
    fn summary_rows_round_trip_with_skips() {
        let rows = vec![
            SummaryRow {
                method: "vi_no_abstr".into(),
                n_abstractions: None,
                mean_reward: Some(10.0),
                std_error: Some(1.0),
                solve_time_s: 2.5,
                status: "ok".into(),
                reason: String::new(),
            },
            SummaryRow {
                method: "vi_order_stats_abstr".into(),
                n_abstractions: Some(30),
                mean_reward: None,
                std_error: None,
                solve_time_s: 30_001.0,
                status: "skipped".into(),
                reason: "budget".into(),
            },
        ];
        let text = summary_rows(&rows);
        let parsed = parse_csv(&text, SUMMARY_HEADER).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1][1], "30");
        assert_eq!(parsed[1][5], "skipped");
        assert_eq!(parsed[1][6], "budget");
    }

    #[test]
    fn header_mismatch_is_detected() {
        assert!(parse_csv("a,b\n1,2\n", "a,b,c").is_err());
    }
}
