use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{MetricsReport, TopologyReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: not a report: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub const REPORT_FILE: &str = "report.json";

pub const CSV_FILES: [&str; 6] = [
    "fig4_degrees.csv",
    "fig5_success.csv",
    "fig6_success_by_topology.csv",
    "fig7_cost.csv",
    "fig8_disturbance.csv",
    "fig9_churn.csv",
];

type Table = (Vec<String>, Vec<Vec<String>>);

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Rank against degree for every topology (first seed).
fn degrees(r: &MetricsReport) -> Table {
    let rows = r
        .topologies
        .iter()
        .flat_map(|t| {
            t.degrees
                .ranked
                .iter()
                .enumerate()
                .map(|(i, d)| vec![t.topology.to_string(), (i + 1).to_string(), d.to_string()])
        })
        .collect();
    (strings(["topology", "rank", "degree"]), rows)
}

fn success(r: &MetricsReport) -> Table {
    let rows = r
        .topologies
        .iter()
        .flat_map(|t| {
            t.search.iter().map(|c| {
                vec![
                    t.topology.to_string(),
                    c.algorithm.to_string(),
                    c.ttl.to_string(),
                    f(c.success_rate.mean),
                    f(c.success_rate.sd),
                    c.queries.to_string(),
                ]
            })
        })
        .collect();
    (
        strings(["topology", "algorithm", "ttl", "success_rate", "success_rate_sd", "queries"]),
        rows,
    )
}

/// One column per topology, one row per (algorithm, ttl).
fn success_by_topology(r: &MetricsReport) -> Table {
    let mut header = strings(["algorithm", "ttl"]);
    header.extend(r.topologies.iter().map(|t| t.topology.to_string()));
    let mut keys: Vec<_> = r
        .topologies
        .iter()
        .flat_map(|t| t.search.iter().map(|c| (c.algorithm, c.ttl)))
        .collect();
    keys.sort();
    keys.dedup();
    let rows = keys
        .into_iter()
        .map(|(a, ttl)| {
            let mut row = vec![a.to_string(), ttl.to_string()];
            row.extend(
                r.topologies
                    .iter()
                    .map(|t| opt(t.cell(a, ttl).map(|c| c.success_rate.mean))),
            );
            row
        })
        .collect();
    (header, rows)
}

fn cost(r: &MetricsReport) -> Table {
    let rows = r
        .topologies
        .iter()
        .flat_map(|t| {
            t.search.iter().map(|c| {
                vec![
                    t.topology.to_string(),
                    c.algorithm.to_string(),
                    c.ttl.to_string(),
                    f(c.mean_messages.mean),
                    f(c.mean_messages.sd),
                    opt(c.mean_hops.map(|h| h.mean)),
                ]
            })
        })
        .collect();
    (
        strings(["topology", "algorithm", "ttl", "mean_messages", "mean_messages_sd", "mean_hops"]),
        rows,
    )
}

/// One row per node key, one column per topology with receipts summed over
/// seeds.
fn disturbance(r: &MetricsReport) -> Table {
    let with: Vec<&TopologyReport> = r.topologies.iter().filter(|t| t.disturbance.is_some()).collect();
    let mut header = vec!["node".to_string()];
    header.extend(with.iter().map(|t| t.topology.to_string()));
    let n = with
        .iter()
        .map(|t| t.disturbance.as_ref().unwrap().per_node.len())
        .max()
        .unwrap_or(0);
    let rows = (0..n)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(with.iter().map(|t| {
                let d = t.disturbance.as_ref().unwrap();
                d.per_node.get(k).map(u64::to_string).unwrap_or_default()
            }));
            row
        })
        .collect();
    (header, rows)
}

fn churn(r: &MetricsReport) -> Table {
    let rows = r
        .topologies
        .iter()
        .flat_map(|t| {
            t.churn.iter().map(|c| {
                vec![
                    t.topology.to_string(),
                    f(c.fraction),
                    c.algorithm.to_string(),
                    c.ttl.to_string(),
                    f(c.live_nodes.mean),
                    f(c.success_rate.mean),
                    f(c.success_rate.sd),
                    opt(c.mean_hops.map(|h| h.mean)),
                    f(c.mean_messages.mean),
                ]
            })
        })
        .collect();
    (
        strings([
            "topology",
            "fraction",
            "algorithm",
            "ttl",
            "live_nodes",
            "success_rate",
            "success_rate_sd",
            "mean_hops",
            "mean_messages",
        ]),
        rows,
    )
}

/// The CSV tables in [`CSV_FILES`] order.
pub fn csv_tables(r: &MetricsReport) -> Vec<(&'static str, Table)> {
    CSV_FILES
        .into_iter()
        .zip([degrees(r), success(r), success_by_topology(r), cost(r), disturbance(r), churn(r)])
        .collect()
}

fn write_csv(path: &Path, (header, rows): &Table) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `report.json` (when `json` is set) and the figure CSVs into `dir`,
/// creating it if needed. Returns the written paths.
pub fn emit_report(r: &MetricsReport, dir: &Path, json: bool) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut out = Vec::new();
    if json {
        let path = dir.join(REPORT_FILE);
        fs::write(&path, r.to_canonical_json()).map_err(io(&path))?;
        out.push(path);
    }
    for (name, table) in csv_tables(r) {
        let path = dir.join(name);
        write_csv(&path, &table)?;
        out.push(path);
    }
    Ok(out)
}

pub fn read_report(path: &Path) -> Result<MetricsReport, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}
