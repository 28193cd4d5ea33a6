use std::fmt::Write as _;
use std::io::Write;

use super::experiment::{EvalReport, RECALL_NS};
use crate::error::Result;

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 13] = [
    "N",
    "M",
    "beam",
    "top_k",
    "recall@1",
    "recall@5",
    "recall@10",
    "recall@15",
    "recall@20",
    "median_error_baseline",
    "median_error_reranked",
    "sim_evals",
    "wall_ms",
];

fn csv_fields(r: &EvalReport) -> Vec<String> {
    let mut f = vec![
        r.config.cluster_size.to_string(),
        r.config.granularity.to_string(),
        r.config.beam_width.to_string(),
        r.top_k.to_string(),
    ];
    for n in RECALL_NS {
        f.push(r.recall_at.get(&n).map(|v| format!("{v:.6}")).unwrap_or_default());
    }
    f.push(format!("{:.6}", r.median_error_baseline));
    f.push(r.median_error_reranked.map(|v| format!("{v:.6}")).unwrap_or_default());
    f.push(format!("{:.3}", r.mean_similarity_evaluations));
    f.push(format!("{:.6}", r.wall_time.as_secs_f64() * 1e3));
    f
}

/// One CSV row per report.
pub fn write_csv<W: Write>(w: W, reports: &[EvalReport]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(CSV_COLUMNS)?;
    for r in reports {
        writer.write_record(csv_fields(r))?;
    }
    writer.flush()?;
    Ok(())
}

/// Fixed-width text table of the same columns.
pub fn format_table(reports: &[EvalReport]) -> String {
    let rows: Vec<Vec<String>> = std::iter::once(CSV_COLUMNS.iter().map(|s| s.to_string()).collect())
        .chain(reports.iter().map(csv_fields))
        .collect();
    let widths: Vec<usize> = (0..CSV_COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbench::experiment::{IndexConfig, QueryMode};
    use std::collections::BTreeMap;
    use std::time::Duration;

    fn report() -> EvalReport {
        EvalReport {
            config: IndexConfig::new(4, 1, 5),
            top_k: 5,
            query_mode: QueryMode::Pan2Pan,
            query_count: 3,
            recall_at: RECALL_NS
                .iter()
                .map(|&n| (n, 0.5 + n as f64 / 100.0))
                .collect::<BTreeMap<_, _>>(),
            median_error_baseline: 3.25,
            median_error_reranked: None,
            mean_similarity_evaluations: 27.5,
            mean_nodes_visited: 30.0,
            wall_time: Duration::from_micros(1500),
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[report()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(
            lines[1],
            "4,1,5,5,0.510000,0.550000,0.600000,0.650000,0.700000,3.250000,,27.500,1.500000"
        );
    }

    #[test]
    fn table_has_header_and_rows() {
        let t = format_table(&[report(), report()]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().next().unwrap().contains("recall@20"));
    }
}
