//! Per-step CSV summary of a JSON-lines refinement trace.

use removal_lab::driver::{RunStatus, TraceRecord};

use crate::error::CliError;

pub const HEADER: [&str; 14] = [
    "record",
    "step",
    "parts",
    "entropy",
    "gain",
    "claimed_gain",
    "shattered_pairs",
    "deleted_inside",
    "deleted_off_size",
    "deleted_low_density",
    "deleted_total",
    "deletion_bound",
    "status",
    "certificate_size",
];

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::pre(format!("malformed trace line {}: {e}", i + 1))))
        .collect()
}

fn certificate_size(status: &RunStatus) -> String {
    match status {
        RunStatus::Removable { certificate, .. } => certificate.len().to_string(),
        RunStatus::ManyCopies { certificate, .. } => certificate.copies.len().to_string(),
        _ => String::new(),
    }
}

/// One row for the init record, one per step, one for the final status.
/// The status row repeats the last entropy and part count.
pub fn summarize_trace(records: &[TraceRecord]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::pre(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    let mut last: Option<(usize, f64)> = None;
    let mut steps = 0usize;
    for r in records {
        let row: Vec<String> = match r {
            TraceRecord::Init(init) => {
                last = Some((init.parts, init.entropy));
                let mut row = vec!["init".into(), String::new(), init.parts.to_string(), init.entropy.to_string()];
                row.resize(HEADER.len(), String::new());
                row
            }
            TraceRecord::Step { report: s, .. } => {
                steps += 1;
                last = Some((s.parts_after, s.entropy_after));
                let a = &s.accounting;
                vec![
                    "step".into(),
                    s.index.to_string(),
                    s.parts_after.to_string(),
                    s.entropy_after.to_string(),
                    s.gain.to_string(),
                    s.claimed_gain.to_string(),
                    s.shattered.len().to_string(),
                    a.inside.to_string(),
                    a.off_size.to_string(),
                    a.low_density.to_string(),
                    a.total.to_string(),
                    a.bound.to_string(),
                    String::new(),
                    String::new(),
                ]
            }
            TraceRecord::End(status) => {
                let (parts, entropy) = last.map_or((String::new(), String::new()), |(p, e)| (p.to_string(), e.to_string()));
                let mut row = vec!["end".into(), steps.to_string(), parts, entropy];
                row.resize(HEADER.len() - 2, String::new());
                row.push(status.name().into());
                row.push(certificate_size(status));
                row
            }
        };
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::pre(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::pre(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        let csv = summarize_trace(&parse_trace("").unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("record,step,parts,entropy"));
    }

    #[test]
    fn removable_trace_is_one_row() {
        let line = r#"{"record":"end","status":"removable","certificate":[[0,1],[1,2],[0,2]],"verified":true}"#;
        let csv = summarize_trace(&parse_trace(line).unwrap()).unwrap();
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].ends_with(",removable,3"), "{}", rows[1]);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_trace("{\"record\":\"nope\"}").is_err());
        assert!(parse_trace("not json").is_err());
    }
}
