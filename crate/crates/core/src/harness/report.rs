//! Result emission: paper-style "mean(std)" cells, plus machine-readable CSV
//! and JSON with stable formatting so identical sweeps produce identical
//! bytes.

use std::io::Write;

use serde_json::{json, Value};

use crate::harness::sweep::SweepTable;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(OutputFormat::Csv),
            "json" => Some(OutputFormat::Json),
            _ => None,
        }
    }
}

/// "0.886(0.003)"
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{mean:.3}({std:.3})")
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Write a sweep table in the chosen format. Rows keep table order; JSON
/// object keys come out sorted, and floats are rounded to six decimals, so
/// repeated runs are byte-identical.
pub fn emit_results(table: &SweepTable, format: OutputFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(out, "loss,setting,mean,std,n,failures,margin,scale,lr,best_epoch,display")?;
            for r in &table.rows {
                writeln!(
                    out,
                    "{},{},{:.6},{:.6},{},{},{},{},{},{},{}",
                    r.loss,
                    r.setting,
                    r.mean,
                    r.std,
                    r.n,
                    r.failures,
                    r.margin,
                    r.scale,
                    r.lr,
                    r.best_epoch,
                    format_cell(r.mean, r.std)
                )?;
            }
        }
        OutputFormat::Json => {
            // serde_json's default map is ordered by key
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|r| {
                    json!({
                        "loss": r.loss,
                        "setting": r.setting,
                        "mean": round6(r.mean),
                        "std": round6(r.std),
                        "n": r.n,
                        "failures": r.failures,
                        "margin": r.margin,
                        "scale": r.scale,
                        "lr": r.lr,
                        "best_epoch": r.best_epoch,
                        "display": format_cell(r.mean, r.std),
                    })
                })
                .collect();
            let doc = json!({ "dataset": table.dataset, "rows": rows });
            serde_json::to_writer_pretty(&mut *out, &doc)
                .map_err(|e| crate::Error::Config(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::SweepRow;

    fn table() -> SweepTable {
        SweepTable {
            dataset: "synth".into(),
            rows: vec![SweepRow {
                loss: "CSQ".into(),
                setting: "base".into(),
                mean: 0.8864,
                std: 0.00321,
                n: 5,
                failures: 0,
                margin: 1.0,
                scale: 1.0,
                lr: 0.1,
                best_epoch: 37,
            }],
        }
    }

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(0.8864, 0.00321), "0.886(0.003)");
        assert_eq!(format_cell(1.0, 0.0), "1.000(0.000)");
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        emit_results(&table(), OutputFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "loss,setting,mean,std,n,failures,margin,scale,lr,best_epoch,display"
        );
        assert_eq!(lines.next().unwrap(), "CSQ,base,0.886400,0.003210,5,0,1,1,0.1,37,0.886(0.003)");
    }

    #[test]
    fn json_is_stable_and_key_sorted() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        emit_results(&table(), OutputFormat::Json, &mut a).unwrap();
        emit_results(&table(), OutputFormat::Json, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let best = text.find("\"best_epoch\"").unwrap();
        let loss = text.find("\"loss\"").unwrap();
        assert!(best < loss, "keys should be sorted");
    }
}
