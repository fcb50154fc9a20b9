use std::fmt::Write as _;

use serde::Serialize;

use super::EvalReport;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 4] = ["Succ", "Norm", "Prec", "Speed"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub name: String,
    /// In [`COLUMNS`] order; Speed is frames per second.
    pub values: [f64; 4],
    /// Columns in which this row is best.
    pub best: Vec<&'static str>,
    pub second: Vec<&'static str>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

/// Ranks named reports column by column; higher is better everywhere, and
/// ties go to the lexicographically earlier name.
pub fn compare(reports: &[(String, &EvalReport)]) -> Result<CompareTable> {
    if reports.len() < 2 {
        return Err(Error::domain("compare", format!("need at least 2 reports, got {}", reports.len())));
    }
    let mut rows: Vec<CompareRow> = reports
        .iter()
        .map(|(name, r)| CompareRow {
            name: name.clone(),
            values: [r.overall.success_auc, r.overall.norm_precision, r.overall.precision_at_20, r.fps],
            best: Vec::new(),
            second: Vec::new(),
        })
        .collect();
    for (c, col) in COLUMNS.iter().enumerate() {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            rows[b].values[c]
                .total_cmp(&rows[a].values[c])
                .then_with(|| rows[a].name.cmp(&rows[b].name))
        });
        rows[order[0]].best.push(col);
        rows[order[1]].second.push(col);
    }
    Ok(CompareTable { rows })
}

impl CompareTable {
    pub fn best(&self, column: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.best.contains(&column))
    }

    pub fn row(&self, name: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// `Model,Succ,Norm,Prec,Speed,Best,Second`; flag columns list column
    /// names separated by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("Model,{},Best,Second\n", COLUMNS.join(","));
        for r in &self.rows {
            let [s, n, p, f] = r.values;
            let _ = writeln!(out, "{},{s:.6},{n:.6},{p:.6},{f:.1},{},{}", r.name, r.best.join(";"), r.second.join(";"));
        }
        out
    }

    /// Fixed-width table; `*` marks the best value of a column and `+` the second best.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}", "Model");
        for c in COLUMNS {
            let _ = write!(out, " {c:>10}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.name);
            for (c, col) in COLUMNS.iter().enumerate() {
                let mark = if r.best.contains(col) {
                    "*"
                } else if r.second.contains(col) {
                    "+"
                } else {
                    " "
                };
                let v = if *col == "Speed" {
                    format!("{:.1}", r.values[c])
                } else {
                    format!("{:.4}", r.values[c])
                };
                let _ = write!(out, " {v:>9}{mark}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Metrics;
    use std::collections::BTreeMap;

    fn report(succ: f64, fps: f64) -> EvalReport {
        EvalReport {
            overall: Metrics {
                frames: 1,
                success_curve: vec![],
                success_auc: succ,
                precision_curve: vec![],
                precision_at_20: succ,
                norm_precision: succ,
            },
            per_attribute: BTreeMap::new(),
            fps,
        }
    }

    #[test]
    fn dominant_model_is_best_everywhere() {
        let (a, b, c) = (report(0.6, 200.0), report(0.5, 100.0), report(0.4, 50.0));
        let t = compare(&[("b".into(), &b), ("a".into(), &a), ("c".into(), &c)]).unwrap();
        assert_eq!(t.row("a").unwrap().best, COLUMNS.to_vec());
        assert_eq!(t.row("b").unwrap().second, COLUMNS.to_vec());
        assert!(t.row("c").unwrap().best.is_empty());
    }

    #[test]
    fn ties_go_to_the_earlier_name() {
        let (x, y) = (report(0.5, 10.0), report(0.5, 10.0));
        let t = compare(&[("zeta".into(), &x), ("alpha".into(), &y)]).unwrap();
        assert_eq!(t.best("Succ").unwrap().name, "alpha");
        assert_eq!(t.row("zeta").unwrap().second, COLUMNS.to_vec());
    }

    #[test]
    fn csv_and_text_layout() {
        let (x, y) = (report(0.5, 10.0), report(0.25, 20.0));
        let t = compare(&[("one".into(), &x), ("two".into(), &y)]).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Model,Succ,Norm,Prec,Speed,Best,Second");
        assert_eq!(lines[1], "one,0.500000,0.500000,0.500000,10.0,Succ;Norm;Prec,Speed");
        let text = t.to_text();
        assert!(text.lines().nth(1).unwrap().contains("0.5000*"));
        assert!(compare(&[("one".into(), &x)]).is_err());
    }
}
