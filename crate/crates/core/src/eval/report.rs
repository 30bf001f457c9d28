use std::fmt::Write;

/// Ordered list of named scalar metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, metric: impl Into<String>, value: f64) {
        self.rows.push((metric.into(), value));
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|(m, _)| m == metric).map(|&(_, v)| v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (m, v) in &self.rows {
            writeln!(out, "{m},{v}").unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}  value\n", "metric");
        for (m, v) in &self.rows {
            writeln!(out, "{m:<width$}  {v:.4}").unwrap();
        }
        out
    }
}
