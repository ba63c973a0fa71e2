use serde::Serialize;

/// One line of a metrics report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord {
    pub name: String,
    pub direction: String,
    pub criterion: String,
    pub value: f64,
    pub coverage: f64,
}

impl MetricRecord {
    pub fn new(
        name: impl Into<String>,
        direction: impl Into<String>,
        criterion: impl Into<String>,
        value: f64,
        coverage: f64,
    ) -> Self {
        MetricRecord {
            name: name.into(),
            direction: direction.into(),
            criterion: criterion.into(),
            value,
            coverage,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metric record serializes")
    }
}

/// Column-aligned text table of metric records.
pub fn render_table(records: &[MetricRecord]) -> String {
    let header = ["metric", "direction", "criterion", "value", "coverage"];
    let rows: Vec<[String; 5]> = records
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.direction.clone(),
                r.criterion.clone(),
                format!("{:.4}", r.value),
                format!("{:.4}", r.coverage),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut push_row = |cells: [&str; 5]| {
        let line: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i >= 3 {
                    format!("{c:>w$}")
                } else {
                    format!("{c:<w$}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    push_row(header);
    for row in &rows {
        push_row([&row[0], &row[1], &row[2], &row[3], &row[4]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_and_json() {
        let recs = vec![
            MetricRecord::new("word_translation_p1", "l1->l2", "csls", 0.91234, 1.0),
            MetricRecord::new("pearson", "l1", "-", -0.5, 0.75),
        ];
        let table = render_table(&recs);
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("0.9123"));
        assert_eq!(lines[1].len(), lines[2].len());
        let json = recs[0].to_json();
        assert!(json.contains("\"criterion\":\"csls\""));
        assert!(json.contains("\"value\":0.91234"));
    }
}
