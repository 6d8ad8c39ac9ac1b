//! Fixed-width result tables: an "Encoder" column, one column per decoder
//! step and their mean under "Avg". Values are percentages.
//!
//! Each step column carries two headers: the true horizon `i · chunk_size /
//! fps` and the 0.25 s grid used by the published tables.

use std::fmt::Write as _;

use super::DumpScores;

/// Spacing of the horizon labels in the published tables.
pub const PUBLISHED_GRID_SECONDS: f64 = 0.25;

const COL: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// Percent.
    pub encoder: Option<f64>,
    /// Percent, index 0 is step 1.
    pub steps: Vec<Option<f64>>,
}

impl ReportRow {
    pub fn new(label: impl Into<String>, encoder: f64, steps: &[f64]) -> Self {
        Self {
            label: label.into(),
            encoder: Some(encoder),
            steps: steps.iter().map(|&s| Some(s)).collect(),
        }
    }

    /// Converts fractional mAP scores to a percentage row.
    pub fn from_scores(label: impl Into<String>, scores: &DumpScores) -> Self {
        Self {
            label: label.into(),
            encoder: scores.encoder.map(|v| 100.0 * v),
            steps: scores.steps.iter().map(|s| s.map(|v| 100.0 * v)).collect(),
        }
    }

    /// Mean of the step values; `None` if any step is missing.
    pub fn avg(&self) -> Option<f64> {
        if self.steps.is_empty() {
            return None;
        }
        let vals: Option<Vec<f64>> = self.steps.iter().copied().collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Renders rows under a two-line header. `chunk_seconds` is the duration
/// of one decoder step.
pub fn render_report(rows: &[ReportRow], chunk_seconds: f64) -> String {
    let steps = rows.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    let label_w = rows
        .iter()
        .map(|r| r.label.chars().count())
        .chain([12])
        .max()
        .unwrap_or(12);
    let mut s = String::new();

    let _ = write!(s, "{:<label_w$} {:>COL$}", "Method", "Encoder");
    for i in 1..=steps {
        let _ = write!(s, " {:>COL$}", format!("{:.2}s", i as f64 * chunk_seconds));
    }
    let _ = writeln!(s, " {:>COL$}", "Avg");

    let _ = write!(s, "{:<label_w$} {:>COL$}", "(0.25s grid)", "");
    for i in 1..=steps {
        let _ = write!(
            s,
            " {:>COL$}",
            format!("{:.2}s", i as f64 * PUBLISHED_GRID_SECONDS)
        );
    }
    let _ = writeln!(s, " {:>COL$}", "");

    let _ = writeln!(s, "{}", "-".repeat(label_w + (steps + 2) * (COL + 1)));
    for r in rows {
        let _ = write!(s, "{:<label_w$} {:>COL$}", r.label, cell(r.encoder));
        for i in 0..steps {
            let _ = write!(s, " {:>COL$}", cell(r.steps.get(i).copied().flatten()));
        }
        let _ = writeln!(s, " {:>COL$}", cell(r.avg()));
    }
    s
}

/// A row of the published result tables, as printed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRow {
    pub table: &'static str,
    pub chunk_size: usize,
    pub features: &'static str,
    pub encoder: f64,
    pub steps: [f64; 8],
    /// "Avg" as printed.
    pub avg: f64,
}

impl ReferenceRow {
    pub fn to_row(&self) -> ReportRow {
        ReportRow::new(
            format!("[{}] {}", self.table, self.features),
            self.encoder,
            &self.steps,
        )
    }
}

pub const REFERENCE_ROWS: [ReferenceRow; 10] = [
    ReferenceRow {
        table: "I",
        chunk_size: 6,
        features: "Baseline: RGB -- Flow",
        encoder: 25.93,
        steps: [26.15, 25.89, 25.79, 25.73, 25.66, 25.68, 25.66, 25.57],
        avg: 25.77,
    },
    ReferenceRow {
        table: "I",
        chunk_size: 6,
        features: "{RGB + OpenPose} -- Flow",
        encoder: 24.25,
        steps: [23.11, 25.63, 26.72, 26.18, 25.57, 24.94, 24.40, 23.94],
        avg: 25.06,
    },
    ReferenceRow {
        table: "I",
        chunk_size: 6,
        features: "RGB -- OpenPose",
        encoder: 37.57,
        steps: [25.54, 25.93, 26.44, 26.60, 26.28, 25.57, 24.75, 24.00],
        avg: 25.64,
    },
    ReferenceRow {
        table: "I",
        chunk_size: 6,
        features: "OpenPose -- Flow",
        encoder: 36.30,
        steps: [21.77, 22.59, 23.57, 23.19, 22.28, 21.30, 20.49, 19.83],
        avg: 21.88,
    },
    ReferenceRow {
        table: "II",
        chunk_size: 16,
        features: "C3D (One-Stream)",
        encoder: 35.43,
        steps: [34.34, 31.05, 28.22, 26.46, 25.37, 24.75, 24.39, 24.22],
        avg: 27.35,
    },
    ReferenceRow {
        table: "II",
        chunk_size: 16,
        features: "{C3D (RBG)} -- OpenPose",
        encoder: 36.44,
        steps: [32.98, 30.56, 28.37, 26.61, 25.38, 24.54, 23.78, 23.22],
        avg: 26.93,
    },
    ReferenceRow {
        table: "III",
        chunk_size: 16,
        features: "I3D",
        encoder: 55.25,
        steps: [52.57, 46.69, 41.94, 38.39, 35.90, 34.22, 33.00, 32.08],
        avg: 39.35,
    },
    ReferenceRow {
        table: "III",
        chunk_size: 16,
        features: "{I3D (RGB) + OpenPose} -- {I3D (Flow)}",
        encoder: 49.21,
        steps: [46.65, 40.78, 36.42, 33.19, 30.90, 29.42, 28.43, 27.71],
        avg: 34.19,
    },
    ReferenceRow {
        table: "III",
        chunk_size: 16,
        features: "{I3D (RGB)} -- OpenPose",
        encoder: 47.43,
        steps: [44.59, 40.08, 36.77, 34.24, 32.37, 31.29, 30.56, 30.06],
        avg: 35.00,
    },
    ReferenceRow {
        table: "III",
        chunk_size: 16,
        features: "{I3D (RGB)} -- {I3D (Flow) + OpenPose}",
        encoder: 44.47,
        steps: [29.55, 31.92, 29.62, 27.21, 25.63, 24.78, 24.20, 23.68],
        avg: 27.07,
    },
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_is_step_mean() {
        let r = ReportRow::new("x", 50.0, &[10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0]);
        assert_eq!(cell(r.avg()), "45.00");
        let text = render_report(&[r], 0.2);
        assert!(text.contains("45.00"));
        assert!(text.contains("1.60s") && text.contains("2.00s") && text.contains("0.20s"));
    }

    #[test]
    fn missing_values_render_as_dash() {
        let r = ReportRow {
            label: "y".into(),
            encoder: None,
            steps: vec![Some(10.0), None],
        };
        assert_eq!(r.avg(), None);
        let body = render_report(&[r], 0.2);
        let last = body.lines().last().unwrap();
        assert_eq!(
            last.split_whitespace().collect::<Vec<_>>(),
            ["y", "-", "10.00", "-", "-"]
        );
    }

    #[test]
    fn reference_rows_render() {
        let rows: Vec<ReportRow> = REFERENCE_ROWS.iter().map(ReferenceRow::to_row).collect();
        let text = render_report(&rows, 16.0 / 30.0);
        let i3d = text.lines().find(|l| l.starts_with("[III] I3D ")).unwrap();
        let cols: Vec<&str> = i3d.split_whitespace().collect();
        assert_eq!(cols[2], "55.25");
        assert_eq!(*cols.last().unwrap(), "39.35");
    }
}
