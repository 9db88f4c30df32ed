//! Evaluation report assembly and emission: one JSON document, flat CSV rows
//! (`metric,class,threshold,value`), and opt-in SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use crate::metrics::PrPoint;

/// Everything an evaluation run produced. Sections not requested stay absent.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class_ap: BTreeMap<u32, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub excluded_classes: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ar_iog: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mr_at_hp: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pr_curves: Vec<PrCurveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_auc: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub iop_exceedance: Vec<ExceedanceRow>,
}

/// PR curve for one class at one overlap threshold.
#[derive(Debug, Clone, Serialize)]
pub struct PrCurveSection {
    pub class: u32,
    pub overlap_threshold: f64,
    pub points: Vec<PrPoint>,
}

/// IoP exceedance for one bucket of predictions (usually one confidence
/// requirement `p`).
#[derive(Debug, Clone, Serialize)]
pub struct ExceedanceRow {
    /// The bucket's confidence requirement, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub iop_cut: f64,
    pub n_predictions: u64,
    /// Absent (never 0) when the bucket holds no predictions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("serializable report");
        text.push('\n');
        text
    }

    /// Flat CSV: `metric,class,threshold,value`. Absent values render as
    /// empty fields so spreadsheets keep row positions stable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,class,threshold,value\n");
        let mut row = |metric: &str, class: String, threshold: String, value: String| {
            writeln!(out, "{metric},{class},{threshold},{value}").unwrap();
        };
        if let Some(map) = self.map {
            row("map", String::new(), String::new(), fmt(map));
        }
        for (&class, &ap) in &self.per_class_ap {
            row("ap", class.to_string(), String::new(), fmt(ap));
        }
        for &class in &self.excluded_classes {
            row("ap_excluded_no_gt", class.to_string(), String::new(), String::new());
        }
        if let Some(ar) = self.ar_iou {
            row("ar_iou", String::new(), String::new(), fmt(ar));
        }
        if let Some(ar) = self.ar_iog {
            row("ar_iog", String::new(), String::new(), fmt(ar));
        }
        if let Some(mrhp) = self.mr_at_hp {
            row("mr_at_hp", String::new(), String::new(), fmt(mrhp));
        }
        if let Some(auc) = self.calibration_auc {
            row("roc_auc", String::new(), String::new(), fmt(auc));
        }
        for bucket in &self.iop_exceedance {
            row(
                "iop_exceedance",
                bucket.p.map(fmt).unwrap_or_default(),
                fmt(bucket.iop_cut),
                bucket.fraction.map(fmt).unwrap_or_default(),
            );
        }
        for curve in &self.pr_curves {
            for point in &curve.points {
                row(
                    "pr_precision",
                    curve.class.to_string(),
                    fmt(point.score),
                    fmt(point.precision),
                );
                row(
                    "pr_recall",
                    curve.class.to_string(),
                    fmt(point.score),
                    fmt(point.recall),
                );
            }
        }
        out
    }

    /// PR curves as one SVG chart (recall on x, precision on y).
    pub fn pr_curves_svg(&self) -> Option<String> {
        if self.pr_curves.is_empty() {
            return None;
        }
        let series: Vec<(String, Vec<(f64, f64)>)> = self
            .pr_curves
            .iter()
            .map(|curve| {
                (
                    format!("class {} @ {}", curve.class, curve.overlap_threshold),
                    curve
                        .points
                        .iter()
                        .map(|pt| (pt.recall, pt.precision))
                        .collect(),
                )
            })
            .collect();
        Some(svg_line_chart(
            "precision vs recall",
            "recall",
            "precision",
            &series,
            Some(((0.0, 1.0), (0.0, 1.0))),
        ))
    }
}

fn fmt(value: f64) -> String {
    // shortest round-trip formatting; stable across runs
    format!("{value}")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Minimal self-contained SVG line chart. `fixed_range` pins the axes; by
/// default they fit the data.
pub fn svg_line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
    fixed_range: Option<((f64, f64), (f64, f64))>,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const ML: f64 = 60.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 50.0;

    let ((mut x0, mut x1), (mut y0, mut y1)) =
        fixed_range.unwrap_or(((f64::MAX, f64::MIN), (f64::MAX, f64::MIN)));
    if fixed_range.is_none() {
        for (_, points) in series {
            for &(x, y) in points {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x0 == x1 {
            x1 = x0 + 1.0;
        }
        if y0 == y1 {
            y1 = y0 + 1.0;
        }
    }
    let sx = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#,
        W / 2.0
    )
    .unwrap();
    // axes
    writeln!(
        svg,
        r#"<line x1="{ml}" y1="{hb}" x2="{wr}" y2="{hb}" stroke="black"/>
<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{hb}" stroke="black"/>"#,
        ml = ML,
        mt = MT,
        hb = H - MB,
        wr = W - MR,
    )
    .unwrap();
    // tick labels at the axis extremes
    for (value, x, y, anchor) in [
        (x0, ML, H - MB + 18.0, "middle"),
        (x1, W - MR, H - MB + 18.0, "middle"),
        (y0, ML - 8.0, H - MB + 4.0, "end"),
        (y1, ML - 8.0, MT + 4.0, "end"),
    ] {
        writeln!(
            svg,
            r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            fmt_tick(value)
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{x_label}</text>
<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{y_label}</text>"#,
        (ML + W - MR) / 2.0,
        H - 12.0,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
    )
    .unwrap();

    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            )
            .unwrap();
        }
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>"#,
            W - MR - 180.0,
            MT + 16.0 * i as f64 + 4.0,
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(value: f64) -> String {
    if value == value.trunc() {
        format!("{value:.0}")
    } else {
        format!("{value:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EvalReport {
        EvalReport {
            map: Some(0.75),
            per_class_ap: [(1, 0.8), (2, 0.7)].into(),
            excluded_classes: vec![9],
            ar_iou: Some(0.6),
            ar_iog: Some(0.65),
            mr_at_hp: Some(0.5),
            pr_curves: vec![PrCurveSection {
                class: 1,
                overlap_threshold: 0.5,
                points: vec![
                    PrPoint {
                        score: 0.9,
                        precision: 1.0,
                        recall: 0.5,
                    },
                    PrPoint {
                        score: 0.4,
                        precision: 0.75,
                        recall: 1.0,
                    },
                ],
            }],
            calibration_auc: Some(0.88),
            iop_exceedance: vec![ExceedanceRow {
                p: Some(0.9),
                iop_cut: 0.95,
                n_predictions: 10,
                fraction: Some(0.9),
            }],
        }
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let csv = sample_report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,class,threshold,value");
        assert!(lines.contains(&"map,,,0.75"));
        assert!(lines.contains(&"ap,1,,0.8"));
        assert!(lines.contains(&"ap_excluded_no_gt,9,,"));
        assert!(lines.contains(&"iop_exceedance,0.9,0.95,0.9"));
        assert!(lines.contains(&"pr_precision,1,0.9,1"));
        assert!(lines.contains(&"pr_recall,1,0.4,1"));
    }

    #[test]
    fn json_omits_missing_sections() {
        let report = EvalReport {
            map: Some(0.5),
            ..Default::default()
        };
        let json = report.to_json();
        assert!(json.contains("\"map\""));
        assert!(!json.contains("calibration_auc"));
        assert!(!json.contains("pr_curves"));
    }

    #[test]
    fn svg_renders_every_series() {
        let svg = sample_report().pr_curves_svg().unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("class 1 @ 0.5"));
        assert!(EvalReport::default().pr_curves_svg().is_none());
    }

    #[test]
    fn chart_is_deterministic() {
        let series = vec![("a".to_string(), vec![(0.0, 0.1), (0.5, 0.9), (1.0, 0.4)])];
        let one = svg_line_chart("t", "x", "y", &series, None);
        let two = svg_line_chart("t", "x", "y", &series, None);
        assert_eq!(one, two);
    }
}
