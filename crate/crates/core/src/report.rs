//! Coefficient profiles of fitted linear models: the global backbone
//! followed by per-subject adjustments.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{natural_cmp, ColumnProvenance};
use crate::error::Result;
use crate::model::LinearModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    /// `"global"` or `"subject"`.
    pub section: String,
    pub subject: Option<String>,
    pub term: String,
    pub coefficient: f64,
}

/// Global terms by descending magnitude, then each subject's indicator and
/// interaction terms grouped by subject, again by descending magnitude.
pub fn coefficient_profile(model: &LinearModel) -> Vec<CoefficientRow> {
    let by_magnitude = |a: &CoefficientRow, b: &CoefficientRow| {
        b.coefficient
            .abs()
            .total_cmp(&a.coefficient.abs())
            .then_with(|| a.term.cmp(&b.term))
    };
    let mut global = Vec::new();
    let mut subject = Vec::new();
    for (col, &c) in model.layout.columns.iter().zip(&model.fit.coefficients) {
        let row = CoefficientRow {
            section: if col.is_subject_specific() { "subject" } else { "global" }.into(),
            subject: col.subject_id().map(String::from),
            term: col.to_string(),
            coefficient: c,
        };
        match col {
            ColumnProvenance::Intercept | ColumnProvenance::GlobalFeature { .. } => global.push(row),
            _ => subject.push(row),
        }
    }
    global.sort_by(by_magnitude);
    subject.sort_by(|a, b| {
        natural_cmp(a.subject.as_deref().unwrap_or(""), b.subject.as_deref().unwrap_or("")).then_with(|| by_magnitude(a, b))
    });
    global.extend(subject);
    global
}

pub fn write_coefficients_csv<W: Write>(rows: &[CoefficientRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["section", "subject", "term", "coefficient"])?;
    for r in rows {
        w.write_record([
            r.section.as_str(),
            r.subject.as_deref().unwrap_or(""),
            r.term.as_str(),
            &r.coefficient.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static horizontal bar chart; bars extend left or right of a zero axis.
pub fn coefficients_svg(title: &str, rows: &[CoefficientRow]) -> String {
    const ROW: f64 = 18.0;
    const LABEL_W: f64 = 220.0;
    const HALF: f64 = 240.0;
    let axis = LABEL_W + HALF + 10.0;
    let width = axis + HALF + 80.0;
    let scale = rows.iter().map(|r| r.coefficient.abs()).fold(0.0, f64::max);
    let mut lines: Vec<(String, Option<f64>)> = Vec::new();
    let mut current: Option<Option<&str>> = None;
    for r in rows {
        let group = if r.section == "global" { None } else { r.subject.as_deref() };
        if current != Some(group) {
            current = Some(group);
            lines.push((group.map_or("global".into(), |s| format!("subject {s}")), None));
        }
        lines.push((r.term.clone(), Some(r.coefficient)));
    }
    let height = 40.0 + ROW * lines.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-weight="bold">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{axis}" y1="30" x2="{axis}" y2="{}" stroke="black"/>"#,
        height - 10.0
    );
    for (k, (label, value)) in lines.iter().enumerate() {
        let y = 40.0 + ROW * k as f64;
        match value {
            None => {
                let _ = writeln!(s, r#"<text x="10" y="{}" font-weight="bold">{}</text>"#, y + 12.0, escape(label));
            }
            Some(v) => {
                let len = if scale > 0.0 { v.abs() / scale * HALF } else { 0.0 };
                let x = if *v < 0.0 { axis - len } else { axis };
                let fill = if *v < 0.0 { "#c0504d" } else { "#4f81bd" };
                let _ = writeln!(s, r#"<text x="20" y="{}">{}</text>"#, y + 12.0, escape(label));
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{}" width="{len:.2}" height="{}" fill="{fill}"/>"#,
                    y + 2.0,
                    ROW - 4.0
                );
                let _ = writeln!(s, r#"<text x="{}" y="{}">{v:.4}</text>"#, axis + HALF + 8.0, y + 12.0);
            }
        }
    }
    s.push_str("</svg>\n");
    s
}
