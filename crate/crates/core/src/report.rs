//! Classification metrics, confusion matrices and chord diagrams of
//! misclassification flows.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifies the run that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
    /// Set when the metric had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// Never true and never predicted; left out of the macro averages.
    pub excluded_from_macro: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordEdge {
    pub from: usize,
    pub to: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub class_names: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    pub total: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub chord_edges: Vec<ChordEdge>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub const REPORT_SCHEMA: &str = "qkdsent.report/1";

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Scores predicted labels against the truth.
pub fn evaluate<S: AsRef<str>>(
    truth: &[usize],
    predicted: &[usize],
    class_names: &[S],
) -> Result<EvalReport> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Domain("nothing to evaluate".into()));
    }
    let c = class_names.len();
    if let Some(&bad) = truth.iter().chain(predicted).find(|&&l| l >= c) {
        return Err(Error::Domain(format!("label {bad} outside 0..{c}")));
    }
    let mut confusion = vec![vec![0usize; c]; c];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }

    let mut per_class = Vec::with_capacity(c);
    let mut notes = Vec::new();
    for k in 0..c {
        let tp = confusion[k][k];
        let support: usize = confusion[k].iter().sum();
        let predicted_k: usize = confusion.iter().map(|row| row[k]).sum();
        let (precision, precision_undefined) = ratio(tp, predicted_k);
        let (recall, recall_undefined) = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let excluded = support == 0 && predicted_k == 0;
        let name = class_names[k].as_ref().to_string();
        if excluded {
            notes.push(format!(
                "class {k} ({name}) never true and never predicted; excluded from macro averages"
            ));
        } else if precision_undefined {
            notes.push(format!("class {k} ({name}) never predicted; precision reported as 0"));
        } else if recall_undefined {
            notes.push(format!("class {k} ({name}) absent from truth; recall reported as 0"));
        }
        per_class.push(ClassMetrics {
            class_id: k,
            name,
            precision,
            recall,
            f1,
            support,
            predicted: predicted_k,
            precision_undefined,
            recall_undefined,
            excluded_from_macro: excluded,
        });
    }

    let included: Vec<&ClassMetrics> = per_class.iter().filter(|m| !m.excluded_from_macro).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        included.iter().map(|m| f(m)).sum::<f64>() / included.len() as f64
    };
    let trace: usize = (0..c).map(|k| confusion[k][k]).sum();
    let mut chord_edges = Vec::new();
    for (from, row) in confusion.iter().enumerate() {
        for (to, &count) in row.iter().enumerate() {
            if from != to && count > 0 {
                chord_edges.push(ChordEdge { from, to, count });
            }
        }
    }

    Ok(EvalReport {
        schema_version: REPORT_SCHEMA.to_string(),
        class_names: class_names.iter().map(|s| s.as_ref().to_string()).collect(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        total: truth.len(),
        accuracy: trace as f64 / truth.len() as f64,
        confusion,
        chord_edges,
        notes,
        provenance: None,
    })
}

impl EvalReport {
    pub fn misclassified(&self) -> usize {
        self.chord_edges.iter().map(|e| e.count).sum()
    }

    /// Plain-text table: one row per class, then accuracy and macro averages.
    pub fn to_table(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(13);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>5}  {:<width$}  {:>9}  {:>6}  {:>8}  {:>7}",
            "Class", "", "Precision", "Recall", "F1-Score", "# Data"
        );
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:>5}  {:<width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}",
                m.class_id, m.name, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(s, "{:>5}  {:<width$}  {:>9}  {:>6}  {:>8.2}", "", "Accuracy", "", "", self.accuracy);
        let _ = writeln!(
            s,
            "{:>5}  {:<width$}  {:>9.2}  {:>6.2}  {:>8.2}",
            "", "Macro Average", self.macro_precision, self.macro_recall, self.macro_f1
        );
        s
    }

    pub fn write_confusion_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<confusion>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

fn polar(cx: f64, cy: f64, r: f64, angle: f64) -> (f64, f64) {
    (cx + r * angle.sin(), cy - r * angle.cos())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const SIZE: f64 = 800.0;
const LEGEND_WIDTH: f64 = 260.0;
const LABEL_MARGIN: f64 = 120.0;
const OUTER_R: f64 = 300.0;
const INNER_R: f64 = 282.0;
const GAP: f64 = 0.04;

/// Standalone SVG chord diagram of the off-diagonal confusion cells.
///
/// Each class owns an arc proportional to its misclassified count; a ribbon
/// in the true class's color leaves that arc and ends on the arc of the
/// class it was mistaken for.
pub fn chord_svg(report: &EvalReport) -> Result<String> {
    let c = report.class_names.len();
    if c < 2 {
        return Err(Error::Domain("chord diagram needs at least two classes".into()));
    }
    let (cx, cy) = (LABEL_MARGIN + SIZE / 2.0, SIZE / 2.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = SIZE + 2.0 * LABEL_MARGIN + LEGEND_WIDTH,
        h = SIZE
    );
    if let Some(p) = &report.provenance {
        let _ = writeln!(
            svg,
            "<metadata>{}</metadata>",
            escape(&serde_json::to_string(p)?)
        );
    }
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let total = report.misclassified();
    if total == 0 {
        let _ = writeln!(
            svg,
            r#"<text class="notice" x="{cx}" y="{cy}" text-anchor="middle" font-size="20">No misclassifications</text>"#
        );
        legend(&mut svg, report, &vec![0; c]);
        svg.push_str("</svg>\n");
        return Ok(svg);
    }

    let mut outgoing = vec![0usize; c];
    let mut incoming = vec![0usize; c];
    for e in &report.chord_edges {
        outgoing[e.from] += e.count;
        incoming[e.to] += e.count;
    }
    let span = 2.0 * PI - GAP * c as f64;
    let mut starts = vec![0.0; c];
    let mut ends = vec![0.0; c];
    let mut angle = 0.0;
    for k in 0..c {
        starts[k] = angle;
        angle += span * outgoing[k] as f64 / total as f64;
        ends[k] = angle;
        angle += GAP;
    }

    for k in 0..c {
        let (a0, a1) = (starts[k], ends[k]);
        if a1 > a0 {
            let large = i32::from(a1 - a0 > PI);
            let (x0, y0) = polar(cx, cy, OUTER_R, a0);
            let (x1, y1) = polar(cx, cy, OUTER_R, a1);
            let (x2, y2) = polar(cx, cy, INNER_R, a1);
            let (x3, y3) = polar(cx, cy, INNER_R, a0);
            let _ = writeln!(
                svg,
                r#"<path class="arc" data-class="{k}" fill="{col}" d="M{x0:.2},{y0:.2} A{OUTER_R},{OUTER_R} 0 {large} 1 {x1:.2},{y1:.2} L{x2:.2},{y2:.2} A{INNER_R},{INNER_R} 0 {large} 0 {x3:.2},{y3:.2} Z"/>"#,
                col = color(k)
            );
        } else {
            let (x0, y0) = polar(cx, cy, OUTER_R + 4.0, a0);
            let (x1, y1) = polar(cx, cy, INNER_R - 4.0, a0);
            let _ = writeln!(
                svg,
                r#"<line class="marker" data-class="{k}" stroke="{col}" stroke-width="3" x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}"/>"#,
                col = color(k)
            );
        }
        // Zero-count classes are listed in the legend only.
        if outgoing[k] == 0 {
            continue;
        }
        let mid = 0.5 * (a0 + a1);
        let (lx, ly) = polar(cx, cy, OUTER_R + 22.0, mid);
        let anchor = if mid.sin() >= 0.0 { "start" } else { "end" };
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.2}" y="{ly:.2}" font-size="13" text-anchor="{anchor}">{} ({:.1}%)</text>"#,
            escape(&report.class_names[k]),
            100.0 * outgoing[k] as f64 / total as f64
        );
    }

    // Ribbons: source spans stack along the true class arc; target ends are
    // spread along the predicted class arc.
    let mut src_cursor = starts.clone();
    let mut dst_seen = vec![0usize; c];
    for e in &report.chord_edges {
        let width = span * e.count as f64 / total as f64;
        let s0 = src_cursor[e.from];
        let s1 = s0 + width;
        src_cursor[e.from] = s1;
        let frac = (dst_seen[e.to] as f64 + 0.5 * e.count as f64) / incoming[e.to] as f64;
        dst_seen[e.to] += e.count;
        let t = starts[e.to] + frac * (ends[e.to] - starts[e.to]);
        let (x0, y0) = polar(cx, cy, INNER_R, s0);
        let (x1, y1) = polar(cx, cy, INNER_R, s1);
        let (xt, yt) = polar(cx, cy, INNER_R, t);
        let large = i32::from(width > PI);
        let _ = writeln!(
            svg,
            r#"<path class="ribbon" data-from="{f}" data-to="{to}" data-count="{n}" fill="{col}" fill-opacity="0.65" stroke="{col}" stroke-width="0.5" d="M{x0:.2},{y0:.2} A{INNER_R},{INNER_R} 0 {large} 1 {x1:.2},{y1:.2} Q{cx},{cy} {xt:.2},{yt:.2} Q{cx},{cy} {x0:.2},{y0:.2} Z"><title>{fname} -&gt; {tname}: {n}</title></path>"#,
            f = e.from,
            to = e.to,
            n = e.count,
            col = color(e.from),
            fname = escape(&report.class_names[e.from]),
            tname = escape(&report.class_names[e.to]),
        );
    }
    legend(&mut svg, report, &outgoing);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn legend(svg: &mut String, report: &EvalReport, outgoing: &[usize]) {
    let x = SIZE + 2.0 * LABEL_MARGIN + 10.0;
    for (k, name) in report.class_names.iter().enumerate() {
        let y = 40.0 + 24.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="14" height="14" fill="{}"/><text x="{}" y="{}" font-size="13">{} ({})</text>"#,
            y - 11.0,
            color(k),
            x + 20.0,
            y,
            escape(name),
            outgoing[k]
        );
    }
}

#[derive(Serialize)]
struct EdgeExport<'a> {
    total_misclassified: usize,
    edges: Vec<EdgeRow<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a Provenance>,
}

#[derive(Serialize)]
struct EdgeRow<'a> {
    from: usize,
    to: usize,
    count: usize,
    from_name: &'a str,
    to_name: &'a str,
}

/// Writes the chord SVG to `path` and the edge list next to it as
/// `<stem>.edges.json`. Returns the edge file path.
pub fn render_chord(report: &EvalReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let svg = chord_svg(report)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    let export = EdgeExport {
        total_misclassified: report.misclassified(),
        edges: report
            .chord_edges
            .iter()
            .map(|e| EdgeRow {
                from: e.from,
                to: e.to,
                count: e.count,
                from_name: &report.class_names[e.from],
                to_name: &report.class_names[e.to],
            })
            .collect(),
        provenance: report.provenance.as_ref(),
    };
    let edges_path = path.with_extension("edges.json");
    let text = serde_json::to_string_pretty(&export)?;
    std::fs::write(&edges_path, text).map_err(|e| Error::io(&edges_path, e))?;
    Ok(edges_path)
}
