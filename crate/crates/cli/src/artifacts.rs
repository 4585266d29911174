use std::fmt::Write as _;

use selfgrasp::evaluator::FeatureRow;
use selfgrasp::orchestrator::{EvalRow, EvalTable};

pub const EVAL_CSV_HEADER: &str = "# selfgrasp-eval v1";

/// Which rate columns to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Columns {
    pub strict: bool,
    pub any: bool,
}

fn row_cells(label: &str, r: &EvalRow, cols: Columns) -> Vec<String> {
    let mut cells = vec![label.to_string(), r.trials.to_string()];
    if cols.strict {
        cells.push(format!("{:.4}", r.strict_rate()));
    }
    if cols.any {
        cells.push(format!("{:.4}", r.any_rate()));
    }
    cells
}

fn header(cols: Columns) -> Vec<&'static str> {
    let mut h = vec!["objects", "trials"];
    if cols.strict {
        h.push("condition1_rate");
    }
    if cols.any {
        h.push("condition2_rate");
    }
    h
}

pub fn eval_csv(table: &EvalTable, cols: Columns) -> String {
    let mut out = format!("{EVAL_CSV_HEADER}\n{}\n", header(cols).join(","));
    for r in &table.rows {
        out.push_str(&row_cells(&r.objects.to_string(), r, cols).join(","));
        out.push('\n');
    }
    out.push_str(&row_cells("all", &table.total(), cols).join(","));
    out.push('\n');
    out
}

pub fn eval_text(table: &EvalTable, cols: Columns) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", header(cols).iter().map(|h| format!("{h:>16}")).collect::<String>());
    let rows = table.rows.iter().map(|r| (r.objects.to_string(), r.clone()));
    for (label, r) in rows.chain(std::iter::once(("all".to_string(), table.total()))) {
        let _ = writeln!(out, "{}", row_cells(&label, &r, cols).iter().map(|c| format!("{c:>16}")).collect::<String>());
    }
    out
}

const GROUP_COLORS: [(&str, &str); 3] = [("left", "#1f77b4"), ("center", "#2ca02c"), ("right", "#d62728")];

/// Scatter of 2-D embeddings over `[-1, 1]^2`, one color per probe group,
/// with the optimum center drawn as a cross.
pub fn feature_svg(rows: &[FeatureRow], center: [f64; 2]) -> String {
    let size = 480.0;
    let pad = 40.0;
    let span = size - 2.0 * pad;
    let px = |v: f64| pad + (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * span;
    let py = |v: f64| pad + (1.0 - (v.clamp(-1.0, 1.0) + 1.0) / 2.0) * span;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="#444"/>"##
    );
    let (cx, cy) = (px(0.0), py(0.0));
    let _ = writeln!(
        s,
        r##"<line x1="{pad}" y1="{cy}" x2="{}" y2="{cy}" stroke="#ccc"/><line x1="{cx}" y1="{pad}" x2="{cx}" y2="{}" stroke="#ccc"/>"##,
        pad + span,
        pad + span
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">v1</text>"#, pad + span - 14.0, pad + span + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">v2</text>"#, pad - 24.0, pad + 10.0);
    for r in rows {
        let color = GROUP_COLORS.iter().find(|(g, _)| *g == r.group).map_or("#7f7f7f", |(_, c)| c);
        let _ = writeln!(
            s,
            r#"<circle class="{}" cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.7"/>"#,
            r.group,
            px(r.v1),
            py(r.v2)
        );
    }
    let (ox, oy) = (px(center[0]), py(center[1]));
    let _ = writeln!(
        s,
        r#"<path d="M {:.2} {:.2} L {:.2} {:.2} M {:.2} {:.2} L {:.2} {:.2}" stroke="black" stroke-width="2"/>"#,
        ox - 6.0,
        oy - 6.0,
        ox + 6.0,
        oy + 6.0,
        ox - 6.0,
        oy + 6.0,
        ox + 6.0,
        oy - 6.0
    );
    for (i, (g, c)) in GROUP_COLORS.iter().enumerate() {
        let y = pad + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{c}"/><text x="{:.2}" y="{:.2}" font-size="12">{g}</text>"#,
            pad + 10.0,
            y,
            pad + 18.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
