//! Standalone SVG charts: the cluster-pair AUC heatmap and per-cluster bars.
//!
//! Output is plain text built in a fixed order with fixed-precision
//! coordinates, so identical inputs always give identical documents.

use std::fmt::Write;

use crate::dataset::ClusterId;

const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";
const UNDEFINED_FILL: &str = "url(#undefined-hatch)";

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(
        out,
        "<defs><pattern id=\"undefined-hatch\" width=\"8\" height=\"8\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\"><rect width=\"8\" height=\"8\" fill=\"#d9d9d9\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"8\" stroke=\"#8c8c8c\" stroke-width=\"3\"/></pattern></defs>"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>"
    );
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (f64::from(a) + (f64::from(b) - f64::from(a)) * t).round() as u8
}

/// Diverging color for an AUC: red below 0.5, white at 0.5, blue above.
pub fn auc_color(value: f64) -> String {
    const LOW: (u8, u8, u8) = (178, 24, 43);
    const MID: (u8, u8, u8) = (247, 247, 247);
    const HIGH: (u8, u8, u8) = (33, 102, 172);
    let t = ((value.clamp(0.0, 1.0) - 0.5) * 2.0).clamp(-1.0, 1.0);
    let (end, t) = if t < 0.0 { (LOW, -t) } else { (HIGH, t) };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(MID.0, end.0, t),
        lerp(MID.1, end.1, t),
        lerp(MID.2, end.2, t)
    )
}

/// K x K heatmap of cluster-pair AUCs.
///
/// Rows are the cluster of the positive sample and columns the cluster of
/// the negative sample. Undefined cells are hatched gray and carry no number.
pub fn render_heatmap(
    matrix: &[Vec<Option<f64>>],
    weights: &[Vec<f64>],
    labels: &[ClusterId],
) -> String {
    let k = labels.len();
    let cell = if k <= 8 { 72.0 } else { (576.0 / k as f64).max(28.0) };
    let (left, top) = (150.0, 90.0);
    let legend_w = 110.0;
    let width = left + cell * k as f64 + legend_w + 30.0;
    let height = top + cell * k as f64 + 70.0;
    let mut out = String::new();
    header(&mut out, width, height, "Cluster-pair AUC heatmap");

    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\" {FONT}>Inter-cluster AUC</text>",
        left + cell * k as f64 / 2.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"56\" text-anchor=\"middle\" font-size=\"12\" {FONT}>Negative-sample cluster (column)</text>",
        left + cell * k as f64 / 2.0
    );
    let _ = writeln!(
        out,
        "<text x=\"24\" y=\"{y:.2}\" text-anchor=\"middle\" font-size=\"12\" {FONT} transform=\"rotate(-90 24 {y:.2})\">Positive-sample cluster (row)</text>",
        y = top + cell * k as f64 / 2.0
    );

    let font_size = (cell * 0.22).clamp(8.0, 14.0);
    for (j, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text class=\"col-label\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\" {FONT}>{}</text>",
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            escape(label.as_str())
        );
    }
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text class=\"row-label\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\" font-size=\"11\" {FONT}>{}</text>",
            left - 8.0,
            top + cell * (i as f64 + 0.5),
            escape(label.as_str())
        );
        for (j, col_label) in labels.iter().enumerate().take(k) {
            let x = left + cell * j as f64;
            let y = top + cell * i as f64;
            let value = matrix.get(i).and_then(|r| r.get(j)).copied().flatten();
            let weight = weights.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0);
            let fill = value.map_or_else(|| UNDEFINED_FILL.to_owned(), auc_color);
            let tip = match value {
                Some(v) => format!("{} vs {}: AUC {v:.3}, weight {weight:.4}", label, col_label),
                None => format!("{} vs {}: undefined", label, col_label),
            };
            let _ = writeln!(
                out,
                "<rect class=\"cell\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{fill}\" stroke=\"#ffffff\" stroke-width=\"1\"><title>{}</title></rect>",
                escape(&tip)
            );
            if let Some(v) = value {
                let ink = if (v - 0.5).abs() > 0.3 { "#ffffff" } else { "#000000" };
                let _ = writeln!(
                    out,
                    "<text class=\"cell-value\" x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" dominant-baseline=\"middle\" font-size=\"{font_size:.1}\" fill=\"{ink}\" {FONT}>{v:.3}</text>",
                    x + cell / 2.0,
                    y + cell / 2.0
                );
            }
        }
    }

    // Legend: vertical color bar from 0 (bottom) to 1 (top).
    let lx = left + cell * k as f64 + 30.0;
    let bar_h = (cell * k as f64).max(120.0).min(height - top - 40.0);
    let steps = 20;
    let step_h = bar_h / steps as f64;
    for s in 0..steps {
        let v = 1.0 - (s as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"18\" height=\"{:.2}\" fill=\"{}\"/>",
            top + step_h * s as f64,
            step_h + 0.5,
            auc_color(v)
        );
    }
    for (v, label) in [(1.0, "1.0"), (0.5, "0.5 chance"), (0.0, "0.0")] {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" dominant-baseline=\"middle\" font-size=\"10\" {FONT}>{label}</text>",
            lx + 24.0,
            top + bar_h * (1.0 - v)
        );
    }
    let _ = writeln!(
        out,
        "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"18\" height=\"12\" fill=\"{UNDEFINED_FILL}\"/>",
        top + bar_h + 14.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" dominant-baseline=\"middle\" font-size=\"10\" {FONT}>undefined</text>",
        lx + 24.0,
        top + bar_h + 20.0
    );
    out.push_str("</svg>\n");
    out
}

/// Orders ids numerically when they all parse as integers, otherwise lexically.
fn sort_by_id(values: &mut [(ClusterId, Option<f64>)]) {
    let numeric: Option<Vec<i64>> = values.iter().map(|(id, _)| id.as_str().parse().ok()).collect();
    match numeric {
        Some(_) => values.sort_by_key(|(id, _)| id.as_str().parse::<i64>().unwrap_or(0)),
        None => values.sort_by(|a, b| a.0.cmp(&b.0)),
    }
}

/// Bars of a per-cluster metric, sorted by cluster id, with a line at `global`.
pub fn render_cluster_bars(
    values: &[(ClusterId, Option<f64>)],
    metric_name: &str,
    global: Option<f64>,
) -> String {
    let mut sorted = values.to_vec();
    sort_by_id(&mut sorted);
    let items: Vec<(String, Option<f64>)> = sorted
        .into_iter()
        .map(|(id, v)| (id.0, v))
        .collect();
    render_bars(
        &format!("Per-cluster {metric_name}"),
        "Cluster",
        metric_name,
        &items,
        global.map(|g| (g, format!("global {g:.3}"))),
    )
}

/// Bars in the given order; `None` values become an empty slot with a marker.
pub fn render_bars(
    title: &str,
    x_title: &str,
    y_title: &str,
    items: &[(String, Option<f64>)],
    reference: Option<(f64, String)>,
) -> String {
    let n = items.len().max(1);
    let slot = if n <= 12 { 60.0 } else { (720.0 / n as f64).max(18.0) };
    let (left, top, plot_h) = (80.0, 60.0, 300.0);
    let bottom_pad = 90.0;
    let width = left + slot * n as f64 + 40.0;
    let height = top + plot_h + bottom_pad;

    let mut y_max = items
        .iter()
        .filter_map(|(_, v)| *v)
        .chain(reference.as_ref().map(|r| r.0))
        .fold(0.0f64, f64::max);
    y_max = if y_max <= 0.0 { 1.0 } else { y_max * 1.1 };
    let y_of = |v: f64| top + plot_h * (1.0 - v / y_max);

    let mut out = String::new();
    header(&mut out, width, height, title);
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"28\" text-anchor=\"middle\" font-size=\"16\" {FONT}>{}</text>",
        width / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{left:.2}\" y1=\"{top:.2}\" x2=\"{left:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
        top + plot_h
    );
    let _ = writeln!(
        out,
        "<line x1=\"{left:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#000000\"/>",
        left + slot * n as f64,
        y = top + plot_h
    );
    for t in 0..=4 {
        let v = y_max * t as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\" font-size=\"10\" {FONT}>{v:.3}</text>",
            left - 6.0,
            y_of(v)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{y:.2}\" text-anchor=\"middle\" font-size=\"12\" {FONT} transform=\"rotate(-90 20 {y:.2})\">{}</text>",
        escape(y_title),
        y = top + plot_h / 2.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" {FONT}>{}</text>",
        left + slot * n as f64 / 2.0,
        height - 14.0,
        escape(x_title)
    );

    for (i, (label, value)) in items.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.15;
        let bar_w = slot * 0.7;
        let cx = x + bar_w / 2.0;
        match value {
            Some(v) => {
                let y = y_of(*v);
                let _ = writeln!(
                    out,
                    "<rect class=\"bar\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"#4c72b0\"><title>{}: {v:.6}</title></rect>",
                    top + plot_h - y,
                    escape(label)
                );
                let _ = writeln!(
                    out,
                    "<text class=\"bar-value\" x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"9\" {FONT}>{v:.3}</text>",
                    y - 4.0
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "<rect class=\"undefined-slot\" x=\"{x:.2}\" y=\"{:.2}\" width=\"{bar_w:.2}\" height=\"12\" fill=\"{UNDEFINED_FILL}\"><title>{}: undefined</title></rect>",
                    top + plot_h - 12.0,
                    escape(label)
                );
                let _ = writeln!(
                    out,
                    "<text class=\"undefined-marker\" x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\" fill=\"#8c8c8c\" {FONT}>n/a</text>",
                    top + plot_h - 18.0
                );
            }
        }
        let ly = top + plot_h + 14.0;
        let _ = writeln!(
            out,
            "<text class=\"bar-label\" x=\"{cx:.2}\" y=\"{ly:.2}\" text-anchor=\"end\" font-size=\"10\" {FONT} transform=\"rotate(-45 {cx:.2} {ly:.2})\">{}</text>",
            escape(label)
        );
    }

    if let Some((v, label)) = reference {
        let y = y_of(v);
        let _ = writeln!(
            out,
            "<line class=\"reference\" x1=\"{left:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#c44e52\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>",
            left + slot * n as f64
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"10\" fill=\"#c44e52\" {FONT}>{}</text>",
            left + slot * n as f64,
            y - 4.0,
            escape(&label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<ClusterId> {
        names.iter().map(|&n| ClusterId::from(n)).collect()
    }

    fn texts_with_class<'a>(doc: &'a roxmltree::Document, class: &str) -> Vec<&'a str> {
        doc.descendants()
            .filter(|n| n.has_tag_name("text") && n.attribute("class") == Some(class))
            .filter_map(|n| n.text())
            .collect()
    }

    #[test]
    fn toy_heatmap_cells() {
        let m = vec![vec![Some(1.0), Some(1.0)], vec![Some(1.0), Some(0.5)]];
        let w = vec![vec![2.0 / 9.0, 4.0 / 9.0], vec![1.0 / 9.0, 2.0 / 9.0]];
        let svg = render_heatmap(&m, &w, &ids(&["C1", "C2"]));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(
            texts_with_class(&doc, "cell-value"),
            vec!["1.000", "1.000", "1.000", "0.500"]
        );
        let cells = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("cell"))
            .count();
        assert_eq!(cells, 4);
        assert!(svg.contains("Positive-sample cluster (row)"));
        assert!(svg.contains("Negative-sample cluster (column)"));
        assert!(!svg.contains("href"));
    }

    #[test]
    fn undefined_row_is_hatched() {
        let m = vec![vec![Some(0.7), Some(0.2)], vec![None, None]];
        let w = vec![vec![0.5, 0.5], vec![0.0, 0.0]];
        let svg = render_heatmap(&m, &w, &ids(&["a", "b"]));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(texts_with_class(&doc, "cell-value"), vec!["0.700", "0.200"]);
        let hatched = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("cell") && n.attribute("fill") == Some(UNDEFINED_FILL))
            .count();
        assert_eq!(hatched, 2);
    }

    #[test]
    fn single_cell_heatmap() {
        let svg = render_heatmap(&[vec![Some(0.8)]], &[vec![1.0]], &ids(&["<all>"]));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(texts_with_class(&doc, "cell-value"), vec!["0.800"]);
        assert!(svg.contains("&lt;all&gt;"));
    }

    #[test]
    fn color_scale_anchored_at_half() {
        assert_eq!(auc_color(0.5), "#f7f7f7");
        assert_eq!(auc_color(0.0), "#b2182b");
        assert_eq!(auc_color(1.0), "#2166ac");
    }

    #[test]
    fn toy_bars() {
        let values = vec![("C2".into(), Some(0.5)), ("C1".into(), Some(1.0))];
        let svg = render_cluster_bars(&values, "AUC", Some(8.0 / 9.0));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(texts_with_class(&doc, "bar-label"), vec!["C1", "C2"]);
        assert_eq!(texts_with_class(&doc, "bar-value"), vec!["1.000", "0.500"]);
        let line = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("reference"))
            .unwrap();
        let y_line: f64 = line.attribute("y1").unwrap().parse().unwrap();
        let bars: Vec<f64> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("bar"))
            .map(|n| n.attribute("y").unwrap().parse().unwrap())
            .collect();
        // 1.0 bar is above the 8/9 line, 0.5 bar below it.
        assert!(bars[0] < y_line && bars[1] > y_line);
    }

    #[test]
    fn equal_bars_touch_reference() {
        let values = vec![("1".into(), Some(0.3)), ("2".into(), Some(0.3))];
        let svg = render_cluster_bars(&values, "Brier", Some(0.3));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let y_line = doc
            .descendants()
            .find(|n| n.attribute("class") == Some("reference"))
            .and_then(|n| n.attribute("y1"))
            .unwrap()
            .to_owned();
        for bar in doc.descendants().filter(|n| n.attribute("class") == Some("bar")) {
            assert_eq!(bar.attribute("y").unwrap(), y_line);
        }
    }

    #[test]
    fn undefined_bar_has_marker_and_numeric_sort() {
        let values = vec![
            ("10".into(), Some(0.7)),
            ("9".into(), None),
            ("2".into(), Some(0.6)),
        ];
        let svg = render_cluster_bars(&values, "AUC", Some(0.65));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(texts_with_class(&doc, "bar-label"), vec!["2", "9", "10"]);
        assert_eq!(texts_with_class(&doc, "undefined-marker"), vec!["n/a"]);
    }
}
