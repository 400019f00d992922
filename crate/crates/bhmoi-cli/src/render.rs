//! Deterministic SVG and markdown rendering for result JSON.
//!
//! Every number is formatted with a fixed precision and every element is
//! emitted in a fixed order, so identical inputs produce byte-identical
//! output. That property is load-bearing: golden-file tests and the
//! round-trip contract (same JSON in, same plot out) depend on it.

use bhmoi::{BhmoiReport, ClusteringReport};

/// Cluster colors, reused in plot order; wraps past ten clusters.
const PALETTE: [&str; 10] = [
    "#c0392b", "#b8a11e", "#27845f", "#2e6da4", "#8e44ad", "#c96a11", "#148f9c", "#6d4c41",
    "#5d661e", "#424949",
];

const WIDTH: f64 = 680.0;

fn color(cluster: usize) -> &'static str {
    PALETTE[cluster % PALETTE.len()]
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(height: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {WIDTH:.0} {height:.0}\" font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n\
         <text x=\"16\" y=\"24\" font-size=\"15\" fill=\"#1a1a1a\">{}</text>\n",
        esc(title)
    )
}

/// Scan of the objective across cluster counts plus the chosen partition,
/// drawn as a line chart and a colored membership strip.
pub fn clustering_svg(report: &ClusteringReport) -> String {
    let height = 150.0 + 22.0 * report.labels.len() as f64;
    let mut svg = svg_open(
        height,
        &format!("clusters: {}   objective: {:.4}", report.k, report.oci),
    );

    // Objective-by-K line chart in the top-right corner.
    let (cx, cy, cw, ch) = (400.0, 44.0, 250.0, 80.0);
    let scores = &report.oci_by_k;
    let lo = scores.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let step = if scores.len() > 1 { cw / (scores.len() - 1) as f64 } else { 0.0 };
    let point = |i: usize, v: f64| -> (f64, f64) {
        (cx + step * i as f64, cy + ch - (v - lo) / span * ch)
    };
    svg.push_str(&format!(
        "<rect x=\"{cx:.1}\" y=\"{cy:.1}\" width=\"{cw:.1}\" height=\"{ch:.1}\" \
         fill=\"none\" stroke=\"#cccccc\"/>\n"
    ));
    let path: Vec<String> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (x, y) = point(i, s.1);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#2e6da4\" stroke-width=\"1.5\"/>\n",
        path.join(" ")
    ));
    for (i, (k, v)) in scores.iter().enumerate() {
        let (x, y) = point(i, *v);
        let r = if *k == report.k { 4.0 } else { 2.5 };
        let fill = if *k == report.k { "#c0392b" } else { "#2e6da4" };
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.1}\" fill=\"{fill}\"/>\n\
             <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#666666\" \
             text-anchor=\"middle\">{k}</text>\n",
            cy + ch + 14.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{cx:.1}\" y=\"{:.2}\" font-size=\"11\" fill=\"#666666\">objective by cluster \
         count</text>\n",
        cy - 8.0
    ));

    // Membership strip: one row per subgroup, colored by cluster.
    for (i, (label, &cluster)) in report.labels.iter().zip(&report.assignments).enumerate() {
        let y = 56.0 + 22.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"16\" y=\"{y:.1}\" width=\"14\" height=\"14\" fill=\"{}\"/>\n\
             <text x=\"38\" y=\"{:.1}\" font-size=\"12\" fill=\"#1a1a1a\">{} (cluster {})</text>\n",
            color(cluster),
            y + 11.0,
            esc(label),
            cluster + 1
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Posterior means with credible intervals per subgroup, colored by
/// cluster, over a borrowing-strength annotation table.
pub fn bhmoi_svg(report: &BhmoiReport) -> String {
    let n = report.labels.len();
    let table_y = 320.0;
    let height = table_y + 30.0 + 18.0 * report.obi.len() as f64;
    let mut svg = svg_open(
        height,
        &format!("clusters: {}   objective: {:.4}", report.k, report.oci),
    );

    // Rate axis [0, 1] with horizontal gridlines.
    let (px, py, pw, ph) = (56.0, 44.0, WIDTH - 96.0, 240.0);
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let y = py + ph - frac * ph;
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" \
             stroke=\"#e0e0e0\"/>\n\
             <text x=\"{:.1}\" y=\"{:.2}\" font-size=\"10\" fill=\"#666666\" \
             text-anchor=\"end\">{frac:.2}</text>\n",
            px + pw,
            px - 6.0,
            y + 3.0
        ));
    }
    let slot = pw / n as f64;
    for (i, summary) in report.summaries.iter().enumerate() {
        let cluster = report.assignments[i];
        let x = px + slot * (i as f64 + 0.5);
        let y_of = |rate: f64| py + ph - rate.clamp(0.0, 1.0) * ph;
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{}\" \
             stroke-width=\"2\"/>\n\
             <circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>\n\
             <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"9\" fill=\"#666666\" \
             text-anchor=\"middle\" transform=\"rotate(40 {x:.2} {:.2})\">{}</text>\n",
            y_of(summary.lower),
            y_of(summary.upper),
            color(cluster),
            y_of(summary.mean),
            color(cluster),
            py + ph + 16.0,
            py + ph + 16.0,
            esc(&summary.label)
        ));
    }

    // Borrowing table: one row per cluster.
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" fill=\"#1a1a1a\">cluster   size   homogeneity \
         (OBI)   borrowing shape (alpha)</text>\n",
        table_y
    ));
    for (m, (obi, alpha)) in report.obi.iter().zip(&report.alphas).enumerate() {
        let y = table_y + 18.0 * (m + 1) as f64;
        let size = report.assignments.iter().filter(|&&c| c == m).count();
        svg.push_str(&format!(
            "<rect x=\"16\" y=\"{:.1}\" width=\"11\" height=\"11\" fill=\"{}\"/>\n\
             <text x=\"34\" y=\"{y:.1}\" font-size=\"12\" fill=\"#1a1a1a\">{}   {size}   {obi:.3}   \
             {alpha:.1}</text>\n",
            y - 10.0,
            color(m),
            m + 1
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Markdown section for a clustering-only result.
pub fn clustering_markdown(name: &str, report: &ClusteringReport) -> String {
    let mut md = format!(
        "## {name}\n\n{} subgroups in {} clusters; objective {:.4} (within-cluster distance \
         {:.4}).\n\n| cluster | size | homogeneity (OBI) | members |\n|---|---|---|---|\n",
        report.labels.len(),
        report.k,
        report.oci,
        report.wkm_objective,
    );
    for (m, obi) in report.obi.iter().enumerate() {
        let members: Vec<&str> = report
            .labels
            .iter()
            .zip(&report.assignments)
            .filter(|(_, &c)| c == m)
            .map(|(l, _)| l.as_str())
            .collect();
        md.push_str(&format!(
            "| {} | {} | {obi:.3} | {} |\n",
            m + 1,
            members.len(),
            members.join(", ")
        ));
    }
    md.push_str("\n| cluster count | objective |\n|---|---|\n");
    for (k, score) in &report.oci_by_k {
        md.push_str(&format!("| {k} | {score:.4} |\n"));
    }
    md.push('\n');
    md
}

/// Markdown section for a full borrowing fit.
pub fn bhmoi_markdown(name: &str, report: &BhmoiReport) -> String {
    let mut md = format!(
        "## {name}\n\n{} subgroups in {} clusters; objective {:.4}.\n\n| cluster | size | \
         homogeneity (OBI) | borrowing shape (alpha) |\n|---|---|---|---|\n",
        report.labels.len(),
        report.k,
        report.oci,
    );
    for (m, (obi, alpha)) in report.obi.iter().zip(&report.alphas).enumerate() {
        let size = report.assignments.iter().filter(|&&c| c == m).count();
        md.push_str(&format!("| {} | {size} | {obi:.3} | {alpha:.1} |\n", m + 1));
    }
    md.push_str(&format!(
        "\n| subgroup | cluster | mean | sd | {:.0}% interval | Pr(rate > {}) |\n|---|---|---|---|---|---|\n",
        report.credible_level * 100.0,
        report.p_null,
    ));
    for (i, s) in report.summaries.iter().enumerate() {
        md.push_str(&format!(
            "| {} | {} | {:.3} | {:.3} | [{:.3}, {:.3}] | {:.3} |\n",
            esc_md(&s.label),
            report.assignments[i] + 1,
            s.mean,
            s.sd,
            s.lower,
            s.upper,
            s.prob_above_null,
        ));
    }
    md.push('\n');
    md
}

fn esc_md(text: &str) -> String {
    text.replace('|', "\\|")
}
