use std::fmt::Write as _;
use std::path::Path;

use super::ranks::RankTable;
use crate::error::{Error, Result};

/// Maximal groups of methods whose average ranks differ by less than `cd`.
///
/// Each group is a contiguous run in rank order, reported as method indices
/// sorted from best to worst. Groups contained in an earlier one are
/// dropped, as are singletons.
pub fn cd_groups(ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]));
    let mut groups = Vec::new();
    let mut last_end = 0usize;
    for i in 0..order.len() {
        let mut j = i;
        while j + 1 < order.len() && ranks[order[j + 1]] - ranks[order[i]] < cd {
            j += 1;
        }
        if j > i && (groups.is_empty() || j > last_end) {
            groups.push(order[i..=j].to_vec());
            last_end = j;
        }
    }
    groups
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Critical-difference diagram as a standalone SVG document.
///
/// The rank axis runs from 1 (left, best) to k; the better half of the
/// methods is labelled on the left, the rest on the right, and groups that
/// are not significantly different are joined by thick bars.
pub fn render_cd_svg(table: &RankTable, cd: f64) -> Result<String> {
    let k = table.methods.len();
    if k < 2 {
        return Err(Error::invalid("diagram needs at least two methods"));
    }
    let order = table.order();
    let groups = cd_groups(&table.average_ranks, cd);
    let left_n = k.div_ceil(2);
    let rows = left_n.max(k - left_n);

    let (width, margin) = (800.0f64, 180.0f64);
    let axis_y = 70.0;
    let band_y0 = axis_y + 18.0;
    let band_gap = 8.0;
    let label_y0 = band_y0 + groups.len() as f64 * band_gap + 20.0;
    let row_h = 20.0;
    let height = label_y0 + rows as f64 * row_h + 20.0;
    let span = (k - 1) as f64;
    let x = |r: f64| margin + (r - 1.0) / span * (width - 2.0 * margin);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axis
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{axis_y}" x2="{:.2}" y2="{axis_y}" stroke="black"/>"#,
        x(1.0),
        x(k as f64)
    );
    for r in 1..=k {
        let xr = x(r as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{xr:.2}" y1="{axis_y}" x2="{xr:.2}" y2="{:.0}" stroke="black"/><text x="{xr:.2}" y="{:.0}" text-anchor="middle">{r}</text>"#,
            axis_y - 8.0,
            axis_y - 12.0
        );
        if r < k {
            let xh = x(r as f64 + 0.5);
            let _ = writeln!(
                s,
                r#"<line x1="{xh:.2}" y1="{axis_y}" x2="{xh:.2}" y2="{:.0}" stroke="black"/>"#,
                axis_y - 4.0
            );
        }
    }
    // critical difference bar
    let cd_len = cd.min(span);
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="20" x2="{:.2}" y2="20" stroke="black" stroke-width="2"/><text x="{:.2}" y="14" text-anchor="middle">CD = {cd:.2}</text>"#,
        x(1.0),
        x(1.0 + cd_len),
        x(1.0 + cd_len / 2.0)
    );
    // groups
    for (g, members) in groups.iter().enumerate() {
        let lo = table.average_ranks[members[0]];
        let hi = table.average_ranks[*members.last().unwrap()];
        let y = band_y0 + g as f64 * band_gap;
        let _ = writeln!(
            s,
            r#"<line class="band" x1="{:.2}" y1="{y}" x2="{:.2}" y2="{y}" stroke="black" stroke-width="4"/>"#,
            x(lo) - 3.0,
            x(hi) + 3.0
        );
    }
    // method labels
    for (pos, &m) in order.iter().enumerate() {
        let r = table.average_ranks[m];
        let xr = x(r);
        let (row, left) = if pos < left_n { (pos, true) } else { (k - 1 - pos, false) };
        let y = label_y0 + row as f64 * row_h;
        let (xe, anchor, tx) = if left {
            (margin - 20.0, "end", margin - 24.0)
        } else {
            (width - margin + 20.0, "start", width - margin + 24.0)
        };
        let _ = writeln!(
            s,
            r#"<polyline points="{xr:.2},{axis_y} {xr:.2},{y} {xe:.2},{y}" fill="none" stroke="black"/><text class="method" x="{tx:.2}" y="{:.1}" text-anchor="{anchor}">{} ({r:.2})</text>"#,
            y + 4.0,
            esc(&table.methods[m])
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_cd_diagram(table: &RankTable, cd: f64, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, render_cd_svg(table, cd)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::average_ranks;

    #[test]
    fn example_groups() {
        let g = cd_groups(&[2.8, 6.3, 6.7, 8.0], 5.15);
        assert_eq!(g, vec![vec![0, 1, 2], vec![1, 2, 3]]);
    }

    #[test]
    fn groups_follow_rank_order() {
        let g = cd_groups(&[8.0, 2.8, 6.7, 6.3], 5.15);
        assert_eq!(g, vec![vec![1, 3, 2], vec![3, 2, 0]]);
    }

    #[test]
    fn no_groups_when_all_apart() {
        assert!(cd_groups(&[1.0, 3.0, 5.0], 1.0).is_empty());
        assert_eq!(cd_groups(&[1.0, 1.5, 2.0], 10.0), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn svg_contains_every_method() {
        let methods: Vec<String> = ["a<b", "c", "d", "e", "f"].iter().map(|s| s.to_string()).collect();
        let datasets = vec!["x".to_string(), "y".to_string()];
        let values = vec![vec![0.9, 0.8], vec![0.7, 0.9], vec![0.5, 0.4], vec![0.3, 0.2], vec![0.1, 0.6]];
        let t = average_ranks(&methods, &datasets, &values, true).unwrap();
        let svg = render_cd_svg(&t, 2.0).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches(r#"class="method""#).count(), 5);
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches(r#"class="band""#).count(), cd_groups(&t.average_ranks, 2.0).len());
    }
}
