//! CSV artifacts, the SVG regret chart and content hashing.
//!
//! Every CSV may start with one `# key: value` comment line carrying the
//! hash of the run's metadata sidecar; readers skip `#` lines.

use std::fmt::Write as _;
use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::planner::{Gap, GapBound, GapTables};
use crate::sim::{AggregateRow, PacPoint, RegretTrace, TraceRow};

pub const TRACE_HEADER: [&str; 6] = ["episode", "context_id", "inst_regret", "cum_regret", "return", "seed"];
pub const AGGREGATE_HEADER: [&str; 4] = ["episode", "mean_cum_regret", "ci_low", "ci_high"];
pub const GAP_HEADER: [&str; 8] = [
    "h",
    "s",
    "a",
    "context_id",
    "gap",
    "trimmed_gap",
    "in_z_pos",
    "in_z_trim",
];
pub const PAC_HEADER: [&str; 3] = ["episode", "mean_suboptimality", "seeds"];
pub const BOUND_HEADER: [&str; 14] = [
    "p",
    "episodes",
    "status",
    "delta_min",
    "z_pos",
    "z_trim",
    "var_scale",
    "inverse_gap_sum",
    "trim_term",
    "tail_term",
    "constant_term",
    "log_factor",
    "bound",
    "argmin",
];
pub const DIAGNOSTIC_HEADER: [&str; 6] = [
    "episode",
    "refresh_events",
    "max_bonus",
    "plan_value",
    "optimal_value",
    "seed",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn writer<W: Write>(mut out: W, stamp: Option<&str>) -> Result<csv::Writer<W>> {
    if let Some(hash) = stamp {
        writeln!(out, "# metadata-sha256: {hash}")?;
    }
    Ok(csv::WriterBuilder::new().from_writer(out))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(out: W, trace: &RegretTrace, stamp: Option<&str>) -> Result<()> {
    let mut w = writer(out, stamp)?;
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    let seed = trace.seed.to_string();
    for r in &trace.rows {
        w.write_record([
            r.episode.to_string().as_str(),
            r.context_id.as_str(),
            &r.inst_regret.to_string(),
            &r.cum_regret.to_string(),
            &r.ret.to_string(),
            &seed,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow], stamp: Option<&str>) -> Result<()> {
    let mut w = writer(out, stamp)?;
    w.write_record(AGGREGATE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.mean_cum_regret.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(out: W, trace: &RegretTrace, stamp: Option<&str>) -> Result<()> {
    let mut w = writer(out, stamp)?;
    w.write_record(DIAGNOSTIC_HEADER).map_err(csv_err)?;
    let seed = trace.seed.to_string();
    for r in &trace.rows {
        w.write_record([
            r.episode.to_string(),
            r.refresh_events.to_string(),
            opt(r.max_bonus),
            opt(r.plan_value),
            r.optimal_value.to_string(),
            seed.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-seed trace as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|x| x.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad or missing {name} column")))
}

pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<TraceFile> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Format(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut seed = None;
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        seed = Some(field::<u64>(&rec, 5, "seed")?);
        rows.push(TraceRow {
            episode: field(&rec, 0, "episode")?,
            context_id: rec.get(1).unwrap_or_default().to_string(),
            inst_regret: field(&rec, 2, "inst_regret")?,
            cum_regret: field(&rec, 3, "cum_regret")?,
            ret: field(&rec, 4, "return")?,
            optimal_value: f64::NAN,
            plan_value: None,
            max_bonus: None,
            refresh_events: 0,
        });
    }
    Ok(TraceFile {
        seed: seed.unwrap_or_default(),
        rows,
    })
}

/// Recomputes the aggregate from traces read back from disk.
pub fn aggregate_from_files(files: &[TraceFile]) -> Vec<AggregateRow> {
    let cum: Vec<Vec<f64>> = files
        .iter()
        .map(|f| f.rows.iter().map(|r| r.cum_regret).collect())
        .collect();
    crate::sim::aggregate(&cum)
}

pub fn read_aggregate_csv<R: std::io::Read>(input: R) -> Result<Vec<AggregateRow>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(AggregateRow {
            episode: field(&rec, 0, "episode")?,
            mean_cum_regret: field(&rec, 1, "mean_cum_regret")?,
            ci_low: field(&rec, 2, "ci_low")?,
            ci_high: field(&rec, 3, "ci_high")?,
        });
    }
    Ok(rows)
}

/// One row per `(h, s, a, context)`; layers 1-based. Infinite gaps print as
/// `inf`, trimmed gaps outside `Z_pos` as an empty field.
pub fn write_gap_csv<W: Write>(out: W, tables: &GapTables, context_ids: &[&str], stamp: Option<&str>) -> Result<()> {
    let mut w = writer(out, stamp)?;
    w.write_record(GAP_HEADER).map_err(csv_err)?;
    let dims = tables.dims;
    let in_pos: std::collections::HashSet<_> = tables.z_pos.iter().copied().collect();
    let in_trim: std::collections::HashSet<_> = tables.z_trim.iter().copied().collect();
    for (h, s, a) in dims.triples() {
        let trimmed = opt(tables.trimmed(h, s, a));
        for (table, id) in tables.per_context.iter().zip(context_ids) {
            let gap = match table.get(h, s, a) {
                Gap::Finite(g) => g.to_string(),
                Gap::Infinite => "inf".to_string(),
            };
            w.write_record([
                (h + 1).to_string(),
                s.to_string(),
                a.to_string(),
                id.to_string(),
                gap,
                trimmed.clone(),
                in_pos.contains(&(h, s, a)).to_string(),
                in_trim.contains(&(h, s, a)).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A mean curve with its interval band.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub rows: Vec<AggregateRow>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static line chart of mean cumulative regret with translucent CI bands.
pub fn regret_chart_svg(title: &str, series: &[ChartSeries], stamp: Option<&str>) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 70.0;
    const R: f64 = 160.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    const MAX_POINTS: usize = 400;

    let x_max = series
        .iter()
        .flat_map(|s| s.rows.last().map(|r| r.episode))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = series
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| r.ci_high.max(r.mean_cum_regret)))
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let px = |x: f64| L + (x / x_max) * (W - L - R);
    let py = |y: f64| H - B - (y / y_max) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    if let Some(hash) = stamp {
        let _ = writeln!(svg, "<desc>metadata-sha256: {hash}</desc>");
    }
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (W - R + L) / 2.0,
        xml_escape(title)
    );
    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<path d="M{L},{T} L{L},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#,
        y0 = H - B,
        x1 = W - R
    );
    for i in 0..=5 {
        let fx = x_max * i as f64 / 5.0;
        let fy = y_max * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{y1}" stroke="black"/><text x="{x}" y="{yt}" text-anchor="middle">{lab}</text>"#,
            x = px(fx),
            y0 = H - B,
            y1 = H - B + 5.0,
            yt = H - B + 18.0,
            lab = tick_label(fx)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{y}" x2="{L}" y2="{y}" stroke="black"/><text x="{xt}" y="{yl}" text-anchor="end">{lab}</text>"#,
            x0 = L - 5.0,
            y = py(fy),
            xt = L - 8.0,
            yl = py(fy) + 4.0,
            lab = tick_label(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">episode</text>"#,
        (W - R + L) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">cumulative regret</text>"#,
        y = (H - B + T) / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let step = s.rows.len().div_ceil(MAX_POINTS).max(1);
        let mut pts: Vec<&AggregateRow> = s.rows.iter().step_by(step).collect();
        if let Some(last) = s.rows.last() {
            if pts.last().is_some_and(|p| p.episode != last.episode) {
                pts.push(last);
            }
        }
        if pts.is_empty() {
            continue;
        }
        let mut band = String::new();
        for r in &pts {
            let _ = write!(band, "{:.2},{:.2} ", px(r.episode as f64), py(r.ci_high));
        }
        for r in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(r.episode as f64), py(r.ci_low.max(0.0)));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.episode as f64), py(r.mean_cum_regret)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = T + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" y1="{ly}" x2="{x1}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{xt}" y="{yt}">{}</text>"#,
            xml_escape(&s.label),
            x0 = W - R + 15.0,
            x1 = W - R + 40.0,
            xt = W - R + 46.0,
            yt = ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Seed-averaged PAC curve. Every trace must share the same snapshot
/// episodes.
pub fn write_pac_csv<W: Write>(out: W, traces: &[RegretTrace], stamp: Option<&str>) -> Result<()> {
    let mut w = writer(out, stamp)?;
    w.write_record(PAC_HEADER).map_err(csv_err)?;
    let first: &[PacPoint] = traces.first().map_or(&[], |t| &t.pac);
    for (i, pt) in first.iter().enumerate() {
        let vals: Vec<f64> = traces
            .iter()
            .filter_map(|t| t.pac.get(i))
            .map(|p| p.suboptimality)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        w.write_record([pt.episode.to_string(), mean.to_string(), vals.len().to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per trimming level. Levels where the global trimmed gap is zero
/// are written as `bound degenerate` with empty numeric fields.
pub fn write_bound_csv<W: Write>(
    out: W,
    grid: &[f64],
    episodes: u64,
    points: &[Result<GapBound>],
    argmin: Option<usize>,
    stamp: Option<&str>,
) -> Result<()> {
    let mut w = writer(out, stamp)?;
    w.write_record(BOUND_HEADER).map_err(csv_err)?;
    for (i, (p, point)) in grid.iter().zip(points).enumerate() {
        let mut rec = vec![p.to_string(), episodes.to_string()];
        match point {
            Ok(b) => {
                rec.push("ok".into());
                rec.extend([
                    b.delta_min.to_string(),
                    b.z_pos.to_string(),
                    b.z_trim.to_string(),
                    b.var_scale.to_string(),
                    b.inverse_gap_sum.to_string(),
                    b.trim_term.to_string(),
                    b.tail_term.to_string(),
                    b.constant_term.to_string(),
                    b.log_factor.to_string(),
                    b.total.to_string(),
                ]);
            }
            Err(Error::DegenerateBound(_)) => {
                rec.push("bound degenerate".into());
                rec.extend(std::iter::repeat_n(String::new(), 10));
            }
            Err(e) => return Err(Error::Format(format!("bound at p={p}: {e}"))),
        }
        rec.push((argmin == Some(i)).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn chart_contains_band_line_and_legend() {
        let rows = (1..=10)
            .map(|k| AggregateRow {
                episode: k,
                mean_cum_regret: k as f64,
                ci_low: k as f64 - 0.5,
                ci_high: k as f64 + 0.5,
            })
            .collect();
        let svg = regret_chart_svg(
            "t < u",
            &[ChartSeries {
                label: "mvp".into(),
                rows,
            }],
            Some("abc"),
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains(">mvp<"));
        assert!(svg.contains("t &lt; u"));
        assert!(svg.contains("metadata-sha256: abc"));
    }
}
