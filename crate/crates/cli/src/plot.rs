//! Static SVG figures from an `explain` CSV: one credit scatter per feature
//! and one file of per-feature credit histograms.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::Args;
use log::info;

use crate::error::{CliError, CliResult};
use crate::table;

#[derive(Args)]
pub struct PlotArgs {
    /// CSV written by `gig explain`.
    #[arg(long)]
    credits: PathBuf,
    /// The dataset that was explained; supplies feature values and labels.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 56.0;
const PANEL_H: f64 = 170.0;
const COLORS: [&str; 2] = ["#1f77b4", "#d62728"];
const NO_LABEL: &str = "#555555";

struct Credits {
    names: Vec<String>,
    rows: Vec<usize>,
    values: Vec<Vec<f64>>,
}

fn read_credits(path: &Path) -> CliResult<Credits> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let schema = |msg: String| CliError::Input(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers().map_err(|e| schema(e.to_string()))?.iter().map(String::from).collect();
    let credit_cols: Vec<usize> = (0..header.len()).filter(|&j| header[j].starts_with("credit_")).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(row_col), Some(err_col)) = (col("row"), col("error")) else {
        return Err(schema("not an explain CSV: missing `row` or `error` column".into()));
    };
    if credit_cols.is_empty() {
        return Err(schema("not an explain CSV: no `credit_*` columns".into()));
    }
    let mut out = Credits {
        names: credit_cols.iter().map(|&j| header[j]["credit_".len()..].to_string()).collect(),
        rows: Vec::new(),
        values: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| schema(e.to_string()))?;
        if !rec[err_col].is_empty() {
            continue;
        }
        let num = |j: usize| {
            rec[j]
                .parse::<f64>()
                .map_err(|_| schema(format!("line {}: column {} is not a number", i + 2, header[j])))
        };
        out.rows.push(
            rec[row_col]
                .parse()
                .map_err(|_| schema(format!("line {}: bad row index", i + 2)))?,
        );
        out.values.push(credit_cols.iter().map(|&j| num(j)).collect::<CliResult<_>>()?);
    }
    if out.rows.is_empty() {
        return Err(schema("no explained rows to plot".into()));
    }
    Ok(out)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// `[lo, hi]` padded by 5%, widened if degenerate.
fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return (lo - 1.0, lo + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn axis(svg: &mut String, x0: f64, y0: f64, w: f64, h: f64, xr: (f64, f64), yr: (f64, f64)) {
    let _ = writeln!(
        svg,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#333333"/>"##
    );
    for (v, anchor, x) in [(xr.0, "start", x0), (xr.1, "end", x0 + w)] {
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" font-size="10" text-anchor="{anchor}">{v:.3}</text>"#, y0 + h + 14.0);
    }
    for (v, y) in [(yr.0, y0 + h), (yr.1, y0 + 8.0)] {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}" font-size="10" text-anchor="end">{v:.3}</text>"#, x0 - 4.0);
    }
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn scatter(name: &str, xs: &[f64], ys: &[f64], labels: Option<&[u8]>) -> String {
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    let xr = span(xs.iter().copied());
    let yr = span(ys.iter().copied());
    let px = |x: f64| MARGIN + (x - xr.0) / (xr.1 - xr.0) * pw;
    let py = |y: f64| MARGIN + ph - (y - yr.0) / (yr.1 - yr.0) * ph;
    let mut svg = header(W, H);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">credit vs {}</text>"#,
        W / 2.0,
        esc(name)
    );
    axis(&mut svg, MARGIN, MARGIN, pw, ph, xr, yr);
    if yr.0 < 0.0 && yr.1 > 0.0 {
        let y = py(0.0);
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
            MARGIN + pw
        );
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(name));
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">credit</text>"#,
        H / 2.0,
        H / 2.0
    );
    svg.push_str("<g fill-opacity=\"0.7\">\n");
    for (k, (x, y)) in xs.iter().zip(ys).enumerate() {
        let color = labels.map_or(NO_LABEL, |l| COLORS[usize::from(l[k] != 0)]);
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(*x), py(*y));
    }
    svg.push_str("</g>\n");
    if labels.is_some() {
        for (k, color) in COLORS.iter().enumerate() {
            let y = MARGIN + 12.0 + 14.0 * k as f64;
            let x = W - MARGIN - 60.0;
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{:.2}" r="4" fill="{color}"/>"#, y - 4.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}" font-size="11">label {k}</text>"#, x + 8.0);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn histograms(names: &[String], values: &[Vec<f64>], bins: usize) -> String {
    let h = PANEL_H * names.len() as f64 + MARGIN;
    let pw = W - 2.0 * MARGIN;
    let ph = PANEL_H - 60.0;
    let mut svg = header(W, h);
    for (j, name) in names.iter().enumerate() {
        let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
        let xr = span(col.iter().copied());
        let width = (xr.1 - xr.0) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in &col {
            let b = (((v - xr.0) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let top = *counts.iter().max().expect("bins >= 1") as f64;
        let y0 = MARGIN / 2.0 + PANEL_H * j as f64 + 24.0;
        let _ = writeln!(svg, r#"<text x="{MARGIN:.2}" y="{:.2}" font-size="13">credit for {}</text>"#, y0 - 8.0, esc(name));
        axis(&mut svg, MARGIN, y0, pw, ph, xr, (0.0, top));
        let bw = pw / bins as f64;
        for (b, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bh = c as f64 / top * ph;
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="#4c72b0" stroke="white" stroke-width="0.5"/>"##,
                MARGIN + bw * b as f64,
                y0 + ph - bh,
                bw
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// File-name-safe version of a feature name.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn run(a: &PlotArgs) -> CliResult<()> {
    if a.bins == 0 {
        return Err(CliError::Input("--bins must be at least 1".into()));
    }
    let credits = read_credits(&a.credits)?;
    let data = table::read(&a.data)?;
    if data.names != credits.names {
        return Err(CliError::Input(format!(
            "{}: feature columns {:?} do not match the credit columns {:?}",
            a.data.display(),
            data.names,
            credits.names
        )));
    }
    if let Some(&r) = credits.rows.iter().find(|&&r| r >= data.rows.len()) {
        return Err(CliError::Input(format!("credit row {r} is not in {}", a.data.display())));
    }
    let labels: Option<Vec<u8>> = data
        .labels
        .as_ref()
        .map(|l| credits.rows.iter().map(|&r| u8::from(l[r] != 0.0)).collect());

    // render everything before touching the file system
    let mut files: Vec<(String, String)> = Vec::new();
    for (j, name) in credits.names.iter().enumerate() {
        let xs: Vec<f64> = credits.rows.iter().map(|&r| data.rows[r][j]).collect();
        let ys: Vec<f64> = credits.values.iter().map(|v| v[j]).collect();
        files.push((format!("scatter_{j:02}_{}.svg", slug(name)), scatter(name, &xs, &ys, labels.as_deref())));
    }
    files.push(("histograms.svg".into(), histograms(&credits.names, &credits.values, a.bins)));

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    for (name, svg) in &files {
        let path = a.out_dir.join(name);
        fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
    }
    info!("wrote {} SVG files to {}", files.len(), a.out_dir.display());
    Ok(())
}
