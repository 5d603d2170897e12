//! On-disk artifacts: CSV tables with `# key=value` metadata, SVG spectra
//! and JSON reports. Every writer is atomic (temp file + rename) and every
//! format is a pure function of its inputs, so identical runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::analysis::{Extraction, PeakSet};
use crate::physics::{LineFamily, SpectralLine};
use crate::scan::{DelayTrace, Spectrum};
use crate::{Error, Result};

/// Ordered `key=value` pairs written as CSV header comments.
pub type Metadata = Vec<(String, String)>;

pub fn meta(pairs: &[(&str, String)]) -> Metadata {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Writes `contents` to a temp file beside `path`, then renames it over.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn header(out: &mut String, metadata: &Metadata) {
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
}

fn two_columns(metadata: &Metadata, names: (&str, &str), xs: &[f64], ys: &[f64]) -> String {
    let mut out = String::with_capacity(32 * xs.len());
    header(&mut out, metadata);
    let _ = writeln!(out, "{},{}", names.0, names.1);
    for (x, y) in xs.iter().zip(ys) {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn trace_csv(trace: &DelayTrace, metadata: &Metadata) -> String {
    two_columns(metadata, ("tau_fs", "signal"), trace.grid.samples(), &trace.values)
}

pub fn spectrum_csv(spectrum: &Spectrum, metadata: &Metadata) -> String {
    two_columns(
        metadata,
        ("omega_ev", "magnitude"),
        &spectrum.frequencies,
        &spectrum.magnitudes,
    )
}

pub fn peaks_csv(peaks: &PeakSet, metadata: &Metadata) -> String {
    let mut out = String::new();
    header(&mut out, metadata);
    out.push_str("omega_ev,magnitude,prominence\n");
    for p in &peaks.peaks {
        let _ = writeln!(out, "{},{},{}", p.frequency, p.magnitude, p.prominence);
    }
    out
}

/// A parsed two-column CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metadata: Metadata,
    pub columns: (String, String),
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Table {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Reads a table written by [`trace_csv`] or [`spectrum_csv`].
pub fn read_two_columns(text: &str) -> Result<Table> {
    let mut metadata = Vec::new();
    let mut columns = None;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", n + 1)))?;
        if columns.is_none() {
            columns = Some((a.to_string(), b.to_string()));
            continue;
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))
        };
        x.push(num(a)?);
        y.push(num(b)?);
    }
    let columns = columns.ok_or_else(|| Error::Parse("missing column header".into()))?;
    Ok(Table {
        metadata,
        columns,
        x,
        y,
    })
}

/// Short label of a predicted line, e.g. `Δ1`, `Δ1-Δ2`, `2Δ3`.
pub fn line_label(line: &SpectralLine) -> String {
    let (j, k) = (line.j + 1, line.k + 1);
    let sign = if line.frequency < 0.0 { "-" } else { "" };
    match line.family {
        LineFamily::Dc => "0".into(),
        LineFamily::Single => format!("{sign}Δ{j}"),
        LineFamily::Difference => format!("{sign}(Δ{j}-Δ{k})"),
        LineFamily::Sum if j == k => format!("{sign}2Δ{j}"),
        LineFamily::Sum => format!("{sign}(Δ{j}+Δ{k})"),
    }
}

/// One curve of an SVG plot.
pub struct Series<'a> {
    pub label: String,
    pub spectrum: &'a Spectrum,
    /// Predicted lines drawn as labelled markers.
    pub predicted: &'a [SpectralLine],
    pub peaks: Option<&'a PeakSet>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 960.0;
const PANEL: f64 = 260.0;
const MARGIN: f64 = 50.0;

/// Stacked spectrum panels (one per series) over a shared frequency axis.
/// The axis covers every predicted line with a 20 % margin, or the full
/// Nyquist range when nothing is predicted.
pub fn spectrum_svg(title: &str, series: &[Series], config_hash: &str) -> String {
    let extent = series
        .iter()
        .flat_map(|s| s.predicted.iter().map(|l| l.frequency.abs()))
        .fold(0.0_f64, f64::max);
    let f_max = if extent > 0.0 {
        1.2 * extent
    } else {
        series.iter().map(|s| s.spectrum.omega_max).fold(1.0, f64::max)
    };
    let height = 2.0 * MARGIN + PANEL * series.len().max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let sx = |f: f64| MARGIN + (f + f_max) / (2.0 * f_max) * plot_w;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, "<!-- config_hash={config_hash} -->");
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let top = MARGIN + PANEL * i as f64;
        let bottom = top + PANEL - 30.0;
        let in_range = |f: &f64| f.abs() <= f_max;
        let peak = s
            .spectrum
            .frequencies
            .iter()
            .zip(&s.spectrum.magnitudes)
            .filter(|(f, _)| in_range(f) && f.abs() > 3.0 * s.spectrum.omega_res)
            .map(|(_, m)| *m)
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let sy = |m: f64| bottom - (m / peak).min(1.05) * (PANEL - 60.0);

        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN}" y1="{bottom:.2}" x2="{:.2}" y2="{bottom:.2}" stroke="black"/>"#,
            WIDTH - MARGIN
        );
        for tick in ticks(f_max) {
            let x = sx(tick);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick:.2}</text>"#,
                bottom + 4.0,
                bottom + 15.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{MARGIN}" y="{:.2}" fill="{colour}">{}</text>"#,
            top + 12.0,
            escape(&s.label)
        );

        for line in s
            .predicted
            .iter()
            .filter(|l| l.family != LineFamily::Dc && in_range(&l.frequency))
        {
            let x = sx(line.frequency);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{bottom:.2}" stroke="#999" stroke-dasharray="3,3"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" fill="#555" font-size="8">{}</text>"##,
                top + 30.0,
                top + 26.0,
                escape(&line_label(line))
            );
        }

        let mut points = String::new();
        for (f, m) in s.spectrum.frequencies.iter().zip(&s.spectrum.magnitudes) {
            if in_range(f) {
                let _ = write!(points, "{:.2},{:.2} ", sx(*f), sy(*m));
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#,
            points.trim_end()
        );

        if let Some(peaks) = s.peaks {
            for p in peaks.peaks.iter().filter(|p| in_range(&p.frequency)) {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="none" stroke="black"/>"#,
                    sx(p.frequency),
                    sy(p.magnitude)
                );
            }
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{:.2}" text-anchor="middle">angular frequency (eV)</text>"#,
        WIDTH / 2.0,
        height - 12.0
    );
    out.push_str("</svg>\n");
    out
}

fn ticks(f_max: f64) -> Vec<f64> {
    let raw = f_max / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(raw);
    let n = (f_max / step).floor() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fixed-width table of recovered energies and diagnostics.
pub fn summary_table(extraction: &Extraction, truth: Option<&[f64]>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pump omega0 (eV): {:?}", extraction.report.omega0);
    let _ = writeln!(
        out,
        "{:>4}  {:>12}  {:>12}  {:>7}  {:>12}",
        "#", "epsilon_eV", "uncert_eV", "support", "truth_eV"
    );
    for (k, e) in extraction.energies.iter().enumerate() {
        let nearest = truth.and_then(|t| {
            t.iter()
                .copied()
                .min_by(|a, b| (a - e.epsilon).abs().total_cmp(&(b - e.epsilon).abs()))
        });
        let truth_col = nearest.map_or("-".to_string(), |t| format!("{t:.6}"));
        let _ = writeln!(
            out,
            "{:>4}  {:>12.6}  {:>12.6}  {:>7}  {:>12}",
            k + 1,
            e.epsilon,
            e.uncertainty,
            e.support,
            truth_col
        );
    }
    let _ = writeln!(out, "matched pairs: {}", extraction.report.matched_pairs.len());
    let _ = writeln!(out, "unmatched peaks: {}", extraction.report.unmatched.len());
    for d in &extraction.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    out
}
