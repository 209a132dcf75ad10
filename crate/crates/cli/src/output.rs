use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cia_core::experiments::{CsiMode, TrialReport};

use crate::error::CliError;
use crate::run::Series;

pub const CSV_HEADER: &str = "scheme,K,theta,snr_db,alpha,tau_over_T,trials,primary_se_mean,primary_se_stderr,secondary_se_mean,secondary_se_stderr,percent_increase";

/// `%g`-style formatting with six significant digits.
pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // exponent after rounding, so 999999.5 prints as 1e+06
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let s = format!("{x:.*}", (5 - exp) as usize);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (mant, _) = sci.split_once('e').expect("exponent");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn csv_row(r: &TrialReport) -> String {
    let c = &r.config;
    let tau = match c.csi {
        CsiMode::Imperfect(q) => q.tau_over_t(),
        CsiMode::Perfect => 0.0,
    };
    [
        r.scheme.label().to_string(),
        c.n_sbs.to_string(),
        r.theta.map_or(String::new(), |t| t.to_string()),
        sig6(c.snr_db),
        sig6(c.alpha.value()),
        sig6(tau),
        c.trials.to_string(),
        sig6(r.primary_summary.mean),
        sig6(r.primary_summary.stderr),
        sig6(r.secondary_summary.mean),
        sig6(r.secondary_summary.stderr),
        sig6(r.percent_increase),
    ]
    .join(",")
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `<dir>/<name>.csv`, one row per report.
pub fn emit_report(name: &str, reports: &[TrialReport], dir: &Path) -> Result<PathBuf, CliError> {
    if reports.is_empty() {
        return Err(CliError::Runtime("no completed grid points to report".into()));
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    let path = dir.join(format!("{name}.csv"));
    write(&path, &out)?;
    Ok(path)
}

fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    s = s.replace('=', "");
    s
}

/// Writes one `<dir>/<name>/<series>.dat` file per series, plus an SVG
/// chart of all series when `plots` is set.
pub fn emit_plot_data(name: &str, series: &[Series], dir: &Path, plots: bool) -> Result<Vec<PathBuf>, CliError> {
    if series.is_empty() {
        return Err(CliError::Runtime("no series to write".into()));
    }
    let sub = dir.join(name);
    fs::create_dir_all(&sub).map_err(|e| CliError::io(&sub, e))?;
    let mut written = Vec::new();
    for s in series {
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut text = format!("# {}\n# {} {} err\n", s.label, s.x_label, s.y_label);
        for (x, y, e) in pts {
            let _ = writeln!(text, "{} {} {}", sig6(x), sig6(y), sig6(e));
        }
        let path = sub.join(format!("{}.dat", slug(&s.label)));
        write(&path, &text)?;
        written.push(path);
    }
    if plots {
        let path = sub.join(format!("{name}.svg"));
        write(&path, &render_svg(name, series))?;
        written.push(path);
    }
    Ok(written)
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Minimal line chart with error bars and a legend.
pub fn render_svg(title: &str, series: &[Series]) -> String {
    let (w, h, ml, mr, mt, mb) = (720.0, 480.0, 70.0, 200.0, 40.0, 50.0);
    let finite = |v: f64| v.is_finite();
    let pts = series.iter().flat_map(|s| s.points.iter());
    let xs: Vec<f64> = pts.clone().map(|p| p.0).filter(|v| finite(*v)).collect();
    let ys: Vec<f64> = pts
        .flat_map(|p| [p.1 - p.2.max(0.0), p.1 + p.2.max(0.0), p.1])
        .filter(|v| finite(*v))
        .collect();
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (true, true) => (lo, hi),
            (true, false) => (lo - 0.5, lo + 0.5),
            _ => (0.0, 1.0),
        }
    };
    let (x0, x1) = range(&xs);
    let (y0, y1) = range(&ys);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, (w - mr + ml) / 2.0);
    let _ = writeln!(
        svg,
        r#"<path d="M{ml} {mt} V{} H{}" fill="none" stroke="black"/>"#,
        h - mb,
        w - mr
    );
    for i in 0..=4 {
        let (fx, fy) = (x0 + (x1 - x0) * i as f64 / 4.0, y0 + (y1 - y0) * i as f64 / 4.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(fx), h - mb + 16.0, sig6(fx));
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, py(fy) + 4.0, sig6(fy));
    }
    if let Some(s) = series.first() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (w - mr + ml) / 2.0, h - 10.0, s.x_label);
        let _ = writeln!(svg, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, s.y_label);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<_> = s.points.iter().filter(|p| finite(p.0) && finite(p.1)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.0), py(p.1))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for p in &pts {
            if finite(p.2) && p.2 > 0.0 {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    py(p.1 - p.2),
                    py(p.1 + p.2),
                    x = px(p.0)
                );
            }
        }
        let ly = mt + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - mr + 10.0, w - mr + 30.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, w - mr + 36.0, ly + 4.0, s.label);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Creates a fresh `<out>/<name>` directory, suffixing `-2`, `-3`, ...
/// when earlier runs already used the name.
pub fn fresh_run_dir(out: &Path, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for i in 1.. {
        let dir = if i == 1 { out.join(name) } else { out.join(format!("{name}-{i}")) };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::io(dir, e)),
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.12), "0.12");
        assert_eq!(sig6(3.14159265), "3.14159");
        assert_eq!(sig6(-2.5), "-2.5");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(999999.5), "1e+06");
        assert_eq!(sig6(1.23456789e-7), "1.23457e-07");
        assert_eq!(sig6(0.0001234567), "0.000123457");
        assert_eq!(sig6(f64::NAN), "nan");
    }

    #[test]
    fn run_dirs_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = fresh_run_dir(tmp.path(), "x").unwrap();
        let b = fresh_run_dir(tmp.path(), "x").unwrap();
        assert_ne!(a, b);
        assert!(b.ends_with("x-2"));
    }

    #[test]
    fn plot_data_is_sorted_with_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let s = Series {
            label: "cia_a K=4".into(),
            x_label: "snr_db",
            y_label: "secondary_se",
            points: vec![(10.0, 2.0, 0.1), (0.0, 1.0, 0.05)],
        };
        let files = emit_plot_data("se_vs_snr", &[s], tmp.path(), true).unwrap();
        assert_eq!(files.len(), 2);
        let text = fs::read_to_string(&files[0]).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows, vec!["0 1 0.05", "10 2 0.1"]);
        assert!(fs::read_to_string(&files[1]).unwrap().starts_with("<svg"));
    }

    #[test]
    fn empty_report_list_writes_nothing() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(emit_report("x", &[], tmp.path()).is_err());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
    }
}
