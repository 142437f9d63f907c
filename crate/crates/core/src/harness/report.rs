use std::fmt::Write as _;
use std::path::Path;

use super::{running_average, ExperimentConfig, Mode, SuiteReport};
use crate::dynamics::State;
use crate::{Error, Result};

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn save_states(path: impl AsRef<Path>, states: &[State]) -> Result<()> {
    let mut s = String::from("c_A,T\n");
    for x in states {
        // `{:?}` on f64 prints the shortest round-trip representation
        writeln!(s, "{:?},{:?}", x.conc, x.temp).unwrap();
    }
    write_file(path.as_ref(), &s)
}

pub fn load_states(path: impl AsRef<Path>) -> Result<Vec<State>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("c_A,T") {
        return Err(Error::Malformed(format!("{}: expected header c_A,T", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let bad = || Error::Malformed(format!("{}: bad row {}: {l}", path.display(), k + 2));
            let (c, t) = l.split_once(',').ok_or_else(bad)?;
            let c: f64 = c.trim().parse().map_err(|_| bad())?;
            let t: f64 = t.trim().parse().map_err(|_| bad())?;
            if !(c.is_finite() && t.is_finite()) {
                return Err(bad());
            }
            Ok(State::new(c, t))
        })
        .collect()
}

/// Writes `episode,score,running_avg` with a 100-episode window.
pub fn write_curve_csv(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    let avg = running_average(scores, 100);
    let mut s = String::from("episode,score,running_avg\n");
    for (i, (sc, a)) in scores.iter().zip(&avg).enumerate() {
        writeln!(s, "{},{sc:?},{a:?}", i + 1).unwrap();
    }
    write_file(path.as_ref(), &s)
}

/// Reads the score column of a curve file.
pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("episode,score,running_avg") {
        return Err(Error::Malformed(format!(
            "{}: expected header episode,score,running_avg",
            path.display()
        )));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Malformed(format!("{}: bad row: {l}", path.display())))
        })
        .collect()
}

pub fn write_eval_csv(path: impl AsRef<Path>, failed: &[bool]) -> Result<()> {
    let mut s = String::from("episode,failed\n");
    for (i, f) in failed.iter().enumerate() {
        writeln!(s, "{},{}", i + 1, u8::from(*f)).unwrap();
    }
    write_file(path.as_ref(), &s)
}

pub(super) fn write_suite_tables(dir: &Path, cfg: &ExperimentConfig, r: &SuiteReport) -> Result<()> {
    let mut s = String::from("mode,budget,seed,failure_rate\n");
    for row in &r.rows {
        writeln!(s, "{},{},{},{:?}", row.mode.label(), row.budget, row.seed, row.failure_rate)
            .unwrap();
    }
    write_file(&dir.join("failures.csv"), &s)?;

    let mut t = String::from("budget,with_cis,no_cis\n");
    for b in cfg.budgets() {
        let w = r.mean_failure_rate(Mode::WithCis, b).unwrap_or(f64::NAN);
        let n = r.mean_failure_rate(Mode::NoCis, b).unwrap_or(f64::NAN);
        writeln!(t, "{b},{w:.4},{n:.4}").unwrap();
    }
    write_file(&dir.join("table.csv"), &t)?;

    let curves: Vec<(String, Vec<f64>)> = r
        .runs
        .iter()
        .map(|run| {
            (
                format!("{} seed {} ({} ep)", run.mode.label(), run.seed, run.scores.len()),
                run.running_avg.clone(),
            )
        })
        .collect();
    write_curves_svg(dir.join("curves.svg"), &curves)
}

/// Minimal line plot of several curves sharing one axis frame.
pub fn write_curves_svg(path: impl AsRef<Path>, curves: &[(String, Vec<f64>)]) -> Result<()> {
    const W: f64 = 800.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let n_max = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0).max(2);
    let vals = curves.iter().flat_map(|(_, c)| c.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let sx = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n_max - 1) as f64;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{PAD}" y="{}">{hi:.0}</text>"#, PAD - 6.0).unwrap();
    writeln!(s, r#"<text x="{PAD}" y="{}">{lo:.0}</text>"#, H - PAD + 14.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}">episode</text>"#, W / 2.0, H - 20.0).unwrap();
    for (k, (label, c)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = c
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.1},{:.1}", sx(i), sy(v)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.join(" ")
        )
        .unwrap();
        let label = label.replace('&', "&amp;").replace('<', "&lt;");
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{label}</text>"#,
            W - PAD - 180.0,
            PAD + 14.0 * (k as f64 + 1.0)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    write_file(path.as_ref(), &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn states_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let xs = vec![State::new(0.1 + 0.2, 350.000_000_1), State::new(1.0, 345.0)];
        save_states(&p, &xs).unwrap();
        assert_eq!(load_states(&p).unwrap(), xs);
        std::fs::write(&p, "c_A,T\n0.5,abc\n").unwrap();
        assert!(matches!(load_states(&p), Err(Error::Malformed(_))));
    }

    #[test]
    fn curve_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let scores = vec![2e6, -1e3, 123.25];
        write_curve_csv(&p, &scores).unwrap();
        assert_eq!(read_curve_csv(&p).unwrap(), scores);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("episode,score,running_avg\n1,"));
    }

    #[test]
    fn svg_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.svg");
        write_curves_svg(&p, &[("a<b".into(), vec![1.0, 2.0, 3.0]), ("flat".into(), vec![5.0])])
            .unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert!(s.starts_with("<svg") && s.contains("a&lt;b") && s.trim_end().ends_with("</svg>"));
    }
}
