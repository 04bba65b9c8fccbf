//! Single-path runs from the fixed `k = 25` start, with CSV and SVG output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{StudentState, TeacherSpec};
use crate::optimizer::{run, Record, RunConfig, StepSchedule, Trajectory};

use super::teachers::{fixed_a0_k25, teacher_for_k};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryVariant {
    Ssw,
    Constant,
}

impl TrajectoryVariant {
    pub fn id(&self) -> &'static str {
        match self {
            TrajectoryVariant::Ssw => "ssw",
            TrajectoryVariant::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ssw" => Ok(TrajectoryVariant::Ssw),
            "constant" => Ok(TrajectoryVariant::Constant),
            _ => Err(Error::Config(format!("unknown trajectory variant '{s}'"))),
        }
    }

    pub fn schedule(&self, k: usize) -> StepSchedule {
        match self {
            TrajectoryVariant::Ssw => StepSchedule::ssw_for_k(k),
            TrajectoryVariant::Constant => StepSchedule::constant_for_k(k),
        }
    }
}

pub const CSV_HEADER: &str = "t,phi,a_dot_astar,w_err_sq,a_err_sq,loss";

/// CSV with [`CSV_HEADER`]; reals carry 17 significant digits.
pub fn trajectory_csv(records: &[Record]) -> String {
    let mut out = String::with_capacity(records.len() * 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.phi, r.a_dot_astar, r.w_err_sq, r.a_err_sq, r.loss
        );
    }
    out
}

struct Panel {
    label: &'static str,
    log: bool,
    get: fn(&Record) -> f64,
}

const PANELS: [Panel; 5] = [
    Panel {
        label: "phi",
        log: false,
        get: |r| r.phi,
    },
    Panel {
        label: "a^T a*",
        log: false,
        get: |r| r.a_dot_astar,
    },
    Panel {
        label: "log10 |w - w*|^2",
        log: true,
        get: |r| r.w_err_sq,
    },
    Panel {
        label: "log10 |a - a*|^2",
        log: true,
        get: |r| r.a_err_sq,
    },
    Panel {
        label: "log10 loss",
        log: true,
        get: |r| r.loss,
    },
];

const MAX_POINTS: usize = 2000;

/// Static SVG with one polyline panel per diagnostic against `t`.
pub fn trajectory_svg(records: &[Record], title: &str) -> String {
    let (w, ph, margin) = (720.0, 150.0, 50.0);
    let height = margin + PANELS.len() as f64 * (ph + margin);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{margin}" y="25" font-size="14">{}</text>"#,
        escape(title)
    );
    let step = records.len().div_ceil(MAX_POINTS).max(1);
    let pts: Vec<&Record> = records
        .iter()
        .step_by(step)
        .chain(records.last().filter(|_| (records.len() - 1) % step != 0))
        .collect();
    let t_max = pts.last().map_or(1.0, |r| r.t.max(1) as f64);
    for (i, panel) in PANELS.iter().enumerate() {
        let top = margin + i as f64 * (ph + margin);
        let ys: Vec<f64> = pts
            .iter()
            .map(|r| {
                let y = (panel.get)(r);
                if panel.log {
                    y.max(1e-300).log10()
                } else {
                    y
                }
            })
            .collect();
        let lo = ys
            .iter()
            .copied()
            .filter(|y| y.is_finite())
            .fold(f64::INFINITY, f64::min);
        let hi = ys
            .iter()
            .copied()
            .filter(|y| y.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0)
        };
        let plot_w = w - 2.0 * margin;
        let _ = writeln!(
            s,
            r##"<rect x="{margin}" y="{top}" width="{plot_w}" height="{ph}" fill="none" stroke="#888"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{margin}" y="{}">{}</text>"#,
            top - 6.0,
            escape(panel.label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{hi:.3}</text>"#,
            margin - 4.0,
            top + 10.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{lo:.3}</text>"#,
            margin - 4.0,
            top + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">t = {t_max}</text>"#,
            w - margin,
            top + ph + 14.0
        );
        let mut line = String::new();
        for (r, y) in pts.iter().zip(&ys) {
            if !y.is_finite() {
                continue;
            }
            let x = margin + plot_w * r.t as f64 / t_max;
            let yy = top + ph * (1.0 - (y - lo) / (hi - lo));
            let _ = write!(line, "{x:.2},{yy:.2} ");
        }
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{}"/>"##,
            line.trim_end()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>.svg` for a trajectory; returns both paths.
pub fn write_trajectory_files(
    traj: &Trajectory,
    stem: &Path,
    title: &str,
) -> Result<(PathBuf, PathBuf)> {
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    write_file(&csv, &trajectory_csv(&traj.records))?;
    write_file(&svg, &trajectory_svg(&traj.records, title))?;
    Ok((csv, svg))
}

/// The `k = 25` teacher started at `w = 0` and the fixed output weights.
pub fn fixed_start() -> Result<(TeacherSpec, StudentState)> {
    let teacher = teacher_for_k(25, 8)?;
    let init = StudentState::new(vec![0.0; 8], fixed_a0_k25());
    Ok((teacher, init))
}

/// Runs the fixed-start path under `variant`; writes files when `out_stem`
/// is given.
pub fn trajectory_experiment(
    variant: TrajectoryVariant,
    config: &RunConfig,
    out_stem: Option<&Path>,
) -> Result<Trajectory> {
    let (teacher, init) = fixed_start()?;
    let traj = run(&init, &teacher, &variant.schedule(teacher.k()), config)?;
    if let Some(stem) = out_stem {
        let title = format!(
            "k = 25, {} schedule: {}",
            variant.id(),
            traj.outcome.label()
        );
        write_trajectory_files(&traj, stem, &title)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: u64, x: f64) -> Record {
        Record {
            t,
            phi: x,
            a_dot_astar: x,
            sum_a: x,
            w_err_sq: x,
            a_err_sq: x,
            loss: x,
        }
    }

    #[test]
    fn csv_round_trips_doubles() {
        let vals = [0.1 + 0.2, std::f64::consts::PI, 1e-300, 12345.678901234567];
        let recs: Vec<Record> = vals
            .iter()
            .enumerate()
            .map(|(i, &x)| rec(i as u64, x))
            .collect();
        let csv = trajectory_csv(&recs);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        for (line, &x) in lines.zip(&vals) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols.len(), 6);
            for c in &cols[1..] {
                assert_eq!(c.parse::<f64>().unwrap(), x);
            }
        }
    }

    #[test]
    fn svg_has_one_polyline_per_panel() {
        let recs: Vec<Record> = (0..5000).map(|t| rec(t, 1.0 / (t + 1) as f64)).collect();
        let svg = trajectory_svg(&recs, "a < b");
        assert_eq!(svg.matches("<polyline").count(), PANELS.len());
        assert!(svg.contains("a &lt; b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn variant_parse() {
        assert_eq!(
            TrajectoryVariant::parse("ssw").unwrap(),
            TrajectoryVariant::Ssw
        );
        assert!(TrajectoryVariant::parse("warm").is_err());
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::new(200, 10);
        let traj = trajectory_experiment(
            TrajectoryVariant::Ssw,
            &cfg,
            Some(&dir.path().join("sub/ssw")),
        )
        .unwrap();
        let csv = fs::read_to_string(dir.path().join("sub/ssw.csv")).unwrap();
        assert_eq!(csv.lines().count(), traj.records.len() + 1);
        assert!(dir.path().join("sub/ssw.svg").exists());
    }
}
