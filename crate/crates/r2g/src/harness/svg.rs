//! Self-contained SVG plot emission: trajectory scatters over the joint
//! action square, learning curves, and response-map lines. No plotting
//! dependency; the files are plain vector graphics.

use std::fs;
use std::path::{Path, PathBuf};

use crate::verify::TrajectoryLog;

use super::csvio;
use super::HarnessError;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" \
         viewBox=\"0 0 {s} {s}\">\n<rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n\
         <text x=\"{half}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">{title}</text>\n",
        s = SIZE,
        half = SIZE / 2.0,
    )
}

/// Map a value in [lo, hi] onto the drawable span (y flipped).
fn scale(v: f64, lo: f64, hi: f64, flip: bool) -> f64 {
    let t = (v - lo) / (hi - lo);
    let t = if flip { 1.0 - t } else { t };
    MARGIN + t * (SIZE - 2.0 * MARGIN)
}

fn axes(x_label: &str, y_label: &str, lo: f64, hi: f64) -> String {
    let (a, b) = (MARGIN, SIZE - MARGIN);
    let mut s = format!(
        "<rect x=\"{a}\" y=\"{a}\" width=\"{w}\" height=\"{w}\" fill=\"none\" \
         stroke=\"black\"/>\n",
        w = b - a,
    );
    s.push_str(&format!(
        "<text x=\"{mid}\" y=\"{ly}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\">{x_label}</text>\n",
        mid = SIZE / 2.0,
        ly = SIZE - 10.0,
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{mid}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\" transform=\"rotate(-90 14 {mid})\">{y_label}</text>\n",
        mid = SIZE / 2.0,
    ));
    for (v, anchor) in [(lo, "start"), (hi, "end")] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" \
             font-size=\"10\">{v:.2}</text>\n",
            x = scale(v, lo, hi, false),
            y = SIZE - MARGIN + 14.0,
        ));
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"10\">{v:.2}</text>\n",
            x = MARGIN - 4.0,
            y = scale(v, lo, hi, true) + 4.0,
        ));
    }
    s
}

fn epoch_color(fraction: f64) -> String {
    // Blue (early) to red (late).
    let r = (fraction * 220.0) as u8;
    let b = ((1.0 - fraction) * 220.0) as u8;
    format!("rgb({r},60,{b})")
}

/// Scatter of (agent 0 dim 0, agent 1 dim 0) most-likely actions, one point
/// per epoch, colored early-blue to late-red, axes fixed to [-1, 1]^2.
pub fn trajectory_plot(log: &TrajectoryLog) -> Result<String, HarnessError> {
    if log.is_empty() {
        return Err(HarnessError::Config("trajectory log is empty".into()));
    }
    if log.entries[0].len() < 2 {
        return Err(HarnessError::Config("trajectory plot needs two agents".into()));
    }
    let mut s = header("Most-likely joint action by epoch");
    s.push_str(&axes("agent 1 action", "agent 2 action", -1.0, 1.0));
    let n = log.len();
    for (i, joint) in log.entries.iter().enumerate() {
        let x = scale(joint[0][0], -1.0, 1.0, false);
        let y = scale(joint[1][0], -1.0, 1.0, true);
        let color = epoch_color(if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 });
        s.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"{color}\" \
             fill-opacity=\"0.8\"/>\n"
        ));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

const AGENT_COLORS: [&str; 6] =
    ["#1f6fb4", "#d94d2b", "#3a9a47", "#8a56c2", "#b58a00", "#3aa0a0"];

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> =
        points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
        coords.join(" ")
    )
}

/// Per-agent mean return against epoch.
pub fn returns_plot(returns: &[Vec<f64>]) -> Result<String, HarnessError> {
    if returns.is_empty() {
        return Err(HarnessError::Config("returns log is empty".into()));
    }
    let n_agents = returns[0].len();
    let finite: Vec<f64> =
        returns.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1e-9);
    let mut s = header("Mean exploration return by epoch");
    s.push_str(&axes("epoch", "mean return", lo, hi));
    let last = (returns.len().max(2) - 1) as f64;
    for agent in 0..n_agents {
        let pts: Vec<(f64, f64)> = returns
            .iter()
            .enumerate()
            .filter(|(_, row)| row[agent].is_finite())
            .map(|(e, row)| {
                (scale(e as f64 / last, 0.0, 1.0, false), scale(row[agent], lo, hi, true))
            })
            .collect();
        s.push_str(&polyline(&pts, AGENT_COLORS[agent % AGENT_COLORS.len()]));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Central-actor response against the opponent's action, per agent.
pub fn response_plot(rows: &[(f64, usize, f64)]) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("response map is empty".into()));
    }
    let n_agents = rows.iter().map(|(_, a, _)| *a).max().unwrap_or(0) + 1;
    let mut s = header("Central-actor most-likely response");
    s.push_str(&axes("opponent action", "response", -1.0, 1.0));
    for agent in 0..n_agents {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|(_, a, _)| *a == agent)
            .map(|(opp, _, resp)| {
                (scale(*opp, -1.0, 1.0, false), scale(*resp, -1.0, 1.0, true))
            })
            .collect();
        s.push_str(&polyline(&pts, AGENT_COLORS[agent % AGENT_COLORS.len()]));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Render every plot the run directory has inputs for: trajectory.svg and
/// returns.svg always, response_map.svg when its CSV is present. Missing
/// required inputs are an error naming the absent files.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let trajectory_path = run_dir.join("trajectory.csv");
    let returns_path = run_dir.join("returns.csv");
    let missing: Vec<String> = [&trajectory_path, &returns_path]
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::Config(format!("missing plot inputs: {}", missing.join(", "))));
    }

    let mut written = Vec::new();
    let log = csvio::read_trajectory_csv(&trajectory_path)?;
    let svg = trajectory_plot(&log)?;
    let out = run_dir.join("trajectory.svg");
    fs::write(&out, svg).map_err(|e| HarnessError::Io(e.to_string()))?;
    written.push(out);

    let returns = csvio::read_returns_csv(&returns_path)?;
    let svg = returns_plot(&returns)?;
    let out = run_dir.join("returns.svg");
    fs::write(&out, svg).map_err(|e| HarnessError::Io(e.to_string()))?;
    written.push(out);

    let rm_path = run_dir.join("response_map.csv");
    if rm_path.exists() {
        let text = fs::read_to_string(&rm_path).map_err(|e| HarnessError::Io(e.to_string()))?;
        let mut rows = Vec::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 3 {
                let parse_err = || HarnessError::Config("bad response_map.csv".into());
                rows.push((
                    f[0].parse().map_err(|_| parse_err())?,
                    f[1].parse().map_err(|_| parse_err())?,
                    f[2].parse().map_err(|_| parse_err())?,
                ));
            }
        }
        let svg = response_plot(&rows)?;
        let out = run_dir.join("response_map.svg");
        fs::write(&out, svg).map_err(|e| HarnessError::Io(e.to_string()))?;
        written.push(out);
    }
    Ok(written)
}
