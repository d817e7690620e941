//! Pen-trajectory ingestion and letter filters.
//!
//! Interchange format (UTF-8, LF line endings): each record is a label line
//! followed by one `x,y` line per point; records are separated by blank
//! lines. In `velocities` mode the coordinate lines are pen-tip velocities
//! and are integrated by cumulative sum.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::canvas::{rasterize_segment, Canvas, Observation, Point, PIXELS};
use crate::chaining::ClassFilterSet;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Normalised coordinates span `[MARGIN, 1 - MARGIN]` on each axis.
pub const MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoordFormat {
    #[default]
    Positions,
    Velocities,
}

impl FromStr for CoordFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positions" => Ok(Self::Positions),
            "velocities" => Ok(Self::Velocities),
            other => Err(Error::Config(format!(
                "unknown trajectory format '{other}' (expected positions|velocities)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenTrajectory {
    pub label: String,
    pub points: Vec<Point>,
}

/// Min-max rescale each axis into `[MARGIN, 1 - MARGIN]`; a constant axis
/// maps to 0.5.
pub fn normalize(points: &mut [Point]) {
    for axis in 0..2 {
        let lo = points.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
        let hi = points
            .iter()
            .map(|p| p[axis])
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for p in points.iter_mut() {
            p[axis] = if span > 0.0 {
                // lerp form hits both margins exactly
                let t = (p[axis] - lo) / span;
                (1.0 - t) * MARGIN + t * (1.0 - MARGIN)
            } else {
                0.5
            };
        }
    }
}

fn integrate(points: &mut [Point]) {
    let mut acc = [0.0, 0.0];
    for p in points.iter_mut() {
        acc[0] += p[0];
        acc[1] += p[1];
        *p = acc;
    }
}

pub fn parse_trajectories(
    text: &str,
    format: CoordFormat,
    path: &Path,
) -> Result<Vec<PenTrajectory>> {
    let mut out = Vec::new();
    let mut current: Option<(String, Vec<Point>, usize)> = None;

    let finish = |rec: Option<(String, Vec<Point>, usize)>, out: &mut Vec<PenTrajectory>| {
        if let Some((label, mut points, line)) = rec {
            if points.len() < 2 {
                log::warn!(
                    "{}:{line}: record '{label}' has {} point(s); skipped",
                    path.display(),
                    points.len()
                );
                return;
            }
            if format == CoordFormat::Velocities {
                integrate(&mut points);
            }
            normalize(&mut points);
            out.push(PenTrajectory { label, points });
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            finish(current.take(), &mut out);
            continue;
        }
        match current.as_mut() {
            None => current = Some((line.to_string(), Vec::new(), line_no)),
            Some((_, points, _)) => {
                let parse_err = |msg: String| Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg,
                };
                let (xs, ys) = line
                    .split_once(',')
                    .ok_or_else(|| parse_err(format!("expected 'x,y', got '{line}'")))?;
                let x: f64 = xs
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("bad x coordinate '{xs}'")))?;
                let y: f64 = ys
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("bad y coordinate '{ys}'")))?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(parse_err("non-finite coordinate".into()));
                }
                points.push([x, y]);
            }
        }
    }
    finish(current.take(), &mut out);
    Ok(out)
}

pub fn load_trajectories(path: &Path, format: CoordFormat) -> Result<Vec<PenTrajectory>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectories(&text, format, path)
}

/// Serialise positions in the interchange format.
pub fn format_trajectories(trajs: &[PenTrajectory]) -> String {
    let mut s = String::new();
    for (i, t) in trajs.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "{}", t.label);
        for p in &t.points {
            let _ = writeln!(s, "{},{}", p[0], p[1]);
        }
    }
    s
}

pub fn render_trajectory(traj: &PenTrajectory) -> Observation {
    let mut canvas = Canvas::blank();
    for pair in traj.points.windows(2) {
        rasterize_segment(&mut canvas, pair[0], pair[1]);
    }
    canvas.observe()
}

/// Pixel-wise mean of the rendered trajectories of each requested label.
pub fn build_class_filters(
    trajs: &[PenTrajectory],
    labels: &[String],
    eps: f64,
) -> Result<ClassFilterSet> {
    let mut filters = Vec::with_capacity(labels.len());
    for label in labels {
        let mut sum = vec![0.0; PIXELS];
        let mut count = 0usize;
        for t in trajs.iter().filter(|t| &t.label == label) {
            let o = render_trajectory(t);
            for (s, v) in sum.iter_mut().zip(o.values()) {
                *s += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::Config(format!(
                "no trajectories for label '{label}'"
            )));
        }
        filters.push(sum.into_iter().map(|s| s / count as f64).collect());
    }
    ClassFilterSet::new(labels.to_vec(), filters, eps)
}

/// Letters the built-in generator can draw.
pub const SYNTHETIC_LETTERS: [&str; 5] = ["c", "h", "i", "s", "r"];

fn arc(center: Point, radius: [f64; 2], from_deg: f64, to_deg: f64, steps: usize) -> Vec<Point> {
    (0..=steps)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64) * PI / 180.0;
            [
                center[0] + radius[0] * a.cos(),
                center[1] + radius[1] * a.sin(),
            ]
        })
        .collect()
}

fn line(from: Point, to: Point, steps: usize) -> Vec<Point> {
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            [
                from[0] + (to[0] - from[0]) * t,
                from[1] + (to[1] - from[1]) * t,
            ]
        })
        .collect()
}

fn join(parts: Vec<Vec<Point>>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for part in parts {
        let skip = usize::from(!out.is_empty());
        out.extend(part.into_iter().skip(skip));
    }
    out
}

/// Canonical single-stroke skeleton of a lowercase letter in the unit box.
fn skeleton(letter: &str) -> Option<Vec<Point>> {
    let pts = match letter {
        "c" => arc([0.5, 0.5], [0.4, 0.4], 40.0, 320.0, 40),
        "s" => join(vec![
            arc([0.5, 0.72], [0.3, 0.22], 20.0, 270.0, 25),
            arc([0.5, 0.28], [0.3, 0.22], 90.0, -160.0, 25),
        ]),
        "i" => join(vec![
            line([0.3, 0.55], [0.5, 0.95], 8),
            line([0.5, 0.95], [0.5, 0.15], 16),
            arc([0.65, 0.15], [0.15, 0.12], 180.0, 330.0, 8),
        ]),
        "h" => join(vec![
            line([0.25, 1.0], [0.25, 0.0], 20),
            line([0.25, 0.0], [0.25, 0.35], 7),
            arc([0.5, 0.35], [0.25, 0.25], 180.0, 0.0, 16),
            line([0.75, 0.35], [0.75, 0.0], 7),
        ]),
        "r" => join(vec![
            line([0.3, 0.6], [0.3, 0.0], 12),
            line([0.3, 0.0], [0.3, 0.35], 7),
            arc([0.55, 0.35], [0.25, 0.25], 180.0, 60.0, 12),
        ]),
        _ => return None,
    };
    Some(pts)
}

/// Synthetic stand-in for a handwriting corpus: `per_letter` jittered
/// renditions of each letter skeleton (random affine distortion plus smooth
/// positional noise), normalised like loaded data.
pub fn synthetic_trajectories(
    letters: &[String],
    per_letter: usize,
    seed: u64,
) -> Result<Vec<PenTrajectory>> {
    let mut rng = rng::stream(seed, Stream::Dataset);
    let wobble = Normal::new(0.0, 0.015).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(letters.len() * per_letter);
    for letter in letters {
        let base = skeleton(letter).ok_or_else(|| {
            Error::Config(format!(
                "no built-in glyph for '{letter}' (available: {})",
                SYNTHETIC_LETTERS.join(",")
            ))
        })?;
        for _ in 0..per_letter {
            let rot = rng.random_range(-0.2..0.2);
            let shear = rng.random_range(-0.25..0.25);
            let sx = rng.random_range(0.85..1.15);
            let sy = rng.random_range(0.85..1.15);
            let (c, s) = (f64::cos(rot), f64::sin(rot));
            // smooth noise: random-walk offsets, heavily damped
            let mut off = [0.0, 0.0];
            let mut points: Vec<Point> = base
                .iter()
                .map(|p| {
                    off[0] = 0.8 * off[0] + wobble.sample(&mut rng);
                    off[1] = 0.8 * off[1] + wobble.sample(&mut rng);
                    let x = (p[0] - 0.5) * sx + shear * (p[1] - 0.5);
                    let y = (p[1] - 0.5) * sy;
                    [c * x - s * y + off[0], s * x + c * y + off[1]]
                })
                .collect();
            normalize(&mut points);
            out.push(PenTrajectory {
                label: letter.clone(),
                points,
            });
        }
    }
    Ok(out)
}
