//! Drawing environment: a two-link planar arm whose joint velocities move a
//! pen over a 64x64 binary canvas.
//!
//! Canvas units: the workspace is the unit square `[0, 1]^2` with `y` pointing
//! up. Pixel `(row, col)` has `col = round(63 x)` and `row = round(63 (1 - y))`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::reservoir::ActionSequence;

pub const SIDE: usize = 64;
pub const PIXELS: usize = SIDE * SIDE;

/// Pen position or any other point in canvas units.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct ArmConfig {
    pub l1: f64,
    pub l2: f64,
    pub base: Point,
    pub theta0: [f64; 2],
    /// Joint-angle change in radians per unit command per step.
    pub gain: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        Self::centered(0.5, 0.5, [0.5, 0.0], 0.02).expect("default arm reaches the centre")
    }
}

impl ArmConfig {
    /// Arm whose initial joint angles put the pen at the canvas centre.
    /// The elbow-left solution is used.
    pub fn centered(l1: f64, l2: f64, base: Point, gain: f64) -> Result<Self> {
        let theta0 = inverse_kinematics([0.5, 0.5], l1, l2, base).ok_or_else(|| {
            Error::Config(format!(
                "arm (l1={l1}, l2={l2}, base={base:?}) cannot reach the canvas centre"
            ))
        })?;
        let cfg = Self {
            l1,
            l2,
            base,
            theta0,
            gain,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(Error::Config("arm: link lengths must be > 0".into()));
        }
        if !self.gain.is_finite() {
            return Err(Error::Config("arm: gain must be finite".into()));
        }
        let p = forward_kinematics(self.theta0, self);
        if (p[0] - 0.5).abs() > 1e-9 || (p[1] - 0.5).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "arm: theta0 puts the pen at {p:?}, not at the canvas centre"
            )));
        }
        Ok(())
    }
}

pub fn forward_kinematics(theta: [f64; 2], cfg: &ArmConfig) -> Point {
    let a = theta[0];
    let b = theta[0] + theta[1];
    [
        cfg.base[0] + cfg.l1 * a.cos() + cfg.l2 * b.cos(),
        cfg.base[1] + cfg.l1 * a.sin() + cfg.l2 * b.sin(),
    ]
}

fn inverse_kinematics(target: Point, l1: f64, l2: f64, base: Point) -> Option<[f64; 2]> {
    let dx = target[0] - base[0];
    let dy = target[1] - base[1];
    let d2 = dx * dx + dy * dy;
    let c2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    if !(-1.0..=1.0).contains(&c2) {
        return None;
    }
    let t2 = c2.acos();
    let t1 = dy.atan2(dx) - (l2 * t2.sin()).atan2(l1 + l2 * t2.cos());
    Some([t1.rem_euclid(2.0 * PI), t2])
}

/// Map a canvas-unit point to (row, col) pixel coordinates, possibly outside
/// the grid.
pub fn to_pixel(p: Point) -> (i64, i64) {
    let max = (SIDE - 1) as f64;
    // Far-away points are clamped so rasterisation stays bounded; every
    // clamped pixel is off-canvas anyway.
    let lim = 16.0 * SIDE as f64;
    let col = (p[0] * max).round().clamp(-lim, lim);
    let row = ((1.0 - p[1]) * max).round().clamp(-lim, lim);
    (row as i64, col as i64)
}

#[derive(Clone, PartialEq, Eq)]
pub struct Canvas {
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Canvas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Canvas({} marked)", self.marked())
    }
}

impl Default for Canvas {
    fn default() -> Self {
        Self::blank()
    }
}

impl Canvas {
    pub fn blank() -> Self {
        Self {
            pixels: vec![0; PIXELS],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * SIDE + col] != 0
    }

    /// Set a pixel; coordinates outside the grid are ignored.
    pub fn mark(&mut self, row: i64, col: i64) {
        if (0..SIDE as i64).contains(&row) && (0..SIDE as i64).contains(&col) {
            self.pixels[row as usize * SIDE + col as usize] = 1;
        }
    }

    pub fn marked(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    /// Bresenham line between two pixel coordinates, inclusive of both ends,
    /// clipped to the grid.
    pub fn draw_pixel_line(&mut self, from: (i64, i64), to: (i64, i64)) {
        let (mut r, mut c) = from;
        let dr = (to.0 - r).abs();
        let dc = -(to.1 - c).abs();
        let sr = if r < to.0 { 1 } else { -1 };
        let sc = if c < to.1 { 1 } else { -1 };
        let mut err = dr + dc;
        loop {
            self.mark(r, c);
            if (r, c) == to {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dc {
                err += dc;
                r += sr;
            }
            if e2 <= dr {
                err += dr;
                c += sc;
            }
        }
    }

    pub fn observe(&self) -> Observation {
        Observation {
            values: self.pixels.iter().map(|&p| p as f64).collect(),
        }
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|&p| if p != 0 { 255 } else { 0 })
            .collect();
        pgm_bytes(SIDE, SIDE, &bytes)
    }
}

/// Rasterise the segment between two canvas-unit points.
pub fn rasterize_segment(canvas: &mut Canvas, from: Point, to: Point) {
    canvas.draw_pixel_line(to_pixel(from), to_pixel(to));
}

/// Binary observation vector (row-major for canvases).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
}

impl Observation {
    pub fn from_binary(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Config(format!(
                "observation value {v} is not binary"
            )));
        }
        Ok(Self { values })
    }

    pub fn blank(d: usize) -> Self {
        Self {
            values: vec![0.0; d],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ink(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub theta: [f64; 2],
    pub pen: Point,
    pub canvas: Canvas,
}

impl EnvState {
    /// Blank canvas, arm at `theta0` with the pen at the centre.
    pub fn new(cfg: &ArmConfig) -> Self {
        Self {
            theta: cfg.theta0,
            pen: forward_kinematics(cfg.theta0, cfg),
            canvas: Canvas::blank(),
        }
    }

    /// Integrate the joint-velocity commands (forward Euler, one command per
    /// step), drawing every pen segment.
    pub fn apply_actions(&mut self, actions: &ActionSequence, cfg: &ArmConfig) -> Result<()> {
        check_len("action dimension", 2, actions.dim())?;
        for a in actions.iter() {
            self.theta[0] += cfg.gain * a[0];
            self.theta[1] += cfg.gain * a[1];
            let next = forward_kinematics(self.theta, cfg);
            rasterize_segment(&mut self.canvas, self.pen, next);
            self.pen = next;
        }
        Ok(())
    }

    pub fn observe(&self) -> Observation {
        self.canvas.observe()
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot(self.clone())
    }
}

/// Saved environment state for planning rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot(EnvState);

impl EnvSnapshot {
    pub fn restore(&self) -> EnvState {
        self.0.clone()
    }

    pub fn state(&self) -> &EnvState {
        &self.0
    }
}

pub fn pgm_bytes(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    debug_assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Side-by-side strip of 64x64 grayscale tiles from values in `[0, 1]`.
pub fn tiles_to_pgm<'a>(tiles: impl IntoIterator<Item = &'a [f64]>) -> Vec<u8> {
    let tiles: Vec<&[f64]> = tiles.into_iter().collect();
    let width = SIDE * tiles.len();
    let mut gray = vec![0u8; width * SIDE];
    for (t, tile) in tiles.iter().enumerate() {
        for (idx, &v) in tile.iter().take(PIXELS).enumerate() {
            let (row, col) = (idx / SIDE, idx % SIDE);
            gray[row * width + t * SIDE + col] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    pgm_bytes(width, SIDE, &gray)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_arm() -> ArmConfig {
        ArmConfig {
            l1: 1.0,
            l2: 1.0,
            base: [0.0, 0.0],
            theta0: [0.0, 0.0],
            gain: 0.1,
        }
    }

    fn close(a: Point, b: Point) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn forward_kinematics_cases() {
        let arm = ArmConfig {
            l1: 0.7,
            l2: 0.4,
            ..unit_arm()
        };
        assert!(close(forward_kinematics([0.0, 0.0], &arm), [1.1, 0.0]));
        assert!(close(
            forward_kinematics([PI / 2.0, 0.0], &unit_arm()),
            [0.0, 2.0]
        ));
        assert!(close(
            forward_kinematics([PI / 2.0, -PI / 2.0], &unit_arm()),
            [1.0, 1.0]
        ));
    }

    #[test]
    fn default_arm_starts_at_centre() {
        let arm = ArmConfig::default();
        assert!(close(forward_kinematics(arm.theta0, &arm), [0.5, 0.5]));
        let env = EnvState::new(&arm);
        assert_eq!(env.canvas.marked(), 0);
        assert!(ArmConfig::centered(0.1, 0.1, [0.5, 0.0], 0.02).is_err());
    }

    #[test]
    fn degenerate_and_axis_aligned_segments() {
        let mut c = Canvas::blank();
        rasterize_segment(&mut c, [0.3, 0.3], [0.3, 0.3]);
        assert_eq!(c.marked(), 1);

        let mut c = Canvas::blank();
        c.draw_pixel_line((5, 10), (5, 19));
        assert_eq!(c.marked(), 10);
        assert!((10..20).all(|col| c.get(5, col)));
    }

    #[test]
    fn full_diagonal_has_64_pixels() {
        let mut c = Canvas::blank();
        c.draw_pixel_line((0, 0), (63, 63));
        assert_eq!(c.marked(), 64);
        let mut c = Canvas::blank();
        rasterize_segment(&mut c, [0.0, 0.0], [1.0, 1.0]);
        assert_eq!(c.marked(), 64);
    }

    #[test]
    fn off_canvas_segments_are_clipped() {
        let mut c = Canvas::blank();
        rasterize_segment(&mut c, [-0.5, 0.5], [1.5, 0.5]);
        assert_eq!(c.marked(), 64);
        let mut c = Canvas::blank();
        rasterize_segment(&mut c, [2.0, 2.0], [3.0, 2.5]);
        assert_eq!(c.marked(), 0);
    }

    #[test]
    fn zero_actions_mark_one_pixel() {
        let arm = ArmConfig::default();
        let mut env = EnvState::new(&arm);
        env.apply_actions(&ActionSequence::zeros(100, 2), &arm)
            .unwrap();
        assert_eq!(env.canvas.marked(), 1);
        let (r, c) = to_pixel(env.pen);
        assert!(env.canvas.get(r as usize, c as usize));
    }

    #[test]
    fn single_step_matches_forward_kinematics() {
        let arm = ArmConfig::default();
        let mut env = EnvState::new(&arm);
        let a = ActionSequence::new(vec![1.0, 0.0], 2).unwrap();
        env.apply_actions(&a, &arm).unwrap();
        assert_eq!(env.theta[0], arm.theta0[0] + arm.gain);
        assert_eq!(env.theta[1], arm.theta0[1]);
        let expect = forward_kinematics([arm.theta0[0] + arm.gain, arm.theta0[1]], &arm);
        assert!(close(env.pen, expect));
    }

    #[test]
    fn wrong_action_dimension_is_rejected() {
        let arm = ArmConfig::default();
        let mut env = EnvState::new(&arm);
        let a = ActionSequence::zeros(3, 3);
        assert!(env.apply_actions(&a, &arm).is_err());
    }

    #[test]
    fn observation_indexing() {
        let c = Canvas::blank();
        assert!(c.observe().values().iter().all(|&v| v == 0.0));
        let mut c = Canvas::blank();
        c.mark(7, 11);
        let o = c.observe();
        assert_eq!(o.len(), PIXELS);
        assert_eq!(o.values()[64 * 7 + 11], 1.0);
        assert_eq!(o.ink(), 1);
    }

    #[test]
    fn snapshots_rewind() {
        let arm = ArmConfig::default();
        let mut env = EnvState::new(&arm);
        let first = env.snapshot();
        let strokes = ActionSequence::new([0.8, -0.3].repeat(40), 2).unwrap();
        env.apply_actions(&strokes, &arm).unwrap();
        let second = env.snapshot();
        env.apply_actions(&strokes, &arm).unwrap();
        assert_eq!(second.restore(), *second.state());
        assert_eq!(first.restore().canvas, Canvas::blank());
        assert_ne!(second.restore().canvas, Canvas::blank());
        assert_eq!(first.restore(), EnvState::new(&arm));
    }

    #[test]
    fn pgm_layout() {
        let mut c = Canvas::blank();
        c.mark(0, 1);
        let bytes = c.to_pgm();
        let header = b"P5\n64 64\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + PIXELS);
        assert_eq!(bytes[header.len()], 0);
        assert_eq!(bytes[header.len() + 1], 255);
    }

    #[test]
    fn tile_strip_dimensions() {
        let a = vec![1.0; PIXELS];
        let b = vec![0.0; PIXELS];
        let bytes = tiles_to_pgm([a.as_slice(), b.as_slice()]);
        let header = b"P5\n128 64\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes[header.len()], 255);
        assert_eq!(bytes[header.len() + 64], 0);
    }
}
