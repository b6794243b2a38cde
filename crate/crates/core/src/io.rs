//! Text file formats: match files, trajectories, pair estimates, residuals,
//! configuration and evaluation reports. The layouts are described in
//! `FORMATS.md` at the repository root.
//!
//! Every float is written with Rust's shortest round-trip formatting, so
//! reading back a written file reproduces each value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};

use crate::epipolar::MatchSet;
use crate::geometry::{CameraIntrinsics, Quaternion, RelativePose, UNIT_TOLERANCE};
use crate::metrics::EvalReport;
use crate::odometry::{FramePair, HeuristicConfig, PairEstimate, PixelRect, TimedPose, TrajectoryEstimate};
use crate::ransac::RansacConfig;
use crate::refine::{LossConfig, ResidualUpdate};
use crate::synth::default_camera;
use crate::{Error, Result};

pub const MATCHES_HEADER: &str = "# odom-matches v1";
pub const ESTIMATES_HEADER: &str = "# odom-estimates v1";
pub const RESIDUALS_HEADER: &str = "# odom-residuals v1";
pub const POSES_HEADER: &str = "# odom-poses v1";

/// Shortest round-trip decimal form of a float, switching to scientific
/// notation for very small or very large magnitudes.
struct Num(f64);

impl std::fmt::Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || (1e-5..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Line-oriented reader that attaches the path and 1-based line number to
/// every error.
struct Lines<'a> {
    path: PathBuf,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &Path, text: &'a str) -> Self {
        Self {
            path: path.to_path_buf(),
            lines: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Checks that the first line is exactly `header`.
    fn expect_header(&mut self, header: &str) -> Result<()> {
        match self.lines.next() {
            Some((i, l)) if l.trim_end() == header => {
                self.line = i + 1;
                Ok(())
            }
            Some((i, l)) => {
                self.line = i + 1;
                Err(self.error(format!("expected header '{header}', found '{l}'")))
            }
            None => {
                self.line = 1;
                Err(self.error(format!("empty file, expected header '{header}'")))
            }
        }
    }

    /// Next line that is neither blank nor a `#` comment, trimmed.
    fn next_content(&mut self) -> Option<&'a str> {
        for (i, l) in self.lines.by_ref() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Some(t);
        }
        None
    }

    fn float(&self, field: &str, name: &str) -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| self.error(format!("{name}: '{field}' is not a number")))?;
        if !v.is_finite() {
            return Err(self.error(format!("{name}: '{field}' is not finite")));
        }
        Ok(v)
    }

    fn integer<T: std::str::FromStr>(&self, field: &str, name: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.error(format!("{name}: '{field}' is not a non-negative integer")))
    }

    fn fields<'b>(&self, line: &'b str, sep: char, expected: &[usize]) -> Result<Vec<&'b str>> {
        let f: Vec<&str> = if sep == ' ' {
            line.split_whitespace().collect()
        } else {
            line.split(sep).map(str::trim).collect()
        };
        if !expected.contains(&f.len()) {
            let want = expected.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" or ");
            return Err(self.error(format!("expected {want} fields, found {}", f.len())));
        }
        Ok(f)
    }
}

fn check_id(id: &str, what: &str) -> Result<()> {
    if id.is_empty() || id.contains(|c: char| c == ',' || c.is_whitespace()) {
        return Err(Error::InvalidInput(format!(
            "{what} '{id}' must be non-empty without commas or whitespace"
        )));
    }
    Ok(())
}

/// Writes pairs in the match-file format.
pub fn write_matches(pairs: &[FramePair], path: &Path) -> Result<()> {
    write_text(path, &format_matches(pairs)?)
}

pub fn format_matches(pairs: &[FramePair]) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "{MATCHES_HEADER}").unwrap();
    for p in pairs {
        check_id(&p.matches.pair_id, "pair id")?;
        check_id(&p.frame_a, "frame id")?;
        check_id(&p.frame_b, "frame id")?;
        let m = &p.matches;
        writeln!(
            s,
            "pair,{},{},{},{},{},{},{},{}",
            m.pair_id,
            p.frame_a,
            p.frame_b,
            Num(p.ts_a),
            Num(p.ts_b),
            p.intrinsics.width(),
            p.intrinsics.height(),
            m.len()
        )
        .unwrap();
        for i in 0..m.len() {
            let (a, b) = (m.points_a[i], m.points_b[i]);
            writeln!(s, "{},{},{},{},{}", Num(a.x), Num(a.y), Num(b.x), Num(b.y), Num(m.confidence[i])).unwrap();
        }
    }
    Ok(s)
}

/// Reads a match file. The image size recorded for each pair must agree with
/// the camera, which supplies the rest of the intrinsics.
pub fn read_matches(path: &Path, intrinsics: &CameraIntrinsics) -> Result<Vec<FramePair>> {
    let text = read_text(path)?;
    let mut r = Lines::new(path, &text);
    r.expect_header(MATCHES_HEADER)?;
    let mut pairs = Vec::new();
    while let Some(line) = r.next_content() {
        let header_line = r.line;
        let f = r.fields(line, ',', &[9])?;
        if f[0] != "pair" {
            return Err(r.error(format!("expected a 'pair' record, found '{line}'")));
        }
        let (width, height): (u32, u32) = (r.integer(f[6], "width")?, r.integer(f[7], "height")?);
        if (width, height) != (intrinsics.width(), intrinsics.height()) {
            return Err(r.error(format!(
                "image size {width}x{height} does not match the camera's {}x{}",
                intrinsics.width(),
                intrinsics.height()
            )));
        }
        let count: usize = r.integer(f[8], "count")?;
        let mut m = MatchSet {
            pair_id: f[1].to_string(),
            ..MatchSet::default()
        };
        for _ in 0..count {
            let row = r
                .next_content()
                .ok_or_else(|| r.error(format!("pair '{}' ends after {} of {count} matches", f[1], m.len())))?;
            let v = r.fields(row, ',', &[5])?;
            let num = |i: usize, name: &str| r.float(v[i], name);
            m.points_a.push(Vector2::new(num(0, "u_a")?, num(1, "v_a")?));
            m.points_b.push(Vector2::new(num(2, "u_b")?, num(3, "v_b")?));
            let c = num(4, "confidence")?;
            if !(0.0..=1.0).contains(&c) {
                return Err(r.error(format!("confidence {c} is outside [0, 1]")));
            }
            m.confidence.push(c);
        }
        let pair = FramePair {
            frame_a: f[2].to_string(),
            frame_b: f[3].to_string(),
            ts_a: r.float(f[4], "ts_a")?,
            ts_b: r.float(f[5], "ts_b")?,
            matches: m,
            intrinsics: *intrinsics,
        };
        pair.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: header_line,
            message: e.to_string(),
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn pose_fields(s: &mut String, p: &RelativePose) {
    let (t, q) = (p.translation, p.rotation);
    let v = [t.x, t.y, t.z, q.x, q.y, q.z, q.w].map(Num);
    write!(s, "{} {} {} {} {} {} {}", v[0], v[1], v[2], v[3], v[4], v[5], v[6]).unwrap();
}

/// Parses `tx ty tz qx qy qz qw`; the quaternion must be unit within 1e−6.
fn parse_pose(r: &Lines, f: &[&str]) -> Result<RelativePose> {
    let v: Vec<f64> = ["tx", "ty", "tz", "qx", "qy", "qz", "qw"]
        .iter()
        .zip(f)
        .map(|(name, field)| r.float(field, name))
        .collect::<Result<_>>()?;
    let q = Quaternion::new(v[6], v[3], v[4], v[5]);
    if !q.is_unit(UNIT_TOLERANCE) {
        return Err(r.error(format!("quaternion norm {} is not 1", q.norm())));
    }
    Ok(RelativePose::new(q, Vector3::new(v[0], v[1], v[2])))
}

pub fn format_trajectory(t: &TrajectoryEstimate) -> String {
    let mut s = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in &t.poses {
        write!(s, "{} ", Num(p.timestamp)).unwrap();
        pose_fields(&mut s, &p.pose);
        s.push('\n');
    }
    s
}

/// Writes a trajectory in TUM format (`timestamp tx ty tz qx qy qz qw`), each
/// line the camera pose of a frame in frame-0 coordinates.
pub fn write_trajectory(t: &TrajectoryEstimate, path: &Path) -> Result<()> {
    write_text(path, &format_trajectory(t))
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryEstimate> {
    let text = read_text(path)?;
    let mut r = Lines::new(path, &text);
    let mut poses: Vec<TimedPose> = Vec::new();
    while let Some(line) = r.next_content() {
        let f = r.fields(line, ' ', &[8])?;
        let timestamp = r.float(f[0], "timestamp")?;
        if let Some(prev) = poses.last() {
            if !(timestamp > prev.timestamp) {
                return Err(r.error(format!(
                    "timestamp {timestamp} does not increase after {}",
                    prev.timestamp
                )));
            }
        }
        poses.push(TimedPose {
            timestamp,
            pose: parse_pose(&r, &f[1..])?,
        });
    }
    TrajectoryEstimate::new(poses)
}

pub fn format_estimates(estimates: &[PairEstimate]) -> String {
    let mut s = format!("{ESTIMATES_HEADER}\n# ts_a ts_b tx ty tz qx qy qz qw source gap inliers\n");
    for e in estimates {
        write!(s, "{} {} ", Num(e.ts_a), Num(e.ts_b)).unwrap();
        pose_fields(&mut s, &e.pose);
        writeln!(s, " {} {} {}", e.source.as_str(), u8::from(e.gap_flag), e.inlier_count).unwrap();
    }
    s
}

pub fn write_estimates(estimates: &[PairEstimate], path: &Path) -> Result<()> {
    write_text(path, &format_estimates(estimates))
}

pub fn read_estimates(path: &Path) -> Result<Vec<PairEstimate>> {
    let text = read_text(path)?;
    let mut r = Lines::new(path, &text);
    r.expect_header(ESTIMATES_HEADER)?;
    let mut out = Vec::new();
    while let Some(line) = r.next_content() {
        let f = r.fields(line, ' ', &[12])?;
        let gap_flag = match f[10] {
            "0" => false,
            "1" => true,
            other => return Err(r.error(format!("gap flag must be 0 or 1, found '{other}'"))),
        };
        out.push(PairEstimate {
            ts_a: r.float(f[0], "ts_a")?,
            ts_b: r.float(f[1], "ts_b")?,
            pose: parse_pose(&r, &f[2..9])?,
            source: f[9].parse().map_err(|e: Error| r.error(e.to_string()))?,
            gap_flag,
            inlier_count: r.integer(f[11], "inliers")?,
        });
    }
    Ok(out)
}

/// Relative pose of the pair spanning `ts_a → ts_b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPose {
    pub ts_a: f64,
    pub ts_b: f64,
    pub pose: RelativePose,
}

pub fn format_pair_poses(poses: &[PairPose]) -> String {
    let mut s = format!("{POSES_HEADER}\n# ts_a ts_b tx ty tz qx qy qz qw\n");
    for p in poses {
        write!(s, "{} {} ", Num(p.ts_a), Num(p.ts_b)).unwrap();
        pose_fields(&mut s, &p.pose);
        s.push('\n');
    }
    s
}

pub fn write_pair_poses(poses: &[PairPose], path: &Path) -> Result<()> {
    write_text(path, &format_pair_poses(poses))
}

pub fn read_pair_poses(path: &Path) -> Result<Vec<PairPose>> {
    let text = read_text(path)?;
    let mut r = Lines::new(path, &text);
    r.expect_header(POSES_HEADER)?;
    let mut out = Vec::new();
    while let Some(line) = r.next_content() {
        let f = r.fields(line, ' ', &[9])?;
        out.push(PairPose {
            ts_a: r.float(f[0], "ts_a")?,
            ts_b: r.float(f[1], "ts_b")?,
            pose: parse_pose(&r, &f[2..])?,
        });
    }
    Ok(out)
}

/// Residual update for the pair spanning `ts_a → ts_b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualRecord {
    pub ts_a: f64,
    pub ts_b: f64,
    pub update: ResidualUpdate,
}

pub fn format_residuals(records: &[ResidualRecord]) -> String {
    let mut s = format!("{RESIDUALS_HEADER}\n# ts_a ts_b tx ty tz qx qy qz qw [w_prelim]\n");
    for rec in records {
        let (t, q) = (rec.update.t_cnn, rec.update.q_cnn);
        let v = [rec.ts_a, rec.ts_b, t.x, t.y, t.z, q.x, q.y, q.z, q.w].map(Num);
        write!(s, "{} {} {} {} {} {} {} {} {}", v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]).unwrap();
        if let Some(w) = rec.update.w_prelim {
            write!(s, " {}", Num(w)).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_residuals(records: &[ResidualRecord], path: &Path) -> Result<()> {
    write_text(path, &format_residuals(records))
}

pub fn read_residuals(path: &Path) -> Result<Vec<ResidualRecord>> {
    let text = read_text(path)?;
    let mut r = Lines::new(path, &text);
    r.expect_header(RESIDUALS_HEADER)?;
    let mut out = Vec::new();
    while let Some(line) = r.next_content() {
        let f = r.fields(line, ' ', &[9, 10])?;
        let v: Vec<f64> = f
            .iter()
            .enumerate()
            .map(|(i, x)| r.float(x, &format!("field {}", i + 1)))
            .collect::<Result<_>>()?;
        out.push(ResidualRecord {
            ts_a: v[0],
            ts_b: v[1],
            update: ResidualUpdate {
                t_cnn: Vector3::new(v[2], v[3], v[4]),
                q_cnn: Quaternion::new(v[8], v[5], v[6], v[7]),
                w_prelim: v.get(9).copied(),
            },
        });
    }
    Ok(out)
}

/// Everything configurable about a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub intrinsics: CameraIntrinsics,
    pub heuristic: HeuristicConfig,
    pub ransac: RansacConfig,
    pub loss: LossConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            intrinsics: default_camera(),
            heuristic: HeuristicConfig::default(),
            ransac: RansacConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

/// Recognized configuration keys, in the order [`format_config`] writes them.
pub const CONFIG_KEYS: [&str; 19] = [
    "fx",
    "fy",
    "cx",
    "cy",
    "width",
    "height",
    "prob",
    "threshold",
    "max_iterations",
    "ransac_min_confidence",
    "seed",
    "translation_magnitude",
    "fallback_rotation",
    "fallback_axis",
    "min_confident_matches",
    "min_confidence",
    "gap_threshold",
    "static_mask",
    "epsilon",
];

pub fn format_config(c: &Config) -> String {
    let k = &c.intrinsics;
    let h = &c.heuristic;
    let mask = h
        .static_mask
        .iter()
        .map(|r| format!("{} {} {} {}", Num(r.u_min), Num(r.v_min), Num(r.u_max), Num(r.v_max)))
        .collect::<Vec<_>>()
        .join("; ");
    let a = h.fallback_axis;
    let values = [
        Num(k.fx()).to_string(),
        Num(k.fy()).to_string(),
        Num(k.cx()).to_string(),
        Num(k.cy()).to_string(),
        k.width().to_string(),
        k.height().to_string(),
        Num(c.ransac.success_prob).to_string(),
        Num(c.ransac.inlier_threshold_px).to_string(),
        c.ransac.max_iterations.to_string(),
        Num(c.ransac.min_confidence).to_string(),
        c.ransac.rng_seed.to_string(),
        Num(h.translation_magnitude_m).to_string(),
        Num(h.fallback_rotation_rad).to_string(),
        format!("{} {} {}", Num(a.x), Num(a.y), Num(a.z)),
        h.min_confident_matches.to_string(),
        Num(h.min_confidence).to_string(),
        Num(h.gap_threshold_s).to_string(),
        mask,
        Num(c.loss.epsilon).to_string(),
    ];
    let mut s = String::new();
    for (key, value) in CONFIG_KEYS.iter().zip(values) {
        if value.is_empty() {
            writeln!(s, "{key} =").unwrap();
        } else {
            writeln!(s, "{key} = {value}").unwrap();
        }
    }
    s
}

pub fn write_config(c: &Config, path: &Path) -> Result<()> {
    write_text(path, &format_config(c))
}

pub fn read_config(path: &Path) -> Result<Config> {
    let text = read_text(path)?;
    parse_config(path, &text)
}

/// Parses `key = value` lines; `#` starts a comment. Unknown and repeated keys
/// are errors, missing keys keep their defaults.
pub fn parse_config(path: &Path, text: &str) -> Result<Config> {
    let mut r = Lines::new(path, text);
    let mut c = Config::default();
    let k = c.intrinsics;
    let (mut fx, mut fy, mut cx, mut cy, mut width, mut height) =
        (k.fx(), k.fy(), k.cx(), k.cy(), k.width(), k.height());
    let mut seen: Vec<&str> = Vec::new();
    let mut intrinsics_line = 0;
    while let Some(line) = r.next_content() {
        let line = line.split('#').next().unwrap_or("").trim();
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| r.error(format!("expected 'key = value', found '{line}'")))?;
        let Some(&key) = CONFIG_KEYS.iter().find(|&&k| k == key) else {
            return Err(r.error(format!("unknown key '{key}'")));
        };
        if seen.contains(&key) {
            return Err(r.error(format!("key '{key}' given twice")));
        }
        seen.push(key);
        let h = &mut c.heuristic;
        match key {
            "fx" | "fy" | "cx" | "cy" | "width" | "height" => {
                intrinsics_line = r.line;
                match key {
                    "fx" => fx = r.float(value, key)?,
                    "fy" => fy = r.float(value, key)?,
                    "cx" => cx = r.float(value, key)?,
                    "cy" => cy = r.float(value, key)?,
                    "width" => width = r.integer(value, key)?,
                    _ => height = r.integer(value, key)?,
                }
            }
            "prob" => c.ransac.success_prob = r.float(value, key)?,
            "threshold" => c.ransac.inlier_threshold_px = r.float(value, key)?,
            "max_iterations" => c.ransac.max_iterations = r.integer(value, key)?,
            "ransac_min_confidence" => c.ransac.min_confidence = r.float(value, key)?,
            "seed" => c.ransac.rng_seed = r.integer(value, key)?,
            "translation_magnitude" => h.translation_magnitude_m = r.float(value, key)?,
            "fallback_rotation" => h.fallback_rotation_rad = r.float(value, key)?,
            "fallback_axis" => {
                let f = r.fields(value, ' ', &[3])?;
                h.fallback_axis = Vector3::new(
                    r.float(f[0], key)?,
                    r.float(f[1], key)?,
                    r.float(f[2], key)?,
                );
            }
            "min_confident_matches" => h.min_confident_matches = r.integer(value, key)?,
            "min_confidence" => h.min_confidence = r.float(value, key)?,
            "gap_threshold" => h.gap_threshold_s = r.float(value, key)?,
            "static_mask" => h.static_mask = parse_static_mask(value).map_err(|e| r.error(e))?,
            "epsilon" => c.loss.epsilon = r.float(value, key)?,
            _ => unreachable!("key list and match arms agree"),
        }
        let checked = match key {
            "prob" | "threshold" | "max_iterations" | "ransac_min_confidence" => c.ransac.validate(),
            "epsilon" => c.loss.validate(),
            "fx" | "fy" | "cx" | "cy" | "width" | "height" | "seed" => Ok(()),
            _ => c.heuristic.validate(),
        };
        checked.map_err(|e| r.error(e.to_string()))?;
    }
    c.intrinsics = CameraIntrinsics::new(fx, fy, cx, cy, width, height).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: intrinsics_line,
        message: e.to_string(),
    })?;
    Ok(c)
}

/// Parses `u_min v_min u_max v_max` rectangles separated by `;`.
pub fn parse_static_mask(value: &str) -> std::result::Result<Vec<PixelRect>, String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|rect| {
            let v: Vec<f64> = rect
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| format!("static mask: '{x}' is not a number")))
                .collect::<std::result::Result<_, _>>()?;
            if v.len() != 4 {
                return Err(format!("static mask rectangle '{rect}' needs 4 numbers"));
            }
            PixelRect::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
        })
        .collect()
}

pub fn format_report(r: &EvalReport) -> String {
    format!(
        "frames {}\nr_rot_rad {}\nr_rot_deg {}\nr_trans_m {}\n",
        r.per_frame.len(),
        Num(r.r_rot),
        Num(r.r_rot_deg()),
        Num(r.r_trans_m)
    )
}

/// Per-frame errors as CSV, one row per timestamp.
pub fn format_report_csv(r: &EvalReport) -> String {
    let mut s = String::from("timestamp,rotation_error_rad,rotation_error_deg,translation_error_m\n");
    for f in &r.per_frame {
        writeln!(
            s,
            "{},{},{},{}",
            Num(f.timestamp),
            Num(f.rotation_error_rad),
            Num(f.rotation_error_rad.to_degrees()),
            Num(f.translation_error_m)
        )
        .unwrap();
    }
    s
}

pub fn write_report(r: &EvalReport, text_path: &Path, csv_path: Option<&Path>) -> Result<()> {
    write_text(text_path, &format_report(r))?;
    if let Some(p) = csv_path {
        write_text(p, &format_report_csv(r))?;
    }
    Ok(())
}
