//! Radar point clouds: ASCII PCD parsing and writing, spherical conversion
//! and field-of-view validation.
//!
//! Cloud files are PCD v0.7 with fields `x y z doppler power`, one cloud per
//! file, capture time encoded in the filename as `<nanoseconds>.pcd`.

use std::path::Path;

use crate::config::{Axis, FovConfig, ViewId, POWER_HI, POWER_LO};
use crate::error::{Error, Result};

/// One radar return in the sensor's Cartesian frame.
///
/// `x` points forward, `y` left, `z` up; `doppler` is the radial velocity in
/// m/s and `power` the return strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub doppler: f32,
    pub power: f32,
}

/// A single capture: all returns of one frame plus its capture time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<RadarPoint>,
    pub timestamp_ns: u64,
}

/// A radar return in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub range: f32,
    pub azimuth: f32,
    pub elevation: f32,
    pub doppler: f32,
    pub power: f32,
}

impl SphericalPoint {
    pub fn axis_value(&self, axis: Axis) -> f32 {
        match axis {
            Axis::Elevation => self.elevation,
            Axis::Azimuth => self.azimuth,
            Axis::Range => self.range,
            Axis::Doppler => self.doppler,
        }
    }
}

/// Parse result: the cloud plus counts of accepted-but-suspicious values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCloud {
    pub cloud: PointCloud,
    /// Points whose power fell outside the expected sensor range. They are
    /// kept; the count is surfaced so callers can warn.
    pub power_out_of_range: usize,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::PcdParse {
        line,
        msg: msg.into(),
    }
}

/// Fixed header lines: key plus required value tokens.
const HEADER_EXACT: [(&str, &str); 5] = [
    ("VERSION", "0.7"),
    ("FIELDS", "x y z doppler power"),
    ("SIZE", "4 4 4 4 4"),
    ("TYPE", "F F F F F"),
    ("COUNT", "1 1 1 1 1"),
];

/// Parse an ASCII PCD v0.7 cloud with fields `x y z doppler power`.
///
/// The header must carry exactly the fields above, `HEIGHT 1` and
/// `DATA ascii`. `#` comment lines are skipped. Errors carry 1-based line
/// numbers. The returned cloud has `timestamp_ns = 0`; use
/// [`read_pcd_file`] to pick the timestamp up from the filename.
pub fn parse_pcd(bytes: &[u8]) -> Result<ParsedCloud> {
    let text = match std::str::from_utf8(bytes) {
        Ok(t) => t,
        Err(e) => {
            let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            return Err(parse_err(line, "file is not valid utf-8"));
        }
    };

    // (1-based line number, content) with comments and blank lines retained
    // so numbering matches the file.
    let mut lines = text
        .split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));

    let mut next_meaningful = move || loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() || l.trim_start().starts_with('#') => continue,
            other => return other,
        }
    };

    let mut expect_key = |key: &str| -> Result<(usize, Vec<&str>)> {
        let (line_no, line) = next_meaningful()
            .ok_or_else(|| parse_err(text.split('\n').count(), format!("missing {key} line")))?;
        let mut tokens = line.split_whitespace();
        let got_key = tokens.next().unwrap_or("");
        if got_key != key {
            return Err(parse_err(line_no, format!("expected {key}, got {got_key:?}")));
        }
        Ok((line_no, tokens.collect()))
    };

    for (key, want) in HEADER_EXACT {
        let (line_no, tokens) = expect_key(key)?;
        let want_tokens: Vec<&str> = want.split_whitespace().collect();
        if tokens != want_tokens {
            return Err(parse_err(
                line_no,
                format!("{key} must be {want:?}, got {:?}", tokens.join(" ")),
            ));
        }
    }

    let (line_no, tokens) = expect_key("WIDTH")?;
    let width: usize = tokens
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(line_no, "WIDTH must be a non-negative integer"))?;

    let (line_no, tokens) = expect_key("HEIGHT")?;
    if tokens != ["1"] {
        return Err(parse_err(line_no, "HEIGHT must be 1 (unorganized cloud)"));
    }

    let (line_no, tokens) = expect_key("VIEWPOINT")?;
    if tokens != ["0", "0", "0", "1", "0", "0", "0"] {
        return Err(parse_err(line_no, "VIEWPOINT must be 0 0 0 1 0 0 0"));
    }

    let (line_no, tokens) = expect_key("POINTS")?;
    let n_points: usize = tokens
        .first()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(line_no, "POINTS must be a non-negative integer"))?;
    if n_points != width {
        return Err(parse_err(
            line_no,
            format!("POINTS ({n_points}) must equal WIDTH ({width}) for HEIGHT 1"),
        ));
    }

    let (line_no, tokens) = expect_key("DATA")?;
    if tokens != ["ascii"] {
        return Err(parse_err(line_no, "DATA must be ascii"));
    }

    let mut points = Vec::with_capacity(n_points);
    let mut power_out_of_range = 0usize;
    while points.len() < n_points {
        let (line_no, line) = next_meaningful().ok_or_else(|| {
            parse_err(
                text.split('\n').count(),
                format!("expected {n_points} data rows, got {}", points.len()),
            )
        })?;
        let mut vals = [0f32; 5];
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            if count == 5 {
                return Err(parse_err(line_no, "data row has more than 5 fields"));
            }
            let v: f32 = tok
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid float {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite value {tok:?}")));
            }
            vals[count] = v;
            count += 1;
        }
        if count != 5 {
            return Err(parse_err(
                line_no,
                format!("data row has {count} fields, expected 5"),
            ));
        }
        let p = RadarPoint {
            x: vals[0],
            y: vals[1],
            z: vals[2],
            doppler: vals[3],
            power: vals[4],
        };
        if !(POWER_LO..=POWER_HI).contains(&p.power) {
            power_out_of_range += 1;
        }
        points.push(p);
    }

    if let Some((line_no, _)) = next_meaningful() {
        return Err(parse_err(line_no, "unexpected data after last point"));
    }

    Ok(ParsedCloud {
        cloud: PointCloud {
            points,
            timestamp_ns: 0,
        },
        power_out_of_range,
    })
}

/// Serialize a cloud to ASCII PCD. Inverse of [`parse_pcd`]: floats are
/// written in shortest round-trip form, so parsing the output recovers the
/// input bit-exactly. Non-finite values are rejected.
pub fn write_pcd(cloud: &PointCloud) -> Result<String> {
    use std::fmt::Write;

    let n = cloud.points.len();
    let mut out = String::with_capacity(128 + n * 48);
    for (key, val) in HEADER_EXACT {
        out.push_str(key);
        out.push(' ');
        out.push_str(val);
        out.push('\n');
    }
    write!(out, "WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA ascii\n").unwrap();
    for (i, p) in cloud.points.iter().enumerate() {
        for v in [p.x, p.y, p.z, p.doppler, p.power] {
            if !v.is_finite() {
                return Err(Error::Config(format!("point {i} has non-finite value {v}")));
            }
        }
        writeln!(out, "{} {} {} {} {}", p.x, p.y, p.z, p.doppler, p.power).unwrap();
    }
    Ok(out)
}

/// Read one cloud from `<nanoseconds>.pcd`, taking the capture time from the
/// file name.
pub fn read_pcd_file(path: &Path) -> Result<ParsedCloud> {
    let ts = timestamp_from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut parsed = parse_pcd(&bytes).map_err(|e| match e {
        Error::PcdParse { line, msg } => {
            Error::PcdParse { line, msg: format!("{}: {msg}", path.display()) }
        }
        other => other,
    })?;
    parsed.cloud.timestamp_ns = ts;
    Ok(parsed)
}

/// Write a cloud to `dir/<timestamp_ns>.pcd`.
pub fn write_pcd_file(cloud: &PointCloud, dir: &Path) -> Result<std::path::PathBuf> {
    let path = dir.join(format!("{}.pcd", cloud.timestamp_ns));
    std::fs::write(&path, write_pcd(cloud)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Extract the nanosecond timestamp encoded in a `<nanoseconds>.pcd` name.
pub fn timestamp_from_path(path: &Path) -> Result<u64> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            Error::Dataset(format!(
                "cloud filename must be <nanoseconds>.pcd, got {}",
                path.display()
            ))
        })
}

/// Exact spherical conversion in f64: `(range, azimuth, elevation)`.
///
/// Azimuth is the angle in the x-y plane (`atan2(y, x)`), elevation the
/// angle above that plane. The origin maps to azimuth 0, elevation 0.
pub fn cart_to_spherical(x: f64, y: f64, z: f64) -> (f64, f64, f64) {
    let range = (x * x + y * y + z * z).sqrt();
    let azimuth = y.atan2(x);
    let elevation = z.atan2((x * x + y * y).sqrt());
    (range, azimuth, elevation)
}

/// Inverse of [`cart_to_spherical`].
pub fn spherical_to_cart(range: f64, azimuth: f64, elevation: f64) -> (f64, f64, f64) {
    let xy = range * elevation.cos();
    (xy * azimuth.cos(), xy * azimuth.sin(), range * elevation.sin())
}

/// Convert every point to spherical coordinates (computed in f64, stored as
/// f32). Doppler and power pass through unchanged.
pub fn to_spherical(cloud: &PointCloud) -> Vec<SphericalPoint> {
    cloud
        .points
        .iter()
        .map(|p| {
            let (range, azimuth, elevation) = cart_to_spherical(p.x as f64, p.y as f64, p.z as f64);
            SphericalPoint {
                range: range as f32,
                azimuth: azimuth as f32,
                elevation: elevation as f32,
                doppler: p.doppler,
                power: p.power,
            }
        })
        .collect()
}

/// Inside/outside tally for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct InOut {
    pub inside: usize,
    pub outside: usize,
}

impl InOut {
    fn record(&mut self, inside: bool) {
        if inside {
            self.inside += 1;
        } else {
            self.outside += 1;
        }
    }
}

/// Field-of-view coverage report for one cloud.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize)]
pub struct ValidationReport {
    pub total: usize,
    /// Per-axis tallies, indexed like [`Axis::ALL`].
    pub per_axis: [InOut; 4],
    /// Per-view tallies, indexed like [`ViewId::ALL`]; a point is inside a
    /// view when both of its axes are inside their intervals.
    pub per_view: [InOut; 5],
    /// Points whose power is outside the expected sensor range.
    pub power_out_of_range: usize,
}

impl ValidationReport {
    pub fn axis(&self, axis: Axis) -> InOut {
        self.per_axis[Axis::ALL.iter().position(|&a| a == axis).unwrap()]
    }

    pub fn view(&self, view: ViewId) -> InOut {
        self.per_view[view.index()]
    }
}

/// Count how many points fall inside each axis interval and each view.
pub fn validate_cloud(points: &[SphericalPoint], fov: &FovConfig) -> ValidationReport {
    let mut report = ValidationReport {
        total: points.len(),
        ..Default::default()
    };
    for p in points {
        let mut axis_inside = [false; 4];
        for (i, axis) in Axis::ALL.into_iter().enumerate() {
            axis_inside[i] = fov.interval(axis).contains(p.axis_value(axis));
            report.per_axis[i].record(axis_inside[i]);
        }
        let inside = |axis: Axis| axis_inside[Axis::ALL.iter().position(|&a| a == axis).unwrap()];
        for (i, view) in ViewId::ALL.into_iter().enumerate() {
            report.per_view[i].record(inside(view.vertical_axis()) && inside(view.horizontal_axis()));
        }
        if !(POWER_LO..=POWER_HI).contains(&p.power) {
            report.power_out_of_range += 1;
        }
    }
    report
}
