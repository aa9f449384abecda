//! Shared configuration vocabulary: measurement axes, field-of-view
//! intervals and heatmap bin counts.
//!
//! All angles are radians, ranges are meters, Doppler velocities are
//! meters per second. Intervals are half-open `[lo, hi)`: a value equal to
//! `hi` falls outside.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the four measured quantities a heatmap axis can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Elevation,
    Azimuth,
    Range,
    Doppler,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Elevation => "elevation",
            Axis::Azimuth => "azimuth",
            Axis::Range => "range",
            Axis::Doppler => "doppler",
        }
    }

    pub const ALL: [Axis; 4] = [Axis::Elevation, Axis::Azimuth, Axis::Range, Axis::Doppler];
}

/// One of the five heatmap views. The first letter names the vertical
/// (row) axis, the second the horizontal (column) axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewId {
    /// Elevation x azimuth. The only annotated view; masks live here.
    Ea,
    /// Elevation x range.
    Er,
    /// Elevation x doppler.
    Ed,
    /// Range x azimuth.
    Ra,
    /// Doppler x azimuth.
    Da,
}

impl ViewId {
    /// Fixed view order used everywhere (file layout, channel concatenation).
    pub const ALL: [ViewId; 5] = [ViewId::Ea, ViewId::Er, ViewId::Ed, ViewId::Ra, ViewId::Da];

    pub fn vertical_axis(self) -> Axis {
        match self {
            ViewId::Ea | ViewId::Er | ViewId::Ed => Axis::Elevation,
            ViewId::Ra => Axis::Range,
            ViewId::Da => Axis::Doppler,
        }
    }

    pub fn horizontal_axis(self) -> Axis {
        match self {
            ViewId::Ea | ViewId::Ra | ViewId::Da => Axis::Azimuth,
            ViewId::Er => Axis::Range,
            ViewId::Ed => Axis::Doppler,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewId::Ea => "ea",
            ViewId::Er => "er",
            ViewId::Ed => "ed",
            ViewId::Ra => "ra",
            ViewId::Da => "da",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ViewId::Ea => 0,
            ViewId::Er => 1,
            ViewId::Ed => 2,
            ViewId::Ra => 3,
            ViewId::Da => 4,
        }
    }
}

/// One value per view, serialized with the view names as keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerView<T> {
    pub ea: T,
    pub er: T,
    pub ed: T,
    pub ra: T,
    pub da: T,
}

impl<T> PerView<T> {
    pub fn from_fn(mut f: impl FnMut(ViewId) -> T) -> Self {
        PerView {
            ea: f(ViewId::Ea),
            er: f(ViewId::Er),
            ed: f(ViewId::Ed),
            ra: f(ViewId::Ra),
            da: f(ViewId::Da),
        }
    }

    pub fn get(&self, view: ViewId) -> &T {
        match view {
            ViewId::Ea => &self.ea,
            ViewId::Er => &self.er,
            ViewId::Ed => &self.ed,
            ViewId::Ra => &self.ra,
            ViewId::Da => &self.da,
        }
    }

    pub fn get_mut(&mut self, view: ViewId) -> &mut T {
        match view {
            ViewId::Ea => &mut self.ea,
            ViewId::Er => &mut self.er,
            ViewId::Ed => &mut self.ed,
            ViewId::Ra => &mut self.ra,
            ViewId::Da => &mut self.da,
        }
    }
}

/// Half-open value interval `[lo, hi)` on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisInterval {
    pub lo: f32,
    pub hi: f32,
}

impl AxisInterval {
    pub fn new(lo: f32, hi: f32) -> Self {
        AxisInterval { lo, hi }
    }

    pub fn contains(&self, v: f32) -> bool {
        v >= self.lo && v < self.hi
    }

    pub fn width(&self) -> f32 {
        self.hi - self.lo
    }

    pub fn validate(&self, axis: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "{axis} interval must be finite with lo < hi, got [{}, {})",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Field of view: per-axis half-open intervals outside of which points are
/// discarded during rasterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FovConfig {
    pub azimuth_rad: AxisInterval,
    pub elevation_rad: AxisInterval,
    pub range_m: AxisInterval,
    pub doppler_mps: AxisInterval,
}

impl Default for FovConfig {
    fn default() -> Self {
        FovConfig {
            azimuth_rad: AxisInterval::new(-60f32.to_radians(), 60f32.to_radians()),
            elevation_rad: AxisInterval::new(-20f32.to_radians(), 20f32.to_radians()),
            range_m: AxisInterval::new(0.0, 42.0),
            doppler_mps: AxisInterval::new(-16.0, 16.0),
        }
    }
}

impl FovConfig {
    pub fn interval(&self, axis: Axis) -> AxisInterval {
        match axis {
            Axis::Elevation => self.elevation_rad,
            Axis::Azimuth => self.azimuth_rad,
            Axis::Range => self.range_m,
            Axis::Doppler => self.doppler_mps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.azimuth_rad.validate("azimuth")?;
        self.elevation_rad.validate("elevation")?;
        self.range_m.validate("range")?;
        self.doppler_mps.validate("doppler")?;
        Ok(())
    }
}

/// Heatmap bin counts.
///
/// Range and Doppler axes rasterize directly at their final resolution.
/// The angular axes rasterize on a coarse grid matching the sensor's
/// angular resolution and are then upsampled by linear interpolation to
/// their final bin count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinConfig {
    pub elevation: usize,
    pub azimuth: usize,
    pub range: usize,
    pub doppler: usize,
    pub coarse_elevation: usize,
    pub coarse_azimuth: usize,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            elevation: 128,
            azimuth: 128,
            range: 256,
            doppler: 256,
            coarse_elevation: 28,
            coarse_azimuth: 44,
        }
    }
}

impl BinConfig {
    /// Bin count an axis is rasterized at (coarse for angles).
    pub fn raster_bins(&self, axis: Axis) -> usize {
        match axis {
            Axis::Elevation => self.coarse_elevation,
            Axis::Azimuth => self.coarse_azimuth,
            Axis::Range => self.range,
            Axis::Doppler => self.doppler,
        }
    }

    /// Final bin count of an axis in emitted heatmaps.
    pub fn final_bins(&self, axis: Axis) -> usize {
        match axis {
            Axis::Elevation => self.elevation,
            Axis::Azimuth => self.azimuth,
            Axis::Range => self.range,
            Axis::Doppler => self.doppler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("elevation", self.elevation),
            ("azimuth", self.azimuth),
            ("range", self.range),
            ("doppler", self.doppler),
            ("coarse_elevation", self.coarse_elevation),
            ("coarse_azimuth", self.coarse_azimuth),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} bin count must be > 0")));
            }
        }
        if self.coarse_elevation > self.elevation || self.coarse_azimuth > self.azimuth {
            return Err(Error::Config(
                "coarse angular bins must not exceed final bins".into(),
            ));
        }
        // Upsampling from a single bin has no defined endpoints.
        if self.coarse_elevation == 1 && self.elevation > 1 {
            return Err(Error::Config("cannot upsample elevation from 1 bin".into()));
        }
        if self.coarse_azimuth == 1 && self.azimuth > 1 {
            return Err(Error::Config("cannot upsample azimuth from 1 bin".into()));
        }
        Ok(())
    }
}

/// Power value range the sensor is expected to report. Values outside are
/// accepted but flagged as warnings.
pub const POWER_LO: f32 = 63.0;
pub const POWER_HI: f32 = 132.6;

/// Offset subtracted from raw power when filling heatmap cells, so that the
/// weakest expected return maps to 1.0 and empty cells (0.0) stay distinct.
pub const POWER_SHIFT: f32 = 62.0;

fn default_pairing_threshold_ms() -> f64 {
    100.0
}

/// How sequences are apportioned into train/val/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fractions for train/val/test; must be non-negative and sum to 1.
    pub ratios: [f64; 3],
    /// Seed for the sequence shuffle that precedes apportionment.
    pub seed: u64,
    /// When set, sequences with fewer frames than this in which no mask ever
    /// contains a person pixel are left out of the compiled dataset.
    pub exclude_empty_shorter_than: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.70, 0.15, 0.15],
            seed: 0,
            exclude_empty_shorter_than: None,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!(
                "split ratios must be finite and non-negative, got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1, got {:?} (sum {sum})",
                self.ratios
            )));
        }
        Ok(())
    }
}

/// Parameters of the synthetic scene generator: a handful of walking people
/// (drifting Gaussian clusters with radial-velocity doppler) over uniform
/// low-power clutter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    /// Total frames generated, split into sequences of `frames_per_sequence`.
    pub frames: usize,
    pub frames_per_sequence: usize,
    pub persons_min: usize,
    pub persons_max: usize,
    pub points_per_person: usize,
    /// Cluster spread (1 sigma) in each spherical coordinate.
    pub sigma_azimuth_rad: f32,
    pub sigma_elevation_rad: f32,
    pub sigma_range_m: f32,
    /// Max radial walking speed; also the main doppler magnitude.
    pub walk_speed_max_mps: f32,
    /// Per-point doppler noise (1 sigma) around the cluster's radial speed.
    pub doppler_jitter_mps: f32,
    /// Per-person base reflected power is drawn from this range.
    pub person_power_lo: f32,
    pub person_power_hi: f32,
    pub clutter_points: usize,
    pub clutter_power_lo: f32,
    pub clutter_power_hi: f32,
    /// Spacing between consecutive frame timestamps.
    pub frame_interval_ns: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            frames: 200,
            frames_per_sequence: 25,
            persons_min: 1,
            persons_max: 3,
            points_per_person: 60,
            sigma_azimuth_rad: 0.030,
            sigma_elevation_rad: 0.045,
            sigma_range_m: 0.30,
            walk_speed_max_mps: 1.4,
            doppler_jitter_mps: 0.2,
            person_power_lo: 88.0,
            person_power_hi: 118.0,
            clutter_points: 35,
            clutter_power_lo: 63.0,
            clutter_power_hi: 76.0,
            frame_interval_ns: 100_000_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, fov: &FovConfig) -> Result<()> {
        if self.frames == 0 || self.frames_per_sequence == 0 {
            return Err(Error::Config(
                "synth frames and frames_per_sequence must be positive".into(),
            ));
        }
        if self.persons_min > self.persons_max {
            return Err(Error::Config(format!(
                "persons_min ({}) exceeds persons_max ({})",
                self.persons_min, self.persons_max
            )));
        }
        if self.persons_max > 0 && self.points_per_person == 0 {
            return Err(Error::Config(
                "points_per_person must be positive when persons are generated".into(),
            ));
        }
        for (name, v) in [
            ("sigma_azimuth_rad", self.sigma_azimuth_rad),
            ("sigma_elevation_rad", self.sigma_elevation_rad),
            ("sigma_range_m", self.sigma_range_m),
            ("walk_speed_max_mps", self.walk_speed_max_mps),
            ("doppler_jitter_mps", self.doppler_jitter_mps),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "synth {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(self.person_power_lo.is_finite() && self.person_power_hi.is_finite())
            || self.person_power_lo > self.person_power_hi
            || !(self.clutter_power_lo.is_finite() && self.clutter_power_hi.is_finite())
            || self.clutter_power_lo > self.clutter_power_hi
        {
            return Err(Error::Config("synth power ranges must be ordered".into()));
        }
        if self.walk_speed_max_mps >= fov.doppler_mps.hi.abs().min(fov.doppler_mps.lo.abs()) {
            return Err(Error::Config(format!(
                "walk_speed_max_mps ({}) must stay inside the doppler interval {:?}",
                self.walk_speed_max_mps, fov.doppler_mps
            )));
        }
        if self.frame_interval_ns == 0 {
            return Err(Error::Config("frame_interval_ns must be positive".into()));
        }
        Ok(())
    }

    /// Number of sequences the frame budget splits into (last may be short).
    pub fn sequence_count(&self) -> usize {
        self.frames.div_ceil(self.frames_per_sequence)
    }
}

/// Everything needed to build and read a compiled dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub fov: FovConfig,
    pub bins: BinConfig,
    /// Max |cloud time - annotation time| for a pair to count, in ms.
    pub pairing_threshold_ms: f64,
    pub split: SplitConfig,
    /// Present for synthetic datasets; absent when compiled from raw capture.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            fov: FovConfig::default(),
            bins: BinConfig::default(),
            pairing_threshold_ms: default_pairing_threshold_ms(),
            split: SplitConfig::default(),
            synth: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.fov.validate()?;
        self.bins.validate()?;
        if !self.pairing_threshold_ms.is_finite() || self.pairing_threshold_ms < 0.0 {
            return Err(Error::Config(format!(
                "pairing_threshold_ms must be finite and non-negative, got {}",
                self.pairing_threshold_ms
            )));
        }
        self.split.validate()?;
        if let Some(synth) = &self.synth {
            synth.validate(&self.fov)?;
        }
        Ok(())
    }

    /// The generator settings to use for `synth`, falling back to defaults.
    pub fn synth_or_default(&self) -> SynthConfig {
        self.synth.clone().unwrap_or_default()
    }

    pub fn pairing_threshold_ns(&self) -> u64 {
        (self.pairing_threshold_ms * 1e6).round() as u64
    }
}
