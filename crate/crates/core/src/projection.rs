//! Point-cloud-to-heatmap projection.
//!
//! Each frame becomes five 2D power maps. A view's cell holds the maximum
//! return power of the points binned into it, minus a fixed offset so the
//! weakest expected return maps to 1.0; empty cells are exactly 0.0. The
//! angular axes are rasterized at the sensor's coarse resolution and then
//! upsampled with corner-aligned linear interpolation; range and Doppler
//! axes are rasterized directly at full resolution.

use crate::config::{AxisInterval, BinConfig, FovConfig, PerView, ViewId, POWER_SHIFT};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pointcloud::SphericalPoint;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Geometry of one view: the value intervals of its two axes, the grid it
/// is rasterized on and the final grid it is emitted at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpec {
    pub view: ViewId,
    pub row_interval: AxisInterval,
    pub col_interval: AxisInterval,
    /// Rasterization grid (coarse on angular axes).
    pub raster_rows: usize,
    pub raster_cols: usize,
    /// Emitted grid after upsampling.
    pub rows: usize,
    pub cols: usize,
}

/// The five view geometries for a field of view and bin configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewSpecs {
    specs: [ViewSpec; 5],
}

impl ViewSpecs {
    pub fn new(fov: &FovConfig, bins: &BinConfig) -> Result<Self> {
        fov.validate()?;
        bins.validate()?;
        let specs = ViewId::ALL.map(|view| {
            let va = view.vertical_axis();
            let ha = view.horizontal_axis();
            ViewSpec {
                view,
                row_interval: fov.interval(va),
                col_interval: fov.interval(ha),
                raster_rows: bins.raster_bins(va),
                raster_cols: bins.raster_bins(ha),
                rows: bins.final_bins(va),
                cols: bins.final_bins(ha),
            }
        });
        Ok(ViewSpecs { specs })
    }

    pub fn get(&self, view: ViewId) -> &ViewSpec {
        &self.specs[view.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ViewSpec> {
        self.specs.iter()
    }

    /// Dims of the annotated (elevation-azimuth) view; masks share them.
    pub fn mask_dims(&self) -> (usize, usize) {
        let ea = self.get(ViewId::Ea);
        (ea.rows, ea.cols)
    }
}

/// The five heatmaps of one frame, in [`ViewId::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameHeatmaps {
    pub frame_id: String,
    pub views: [Grid; 5],
}

impl FrameHeatmaps {
    pub fn view(&self, view: ViewId) -> &Grid {
        &self.views[view.index()]
    }
}

/// Bin index of `value` on a half-open interval divided into `n_bins` equal
/// cells: `floor((value - lo) / (hi - lo) * n_bins)`. Values outside the
/// interval (including `hi` itself) get `None`.
pub fn bin_index(value: f32, interval: AxisInterval, n_bins: usize) -> Option<usize> {
    if n_bins == 0 || !interval.contains(value) {
        return None;
    }
    let t = (value as f64 - interval.lo as f64) / (interval.hi as f64 - interval.lo as f64);
    // `value < hi` bounds t below 1, but rounding can reach n_bins; clamp.
    Some(((t * n_bins as f64).floor() as usize).min(n_bins - 1))
}

/// Rasterize points onto one view's coarse grid.
///
/// Each cell holds `max(power) - 62.0` over the points that fall into it
/// (so the weakest expected return, 63.0, maps to 1.0); cells with no
/// points are exactly 0.0. Points outside either axis interval are
/// discarded.
pub fn rasterize_view(points: &[SphericalPoint], spec: &ViewSpec) -> Grid {
    let (rows, cols) = (spec.raster_rows, spec.raster_cols);
    let mut max_power = vec![f32::NEG_INFINITY; rows * cols];
    for p in points {
        let r = match bin_index(p.axis_value(spec.view.vertical_axis()), spec.row_interval, rows) {
            Some(r) => r,
            None => continue,
        };
        let c = match bin_index(p.axis_value(spec.view.horizontal_axis()), spec.col_interval, cols) {
            Some(c) => c,
            None => continue,
        };
        let cell = &mut max_power[r * cols + c];
        *cell = cell.max(p.power);
    }
    let data = max_power
        .into_iter()
        .map(|m| if m.is_finite() { m - POWER_SHIFT } else { 0.0 })
        .collect();
    Grid::from_vec(rows, cols, data)
}

/// Resize a grid with separable, corner-aligned linear interpolation.
///
/// Axis endpoints map onto endpoints, so lattice points copy through
/// exactly and constant grids stay bit-identical. Axes whose size does not
/// change are passed through untouched. Upsampling a 1-length axis has no
/// defined endpoints and is an error.
pub fn resize_linear(src: &Grid, new_rows: usize, new_cols: usize) -> Result<Grid> {
    let data = resize_values(src.data(), src.rows(), src.cols(), new_rows, new_cols)?;
    Ok(Grid::from_vec(new_rows, new_cols, data))
}

/// Element-level core of [`resize_linear`], generic over the scalar type so
/// other stages (e.g. feature-map resampling inside the network) interpolate
/// with bit-identical positions and rounding. Inner arithmetic always runs
/// in `f64` before rounding back to `T`, so the `f32` instantiation matches
/// [`resize_linear`] exactly.
pub fn resize_values<T: num_traits::Float>(
    src: &[T],
    src_rows: usize,
    src_cols: usize,
    dst_rows: usize,
    dst_cols: usize,
) -> Result<Vec<T>> {
    assert_eq!(src.len(), src_rows * src_cols, "source length mismatch");
    if dst_rows == 0 || dst_cols == 0 {
        return Err(Error::Config("resize target must be non-empty".into()));
    }
    let rows_done = if dst_rows == src_rows {
        src.to_vec()
    } else {
        resize_axis(src, src_rows, src_cols, dst_rows, Axis2::Rows)?
    };
    if dst_cols == src_cols {
        Ok(rows_done)
    } else {
        resize_axis(&rows_done, dst_rows, src_cols, dst_cols, Axis2::Cols)
    }
}

/// Interpolation source for output index `i` on an axis resized from
/// `src_len` to `dst_len`: base index plus fractional offset into the next
/// cell. Integral positions come back with a zero fraction.
pub(crate) fn interp_positions(src_len: usize, dst_len: usize) -> Vec<(usize, f64)> {
    (0..dst_len)
        .map(|i| {
            let pos = if dst_len == 1 {
                0.0
            } else {
                (i as f64) * (src_len as f64 - 1.0) / (dst_len as f64 - 1.0)
            };
            let mut i0 = pos.floor() as usize;
            let mut f = pos - i0 as f64;
            if i0 >= src_len - 1 {
                i0 = src_len - 1;
                f = 0.0;
            }
            (i0, f)
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Axis2 {
    Rows,
    Cols,
}

fn resize_axis<T: num_traits::Float>(
    src: &[T],
    rows: usize,
    cols: usize,
    new_len: usize,
    axis: Axis2,
) -> Result<Vec<T>> {
    let src_len = match axis {
        Axis2::Rows => rows,
        Axis2::Cols => cols,
    };
    if src_len < 2 {
        return Err(Error::Config(format!(
            "cannot resize axis of length {src_len} to {new_len}: need at least 2 samples"
        )));
    }
    let positions = interp_positions(src_len, new_len);
    match axis {
        Axis2::Rows => {
            let mut out = vec![T::zero(); new_len * cols];
            for (i, &(i0, f)) in positions.iter().enumerate() {
                for c in 0..cols {
                    let a = src[i0 * cols + c];
                    out[i * cols + c] = if f == 0.0 {
                        a
                    } else {
                        lerp_clamped(a, src[(i0 + 1) * cols + c], f)
                    };
                }
            }
            Ok(out)
        }
        Axis2::Cols => {
            let mut out = vec![T::zero(); rows * new_len];
            for r in 0..rows {
                let row = &src[r * cols..(r + 1) * cols];
                for (j, &(j0, f)) in positions.iter().enumerate() {
                    let a = row[j0];
                    out[r * new_len + j] = if f == 0.0 {
                        a
                    } else {
                        lerp_clamped(a, row[j0 + 1], f)
                    };
                }
            }
            Ok(out)
        }
    }
}

/// Linear blend `a + f*(b - a)` in f64, clamped so rounding never overshoots
/// the segment endpoints (keeps monotone data monotone), rounded back to `T`.
fn lerp_clamped<T: num_traits::Float>(a: T, b: T, f: f64) -> T {
    let (af, bf) = (a.to_f64().unwrap(), b.to_f64().unwrap());
    T::from((af + f * (bf - af)).clamp(af.min(bf), af.max(bf))).unwrap()
}

/// Project one frame: rasterize all five views on their coarse grids and
/// upsample the angular axes to the final resolution.
pub fn project_frame(points: &[SphericalPoint], specs: &ViewSpecs) -> Result<FrameHeatmaps> {
    let mut views = Vec::with_capacity(5);
    for spec in specs.iter() {
        let coarse = rasterize_view(points, spec);
        views.push(resize_linear(&coarse, spec.rows, spec.cols)?);
    }
    Ok(FrameHeatmaps {
        frame_id: String::new(),
        views: views.try_into().expect("five views"),
    })
}

/// Project a batch of frames. Runs on rayon when the `parallel` feature is
/// enabled; results are identical to [`project_frames_seq`] either way.
pub fn project_frames(frames: &[Vec<SphericalPoint>], specs: &ViewSpecs) -> Result<Vec<FrameHeatmaps>> {
    #[cfg(feature = "parallel")]
    {
        frames
            .par_iter()
            .map(|points| project_frame(points, specs))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        project_frames_seq(frames, specs)
    }
}

/// Sequential batch projection; always available for comparison.
pub fn project_frames_seq(
    frames: &[Vec<SphericalPoint>],
    specs: &ViewSpecs,
) -> Result<Vec<FrameHeatmaps>> {
    frames.iter().map(|points| project_frame(points, specs)).collect()
}

/// Per-view value range observed over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MinMax {
    pub min: f32,
    pub max: f32,
}

/// Per-view normalization statistics: global min and max of every heatmap
/// cell across the whole dataset.
pub type NormStats = PerView<MinMax>;

/// Streaming accumulator for [`NormStats`]; mergeable so scans can be
/// sharded.
#[derive(Debug, Clone, Copy)]
pub struct StatsAccumulator {
    mins: [f32; 5],
    maxs: [f32; 5],
    frames: usize,
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        StatsAccumulator {
            mins: [f32::INFINITY; 5],
            maxs: [f32::NEG_INFINITY; 5],
            frames: 0,
        }
    }
}

impl StatsAccumulator {
    pub fn observe(&mut self, frame: &FrameHeatmaps) {
        for (i, grid) in frame.views.iter().enumerate() {
            if let Some((lo, hi)) = grid.min_max() {
                self.mins[i] = self.mins[i].min(lo);
                self.maxs[i] = self.maxs[i].max(hi);
            }
        }
        self.frames += 1;
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        for i in 0..5 {
            self.mins[i] = self.mins[i].min(other.mins[i]);
            self.maxs[i] = self.maxs[i].max(other.maxs[i]);
        }
        self.frames += other.frames;
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn finish(&self) -> Result<NormStats> {
        if self.frames == 0 {
            return Err(Error::Dataset("cannot compute stats over zero frames".into()));
        }
        Ok(PerView::from_fn(|v| MinMax {
            min: self.mins[v.index()],
            max: self.maxs[v.index()],
        }))
    }
}

/// Global per-view min/max over a set of frames.
pub fn compute_global_stats(frames: &[FrameHeatmaps]) -> Result<NormStats> {
    let mut acc = StatsAccumulator::default();
    for f in frames {
        acc.observe(f);
    }
    acc.finish()
}

/// Min-max normalize one grid: `(x - min) / (max - min)`. A view whose
/// observed range is degenerate (max == min) normalizes to all zeros.
pub fn normalize(grid: &Grid, mm: MinMax) -> Grid {
    let span = mm.max - mm.min;
    let data = if span == 0.0 {
        vec![0.0; grid.rows() * grid.cols()]
    } else {
        grid.data().iter().map(|&x| (x - mm.min) / span).collect()
    };
    Grid::from_vec(grid.rows(), grid.cols(), data)
}

/// Normalize all five views of a frame with their dataset statistics.
pub fn normalize_frame(frame: &FrameHeatmaps, stats: &NormStats) -> FrameHeatmaps {
    FrameHeatmaps {
        frame_id: frame.frame_id.clone(),
        views: ViewId::ALL.map(|v| normalize(frame.view(v), *stats.get(v))),
    }
}
