//! Dense row-major f32 matrix used for heatmaps and other 2D buffers.

/// Reverse row order in a row-major buffer (vertical flip).
fn reverse_row_order<T>(data: &mut [T], rows: usize, cols: usize) {
    for r in 0..rows / 2 {
        let (head, tail) = data.split_at_mut((rows - 1 - r) * cols);
        head[r * cols..(r + 1) * cols].swap_with_slice(&mut tail[..cols]);
    }
}

/// Reverse each row in place (horizontal flip).
fn reverse_within_rows<T>(data: &mut [T], cols: usize) {
    for row in data.chunks_mut(cols) {
        row.reverse();
    }
}

/// Row-major 2D array of f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a row-major buffer. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "grid data length mismatch");
        Grid { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f32 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn min_max(&self) -> Option<(f32, f32)> {
        if self.data.is_empty() {
            return None;
        }
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Some((lo, hi))
    }

    /// Reverse the row order (flip along the vertical axis).
    pub fn flip_rows(&mut self) {
        reverse_row_order(&mut self.data, self.rows, self.cols);
    }

    /// Reverse every row (flip along the horizontal axis).
    pub fn flip_cols(&mut self) {
        reverse_within_rows(&mut self.data, self.cols);
    }
}

/// Binary per-pixel mask (0 = background, 1 = person), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mask {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Build from a row-major buffer of 0/1 values. Panics on bad length or
    /// values outside {0, 1}.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), rows * cols, "mask data length mismatch");
        assert!(data.iter().all(|&v| v <= 1), "mask values must be 0 or 1");
        Mask { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> u8 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        debug_assert!(r < self.rows && c < self.cols && v <= 1);
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn person_pixels(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn pixels(&self) -> usize {
        self.data.len()
    }

    /// Reverse the row order (flip along the vertical axis).
    pub fn flip_rows(&mut self) {
        reverse_row_order(&mut self.data, self.rows, self.cols);
    }

    /// Reverse every row (flip along the horizontal axis).
    pub fn flip_cols(&mut self) {
        reverse_within_rows(&mut self.data, self.cols);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let g = Grid::from_vec(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(g.at(0, 2), 2.0);
        assert_eq!(g.at(1, 0), 3.0);
        assert_eq!(g.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(g.min_max(), Some((0.0, 5.0)));
    }

    #[test]
    fn mask_counts_person_pixels() {
        let mut m = Mask::zeros(2, 2);
        assert_eq!(m.person_pixels(), 0);
        m.set(0, 1, 1);
        m.set(1, 1, 1);
        assert_eq!(m.person_pixels(), 2);
        assert_eq!(m.pixels(), 4);
        assert_eq!(m.at(0, 1), 1);
        assert_eq!(m.at(0, 0), 0);
        let same = Mask::from_vec(2, 2, vec![0, 1, 0, 1]);
        assert_eq!(m, same);
    }

    #[test]
    #[should_panic(expected = "mask values")]
    fn mask_rejects_nonbinary_values() {
        let _ = Mask::from_vec(1, 2, vec![0, 7]);
    }

    #[test]
    fn flips_move_sentinels_and_are_involutions() {
        let original = Grid::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let mut g = original.clone();
        g.flip_rows();
        assert_eq!(g.data(), &[5.0, 6.0, 3.0, 4.0, 1.0, 2.0]);
        g.flip_rows();
        assert_eq!(g, original);

        let mut g = original.clone();
        g.flip_cols();
        assert_eq!(g.data(), &[2.0, 1.0, 4.0, 3.0, 6.0, 5.0]);
        g.flip_cols();
        assert_eq!(g, original);

        // Row and column flips commute.
        let mut rc = original.clone();
        rc.flip_rows();
        rc.flip_cols();
        let mut cr = original.clone();
        cr.flip_cols();
        cr.flip_rows();
        assert_eq!(rc, cr);
    }
}
