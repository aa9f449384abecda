//! Training-time augmentation: axis flips applied consistently across all
//! views of a window.
//!
//! A physical axis is flipped everywhere it appears. The azimuth axis is the
//! column axis of the elevation–azimuth, range–azimuth, and Doppler–azimuth
//! planes, and of the mask; the elevation axis is the row axis of the
//! elevation–azimuth, elevation–range, and elevation–Doppler planes, and of
//! the mask. Range and Doppler axes are never flipped. Each flip is an
//! involution, and the two flips commute.

use rand::Rng;

use crate::config::ViewId;
use crate::dataset::WindowSample;

/// Views whose column axis is azimuth.
const AZIMUTH_COLS: [ViewId; 3] = [ViewId::Ea, ViewId::Ra, ViewId::Da];
/// Views whose row axis is elevation.
const ELEVATION_ROWS: [ViewId; 3] = [ViewId::Ea, ViewId::Er, ViewId::Ed];

/// Mirror the azimuth axis across every plane it appears in, mask included.
pub fn flip_azimuth(sample: &mut WindowSample) {
    for view in AZIMUTH_COLS {
        for grid in sample.views.get_mut(view) {
            grid.flip_cols();
        }
    }
    sample.mask.flip_cols();
}

/// Mirror the elevation axis across every plane it appears in, mask included.
pub fn flip_elevation(sample: &mut WindowSample) {
    for view in ELEVATION_ROWS {
        for grid in sample.views.get_mut(view) {
            grid.flip_rows();
        }
    }
    sample.mask.flip_rows();
}

/// Independently flip azimuth then elevation, each with probability 1/2.
/// Returns which flips were applied.
pub fn random_flips(sample: &mut WindowSample, rng: &mut impl Rng) -> (bool, bool) {
    let azimuth = rng.random::<bool>();
    let elevation = rng.random::<bool>();
    if azimuth {
        flip_azimuth(sample);
    }
    if elevation {
        flip_elevation(sample);
    }
    (azimuth, elevation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PerView;
    use crate::grid::{Grid, Mask};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A window whose grids each carry one sentinel at (0, 0) so flips are
    /// observable, with distinct per-view base values.
    fn sentinel_window() -> WindowSample {
        let views = PerView::from_fn(|view| {
            let (rows, cols) = match view {
                ViewId::Ea => (4, 6),
                ViewId::Er | ViewId::Ed => (4, 5),
                ViewId::Ra | ViewId::Da => (3, 6),
            };
            (0..2)
                .map(|frame| {
                    let mut g = Grid::zeros(rows, cols);
                    *g.at_mut(0, 0) = 1.0 + frame as f32 + view.index() as f32 * 10.0;
                    g
                })
                .collect::<Vec<_>>()
        });
        let mut mask = Mask::zeros(4, 6);
        mask.set(0, 0, 1);
        WindowSample {
            frame_id: "sentinel".to_string(),
            views,
            mask,
        }
    }

    #[test]
    fn azimuth_flip_moves_columns_of_azimuth_views_only() {
        let original = sentinel_window();
        let mut sample = sentinel_window();
        flip_azimuth(&mut sample);

        // Azimuth-column planes: sentinel moved from (0,0) to (0, last col).
        for view in AZIMUTH_COLS {
            let flipped = &sample.views.get(view)[0];
            let source = &original.views.get(view)[0];
            assert_eq!(flipped.at(0, flipped.cols() - 1), source.at(0, 0));
            assert_eq!(flipped.at(0, 0), 0.0);
        }
        assert_eq!(sample.mask.at(0, 5), 1);
        assert_eq!(sample.mask.at(0, 0), 0);

        // Planes without an azimuth axis are untouched.
        for view in [ViewId::Er, ViewId::Ed] {
            assert_eq!(sample.views.get(view), original.views.get(view));
        }
    }

    #[test]
    fn elevation_flip_moves_rows_of_elevation_views_only() {
        let original = sentinel_window();
        let mut sample = sentinel_window();
        flip_elevation(&mut sample);

        for view in ELEVATION_ROWS {
            let flipped = &sample.views.get(view)[0];
            let source = &original.views.get(view)[0];
            assert_eq!(flipped.at(flipped.rows() - 1, 0), source.at(0, 0));
            assert_eq!(flipped.at(0, 0), 0.0);
        }
        assert_eq!(sample.mask.at(3, 0), 1);

        for view in [ViewId::Ra, ViewId::Da] {
            assert_eq!(sample.views.get(view), original.views.get(view));
        }
    }

    #[test]
    fn flips_are_involutions_and_commute() {
        let original = sentinel_window();

        let mut twice = sentinel_window();
        flip_azimuth(&mut twice);
        flip_azimuth(&mut twice);
        assert_eq!(twice.views.get(ViewId::Ea), original.views.get(ViewId::Ea));
        assert_eq!(twice.mask, original.mask);

        let mut twice = sentinel_window();
        flip_elevation(&mut twice);
        flip_elevation(&mut twice);
        assert_eq!(twice.views.get(ViewId::Ea), original.views.get(ViewId::Ea));
        assert_eq!(twice.mask, original.mask);

        let mut az_first = sentinel_window();
        flip_azimuth(&mut az_first);
        flip_elevation(&mut az_first);
        let mut el_first = sentinel_window();
        flip_elevation(&mut el_first);
        flip_azimuth(&mut el_first);
        for view in ViewId::ALL {
            assert_eq!(az_first.views.get(view), el_first.views.get(view));
        }
        assert_eq!(az_first.mask, el_first.mask);
    }

    #[test]
    fn every_frame_of_the_window_is_flipped() {
        let mut sample = sentinel_window();
        flip_azimuth(&mut sample);
        for frame in 0..2 {
            let g = &sample.views.get(ViewId::Ea)[frame];
            assert_eq!(g.at(0, g.cols() - 1), 1.0 + frame as f32);
        }
    }

    #[test]
    fn random_flips_are_seeded_and_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sample = sentinel_window();
        let applied = random_flips(&mut sample, &mut rng);

        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        let mut sample2 = sentinel_window();
        let applied2 = random_flips(&mut sample2, &mut rng2);

        assert_eq!(applied, applied2);
        assert_eq!(sample.mask, sample2.mask);
        assert_eq!(sample.views.get(ViewId::Ea), sample2.views.get(ViewId::Ea));

        // Over many draws both flips occur and both abstain.
        let mut seen = [false; 4];
        for _ in 0..64 {
            let mut s = sentinel_window();
            let (az, el) = random_flips(&mut s, &mut rng);
            seen[usize::from(az) * 2 + usize::from(el)] = true;
        }
        assert_eq!(seen, [true; 4]);
    }
}
