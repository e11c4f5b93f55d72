use super::corners::Corner;
use super::flow::{lk_track, LkParams};
use crate::error::Result;
use crate::imaging::{DepthMap, ImagePyramid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Alive,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    base_pos: (f64, f64),
    pub cur_pos: (f64, f64),
    pub status: TrackStatus,
    /// Depth at `base_pos` in the base frame, cached at creation.
    pub base_depth: f64,
}

impl Track {
    pub fn base_pos(&self) -> (f64, f64) {
        self.base_pos
    }

    pub fn is_alive(&self) -> bool {
        self.status == TrackStatus::Alive
    }
}

/// Feature tracks anchored in the base frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackSet {
    tracks: Vec<Track>,
}

impl TrackSet {
    /// Starts one track per corner. Corners over a depth hole start lost.
    pub fn from_corners(corners: &[Corner], base_depth: &DepthMap) -> Self {
        let tracks = corners
            .iter()
            .enumerate()
            .map(|(id, c)| {
                let depth = base_depth.sample(c.u, c.v);
                Track {
                    id,
                    base_pos: (c.u, c.v),
                    cur_pos: (c.u, c.v),
                    status: if depth.is_some() {
                        TrackStatus::Alive
                    } else {
                        TrackStatus::Lost
                    },
                    base_depth: depth.unwrap_or(f64::NAN),
                }
            })
            .collect();
        Self { tracks }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn alive(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_alive())
    }

    pub fn alive_count(&self) -> usize {
        self.alive().count()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

/// Moves every alive track from `prev` into `next`.
///
/// Tracks are lost on tracking failure or when `depth_next` has a hole at the
/// new position. Lost tracks stay lost.
pub fn advance_tracks(
    mut tracks: TrackSet,
    prev: &ImagePyramid,
    next: &ImagePyramid,
    depth_next: &DepthMap,
    params: &LkParams,
) -> Result<TrackSet> {
    let alive: Vec<usize> = (0..tracks.tracks.len())
        .filter(|&i| tracks.tracks[i].is_alive())
        .collect();
    let points: Vec<_> = alive.iter().map(|&i| tracks.tracks[i].cur_pos).collect();
    let flows = lk_track(prev, next, &points, params)?;
    for (&i, flow) in alive.iter().zip(flows) {
        let track = &mut tracks.tracks[i];
        if flow.alive && depth_next.nearest(flow.u, flow.v).is_some() {
            track.cur_pos = (flow.u, flow.v);
        } else {
            track.status = TrackStatus::Lost;
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::flow::LK_PYRAMID_LEVELS;
    use crate::features::{detect_corners, CornerParams};
    use crate::imaging::{build_pyramid, GrayImage};

    fn texture(x: f64, y: f64) -> f64 {
        0.5 + 0.2 * (0.29 * x + 0.13 * y).sin() * (0.07 * y).cos()
            + 0.2 * (0.19 * x - 0.37 * y).cos()
    }

    fn frame(shift: (f64, f64)) -> GrayImage {
        GrayImage::from_fn(128, 112, |x, y| {
            texture(x as f64 - shift.0, y as f64 - shift.1)
        })
        .unwrap()
    }

    fn pyr(img: &GrayImage) -> ImagePyramid {
        build_pyramid(img, LK_PYRAMID_LEVELS)
    }

    #[test]
    fn identical_frames_keep_everything() {
        let img = frame((0.0, 0.0));
        let depth = DepthMap::constant(128, 112, 3.0).unwrap();
        let corners = detect_corners(&img, &CornerParams::default()).unwrap();
        let set = TrackSet::from_corners(&corners, &depth);
        let p = pyr(&img);
        let next = advance_tracks(set.clone(), &p, &p, &depth, &LkParams::default()).unwrap();
        assert_eq!(next.alive_count(), set.len());
        for (a, b) in next.tracks().iter().zip(set.tracks()) {
            assert!(
                (a.cur_pos.0 - b.cur_pos.0).abs() < 1e-9
                    && (a.cur_pos.1 - b.cur_pos.1).abs() < 1e-9
            );
            assert_eq!(a.base_pos(), b.base_pos());
        }
    }

    #[test]
    fn depth_hole_loses_the_track() {
        let img = frame((0.0, 0.0));
        let depth = DepthMap::constant(128, 112, 3.0).unwrap();
        let corners = detect_corners(&img, &CornerParams::default()).unwrap();
        let set = TrackSet::from_corners(&corners, &depth);
        let victim = set.tracks()[0].cur_pos;
        let (hx, hy) = (victim.0.round() as usize, victim.1.round() as usize);
        let mut holes = depth.data().to_vec();
        holes[hy * 128 + hx] = f32::NAN;
        let holed = DepthMap::new(128, 112, holes).unwrap();
        let p = pyr(&img);
        let next = advance_tracks(set, &p, &p, &holed, &LkParams::default()).unwrap();
        assert!(!next.tracks()[0].is_alive());
        assert!(next.tracks()[1..].iter().all(Track::is_alive));
    }

    #[test]
    fn chained_translation_accumulates() {
        let shifts = [(0.0, 0.0), (1.5, 0.75), (3.0, 1.5), (4.5, 2.25)];
        let frames: Vec<_> = shifts.iter().map(|&s| frame(s)).collect();
        let depth = DepthMap::constant(128, 112, 3.0).unwrap();
        let corners = detect_corners(&frames[0], &CornerParams::default()).unwrap();
        let mut set = TrackSet::from_corners(&corners, &depth);
        let mut alive_history = vec![set.alive_count()];
        for k in 1..frames.len() {
            set = advance_tracks(
                set,
                &pyr(&frames[k - 1]),
                &pyr(&frames[k]),
                &depth,
                &LkParams::default(),
            )
            .unwrap();
            alive_history.push(set.alive_count());
        }
        assert!(alive_history.windows(2).all(|w| w[1] <= w[0]));
        let (su, sv) = shifts[3];
        let interior: Vec<_> = set
            .alive()
            .filter(|t| {
                t.base_pos().0 > 15.0
                    && t.base_pos().0 < 100.0
                    && t.base_pos().1 > 15.0
                    && t.base_pos().1 < 85.0
            })
            .collect();
        assert!(!interior.is_empty());
        for t in interior {
            let err = (t.cur_pos.0 - t.base_pos().0 - su).hypot(t.cur_pos.1 - t.base_pos().1 - sv);
            assert!(err < 0.3, "track {} drifted {err}", t.id);
        }
    }
}
