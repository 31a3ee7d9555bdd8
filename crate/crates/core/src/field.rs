//! Field geometry: furrows, split line, collection stations, and the
//! two-segment (headland + furrow) paths every travel-time computation uses.
//!
//! Coordinates: `x` runs across the furrows, `y` runs along a furrow with
//! `y = 0` at the headland where the collection stations sit. A robot or a
//! walking picker moving between a station and an in-field point follows a
//! straight segment on the headland and a straight segment inside the target
//! furrow, so the path length is the Manhattan distance between the points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in field coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    /// Cross-furrow axis.
    pub x: f64,
    /// Along-furrow axis, 0 at the headland.
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Travel speeds on the two path segments (m/s). A single constant robot
/// speed is the special case `headland_speed == furrow_speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub headland_speed: f64,
    pub furrow_speed: f64,
}

impl SpeedProfile {
    pub fn uniform(speed: f64) -> Self {
        Self {
            headland_speed: speed,
            furrow_speed: speed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.headland_speed <= 0.0 || self.furrow_speed <= 0.0 {
            return Err(Error::Field(format!(
                "speeds must be strictly positive, got ({}, {})",
                self.headland_speed, self.furrow_speed
            )));
        }
        Ok(())
    }
}

/// Geometry of one harvesting block: parallel furrows, the split line that
/// bounds the picked section, and the collection stations on the headland.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMap {
    pub furrow_count: usize,
    /// Full furrow length (meters); picking happens on `y in [0, split_line_y]`.
    pub furrow_length: f64,
    /// Center-to-center furrow pitch (meters).
    pub bed_spacing: f64,
    /// Distance from headland to the field split line (meters).
    pub split_line_y: f64,
    /// Station positions; all must lie on the headland (`y = 0`).
    pub station_positions: Vec<Point>,
    pub active_station_index: usize,
}

impl FieldMap {
    pub fn validate(&self) -> Result<()> {
        if self.furrow_count < 1 {
            return Err(Error::Field("furrow_count must be >= 1".into()));
        }
        if self.furrow_length <= 0.0 || self.bed_spacing <= 0.0 {
            return Err(Error::Field(
                "furrow_length and bed_spacing must be > 0".into(),
            ));
        }
        if !(self.split_line_y > 0.0 && self.split_line_y <= self.furrow_length) {
            return Err(Error::Field(format!(
                "split_line_y must lie in (0, furrow_length], got {}",
                self.split_line_y
            )));
        }
        if self.station_positions.is_empty() {
            return Err(Error::Field("at least one collection station required".into()));
        }
        for (i, s) in self.station_positions.iter().enumerate() {
            if s.y != 0.0 {
                return Err(Error::Field(format!(
                    "station {i} must lie on the headland (y = 0), got y = {}",
                    s.y
                )));
            }
            if s.x < 0.0 || s.x > self.width() {
                return Err(Error::Field(format!(
                    "station {i} at x = {} outside field extent [0, {}]",
                    s.x,
                    self.width()
                )));
            }
        }
        if self.active_station_index >= self.station_positions.len() {
            return Err(Error::Field(format!(
                "active_station_index {} out of range",
                self.active_station_index
            )));
        }
        Ok(())
    }

    /// Field extent along `x`.
    pub fn width(&self) -> f64 {
        self.furrow_count as f64 * self.bed_spacing
    }

    /// `x` coordinate of a furrow (center of its pitch).
    pub fn furrow_x(&self, furrow: usize) -> f64 {
        (furrow as f64 + 0.5) * self.bed_spacing
    }

    pub fn active_station(&self) -> Point {
        self.station_positions[self.active_station_index]
    }

    fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width() && p.y >= 0.0 && p.y <= self.furrow_length
    }
}

/// Headland and furrow legs of the two-segment path from a headland point to
/// an in-field point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLegs {
    pub headland: f64,
    pub furrow: f64,
}

impl PathLegs {
    pub fn total(&self) -> f64 {
        self.headland + self.furrow
    }
}

/// Decomposes the path from headland point `a` to in-field point `b` into its
/// headland and furrow legs. Errors if either point is outside the field.
pub fn path_legs(a: Point, b: Point, field: &FieldMap) -> Result<PathLegs> {
    if a.y != 0.0 {
        return Err(Error::Field(format!(
            "path origin must lie on the headland (y = 0), got y = {}",
            a.y
        )));
    }
    if !field.contains(a) || !field.contains(b) {
        return Err(Error::Field(format!(
            "point outside field extent: ({}, {}) -> ({}, {})",
            a.x, a.y, b.x, b.y
        )));
    }
    Ok(PathLegs {
        headland: (a.x - b.x).abs(),
        furrow: b.y,
    })
}

/// Manhattan distance from a headland point to an in-field point along the
/// two-segment path (same length in both directions).
pub fn manhattan_distance(a: Point, b: Point, field: &FieldMap) -> Result<f64> {
    path_legs(a, b, field).map(|legs| legs.total())
}

/// One-way travel time over the given headland and furrow distances.
/// With equal speeds this reduces to `total_distance / speed`.
pub fn one_way_travel_time(d_headland: f64, d_furrow: f64, profile: SpeedProfile) -> f64 {
    debug_assert!(d_headland >= 0.0 && d_furrow >= 0.0);
    d_headland / profile.headland_speed + d_furrow / profile.furrow_speed
}

/// Picks the next furrow for a picker: the unharvested furrow closest in `x`
/// to the picker's current furrow, ties broken toward the lower index.
pub fn next_furrow(current: usize, unharvested: &[bool], field: &FieldMap) -> Result<usize> {
    debug_assert_eq!(unharvested.len(), field.furrow_count);
    let mut best: Option<(f64, usize)> = None;
    for (i, free) in unharvested.iter().enumerate() {
        if !free {
            continue;
        }
        let d = (field.furrow_x(i) - field.furrow_x(current)).abs();
        let better = match best {
            None => true,
            Some((bd, _)) => d < bd,
        };
        if better {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::FieldExhausted)
}

/// Index of the station closest to the crew centroid `x`, ties broken toward
/// the lower index.
pub fn active_station(field: &FieldMap, crew_positions: &[Point]) -> usize {
    if field.station_positions.len() == 1 || crew_positions.is_empty() {
        return 0;
    }
    let centroid_x =
        crew_positions.iter().map(|p| p.x).sum::<f64>() / crew_positions.len() as f64;
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, s) in field.station_positions.iter().enumerate() {
        let d = (s.x - centroid_x).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_field() -> FieldMap {
        FieldMap {
            furrow_count: 100,
            furrow_length: 100.0,
            bed_spacing: 1.65,
            split_line_y: 50.0,
            station_positions: vec![Point::new(82.5, 0.0)],
            active_station_index: 0,
        }
    }

    /// Field used for the published fill-ratio thresholds: the active crew
    /// block with the station centered on its headland. The farthest furrow
    /// corner is 71 m away.
    pub(crate) fn crew_block_field() -> FieldMap {
        FieldMap {
            furrow_count: 18,
            furrow_length: 57.0,
            bed_spacing: 1.65,
            split_line_y: 57.0,
            station_positions: vec![Point::new(18.0 * 1.65 / 2.0, 0.0)],
            active_station_index: 0,
        }
    }

    #[test]
    fn manhattan_basic() {
        let f = test_field();
        let d = manhattan_distance(Point::new(50.0, 0.0), Point::new(20.0, 30.0), &f).unwrap();
        assert_relative_eq!(d, 60.0);
        let z = manhattan_distance(Point::new(0.0, 0.0), Point::new(0.0, 0.0), &f).unwrap();
        assert_relative_eq!(z, 0.0);
    }

    #[test]
    fn manhattan_farthest_corner_is_71m() {
        let f = crew_block_field();
        let station = f.active_station();
        let mut max_d: f64 = 0.0;
        for i in 0..f.furrow_count {
            let corner = Point::new(f.furrow_x(i), f.split_line_y);
            max_d = max_d.max(manhattan_distance(station, corner, &f).unwrap());
        }
        assert!((max_d - 71.0).abs() < 0.1, "max distance {max_d}");
    }

    #[test]
    fn manhattan_rejects_outside_points() {
        let f = test_field();
        assert!(manhattan_distance(Point::new(-1.0, 0.0), Point::new(0.0, 0.0), &f).is_err());
        assert!(manhattan_distance(Point::new(0.0, 0.0), Point::new(0.0, 101.0), &f).is_err());
        assert!(manhattan_distance(Point::new(0.0, 5.0), Point::new(0.0, 0.0), &f).is_err());
    }

    #[test]
    fn manhattan_at_least_euclidean() {
        let f = test_field();
        for &(ax, bx, by) in &[(0.0, 10.0, 20.0), (80.0, 30.0, 45.0), (165.0, 0.0, 100.0)] {
            let a = Point::new(ax, 0.0);
            let b = Point::new(bx, by);
            let man = manhattan_distance(a, b, &f).unwrap();
            let euc = ((ax - bx).powi(2) + by * by).sqrt();
            assert!(man >= euc - 1e-12);
        }
    }

    #[test]
    fn travel_time_two_speeds() {
        let t = one_way_travel_time(30.0, 30.0, SpeedProfile {
            headland_speed: 0.4,
            furrow_speed: 1.2,
        });
        assert_relative_eq!(t, 100.0);
    }

    #[test]
    fn travel_time_single_speed_matches_distance_over_speed() {
        let t = one_way_travel_time(60.0, 0.0, SpeedProfile::uniform(1.5));
        assert_relative_eq!(t, 40.0);
        assert_relative_eq!(one_way_travel_time(0.0, 0.0, SpeedProfile::uniform(2.0)), 0.0);
        // Eq-18 equivalence: equal speeds reduce to manhattan distance / v.
        let f = test_field();
        let a = Point::new(50.0, 0.0);
        let b = Point::new(20.0, 30.0);
        let legs = path_legs(a, b, &f).unwrap();
        let t = one_way_travel_time(legs.headland, legs.furrow, SpeedProfile::uniform(1.5));
        assert_relative_eq!(t, manhattan_distance(a, b, &f).unwrap() / 1.5);
    }

    #[test]
    fn next_furrow_nearest_and_ties() {
        let f = test_field();
        let mut un = vec![false; 100];
        un[4] = true;
        un[7] = true;
        assert_eq!(next_furrow(3, &un, &f).unwrap(), 4);

        let mut un = vec![false; 100];
        un[2] = true;
        un[6] = true;
        assert_eq!(next_furrow(4, &un, &f).unwrap(), 2);

        let un = vec![false; 100];
        assert!(matches!(next_furrow(0, &un, &f), Err(Error::FieldExhausted)));
    }

    #[test]
    fn active_station_nearest_and_ties() {
        let mut f = test_field();
        f.station_positions = vec![Point::new(10.0, 0.0), Point::new(90.0, 0.0)];
        assert_eq!(active_station(&f, &[Point::new(20.0, 10.0)]), 0);

        f.station_positions = vec![Point::new(30.0, 0.0), Point::new(50.0, 0.0)];
        assert_eq!(active_station(&f, &[Point::new(40.0, 0.0)]), 0);

        f.station_positions = vec![Point::new(42.0, 0.0)];
        assert_eq!(active_station(&f, &[Point::new(0.0, 0.0)]), 0);
    }

    #[test]
    fn validate_rejects_bad_geometry() {
        let mut f = test_field();
        f.split_line_y = 0.0;
        assert!(f.validate().is_err());
        let mut f = test_field();
        f.station_positions[0].y = 1.0;
        assert!(f.validate().is_err());
        let mut f = test_field();
        f.station_positions[0].x = 400.0;
        assert!(f.validate().is_err());
        assert!(test_field().validate().is_ok());
    }
}
