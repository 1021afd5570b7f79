//! Front reconstruction: piecewise-linear envelope of the ribbon distance
//! circles, marker advection, and per-tip normals.

use crate::error::{HfError, Result};
use crate::geometry::{Point, Polygon};
use crate::mesh::{Classification, Grid};
use crate::tip_asymptotics::RibbonState;
use serde::Serialize;
use std::io::Write;

const EQUAL_RADII_RTOL: f64 = 1e-9;

/// External tangent of two circles, with the circles numbered
/// counter-clockwise along the front so that the normal points outward.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tangent {
    pub normal: Point,
    pub t1: Point,
    pub t2: Point,
}

impl Tangent {
    /// Angle of the normal with the x-axis.
    pub fn alpha(&self) -> f64 {
        self.normal.y.atan2(self.normal.x)
    }

    pub fn tan_alpha(&self) -> f64 {
        self.normal.y / self.normal.x
    }

    /// Signed distance from `p` to the tangent line, positive on the fracture side.
    pub fn distance_behind(&self, p: Point) -> f64 {
        self.normal.dot(self.t1 - p)
    }
}

pub fn envelope_tangent(c1: Point, r1: f64, c2: Point, r2: f64) -> Result<Tangent> {
    let d = c2 - c1;
    let len = d.norm();
    let dr = r1 - r2;
    if len <= dr.abs() {
        return Err(HfError::NoExternalTangent { d: len, dr: dr.abs() });
    }
    let e = d * (1.0 / len);
    let s = if dr.abs() < EQUAL_RADII_RTOL * len { 0.0 } else { dr / len };
    let normal = e.right_normal() * (1.0 - s * s).sqrt() + e * s;
    Ok(Tangent { normal, t1: c1 + normal * r1, t2: c2 + normal * r2 })
}

/// Closed counter-clockwise front with per-segment and per-tip data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontPolyline {
    pub points: Vec<Point>,
    /// Outward unit normal of segment `k` (from point `k` to `k + 1`).
    pub normals: Vec<Point>,
    /// One entry per tip cell in classification order.
    pub tip_normals: Vec<Point>,
    pub tip_anchors: Vec<Point>,
    pub activated: Vec<bool>,
}

impl FrontPolyline {
    /// Builds the polyline from vertices and fills tip data from `cls`.
    pub fn from_points(grid: &Grid, cls: &Classification, points: Vec<Point>) -> Result<Self> {
        let poly = Polygon::new(points);
        if let Some((i, j)) = poly.self_intersection() {
            return Err(HfError::SelfIntersecting(i, j));
        }
        let normals: Vec<Point> = poly.edges().map(|(a, b)| (b - a).unit().right_normal()).collect();
        let mut tip_normals = Vec::with_capacity(cls.n_tip());
        let mut tip_anchors = Vec::with_capacity(cls.n_tip());
        let mut activated = Vec::with_capacity(cls.n_tip());
        for &id in cls.tips() {
            let rect = grid.cell_rect(id);
            let c = grid.center(id);
            let mut best: Option<(f64, usize)> = None;
            for (k, (a, b)) in poly.edges().enumerate() {
                let l = rect.clipped_length(a, b);
                if l > 0.0 && best.map_or(true, |(bl, _)| l > bl) {
                    best = Some((l, k));
                }
            }
            let k = match best {
                Some((_, k)) => k,
                None => nearest_edge(&poly, c),
            };
            let (a, _) = poly.edge(k);
            let n = normals[k];
            tip_normals.push(n);
            tip_anchors.push(c + n * n.dot(a - c));
            activated.push(poly.contains(c));
        }
        Ok(Self { points: poly.points, normals, tip_normals, tip_anchors, activated })
    }

    pub fn polygon(&self) -> Polygon {
        Polygon::new(self.points.clone())
    }

    /// Vertex normals (mean of the adjacent segment normals).
    pub fn vertex_normals(&self) -> Vec<Point> {
        let m = self.normals.len();
        (0..m).map(|k| (self.normals[(k + m - 1) % m] + self.normals[k]).unit()).collect()
    }

    /// CSV with columns `x,y,n_x,n_y`, one row per vertex.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_front_csv(out, &self.points, &self.vertex_normals())
    }
}

pub fn write_front_csv<W: Write>(out: W, points: &[Point], normals: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "n_x", "n_y"])?;
    for (p, n) in points.iter().zip(normals) {
        w.serialize((p.x, p.y, n.x, n.y))?;
    }
    w.flush()?;
    Ok(())
}

fn nearest_edge(poly: &Polygon, p: Point) -> usize {
    poly.edges()
        .map(|(a, b)| crate::geometry::point_segment_distance(p, a, b))
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bd), (k, d)| if d < bd { (k, d) } else { (bk, bd) })
        .0
}

/// Indices of `pts` sorted counter-clockwise around their centroid.
pub fn ring_order(pts: &[Point]) -> Vec<usize> {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point::default(), |a, &p| a + p) * (1.0 / n);
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let ang: Vec<f64> = pts.iter().map(|p| (p.y - c.y).atan2(p.x - c.x)).collect();
    idx.sort_by(|&a, &b| ang[a].total_cmp(&ang[b]).then(a.cmp(&b)));
    idx
}

/// Envelope of the circles `(center of ribbon cell, r_j)`. Circles hidden
/// behind the tangent of their neighbours are skipped; successive tangent
/// segments are joined by the chord between their tangent points.
pub fn reconstruct_envelope(grid: &Grid, cls: &Classification, ribbons: &[RibbonState]) -> Result<FrontPolyline> {
    if ribbons.len() < 3 {
        return Err(HfError::DegenerateFront);
    }
    if ribbons.iter().any(|r| !(r.r > 0.0)) {
        return Err(HfError::FrontFolding("non-positive ribbon distance".into()));
    }
    let centers: Vec<Point> = ribbons.iter().map(|r| grid.center(r.cell)).collect();
    let order = ring_order(&centers);
    let mut ring: Vec<(Point, f64)> = order.iter().map(|&k| (centers[k], ribbons[k].r)).collect();
    prune_hidden(&mut ring);
    if ring.len() < 3 {
        return Err(HfError::DegenerateFront);
    }
    let m = ring.len();
    let mut points = Vec::with_capacity(2 * m);
    for k in 0..m {
        let (c1, r1) = ring[k];
        let (c2, r2) = ring[(k + 1) % m];
        let t = envelope_tangent(c1, r1, c2, r2)?;
        push_distinct(&mut points, t.t1);
        push_distinct(&mut points, t.t2);
    }
    if points.len() > 1 && points[0].dist(points[points.len() - 1]) <= 1e-12 * grid.dx {
        points.pop();
    }
    FrontPolyline::from_points(grid, cls, points)
}

fn push_distinct(points: &mut Vec<Point>, p: Point) {
    if points.last().map_or(true, |q: &Point| q.dist(p) > 1e-12 * (1.0 + p.norm())) {
        points.push(p);
    }
}

fn prune_hidden(ring: &mut Vec<(Point, f64)>) {
    loop {
        let m = ring.len();
        if m < 4 {
            return;
        }
        let mut drop = None;
        for k in 0..m {
            let prev = ring[(k + m - 1) % m];
            let cur = ring[k];
            let next = ring[(k + 1) % m];
            let hidden = match (envelope_tangent(prev.0, prev.1, cur.0, cur.1), envelope_tangent(cur.0, cur.1, next.0, next.1)) {
                (Ok(_), Ok(_)) => match envelope_tangent(prev.0, prev.1, next.0, next.1) {
                    Ok(t) => t.distance_behind(cur.0) >= cur.1,
                    Err(_) => false,
                },
                _ => true,
            };
            if hidden {
                drop = Some(k);
                break;
            }
        }
        match drop {
            Some(k) => {
                ring.remove(k);
            }
            None => return,
        }
    }
}

/// Marker points traced along their normals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Markers {
    pub points: Vec<Point>,
}

impl Markers {
    /// Central-difference outward normals of a counter-clockwise loop.
    pub fn normals(&self) -> Vec<Point> {
        let m = self.points.len();
        (0..m)
            .map(|k| {
                let a = self.points[(k + m - 1) % m];
                let b = self.points[(k + 1) % m];
                (b - a).unit().right_normal()
            })
            .collect()
    }

    /// One marker per tip cell at its anchor, ordered counter-clockwise.
    pub fn seed(front: &FrontPolyline) -> Self {
        let order = ring_order(&front.tip_anchors);
        Self { points: order.iter().map(|&k| front.tip_anchors[k]).collect() }
    }
}

/// Speed per tip: mean speed of its ribbon side-neighbours.
pub fn tip_speeds(grid: &Grid, cls: &Classification, ribbons: &[RibbonState]) -> Vec<f64> {
    cls.tips()
        .iter()
        .map(|&t| {
            let nb = grid.side_neighbors(t);
            let v: Vec<f64> = ribbons.iter().filter(|r| nb.contains(&r.cell)).map(|r| r.v).collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        })
        .collect()
}

pub fn advance_markers(markers: &Markers, speeds: &[f64], dt: f64) -> Result<Markers> {
    if speeds.len() != markers.points.len() {
        return Err(HfError::DimensionMismatch { expected: markers.points.len(), got: speeds.len() });
    }
    let normals = markers.normals();
    let points: Vec<Point> = markers
        .points
        .iter()
        .zip(&normals)
        .zip(speeds)
        .map(|((&p, &n), &v)| p + n * (v * dt))
        .collect();
    let m = points.len();
    for k in 0..m {
        let old = markers.points[(k + 1) % m] - markers.points[k];
        let new = points[(k + 1) % m] - points[k];
        if old.dot(new) <= 0.0 {
            return Err(HfError::FrontFolding(format!("segment {k} inverted")));
        }
    }
    if let Some((i, j)) = Polygon::new(points.clone()).self_intersection() {
        return Err(HfError::FrontFolding(format!("segments {i} and {j} cross")));
    }
    Ok(Markers { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_tangent_instance() {
        let t = envelope_tangent(Point::new(0.0, 0.0), 1.0, Point::new(-1.0, 1.0), 1.2).unwrap();
        assert!((t.tan_alpha() - 0.75).abs() < 1e-12);
        assert!((t.normal.x - 0.8).abs() < 1e-12 && (t.normal.y - 0.6).abs() < 1e-12);
        let tip = Point::new(0.0, 1.0);
        assert!((t.distance_behind(tip) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn equal_radii_tangent_is_parallel() {
        let t = envelope_tangent(Point::new(0.0, 0.0), 0.5, Point::new(2.0, 0.0), 0.5).unwrap();
        assert_eq!(t.normal, Point::new(0.0, -1.0));
        assert!(envelope_tangent(Point::default(), 2.0, Point::new(0.5, 0.0), 0.1).is_err());
    }

    #[test]
    fn collinear_markers_have_vertical_normals() {
        let m = Markers {
            points: vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(1.0, 1.0)],
        };
        assert_eq!(m.normals()[1], Point::new(0.0, -1.0));
        let same = advance_markers(&m, &[0.0; 4], 1.0).unwrap();
        assert_eq!(same, m);
    }
}
