//! Front reconstruction for an expanding circle: the envelope of the ribbon
//! distance circles and marker advection along the normals.

use hydrofrac::front::{advance_markers, envelope_tangent, reconstruct_envelope, Markers};
use hydrofrac::geometry::{Point, Polygon};
use hydrofrac::mesh::{classify, Grid, Outline};
use hydrofrac::tip_asymptotics::RibbonState;
use std::fs::File;
use std::io::BufWriter;

fn main() -> hydrofrac::Result<()> {
    let t = envelope_tangent(Point::new(0.0, 0.0), 1.0, Point::new(-1.0, 1.0), 1.2)?;
    println!("tangent: tan alpha = {}, distance to (0, 1) = {}", t.tan_alpha(), t.distance_behind(Point::new(0.0, 1.0)));

    let radius = 7.3;
    let grid = Grid::centered(12, 12, 1.0, 1.0)?;
    let cls = classify(&grid, Outline::Closed(&Polygon::circle(Point::default(), radius, 720)))?;
    let ribbons: Vec<RibbonState> = cls
        .ribbons()
        .iter()
        .map(|&cell| RibbonState { cell, r: radius - grid.center(cell).norm(), v: 1.0, w_frozen: 0.0 })
        .collect();
    let front = reconstruct_envelope(&grid, &cls, &ribbons)?;
    let dev = front.points.iter().map(|p| (p.norm() / radius - 1.0).abs()).fold(0.0, f64::max);
    println!("{} ribbons, {} front vertices, max radial deviation {:.3}%", cls.n_rib(), front.points.len(), 100.0 * dev);

    let mut markers = Markers::seed(&front);
    for _ in 0..5 {
        markers = advance_markers(&markers, &vec![0.2; markers.points.len()], 1.0)?;
    }
    let mean = markers.points.iter().map(|p| p.norm()).sum::<f64>() / markers.points.len() as f64;
    println!("markers after moving 1.0: mean radius {mean:.4} (circle {:.4})", radius + 1.0);

    std::fs::create_dir_all("out")?;
    front.write_csv(BufWriter::new(File::create("out/envelope_front.csv")?))?;
    Ok(())
}
