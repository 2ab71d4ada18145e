//! Depth to path distance to modulation map on a vertical depth ramp.
//!
//! `cargo run --example depth_modulation -- [L] [s]`

use turbsynth::depth::{depth_modulation, fried_at_distance, project_depth, DepthMap, PathGeometry, ZMaxMode};
use turbsynth::raster::ScalarMap;

fn main() -> turbsynth::Result<()> {
    let mut args = std::env::args().skip(1);
    let l: f64 = args.next().and_then(|v| v.parse().ok()).unwrap_or(1000.0);
    let s: f64 = args.next().and_then(|v| v.parse().ok()).unwrap_or(0.9);

    let (w, h) = (64, 64);
    let depth = DepthMap::new(ScalarMap::from_fn(w, h, |_, y| y as f64 / (h - 1) as f64))?;
    let geom = PathGeometry::new(l, s)?;
    let dist = project_depth(&depth, &geom);
    let m = depth_modulation(&depth, &geom, ZMaxMode::Path)?;

    println!("L = {} m, s = {}, z_max = {} m", l, s, geom.z_max());
    println!("{:>6} {:>10} {:>10} {:>12}", "depth", "z (m)", "M", "r0(z)/r0(L)");
    for y in (0..h).step_by(9) {
        let z = dist.as_map().get(0, y);
        println!(
            "{:>6.3} {:>10.3} {:>10.6} {:>12.6}",
            depth.as_map().get(0, y),
            z,
            m.get(0, y),
            fried_at_distance(z, 1.0, l)?
        );
    }
    let (lo, hi) = m.as_map().min_max();
    println!("M range [{:.6}, {:.6}], lower bound s^0.6 = {:.6}", lo, hi, s.powf(0.6));
    Ok(())
}
