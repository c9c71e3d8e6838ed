//! Renders an RGB-D frame of the pushing scene, writes the colour image as a
//! PPM file and back-projects the depth image to a point cloud.

use std::io::Write;

use contact_bridge::bus::ImageData;
use contact_bridge::dynamics::SimWorld;
use contact_bridge::math::Vec3;
use contact_bridge::scene::{assets_dir, SceneFile};
use contact_bridge::sensors::{back_project, camera_intrinsics, look_at, render_rgbd, CameraSpec};

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pushing_rgb.ppm".into());
    let world = SimWorld::from_scene(&SceneFile::load(assets_dir().join("pushing_scene.yaml"))?)?;
    let pose = look_at(Vec3::new(1.2, 0.0, 0.8), Vec3::new(0.45, 0.0, 0.05), Vec3::Z);
    let spec = CameraSpec::new(320, 240, 1.0, pose);

    let t0 = std::time::Instant::now();
    let (rgb, depth) = render_rgbd(&world, &spec)?;
    println!("rendered {}x{} in {:?}", rgb.width, rgb.height, t0.elapsed());

    if let ImageData::Rgb8(pixels) = &rgb.data {
        let mut f = std::fs::File::create(&out)?;
        write!(f, "P6\n{} {}\n255\n", rgb.width, rgb.height)?;
        f.write_all(pixels)?;
        println!("wrote {out}");
    }

    let info = camera_intrinsics(&spec);
    let cloud = back_project(&depth, Some(&rgb), &info)?;
    let nearest = cloud.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    println!(
        "{} points, nearest {:.3} m (fx = {:.1} px)",
        cloud.points.len(),
        nearest,
        info.fx
    );
    Ok(())
}
