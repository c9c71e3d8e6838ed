//! Operator axes mapped to velocity commands in scale and isometric mode.

use contact_bridge::teleop::{isometric_inverse, isometric_map, MappingConfig, RawAxes};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn main() -> anyhow::Result<()> {
    let vmax = 0.1;
    let scale: MappingConfig =
        serde_yaml::from_str("{mode: scale, axis_order: [0, 1, '-2'], scale: [0.1, 0.1, 0.05], deadzone: 0.05}")?;
    let iso: MappingConfig = serde_yaml::from_str("{mode: isometric, axis_order: [0, 1, 2], vmax: 0.1}")?;

    for axes in [
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.02, -0.3, 0.9],
    ] {
        let u = RawAxes::new(&axes);
        let s = scale.apply(&u)?;
        let i = iso.apply(&u)?;
        println!(
            "axes {axes:?}\n  scale     {s:.4?} |v| = {:.4}\n  isometric {i:.4?} |v| = {:.4}",
            norm(&s),
            norm(&i)
        );
    }

    // a full deflection along any direction reaches exactly vmax
    let v = isometric_map(&RawAxes::new(&[1.0, -0.3, 0.7]), vmax, 0.0);
    println!("full deflection along (1, -0.3, 0.7): |v| = {:.12}", norm(&v));
    // and a desired velocity can be turned back into axes
    let back = isometric_inverse(&v, vmax);
    println!("inverse gives axes {:?}", back.as_slice());
    Ok(())
}
