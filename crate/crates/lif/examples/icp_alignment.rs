//! Rigid registration: perturb a static room scan by a known transform,
//! recover it with point-to-point alignment, and report the error.

use lif::{apply_transform, generate_scene, icp, scene_by_name, IcpConfig, RigidTransform, Vec3};

fn main() -> lif::Result<()> {
    let scene = generate_scene(&scene_by_name("static_room", 3)?)?;
    let frame = &scene.frames[0];

    let truth = RigidTransform::from_axis_angle(
        Vec3::new(0.3, -0.2, 0.93),
        1.5_f64.to_radians(),
        Vec3::new(0.12, -0.05, 0.02),
    )?;
    let moved = apply_transform(frame, &truth);

    let (recovered, residual) = icp(frame, &moved, &IcpConfig::default())?;

    let rotation_error = truth.inverse().compose(&recovered).angle().to_degrees();
    let translation_error = (recovered.translation - truth.translation).norm();

    println!(
        "true transform:      {:.4} deg, t = ({:+.3}, {:+.3}, {:+.3})",
        truth.angle().to_degrees(),
        truth.translation.x,
        truth.translation.y,
        truth.translation.z
    );
    println!(
        "recovered transform: {:.4} deg, t = ({:+.3}, {:+.3}, {:+.3})",
        recovered.angle().to_degrees(),
        recovered.translation.x,
        recovered.translation.y,
        recovered.translation.z
    );
    println!("rotation error:    {rotation_error:.5} deg");
    println!("translation error: {translation_error:.6} m");
    println!("mean residual:     {residual:.6} m");
    Ok(())
}
