//! Chains a detection into world and body frames and resets the MAV frame
//! onto a ground vehicle.

use nalgebra::Vector3;
use thirdview::frames::{relative_between_ugvs, relative_in_body, relative_in_world, reset_mav_world, Pose};

fn main() {
    let mav_est = Pose::from_xyz_yaw(0.35, -0.20, 2.0, 0.1);
    let camera = Pose::downward_camera(Vector3::new(0.05, 0.0, -0.1));
    // what the camera saw: the vehicle roughly two metres below
    let below = Pose::from_xyz_yaw(-0.3, 0.2, -1.9, 0.4);
    let detection = camera.inverse().compose(&below);

    let in_body = relative_in_body(&camera, &detection);
    let in_world = relative_in_world(&mav_est, &camera, &detection);
    println!(
        "vehicle in body frame  t={:.3?} yaw={:.3}",
        in_body.translation.as_slice(),
        in_body.yaw()
    );
    println!(
        "vehicle in world frame t={:.3?} yaw={:.3}",
        in_world.translation.as_slice(),
        in_world.yaw()
    );

    // SLAM says the vehicle is really here; re-anchor the MAV on it
    let ugv_slam = Pose::from_xyz_yaw(0.0, 0.0, 0.0, 0.0);
    let reset = reset_mav_world(&ugv_slam, &in_body);
    println!("MAV estimate before reset {:.3?}", mav_est.translation.as_slice());
    println!("MAV estimate after reset  {:.3?}", reset.translation.as_slice());

    let other = Pose::from_xyz_yaw(5.0, 0.0, 0.0, 1.2);
    let hop = relative_between_ugvs(&ugv_slam, &other);
    println!("ugv0 -> ugv1 {:.3?} yaw {:.3}", hop.translation.as_slice(), hop.yaw());

    let json = serde_json::to_string(&reset).unwrap();
    println!("wire form {json}");
}
