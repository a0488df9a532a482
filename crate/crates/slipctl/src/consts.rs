//! Task constants shared across the crate.

/// Control loop rate of the closed loop and the simulator.
pub const CONTROL_HZ: f64 = 30.0;

/// Control period in seconds.
pub const CONTROL_DT: f64 = 1.0 / CONTROL_HZ;

/// Start of the linear motion in the robot base frame (XY, meters).
pub const PATH_START: [f64; 2] = [0.4, 0.25];

/// End of the linear motion in the robot base frame (XY, meters).
pub const PATH_END: [f64; 2] = [0.1, -0.25];

/// Path length in meters (Euclidean distance between start and end).
pub const PATH_DISPLACEMENT: f64 = 0.583_095_189_484_530_1;

/// Object rotations beyond this many degrees count as slip.
pub const SLIP_THRESHOLD_DEG: f64 = 6.0;

/// Standard gravity, m/s^2.
pub const G: f64 = 9.81;

/// Unit direction of the motion path in the XY plane.
pub fn path_dir() -> [f64; 2] {
    let dx = PATH_END[0] - PATH_START[0];
    let dy = PATH_END[1] - PATH_START[1];
    let n = (dx * dx + dy * dy).sqrt();
    [dx / n, dy / n]
}
