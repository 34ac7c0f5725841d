//! Eccentric rotating mass (ERM) vibration motor.
//!
//! The rotor spins in the plane perpendicular to its strut, producing a
//! force of magnitude `m_e r_e ω²` whose direction turns with the rotor
//! phase. The zero-phase direction is tied to the robot body through a
//! reference node so the model has no preferred world frame.

use super::topology::{MotorMount, Topology};
use super::Vec3;

/// Orthonormal frame of a motor: the strut axis and two directions spanning
/// the rotor plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorFrame {
    pub axis: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl MotorFrame {
    pub fn new(mount: &MotorMount, topology: &Topology, positions: &[Vec3]) -> Self {
        let strut = topology.struts[mount.strut];
        let axis = (positions[strut.b] - positions[strut.a]).normalize();
        let r = positions[mount.reference_node] - positions[strut.a];
        let e1 = (r - axis * r.dot(&axis)).normalize();
        let e2 = axis.cross(&e1);
        Self { axis, e1, e2 }
    }
}

/// Force produced at the mount for a signed `command` in `[-1, 1]` and the
/// rotor phase after `dt`. The sign of `command` sets the rotation sense.
pub fn motor_force(mount: &MotorMount, frame: &MotorFrame, command: f64, phase: f64, dt: f64) -> (Vec3, f64) {
    let omega = command.clamp(-1.0, 1.0) * mount.max_speed;
    if omega == 0.0 {
        return (Vec3::zeros(), phase);
    }
    let magnitude = mount.eccentricity * omega * omega;
    let (s, c) = phase.sin_cos();
    let force = (frame.e1 * c + frame.e2 * s) * magnitude;
    let next = (phase + omega * dt).rem_euclid(std::f64::consts::TAU);
    (force, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_tr6, SimParams, Variant};

    fn fixture() -> (Topology, Vec<Vec3>) {
        let (topo, state) = build_tr6(Variant::Intact, &SimParams::default()).unwrap();
        (topo, state.positions)
    }

    #[test]
    fn zero_command_is_inert() {
        let (topo, pos) = fixture();
        let m = &topo.motors[0];
        let frame = MotorFrame::new(m, &topo, &pos);
        let (f, phase) = motor_force(m, &frame, 0.0, 1.234, 2e-4);
        assert_eq!(f, Vec3::zeros());
        assert_eq!(phase, 1.234);
    }

    #[test]
    fn force_scales_with_square_of_speed() {
        let (topo, pos) = fixture();
        let m = &topo.motors[1];
        let frame = MotorFrame::new(m, &topo, &pos);
        for phase in [0.0, 0.7, 2.0, 4.5] {
            let (full, _) = motor_force(m, &frame, 1.0, phase, 2e-4);
            let (half, _) = motor_force(m, &frame, -0.5, phase, 2e-4);
            assert!((full.norm() / half.norm() - 4.0).abs() < 1e-12);
            assert!((full.norm() - m.eccentricity * m.max_speed.powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn force_is_perpendicular_to_strut() {
        let (topo, pos) = fixture();
        for m in &topo.motors {
            let frame = MotorFrame::new(m, &topo, &pos);
            let mut phase = 0.0;
            for _ in 0..200 {
                let (f, next) = motor_force(m, &frame, 0.8, phase, 1e-3);
                assert!(f.dot(&frame.axis).abs() < 1e-12 * f.norm());
                phase = next;
            }
        }
    }

    #[test]
    fn sign_flips_rotation_sense() {
        let (topo, pos) = fixture();
        let m = &topo.motors[2];
        let frame = MotorFrame::new(m, &topo, &pos);
        let (_, fwd) = motor_force(m, &frame, 0.5, 1.0, 1e-4);
        let (_, back) = motor_force(m, &frame, -0.5, 1.0, 1e-4);
        assert!((fwd - 1.0 - 0.5 * m.max_speed * 1e-4).abs() < 1e-12);
        assert!((back - 1.0 + 0.5 * m.max_speed * 1e-4).abs() < 1e-12);
    }

    #[test]
    fn frame_is_orthonormal() {
        let (topo, pos) = fixture();
        for m in &topo.motors {
            let f = MotorFrame::new(m, &topo, &pos);
            assert!((f.e1.norm() - 1.0).abs() < 1e-12);
            assert!((f.e2.norm() - 1.0).abs() < 1e-12);
            assert!(f.e1.dot(&f.e2).abs() < 1e-12);
            assert!(f.e1.dot(&f.axis).abs() < 1e-12);
        }
    }
}
