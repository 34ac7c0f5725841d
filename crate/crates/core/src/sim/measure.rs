use super::{TensegrityState, Vec3};
use crate::error::{Error, Result};

/// Unweighted mean of the node positions.
pub fn centroid(positions: &[Vec3]) -> Vec3 {
    positions.iter().sum::<Vec3>() / positions.len() as f64
}

/// Heading change of the robot about the vertical axis, in `(-π, π]`.
///
/// Both node sets are projected on the ground and centred; the angle is the
/// rotation of the best 2-D rigid alignment (orthogonal Procrustes), which in
/// the plane has the closed form `atan2(Σ p×q, Σ p·q)`.
pub fn measure_yaw(initial: &TensegrityState, current: &TensegrityState) -> Result<f64> {
    if initial.positions.len() != current.positions.len() {
        return Err(Error::DimensionMismatch {
            expected: initial.positions.len(),
            got: current.positions.len(),
        });
    }
    let c0 = centroid(&initial.positions);
    let c1 = centroid(&current.positions);
    let (mut cross, mut dot) = (0.0, 0.0);
    let (mut spread0, mut spread1) = (0.0, 0.0);
    for (p, q) in initial.positions.iter().zip(&current.positions) {
        let (px, py) = (p.x - c0.x, p.y - c0.y);
        let (qx, qy) = (q.x - c1.x, q.y - c1.y);
        cross += px * qy - py * qx;
        dot += px * qx + py * qy;
        spread0 += px * px + py * py;
        spread1 += qx * qx + qy * qy;
    }
    if spread0 <= 1e-18 || spread1 <= 1e-18 {
        return Err(Error::DegenerateYaw);
    }
    let angle = cross.atan2(dot);
    Ok(if angle <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        angle
    })
}

/// Heights of the four marker nodes.
pub fn marker_heights(state: &TensegrityState, markers: &[usize; 4]) -> [f64; 4] {
    markers.map(|i| state.positions[i].z)
}
