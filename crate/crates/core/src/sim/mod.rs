//! Point-mass simulation of the six-strut soft tensegrity robot.
//!
//! Twelve strut-end nodes carry all the mass. Struts (and, for the rigid
//! replica, the links replacing the springs) are exact distance constraints
//! enforced by projection after every step; springs are tension-only Hooke
//! elements with a dashpot. Three eccentric-mass motors shake the struts and
//! the robot interacts with a flat penalty ground with regularized Coulomb
//! friction. Integration is velocity Verlet; link loads from the previous
//! step are fed forward so ground friction can resist them.

mod dump;
mod dynamics;
mod measure;
mod motor;
mod topology;

use std::fmt;
use std::str::FromStr;

pub use dump::{read_trajectory_csv, write_trajectory_csv, TrajectorySample, TRAJECTORY_HEADER};
pub use dynamics::{mechanical_energy, relax, spring_force, step};
pub use measure::{centroid, marker_heights, measure_yaw};
pub use motor::{motor_force, MotorFrame};
pub use topology::{Link, MotorMount, Spring, Topology, INTACT_SPRING_COUNT, NODE_COUNT, STRUT_COUNT};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Physical and numerical constants of the simulation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Integration step, s.
    pub dt: f64,
    /// m/s².
    pub gravity: f64,
    /// Disable to simulate free flight.
    pub ground_enabled: bool,
    /// Penalty stiffness of the floor, N/m.
    pub ground_stiffness: f64,
    /// N·s/m.
    pub ground_damping: f64,
    pub friction_coefficient: f64,
    /// Tangential speed (m/s) over which friction ramps up to its Coulomb value.
    pub friction_smoothing_speed: f64,
    /// Dashpot along each taut spring, N·s/m.
    pub structural_damping: f64,
    /// N/m.
    pub spring_stiffness: f64,
    /// m.
    pub spring_rest_length: f64,
    /// m.
    pub strut_length: f64,
    /// Mass of the bare structure spread over the 12 nodes, kg.
    pub total_mass: f64,
    /// Extra mass at the node nearest each motor, kg.
    pub motor_mass: f64,
    /// `m_e r_e` of each rotor, kg·m.
    pub motor_eccentricity: f64,
    /// Rotor speed at full command, rad/s.
    pub motor_max_speed: f64,
    /// Motor position along its strut (0..1 from the first node).
    pub motor_offset: f64,
    /// Extra viscous damping (1/s) applied only during dynamic relaxation.
    pub relax_damping: f64,
    /// Relative length tolerance of the constraint projection.
    pub constraint_tolerance: f64,
    pub constraint_iterations: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 2e-4,
            gravity: 9.81,
            ground_enabled: true,
            ground_stiffness: 2e4,
            ground_damping: 10.0,
            friction_coefficient: 0.6,
            friction_smoothing_speed: 1e-3,
            structural_damping: 0.05,
            spring_stiffness: 120.0,
            spring_rest_length: 0.02,
            strut_length: 0.094,
            total_mass: 0.12,
            motor_mass: 0.005,
            motor_eccentricity: 1e-5,
            motor_max_speed: 1200.0,
            motor_offset: 0.3,
            relax_damping: 20.0,
            constraint_tolerance: 1e-10,
            constraint_iterations: 200,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("strut_length", self.strut_length),
            ("total_mass", self.total_mass),
            ("friction_smoothing_speed", self.friction_smoothing_speed),
            ("constraint_tolerance", self.constraint_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("gravity", self.gravity),
            ("ground_stiffness", self.ground_stiffness),
            ("ground_damping", self.ground_damping),
            ("friction_coefficient", self.friction_coefficient),
            ("structural_damping", self.structural_damping),
            ("spring_stiffness", self.spring_stiffness),
            ("spring_rest_length", self.spring_rest_length),
            ("motor_mass", self.motor_mass),
            ("motor_eccentricity", self.motor_eccentricity),
            ("motor_max_speed", self.motor_max_speed),
            ("relax_damping", self.relax_damping),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.motor_offset) {
            return Err(Error::param("motor_offset", "must lie in [0, 1]"));
        }
        if self.constraint_iterations == 0 {
            return Err(Error::param("constraint_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// Structural variant of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Intact,
    /// One spring (by index in the intact spring list) removed.
    Damaged(usize),
    /// Every spring replaced by a fixed-length link.
    Rigid,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Intact => "intact",
            Variant::Damaged(_) => "damaged",
            Variant::Rigid => "rigid",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Damaged(i) => write!(f, "damaged:{i}"),
            v => f.write_str(v.name()),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intact" => Ok(Variant::Intact),
            "rigid" => Ok(Variant::Rigid),
            "damaged" => Ok(Variant::Damaged(0)),
            other => match other.strip_prefix("damaged:").map(str::parse) {
                Some(Ok(i)) => Ok(Variant::Damaged(i)),
                _ => Err(Error::param(
                    "variant",
                    format!("expected intact, rigid, damaged or damaged:<spring>, got `{other}`"),
                )),
            },
        }
    }
}

/// Dynamic state of the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct TensegrityState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub motor_phases: [f64; 3],
    pub time: f64,
    /// Tension each fixed-length link carried during the last step, struts
    /// first (negative in compression). Fed forward so that friction sees
    /// strut loads.
    pub link_tensions: Vec<f64>,
}

impl TensegrityState {
    pub fn at_rest(positions: Vec<Vec3>) -> Self {
        let n = positions.len();
        Self {
            positions,
            velocities: vec![Vec3::zeros(); n],
            motor_phases: [0.0; 3],
            time: 0.0,
            link_tensions: Vec::new(),
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn kinetic_energy(&self, topology: &Topology) -> f64 {
        self.velocities
            .iter()
            .zip(&topology.masses)
            .map(|(v, m)| 0.5 * m * v.norm_squared())
            .sum()
    }

    /// Moves the whole robot horizontally.
    pub fn translate_horizontal(&mut self, dx: f64, dy: f64) {
        for p in &mut self.positions {
            p.x += dx;
            p.y += dy;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(&self.velocities)
            .all(|v| v.iter().all(|c| c.is_finite()))
            && self.motor_phases.iter().all(|p| p.is_finite())
    }
}

/// Builds a variant of the TR-6 robot and relaxes it onto the ground. The
/// returned state is the rest pose (zero velocities, time 0).
///
/// The damaged variant loses a spring from the intact rest pose and settles
/// again; the rigid replica freezes the intact rest pose by turning every
/// spring into a link of its current length, so both share the intact node
/// layout as their starting point.
pub fn build_tr6(variant: Variant, params: &SimParams) -> Result<(Topology, TensegrityState)> {
    params.validate()?;
    let (mut topology, positions) = topology::expanded_octahedron(params);
    let mut state = TensegrityState::at_rest(positions);
    relax(&topology, &mut state, params)?;

    match variant {
        Variant::Intact => {}
        Variant::Damaged(index) => {
            if index >= topology.springs.len() {
                return Err(Error::param(
                    "damaged_spring",
                    format!("spring index {index} out of range 0..{}", topology.springs.len()),
                ));
            }
            topology.springs.remove(index);
            relax(&topology, &mut state, params)?;
        }
        Variant::Rigid => {
            let pos = &state.positions;
            topology.rigid_links = topology
                .springs
                .drain(..)
                .map(|s| Link {
                    a: s.a,
                    b: s.b,
                    length: (pos[s.b] - pos[s.a]).norm(),
                })
                .collect();
            relax(&topology, &mut state, params)?;
        }
    }
    Ok((topology, state))
}
