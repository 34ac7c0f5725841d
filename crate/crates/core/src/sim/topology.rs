use nalgebra::Rotation3;

use super::{SimParams, Vec3};

pub const NODE_COUNT: usize = 12;
pub const STRUT_COUNT: usize = 6;
pub const INTACT_SPRING_COUNT: usize = 24;

/// Fixed-length pair of nodes (strut or rigid link).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

/// Tension-only helical spring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub stiffness: f64,
    pub rest_length: f64,
}

/// Eccentric rotating mass glued to a strut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorMount {
    pub strut: usize,
    /// Position along the strut, 0 at node `a`, 1 at node `b`.
    pub offset: f64,
    /// `m_e · r_e` in kg·m.
    pub eccentricity: f64,
    /// Angular speed at full command, rad/s.
    pub max_speed: f64,
    /// Node that fixes the zero-phase direction of the rotor in the strut's
    /// body frame.
    pub reference_node: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub masses: Vec<f64>,
    pub struts: Vec<Link>,
    pub springs: Vec<Spring>,
    pub rigid_links: Vec<Link>,
    pub motors: Vec<MotorMount>,
    pub markers: [usize; 4],
}

impl Topology {
    pub fn node_count(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Number of springs attached to each node.
    pub fn spring_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for s in &self.springs {
            deg[s.a] += 1;
            deg[s.b] += 1;
        }
        deg
    }

    /// All fixed-length constraints, struts first.
    pub fn constraints(&self) -> impl Iterator<Item = &Link> {
        self.struts.iter().chain(&self.rigid_links)
    }
}

/// Struts carrying a motor: one from each parallel pair, namely the three
/// that touch the ground in the rest pose.
const MOTOR_STRUTS: [usize; 3] = [1, 3, 5];
/// Strut ends tracked as height markers.
const MARKERS: [usize; 4] = [0, 4, 8, 2];

/// Expanded-octahedron layout before relaxation: three orthogonal pairs of
/// parallel struts, nodes at the cyclic permutations of `(0, ±s/2, ±L/2)`
/// with `s = L/φ`, turned so that a closed spring triangle faces the ground.
///
/// Strut `2g` and `2g+1` are the parallel pair of group `g`; node `2i` and
/// `2i+1` are the ends of strut `i`.
pub(crate) fn expanded_octahedron(params: &SimParams) -> (Topology, Vec<Vec3>) {
    let l = params.strut_length;
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let a = l / phi / 2.0;
    let b = l / 2.0;

    #[rustfmt::skip]
    let raw = [
        // along z
        [0.0, a, b], [0.0, a, -b],
        [0.0, -a, b], [0.0, -a, -b],
        // along x
        [b, 0.0, a], [-b, 0.0, a],
        [b, 0.0, -a], [-b, 0.0, -a],
        // along y
        [a, b, 0.0], [a, -b, 0.0],
        [-a, b, 0.0], [-a, -b, 0.0],
    ];
    let down = Vec3::new(-1.0, -1.0, -1.0);
    let rot =
        Rotation3::rotation_between(&down, &Vec3::new(0.0, 0.0, -1.0)).expect("(-1,-1,-1) is not antiparallel to -z");
    let mut positions: Vec<Vec3> = raw.iter().map(|p| rot * Vec3::new(p[0], p[1], p[2])).collect();
    let min_z = positions.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let centroid = positions.iter().sum::<Vec3>() / NODE_COUNT as f64;
    for p in &mut positions {
        p.x -= centroid.x;
        p.y -= centroid.y;
        p.z += 1e-3 - min_z;
    }

    let struts: Vec<Link> = (0..STRUT_COUNT)
        .map(|i| Link {
            a: 2 * i,
            b: 2 * i + 1,
            length: l,
        })
        .collect();

    // Springs are the icosahedron edges that do not join a parallel pair.
    let group = |node: usize| node / 4;
    let edge = 2.0 * a;
    let mut springs = Vec::with_capacity(INTACT_SPRING_COUNT);
    for i in 0..NODE_COUNT {
        for j in i + 1..NODE_COUNT {
            if group(i) == group(j) {
                continue;
            }
            if ((positions[i] - positions[j]).norm() - edge).abs() < 1e-3 * edge {
                springs.push(Spring {
                    a: i,
                    b: j,
                    stiffness: params.spring_stiffness,
                    rest_length: params.spring_rest_length,
                });
            }
        }
    }
    debug_assert_eq!(springs.len(), INTACT_SPRING_COUNT);

    let mut masses = vec![params.total_mass / NODE_COUNT as f64; NODE_COUNT];
    let motors: Vec<MotorMount> = MOTOR_STRUTS
        .iter()
        .map(|&s| {
            let near = if params.motor_offset <= 0.5 { 2 * s } else { 2 * s + 1 };
            masses[near] += params.motor_mass;
            MotorMount {
                strut: s,
                offset: params.motor_offset,
                eccentricity: params.motor_eccentricity,
                max_speed: params.motor_max_speed,
                reference_node: (2 * (s + 1)) % NODE_COUNT,
            }
        })
        .collect();

    let topology = Topology {
        masses,
        struts,
        springs,
        rigid_links: Vec::new(),
        motors,
        markers: MARKERS,
    };
    (topology, positions)
}
