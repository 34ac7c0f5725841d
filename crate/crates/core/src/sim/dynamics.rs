use super::motor::{motor_force, MotorFrame};
use nalgebra::{DMatrix, DVector};

use super::topology::{Link, Spring, Topology};
use super::{SimParams, TensegrityState, Vec3};
use crate::error::{Error, Result};

const RELAX_MAX_STEPS: usize = 1_000_000;
const RELAX_MIN_TIME: f64 = 0.1;
const RELAX_CHECK_EVERY: usize = 50;
const RELAX_KINETIC_ENERGY: f64 = 1e-7;
const RELAX_MAX_SPEED: f64 = 1e-5;

/// Tension along a spring: zero when slack, otherwise `k (len - rest)`.
#[inline]
pub fn spring_force(spring: &Spring, length: f64) -> f64 {
    if length <= spring.rest_length {
        0.0
    } else {
        spring.stiffness * (length - spring.rest_length)
    }
}

/// Advances the state by one `dt` with the given signed motor commands.
pub fn step(topology: &Topology, state: &mut TensegrityState, commands: &[f64; 3], params: &SimParams) -> Result<()> {
    advance(topology, state, commands, params, 0.0)
}

/// Everything acting on the nodes at one instant except friction.
struct Loads {
    force: Vec<Vec3>,
    normal: Vec<f64>,
}

fn loads(
    topology: &Topology,
    positions: &[Vec3],
    velocities: &[Vec3],
    phases: &[f64; 3],
    commands: &[f64; 3],
    tensions: &[f64],
    params: &SimParams,
) -> Loads {
    let n = topology.node_count();
    let mut force: Vec<Vec3> = topology
        .masses
        .iter()
        .map(|m| Vec3::new(0.0, 0.0, -m * params.gravity))
        .collect();

    for (link, &tension) in topology.constraints().zip(tensions) {
        let d = positions[link.b] - positions[link.a];
        let len = d.norm();
        if len > 0.0 {
            force[link.a] += d * (tension / len);
            force[link.b] -= d * (tension / len);
        }
    }

    for s in &topology.springs {
        let d = positions[s.b] - positions[s.a];
        let len = d.norm();
        if len <= s.rest_length || len == 0.0 {
            continue;
        }
        let dir = d / len;
        let stretch_rate = (velocities[s.b] - velocities[s.a]).dot(&dir);
        // A hooked spring can pull but never push, dashpot included.
        let tension = (spring_force(s, len) + params.structural_damping * stretch_rate).max(0.0);
        force[s.a] += dir * tension;
        force[s.b] -= dir * tension;
    }

    for (i, mount) in topology.motors.iter().enumerate() {
        let frame = MotorFrame::new(mount, topology, positions);
        let (f, _) = motor_force(mount, &frame, commands[i], phases[i], 0.0);
        let strut = topology.struts[mount.strut];
        force[strut.a] += f * (1.0 - mount.offset);
        force[strut.b] += f * mount.offset;
    }

    let mut normal = vec![0.0; n];
    if params.ground_enabled {
        for i in 0..n {
            let depth = -positions[i].z;
            if depth > 0.0 {
                let fz = (params.ground_stiffness * depth - params.ground_damping * velocities[i].z).max(0.0);
                force[i].z += fz;
                normal[i] = fz;
            }
        }
    }
    Loads { force, normal }
}

/// Applies `loads` for `h` seconds, then friction and extra damping.
/// Friction opposes the tangential velocity the other forces would produce,
/// capped so it can stop a node but never reverse it.
fn kick(topology: &Topology, velocities: &mut [Vec3], loads: &Loads, h: f64, extra_damping: f64, params: &SimParams) {
    for (i, v) in velocities.iter_mut().enumerate() {
        let m = topology.masses[i];
        *v += loads.force[i] * (h / m);
        if loads.normal[i] > 0.0 && params.friction_coefficient > 0.0 {
            let vt = Vec3::new(v.x, v.y, 0.0);
            let speed = vt.norm();
            if speed > 0.0 {
                let coulomb =
                    params.friction_coefficient * loads.normal[i] * (speed / params.friction_smoothing_speed).tanh();
                let dv = (coulomb * h / m).min(speed);
                *v -= vt * (dv / speed);
            }
        }
        if extra_damping > 0.0 {
            *v *= (1.0 - extra_damping * h).max(0.0);
        }
    }
}

/// Velocity Verlet (kick, drift, kick) with the fixed-length links enforced
/// on positions after the drift and on velocities after the second kick.
pub(crate) fn advance(
    topology: &Topology,
    state: &mut TensegrityState,
    commands: &[f64; 3],
    params: &SimParams,
    extra_damping: f64,
) -> Result<()> {
    let n = topology.node_count();
    let dt = params.dt;
    let link_count = topology.struts.len() + topology.rigid_links.len();
    state.link_tensions.resize(link_count, 0.0);

    let before = loads(
        topology,
        &state.positions,
        &state.velocities,
        &state.motor_phases,
        commands,
        &state.link_tensions,
        params,
    );
    let mut vel = state.velocities.clone();
    kick(topology, &mut vel, &before, 0.5 * dt, extra_damping, params);

    let start = state.positions.clone();
    for i in 0..n {
        state.positions[i] += vel[i] * dt;
    }
    let mut impulses = project_constraints(topology, &start, &mut state.positions, params);
    for i in 0..n {
        vel[i] = (state.positions[i] - start[i]) / dt;
    }

    for (i, mount) in topology.motors.iter().enumerate() {
        let omega = commands[i].clamp(-1.0, 1.0) * mount.max_speed;
        state.motor_phases[i] = (state.motor_phases[i] + omega * dt).rem_euclid(std::f64::consts::TAU);
    }

    let after = loads(
        topology,
        &state.positions,
        &vel,
        &state.motor_phases,
        commands,
        &state.link_tensions,
        params,
    );
    kick(topology, &mut vel, &after, 0.5 * dt, extra_damping, params);
    for (j, k) in impulses
        .iter_mut()
        .zip(project_velocities(topology, &state.positions, &mut vel))
    {
        *j += k;
    }
    for (tension, j) in state.link_tensions.iter_mut().zip(impulses) {
        *tension += j / dt;
    }
    state.velocities = vel;
    state.time += dt;

    if !state.is_finite() {
        return Err(Error::Unstable { time: state.time });
    }
    Ok(())
}

/// Projects struts and rigid links onto their lengths. Corrections act
/// along each link's direction at the start of the step, weighted by inverse
/// mass. Disjoint struts are solved in closed form; a coupled network of
/// rigid links is solved with Newton iterations on all links at once.
///
/// Returns the impulse each link applied, positive in tension.
fn project_constraints(topology: &Topology, start: &[Vec3], positions: &mut [Vec3], params: &SimParams) -> Vec<f64> {
    if topology.rigid_links.is_empty() {
        topology
            .struts
            .iter()
            .map(|link| project_link(topology, link, start, positions, params.dt))
            .collect()
    } else {
        project_coupled(topology, start, positions, params)
    }
}

fn project_link(topology: &Topology, link: &Link, start: &[Vec3], positions: &mut [Vec3], dt: f64) -> f64 {
    let d = positions[link.b] - positions[link.a];
    let r = start[link.b] - start[link.a];
    let rr = r.norm_squared();
    let dr = d.dot(&r);
    // Smallest μ with |d - μ r| = L.
    let disc = dr * dr - rr * (d.norm_squared() - link.length * link.length);
    if rr == 0.0 || disc < 0.0 {
        return 0.0;
    }
    let mu = (dr - disc.sqrt()) / rr;
    let wa = 1.0 / topology.masses[link.a];
    let wb = 1.0 / topology.masses[link.b];
    let corr = r * (mu / (wa + wb));
    positions[link.a] += corr * wa;
    positions[link.b] -= corr * wb;
    corr.norm().copysign(mu) / dt
}

fn project_coupled(topology: &Topology, start: &[Vec3], positions: &mut [Vec3], params: &SimParams) -> Vec<f64> {
    let links: Vec<&Link> = topology.constraints().collect();
    let m = links.len();
    let mut total = DVector::<f64>::zeros(m);
    let dirs: Vec<Vec3> = links.iter().map(|l| start[l.b] - start[l.a]).collect();
    // Displacement of node `i` per unit multiplier of link `l`.
    let shift = |l: usize, i: usize| -> Vec3 {
        let link = links[l];
        let w = 1.0 / topology.masses[i];
        if i == link.a {
            dirs[l] * w
        } else if i == link.b {
            -dirs[l] * w
        } else {
            Vec3::zeros()
        }
    };
    for _ in 0..params.constraint_iterations {
        let mut worst: f64 = 0.0;
        let mut g = DVector::<f64>::zeros(m);
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for (k, link) in links.iter().enumerate() {
            let d = positions[link.b] - positions[link.a];
            worst = worst.max((d.norm() - link.length).abs() / link.length);
            g[k] = d.norm_squared() - link.length * link.length;
            for l in 0..m {
                let dd = shift(l, link.b) - shift(l, link.a);
                jac[(k, l)] = 2.0 * d.dot(&dd);
            }
        }
        if worst < params.constraint_tolerance {
            break;
        }
        let Some(step) = jac.lu().solve(&(-g)) else {
            break;
        };
        for (l, link) in links.iter().enumerate() {
            positions[link.a] += shift(l, link.a) * step[l];
            positions[link.b] += shift(l, link.b) * step[l];
        }
        total += step;
    }
    total
        .iter()
        .zip(&dirs)
        .map(|(mu, r)| mu * r.norm() / params.dt)
        .collect()
}

/// Removes the relative velocity along every fixed-length link. Returns the
/// impulse each link applied, positive in tension.
fn project_velocities(topology: &Topology, positions: &[Vec3], velocities: &mut [Vec3]) -> Vec<f64> {
    let links: Vec<&Link> = topology.constraints().collect();
    let dirs: Vec<Vec3> = links
        .iter()
        .map(|l| (positions[l.b] - positions[l.a]).normalize())
        .collect();
    if topology.rigid_links.is_empty() {
        return links
            .iter()
            .zip(&dirs)
            .map(|(link, dir)| {
                let wa = 1.0 / topology.masses[link.a];
                let wb = 1.0 / topology.masses[link.b];
                let impulse = (velocities[link.b] - velocities[link.a]).dot(dir) / (wa + wb);
                velocities[link.a] += dir * (impulse * wa);
                velocities[link.b] -= dir * (impulse * wb);
                impulse
            })
            .collect();
    }

    let m = links.len();
    let shift = |l: usize, i: usize| -> Vec3 {
        let link = links[l];
        let w = 1.0 / topology.masses[i];
        if i == link.a {
            dirs[l] * w
        } else if i == link.b {
            -dirs[l] * w
        } else {
            Vec3::zeros()
        }
    };
    let mut rate = DVector::<f64>::zeros(m);
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for (k, link) in links.iter().enumerate() {
        rate[k] = (velocities[link.b] - velocities[link.a]).dot(&dirs[k]);
        for l in 0..m {
            jac[(k, l)] = dirs[k].dot(&(shift(l, link.b) - shift(l, link.a)));
        }
    }
    let Some(impulses) = jac.lu().solve(&(-rate)) else {
        return vec![0.0; m];
    };
    for (l, link) in links.iter().enumerate() {
        velocities[link.a] += shift(l, link.a) * impulses[l];
        velocities[link.b] += shift(l, link.b) * impulses[l];
    }
    impulses.iter().copied().collect()
}

/// Kinetic + gravitational + spring + ground-penalty energy (J).
pub fn mechanical_energy(topology: &Topology, state: &TensegrityState, params: &SimParams) -> f64 {
    let kinetic = state.kinetic_energy(topology);
    let gravity: f64 = topology
        .masses
        .iter()
        .zip(&state.positions)
        .map(|(m, p)| m * params.gravity * p.z)
        .sum();
    let springs: f64 = topology
        .springs
        .iter()
        .map(|s| {
            let len = (state.positions[s.b] - state.positions[s.a]).norm();
            let stretch = (len - s.rest_length).max(0.0);
            0.5 * s.stiffness * stretch * stretch
        })
        .sum();
    let ground: f64 = if params.ground_enabled {
        state
            .positions
            .iter()
            .map(|p| {
                let depth = (-p.z).max(0.0);
                0.5 * params.ground_stiffness * depth * depth
            })
            .sum()
    } else {
        0.0
    };
    kinetic + gravity + springs + ground
}

/// Dynamic relaxation: damped, unactuated simulation until the structure is
/// still. Leaves the state at rest with time and motor phases reset.
pub fn relax(topology: &Topology, state: &mut TensegrityState, params: &SimParams) -> Result<()> {
    let min_steps = (RELAX_MIN_TIME / params.dt).ceil() as usize;
    let off = [0.0; 3];
    for i in 1..=RELAX_MAX_STEPS {
        advance(topology, state, &off, params, params.relax_damping)?;
        if i >= min_steps
            && i % RELAX_CHECK_EVERY == 0
            && state.kinetic_energy(topology) < RELAX_KINETIC_ENERGY
            && state.max_speed() < RELAX_MAX_SPEED
        {
            for v in &mut state.velocities {
                *v = Vec3::zeros();
            }
            state.time = 0.0;
            state.motor_phases = [0.0; 3];
            return Ok(());
        }
    }
    Err(Error::Relaxation {
        steps: RELAX_MAX_STEPS,
        kinetic_energy: state.kinetic_energy(topology),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_tr6, centroid, Link, MotorMount, Variant};

    fn rest(variant: Variant) -> (Topology, TensegrityState, SimParams) {
        let params = SimParams::default();
        let (t, s) = build_tr6(variant, &params).unwrap();
        (t, s, params)
    }

    fn strut_drift(topo: &Topology, state: &TensegrityState) -> f64 {
        topo.constraints()
            .map(|l| ((state.positions[l.b] - state.positions[l.a]).norm() - l.length).abs() / l.length)
            .fold(0.0, f64::max)
    }

    #[test]
    fn spring_is_tension_only() {
        let s = Spring {
            a: 0,
            b: 1,
            stiffness: 100.0,
            rest_length: 0.02,
        };
        assert_eq!(spring_force(&s, 0.01), 0.0);
        assert_eq!(spring_force(&s, 0.02), 0.0);
        assert!((spring_force(&s, 0.03) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rest_pose_does_not_wander() {
        let (topo, mut state, params) = rest(Variant::Intact);
        let start = centroid(&state.positions);
        for _ in 0..15_000 {
            step(&topo, &mut state, &[0.0; 3], &params).unwrap();
        }
        let end = centroid(&state.positions);
        let drift = ((end.x - start.x).powi(2) + (end.y - start.y).powi(2)).sqrt();
        assert!(drift < 0.01, "drift {drift} m");
    }

    #[test]
    fn free_fall_is_ballistic() {
        let params = SimParams {
            ground_enabled: false,
            ..SimParams::default()
        };
        let (mut topo, mut state) = build_tr6(Variant::Intact, &SimParams::default()).unwrap();
        topo.springs.clear();
        let z0 = centroid(&state.positions).z;
        let steps = (0.1 / params.dt).round() as usize;
        for _ in 0..steps {
            step(&topo, &mut state, &[0.0; 3], &params).unwrap();
        }
        let t = state.time;
        let expected = z0 - 0.5 * params.gravity * t * t;
        let fall = z0 - expected;
        let got = z0 - centroid(&state.positions).z;
        assert!(((got - fall) / fall).abs() < 1e-3, "fell {got}, expected {fall}");
    }

    #[test]
    fn struts_hold_length_under_full_drive() {
        for variant in [Variant::Intact, Variant::Rigid] {
            let (topo, mut state, params) = rest(variant);
            for _ in 0..15_000 {
                step(&topo, &mut state, &[1.0, -0.7, 0.9], &params).unwrap();
                assert!(strut_drift(&topo, &state) < 1e-6);
            }
        }
    }

    #[test]
    fn stays_above_penetration_tolerance() {
        let (topo, mut state, params) = rest(Variant::Intact);
        for _ in 0..5_000 {
            step(&topo, &mut state, &[-1.0, 1.0, -1.0], &params).unwrap();
            assert!(state.positions.iter().all(|p| p.z > -2e-3));
        }
    }

    #[test]
    fn energy_never_increases_without_motors() {
        let (topo, mut state, params) = rest(Variant::Intact);
        // Kick the structure so the springs and ground are exercised.
        for (i, v) in state.velocities.iter_mut().enumerate() {
            *v = Vec3::new(0.05 * (i as f64).sin(), 0.05 * (i as f64).cos(), 0.1);
        }
        let mut e = mechanical_energy(&topo, &state, &params);
        for _ in 0..5_000 {
            step(&topo, &mut state, &[0.0; 3], &params).unwrap();
            let next = mechanical_energy(&topo, &state, &params);
            assert!(next <= e + 1e-9, "energy rose by {:e} at t={}", next - e, state.time);
            e = next;
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let (topo, s0, params) = rest(Variant::Intact);
        let run = || {
            let mut s = s0.clone();
            s.motor_phases = [0.3, 1.1, 2.9];
            for _ in 0..3_000 {
                step(&topo, &mut s, &[0.9, 0.2, -0.6], &params).unwrap();
            }
            s
        };
        let a = run();
        let b = run();
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert_eq!(p.as_slice(), q.as_slice());
        }
    }

    #[test]
    fn mirror_symmetry() {
        let (topo, s0, params) = rest(Variant::Intact);
        let mut a = s0.clone();
        a.motor_phases = [0.4, 2.2, 5.0];
        let mut b = a.clone();
        for p in &mut b.positions {
            p.x = -p.x;
        }
        b.motor_phases = a.motor_phases.map(|p| -p);
        let cmd = [0.8, -0.5, 0.3];
        let neg = cmd.map(|c| -c);
        for _ in 0..1_000 {
            step(&topo, &mut a, &cmd, &params).unwrap();
            step(&topo, &mut b, &neg, &params).unwrap();
        }
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((p.x + q.x).abs() < 1e-6 && (p.y - q.y).abs() < 1e-6 && (p.z - q.z).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_state_is_reported() {
        let (topo, mut state, params) = rest(Variant::Intact);
        state.velocities[0].x = f64::NAN;
        assert!(matches!(
            step(&topo, &mut state, &[0.0; 3], &params),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn unsettleable_params_fail_relaxation() {
        // A lone node hanging from nothing in free flight never comes to rest.
        let params = SimParams {
            ground_enabled: false,
            relax_damping: 0.0,
            ..SimParams::default()
        };
        let topo = Topology {
            masses: vec![0.01, 0.01],
            struts: vec![Link {
                a: 0,
                b: 1,
                length: 0.1,
            }],
            springs: vec![],
            rigid_links: vec![],
            motors: Vec::<MotorMount>::new(),
            markers: [0, 1, 0, 1],
        };
        let mut state = TensegrityState::at_rest(vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)]);
        let err = relax(&topo, &mut state, &params).unwrap_err();
        assert!(matches!(err, Error::Relaxation { .. }));
    }
}
