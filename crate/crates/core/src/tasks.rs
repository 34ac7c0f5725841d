//! Episode protocol: policy encoding, the 3-second trial, yaw abort and the
//! speed performance.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bo::Outcome;
use crate::error::{Error, Result};
use crate::sim::{
    build_tr6, centroid, marker_heights, measure_yaw, step, SimParams, TensegrityState, Topology, TrajectorySample,
    Variant,
};

/// Three motor commands in optimizer space, `χ ∈ [0,1]³`. `0.5` is a stopped
/// motor, `0` full reverse, `1` full forward.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Policy {
    chi: [f64; 3],
}

impl Policy {
    pub fn new(chi: [f64; 3]) -> Result<Self> {
        if chi.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::param("chi", format!("{chi:?} leaves [0,1]³")));
        }
        Ok(Self { chi })
    }

    /// Motors stopped.
    pub fn zero() -> Self {
        Self { chi: [0.5; 3] }
    }

    /// From signed commands in `[-1, 1]` (clamped).
    pub fn from_commands(v: [f64; 3]) -> Self {
        Self {
            chi: v.map(|v| (v.clamp(-1.0, 1.0) + 1.0) / 2.0),
        }
    }

    /// Uniform draw from `[0,1]³`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            chi: std::array::from_fn(|_| rng.random::<f64>()),
        }
    }

    pub fn chi(&self) -> [f64; 3] {
        self.chi
    }

    /// Signed commands `v = 2(χ - 0.5)`.
    pub fn commands(&self) -> [f64; 3] {
        self.chi.map(|c| 2.0 * (c - 0.5))
    }
}

/// Length of a trial, s.
pub const EPISODE_DURATION: f64 = 3.0;
/// Trials stop once the robot has turned this far, rad.
pub const YAW_LIMIT: f64 = 1.0;
/// Yaw is checked at this cadence, s.
pub const YAW_INTERVAL: f64 = 0.01;
/// Marker heights are sampled at this cadence, s.
pub const MARKER_INTERVAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeOptions {
    pub duration: f64,
    pub yaw_limit: f64,
    pub yaw_interval: f64,
    pub marker_interval: f64,
    pub abort_on_yaw: bool,
    /// Keep a [`TrajectorySample`] at every yaw check.
    pub record_trajectory: bool,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            duration: EPISODE_DURATION,
            yaw_limit: YAW_LIMIT,
            yaw_interval: YAW_INTERVAL,
            marker_interval: MARKER_INTERVAL,
            abort_on_yaw: true,
            record_trajectory: false,
        }
    }
}

impl EpisodeOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("duration", self.duration),
            ("yaw_interval", self.yaw_interval),
            ("marker_interval", self.marker_interval),
            ("yaw_limit", self.yaw_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Speed in cm/s: `distance / duration`, with the full duration as
    /// divisor even when the trial was cut short.
    pub performance: f64,
    /// Horizontal centroid displacement from start to end, cm.
    pub distance: f64,
    pub duration_simulated: f64,
    pub aborted_by_yaw: bool,
    /// Yaw at the last check, rad.
    pub yaw_final: f64,
    /// Heights of the four markers, m, one row per sample.
    pub marker_trace: Vec<[f64; 4]>,
    pub trajectory: Option<Vec<TrajectorySample>>,
}

impl EpisodeResult {
    /// Vertical excursion of the markers, m: for each marker the highest
    /// minus the lowest height over the trace, then the largest of the four.
    pub fn marker_amplitude(&self) -> f64 {
        (0..4)
            .map(|m| {
                let (lo, hi) = self
                    .marker_trace
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                        (lo.min(row[m]), hi.max(row[m]))
                    });
                if hi >= lo {
                    hi - lo
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

impl From<&EpisodeResult> for Outcome {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            performance: r.performance,
            aborted: r.aborted_by_yaw,
        }
    }
}

impl From<EpisodeResult> for Outcome {
    fn from(r: EpisodeResult) -> Self {
        Self::from(&r)
    }
}

/// A relaxed robot ready for trials. Building relaxes the structure once;
/// every trial starts from that rest pose.
#[derive(Debug, Clone)]
pub struct Robot {
    variant: Variant,
    params: SimParams,
    topology: Topology,
    rest: TensegrityState,
}

impl Robot {
    pub fn build(variant: Variant, params: &SimParams) -> Result<Self> {
        let (topology, rest) = build_tr6(variant, params)?;
        Ok(Self {
            variant,
            params: params.clone(),
            topology,
            rest,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn rest_state(&self) -> &TensegrityState {
        &self.rest
    }

    /// A standard 3 s trial from the rest pose. The seed fixes the initial
    /// rotor phases.
    pub fn evaluate(&self, policy: &Policy, seed: u64) -> Result<EpisodeResult> {
        self.evaluate_with(policy, seed, &EpisodeOptions::default())
    }

    pub fn evaluate_with(&self, policy: &Policy, seed: u64, options: &EpisodeOptions) -> Result<EpisodeResult> {
        self.evaluate_from(self.rest.clone(), policy, seed, options)
    }

    /// Runs a trial from an arbitrary start state.
    pub fn evaluate_from(
        &self,
        mut state: TensegrityState,
        policy: &Policy,
        seed: u64,
        options: &EpisodeOptions,
    ) -> Result<EpisodeResult> {
        options.validate()?;
        let wrap = |e: Error| Error::Evaluation {
            chi: policy.chi(),
            source: Box::new(e),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        state.motor_phases = std::array::from_fn(|_| rng.random_range(0.0..TAU));
        state.time = 0.0;

        let dt = self.params.dt;
        let steps = (options.duration / dt).round() as usize;
        let yaw_every = ((options.yaw_interval / dt).round() as usize).max(1);
        let marker_every = ((options.marker_interval / dt).round() as usize).max(1);
        let commands = policy.commands();
        let initial = state.clone();
        let start = centroid(&state.positions);

        let mut marker_trace = Vec::with_capacity(steps / marker_every + 2);
        marker_trace.push(marker_heights(&state, &self.topology.markers));
        let mut trajectory = options.record_trajectory.then(|| {
            vec![TrajectorySample {
                time: 0.0,
                positions: state.positions.clone(),
                yaw: 0.0,
            }]
        });
        let mut yaw = 0.0;
        let mut aborted = false;
        let mut done = 0;
        for i in 1..=steps {
            done = i;
            step(&self.topology, &mut state, &commands, &self.params).map_err(wrap)?;
            if i % marker_every == 0 {
                marker_trace.push(marker_heights(&state, &self.topology.markers));
            }
            if i % yaw_every == 0 || i == steps {
                yaw = measure_yaw(&initial, &state).map_err(wrap)?;
                if let Some(t) = trajectory.as_mut() {
                    t.push(TrajectorySample {
                        time: state.time,
                        positions: state.positions.clone(),
                        yaw,
                    });
                }
                if options.abort_on_yaw && yaw.abs() > options.yaw_limit {
                    aborted = true;
                    break;
                }
            }
        }

        let end = centroid(&state.positions);
        let distance = 100.0 * (end - start).xy().norm();
        Ok(EpisodeResult {
            performance: distance / options.duration,
            distance,
            duration_simulated: (done as f64 * dt).min(options.duration),
            aborted_by_yaw: aborted,
            yaw_final: yaw,
            marker_trace,
            trajectory,
        })
    }
}

/// Builds the variant and runs one standard trial.
pub fn evaluate(policy: &Policy, variant: Variant, params: &SimParams, seed: u64) -> Result<EpisodeResult> {
    Robot::build(variant, params)?.evaluate(policy, seed)
}

/// Marker amplitude (m) of `n_gaits` uniformly random gaits run for the
/// full duration without yaw abort.
pub fn random_gait_amplitude_study(
    variant: Variant,
    params: &SimParams,
    n_gaits: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let robot = Robot::build(variant, params)?;
    let options = EpisodeOptions {
        abort_on_yaw: false,
        ..EpisodeOptions::default()
    };
    amplitude_study(&robot, n_gaits, seed, &options)
}

/// Marker amplitude (m) of `n_gaits` uniformly random gaits. Gaits run in
/// parallel; the result order follows the draw order.
pub fn amplitude_study(robot: &Robot, n_gaits: usize, seed: u64, options: &EpisodeOptions) -> Result<Vec<f64>> {
    if n_gaits == 0 {
        return Err(Error::param("n_gaits", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaits: Vec<(Policy, u64)> = (0..n_gaits).map(|_| (Policy::random(&mut rng), rng.random())).collect();
    gaits
        .par_iter()
        .map(|(policy, phase_seed)| Ok(robot.evaluate_with(policy, *phase_seed, options)?.marker_amplitude()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{read_trajectory_csv, write_trajectory_csv};
    use proptest::prelude::*;

    fn calibrated() -> SimParams {
        SimParams {
            motor_eccentricity: 1e-6,
            ..SimParams::default()
        }
    }

    #[test]
    fn command_mapping_endpoints() {
        assert_eq!(Policy::zero().commands(), [0.0; 3]);
        assert_eq!(Policy::new([0.0, 1.0, 0.5]).unwrap().commands(), [-1.0, 1.0, 0.0]);
        assert!(Policy::new([1.01, 0.5, 0.5]).is_err());
        assert!(Policy::new([0.5, -0.01, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn command_round_trip_is_exact(chi in prop::array::uniform3(0.0f64..=1.0)) {
            let p = Policy::new(chi).unwrap();
            let back = Policy::from_commands(p.commands());
            for (a, b) in back.chi().iter().zip(&chi) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn stopped_motors_do_not_travel() {
        let robot = Robot::build(Variant::Intact, &SimParams::default()).unwrap();
        let r = robot.evaluate(&Policy::zero(), 3).unwrap();
        assert!(r.performance < 0.4, "{}", r.performance);
        assert!(!r.aborted_by_yaw);
        assert!((r.duration_simulated - EPISODE_DURATION).abs() < 1e-12);
        assert!(r.marker_amplitude() < 1e-3);
    }

    #[test]
    fn spinner_is_aborted_early() {
        let robot = Robot::build(Variant::Intact, &SimParams::default()).unwrap();
        let lattice = [0.0, 0.25, 0.75, 1.0];
        let mut chis = Vec::new();
        for a in lattice {
            for b in lattice {
                for c in lattice {
                    chis.push([a, b, c]);
                }
            }
        }
        let spinner = chis
            .into_iter()
            .map(|chi| robot.evaluate(&Policy::new(chi).unwrap(), 0).unwrap())
            .find(|r| r.aborted_by_yaw)
            .expect("some policy on the lattice turns past the yaw limit");
        assert!(spinner.yaw_final.abs() > YAW_LIMIT);
        assert!(spinner.duration_simulated < EPISODE_DURATION);
        assert_eq!(spinner.performance, spinner.distance / 3.0);
    }

    #[test]
    fn performance_matches_the_trajectory_dump() {
        let robot = Robot::build(Variant::Intact, &calibrated()).unwrap();
        let options = EpisodeOptions {
            record_trajectory: true,
            ..EpisodeOptions::default()
        };
        let r = robot
            .evaluate_with(&Policy::from_commands([1.0, -1.0, 1.0]), 5, &options)
            .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, r.trajectory.as_ref().unwrap()).unwrap();
        let samples = read_trajectory_csv(&buf[..]).unwrap();
        let plane_centroid = |s: &TrajectorySample| {
            let n = s.positions.len() as f64;
            let x: f64 = s.positions.iter().map(|p| p.x).sum::<f64>() / n;
            let y: f64 = s.positions.iter().map(|p| p.y).sum::<f64>() / n;
            (x, y)
        };
        let (x0, y0) = plane_centroid(samples.first().unwrap());
        let (x1, y1) = plane_centroid(samples.last().unwrap());
        let distance_cm = 100.0 * ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        assert!(r.distance > 1.0);
        assert!((distance_cm - r.distance).abs() < 1e-9);
        assert!((distance_cm / 3.0 - r.performance).abs() < 1e-9);
        assert_eq!(samples.len(), 301);
        assert!((samples.last().unwrap().time - 3.0).abs() < 1e-9);
    }

    #[test]
    fn translation_does_not_change_performance() {
        let robot = Robot::build(Variant::Intact, &calibrated()).unwrap();
        let policy = Policy::from_commands([-1.0, 1.0, -0.8]);
        let options = EpisodeOptions::default();
        let base = robot.evaluate_with(&policy, 9, &options).unwrap();
        let mut moved = robot.rest_state().clone();
        moved.translate_horizontal(0.37, -1.25);
        let shifted = robot.evaluate_from(moved, &policy, 9, &options).unwrap();
        assert!(base.performance > 0.5);
        assert!((base.performance - shifted.performance).abs() < 1e-6 * base.performance);
        assert_eq!(base.aborted_by_yaw, shifted.aborted_by_yaw);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let params = calibrated();
        let policy = Policy::new([0.9, 0.1, 0.7]).unwrap();
        let a = evaluate(&policy, Variant::Damaged(2), &params, 17).unwrap();
        let b = evaluate(&policy, Variant::Damaged(2), &params, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_only_moves_the_rotor_phases() {
        let robot = Robot::build(Variant::Intact, &calibrated()).unwrap();
        let policy = Policy::from_commands([1.0, 1.0, -1.0]);
        let a = robot.evaluate(&policy, 1).unwrap();
        let b = robot.evaluate(&policy, 2).unwrap();
        assert_ne!(a.performance, b.performance);
        assert!((a.performance - b.performance).abs() < 0.2 * a.performance);
    }

    #[test]
    fn instability_reports_the_policy() {
        let params = SimParams {
            motor_eccentricity: 1e306,
            ..SimParams::default()
        };
        let robot = Robot::build(Variant::Intact, &params).unwrap();
        let chi = [1.0, 0.0, 1.0];
        match robot.evaluate(&Policy::new(chi).unwrap(), 0) {
            Err(Error::Evaluation { chi: got, .. }) => assert_eq!(got, chi),
            other => panic!("expected an evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn amplitudes_are_non_negative_and_ordered_by_draw() {
        let robot = Robot::build(Variant::Intact, &calibrated()).unwrap();
        let options = EpisodeOptions {
            duration: 0.5,
            abort_on_yaw: false,
            ..EpisodeOptions::default()
        };
        let a = amplitude_study(&robot, 6, 4, &options).unwrap();
        let b = amplitude_study(&robot, 6, 4, &options).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x > 0.0));
        assert!(amplitude_study(&robot, 0, 4, &options).is_err());
    }

    #[test]
    fn amplitude_is_per_marker() {
        let r = EpisodeResult {
            performance: 0.0,
            distance: 0.0,
            duration_simulated: 0.0,
            aborted_by_yaw: false,
            yaw_final: 0.0,
            marker_trace: vec![[0.0, 1.0, 2.0, 3.0], [0.5, 1.2, 2.0, 3.0], [0.1, 1.1, 2.0, 3.0]],
            trajectory: None,
        };
        assert!((r.marker_amplitude() - 0.5).abs() < 1e-15);
    }
}
