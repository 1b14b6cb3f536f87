use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::stochastic::{Density, RngStream};

use super::models::{wrap_angle, DynamicsModel};
use super::spec::{Schedule, ScenarioSpec, Station, TruthRule};
use super::ScenarioError;

/// Sidereal rotation rate of the Earth, rad/s.
pub const EARTH_ROTATION: f64 = 7.292_115_9e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub step: usize,
    pub time: f64,
    pub observation: Vec<f64>,
    /// False when the sensor cannot see the target; filters skip the record.
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub initial: Vec<f64>,
    /// True state at each record.
    pub states: Vec<Vec<f64>>,
    pub records: Vec<ObservationRecord>,
}

/// Observation (or candidate) times of a schedule.
pub fn observation_times(schedule: &Schedule, t0: f64) -> Vec<f64> {
    match *schedule {
        Schedule::Single { time } => vec![time],
        Schedule::Uniform { dt, steps } => (1..=steps).map(|i| t0 + dt * i as f64).collect(),
        Schedule::Bursts {
            count,
            spacing,
            period,
            windows,
            start,
        } => (0..windows)
            .flat_map(|w| (0..count).map(move |j| start + period * w as f64 + spacing * j as f64))
            .collect(),
        Schedule::Station { spacing, horizon, .. } => {
            let n = (horizon / spacing).floor() as usize;
            (1..=n).map(|i| t0 + spacing * i as f64).collect()
        }
    }
}

/// Elevation of `r` above the horizon of the rotating station, radians.
pub fn station_elevation(station: &Station, radius: f64, r: &[f64], t: f64) -> f64 {
    let lat = station.latitude.to_radians();
    let lon = station.longitude.to_radians() + EARTH_ROTATION * t;
    let up = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
    let d = Vector3::new(r[0], r[1], r[2]) - up * radius;
    (d.dot(&up) / d.norm()).asin()
}

/// Draws a truth trajectory and its noisy observations.
pub fn simulate_truth(spec: &ScenarioSpec, rng: &mut RngStream) -> Result<Truth, ScenarioError> {
    spec.validate()?;
    let system = spec.system()?;
    let times = observation_times(&spec.schedule, spec.t0);

    if let TruthRule::FixedObservation { observation, state } = &spec.truth {
        let state = match state {
            Some(s) => s.clone(),
            None => super::reference::posterior_mean(spec, observation)?.as_slice().to_vec(),
        };
        let records = times
            .iter()
            .enumerate()
            .map(|(step, &time)| ObservationRecord {
                step,
                time,
                observation: observation.clone(),
                visible: true,
            })
            .collect();
        return Ok(Truth {
            initial: state.clone(),
            states: vec![state; times.len()],
            records,
        });
    }

    let initial: Vec<f64> = match &spec.truth {
        TruthRule::SamplePrior => spec.prior()?.sample(1, rng)?.remove(0).as_slice().to_vec(),
        TruthRule::Fixed { state } => state.clone(),
        TruthRule::FixedObservation { .. } => unreachable!(),
    };
    let mask = spec.measurement.angle_mask();
    let mut x = initial.clone();
    let mut t = spec.t0;
    let mut states = Vec::with_capacity(times.len());
    let mut records = Vec::with_capacity(times.len());
    for (step, &time) in times.iter().enumerate() {
        x = system.dynamics.propagate(&x, step, t, time)?;
        if let Some(q) = &system.process_noise {
            let nu = q.sample(1, rng)?.remove(0);
            x.iter_mut().zip(nu.iter()).for_each(|(a, b)| *a += b);
        }
        t = time;
        let clean = spec.measurement.measure(&x)?;
        let noise = system.measurement_noise.sample(1, rng)?.remove(0);
        let observation = clean
            .iter()
            .zip(noise.iter())
            .zip(&mask)
            .map(|((y, e), &angle)| if angle { wrap_angle(y + e) } else { y + e })
            .collect();
        let visible = match (&spec.schedule, &spec.dynamics) {
            (Schedule::Station { station, .. }, DynamicsModel::Orbit(m)) => {
                station_elevation(station, m.radius, &x, time) >= station.mask.to_radians()
            }
            _ => true,
        };
        states.push(x.clone());
        records.push(ObservationRecord {
            step,
            time,
            observation,
            visible,
        });
    }
    Ok(Truth {
        initial,
        states,
        records,
    })
}

/// Noise-free observation of `x`; handy for checks.
pub fn noiseless(spec: &ScenarioSpec, x: &[f64]) -> Result<DVector<f64>, ScenarioError> {
    Ok(DVector::from_vec(spec.measurement.measure(x)?))
}
