//! Sepsis-like ICU treatment simulator.
//!
//! A patient is four discrete vitals (heart rate, blood pressure, oxygen,
//! glucose) plus a latent diabetes flag. Actions are the 8 subsets of
//! {antibiotics, vasopressor, ventilation}; bit 0 is antibiotics, bit 1
//! vasopressor, bit 2 ventilation.
//!
//! * Three or more abnormal vitals: the patient dies (-1, absorbing).
//! * All vitals normal and no treatment given: discharge (+1, absorbing).
//! * Otherwise reward 0; episodes are truncated at the horizon.
//!
//! Each vital moves independently. A treated abnormal vital steps toward
//! normal with its treatment's effect probability; an untreated abnormal
//! vital steps further out with `drift_worse`; an untreated normal vital
//! leaves normal with `normal_exit`. Glucose has no treatment and
//! fluctuates more for diabetic patients. All rates are configuration.

use serde::{Deserialize, Serialize};

use crate::mdp::{MdpError, MdpFile, TabularMdp};

pub const NUM_ACTIONS: usize = 8;
pub const NUM_VITALS: usize = 4;

const HEART_RATE: usize = 0;
const BLOOD_PRESSURE: usize = 1;
const OXYGEN: usize = 2;
const GLUCOSE: usize = 3;

/// Discretization of one vital sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitalLevels {
    pub levels: usize,
    /// Index of the normal level.
    pub normal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SepsisDynamics {
    pub drift_worse: f64,
    pub normal_exit: f64,
    pub antibiotic_effect: f64,
    pub vasopressor_effect: f64,
    pub ventilation_effect: f64,
    pub glucose_fluctuation: f64,
    pub glucose_fluctuation_diabetic: f64,
    pub glucose_recovery: f64,
    pub glucose_recovery_diabetic: f64,
}

impl Default for SepsisDynamics {
    fn default() -> Self {
        Self {
            drift_worse: 0.1,
            normal_exit: 0.05,
            antibiotic_effect: 0.5,
            vasopressor_effect: 0.7,
            ventilation_effect: 0.7,
            glucose_fluctuation: 0.05,
            glucose_fluctuation_diabetic: 0.3,
            glucose_recovery: 0.3,
            glucose_recovery_diabetic: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SepsisConfig {
    /// Heart rate, blood pressure, oxygen, glucose.
    pub num_vital_levels: [VitalLevels; NUM_VITALS],
    /// Initial level distribution per vital.
    pub initial_levels: [Vec<f64>; NUM_VITALS],
    pub diabetes_prob: f64,
    pub horizon: usize,
    pub discount: f64,
    /// Hide glucose and diabetes from observations.
    pub partially_observed: bool,
    pub transition_params: SepsisDynamics,
}

impl Default for SepsisConfig {
    fn default() -> Self {
        Self {
            num_vital_levels: [
                VitalLevels { levels: 3, normal: 1 },
                VitalLevels { levels: 3, normal: 1 },
                VitalLevels { levels: 2, normal: 1 },
                VitalLevels { levels: 5, normal: 2 },
            ],
            initial_levels: [
                vec![0.2, 0.6, 0.2],
                vec![0.2, 0.6, 0.2],
                vec![0.3, 0.7],
                vec![0.05, 0.15, 0.6, 0.15, 0.05],
            ],
            diabetes_prob: 0.2,
            horizon: 20,
            discount: 1.0,
            partially_observed: false,
            transition_params: SepsisDynamics::default(),
        }
    }
}

/// Decoded patient state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatientState {
    Alive { vitals: [usize; NUM_VITALS], diabetic: bool },
    Dead,
    Discharged,
}

/// State-id layout for a [`SepsisConfig`].
#[derive(Debug, Clone)]
pub struct SepsisLayout {
    levels: [VitalLevels; NUM_VITALS],
    num_alive: usize,
}

impl SepsisLayout {
    pub fn new(config: &SepsisConfig) -> Self {
        let levels = config.num_vital_levels;
        let num_alive = levels.iter().map(|v| v.levels).product::<usize>() * 2;
        Self { levels, num_alive }
    }

    pub fn num_states(&self) -> usize {
        self.num_alive + 2
    }

    pub fn dead(&self) -> usize {
        self.num_alive
    }

    pub fn discharged(&self) -> usize {
        self.num_alive + 1
    }

    pub fn encode(&self, vitals: [usize; NUM_VITALS], diabetic: bool) -> usize {
        let mut idx = 0;
        for (v, spec) in vitals.iter().zip(&self.levels) {
            idx = idx * spec.levels + v;
        }
        idx * 2 + usize::from(diabetic)
    }

    pub fn decode(&self, state: usize) -> PatientState {
        if state == self.dead() {
            return PatientState::Dead;
        }
        if state == self.discharged() {
            return PatientState::Discharged;
        }
        let diabetic = state % 2 == 1;
        let mut rest = state / 2;
        let mut vitals = [0; NUM_VITALS];
        for i in (0..NUM_VITALS).rev() {
            vitals[i] = rest % self.levels[i].levels;
            rest /= self.levels[i].levels;
        }
        PatientState::Alive { vitals, diabetic }
    }

    pub fn abnormal_count(&self, vitals: &[usize; NUM_VITALS]) -> usize {
        vitals.iter().zip(&self.levels).filter(|(v, spec)| **v != spec.normal).count()
    }

    /// Observation id: full state, or `(hr, bp, o2)` plus the two terminals.
    fn observation(&self, state: usize, partially_observed: bool) -> usize {
        if !partially_observed {
            return state;
        }
        let visible: usize = self.levels[..GLUCOSE].iter().map(|v| v.levels).product();
        match self.decode(state) {
            PatientState::Dead => visible,
            PatientState::Discharged => visible + 1,
            PatientState::Alive { vitals, .. } => {
                let mut idx = 0;
                for i in 0..GLUCOSE {
                    idx = idx * self.levels[i].levels + vitals[i];
                }
                idx
            }
        }
    }
}

impl SepsisConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if !(0.0..=1.0).contains(&self.diabetes_prob) {
            return Err(MdpError::Invalid("diabetes_prob must lie in [0, 1]".into()));
        }
        if self.horizon == 0 {
            return Err(MdpError::EmptyHorizon);
        }
        for (i, (spec, init)) in self.num_vital_levels.iter().zip(&self.initial_levels).enumerate() {
            if spec.levels < 2 || spec.normal >= spec.levels {
                return Err(MdpError::Invalid(format!("vital {i}: need >= 2 levels and a normal level inside them")));
            }
            if init.len() != spec.levels || init.iter().any(|p| *p < 0.0) || init.iter().sum::<f64>() <= 0.0 {
                return Err(MdpError::Invalid(format!("vital {i}: initial distribution does not match its levels")));
            }
        }
        let d = &self.transition_params;
        for p in [
            d.drift_worse,
            d.normal_exit,
            d.antibiotic_effect,
            d.vasopressor_effect,
            d.ventilation_effect,
            d.glucose_fluctuation,
            d.glucose_fluctuation_diabetic,
            d.glucose_recovery,
            d.glucose_recovery_diabetic,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(MdpError::Invalid(format!("transition probability {p} outside [0, 1]")));
            }
        }
        if d.glucose_fluctuation + d.glucose_recovery > 1.0 || d.glucose_fluctuation_diabetic + d.glucose_recovery_diabetic > 1.0 {
            return Err(MdpError::Invalid("glucose fluctuation and recovery exceed probability one".into()));
        }
        Ok(())
    }

    /// Which treatment bit (if any) targets each vital.
    fn treatment_for(vital: usize) -> Option<usize> {
        match vital {
            HEART_RATE => Some(0),
            BLOOD_PRESSURE => Some(1),
            OXYGEN => Some(2),
            _ => None,
        }
    }

    fn effect(&self, vital: usize) -> f64 {
        let d = &self.transition_params;
        match vital {
            HEART_RATE => d.antibiotic_effect,
            BLOOD_PRESSURE => d.vasopressor_effect,
            _ => d.ventilation_effect,
        }
    }

    /// Next-level distribution of one vital.
    fn vital_step(&self, vital: usize, level: usize, action: usize, diabetic: bool) -> Vec<(usize, f64)> {
        let spec = self.num_vital_levels[vital];
        let d = &self.transition_params;
        let toward = |l: usize| if l < spec.normal { l + 1 } else { l - 1 };
        let away = |l: usize| -> Option<usize> {
            if l < spec.normal {
                l.checked_sub(1)
            } else if l + 1 < spec.levels {
                Some(l + 1)
            } else {
                None
            }
        };
        let neighbours: Vec<usize> = [level.checked_sub(1), (level + 1 < spec.levels).then_some(level + 1)]
            .into_iter()
            .flatten()
            .collect();
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
        let mut push = |l: usize, p: f64| {
            if p <= 0.0 {
                return;
            }
            match out.iter_mut().find(|(x, _)| *x == l) {
                Some(e) => e.1 += p,
                None => out.push((l, p)),
            }
        };

        if vital == GLUCOSE {
            let (fluct, recover) = if diabetic {
                (d.glucose_fluctuation_diabetic, d.glucose_recovery_diabetic)
            } else {
                (d.glucose_fluctuation, d.glucose_recovery)
            };
            if level == spec.normal {
                for &nb in &neighbours {
                    push(nb, fluct / neighbours.len() as f64);
                }
                push(level, 1.0 - fluct);
            } else {
                push(toward(level), recover);
                match away(level) {
                    Some(l) => push(l, fluct),
                    None => push(level, fluct),
                }
                push(level, 1.0 - fluct - recover);
            }
            return out;
        }

        let treated = Self::treatment_for(vital).is_some_and(|bit| action & (1 << bit) != 0);
        if level == spec.normal {
            if treated {
                push(level, 1.0);
            } else {
                for &nb in &neighbours {
                    push(nb, d.normal_exit / neighbours.len() as f64);
                }
                push(level, 1.0 - d.normal_exit);
            }
        } else if treated {
            let e = self.effect(vital);
            push(toward(level), e);
            push(level, 1.0 - e);
        } else {
            match away(level) {
                Some(l) => {
                    push(l, d.drift_worse);
                    push(level, 1.0 - d.drift_worse);
                }
                None => push(level, 1.0),
            }
        }
        out
    }
}

/// Builds the simulator as a tabular decision process.
pub fn build_sepsis(config: &SepsisConfig) -> Result<TabularMdp, MdpError> {
    config.validate()?;
    let layout = SepsisLayout::new(config);
    let n = layout.num_states();
    let (dead, discharged) = (layout.dead(), layout.discharged());
    let mut transition = vec![vec![vec![0.0; n]; NUM_ACTIONS]; n];
    let mut reward = vec![vec![vec![0.0; n]; NUM_ACTIONS]; n];

    for s in 0..n {
        let PatientState::Alive { vitals, diabetic } = layout.decode(s) else {
            for a in 0..NUM_ACTIONS {
                transition[s][a][s] = 1.0;
            }
            continue;
        };
        let abnormal = layout.abnormal_count(&vitals);
        for a in 0..NUM_ACTIONS {
            if abnormal >= 3 {
                transition[s][a][dead] = 1.0;
                reward[s][a][dead] = -1.0;
                continue;
            }
            if abnormal == 0 && a == 0 {
                transition[s][a][discharged] = 1.0;
                reward[s][a][discharged] = 1.0;
                continue;
            }
            let per_vital: Vec<Vec<(usize, f64)>> =
                (0..NUM_VITALS).map(|v| config.vital_step(v, vitals[v], a, diabetic)).collect();
            for &(hr, p0) in &per_vital[0] {
                for &(bp, p1) in &per_vital[1] {
                    for &(o2, p2) in &per_vital[2] {
                        for &(gl, p3) in &per_vital[3] {
                            let next = [hr, bp, o2, gl];
                            let p = p0 * p1 * p2 * p3;
                            if layout.abnormal_count(&next) >= 3 {
                                transition[s][a][dead] += p;
                                reward[s][a][dead] = -1.0;
                            } else {
                                transition[s][a][layout.encode(next, diabetic)] += p;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut initial = vec![0.0; n];
    let norm: Vec<f64> = config.initial_levels.iter().map(|v| v.iter().sum()).collect();
    for (s, slot) in initial.iter_mut().enumerate() {
        if let PatientState::Alive { vitals, diabetic } = layout.decode(s) {
            if layout.abnormal_count(&vitals) >= 3 {
                continue;
            }
            let mut p = if diabetic { config.diabetes_prob } else { 1.0 - config.diabetes_prob };
            for (i, &v) in vitals.iter().enumerate() {
                p *= config.initial_levels[i][v] / norm[i];
            }
            *slot = p;
        }
    }
    let total: f64 = initial.iter().sum();
    initial.iter_mut().for_each(|p| *p /= total);

    let observation_map = (0..n).map(|s| layout.observation(s, config.partially_observed)).collect();

    TabularMdp::from_file(MdpFile {
        num_states: n,
        num_actions: NUM_ACTIONS,
        horizon: config.horizon,
        discount: config.discount,
        transition,
        reward,
        initial,
        observation_map,
        reward_flip_prob: 0.0,
    })
}
