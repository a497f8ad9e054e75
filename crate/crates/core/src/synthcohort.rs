//! Synthetic cohorts with a planted, linear-Gaussian progression signal.
//!
//! Percent change over 24 months is generated as
//! `mean + sum_k w_k * z_k + noise`, where `z_k` are the standardized latent
//! values behind the designated informative columns. The noise variance is
//! chosen so the population R² of the linear signal equals `target_r2`.
//! Scores and device measures are then derived from it, so the files look
//! like any other cohort to the rest of the pipeline.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{
    find_lateral_pairs, Cohort, DeviceRun, Subject, Visit, BASELINE_COLUMN, N_CLINICAL, N_DEVICE,
    PART3_MAX, VISIT_MONTHS,
};
use crate::error::{Error, Result};
use crate::seed;

const SUBSCORES: [&str; 33] = [
    "part3_speech",
    "part3_facial_expression",
    "part3_rigidity_neck",
    "part3_rigidity_rue",
    "part3_rigidity_lue",
    "part3_rigidity_rle",
    "part3_rigidity_lle",
    "part3_finger_tapping_rh",
    "part3_finger_tapping_lh",
    "part3_hand_movements_rh",
    "part3_hand_movements_lh",
    "part3_pronation_supination_rh",
    "part3_pronation_supination_lh",
    "part3_toe_tapping_r",
    "part3_toe_tapping_l",
    "part3_leg_agility_r",
    "part3_leg_agility_l",
    "part3_arising_from_chair",
    "part3_gait",
    "part3_freezing_of_gait",
    "part3_postural_stability",
    "part3_posture",
    "part3_body_bradykinesia",
    "part3_postural_tremor_rh",
    "part3_postural_tremor_lh",
    "part3_kinetic_tremor_rh",
    "part3_kinetic_tremor_lh",
    "part3_rest_tremor_amplitude_rue",
    "part3_rest_tremor_amplitude_lue",
    "part3_rest_tremor_amplitude_rle",
    "part3_rest_tremor_amplitude_lle",
    "part3_rest_tremor_lip_jaw",
    "part3_rest_tremor_constancy",
];

/// Clinical subscores eligible to carry planted signal, in the order they are used.
const INFORMATIVE_CLINICAL: [&str; 12] = [
    "part3_rigidity_rue",
    "part3_finger_tapping_rh",
    "part3_toe_tapping_r",
    "part3_postural_stability",
    "part3_hand_movements_rh",
    "part3_gait",
    "part3_speech",
    "part3_leg_agility_r",
    "part3_body_bradykinesia",
    "part3_arising_from_chair",
    "part3_facial_expression",
    "part3_posture",
];

/// Subscores generated as one block with pairwise correlation ~0.9.
const CORRELATED_CLINICAL: [&str; 3] = [
    "part3_rest_tremor_amplitude_rue",
    "part3_rest_tremor_amplitude_lue",
    "part3_rest_tremor_amplitude_rle",
];

const LATERAL_STEMS: [&str; 11] = [
    "arm_swing_velocity",
    "arm_range_of_motion",
    "stride_length",
    "stride_velocity",
    "stance_phase",
    "swing_phase",
    "step_duration",
    "toe_out_angle",
    "foot_strike_angle",
    "toe_off_angle",
    "turn_velocity",
];

const N_PLAIN_DEVICE: usize = N_DEVICE - 2 * LATERAL_STEMS.len() * 2;
/// Plain device columns `0..CORRELATED_DEVICE` form blocks of four with r ~ 0.9.
const CORRELATED_DEVICE: usize = 20;
const DEVICE_BLOCK: usize = 4;
const BLOCK_R: f64 = 0.9;
const RUN_NOISE: f64 = 0.05;
const VISIT_NOISE: f64 = 0.3;
const SCORE_VISIT_NOISE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub month24_mean: f64,
    pub month24_sd: f64,
    pub fraction_male: f64,
    pub n_informative_clinical: usize,
    pub n_informative_gait: usize,
    /// Population R² of the linear signal on the informative columns.
    pub target_r2: f64,
    /// Standard deviation of the percent-change target.
    pub pct_change_sd: f64,
    /// Percent change independent of every column (overrides the signal).
    pub null_target: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_subjects: 160,
            baseline_mean: 16.0,
            baseline_sd: 7.9,
            month24_mean: 18.2,
            month24_sd: 7.6,
            fraction_male: 0.54,
            n_informative_clinical: 3,
            n_informative_gait: 0,
            target_r2: 0.5,
            pct_change_sd: 0.45,
            null_target: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    /// Column name in clinical.csv / device.csv.
    pub column: String,
    /// Column name in the built feature matrices.
    pub feature: String,
    /// Weight on the standardized latent value.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub informative: Vec<PlantedFeature>,
    pub pct_change_mean: f64,
    pub noise_sd: f64,
    pub target_r2: f64,
    pub null_target: bool,
}

pub fn clinical_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "age",
        "is_male",
        BASELINE_COLUMN,
        "ledd",
        "moca",
        "disease_duration_years",
        "hoehn_yahr",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(SUBSCORES.iter().map(|s| s.to_string()));
    debug_assert_eq!(names.len(), N_CLINICAL);
    names
}

fn plain_device_name(i: usize) -> String {
    if i < 60 {
        format!("itug_m{i:03}")
    } else {
        format!("isway_m{i:03}")
    }
}

pub fn device_names() -> Vec<String> {
    let mut names: Vec<String> = (0..N_PLAIN_DEVICE).map(plain_device_name).collect();
    for suffix in ["", "_cv"] {
        for stem in LATERAL_STEMS {
            names.push(format!("itug_{stem}{suffix}_left"));
            names.push(format!("itug_{stem}{suffix}_right"));
        }
    }
    debug_assert_eq!(names.len(), N_DEVICE);
    names
}

/// Plain device columns outside the correlated blocks, eligible for signal.
fn informative_gait_columns() -> impl Iterator<Item = usize> {
    CORRELATED_DEVICE..N_PLAIN_DEVICE
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be positive".into()));
        }
        if self.n_informative_clinical > INFORMATIVE_CLINICAL.len() {
            return Err(Error::Config(format!(
                "at most {} informative clinical columns",
                INFORMATIVE_CLINICAL.len()
            )));
        }
        if self.n_informative_gait > informative_gait_columns().count() {
            return Err(Error::Config("too many informative gait columns".into()));
        }
        if !(self.baseline_sd >= 0.0 && self.pct_change_sd > 0.0 && self.baseline_mean > 0.0) {
            return Err(Error::Config("invalid score moments".into()));
        }
        if !(0.0..=1.0).contains(&self.fraction_male) {
            return Err(Error::Config("fraction_male outside [0, 1]".into()));
        }
        if !self.null_target {
            if !(self.target_r2 > 0.0 && self.target_r2 < 1.0) {
                return Err(Error::Config("target_r2 must lie in (0, 1)".into()));
            }
            if self.n_informative_clinical + self.n_informative_gait == 0 {
                return Err(Error::Config(
                    "planted signal needs at least one informative column".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn pct_change_mean(&self) -> f64 {
        self.month24_mean / self.baseline_mean - 1.0
    }
}

/// Informative columns and their weights. Depends on the spec only, not the seed.
pub fn planted_truth(spec: &SynthSpec) -> Result<PlantedTruth> {
    spec.validate()?;
    let pct_change_mean = spec.pct_change_mean();
    if spec.null_target {
        return Ok(PlantedTruth {
            informative: Vec::new(),
            pct_change_mean,
            noise_sd: spec.pct_change_sd,
            target_r2: 0.0,
            null_target: true,
        });
    }
    let k = spec.n_informative_clinical + spec.n_informative_gait;
    let magnitude = (spec.target_r2 * spec.pct_change_sd.powi(2) / k as f64).sqrt();
    let sign = |i: usize| if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut informative: Vec<PlantedFeature> = INFORMATIVE_CLINICAL[..spec.n_informative_clinical]
        .iter()
        .map(|name| PlantedFeature {
            column: name.to_string(),
            feature: name.to_string(),
            weight: 0.0,
        })
        .collect();
    informative.extend(
        informative_gait_columns()
            .take(spec.n_informative_gait)
            .map(|c| {
                let name = plain_device_name(c);
                PlantedFeature {
                    feature: format!("base.{name}"),
                    column: name,
                    weight: 0.0,
                }
            }),
    );
    for (i, f) in informative.iter_mut().enumerate() {
        f.weight = sign(i) * magnitude;
    }
    if informative.iter().all(|f| f.weight == 0.0) {
        return Err(Error::Config("planted weights are all zero".into()));
    }
    Ok(PlantedTruth {
        informative,
        pct_change_mean,
        noise_sd: (spec.pct_change_sd.powi(2) * (1.0 - spec.target_r2)).sqrt(),
        target_r2: spec.target_r2,
        null_target: false,
    })
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn clip_score(v: f64) -> f64 {
    v.clamp(0.0, PART3_MAX)
}

pub fn generate_cohort(spec: &SynthSpec) -> Result<Cohort> {
    let truth = planted_truth(spec)?;
    let clinical_names = clinical_names();
    let device_names = device_names();
    let lateral_pairs = find_lateral_pairs(&device_names);
    let clin_idx = |name: &str| {
        clinical_names
            .iter()
            .position(|n| n == name)
            .expect("known clinical column")
    };
    let dev_idx = |name: &str| {
        device_names
            .iter()
            .position(|n| n == name)
            .expect("known device column")
    };

    // Fixed per-column location/scale and drift per 24 months (in sd units).
    let mut col_rng = seed::derived_rng(spec.seed, &[0]);
    let dev_mean: Vec<f64> = (0..N_DEVICE).map(|_| col_rng.gen_range(0.5..2.0)).collect();
    let dev_drift: Vec<f64> = (0..N_DEVICE)
        .map(|_| col_rng.gen_range(-0.3..0.3))
        .collect();

    let mut rng = seed::derived_rng(spec.seed, &[1]);
    let mut subjects = Vec::with_capacity(spec.n_subjects);
    for s in 0..spec.n_subjects {
        // Latent standardized values for every clinical subscore and device column.
        let mut clin_z: Vec<f64> = (0..N_CLINICAL).map(|_| normal(&mut rng)).collect();
        let shared = normal(&mut rng);
        for name in CORRELATED_CLINICAL {
            let i = clin_idx(name);
            clin_z[i] = BLOCK_R.sqrt() * shared + (1.0 - BLOCK_R).sqrt() * clin_z[i];
        }
        let mut dev_z: Vec<f64> = (0..N_DEVICE).map(|_| normal(&mut rng)).collect();
        for block in 0..CORRELATED_DEVICE / DEVICE_BLOCK {
            let shared = normal(&mut rng);
            for c in block * DEVICE_BLOCK..(block + 1) * DEVICE_BLOCK {
                dev_z[c] = BLOCK_R.sqrt() * shared + (1.0 - BLOCK_R).sqrt() * dev_z[c];
            }
        }

        let signal: f64 = truth
            .informative
            .iter()
            .map(|f| {
                let z = if f.feature.starts_with("base.") {
                    dev_z[dev_idx(&f.column)]
                } else {
                    clin_z[clin_idx(&f.column)]
                };
                f.weight * z
            })
            .sum();
        let pct = truth.pct_change_mean + signal + truth.noise_sd * normal(&mut rng);

        let baseline =
            (spec.baseline_mean + spec.baseline_sd * normal(&mut rng)).clamp(1.0, PART3_MAX);
        let month24 = clip_score(baseline * (1.0 + pct));
        let is_male = rng.gen_bool(spec.fraction_male);

        let mut clinical = vec![0.0; N_CLINICAL];
        for (i, name) in clinical_names.iter().enumerate() {
            let z = clin_z[i];
            clinical[i] = match name.as_str() {
                "age" => 64.5 + 9.5 * z,
                "is_male" => f64::from(u8::from(is_male)),
                BASELINE_COLUMN => baseline,
                "ledd" => (400.0 + 250.0 * z).max(0.0),
                "moca" => 26.0 + 3.0 * z,
                "disease_duration_years" => (3.0 + 2.0 * z).abs(),
                "hoehn_yahr" => 2.0 + 0.5 * z,
                _ => 1.0 + 0.8 * z,
            };
        }

        // Subject-level asymmetry of each lateral pair.
        let asym: Vec<f64> = lateral_pairs
            .iter()
            .map(|_| 0.05 + 0.08 * normal(&mut rng))
            .collect();
        let mut visits = Vec::with_capacity(VISIT_MONTHS.len());
        for &month in &VISIT_MONTHS {
            let frac = f64::from(month) / 24.0;
            let score = match month {
                0 => baseline,
                24 => month24,
                _ => clip_score(
                    baseline + (month24 - baseline) * frac + SCORE_VISIT_NOISE * normal(&mut rng),
                ),
            };
            let visit_value: Vec<f64> = (0..N_DEVICE)
                .map(|c| {
                    let sd = 0.25 * dev_mean[c];
                    let visit_noise = if month == 0 {
                        0.0
                    } else {
                        VISIT_NOISE * normal(&mut rng)
                    };
                    dev_mean[c] + sd * (dev_z[c] + dev_drift[c] * frac + visit_noise)
                })
                .collect();
            let runs = (1..=3u8)
                .map(|run| {
                    let mut values: Vec<f64> = (0..N_DEVICE)
                        .map(|c| visit_value[c] + RUN_NOISE * 0.25 * dev_mean[c] * normal(&mut rng))
                        .collect();
                    for (p, a) in lateral_pairs.iter().zip(&asym) {
                        let right = values[p.right].max(0.1);
                        values[p.right] = right;
                        values[p.left] = right * (1.0 - a)
                            + RUN_NOISE * 0.25 * dev_mean[p.left] * normal(&mut rng);
                    }
                    DeviceRun { run, values }
                })
                .collect();
            visits.push(Visit {
                month,
                part3_total: Some(score),
                runs,
            });
        }

        subjects.push(Subject {
            id: format!("S{:04}", s + 1),
            age: Some(clinical[clin_idx("age")]),
            is_male: Some(is_male),
            clinical,
            visits,
        });
    }

    let cohort = Cohort {
        clinical_names,
        device_measure_names: device_names,
        lateral_pairs,
        subjects,
    };
    cohort.validate()?;
    Ok(cohort)
}
