//! Longitudinal cohort: parsing, validation, regression targets.
//!
//! Two CSV files describe a cohort. `clinical.csv` has one row per subject
//! (`subject_id` followed by 40 clinical measures, `part3_baseline_total`
//! among them). `device.csv` has one row per (subject, visit, run) with
//! `subject_id, visit_month, run, part3_total` followed by 148 device
//! measures; lateralized measures come in `<stem>_left` / `<stem>_right`
//! pairs (22 of them). Empty cells (or `NA`) are missing values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VISIT_MONTHS: [u32; 5] = [0, 6, 12, 18, 24];
pub const N_CLINICAL: usize = 40;
pub const N_DEVICE: usize = 148;
pub const N_LATERAL_PAIRS: usize = 22;
pub const PART3_MAX: f64 = 132.0;
pub const BASELINE_COLUMN: &str = "part3_baseline_total";
pub const DEFAULT_FAST_THRESHOLD: f64 = 0.20;

const DEVICE_KEY_COLUMNS: [&str; 4] = ["subject_id", "visit_month", "run", "part3_total"];

/// One device recording (a single run of the gait and sway tasks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRun {
    pub run: u8,
    /// Aligned to `Cohort::device_measure_names`; NaN marks a missing value.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub month: u32,
    pub part3_total: Option<f64>,
    pub runs: Vec<DeviceRun>,
}

impl Visit {
    /// Per-measure median over runs, ignoring missing values. A measure
    /// missing in every run stays NaN.
    pub fn median_measures(&self, n_measures: usize) -> Vec<f64> {
        let mut scratch = Vec::with_capacity(self.runs.len());
        (0..n_measures)
            .map(|m| {
                scratch.clear();
                scratch.extend(
                    self.runs
                        .iter()
                        .map(|r| r.values[m])
                        .filter(|v| v.is_finite()),
                );
                median_of_runs(&scratch).unwrap_or(f64::NAN)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub age: Option<f64>,
    pub is_male: Option<bool>,
    /// Aligned to `Cohort::clinical_names`.
    pub clinical: Vec<f64>,
    /// Sorted by month.
    pub visits: Vec<Visit>,
}

impl Subject {
    pub fn visit(&self, month: u32) -> Option<&Visit> {
        self.visits.iter().find(|v| v.month == month)
    }

    pub fn score(&self, month: u32) -> Option<f64> {
        self.visit(month).and_then(|v| v.part3_total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LateralPair {
    pub stem: String,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub clinical_names: Vec<String>,
    pub device_measure_names: Vec<String>,
    pub lateral_pairs: Vec<LateralPair>,
    pub subjects: Vec<Subject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetKind {
    Score24,
    Delta24,
    PctChange24,
}

impl TargetKind {
    pub const ALL: [TargetKind; 3] = [Self::Score24, Self::Delta24, Self::PctChange24];

    pub fn name(self) -> &'static str {
        match self {
            Self::Score24 => "Score24",
            Self::Delta24 => "Delta24",
            Self::PctChange24 => "PctChange24",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown target kind {s:?}")))
    }
}

/// Why a subject was left out of the parsed cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exclusion {
    MissingBaselineScore,
    MissingMonth24Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCohort {
    pub cohort: Cohort,
    pub excluded: Vec<(String, Exclusion)>,
}

impl ParsedCohort {
    pub fn warning_count(&self) -> usize {
        self.excluded.len()
    }
}

/// Exact median; the mean of the two central order statistics for even counts.
pub fn median_of_runs(runs: &[f64]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Empty("median of an empty run list".into()));
    }
    let mut sorted = runs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

pub fn compute_target(subject: &Subject, kind: TargetKind) -> Result<f64> {
    let baseline = subject
        .score(0)
        .ok_or_else(|| Error::Undefined(format!("{}: no baseline score", subject.id)))?;
    let month24 = subject
        .score(24)
        .ok_or_else(|| Error::Undefined(format!("{}: no month-24 score", subject.id)))?;
    match kind {
        TargetKind::Score24 => Ok(month24),
        TargetKind::Delta24 => Ok(month24 - baseline),
        TargetKind::PctChange24 => {
            if baseline == 0.0 {
                Err(Error::Undefined(format!(
                    "{}: percent change with zero baseline",
                    subject.id
                )))
            } else {
                Ok((month24 - baseline) / baseline)
            }
        }
    }
}

/// Inclusive: a change exactly at the threshold counts as fast.
pub fn label_fast_progressor(pct_change: f64, threshold: f64) -> bool {
    pct_change >= threshold
}

impl Cohort {
    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s.id == id)
    }

    pub fn clinical_index(&self, name: &str) -> Option<usize> {
        self.clinical_names.iter().position(|n| n == name)
    }

    /// Subjects with a defined target of the given kind, with their values.
    pub fn targets(&self, kind: TargetKind) -> (Vec<usize>, Vec<f64>) {
        self.subjects
            .iter()
            .enumerate()
            .filter_map(|(i, s)| compute_target(s, kind).ok().map(|t| (i, t)))
            .unzip()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clinical_names.len() != N_CLINICAL {
            return Err(Error::Schema(format!(
                "expected {N_CLINICAL} clinical measures, found {}",
                self.clinical_names.len()
            )));
        }
        if !self.clinical_names.iter().any(|n| n == BASELINE_COLUMN) {
            return Err(Error::Schema(format!("missing column {BASELINE_COLUMN}")));
        }
        if self.device_measure_names.len() != N_DEVICE {
            return Err(Error::Schema(format!(
                "expected {N_DEVICE} device measures, found {}",
                self.device_measure_names.len()
            )));
        }
        if self.lateral_pairs.len() != N_LATERAL_PAIRS {
            return Err(Error::Schema(format!(
                "expected {N_LATERAL_PAIRS} lateral pairs, found {}",
                self.lateral_pairs.len()
            )));
        }
        check_unique("clinical", &self.clinical_names)?;
        check_unique("device", &self.device_measure_names)?;
        for p in &self.lateral_pairs {
            if p.left >= N_DEVICE || p.right >= N_DEVICE {
                return Err(Error::Schema(format!(
                    "lateral pair {} out of range",
                    p.stem
                )));
            }
        }
        let mut ids = HashSet::new();
        for s in &self.subjects {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Duplicate(format!("subject {}", s.id)));
            }
            if s.clinical.len() != N_CLINICAL {
                return Err(Error::Dimension {
                    expected: N_CLINICAL,
                    got: s.clinical.len(),
                });
            }
            if s.score(0).is_none() {
                return Err(Error::Schema(format!("{}: no baseline visit score", s.id)));
            }
            for v in &s.visits {
                if !VISIT_MONTHS.contains(&v.month) {
                    return Err(Error::OutOfRange(format!(
                        "{}: visit month {}",
                        s.id, v.month
                    )));
                }
                if let Some(score) = v.part3_total {
                    check_score(score, &s.id)?;
                }
                for r in &v.runs {
                    if r.values.len() != N_DEVICE {
                        return Err(Error::Dimension {
                            expected: N_DEVICE,
                            got: r.values.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::Duplicate(format!("{what} column {n}")));
        }
    }
    Ok(())
}

fn check_score(score: f64, id: &str) -> Result<()> {
    if !(0.0..=PART3_MAX).contains(&score) {
        return Err(Error::OutOfRange(format!(
            "{id}: part III total {score} outside [0, {PART3_MAX}]"
        )));
    }
    Ok(())
}

fn parse_cell(raw: &str, what: &str) -> Result<f64> {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    let v: f64 = t
        .parse()
        .map_err(|_| Error::Schema(format!("{what}: cannot parse {t:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{what}: {t}")));
    }
    Ok(v)
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Pair up `<stem>_left` / `<stem>_right` columns, ordered by the left column.
pub fn find_lateral_pairs(names: &[String]) -> Vec<LateralPair> {
    let index: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    names
        .iter()
        .enumerate()
        .filter_map(|(left, n)| {
            let stem = n.strip_suffix("_left")?;
            let right = *index.get(format!("{stem}_right").as_str())?;
            Some(LateralPair {
                stem: stem.to_string(),
                left,
                right,
            })
        })
        .collect()
}

pub fn parse_cohort<C: Read, D: Read>(clinical_csv: C, device_csv: D) -> Result<ParsedCohort> {
    let mut clin = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(clinical_csv);
    let header = clin.headers()?.clone();
    if header.get(0) != Some("subject_id") {
        return Err(Error::Schema(
            "clinical.csv must start with subject_id".into(),
        ));
    }
    let clinical_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if clinical_names.len() != N_CLINICAL {
        return Err(Error::Schema(format!(
            "clinical.csv: expected {N_CLINICAL} measure columns, found {}",
            clinical_names.len()
        )));
    }
    check_unique("clinical", &clinical_names)?;
    let baseline_col = clinical_names
        .iter()
        .position(|n| n == BASELINE_COLUMN)
        .ok_or_else(|| Error::Schema(format!("clinical.csv: missing {BASELINE_COLUMN}")))?;
    let age_col = clinical_names.iter().position(|n| n == "age");
    let male_col = ["is_male", "gender", "male"]
        .iter()
        .find_map(|want| clinical_names.iter().position(|n| n == want));

    let mut subjects: Vec<Subject> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for rec in clin.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().trim().to_string();
        if id.is_empty() {
            return Err(Error::Schema("clinical.csv: empty subject_id".into()));
        }
        let clinical = (1..=N_CLINICAL)
            .map(|c| {
                parse_cell(
                    rec.get(c).unwrap_or_default(),
                    &format!("{id}/{}", clinical_names[c - 1]),
                )
            })
            .collect::<Result<Vec<f64>>>()?;
        if clinical[baseline_col].is_finite() {
            check_score(clinical[baseline_col], &id)?;
        }
        if by_id.insert(id.clone(), subjects.len()).is_some() {
            return Err(Error::Duplicate(format!("clinical.csv subject {id}")));
        }
        subjects.push(Subject {
            age: age_col.map(|c| clinical[c]).filter(|v| v.is_finite()),
            is_male: male_col
                .map(|c| clinical[c])
                .filter(|v| v.is_finite())
                .map(|v| v != 0.0),
            id,
            clinical,
            visits: Vec::new(),
        });
    }

    let mut dev = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(device_csv);
    let header = dev.headers()?.clone();
    for (i, want) in DEVICE_KEY_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(want) {
            return Err(Error::Schema(format!(
                "device.csv: column {} must be {want}",
                i + 1
            )));
        }
    }
    let device_measure_names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
    if device_measure_names.len() != N_DEVICE {
        return Err(Error::Schema(format!(
            "device.csv: expected {N_DEVICE} measure columns, found {}",
            device_measure_names.len()
        )));
    }
    check_unique("device", &device_measure_names)?;
    let lateral_pairs = find_lateral_pairs(&device_measure_names);
    if lateral_pairs.len() != N_LATERAL_PAIRS {
        return Err(Error::Schema(format!(
            "device.csv: expected {N_LATERAL_PAIRS} _left/_right pairs, found {}",
            lateral_pairs.len()
        )));
    }

    // subject -> month -> visit under construction
    let mut visits: Vec<BTreeMap<u32, Visit>> = vec![BTreeMap::new(); subjects.len()];
    for rec in dev.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().trim();
        let &si = by_id
            .get(id)
            .ok_or_else(|| Error::Schema(format!("device.csv: unknown subject {id}")))?;
        let month: u32 = rec
            .get(1)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("{id}: bad visit_month")))?;
        if !VISIT_MONTHS.contains(&month) {
            return Err(Error::OutOfRange(format!("{id}: visit month {month}")));
        }
        let run: u8 = rec
            .get(2)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("{id}: bad run number")))?;
        if !(1..=3).contains(&run) {
            return Err(Error::OutOfRange(format!("{id}: run {run} not in 1..=3")));
        }
        let score = parse_cell(rec.get(3).unwrap_or_default(), &format!("{id}/part3_total"))?;
        let score = if score.is_nan() { None } else { Some(score) };
        if let Some(s) = score {
            check_score(s, id)?;
        }
        let values = (4..4 + N_DEVICE)
            .map(|c| {
                parse_cell(
                    rec.get(c).unwrap_or_default(),
                    &format!("{id}/{}", header.get(c).unwrap_or_default()),
                )
            })
            .collect::<Result<Vec<f64>>>()?;

        let visit = visits[si].entry(month).or_insert_with(|| Visit {
            month,
            part3_total: score,
            runs: Vec::new(),
        });
        if visit.runs.iter().any(|r| r.run == run) {
            return Err(Error::Duplicate(format!("({id}, {month}, {run})")));
        }
        match (visit.part3_total, score) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Schema(format!(
                    "{id} month {month}: part3_total differs between runs"
                )))
            }
            (None, Some(b)) => visit.part3_total = Some(b),
            _ => {}
        }
        visit.runs.push(DeviceRun { run, values });
    }

    let mut kept = Vec::with_capacity(subjects.len());
    let mut excluded = Vec::new();
    for (mut subject, vmap) in subjects.into_iter().zip(visits) {
        subject.visits = vmap.into_values().collect();
        for v in &mut subject.visits {
            v.runs.sort_by_key(|r| r.run);
        }
        if subject.score(0).is_none() {
            excluded.push((subject.id, Exclusion::MissingBaselineScore));
        } else if subject.score(24).is_none() {
            excluded.push((subject.id, Exclusion::MissingMonth24Score));
        } else {
            kept.push(subject);
        }
    }

    let cohort = Cohort {
        clinical_names,
        device_measure_names,
        lateral_pairs,
        subjects: kept,
    };
    cohort.validate()?;
    Ok(ParsedCohort { cohort, excluded })
}

pub fn write_clinical_csv<W: Write>(cohort: &Cohort, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(
        std::iter::once("subject_id").chain(cohort.clinical_names.iter().map(String::as_str)),
    )?;
    for s in &cohort.subjects {
        let mut row = vec![s.id.clone()];
        row.extend(s.clinical.iter().map(|&v| format_cell(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_device_csv<W: Write>(cohort: &Cohort, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(
        DEVICE_KEY_COLUMNS
            .iter()
            .copied()
            .chain(cohort.device_measure_names.iter().map(String::as_str)),
    )?;
    for s in &cohort.subjects {
        for v in &s.visits {
            for r in &v.runs {
                let mut row = vec![
                    s.id.clone(),
                    v.month.to_string(),
                    r.run.to_string(),
                    v.part3_total.map_or_else(String::new, format_cell),
                ];
                row.extend(r.values.iter().map(|&x| format_cell(x)));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn header_names() -> (Vec<String>, Vec<String>) {
        let mut clinical: Vec<String> = (0..N_CLINICAL - 1).map(|i| format!("c{i}")).collect();
        clinical.insert(0, BASELINE_COLUMN.to_string());
        let mut device = Vec::new();
        for i in 0..N_LATERAL_PAIRS {
            device.push(format!("lat{i}_left"));
            device.push(format!("lat{i}_right"));
        }
        for i in device.len()..N_DEVICE {
            device.push(format!("m{i}"));
        }
        (clinical, device)
    }

    fn csv_pair(subjects: &[(&str, &[(u32, Option<f64>)])]) -> (String, String) {
        let (clinical, device) = header_names();
        let mut c = format!("subject_id,{}\n", clinical.join(","));
        let mut d = format!(
            "subject_id,visit_month,run,part3_total,{}\n",
            device.join(",")
        );
        for (id, visits) in subjects {
            let base = visits
                .iter()
                .find(|v| v.0 == 0)
                .and_then(|v| v.1)
                .unwrap_or(10.0);
            let vals: Vec<String> = (0..N_CLINICAL)
                .map(|i| {
                    if i == 0 {
                        base.to_string()
                    } else {
                        (i as f64 * 0.5).to_string()
                    }
                })
                .collect();
            c.push_str(&format!("{id},{}\n", vals.join(",")));
            for (month, score) in visits.iter() {
                for run in 1..=3 {
                    let vals: Vec<String> = (0..N_DEVICE)
                        .map(|i| (1.0 + i as f64 + run as f64 * 0.01).to_string())
                        .collect();
                    let s = score.map_or(String::new(), |s| s.to_string());
                    d.push_str(&format!("{id},{month},{run},{s},{}\n", vals.join(",")));
                }
            }
        }
        (c, d)
    }

    #[test]
    fn parses_two_subjects() {
        let (c, d) = csv_pair(&[
            ("a", &[(0, Some(16.0)), (6, Some(17.0)), (24, Some(18.2))]),
            ("b", &[(0, Some(10.0)), (24, Some(12.0))]),
        ]);
        let parsed = parse_cohort(c.as_bytes(), d.as_bytes()).unwrap();
        assert_eq!(parsed.cohort.subjects.len(), 2);
        assert_eq!(parsed.warning_count(), 0);
        assert_eq!(parsed.cohort.lateral_pairs.len(), 22);
        let a = &parsed.cohort.subjects[0];
        assert_eq!(a.visits.len(), 3);
        assert_eq!(a.visit(6).unwrap().runs.len(), 3);
        assert_eq!(a.visit(0).unwrap().median_measures(N_DEVICE)[0], 1.02);
    }

    #[test]
    fn excludes_subject_without_month24() {
        let (c, d) = csv_pair(&[
            ("a", &[(0, Some(16.0)), (24, Some(18.0))]),
            ("b", &[(0, Some(10.0)), (6, Some(12.0))]),
        ]);
        let parsed = parse_cohort(c.as_bytes(), d.as_bytes()).unwrap();
        assert_eq!(parsed.cohort.subjects.len(), 1);
        assert_eq!(parsed.warning_count(), 1);
        assert_eq!(
            parsed.excluded[0],
            ("b".to_string(), Exclusion::MissingMonth24Score)
        );
    }

    #[test]
    fn rejects_out_of_range_score() {
        let (c, d) = csv_pair(&[("a", &[(0, Some(16.0)), (24, Some(140.0))])]);
        assert!(matches!(
            parse_cohort(c.as_bytes(), d.as_bytes()),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn rejects_duplicate_run_key() {
        let (c, mut d) = csv_pair(&[("a", &[(0, Some(16.0)), (24, Some(18.0))])]);
        let dup = d.lines().nth(1).unwrap().to_string();
        d.push_str(&dup);
        d.push('\n');
        assert!(matches!(
            parse_cohort(c.as_bytes(), d.as_bytes()),
            Err(Error::Duplicate(_))
        ));
    }

    #[test]
    fn rejects_malformed_csv() {
        let (c, _) = csv_pair(&[]);
        let bad = "subject_id,visit_month\na,0\n";
        assert!(parse_cohort(c.as_bytes(), bad.as_bytes()).is_err());
        let (c, mut d) = csv_pair(&[("a", &[(0, Some(16.0)), (24, Some(18.0))])]);
        d = d.replacen("a,0,1,16,", "a,0,1,sixteen,", 1);
        assert!(matches!(
            parse_cohort(c.as_bytes(), d.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_of_runs(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median_of_runs(&[5.0]).unwrap(), 5.0);
        assert_eq!(median_of_runs(&[1.0, 2.0, 3.0, 10.0]).unwrap(), 2.5);
        assert!(median_of_runs(&[]).is_err());
    }

    fn subject(baseline: f64, month24: f64) -> Subject {
        let visit = |month, s| Visit {
            month,
            part3_total: Some(s),
            runs: vec![],
        };
        Subject {
            id: "s".into(),
            age: None,
            is_male: None,
            clinical: vec![0.0; N_CLINICAL],
            visits: vec![visit(0, baseline), visit(24, month24)],
        }
    }

    #[test]
    fn targets_from_table_one_means() {
        let s = subject(16.0, 18.2);
        assert!((compute_target(&s, TargetKind::PctChange24).unwrap() - 0.1375).abs() < 1e-12);
        assert!((compute_target(&s, TargetKind::Delta24).unwrap() - 2.2).abs() < 1e-12);
        assert_eq!(compute_target(&s, TargetKind::Score24).unwrap(), 18.2);

        let same = subject(9.0, 9.0);
        assert_eq!(compute_target(&same, TargetKind::Delta24).unwrap(), 0.0);
        assert_eq!(compute_target(&same, TargetKind::PctChange24).unwrap(), 0.0);

        let zero = subject(0.0, 3.0);
        assert!(matches!(
            compute_target(&zero, TargetKind::PctChange24),
            Err(Error::Undefined(_))
        ));
        assert_eq!(compute_target(&zero, TargetKind::Delta24).unwrap(), 3.0);
    }

    #[test]
    fn fast_progressor_threshold_is_inclusive() {
        assert!(label_fast_progressor(0.25, DEFAULT_FAST_THRESHOLD));
        assert!(label_fast_progressor(0.20, DEFAULT_FAST_THRESHOLD));
        assert!(!label_fast_progressor(0.15, DEFAULT_FAST_THRESHOLD));
    }

    proptest::proptest! {
        #[test]
        fn median_is_permutation_invariant(mut v in proptest::collection::vec(-1e6f64..1e6, 1..12), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let m = median_of_runs(&v).unwrap();
            v.shuffle(&mut crate::seed::rng(seed));
            proptest::prop_assert_eq!(m, median_of_runs(&v).unwrap());
        }

        #[test]
        fn delta_equals_pct_times_baseline(b in 0.5f64..132.0, e in 0.0f64..132.0) {
            let s = subject(b, e);
            let d = compute_target(&s, TargetKind::Delta24).unwrap();
            let p = compute_target(&s, TargetKind::PctChange24).unwrap();
            proptest::prop_assert!((d - p * b).abs() <= 1e-12 * d.abs().max(1.0) * 132.0);
        }
    }
}
