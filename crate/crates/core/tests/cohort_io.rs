use pdprog::cohort::{parse_cohort, write_clinical_csv, write_device_csv, TargetKind};
use pdprog::featureset::{build_feature_set, FeatureSetId};
use pdprog::synthcohort::{generate_cohort, SynthSpec};

fn to_csv(cohort: &pdprog::cohort::Cohort) -> (Vec<u8>, Vec<u8>) {
    let (mut c, mut d) = (Vec::new(), Vec::new());
    write_clinical_csv(cohort, &mut c).unwrap();
    write_device_csv(cohort, &mut d).unwrap();
    (c, d)
}

#[test]
fn csv_round_trip_is_lossless() {
    let cohort = generate_cohort(&SynthSpec {
        n_subjects: 25,
        seed: 11,
        ..SynthSpec::default()
    })
    .unwrap();
    let (c, d) = to_csv(&cohort);
    let parsed = parse_cohort(c.as_slice(), d.as_slice()).unwrap();
    assert!(parsed.excluded.is_empty());
    assert_eq!(parsed.cohort, cohort);
    // And writing again gives the same bytes.
    assert_eq!(to_csv(&parsed.cohort), (c, d));
}

#[test]
fn round_trip_preserves_features_and_targets() {
    let cohort = generate_cohort(&SynthSpec {
        n_subjects: 15,
        seed: 12,
        ..SynthSpec::default()
    })
    .unwrap();
    let (c, d) = to_csv(&cohort);
    let parsed = parse_cohort(c.as_slice(), d.as_slice()).unwrap().cohort;
    for id in FeatureSetId::ALL {
        let a = build_feature_set(&cohort, id).unwrap();
        let b = build_feature_set(&parsed, id).unwrap();
        assert_eq!(a.column_names, b.column_names);
        assert_eq!(a.values.as_slice().len(), b.values.as_slice().len());
        for (x, y) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            assert!(x == y || (x.is_nan() && y.is_nan()));
        }
    }
    for kind in TargetKind::ALL {
        assert_eq!(cohort.targets(kind), parsed.targets(kind));
    }
}

#[test]
fn subjects_without_month24_are_excluded_with_a_reason() {
    let mut cohort = generate_cohort(&SynthSpec {
        n_subjects: 6,
        seed: 13,
        ..SynthSpec::default()
    })
    .unwrap();
    cohort.subjects[2].visits.retain(|v| v.month != 24);
    let (c, d) = to_csv(&cohort);
    let parsed = parse_cohort(c.as_slice(), d.as_slice()).unwrap();
    assert_eq!(parsed.cohort.subjects.len(), 5);
    assert_eq!(parsed.warning_count(), 1);
    assert_eq!(parsed.excluded[0].0, cohort.subjects[2].id);
}
