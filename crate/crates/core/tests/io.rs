use num_complex::Complex64;
use proptest::prelude::*;
use semilinear_inverse::inverse::{MomentRecord, MomentSource};
use semilinear_inverse::{io, BoundaryTrace, Domain, DomainConfig, Error};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn real_fields_round_trip_exactly(seed in any::<u64>(), scale in -1e8f64..1e8) {
        let d = Domain::build(&DomainConfig::disk(8)).unwrap();
        let values: Vec<f64> = (0..d.node_count())
            .map(|k| scale * (((k as u64).wrapping_mul(6364136223846793005).wrapping_add(seed) >> 11) as f64 / (1u64 << 53) as f64 - 0.5))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        io::write_real_field(&p, &d, &values).unwrap();
        let back = io::read_real_field(&p, &d).unwrap();
        prop_assert_eq!(values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), back.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn missing_and_malformed_rows_are_reported() {
    let d = Domain::build(&DomainConfig::disk(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("short.csv");
    std::fs::write(&p, "node,value\n0,1.0\n").unwrap();
    assert!(matches!(io::read_real_field(&p, &d), Err(Error::Parse(m)) if m.contains("missing")));
    std::fs::write(&p, "node,value\n0,abc\n").unwrap();
    assert!(matches!(io::read_real_field(&p, &d), Err(Error::Parse(m)) if m.contains("line 2")));
    std::fs::write(&p, "node,v\n0,1\n").unwrap();
    assert!(matches!(io::read_real_field(&p, &d), Err(Error::Parse(m)) if m.contains("`value`")));
}

#[test]
fn writers_reject_wrong_lengths_and_format_moments() {
    let d = Domain::build(&DomainConfig::disk(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(io::write_real_field(&dir.path().join("x.csv"), &d, &[1.0]).is_err());
    let t = BoundaryTrace::zeros(d.full_boundary());
    io::write_trace(&dir.path().join("t.csv"), &d, &t).unwrap();
    let rows = std::fs::read_to_string(dir.path().join("t.csv")).unwrap().lines().count();
    assert_eq!(rows, d.n_outer() + 1);
    let m = MomentRecord {
        ids: vec![1, 2, 0],
        value: Complex64::new(0.5, -0.25),
        source: MomentSource::BoundaryData,
        error_estimate: 1e-9,
    };
    io::write_moments(&dir.path().join("m.csv"), &[m]).unwrap();
    let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(text, "ids,re,im,source,error_estimate\n1-2-0,0.5,-0.25,boundary_data,0.000000001\n");
}
