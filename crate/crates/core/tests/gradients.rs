use specrecon::gradcheck::{run_gradcheck, Fault, GradcheckOptions};

#[test]
fn every_backward_pass_matches_finite_differences() {
    for seed in 0..4 {
        let report = run_gradcheck(&GradcheckOptions {
            seed,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed(), "{}", report.summary());
        assert!(report.results.iter().any(|r| r.op == "model/input"));
        assert!(report.results.iter().any(|r| r.op == "model/res1.conv_b.prelu"));
    }
}

#[test]
fn same_seed_same_summary() {
    let opts = GradcheckOptions {
        seed: 11,
        ..Default::default()
    };
    assert_eq!(run_gradcheck(&opts).unwrap().summary(), run_gradcheck(&opts).unwrap().summary());
}

#[test]
fn perturbed_conv_backward_fails_by_name() {
    let report = run_gradcheck(&GradcheckOptions {
        fault: Some(Fault::ConvBackward),
        ..Default::default()
    })
    .unwrap();
    let failed: Vec<_> = report.failures().iter().map(|r| r.op.clone()).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|op| op.starts_with("conv2d")), "{failed:?}");
}
