mod common;

use common::{random_rgb, rng, smooth_cube, ChannelReplicator};
use specrecon::data::{make_two_fold, Assignment, FoldMode, FoldSplit, HyperCube, RgbImage};
use specrecon::infer::{enhanced_members, enhanced_predict, predict_image, predict_tiled, reflect_pad, CountingPredictor};
use specrecon::metrics::{compute_metrics, evaluate_dataset, EvalItem, MetricReport};
use specrecon::{Error, ModelConfig, ModelParams};

#[test]
fn reflect_padding_does_not_repeat_the_edge() {
    let row = [1.0, 2.0, 3.0, 4.0];
    let img = RgbImage::new(4, 4, [row.repeat(4), vec![0.0; 32]].concat()).unwrap();
    let padded = reflect_pad(&img, 2);
    assert_eq!((padded.h, padded.w), (8, 8));
    assert_eq!(&padded.data[..8], &[3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
}

#[test]
fn whole_image_prediction_keeps_the_input_size() {
    let params = ModelParams::init(ModelConfig::default(), 1).unwrap();
    let rgb = random_rgb(&mut rng(2), 23, 31);
    let out = predict_image(&params, &rgb).unwrap();
    assert_eq!((out.h, out.w, out.bands()), (23, 31, 31));
    assert!(predict_image(&params, &random_rgb(&mut rng(2), 16, 40)).is_err());
    assert!(predict_image(&params, &random_rgb(&mut rng(2), 17, 17)).is_ok());
}

#[test]
fn tiled_prediction_agrees_with_whole_image() {
    let params = ModelParams::init(ModelConfig::default(), 3).unwrap();
    let rgb = random_rgb(&mut rng(4), 47, 38);
    let whole = predict_image(&params, &rgb).unwrap();
    for tile in [36, 29, 64] {
        let tiled = predict_tiled(&params, &rgb, tile).unwrap();
        let worst = whole.data.iter().zip(&tiled.data).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f32::max);
        assert!(worst <= 1e-5, "tile {tile}: {worst}");
    }
    assert!(predict_tiled(&params, &rgb, 16).is_err());
}

#[test]
fn enhanced_prediction_of_an_equivariant_predictor_is_a_fixed_point() {
    let mock = ChannelReplicator { bands: 31 };
    for (h, w) in [(20, 20), (9, 14)] {
        let rgb = random_rgb(&mut rng(h as u64), h, w);
        let plain = predict_image(&mock, &rgb).unwrap();
        let enhanced = enhanced_predict(&mock, &rgb).unwrap();
        assert_eq!(
            plain.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            enhanced.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn enhanced_prediction_of_the_model_lies_in_the_member_envelope() {
    let params = ModelParams::init(ModelConfig::default(), 6).unwrap();
    let rgb = random_rgb(&mut rng(7), 21, 26);
    let counted = CountingPredictor::new(&params);
    let members = enhanced_members(&counted, &rgb).unwrap();
    assert_eq!(counted.passes(), 8);
    let plain = predict_image(&params, &rgb).unwrap();
    assert_eq!(members[0], plain);
    let enhanced = enhanced_predict(&params, &rgb).unwrap();
    assert_ne!(enhanced, plain);
    for (i, &v) in enhanced.data.iter().enumerate() {
        let lo = members.iter().map(|m| m.data[i]).fold(f32::INFINITY, f32::min);
        let hi = members.iter().map(|m| m.data[i]).fold(f32::NEG_INFINITY, f32::max);
        assert!(lo <= v && v <= hi, "{lo} <= {v} <= {hi}");
    }
}

fn cube1(vals: &[f32]) -> HyperCube {
    HyperCube::new(1, vals.len(), vec![500.0], vals.to_vec()).unwrap()
}

#[test]
fn metric_toy_case_by_hand() {
    let m = compute_metrics(&cube1(&[3.0, 3.0]), &cube1(&[2.0, 4.0])).unwrap();
    assert_eq!(m.rmse, 1.0);
    // sqrt(((1/2)² + (1/4)²) / 2)
    assert_eq!(m.rrmse, (0.3125f64 / 2.0).sqrt());
    assert!((m.rrmse - 0.39528).abs() < 1e-5);
    let z = compute_metrics(&cube1(&[2.0, 4.0]), &cube1(&[2.0, 4.0])).unwrap();
    assert_eq!(z.values(), [0.0; 6]);
}

#[test]
fn dataset_mean_and_pooled_aggregations_differ() {
    let gt = cube1(&[1.0, 1.0]);
    let mut report = MetricReport::new(1);
    report.push("a", &cube1(&[2.0, 2.0]), &gt).unwrap();
    report.push("b", &cube1(&[4.0, 4.0]), &gt).unwrap();
    assert_eq!(report.mean().rmse, 2.0);
    assert_eq!(report.pooled().rmse, 5.0f64.sqrt());
    let csv = report.to_csv();
    assert!(csv.contains("@mean,rmse,") && csv.contains("@pooled,rmse,"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("a,")).count(), 6);
}

#[test]
fn evaluation_uses_the_model_that_held_each_image_out() {
    let names = ["p".to_string(), "q".to_string()];
    let cubes = [smooth_cube(18, 18, 0.0), smooth_cube(18, 18, 1.0)];
    let rgbs: Vec<RgbImage> = cubes.iter().map(common::cie_rgb).collect();
    let items: Vec<EvalItem> = (0..2).map(|i| EvalItem { name: &names[i], rgb: &rgbs[i], gt: &cubes[i] }).collect();
    let split = make_two_fold(&names, 0).unwrap();
    let mock = ChannelReplicator { bands: 31 };
    let models = [Some(CountingPredictor::new(&mock)), Some(CountingPredictor::new(&mock))];
    let report = evaluate_dataset(&models, &split, &items, true).unwrap();
    assert_eq!(report.image_count(), 2);
    assert_eq!(models[0].as_ref().unwrap().passes(), 8);
    assert_eq!(models[1].as_ref().unwrap().passes(), 8);
    let k = match split.assignment("q") {
        Some(Assignment::Held(k)) => k,
        other => panic!("{other:?}"),
    };
    let mut partial = [Some(&mock), Some(&mock)];
    partial[k] = None;
    assert!(matches!(evaluate_dataset(&partial, &split, &items, false), Err(Error::MissingModel(j)) if j == k));

    let provided = FoldSplit {
        mode: FoldMode::Provided,
        entries: vec![("p".into(), Assignment::TrainOnly), ("q".into(), Assignment::Held(0))],
    };
    let report = evaluate_dataset(&[Some(&mock)], &provided, &items, false).unwrap();
    assert_eq!(report.rows.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(), ["q"]);
}
