use enn_core::data::{gen_toy_cubic, split, SplitSpec};
use enn_core::*;

fn run(seed: u64) -> TrainOutcome {
    let ds = gen_toy_cubic(&mut RngStream::new(seed), 30, -4.0, 4.0, 9.0).unwrap();
    let (tr, te) = split(
        &ds,
        &SplitSpec {
            train_count: 20,
            test_count: 10,
            shuffle_seed: 5,
        },
    )
    .unwrap();
    let arch = NetworkArchitecture::regression(1, vec![10, 1], Activation::Tanh).unwrap();
    let settings = TrainSettings {
        ensemble_size: 20,
        obs_std: 3.0,
        trace_weights: true,
        ..TrainSettings::default()
    };
    train(
        &arch,
        &tr,
        Some(&te),
        &settings,
        &mut RngStream::new(seed + 1),
        &mut RngStream::new(seed + 2),
    )
    .unwrap()
}

#[test]
fn identical_seeds_give_identical_runs() {
    let a = run(3);
    let b = run(3);
    assert_eq!(a.ensemble.current(), b.ensemble.current());
    assert_eq!(a.state.history, b.state.history);
    assert_eq!(a.weight_trace, b.weight_trace);
    assert_ne!(run(4).ensemble.current(), a.ensemble.current());
}

#[test]
fn accepted_mismatch_never_increases() {
    let out = run(9);
    let accepted: Vec<f64> = out.state.accepted_history().map(|r| r.sd_mean).collect();
    assert!(accepted.len() > 2);
    assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.state.history.iter().all(|r| r.lambda >= 0.005));
    assert_eq!(out.weight_trace.len(), accepted.len());
}

#[test]
fn training_improves_on_the_prior() {
    let out = run(1);
    let first = out.state.history.first().unwrap();
    let last = out.state.history.last().unwrap();
    assert!(last.train_loss < first.train_loss);
    assert!(last.test_loss.unwrap() < first.test_loss.unwrap());
}

#[test]
fn standardized_training_reports_original_units() {
    let ds = gen_toy_cubic(&mut RngStream::new(2), 20, -4.0, 4.0, 0.0).unwrap();
    let arch = NetworkArchitecture::regression(1, vec![10, 1], Activation::Tanh).unwrap();
    let settings = TrainSettings {
        ensemble_size: 30,
        obs_std: 0.05,
        ..TrainSettings::default()
    };
    let scaled = ds.standardize();
    let out = train(
        &arch,
        &scaled,
        None,
        &settings,
        &mut RngStream::new(1),
        &mut RngStream::new(2),
    )
    .unwrap();
    let query = ds.inputs().clone();
    let band = predict_band(&arch, out.ensemble.current(), &query, 3.0, Some(&scaled)).unwrap();
    let mae = data::loss_mae(&band.mean, ds.targets()).unwrap();
    assert!((mae - out.state.history.last().unwrap().train_loss).abs() < 1e-9);
}
