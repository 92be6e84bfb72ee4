//! The physics, metrics and network code run unchanged in `f32`.

use ndarray::Array3;
use netload::metrics::{compute_metrics, MetricsOptions};
use netload::nn::{predict, Hyper, LstmModel, ModelShape};
use netload::solar::{solve_cell_temperature, AirProperties, PvArraySpec};
use netload::wind::{turbine_power, TurbineSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn wind_power_agrees_across_precisions() {
    let t64 = TurbineSpec::<f64>::new(5.6, 0.35, 1.225, 3.0, 11.0, 25.0).unwrap();
    let t32 = TurbineSpec::<f32>::new(5.6, 0.35, 1.225, 3.0, 11.0, 25.0).unwrap();
    for i in 0..300 {
        let v = i as f64 * 0.1;
        let (a, b) = (turbine_power(v, &t64).unwrap(), turbine_power(v as f32, &t32).unwrap());
        assert!((a - b as f64).abs() <= 1e-5 * a.max(1.0), "v={v}");
    }
}

#[test]
fn cell_temperature_agrees_across_precisions() {
    let (pv64, air64) = (PvArraySpec::<f64>::default(), AirProperties::<f64>::standard());
    let (pv32, air32) = (PvArraySpec::<f32>::default(), AirProperties::<f32>::standard());
    for &(g, ta, v) in &[(200.0, 285.0, 1.0), (800.0, 300.0, 4.0), (1000.0, 310.0, 0.0)] {
        let a = solve_cell_temperature(g, ta, v, &pv64, &air64).unwrap();
        let b = solve_cell_temperature(g as f32, ta as f32, v as f32, &pv32, &air32).unwrap();
        assert!((a - b as f64).abs() < 0.05, "{a} vs {b}");
    }
}

#[test]
fn metrics_agree_across_precisions() {
    let actual: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin() * 40.0 + 20.0).collect();
    let pred: Vec<f64> = actual.iter().map(|a| a + 3.0).collect();
    let opts = MetricsOptions::default();
    let m64 = compute_metrics(&pred, &actual, &opts).unwrap();
    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
    let m32 = compute_metrics(&to32(&pred), &to32(&actual), &opts).unwrap();
    assert!((m64.rmse - m32.rmse as f64).abs() < 1e-4);
    assert_eq!(m64.histogram, m32.histogram);
}

#[test]
fn network_inference_agrees_across_precisions() {
    let shape = ModelShape {
        n_features: 5,
        lstm_hidden: [5, 4, 3],
        dense_hidden: 4,
    };
    let m64 = LstmModel::<f64>::new(shape, Hyper::default(), &mut ChaCha8Rng::seed_from_u64(1));
    let mut params32 = LstmModel::<f32>::zeros(shape, Hyper::default());
    for ((_, dst), (_, src)) in params32.params_mut().tensors_mut().into_iter().zip(m64.params().tensors()) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = *s as f32;
        }
    }
    let x = Array3::from_shape_fn((7, 6, 5), |(b, t, f)| ((b * 31 + t * 7 + f) as f64 * 0.37).sin());
    let p64 = predict(&m64, x.view()).unwrap();
    let p32 = predict(&params32, x.mapv(|v| v as f32).view()).unwrap();
    for (a, b) in p64.iter().zip(&p32) {
        assert!((a - *b as f64).abs() < 1e-4, "{a} vs {b}");
    }
}
