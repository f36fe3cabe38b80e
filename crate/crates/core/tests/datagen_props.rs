use rnntrack::datagen::{fit_model, sample_persistent, sample_sequence, SceneConfig, TrajectoryModel};
use rnntrack::Source;

#[test]
fn fit_recovers_the_generating_model() {
    let model = TrajectoryModel::default();
    let cfg = SceneConfig {
        seq_length: 6,
        detection_prob: 1.0,
        clutter_rate: 0.0,
        detection_noise: 0.0,
        seed: 17,
        ..SceneConfig::default()
    };
    let scene = sample_persistent(&model, &cfg, 10_000).unwrap();
    let tracks: Vec<_> = scene.gt_tracks.iter().map(|t| t.states.clone()).collect();
    let fit = fit_model(&tracks).unwrap();
    for d in 0..4 {
        // Means are compared on the scale of their spread since several are 0.
        let sd = model.start_var[d].sqrt();
        assert!((fit.start_mean[d] - model.start_mean[d]).abs() < 0.05 * sd, "start mean {d}");
        let vsd = model.vel_var[d].sqrt();
        assert!((fit.vel_mean[d] - model.vel_mean[d]).abs() < 0.05 * vsd, "velocity mean {d}");
        assert!((fit.start_var[d] / model.start_var[d] - 1.0).abs() < 0.05, "start variance {d}");
        assert!((fit.vel_var[d] / model.vel_var[d] - 1.0).abs() < 0.05, "velocity variance {d}");
    }
}

#[test]
fn clutter_count_follows_the_rate() {
    let cfg = SceneConfig {
        seq_length: 10_000,
        min_targets: 1,
        max_targets: 1,
        max_detections: 64,
        clutter_rate: 2.0,
        seed: 5,
        ..SceneConfig::default()
    };
    let scene = sample_sequence(&TrajectoryModel::default(), &cfg).unwrap();
    let clutter: usize = scene
        .frames
        .iter()
        .map(|f| f.detections().filter(|d| d.source == Source::Clutter).count())
        .sum();
    let mean = clutter as f64 / cfg.seq_length as f64;
    assert!((1.9..=2.1).contains(&mean), "mean clutter {mean}");
}

#[test]
fn existence_is_a_box_function() {
    let scene = sample_sequence(&TrajectoryModel::default(), &SceneConfig { seed: 3, ..SceneConfig::default() }).unwrap();
    for t in &scene.gt_tracks {
        for f in 1..=scene.seq_length() {
            let inside = f >= t.birth && f <= t.death;
            assert_eq!(t.existence_at(f), if inside { 1.0 } else { 0.0 });
        }
    }
}
