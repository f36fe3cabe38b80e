use proptest::prelude::*;
use rnntrack::datagen::{sample_sequence, SceneConfig, TrajectoryModel};
use rnntrack::io::{parse_mot_csv, parse_provenance, rows_to_frames, rows_to_table, write_scene, ImageSize};

#[test]
fn written_scene_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let im = ImageSize::new(1920.0, 1080.0).unwrap();
    for seed in 0..5 {
        let scene = sample_sequence(&TrajectoryModel::default(), &SceneConfig { seed, ..SceneConfig::default() }).unwrap();
        let paths = write_scene(&dir.path().join(format!("s{seed}")), &scene, im).unwrap();

        let gt = rows_to_table(&parse_mot_csv(&paths.gt).unwrap(), im).unwrap();
        let expect = scene.gt_table().by_id();
        let got = gt.by_id();
        assert_eq!(got.keys().collect::<Vec<_>>(), expect.keys().collect::<Vec<_>>());
        for (id, rows) in &expect {
            for ((f, s), (g, t)) in rows.iter().zip(&got[id]) {
                assert_eq!(f, g);
                assert!(s.distance(t) < 1e-6);
            }
        }

        let frames = rows_to_frames(&parse_mot_csv(&paths.det).unwrap(), im, Some(scene.seq_length()));
        assert_eq!(frames.len(), scene.frames.len());
        let prov = parse_provenance(&std::fs::read_to_string(&paths.provenance).unwrap(), &paths.provenance).unwrap();
        let mut k = 0;
        for (a, b) in scene.frames.iter().zip(&frames) {
            let da: Vec<_> = a.detections().collect();
            let db: Vec<_> = b.detections().collect();
            assert_eq!(da.len(), db.len());
            for (i, (x, y)) in da.iter().zip(&db).enumerate() {
                assert!(x.state.distance(&y.state) < 1e-6);
                assert_eq!(prov[k], (a.frame, i, x.source));
                k += 1;
            }
        }
        assert_eq!(k, prov.len());
    }
}

proptest! {
    #[test]
    fn normalization_round_trips(w in 1.0..4000.0f64, h in 1.0..4000.0f64, bb in prop::array::uniform4(0.0..4000.0f64)) {
        let im = ImageSize::new(w, h).unwrap();
        let back = im.denormalize(&im.normalize(bb));
        for k in 0..4 {
            prop_assert!((back[k] - bb[k]).abs() <= 1e-12 * bb[k].abs().max(1.0));
        }
    }
}
