use rotcloud::encoder::{EncoderModel, Head, TrainConfig};
use rotcloud::pcdata::{generate_dataset, DatasetManifest};
use rotcloud::pretrain::*;

#[test]
fn dbg_train_and_save() {
    let dir = std::env::temp_dir().join("rotcloud-dbg11");
    if !dir.join("train.json").exists() {
        std::fs::create_dir_all(&dir).unwrap();
        generate_dataset(&dir, 8, 200, 50, 1024, 42, 1).unwrap();
    }
    let train = DatasetManifest::load(&dir.join("train.json")).unwrap();
    let models = std::env::temp_dir().join("rotcloud-dbg-models");
    std::fs::create_dir_all(&models).unwrap();
    for seed in [0u64, 1, 2] {
        let config = TrainConfig {
            epochs: 30, batch_size: 16, learning_rate: 1e-3, seed,
            points_per_cloud: Some(128), threads: 1, ..TrainConfig::default()
        };
        let (model, log) = train_classifier(&train, 18, &config).unwrap();
        model.save(&models.join(format!("k18_s{seed}.bin"))).unwrap();
        println!("saved k18 seed {seed}, holdout {:.3}", log.rows.last().unwrap().2);
        let random = EncoderModel::with_defaults(Head::Classify(18), seed).unwrap();
        random.save(&models.join(format!("rnd_s{seed}.bin"))).unwrap();
    }
    // Also one axis-angle run at the fixture's report budget for threshold pinning.
    let config = TrainConfig {
        epochs: 12, batch_size: 16, learning_rate: 1e-3, seed: 3,
        points_per_cloud: Some(128), threads: 1, ..TrainConfig::default()
    };
    let (_m, log) = train_pretext(&train, PretextTask::AxisAngle, &config).unwrap();
    println!("axisangle ep12: held-out geodesic {:.3} rad", log.final_metric().unwrap());
    let (_m2, log2) = train_pretext(&train, PretextTask::SixD, &config).unwrap();
    println!("sixd ep12: held-out geodesic {:.3} rad", log2.final_metric().unwrap());
}
