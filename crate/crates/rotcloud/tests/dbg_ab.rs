use rotcloud::downstream::*;
use rotcloud::encoder::EncoderModel;
use rotcloud::pcdata::{generate_dataset, DatasetManifest, PointCloud};
use rotcloud::rng::rng_from;
use rand::Rng;

fn l2norm(fm: &FeatureMatrix) -> FeatureMatrix {
    let rows = fm.rows.iter().map(|r| {
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        r.iter().map(|v| v / n).collect()
    }).collect();
    FeatureMatrix { dim: fm.dim, rows, labels: fm.labels.clone(), source: fm.source.clone() }
}

fn multiview(model: &EncoderModel, manifest: &DatasetManifest, views: usize, pts: usize) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = (0..manifest.entries.len()).map(|i| {
        let mut cloud = manifest.load_entry(i).unwrap();
        cloud.keypoints = None;
        let mut acc = vec![0.0; model.global_dim()];
        for v in 0..views {
            let mut rng = rng_from(0x5e, &[i as u64, v as u64]);
            let mut idx: Vec<usize> = (0..cloud.len()).collect();
            for k in 0..pts.min(cloud.len()) {
                let j = k + rng.gen_range(0..idx.len() - k);
                idx.swap(k, j);
            }
            let sub = PointCloud::new(idx[..pts.min(cloud.len())].iter().map(|&k| cloud.points[k]).collect());
            let f = model.extract_feature(&sub).unwrap();
            for (a, x) in acc.iter_mut().zip(&f) { *a += x / views as f64; }
        }
        acc
    }).collect();
    FeatureMatrix { dim: model.global_dim(), rows, labels: manifest.entries.iter().map(|e| e.label).collect(), source: "mv".into() }
}

#[test]
fn dbg_ab_protocols() {
    let models_dir = std::env::temp_dir().join("rotcloud-dbg-models");
    let fine_dir = std::env::temp_dir().join("rotcloud-dbg11-fine");
    if !fine_dir.join("train.json").exists() {
        std::fs::create_dir_all(&fine_dir).unwrap();
        generate_dataset(&fine_dir, 16, 10, 25, 1024, 77, 1).unwrap();
    }
    let ftrain = DatasetManifest::load(&fine_dir.join("train.json")).unwrap();
    let ftest = DatasetManifest::load(&fine_dir.join("test.json")).unwrap();

    for seed in [0u64, 1, 2] {
        let pre = EncoderModel::load(&models_dir.join(format!("k18_s{seed}.bin"))).unwrap();
        let rnd = EncoderModel::load(&models_dir.join(format!("rnd_s{seed}.bin"))).unwrap();
        let pre_tr = extract_dataset_features(&pre, &ftrain, 1).unwrap();
        let pre_te = extract_dataset_features(&pre, &ftest, 1).unwrap();
        let rnd_tr = extract_dataset_features(&rnd, &ftrain, 1).unwrap();
        let rnd_te = extract_dataset_features(&rnd, &ftest, 1).unwrap();

        let acc = |tr: &FeatureMatrix, te: &FeatureMatrix, lam: f64| {
            train_svm(tr, lam, 800, 0).unwrap().accuracy(te)
        };
        println!("seed {seed}:");
        for lam in [1e-3, 1e-2, 1e-1] {
            let g = acc(&pre_tr, &pre_te, lam) - acc(&rnd_tr, &rnd_te, lam);
            println!("  raw lam={lam}: gap {g:+.4}");
        }
        let g = acc(&l2norm(&pre_tr), &l2norm(&pre_te), 1e-3) - acc(&l2norm(&rnd_tr), &l2norm(&rnd_te), 1e-3);
        println!("  l2norm lam=1e-3: gap {g:+.4}");
        let pre_mtr = multiview(&pre, &ftrain, 4, 256);
        let pre_mte = multiview(&pre, &ftest, 4, 256);
        let rnd_mtr = multiview(&rnd, &ftrain, 4, 256);
        let rnd_mte = multiview(&rnd, &ftest, 4, 256);
        let g = acc(&pre_mtr, &pre_mte, 1e-3) - acc(&rnd_mtr, &rnd_mte, 1e-3);
        println!("  multiview 4x256: gap {g:+.4} (pre {:.4} rnd {:.4})", acc(&pre_mtr, &pre_mte, 1e-3), acc(&rnd_mtr, &rnd_mte, 1e-3));
        let g = acc(&l2norm(&pre_mtr), &l2norm(&pre_mte), 1e-3) - acc(&l2norm(&rnd_mtr), &l2norm(&rnd_mte), 1e-3);
        println!("  multiview+l2: gap {g:+.4}");
    }
}
