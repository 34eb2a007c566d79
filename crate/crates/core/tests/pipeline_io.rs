use std::fs;

use cadmr::datasets::{generate_synthetic, load_interactions, prepare_interactions, Dataset, DelimitedFormat, SplitRatio, SyntheticConfig};
use cadmr::eval::{run_arm, Arm, DEFAULT_KS};
use cadmr::pipeline::{load_checkpoint, read_header, save_checkpoint, train, Model, Phase, Precision, TrainConfig, TrainData, Variant};
use cadmr::Error;

fn dataset() -> Dataset {
    generate_synthetic(&SyntheticConfig {
        users: 30,
        items: 20,
        rank: 3,
        text_dim: 6,
        visual_dim: 9,
        positives_per_user: 10,
        seed: 21,
        ..Default::default()
    })
    .unwrap()
    .dataset
}

fn config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.encoder.hidden = 8;
    c.encoder.text_out = 4;
    c.encoder.visual_out = 4;
    c.encoder.fused = 4;
    c.attention.latent = 8;
    c.attention.heads = 2;
    c.ae.hidden = 8;
    c.ae.epochs = 4;
    c.pretrain_encoder_epochs = 2;
    c.finetune_epochs = 3;
    c
}

#[test]
fn saved_dataset_trains_like_the_original() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    ds.save_dir(dir.path()).unwrap();
    let back = Dataset::load_dir(dir.path()).unwrap();
    // Features are stored as f32, so compare against the rounded original.
    let a = train::<f32>(&config(), &TrainData::from_dataset(&ds).unwrap()).unwrap();
    let b = train::<f32>(&config(), &TrainData::from_dataset(&back).unwrap()).unwrap();
    assert_eq!(a.finetune, b.finetune);
}

#[test]
fn checkpoint_header_and_reload() {
    let ds = dataset();
    let data = TrainData::<f64>::from_dataset(&ds).unwrap();
    let out = train::<f64>(&config(), &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&out.model, &path).unwrap();
    let h = read_header(&path).unwrap();
    assert_eq!(h.phase, Phase::Finetuned);
    assert_eq!(h.precision, Precision::F64);
    assert_eq!(h.dims, out.model.dims);
    assert!(matches!(load_checkpoint::<f32>(&path), Err(Error::Checkpoint(_))));
    let m: Model<f64> = load_checkpoint(&path).unwrap();
    assert_eq!(m.predict(&data).unwrap(), out.model.predict(&data).unwrap());

    let mut bytes = fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 1;
    fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Checksum)));
    assert!(matches!(load_checkpoint::<f64>(&dir.path().join("absent")), Err(Error::Io { .. })));
}

#[test]
fn predict_requires_training() {
    let ds = dataset();
    let data = TrainData::<f64>::from_dataset(&ds).unwrap();
    let mut m = Model::<f64>::new(config(), data.dims()).unwrap();
    assert!(matches!(m.predict(&data), Err(Error::Phase { .. })));
    m.pretrain_all(&data).unwrap();
    assert!(matches!(m.predict(&data), Err(Error::Phase { .. })));
    assert!(matches!(m.pretrain_all(&data), Err(Error::Phase { .. })));
    m.finetune(&data).unwrap();
    assert!(m.predict(&data).is_ok());
}

#[test]
fn every_variant_and_precision_evaluates() {
    let ds = dataset();
    for variant in Variant::ALL {
        for precision in [Precision::F32, Precision::F64] {
            let arm = Arm {
                label: variant.to_string(),
                config: TrainConfig { variant, precision, ..config() },
                train_fraction: 0.5,
            };
            let r = run_arm(&ds, &arm, &DEFAULT_KS).unwrap();
            assert_eq!(r.report.metrics.len(), 2);
            for m in &r.report.metrics {
                assert!((0.0..=1.0).contains(&m.ndcg) && (0.0..=1.0).contains(&m.recall));
            }
            assert_eq!(r.pretrain.encoder_tc.is_empty(), variant != Variant::Base);
        }
    }
}

#[test]
fn interactions_file_to_split() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ratings.tsv");
    let mut text = String::from("user\titem\n");
    for u in 0..12 {
        for i in 0..8 {
            if (u + i) % 3 != 0 {
                text.push_str(&format!("u{u}\ti{i}\n"));
            }
        }
    }
    text.push_str("lonely\ti0\n");
    fs::write(&path, text).unwrap();
    let recs = load_interactions(&path, DelimitedFormat::from_path(&path), true).unwrap();
    let (cat, m, split) = prepare_interactions(&recs, 5, &SplitRatio::default(), 3).unwrap();
    assert!(cat.user("lonely").is_none());
    assert_eq!(cat.num_users(), 12);
    assert_eq!(split.assignments.len(), m.nnz());
    assert!(prepare_interactions(&recs, 50, &SplitRatio::default(), 3).is_err());
}
