use privaudit::baselines::{BlackBoxClassifier, BlackBoxConfig, LossThreshold};
use privaudit::data::{generate_synthetic, partition, PartitionSpec, Sample, SyntheticSpec};
use privaudit::metrics::balanced_accuracy;
use privaudit::model::{ModelConfig, TargetModel};
use privaudit::property::{align, extract_all, fit_alignment, ExtractMode, PropertyRecord, STD_FLOOR};
use rand::Rng;
use tensor::rng;

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let spec = SyntheticSpec {
        size: n,
        ..SyntheticSpec::default()
    };
    generate_synthetic(&spec, seed).unwrap().samples
}

fn small_model() -> TargetModel {
    let cfg = ModelConfig {
        d_model: 16,
        ..ModelConfig::default()
    };
    TargetModel::new(cfg, 2).unwrap()
}

fn records(n: usize) -> Vec<PropertyRecord> {
    extract_all(&small_model(), &samples(n, 0), ExtractMode::Both).unwrap()
}

#[test]
fn aligned_audit_train_is_standardized() {
    let recs = records(40);
    let cfg = fit_alignment(&recs, ExtractMode::Both, Some(&[0, 1])).unwrap();
    let aligned: Vec<_> = recs.iter().map(|r| align(r, &cfg).unwrap()).collect();
    let blocks = [
        (cfg.forward.as_ref().unwrap(), aligned.iter().map(|a| a.forward.clone().unwrap()).collect::<Vec<_>>()),
        (cfg.backward.as_ref().unwrap(), aligned.iter().map(|a| a.backward.clone().unwrap()).collect()),
    ];
    for (stats, rows) in &blocks {
        for (std, pick) in [
            (&stats.sequence.std, (|b: &privaudit::property::FeatureBlock| b.sequence.clone()) as fn(&_) -> Vec<f64>),
            (&stats.scalars.std, |b| b.scalars.clone()),
        ] {
            let cols: Vec<Vec<f64>> = rows.iter().map(pick).collect();
            for (j, &s) in std.iter().enumerate() {
                let col: Vec<f64> = cols.iter().map(|r| r[j]).collect();
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
                if s > STD_FLOOR {
                    assert!((sd - 1.0).abs() < 1e-9, "column {j} std {sd}");
                } else {
                    assert!(sd < 1e-9);
                }
            }
        }
    }
}

#[test]
fn alignment_is_reproducible_and_width_stable() {
    let recs = records(24);
    let (fit, rest) = recs.split_at(8);
    let a = fit_alignment(fit, ExtractMode::Both, None).unwrap();
    let b = fit_alignment(fit, ExtractMode::Both, None).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let (fs, fc) = a.forward.as_ref().unwrap().widths();
    let (bs, bc) = a.backward.as_ref().unwrap().widths();
    let mut r = rng::stream(0, "align-widths");
    let model = small_model();
    let extra: Vec<Sample> = (0..100)
        .map(|i| {
            let len = r.random_range(1..=64);
            Sample::new(1000 + i, (0..len).map(|_| r.random_range(1..256)).collect(), r.random_range(0..2))
        })
        .collect();
    for rec in rest.iter().cloned().chain(extract_all(&model, &extra, ExtractMode::Both).unwrap()) {
        let x = align(&rec, &a).unwrap();
        let (f, bk) = (x.forward.unwrap(), x.backward.unwrap());
        assert_eq!((f.sequence.len(), f.scalars.len()), (fs, fc));
        assert_eq!((bk.sequence.len(), bk.scalars.len()), (bs, bc));
    }
    // A fresh extraction from the same checkpoint serializes to the same bytes.
    let again = extract_all(&small_model(), &samples(24, 0)[8..], ExtractMode::Both).unwrap();
    for (x, y) in rest.iter().zip(&again) {
        let ax = serde_json::to_vec(&align(x, &a).unwrap()).unwrap();
        let ay = serde_json::to_vec(&align(y, &a).unwrap()).unwrap();
        assert_eq!(ax, ay);
    }
}

#[test]
fn loss_threshold_on_identical_distributions_is_chance() {
    let mut r = rng::stream(5, "loss-null");
    let draw = |r: &mut rng::StreamRng| -> Vec<f64> { rng::normal(r, &[128], 1.0).data().iter().map(|v| v.exp()).collect() };
    let trials = 100;
    let mut mean = 0.0;
    for _ in 0..trials {
        let t = LossThreshold::fit(&draw(&mut r), &draw(&mut r)).unwrap();
        let (m, n) = (draw(&mut r), draw(&mut r));
        let decisions: Vec<u8> = m.iter().chain(&n).map(|&l| t.decide_score(LossThreshold::score(l))).collect();
        let labels: Vec<u8> = (0..256).map(|i| u8::from(i < 128)).collect();
        mean += balanced_accuracy(&decisions, &labels).unwrap() / trials as f64;
    }
    assert!((mean - 0.5).abs() < 0.05, "mean balanced accuracy {mean}");
}

/// Audit-train and audit-test records from an untrained target.
fn null_records(seed: u64) -> [Vec<PropertyRecord>; 4] {
    let spec = PartitionSpec::default();
    let pool = samples(spec.required_pool(), seed);
    let p = partition(&pool, &spec, seed).unwrap();
    let model = TargetModel::new(ModelConfig::default(), seed).unwrap();
    let ex = |v: &[Sample]| extract_all(&model, v, ExtractMode::Forward).unwrap();
    [ex(&p.audit.train.members), ex(&p.audit.train.non_members), ex(&p.audit.test.members), ex(&p.audit.test.non_members)]
}

fn black_box_accuracy(recs: &[Vec<PropertyRecord>; 4], cfg: &BlackBoxConfig, seed: u64) -> f64 {
    let clf = BlackBoxClassifier::train(&recs[0], &recs[1], cfg, seed).unwrap();
    let test: Vec<PropertyRecord> = recs[2].iter().chain(&recs[3]).cloned().collect();
    let decisions: Vec<u8> = test.iter().map(|r| clf.infer(r).unwrap().decision).collect();
    let labels: Vec<u8> = (0..test.len()).map(|i| u8::from(i < recs[2].len())).collect();
    balanced_accuracy(&decisions, &labels).unwrap()
}

#[test]
fn black_box_null_audit_ablation_and_determinism() {
    let cfg = BlackBoxConfig::default();
    let runs: Vec<[Vec<PropertyRecord>; 4]> = (0..3).map(null_records).collect();
    let mean = runs.iter().enumerate().map(|(s, r)| black_box_accuracy(r, &cfg, s as u64)).sum::<f64>() / 3.0;
    assert!((mean - 0.5).abs() < 0.05, "null balanced accuracy {mean}");

    let ablated = BlackBoxConfig {
        zero_features: true,
        ..cfg.clone()
    };
    let acc = black_box_accuracy(&runs[0], &ablated, 0);
    assert!((acc - 0.5).abs() < 0.05, "ablated balanced accuracy {acc}");

    let a = BlackBoxClassifier::train(&runs[1][0], &runs[1][1], &cfg, 9).unwrap();
    let b = BlackBoxClassifier::train(&runs[1][0], &runs[1][1], &cfg, 9).unwrap();
    assert_eq!(a.scores(&runs[1][2]).unwrap(), b.scores(&runs[1][2]).unwrap());
}
