use proptest::prelude::*;
use tensor::catalog::op_cases;
use tensor::rng;
use tensor::{grad_check, Adam, AdamConfig, GradCheckOptions, Tape, Tensor, Var};

#[test]
fn every_op_passes_randomized_gradient_check() {
    for case in op_cases() {
        for seed in 0..20 {
            let report = (case.run)(seed).unwrap_or_else(|e| panic!("{} seed {seed}: {e}", case.name));
            assert!(
                report.max_rel_error < 1e-4,
                "{} seed {seed}: rel error {}",
                case.name,
                report.max_rel_error
            );
        }
    }
}

fn mlp(t: &mut Tape, p: &[Var], x: Var) -> tensor::Result<Var> {
    let h = t.matmul(x, p[0])?;
    let h = t.add(h, p[1])?;
    let h = t.tanh(h)?;
    let h = t.matmul(h, p[2])?;
    let h = t.gelu(h)?;
    let out = t.matmul(h, p[3])?;
    t.mean(out)
}

#[test]
fn three_layer_mlp_matches_finite_differences() {
    // 2->2 (+2 bias) ->2 ->2: 4 + 2 + 4 + 2 = 12 weights; with the 4
    // input values as leaves too the check covers 16 parameters.
    let mut r = rng::stream(11, "mlp");
    let params = vec![
        rng::normal(&mut r, &[2, 2], 0.8),
        rng::normal(&mut r, &[2], 0.8),
        rng::normal(&mut r, &[2, 2], 0.8),
        rng::normal(&mut r, &[2, 1], 0.8),
        rng::normal(&mut r, &[2, 2], 1.0),
    ];
    assert_eq!(params.iter().map(Tensor::numel).sum::<usize>(), 16);
    let report = grad_check(
        |t, p| mlp(t, &p[..4], p[4]),
        &params,
        GradCheckOptions::default(),
    )
    .unwrap();
    assert_eq!(report.coords_checked, 16);
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn cross_entropy_of_two_class_logits() {
    let logits = Tensor::new(vec![3, 2], vec![0.3, -0.2, 1.5, 0.1, -0.7, 0.4]).unwrap();
    let report = grad_check(|t, p| t.cross_entropy(p[0], &[0, 1, 1]), &[logits], GradCheckOptions::default()).unwrap();
    assert!(report.max_rel_error < 1e-4);
}

#[test]
fn concat_splits_gradient_exactly() {
    let mut t = Tape::new();
    let a = t.leaf(Tensor::from_vec(vec![1.0, -2.0]));
    let b = t.leaf(Tensor::from_vec(vec![3.0]));
    let w = t.constant(Tensor::from_vec(vec![0.5, 0.25, -4.0]));
    let c = t.concat(&[a, b], 0).unwrap();
    let cw = t.mul(c, w).unwrap();
    let loss = t.sum(cw).unwrap();
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(a).unwrap(), &[0.5, 0.25]);
    assert_eq!(g.get(b).unwrap(), &[-4.0]);
}

fn train_quadratic(seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "init");
    let mut params = vec![rng::normal(&mut r, &[8], 1.0)];
    let target = Tensor::from_vec((0..8).map(f64::from).collect());
    let mut adam = Adam::new(AdamConfig::with_lr(0.05), &params);
    for _ in 0..100 {
        let mut t = Tape::new();
        let p = t.leaf(params[0].clone());
        let c = t.constant(target.clone());
        let d = t.sub(p, c).unwrap();
        let sq = t.mul(d, d).unwrap();
        let loss = t.sum(sq).unwrap();
        let g = t.backward(loss).unwrap();
        adam.step(&mut params, &[g.get(p)]).unwrap();
    }
    params.remove(0).into_data()
}

#[test]
fn identical_seeds_give_bitwise_identical_training() {
    let a = train_quadratic(3);
    let b = train_quadratic(3);
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_ne!(a, train_quadratic(4));
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(values in prop::collection::vec(-30.0f64..30.0, 1..40), cols in 1usize..8) {
        let rows = values.len() / cols;
        prop_assume!(rows > 0);
        let data = values[..rows * cols].to_vec();
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![rows, cols], data).unwrap());
        let y = t.softmax(x).unwrap();
        for r in 0..rows {
            let row = t.value(y).row(r);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
