use super::*;
use crate::error::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randn(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

#[test]
fn softmax_symmetry() {
    let x = Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap();
    let y = x.softmax_rows().unwrap();
    assert_eq!(y.data(), vec![0.5, 0.5]);
}

#[test]
fn matmul_identity() {
    let eye = Tensor::from_vec(
        vec![3, 3],
        vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    )
    .unwrap();
    let x = Tensor::from_vec(vec![3, 3], (1..=9).map(|v| v as f64).collect()).unwrap();
    let y = eye.matmul(&x).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn cosine_orthogonal_and_collinear() {
    let a = Tensor::from_vec(vec![2], vec![1.0, 0.0]).unwrap();
    let b = Tensor::from_vec(vec![2], vec![0.0, 1.0]).unwrap();
    assert_eq!(a.cosine_rows(&b).unwrap().data(), vec![0.0]);
    let c = Tensor::from_vec(vec![2], vec![2.0, 0.0]).unwrap();
    let d = Tensor::from_vec(vec![2], vec![1.0, 0.0]).unwrap();
    assert!((c.cosine_rows(&d).unwrap().data()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn backward_square() {
    let x = Tensor::param(vec![1], vec![3.0]).unwrap();
    let loss = x.mul(&x).unwrap().sum();
    loss.backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![6.0]);
}

#[test]
fn backward_softmax_sum_is_zero() {
    let x = Tensor::param(vec![4], vec![0.3, -1.2, 2.0, 0.0]).unwrap();
    let loss = x.softmax_rows().unwrap().sum();
    loss.backward().unwrap();
    for g in x.grad().unwrap() {
        assert!(g.abs() < 1e-12, "grad {g} not ~0");
    }
}

#[test]
fn backward_matmul_hand_oracle() {
    // loss = sum(A B) with A = [[1,2]], B = [[3],[4]]
    // dA = [[3,4]] (row sums of B), dB = [[1],[2]] (col sums of A).
    let a = Tensor::param(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let b = Tensor::param(vec![2, 1], vec![3.0, 4.0]).unwrap();
    let loss = a.matmul(&b).unwrap().sum();
    loss.backward().unwrap();
    assert_eq!(a.grad().unwrap(), vec![3.0, 4.0]);
    assert_eq!(b.grad().unwrap(), vec![1.0, 2.0]);
}

#[test]
fn backward_accumulates_until_zeroed() {
    let x = Tensor::param(vec![1], vec![2.0]).unwrap();
    for _ in 0..2 {
        let loss = x.mul(&x).unwrap().sum();
        loss.backward().unwrap();
    }
    assert_eq!(x.grad().unwrap(), vec![8.0]);
    x.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn backward_rejects_non_scalar() {
    let x = Tensor::param(vec![2], vec![1.0, 2.0]).unwrap();
    let y = x.scale(2.0);
    assert!(matches!(y.backward(), Err(Error::NonScalarLoss { .. })));
}

#[test]
fn grad_check_square() {
    let x = Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
    let err = grad_check(|x| Ok(x.mul(x)?.sum()), &x, 1e-5).unwrap();
    assert!(err < 1e-6, "err = {err}");
}

#[test]
fn grad_check_sigmoid_at_zero() {
    let x = Tensor::from_vec(vec![1], vec![0.0]).unwrap();
    let err = grad_check(|x| Ok(x.sigmoid().sum()), &x, 1e-5).unwrap();
    assert!(err < 1e-6, "err = {err}");
    // analytic value is sigma'(0) = 0.25
    x.zero_grad();
    let loss = {
        let p = Tensor::param(vec![1], vec![0.0]).unwrap();
        let l = p.sigmoid().sum();
        l.backward().unwrap();
        p.grad().unwrap()[0]
    };
    assert!((loss - 0.25).abs() < 1e-12);
}

#[test]
fn grad_check_constant_is_zero() {
    let x = Tensor::from_vec(vec![2], vec![1.0, -1.0]).unwrap();
    let err = grad_check(|_| Ok(Tensor::scalar(7.0).scale(1.0)), &x, 1e-5).unwrap();
    assert_eq!(err, 0.0);
}

#[test]
fn grad_check_every_op() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    type Case = (
        &'static str,
        Box<dyn Fn(&Tensor) -> crate::error::Result<Tensor>>,
        Vec<usize>,
    );
    let cases: Vec<Case> = vec![
        ("add", Box::new(|x: &Tensor| {
            let c = Tensor::from_vec(vec![3, 2], vec![0.5; 6])?;
            Ok(x.add(&c)?.sum())
        }), vec![3, 2]),
        ("sub_mul", Box::new(|x: &Tensor| {
            let c = Tensor::from_vec(vec![3, 2], vec![0.7; 6])?;
            x.sub(&c)?.mul(x)?.mean().mul(&Tensor::scalar(1.0).scale(1.0)).map(|t| t.sum())
        }), vec![3, 2]),
        ("matmul_transpose", Box::new(|x: &Tensor| {
            Ok(x.matmul(&x.transpose()?)?.sum())
        }), vec![3, 4]),
        ("softmax", Box::new(|x: &Tensor| {
            let w = Tensor::from_vec(vec![2, 3], vec![1.0, -2.0, 0.5, 0.3, 1.1, -0.4])?;
            Ok(x.softmax_rows()?.mul(&w)?.sum())
        }), vec![2, 3]),
        ("sigmoid_exp", Box::new(|x: &Tensor| Ok(x.sigmoid().exp().sum())), vec![4]),
        ("ln", Box::new(|x: &Tensor| {
            Ok(x.mul(x)?.add(&Tensor::full(vec![3], 1.0))?.ln()?.sum())
        }), vec![3]),
        ("l2norm", Box::new(|x: &Tensor| {
            let w = Tensor::from_vec(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.2])?;
            Ok(x.l2norm_rows()?.mul(&w)?.sum())
        }), vec![2, 3]),
        ("relu_leaky", Box::new(|x: &Tensor| {
            Ok(x.relu().add(&x.leaky_relu(0.2))?.sum())
        }), vec![5]),
        ("concat_slice", Box::new(|x: &Tensor| {
            let c = Tensor::concat_cols(&[x.clone(), x.slice_cols(0, 2)?])?;
            let r = Tensor::concat_rows(&[c.clone(), c.slice_rows(0, 1)?])?;
            Ok(r.sum())
        }), vec![2, 3]),
        ("mean_rows_add_row", Box::new(|x: &Tensor| {
            let m = x.mean_rows()?;
            Ok(x.add_row(&m)?.mul_row(&m)?.sum())
        }), vec![3, 2]),
        ("layernorm", Box::new(|x: &Tensor| {
            let w = Tensor::from_vec(vec![2, 4], (0..8).map(|v| v as f64 * 0.3 - 1.0).collect())?;
            Ok(x.layernorm_rows(1e-5)?.mul(&w)?.sum())
        }), vec![2, 4]),
        ("cosine", Box::new(|x: &Tensor| {
            let b = Tensor::from_vec(vec![2, 3], vec![0.4, -0.2, 1.3, 0.9, 0.1, -0.7])?;
            Ok(x.cosine_rows(&b)?.sum())
        }), vec![2, 3]),
        ("bce", Box::new(|x: &Tensor| {
            let y = Tensor::from_vec(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0])?;
            x.bce_with_logits(&y, 0.5)
        }), vec![2, 2]),
        ("scale_by", Box::new(|x: &Tensor| {
            let s = x.slice_rows(0, 1)?.slice_cols(0, 1)?;
            Ok(x.scale_by(&s)?.sum())
        }), vec![2, 2]),
    ];
    for (name, f, shape) in cases {
        let x = randn(shape, &mut rng);
        let err = grad_check(f, &x, 1e-5).unwrap();
        assert!(err < 1e-4, "{name}: grad_check err = {err}");
    }
}

#[test]
fn l2norm_rows_have_unit_norm_or_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = randn(vec![5, 4], &mut rng).data();
    // force a zero row
    for v in &mut x[8..12] {
        *v = 0.0;
    }
    let t = Tensor::from_vec(vec![5, 4], x).unwrap();
    let y = t.l2norm_rows().unwrap().data();
    for i in 0..5 {
        let norm: f64 = y[i * 4..(i + 1) * 4].iter().map(|v| v * v).sum::<f64>().sqrt();
        if i == 2 {
            assert_eq!(norm, 0.0);
        } else {
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn softmax_rows_sum_to_one_and_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t = randn(vec![6, 5], &mut rng).scale(10.0);
    let y = t.softmax_rows().unwrap().data();
    for i in 0..6 {
        let sum: f64 = y[i * 5..(i + 1) * 5].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(y[i * 5..(i + 1) * 5].iter().all(|&v| v > 0.0));
    }
}

#[test]
fn shape_mismatch_reports_op_and_shapes() {
    let a = Tensor::zeros(vec![2, 3]);
    let b = Tensor::zeros(vec![3, 3]);
    let err = a.add(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[3, 3]"), "{msg}");
}

#[test]
fn ln_domain_error() {
    let x = Tensor::from_vec(vec![2], vec![1.0, -0.5]).unwrap();
    assert!(matches!(x.ln(), Err(Error::LogDomain { index: 1, .. })));
}

#[test]
fn ten_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = randn(vec![3, 4], &mut rng);
    let bytes = t.to_ten_bytes();
    let back = Tensor::from_ten_bytes(&bytes).unwrap();
    assert_eq!(back.shape(), t.shape());
    assert_eq!(back.data(), t.data());
}

#[test]
fn ten_rejects_malformed_input() {
    assert!(Tensor::from_ten_bytes(&[]).is_err());
    assert!(Tensor::from_ten_bytes(&[1, 0, 0, 0]).is_err()); // missing dims
    assert!(Tensor::from_ten_bytes(&[0, 0, 0, 0]).is_err()); // rank 0
    let mut huge = Vec::new();
    huge.extend_from_slice(&2u32.to_le_bytes());
    huge.extend_from_slice(&u32::MAX.to_le_bytes());
    huge.extend_from_slice(&u32::MAX.to_le_bytes());
    assert!(Tensor::from_ten_bytes(&huge).is_err()); // overflow
    let mut short = Tensor::scalar(1.0).to_ten_bytes();
    short.pop();
    assert!(Tensor::from_ten_bytes(&short).is_err());
}
