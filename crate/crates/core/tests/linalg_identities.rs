use lbddnn::linalg::{self, Matrix};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |data| Matrix::from_row_major(rows, cols, data).unwrap())
}

fn triple() -> impl Strategy<Value = (Matrix, Matrix, Matrix)> {
    (1usize..=5, 1usize..=5, 1usize..=5, 1usize..=5)
        .prop_flat_map(|(m, n, p, q)| (matrix(m, n), matrix(n, p), matrix(p, q)))
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let err = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

proptest! {
    #[test]
    fn vec_of_triple_product((a, b, c) in triple()) {
        let lhs = linalg::vectorize(&a.matmul(&b).unwrap().matmul(&c).unwrap());
        let rhs = linalg::kronecker(&c.transpose(), &a).matvec(&linalg::vectorize(&b)).unwrap();
        prop_assert!(max_rel(&lhs, &rhs) <= 1e-12);
    }

    #[test]
    fn vectorize_round_trips(a in (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let v = linalg::vectorize(&a);
        prop_assert_eq!(linalg::unvectorize(&v, a.rows(), a.cols()).unwrap(), a);
    }

    #[test]
    fn kronecker_mixed_product(
        (a, c) in (1usize..=3, 1usize..=3, 1usize..=3)
            .prop_flat_map(|(m, n, p)| (matrix(m, n), matrix(n, p))),
        (b, d) in (1usize..=3, 1usize..=3, 1usize..=3)
            .prop_flat_map(|(m, n, p)| (matrix(m, n), matrix(n, p))),
    ) {
        // (A⊗B)(C⊗D) = (AC)⊗(BD)
        let lhs = linalg::kronecker(&a, &b).matmul(&linalg::kronecker(&c, &d)).unwrap();
        let rhs = linalg::kronecker(&a.matmul(&c).unwrap(), &b.matmul(&d).unwrap());
        prop_assert!(max_rel(lhs.as_slice(), rhs.as_slice()) <= 1e-12);
    }
}

#[test]
fn derivative_of_triple_product_by_finite_differences() {
    // ∂vec(ABC)/∂vec(B) = Cᵀ⊗A, checked column by column
    let a = Matrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [2.0, 0.0]]);
    let b = Matrix::from_rows(&[[0.3, -1.0, 2.0, 0.1], [1.5, 0.2, -0.7, 0.4]]);
    let c = Matrix::from_rows(&[[1.0, 2.0], [0.0, -1.0], [3.0, 0.5], [-2.0, 1.0]]);
    let analytic = linalg::kronecker(&c.transpose(), &a);
    let vb = linalg::vectorize(&b);
    let f = |v: &[f64]| {
        let bm = linalg::unvectorize(v, b.rows(), b.cols()).unwrap();
        linalg::vectorize(&a.matmul(&bm).unwrap().matmul(&c).unwrap())
    };
    let h = 1e-6;
    for col in 0..vb.len() {
        let mut plus = vb.clone();
        plus[col] += h;
        let mut minus = vb.clone();
        minus[col] -= h;
        let fd: Vec<f64> = f(&plus).iter().zip(f(&minus)).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        for (r, v) in fd.iter().enumerate() {
            assert!((v - analytic[(r, col)]).abs() < 1e-8, "entry ({r}, {col})");
        }
    }
}

#[test]
fn right_to_left_product_order() {
    let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    let b = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
    // factors [A, B] multiply as B·A
    let p = linalg::right_to_left_product(&[a.clone(), b.clone()], 2).unwrap();
    assert_eq!(p, b.matmul(&a).unwrap());
    assert_eq!(linalg::right_to_left_product(&[], 3).unwrap(), Matrix::identity(3));
}
