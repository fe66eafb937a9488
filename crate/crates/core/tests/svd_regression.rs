use linbreg::tensor::{matmul, svd_thin, Transpose};
use linbreg::Tensor;

/// A 10x16 iterate from a classifier run that the SVD once rejected.
fn fixture() -> Tensor {
    let text = include_str!("data/svd_wide_10x16.txt");
    let mut lines = text.lines();
    let dims: Vec<usize> = lines.next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    let body = lines.next().unwrap().trim_matches(|c| c == '[' || c == ']');
    let data = body.split(", ").map(|v| v.parse().unwrap()).collect();
    Tensor::new(&dims, data).unwrap()
}

#[test]
fn wide_classifier_layer_factorises() {
    let a = fixture();
    let svd = svd_thin(&a).unwrap();
    let back = svd.compose(&svd.s).unwrap();
    assert!(back.sub(&a).norm() <= 1e-12 * a.norm());
    let g = matmul(&svd.v, Transpose::Yes, &svd.v, Transpose::No).unwrap();
    for i in 0..10 {
        for j in 0..10 {
            assert!((g.at2(i, j) - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
    }
    assert_eq!(svd.s.iter().filter(|&&s| s > 1e-8 * svd.s[0]).count(), 4);
}
