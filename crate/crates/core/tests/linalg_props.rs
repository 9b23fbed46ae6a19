use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teaser_core::linalg::{sym_eig, DenseMatrix, Gram, SparseBinaryMatrix};

fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.random_range(-1.0..1.0);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    a
}

#[test]
fn eig_of_random_binary_gram_reconstructs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let rows: Vec<Vec<usize>> = (0..5)
            .map(|_| (0..3).filter(|_| rng.random_bool(0.5)).collect())
            .collect();
        let x = SparseBinaryMatrix::from_rows(3, rows).unwrap();
        let g = x.gram().unwrap();
        let e = sym_eig(&g).unwrap();
        assert!(e.reconstruction_residual(&g) <= 1e-10);
        assert!(e.orthonormality_residual() <= 1e-10);
        assert!(e.eigenvalues.iter().all(|&w| w >= 0.0));
        assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn eig_200x200_residuals() {
    let a = random_symmetric(200, 200);
    let e = sym_eig(&a).unwrap();
    assert!(e.reconstruction_residual(&a) <= 1e-10);
    assert!(e.orthonormality_residual() <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eig_residuals_bounded(n in 1usize..=200, seed in any::<u64>()) {
        let a = random_symmetric(n, seed);
        let e = sym_eig(&a).unwrap();
        prop_assert!(e.reconstruction_residual(&a) <= 1e-10);
        prop_assert!(e.orthonormality_residual() <= 1e-10);
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}
