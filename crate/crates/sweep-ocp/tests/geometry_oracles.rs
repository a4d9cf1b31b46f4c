mod common;

use common::{brute_force_projection, coderivative_table_mismatches, instance_errors, AffineInstance};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use sweep_ocp::geometry::{coderivative_orthant, CodClass};
use sweep_ocp::{Matrix, Vector};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn projection_and_decomposition_match_oracles(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = AffineInstance::random(&mut rng);
        let (proj, eta) = instance_errors(&inst, &mut rng);
        prop_assert!(proj <= 1e-8, "projection error {proj:e}");
        prop_assert!(eta <= 1e-10, "eta round trip error {eta:e}");
    }

    #[test]
    fn projection_is_idempotent_on_the_set(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = AffineInstance::random(&mut rng);
        let y = brute_force_projection(&inst.a, &inst.rhs(), &inst.query);
        let again = brute_force_projection(&inst.a, &inst.rhs(), &y);
        prop_assert!((again - y).amax() <= 1e-9);
    }
}

#[test]
fn brute_force_oracle_on_a_square() {
    let a = Matrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    let rhs = Vector::from_row_slice(&[1.0, 1.0, 1.0, 1.0]);
    let y = brute_force_projection(&a, &rhs, &Vector::from_row_slice(&[3.0, 0.5]));
    assert_eq!(y, Vector::from_row_slice(&[1.0, 0.5]));
    let y = brute_force_projection(&a, &rhs, &Vector::from_row_slice(&[3.0, -2.0]));
    assert_eq!(y, Vector::from_row_slice(&[1.0, -1.0]));
}

#[test]
fn coderivative_table_is_exhaustively_reproduced() {
    let (bad, total) = coderivative_table_mismatches();
    assert_eq!(total, 27 + 27 * 27 + 27 * 27 * 27);
    assert_eq!(bad, 0);
}

#[test]
fn coderivative_spot_checks() {
    let v = |x: &[f64]| Vector::from_row_slice(x);
    let got = coderivative_orthant(&v(&[-1.0, 0.0, 0.0]), &v(&[0.0, 0.0, 2.0]), &v(&[5.0, 1.0, 0.0])).unwrap();
    assert_eq!(got, Some(vec![CodClass::MustBeZero, CodClass::Nonnegative, CodClass::Free]));
    assert_eq!(coderivative_orthant(&v(&[0.0]), &v(&[1.0]), &v(&[0.1])).unwrap(), None);
}
