use std::f64::consts::PI;
use std::sync::OnceLock;

use homog_core::coefficient::{laminate, BUILTINS};
use homog_core::{reference_solution, CellQuadrature, GridField, HomogError, MatrixFieldSpec, Sym2};
use proptest::prelude::*;

/// Built once: sampled bounds make construction of some built-ins costly.
fn builtins() -> &'static [MatrixFieldSpec] {
    static CELL: OnceLock<Vec<MatrixFieldSpec>> = OnceLock::new();
    CELL.get_or_init(|| BUILTINS.iter().map(|n| MatrixFieldSpec::builtin(n).unwrap()).collect())
}

#[test]
fn laminate_quarter_point_by_hand() {
    // omega = 1, sawtooth = 1/2, theta = 1/4, sin = 1
    let a = 1.0 / (6.0 + PI * PI / 4.0);
    let spec = MatrixFieldSpec::builtin("paper-sec5").unwrap();
    let m = spec.evaluate([0.25, 0.25]);
    assert!((m.a22 - a).abs() < 1e-15);
    assert!((m.a11 - (1.0 - a)).abs() < 1e-15);
    assert_eq!(m.a12, 0.0);
    assert!((a - 0.118105).abs() < 1e-5);
    let gamma = 1.0 / ((1.0 - a).powi(2) + a * a);
    assert!((spec.gamma([0.25, 0.25]) - gamma).abs() < 1e-14);
    assert!((gamma - 1.26310).abs() < 2e-5);
}

#[test]
fn identity_everywhere() {
    let spec = MatrixFieldSpec::builtin("identity").unwrap();
    for y in [[0.0, 0.0], [0.3, 0.9], [-4.2, 7.5]] {
        assert_eq!(spec.evaluate(y), Sym2::IDENTITY);
        assert_eq!(spec.gamma(y), 1.0);
    }
}

#[test]
fn gamma_of_half_identity() {
    let spec = MatrixFieldSpec::constant(Sym2::diag(0.5, 0.5)).unwrap();
    assert!((spec.gamma([0.1, 0.2]) - 2.0).abs() < 1e-15);
}

#[test]
fn laminate_scalar_range_on_grid() {
    for i in 0..256 {
        for j in 0..256 {
            let a = laminate::a([i as f64 / 256.0, j as f64 / 256.0]);
            assert!((0.1 - 1e-15..=5.0 / 6.0 + 1e-15).contains(&a), "a = {a} at ({i}, {j})");
        }
    }
}

#[test]
fn cordes_examples() {
    let id = MatrixFieldSpec::builtin("identity").unwrap().cordes_check(16).unwrap();
    assert_eq!(id.delta_hat, 1.0);
    let d19 = MatrixFieldSpec::builtin("diag-1-9").unwrap().cordes_check(16).unwrap();
    assert!((d19.delta_hat - 9.0 / 41.0).abs() < 1e-15);
    assert!(d19.delta_hat >= 1.0 / 9.0);
    let lam = MatrixFieldSpec::builtin("paper-sec5").unwrap().cordes_check(1024).unwrap();
    assert!(lam.holds && lam.delta_hat >= 1.0 / 9.0 - 1e-12);
}

#[test]
fn cordes_rejects_degenerate_field() {
    let spec = MatrixFieldSpec::custom(
        "nearly-degenerate",
        std::sync::Arc::new(|_| Sym2::diag(1.0, 1e-9)),
        None,
    )
    .unwrap();
    let report = spec.cordes_check(8).unwrap();
    assert!(report.delta_hat < 1e-8);
}

#[test]
fn reference_examples() {
    let r = reference_solution("paper-sec5").unwrap();
    let expected = 1.0 + (PI * PI / 4.0 - 2.0) / 8.0;
    assert!((r.r([0.25, 0.25]) - expected).abs() < 1e-14);
    assert!((expected - 1.058425).abs() < 1e-6);
    assert_eq!(r.a_bar, Sym2::diag(0.625, 0.375));
    let quad = CellQuadrature::new(512).unwrap();
    assert!((GridField::from_fn(&quad, |y| r.r(y)).mean() - 1.0).abs() < 1e-10);
    assert!(matches!(reference_solution("ca-m-generic"), Err(HomogError::NoReference(_))));
}

#[test]
fn descriptor_file_round_trip() {
    let dir = std::env::temp_dir().join(format!("homog-coef-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("table.json");
    std::fs::write(
        &path,
        r#"{"n": 2, "grid": 2, "cells": [[1,0,1],[2,0,1],[1,0,2],[2,0.5,2]], "lambda": 0.5, "Lambda": 3}"#,
    )
    .unwrap();
    let spec = MatrixFieldSpec::from_name_or_path(path.to_str().unwrap()).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    // cell index j * grid + i with i along y1
    assert_eq!(spec.evaluate([0.75, 0.25]), Sym2::new(2.0, 0.0, 1.0));
    assert_eq!(spec.evaluate([0.25, 0.75]), Sym2::new(1.0, 0.0, 2.0));
    assert_eq!(spec.evaluate([0.75, 0.75]), Sym2::new(2.0, 0.5, 2.0));
    assert!(MatrixFieldSpec::from_name_or_path("/nonexistent/field.json").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn periodic_exactly_on_dyadic_points(i in 0u32..(1 << 20), j in 0u32..(1 << 20), k1 in -2i32..=2, k2 in -2i32..=2) {
        let y = [i as f64 / (1u32 << 20) as f64, j as f64 / (1u32 << 20) as f64];
        let shifted = [y[0] + k1 as f64, y[1] + k2 as f64];
        for spec in builtins() {
            prop_assert_eq!(spec.evaluate(y), spec.evaluate(shifted));
        }
    }

    #[test]
    fn periodic_up_to_rounding(y1 in 0.0f64..1.0, y2 in 0.0f64..1.0, k1 in -2i32..=2, k2 in -2i32..=2) {
        for spec in builtins() {
            let a = spec.evaluate([y1, y2]);
            let b = spec.evaluate([y1 + k1 as f64, y2 + k2 as f64]);
            // points within rounding of a jump line may land on either side
            if spec.name() == "paper-sec5" && ((2.0 * y1).fract().min(1.0 - (2.0 * y1).fract()) < 1e-12) {
                continue;
            }
            prop_assert!(a.sub(&b).frobenius() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn symmetric_and_elliptic(y1 in -1.0f64..2.0, y2 in -1.0f64..2.0, angle in 0.0f64..(2.0 * PI)) {
        for spec in builtins() {
            let a = spec.evaluate([y1, y2]);
            let xi = [angle.cos(), angle.sin()];
            let q = a.quad_form(xi);
            prop_assert!(q >= spec.lambda() - 1e-12 && q <= spec.big_lambda() + 1e-12,
                "{}: {} outside [{}, {}]", spec.name(), q, spec.lambda(), spec.big_lambda());
            let ev = a.eigenvalues();
            prop_assert!(ev[0] >= spec.lambda() - 1e-12 && ev[1] <= spec.big_lambda() + 1e-12);
        }
    }

    #[test]
    fn gamma_within_bounds(y1 in 0.0f64..1.0, y2 in 0.0f64..1.0) {
        for spec in builtins() {
            let (l, u) = (spec.lambda(), spec.big_lambda());
            let g = spec.gamma([y1, y2]);
            prop_assert!(g >= l / (u * u) - 1e-12 && g <= u / (l * l) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cordes_refinement_never_increases(res in 2usize..48) {
        for spec in builtins() {
            let coarse = spec.cordes_check(res).unwrap().delta_hat;
            let fine = spec.cordes_check(2 * res).unwrap().delta_hat;
            prop_assert!(fine <= coarse);
        }
    }
}
