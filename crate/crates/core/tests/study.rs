use std::sync::Arc;

use homog_core::homogenized::{solve_homogenized, DirichletMesh, HomogenizedProblem};
use homog_core::study::{
    cordes_gate, rate_tables_by_flag, run_invariant_study, run_pipeline, source, Branch, Method, PipelineConfig, ReferenceKind,
    CSV_COLUMNS,
};
use homog_core::tensor::Classification;
use homog_core::{estimate_rate, HomogError, MatrixFieldSpec, RateTable, StudyConfig, Sym2};
use proptest::prelude::*;

#[test]
fn two_branch_synthetic_slopes() {
    let mut points = Vec::new();
    for n in [8.0f64, 16.0, 32.0, 64.0] {
        points.push((1.0 / n, 2.0 / n, true));
        points.push((1.0 / (n + 1.0), 0.5 * (n + 1.0f64).powf(-0.6), false));
    }
    let (dyadic, non) = rate_tables_by_flag("e", &points).unwrap();
    assert!((dyadic.unwrap().fit.slope - 1.0).abs() < 1e-12);
    assert!((non.unwrap().fit.slope - 0.6).abs() < 1e-12);
    let (only, none) = rate_tables_by_flag("e", &points[..2].iter().step_by(2).copied().chain([(0.01, 0.02, true)]).collect::<Vec<_>>()).unwrap();
    assert!(only.is_some() && none.is_none());
}

proptest! {
    #[test]
    fn fitted_slope_recovers_power_law(p in 0.1f64..3.0, c in 1e-3f64..1e3, n0 in 2usize..10, levels in 2usize..6) {
        let pts: Vec<(f64, f64)> = (0..levels).map(|i| {
            let h = 1.0 / (n0 << i) as f64;
            (h, c * h.powf(p))
        }).collect();
        let fit = estimate_rate(&pts).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!(fit.residual < 1e-10);
    }

    #[test]
    fn table_orders_consistent_with_errors(errors in prop::collection::vec(1e-8f64..1.0, 2..7)) {
        let pts: Vec<(f64, f64)> = errors.iter().enumerate().map(|(i, &e)| (0.5f64.powi(i as i32 + 1), e)).collect();
        let table = RateTable::new("random", &pts).unwrap();
        prop_assert!(table.consistency_defect() <= 1e-12);
    }
}

#[test]
fn constant_coefficient_studies_are_exact() {
    for (name, method, dyadic, non) in [
        ("identity", Method::Fem, vec![4, 8], vec![5, 9]),
        ("diag-1-9", Method::Fem, vec![4, 8], vec![]),
        ("diag-1-9", Method::Spectral, vec![2, 4], vec![]),
    ] {
        let mut config = StudyConfig::new(name, method);
        config.dyadic = dyadic;
        config.nondyadic = non;
        let out = run_invariant_study(&config).unwrap();
        assert_eq!(out.reference, ReferenceKind::Analytic);
        let scale = MatrixFieldSpec::builtin(name).unwrap().evaluate([0.0, 0.0]).frobenius();
        for row in &out.rows {
            assert!(row.err_r <= 1e-12 && row.err_abar <= 1e-12 * scale, "{name}: {row:?}");
        }
    }
}

#[test]
fn surrogate_reference_requires_opt_in() {
    let mut config = StudyConfig::new("ca-m-generic", Method::Fem);
    config.dyadic = vec![4, 8, 16];
    assert!(matches!(run_invariant_study(&config), Err(HomogError::NoReference(_))));
    config.self_reference = true;
    let out = run_invariant_study(&config).unwrap();
    assert_eq!(out.reference, ReferenceKind::Surrogate);
    let finest = out.rows.last().unwrap();
    assert_eq!((finest.err_r, finest.err_abar), (0.0, 0.0));
    let table = out.table(Branch::Dyadic).unwrap().1.as_ref().unwrap();
    assert_eq!(table.rows.len(), 2);
}

#[test]
fn invalid_configurations_rejected() {
    let mut config = StudyConfig::new("paper-sec5", Method::Spectral);
    assert!(config.validate().is_err());
    config.dyadic = vec![4, 8];
    config.nondyadic = vec![5, 9];
    assert!(config.validate().is_err());
    config.nondyadic.clear();
    config.dyadic = vec![8, 4];
    assert!(config.validate().is_err());
}

#[test]
fn csv_format_and_output_file() {
    let dir = std::env::temp_dir().join(format!("homog-study-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("study.csv");
    let mut config = StudyConfig::new("paper-sec5", Method::Fem);
    config.dyadic = vec![4, 8];
    config.nondyadic = vec![5, 9];
    config.output = Some(path.clone());
    let out = run_invariant_study(&config).unwrap();
    let written = std::fs::read_to_string(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    let csv = out.csv();
    assert_eq!(written, csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# "));
    assert_eq!(lines[1], CSV_COLUMNS);
    assert_eq!(lines.len(), 2 + 4);
    assert!(lines[2].starts_with("dyadic,4,"));
    assert!(lines[5].starts_with("nondyadic,9,"));
    for line in &lines[2..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), CSV_COLUMNS.split(',').count());
        assert!(fields[2..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
    assert_eq!(run_invariant_study(&StudyConfig { output: None, ..config }).unwrap().csv(), csv);
}

#[test]
fn identity_pipeline_is_plain_poisson() {
    let f = source("2pi2-sinsin").unwrap();
    let g = source("zero").unwrap();
    let mut config = PipelineConfig::new(MatrixFieldSpec::builtin("identity").unwrap(), f.clone(), g.clone());
    config.n_cell = 8;
    config.m_domain = 16;
    config.classify_k = None;
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.a_bar_h, Sym2::IDENTITY);
    let mesh = DirichletMesh::unit_square(16).unwrap();
    let poisson = solve_homogenized(&HomogenizedProblem { a_bar: Sym2::IDENTITY, f, g }, &mesh).unwrap();
    assert_eq!(report.solution.values(), poisson.values());
    assert!(report.solution_csv().starts_with("x1,x2,u\n"));
    assert_eq!(report.solution_csv().lines().count(), 1 + 17 * 17);
}

#[test]
fn laminate_pipeline_approaches_exact_effective_matrix() {
    let spec = MatrixFieldSpec::builtin("paper-sec5").unwrap();
    let f = source("pi2-sinsin").unwrap();
    let g = source("zero").unwrap();
    let mesh = DirichletMesh::unit_square(16).unwrap();
    let exact = solve_homogenized(
        &HomogenizedProblem { a_bar: Sym2::diag(0.625, 0.375), f: f.clone(), g: g.clone() },
        &mesh,
    )
    .unwrap();
    let mut last = f64::INFINITY;
    for n in [8, 16, 32] {
        let mut config = PipelineConfig::new(spec.clone(), f.clone(), g.clone());
        config.n_cell = n;
        config.m_domain = 16;
        config.classify_k = if n == 8 { Some(8) } else { None };
        let report = run_pipeline(&config).unwrap();
        if let Some(c) = &report.classification {
            assert_eq!(c.tensor.classification, Classification::TypeEps2);
        }
        let diff = report
            .solution
            .values()
            .iter()
            .zip(exact.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < last, "N = {n}: {diff} >= {last}");
        last = diff;
    }
    assert!(last < 1e-3);
}

#[test]
fn cordes_violation_needs_force() {
    // in two dimensions only a numerically degenerate field can fail the check
    let spec = MatrixFieldSpec::custom("flat", Arc::new(|_| Sym2::diag(1.0, 1e-17)), None).unwrap();
    let mut config = PipelineConfig::new(spec.clone(), source("one").unwrap(), source("zero").unwrap());
    config.cordes_resolution = 4;
    assert!(matches!(run_pipeline(&config), Err(HomogError::CordesViolated { .. })));
    let (report, forced) = cordes_gate(&spec, 4, true).unwrap();
    assert!(forced && !report.holds);
    let identity = MatrixFieldSpec::builtin("identity").unwrap();
    assert!(!cordes_gate(&identity, 4, false).unwrap().1);
}

#[test]
fn source_descriptor_file() {
    let dir = std::env::temp_dir().join(format!("homog-src-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let good = dir.join("f.json");
    std::fs::write(&good, r#"{"constant": 1.0, "terms": [{"amplitude": 2.0, "k": [1, 2], "basis": ["sin", "cos"]}]}"#).unwrap();
    let bad = dir.join("g.json");
    std::fs::write(&bad, r#"{"terms": [{"amplitude": 1.0, "k": [1, 1], "basis": ["tan", "cos"]}]}"#).unwrap();
    let f = source(good.to_str().unwrap()).unwrap();
    let bad_result = source(bad.to_str().unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
    let y = [0.3, 0.2];
    let want = 1.0 + 2.0 * (std::f64::consts::PI * 0.3).sin() * (2.0 * std::f64::consts::PI * 0.2).cos();
    assert!((f(y) - want).abs() < 1e-15);
    assert!(bad_result.is_err());
    assert!(source("no-such-source").is_err());
}
