use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homog_core::mixed::solve_invariant_fe;
use homog_core::study::{self, Method, PipelineConfig, StudyConfig, DEFAULT_SUBDIVISIONS};
use homog_core::tensor::{classify, diagonal_cross_check};
use homog_core::{CellQuadrature, CellSolver, HomogError, MatrixFieldSpec, Sym2};

/// Periodic homogenization of nondivergence-form operators under the Cordes condition.
#[derive(Parser, Debug)]
#[command(name = "homog", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Built-in coefficient name or JSON descriptor path.
    #[arg(long, global = true, default_value = "paper-sec5")]
    coefficient: String,
    /// Quadrature order: sub-triangles per element edge (fem) or nodes per axis (spectral).
    #[arg(long, global = true)]
    quad: Option<usize>,
    /// Tolerance override for the type classification.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Continue past a failed Cordes check.
    #[arg(long, global = true)]
    force: bool,
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the Cordes parameter of the coefficient.
    CordesCheck {
        /// Vertex grid resolution per axis.
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        /// Additional uniformly random sample points (drawn from --seed).
        #[arg(long, default_value_t = 4096)]
        random: usize,
    },
    /// Compute the invariant measure at a list of resolutions.
    Invariant {
        #[arg(long, default_value = "fem")]
        method: Method,
        /// Mesh sizes for the mixed method.
        #[arg(long = "N", value_delimiter = ',', default_values_t = [16usize, 32, 64])]
        n: Vec<usize>,
        /// Frequency cutoffs for the spectral method.
        #[arg(long = "K", value_delimiter = ',', default_values_t = [4usize, 8, 16])]
        k: Vec<usize>,
    },
    /// Compute the effective matrix at one resolution.
    Effective {
        #[arg(long, default_value = "fem")]
        method: Method,
        #[arg(long = "N", default_value_t = 64)]
        n: usize,
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
    },
    /// Compute the third-order tensor and classify the coefficient.
    Classify {
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        /// Also evaluate the structural formula for diagonal coefficients.
        #[arg(long)]
        cross_check: bool,
    },
    /// Cell solve, effective matrix and homogenized Dirichlet solve.
    Solve {
        /// Domain side lengths.
        #[arg(long, num_args = 2, value_names = ["A", "B"], default_values_t = [1.0f64, 1.0])]
        domain: Vec<f64>,
        /// Domain cells per axis.
        #[arg(long = "M", default_value_t = 32)]
        m: usize,
        /// Cell mesh size.
        #[arg(long = "N", default_value_t = 64)]
        n: usize,
        /// Frequency cutoff for the classification section; 0 skips it.
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        /// Source: built-in name or JSON file.
        #[arg(long, default_value = "pi2-sinsin")]
        f: String,
        /// Boundary data: built-in name or JSON file.
        #[arg(long, default_value = "zero")]
        g: String,
        /// Write nodal values as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study of the invariant measure and effective matrix.
    Study {
        #[arg(long, default_value = "fem")]
        method: Method,
        #[arg(long = "dyadic-N", value_delimiter = ',', default_values_t = [8usize, 16, 32, 64, 128])]
        dyadic: Vec<usize>,
        #[arg(long = "nondyadic-N", value_delimiter = ',')]
        nondyadic: Vec<usize>,
        /// Frequency cutoffs for the spectral method.
        #[arg(long = "K", value_delimiter = ',', default_values_t = [4usize, 8, 16, 32])]
        k: Vec<usize>,
        /// Measure errors against the finest level when no analytic reference exists.
        #[arg(long)]
        self_reference: bool,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn format_matrix(a: &Sym2) -> String {
    format!("[[{:.12}, {:.12}], [{:.12}, {:.12}]]", a.a11, a.a12, a.a12, a.a22)
}

fn cell_solver(spec: &MatrixFieldSpec, k: usize, quad: Option<usize>) -> Result<CellSolver, HomogError> {
    match quad {
        Some(m) => CellSolver::with_quadrature(spec, k, CellQuadrature::new(m)?),
        None => CellSolver::new(spec, k),
    }
}

fn gate(spec: &MatrixFieldSpec, force: bool) -> Result<(), HomogError> {
    let (report, forced) = study::cordes_gate(spec, 256, force)?;
    if forced {
        eprintln!("warning: Cordes check failed (delta_hat = {:.6e}), continuing under --force", report.delta_hat);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, HomogError> {
    let g = cli.global;
    let spec = MatrixFieldSpec::from_name_or_path(&g.coefficient)?;
    let subdivisions = g.quad.unwrap_or(DEFAULT_SUBDIVISIONS);
    match cli.command {
        Command::CordesCheck { resolution, random } => {
            let report = spec.cordes_check(resolution)?;
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            let mut random_min = f64::INFINITY;
            for _ in 0..random {
                let a = spec.evaluate([rng.gen::<f64>(), rng.gen::<f64>()]);
                random_min = random_min.min(a.trace().powi(2) / a.frobenius_sq() - 1.0);
            }
            println!("{report}");
            if random > 0 {
                println!("random samples   : {random} (seed {})", g.seed);
                println!("delta (random)   : {random_min:.12}");
            }
            let holds = report.holds && (random == 0 || random_min > 0.0);
            if holds {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: Cordes condition violated");
                Ok(ExitCode::from(2))
            }
        }
        Command::Invariant { method, n, k } => {
            gate(&spec, g.force)?;
            match method {
                Method::Fem => {
                    println!("N,c_h,min_r_h,int_r_tilde_h,a11,a12,a22,residual");
                    for &n in &n {
                        let m = solve_invariant_fe(&spec, n, subdivisions)?;
                        let a = m.effective_matrix();
                        println!(
                            "{n},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.3e}",
                            m.c(),
                            m.min_r(&spec),
                            m.r_tilde_integral(),
                            a.a11,
                            a.a12,
                            a.a22,
                            m.residual()
                        );
                    }
                }
                Method::Spectral => {
                    println!("K,c_K,min_r_K,mean_r_K,a11,a12,a22,residual");
                    for &k in &k {
                        let s = cell_solver(&spec, k, g.quad)?;
                        let meas = s.measure();
                        let a = meas.effective_matrix(s.samples());
                        println!(
                            "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.3e}",
                            meas.c(),
                            meas.min_r(),
                            meas.r().mean(),
                            a.a11,
                            a.a12,
                            a.a22,
                            meas.residual()
                        );
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Effective { method, n, k } => {
            gate(&spec, g.force)?;
            let a = match method {
                Method::Fem => solve_invariant_fe(&spec, n, subdivisions)?.effective_matrix(),
                Method::Spectral => {
                    let s = cell_solver(&spec, k, g.quad)?;
                    s.measure().effective_matrix(s.samples())
                }
            };
            println!("A_bar_h = {}", format_matrix(&a));
            if let Some(reference) = spec.reference() {
                println!("A_bar   = {}", format_matrix(&reference.a_bar));
                println!("error   = {:.6e}", a.sub(&reference.a_bar).frobenius());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify { k, cross_check } => {
            gate(&spec, g.force)?;
            let s = cell_solver(&spec, k, g.quad)?;
            println!("{}", classify(&s, g.tol)?);
            if cross_check {
                let x = diagonal_cross_check(&spec, k, g.tol)?;
                println!("(d1 w_A, d22 w_B) = {:+.6e}", x.criterion_1);
                println!("(d2 w_A, d11 w_B) = {:+.6e}", x.criterion_2);
                println!("structural formula relative difference = {:.3e}", x.relative_difference);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { domain, m, n, k, f, g: boundary, out } => {
            let mut config = PipelineConfig::new(spec, study::source(&f)?, study::source(&boundary)?);
            config.n_cell = n;
            config.subdivisions = subdivisions;
            config.classify_k = (k > 0).then_some(k);
            config.classify_tolerance = g.tol;
            config.domain = [domain[0], domain[1]];
            config.m_domain = m;
            config.force = g.force;
            let report = study::run_pipeline(&config)?;
            if report.forced {
                eprintln!("warning: Cordes check failed, continuing under --force");
            }
            println!("{report}");
            if let Some(path) = out {
                std::fs::write(&path, report.solution_csv())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Study { method, dyadic, nondyadic, k, self_reference, out } => {
            gate(&spec, g.force)?;
            let mut config = StudyConfig::new(g.coefficient, method);
            match method {
                Method::Fem => {
                    config.dyadic = dyadic;
                    config.nondyadic = nondyadic;
                    config.quadrature = g.quad;
                }
                Method::Spectral => {
                    config.dyadic = k;
                    config.quadrature = g.quad;
                }
            }
            config.tolerance = g.tol;
            config.self_reference = self_reference;
            config.output = out.clone();
            let output = study::run_invariant_study(&config)?;
            match out {
                Some(_) => print!("{output}"),
                None => {
                    print!("{}", output.csv());
                    eprint!("{output}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
