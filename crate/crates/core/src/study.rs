//! Convergence studies, rate fits and the end-to-end homogenization pipeline.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::coefficient::{CordesReport, MatrixFieldSpec, Point, ReferenceSolution, Sym2};
use crate::error::{HomogError, Result};
use crate::homogenized::{solve_homogenized, DirichletMesh, FESolution, HomogenizedProblem, ScalarFn};
use crate::mixed::{solve_invariant_fe, FEInvariantMeasure};
use crate::spectral::{CellQuadrature, CellSolver, GridField};
use crate::tensor::{classify, ClassificationReport};

/// Version tag written into the CSV header comment.
pub const CSV_VERSION: u32 = 1;

/// Column names of the invariant-study CSV.
pub const CSV_COLUMNS: &str = "branch,N,h,err_r_l2,err_abar,c_h,min_r_h";

/// Default sub-triangle count per element edge for the mixed method.
pub const DEFAULT_SUBDIVISIONS: usize = 4;

/// Least-squares fit of `log e = slope * log h + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Fit a convergence rate to `(h, e)` pairs.
pub fn estimate_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(HomogError::InvalidInput("rate estimation needs at least two points".into()));
    }
    if let Some(&(h, e)) = points.iter().find(|(h, e)| !(*h > 0.0 && *e > 0.0 && h.is_finite() && e.is_finite())) {
        return Err(HomogError::InvalidInput(format!(
            "rate estimation needs positive finite data, got h = {h}, e = {e}"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(HomogError::InvalidInput("rate estimation needs distinct resolutions".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(RateFit { slope, intercept, residual: (ss / n).sqrt() })
}

/// Pairwise order between consecutive levels.
pub fn pairwise_order(coarse: (f64, f64), fine: (f64, f64)) -> f64 {
    (coarse.1 / fine.1).ln() / (coarse.0 / fine.0).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub h: f64,
    pub error: f64,
    /// `None` on the coarsest row.
    pub order: Option<f64>,
}

/// Errors against resolution with pairwise orders and a global fit.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub label: String,
    pub rows: Vec<RateRow>,
    pub fit: RateFit,
}

impl RateTable {
    /// Rows are sorted from coarse to fine.
    pub fn new(label: impl Into<String>, points: &[(f64, f64)]) -> Result<Self> {
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let fit = estimate_rate(&sorted)?;
        let rows = sorted
            .iter()
            .enumerate()
            .map(|(i, &(h, error))| RateRow {
                h,
                error,
                order: (i > 0).then(|| pairwise_order(sorted[i - 1], (h, error))),
            })
            .collect();
        Ok(RateTable { label: label.into(), rows, fit })
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.h, r.error)).collect()
    }

    /// Largest deviation between stored and recomputed pairwise orders and slope.
    pub fn consistency_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for w in self.rows.windows(2) {
            let recomputed = pairwise_order((w[0].h, w[0].error), (w[1].h, w[1].error));
            defect = defect.max(w[1].order.map_or(f64::INFINITY, |o| (o - recomputed).abs()));
        }
        match estimate_rate(&self.points()) {
            Ok(fit) => defect.max((fit.slope - self.fit.slope).abs()),
            Err(_) => f64::INFINITY,
        }
    }
}

impl fmt::Display for RateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label)?;
        writeln!(f, "  {:>12}  {:>12}  {:>8}", "h", "error", "order")?;
        for row in &self.rows {
            match row.order {
                Some(o) => writeln!(f, "  {:>12.5e}  {:>12.5e}  {:>8.3}", row.h, row.error, o)?,
                None => writeln!(f, "  {:>12.5e}  {:>12.5e}  {:>8}", row.h, row.error, "-")?,
            }
        }
        write!(f, "  fitted slope {:.4} (log-residual {:.2e})", self.fit.slope, self.fit.residual)
    }
}

/// Group flagged `(h, e)` data into one table per flag value.
pub fn rate_tables_by_flag(label: &str, points: &[(f64, f64, bool)]) -> Result<(Option<RateTable>, Option<RateTable>)> {
    let pick = |flag: bool| -> Vec<(f64, f64)> {
        points.iter().filter(|p| p.2 == flag).map(|p| (p.0, p.1)).collect()
    };
    let table = |flag: bool, name: &str| -> Result<Option<RateTable>> {
        let pts = pick(flag);
        if pts.is_empty() {
            Ok(None)
        } else {
            RateTable::new(format!("{label} [{name}]"), &pts).map(Some)
        }
    };
    Ok((table(true, Branch::Dyadic.as_str())?, table(false, Branch::NonDyadic.as_str())?))
}

/// Whether no element interior meets the jump line `y1 = 1/2`.
pub fn is_aligned(n: usize) -> bool {
    n % 2 == 0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Branch {
    Dyadic,
    NonDyadic,
    Spectral,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Dyadic => "dyadic",
            Branch::NonDyadic => "nondyadic",
            Branch::Spectral => "spectral",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Spectral,
    Fem,
}

impl std::str::FromStr for Method {
    type Err = HomogError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(Method::Spectral),
            "fem" => Ok(Method::Fem),
            other => Err(HomogError::InvalidInput(format!("unknown method `{other}` (expected spectral or fem)"))),
        }
    }
}

/// Configuration of an invariant-measure convergence study.
///
/// For the mixed method the two lists hold mesh sizes `N`; for the spectral
/// method `dyadic` holds the frequency cutoffs `K` and `nondyadic` must be empty.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub coefficient: String,
    pub method: Method,
    pub dyadic: Vec<usize>,
    pub nondyadic: Vec<usize>,
    /// Sub-triangles per element edge (mixed) or midpoint nodes per axis (spectral).
    pub quadrature: Option<usize>,
    pub output: Option<PathBuf>,
    pub tolerance: Option<f64>,
    /// Use the finest level as a surrogate when no analytic reference exists.
    pub self_reference: bool,
}

impl StudyConfig {
    pub fn new(coefficient: impl Into<String>, method: Method) -> Self {
        StudyConfig {
            coefficient: coefficient.into(),
            method,
            dyadic: Vec::new(),
            nondyadic: Vec::new(),
            quadrature: None,
            output: None,
            tolerance: None,
            self_reference: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dyadic.is_empty() && self.nondyadic.is_empty() {
            return Err(HomogError::InvalidInput("study needs at least one resolution list".into()));
        }
        if self.method == Method::Spectral && !self.nondyadic.is_empty() {
            return Err(HomogError::InvalidInput("the spectral method takes a single K list".into()));
        }
        for (name, list) in [("dyadic", &self.dyadic), ("nondyadic", &self.nondyadic)] {
            if list.is_empty() {
                continue;
            }
            if list.len() < 2 {
                return Err(HomogError::InvalidInput(format!("{name} list needs at least two levels")));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HomogError::InvalidInput(format!("{name} list must be strictly increasing")));
            }
            if list[0] == 0 {
                return Err(HomogError::InvalidInput(format!("{name} list contains a zero resolution")));
            }
        }
        if self.method == Method::Fem && self.dyadic.iter().chain(&self.nondyadic).any(|&n| n < 2) {
            return Err(HomogError::InvalidInput("mesh sizes must be at least 2".into()));
        }
        if let Some(q) = self.quadrature {
            if q == 0 {
                return Err(HomogError::InvalidInput("quadrature order must be positive".into()));
            }
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(HomogError::InvalidInput(format!("tolerance must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// One resolution of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRow {
    pub branch: Branch,
    pub n: usize,
    pub h: f64,
    pub err_r: f64,
    pub err_abar: f64,
    pub c_h: f64,
    pub min_r_h: f64,
    pub a_bar_h: Sym2,
    pub r_tilde_integral: f64,
    pub r_integral: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    Analytic,
    /// Finest level of each branch; its own row is excluded from the rate fits.
    Surrogate,
}

/// Study result: CSV rows plus per-branch rate tables.
#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub coefficient: String,
    pub method: Method,
    pub reference: ReferenceKind,
    pub rows: Vec<StudyRow>,
    /// `(branch, table for ||r - r_h||, table for |A_bar - A_bar_h|)`.
    pub tables: Vec<(Branch, Option<RateTable>, Option<RateTable>)>,
}

impl StudyOutput {
    pub fn csv(&self) -> String {
        let mut out = String::new();
        let method = match self.method {
            Method::Spectral => "spectral",
            Method::Fem => "fem",
        };
        let reference = match self.reference {
            ReferenceKind::Analytic => "analytic",
            ReferenceKind::Surrogate => "surrogate",
        };
        let _ = writeln!(
            out,
            "# homog invariant-study v{CSV_VERSION}; coefficient={}; method={method}; reference={reference}",
            self.coefficient
        );
        let _ = writeln!(out, "{CSV_COLUMNS}");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.branch, r.n, r.h, r.err_r, r.err_abar, r.c_h, r.min_r_h
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.csv())?;
        Ok(())
    }

    pub fn table(&self, branch: Branch) -> Option<&(Branch, Option<RateTable>, Option<RateTable>)> {
        self.tables.iter().find(|t| t.0 == branch)
    }

    /// Fitted slope of `||r - r_h||` on a branch.
    pub fn r_slope(&self, branch: Branch) -> Option<f64> {
        self.table(branch).and_then(|t| t.1.as_ref()).map(|t| t.fit.slope)
    }

    /// Fitted slope of `|A_bar - A_bar_h|` on a branch.
    pub fn abar_slope(&self, branch: Branch) -> Option<f64> {
        self.table(branch).and_then(|t| t.2.as_ref()).map(|t| t.fit.slope)
    }
}

impl fmt::Display for StudyOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.reference == ReferenceKind::Surrogate {
            writeln!(f, "errors are measured against the finest level (surrogate reference)")?;
        }
        for (_, r, a) in &self.tables {
            for t in [r, a].into_iter().flatten() {
                writeln!(f, "{t}")?;
            }
        }
        Ok(())
    }
}

enum Level {
    Fem(FEInvariantMeasure),
    Spectral(Box<CellSolver>),
}

impl Level {
    fn r_at(&self, spec: &MatrixFieldSpec, y: Point) -> f64 {
        match self {
            Level::Fem(m) => m.r_at(spec, y),
            Level::Spectral(s) => s.measure().r_at(y),
        }
    }

    fn a_bar(&self) -> Sym2 {
        match self {
            Level::Fem(m) => m.effective_matrix(),
            Level::Spectral(s) => s.measure().effective_matrix(s.samples()),
        }
    }
}

/// Error of `r_h` against `reference`, integrated with rules matched to the level.
fn r_error(level: &Level, spec: &MatrixFieldSpec, reference: impl Fn(Point) -> f64) -> f64 {
    match level {
        Level::Fem(m) => m.l2_error(spec, reference),
        Level::Spectral(s) => {
            let fine = CellQuadrature::new(4 * s.quadrature().m()).expect("positive node count");
            let r = s.measure().r_on(&fine);
            r.sub(&GridField::from_fn(&fine, reference)).l2_norm()
        }
    }
}

fn solve_level(spec: &MatrixFieldSpec, config: &StudyConfig, n: usize) -> Result<Level> {
    match config.method {
        Method::Fem => Ok(Level::Fem(solve_invariant_fe(
            spec,
            n,
            config.quadrature.unwrap_or(DEFAULT_SUBDIVISIONS),
        )?)),
        Method::Spectral => {
            let quad = match config.quadrature {
                Some(m) => CellQuadrature::new(m)?,
                None => CellQuadrature::default_for(n),
            };
            Ok(Level::Spectral(Box::new(CellSolver::with_quadrature(spec, n, quad)?)))
        }
    }
}

fn level_row(level: &Level, spec: &MatrixFieldSpec, branch: Branch, n: usize) -> StudyRow {
    match level {
        Level::Fem(m) => StudyRow {
            branch,
            n,
            h: 1.0 / n as f64,
            err_r: 0.0,
            err_abar: 0.0,
            c_h: m.c(),
            min_r_h: m.min_r(spec),
            a_bar_h: m.effective_matrix(),
            r_tilde_integral: m.r_tilde_integral(),
            r_integral: m.r_integral(),
            residual: m.residual(),
        },
        Level::Spectral(s) => {
            let meas = s.measure();
            StudyRow {
                branch,
                n,
                h: 1.0 / n as f64,
                err_r: 0.0,
                err_abar: 0.0,
                c_h: meas.c(),
                min_r_h: meas.min_r(),
                a_bar_h: meas.effective_matrix(s.samples()),
                r_tilde_integral: meas.r_tilde().mean(),
                r_integral: meas.r().mean(),
                residual: meas.residual(),
            }
        }
    }
}

/// Run an invariant-measure study; writes the CSV when an output path is set.
pub fn run_invariant_study(config: &StudyConfig) -> Result<StudyOutput> {
    config.validate()?;
    let spec = MatrixFieldSpec::from_name_or_path(&config.coefficient)?;
    let analytic: Option<ReferenceSolution> = spec.reference();
    if analytic.is_none() && !config.self_reference {
        return Err(HomogError::NoReference(spec.name().to_string()));
    }
    let branches: Vec<(Branch, &Vec<usize>)> = match config.method {
        Method::Spectral => vec![(Branch::Spectral, &config.dyadic)],
        Method::Fem => vec![(Branch::Dyadic, &config.dyadic), (Branch::NonDyadic, &config.nondyadic)],
    };

    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for (branch, list) in branches {
        if list.is_empty() {
            continue;
        }
        let levels = list
            .iter()
            .map(|&n| solve_level(&spec, config, n))
            .collect::<Result<Vec<_>>>()?;
        let mut branch_rows: Vec<StudyRow> = Vec::with_capacity(levels.len());
        for (level, &n) in levels.iter().zip(list.iter()) {
            let mut row = level_row(level, &spec, branch, n);
            match &analytic {
                Some(reference) => {
                    row.err_r = r_error(level, &spec, |y| reference.r(y));
                    row.err_abar = level.a_bar().sub(&reference.a_bar).frobenius();
                }
                None => {
                    let finest = levels.last().expect("non-empty list");
                    row.err_r = r_error(level, &spec, |y| finest.r_at(&spec, y));
                    row.err_abar = level.a_bar().sub(&finest.a_bar()).frobenius();
                }
            }
            branch_rows.push(row);
        }
        let fitted: &[StudyRow] = match analytic {
            Some(_) => &branch_rows,
            None => &branch_rows[..branch_rows.len() - 1],
        };
        let table_for = |name: &str, pick: fn(&StudyRow) -> f64| -> Option<RateTable> {
            let pts: Vec<(f64, f64)> = fitted.iter().map(|r| (r.h, pick(r))).collect();
            // Degenerate data (exact solutions, single surrogate-fit point) gets no table.
            RateTable::new(format!("{name} [{branch}]"), &pts).ok()
        };
        let r_table = table_for("||r - r_h||_L2", |r| r.err_r);
        let a_table = table_for("|A_bar - A_bar_h|", |r| r.err_abar);
        tables.push((branch, r_table, a_table));
        rows.extend(branch_rows);
    }

    let output = StudyOutput {
        coefficient: spec.name().to_string(),
        method: config.method,
        reference: if analytic.is_some() { ReferenceKind::Analytic } else { ReferenceKind::Surrogate },
        rows,
        tables,
    };
    if let Some(path) = &config.output {
        output.write_csv(path)?;
    }
    Ok(output)
}

/// Built-in sources and boundary data on the homogenized domain.
pub const SOURCE_BUILTINS: &[&str] = &["zero", "one", "sinsin", "pi2-sinsin", "2pi2-sinsin", "affine"];

/// Resolve a built-in source name or a JSON source descriptor file.
///
/// Descriptor: `{"constant": c, "terms": [{"amplitude": a, "k": [k1, k2], "basis": ["sin", "cos"]}]}`
/// where each term is `a * basis0(pi k1 x1) * basis1(pi k2 x2)`.
pub fn source(name_or_path: &str) -> Result<ScalarFn> {
    let f: ScalarFn = match name_or_path {
        "zero" => Arc::new(|_| 0.0),
        "one" => Arc::new(|_| 1.0),
        "sinsin" => Arc::new(|y: Point| (PI * y[0]).sin() * (PI * y[1]).sin()),
        "pi2-sinsin" => Arc::new(|y: Point| PI * PI * (PI * y[0]).sin() * (PI * y[1]).sin()),
        "2pi2-sinsin" => Arc::new(|y: Point| 2.0 * PI * PI * (PI * y[0]).sin() * (PI * y[1]).sin()),
        "affine" => Arc::new(|y: Point| 1.0 + y[0] + 2.0 * y[1]),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                HomogError::InvalidInput(format!("`{path}` is neither a built-in source nor a readable file: {e}"))
            })?;
            let desc: SourceDescriptor = serde_json::from_str(&text)?;
            desc.into_fn()?
        }
    };
    Ok(f)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDescriptor {
    #[serde(default)]
    constant: f64,
    #[serde(default)]
    terms: Vec<SourceTerm>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceTerm {
    amplitude: f64,
    k: [f64; 2],
    basis: [String; 2],
}

impl SourceDescriptor {
    fn into_fn(self) -> Result<ScalarFn> {
        if let Some(b) = self.terms.iter().flat_map(|t| t.basis.iter()).find(|b| *b != "sin" && *b != "cos") {
            return Err(HomogError::InvalidInput(format!("unknown source basis `{b}` (expected sin or cos)")));
        }
        let terms: Vec<(f64, [f64; 2], [bool; 2])> = self
            .terms
            .iter()
            .map(|t| (t.amplitude, t.k, [t.basis[0] == "sin", t.basis[1] == "sin"]))
            .collect();
        let constant = self.constant;
        Ok(Arc::new(move |y: Point| {
            let mut v = constant;
            for (a, k, sin) in &terms {
                let b0 = if sin[0] { (PI * k[0] * y[0]).sin() } else { (PI * k[0] * y[0]).cos() };
                let b1 = if sin[1] { (PI * k[1] * y[1]).sin() } else { (PI * k[1] * y[1]).cos() };
                v += a * b0 * b1;
            }
            v
        }))
    }
}

/// End-to-end run: Cordes check, effective matrix, classification, homogenized solve.
#[derive(Clone)]
pub struct PipelineConfig {
    pub coefficient: MatrixFieldSpec,
    /// Cell mesh size for the mixed method.
    pub n_cell: usize,
    pub subdivisions: usize,
    /// Frequency cutoff of the spectral classification; `None` skips it.
    pub classify_k: Option<usize>,
    pub classify_tolerance: Option<f64>,
    pub domain: [f64; 2],
    pub m_domain: usize,
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub force: bool,
    pub cordes_resolution: usize,
}

impl fmt::Debug for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PipelineConfig")
            .field("coefficient", &self.coefficient.name())
            .field("n_cell", &self.n_cell)
            .field("m_domain", &self.m_domain)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl PipelineConfig {
    pub fn new(coefficient: MatrixFieldSpec, f: ScalarFn, g: ScalarFn) -> Self {
        PipelineConfig {
            coefficient,
            n_cell: 64,
            subdivisions: DEFAULT_SUBDIVISIONS,
            classify_k: Some(16),
            classify_tolerance: None,
            domain: [1.0, 1.0],
            m_domain: 32,
            f,
            g,
            force: false,
            cordes_resolution: 256,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineReport {
    pub coefficient: String,
    pub cordes: CordesReport,
    /// Set when the Cordes check failed and the run continued under `force`.
    pub forced: bool,
    pub a_bar_h: Sym2,
    pub c_h: f64,
    pub min_r_h: f64,
    pub cell_residual: f64,
    pub r_tilde_integral: f64,
    pub classification: Option<ClassificationReport>,
    pub solution: FESolution,
}

impl PipelineReport {
    /// Nodal values as CSV `x1,x2,u`.
    pub fn solution_csv(&self) -> String {
        let mesh = self.solution.mesh();
        let mut out = String::from("x1,x2,u\n");
        for (i, u) in self.solution.values().iter().enumerate() {
            let y = mesh.node(i);
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", y[0], y[1], u);
        }
        out
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "coefficient      : {}", self.coefficient)?;
        writeln!(f, "[cordes]")?;
        writeln!(f, "{}", self.cordes)?;
        if self.forced {
            writeln!(f, "warning          : Cordes check failed, continuing under --force")?;
        }
        writeln!(f, "[effective matrix]")?;
        writeln!(
            f,
            "A_bar_h          : [[{:.12}, {:.12}], [{:.12}, {:.12}]]",
            self.a_bar_h.a11, self.a_bar_h.a12, self.a_bar_h.a12, self.a_bar_h.a22
        )?;
        writeln!(f, "c_h              : {:.12}", self.c_h)?;
        writeln!(f, "min r_h          : {:.6e}", self.min_r_h)?;
        writeln!(f, "cell residual    : {:.3e}", self.cell_residual)?;
        writeln!(f, "int r~_h - 1     : {:.3e}", self.r_tilde_integral - 1.0)?;
        if let Some(c) = &self.classification {
            writeln!(f, "[classification]")?;
            writeln!(f, "{c}")?;
        }
        writeln!(f, "[homogenized solve]")?;
        let mesh = self.solution.mesh();
        writeln!(f, "mesh             : {} x {} cells, {} nodes", mesh.m(), mesh.m(), mesh.num_nodes())?;
        writeln!(f, "residual         : {:.3e}", self.solution.residual)?;
        write!(f, "smallest eigval  : {:.6e}", self.solution.ritz_min)
    }
}

/// Cordes gate shared by the CLI subcommands: errors unless `force` is set.
pub fn cordes_gate(spec: &MatrixFieldSpec, resolution: usize, force: bool) -> Result<(CordesReport, bool)> {
    let report = spec.cordes_check(resolution)?;
    if report.holds {
        Ok((report, false))
    } else if force {
        Ok((report, true))
    } else {
        Err(HomogError::CordesViolated { delta_hat: report.delta_hat })
    }
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let spec = &config.coefficient;
    let (cordes, forced) = cordes_gate(spec, config.cordes_resolution, config.force)?;
    let measure = solve_invariant_fe(spec, config.n_cell, config.subdivisions)?;
    let a_bar_h = if spec.is_constant() {
        // r = 1 exactly, so the effective matrix is the coefficient itself.
        spec.evaluate([0.0, 0.0])
    } else {
        measure.effective_matrix()
    };
    let classification = match config.classify_k {
        Some(k) => {
            let solver = CellSolver::new(spec, k)?;
            Some(classify(&solver, config.classify_tolerance)?)
        }
        None => None,
    };
    let mesh = DirichletMesh::new(config.domain[0], config.domain[1], config.m_domain)?;
    let problem = HomogenizedProblem { a_bar: a_bar_h, f: config.f.clone(), g: config.g.clone() };
    let solution = solve_homogenized(&problem, &mesh)?;
    Ok(PipelineReport {
        coefficient: spec.name().to_string(),
        cordes,
        forced,
        a_bar_h,
        c_h: measure.c(),
        min_r_h: measure.min_r(spec),
        cell_residual: measure.residual(),
        r_tilde_integral: measure.r_tilde_integral(),
        classification,
        solution,
    })
}
