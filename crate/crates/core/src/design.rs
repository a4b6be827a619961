//! Design matrices: loading, centering with an unpenalized intercept, Gram
//! matrices and the diagnostics used by the support-recovery theory
//! (bounded entries, Gram deviation, irrepresentable constant, restricted
//! eigenvalue).

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Response, design and penalty layout of a regression problem.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: DVector<f64>,
    x: Arc<DMatrix<f64>>,
    penalty_mask: Vec<bool>,
    names: Vec<String>,
    centered: bool,
    intercept: bool,
    raw_means: Option<Vec<f64>>,
}

/// What a fitted coefficient vector needs to be applied to raw predictors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignMeta {
    /// Number of columns of the fitted design (including an added intercept).
    pub p: usize,
    /// Whether column 0 is an intercept added by [`Dataset::with_intercept`].
    pub intercept: bool,
    /// Means subtracted from each raw predictor column (0 for columns left as is).
    pub raw_means: Option<Vec<f64>>,
}

/// Summary statistics of a design relevant to the error bounds.
#[derive(Debug, Clone, Serialize)]
pub struct DesignDiagnostics {
    /// max_{i,j} |x_ij|
    pub k_x: f64,
    /// max_{j,k} |Σ̂_jk − Σ_jk| for a supplied reference Σ.
    pub gram_deviation: Option<f64>,
    /// min over penalized j of ‖x_j‖²/n.
    pub min_col_norm_sq: f64,
    /// Irrepresentable constant for a supplied active set.
    pub irrepresentable_eta0: Option<f64>,
}

impl Dataset {
    /// Builds a dataset. Every column is penalized unless a mask says otherwise.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, penalty_mask: Option<Vec<bool>>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::param(format!("need at least 2 observations (got {n})")));
        }
        if x.nrows() != n {
            return Err(Error::Dimension(format!(
                "response has {n} entries but the design has {} rows",
                x.nrows()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("response entry {i} is not finite")));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "design entry ({}, {}) is not finite",
                k % n,
                k / n
            )));
        }
        let p = x.ncols();
        let penalty_mask = penalty_mask.unwrap_or_else(|| vec![true; p]);
        if penalty_mask.len() != p {
            return Err(Error::Dimension(format!(
                "penalty mask has {} entries for {p} columns",
                penalty_mask.len()
            )));
        }
        Ok(Self {
            y,
            x: Arc::new(x),
            penalty_mask,
            names: (1..=p).map(|j| format!("x{j}")).collect(),
            centered: false,
            intercept: false,
            raw_means: None,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::Dimension(format!(
                "{} column names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn penalty_mask(&self) -> &[bool] {
        &self.penalty_mask
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn penalized_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.penalty_mask[j]).collect()
    }

    pub fn unpenalized_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| !self.penalty_mask[j]).collect()
    }

    pub fn meta(&self) -> DesignMeta {
        DesignMeta {
            p: self.p(),
            intercept: self.intercept,
            raw_means: self.raw_means.clone(),
        }
    }

    /// Same design, new response. The design matrix is shared, not copied.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::Dimension(format!(
                "new response has {} entries, design has {} rows",
                y.len(),
                self.n()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("response contains non-finite values"));
        }
        Ok(Self { y, ..self.clone() })
    }

    /// Marks the given columns as unpenalized.
    pub fn unpenalize(mut self, columns: &[usize]) -> Result<Self> {
        for &j in columns {
            if j >= self.p() {
                return Err(Error::param(format!("column {j} out of range (p = {})", self.p())));
            }
            self.penalty_mask[j] = false;
        }
        Ok(self)
    }

    /// Prepends an unpenalized column of ones and mean-centers every
    /// penalized column. Applying it twice is a no-op.
    pub fn with_intercept(&self) -> Self {
        if self.intercept {
            return self.clone();
        }
        let (n, p) = (self.n(), self.p());
        let mut x = DMatrix::zeros(n, p + 1);
        x.column_mut(0).fill(1.0);
        let mut means = vec![0.0; p];
        for j in 0..p {
            let col = self.x.column(j);
            let shift = if self.penalty_mask[j] { col.mean() } else { 0.0 };
            means[j] = shift;
            let mut dst = x.column_mut(j + 1);
            for i in 0..n {
                dst[i] = col[i] - shift;
            }
        }
        let mut mask = Vec::with_capacity(p + 1);
        mask.push(false);
        mask.extend_from_slice(&self.penalty_mask);
        let mut names = Vec::with_capacity(p + 1);
        names.push("intercept".to_string());
        names.extend(self.names.iter().cloned());
        Self {
            y: self.y.clone(),
            x: Arc::new(x),
            penalty_mask: mask,
            names,
            centered: true,
            intercept: true,
            raw_means: Some(means),
        }
    }

    /// Normalized Gram matrix `XᵀX / n`, exactly symmetric.
    pub fn gram(&self) -> DMatrix<f64> {
        gram(&self.x)
    }

    /// Largest absolute entry of the design.
    pub fn k_x(&self) -> f64 {
        self.x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_col_norm_sq(&self) -> f64 {
        let n = self.n() as f64;
        self.penalized_indices()
            .into_iter()
            .map(|j| self.x.column(j).norm_squared() / n)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn diagnostics(
        &self,
        reference: Option<&DMatrix<f64>>,
        active: Option<&[usize]>,
    ) -> Result<DesignDiagnostics> {
        let gram_deviation = match reference {
            Some(sigma) => {
                if sigma.nrows() != self.p() || sigma.ncols() != self.p() {
                    return Err(Error::Dimension(format!(
                        "reference matrix is {}×{}, design has {} columns",
                        sigma.nrows(),
                        sigma.ncols(),
                        self.p()
                    )));
                }
                Some((self.gram() - sigma).amax())
            }
            None => None,
        };
        let irrepresentable_eta0 = match active {
            Some(s) => Some(self.irrepresentable_eta0(s)?),
            None => None,
        };
        let min_col_norm_sq = self.min_col_norm_sq();
        Ok(DesignDiagnostics {
            k_x: self.k_x(),
            gram_deviation,
            min_col_norm_sq: if min_col_norm_sq.is_finite() { min_col_norm_sq } else { 0.0 },
            irrepresentable_eta0,
        })
    }

    fn irrepresentable_matrix(&self, active: &[usize]) -> Result<DMatrix<f64>> {
        let mut sorted = active.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != active.len() {
            return Err(Error::Rank("active set lists a column twice".into()));
        }
        for &j in active {
            if j >= self.p() {
                return Err(Error::param(format!("active column {j} out of range")));
            }
            if !self.penalty_mask[j] {
                return Err(Error::param(format!("active column {j} is unpenalized")));
            }
        }
        let inactive: Vec<usize> = self
            .penalized_indices()
            .into_iter()
            .filter(|j| !active.contains(j))
            .collect();
        if active.is_empty() {
            return Ok(DMatrix::zeros(inactive.len(), 0));
        }
        let xs = self.x.select_columns(active);
        let gss = xs.tr_mul(&xs);
        let cond = condition_number(&gss);
        if !(cond < 1e12) {
            return Err(Error::Rank(format!(
                "X_Sᵀ X_S is singular (condition number {cond:.3e})"
            )));
        }
        let chol = gss
            .cholesky()
            .ok_or_else(|| Error::Rank("X_Sᵀ X_S is not positive definite".into()))?;
        let xo = self.x.select_columns(&inactive);
        // (X_₋Sᵀ X_S)(X_Sᵀ X_S)⁻¹ = (G⁻¹ X_Sᵀ X_₋S)ᵀ
        let cross = xs.tr_mul(&xo);
        Ok(chol.solve(&cross).transpose())
    }

    /// `max_τ ‖X_₋Sᵀ X_S (X_Sᵀ X_S)⁻¹ τ‖∞` over sign vectors τ, evaluated as
    /// the largest row ℓ₁ norm. `active` holds penalized column indices;
    /// unpenalized columns never enter `X_₋S`.
    pub fn irrepresentable_eta0(&self, active: &[usize]) -> Result<f64> {
        let m = self.irrepresentable_matrix(active)?;
        Ok(m.row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max))
    }

    /// The same quantity by enumerating all `2^|S|` sign vectors. Exists to
    /// cross-check [`Dataset::irrepresentable_eta0`]; limited to `|S| ≤ 20`.
    pub fn irrepresentable_eta0_by_enumeration(&self, active: &[usize]) -> Result<f64> {
        if active.len() > 20 {
            return Err(Error::param("sign enumeration is limited to |S| ≤ 20"));
        }
        let m = self.irrepresentable_matrix(active)?;
        let s = active.len();
        let mut best = 0.0f64;
        for code in 0u32..(1u32 << s) {
            for row in m.row_iter() {
                let v: f64 = (0..s)
                    .map(|k| if code >> k & 1 == 1 { row[k] } else { -row[k] })
                    .sum();
                best = best.max(v.abs());
            }
        }
        Ok(best)
    }

    /// Smallest Rayleigh quotient `bᵀΣ̂b / ‖b‖²` found over sampled
    /// directions of the cone `‖b‖₁ ≤ (9/η)‖b_S‖₁`.
    ///
    /// Each sample is refined by a short feasible descent. The result is the
    /// value attained at a feasible point, so it can only overstate the true
    /// cone minimum; treat it as a diagnostic, not a certificate. With an
    /// empty `S` the unrestricted smallest eigenvalue is returned.
    pub fn restricted_eigenvalue_proxy<R: Rng + ?Sized>(
        &self,
        active: &[usize],
        eta: f64,
        n_random: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param(format!("eta must lie in (0, 1] (got {eta})")));
        }
        if n_random == 0 {
            return Err(Error::param("n_random must be at least 1"));
        }
        if let Some(&j) = active.iter().find(|&&j| j >= self.p()) {
            return Err(Error::param(format!("active column {j} out of range")));
        }
        let sigma = self.gram();
        let eig = sigma.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if active.is_empty() {
            return Ok(min_eig);
        }
        cone_rayleigh_min(&sigma, active, 9.0 / eta, n_random, rng, Some(&eig.eigenvectors))
    }
}

/// `XᵀX / n` with the upper triangle mirrored into the lower one.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut g = DMatrix::zeros(p, p);
    for j in 0..p {
        let cj = x.column(j);
        for k in j..p {
            let v = cj.dot(&x.column(k)) / n as f64;
            g[(j, k)] = v;
            g[(k, j)] = v;
        }
    }
    g
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = m.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn rayleigh(sigma: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let nb = b.norm_squared();
    if nb == 0.0 {
        return f64::INFINITY;
    }
    b.dot(&(sigma * b)) / nb
}

/// Shrinks the off-support part of `b` until `‖b_₋S‖₁ ≤ (c − 1)‖b_S‖₁`.
fn make_feasible(b: &mut DVector<f64>, in_s: &[bool], cone: f64) {
    let on: f64 = b.iter().zip(in_s).filter(|(_, &s)| s).map(|(v, _)| v.abs()).sum();
    let off: f64 = b.iter().zip(in_s).filter(|(_, &s)| !s).map(|(v, _)| v.abs()).sum();
    let budget = (cone - 1.0) * on;
    if off > budget {
        let f = if off > 0.0 { budget / off } else { 0.0 };
        for (v, &s) in b.iter_mut().zip(in_s) {
            if !s {
                *v *= f;
            }
        }
    }
}

pub(crate) fn cone_rayleigh_min<R: Rng + ?Sized>(
    sigma: &DMatrix<f64>,
    active: &[usize],
    cone: f64,
    n_random: usize,
    rng: &mut R,
    eigvecs: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let p = sigma.nrows();
    let mut in_s = vec![false; p];
    for &j in active {
        in_s[j] = true;
    }
    let off: Vec<usize> = (0..p).filter(|&j| !in_s[j]).collect();
    let lmax = sigma.clone().symmetric_eigen().eigenvalues.max().max(1e-300);
    let step = 0.5 / lmax;
    let refine = |mut b: DVector<f64>| -> f64 {
        make_feasible(&mut b, &in_s, cone);
        let mut best = rayleigh(sigma, &b);
        for _ in 0..30 {
            let nb = b.norm_squared();
            if nb == 0.0 {
                break;
            }
            let q = b.dot(&(sigma * &b)) / nb;
            let grad = (sigma * &b - &b * q) * (2.0 / nb.sqrt());
            let mut cand = &b / nb.sqrt() - grad * step;
            make_feasible(&mut cand, &in_s, cone);
            let qc = rayleigh(sigma, &cand);
            if !(qc < best) {
                break;
            }
            best = qc;
            b = cand;
        }
        best
    };

    let mut best = f64::INFINITY;
    if let Some(vecs) = eigvecs {
        for k in 0..vecs.ncols() {
            let v = vecs.column(k).into_owned();
            best = best.min(refine(v));
        }
    }
    for _ in 0..n_random {
        let mut b = DVector::zeros(p);
        for &j in active {
            b[j] = rng.sample::<f64, _>(StandardNormal);
        }
        if !off.is_empty() {
            let sparse = rng.gen::<bool>();
            let k = if sparse { rng.gen_range(1..=active.len().min(off.len()).max(1)) } else { off.len() };
            for _ in 0..k {
                let j = off[rng.gen_range(0..off.len())];
                b[j] = rng.sample::<f64, _>(StandardNormal);
            }
            let on: f64 = active.iter().map(|&j| b[j].abs()).sum();
            let offn: f64 = off.iter().map(|&j| b[j].abs()).sum();
            if offn > 0.0 {
                let target = rng.gen::<f64>() * (cone - 1.0) * on;
                for &j in &off {
                    b[j] *= target / offn;
                }
            }
        }
        best = best.min(refine(b));
    }
    Ok(best)
}

/// `n × p` matrix of i.i.d. standard normal entries, filled column by column.
pub fn generate_gaussian_design<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::param(format!("design dimensions must be positive (got {n}×{p})")));
    }
    Ok(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal)))
}

/// Centered design with mutually orthogonal columns of squared norm `n`
/// (so `Σ̂` restricted to them is the identity). Requires `n > p`.
pub fn generate_orthogonal_design<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n <= p {
        return Err(Error::param(format!("orthogonal design needs n > p (got {n}×{p})")));
    }
    let mut g = generate_gaussian_design(n, p, rng)?;
    for mut col in g.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let q = g.qr().q();
    Ok(q * (n as f64).sqrt())
}

/// Reads a dataset from CSV: header row, a mandatory `y` column, every other
/// column a numeric predictor in header order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let table = read_table(reader)?;
    let Some(y_col) = table.header.iter().position(|h| h == "y") else {
        return Err(Error::Schema("no column named `y` in header".into()));
    };
    let n = table.rows.len();
    if n < 2 {
        return Err(Error::Schema(format!("need at least 2 data rows (got {n})")));
    }
    let predictors: Vec<usize> = (0..table.header.len()).filter(|&j| j != y_col).collect();
    let y = DVector::from_iterator(n, table.rows.iter().map(|r| r[y_col]));
    let x = DMatrix::from_fn(n, predictors.len(), |i, j| table.rows[i][predictors[j]]);
    let names = predictors.iter().map(|&j| table.header[j].clone()).collect();
    Dataset::new(y, x, None)?.with_names(names)
}

/// Reads a design-only CSV (all columns numeric predictors; a `y` column,
/// if present, is ignored).
pub fn read_design_csv<R: Read>(reader: R) -> Result<(DMatrix<f64>, Vec<String>)> {
    let table = read_table(reader)?;
    let cols: Vec<usize> = (0..table.header.len()).filter(|&j| table.header[j] != "y").collect();
    if cols.is_empty() {
        return Err(Error::Schema("design file has no predictor columns".into()));
    }
    let n = table.rows.len();
    if n < 2 {
        return Err(Error::Schema(format!("need at least 2 data rows (got {n})")));
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, j| table.rows[i][cols[j]]);
    Ok((x, cols.iter().map(|&j| table.header[j].clone()).collect()))
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Schema("empty header".into()));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| Error::Schema(format!("row {row}: {e}")))?;
        if rec.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {row} has {} fields, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header[j].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    Ok(Table { header, rows })
}

/// Writes a matrix as CSV with a leading row-name column and a header row.
pub fn write_matrix_csv<W: std::io::Write>(
    out: W,
    m: &DMatrix<f64>,
    row_names: &[String],
    col_names: &[String],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(col_names.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (i, name) in row_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend((0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}
