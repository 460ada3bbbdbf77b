use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluates basis function `ψ_k(x)` for a 1-based mode index `k`.
pub type BasisFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// A positive operator truncated to its first `K` eigenpairs, plus the
/// mass shift `m` added to every eigenvalue in the time equation.
#[derive(Clone)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    mass_shift: f64,
    basis: Option<BasisFn>,
    name: String,
}

impl fmt::Debug for SpectralModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralModel")
            .field("name", &self.name)
            .field("eigenvalues", &self.eigenvalues)
            .field("mass_shift", &self.mass_shift)
            .field("basis", &self.basis.is_some())
            .finish()
    }
}

impl SpectralModel {
    /// A diagonal model without basis. Eigenvalues must be nonnegative and
    /// nondecreasing, the mass shift positive.
    pub fn new(eigenvalues: Vec<f64>, mass_shift: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidArgument("a spectral model needs at least one mode".into()));
        }
        if !(mass_shift > 0.0 && mass_shift.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass shift must be positive, got {mass_shift}")));
        }
        for (i, &l) in eigenvalues.iter().enumerate() {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("eigenvalue {} is {l}; must be nonnegative", i + 1)));
            }
            if i > 0 && l < eigenvalues[i - 1] {
                return Err(Error::InvalidArgument(format!("eigenvalues must be nondecreasing (mode {})", i + 1)));
            }
        }
        Ok(SpectralModel { eigenvalues, mass_shift, basis: None, name: "diagonal".into() })
    }

    pub fn with_basis(mut self, basis: BasisFn) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Dirichlet Laplacian on `(0, π)`: `λ_k = k²`, `ψ_k(x) = √(2/π) sin(kx)`.
    pub fn dirichlet_sine(modes: usize, mass_shift: f64) -> Result<Self> {
        let eig = (1..=modes).map(|k| (k * k) as f64).collect();
        let norm = (2.0 / std::f64::consts::PI).sqrt();
        Ok(SpectralModel::new(eig, mass_shift)?
            .with_basis(Arc::new(move |k, x| norm * (k as f64 * x).sin()))
            .with_name("dirichlet-sine"))
    }

    /// Reads eigenvalues from a CSV file with header `k,lambda`, rows
    /// `k = 1, 2, …` in order.
    pub fn from_eigenvalue_file(path: &Path, mass_shift: f64) -> Result<Self> {
        let rows = read_indexed_csv(path, "lambda")?;
        Ok(SpectralModel::new(rows, mass_shift)?.with_name(format!("file:{}", path.display())))
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mass_shift(&self) -> f64 {
        self.mass_shift
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn has_basis(&self) -> bool {
        self.basis.is_some()
    }

    /// `λ_k + m` for the zero-based mode index `i`.
    pub fn decay_rate(&self, i: usize) -> f64 {
        self.eigenvalues[i] + self.mass_shift
    }

    /// `ψ_k(x)` for 1-based `k`.
    pub fn basis_value(&self, k: usize, x: f64) -> Result<f64> {
        match &self.basis {
            Some(b) => Ok(b(k, x)),
            None => Err(Error::NoBasis),
        }
    }

    pub(crate) fn check_len(&self, field: &CoefficientField) -> Result<()> {
        if field.len() != self.modes() {
            return Err(Error::LengthMismatch { expected: self.modes(), got: field.len() });
        }
        Ok(())
    }
}

/// Mode-indexed coefficients, stored zero-based (entry `i` is mode `i+1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    coefficients: Vec<f64>,
}

impl CoefficientField {
    pub fn new(coefficients: Vec<f64>) -> Self {
        CoefficientField { coefficients }
    }

    pub fn zeros(modes: usize) -> Self {
        CoefficientField { coefficients: vec![0.0; modes] }
    }

    /// Reads a CSV file with header `k,value`, rows `k = 1, 2, …` in order.
    pub fn from_csv_file(path: &Path) -> Result<Self> {
        Ok(CoefficientField::new(read_indexed_csv(path, "value")?))
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn get(&self, i: usize) -> f64 {
        self.coefficients[i]
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &CoefficientField, b: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: other.len() });
        }
        Ok(CoefficientField::new(
            self.coefficients.iter().zip(&other.coefficients).map(|(x, y)| a * x + b * y).collect(),
        ))
    }
}

impl From<Vec<f64>> for CoefficientField {
    fn from(v: Vec<f64>) -> Self {
        CoefficientField::new(v)
    }
}

fn read_indexed_csv(path: &Path, column: &str) -> Result<Vec<f64>> {
    let in_file = |e: csv::Error| match Error::from(e) {
        Error::Io(m) => Error::Io(format!("{}: {m}", path.display())),
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(in_file)?;
    let headers = reader.headers().map_err(in_file)?.clone();
    if headers.len() != 2 || &headers[0] != "k" || &headers[1] != column {
        return Err(Error::Parse(format!(
            "{}: expected header \"k,{column}\", found \"{}\"",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(in_file)?;
        let k: usize = record[0]
            .parse()
            .map_err(|_| Error::Parse(format!("{}: bad mode index {:?}", path.display(), &record[0])))?;
        if k != row + 1 {
            return Err(Error::Parse(format!(
                "{}: rows must list k = 1, 2, … in order (found {k} at row {})",
                path.display(),
                row + 1
            )));
        }
        let v: f64 = record[1]
            .parse()
            .map_err(|_| Error::Parse(format!("{}: bad value {:?}", path.display(), &record[1])))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Parse(format!("{}: no rows", path.display())));
    }
    Ok(values)
}

/// `(Σ_k (1+λ_k)^d |c_k|²)^{1/2}`.
pub fn sobolev_norm(c: &CoefficientField, model: &SpectralModel, d: f64) -> Result<f64> {
    model.check_len(c)?;
    Ok(sobolev_norm_sq(c.values(), model.eigenvalues(), d).sqrt())
}

pub(crate) fn sobolev_norm_sq(c: &[f64], eigenvalues: &[f64], d: f64) -> f64 {
    let mut s = crate::sum::CompensatedSum::new();
    for (x, l) in c.iter().zip(eigenvalues) {
        s.add((1.0 + l).powf(d) * x * x);
    }
    s.value()
}
