//! Complex matrix algebra over quadrature space.
//!
//! Everything downstream works with 2-row transfer blocks mapping input field
//! quadrature pairs to an output quadrature pair, Hermitian spectral-density
//! matrices for those inputs, and homodyne projections of the result. A
//! [`NoiseBudget`] is the bookkeeping unit: a list of labeled (transfer,
//! input PSD) contributions plus the signal transfer vector.
//!
//! Homodyne convention: the measured quadrature is `b_φ = b₁ cos φ + b₂ sin φ`,
//! so φ = π/2 reads the phase quadrature. Under this convention the
//! phase-readout sensitivity kernel is `(cot φ − K)² + 1` and the optimal
//! DC angle is `arccot K_sm(0)`, both of which are verified by tests.

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::tol;

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;

/// Dense complex matrix of dimensionless transfer coefficients.
pub type ComplexMat = DMatrix<C64>;

/// Convenience: complex zero/one.
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// Convenience: real-valued complex scalar.
pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

/// Check that every entry of a matrix is finite (no NaN/Inf), as required of
/// all solver outputs.
pub fn check_finite(m: &ComplexMat, context: &'static str) -> Result<()> {
    for v in m.iter() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::PsdViolation {
                context,
                detail: format!("non-finite entry {v}"),
            });
        }
    }
    Ok(())
}

/// Hermitian positive-semidefinite spectral-density matrix, vacuum-normalized
/// (a lone vacuum quadrature has unit PSD). Validated on construction:
/// Hermitian to [`tol::HERMITICITY_ABS`], eigenvalues ≥ [`tol::PSD_MIN_EIG`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityMat {
    mat: ComplexMat,
}

impl SpectralDensityMat {
    /// Validate and wrap a Hermitian PSD matrix.
    pub fn new(mat: ComplexMat) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                context: "SpectralDensityMat::new (square matrix required)",
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        check_finite(&mat, "SpectralDensityMat::new")?;
        let herm_defect = hermiticity_defect(&mat);
        if herm_defect > tol::HERMITICITY_ABS {
            return Err(Error::PsdViolation {
                context: "SpectralDensityMat::new",
                detail: format!("Hermiticity defect {herm_defect:.3e} exceeds {:.1e}", tol::HERMITICITY_ABS),
            });
        }
        // Symmetrize to scrub rounding drift before the eigenvalue check.
        let sym = hermitize(&mat);
        let min_eig = min_hermitian_eigenvalue(&sym);
        if min_eig < tol::PSD_MIN_EIG {
            return Err(Error::PsdViolation {
                context: "SpectralDensityMat::new",
                detail: format!("eigenvalue {min_eig:.3e} below {:.1e}", tol::PSD_MIN_EIG),
            });
        }
        Ok(Self { mat: sym })
    }

    /// Unit-vacuum PSD of the given dimension.
    pub fn identity(dim: usize) -> Self {
        Self {
            mat: ComplexMat::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &ComplexMat {
        &self.mat
    }

    /// Smallest eigenvalue (real, by Hermiticity).
    pub fn min_eigenvalue(&self) -> f64 {
        min_hermitian_eigenvalue(&self.mat)
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }
}

/// Max absolute deviation from Hermiticity, max_ij |S_ij − conj(S_ji)|.
pub fn hermiticity_defect(m: &ComplexMat) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// (S + S†)/2 — used after every propagation to suppress rounding drift.
pub fn hermitize(m: &ComplexMat) -> ComplexMat {
    (m + m.adjoint()) * cr(0.5)
}

/// Eigenvalues of a Hermitian complex matrix via the real symmetric embedding
/// [[X, −Y], [Y, X]] of S = X + iY, whose spectrum is that of S doubled.
pub fn hermitian_eigenvalues(m: &ComplexMat) -> Vec<f64> {
    let n = m.nrows();
    let mut emb = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            emb[(i, j)] = v.re;
            emb[(i + n, j + n)] = v.re;
            emb[(i, j + n)] = -v.im;
            emb[(i + n, j)] = v.im;
        }
    }
    let mut eigs: Vec<f64> = emb.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    // Each eigenvalue of S appears twice in the embedding; take every other.
    eigs.into_iter().step_by(2).collect()
}

/// Smallest eigenvalue of a Hermitian complex matrix.
pub fn min_hermitian_eigenvalue(m: &ComplexMat) -> f64 {
    hermitian_eigenvalues(m)
        .first()
        .copied()
        .unwrap_or(0.0)
}

/// Homodyne readout direction: measured quadrature `b₁ cos φ + b₂ sin φ`.
/// Components are real and unit-norm by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneVector {
    pub phi: f64,
    pub components: [f64; 2],
}

impl HomodyneVector {
    pub fn new(phi: f64) -> Self {
        Self {
            phi,
            components: [phi.cos(), phi.sin()],
        }
    }

    /// Project a 2-row block onto the measured quadrature: h† T (1×k row).
    pub fn project(&self, block: &ComplexMat) -> Result<DVector<C64>> {
        if block.nrows() != 2 {
            return Err(Error::DimensionMismatch {
                context: "HomodyneVector::project (2-row block required)",
                expected: 2,
                got: block.nrows(),
            });
        }
        let mut row = DVector::<C64>::zeros(block.ncols());
        for j in 0..block.ncols() {
            row[j] = cr(self.components[0]) * block[(0, j)] + cr(self.components[1]) * block[(1, j)];
        }
        Ok(row)
    }

    /// Project a 2-vector: h† t.
    pub fn project_vec(&self, v: &Vector2<C64>) -> C64 {
        cr(self.components[0]) * v[0] + cr(self.components[1]) * v[1]
    }
}

/// One labeled noise path: a 2-row transfer block from a set of input
/// quadratures to the output pair, with the inputs' spectral density.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub label: String,
    pub transfer: ComplexMat,
    pub input_psd: SpectralDensityMat,
}

/// A decomposed quantum noise account at one sideband frequency: independent
/// labeled contributions plus the signal transfer vector.
///
/// The signal vector is the response of the output quadrature pair to a unit
/// external displacement, in 1/m (equivalently the dimensionless signal block
/// divided by x_SQL).
#[derive(Debug, Clone)]
pub struct NoiseBudget {
    pub contributions: Vec<Contribution>,
    pub signal: Vector2<C64>,
}

impl NoiseBudget {
    pub fn new(signal: Vector2<C64>) -> Self {
        Self {
            contributions: Vec::new(),
            signal,
        }
    }

    /// Append a contribution, enforcing dimension agreement and label
    /// uniqueness.
    pub fn push(
        &mut self,
        label: impl Into<String>,
        transfer: ComplexMat,
        input_psd: SpectralDensityMat,
    ) -> Result<()> {
        let label = label.into();
        if transfer.nrows() != 2 {
            return Err(Error::DimensionMismatch {
                context: "NoiseBudget::push (2-row transfer required)",
                expected: 2,
                got: transfer.nrows(),
            });
        }
        if transfer.ncols() != input_psd.dim() {
            return Err(Error::DimensionMismatch {
                context: "NoiseBudget::push (transfer columns vs input PSD)",
                expected: input_psd.dim(),
                got: transfer.ncols(),
            });
        }
        if self.contributions.iter().any(|cn| cn.label == label) {
            return Err(Error::InvalidParameter(format!(
                "duplicate noise-budget label `{label}`"
            )));
        }
        check_finite(&transfer, "NoiseBudget::push")?;
        self.contributions.push(Contribution {
            label,
            transfer,
            input_psd,
        });
        Ok(())
    }
}

/// Propagate an input spectral density through a 2-row transfer block:
/// returns T·S·T†, hermitized. The result is again Hermitian PSD.
pub fn propagate_psd(transfer: &ComplexMat, input: &SpectralDensityMat) -> Result<SpectralDensityMat> {
    if transfer.nrows() != 2 {
        return Err(Error::DimensionMismatch {
            context: "propagate_psd (2-row transfer required)",
            expected: 2,
            got: transfer.nrows(),
        });
    }
    if transfer.ncols() != input.dim() {
        return Err(Error::DimensionMismatch {
            context: "propagate_psd (transfer columns vs input PSD)",
            expected: input.dim(),
            got: transfer.ncols(),
        });
    }
    let out = transfer * input.matrix() * transfer.adjoint();
    SpectralDensityMat::new(hermitize(&out))
}

/// Total measured-quadrature noise power Σ_contributions h†(T S T†)h.
///
/// Fails with a PSD-violation error if any single contribution projects to a
/// value below [`tol::PSD_MIN_EIG`] (which cannot happen for valid budgets).
pub fn homodyne_noise_power(budget: &NoiseBudget, h: &HomodyneVector) -> Result<f64> {
    let mut total = 0.0;
    for cn in &budget.contributions {
        let row = h.project(&cn.transfer)?;
        // row · S · row†, real by Hermiticity.
        let mut acc = c(0.0, 0.0);
        let s = cn.input_psd.matrix();
        for i in 0..row.len() {
            for j in 0..row.len() {
                acc += row[i] * s[(i, j)] * row[j].conj();
            }
        }
        let p = acc.re;
        if p < tol::PSD_MIN_EIG {
            return Err(Error::PsdViolation {
                context: "homodyne_noise_power",
                detail: format!("contribution `{}` projected to {p:.3e}", cn.label),
            });
        }
        total += p.max(0.0);
    }
    Ok(total)
}

/// Measured-quadrature signal power |h† t|².
pub fn homodyne_signal_power(budget: &NoiseBudget, h: &HomodyneVector) -> f64 {
    h.project_vec(&budget.signal).norm_sqr()
}
