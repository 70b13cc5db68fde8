//! Covariance-matrix speaker models compared with the arithmetic-harmonic
//! sphericity measure
//!
//! `μ(A, B) = ln[tr(A B⁻¹) · tr(B A⁻¹)] − 2 ln m`.
//!
//! `μ` is zero iff `A = αB` and positive otherwise (AM ≥ HM over the
//! eigenvalues of `A B⁻¹`), invariant to scaling either argument and to a
//! common congruence `T A Tᵀ`, `T B Tᵀ`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::corpus::{validate_label, LanguageTag};
use crate::decision::{argmin_speaker, format_floats, header_field, parse_floats, parse_header, Identification};
use crate::dsp::FeatureSequence;
use crate::error::{Error, Result};

/// Factorization is rejected when a pivot falls below this fraction of the
/// mean diagonal.
const PIVOT_TOLERANCE: f64 = 1e-10;
/// Ridge added on retry, as a fraction of the mean diagonal.
const RIDGE_FRACTION: f64 = 1e-8;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpdInverse {
    pub inverse: DMatrix<f64>,
    /// Ridge added to the diagonal before inversion; zero when none was needed.
    pub ridge: f64,
}

impl SpdInverse {
    pub fn regularized(&self) -> bool {
        self.ridge > 0.0
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::SingularModel("empty matrix".into()));
    }
    Ok(())
}

fn min_pivot(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix by Cholesky
/// factorization, retrying once with a small ridge when the factorization
/// fails or is numerically singular.
pub fn invert_spd(c: &DMatrix<f64>) -> Result<SpdInverse> {
    check_square(c)?;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularModel("non-finite matrix entry".into()));
    }
    let m = c.nrows() as f64;
    let scale = c.amax().max(f64::MIN_POSITIVE);
    if (c - c.transpose()).amax() > SYMMETRY_TOLERANCE * scale.max(1.0) {
        return Err(Error::SingularModel("matrix is not symmetric".into()));
    }
    let mean_diag = c.trace() / m;
    let threshold = PIVOT_TOLERANCE * mean_diag;

    if let Some(chol) = c.clone().cholesky() {
        if mean_diag > 0.0 && min_pivot(chol.l_dirty()) >= threshold {
            return Ok(SpdInverse {
                inverse: symmetrize(&chol.inverse()),
                ridge: 0.0,
            });
        }
    }

    // A zero matrix has no scale to borrow; fall back to an absolute ridge.
    let ridge = if mean_diag > 0.0 {
        RIDGE_FRACTION * mean_diag
    } else {
        RIDGE_FRACTION
    };
    let shifted = c + DMatrix::identity(c.nrows(), c.nrows()) * ridge;
    match shifted.cholesky() {
        Some(chol) if min_pivot(chol.l_dirty()) > 0.0 => Ok(SpdInverse {
            inverse: symmetrize(&chol.inverse()),
            ridge,
        }),
        _ => Err(Error::SingularModel(
            "matrix is not positive definite even after regularization".into(),
        )),
    }
}

/// `tr(Y X⁻¹)` for symmetric `Y` and `X⁻¹` from the lower triangle only:
/// `2 Σ_{i>j} y_ij x̃_ij + Σ_k y_kk x̃_kk`.
fn symmetric_trace(y: &DMatrix<f64>, x_inv: &DMatrix<f64>) -> f64 {
    let m = y.nrows();
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..m {
        for j in 0..i {
            off += y[(i, j)] * x_inv[(i, j)];
        }
        diag += y[(i, i)] * x_inv[(i, i)];
    }
    2.0 * off + diag
}

/// `(tr(Y X⁻¹), tr(X Y⁻¹))` without forming either product.
pub fn trace_product(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    x_inv: &DMatrix<f64>,
    y_inv: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let m = y.nrows();
    for mat in [y, x, x_inv, y_inv] {
        check_square(mat)?;
        if mat.nrows() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: mat.nrows(),
            });
        }
    }
    Ok((symmetric_trace(y, x_inv), symmetric_trace(x, y_inv)))
}

fn sphericity_from_parts(
    a: &DMatrix<f64>,
    a_inv: &DMatrix<f64>,
    b: &DMatrix<f64>,
    b_inv: &DMatrix<f64>,
) -> Result<f64> {
    let (t1, t2) = trace_product(a, b, b_inv, a_inv)?;
    let m = a.nrows() as f64;
    Ok((t1 * t2).ln() - 2.0 * m.ln())
}

/// Arithmetic-harmonic sphericity between two SPD matrices (natural log).
pub fn sphericity(c_test: &DMatrix<f64>, c_model: &DMatrix<f64>) -> Result<f64> {
    if c_test.shape() != c_model.shape() {
        return Err(Error::DimensionMismatch {
            expected: c_model.nrows(),
            got: c_test.nrows(),
        });
    }
    let test_inv = invert_spd(c_test)?;
    let model_inv = invert_spd(c_model)?;
    sphericity_from_parts(c_test, &test_inv.inverse, c_model, &model_inv.inverse)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub covariance: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub frame_count: usize,
    pub speaker_id: String,
    pub language: LanguageTag,
    /// Set when a ridge had to be added to make the covariance invertible;
    /// `covariance` then includes the ridge.
    pub regularized: bool,
}

impl CovarianceModel {
    pub fn order(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        count_cm_parameters(self.order())
    }

    fn from_parts(
        covariance: DMatrix<f64>,
        mean: Vec<f64>,
        frame_count: usize,
        speaker_id: String,
        language: LanguageTag,
    ) -> Result<Self> {
        let inv = invert_spd(&covariance)?;
        let covariance = if inv.regularized() {
            let m = covariance.nrows();
            covariance + DMatrix::identity(m, m) * inv.ridge
        } else {
            covariance
        };
        Ok(CovarianceModel {
            covariance,
            inverse: inv.inverse,
            mean,
            frame_count,
            speaker_id,
            language,
            regularized: inv.ridge > 0.0,
        })
    }

    pub fn to_text(&self) -> String {
        let p = self.order();
        let mut out = format!(
            "cmmodel v1 P={} frames={} speaker={} lang={}\n{}\n",
            p,
            self.frame_count,
            self.speaker_id,
            self.language,
            format_floats(&self.mean)
        );
        for i in 0..p {
            let row: Vec<f64> = (0..=i).map(|j| self.covariance[(i, j)]).collect();
            let _ = writeln!(out, "{}", format_floats(&row));
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let fields = parse_header(lines.next().unwrap_or(""), "cmmodel", origin)?;
        let p: usize = header_field(&fields, "P", origin)?;
        let frame_count: usize = header_field(&fields, "frames", origin)?;
        let speaker_id: String = header_field(&fields, "speaker", origin)?;
        let language: LanguageTag = header_field(&fields, "lang", origin)?;
        if p == 0 {
            return Err(Error::parse(origin, 1, "P must be positive"));
        }
        let mean = parse_floats(lines.next().unwrap_or(""), origin, 2)?;
        if mean.len() != p {
            return Err(Error::parse(
                origin,
                2,
                format!("expected {p} mean values, found {}", mean.len()),
            ));
        }
        let mut c = DMatrix::zeros(p, p);
        for i in 0..p {
            let lineno = i + 3;
            let row = parse_floats(lines.next().unwrap_or(""), origin, lineno)?;
            if row.len() != i + 1 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {} values, found {}", i + 1, row.len()),
                ));
            }
            for (j, v) in row.into_iter().enumerate() {
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        CovarianceModel::from_parts(c, mean, frame_count, speaker_id, language)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CovarianceModel::from_text(&text, path)
    }
}

/// Mean-subtracted sample covariance (divisor N), symmetrized, with its
/// inverse cached.
pub fn estimate_covariance(features: &FeatureSequence) -> Result<CovarianceModel> {
    let n = features.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    validate_label("speaker_id", &features.speaker_id)?;
    let p = features.order;
    if let Some(v) = features.vectors.iter().find(|v| v.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: v.len(),
        });
    }
    let mut mean = vec![0.0; p];
    for v in &features.vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut c = DMatrix::<f64>::zeros(p, p);
    let mut centered = vec![0.0; p];
    for v in &features.vectors {
        centered
            .iter_mut()
            .zip(v.iter().zip(&mean))
            .for_each(|(d, (x, m))| *d = x - m);
        for i in 0..p {
            for j in 0..=i {
                c[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..=i {
            let v = c[(i, j)] / n as f64;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    CovarianceModel::from_parts(c, mean, n, features.speaker_id.clone(), features.language.into())
}

/// Sphericity between two estimated models, reusing their cached inverses.
pub fn model_sphericity(test: &CovarianceModel, model: &CovarianceModel) -> Result<f64> {
    if test.order() != model.order() {
        return Err(Error::DimensionMismatch {
            expected: model.order(),
            got: test.order(),
        });
    }
    sphericity_from_parts(&test.covariance, &test.inverse, &model.covariance, &model.inverse)
}

/// Speaker whose model minimizes `μ` against the test covariance.
pub fn identify_cm(models: &[CovarianceModel], test: &CovarianceModel) -> Result<Identification> {
    let scores = models
        .iter()
        .map(|m| model_sphericity(test, m))
        .collect::<Result<Vec<_>>>()?;
    argmin_speaker(models.iter().map(|m| m.speaker_id.as_str()), scores)
}

/// `(P² + P) / 2` free entries of a symmetric `P×P` matrix.
pub fn count_cm_parameters(order: usize) -> usize {
    (order * order + order) / 2
}
