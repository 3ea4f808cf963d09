use std::fmt;

use thiserror::Error;

/// Norms at or below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector has a non-finite component at index {0}")]
    NonFinite(usize),
    #[error("vector is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{classes} class vectors but {names} class names")]
    ClassOrderMismatch { classes: usize, names: usize },
}

/// A unit-norm embedding, widened to `f64` for arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps values that are already known to be unit norm and finite.
    ///
    /// Used on the load path where the norm has been checked by the caller.
    pub(crate) fn from_unit_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &EmbeddingVector) -> Result<f64, EmbeddingError> {
        if self.dim() != other.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm.
///
/// Scaling by a power of two commutes exactly with this function, since both the
/// sum of squares and its square root scale exactly.
pub fn normalize(v: &[f64]) -> Result<EmbeddingVector, EmbeddingError> {
    if v.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite(i));
    }
    let norm = l2_norm(v);
    if !norm.is_finite() {
        // Overflowed sum of squares; rescale by the largest magnitude first.
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scaled: Vec<f64> = v.iter().map(|x| x / scale).collect();
        return normalize(&scaled);
    }
    if norm <= ZERO_NORM_EPS {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok(EmbeddingVector(v.iter().map(|x| x / norm).collect()))
}

/// Cosine similarities of one image embedding against an ordered list of classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitRow {
    pub values: Vec<f64>,
    pub class_order: Vec<String>,
}

impl LogitRow {
    pub fn get(&self, class: &str) -> Option<f64> {
        self.class_order
            .iter()
            .position(|c| c == class)
            .map(|i| self.values[i])
    }
}

impl fmt::Display for LogitRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, v)) in self.class_order.iter().zip(&self.values).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}={v:.4}")?;
        }
        Ok(())
    }
}

pub fn logits(
    img: &EmbeddingVector,
    classes: &[EmbeddingVector],
    class_order: &[String],
) -> Result<LogitRow, EmbeddingError> {
    if classes.len() != class_order.len() {
        return Err(EmbeddingError::ClassOrderMismatch {
            classes: classes.len(),
            names: class_order.len(),
        });
    }
    let values = classes
        .iter()
        .map(|c| img.dot(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LogitRow {
        values,
        class_order: class_order.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> EmbeddingVector {
        normalize(v).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn normalize_three_four_five() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn normalize_unit_is_identity() {
        assert_eq!(
            normalize(&[1.0, 0.0, 0.0]).unwrap().as_slice(),
            &[1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert_eq!(normalize(&[0.0, 0.0]), Err(EmbeddingError::ZeroNorm));
        assert_eq!(normalize(&[1e-13, 0.0]), Err(EmbeddingError::ZeroNorm));
        assert_eq!(
            normalize(&[1.0, f64::NAN]),
            Err(EmbeddingError::NonFinite(1))
        );
        assert_eq!(
            normalize(&[f64::INFINITY]),
            Err(EmbeddingError::NonFinite(0))
        );
        assert_eq!(normalize(&[]), Err(EmbeddingError::Empty));
    }

    #[test]
    fn normalize_survives_overflowing_norm() {
        let v = normalize(&[1e200, 1e200]).unwrap();
        assert!((l2_norm(v.as_slice()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logits_orthonormal_basis() {
        let row = logits(
            &unit(&[1.0, 0.0]),
            &[unit(&[1.0, 0.0]), unit(&[0.0, 1.0])],
            &names(2),
        )
        .unwrap();
        assert_eq!(row.values, vec![1.0, 0.0]);
        assert_eq!(row.get("c1"), Some(0.0));
    }

    #[test]
    fn logits_self_similarity() {
        let v = unit(&[0.6, 0.8]);
        let row = logits(&v, std::slice::from_ref(&v), &names(1)).unwrap();
        assert!((row.values[0] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn logits_dimension_mismatch() {
        let err = logits(&unit(&[1.0, 0.0]), &[unit(&[1.0, 0.0, 0.0])], &names(1)).unwrap_err();
        assert_eq!(
            err,
            EmbeddingError::DimensionMismatch {
                expected: 2,
                actual: 3
            }
        );
    }

    #[test]
    fn logits_match_naive_dot_oracle() {
        // fixed pseudo-random 8-dim vectors
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let img = unit(&(0..8).map(|_| next()).collect::<Vec<_>>());
        let classes: Vec<_> = (0..5)
            .map(|_| unit(&(0..8).map(|_| next()).collect::<Vec<_>>()))
            .collect();
        let row = logits(&img, &classes, &names(5)).unwrap();
        for (j, c) in classes.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..8 {
                acc += img.as_slice()[k] * c.as_slice()[k];
            }
            assert!((row.values[j] - acc).abs() <= 1e-12);
            assert!(row.values[j].abs() <= 1.0 + 1e-6);
        }
    }
}
