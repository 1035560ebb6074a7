//! Image-text similarity: per-family cosine matrices and their fused sum.

use rayon::prelude::*;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `rows` candidate pairs by `cols` HOI categories, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::alignment(
                "similarity data length",
                format!("{rows} x {cols}"),
                data.len(),
            ));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::validation("NaN in similarity matrix"));
        }
        Ok(SimilarityMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::alignment(
                format!("similarity row {bad} width"),
                cols,
                rows[bad].len(),
            ));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }
}

fn row_norms<T: Scalar>(m: &EmbeddingMatrix<T>) -> Result<Vec<f64>> {
    (0..m.rows())
        .map(|i| {
            let norm = m
                .row(i)
                .iter()
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                Ok(norm)
            } else {
                Err(Error::ZeroNorm {
                    kind: m.kind().to_string(),
                    row: i,
                })
            }
        })
        .collect()
}

/// Cosine similarity of every image row against every text row. Dot products
/// and norms accumulate in `f64`; results are stored as `T`.
pub fn cosine_similarity<T: Scalar>(
    images: &EmbeddingMatrix<T>,
    texts: &EmbeddingMatrix<T>,
) -> Result<SimilarityMatrix<T>> {
    if images.cols() != texts.cols() {
        return Err(Error::alignment(
            format!("feature dimension of {} vs {}", images.kind(), texts.kind()),
            images.cols(),
            texts.cols(),
        ));
    }
    let image_norms = row_norms(images)?;
    let text_norms = row_norms(texts)?;

    let data: Vec<T> = (0..images.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = images.row(i);
            let na = image_norms[i];
            text_norms.iter().enumerate().map(move |(j, &nb)| {
                let dot: f64 = a
                    .iter()
                    .zip(texts.row(j))
                    .map(|(x, y)| x.as_f64() * y.as_f64())
                    .sum();
                T::lit(dot / (na * nb))
            })
        })
        .collect();
    SimilarityMatrix::new(images.rows(), texts.rows(), data)
}

/// Element-wise sum of the two template-family similarities.
pub fn fuse<T: Scalar>(
    sim1: &SimilarityMatrix<T>,
    sim2: &SimilarityMatrix<T>,
) -> Result<SimilarityMatrix<T>> {
    if (sim1.rows, sim1.cols) != (sim2.rows, sim2.cols) {
        return Err(Error::alignment(
            "similarity shapes",
            format!("{} x {}", sim1.rows, sim1.cols),
            format!("{} x {}", sim2.rows, sim2.cols),
        ));
    }
    let data = sim1
        .data
        .iter()
        .zip(&sim2.data)
        .map(|(&a, &b)| a + b)
        .collect();
    SimilarityMatrix::new(sim1.rows, sim1.cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingKind;

    fn m(kind: EmbeddingKind, rows: &[Vec<f64>]) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(kind, rows).unwrap()
    }

    #[test]
    fn hand_checked_cosines() {
        let img = m(
            EmbeddingKind::CandidateImage,
            &[vec![1.0, 0.0], vec![3.0, 4.0]],
        );
        let txt = m(
            EmbeddingKind::TextT1,
            &[vec![0.0, 1.0], vec![1.0, 0.0], vec![4.0, 3.0]],
        );
        let s = cosine_similarity(&img, &txt).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 1.0);
        // 24 / (5 * 5)
        assert!((s.get(1, 2) - 0.96).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_and_zero_rows_are_errors() {
        let img = m(EmbeddingKind::CandidateImage, &[vec![1.0, 0.0]]);
        let txt = m(EmbeddingKind::TextT1, &[vec![1.0, 0.0, 0.0]]);
        assert_eq!(cosine_similarity(&img, &txt).unwrap_err().exit_code(), 4);

        let img = m(
            EmbeddingKind::CandidateImage,
            &[vec![1.0, 0.0], vec![0.0, 0.0]],
        );
        let txt = m(EmbeddingKind::TextT2, &[vec![1.0, 1.0]]);
        match cosine_similarity(&img, &txt).unwrap_err() {
            Error::ZeroNorm { kind, row } => {
                assert_eq!(kind, "candidate_image");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn fuse_adds_elementwise() {
        let a = SimilarityMatrix::from_rows(&[vec![0.2f64]]).unwrap();
        let b = SimilarityMatrix::from_rows(&[vec![0.3f64]]).unwrap();
        assert!((fuse(&a, &b).unwrap().get(0, 0) - 0.5).abs() < 1e-15);

        let zeros = SimilarityMatrix::new(1, 1, vec![0.0f64]).unwrap();
        assert_eq!(fuse(&a, &zeros).unwrap(), a);

        let wide = SimilarityMatrix::new(1, 2, vec![0.0f64; 2]).unwrap();
        assert!(fuse(&a, &wide).is_err());
    }

    #[test]
    fn empty_candidate_matrix_gives_empty_similarity() {
        let img = EmbeddingMatrix::<f32>::new(EmbeddingKind::CandidateImage, 0, 3, vec![]).unwrap();
        let txt =
            EmbeddingMatrix::new(EmbeddingKind::TextT1, 1, 3, vec![1.0f32, 0.0, 0.0]).unwrap();
        let s = cosine_similarity(&img, &txt).unwrap();
        assert_eq!((s.rows(), s.cols()), (0, 1));
    }
}
