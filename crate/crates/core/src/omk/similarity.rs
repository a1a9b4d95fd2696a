use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tse::{SubgraphEmbedding, SubtreeEmbedding};

/// Solid similarity between two subtree embeddings: a sum of per-level RBFs,
/// `Σ_i exp(-‖a_i - b_i‖² / (d τ))`. Lies in `(0, t + 1]` and equals `t + 1`
/// exactly when the stacks coincide.
pub fn solid_similarity(a: SubtreeEmbedding<'_>, b: SubtreeEmbedding<'_>, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if a.dim() != b.dim() || a.t() != b.t() {
        return Err(Error::shape(format!(
            "subtree shapes differ: t={} d={} vs t={} d={}",
            a.t(),
            a.dim(),
            b.t(),
            b.dim()
        )));
    }
    Ok(similarity_unchecked(a.as_slice(), b.as_slice(), a.dim(), tau))
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("RBF width must be positive, got {tau}")));
    }
    Ok(())
}

#[inline]
pub(crate) fn similarity_unchecked(a: &[f64], b: &[f64], dim: usize, tau: f64) -> f64 {
    let scale = 1.0 / (dim as f64 * tau);
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| {
            let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            (-sq * scale).exp()
        })
        .sum()
}

/// All pairwise solid similarities, rows indexed by `x`, columns by `y`.
pub fn similarity_matrix(x: &SubgraphEmbedding, y: &SubgraphEmbedding, tau: f64) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    check_compatible(x, y)?;
    let d = x.dim();
    Ok(DMatrix::from_fn(x.len(), y.len(), |i, j| {
        similarity_unchecked(x.node(i).as_slice(), y.node(j).as_slice(), d, tau)
    }))
}

pub(crate) fn check_compatible(x: &SubgraphEmbedding, y: &SubgraphEmbedding) -> Result<()> {
    if x.t() != y.t() || x.dim() != y.dim() {
        return Err(Error::shape(format!(
            "embedding shapes differ: t={} d={} vs t={} d={}",
            x.t(),
            x.dim(),
            y.t(),
            y.dim()
        )));
    }
    Ok(())
}

/// Self-similarity of every element, which is always `t + 1`.
pub fn self_similarities(x: &SubgraphEmbedding) -> Vec<f64> {
    vec![(x.t() + 1) as f64; x.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_closed_form() {
        let a = [0.0];
        let b = [1.0];
        let s = solid_similarity(
            SubtreeEmbedding::new(&a, 1).unwrap(),
            SubtreeEmbedding::new(&b, 1).unwrap(),
            1.0,
        )
        .unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn self_similarity_is_level_count() {
        let a = [0.3, 0.1, 2.0, -1.0, 7.5, 0.0];
        let v = SubtreeEmbedding::new(&a, 2).unwrap();
        assert_eq!(solid_similarity(v, v, 0.4).unwrap(), 3.0);
    }

    #[test]
    fn rejects_bad_tau_and_shapes() {
        let a = [0.0, 1.0];
        let b = [0.0, 1.0, 2.0, 3.0];
        let va = SubtreeEmbedding::new(&a, 2).unwrap();
        let vb = SubtreeEmbedding::new(&b, 2).unwrap();
        assert!(matches!(solid_similarity(va, va, 0.0), Err(Error::Config(_))));
        assert!(matches!(solid_similarity(va, vb, 1.0), Err(Error::Shape(_))));
    }
}
