//! Recovered basis directions and their bookkeeping, shared by the
//! bottom-up and top-down searches and by the identification stage.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::linalg;

/// Where a basis vector came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    BottomUpRound(usize),
    TopDownLeaf(usize),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::BottomUpRound(r) => write!(f, "bottom-up round {r}"),
            Provenance::TopDownLeaf(n) => write!(f, "top-down leaf {n}"),
        }
    }
}

/// A recovered basis direction in the working coordinate frame.
#[derive(Clone, Debug)]
pub struct BasisVector {
    /// Unit vector; the first entry of largest magnitude is positive.
    pub coords: DVector<f64>,
    pub provenance: Provenance,
    /// The same direction mapped back to node space, once known.
    pub node_space: Option<DVector<f64>>,
}

/// Ordered collection of recovered basis directions.
#[derive(Clone, Debug, Default)]
pub struct BasisSet {
    pub vectors: Vec<BasisVector>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Basis vectors as matrix columns, in recovery order.
    pub fn matrix(&self) -> DMatrix<f64> {
        let k = self.vectors[0].coords.len();
        DMatrix::from_fn(k, self.vectors.len(), |i, j| self.vectors[j].coords[i])
    }

    /// Checks unit norms and joint linear independence: the Gram matrix
    /// must stay nonsingular at `tol`.
    pub fn validate(&self, tol: f64) -> Result<(), String> {
        for (j, v) in self.vectors.iter().enumerate() {
            if (v.coords.norm() - 1.0).abs() > 1e-9 {
                return Err(format!("basis vector {j} is not unit norm"));
            }
        }
        if self.vectors.len() > 1 {
            let b = self.matrix();
            let gram = b.transpose() * &b;
            let eig = linalg::sorted_symmetric_eigen(&gram);
            if eig.values[0] <= tol {
                return Err(format!(
                    "basis vectors are linearly dependent (smallest Gram eigenvalue {:.3e})",
                    eig.values[0]
                ));
            }
        }
        Ok(())
    }
}
