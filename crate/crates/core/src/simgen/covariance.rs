use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Smallest eigenvalue a realized correlation matrix may have.
pub const MIN_EIGENVALUE: f64 = 1e-6;

/// Diagonal block of a correlation matrix. Every block has unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Block {
    /// Off-diagonal entries drawn i.i.d. from `U(low, high)`.
    Uniform { size: usize, low: f64, high: f64 },
    /// Every off-diagonal entry equals `value`.
    Constant { size: usize, value: f64 },
    Identity { size: usize },
}

impl Block {
    pub fn size(&self) -> usize {
        match *self {
            Block::Uniform { size, .. } | Block::Constant { size, .. } | Block::Identity { size } => size,
        }
    }
}

/// Constant off-diagonal rectangle linking two blocks (0-based indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub first: usize,
    pub second: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub blocks: Vec<Block>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
}

impl CovarianceSpec {
    /// 60 predictors: strongly correlated `U(0.6, 1)` block, moderately
    /// correlated `U(0.3, 0.5)` block, a weak constant 0.05 block, and a 0.2
    /// coupling between the last two.
    pub fn moderate() -> Self {
        Self {
            blocks: vec![
                Block::Uniform { size: 20, low: 0.6, high: 1.0 },
                Block::Uniform { size: 20, low: 0.3, high: 0.5 },
                Block::Constant { size: 20, value: 0.05 },
            ],
            couplings: vec![Coupling { first: 1, second: 2, value: 0.2 }],
        }
    }

    /// 500 predictors: the moderate layout at block size 100 with 0.1
    /// constant/coupling entries, plus 200 independent predictors.
    pub fn high_dimensional() -> Self {
        Self {
            blocks: vec![
                Block::Uniform { size: 100, low: 0.6, high: 1.0 },
                Block::Uniform { size: 100, low: 0.3, high: 0.5 },
                Block::Constant { size: 100, value: 0.1 },
                Block::Identity { size: 200 },
            ],
            couplings: vec![Coupling { first: 1, second: 2, value: 0.1 }],
        }
    }

    pub fn identity(p: usize) -> Self {
        Self { blocks: vec![Block::Identity { size: p }], couplings: vec![] }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Block::size).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.blocks.is_empty() {
            return bad("covariance spec has no blocks".into());
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.size() == 0 {
                return bad(format!("block {i} is empty"));
            }
            match *b {
                Block::Uniform { low, high, .. } if !(0.0 <= low && low <= high && high <= 1.0) => {
                    return bad(format!("block {i}: need 0 <= low <= high <= 1"));
                }
                Block::Constant { value, .. } if !(value.abs() < 1.0) => {
                    return bad(format!("block {i}: need |value| < 1"));
                }
                _ => {}
            }
        }
        for (i, c) in self.couplings.iter().enumerate() {
            if c.first >= self.blocks.len() || c.second >= self.blocks.len() || c.first == c.second {
                return bad(format!("coupling {i} must join two distinct existing blocks"));
            }
            if !(c.value.abs() < 1.0) {
                return bad(format!("coupling {i}: need |value| < 1"));
            }
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                let start = *acc;
                *acc += b.size();
                Some(start)
            })
            .collect()
    }
}

/// Assembles the block correlation matrix and repairs it when it is not
/// positive definite.
pub fn build_covariance(spec: &CovarianceSpec, seed: u64) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let p = spec.dim();
    let offsets = spec.offsets();
    let mut rng = seeds::rng(seed);
    let mut m = DMatrix::identity(p, p);
    for (block, &start) in spec.blocks.iter().zip(&offsets) {
        let k = block.size();
        for i in 0..k {
            for j in (i + 1)..k {
                let v = match *block {
                    Block::Uniform { low, high, .. } => {
                        if low == high {
                            low
                        } else {
                            rng.random_range(low..high)
                        }
                    }
                    Block::Constant { value, .. } => value,
                    Block::Identity { .. } => 0.0,
                };
                m[(start + i, start + j)] = v;
                m[(start + j, start + i)] = v;
            }
        }
    }
    for c in &spec.couplings {
        let (r0, rk) = (offsets[c.first], spec.blocks[c.first].size());
        let (c0, ck) = (offsets[c.second], spec.blocks[c.second].size());
        for i in r0..r0 + rk {
            for j in c0..c0 + ck {
                m[(i, j)] = c.value;
                m[(j, i)] = c.value;
            }
        }
    }
    Ok(nearest_positive_definite(&m, MIN_EIGENVALUE))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Eigenvalue clipping followed by rescaling to unit diagonal, repeated
/// until the smallest eigenvalue is at least `floor`. Matrices that already
/// satisfy the floor are returned unchanged.
pub fn nearest_positive_definite(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let mut cur = m.clone();
    for _ in 0..100 {
        let eig = SymmetricEigen::new(cur.clone());
        if eig.eigenvalues.min() >= floor {
            break;
        }
        // clip above the floor so the diagonal rescale cannot push it back under
        let clipped = eig.eigenvalues.map(|v| v.max(2.0 * floor));
        let v = &eig.eigenvectors;
        let mut rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
        rebuilt = (&rebuilt + rebuilt.transpose()) * 0.5;
        let d: Vec<f64> = rebuilt.diagonal().iter().map(|x| x.sqrt()).collect();
        let p = rebuilt.nrows();
        for i in 0..p {
            for j in 0..p {
                rebuilt[(i, j)] /= d[i] * d[j];
            }
            rebuilt[(i, i)] = 1.0;
        }
        cur = rebuilt;
    }
    cur
}
