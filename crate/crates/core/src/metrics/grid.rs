use ndarray::Array2;

use crate::error::{Error, Result};
use crate::problems::DomainBox;

/// Uniform tensor grid over a box, endpoints included. Points are
/// row-major: the first axis varies slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    pub domain: DomainBox,
    pub resolution: Vec<usize>,
    points: Array2<f64>,
}

impl EvalGrid {
    pub fn new(domain: DomainBox, resolution: Vec<usize>) -> Result<Self> {
        domain.validate()?;
        if resolution.len() != domain.dim() || resolution.iter().any(|&r| r < 2) {
            return Err(Error::InvalidParameter(format!(
                "grid resolution {resolution:?} for a {}-d box (need >= 2 per axis)",
                domain.dim()
            )));
        }
        let d = domain.dim();
        let n: usize = resolution.iter().product();
        let mut points = Array2::zeros((n, d));
        let mut idx = vec![0usize; d];
        for p in 0..n {
            for a in 0..d {
                points[[p, a]] = Self::coordinate(&domain, &resolution, a, idx[a]);
            }
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < resolution[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Ok(Self {
            domain,
            resolution,
            points,
        })
    }

    fn coordinate(domain: &DomainBox, resolution: &[usize], axis: usize, i: usize) -> f64 {
        let last = resolution[axis] - 1;
        if i == last {
            domain.hi[axis]
        } else {
            domain.lo[axis] + domain.width(axis) * i as f64 / last as f64
        }
    }

    /// Coordinates along one axis.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis])
            .map(|i| Self::coordinate(&self.domain, &self.resolution, axis, i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Quadrature weight of every node for grid L² norms: the box volume
    /// shared equally by the nodes.
    pub fn cell_weight(&self) -> f64 {
        self.domain.volume() / self.len() as f64
    }
}
