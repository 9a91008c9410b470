//! The Gaussian coupling field.
//!
//! Each weight is one standard-normal draw (ziggurat, `rand_distr`) from a
//! stream keyed by the seed and the edge's coordinates and orientation. The
//! weight on an edge is therefore unaffected by the order of generation, by the
//! other edges, and by whether the edge belongs to a torus or a box of another
//! size that contains the same coordinates.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, Edge, EdgeKey, Geometry, Orientation, TorusGeometry};
use crate::rng::{stream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Torus { side: usize },
    Box { side: usize },
}

impl Shape {
    pub fn side(&self) -> usize {
        match *self {
            Shape::Torus { side } | Shape::Box { side } => side,
        }
    }

    pub fn num_edges(&self) -> usize {
        match *self {
            Shape::Torus { side } => 2 * side * side,
            Shape::Box { side } => 2 * side * side.saturating_sub(1),
        }
    }
}

pub trait HasShape {
    fn shape(&self) -> Shape;
}

impl HasShape for TorusGeometry {
    fn shape(&self) -> Shape {
        Shape::Torus { side: self.side() }
    }
}

impl HasShape for BoxGeometry {
    fn shape(&self) -> Shape {
        Shape::Box { side: self.side() }
    }
}

/// One real weight per edge id of a geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Couplings {
    shape: Shape,
    seed: u64,
    weights: Vec<f64>,
}

pub fn coupling_for(seed: u64, key: EdgeKey) -> f64 {
    let o = match key.orientation {
        Orientation::Horizontal => 0,
        Orientation::Vertical => 1,
    };
    stream(seed, &[tag::COUPLING, key.x as u64, key.y as u64, o]).sample(StandardNormal)
}

pub fn sample_couplings<G: Geometry + HasShape>(geom: &G, seed: u64) -> Couplings {
    let weights = geom
        .edges()
        .map(|e| coupling_for(seed, geom.edge_key(e).expect("edge id from geometry")))
        .collect();
    Couplings {
        shape: geom.shape(),
        seed,
        weights,
    }
}

impl Couplings {
    /// Couplings with explicit weights, e.g. read back from a snapshot or built
    /// for a hand-made instance. `seed` is kept as a provenance record only.
    pub fn from_weights(shape: Shape, seed: u64, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != shape.num_edges() {
            return Err(Error::Validation(format!(
                "{} weights for a geometry with {} edges",
                weights.len(),
                shape.num_edges()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Validation(format!("weight on edge {i} is not finite")));
        }
        Ok(Self {
            shape,
            seed,
            weights,
        })
    }

    pub fn constant<G: Geometry + HasShape>(geom: &G, value: f64) -> Self {
        Self {
            shape: geom.shape(),
            seed: 0,
            weights: vec![value; geom.num_edges()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weight(&self, e: Edge) -> f64 {
        self.weights[e.0]
    }

    pub fn get(&self, e: Edge) -> Result<f64> {
        self.weights
            .get(e.0)
            .copied()
            .ok_or_else(|| Error::range("edge", e.0, self.weights.len()))
    }

    pub fn set(&mut self, e: Edge, value: f64) -> Result<()> {
        let len = self.weights.len();
        let slot = self
            .weights
            .get_mut(e.0)
            .ok_or_else(|| Error::range("edge", e.0, len))?;
        *slot = value;
        Ok(())
    }

    pub fn torus(&self) -> Result<TorusGeometry> {
        match self.shape {
            Shape::Torus { side } => TorusGeometry::new(side),
            Shape::Box { .. } => Err(Error::Contract("couplings live on a box, not a torus".into())),
        }
    }

    /// Fails unless these couplings were built for `geom`.
    pub fn check_shape<G: HasShape>(&self, geom: &G) -> Result<()> {
        if self.shape != geom.shape() {
            return Err(Error::Contract(format!(
                "couplings for {:?} used with geometry {:?}",
                self.shape,
                geom.shape()
            )));
        }
        Ok(())
    }

    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| -w).collect(),
            ..self.clone()
        }
    }
}

/// `w(S)`, or `|w|(S)` when `absolute` is set.
pub fn graph_weight<I>(w: &Couplings, edges: I, absolute: bool) -> Result<f64>
where
    I: IntoIterator<Item = Edge>,
{
    edges.into_iter().try_fold(0.0, |acc, e| {
        let x = w.get(e)?;
        Ok(acc + if absolute { x.abs() } else { x })
    })
}
