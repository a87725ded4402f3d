//! Rectangular lattices in one to three dimensions and their nearest-neighbour
//! tables.
//!
//! Sites are indexed row-major: the last axis varies fastest. For extents
//! `[a, b, c]` the site at coordinate `(x, y, z)` has index `(x * b + y) * c + z`.
//! CSV outputs that mention site indices use this convention.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    Open,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::Open => f.write_str("open"),
        }
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "periodic" => Ok(Boundary::Periodic),
            "open" => Ok(Boundary::Open),
            other => Err(Error::InvalidLattice(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Geometry of a rectangular lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeSpec {
    extents: Vec<usize>,
    boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(extents: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if extents.is_empty() || extents.len() > 3 {
            return Err(Error::InvalidLattice(format!(
                "dimension must be 1, 2 or 3, got {}",
                extents.len()
            )));
        }
        if let Some(axis) = extents.iter().position(|&e| e == 0) {
            return Err(Error::InvalidLattice(format!("extent along axis {axis} is zero")));
        }
        if boundary == Boundary::Periodic {
            if let Some((axis, &e)) = extents.iter().enumerate().find(|(_, &e)| e < 3) {
                return Err(Error::InvalidLattice(format!(
                    "periodic extent {e} along axis {axis} is below 3"
                )));
            }
        }
        Ok(Self { extents, boundary })
    }

    pub fn periodic(extents: &[usize]) -> Result<Self> {
        Self::new(extents.to_vec(), Boundary::Periodic)
    }

    /// 1D chain of 100 sites, periodic.
    pub fn chain_100() -> Self {
        Self::periodic(&[100]).expect("valid preset")
    }

    /// 2D 10x10 square lattice, periodic.
    pub fn square_10x10() -> Self {
        Self::periodic(&[10, 10]).expect("valid preset")
    }

    /// 3D 4x4x4 cubic lattice, periodic.
    pub fn cube_4x4x4() -> Self {
        Self::periodic(&[4, 4, 4]).expect("valid preset")
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Number of sites.
    pub fn num_sites(&self) -> usize {
        self.extents.iter().product()
    }

    /// Coordination number of the bulk (and, for periodic lattices, every) site.
    pub fn coordination(&self) -> usize {
        2 * self.dims()
    }

    pub fn index_of(&self, coord: &[usize]) -> usize {
        debug_assert_eq!(coord.len(), self.dims());
        coord
            .iter()
            .zip(&self.extents)
            .fold(0, |acc, (&c, &e)| {
                debug_assert!(c < e);
                acc * e + c
            })
    }

    pub fn coord_of(&self, mut index: usize) -> Vec<usize> {
        let mut coord = vec![0; self.dims()];
        for (c, &e) in coord.iter_mut().zip(&self.extents).rev() {
            *c = index % e;
            index /= e;
        }
        coord
    }

    /// Short human label, e.g. `2D 10x10 periodic`.
    pub fn label(&self) -> String {
        let ext: Vec<String> = self.extents.iter().map(|e| e.to_string()).collect();
        format!("{}D {} {}", self.dims(), ext.join("x"), self.boundary)
    }
}

/// Per-site nearest-neighbour lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    neighbors: Vec<Vec<usize>>,
    coordination: usize,
}

impl NeighborTable {
    pub fn build(spec: &LatticeSpec) -> Self {
        let n = spec.num_sites();
        let mut neighbors = Vec::with_capacity(n);
        for site in 0..n {
            let coord = spec.coord_of(site);
            let mut list = Vec::with_capacity(spec.coordination());
            for (axis, &extent) in spec.extents().iter().enumerate() {
                for forward in [false, true] {
                    let c = coord[axis];
                    let next = match (spec.boundary(), forward) {
                        (Boundary::Periodic, true) => Some((c + 1) % extent),
                        (Boundary::Periodic, false) => Some((c + extent - 1) % extent),
                        (Boundary::Open, true) => (c + 1 < extent).then_some(c + 1),
                        (Boundary::Open, false) => c.checked_sub(1),
                    };
                    if let Some(next) = next {
                        let mut other = coord.clone();
                        other[axis] = next;
                        let j = spec.index_of(&other);
                        if j != site && !list.contains(&j) {
                            list.push(j);
                        }
                    }
                }
            }
            neighbors.push(list);
        }
        Self {
            neighbors,
            coordination: spec.coordination(),
        }
    }

    pub fn num_sites(&self) -> usize {
        self.neighbors.len()
    }

    /// Nominal coordination number `N_nn` of the lattice.
    pub fn coordination(&self) -> usize {
        self.coordination
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.neighbors[site].len()
    }

    /// Number of undirected bonds.
    pub fn bond_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.neighbors.iter().map(Vec::as_slice)
    }
}
