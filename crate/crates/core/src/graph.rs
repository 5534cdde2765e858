//! The factor graph: an ordered list of factors over variables stored in a [`HierMap`].

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::factors::{Factor, FactorKind, VarId};
use crate::map::HierMap;
use crate::math;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactorGraph {
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_factors(factors: Vec<Factor>) -> Self {
        Self { factors }
    }

    pub fn add(&mut self, f: Factor) {
        self.factors.push(f);
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn count(&self, kind: FactorKind) -> usize {
        self.factors.iter().filter(|f| f.kind() == kind).count()
    }

    /// Copy without wall/room factors.
    pub fn without_semantic(&self) -> FactorGraph {
        FactorGraph {
            factors: self
                .factors
                .iter()
                .filter(|f| !f.kind().is_semantic())
                .cloned()
                .collect(),
        }
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.factors.iter().flat_map(|f| f.variables()).collect()
    }

    /// Factors touching `v`.
    pub fn factors_of(&self, v: VarId) -> impl Iterator<Item = &Factor> + '_ {
        self.factors
            .iter()
            .filter(move |f| f.variables().contains(&v))
    }
}

/// Robust kernel applied to the squared Mahalanobis norm `s = rᵀΛr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Identity,
    /// `ρ(s) = s` for `s ≤ δ²`, else `2δ√s − δ²`.
    Huber(f64),
}

impl Kernel {
    pub fn from_delta(delta: Option<f64>) -> Self {
        delta.map_or(Kernel::Identity, Kernel::Huber)
    }

    pub fn cost(self, s: f64) -> f64 {
        match self {
            Kernel::Identity => s,
            Kernel::Huber(d) => {
                if s <= d * d {
                    s
                } else {
                    2.0 * d * math::sqrt(s) - d * d
                }
            }
        }
    }

    /// `ρ'(s)`, the IRLS weight.
    pub fn weight(self, s: f64) -> f64 {
        match self {
            Kernel::Identity => 1.0,
            Kernel::Huber(d) => {
                if s <= d * d {
                    1.0
                } else {
                    d / math::sqrt(s)
                }
            }
        }
    }
}

/// Total cost `Σ ρ(rᵀΛr)` over every factor that can be evaluated at `map`.
/// Factors that cannot (point behind camera, degenerate corridor) are skipped.
pub fn marginal_cost(graph: &FactorGraph, map: &HierMap, kernel: Kernel) -> f64 {
    graph
        .factors()
        .iter()
        .filter_map(|f| f.residual(map).ok().map(|r| kernel.cost(f.squared_norm(&r))))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::FactorModel;
    use crate::geometry::{Pose, Vec3, WallAngles};
    use crate::map::{Marker, MarkerId, Wall, WallId};
    use nalgebra::DMatrix;

    fn one_factor_map(lift: f64) -> (FactorGraph, HierMap) {
        let mut map = HierMap::new();
        map.add_marker(Marker {
            id: MarkerId(0),
            size: 0.17,
            pose: Pose::from_translation(Vec3::new(0.0, 0.0, lift)),
        })
        .unwrap();
        map.add_wall(Wall {
            id: WallId(0),
            state: WallAngles::new(0.0, core::f64::consts::FRAC_PI_2, 0.0),
            markers: alloc::vec![MarkerId(0)],
        })
        .unwrap();
        let mut g = FactorGraph::new();
        g.add(
            Factor::new(
                FactorModel::MarkerWall {
                    wall: WallId(0),
                    marker: MarkerId(0),
                },
                DMatrix::identity(3, 3),
            )
            .unwrap(),
        );
        (g, map)
    }

    #[test]
    fn zero_residual_zero_cost() {
        let (g, map) = one_factor_map(0.0);
        assert!(marginal_cost(&g, &map, Kernel::Identity) < 1e-30);
    }

    #[test]
    fn unit_information_gives_squared_norm() {
        let (g, map) = one_factor_map(0.3);
        assert!((marginal_cost(&g, &map, Kernel::Identity) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn doubling_information_doubles_cost() {
        let (mut g, map) = one_factor_map(0.3);
        let c1 = marginal_cost(&g, &map, Kernel::Identity);
        g.factors[0].information *= 2.0;
        assert!((marginal_cost(&g, &map, Kernel::Identity) - 2.0 * c1).abs() < 1e-15);
    }

    #[test]
    fn huber_is_linear_in_the_tail() {
        let k = Kernel::Huber(1.0);
        assert_eq!(k.cost(0.25), 0.25);
        assert!((k.cost(9.0) - 5.0).abs() < 1e-15);
        assert!((k.weight(9.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn semantic_filter_drops_wall_factors() {
        let (g, _) = one_factor_map(0.0);
        assert_eq!(g.without_semantic().len(), 0);
    }
}
