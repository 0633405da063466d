//! Single-site conditional marginals `μ([x_1] | [x_D])` of the
//! infinite-volume Gibbs measure, for pins inside a fixed ball `B_r`.

use serde::{Deserialize, Serialize};

use super::saw::{hardcore_marginal_via_saw_budget, SimpleGraph};
use crate::cayley::{CayleyBall, GroupElement, GroupSpec};
use crate::chain::StationaryChain;
use crate::error::{Error, Result};
use crate::field::LocalField;
use crate::limits::Caps;
use crate::shift::{detect_safe_symbol, ConstraintStructure, Potential, Symbol};

/// Tree nodes visited per SAW query before giving up.
pub const SAW_NODE_BUDGET: u64 = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Backend {
    /// Exact on ℤ¹ through the stationary chain: only the nearest pin on
    /// each side matters.
    TransferMatrix1D,
    /// Exact inference on `B_{r+pad+1}` with its outer sphere fixed to the
    /// safe symbol (left free without one).
    BallEnumeration { pad: usize },
    /// Weitz trees on the same padded ball; hardcore models only.
    SawTree { pad: usize },
}

impl Backend {
    pub fn tag(&self) -> &'static str {
        match self {
            Backend::TransferMatrix1D => "transfer",
            Backend::BallEnumeration { .. } => "ball",
            Backend::SawTree { .. } => "saw",
        }
    }

    /// Parses the CLI names `transfer`, `ball` and `saw`.
    pub fn parse(name: &str, pad: usize) -> Result<Self> {
        match name {
            "transfer" => Ok(Backend::TransferMatrix1D),
            "ball" => Ok(Backend::BallEnumeration { pad }),
            "saw" => Ok(Backend::SawTree { pad }),
            _ => Err(Error::InvalidArgument(format!("unknown oracle {name:?}"))),
        }
    }
}

#[derive(Debug)]
enum Engine {
    Transfer { chain: StationaryChain, offsets: Vec<i64> },
    Ball { field: LocalField, boundary: Vec<Option<Symbol>> },
    Saw { graph: SimpleGraph, activity: Vec<f64>, boundary: Vec<Option<bool>> },
}

#[derive(Debug)]
pub struct MarginalOracle {
    backend: Backend,
    structure: ConstraintStructure,
    potential: Potential,
    ball: CayleyBall,
    engine: Engine,
}

fn is_hardcore(structure: &ConstraintStructure, potential: &Potential) -> bool {
    structure.alphabet() == 2
        && (0..structure.rank()).all(|g| {
            !structure.allowed(g, 1, 1)
                && structure.allowed(g, 0, 0)
                && structure.allowed(g, 0, 1)
                && structure.allowed(g, 1, 0)
                && (0..2).all(|a| (0..2).all(|b| potential.edge_weight(g, a, b) == 0.0))
        })
}

impl MarginalOracle {
    /// An oracle answering queries with pins in `B_r`. A SAW backend on a
    /// model that is not hardcore is routed to ball enumeration.
    pub fn new(
        structure: &ConstraintStructure,
        potential: &Potential,
        spec: &GroupSpec,
        backend: Backend,
        r: usize,
    ) -> Result<Self> {
        structure.check_group(spec)?;
        potential.check_structure(structure)?;
        let caps = Caps::from_env()?;
        let ball = spec.ball_with_cap(r, caps.ball)?;
        let safe = detect_safe_symbol(structure);
        let backend = match backend {
            Backend::SawTree { pad } if !is_hardcore(structure, potential) => Backend::BallEnumeration { pad },
            b => b,
        };
        let engine = match backend {
            Backend::TransferMatrix1D => {
                if *spec != GroupSpec::zd(1) {
                    return Err(Error::GroupMismatch("the transfer oracle needs ℤ¹".into()));
                }
                let mut chain = StationaryChain::new(structure, potential)?;
                chain.ensure_powers(2 * r);
                let offsets = ball
                    .elements
                    .iter()
                    .map(|g| match g {
                        GroupElement::Vector(v) => v[0],
                        GroupElement::Word(_) => unreachable!("ℤ¹ elements are vectors"),
                    })
                    .collect();
                Engine::Transfer { chain, offsets }
            }
            Backend::BallEnumeration { pad } => {
                let outer = spec.ball_with_cap(r + pad + 1, caps.ball)?;
                let field = LocalField::from_ball(&outer, structure, potential).with_table_cap(caps.table);
                let mut boundary = vec![None; outer.len()];
                for i in outer.sphere(r + pad + 1) {
                    boundary[i] = safe;
                }
                Engine::Ball { field, boundary }
            }
            Backend::SawTree { pad } => {
                let outer = spec.ball_with_cap(r + pad + 1, caps.ball)?;
                let edges: Vec<(usize, usize)> = outer.edges.iter().map(|e| (e.from, e.to)).collect();
                let graph = SimpleGraph::new(outer.len(), &edges)?;
                let lambda = (potential.vertex[1] - potential.vertex[0]).exp();
                let mut boundary = vec![None; outer.len()];
                for i in outer.sphere(r + pad + 1) {
                    boundary[i] = Some(false);
                }
                Engine::Saw { graph, activity: vec![lambda; outer.len()], boundary }
            }
        };
        Ok(MarginalOracle { backend, structure: structure.clone(), potential: potential.clone(), ball, engine })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn tag(&self) -> &'static str {
        self.backend.tag()
    }

    /// The conditioning ball `B_r`; queries are indexed in its order.
    pub fn ball(&self) -> &CayleyBall {
        &self.ball
    }

    pub fn radius(&self) -> usize {
        self.ball.radius
    }

    pub fn structure(&self) -> &ConstraintStructure {
        &self.structure
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.ball.spec
    }

    /// Law of `x(1)` given `pins` on `B_r` (the entry at the identity is
    /// ignored).
    pub fn conditional(&self, pins: &[Option<Symbol>]) -> Result<Vec<f64>> {
        if pins.len() != self.ball.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} pins, got {}",
                self.ball.len(),
                pins.len()
            )));
        }
        if let Some(&a) = pins.iter().flatten().find(|&&a| a as usize >= self.structure.alphabet()) {
            return Err(Error::InvalidArgument(format!("symbol {a} outside the alphabet")));
        }
        match &self.engine {
            Engine::Transfer { chain, offsets } => {
                let mut left: Option<(usize, Symbol)> = None;
                let mut right: Option<(usize, Symbol)> = None;
                for (i, p) in pins.iter().enumerate().skip(1) {
                    let Some(a) = *p else { continue };
                    let o = offsets[i];
                    let d = o.unsigned_abs() as usize;
                    let slot = if o < 0 { &mut left } else { &mut right };
                    if slot.is_none_or(|(e, _)| d < e) {
                        *slot = Some((d, a));
                    }
                }
                chain.conditional(left, right)
            }
            Engine::Ball { field, boundary } => {
                let mut all = boundary.clone();
                all[1..pins.len()].copy_from_slice(&pins[1..]);
                field
                    .marginal(0, &all)?
                    .ok_or_else(|| Error::InconsistentPins("pins admit no admissible completion".into()))
            }
            Engine::Saw { graph, activity, boundary } => {
                let mut all = boundary.clone();
                for (i, p) in pins.iter().enumerate().skip(1) {
                    all[i] = p.map(|a| a == 1);
                }
                let p1 = hardcore_marginal_via_saw_budget(graph, 0, activity, &all, SAW_NODE_BUDGET)?;
                Ok(vec![1.0 - p1, p1])
            }
        }
    }
}
