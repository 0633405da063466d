//! Invariant random pasts restricted to balls, random orders on `V_n`
//! and the diagonal coupling between them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cayley::{CayleyBall, GroupElement, GroupSpec};
use crate::error::{Error, Result};
use crate::sofic::{good_vertex_flags, SoficMap};
use crate::stream_rng;

/// `𝒫^{1_Γ} ∩ B_r`, indexed by the canonical ball order.
#[derive(Clone, Debug, PartialEq)]
pub struct PastSample {
    pub r: usize,
    pub membership: Vec<bool>,
    /// The labels `χ_g` when the past came from uniforms.
    pub uniforms: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PastJson {
    r: usize,
    members: Vec<usize>,
}

impl Serialize for PastSample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PastJson { r: self.r, members: self.members() }.serialize(s)
    }
}

impl PastSample {
    /// Indices of the ball elements in the past.
    pub fn members(&self) -> Vec<usize> {
        self.membership.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn len(&self) -> usize {
        self.membership.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_json(spec: &GroupSpec, s: &str) -> Result<Self> {
        let j: PastJson = serde_json::from_str(s)?;
        let size = spec
            .ball_size(j.r)
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| Error::Schema("past radius too large".into()))?;
        let mut membership = vec![false; size];
        for i in j.members {
            if i == 0 || i >= size {
                return Err(Error::Schema(format!("member index {i} invalid for radius {}", j.r)));
            }
            membership[i] = true;
        }
        Ok(PastSample { r: j.r, membership, uniforms: None })
    }

    /// The past induced by labels `χ` on the ball: `g` precedes the
    /// identity iff `(χ_g, g) < (χ_1, 1)`. The identity has the smallest
    /// index, so ties never enter the past.
    pub fn from_uniforms(r: usize, chi: Vec<f64>) -> Self {
        let c0 = chi[0];
        let membership = chi.iter().enumerate().map(|(i, &c)| i != 0 && c < c0).collect();
        PastSample { r, membership, uniforms: Some(chi) }
    }
}

/// i.i.d. uniform labels on `B_r`; the past is `{g : χ_g < χ_1}`.
pub fn sample_percolation_past(spec: &GroupSpec, r: usize, seed: u64) -> Result<PastSample> {
    let size = spec
        .ball_size(r)
        .and_then(|b| usize::try_from(b).ok())
        .ok_or(Error::CapExceeded { what: "ball", requested: usize::MAX, cap: crate::cayley::DEFAULT_BALL_CAP })?;
    let mut rng = stream_rng(seed, 0);
    Ok(percolation_past_with(r, size, &mut rng))
}

pub(crate) fn percolation_past_with<R: Rng>(r: usize, size: usize, rng: &mut R) -> PastSample {
    let chi: Vec<f64> = (0..size).map(|_| rng.gen::<f64>()).collect();
    PastSample::from_uniforms(r, chi)
}

/// `g ≺ 1` in the lexicographic order of ℤ^d.
pub fn lex_past(spec: &GroupSpec, g: &GroupElement) -> Result<bool> {
    match (spec, g) {
        (GroupSpec::FreeAbelian { d }, GroupElement::Vector(v)) if v.len() == *d => {
            Ok(v.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0))
        }
        (GroupSpec::FreeAbelian { .. }, _) => Err(Error::InvalidArgument("element does not belong to ℤ^d".into())),
        _ => Err(Error::GroupMismatch("the lexicographic past is defined on ℤ^d".into())),
    }
}

/// The lexicographic past restricted to `B_r`.
pub fn lex_past_sample(spec: &GroupSpec, r: usize) -> Result<PastSample> {
    let ball = spec.ball(r)?;
    let membership = ball.elements.iter().map(|g| lex_past(spec, g)).collect::<Result<_>>()?;
    Ok(PastSample { r, membership, uniforms: None })
}

/// A total order on `V_n` given as ranks, with the labels that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VertexOrder {
    pub rank: Vec<u32>,
    #[serde(skip)]
    pub uniforms: Vec<f64>,
}

impl VertexOrder {
    pub fn from_uniforms(chi: Vec<f64>) -> Self {
        let mut idx: Vec<usize> = (0..chi.len()).collect();
        idx.sort_by(|&a, &b| chi[a].total_cmp(&chi[b]).then(a.cmp(&b)));
        let mut rank = vec![0u32; chi.len()];
        for (r, &v) in idx.iter().enumerate() {
            rank[v] = r as u32;
        }
        VertexOrder { rank, uniforms: chi }
    }
}

pub fn sample_vertex_order(sigma: &SoficMap, seed: u64) -> VertexOrder {
    let mut rng = stream_rng(seed, 0);
    VertexOrder::from_uniforms((0..sigma.n()).map(|_| rng.gen::<f64>()).collect())
}

/// `{g ∈ B_r : rank(σ^g v) < rank(v)}` as ball-indexed flags.
pub fn pulled_back_past(sigma: &SoficMap, order: &VertexOrder, v: usize, r: usize) -> Result<Vec<bool>> {
    if v >= sigma.n() {
        return Err(Error::InvalidArgument(format!("vertex {v} out of range")));
    }
    let ball = sigma.spec().ball(r)?;
    Ok(pulled_back_on(sigma, order, v, &ball))
}

pub(crate) fn pulled_back_on(sigma: &SoficMap, order: &VertexOrder, v: usize, ball: &CayleyBall) -> Vec<bool> {
    let rv = order.rank[v];
    ball.elements.iter().map(|g| order.rank[sigma.sigma_word(g, v)] < rv).collect()
}

/// The group-side past built from the vertex labels read through the
/// window at `v`: `χ_g := χ_{σ^g(v)}`.
pub fn diagonal_past(sigma: &SoficMap, order: &VertexOrder, v: usize, r: usize) -> Result<PastSample> {
    let ball = sigma.spec().ball(r)?;
    let chi: Vec<f64> = ball.elements.iter().map(|g| order.uniforms[sigma.sigma_word(g, v)]).collect();
    Ok(PastSample::from_uniforms(r, chi))
}

/// Fraction of vertices that are `B_r`-good (which includes an injective
/// window), where the diagonal coupling is exact.
pub fn coupling_check(sigma: &SoficMap, r: usize) -> Result<f64> {
    let ball = sigma.spec().ball(r)?;
    let flags = good_vertex_flags(sigma, &ball);
    Ok(flags.iter().filter(|&&g| g).count() as f64 / sigma.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sofic::{build_random_perm, build_torus};

    #[test]
    fn percolation_basics() {
        let spec = GroupSpec::zd(1);
        let p = sample_percolation_past(&spec, 0, 1).unwrap();
        assert!(p.is_empty());
        let p = sample_percolation_past(&spec, 3, 1).unwrap();
        assert!(!p.membership[0]);
        let chi = p.uniforms.as_ref().unwrap();
        for (i, &m) in p.membership.iter().enumerate() {
            assert_eq!(m, i != 0 && chi[i] < chi[0]);
        }
        assert_eq!(p, sample_percolation_past(&spec, 3, 1).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let spec = GroupSpec::free(2);
        let p = sample_percolation_past(&spec, 2, 9).unwrap();
        let j = serde_json::to_string(&p).unwrap();
        assert!(j.starts_with("{\"r\":2,\"members\":["));
        let q = PastSample::from_json(&spec, &j).unwrap();
        assert_eq!(q.membership, p.membership);
        assert!(PastSample::from_json(&spec, r#"{"r":1,"members":[0]}"#).is_err());
    }

    #[test]
    fn lexicographic_past() {
        let spec = GroupSpec::zd(2);
        assert!(lex_past(&spec, &GroupElement::Vector(vec![-1, 5])).unwrap());
        assert!(lex_past(&spec, &GroupElement::Vector(vec![0, -1])).unwrap());
        assert!(!lex_past(&spec, &GroupElement::Vector(vec![0, 0])).unwrap());
        assert!(lex_past(&GroupSpec::free(2), &GroupElement::Word(vec![])).is_err());
        let s = lex_past_sample(&GroupSpec::zd(1), 3).unwrap();
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn vertex_orders() {
        let sigma = build_torus(1, 2).unwrap();
        let o = sample_vertex_order(&sigma, 4);
        let mut r = o.rank.clone();
        r.sort();
        assert_eq!(r, vec![0, 1]);
        assert_eq!(o, sample_vertex_order(&sigma, 4));
    }

    #[test]
    fn diagonal_coupling_is_exact_at_good_vertices() {
        let sigma = build_torus(2, 9).unwrap();
        let o = sample_vertex_order(&sigma, 11);
        for v in 0..sigma.n() {
            let a = pulled_back_past(&sigma, &o, v, 3).unwrap();
            let b = diagonal_past(&sigma, &o, v, 3).unwrap();
            assert_eq!(a, b.membership);
        }
        let bottom = o.rank.iter().position(|&r| r == 0).unwrap();
        assert!(pulled_back_past(&sigma, &o, bottom, 2).unwrap().iter().all(|&m| !m));
    }

    #[test]
    fn coupling_fractions() {
        assert_eq!(coupling_check(&build_torus(1, 6).unwrap(), 2).unwrap(), 1.0);
        assert_eq!(coupling_check(&build_torus(1, 4).unwrap(), 2).unwrap(), 0.0);
        let f = coupling_check(&build_random_perm(2, 10_000, 1).unwrap(), 2).unwrap();
        assert!(f >= 0.9, "{f}");
    }
}
