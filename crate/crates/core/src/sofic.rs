//! Finite models of a group: per-generator permutations of `{0..n-1}`.
//!
//! A word acts letter by letter, right to left: for `g = s_ℓ ⋯ s₁` we
//! return `σ^{s_ℓ}(⋯σ^{s₁}(v))`. On `F`-good vertices this coincides with
//! the action of the group element.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cayley::{CayleyBall, GroupElement, GroupSpec, Letter};
use crate::error::{Error, Result};

/// Default cap on the number of vertices a builder may produce.
pub const DEFAULT_VERTEX_CAP: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub builder: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct SoficMap {
    spec: GroupSpec,
    n: usize,
    perms: Vec<Vec<u32>>,
    inverse_perms: Vec<Vec<u32>>,
    pub provenance: Provenance,
}

impl SoficMap {
    /// Builds a map from explicit permutations of the positive generators.
    pub fn from_perms(spec: GroupSpec, perms: Vec<Vec<u32>>, provenance: Provenance) -> Result<Self> {
        spec.validate()?;
        if perms.len() != spec.rank() {
            return Err(Error::InvalidArgument(format!(
                "expected {} permutations, got {}",
                spec.rank(),
                perms.len()
            )));
        }
        let n = perms.first().map_or(0, |p| p.len());
        if n == 0 {
            return Err(Error::InvalidArgument("empty vertex set".into()));
        }
        let mut inverse_perms = Vec::with_capacity(perms.len());
        for p in &perms {
            if p.len() != n {
                return Err(Error::InvalidArgument("permutations of different sizes".into()));
            }
            let mut inv = vec![u32::MAX; n];
            for (v, &w) in p.iter().enumerate() {
                let w = w as usize;
                if w >= n || inv[w] != u32::MAX {
                    return Err(Error::InvalidArgument("array is not a permutation".into()));
                }
                inv[w] = v as u32;
            }
            inverse_perms.push(inv);
        }
        Ok(SoficMap { spec, n, perms, inverse_perms, provenance })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Permutation of positive generator `gen`.
    pub fn perm(&self, gen: usize) -> &[u32] {
        &self.perms[gen]
    }

    #[inline]
    pub fn apply_letter(&self, l: Letter, v: usize) -> usize {
        if l.inverse {
            self.inverse_perms[l.gen as usize][v] as usize
        } else {
            self.perms[l.gen as usize][v] as usize
        }
    }

    /// `σ^g(v)`, letters applied right to left.
    pub fn sigma_word(&self, g: &GroupElement, v: usize) -> usize {
        self.apply_letters(&g.letters(), v)
    }

    pub fn apply_letters(&self, letters: &[Letter], v: usize) -> usize {
        letters.iter().rev().fold(v, |u, &l| self.apply_letter(l, u))
    }

    /// `(σ^g)^{-1}(u)`.
    pub fn sigma_word_inverse(&self, g: &GroupElement, u: usize) -> usize {
        g.letters().iter().fold(u, |w, &l| self.apply_letter(l.inverse(), w))
    }

    /// Images `σ^g(v)` for every `g` of the ball, in ball order.
    pub fn window(&self, ball: &CayleyBall, v: usize) -> Vec<usize> {
        ball.elements.iter().map(|g| self.sigma_word(g, v)).collect()
    }

    /// `n × |ball|` table of window images, row-major by vertex.
    pub fn window_table(&self, ball: &CayleyBall) -> Vec<u32> {
        let words: Vec<Vec<Letter>> = ball.elements.iter().map(|g| g.letters()).collect();
        let mut out = Vec::with_capacity(self.n * words.len());
        for v in 0..self.n {
            for w in &words {
                out.push(self.apply_letters(w, v) as u32);
            }
        }
        out
    }
}

fn check_cap(n: Option<usize>, cap: usize) -> Result<usize> {
    match n {
        Some(n) if n <= cap => Ok(n),
        _ => Err(Error::CapExceeded {
            what: "sofic vertex set",
            requested: n.unwrap_or(usize::MAX),
            cap,
        }),
    }
}

fn coords(mut v: usize, d: usize, m: usize) -> Vec<usize> {
    let mut c = vec![0; d];
    for x in c.iter_mut() {
        *x = v % m;
        v /= m;
    }
    c
}

fn index(c: &[usize], m: usize) -> usize {
    c.iter().rev().fold(0, |acc, &x| acc * m + x)
}

/// The quotient `(ℤ/mℤ)^d` with `σ^{e_i}(v) = v + e_i`.
pub fn build_torus(d: usize, m: usize) -> Result<SoficMap> {
    build_torus_with_cap(d, m, DEFAULT_VERTEX_CAP)
}

pub fn build_torus_with_cap(d: usize, m: usize, cap: usize) -> Result<SoficMap> {
    if m < 2 {
        return Err(Error::InvalidArgument("torus side must be at least 2".into()));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let n = check_cap(m.checked_pow(d as u32), cap)?;
    let perms = (0..d)
        .map(|i| {
            (0..n)
                .map(|v| {
                    let mut c = coords(v, d, m);
                    c[i] = (c[i] + 1) % m;
                    index(&c, m) as u32
                })
                .collect()
        })
        .collect();
    SoficMap::from_perms(
        GroupSpec::zd(d),
        perms,
        Provenance {
            builder: "torus".into(),
            params: serde_json::json!({ "d": d, "m": m }),
            seed: None,
        },
    )
}

/// The box `{0..m-1}^d` with translation inside. A point leaving the box
/// through the face `x_i = m-1` re-enters at `x_i = 0` with the next
/// coordinate `x_{i+1}` shifted by one (cyclically); the twist is the
/// arbitrary bijection between the two faces. In dimension one the
/// re-entry bijection is forced and the box coincides with the torus.
pub fn build_folner_box(d: usize, m: usize) -> Result<SoficMap> {
    if m < 2 {
        return Err(Error::InvalidArgument("box side must be at least 2".into()));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    let n = check_cap(m.checked_pow(d as u32), DEFAULT_VERTEX_CAP)?;
    let perms = (0..d)
        .map(|i| {
            (0..n)
                .map(|v| {
                    let mut c = coords(v, d, m);
                    if c[i] + 1 < m {
                        c[i] += 1;
                    } else {
                        c[i] = 0;
                        if d > 1 {
                            let j = (i + 1) % d;
                            c[j] = (c[j] + 1) % m;
                        }
                    }
                    index(&c, m) as u32
                })
                .collect()
        })
        .collect();
    SoficMap::from_perms(
        GroupSpec::zd(d),
        perms,
        Provenance {
            builder: "folner".into(),
            params: serde_json::json!({ "d": d, "m": m }),
            seed: None,
        },
    )
}

/// `k` independent uniform permutations of `{0..n-1}`.
pub fn build_random_perm(k: usize, n: usize, seed: u64) -> Result<SoficMap> {
    if n < 2 {
        return Err(Error::InvalidArgument("random permutation model needs n >= 2".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    check_cap(Some(n), DEFAULT_VERTEX_CAP)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms = (0..k)
        .map(|_| {
            let mut p: Vec<u32> = (0..n as u32).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    SoficMap::from_perms(
        GroupSpec::free(k),
        perms,
        Provenance {
            builder: "random_perm".into(),
            params: serde_json::json!({ "k": k, "n": n }),
            seed: Some(seed),
        },
    )
}

/// A family of sofic maps indexed by a size parameter: the side `m` for
/// tori and boxes, the vertex count `n` for random permutations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum Builder {
    Torus { d: usize },
    #[serde(alias = "folner_box")]
    Folner { d: usize },
    RandomPerm { k: usize, seed: u64 },
}

impl Builder {
    pub fn spec(&self) -> GroupSpec {
        match *self {
            Builder::Torus { d } | Builder::Folner { d } => GroupSpec::zd(d),
            Builder::RandomPerm { k, .. } => GroupSpec::free(k),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Builder::Torus { .. } => "torus",
            Builder::Folner { .. } => "folner",
            Builder::RandomPerm { .. } => "random_perm",
        }
    }

    pub fn build(&self, size: usize) -> Result<SoficMap> {
        self.build_with_cap(size, DEFAULT_VERTEX_CAP)
    }

    pub fn build_with_cap(&self, size: usize, cap: usize) -> Result<SoficMap> {
        match *self {
            Builder::Torus { d } => build_torus_with_cap(d, size, cap),
            Builder::Folner { d } => {
                check_cap(size.checked_pow(d as u32), cap)?;
                build_folner_box(d, size)
            }
            Builder::RandomPerm { k, seed } => {
                check_cap(Some(size), cap)?;
                build_random_perm(k, size, seed)
            }
        }
    }

    /// Number of vertices produced for `size`.
    pub fn vertex_count(&self, size: usize) -> Option<usize> {
        match *self {
            Builder::Torus { d } | Builder::Folner { d } => size.checked_pow(d as u32),
            Builder::RandomPerm { .. } => Some(size),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match *self {
            Builder::RandomPerm { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodnessReport {
    pub radius: usize,
    pub ball_size: usize,
    pub n: usize,
    pub good_vertices: Vec<usize>,
    pub fraction: f64,
    /// Worst fraction of vertices over pairs `g, h ∈ F` with `σ^gσ^h(v) ≠ σ^{gh}(v)`.
    pub multiplicative_defect: f64,
    /// Worst fraction of vertices over `g ∈ F \ {1}` with `σ^g(v) = v`.
    pub trace_defect: f64,
}

/// Per-vertex flags for conditions (2)-(4) of goodness, which only depend
/// on the vertex `u` itself and not on the window it belongs to.
fn local_conditions(sigma: &SoficMap, ball: &CayleyBall) -> Vec<bool> {
    let spec = sigma.spec();
    let words: Vec<Vec<Letter>> = ball.elements.iter().map(|g| g.letters()).collect();
    let products: Vec<Vec<Vec<Letter>>> = ball
        .elements
        .iter()
        .map(|g| ball.elements.iter().map(|h| spec.mul(g, h).letters()).collect())
        .collect();
    let inverses: Vec<Vec<Letter>> = ball.elements.iter().map(|g| spec.inv(g).letters()).collect();
    let exact_inverses = !spec.is_zd();
    (0..sigma.n())
        .map(|u| {
            let images: Vec<usize> = words.iter().map(|w| sigma.apply_letters(w, u)).collect();
            for (gi, g) in words.iter().enumerate() {
                for (hi, _) in words.iter().enumerate() {
                    let lhs = sigma.apply_letters(g, images[hi]);
                    let rhs = sigma.apply_letters(&products[gi][hi], u);
                    if lhs != rhs {
                        return false;
                    }
                }
                if !exact_inverses {
                    // (3): σ^{g⁻¹}σ^g(u) = u
                    if sigma.apply_letters(&inverses[gi], images[gi]) != u {
                        return false;
                    }
                    // (4): the σ^g-preimage of u is σ^{g⁻¹}(u)
                    let pre = g.iter().fold(u, |w, &l| sigma.apply_letter(l.inverse(), w));
                    if pre != sigma.apply_letters(&inverses[gi], u) {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

/// Vertices `v` satisfying all four goodness conditions for the window `F`.
pub fn good_vertices(sigma: &SoficMap, ball: &CayleyBall) -> GoodnessReport {
    let flags = good_vertex_flags(sigma, ball);
    let good: Vec<usize> = flags.iter().enumerate().filter(|(_, &g)| g).map(|(v, _)| v).collect();
    let (mult, trace) = defects(sigma, ball);
    GoodnessReport {
        radius: ball.radius,
        ball_size: ball.len(),
        n: sigma.n(),
        fraction: good.len() as f64 / sigma.n() as f64,
        good_vertices: good,
        multiplicative_defect: mult,
        trace_defect: trace,
    }
}

pub fn good_vertex_flags(sigma: &SoficMap, ball: &CayleyBall) -> Vec<bool> {
    let local = local_conditions(sigma, ball);
    let words: Vec<Vec<Letter>> = ball.elements.iter().map(|g| g.letters()).collect();
    let mut seen = vec![usize::MAX; sigma.n()];
    (0..sigma.n())
        .map(|v| {
            for w in &words {
                let u = sigma.apply_letters(w, v);
                // (1): injective window
                if seen[u] == v {
                    return false;
                }
                seen[u] = v;
                if !local[u] {
                    return false;
                }
            }
            true
        })
        .collect()
}

fn defects(sigma: &SoficMap, ball: &CayleyBall) -> (f64, f64) {
    let spec = sigma.spec();
    let n = sigma.n() as f64;
    let mut worst_mult = 0usize;
    let mut worst_trace = 0usize;
    for g in &ball.elements {
        let gl = g.letters();
        if !g.is_identity() {
            let fixed = (0..sigma.n()).filter(|&v| sigma.apply_letters(&gl, v) == v).count();
            worst_trace = worst_trace.max(fixed);
        }
        for h in &ball.elements {
            let hl = h.letters();
            let gh = spec.mul(g, h).letters();
            let bad = (0..sigma.n())
                .filter(|&v| sigma.apply_letters(&gl, sigma.apply_letters(&hl, v)) != sigma.apply_letters(&gh, v))
                .count();
            worst_mult = worst_mult.max(bad);
        }
    }
    (worst_mult as f64 / n, worst_trace as f64 / n)
}

#[derive(Clone, Debug, Serialize)]
pub struct SoficCheck {
    pub ok: bool,
    pub delta: f64,
    pub multiplicative_defect: f64,
    pub trace_defect: f64,
}

/// `(F, δ)`-multiplicativity and trace preservation.
pub fn check_sofic(sigma: &SoficMap, ball: &CayleyBall, delta: f64) -> Result<SoficCheck> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    let (mult, trace) = defects(sigma, ball);
    Ok(SoficCheck {
        ok: mult <= delta && trace <= delta,
        delta,
        multiplicative_defect: mult,
        trace_defect: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(spec: GroupSpec, r: usize) -> CayleyBall {
        spec.ball(r).unwrap()
    }

    #[test]
    fn torus_is_cyclic_shift() {
        let s = build_torus(1, 4).unwrap();
        assert_eq!(s.perm(0), &[1, 2, 3, 0]);
    }

    #[test]
    fn torus_generators_commute() {
        let s = build_torus(2, 3).unwrap();
        assert_eq!(s.n(), 9);
        for v in 0..9 {
            let a = s.perm(0)[s.perm(1)[v] as usize];
            let b = s.perm(1)[s.perm(0)[v] as usize];
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trace_fails_for_period_two() {
        let s = build_torus(1, 2).unwrap();
        let g = GroupElement::Vector(vec![2]);
        assert!((0..2).all(|v| s.sigma_word(&g, v) == v));
    }

    #[test]
    fn sigma_word_examples() {
        let s = build_torus(1, 8).unwrap();
        assert_eq!(s.sigma_word(&GroupElement::Vector(vec![3]), 2), 5);
        assert_eq!(s.sigma_word(&GroupSpec::zd(1).identity(), 6), 6);
        let t = build_torus(2, 3).unwrap();
        let g = GroupElement::Vector(vec![1, 1]);
        let e1 = Letter::pos(0);
        let e2 = Letter::pos(1);
        for v in 0..9 {
            assert_eq!(t.apply_letters(&[e1, e2], v), t.apply_letters(&[e2, e1], v));
            assert_eq!(t.sigma_word(&g, v), t.apply_letters(&[e2, e1], v));
        }
    }

    #[test]
    fn goodness_on_small_tori() {
        let s = build_torus(1, 8).unwrap();
        assert_eq!(good_vertices(&s, &ball(GroupSpec::zd(1), 3)).fraction, 1.0);
        let s = build_torus(1, 4).unwrap();
        assert_eq!(good_vertices(&s, &ball(GroupSpec::zd(1), 2)).fraction, 0.0);
    }

    #[test]
    fn folner_box_in_one_dimension_is_the_torus() {
        let f = build_folner_box(1, 8).unwrap();
        let t = build_torus(1, 8).unwrap();
        assert_eq!(f.perm(0), t.perm(0));
        assert_eq!(good_vertices(&f, &ball(GroupSpec::zd(1), 2)).fraction, 1.0);
    }

    #[test]
    fn folner_box_twist_breaks_goodness_near_the_seam() {
        let f = build_folner_box(2, 4).unwrap();
        let rep = good_vertices(&f, &ball(GroupSpec::zd(2), 1));
        assert!(rep.fraction < 1.0);
        assert!(rep.multiplicative_defect > 0.0);
    }

    #[test]
    fn check_sofic_examples() {
        let s = build_torus(2, 8).unwrap();
        assert!(check_sofic(&s, &ball(GroupSpec::zd(2), 2), 0.01).unwrap().ok);
        let s = build_torus(1, 3).unwrap();
        assert!(!check_sofic(&s, &ball(GroupSpec::zd(1), 3), 0.01).unwrap().ok);
        let s = build_random_perm(2, 50, 3).unwrap();
        assert!(check_sofic(&s, &ball(GroupSpec::free(2), 0), 0.5).unwrap().ok);
        assert!(check_sofic(&s, &ball(GroupSpec::free(2), 0), 1.5).is_err());
    }

    #[test]
    fn random_perm_is_deterministic() {
        let a = build_random_perm(2, 100, 9).unwrap();
        let b = build_random_perm(2, 100, 9).unwrap();
        assert_eq!(a.perm(0), b.perm(0));
        assert_eq!(a.perm(1), b.perm(1));
        let small = build_random_perm(3, 2, 1).unwrap();
        let rep = good_vertices(&small, &ball(GroupSpec::free(3), 1));
        assert!(rep.fraction >= 0.0 && rep.fraction <= 1.0);
    }

    #[test]
    fn inverse_coherence() {
        let s = build_random_perm(2, 200, 4).unwrap();
        for gen in 0..2 {
            for v in 0..200 {
                let u = s.apply_letter(Letter::pos(gen), v);
                assert_eq!(s.apply_letter(Letter::neg(gen), u), v);
            }
        }
    }

    #[test]
    fn rejects_non_permutations() {
        let err = SoficMap::from_perms(
            GroupSpec::zd(1),
            vec![vec![0, 0, 1]],
            Provenance { builder: "x".into(), params: serde_json::Value::Null, seed: None },
        );
        assert!(err.is_err());
    }
}
