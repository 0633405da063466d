//! Finitely generated groups ℤ^d and F_k with their word metric, ball
//! enumeration and labeled Cayley balls.
//!
//! Conventions used throughout the crate:
//!
//! * The symmetric generating set is ordered `s₁, s₁⁻¹, s₂, s₂⁻¹, …`; a
//!   [`Letter`] is a generator index plus an inverse flag.
//! * Words are stored in written order: `g = s_ℓ ⋯ s₁` is `[s_ℓ, …, s₁]`,
//!   so `s₁` acts first.
//! * Cayley edges go from `g` to `s·g` (left multiplication) for positive
//!   generators `s`.
//! * Elements are compared length-lexicographically: first by word length,
//!   then by the lexicographically smallest word spelling them.
//! * The exhaustion is `F_r := B_{r-1}`, so `F₁ = B₀ = {1_Γ}`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of elements a ball may hold.
pub const DEFAULT_BALL_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GroupSpec {
    /// ℤ^d with the standard basis as positive generators.
    #[serde(rename = "Zd")]
    FreeAbelian { d: usize },
    /// The free group on `k` generators.
    #[serde(rename = "Free")]
    Free { k: usize },
}

impl GroupSpec {
    pub fn zd(d: usize) -> Self {
        GroupSpec::FreeAbelian { d }
    }

    pub fn free(k: usize) -> Self {
        GroupSpec::Free { k }
    }

    pub fn validate(&self) -> Result<()> {
        let rank = self.rank();
        if rank == 0 {
            return Err(Error::InvalidArgument("group rank must be at least 1".into()));
        }
        if rank > 64 {
            return Err(Error::InvalidArgument("group rank above 64 is not supported".into()));
        }
        Ok(())
    }

    /// Number of positive generators (`d` or `k`).
    pub fn rank(&self) -> usize {
        match *self {
            GroupSpec::FreeAbelian { d } => d,
            GroupSpec::Free { k } => k,
        }
    }

    /// Size of the symmetric generating set `S`.
    pub fn degree(&self) -> usize {
        2 * self.rank()
    }

    /// The symmetric generating set in canonical order.
    pub fn generators(&self) -> Vec<Letter> {
        (0..self.rank())
            .flat_map(|g| [Letter::pos(g), Letter::neg(g)])
            .collect()
    }

    pub fn is_zd(&self) -> bool {
        matches!(self, GroupSpec::FreeAbelian { .. })
    }

    pub fn generator_name(&self, gen: usize) -> String {
        match self {
            GroupSpec::FreeAbelian { .. } => format!("e{}", gen + 1),
            GroupSpec::Free { .. } => {
                if gen < 26 {
                    ((b'a' + gen as u8) as char).to_string()
                } else {
                    format!("s{}", gen + 1)
                }
            }
        }
    }

    /// Parses a generator name as produced by [`GroupSpec::generator_name`].
    pub fn parse_generator(&self, name: &str) -> Option<usize> {
        (0..self.rank()).find(|&g| self.generator_name(g) == name)
    }

    pub fn identity(&self) -> GroupElement {
        match *self {
            GroupSpec::FreeAbelian { d } => GroupElement::Vector(vec![0; d]),
            GroupSpec::Free { .. } => GroupElement::Word(Vec::new()),
        }
    }

    /// The element spelled by a single letter.
    pub fn letter(&self, l: Letter) -> GroupElement {
        self.left_mul_letter(l, &self.identity())
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self, g) {
            (GroupSpec::FreeAbelian { d }, GroupElement::Vector(v)) => v.len() == *d,
            (GroupSpec::Free { k }, GroupElement::Word(w)) => {
                w.iter().all(|l| (l.gen as usize) < *k) && is_reduced(w)
            }
            _ => false,
        }
    }

    /// Group product `g·h`, reduced.
    pub fn mul(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match (g, h) {
            (GroupElement::Vector(a), GroupElement::Vector(b)) => {
                GroupElement::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            (GroupElement::Word(a), GroupElement::Word(b)) => {
                let mut out: Vec<Letter> = a.clone();
                for &l in b {
                    if out.last() == Some(&l.inverse()) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                GroupElement::Word(out)
            }
            _ => panic!("mul: elements from different groups"),
        }
    }

    pub fn inv(&self, g: &GroupElement) -> GroupElement {
        match g {
            GroupElement::Vector(a) => GroupElement::Vector(a.iter().map(|x| -x).collect()),
            GroupElement::Word(w) => GroupElement::Word(w.iter().rev().map(|l| l.inverse()).collect()),
        }
    }

    /// `l·g`, the Cayley neighbour of `g` along letter `l`.
    pub fn left_mul_letter(&self, l: Letter, g: &GroupElement) -> GroupElement {
        match g {
            GroupElement::Vector(a) => {
                let mut v = a.clone();
                v[l.gen as usize] += if l.inverse { -1 } else { 1 };
                GroupElement::Vector(v)
            }
            GroupElement::Word(w) => {
                if w.first() == Some(&l.inverse()) {
                    GroupElement::Word(w[1..].to_vec())
                } else {
                    let mut out = Vec::with_capacity(w.len() + 1);
                    out.push(l);
                    out.extend_from_slice(w);
                    GroupElement::Word(out)
                }
            }
        }
    }

    pub fn word_length(&self, g: &GroupElement) -> usize {
        g.length()
    }

    /// The ball `B_r` around the identity with the default size cap.
    pub fn ball(&self, r: usize) -> Result<CayleyBall> {
        self.ball_with_cap(r, DEFAULT_BALL_CAP)
    }

    pub fn ball_with_cap(&self, r: usize, cap: usize) -> Result<CayleyBall> {
        self.validate()?;
        let predicted = self.ball_size(r);
        if predicted.is_none_or(|s| s > cap as u128) {
            return Err(Error::CapExceeded {
                what: "Cayley ball",
                requested: predicted.map_or(usize::MAX, |s| s.min(usize::MAX as u128) as usize),
                cap,
            });
        }
        CayleyBall::enumerate(*self, r)
    }

    /// Closed-form `|B_r|`, or `None` on overflow.
    pub fn ball_size(&self, r: usize) -> Option<u128> {
        match *self {
            GroupSpec::FreeAbelian { d } => zd_ball_size(d, r),
            GroupSpec::Free { k } => free_ball_size(k, r),
        }
    }

    /// The exhaustion element `F_r = B_{r-1}` (`r ≥ 1`).
    pub fn exhaustion(&self, r: usize) -> Result<CayleyBall> {
        if r == 0 {
            return Err(Error::InvalidArgument("exhaustion is indexed from F_1".into()));
        }
        self.ball(r - 1)
    }
}

/// `|B_r(ℤ^d)| = Σ_i 2^i C(d,i) C(r,i)`.
pub fn zd_ball_size(d: usize, r: usize) -> Option<u128> {
    let mut total: u128 = 0;
    for i in 0..=d.min(r) {
        let term = binomial(d as u128, i as u128)?
            .checked_mul(binomial(r as u128, i as u128)?)?
            .checked_mul(1u128.checked_shl(i as u32)?)?;
        total = total.checked_add(term)?;
    }
    Some(total)
}

/// `|B_r(F_k)| = 1 + 2k((2k−1)^r − 1)/(2k−2)` for `k ≥ 2`, `2r+1` for `k = 1`.
pub fn free_ball_size(k: usize, r: usize) -> Option<u128> {
    if k == 1 {
        return Some(2 * r as u128 + 1);
    }
    let q = (2 * k - 1) as u128;
    let pow = q.checked_pow(r as u32)?;
    Some(1 + (2 * k as u128) * (pow - 1) / (q - 1))
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub gen: u8,
    pub inverse: bool,
}

impl Letter {
    pub fn pos(gen: usize) -> Self {
        Letter { gen: gen as u8, inverse: false }
    }

    pub fn neg(gen: usize) -> Self {
        Letter { gen: gen as u8, inverse: true }
    }

    pub fn inverse(self) -> Self {
        Letter { gen: self.gen, inverse: !self.inverse }
    }

    /// Position in the symmetric generating set `s₁, s₁⁻¹, s₂, …`.
    pub fn index(self) -> usize {
        2 * self.gen as usize + self.inverse as usize
    }
}

fn is_reduced(w: &[Letter]) -> bool {
    w.windows(2).all(|p| p[0] != p[1].inverse())
}

/// Serialized as an integer array for ℤ^d and as a word string such as
/// `"aB"` (capitals are inverses, `"1"` is the identity) for free groups.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupElement {
    Vector(Vec<i64>),
    Word(Vec<Letter>),
}

impl GroupElement {
    pub fn length(&self) -> usize {
        match self {
            GroupElement::Vector(v) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
            GroupElement::Word(w) => w.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.length() == 0
    }

    /// A reduced spelling in written order. For ℤ^d this is the
    /// lexicographically smallest spelling (letters sorted by index).
    pub fn letters(&self) -> Vec<Letter> {
        match self {
            GroupElement::Vector(v) => {
                let mut out = Vec::with_capacity(self.length());
                for (i, &x) in v.iter().enumerate() {
                    let l = if x >= 0 { Letter::pos(i) } else { Letter::neg(i) };
                    out.extend(std::iter::repeat_n(l, x.unsigned_abs() as usize));
                }
                out
            }
            GroupElement::Word(w) => w.clone(),
        }
    }

    pub fn from_word(spec: &GroupSpec, letters: &[Letter]) -> GroupElement {
        letters
            .iter()
            .rev()
            .fold(spec.identity(), |acc, &l| spec.left_mul_letter(l, &acc))
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.length().cmp(&other.length()).then_with(|| {
            let a: Vec<usize> = self.letters().into_iter().map(Letter::index).collect();
            let b: Vec<usize> = other.letters().into_iter().map(Letter::index).collect();
            a.cmp(&b)
        })
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
            GroupElement::Word(w) if w.is_empty() => write!(f, "1"),
            GroupElement::Word(w) => {
                for l in w {
                    let c = if (l.gen as usize) < 26 { (b'a' + l.gen) as char } else { '?' };
                    if l.inverse {
                        write!(f, "{}", c.to_ascii_uppercase())?;
                    } else {
                        write!(f, "{c}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl std::str::FromStr for GroupElement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
            let v = inner
                .split(',')
                .map(|t| t.trim().parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Schema(format!("bad vector element {s:?}: {e}")))?;
            return Ok(GroupElement::Vector(v));
        }
        if s == "1" || s.is_empty() {
            return Ok(GroupElement::Word(Vec::new()));
        }
        let mut w = Vec::with_capacity(s.len());
        for c in s.chars() {
            if !c.is_ascii_alphabetic() {
                return Err(Error::Schema(format!("bad word {s:?}")));
            }
            let gen = c.to_ascii_lowercase() as usize - 'a' as usize;
            w.push(if c.is_ascii_uppercase() { Letter::neg(gen) } else { Letter::pos(gen) });
        }
        if !is_reduced(&w) {
            return Err(Error::Schema(format!("word {s:?} is not reduced")));
        }
        Ok(GroupElement::Word(w))
    }
}

impl Serialize for GroupElement {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GroupElement::Vector(v) => v.serialize(ser),
            GroupElement::Word(_) => ser.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Vector(Vec<i64>),
            Word(String),
        }
        match Raw::deserialize(de)? {
            Raw::Vector(v) => Ok(GroupElement::Vector(v)),
            Raw::Word(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BallEdge {
    /// Index of `g`.
    pub from: usize,
    /// Index of `s·g`.
    pub to: usize,
    /// Positive generator `s`.
    pub gen: usize,
}

/// The ball `B_r` with its induced labeled Cayley graph.
#[derive(Clone, Debug)]
pub struct CayleyBall {
    pub spec: GroupSpec,
    pub radius: usize,
    pub elements: Vec<GroupElement>,
    pub edges: Vec<BallEdge>,
    index: HashMap<GroupElement, usize>,
    layer_start: Vec<usize>,
}

impl CayleyBall {
    fn enumerate(spec: GroupSpec, r: usize) -> Result<Self> {
        let gens = spec.generators();
        let mut elements = vec![spec.identity()];
        let mut layer_start = vec![0usize];
        let mut index: HashMap<GroupElement, usize> = HashMap::new();
        index.insert(spec.identity(), 0);
        let mut frontier = vec![spec.identity()];
        for len in 1..=r {
            let mut next: Vec<GroupElement> = Vec::new();
            for g in &frontier {
                for &l in &gens {
                    let h = spec.left_mul_letter(l, g);
                    if h.length() == len && !index.contains_key(&h) {
                        index.insert(h.clone(), usize::MAX);
                        next.push(h);
                    }
                }
            }
            next.sort();
            layer_start.push(elements.len());
            for h in &next {
                index.insert(h.clone(), elements.len());
                elements.push(h.clone());
            }
            frontier = next;
        }
        layer_start.push(elements.len());

        let mut edges = Vec::new();
        for (i, g) in elements.iter().enumerate() {
            for gen in 0..spec.rank() {
                let h = spec.left_mul_letter(Letter::pos(gen), g);
                if let Some(&j) = index.get(&h) {
                    edges.push(BallEdge { from: i, to: j, gen });
                }
            }
        }
        Ok(CayleyBall { spec, radius: r, elements, edges, index, layer_start })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }

    /// Number of elements of word length at most `k` (a prefix of the list).
    pub fn prefix_len(&self, k: usize) -> usize {
        self.layer_start[(k + 1).min(self.layer_start.len() - 1)]
    }

    /// Index range of the sphere of radius `k`.
    pub fn sphere(&self, k: usize) -> std::ops::Range<usize> {
        if k > self.radius {
            return self.len()..self.len();
        }
        self.layer_start[k]..self.layer_start[k + 1]
    }

    /// Undirected adjacency lists over ball indices, each entry carrying the
    /// neighbour index, generator and whether the neighbour is `s·g` (true)
    /// or `s⁻¹·g` (false).
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize, bool)>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            adj[e.from].push((e.to, e.gen, true));
            adj[e.to].push((e.from, e.gen, false));
        }
        adj
    }
}

/// Checks whether the labeled balls `B_r` of two groups are isomorphic by a
/// root-preserving, label-preserving map. Returns the first radius at which
/// they differ, if any.
pub fn balls_isomorphic(a: &GroupSpec, b: &GroupSpec, r: usize) -> Result<Option<usize>> {
    if a.rank() != b.rank() {
        return Ok(Some(0));
    }
    let ba = a.ball(r)?;
    let bb = b.ball(r)?;
    let mut map: Vec<Option<usize>> = vec![None; ba.len()];
    let mut back: Vec<Option<usize>> = vec![None; bb.len()];
    map[0] = Some(0);
    back[0] = Some(0);
    let gens = a.generators();
    // Layered traversal; the map is forced by following labels.
    for i in 0..ba.len() {
        let j = match map[i] {
            Some(j) => j,
            None => return Ok(Some(ba.elements[i].length())),
        };
        for &l in &gens {
            let na = ba.index_of(&a.left_mul_letter(l, &ba.elements[i]));
            let nb = bb.index_of(&b.left_mul_letter(l, &bb.elements[j]));
            match (na, nb) {
                (None, None) => {}
                (Some(x), Some(y)) => match (map[x], back[y]) {
                    (None, None) => {
                        map[x] = Some(y);
                        back[y] = Some(x);
                    }
                    (Some(y2), Some(x2)) if y2 == y && x2 == x => {}
                    _ => {
                        let rad = ba.elements[x].length().min(bb.elements[y].length());
                        return Ok(Some(rad));
                    }
                },
                (Some(x), None) => return Ok(Some(ba.elements[x].length())),
                (None, Some(y)) => return Ok(Some(bb.elements[y].length())),
            }
        }
    }
    if ba.len() != bb.len() {
        return Ok(Some(r));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a() -> Letter {
        Letter::pos(0)
    }
    fn b() -> Letter {
        Letter::pos(1)
    }

    #[test]
    fn identities() {
        assert_eq!(GroupSpec::zd(2).identity(), GroupElement::Vector(vec![0, 0]));
        assert_eq!(GroupSpec::free(2).identity(), GroupElement::Word(vec![]));
        assert_eq!(GroupSpec::zd(1).identity(), GroupElement::Vector(vec![0]));
    }

    #[test]
    fn products() {
        let z2 = GroupSpec::zd(2);
        assert_eq!(
            z2.mul(&GroupElement::Vector(vec![1, 0]), &GroupElement::Vector(vec![0, 1])),
            GroupElement::Vector(vec![1, 1])
        );
        let f2 = GroupSpec::free(2);
        let ga = GroupElement::Word(vec![a()]);
        assert!(f2.mul(&ga, &f2.inv(&ga)).is_identity());
        // (ab)(b⁻¹a) = aa
        let g = GroupElement::Word(vec![a(), b()]);
        let h = GroupElement::Word(vec![b().inverse(), a()]);
        assert_eq!(f2.mul(&g, &h), GroupElement::Word(vec![a(), a()]));
    }

    #[test]
    fn ball_sizes() {
        assert_eq!(GroupSpec::zd(2).ball(1).unwrap().len(), 5);
        assert_eq!(GroupSpec::free(2).ball(2).unwrap().len(), 17);
        let b = GroupSpec::zd(1).ball(3).unwrap();
        assert_eq!(b.len(), 7);
        let mut xs: Vec<i64> = b
            .elements
            .iter()
            .map(|g| match g {
                GroupElement::Vector(v) => v[0],
                _ => unreachable!(),
            })
            .collect();
        xs.sort();
        assert_eq!(xs, vec![-3, -2, -1, 0, 1, 2, 3]);
    }

    #[test]
    fn word_lengths() {
        let z2 = GroupSpec::zd(2);
        assert_eq!(z2.word_length(&GroupElement::Vector(vec![2, -1])), 3);
        let f2 = GroupSpec::free(2);
        assert_eq!(f2.word_length(&GroupElement::Word(vec![a(), b(), a().inverse()])), 3);
        assert_eq!(f2.word_length(&f2.identity()), 0);
    }

    #[test]
    fn canonical_order_in_z1() {
        let b = GroupSpec::zd(1).ball(2).unwrap();
        let xs: Vec<String> = b.elements.iter().map(|g| g.to_string()).collect();
        assert_eq!(xs, vec!["(0)", "(1)", "(-1)", "(2)", "(-2)"]);
    }

    #[test]
    fn edges_are_positive_and_internal() {
        let b = GroupSpec::zd(2).ball(1).unwrap();
        // origin to e1 and e2, -e1 to origin, -e2 to origin
        assert_eq!(b.edges.len(), 4);
        for e in &b.edges {
            let g = &b.elements[e.from];
            let h = &b.elements[e.to];
            assert_eq!(&GroupSpec::zd(2).left_mul_letter(Letter::pos(e.gen), g), h);
        }
    }

    #[test]
    fn spheres_and_prefixes() {
        let b = GroupSpec::free(2).ball(2).unwrap();
        assert_eq!(b.prefix_len(0), 1);
        assert_eq!(b.prefix_len(1), 5);
        assert_eq!(b.sphere(2), 5..17);
        assert_eq!(b.sphere(3), 17..17);
    }

    #[test]
    fn cap_is_enforced() {
        let err = GroupSpec::free(3).ball_with_cap(10, 1000).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { .. }));
    }

    #[test]
    fn z1_and_f1_balls_agree() {
        assert_eq!(balls_isomorphic(&GroupSpec::zd(1), &GroupSpec::free(1), 5).unwrap(), None);
        let first = balls_isomorphic(&GroupSpec::zd(2), &GroupSpec::free(2), 3).unwrap();
        assert_eq!(first, Some(2));
    }

    #[test]
    fn serde_shape() {
        let s: GroupSpec = serde_json::from_str(r#"{"kind":"Zd","d":2}"#).unwrap();
        assert_eq!(s, GroupSpec::zd(2));
        let s: GroupSpec = serde_json::from_str(r#"{"kind":"Free","k":2}"#).unwrap();
        assert_eq!(s, GroupSpec::free(2));
        let g = GroupElement::from_word(&GroupSpec::free(2), &[a(), b().inverse()]);
        let j = serde_json::to_string(&g).unwrap();
        assert_eq!(j, "\"aB\"");
        assert_eq!(serde_json::from_str::<GroupElement>(&j).unwrap(), g);
        let v = GroupElement::Vector(vec![1, -2]);
        assert_eq!(serde_json::to_string(&v).unwrap(), "[1,-2]");
        assert_eq!("(1,-2)".parse::<GroupElement>().unwrap(), v);
    }
}
