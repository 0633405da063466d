//! Nearest-neighbour constraint structures (subshifts `X = Hom(Γ, 𝔸)`),
//! potentials, patterns and admissibility.
//!
//! Global admissibility is only semi-decidable in general. The verdicts
//! here are definitive in three situations: a local violation (always
//! `No`), a safe symbol (locally admissible implies `Yes`), and ℤ¹, where
//! extension is decided exactly through reachability in the transition
//! graph. Everywhere else a failed bounded search is a definitive `No` and
//! a successful one is reported as `UnknownAtPad`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::cayley::{CayleyBall, GroupElement, GroupSpec};
use crate::derived::{error_set, Configuration, DerivedSpace, Enforcement};
use crate::error::{Error, Result};

/// Alphabet symbol.
pub type Symbol = u8;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintStructure {
    alphabet: usize,
    /// Row-major `a × a` allowed-pair matrices, one per positive generator.
    relations: Vec<Vec<bool>>,
}

impl ConstraintStructure {
    pub fn new(alphabet: usize, relations: Vec<Vec<Vec<bool>>>) -> Result<Self> {
        if !(1..=255).contains(&alphabet) {
            return Err(Error::InvalidArgument("alphabet size must be in 1..=255".into()));
        }
        if relations.is_empty() {
            return Err(Error::InvalidArgument("need one relation per generator".into()));
        }
        let mut flat = Vec::with_capacity(relations.len());
        for m in relations {
            if m.len() != alphabet || m.iter().any(|row| row.len() != alphabet) {
                return Err(Error::InvalidArgument("relation matrix must be alphabet x alphabet".into()));
            }
            flat.push(m.into_iter().flatten().collect());
        }
        Ok(ConstraintStructure { alphabet, relations: flat })
    }

    fn uniform(alphabet: usize, rank: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let m: Vec<bool> = (0..alphabet * alphabet).map(|i| f(i / alphabet, i % alphabet)).collect();
        ConstraintStructure { alphabet, relations: vec![m; rank] }
    }

    pub fn full_shift(alphabet: usize, rank: usize) -> Self {
        Self::uniform(alphabet, rank, |_, _| true)
    }

    /// Independent sets: `(1, 1)` forbidden along every generator.
    pub fn hardcore(rank: usize) -> Self {
        Self::uniform(2, rank, |a, b| !(a == 1 && b == 1))
    }

    /// Proper 2-colourings: equal neighbours forbidden.
    pub fn checkerboard(rank: usize) -> Self {
        Self::uniform(2, rank, |a, b| a != b)
    }

    pub fn proper_coloring(q: usize, rank: usize) -> Self {
        Self::uniform(q, rank, |a, b| a != b)
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn rank(&self) -> usize {
        self.relations.len()
    }

    /// Whether `(a, b) = (x(g), x(s·g))` is allowed for generator `s`.
    #[inline]
    pub fn allowed(&self, gen: usize, a: Symbol, b: Symbol) -> bool {
        self.relations[gen][a as usize * self.alphabet + b as usize]
    }

    pub fn relation_matrix(&self, gen: usize) -> Vec<Vec<bool>> {
        self.relations[gen].chunks(self.alphabet).map(|r| r.to_vec()).collect()
    }

    /// Generators without any allowed pair, which make `X` empty.
    pub fn empty_relations(&self) -> Vec<usize> {
        (0..self.rank()).filter(|&g| !self.relations[g].iter().any(|&b| b)).collect()
    }

    pub fn check_group(&self, spec: &GroupSpec) -> Result<()> {
        if spec.rank() != self.rank() {
            return Err(Error::GroupMismatch(format!(
                "structure has {} generators, group has {}",
                self.rank(),
                spec.rank()
            )));
        }
        Ok(())
    }
}

/// Smallest symbol `0` whose row and column are all-true in every relation.
pub fn detect_safe_symbol(structure: &ConstraintStructure) -> Option<Symbol> {
    let a = structure.alphabet();
    (0..a as Symbol).find(|&z| {
        (0..structure.rank()).all(|gen| {
            (0..a as Symbol).all(|b| structure.allowed(gen, z, b) && structure.allowed(gen, b, z))
        })
    })
}

/// Nearest-neighbour potential `φ(x) = h(x(1)) + Σ_s J_s(x(1), x(s))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub vertex: Vec<f64>,
    /// Row-major `a × a` log-weights per positive generator.
    edge: Vec<Vec<f64>>,
}

impl Potential {
    pub fn new(vertex: Vec<f64>, edge: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let a = vertex.len();
        if a == 0 {
            return Err(Error::InvalidArgument("empty vertex weights".into()));
        }
        let mut flat = Vec::with_capacity(edge.len());
        for m in edge {
            if m.len() != a || m.iter().any(|r| r.len() != a) {
                return Err(Error::InvalidArgument("edge weights must be alphabet x alphabet".into()));
            }
            flat.push(m.into_iter().flatten().collect::<Vec<f64>>());
        }
        let p = Potential { vertex, edge: flat };
        if !p.norm().is_finite() {
            return Err(Error::InvalidArgument("potential entries must be finite".into()));
        }
        Ok(p)
    }

    pub fn zero(alphabet: usize, rank: usize) -> Self {
        Potential { vertex: vec![0.0; alphabet], edge: vec![vec![0.0; alphabet * alphabet]; rank] }
    }

    /// `h(1) = log λ`, no edge terms.
    pub fn hardcore(lambda: f64, rank: usize) -> Self {
        Potential { vertex: vec![0.0, lambda.ln()], edge: vec![vec![0.0; 4]; rank] }
    }

    /// `J_s(a, b) = β·1[a = b]` on every generator.
    pub fn ising_like(alphabet: usize, rank: usize, beta: f64) -> Self {
        let m: Vec<f64> = (0..alphabet * alphabet)
            .map(|i| if i / alphabet == i % alphabet { beta } else { 0.0 })
            .collect();
        Potential { vertex: vec![0.0; alphabet], edge: vec![m; rank] }
    }

    pub fn alphabet(&self) -> usize {
        self.vertex.len()
    }

    pub fn rank(&self) -> usize {
        self.edge.len()
    }

    #[inline]
    pub fn edge_weight(&self, gen: usize, a: Symbol, b: Symbol) -> f64 {
        self.edge[gen][a as usize * self.vertex.len() + b as usize]
    }

    pub fn edge_matrix(&self, gen: usize) -> Vec<Vec<f64>> {
        self.edge[gen].chunks(self.vertex.len()).map(|r| r.to_vec()).collect()
    }

    /// `‖φ‖ ≤ max|h| + Σ_s max|J_s|`.
    pub fn norm(&self) -> f64 {
        let h = self.vertex.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        h + self.edge.iter().map(|e| e.iter().fold(0.0f64, |m, x| m.max(x.abs()))).sum::<f64>()
    }

    /// `φ` evaluated on the constant configuration `a^Γ`.
    pub fn at_constant(&self, a: Symbol) -> f64 {
        self.vertex[a as usize] + (0..self.rank()).map(|g| self.edge_weight(g, a, a)).sum::<f64>()
    }

    /// Replaces the activity of symbol 1 (hardcore-style models).
    pub fn with_activity(mut self, lambda: f64) -> Result<Self> {
        if self.vertex.len() < 2 || !(lambda > 0.0) {
            return Err(Error::InvalidArgument("activity needs a binary alphabet and lambda > 0".into()));
        }
        self.vertex[1] = lambda.ln();
        Ok(self)
    }

    pub fn check_structure(&self, structure: &ConstraintStructure) -> Result<()> {
        if self.alphabet() != structure.alphabet() || self.rank() != structure.rank() {
            return Err(Error::InvalidArgument("potential and structure disagree on alphabet or rank".into()));
        }
        Ok(())
    }
}

/// A finite pattern: a partial map from group elements to symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Pattern {
    pub entries: BTreeMap<GroupElement, Symbol>,
}

impl Pattern {
    pub fn new() -> Self {
        Pattern::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (GroupElement, Symbol)>) -> Self {
        Pattern { entries: pairs.into_iter().collect() }
    }

    pub fn with(mut self, g: GroupElement, a: Symbol) -> Self {
        self.entries.insert(g, a);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, g: &GroupElement) -> Option<Symbol> {
        self.entries.get(g).copied()
    }

    /// Largest word length in the support.
    pub fn radius(&self) -> usize {
        self.entries.keys().map(|g| g.length()).max().unwrap_or(0)
    }

    /// Dense view over the indices of `ball`; `None` if the support leaves it.
    pub fn on_ball(&self, ball: &CayleyBall) -> Option<Vec<Option<Symbol>>> {
        let mut out = vec![None; ball.len()];
        for (g, &a) in &self.entries {
            out[ball.index_of(g)?] = Some(a);
        }
        Some(out)
    }

    pub fn from_ball(ball: &CayleyBall, values: &[Option<Symbol>]) -> Self {
        Pattern::from_pairs(
            values
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|a| (ball.elements[i].clone(), a))),
        )
    }
}

/// True iff every Cayley edge inside the support carries an allowed pair.
pub fn is_locally_admissible(structure: &ConstraintStructure, spec: &GroupSpec, p: &Pattern) -> bool {
    for (g, &a) in &p.entries {
        if a as usize >= structure.alphabet() {
            return false;
        }
        for gen in 0..spec.rank() {
            let h = spec.left_mul_letter(crate::cayley::Letter::pos(gen), g);
            if let Some(b) = p.get(&h) {
                if !structure.allowed(gen, a, b) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    UnknownAtPad,
}

/// Default node budget for bounded extension searches.
pub const DEFAULT_SEARCH_BUDGET: u64 = 2_000_000;

pub fn is_globally_admissible(
    structure: &ConstraintStructure,
    spec: &GroupSpec,
    p: &Pattern,
    pad: usize,
) -> Result<Verdict> {
    structure.check_group(spec)?;
    if !is_locally_admissible(structure, spec, p) {
        return Ok(Verdict::No);
    }
    if !structure.empty_relations().is_empty() {
        return Ok(Verdict::No);
    }
    if detect_safe_symbol(structure).is_some() {
        return Ok(Verdict::Yes);
    }
    if let GroupSpec::FreeAbelian { d: 1 } = spec {
        return Ok(if line_extendable(structure, p) { Verdict::Yes } else { Verdict::No });
    }
    let ball = spec.ball(p.radius() + pad)?;
    let pins = p.on_ball(&ball).expect("support inside its own radius");
    match extension_exists(structure, &ball, &pins, DEFAULT_SEARCH_BUDGET) {
        Some(false) => Ok(Verdict::No),
        _ => Ok(Verdict::UnknownAtPad),
    }
}

/// Exact extension test on ℤ¹: consecutive pinned sites must be joined by
/// a walk of the right length and the outermost symbols must admit
/// infinite walks outward.
fn line_extendable(structure: &ConstraintStructure, p: &Pattern) -> bool {
    let a = structure.alphabet();
    let mut sites: Vec<(i64, Symbol)> = p
        .entries
        .iter()
        .map(|(g, &s)| match g {
            GroupElement::Vector(v) => (v[0], s),
            GroupElement::Word(_) => unreachable!("ℤ¹ pattern"),
        })
        .collect();
    sites.sort();
    let step = |from: &[bool]| -> Vec<bool> {
        (0..a)
            .map(|b| (0..a).any(|x| from[x] && structure.allowed(0, x as Symbol, b as Symbol)))
            .collect()
    };
    for w in sites.windows(2) {
        let (i, x) = w[0];
        let (j, y) = w[1];
        let mut reach = vec![false; a];
        reach[x as usize] = true;
        for _ in 0..(j - i) {
            reach = step(&reach);
        }
        if !reach[y as usize] {
            return false;
        }
    }
    // symbols with arbitrarily long forward / backward walks
    let mut fwd = vec![true; a];
    let mut bwd = vec![true; a];
    for _ in 0..=a {
        fwd = (0..a)
            .map(|x| fwd[x] && (0..a).any(|y| fwd[y] && structure.allowed(0, x as Symbol, y as Symbol)))
            .collect();
        bwd = (0..a)
            .map(|y| bwd[y] && (0..a).any(|x| bwd[x] && structure.allowed(0, x as Symbol, y as Symbol)))
            .collect();
    }
    match (sites.first(), sites.last()) {
        (Some(&(_, first)), Some(&(_, last))) => bwd[first as usize] && fwd[last as usize],
        _ => fwd.iter().any(|&b| b),
    }
}

/// Backtracking search for a completion of `pins` on the ball that
/// respects every internal edge. `None` when the node budget runs out.
pub fn extension_exists(
    structure: &ConstraintStructure,
    ball: &CayleyBall,
    pins: &[Option<Symbol>],
    budget: u64,
) -> Option<bool> {
    let adj = ball.adjacency();
    let mut values: Vec<Option<Symbol>> = pins.to_vec();
    let free: Vec<usize> = (0..ball.len()).filter(|&i| pins[i].is_none()).collect();
    let mut nodes = 0u64;

    fn consistent(
        structure: &ConstraintStructure,
        adj: &[Vec<(usize, usize, bool)>],
        values: &[Option<Symbol>],
        i: usize,
        a: Symbol,
    ) -> bool {
        adj[i].iter().all(|&(j, gen, forward)| match values[j] {
            None => true,
            Some(b) => {
                if forward {
                    structure.allowed(gen, a, b)
                } else {
                    structure.allowed(gen, b, a)
                }
            }
        })
    }

    fn go(
        k: usize,
        free: &[usize],
        structure: &ConstraintStructure,
        adj: &[Vec<(usize, usize, bool)>],
        values: &mut Vec<Option<Symbol>>,
        nodes: &mut u64,
        budget: u64,
    ) -> Option<bool> {
        if k == free.len() {
            return Some(true);
        }
        *nodes += 1;
        if *nodes > budget {
            return None;
        }
        let i = free[k];
        for a in 0..structure.alphabet() as Symbol {
            if consistent(structure, adj, values, i, a) {
                values[i] = Some(a);
                match go(k + 1, free, structure, adj, values, nodes, budget) {
                    Some(true) => return Some(true),
                    None => return None,
                    Some(false) => {}
                }
                values[i] = None;
            }
        }
        Some(false)
    }

    for i in 0..ball.len() {
        if let Some(a) = pins[i] {
            values[i] = None;
            if !consistent(structure, &adj, &values, i, a) {
                return Some(false);
            }
            values[i] = Some(a);
        }
    }
    go(0, &free, structure, &adj, &mut values, &mut nodes, budget)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum TssmVerdict {
    /// Full proof: a safe symbol gives TSSM with range `B₁`.
    SafeSymbolCertified { symbol: Symbol },
    /// No violation among supports `F ⊆ B_R` with `|F| ≤ k_max`.
    HoldsUpToRadius {
        radius: usize,
        k_max: usize,
        /// Candidates skipped because a window verdict was not definitive.
        undecided: usize,
    },
    /// A pattern whose windows `F ∩ B_m g` are all admissible while the
    /// pattern itself is not.
    ViolatedAt { support: Vec<GroupElement>, values: Vec<Symbol> },
}

impl TssmVerdict {
    pub fn is_certified(&self) -> bool {
        !matches!(self, TssmVerdict::ViolatedAt { .. })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TssmOptions {
    pub pad: usize,
    /// Maximum number of candidate patterns examined.
    pub budget: u64,
}

impl Default for TssmOptions {
    fn default() -> Self {
        TssmOptions { pad: 2, budget: 5_000_000 }
    }
}

pub fn check_tssm(
    structure: &ConstraintStructure,
    spec: &GroupSpec,
    range: usize,
    radius: usize,
    k_max: usize,
) -> Result<TssmVerdict> {
    check_tssm_with(structure, spec, range, radius, k_max, TssmOptions::default())
}

pub fn check_tssm_with(
    structure: &ConstraintStructure,
    spec: &GroupSpec,
    range: usize,
    radius: usize,
    k_max: usize,
    opts: TssmOptions,
) -> Result<TssmVerdict> {
    structure.check_group(spec)?;
    if range > radius {
        return Err(Error::InvalidArgument("range radius must not exceed the test radius".into()));
    }
    if let Some(symbol) = detect_safe_symbol(structure) {
        return Ok(TssmVerdict::SafeSymbolCertified { symbol });
    }
    let ball = spec.ball(radius)?;
    let range_ball = spec.ball(range)?;
    let a = structure.alphabet();
    let mut examined = 0u64;
    let mut undecided = 0usize;
    let mut cache: HashMap<Pattern, Verdict> = HashMap::new();
    let mut verdict = |p: &Pattern| -> Result<Verdict> {
        if let Some(&v) = cache.get(p) {
            return Ok(v);
        }
        let v = is_globally_admissible(structure, spec, p, opts.pad)?;
        cache.insert(p.clone(), v);
        Ok(v)
    };

    for size in 1..=k_max.min(ball.len()) {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let support: Vec<&GroupElement> = subset.iter().map(|&i| &ball.elements[i]).collect();
            let mut values = vec![0 as Symbol; size];
            loop {
                examined += 1;
                if examined > opts.budget {
                    return Err(Error::BudgetExceeded(format!(
                        "TSSM enumeration stopped after {} candidates",
                        opts.budget
                    )));
                }
                let w = Pattern::from_pairs(support.iter().cloned().cloned().zip(values.iter().copied()));
                match verdict(&w)? {
                    Verdict::No => {
                        let mut all_windows = true;
                        let mut definitive = true;
                        for g in &support {
                            let window = Pattern::from_pairs(w.entries.iter().filter_map(|(h, &s)| {
                                // h ∈ B_m·g  ⟺  h·g⁻¹ ∈ B_m
                                let rel = spec.mul(h, &spec.inv(g));
                                range_ball.contains(&rel).then(|| (h.clone(), s))
                            }));
                            match verdict(&window)? {
                                Verdict::Yes => {}
                                Verdict::No => {
                                    all_windows = false;
                                    break;
                                }
                                Verdict::UnknownAtPad => definitive = false,
                            }
                        }
                        if all_windows && definitive {
                            return Ok(TssmVerdict::ViolatedAt {
                                support: support.into_iter().cloned().collect(),
                                values,
                            });
                        }
                        if all_windows {
                            undecided += 1;
                        }
                    }
                    Verdict::UnknownAtPad => undecided += 1,
                    Verdict::Yes => {}
                }
                // next pattern in lexicographic order
                let mut i = size;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    values[i] += 1;
                    if (values[i] as usize) < a {
                        break;
                    }
                    values[i] = 0;
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX {
                    break;
                }
            }
            if !next_subset(&mut subset, ball.len()) {
                break;
            }
        }
    }
    Ok(TssmVerdict::HoldsUpToRadius { radius, k_max, undecided })
}

fn next_subset(s: &mut [usize], n: usize) -> bool {
    let k = s.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if s[i] < n - k + i {
            s[i] += 1;
            for j in i + 1..k {
                s[j] = s[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Cached admissibility of patterns on a fixed window ball, as used by the
/// derived configuration spaces.
#[derive(Debug)]
pub struct WindowOracle {
    structure: ConstraintStructure,
    spec: GroupSpec,
    ball: CayleyBall,
    adjacency: Vec<Vec<(usize, usize, bool)>>,
    /// Local admissibility already decides global admissibility.
    local_suffices: bool,
    pad: usize,
    cache: Mutex<HashMap<Vec<Option<Symbol>>, bool>>,
}

impl WindowOracle {
    pub fn new(structure: ConstraintStructure, spec: GroupSpec, ball: CayleyBall) -> Self {
        let local_suffices = detect_safe_symbol(&structure).is_some();
        let adjacency = ball.adjacency();
        WindowOracle {
            structure,
            spec,
            ball,
            adjacency,
            local_suffices,
            pad: 2,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn ball(&self) -> &CayleyBall {
        &self.ball
    }

    pub fn local_suffices(&self) -> bool {
        self.local_suffices
    }

    pub fn locally_admissible(&self, values: &[Option<Symbol>]) -> bool {
        self.ball.edges.iter().all(|e| match (values[e.from], values[e.to]) {
            (Some(a), Some(b)) => self.structure.allowed(e.gen, a, b),
            _ => true,
        })
    }

    /// Global admissibility of a partial pattern on the window. Undecided
    /// bounded searches count as admissible.
    pub fn admissible(&self, values: &[Option<Symbol>]) -> bool {
        if !self.locally_admissible(values) {
            return false;
        }
        if self.local_suffices {
            return true;
        }
        if let Some(&v) = self.cache.lock().expect("window cache").get(values) {
            return v;
        }
        let p = Pattern::from_ball(&self.ball, values);
        let v = !matches!(
            is_globally_admissible(&self.structure, &self.spec, &p, self.pad),
            Ok(Verdict::No)
        );
        self.cache.lock().expect("window cache").insert(values.to_vec(), v);
        v
    }

    pub fn adjacency(&self) -> &[Vec<(usize, usize, bool)>] {
        &self.adjacency
    }
}

fn tssm_certificate(space: &DerivedSpace) -> Result<()> {
    if space.safe_symbol().is_some() {
        return Ok(());
    }
    match check_tssm(space.structure(), space.sigma().spec(), 1, 3, 3)? {
        TssmVerdict::ViolatedAt { support, values } => Err(Error::NotTssm(format!(
            "pattern {:?} on {} is window-admissible but not globally admissible",
            values,
            support.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ")
        ))),
        _ => Ok(()),
    }
}

/// Greedy completion of a locally consistent partial configuration to a
/// point of `X^n`: vertices in ascending order, smallest symbol keeping
/// every pulled-back window admissible. With a safe symbol the free
/// vertices are filled with it.
pub fn extend_locally_consistent(space: &DerivedSpace, partial: &[Option<Symbol>]) -> Result<Configuration> {
    let n = space.n();
    if partial.len() != n {
        return Err(Error::InvalidArgument(format!("partial configuration has length {}, expected {n}", partial.len())));
    }
    tssm_certificate(space)?;
    if let Some(z) = space.safe_symbol() {
        let y = Configuration::new(partial.iter().map(|p| p.unwrap_or(z)).collect());
        if let Some(v) = first_violation(space, &y) {
            return Err(Error::NoConsistentColor { vertex: v });
        }
        return Ok(y);
    }
    // good vertices whose window contains each vertex
    let k = space.window_ball().len();
    let mut covering: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &u in space.good_vertices() {
        for &w in space.window(u) {
            if covering[w as usize].last() != Some(&u) {
                covering[w as usize].push(u);
            }
        }
    }
    let mut cur: Vec<Option<Symbol>> = partial.to_vec();
    let windows_ok = |cur: &[Option<Symbol>], v: usize| -> bool {
        covering[v].iter().all(|&u| {
            let vals: Vec<Option<Symbol>> = space.window(u).iter().map(|&w| cur[w as usize]).collect();
            debug_assert_eq!(vals.len(), k);
            space.oracle().admissible(&vals)
        })
    };
    let edges_ok = |cur: &[Option<Symbol>], v: usize, a: Symbol| -> bool {
        if space.enforcement() != Enforcement::AllEdges {
            return true;
        }
        (0..space.structure().rank()).all(|gen| {
            let fwd = space.sigma().perm(gen)[v] as usize;
            let back = space.sigma().apply_letter(crate::cayley::Letter::neg(gen), v);
            let f = if fwd == v { Some(a) } else { cur[fwd] };
            let b = if back == v { Some(a) } else { cur[back] };
            f.is_none_or(|f| space.structure().allowed(gen, a, f))
                && b.is_none_or(|b| space.structure().allowed(gen, b, a))
        })
    };
    for v in 0..n {
        if cur[v].is_some() {
            continue;
        }
        let mut placed = false;
        for a in 0..space.alphabet() as Symbol {
            if !edges_ok(&cur, v, a) {
                continue;
            }
            cur[v] = Some(a);
            if windows_ok(&cur, v) {
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::NoConsistentColor { vertex: v });
        }
    }
    let y = Configuration::new(cur.into_iter().map(|c| c.expect("assigned")).collect());
    if let Some(v) = first_violation(space, &y) {
        return Err(Error::NoConsistentColor { vertex: v });
    }
    Ok(y)
}

/// Smallest vertex involved in a violation of `X^n`, if any.
fn first_violation(space: &DerivedSpace, y: &Configuration) -> Option<usize> {
    let mut bad = violating_vertices(space, y);
    bad.sort_unstable();
    bad.first().copied()
}

/// Error set plus, under [`Enforcement::AllEdges`], both endpoints of
/// every violated edge.
fn violating_vertices(space: &DerivedSpace, x: &Configuration) -> Vec<usize> {
    let mut out = error_set(space, x);
    if space.enforcement() == Enforcement::AllEdges {
        for gen in 0..space.structure().rank() {
            let p = space.sigma().perm(gen);
            for v in 0..space.n() {
                let w = p[v] as usize;
                if !space.structure().allowed(gen, x.values[v], x.values[w]) {
                    out.push(v);
                    out.push(w);
                }
            }
        }
    }
    out
}

/// Vertices `σ^{B₂}(E(x))` that the correction may rewrite.
pub fn correction_region(space: &DerivedSpace, x: &Configuration) -> Vec<bool> {
    let mut region = vec![false; space.n()];
    for u in error_set(space, x) {
        for &w in space.window(u) {
            region[w as usize] = true;
        }
    }
    if space.enforcement() == Enforcement::AllEdges {
        for v in violating_vertices(space, x) {
            region[v] = true;
        }
    }
    region
}

/// A point of `X^n` agreeing with `x` outside [`correction_region`].
pub fn correct_errors(space: &DerivedSpace, x: &Configuration) -> Result<Configuration> {
    if x.len() != space.n() {
        return Err(Error::InvalidArgument("configuration length differs from n".into()));
    }
    let region = correction_region(space, x);
    let partial: Vec<Option<Symbol>> =
        x.values.iter().zip(&region).map(|(&a, &r)| if r { None } else { Some(a) }).collect();
    extend_locally_consistent(space, &partial)
}
