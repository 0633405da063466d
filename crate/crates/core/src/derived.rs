//! Derived configuration spaces `X^n`, derived energies and partition
//! functions `Z_n`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cayley::CayleyBall;
use crate::error::{Error, Result};
use crate::field::{log_add, log_sum_exp};
use crate::limits::Caps;
use crate::shift::{detect_safe_symbol, ConstraintStructure, Pattern, Potential, Symbol, WindowOracle};
use crate::sofic::{good_vertex_flags, Builder, SoficMap};
use crate::stream_rng;

/// Which edges of the sofic graph carry the hard constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enforcement {
    /// Windows `B₂` are checked at `B₂`-good vertices only; bad vertices
    /// are unconstrained.
    #[default]
    GoodWindows,
    /// Every edge `(v, σ^s v)` is constrained, in addition to the windows.
    /// On small cycles and tori, which have no `B₂`-good vertices, this is
    /// the ordinary graph model.
    AllEdges,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub values: Vec<Symbol>,
}

impl Configuration {
    pub fn new(values: Vec<Symbol>) -> Self {
        Configuration { values }
    }

    pub fn constant(n: usize, a: Symbol) -> Self {
        Configuration { values: vec![a; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    Exact,
    TransferCycle,
    Mcmc,
}

impl PartitionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionMethod::Exact => "exact",
            PartitionMethod::TransferCycle => "transfer",
            PartitionMethod::Mcmc => "mcmc",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McmcPoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Integrated autocorrelation time estimated from batch means, in sweeps.
    pub tau: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct McmcDiagnostics {
    pub points: Vec<McmcPoint>,
    pub t_min: f64,
    /// `H*_n` of the all-safe configuration, the `t → -∞` limit.
    pub base: f64,
    /// Bound on the neglected integral over `(-∞, t_min)`.
    pub tail_bound: f64,
    pub sweeps: usize,
    pub burn_in: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionResult {
    pub log_z: f64,
    pub method: PartitionMethod,
    pub stderr: f64,
    pub diagnostics: Option<McmcDiagnostics>,
}

#[derive(Clone, Copy, Debug)]
struct Incident {
    nbr: u32,
    gen: u16,
    /// The edge is `(v, σ^gen v)` rather than `(σ^{-gen} v, v)`.
    forward: bool,
    constrained: bool,
}

#[derive(Debug)]
pub struct DerivedSpace {
    sigma: SoficMap,
    structure: ConstraintStructure,
    potential: Potential,
    enforcement: Enforcement,
    oracle: WindowOracle,
    /// `n × |B₂|` window images.
    windows: Vec<u32>,
    good: Vec<bool>,
    good_list: Vec<usize>,
    /// `constrained[gen][v]` for the edge `(v, σ^gen v)`.
    constrained: Vec<Vec<bool>>,
    incident: Vec<Vec<Incident>>,
    safe: Option<Symbol>,
}

impl DerivedSpace {
    pub fn new(sigma: SoficMap, structure: ConstraintStructure, potential: Potential) -> Result<Self> {
        Self::with_enforcement(sigma, structure, potential, Enforcement::GoodWindows)
    }

    pub fn with_enforcement(
        sigma: SoficMap,
        structure: ConstraintStructure,
        potential: Potential,
        enforcement: Enforcement,
    ) -> Result<Self> {
        structure.check_group(sigma.spec())?;
        potential.check_structure(&structure)?;
        let ball = sigma.spec().ball(2)?;
        let windows = sigma.window_table(&ball);
        let good = good_vertex_flags(&sigma, &ball);
        let good_list: Vec<usize> = (0..sigma.n()).filter(|&v| good[v]).collect();
        let n = sigma.n();
        let rank = structure.rank();
        let k = ball.len();
        let constrained: Vec<Vec<bool>> = match enforcement {
            Enforcement::AllEdges => vec![vec![true; n]; rank],
            Enforcement::GoodWindows => {
                let mut c = vec![vec![false; n]; rank];
                for &u in &good_list {
                    let row = &windows[u * k..(u + 1) * k];
                    for e in &ball.edges {
                        c[e.gen][row[e.from] as usize] = true;
                    }
                }
                c
            }
        };
        let mut incident: Vec<Vec<Incident>> = vec![Vec::with_capacity(2 * rank); n];
        for gen in 0..rank {
            let p = sigma.perm(gen);
            for v in 0..n {
                let w = p[v] as usize;
                let c = constrained[gen][v];
                incident[v].push(Incident { nbr: w as u32, gen: gen as u16, forward: true, constrained: c });
                if w != v {
                    incident[w].push(Incident { nbr: v as u32, gen: gen as u16, forward: false, constrained: c });
                }
            }
        }
        let safe = detect_safe_symbol(&structure);
        let oracle = WindowOracle::new(structure.clone(), *sigma.spec(), ball);
        Ok(DerivedSpace {
            sigma,
            structure,
            potential,
            enforcement,
            oracle,
            windows,
            good,
            good_list,
            constrained,
            incident,
            safe,
        })
    }

    pub fn sigma(&self) -> &SoficMap {
        &self.sigma
    }

    pub fn structure(&self) -> &ConstraintStructure {
        &self.structure
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn enforcement(&self) -> Enforcement {
        self.enforcement
    }

    pub fn n(&self) -> usize {
        self.sigma.n()
    }

    pub fn alphabet(&self) -> usize {
        self.structure.alphabet()
    }

    pub fn safe_symbol(&self) -> Option<Symbol> {
        self.safe
    }

    /// The window ball `MM = B₂`.
    pub fn window_ball(&self) -> &CayleyBall {
        self.oracle.ball()
    }

    pub fn oracle(&self) -> &WindowOracle {
        &self.oracle
    }

    /// `B₂`-good vertices, ascending.
    pub fn good_vertices(&self) -> &[usize] {
        &self.good_list
    }

    pub fn is_good(&self, v: usize) -> bool {
        self.good[v]
    }

    /// `σ^g(u)` for `g` ranging over `B₂` in ball order.
    pub fn window(&self, u: usize) -> &[u32] {
        let k = self.window_ball().len();
        &self.windows[u * k..(u + 1) * k]
    }

    pub fn edge_constrained(&self, gen: usize, v: usize) -> bool {
        self.constrained[gen][v]
    }

    fn check_config(&self, x: &Configuration) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "configuration has length {}, expected {}",
                x.len(),
                self.n()
            )));
        }
        if let Some(&a) = x.values.iter().find(|&&a| a as usize >= self.alphabet()) {
            return Err(Error::InvalidArgument(format!("symbol {a} out of range")));
        }
        Ok(())
    }

    /// Whether the pulled-back `B₂`-window at the good vertex `u` is admissible.
    pub fn window_admissible(&self, x: &[Symbol], u: usize) -> bool {
        let vals: Vec<Option<Symbol>> = self.window(u).iter().map(|&w| Some(x[w as usize])).collect();
        self.oracle.admissible(&vals)
    }

    /// Allowed value of the symbol `a` at `v` with respect to the
    /// constrained edges, given the current neighbours in `x`.
    fn locally_allowed(&self, x: &[Symbol], v: usize, a: Symbol) -> bool {
        self.incident[v].iter().all(|e| {
            if !e.constrained {
                return true;
            }
            let b = if e.nbr as usize == v { a } else { x[e.nbr as usize] };
            if e.forward {
                self.structure.allowed(e.gen as usize, a, b)
            } else {
                self.structure.allowed(e.gen as usize, b, a)
            }
        })
    }

    /// `h(a) + Σ J` over the edges at `v` with `x(v)` replaced by `a`.
    fn local_energy(&self, x: &[Symbol], v: usize, a: Symbol) -> f64 {
        let mut s = self.potential.vertex[a as usize];
        for e in &self.incident[v] {
            let b = if e.nbr as usize == v { a } else { x[e.nbr as usize] };
            s += if e.forward {
                self.potential.edge_weight(e.gen as usize, a, b)
            } else {
                self.potential.edge_weight(e.gen as usize, b, a)
            };
        }
        s
    }
}

/// `Π_v^{σ,B_r}(x)`: the pattern `g ↦ x(σ^g v)` on `B_r`.
pub fn pullback(space: &DerivedSpace, x: &Configuration, v: usize, r: usize) -> Result<Pattern> {
    space.check_config(x)?;
    if v >= space.n() {
        return Err(Error::InvalidArgument(format!("vertex {v} out of range")));
    }
    let ball = space.sigma.spec().ball(r)?;
    Ok(Pattern::from_pairs(
        ball.elements.iter().map(|g| (g.clone(), x.values[space.sigma.sigma_word(g, v)])),
    ))
}

/// Good vertices whose pulled-back `B₂`-window is not admissible.
pub fn error_set(space: &DerivedSpace, x: &Configuration) -> Vec<usize> {
    space
        .good_list
        .iter()
        .copied()
        .filter(|&u| !space.window_admissible(&x.values, u))
        .collect()
}

pub fn is_in_xn(space: &DerivedSpace, x: &Configuration) -> bool {
    if space.check_config(x).is_err() {
        return false;
    }
    if space.enforcement == Enforcement::AllEdges {
        for gen in 0..space.structure.rank() {
            let p = space.sigma.perm(gen);
            for v in 0..space.n() {
                if !space.structure.allowed(gen, x.values[v], x.values[p[v] as usize]) {
                    return false;
                }
            }
        }
    }
    error_set(space, x).is_empty()
}

/// `H*_n(x) = Σ_v [h(x_v) + Σ_s J_s(x_v, x_{σ^s v})]`.
pub fn derived_energy(space: &DerivedSpace, x: &Configuration) -> f64 {
    let pot = &space.potential;
    let mut s: f64 = x.values.iter().map(|&a| pot.vertex[a as usize]).sum();
    for gen in 0..pot.rank() {
        let p = space.sigma.perm(gen);
        for v in 0..x.len() {
            s += pot.edge_weight(gen, x.values[v], x.values[p[v] as usize]);
        }
    }
    s
}

/// Depth-first enumeration of `X^n` in lexicographic order with
/// incremental energy and pruning on constrained edges.
pub(crate) struct Enumerator<'a> {
    space: &'a DerivedSpace,
    /// Edges `(u, w, gen, constrained)` whose later endpoint is `v`.
    edges_at: Vec<Vec<(usize, usize, usize, bool)>>,
    /// Good vertices whose window completes at `v` (non-local structures).
    windows_at: Vec<Vec<usize>>,
}

impl<'a> Enumerator<'a> {
    pub(crate) fn new(space: &'a DerivedSpace) -> Self {
        let n = space.n();
        let mut edges_at = vec![Vec::new(); n];
        for gen in 0..space.structure.rank() {
            let p = space.sigma.perm(gen);
            for u in 0..n {
                let w = p[u] as usize;
                edges_at[u.max(w)].push((u, w, gen, space.constrained[gen][u]));
            }
        }
        let mut windows_at = vec![Vec::new(); n];
        if !space.oracle.local_suffices() {
            for &u in &space.good_list {
                let last = space.window(u).iter().copied().max().expect("nonempty window") as usize;
                windows_at[last].push(u);
            }
        }
        Enumerator { space, edges_at, windows_at }
    }

    /// Energy increment of assigning `x[v]`, or `None` if a check fails.
    fn step(&self, x: &[Symbol], v: usize) -> Option<f64> {
        let s = self.space;
        let mut e = s.potential.vertex[x[v] as usize];
        for &(u, w, gen, c) in &self.edges_at[v] {
            if c && !s.structure.allowed(gen, x[u], x[w]) {
                return None;
            }
            e += s.potential.edge_weight(gen, x[u], x[w]);
        }
        for &u in &self.windows_at[v] {
            if !s.window_admissible(x, u) {
                return None;
            }
        }
        Some(e)
    }

    pub(crate) fn visit(&self, x: &mut Vec<Symbol>, depth: usize, energy: f64, f: &mut impl FnMut(&[Symbol], f64)) {
        if depth == x.len() {
            f(x, energy);
            return;
        }
        for a in 0..self.space.alphabet() as Symbol {
            x[depth] = a;
            if let Some(de) = self.step(x, depth) {
                self.visit(x, depth + 1, energy + de, f);
            }
        }
    }

    /// Valid prefixes of length `depth` with their partial energies.
    fn prefixes(&self, depth: usize) -> Vec<(Vec<Symbol>, f64)> {
        let n = self.space.n();
        let mut out = Vec::new();
        let mut x = vec![0; n];
        fn go(
            en: &Enumerator<'_>,
            x: &mut Vec<Symbol>,
            k: usize,
            depth: usize,
            energy: f64,
            out: &mut Vec<(Vec<Symbol>, f64)>,
        ) {
            if k == depth {
                out.push((x[..depth].to_vec(), energy));
                return;
            }
            for a in 0..en.space.alphabet() as Symbol {
                x[k] = a;
                if let Some(de) = en.step(x, k) {
                    go(en, x, k + 1, depth, energy + de, out);
                }
            }
        }
        go(self, &mut x, 0, depth, 0.0, &mut out);
        out
    }
}

pub fn partition_exact(space: &DerivedSpace) -> Result<PartitionResult> {
    partition_exact_with(space, &Caps::from_env()?)
}

pub fn partition_exact_with(space: &DerivedSpace, caps: &Caps) -> Result<PartitionResult> {
    Caps::check_states("exact partition function", space.alphabet(), space.n(), caps.exact_bits)?;
    let en = Enumerator::new(space);
    let n = space.n();
    let a = space.alphabet();
    let mut depth = 0;
    while depth < n && a.pow(depth as u32) < 256 {
        depth += 1;
    }
    let prefixes = en.prefixes(depth);
    let parts: Vec<f64> = prefixes
        .par_iter()
        .map(|(p, e0)| {
            let mut x = vec![0; n];
            x[..depth].copy_from_slice(p);
            let mut acc = f64::NEG_INFINITY;
            en.visit(&mut x, depth, *e0, &mut |_, e| acc = log_add(acc, e));
            acc
        })
        .collect();
    let log_z = log_sum_exp(&parts);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::EmptyFiber);
    }
    Ok(PartitionResult { log_z, method: PartitionMethod::Exact, stderr: 0.0, diagnostics: None })
}

/// `(log Z_n, E_{μ_n}[H*_n])` by exact enumeration.
pub fn exact_moments(space: &DerivedSpace, caps: &Caps) -> Result<(f64, f64)> {
    Caps::check_states("exact enumeration", space.alphabet(), space.n(), caps.exact_bits)?;
    let en = Enumerator::new(space);
    let n = space.n();
    let a = space.alphabet();
    let mut depth = 0;
    while depth < n && a.pow(depth as u32) < 256 {
        depth += 1;
    }
    // per prefix: (max energy, Σ e^{H - max}, Σ H e^{H - max})
    let parts: Vec<(f64, f64, f64)> = en
        .prefixes(depth)
        .par_iter()
        .map(|(p, e0)| {
            let mut x = vec![0; n];
            x[..depth].copy_from_slice(p);
            let mut m = f64::NEG_INFINITY;
            let (mut s, mut w) = (0.0, 0.0);
            en.visit(&mut x, depth, *e0, &mut |_, e| {
                if e > m {
                    let r = (m - e).exp();
                    s *= r;
                    w *= r;
                    m = e;
                }
                let q = (e - m).exp();
                s += q;
                w += e * q;
            });
            (m, s, w)
        })
        .collect();
    let m = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::EmptyFiber);
    }
    let (mut s, mut w) = (0.0, 0.0);
    for &(pm, ps, pw) in &parts {
        if pm > f64::NEG_INFINITY {
            let r = (pm - m).exp();
            s += ps * r;
            w += pw * r;
        }
    }
    Ok((m + s.ln(), w / s))
}

/// `E_{μ_n}[H*_n]` on a rank-one space from pair marginals along each
/// cycle, using prefix and suffix products of the edge matrices.
pub fn expected_energy_transfer(space: &DerivedSpace) -> Result<f64> {
    transfer_applicable(space)?;
    let t = transfer_matrix(&space.structure, &space.potential, true);
    let u = transfer_matrix(&space.structure, &space.potential, false);
    let a = space.alphabet();
    let p = space.sigma.perm(0);
    let n = space.n();
    let id: Vec<Vec<f64>> = (0..a).map(|i| (0..a).map(|j| (i == j) as u8 as f64).collect()).collect();
    let local: Vec<Vec<f64>> = (0..a)
        .map(|x| {
            (0..a)
                .map(|y| space.potential.vertex[y] + space.potential.edge_weight(0, x as Symbol, y as Symbol))
                .collect()
        })
        .collect();
    let mut seen = vec![false; n];
    let mut total = 0.0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = vec![start];
        seen[start] = true;
        let mut v = p[start] as usize;
        while v != start {
            seen[v] = true;
            cycle.push(v);
            v = p[v] as usize;
        }
        let mats: Vec<&Vec<Vec<f64>>> =
            cycle.iter().map(|&v| if space.constrained[0][v] { &t } else { &u }).collect();
        let len = cycle.len();
        // prefix[i] = M_0 … M_{i-1}, suffix[i] = M_{i+1} … M_{len-1}
        let mut prefix = vec![id.clone()];
        for m in &mats {
            let mut next = mat_mul(prefix.last().expect("prefix"), m);
            normalize(&mut next);
            prefix.push(next);
        }
        let mut suffix = vec![id.clone(); len];
        for i in (0..len.saturating_sub(1)).rev() {
            let mut next = mat_mul(mats[i + 1], &suffix[i + 1]);
            normalize(&mut next);
            suffix[i] = next;
        }
        for i in 0..len {
            let rest = mat_mul(&suffix[i], &prefix[i]);
            let mut z = 0.0;
            let mut e = 0.0;
            for x in 0..a {
                for y in 0..a {
                    let w = mats[i][x][y] * rest[y][x];
                    if w > 0.0 {
                        z += w;
                        e += w * local[x][y];
                    }
                }
            }
            if !(z > 0.0) {
                return Err(Error::EmptyFiber);
            }
            total += e / z;
        }
    }
    Ok(total)
}

/// Whether window admissibility on a rank-one space reduces to the edge
/// constraints, so that cycle transfer matrices are exact.
pub(crate) fn transfer_applicable(space: &DerivedSpace) -> Result<()> {
    if space.structure.rank() != 1 {
        return Err(Error::InvalidArgument("transfer matrices need a single generator".into()));
    }
    if space.oracle.local_suffices() {
        return Ok(());
    }
    // every symbol must admit bi-infinite walks, otherwise interval windows
    // carry more information than their edges
    let s = &space.structure;
    let a = s.alphabet();
    let mut alive = vec![true; a];
    for _ in 0..=a {
        alive = (0..a)
            .map(|x| {
                alive[x]
                    && (0..a).any(|y| alive[y] && s.allowed(0, x as Symbol, y as Symbol))
                    && (0..a).any(|y| alive[y] && s.allowed(0, y as Symbol, x as Symbol))
            })
            .collect();
    }
    if alive.iter().all(|&b| b) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("transfer matrices need an essential constraint graph".into()))
    }
}

/// `T[a][b] = 1[(a,b) allowed]·exp(h(b) + J(a,b))`; with
/// `constrained = false` the indicator is dropped.
pub fn transfer_matrix(structure: &ConstraintStructure, potential: &Potential, constrained: bool) -> Vec<Vec<f64>> {
    let a = structure.alphabet();
    (0..a)
        .map(|x| {
            (0..a)
                .map(|y| {
                    if constrained && !structure.allowed(0, x as Symbol, y as Symbol) {
                        0.0
                    } else {
                        (potential.vertex[y] + potential.edge_weight(0, x as Symbol, y as Symbol)).exp()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..b.len() {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// Rescales `m` to unit max entry, returning the log of the factor removed.
fn normalize(m: &mut [Vec<f64>]) -> f64 {
    let s = m.iter().flatten().cloned().fold(0.0f64, f64::max);
    if s == 0.0 {
        return f64::NEG_INFINITY;
    }
    for row in m.iter_mut() {
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    s.ln()
}

/// `log Z` via the cycle decomposition of `σ^{e₁}`: each cycle contributes
/// the log-trace of its ordered product of edge matrices.
pub fn partition_transfer_cycle(space: &DerivedSpace) -> Result<PartitionResult> {
    transfer_applicable(space)?;
    let t = transfer_matrix(&space.structure, &space.potential, true);
    let u = transfer_matrix(&space.structure, &space.potential, false);
    let p = space.sigma.perm(0);
    let n = space.n();
    let a = space.alphabet();
    let mut seen = vec![false; n];
    let mut log_z = 0.0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut acc: Vec<Vec<f64>> = (0..a).map(|i| (0..a).map(|j| (i == j) as u8 as f64).collect()).collect();
        let mut log_scale = 0.0;
        let mut v = start;
        loop {
            seen[v] = true;
            let m = if space.constrained[0][v] { &t } else { &u };
            acc = mat_mul(&acc, m);
            log_scale += normalize(&mut acc);
            v = p[v] as usize;
            if v == start {
                break;
            }
        }
        let tr: f64 = (0..a).map(|i| acc[i][i]).sum();
        log_z += log_scale + tr.ln();
    }
    if !log_z.is_finite() {
        return Err(Error::EmptyFiber);
    }
    Ok(PartitionResult { log_z, method: PartitionMethod::TransferCycle, stderr: 0.0, diagnostics: None })
}

/// Single-site heat-bath dynamics for the tilted measure
/// `∝ exp(H*_n(x) + t·N_ns(x))` on `X^n`, where `N_ns` counts non-safe symbols.
pub struct Glauber<'a> {
    space: &'a DerivedSpace,
    x: Vec<Symbol>,
    rng: ChaCha8Rng,
    t: f64,
    safe: Symbol,
    non_safe: usize,
    weights: Vec<f64>,
}

impl<'a> Glauber<'a> {
    /// Starts from the all-safe configuration.
    pub fn new(space: &'a DerivedSpace, t: f64, rng: ChaCha8Rng) -> Result<Self> {
        let safe = space.safe.ok_or(Error::NoSafeSymbol)?;
        Ok(Glauber {
            space,
            x: vec![safe; space.n()],
            rng,
            t,
            safe,
            non_safe: 0,
            weights: vec![0.0; space.alphabet()],
        })
    }

    pub fn state(&self) -> &[Symbol] {
        &self.x
    }

    pub fn non_safe(&self) -> usize {
        self.non_safe
    }

    pub fn update(&mut self, v: usize) {
        let s = self.space;
        let mut max = f64::NEG_INFINITY;
        for a in 0..s.alphabet() {
            let sym = a as Symbol;
            self.weights[a] = if s.locally_allowed(&self.x, v, sym) {
                s.local_energy(&self.x, v, sym) + if sym != self.safe { self.t } else { 0.0 }
            } else {
                f64::NEG_INFINITY
            };
            max = max.max(self.weights[a]);
        }
        let mut total = 0.0;
        for w in self.weights.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        let mut r = self.rng.gen::<f64>() * total;
        let mut pick = self.safe;
        for (a, w) in self.weights.iter().enumerate() {
            if *w > 0.0 {
                pick = a as Symbol;
                if r < *w {
                    break;
                }
                r -= *w;
            }
        }
        let old = self.x[v];
        if (old != self.safe) != (pick != self.safe) {
            if pick != self.safe {
                self.non_safe += 1;
            } else {
                self.non_safe -= 1;
            }
        }
        self.x[v] = pick;
    }

    /// One sequential sweep `v = 0..n`.
    pub fn sweep(&mut self) {
        for v in 0..self.x.len() {
            self.update(v);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcOptions {
    /// Number of Simpson intervals (even) on the uniform `t` grid.
    pub intervals: usize,
    pub t_min: f64,
    pub sweeps: usize,
    /// Fraction of sweeps discarded as burn-in.
    pub burn_in: f64,
    pub seed: u64,
}

impl Default for McmcOptions {
    fn default() -> Self {
        McmcOptions { intervals: 64, t_min: (1e-6f64).ln(), sweeps: 4000, burn_in: 0.2, seed: 0 }
    }
}

/// Mean, batch-means standard error and integrated autocorrelation time.
pub fn batch_stats(xs: &[f64]) -> (f64, f64, f64) {
    let k = xs.len();
    let mean = xs.iter().sum::<f64>() / k as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k.max(2) - 1) as f64;
    let batches = 20.min(k);
    let size = k / batches;
    if size < 2 || var == 0.0 {
        return (mean, (var / k as f64).sqrt(), 1.0);
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let bvar = means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    let tau = (bvar * size as f64 / var).max(1.0);
    (mean, (bvar / batches as f64).sqrt(), tau)
}

pub fn partition_mcmc(space: &DerivedSpace, opts: &McmcOptions) -> Result<PartitionResult> {
    let safe = space.safe.ok_or(Error::NoSafeSymbol)?;
    if opts.intervals < 2 || opts.intervals % 2 == 1 {
        return Err(Error::InvalidArgument("Simpson integration needs an even number of intervals".into()));
    }
    if !(opts.t_min < 0.0) || !(0.0..1.0).contains(&opts.burn_in) || opts.sweeps < 20 {
        return Err(Error::InvalidArgument("need t_min < 0, burn_in in [0,1) and at least 20 sweeps".into()));
    }
    let n = space.n();
    let base = derived_energy(space, &Configuration::constant(n, safe));
    let h = -opts.t_min / opts.intervals as f64;
    let burn = (opts.sweeps as f64 * opts.burn_in) as usize;
    let points: Vec<Result<McmcPoint>> = (0..=opts.intervals)
        .into_par_iter()
        .map(|i| {
            let t = opts.t_min + i as f64 * h;
            let mut g = Glauber::new(space, t, stream_rng(opts.seed, i as u64))?;
            let mut series = Vec::with_capacity(opts.sweeps - burn);
            for s in 0..opts.sweeps {
                g.sweep();
                if s >= burn {
                    series.push(g.non_safe() as f64);
                }
            }
            let (mean, stderr, tau) = batch_stats(&series);
            if tau > series.len() as f64 / 20.0 {
                return Err(Error::NonConvergence(format!(
                    "autocorrelation time {tau:.1} sweeps at t = {t:.3} exceeds 1/20 of the {} kept sweeps",
                    series.len()
                )));
            }
            Ok(McmcPoint { t, mean, stderr, tau })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let mut integral = 0.0;
    let mut var = 0.0;
    for (i, p) in points.iter().enumerate() {
        let w = if i == 0 || i == opts.intervals {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
        integral += w * p.mean;
        var += (w * p.stderr).powi(2);
    }
    let a = space.alphabet() as f64;
    let tail_bound = n as f64 * a * opts.t_min.exp() * (2.0 * space.potential.norm()).exp();
    Ok(PartitionResult {
        log_z: base + integral,
        method: PartitionMethod::Mcmc,
        stderr: var.sqrt(),
        diagnostics: Some(McmcDiagnostics {
            points,
            t_min: opts.t_min,
            base,
            tail_bound,
            sweeps: opts.sweeps,
            burn_in: burn,
        }),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    #[default]
    Auto,
    Exact,
    Transfer,
    Mcmc,
}

impl std::str::FromStr for MethodChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(MethodChoice::Auto),
            "exact" => Ok(MethodChoice::Exact),
            "transfer" => Ok(MethodChoice::Transfer),
            "mcmc" => Ok(MethodChoice::Mcmc),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

/// Runs the requested method, resolving `Auto` to transfer matrices on
/// rank-one spaces, exact enumeration within the caps, and MCMC otherwise.
pub fn partition(space: &DerivedSpace, method: MethodChoice, mcmc: &McmcOptions, caps: &Caps) -> Result<PartitionResult> {
    match method {
        MethodChoice::Exact => partition_exact_with(space, caps),
        MethodChoice::Transfer => partition_transfer_cycle(space),
        MethodChoice::Mcmc => partition_mcmc(space, mcmc),
        MethodChoice::Auto => {
            if transfer_applicable(space).is_ok() {
                partition_transfer_cycle(space)
            } else if Caps::check_states("", space.alphabet(), space.n(), caps.exact_bits).is_ok() {
                partition_exact_with(space, caps)
            } else {
                partition_mcmc(space, mcmc)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PressurePoint {
    pub size: usize,
    pub n: usize,
    pub log_z: f64,
    pub pressure: f64,
    pub stderr: f64,
    pub method: PartitionMethod,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default)]
pub struct PressureOptions {
    pub method: MethodChoice,
    pub enforcement: Enforcement,
    pub mcmc: McmcOptions,
    pub caps: Caps,
}

/// `(n, log Z_n / n)` along the builder's sizes.
pub fn pressure_estimate(
    structure: &ConstraintStructure,
    potential: &Potential,
    builder: &Builder,
    sizes: &[usize],
    opts: &PressureOptions,
) -> Result<Vec<PressurePoint>> {
    sizes
        .iter()
        .map(|&size| {
            let sigma = builder.build_with_cap(size, opts.caps.vertices)?;
            let space =
                DerivedSpace::with_enforcement(sigma, structure.clone(), potential.clone(), opts.enforcement)?;
            let r = partition(&space, opts.method, &opts.mcmc, &opts.caps)?;
            let seed = match r.method {
                PartitionMethod::Mcmc => Some(opts.mcmc.seed),
                _ => builder.seed(),
            };
            Ok(PressurePoint {
                size,
                n: space.n(),
                log_z: r.log_z,
                pressure: r.log_z / space.n() as f64,
                stderr: r.stderr / space.n() as f64,
                method: r.method,
                seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::GroupElement;
    use crate::sofic::{build_random_perm, build_torus};

    fn hardcore_space(d: usize, m: usize, lambda: f64, e: Enforcement) -> DerivedSpace {
        DerivedSpace::with_enforcement(
            build_torus(d, m).unwrap(),
            ConstraintStructure::hardcore(d),
            Potential::hardcore(lambda, d),
            e,
        )
        .unwrap()
    }

    #[test]
    fn pullback_reads_windows() {
        let s = hardcore_space(1, 8, 1.0, Enforcement::GoodWindows);
        let x = Configuration::new(vec![0, 1, 0, 1, 0, 1, 0, 1]);
        let p = pullback(&s, &x, 0, 1).unwrap();
        assert_eq!(p.get(&GroupElement::Vector(vec![-1])), Some(1));
        assert_eq!(p.get(&GroupElement::Vector(vec![0])), Some(0));
        assert_eq!(p.get(&GroupElement::Vector(vec![1])), Some(1));
        assert_eq!(pullback(&s, &x, 3, 0).unwrap().len(), 1);
        let f = DerivedSpace::new(
            build_random_perm(2, 2000, 3).unwrap(),
            ConstraintStructure::hardcore(2),
            Potential::hardcore(1.0, 2),
        )
        .unwrap();
        let v = f.good_vertices()[0];
        let x = Configuration::constant(2000, 0);
        assert_eq!(pullback(&f, &x, v, 1).unwrap().len(), 5);
    }

    #[test]
    fn membership() {
        let s = hardcore_space(1, 8, 1.0, Enforcement::GoodWindows);
        assert!(is_in_xn(&s, &Configuration::constant(8, 0)));
        assert!(!is_in_xn(&s, &Configuration::constant(8, 1)));
        assert!(is_in_xn(&s, &Configuration::new(vec![0, 1, 0, 1, 0, 1, 0, 1])));
        let x = Configuration::new(vec![1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(error_set(&s, &x), vec![0, 1, 2, 7]);
        assert_eq!(error_set(&s, &Configuration::constant(8, 1)).len(), 8);
    }

    #[test]
    fn energies() {
        let s = hardcore_space(1, 8, 2.0, Enforcement::GoodWindows);
        assert_eq!(derived_energy(&s, &Configuration::constant(8, 0)), 0.0);
        let x = Configuration::new(vec![1, 0, 1, 0, 1, 0, 0, 0]);
        assert!((derived_energy(&s, &x) - 3.0 * 2f64.ln()).abs() < 1e-12);
        let beta = 0.3;
        let c4 = DerivedSpace::new(
            build_torus(1, 4).unwrap(),
            ConstraintStructure::full_shift(2, 1),
            Potential::ising_like(2, 1, beta),
        )
        .unwrap();
        assert!((derived_energy(&c4, &Configuration::constant(4, 0)) - 4.0 * beta).abs() < 1e-12);
    }

    #[test]
    fn exact_partition_functions() {
        let c4 = hardcore_space(1, 4, 1.0, Enforcement::AllEdges);
        assert!((partition_exact(&c4).unwrap().log_z - 7f64.ln()).abs() < 1e-12);
        let c5 = hardcore_space(1, 5, 1.0, Enforcement::GoodWindows);
        assert!((partition_exact(&c5).unwrap().log_z - 11f64.ln()).abs() < 1e-12);
        let full = DerivedSpace::new(
            build_torus(1, 10).unwrap(),
            ConstraintStructure::full_shift(2, 1),
            Potential::zero(2, 1),
        )
        .unwrap();
        assert!((partition_exact(&full).unwrap().log_z - 1024f64.ln()).abs() < 1e-12);
        // the good-window space of C₄ has no good vertex and is unconstrained
        let free = hardcore_space(1, 4, 1.0, Enforcement::GoodWindows);
        assert!(free.good_vertices().is_empty());
        assert!((partition_exact(&free).unwrap().log_z - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn transfer_agrees_with_enumeration() {
        for m in 2..=16 {
            let e = if m < 5 { Enforcement::AllEdges } else { Enforcement::GoodWindows };
            let s = hardcore_space(1, m, 1.7, e);
            let a = partition_exact(&s).unwrap().log_z;
            let b = partition_transfer_cycle(&s).unwrap().log_z;
            assert!((a - b).abs() < 1e-9, "m={m}: {a} vs {b}");
        }
        let free = hardcore_space(1, 4, 1.0, Enforcement::GoodWindows);
        assert!((partition_transfer_cycle(&free).unwrap().log_z - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn transfer_pressures() {
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        let s = hardcore_space(1, 64, 1.0, Enforcement::GoodWindows);
        assert!((partition_transfer_cycle(&s).unwrap().log_z / 64.0 - golden).abs() < 1e-6);
        let s = hardcore_space(1, 64, 2.0, Enforcement::GoodWindows);
        assert!((partition_transfer_cycle(&s).unwrap().log_z / 64.0 - 2f64.ln()).abs() < 1e-6);
        let s = hardcore_space(2, 4, 1.0, Enforcement::GoodWindows);
        assert!(partition_transfer_cycle(&s).is_err());
    }

    #[test]
    fn checkerboard_transfer_is_exact() {
        let s = DerivedSpace::new(
            build_torus(1, 8).unwrap(),
            ConstraintStructure::checkerboard(1),
            Potential::zero(2, 1),
        )
        .unwrap();
        assert!((partition_exact(&s).unwrap().log_z - 2f64.ln()).abs() < 1e-12);
        assert!((partition_transfer_cycle(&s).unwrap().log_z - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mcmc_on_c4() {
        let s = hardcore_space(1, 4, 1.0, Enforcement::AllEdges);
        let r = partition_mcmc(&s, &McmcOptions { seed: 5, ..Default::default() }).unwrap();
        assert!((r.log_z - 7f64.ln()).abs() < 0.02, "{r:?}");
        assert!(r.stderr > 0.0);
        let again = partition_mcmc(&s, &McmcOptions { seed: 5, ..Default::default() }).unwrap();
        assert_eq!(r.log_z, again.log_z);
    }

    #[test]
    fn mcmc_needs_safe_symbol() {
        let s = DerivedSpace::new(
            build_torus(1, 8).unwrap(),
            ConstraintStructure::checkerboard(1),
            Potential::zero(2, 1),
        )
        .unwrap();
        assert!(matches!(partition_mcmc(&s, &McmcOptions::default()), Err(Error::NoSafeSymbol)));
    }

    #[test]
    fn full_shift_pressure_is_log_a() {
        let pts = pressure_estimate(
            &ConstraintStructure::full_shift(3, 1),
            &Potential::zero(3, 1),
            &Builder::Torus { d: 1 },
            &[4, 9],
            &PressureOptions::default(),
        )
        .unwrap();
        for p in pts {
            assert!((p.pressure - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let s = hardcore_space(1, 30, 1.0, Enforcement::GoodWindows);
        assert!(matches!(partition_exact(&s), Err(Error::CapExceeded { .. })));
    }
}
