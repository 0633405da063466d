//! Specifications, derived Gibbs measures, entropy, empirical
//! distributions, local weak* diagnostics and spatial-mixing estimates.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::cayley::{CayleyBall, GroupSpec};
use crate::chain::StationaryChain;
use crate::derived::{
    exact_moments, expected_energy_transfer, partition, partition_transfer_cycle, transfer_applicable,
    transfer_matrix, batch_stats, mat_mul, Configuration, DerivedSpace, Enforcement, Enumerator, Glauber,
    McmcOptions, MethodChoice, PartitionMethod,
};
use crate::error::{Error, Result};
use crate::field::{log_sum_exp, LocalField};
use crate::limits::Caps;
use crate::shift::{ConstraintStructure, Pattern, Potential, Symbol};
use crate::sofic::{Builder, SoficMap};
use crate::stream_rng;

/// A probability table on patterns over `B_r`, keyed by values in ball order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallDistribution {
    pub radius: usize,
    pub table: BTreeMap<Vec<Symbol>, f64>,
}

impl BallDistribution {
    pub fn prob(&self, w: &[Symbol]) -> f64 {
        self.table.get(w).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.table.values().sum()
    }

    pub fn total_variation(&self, other: &BallDistribution) -> f64 {
        let mut s = 0.0;
        for (k, p) in &self.table {
            s += (p - other.prob(k)).abs();
        }
        for (k, q) in &other.table {
            if !self.table.contains_key(k) {
                s += q.abs();
            }
        }
        0.5 * s
    }

    /// Distribution of the symbol at the identity (index 0 in ball order).
    pub fn center_marginal(&self, alphabet: usize) -> Vec<f64> {
        let mut p = vec![0.0; alphabet];
        for (k, q) in &self.table {
            p[k[0] as usize] += q;
        }
        p
    }

    fn from_weights(radius: usize, weights: Vec<(Vec<Symbol>, f64)>) -> Result<Self> {
        let logs: Vec<f64> = weights.iter().map(|w| w.1).collect();
        let z = log_sum_exp(&logs);
        if z == f64::NEG_INFINITY {
            return Err(Error::EmptyFiber);
        }
        let mut table = BTreeMap::new();
        for (k, l) in weights {
            *table.entry(k).or_insert(0.0) += (l - z).exp();
        }
        Ok(BallDistribution { radius, table })
    }
}

/// `γ_{B_r}(· | y)` for a boundary `y` on the sphere of radius `r + 1`.
pub fn specification_ball(
    structure: &ConstraintStructure,
    potential: &Potential,
    spec: &GroupSpec,
    r: usize,
    boundary: &Pattern,
) -> Result<BallDistribution> {
    structure.check_group(spec)?;
    potential.check_structure(structure)?;
    let caps = Caps::from_env()?;
    let ball = spec.ball_with_cap(r + 1, caps.ball)?;
    let inner = ball.prefix_len(r);
    Caps::check_states("specification table", structure.alphabet(), inner, caps.gibbs_bits)?;
    let pins = boundary
        .on_ball(&ball)
        .ok_or_else(|| Error::InvalidArgument("boundary leaves the sphere of radius r+1".into()))?;
    if pins.iter().enumerate().any(|(i, p)| (i < inner) == p.is_some()) {
        return Err(Error::InvalidArgument("boundary must cover exactly the sphere of radius r+1".into()));
    }
    let weights = enumerate_interior(&ball, inner, &pins, structure, potential);
    BallDistribution::from_weights(r, weights)
}

/// All admissible fillings of the first `inner` sites of `ball` with their
/// log-weights, given values on the remaining sites.
fn enumerate_interior(
    ball: &CayleyBall,
    inner: usize,
    pins: &[Option<Symbol>],
    structure: &ConstraintStructure,
    potential: &Potential,
) -> Vec<(Vec<Symbol>, f64)> {
    let adj = ball.adjacency();
    let a = structure.alphabet();
    let mut out = Vec::new();
    let mut x: Vec<Symbol> = pins.iter().map(|p| p.unwrap_or(0)).collect();
    fn go(
        i: usize,
        inner: usize,
        x: &mut Vec<Symbol>,
        energy: f64,
        adj: &[Vec<(usize, usize, bool)>],
        a: usize,
        structure: &ConstraintStructure,
        potential: &Potential,
        out: &mut Vec<(Vec<Symbol>, f64)>,
    ) {
        if i == inner {
            out.push((x[..inner].to_vec(), energy));
            return;
        }
        'sym: for s in 0..a as Symbol {
            let mut e = potential.vertex[s as usize];
            for &(j, gen, forward) in &adj[i] {
                // boundary sites and earlier interior sites are fixed
                if j < i || j >= inner {
                    let (u, w) = if forward { (s, x[j]) } else { (x[j], s) };
                    if !structure.allowed(gen, u, w) {
                        continue 'sym;
                    }
                    e += potential.edge_weight(gen, u, w);
                }
            }
            x[i] = s;
            go(i + 1, inner, x, energy + e, adj, a, structure, potential, out);
        }
    }
    go(0, inner, &mut x, 0.0, &adj, a, structure, potential, &mut out);
    out
}

/// The full table of `μ_n`.
#[derive(Debug)]
pub struct ExactGibbs<'a> {
    space: &'a DerivedSpace,
    pub configs: Vec<Vec<Symbol>>,
    pub energies: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_z: f64,
}

pub fn derived_gibbs_exact(space: &DerivedSpace) -> Result<ExactGibbs<'_>> {
    let caps = Caps::from_env()?;
    Caps::check_states("derived Gibbs table", space.alphabet(), space.n(), caps.gibbs_bits)?;
    let en = Enumerator::new(space);
    let mut configs = Vec::new();
    let mut energies = Vec::new();
    let mut x = vec![0; space.n()];
    en.visit(&mut x, 0, 0.0, &mut |c, e| {
        configs.push(c.to_vec());
        energies.push(e);
    });
    let log_z = log_sum_exp(&energies);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::EmptyFiber);
    }
    let probs = energies.iter().map(|e| (e - log_z).exp()).collect();
    Ok(ExactGibbs { space, configs, energies, probs, log_z })
}

impl<'a> ExactGibbs<'a> {
    pub fn space(&self) -> &DerivedSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn probability(&self, x: &Configuration) -> f64 {
        self.configs.iter().position(|c| *c == x.values).map_or(0.0, |i| self.probs[i])
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
    }

    pub fn expected_energy(&self) -> f64 {
        self.probs.iter().zip(&self.energies).map(|(p, e)| p * e).sum()
    }

    /// Law of `Π_v^{σ,B_r}` under `μ_n`.
    pub fn pushforward(&self, v: usize, r: usize) -> Result<BallDistribution> {
        let ball = self.space.sigma().spec().ball(r)?;
        let sites = self.space.sigma().window(&ball, v);
        let mut table = BTreeMap::new();
        for (c, p) in self.configs.iter().zip(&self.probs) {
            let key: Vec<Symbol> = sites.iter().map(|&w| c[w]).collect();
            *table.entry(key).or_insert(0.0) += p;
        }
        Ok(BallDistribution { radius: r, table })
    }
}

pub fn shannon_entropy_exact(space: &DerivedSpace) -> Result<f64> {
    let caps = Caps::from_env()?;
    let (log_z, e) = exact_moments(space, &caps)?;
    Ok(log_z - e)
}

/// A configuration after `sweeps` heat-bath sweeps started from the
/// all-safe configuration.
pub fn sample_derived_gibbs(space: &DerivedSpace, sweeps: usize, seed: u64) -> Result<Configuration> {
    let mut g = Glauber::new(space, 0.0, stream_rng(seed, 0))?;
    for _ in 0..sweeps {
        g.sweep();
    }
    Ok(Configuration::new(g.state().to_vec()))
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyPoint {
    pub size: usize,
    pub n: usize,
    pub entropy_rate: f64,
    pub stderr: f64,
    pub method: PartitionMethod,
}

#[derive(Clone, Debug, Default)]
pub struct EntropyOptions {
    pub method: MethodChoice,
    pub enforcement: Enforcement,
    pub mcmc: McmcOptions,
    pub caps: Caps,
}

/// `H(μ_n)/n = (log Z_n − E_{μ_n}[H*_n]) / n` along the builder's sizes.
pub fn entropy_rate_estimate(
    structure: &ConstraintStructure,
    potential: &Potential,
    builder: &Builder,
    sizes: &[usize],
    opts: &EntropyOptions,
) -> Result<Vec<EntropyPoint>> {
    sizes
        .iter()
        .map(|&size| {
            let sigma = builder.build_with_cap(size, opts.caps.vertices)?;
            let space =
                DerivedSpace::with_enforcement(sigma, structure.clone(), potential.clone(), opts.enforcement)?;
            let n = space.n() as f64;
            let fits = Caps::check_states("", space.alphabet(), space.n(), opts.caps.exact_bits).is_ok();
            let method = match opts.method {
                MethodChoice::Auto if transfer_applicable(&space).is_ok() => MethodChoice::Transfer,
                MethodChoice::Auto if fits => MethodChoice::Exact,
                MethodChoice::Auto => MethodChoice::Mcmc,
                m => m,
            };
            let (h, se, m) = match method {
                MethodChoice::Exact => {
                    let (z, e) = exact_moments(&space, &opts.caps)?;
                    (z - e, 0.0, PartitionMethod::Exact)
                }
                MethodChoice::Transfer => {
                    let z = partition_transfer_cycle(&space)?.log_z;
                    (z - expected_energy_transfer(&space)?, 0.0, PartitionMethod::TransferCycle)
                }
                _ => {
                    let z = partition(&space, MethodChoice::Mcmc, &opts.mcmc, &opts.caps)?;
                    let (e, e_se) = sampled_energy(&space, &opts.mcmc)?;
                    (z.log_z - e, (z.stderr.powi(2) + e_se.powi(2)).sqrt(), PartitionMethod::Mcmc)
                }
            };
            Ok(EntropyPoint { size, n: space.n(), entropy_rate: h / n, stderr: se / n, method: m })
        })
        .collect()
}

/// Glauber estimate of `E_{μ_n}[H*_n]` with a batch-means error.
fn sampled_energy(space: &DerivedSpace, opts: &McmcOptions) -> Result<(f64, f64)> {
    let mut g = Glauber::new(space, 0.0, stream_rng(opts.seed, u64::MAX))?;
    let burn = (opts.sweeps as f64 * opts.burn_in) as usize;
    let mut series = Vec::with_capacity(opts.sweeps - burn);
    for s in 0..opts.sweeps {
        g.sweep();
        if s >= burn {
            series.push(crate::derived::derived_energy(space, &Configuration::new(g.state().to_vec())));
        }
    }
    let (m, se, _) = batch_stats(&series);
    Ok((m, se))
}

/// `P_x^σ` on `B_r`: the average of point masses at `Π_v^{σ,B_r}(x)`.
pub fn empirical_distribution(x: &Configuration, sigma: &SoficMap, r: usize) -> Result<BallDistribution> {
    if x.len() != sigma.n() {
        return Err(Error::InvalidArgument("configuration length differs from n".into()));
    }
    let ball = sigma.spec().ball(r)?;
    let words: Vec<_> = ball.elements.iter().map(|g| g.letters()).collect();
    let mut counts: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
    for v in 0..sigma.n() {
        let key: Vec<Symbol> = words.iter().map(|w| x.values[sigma.apply_letters(w, v)]).collect();
        *counts.entry(key).or_insert(0.0) += 1.0;
    }
    let n = sigma.n() as f64;
    counts.values_mut().for_each(|c| *c /= n);
    Ok(BallDistribution { radius: r, table: counts })
}

/// How per-vertex laws `(Π_v)_*μ_n` are obtained.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum Probe {
    /// From the full table of `μ_n`.
    Exact,
    /// From cycle transfer matrices; rank-one spaces with cycles longer
    /// than the window.
    Transfer1D,
    /// Histograms over Glauber sweeps.
    Sampled { sweeps: usize, burn_in: usize, seed: u64 },
}

/// Fraction of vertices whose pulled-back law on `B_r` is more than `eps`
/// from `reference` in total variation.
pub fn local_weakstar_gap(space: &DerivedSpace, reference: &BallDistribution, eps: f64, probe: Probe) -> Result<f64> {
    let r = reference.radius;
    let n = space.n();
    let tvs: Vec<f64> = match probe {
        Probe::Exact => {
            let g = derived_gibbs_exact(space)?;
            (0..n).map(|v| Ok(g.pushforward(v, r)?.total_variation(reference))).collect::<Result<_>>()?
        }
        Probe::Transfer1D => transfer_window_laws(space, r)?
            .into_iter()
            .map(|d| d.total_variation(reference))
            .collect(),
        Probe::Sampled { sweeps, burn_in, seed } => {
            let ball = space.sigma().spec().ball(r)?;
            let windows: Vec<Vec<usize>> = (0..n).map(|v| space.sigma().window(&ball, v)).collect();
            let mut g = Glauber::new(space, 0.0, stream_rng(seed, 0))?;
            let mut hist: Vec<HashMap<Vec<Symbol>, f64>> = vec![HashMap::new(); n];
            let kept = sweeps.saturating_sub(burn_in).max(1) as f64;
            for s in 0..sweeps.max(burn_in + 1) {
                g.sweep();
                if s >= burn_in {
                    let x = g.state();
                    for (v, w) in windows.iter().enumerate() {
                        *hist[v].entry(w.iter().map(|&u| x[u]).collect()).or_insert(0.0) += 1.0 / kept;
                    }
                }
            }
            hist.into_iter()
                .map(|h| BallDistribution { radius: r, table: h.into_iter().collect() }.total_variation(reference))
                .collect()
        }
    };
    Ok(tvs.iter().filter(|&&t| t > eps).count() as f64 / n as f64)
}

/// Per-vertex window laws on a rank-one space from cycle transfer matrices.
fn transfer_window_laws(space: &DerivedSpace, r: usize) -> Result<Vec<BallDistribution>> {
    transfer_applicable(space)?;
    let t = transfer_matrix(space.structure(), space.potential(), true);
    let u = transfer_matrix(space.structure(), space.potential(), false);
    let a = space.alphabet();
    let ball = space.sigma().spec().ball(r)?;
    // ball index → offset along the line
    let offsets: Vec<i64> = ball
        .elements
        .iter()
        .map(|g| match g {
            crate::cayley::GroupElement::Vector(v) => v[0],
            crate::cayley::GroupElement::Word(w) => {
                w.len() as i64 * if w.first().is_some_and(|l| l.inverse) { -1 } else { 1 }
            }
        })
        .collect();
    let p = space.sigma().perm(0);
    let n = space.n();
    let mut out: Vec<Option<BallDistribution>> = vec![None; n];
    let span = 2 * r + 1;
    for start in 0..n {
        if out[start].is_some() {
            continue;
        }
        let mut cycle = vec![start];
        let mut v = p[start] as usize;
        while v != start {
            cycle.push(v);
            v = p[v] as usize;
        }
        let len = cycle.len();
        let kinds: Vec<bool> = cycle.iter().map(|&v| space.edge_constrained(0, v)).collect();
        if len < span || kinds.iter().any(|&k| k != kinds[0]) {
            return Err(Error::InvalidArgument(
                "transfer probe needs uniform cycles longer than the window".into(),
            ));
        }
        let m = if kinds[0] { &t } else { &u };
        let mut rest: Vec<Vec<f64>> = (0..a).map(|i| (0..a).map(|j| (i == j) as u8 as f64).collect()).collect();
        for _ in 0..(len - span + 1) {
            rest = mat_mul(&rest, m);
            let s = rest.iter().flatten().cloned().fold(0.0f64, f64::max);
            rest.iter_mut().flatten().for_each(|x| *x /= s);
        }
        // segment weights s_0 … s_{2r}
        let mut weights = Vec::new();
        let mut seg = vec![0 as Symbol; span];
        loop {
            let mut w = rest[seg[span - 1] as usize][seg[0] as usize];
            for k in 0..span - 1 {
                w *= m[seg[k] as usize][seg[k + 1] as usize];
            }
            if w > 0.0 {
                let key: Vec<Symbol> = offsets.iter().map(|&o| seg[(o + r as i64) as usize]).collect();
                weights.push((key, w.ln()));
            }
            let mut i = span;
            while i > 0 {
                i -= 1;
                seg[i] += 1;
                if (seg[i] as usize) < a {
                    break;
                }
                seg[i] = 0;
            }
            if seg.iter().all(|&s| s == 0) {
                break;
            }
        }
        let law = BallDistribution::from_weights(r, weights)?;
        for &v in &cycle {
            out[v] = Some(law.clone());
        }
    }
    Ok(out.into_iter().map(|d| d.expect("every vertex lies on a cycle")).collect())
}

/// Infinite-volume marginal on `B_r` of a ℤ¹ model (stationary chain).
pub fn reference_marginal_1d(structure: &ConstraintStructure, potential: &Potential, r: usize) -> Result<BallDistribution> {
    let chain = StationaryChain::new(structure, potential)?;
    let ball = GroupSpec::zd(1).ball(r)?;
    let a = structure.alphabet();
    let span = 2 * r + 1;
    let mut table = BTreeMap::new();
    let mut seg = vec![0 as Symbol; span];
    loop {
        let p = chain.word_probability(&seg);
        if p > 0.0 {
            let key: Vec<Symbol> = ball
                .elements
                .iter()
                .map(|g| match g {
                    crate::cayley::GroupElement::Vector(v) => seg[(v[0] + r as i64) as usize],
                    _ => unreachable!(),
                })
                .collect();
            table.insert(key, p);
        }
        let mut i = span;
        while i > 0 {
            i -= 1;
            seg[i] += 1;
            if (seg[i] as usize) < a {
                break;
            }
            seg[i] = 0;
        }
        if seg.iter().all(|&s| s == 0) {
            break;
        }
    }
    Ok(BallDistribution { radius: r, table })
}

/// Largest `log₂` count of boundary conditions enumerated per radius.
const BOUNDARY_BITS: f64 = 22.0;

/// Empirical decay profile `β̂(r)`, `r = 0..=r_max`: the largest change of
/// a single-site conditional at the identity over admissible boundaries on
/// the sphere of radius `r + 1`.
pub fn ssm_profile(
    structure: &ConstraintStructure,
    potential: &Potential,
    spec: &GroupSpec,
    r_max: usize,
) -> Result<Vec<f64>> {
    structure.check_group(spec)?;
    potential.check_structure(structure)?;
    let caps = Caps::from_env()?;
    let a = structure.alphabet();
    (0..=r_max)
        .map(|r| {
            let ball = spec.ball_with_cap(r + 1, caps.ball)?;
            let field = LocalField::from_ball(&ball, structure, potential).with_table_cap(caps.table);
            let sphere = ball.sphere(r + 1);
            let k = sphere.len();
            if k as f64 * (a as f64).log2() > BOUNDARY_BITS {
                return Err(Error::BudgetExceeded(format!("{a}^{k} boundary conditions at radius {r}")));
            }
            let total = a.pow(k as u32);
            let res: Vec<Option<Vec<f64>>> = (0..total)
                .into_par_iter()
                .map(|code| {
                    let mut pins = vec![None; ball.len()];
                    let mut c = code;
                    for i in sphere.clone() {
                        pins[i] = Some((c % a) as Symbol);
                        c /= a;
                    }
                    field.marginal(0, &pins)
                })
                .collect::<Result<_>>()?;
            let mut lo = vec![f64::INFINITY; a];
            let mut hi = vec![f64::NEG_INFINITY; a];
            for p in res.into_iter().flatten() {
                for s in 0..a {
                    lo[s] = lo[s].min(p[s]);
                    hi[s] = hi[s].max(p[s]);
                }
            }
            if lo[0].is_infinite() {
                return Err(Error::EmptyFiber);
            }
            Ok((0..a).map(|s| hi[s] - lo[s]).fold(0.0, f64::max))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct UniformBound {
    /// Smallest positive single-site conditional at the identity found.
    pub c_hat: f64,
    pub c_formula: f64,
    pub log_c_formula: f64,
    pub conditionings: usize,
}

/// `ĉ` over full boundaries on the sphere of radius `r + 1` combined with
/// every partial pinning of `B_r ∖ {1}`, and the closed-form lower bound
/// `|A|^{−|M|⁴} e^{−2‖φ‖|M|⁴} |A|^{−|M|⁶}` with `M = B₁`.
pub fn uniform_bound_c(
    structure: &ConstraintStructure,
    potential: &Potential,
    spec: &GroupSpec,
    r: usize,
) -> Result<UniformBound> {
    structure.check_group(spec)?;
    potential.check_structure(structure)?;
    let caps = Caps::from_env()?;
    let a = structure.alphabet();
    let m = spec.ball(1)?.len() as f64;
    let log_c_formula = -m.powi(4) * (a as f64).ln() - 2.0 * potential.norm() * m.powi(4) - m.powi(6) * (a as f64).ln();
    let ball = spec.ball_with_cap(r + 1, caps.ball)?;
    let field = LocalField::from_ball(&ball, structure, potential).with_table_cap(caps.table);
    let inner = ball.prefix_len(r);
    let sphere = ball.sphere(r + 1);
    let bits = sphere.len() as f64 * (a as f64).log2() + (inner - 1) as f64 * ((a + 1) as f64).log2();
    if bits > BOUNDARY_BITS {
        return Err(Error::BudgetExceeded(format!("2^{bits:.1} conditionings at radius {r}")));
    }
    let total = a.pow(sphere.len() as u32) * (a + 1).pow(inner as u32 - 1);
    let mins: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|code| {
            let mut pins = vec![None; ball.len()];
            let mut c = code;
            for i in sphere.clone() {
                pins[i] = Some((c % a) as Symbol);
                c /= a;
            }
            for p in pins.iter_mut().take(inner).skip(1) {
                let s = c % (a + 1);
                c /= a + 1;
                *p = (s < a).then_some(s as Symbol);
            }
            Ok(field
                .marginal(0, &pins)?
                .map_or(f64::INFINITY, |p| p.into_iter().filter(|&q| q > 0.0).fold(f64::INFINITY, f64::min)))
        })
        .collect::<Result<_>>()?;
    let c_hat = mins.into_iter().fold(f64::INFINITY, f64::min);
    if c_hat.is_infinite() {
        return Err(Error::EmptyFiber);
    }
    Ok(UniformBound { c_hat, c_formula: log_c_formula.exp(), log_c_formula, conditionings: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::GroupElement;
    use crate::sofic::build_torus;

    fn z1(x: i64) -> GroupElement {
        GroupElement::Vector(vec![x])
    }

    fn cycle(m: usize, lambda: f64, e: Enforcement) -> DerivedSpace {
        DerivedSpace::with_enforcement(
            build_torus(1, m).unwrap(),
            ConstraintStructure::hardcore(1),
            Potential::hardcore(lambda, 1),
            e,
        )
        .unwrap()
    }

    #[test]
    fn specification_examples() {
        let spec = GroupSpec::zd(1);
        let hc = ConstraintStructure::hardcore(1);
        let pot = Potential::hardcore(1.0, 1);
        let y = Pattern::new().with(z1(1), 0).with(z1(-1), 0);
        let d = specification_ball(&hc, &pot, &spec, 0, &y).unwrap();
        assert!((d.prob(&[1]) - 0.5).abs() < 1e-15);
        let y = Pattern::new().with(z1(1), 0).with(z1(-1), 1);
        let d = specification_ball(&hc, &pot, &spec, 0, &y).unwrap();
        assert_eq!(d.prob(&[1]), 0.0);
        let full = ConstraintStructure::full_shift(2, 1);
        let y = Pattern::new().with(z1(2), 1).with(z1(-2), 0);
        let d = specification_ball(&full, &Potential::zero(2, 1), &spec, 1, &y).unwrap();
        assert_eq!(d.table.len(), 8);
        assert!(d.table.values().all(|p| (p - 0.125).abs() < 1e-15));
        let partial = Pattern::new().with(z1(1), 0);
        assert!(specification_ball(&hc, &pot, &spec, 0, &partial).is_err());
    }

    #[test]
    fn exact_gibbs_tables() {
        let c4 = cycle(4, 1.0, Enforcement::AllEdges);
        let g = derived_gibbs_exact(&c4).unwrap();
        assert_eq!(g.len(), 7);
        assert!(g.probs.iter().all(|p| (p - 1.0 / 7.0).abs() < 1e-12));
        assert!((g.entropy() - 7f64.ln()).abs() < 1e-12);
        let c3 = cycle(3, 2.0, Enforcement::AllEdges);
        let g = derived_gibbs_exact(&c3).unwrap();
        assert!((g.log_z - 7f64.ln()).abs() < 1e-12);
        assert!((g.probability(&Configuration::constant(3, 0)) - 1.0 / 7.0).abs() < 1e-12);
        assert!((g.probability(&Configuration::new(vec![0, 1, 0])) - 2.0 / 7.0).abs() < 1e-12);
        let h = -(1.0f64 / 7.0) * (1.0f64 / 7.0).ln() - 3.0 * (2.0f64 / 7.0) * (2.0f64 / 7.0).ln();
        assert!((shannon_entropy_exact(&c3).unwrap() - h).abs() < 1e-12);
        let full = DerivedSpace::new(
            build_torus(1, 10).unwrap(),
            ConstraintStructure::full_shift(2, 1),
            Potential::zero(2, 1),
        )
        .unwrap();
        assert!((shannon_entropy_exact(&full).unwrap() - 10.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_identity_on_a_cycle() {
        let s = cycle(9, 1.3, Enforcement::GoodWindows);
        let g = derived_gibbs_exact(&s).unwrap();
        assert!((g.log_z - (g.entropy() + g.expected_energy())).abs() < 1e-9);
    }

    #[test]
    fn transfer_energy_matches_enumeration() {
        for m in [3usize, 5, 8, 13] {
            let e = if m < 5 { Enforcement::AllEdges } else { Enforcement::GoodWindows };
            let s = cycle(m, 1.7, e);
            let (_, exact) = exact_moments(&s, &Caps::default()).unwrap();
            assert!((expected_energy_transfer(&s).unwrap() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_distributions() {
        let sigma = build_torus(1, 8).unwrap();
        let x = Configuration::new(vec![0, 1, 0, 1, 0, 1, 0, 1]);
        let d = empirical_distribution(&x, &sigma, 1).unwrap();
        assert_eq!(d.table.len(), 2);
        assert!(d.table.values().all(|p| (p - 0.5).abs() < 1e-15));
        let d = empirical_distribution(&Configuration::constant(8, 0), &sigma, 2).unwrap();
        assert_eq!(d.prob(&[0; 5]), 1.0);
        let d = empirical_distribution(&x, &sigma, 0).unwrap();
        assert_eq!(d.prob(&[1]), 0.5);
    }

    #[test]
    fn weakstar_probes_agree() {
        let reference = reference_marginal_1d(&ConstraintStructure::hardcore(1), &Potential::hardcore(1.0, 1), 1).unwrap();
        assert!((reference.total() - 1.0).abs() < 1e-12);
        let s = cycle(12, 1.0, Enforcement::GoodWindows);
        let exact = derived_gibbs_exact(&s).unwrap().pushforward(0, 1).unwrap();
        let via_transfer = &transfer_window_laws(&s, 1).unwrap()[0];
        assert!(exact.total_variation(via_transfer) < 1e-12);
        assert_eq!(local_weakstar_gap(&s, &reference, 1.0, Probe::Transfer1D).unwrap(), 0.0);
    }

    #[test]
    fn ssm_profile_hardcore_line() {
        let b = ssm_profile(&ConstraintStructure::hardcore(1), &Potential::hardcore(1.0, 1), &GroupSpec::zd(1), 6).unwrap();
        for w in b.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(b[5] < 0.01);
        let f = ssm_profile(&ConstraintStructure::full_shift(2, 1), &Potential::zero(2, 1), &GroupSpec::zd(1), 3).unwrap();
        assert!(f.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn uniform_bounds() {
        let u = uniform_bound_c(&ConstraintStructure::full_shift(2, 1), &Potential::zero(2, 1), &GroupSpec::zd(1), 2).unwrap();
        assert!((u.c_hat - 0.5).abs() < 1e-12);
        let h = uniform_bound_c(&ConstraintStructure::hardcore(1), &Potential::hardcore(1.0, 1), &GroupSpec::zd(1), 2).unwrap();
        assert!(h.c_hat >= h.c_formula);
        assert!(h.c_hat > 0.0 && h.c_hat < 0.5);
    }
}
