//! Truncated and random information functions and the Kieffer-Pinsker
//! pressure estimators built on them.

pub mod oracle;
pub mod saw;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{Backend, MarginalOracle};
pub use saw::{build_saw_tree, hardcore_marginal_via_saw, root_occupation, SawTree, SimpleGraph};

use crate::cayley::{balls_isomorphic, GroupElement, GroupSpec, Letter};
use crate::chain::StationaryChain;
use crate::derived::{DerivedSpace, Enforcement};
use crate::error::{Error, Result};
use crate::gibbs::{sample_derived_gibbs, ssm_profile, uniform_bound_c};
use crate::randompast::{lex_past_sample, percolation_past_with};
use crate::shift::{detect_safe_symbol, ConstraintStructure, Potential, Symbol};
use crate::sofic::{good_vertex_flags, Builder};
use crate::stream_rng;

/// Past samples drawn per parallel task.
const CHUNK: usize = 1024;

/// Radius of the conditionings used for `ĉ` in error budgets.
pub const C_HAT_RADIUS: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfoEstimate {
    pub value: f64,
    pub stderr: f64,
    pub r: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub oracle: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PastKind {
    #[default]
    Percolation,
    /// Deterministic lexicographic past on ℤ^d; a single sample.
    Lex,
}

/// `f_r(x, D) = −log μ([x_1] | [x_{D∩B_r}])`. `x` and `d` are indexed by
/// the oracle's ball; `r` may not exceed its radius.
pub fn info_fn_truncated(oracle: &MarginalOracle, x: &[Symbol], d: &[bool], r: usize) -> Result<f64> {
    let ball = oracle.ball();
    if r > ball.radius || x.len() != ball.len() || d.len() != ball.len() {
        return Err(Error::InvalidArgument("pattern, past and radius must fit the oracle ball".into()));
    }
    let inner = ball.prefix_len(r);
    let pins: Vec<Option<Symbol>> =
        (0..ball.len()).map(|i| (i != 0 && i < inner && d[i]).then_some(x[i])).collect();
    let p = oracle.conditional(&pins)?[x[0] as usize];
    if !(p > 0.0) {
        return Err(Error::Oracle("pattern has zero conditional probability".into()));
    }
    Ok((-p.ln()).max(0.0))
}

/// `|f_r(x, D) − f_{r'}(x, D)|` for `r ≤ r'`.
pub fn truncation_gap(oracle: &MarginalOracle, x: &[Symbol], d: &[bool], r: usize, r2: usize) -> Result<f64> {
    if r > r2 {
        return Err(Error::InvalidArgument("need r ≤ r'".into()));
    }
    Ok((info_fn_truncated(oracle, x, d, r)? - info_fn_truncated(oracle, x, d, r2)?).abs())
}

/// Running `(count, mean, M2)` of information values.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments { n, mean: self.mean + d * o.n / n, m2: self.m2 + o.m2 + d * d * self.n * o.n / n }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.n - 1.0) / self.n).sqrt()
    }
}

fn info_moments<R: Rng>(oracle: &MarginalOracle, x: &[Symbol], r: usize, count: usize, rng: &mut R) -> Result<Moments> {
    let size = oracle.ball().len();
    let mut m = Moments::default();
    for _ in 0..count {
        let past = percolation_past_with(r, size, rng);
        m.push(info_fn_truncated(oracle, x, &past.membership, r)?);
    }
    Ok(m)
}

/// Monte Carlo mean of `f_r(x, 𝒫 ∩ B_r)` over `n` random pasts. Task `c`
/// handles samples `c·1024 ..` with its own stream, so the result does not
/// depend on the thread count.
pub fn random_info(oracle: &MarginalOracle, x: &[Symbol], r: usize, n: usize, seed: u64, past: PastKind) -> Result<InfoEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one past sample".into()));
    }
    let (value, stderr, n) = match past {
        PastKind::Lex => {
            let mut m = lex_past_sample(oracle.spec(), oracle.radius())?.membership;
            m.truncate(oracle.ball().len());
            (info_fn_truncated(oracle, x, &m, r)?, 0.0, 1)
        }
        PastKind::Percolation => {
            let chunks = n.div_ceil(CHUNK);
            let parts: Vec<Moments> = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let count = CHUNK.min(n - c * CHUNK);
                    info_moments(oracle, x, r, count, &mut stream_rng(seed, c as u64))
                })
                .collect::<Result<_>>()?;
            let m = parts.into_iter().fold(Moments::default(), Moments::merge);
            (m.mean, m.stderr(), n)
        }
    };
    Ok(InfoEstimate { value, stderr, r, n, oracle: oracle.tag().into() })
}

/// `φ(x) = h(x(1)) + Σ_s J_s(x(1), x(s))` for `x` indexed by the oracle's
/// ball (radius at least 1).
pub fn potential_at(oracle: &MarginalOracle, x: &[Symbol]) -> Result<f64> {
    let ball = oracle.ball();
    let spec = oracle.spec();
    let pot = oracle.potential();
    let mut e = pot.vertex[x[0] as usize];
    for gen in 0..spec.rank() {
        let i = ball
            .index_of(&spec.letter(Letter::pos(gen)))
            .ok_or_else(|| Error::InvalidArgument("potential needs a pattern of radius ≥ 1".into()))?;
        e += pot.edge_weight(gen, x[0], x[i]);
    }
    Ok(e)
}

/// `I^𝒫(0^Γ) + φ(0^Γ)` with `0` the safe symbol.
pub fn kp_pressure_at_fixed_point(oracle: &MarginalOracle, r: usize, n: usize, seed: u64) -> Result<InfoEstimate> {
    let z = detect_safe_symbol(oracle.structure()).ok_or(Error::NoSafeSymbol)?;
    let x = vec![z; oracle.ball().len()];
    let mut est = random_info(oracle, &x, r, n, seed, PastKind::Percolation)?;
    est.value += oracle.potential().at_constant(z);
    Ok(est)
}

/// Where the outer patterns of [`kp_pressure_at_measure`] come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sampler", rename_all = "snake_case")]
pub enum NuSampler {
    /// `δ_{0^Γ}` at the safe symbol.
    FixedPoint,
    /// `μ` itself, sampled exactly from the stationary chain (ℤ¹ only).
    Markov1D,
    /// Pullbacks at `B_r`-good vertices of Glauber samples of `μ_n`, one
    /// chain per block of 64 outer samples. Exploratory.
    GlauberPullback { builder: Builder, size: usize, sweeps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureEstimate {
    /// `∫ (I^𝒫 + φ) dν`.
    pub total: InfoEstimate,
    /// `∫ I^𝒫 dν`, which estimates the entropy when `ν = μ`.
    pub info: InfoEstimate,
    pub outer: usize,
}

const GLAUBER_BLOCK: usize = 64;

/// Outer Monte Carlo over `m_outer` patterns from `ν`, each with `n_inner`
/// pasts. Standard errors come from the spread of the outer values.
pub fn kp_pressure_at_measure(
    oracle: &MarginalOracle,
    nu: &NuSampler,
    r: usize,
    n_inner: usize,
    m_outer: usize,
    seed: u64,
) -> Result<MeasureEstimate> {
    if n_inner == 0 || m_outer == 0 {
        return Err(Error::InvalidArgument("need at least one outer and one inner sample".into()));
    }
    let tag = oracle.tag().to_string();
    let outer: Vec<(f64, f64)> = match nu {
        NuSampler::FixedPoint => {
            let total = kp_pressure_at_fixed_point(oracle, r, n_inner * m_outer, seed)?;
            let z = detect_safe_symbol(oracle.structure()).ok_or(Error::NoSafeSymbol)?;
            let mut info = total.clone();
            info.value -= oracle.potential().at_constant(z);
            return Ok(MeasureEstimate { total, info, outer: 1 });
        }
        NuSampler::Markov1D => {
            if *oracle.spec() != GroupSpec::zd(1) {
                return Err(Error::GroupMismatch("exact μ sampling needs ℤ¹".into()));
            }
            let chain = StationaryChain::new(oracle.structure(), oracle.potential())?;
            let radius = oracle.radius() as i64;
            let offsets: Vec<usize> = oracle
                .ball()
                .elements
                .iter()
                .map(|g| match g {
                    GroupElement::Vector(v) => (v[0] + radius) as usize,
                    GroupElement::Word(_) => unreachable!("ℤ¹ elements are vectors"),
                })
                .collect();
            (0..m_outer)
                .into_par_iter()
                .map(|j| {
                    let mut rng = stream_rng(seed, j as u64);
                    let word = chain.sample_word(2 * oracle.radius() + 1, &mut rng);
                    let x: Vec<Symbol> = offsets.iter().map(|&o| word[o]).collect();
                    let inner = info_moments(oracle, &x, r, n_inner, &mut rng)?;
                    Ok((inner.mean, potential_at(oracle, &x)?))
                })
                .collect::<Result<_>>()?
        }
        NuSampler::GlauberPullback { builder, size: m, sweeps } => {
            if builder.spec() != *oracle.spec() {
                return Err(Error::GroupMismatch("sofic builder and oracle use different groups".into()));
            }
            let blocks = m_outer.div_ceil(GLAUBER_BLOCK);
            let per_block: Vec<Vec<(f64, f64)>> = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let sigma = builder.build(*m)?;
                    let good: Vec<usize> = {
                        let flags = good_vertex_flags(&sigma, oracle.ball());
                        (0..sigma.n()).filter(|&v| flags[v]).collect()
                    };
                    if good.is_empty() {
                        return Err(Error::InvalidArgument("sofic map has no good vertices at this radius".into()));
                    }
                    let space = DerivedSpace::with_enforcement(
                        sigma,
                        oracle.structure().clone(),
                        oracle.potential().clone(),
                        Enforcement::GoodWindows,
                    )?;
                    let cfg = sample_derived_gibbs(&space, *sweeps, stream_rng(seed, b as u64).gen())?;
                    let mut rng = stream_rng(seed, (blocks + b) as u64);
                    let count = GLAUBER_BLOCK.min(m_outer - b * GLAUBER_BLOCK);
                    (0..count)
                        .map(|_| {
                            let v = good[rng.gen_range(0..good.len())];
                            let x: Vec<Symbol> = oracle
                                .ball()
                                .elements
                                .iter()
                                .map(|g| cfg.values[space.sigma().sigma_word(g, v)])
                                .collect();
                            let inner = info_moments(oracle, &x, r, n_inner, &mut rng)?;
                            Ok((inner.mean, potential_at(oracle, &x)?))
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            per_block.into_iter().flatten().collect()
        }
    };
    let (mut info, mut total) = (Moments::default(), Moments::default());
    for &(i, p) in &outer {
        info.push(i);
        total.push(i + p);
    }
    let m = outer.len();
    let mk = |s: Moments| InfoEstimate { value: s.mean, stderr: s.stderr(), r, n: n_inner * m, oracle: tag.clone() };
    Ok(MeasureEstimate { total: mk(total), info: mk(info), outer: m })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityReport {
    pub p_a: InfoEstimate,
    pub p_b: InfoEstimate,
    pub beta_a: f64,
    pub c_a: f64,
    pub beta_b: f64,
    pub c_b: f64,
    /// `β̂_a(r)/ĉ_a + β̂_b(r)/ĉ_b`.
    pub bound: f64,
}

/// Fixed-point pressure estimates of one model on two groups whose labeled
/// balls agree up to radius `r + 1`, with the locality bound.
pub fn locality_experiment(
    structure: &ConstraintStructure,
    potential: &Potential,
    group_a: &GroupSpec,
    group_b: &GroupSpec,
    backend: Backend,
    r: usize,
    n: usize,
    seed: u64,
) -> Result<LocalityReport> {
    if let Some(radius) = balls_isomorphic(group_a, group_b, r + 1)? {
        return Err(Error::BallMismatch { radius });
    }
    let side = |spec: &GroupSpec, backend: Backend| -> Result<(InfoEstimate, f64, f64)> {
        let oracle = MarginalOracle::new(structure, potential, spec, backend, r)?;
        let p = kp_pressure_at_fixed_point(&oracle, r, n, seed)?;
        let beta = *ssm_profile(structure, potential, spec, r)?.last().expect("r_max + 1 entries");
        let c = uniform_bound_c(structure, potential, spec, C_HAT_RADIUS.min(r.max(1)))?.c_hat;
        Ok((p, beta, c))
    };
    let backend_for = |spec: &GroupSpec| match backend {
        Backend::TransferMatrix1D if *spec != GroupSpec::zd(1) => Backend::BallEnumeration { pad: 2 },
        b => b,
    };
    let (p_a, beta_a, c_a) = side(group_a, backend_for(group_a))?;
    let (p_b, beta_b, c_b) = side(group_b, backend_for(group_b))?;
    Ok(LocalityReport { p_a, p_b, beta_a, c_a, beta_b, c_b, bound: beta_a / c_a + beta_b / c_b })
}

/// `λ_c(Δ) = (Δ−1)^{Δ−1} / (Δ−2)^Δ`.
pub fn weitz_threshold(delta: u32) -> Result<f64> {
    if delta < 3 {
        return Err(Error::InvalidArgument(format!("λ_c(Δ) needs Δ ≥ 3, got {delta}")));
    }
    let d = delta as i32;
    Ok(((d - 1) as f64).powi(d - 1) / ((d - 2) as f64).powi(d))
}

/// Smallest `r ≤ r_max` with `β̂(r)/ĉ < target/6`.
pub fn default_truncation_radius(
    structure: &ConstraintStructure,
    potential: &Potential,
    spec: &GroupSpec,
    target: f64,
    r_max: usize,
) -> Result<usize> {
    let c = uniform_bound_c(structure, potential, spec, C_HAT_RADIUS)?.c_hat;
    let beta = ssm_profile(structure, potential, spec, r_max)?;
    beta.iter()
        .position(|&b| b / c < target / 6.0)
        .ok_or_else(|| Error::BudgetExceeded(format!("β̂(r)/ĉ stays above {} up to r = {r_max}", target / 6.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(lambda: f64, backend: Backend, r: usize) -> MarginalOracle {
        MarginalOracle::new(
            &ConstraintStructure::hardcore(1),
            &Potential::hardcore(lambda, 1),
            &GroupSpec::zd(1),
            backend,
            r,
        )
        .unwrap()
    }

    #[test]
    fn full_shift_information_is_log_alphabet() {
        let o = MarginalOracle::new(
            &ConstraintStructure::full_shift(3, 1),
            &Potential::zero(3, 1),
            &GroupSpec::zd(1),
            Backend::TransferMatrix1D,
            3,
        )
        .unwrap();
        let est = random_info(&o, &[0, 1, 2, 0, 1, 2, 0], 3, 500, 1, PastKind::Percolation).unwrap();
        assert!((est.value - 3f64.ln()).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
        assert_eq!(truncation_gap(&o, &[0; 7], &[true; 7], 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn stationary_and_forced_information() {
        let o = line(1.0, Backend::TransferMatrix1D, 2);
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        let f = info_fn_truncated(&o, &[0; 5], &[false; 5], 2).unwrap();
        assert!((f + (g * g / (1.0 + g * g)).ln()).abs() < 1e-12);
        let x = [0, 1, 0, 0, 0];
        assert_eq!(info_fn_truncated(&o, &x, &[false, true, false, false, false], 2).unwrap(), 0.0);
        let lex = random_info(&o, &[0; 5], 2, 1, 0, PastKind::Lex).unwrap();
        assert!((lex.value - g.ln()).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_pressure_is_deterministic_and_close() {
        let o = line(1.0, Backend::TransferMatrix1D, 12);
        let a = kp_pressure_at_fixed_point(&o, 12, 20_000, 3).unwrap();
        assert_eq!(a, kp_pressure_at_fixed_point(&o, 12, 20_000, 3).unwrap());
        let g = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((a.value - g).abs() < 4.0 * a.stderr + 1e-3, "{a:?}");
        let fp = kp_pressure_at_measure(&o, &NuSampler::FixedPoint, 12, 100, 200, 3).unwrap();
        assert_eq!(fp.total, kp_pressure_at_fixed_point(&o, 12, 20_000, 3).unwrap());
    }

    #[test]
    fn no_safe_symbol() {
        let o = MarginalOracle::new(
            &ConstraintStructure::checkerboard(1),
            &Potential::zero(2, 1),
            &GroupSpec::zd(1),
            Backend::TransferMatrix1D,
            2,
        )
        .unwrap();
        assert!(matches!(kp_pressure_at_fixed_point(&o, 2, 10, 0), Err(Error::NoSafeSymbol)));
    }

    #[test]
    fn thresholds() {
        assert_eq!(weitz_threshold(3).unwrap(), 4.0);
        assert_eq!(weitz_threshold(4).unwrap(), 1.6875);
        assert_eq!(weitz_threshold(5).unwrap(), 256.0 / 243.0);
        assert!(weitz_threshold(2).is_err());
    }

    #[test]
    fn locality_on_identical_groups() {
        let rep = locality_experiment(
            &ConstraintStructure::hardcore(1),
            &Potential::hardcore(1.0, 1),
            &GroupSpec::zd(1),
            &GroupSpec::zd(1),
            Backend::TransferMatrix1D,
            6,
            4000,
            2,
        )
        .unwrap();
        assert_eq!(rep.p_a, rep.p_b);
        assert!(rep.bound.is_finite() && rep.bound > 0.0);
        let err = locality_experiment(
            &ConstraintStructure::hardcore(2),
            &Potential::hardcore(1.0, 2),
            &GroupSpec::zd(2),
            &GroupSpec::free(2),
            Backend::BallEnumeration { pad: 1 },
            1,
            10,
            0,
        );
        assert!(matches!(err, Err(Error::BallMismatch { radius: 2 })));
    }

    #[test]
    fn truncation_radius_default() {
        let r = default_truncation_radius(
            &ConstraintStructure::hardcore(1),
            &Potential::hardcore(1.0, 1),
            &GroupSpec::zd(1),
            0.05,
            20,
        )
        .unwrap();
        assert!(r > 0 && r < 20);
    }
}
