//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines appear in order with
//! their wall times; exits nonzero if any criterion fails.

use std::f64::consts::LN_2;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use soficlab::cayley::GroupSpec;
use soficlab::derived::{
    error_set, is_in_xn, partition_exact, partition_mcmc, pressure_estimate, DerivedSpace, Enforcement,
    McmcOptions, MethodChoice, PressureOptions,
};
use soficlab::gibbs::{
    derived_gibbs_exact, entropy_rate_estimate, local_weakstar_gap, reference_marginal_1d, ssm_profile,
    uniform_bound_c, EntropyOptions, Probe,
};
use soficlab::kieffer::{
    hardcore_marginal_via_saw, kp_pressure_at_fixed_point, kp_pressure_at_measure, weitz_threshold, Backend,
    MarginalOracle, NuSampler, SimpleGraph, C_HAT_RADIUS,
};
use soficlab::shift::{
    check_tssm, correct_errors, correction_region, is_globally_admissible, ConstraintStructure, Pattern, Potential,
    TssmVerdict, Verdict,
};
use soficlab::sofic::{build_random_perm, build_torus, Builder};
use soficlab::Result;

type Outcome = Result<(bool, String)>;

fn golden() -> f64 {
    ((1.0 + 5f64.sqrt()) / 2.0).ln()
}

fn hardcore(lambda: f64, d: usize) -> (ConstraintStructure, Potential) {
    (ConstraintStructure::hardcore(d), Potential::hardcore(lambda, d))
}

fn pressure_at(lambda: f64, builder: Builder, m: usize, method: MethodChoice) -> Result<f64> {
    let (s, p) = hardcore(lambda, 1);
    let opts = PressureOptions { method, ..Default::default() };
    Ok(pressure_estimate(&s, &p, &builder, &[m], &opts)?[0].pressure)
}

fn transfer_oracle(lambda: f64, r: usize) -> Result<MarginalOracle> {
    let (s, p) = hardcore(lambda, 1);
    MarginalOracle::new(&s, &p, &GroupSpec::zd(1), Backend::TransferMatrix1D, r)
}

/// `3β̂(r)/ĉ` on ℤ¹ hardcore.
fn budget(lambda: f64, r: usize) -> Result<f64> {
    let (s, p) = hardcore(lambda, 1);
    let beta = ssm_profile(&s, &p, &GroupSpec::zd(1), r)?[r];
    let c = uniform_bound_c(&s, &p, &GroupSpec::zd(1), C_HAT_RADIUS)?.c_hat;
    Ok(3.0 * beta / c)
}

fn lucas(m: usize) -> f64 {
    let (mut a, mut b) = (2.0, 1.0);
    for _ in 0..m {
        (a, b) = (b, a + b);
    }
    a
}

fn c1_golden_mean() -> Outcome {
    let p = pressure_at(1.0, Builder::Torus { d: 1 }, 64, MethodChoice::Transfer)?;
    let mut worst: f64 = 0.0;
    let (s, pot) = hardcore(1.0, 1);
    for m in 5..=20 {
        let brute = partition_exact(&DerivedSpace::new(build_torus(1, m)?, s.clone(), pot.clone())?)?.log_z;
        let trace = pressure_at(1.0, Builder::Torus { d: 1 }, m, MethodChoice::Transfer)? * m as f64;
        worst = worst.max((brute - trace).abs()).max((brute - lucas(m).ln()).abs());
    }
    let gap = (p - golden()).abs();
    Ok((gap < 1e-6 && worst < 1e-9, format!("|p64 - log φ| = {gap:.2e}, max |brute - trace| (m ≤ 20) = {worst:.2e}")))
}

fn c2_lambda_two() -> Outcome {
    let p = pressure_at(2.0, Builder::Torus { d: 1 }, 64, MethodChoice::Transfer)?;
    let gap = (p - LN_2).abs();
    Ok((gap < 1e-6, format!("p64 = {p:.9}, |p - log 2| = {gap:.2e}")))
}

fn c3_kieffer_pinsker() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (lambda, target) in [(0.5, ((1.0 + 3f64.sqrt()) / 2.0).ln()), (1.0, golden()), (2.0, LN_2)] {
        let t = Instant::now();
        let e = kp_pressure_at_fixed_point(&transfer_oracle(lambda, 16)?, 16, 200_000, 7)?;
        let b = budget(lambda, 16)?;
        let secs = t.elapsed().as_secs_f64();
        let pass = (e.value - target).abs() <= 3.0 * e.stderr + b && e.stderr < 0.005 && secs < 60.0;
        ok &= pass;
        detail.push(format!("λ={lambda}: {:.6}±{:.6} vs {target:.6} ({secs:.1}s)", e.value, e.stderr));
    }
    Ok((ok, detail.join("; ")))
}

fn c4_nu_independence() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for lambda in [1.0, 2.0] {
        let o = transfer_oracle(lambda, 16)?;
        let fixed = kp_pressure_at_fixed_point(&o, 16, 200_000, 11)?;
        let mu = kp_pressure_at_measure(&o, &NuSampler::Markov1D, 16, 20, 20_000, 12)?.total;
        let joint = (fixed.stderr.powi(2) + mu.stderr.powi(2)).sqrt();
        let diff = (fixed.value - mu.value).abs();
        ok &= diff <= 3.0 * joint;
        detail.push(format!("λ={lambda}: |Δ| = {diff:.5} ≤ 3σ = {:.5}", 3.0 * joint));
    }
    Ok((ok, detail.join("; ")))
}

fn c5_entropy() -> Outcome {
    let target = 2.0 / 3.0 * LN_2;
    let o = transfer_oracle(2.0, 16)?;
    let info = kp_pressure_at_measure(&o, &NuSampler::Markov1D, 16, 20, 20_000, 5)?.info;
    let (s, p) = hardcore(2.0, 1);
    let opts = EntropyOptions { method: MethodChoice::Exact, ..Default::default() };
    let series = entropy_rate_estimate(&s, &p, &Builder::Torus { d: 1 }, &[8, 12, 16], &opts)?;
    let gaps: Vec<f64> = series.iter().map(|e| (e.entropy_rate - target).abs()).collect();
    let ok = (info.value - target).abs() < 0.01 && gaps[2] < 0.02 && gaps[2] <= gaps[0];
    Ok((
        ok,
        format!("I-part {:.5}±{:.5} vs {target:.6}; exact gaps m=8,12,16: {gaps:.4?}", info.value, info.stderr),
    ))
}

fn random_model(rng: &mut ChaCha8Rng, a: usize, rank: usize) -> (ConstraintStructure, Potential) {
    // symbol 0 stays compatible with everything so every fiber is nonempty
    let relations = (0..rank)
        .map(|_| {
            (0..a).map(|i| (0..a).map(|j| i == 0 || j == 0 || rng.gen_bool(0.6)).collect()).collect()
        })
        .collect();
    let vertex = (0..a).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let edge = (0..rank)
        .map(|_| (0..a).map(|_| (0..a).map(|_| rng.gen_range(-0.5..0.5)).collect()).collect())
        .collect();
    (ConstraintStructure::new(a, relations).unwrap(), Potential::new(vertex, edge).unwrap())
}

fn random_space(rng: &mut ChaCha8Rng, max_n: usize) -> Result<DerivedSpace> {
    let a = rng.gen_range(2..=3);
    let cap = if a == 2 { max_n } else { max_n.min(12) };
    let (sigma, rank) = match rng.gen_range(0..3) {
        0 => (build_torus(1, rng.gen_range(5..=cap))?, 1),
        1 => (build_torus(2, 3)?, 2),
        _ => (build_random_perm(2, rng.gen_range(4..=cap), rng.gen())?, 2),
    };
    let (s, p) = random_model(rng, a, rank);
    let enforcement = if rng.gen_bool(0.5) { Enforcement::GoodWindows } else { Enforcement::AllEdges };
    DerivedSpace::with_enforcement(sigma, s, p, enforcement)
}

fn c6_equilibrium_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let space = random_space(&mut rng, 14)?;
        let z = partition_exact(&space)?.log_z;
        let g = derived_gibbs_exact(&space)?;
        worst = worst.max((z - g.entropy() - g.expected_energy()).abs());
    }
    Ok((worst < 1e-9, format!("max |log Z - H - E[H*]| = {worst:.2e} over 20 models")))
}

fn c7_gibbs_maximality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let space = random_space(&mut rng, 12)?;
        let g = derived_gibbs_exact(&space)?;
        let top = g.entropy() + g.expected_energy();
        for k in 0..20 {
            // even k: small tilts of μ_n, odd k: sparse random measures
            let w: Vec<f64> = if k % 2 == 0 {
                let eps = 0.5f64.powi(k / 2);
                g.probs.iter().map(|&p| p * (eps * rng.gen_range(-1.0..1.0)).exp()).collect()
            } else {
                g.probs.iter().map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen::<f64>() }).collect()
            };
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                continue;
            }
            let f: f64 = w
                .iter()
                .zip(&g.energies)
                .filter(|(q, _)| **q > 0.0)
                .map(|(q, e)| {
                    let q = q / total;
                    q * (e - q.ln())
                })
                .sum();
            worst = worst.max(f - top);
        }
    }
    Ok((worst <= 1e-9, format!("max F(ν) - F(μ_n) = {worst:.3e} over 200 measures")))
}

fn random_connected_graph(rng: &mut ChaCha8Rng) -> (usize, Vec<(usize, usize)>) {
    let n = rng.gen_range(1..=8);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.gen_bool(0.3) {
                edges.push((u, v));
            }
        }
    }
    (n, edges)
}

fn brute_marginal(n: usize, edges: &[(usize, usize)], root: usize, lambda: f64, pins: &[Option<bool>]) -> f64 {
    let (mut z, mut z1) = (0.0, 0.0);
    for set in 0u32..1 << n {
        let has = |v: usize| set >> v & 1 == 1;
        if edges.iter().any(|&(u, v)| has(u) && has(v)) || (0..n).any(|v| pins[v].is_some_and(|p| p != has(v))) {
            continue;
        }
        let w = lambda.powi(set.count_ones() as i32);
        z += w;
        if has(root) {
            z1 += w;
        }
    }
    z1 / z
}

fn c8_weitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for _ in 0..100 {
        let (n, edges) = random_connected_graph(&mut rng);
        let g = SimpleGraph::new(n, &edges)?;
        // pins copied from a random independent set stay consistent
        let mut occupied = vec![false; n];
        for v in 0..n {
            occupied[v] = rng.gen_bool(0.4) && !edges.iter().any(|&(a, b)| (a == v && occupied[b]) || (b == v && occupied[a]));
        }
        let pins: Vec<Option<bool>> = (0..n).map(|v| rng.gen_bool(0.3).then_some(occupied[v])).collect();
        let root = rng.gen_range(0..n);
        for lambda in [0.5, 1.0, 2.0] {
            let saw = hardcore_marginal_via_saw(&g, root, &vec![lambda; n], &pins)?;
            worst = worst.max((saw - brute_marginal(n, &edges, root, lambda, &pins)).abs());
            checks += 1;
        }
    }
    Ok((worst < 1e-10, format!("{checks} cases, max |saw - brute| = {worst:.2e}")))
}

fn c9_correction() -> Outcome {
    let (s, p) = hardcore(1.0, 2);
    let sigma = build_torus(2, 6)?;
    let b2 = GroupSpec::zd(2).ball(2)?;
    let space = DerivedSpace::new(sigma.clone(), s, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = 0;
    for _ in 0..1000 {
        let density = rng.gen_range(0.0..1.0);
        let x = soficlab::derived::Configuration::new((0..36).map(|_| rng.gen_bool(density) as u8).collect());
        let mut region = vec![false; 36];
        for u in error_set(&space, &x) {
            for w in sigma.window(&b2, u) {
                region[w] = true;
            }
        }
        let y = correct_errors(&space, &x)?;
        let agrees = (0..36).all(|v| region[v] || x.values[v] == y.values[v]);
        if !is_in_xn(&space, &y) || !agrees || region != correction_region(&space, &x) {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{failures} failures in 1000 configurations")))
}

/// The witness is inadmissible while each range window of it is admissible.
fn replay(structure: &ConstraintStructure, spec: &GroupSpec, range: usize, support: &[soficlab::cayley::GroupElement], values: &[u8]) -> Result<bool> {
    let whole = Pattern::from_pairs(support.iter().cloned().zip(values.iter().copied()));
    if is_globally_admissible(structure, spec, &whole, 4)? != Verdict::No {
        return Ok(false);
    }
    let window = spec.ball(range)?;
    for g in support {
        let pairs = support.iter().zip(values).filter(|(h, _)| {
            window.elements.iter().any(|w| spec.mul(g, w) == **h)
        });
        let part = Pattern::from_pairs(pairs.map(|(h, &a)| (h.clone(), a)));
        if is_globally_admissible(structure, spec, &part, 4)? != Verdict::Yes {
            return Ok(false);
        }
    }
    Ok(true)
}

fn c10_tssm() -> Outcome {
    let z1 = GroupSpec::zd(1);
    let hard = check_tssm(&ConstraintStructure::hardcore(2), &GroupSpec::zd(2), 1, 3, 3)?;
    let full = check_tssm(&ConstraintStructure::full_shift(3, 1), &z1, 1, 3, 3)?;
    let checker = ConstraintStructure::checkerboard(1);
    let witness = match check_tssm(&checker, &z1, 1, 3, 3)? {
        TssmVerdict::ViolatedAt { support, values } => replay(&checker, &z1, 1, &support, &values)?,
        _ => false,
    };
    let ok = matches!(hard, TssmVerdict::SafeSymbolCertified { .. })
        && matches!(full, TssmVerdict::SafeSymbolCertified { .. })
        && witness;
    Ok((ok, format!("hardcore {hard:?}; full shift {full:?}; checkerboard witness replayed: {witness}")))
}

fn c11_threshold() -> Outcome {
    let got = [weitz_threshold(3)?, weitz_threshold(4)?, weitz_threshold(5)?];
    let ok = got == [4.0, 1.6875, 256.0 / 243.0];
    Ok((ok, format!("{got:?}")))
}

fn c12_local_weakstar() -> Outcome {
    let (s, p) = hardcore(1.0, 1);
    let reference = reference_marginal_1d(&s, &p, 1)?;
    let gaps = [8, 16, 32]
        .iter()
        .map(|&m| {
            let space = DerivedSpace::new(build_torus(1, m)?, s.clone(), p.clone())?;
            local_weakstar_gap(&space, &reference, 0.01, Probe::Transfer1D)
        })
        .collect::<Result<Vec<f64>>>()?;
    let exact = [8, 16]
        .iter()
        .map(|&m| {
            let space = DerivedSpace::new(build_torus(1, m)?, s.clone(), p.clone())?;
            local_weakstar_gap(&space, &reference, 0.01, Probe::Exact)
        })
        .collect::<Result<Vec<f64>>>()?;
    let ok = gaps.windows(2).all(|w| w[1] <= w[0]) && gaps[2] < 0.05 && exact[..] == gaps[..2];
    Ok((ok, format!("gap fractions m=8,16,32: {gaps:?}, exact probe m=8,16: {exact:?}")))
}

fn c13_sofic_independence() -> Outcome {
    let torus = pressure_at(1.0, Builder::Torus { d: 1 }, 64, MethodChoice::Auto)?;
    let folner = pressure_at(1.0, Builder::Folner { d: 1 }, 64, MethodChoice::Auto)?;
    let gap = (torus - folner).abs();
    Ok((gap < 1e-3, format!("torus {torus:.7}, folner {folner:.7}, gap {gap:.2e}")))
}

fn c14_mcmc() -> Outcome {
    let (s1, p1) = hardcore(1.0, 1);
    let c4 = DerivedSpace::with_enforcement(build_torus(1, 4)?, s1, p1, Enforcement::AllEdges)?;
    let opts = McmcOptions { seed: 14, ..Default::default() };
    let z_c4 = partition_mcmc(&c4, &opts)?.log_z;
    let (s2, p2) = hardcore(1.0, 2);
    let t4 = DerivedSpace::with_enforcement(build_torus(2, 4)?, s2, p2, Enforcement::AllEdges)?;
    let z_t4 = partition_mcmc(&t4, &opts)?.log_z;
    let exact = partition_exact(&t4)?.log_z;
    let (g1, g2) = ((z_c4 - 7f64.ln()).abs(), (z_t4 - exact).abs());
    Ok((
        g1 < 0.02 && g2 < 0.03,
        format!("C4: {z_c4:.4} vs log 7 (gap {g1:.4}); 4x4 torus: {z_t4:.4} vs exact {exact:.4} (gap {g2:.4})"),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, f64); 14] = [
        ("golden-mean pressure", c1_golden_mean, 1.0),
        ("lambda=2 pressure", c2_lambda_two, 1.0),
        ("Kieffer-Pinsker fixed point", c3_kieffer_pinsker, 180.0),
        ("nu-independence", c4_nu_independence, 120.0),
        ("percolative entropy", c5_entropy, f64::INFINITY),
        ("equilibrium identity", c6_equilibrium_identity, 30.0),
        ("Gibbs maximality", c7_gibbs_maximality, f64::INFINITY),
        ("Weitz SAW equivalence", c8_weitz, 30.0),
        ("correction contract", c9_correction, 10.0),
        ("TSSM checker", c10_tssm, 5.0),
        ("lambda_c(Delta)", c11_threshold, f64::INFINITY),
        ("local weak* convergence", c12_local_weakstar, 60.0),
        ("sofic independence proxy", c13_sofic_independence, 5.0),
        ("MCMC partition sanity", c14_mcmc, 120.0),
    ];
    let mut failed = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && secs < *limit, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let limit = if limit.is_finite() { format!(" < {limit}s") } else { String::new() };
        println!("{} {:>2}. {name} [{secs:.2}s{limit}] {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
        failed += usize::from(!ok);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
