//! The infinite-volume Gibbs measure of a ℤ¹ nearest-neighbour model as a
//! stationary Markov chain built from the Perron data of its transfer matrix.

use rand::Rng;

use crate::derived::{mat_mul, transfer_matrix};
use crate::error::{Error, Result};
use crate::shift::{ConstraintStructure, Potential, Symbol};

#[derive(Clone, Debug)]
pub struct StationaryChain {
    alphabet: usize,
    /// Transition matrix `P[a][b] = T[a][b]·r[b] / (ρ·r[a])`.
    pub transition: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    /// Perron root `ρ` of `T`; `log ρ` is the pressure.
    pub perron_root: f64,
    /// `P⁰, P¹, …` as far as computed.
    powers: Vec<Vec<Vec<f64>>>,
}

fn perron_vector(m: &[Vec<f64>], transpose: bool) -> Vec<f64> {
    let a = m.len();
    let mut v = vec![1.0 / a as f64; a];
    for _ in 0..100_000 {
        // (M + I) shares the Perron vector of M and is aperiodic
        let mut w: Vec<f64> = (0..a)
            .map(|i| v[i] + (0..a).map(|j| if transpose { m[j][i] * v[j] } else { m[i][j] * v[j] }).sum::<f64>())
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let diff: f64 = w.iter().zip(&v).map(|(x, y)| (x - y).abs()).sum();
        v = w;
        if diff < 1e-16 {
            break;
        }
    }
    v
}

impl StationaryChain {
    pub fn new(structure: &ConstraintStructure, potential: &Potential) -> Result<Self> {
        if structure.rank() != 1 {
            return Err(Error::InvalidArgument("stationary chains need a single generator".into()));
        }
        potential.check_structure(structure)?;
        let t = transfer_matrix(structure, potential, true);
        let a = t.len();
        let right = perron_vector(&t, false);
        let left = perron_vector(&t, true);
        let tr: Vec<f64> = (0..a).map(|i| (0..a).map(|j| t[i][j] * right[j]).sum()).collect();
        let (num, den) = (tr.iter().sum::<f64>(), right.iter().sum::<f64>());
        let rho = num / den;
        if !(rho > 0.0) {
            return Err(Error::EmptyFiber);
        }
        let transition: Vec<Vec<f64>> = (0..a)
            .map(|i| {
                (0..a)
                    .map(|j| if right[i] > 0.0 { t[i][j] * right[j] / (rho * right[i]) } else { 0.0 })
                    .collect()
            })
            .collect();
        let norm: f64 = (0..a).map(|i| left[i] * right[i]).sum();
        let stationary: Vec<f64> = (0..a).map(|i| left[i] * right[i] / norm).collect();
        let id: Vec<Vec<f64>> = (0..a).map(|i| (0..a).map(|j| (i == j) as u8 as f64).collect()).collect();
        Ok(StationaryChain { alphabet: a, transition, stationary, perron_root: rho, powers: vec![id] })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn pressure(&self) -> f64 {
        self.perron_root.ln()
    }

    /// Makes `P^k` available for `k ≤ max`.
    pub fn ensure_powers(&mut self, max: usize) {
        while self.powers.len() <= max {
            let next = mat_mul(self.powers.last().expect("identity"), &self.transition);
            self.powers.push(next);
        }
    }

    pub fn power(&self, k: usize) -> &[Vec<f64>] {
        &self.powers[k]
    }

    pub fn max_power(&self) -> usize {
        self.powers.len() - 1
    }

    /// Probability of the word `x_0 x_1 … x_{L-1}` at consecutive sites.
    pub fn word_probability(&self, word: &[Symbol]) -> f64 {
        let Some(&first) = word.first() else { return 1.0 };
        let mut p = self.stationary[first as usize];
        for w in word.windows(2) {
            p *= self.transition[w[0] as usize][w[1] as usize];
        }
        p
    }

    /// `P(x_0 = · | x_{-l} = b, x_r = c)` from the nearest pins on each
    /// side; `None` for a missing side. Requires the needed powers.
    pub fn conditional(&self, left: Option<(usize, Symbol)>, right: Option<(usize, Symbol)>) -> Result<Vec<f64>> {
        let a = self.alphabet;
        let need = left.map_or(0, |(l, _)| l) + right.map_or(0, |(r, _)| r);
        if need > self.max_power() {
            return Err(Error::Oracle(format!("transition power {need} not precomputed")));
        }
        let mut w: Vec<f64> = (0..a)
            .map(|x| {
                let lhs = match left {
                    Some((l, b)) => self.powers[l][b as usize][x],
                    None => self.stationary[x],
                };
                let rhs = match right {
                    Some((r, c)) => self.powers[r][x][c as usize],
                    None => 1.0,
                };
                lhs * rhs
            })
            .collect();
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::InconsistentPins("conditioning event has probability zero".into()));
        }
        w.iter_mut().for_each(|x| *x /= s);
        Ok(w)
    }

    /// Exact sample of `L` consecutive sites.
    pub fn sample_word<R: Rng>(&self, len: usize, rng: &mut R) -> Vec<Symbol> {
        let draw = |p: &[f64], rng: &mut R| -> Symbol {
            let mut u = rng.gen::<f64>();
            let mut last = 0;
            for (i, &q) in p.iter().enumerate() {
                if q > 0.0 {
                    last = i;
                    if u < q {
                        return i as Symbol;
                    }
                    u -= q;
                }
            }
            last as Symbol
        };
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut x = draw(&self.stationary, rng);
        out.push(x);
        for _ in 1..len {
            x = draw(&self.transition[x as usize], rng);
            out.push(x);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_mean_chain() {
        let c = StationaryChain::new(&ConstraintStructure::hardcore(1), &Potential::hardcore(1.0, 1)).unwrap();
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((c.perron_root - g).abs() < 1e-12);
        // occupation density 1/(1+g²)
        assert!((c.stationary[1] - 1.0 / (1.0 + g * g)).abs() < 1e-12);
    }

    #[test]
    fn lambda_two_density_is_one_third() {
        let c = StationaryChain::new(&ConstraintStructure::hardcore(1), &Potential::hardcore(2.0, 1)).unwrap();
        assert!((c.pressure() - 2f64.ln()).abs() < 1e-12);
        assert!((c.stationary[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_chain_is_handled() {
        let c = StationaryChain::new(&ConstraintStructure::checkerboard(1), &Potential::zero(2, 1)).unwrap();
        assert!((c.perron_root - 1.0).abs() < 1e-12);
        assert!((c.stationary[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conditionals_from_nearest_pins() {
        let mut c = StationaryChain::new(&ConstraintStructure::hardcore(1), &Potential::hardcore(1.0, 1)).unwrap();
        c.ensure_powers(4);
        let p = c.conditional(Some((1, 0)), Some((1, 0))).unwrap();
        assert!((p[1] - 0.5).abs() < 1e-12);
        let p = c.conditional(Some((1, 1)), None).unwrap();
        assert_eq!(p[1], 0.0);
        assert!(c.conditional(Some((3, 0)), Some((3, 0))).is_err());
    }
}
