//! Exact inference on finite nearest-neighbour fields by variable
//! elimination in the log domain (greedy min-degree order).

use std::collections::BTreeSet;

use crate::cayley::CayleyBall;
use crate::error::{Error, Result};
use crate::shift::{ConstraintStructure, Potential, Symbol};

/// Largest intermediate table variable elimination may allocate.
pub const DEFAULT_TABLE_CAP: usize = 1 << 22;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Clone, Debug)]
struct Factor {
    vars: Vec<usize>,
    table: Vec<f64>,
}

/// A finite field: sites with unary log-weights and pairwise log-weight
/// tables (`-inf` marks forbidden pairs).
#[derive(Clone, Debug)]
pub struct LocalField {
    alphabet: usize,
    unary: Vec<Vec<f64>>,
    edges: Vec<(usize, usize, Vec<f64>)>,
    table_cap: usize,
}

impl LocalField {
    pub fn new(alphabet: usize, unary: Vec<Vec<f64>>, edges: Vec<(usize, usize, Vec<f64>)>) -> Self {
        LocalField { alphabet, unary, edges, table_cap: DEFAULT_TABLE_CAP }
    }

    /// The induced field on a Cayley ball: `h` at every site and `J_s`
    /// (restricted to allowed pairs) on every internal edge.
    pub fn from_ball(ball: &CayleyBall, structure: &ConstraintStructure, potential: &Potential) -> Self {
        let a = structure.alphabet();
        let unary = vec![potential.vertex.clone(); ball.len()];
        let edges = ball
            .edges
            .iter()
            .map(|e| (e.from, e.to, pair_table(structure, potential, e.gen)))
            .collect();
        LocalField::new(a, unary, edges)
    }

    pub fn with_table_cap(mut self, cap: usize) -> Self {
        self.table_cap = cap;
        self
    }

    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Log of the total weight of completions of `pins`; `-inf` when none exists.
    pub fn log_partition(&self, pins: &[Option<Symbol>]) -> Result<f64> {
        let (constant, factors, free) = self.reduce(pins)?;
        if constant == f64::NEG_INFINITY {
            return Ok(constant);
        }
        let rest = self.eliminate(factors, &free, None)?;
        Ok(constant + rest.iter().map(|f| f.table[0]).sum::<f64>())
    }

    /// Conditional distribution of `site` given `pins`, or `None` if the
    /// pins admit no completion.
    pub fn marginal(&self, site: usize, pins: &[Option<Symbol>]) -> Result<Option<Vec<f64>>> {
        if let Some(a) = pins[site] {
            let z = self.log_partition(pins)?;
            if z == f64::NEG_INFINITY {
                return Ok(None);
            }
            let mut p = vec![0.0; self.alphabet];
            p[a as usize] = 1.0;
            return Ok(Some(p));
        }
        let (constant, factors, free) = self.reduce(pins)?;
        if constant == f64::NEG_INFINITY {
            return Ok(None);
        }
        let rest = self.eliminate(factors, &free, Some(site))?;
        let mut logp = vec![0.0; self.alphabet];
        for f in &rest {
            if f.vars.is_empty() {
                continue;
            }
            debug_assert_eq!(f.vars, vec![site]);
            for (x, l) in logp.iter_mut().enumerate() {
                *l += f.table[x];
            }
        }
        let z = log_sum_exp(&logp);
        if z == f64::NEG_INFINITY {
            return Ok(None);
        }
        Ok(Some(logp.iter().map(|l| (l - z).exp()).collect()))
    }

    fn reduce(&self, pins: &[Option<Symbol>]) -> Result<(f64, Vec<Factor>, Vec<usize>)> {
        if pins.len() != self.len() {
            return Err(Error::InvalidArgument("pin vector length differs from field size".into()));
        }
        let a = self.alphabet;
        let mut constant = 0.0;
        let mut unary = self.unary.clone();
        for (i, p) in pins.iter().enumerate() {
            if let Some(x) = *p {
                if x as usize >= a {
                    return Err(Error::InvalidArgument(format!("pin symbol {x} out of range")));
                }
                constant += self.unary[i][x as usize];
            }
        }
        let mut factors = Vec::new();
        for (u, v, t) in &self.edges {
            match (pins[*u], pins[*v]) {
                (Some(x), Some(y)) => constant += t[x as usize * a + y as usize],
                (Some(x), None) => {
                    for y in 0..a {
                        unary[*v][y] += t[x as usize * a + y];
                    }
                }
                (None, Some(y)) => {
                    for x in 0..a {
                        unary[*u][x] += t[x * a + y as usize];
                    }
                }
                (None, None) => {
                    if u == v {
                        for x in 0..a {
                            unary[*u][x] += t[x * a + x];
                        }
                    } else if u < v {
                        factors.push(Factor { vars: vec![*u, *v], table: t.clone() });
                    } else {
                        let mut tt = vec![0.0; a * a];
                        for x in 0..a {
                            for y in 0..a {
                                tt[y * a + x] = t[x * a + y];
                            }
                        }
                        factors.push(Factor { vars: vec![*v, *u], table: tt });
                    }
                }
            }
        }
        let free: Vec<usize> = (0..self.len()).filter(|&i| pins[i].is_none()).collect();
        for &i in &free {
            factors.push(Factor { vars: vec![i], table: unary[i].clone() });
        }
        Ok((constant, factors, free))
    }

    fn eliminate(&self, mut factors: Vec<Factor>, free: &[usize], keep: Option<usize>) -> Result<Vec<Factor>> {
        let a = self.alphabet;
        let n = self.len();
        let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for f in &factors {
            for &x in &f.vars {
                for &y in &f.vars {
                    if x != y {
                        nbrs[x].insert(y);
                    }
                }
            }
        }
        let mut alive: BTreeSet<usize> = free.iter().copied().filter(|&v| Some(v) != keep).collect();
        while let Some(&v) = alive.iter().min_by_key(|&&v| (nbrs[v].len(), v)) {
            alive.remove(&v);
            let scope: Vec<usize> = nbrs[v].iter().copied().collect();
            let size = a.checked_pow(scope.len() as u32 + 1).unwrap_or(usize::MAX);
            if size > self.table_cap {
                return Err(Error::CapExceeded { what: "elimination table", requested: size, cap: self.table_cap });
            }
            let (touching, others): (Vec<Factor>, Vec<Factor>) =
                factors.into_iter().partition(|f| f.vars.contains(&v));
            factors = others;
            factors.push(sum_out(&touching, v, &scope, a));
            for &x in &scope {
                nbrs[x].remove(&v);
                for &y in &scope {
                    if x != y {
                        nbrs[x].insert(y);
                    }
                }
            }
            nbrs[v].clear();
        }
        // fold scalars together
        let mut scalar = 0.0;
        let mut out = Vec::new();
        for f in factors {
            if f.vars.is_empty() {
                scalar += f.table[0];
            } else {
                out.push(f);
            }
        }
        out.push(Factor { vars: vec![], table: vec![scalar] });
        Ok(out)
    }
}

pub(crate) fn pair_table(structure: &ConstraintStructure, potential: &Potential, gen: usize) -> Vec<f64> {
    let a = structure.alphabet();
    let mut t = vec![f64::NEG_INFINITY; a * a];
    for x in 0..a {
        for y in 0..a {
            if structure.allowed(gen, x as Symbol, y as Symbol) {
                t[x * a + y] = potential.edge_weight(gen, x as Symbol, y as Symbol);
            }
        }
    }
    t
}

fn sum_out(factors: &[Factor], v: usize, scope: &[usize], a: usize) -> Factor {
    let k = scope.len();
    let size = a.pow(k as u32);
    // for each factor, position of each of its vars in (scope ++ [v])
    let maps: Vec<Vec<usize>> = factors
        .iter()
        .map(|f| {
            f.vars
                .iter()
                .map(|x| if *x == v { k } else { scope.iter().position(|y| y == x).expect("scope") })
                .collect()
        })
        .collect();
    let mut table = vec![f64::NEG_INFINITY; size];
    let mut assign = vec![0usize; k + 1];
    for (idx, slot) in table.iter_mut().enumerate() {
        let mut r = idx;
        for j in (0..k).rev() {
            assign[j] = r % a;
            r /= a;
        }
        let mut acc = f64::NEG_INFINITY;
        for x in 0..a {
            assign[k] = x;
            let mut s = 0.0;
            for (f, m) in factors.iter().zip(&maps) {
                let mut fi = 0;
                for &p in m {
                    fi = fi * a + assign[p];
                }
                s += f.table[fi];
                if s == f64::NEG_INFINITY {
                    break;
                }
            }
            acc = log_add(acc, s);
        }
        *slot = acc;
    }
    Factor { vars: scope.to_vec(), table }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley::GroupSpec;

    fn brute(field: &LocalField, pins: &[Option<Symbol>]) -> f64 {
        let n = field.len();
        let a = field.alphabet;
        let mut acc = f64::NEG_INFINITY;
        let total = a.pow(n as u32);
        'outer: for code in 0..total {
            let mut x = vec![0usize; n];
            let mut r = code;
            for xi in x.iter_mut() {
                *xi = r % a;
                r /= a;
            }
            for i in 0..n {
                if let Some(p) = pins[i] {
                    if p as usize != x[i] {
                        continue 'outer;
                    }
                }
            }
            let mut s: f64 = (0..n).map(|i| field.unary[i][x[i]]).sum();
            for (u, v, t) in &field.edges {
                s += t[x[*u] * a + x[*v]];
            }
            acc = log_add(acc, s);
        }
        acc
    }

    #[test]
    fn path_partition_matches_fibonacci() {
        let spec = GroupSpec::zd(1);
        let ball = spec.ball(3).unwrap(); // 7 sites on a path
        let f = LocalField::from_ball(&ball, &ConstraintStructure::hardcore(1), &Potential::hardcore(1.0, 1));
        let z = f.log_partition(&[None; 7]).unwrap();
        assert!((z - 34f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn z2_ball_matches_brute_force() {
        let spec = GroupSpec::zd(2);
        let ball = spec.ball(2).unwrap();
        let pot = Potential::new(vec![0.1, 0.7], vec![vec![vec![0.0, 0.2], vec![-0.3, 0.0]]; 2]).unwrap();
        let f = LocalField::from_ball(&ball, &ConstraintStructure::hardcore(2), &pot);
        let mut pins = vec![None; ball.len()];
        pins[5] = Some(1);
        pins[9] = Some(0);
        let z = f.log_partition(&pins).unwrap();
        assert!((z - brute(&f, &pins)).abs() < 1e-10);
        let m = f.marginal(0, &pins).unwrap().unwrap();
        let mut p0 = pins.clone();
        p0[0] = Some(1);
        let expect = (brute(&f, &p0) - z).exp();
        assert!((m[1] - expect).abs() < 1e-10);
    }

    #[test]
    fn empty_fiber_is_reported() {
        let spec = GroupSpec::zd(1);
        let ball = spec.ball(1).unwrap(); // 0, 1, -1
        let f = LocalField::from_ball(&ball, &ConstraintStructure::checkerboard(1), &Potential::zero(2, 1));
        let pins = vec![None, Some(0), Some(1)];
        assert_eq!(f.marginal(0, &pins).unwrap(), None);
        assert_eq!(f.log_partition(&pins).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn free_group_ball_is_exact() {
        let spec = GroupSpec::free(2);
        let ball = spec.ball(2).unwrap();
        let f = LocalField::from_ball(&ball, &ConstraintStructure::hardcore(2), &Potential::hardcore(2.0, 2));
        let pins = vec![None; ball.len()];
        assert!((f.log_partition(&pins).unwrap() - brute(&f, &pins)).abs() < 1e-10);
    }

    #[test]
    fn table_cap_is_enforced() {
        let spec = GroupSpec::zd(2);
        let ball = spec.ball(3).unwrap();
        let f = LocalField::from_ball(&ball, &ConstraintStructure::full_shift(2, 2), &Potential::zero(2, 2))
            .with_table_cap(4);
        assert!(matches!(f.log_partition(&vec![None; ball.len()]), Err(Error::CapExceeded { .. })));
    }
}
