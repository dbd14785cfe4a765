//! Finite abelian groups given by a Cayley table: invariant-factor
//! decomposition, discrete logarithms with respect to chosen generators, and
//! the full character group with exact rational phases.
use crate::error::{Error, Result};
use crate::linalg::{smith_normal_form, IMat};
use crate::numeric::{e_rat, C64};
use num_integer::Integer;

/// A finite abelian group presented by its multiplication table.
#[derive(Clone, Debug)]
pub struct FiniteAbelianGroup {
    /// `table[i][j]` is the index of the product of elements `i` and `j`.
    pub table: Vec<Vec<usize>>,
    pub identity: usize,
    /// Chosen generators (element indices).
    pub generators: Vec<usize>,
    /// Exponent vector of each element with respect to `generators`.
    pub logs: Vec<Vec<i128>>,
    /// Triangular relation matrix among the generators (rows are relations).
    pub relations: IMat,
    /// Invariant factors (all entries, including ones).
    pub smith_diag: Vec<i128>,
    /// Column transform from Smith normal form of `relations`.
    smith_v: IMat,
}

/// A character of a finite abelian group, stored as exact phases.
#[derive(Clone, Debug, PartialEq)]
pub struct Character {
    /// Value at element `i` is `e(num[i] / den)`.
    pub num: Vec<i128>,
    pub den: i128,
}

impl Character {
    pub fn value(&self, i: usize) -> C64 {
        e_rat(self.num[i], self.den)
    }

    pub fn values(&self) -> Vec<C64> {
        (0..self.num.len()).map(|i| self.value(i)).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.num.iter().all(|&n| n.rem_euclid(self.den) == 0)
    }

    /// Whether all values are real (the character is of order at most 2).
    pub fn is_real(&self) -> bool {
        self.num.iter().all(|&n| (2 * n).rem_euclid(self.den) == 0)
    }
}

impl FiniteAbelianGroup {
    /// Builds the decomposition from a Cayley table after checking the group axioms.
    pub fn from_table(table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n == 0 || table.iter().any(|r| r.len() != n || r.iter().any(|&x| x >= n)) {
            return Err(Error::Validation("malformed Cayley table".into()));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|x| table[e][x] == x && table[x][e] == x))
            .ok_or_else(|| Error::Validation("Cayley table has no identity".into()))?;
        for a in 0..n {
            for b in 0..n {
                if table[a][b] != table[b][a] {
                    return Err(Error::Validation("Cayley table is not commutative".into()));
                }
            }
            if !(0..n).any(|b| table[a][b] == identity) {
                return Err(Error::Validation("element without inverse".into()));
            }
        }
        let mut generators: Vec<usize> = vec![];
        let mut logs: Vec<Option<Vec<i128>>> = vec![None; n];
        logs[identity] = Some(vec![]);
        let mut members = vec![identity];
        let mut relations: Vec<Vec<i128>> = vec![];
        while members.len() < n {
            let g = (0..n).find(|&x| logs[x].is_none()).unwrap();
            let k = generators.len();
            // Smallest m with g^m in the current subgroup.
            let mut m = 1usize;
            let mut pow = g;
            while logs[pow].is_none() {
                pow = table[pow][g];
                m += 1;
            }
            let mut rel = logs[pow].clone().unwrap();
            rel.resize(k + 1, 0);
            let mut row: Vec<i128> = rel.iter().map(|x| -x).collect();
            row[k] = m as i128;
            for r in relations.iter_mut() {
                r.push(0);
            }
            relations.push(row);
            generators.push(g);
            for l in logs.iter_mut().flatten() {
                l.resize(k + 1, 0);
            }
            // New subgroup = old members times g^j, 0 <= j < m.
            let old = members.clone();
            let mut gj = identity;
            for j in 1..m {
                gj = table[gj][g];
                for &h in &old {
                    let x = table[h][gj];
                    if logs[x].is_none() {
                        let mut v = logs[h].clone().unwrap();
                        v[k] = j as i128;
                        logs[x] = Some(v);
                        members.push(x);
                    }
                }
            }
        }
        let logs: Vec<Vec<i128>> = logs
            .into_iter()
            .map(|l| {
                let mut v = l.unwrap();
                v.resize(generators.len(), 0);
                v
            })
            .collect();
        // Exhaustive associativity check for small groups, sampled otherwise.
        let probe: Vec<usize> = if n <= 64 { (0..n).collect() } else { vec![0, n / 2, n - 1] };
        for a in 0..n {
            for b in 0..n {
                for &c in &probe {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::Validation("Cayley table is not associative".into()));
                    }
                }
            }
        }
        let (smith_diag, smith_v) = if generators.is_empty() {
            (vec![], vec![])
        } else {
            let s = smith_normal_form(&relations);
            (s.diag, s.v)
        };
        Ok(Self { table, identity, generators, logs, relations, smith_diag, smith_v })
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    /// Invariant factors greater than one, each dividing the next.
    pub fn invariant_factors(&self) -> Vec<i128> {
        self.smith_diag.iter().copied().filter(|&d| d > 1).collect()
    }

    /// Exponent of the group.
    pub fn exponent(&self) -> i128 {
        self.smith_diag.iter().fold(1, |a, d| a.lcm(d))
    }

    pub fn inverse(&self, a: usize) -> usize {
        (0..self.order()).find(|&b| self.table[a][b] == self.identity).unwrap()
    }

    /// Element order.
    pub fn element_order(&self, a: usize) -> usize {
        let mut x = a;
        let mut k = 1;
        while x != self.identity {
            x = self.table[x][a];
            k += 1;
        }
        k
    }

    /// All characters; the trivial character comes first.
    pub fn characters(&self) -> Vec<Character> {
        let n = self.order();
        let k = self.generators.len();
        if k == 0 {
            return vec![Character { num: vec![0; n], den: 1 }];
        }
        let den = self.exponent();
        let d = &self.smith_diag;
        let total: i128 = d.iter().product();
        let mut out = Vec::with_capacity(total as usize);
        for idx in 0..total {
            // Mixed-radix digits t_i in Z/d_i.
            let mut t = vec![0i128; k];
            let mut r = idx;
            for i in 0..k {
                t[i] = r % d[i];
                r /= d[i];
            }
            // theta_j = sum_i V[j][i] t_i / d_i, scaled by den.
            let theta: Vec<i128> =
                (0..k).map(|j| (0..k).map(|i| self.smith_v[j][i] * t[i] * (den / d[i])).sum::<i128>()).collect();
            let num = self
                .logs
                .iter()
                .map(|x| x.iter().zip(&theta).map(|(a, b)| a * b).sum::<i128>().rem_euclid(den))
                .collect();
            out.push(Character { num, den });
        }
        out
    }
}
