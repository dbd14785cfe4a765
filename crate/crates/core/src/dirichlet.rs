//! Dirichlet characters modulo `N` with exact phases, and their L-values
//! from Hurwitz zeta sums.
use crate::abelian::{Character, FiniteAbelianGroup};
use crate::error::{Error, Result};
use crate::linalg::factorize;
use crate::numeric::{hurwitz_zeta_reg, inv_zeta_one_plus, CSum, C64};
use num_integer::Integer;

/// The full character group of `(Z/N)^x`.
#[derive(Clone, Debug)]
pub struct DirichletGroup {
    pub modulus: i128,
    /// Residues in `[0, N)` coprime to `N`, in group-index order.
    pub units: Vec<i128>,
    /// `index[a]` is the group index of `a`, or `None` when `gcd(a, N) > 1`.
    index: Vec<Option<usize>>,
    /// Characters; the principal character comes first.
    pub chars: Vec<Character>,
    primes: Vec<i128>,
}

impl DirichletGroup {
    pub fn new(n: i128) -> Result<Self> {
        if !(1..=1_000_000).contains(&n) {
            return Err(Error::Validation(format!("unsupported modulus {n}")));
        }
        let units: Vec<i128> = (0..n).filter(|a| a.gcd(&n) == 1).collect();
        let mut index = vec![None; n as usize];
        for (i, &a) in units.iter().enumerate() {
            index[a as usize] = Some(i);
        }
        let table: Vec<Vec<usize>> =
            units.iter().map(|&a| units.iter().map(|&b| index[((a * b) % n) as usize].unwrap()).collect()).collect();
        let group = FiniteAbelianGroup::from_table(table)?;
        let chars = group.characters();
        let primes = factorize(n as u64).into_iter().map(|(p, _)| p as i128).collect();
        Ok(DirichletGroup { modulus: n, units, index, chars, primes })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Group index of the residue `a`, if it is a unit.
    pub fn unit_index(&self, a: i128) -> Option<usize> {
        self.index[a.rem_euclid(self.modulus) as usize]
    }

    /// `chi_k(a)`, zero when `gcd(a, N) > 1`.
    pub fn value(&self, k: usize, a: i128) -> C64 {
        match self.unit_index(a) {
            Some(i) => self.chars[k].value(i),
            None => C64::new(0.0, 0.0),
        }
    }

    pub fn is_principal(&self, k: usize) -> bool {
        self.chars[k].is_trivial()
    }

    /// Whether `chi_k(-1) = 1`.
    pub fn is_even(&self, k: usize) -> bool {
        (self.value(k, -1) - 1.0).norm() < 1e-9
    }

    /// Index of the complex conjugate character.
    pub fn conj_index(&self, k: usize) -> usize {
        let c = &self.chars[k];
        (0..self.len())
            .find(|&j| {
                let d = &self.chars[j];
                (0..c.num.len()).all(|i| (c.num[i] * d.den + d.num[i] * c.den).rem_euclid(c.den * d.den) == 0)
            })
            .expect("character group is closed under conjugation")
    }

    /// `L(s, chi_k)` for complex `s`; the principal character has a pole at `s = 1`.
    pub fn l_value(&self, k: usize, s: C64) -> C64 {
        let n = self.modulus as f64;
        let one = C64::new(1.0, 0.0);
        if self.is_principal(k) {
            let mut v = hurwitz_zeta_reg(s, 1.0) + one / (s - 1.0);
            for &p in &self.primes {
                v *= one - (-s * (p as f64).ln()).exp();
            }
            return v;
        }
        // sum_a chi(a) = 0, so the regularized Hurwitz values give the same sum.
        let mut acc = CSum::new();
        for (i, &a) in self.units.iter().enumerate() {
            acc.add(self.chars[k].value(i) * hurwitz_zeta_reg(s, a as f64 / n));
        }
        acc.value() * (-s * n.ln()).exp()
    }

    /// `1 / L(1 + s, chi_k)` for real `s`, analytic through `s = 0` for the
    /// principal character (where it vanishes).
    pub fn inv_l_one_plus(&self, k: usize, s: f64) -> C64 {
        if self.is_principal(k) {
            let mut v = inv_zeta_one_plus(s);
            for &p in &self.primes {
                v /= 1.0 - (p as f64).powf(-1.0 - s);
            }
            return C64::new(v, 0.0);
        }
        C64::new(1.0, 0.0) / self.l_value(k, C64::new(1.0 + s, 0.0))
    }
}

/// Kronecker-symbol character `n ↦ (d/n)` for a fundamental discriminant,
/// evaluated as an element of the Dirichlet group modulo `|d|`.
pub fn kronecker_l_value(d: i128, s: C64) -> Result<C64> {
    let g = DirichletGroup::new(d.abs())?;
    let target: Vec<f64> = g.units.iter().map(|&a| crate::quadorder::kronecker_symbol(d, a) as f64).collect();
    let k = (0..g.len())
        .find(|&k| g.units.iter().enumerate().all(|(i, _)| (g.chars[k].value(i) - target[i]).norm() < 1e-9))
        .ok_or_else(|| Error::Validation(format!("{d} does not define a character mod {}", d.abs())))?;
    Ok(g.l_value(k, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_l(g: &DirichletGroup, k: usize, s: f64, terms: i128) -> C64 {
        let mut acc = CSum::new();
        for n in 1..=terms {
            acc.add(g.value(k, n) * (n as f64).powf(-s));
        }
        acc.value()
    }

    #[test]
    fn character_counts_and_orthogonality() {
        for n in [1i128, 5, 8, 12, 40] {
            let g = DirichletGroup::new(n).unwrap();
            assert_eq!(g.len(), g.units.len());
            for j in 0..g.len() {
                for k in 0..g.len() {
                    let s: C64 = g.units.iter().map(|&a| g.value(j, a) * g.value(k, a).conj()).sum();
                    let expect = if j == k { g.units.len() as f64 } else { 0.0 };
                    assert!((s - expect).norm() < 1e-9);
                }
            }
            assert!(g.is_principal(0));
        }
    }

    #[test]
    fn l_values_match_direct_sums() {
        let g = DirichletGroup::new(12).unwrap();
        for k in 0..g.len() {
            let a = g.l_value(k, C64::new(3.0, 0.0));
            let b = direct_l(&g, k, 3.0, 200_000);
            assert!((a - b).norm() < 1e-9, "{k}: {a} vs {b}");
        }
    }

    #[test]
    fn l_one_of_quadratic_characters() {
        // L(1, chi_{-4}) = pi/4 and L(1, chi_5) = 2 log(phi)/sqrt(5).
        let v = kronecker_l_value(-4, C64::new(1.0, 0.0)).unwrap();
        assert!((v.re - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let v = kronecker_l_value(5, C64::new(1.0, 0.0)).unwrap();
        assert!((v.re - 2.0 * phi.ln() / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inverse_l_is_continuous_at_one() {
        let g = DirichletGroup::new(10).unwrap();
        for k in 0..g.len() {
            let a = g.inv_l_one_plus(k, 1e-6);
            let b = g.inv_l_one_plus(k, 0.0);
            assert!((a - b).norm() < 1e-5);
        }
        assert!(g.inv_l_one_plus(0, 0.0).norm() < 1e-15);
    }
}
