//! Rational quadratic spaces built from an ideal `a` of a real quadratic
//! order, their invariants, lattices of a given level, dual lattices and
//! discriminant groups.
//!
//! The space `V_A = a_Q + a_Q` carries two forms: `q_A(x, y, l) = Q_a(l) - xy`
//! and `Q_A(z1, z2) = Q_a(z1) - Q_a(z2)`, where `Q_a(l) = N(l)/N(a)`.
//! All lattice machinery works with the minimal even-integral rescaling of
//! the form.
use crate::error::{Error, Result};
use crate::linalg::{q, qi, qinv, qmat_mul, qmat_transpose, smith_normal_form, square_class, IMat, QMat, Q};
use crate::quadorder::{FractionalIdeal, QuadElem};
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

/// Default bound on the order of a discriminant group.
pub const DEFAULT_MAX_DISC_ORDER: usize = 1_000_000;

/// Which quadratic form is placed on which space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `q_A(x, y, l) = Q_a(l) - xy` on `Q + Q + a_Q`.
    #[serde(rename = "qA")]
    SmallQ,
    /// `Q_A(z1, z2) = Q_a(z1) - Q_a(z2)` on `a_Q + a_Q`.
    #[serde(rename = "QA")]
    BigQ,
    /// The negative-norm summand `(a_Q, -Q_a)`.
    V1,
    /// The positive-norm summand `(a_Q, Q_a)`.
    V2,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::SmallQ => "qA",
            Variant::BigQ => "QA",
            Variant::V1 => "V1",
            Variant::V2 => "V2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "qA" => Ok(Variant::SmallQ),
            "QA" => Ok(Variant::BigQ),
            "V1" => Ok(Variant::V1),
            "V2" => Ok(Variant::V2),
            _ => Err(Error::Validation(format!("unknown space variant `{s}`"))),
        }
    }
}

/// A quadratic space with an exact rational Gram matrix `((v_i, v_j))`,
/// where `(x, y) = Q(x + y) - Q(x) - Q(y)`.
#[derive(Clone, Debug)]
pub struct QuadraticSpaceModel {
    pub variant: Variant,
    pub ideal: FractionalIdeal,
    pub basis_tags: Vec<String>,
    pub gram: QMat,
    pub signature: (usize, usize),
}

/// Gram matrix of the bilinear form of `Q_a` on the basis `(alpha, z)`.
pub fn norm_form_gram(a: &FractionalIdeal) -> QMat {
    let b = [a.alpha, a.z];
    (0..2).map(|i| (0..2).map(|j| b[i].mul(&b[j].conj(), a.d_k).trace() / a.norm).collect()).collect()
}

fn block_diag(a: &QMat, b: &QMat) -> QMat {
    let n = a.len() + b.len();
    let mut m = vec![vec![Q::zero(); n]; n];
    for (i, row) in a.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            m[i][j] = *x;
        }
    }
    for (i, row) in b.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            m[a.len() + i][a.len() + j] = *x;
        }
    }
    m
}

fn neg_mat(a: &QMat) -> QMat {
    a.iter().map(|r| r.iter().map(|x| -*x).collect()).collect()
}

/// Congruence diagonalization of a symmetric rational matrix; the signs of
/// the returned entries give the signature (Sylvester's law of inertia).
pub fn diagonalize_symmetric(g: &QMat) -> Vec<Q> {
    let n = g.len();
    let mut a = g.clone();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if a[k][k].is_zero() {
            if let Some(j) = (k + 1..n).find(|&j| !a[j][j].is_zero()) {
                a.swap(k, j);
                for row in a.iter_mut() {
                    row.swap(k, j);
                }
            } else if let Some(j) = (k + 1..n).find(|&j| !a[k][j].is_zero()) {
                // Replace e_k by e_k + e_j, giving pivot 2 a_kj.
                for i in 0..n {
                    let v = a[j][i];
                    a[k][i] += v;
                }
                for i in 0..n {
                    let v = a[i][j];
                    a[i][k] += v;
                }
            }
        }
        let p = a[k][k];
        out.push(p);
        if p.is_zero() {
            continue;
        }
        for i in k + 1..n {
            let f = a[i][k] / p;
            if f.is_zero() {
                continue;
            }
            for j in k..n {
                let v = a[k][j];
                a[i][j] -= f * v;
            }
        }
        for j in k + 1..n {
            a[k][j] = Q::zero();
        }
        for i in k + 1..n {
            a[i][k] = Q::zero();
        }
    }
    out
}

/// Signature `(p, q)` of a nondegenerate symmetric matrix.
pub fn signature(g: &QMat) -> Result<(usize, usize)> {
    let d = diagonalize_symmetric(g);
    if d.iter().any(|x| x.is_zero()) {
        return Err(Error::Validation("degenerate Gram matrix".into()));
    }
    let p = d.iter().filter(|x| x.is_positive()).count();
    Ok((p, d.len() - p))
}

/// Builds the quadratic space of the given variant on the ideal's basis.
pub fn build_space(a: &FractionalIdeal, variant: Variant) -> Result<QuadraticSpaceModel> {
    let ga = norm_form_gram(a);
    let (gram, tags, declared): (QMat, Vec<&str>, (usize, usize)) = match variant {
        Variant::SmallQ => {
            let h = vec![vec![qi(0), qi(-1)], vec![qi(-1), qi(0)]];
            (block_diag(&h, &ga), vec!["e", "f", "alpha", "z"], (2, 2))
        }
        Variant::BigQ => (block_diag(&ga, &neg_mat(&ga)), vec!["w1", "w2", "w3", "w4"], (2, 2)),
        Variant::V1 => (neg_mat(&ga), vec!["alpha", "z"], (1, 1)),
        Variant::V2 => (ga, vec!["alpha", "z"], (1, 1)),
    };
    let sig = signature(&gram)?;
    if sig != declared {
        return Err(Error::Validation(format!(
            "variant {} has signature {sig:?}, expected {declared:?}",
            variant.name()
        )));
    }
    Ok(QuadraticSpaceModel {
        variant,
        ideal: a.clone(),
        basis_tags: tags.into_iter().map(String::from).collect(),
        gram,
        signature: sig,
    })
}

/// Gram entries of `q_A` in the basis `v1 = (alpha, z, 0)`, `v2 = (alpha, -z, 0)`,
/// `v3 = (0, 0, alpha)`, `v4 = (0, 0, z)`, where the first two coordinates
/// are read as elements of `K`. The entries are `K`-valued expressions.
pub fn k_valued_gram_small_q(a: &FractionalIdeal) -> Vec<Vec<QuadElem>> {
    let d = a.d_k;
    let az = a.alpha.mul(&a.z, d);
    let zero = QuadElem::rational(Q::zero());
    let r = |x: Q| QuadElem::rational(x);
    let n_alpha = a.alpha.norm(d) / a.norm;
    let n_z = a.z.norm(d) / a.norm;
    let tr = a.z.mul(&a.alpha.conj(), d).trace() / a.norm;
    vec![
        vec![az.scale(qi(-2)), zero, zero, zero],
        vec![zero, az.scale(qi(2)), zero, zero],
        vec![zero, zero, r(qi(2) * n_alpha), r(tr)],
        vec![zero, zero, r(tr), r(qi(2) * n_z)],
    ]
}

/// Centre of the even Clifford algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentreType {
    Split,
    Field,
}

/// Discriminant invariants of a rank-4 space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceInvariants {
    pub det: Q,
    pub square_class: i128,
    pub delta_sq: Q,
    pub centre: CentreType,
}

/// `d(V) = det(gram)`, its square class, `delta^2 = d(V)/16`, and the centre type.
pub fn space_invariants(v: &QuadraticSpaceModel) -> Result<SpaceInvariants> {
    if v.gram.len() != 4 {
        return Err(Error::Validation("space invariants require rank 4".into()));
    }
    gram_invariants(&v.gram)
}

/// Invariants of an arbitrary rank-4 Gram matrix.
pub fn gram_invariants(g: &QMat) -> Result<SpaceInvariants> {
    let det = crate::linalg::qdet(g);
    if det.is_zero() {
        return Err(Error::Validation("degenerate Gram matrix".into()));
    }
    let sc = square_class(det);
    Ok(SpaceInvariants {
        det,
        square_class: sc,
        delta_sq: det / qi(16),
        centre: if sc == 1 { CentreType::Split } else { CentreType::Field },
    })
}

/// How a lattice was constructed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeKind {
    /// `N^-1 a + N^-1 a` in `(V_A, Q_A)`.
    IdealSum { level: i128 },
    /// `N^-1 a` in `V1` or `V2`.
    IdealSummand { level: i128 },
    /// Image of the Eichler order `{[[a, b], [N c, d]]}` under an isometry
    /// `(M_2(Q), det) -> (V_A, Q_A)`.
    Eichler { level: i128 },
    /// Any lattice given by generators.
    Custom,
}

/// A lattice in a quadratic space, with the rescaling that makes it even.
#[derive(Clone, Debug)]
pub struct LatticeModel {
    pub ambient: QuadraticSpaceModel,
    /// Rows are generators in ambient coordinates.
    pub basis: QMat,
    /// Minimal positive rational making the form even integral.
    pub scale: Q,
    pub kind: LatticeKind,
}

/// Minimal positive `s` such that `s * Q(x)` is integer valued on the lattice
/// with the given Gram matrix.
pub fn minimal_even_scale(g: &QMat) -> Result<Q> {
    let n = g.len();
    let mut coeffs = vec![];
    for i in 0..n {
        coeffs.push(g[i][i] / qi(2));
        for j in i + 1..n {
            coeffs.push(g[i][j]);
        }
    }
    let num = coeffs.iter().fold(0i128, |acc, x| acc.gcd(x.numer()));
    if num == 0 {
        return Err(Error::Validation("zero quadratic form".into()));
    }
    let den = coeffs.iter().fold(1i128, |acc, x| acc.lcm(x.denom()));
    Ok(q(den, num))
}

/// Checks that `s` is exactly the minimal even-integral scale.
pub fn validate_scale(g: &QMat, s: Q) -> Result<()> {
    let m = minimal_even_scale(g)?;
    if s != m {
        let ratio = s / m;
        let reason =
            if ratio.is_integer() && ratio.is_positive() { "valid but not minimal" } else { "not even integral" };
        return Err(Error::Validation(format!("scale {s} is {reason} (minimal scale {m})")));
    }
    Ok(())
}

impl LatticeModel {
    /// Builds a lattice from generators, computing the minimal scale.
    pub fn new(ambient: QuadraticSpaceModel, basis: QMat, kind: LatticeKind) -> Result<Self> {
        let g = gram_of(&ambient.gram, &basis);
        let scale = minimal_even_scale(&g)?;
        Ok(Self { ambient, basis, scale, kind })
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// The same lattice with a prescribed scale, which must keep the form
    /// even integral (it need not be minimal). Used to compare a lattice
    /// with a sublattice under a common normalization.
    pub fn rescaled(&self, s: Q) -> Result<Self> {
        let ratio = s / minimal_even_scale(&self.gram())?;
        if !ratio.is_integer() || !ratio.is_positive() {
            return Err(Error::Validation(format!("scale {s} does not give an even integral form")));
        }
        let mut out = self.clone();
        out.scale = s;
        Ok(out)
    }

    /// Unscaled Gram matrix of the generators.
    pub fn gram(&self) -> QMat {
        gram_of(&self.ambient.gram, &self.basis)
    }

    /// Scaled even integral Gram matrix.
    pub fn scaled_gram(&self) -> IMat {
        self.gram()
            .iter()
            .map(|r| {
                r.iter()
                    .map(|x| {
                        let y = *x * self.scale;
                        debug_assert!(y.is_integer());
                        y.to_integer()
                    })
                    .collect()
            })
            .collect()
    }

    /// Ambient coordinates of a vector given in lattice coordinates.
    pub fn to_ambient(&self, x: &[Q]) -> Vec<Q> {
        let n = self.ambient.gram.len();
        (0..n).map(|j| x.iter().zip(&self.basis).fold(Q::zero(), |acc, (c, row)| acc + *c * row[j])).collect()
    }

    /// Level of the unscaled model: least positive integer `a` with
    /// `a Q(l) in Z` for every `l` in the dual of the scaled lattice.
    pub fn unscaled_level(&self, disc: &DiscriminantGroup) -> i128 {
        // Q_unscaled = Q_scaled / scale; dual vectors have Q_scaled in (1/level) Z.
        let mut den = 1i128;
        for qv in &disc.q_values_raw {
            let v = *qv / self.scale;
            den = den.lcm(v.denom());
        }
        let norms_on_l = self.gram().iter().enumerate().fold(1i128, |acc, (i, r)| acc.lcm((r[i] / qi(2)).denom()));
        den.lcm(&norms_on_l)
    }

    /// JSON dump `{gram, scale, disc_group}`.
    pub fn to_json(&self, disc: &DiscriminantGroup) -> serde_json::Value {
        let gram: Vec<Vec<[i128; 2]>> =
            self.gram().iter().map(|r| r.iter().map(|x| [*x.numer(), *x.denom()]).collect()).collect();
        serde_json::json!({
            "variant": self.ambient.variant.name(),
            "kind": self.kind,
            "gram": gram,
            "scale": [self.scale.numer(), self.scale.denom()],
            "disc_group": disc.to_json(),
        })
    }
}

fn gram_of(ambient: &QMat, basis: &QMat) -> QMat {
    qmat_mul(&qmat_mul(basis, ambient), &qmat_transpose(basis))
}

/// `N^-1 a + N^-1 a` in `(V_A, Q_A)` and its summands in `V1` and `V2`.
pub fn lattice_from_level(a: &FractionalIdeal, n: i128) -> Result<(LatticeModel, LatticeModel, LatticeModel)> {
    if n < 1 {
        return Err(Error::Validation("level must be positive".into()));
    }
    let inv = q(1, n);
    let diag =
        |k: usize| -> QMat { (0..k).map(|i| (0..k).map(|j| if i == j { inv } else { Q::zero() }).collect()).collect() };
    let l = LatticeModel::new(build_space(a, Variant::BigQ)?, diag(4), LatticeKind::IdealSum { level: n })?;
    let l1 = LatticeModel::new(build_space(a, Variant::V1)?, diag(2), LatticeKind::IdealSummand { level: n })?;
    let l2 = LatticeModel::new(build_space(a, Variant::V2)?, diag(2), LatticeKind::IdealSummand { level: n })?;
    Ok((l, l1, l2))
}

/// Matrix whose columns are the images of `E11, E12, E21, E22` in the
/// `w`-coordinates of `(V_A, Q_A)` under an isometry `(M_2(Q), det) -> (V_A, Q_A)`.
///
/// With `U = {(l, l)}` and `W = {(m, -m)}` isotropic and
/// `((l, l), (m, -m)) = 2 B(l, m)`, the map sends `E11 -> (e1, e1)`,
/// `E12 -> (e2, e2)`, `E21 -> -(f2, -f2)`, `E22 -> (f1, -f1)` where
/// `e1 = alpha`, `e2 = z` and `(f1, f2)` is the dual basis for `2B`.
pub fn m2_isometry(a: &FractionalIdeal) -> Result<QMat> {
    let g = norm_form_gram(a);
    // The bilinear form B of Q_a has matrix g; the pairing U x W is 2B.
    let two_g: QMat = g.iter().map(|r| r.iter().map(|x| *x * qi(2)).collect()).collect();
    let f = qinv(&two_g).ok_or_else(|| Error::Validation("degenerate norm form".into()))?;
    // f columns: coordinates of f_j in the basis (alpha, z).
    let cols: [[Q; 4]; 4] = [
        [qi(1), qi(0), qi(1), qi(0)],
        [qi(0), qi(1), qi(0), qi(1)],
        [-f[0][1], -f[1][1], f[0][1], f[1][1]],
        [f[0][0], f[1][0], -f[0][0], -f[1][0]],
    ];
    Ok((0..4).map(|i| (0..4).map(|j| cols[j][i]).collect()).collect())
}

/// Gram matrix of `det` on `E11, E12, E21, E22`.
pub fn m2_det_gram() -> QMat {
    let z = qi(0);
    vec![vec![z, z, z, qi(1)], vec![z, z, qi(-1), z], vec![z, qi(-1), z, z], vec![qi(1), z, z, z]]
}

/// The Eichler-order lattice `{[[a, b], [N c, d]]}` of level `N` placed in
/// `(V_A, Q_A)` through [`m2_isometry`]. Its discriminant group is
/// `(Z/N)^2` with `Q(x, y) = -xy/N`.
pub fn eichler_lattice(a: &FractionalIdeal, n: i128) -> Result<LatticeModel> {
    if n < 1 {
        return Err(Error::Validation("level must be positive".into()));
    }
    let phi = m2_isometry(a)?;
    let mult = [qi(1), qi(1), qi(n), qi(1)];
    let basis: QMat = (0..4).map(|k| (0..4).map(|i| phi[i][k] * mult[k]).collect()).collect();
    LatticeModel::new(build_space(a, Variant::BigQ)?, basis, LatticeKind::Eichler { level: n })
}

/// Discriminant group `L^dual / L` of an even lattice.
#[derive(Clone, Debug)]
pub struct DiscriminantGroup {
    /// Scaled Gram matrix of the lattice.
    pub gram: IMat,
    pub signature: (usize, usize),
    /// Invariant factors greater than one.
    pub invariant_factors: Vec<i128>,
    /// Coset representatives in lattice coordinates, entries in `[0, 1)`.
    pub coset_reps: Vec<Vec<Q>>,
    /// `Q(mu) mod 1` in `[0, 1)`.
    pub q_values: Vec<Q>,
    /// `Q(mu)` for the stored representative (not reduced).
    pub q_values_raw: Vec<Q>,
    /// Exponent of the group; `coset_reps[i] = rep_num[i] / exponent`.
    pub exponent: i128,
    rep_num: Vec<Vec<i128>>,
    /// All Smith diagonal entries.
    smith_diag: Vec<i128>,
    smith_u: IMat,
    /// Positions of the nontrivial Smith factors.
    active: Vec<usize>,
}

fn frac(x: Q) -> Q {
    x - x.floor()
}

impl DiscriminantGroup {
    pub fn order(&self) -> usize {
        self.coset_reps.len()
    }

    /// Signature `b+ - b-` modulo 8.
    pub fn sig_mod8(&self) -> i64 {
        (self.signature.0 as i64 - self.signature.1 as i64).rem_euclid(8)
    }

    /// Digits of an element in `prod Z/d_i` (only nontrivial factors).
    pub fn digits(&self, idx: usize) -> Vec<i128> {
        let mut r = idx as i128;
        self.invariant_factors
            .iter()
            .map(|d| {
                let t = r % d;
                r /= d;
                t
            })
            .collect()
    }

    fn index_of_digits(&self, t: &[i128]) -> usize {
        let mut idx = 0i128;
        for (ti, d) in t.iter().zip(&self.invariant_factors).rev() {
            idx = idx * d + ti.rem_euclid(*d);
        }
        idx as usize
    }

    /// Index of the coset of a dual vector given in lattice coordinates.
    pub fn index_of(&self, x: &[Q]) -> Result<usize> {
        let n = self.gram.len();
        let sx: Vec<Q> = (0..n).map(|i| (0..n).fold(Q::zero(), |acc, j| acc + qi(self.gram[i][j]) * x[j])).collect();
        if sx.iter().any(|v| !v.is_integer()) {
            return Err(Error::Validation("vector is not in the dual lattice".into()));
        }
        let t: Vec<i128> = self
            .active
            .iter()
            .map(|&i| {
                let v = (0..n).fold(0i128, |acc, j| acc + self.smith_u[i][j] * sx[j].to_integer());
                v.rem_euclid(self.smith_diag[i])
            })
            .collect();
        Ok(self.index_of_digits(&t))
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        let (x, y) = (self.digits(a), self.digits(b));
        let s: Vec<i128> = x.iter().zip(&y).map(|(u, v)| u + v).collect();
        self.index_of_digits(&s)
    }

    pub fn neg(&self, a: usize) -> usize {
        let s: Vec<i128> = self.digits(a).iter().map(|u| -u).collect();
        self.index_of_digits(&s)
    }

    /// `k * mu`.
    pub fn mul(&self, k: i128, a: usize) -> usize {
        let s: Vec<i128> = self.digits(a).iter().map(|u| u * k).collect();
        self.index_of_digits(&s)
    }

    /// `(mu, nu) mod 1` in `[0, 1)`.
    pub fn bilinear(&self, a: usize, b: usize) -> Q {
        let (x, y) = (&self.rep_num[a], &self.rep_num[b]);
        let n = x.len();
        let mut s = 0i128;
        for i in 0..n {
            if x[i] == 0 {
                continue;
            }
            let gy: i128 = (0..n).map(|j| self.gram[i][j] * y[j]).sum();
            s += x[i] * gy;
        }
        let e2 = self.exponent * self.exponent;
        q(s.rem_euclid(e2), e2)
    }

    /// Least `N` with `N Q(mu) in Z` for all `mu`.
    pub fn level(&self) -> i128 {
        self.q_values.iter().fold(1i128, |acc, v| acc.lcm(v.denom()))
    }

    /// The permutation `mu -> -mu`.
    pub fn negation_permutation(&self) -> Vec<usize> {
        (0..self.order()).map(|i| self.neg(i)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cosets: Vec<serde_json::Value> = self
            .coset_reps
            .iter()
            .zip(&self.q_values)
            .map(|(mu, qv)| {
                let m: Vec<[i128; 2]> = mu.iter().map(|x| [*x.numer(), *x.denom()]).collect();
                serde_json::json!({"mu": m, "q": [qv.numer(), qv.denom()]})
            })
            .collect();
        serde_json::json!({
            "factors": self.invariant_factors,
            "signature": [self.signature.0, self.signature.1],
            "cosets": cosets,
        })
    }
}

/// Dual lattice and discriminant group of an even integral Gram matrix.
pub fn discriminant_group(gram: &IMat, max_order: usize) -> Result<DiscriminantGroup> {
    let n = gram.len();
    for i in 0..n {
        if gram[i][i] % 2 != 0 {
            return Err(Error::Validation("Gram matrix is not even".into()));
        }
        for j in 0..n {
            if gram[i][j] != gram[j][i] {
                return Err(Error::Validation("Gram matrix is not symmetric".into()));
            }
        }
    }
    let qg: QMat = gram.iter().map(|r| r.iter().map(|&x| qi(x)).collect()).collect();
    let sig = signature(&qg)?;
    let s = smith_normal_form(gram);
    if s.diag.contains(&0) {
        return Err(Error::Validation("degenerate Gram matrix".into()));
    }
    let order: i128 = s.diag.iter().product();
    if order as u128 > max_order as u128 {
        return Err(Error::Validation(format!("discriminant group of order {order} exceeds the bound {max_order}")));
    }
    let active: Vec<usize> = (0..n).filter(|&i| s.diag[i] > 1).collect();
    let factors: Vec<i128> = active.iter().map(|&i| s.diag[i]).collect();
    let mut reps = Vec::with_capacity(order as usize);
    let mut qraw = Vec::with_capacity(order as usize);
    let mut qvals = Vec::with_capacity(order as usize);
    for idx in 0..order {
        let mut r = idx;
        let mut t = vec![0i128; n];
        for (&i, d) in active.iter().zip(&factors) {
            t[i] = r % d;
            r /= d;
        }
        // x = V D^-1 t reduced modulo Z^n.
        let x: Vec<Q> = (0..n)
            .map(|row| frac((0..n).fold(Q::zero(), |acc, k| acc + qi(s.v[row][k]) * q(t[k], s.diag[k]))))
            .collect();
        let mut qv = Q::zero();
        for i in 0..n {
            for j in 0..n {
                qv += x[i] * qi(gram[i][j]) * x[j];
            }
        }
        qv /= qi(2);
        qraw.push(qv);
        qvals.push(frac(qv));
        reps.push(x);
    }
    let exponent = factors.iter().fold(1i128, |acc, d| acc.lcm(d));
    let rep_num = reps.iter().map(|x: &Vec<Q>| x.iter().map(|v| (*v * qi(exponent)).to_integer()).collect()).collect();
    Ok(DiscriminantGroup {
        exponent,
        rep_num,
        gram: gram.clone(),
        signature: sig,
        invariant_factors: factors,
        coset_reps: reps,
        q_values: qvals,
        q_values_raw: qraw,
        smith_diag: s.diag,
        smith_u: s.u,
        active,
    })
}

/// Discriminant group of a lattice model (scaled form).
pub fn dual_and_discriminant(l: &LatticeModel, max_order: usize) -> Result<DiscriminantGroup> {
    discriminant_group(&l.scaled_gram(), max_order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qdet;
    use crate::quadorder::{field_from_disc, ring_class_group};

    fn classes(dk: i128) -> Vec<FractionalIdeal> {
        let f = field_from_disc(dk).unwrap();
        ring_class_group(&f, 1, 1).unwrap().reps
    }

    #[test]
    fn square_classes_of_the_two_forms() {
        for dk in [5i128, 8, 12, 13, 40, 229] {
            let d = crate::linalg::square_class(qi(dk));
            for a in classes(dk) {
                let small = build_space(&a, Variant::SmallQ).unwrap();
                let big = build_space(&a, Variant::BigQ).unwrap();
                let si = space_invariants(&small).unwrap();
                let bi = space_invariants(&big).unwrap();
                assert_eq!(si.square_class, d);
                assert_eq!(si.centre, CentreType::Field);
                assert_eq!(bi.square_class, 1);
                assert_eq!(bi.centre, CentreType::Split);
            }
        }
    }

    #[test]
    fn v1_is_negative_of_v2() {
        for a in classes(40) {
            let v1 = build_space(&a, Variant::V1).unwrap();
            let v2 = build_space(&a, Variant::V2).unwrap();
            assert_eq!(v1.gram, neg_mat(&v2.gram));
            assert_eq!(v1.signature, (1, 1));
        }
    }

    #[test]
    fn big_q_entries_match_norm_and_trace() {
        let a = &classes(229)[1];
        let v = build_space(a, Variant::BigQ).unwrap();
        let n = a.norm;
        assert_eq!(v.gram[0][0], qi(2) * a.alpha.norm(a.d_k) / n);
        assert_eq!(v.gram[0][1], a.z.mul(&a.alpha.conj(), a.d_k).trace() / n);
        assert_eq!(v.gram[0][2], qi(0));
    }

    #[test]
    fn k_valued_basis_example() {
        // O_K for d_K = 5 written with alpha = 1, z = sqrt 5.
        let a = FractionalIdeal {
            d_k: 5,
            conductor: 1,
            alpha: QuadElem::rational(qi(1)),
            z: QuadElem::new(qi(0), qi(1)),
            // Index of Z[sqrt 5] in O_K.
            norm: qi(2),
        };
        let g = k_valued_gram_small_q(&a);
        assert_eq!(g[0][1], QuadElem::rational(qi(0)));
        assert_eq!(g[0][0], QuadElem::new(qi(0), qi(-2)));
    }

    #[test]
    fn diagonal_form_invariants() {
        let g: QMat = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| {
                        if i != j {
                            qi(0)
                        } else if i < 2 {
                            qi(1)
                        } else {
                            qi(-1)
                        }
                    })
                    .collect()
            })
            .collect();
        assert_eq!(gram_invariants(&g).unwrap().square_class, 1);
        assert_eq!(signature(&g).unwrap(), (2, 2));
    }

    #[test]
    fn level_one_lattices() {
        let a = &classes(5)[0];
        let (l, _l1, l2) = lattice_from_level(a, 1).unwrap();
        assert_eq!(l.scale, qi(1));
        let dg = dual_and_discriminant(&l, DEFAULT_MAX_DISC_ORDER).unwrap();
        assert_eq!(dg.order(), 25);
        let dg2 = dual_and_discriminant(&l2, DEFAULT_MAX_DISC_ORDER).unwrap();
        assert_eq!(dg2.order(), 5);
        // Q-values on Z/5 are k^2 * c / 5 for a fixed unit c.
        let mut qs: Vec<Q> = dg2.q_values.clone();
        qs.sort();
        qs.dedup();
        assert_eq!(qs.len(), 3);
        assert!(validate_scale(&l.gram(), qi(2)).is_err());
        assert!(validate_scale(&l.gram(), qi(1)).is_ok());
    }

    #[test]
    fn level_does_not_change_scaled_model() {
        let a = &classes(5)[0];
        for n in [1i128, 14, 37] {
            let (l, _, _) = lattice_from_level(a, n).unwrap();
            assert_eq!(l.scale, qi(n * n));
            assert_eq!(dual_and_discriminant(&l, 1000).unwrap().order(), 25);
        }
    }

    #[test]
    fn simple_discriminant_groups() {
        let dg = discriminant_group(&vec![vec![2]], 10).unwrap();
        assert_eq!(dg.order(), 2);
        assert_eq!(dg.q_values[1], q(1, 4));
        let h = discriminant_group(&vec![vec![0, 1], vec![1, 0]], 10).unwrap();
        assert_eq!(h.order(), 1);
        let e8_like = discriminant_group(&vec![vec![2, 1], vec![1, 2]], 10).unwrap();
        assert_eq!(e8_like.order(), 3);
        assert!(discriminant_group(&vec![vec![2, 1], vec![1, 2]], 2).is_err());
    }

    #[test]
    fn m2_isometry_is_isometric() {
        for dk in [5i128, 8, 40, 229] {
            for a in classes(dk) {
                let phi = m2_isometry(&a).unwrap();
                let v = build_space(&a, Variant::BigQ).unwrap();
                let g = qmat_mul(&qmat_mul(&qmat_transpose(&phi), &v.gram), &phi);
                assert_eq!(g, m2_det_gram());
            }
        }
    }

    #[test]
    fn eichler_discriminant_group() {
        let a = &classes(5)[0];
        for n in [11i128, 14, 37] {
            let l = eichler_lattice(a, n).unwrap();
            assert_eq!(l.scale, qi(1));
            let dg = dual_and_discriminant(&l, DEFAULT_MAX_DISC_ORDER).unwrap();
            assert_eq!(dg.order() as i128, n * n);
            assert_eq!(dg.level(), n);
            assert_eq!(qdet(&l.gram()), qi(n * n));
        }
    }

    #[test]
    fn polarization_and_indexing() {
        for a in classes(40) {
            let (l, l1, l2) = lattice_from_level(&a, 1).unwrap();
            for lat in [l, l1, l2, eichler_lattice(&a, 6).unwrap()] {
                let dg = dual_and_discriminant(&lat, 10_000).unwrap();
                assert_eq!(dg.q_values[0], qi(0));
                let det = qdet(&lat.scaled_gram().iter().map(|r| r.iter().map(|&x| qi(x)).collect()).collect());
                assert_eq!(qi(dg.order() as i128), det.abs());
                for i in 0..dg.order() {
                    assert_eq!(dg.index_of(&dg.coset_reps[i]).unwrap(), i);
                    for j in 0..dg.order() {
                        let s = dg.add(i, j);
                        let pol = frac(dg.q_values[s] - dg.q_values[i] - dg.q_values[j]);
                        assert_eq!(pol, dg.bilinear(i, j));
                    }
                }
            }
        }
    }
}
