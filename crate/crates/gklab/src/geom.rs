//! Pointwise multilinear algebra on a 4-dimensional real vector space.
//!
//! Everything is expressed in the fixed coordinate frame `(x1, y1, x2, y2)`.
//! Bilinear forms are stored as matrices `B[i][j] = B(e_i, e_j)`, endomorphisms
//! act on column vectors, and bivectors act on covectors.

use nalgebra::{Matrix4, Vector4};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::GeomError;

pub type Vec4 = Vector4<f64>;
pub type Mat4 = Matrix4<f64>;

/// Values that can be combined linearly; used by the field calculus.
pub trait Linear: Copy + Send + Sync + 'static {
    fn zero() -> Self;
    fn add_scaled(&mut self, a: f64, x: &Self);
    fn max_abs(&self) -> f64;

    fn scaled(self, a: f64) -> Self {
        let mut out = Self::zero();
        out.add_scaled(a, &self);
        out
    }
}

impl Linear for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
}

impl<const R: usize, const C: usize> Linear for nalgebra::SMatrix<f64, R, C> {
    fn zero() -> Self {
        Self::zeros()
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl<T: Linear, const N: usize> Linear for [T; N] {
    fn zero() -> Self {
        [T::zero(); N]
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        for (s, v) in self.iter_mut().zip(x) {
            s.add_scaled(a, v);
        }
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }
}

macro_rules! matrix_newtype {
    ($name:ident) => {
        impl Linear for $name {
            fn zero() -> Self {
                $name(Mat4::zeros())
            }
            fn add_scaled(&mut self, a: f64, x: &Self) {
                self.0 += x.0 * a;
            }
            fn max_abs(&self) -> f64 {
                self.0.max_abs()
            }
        }
        impl Add for $name {
            type Output = $name;
            fn add(self, o: $name) -> $name {
                $name(self.0 + o.0)
            }
        }
        impl Sub for $name {
            type Output = $name;
            fn sub(self, o: $name) -> $name {
                $name(self.0 - o.0)
            }
        }
        impl Neg for $name {
            type Output = $name;
            fn neg(self) -> $name {
                $name(-self.0)
            }
        }
        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, a: f64) -> $name {
                $name(self.0 * a)
            }
        }
    };
}

/// Endomorphism of the tangent space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Endo4(pub Mat4);

/// Symmetric bilinear form on tangent vectors. Positivity is checked by
/// [`Metric4::checked`], not by arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric4(pub Mat4);

/// Antisymmetric bilinear form on covectors, stored as the matrix `S` with
/// `sigma(alpha) = S alpha` (a tangent vector).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bivector(pub Mat4);

matrix_newtype!(Endo4);
matrix_newtype!(Metric4);
matrix_newtype!(Bivector);

impl Endo4 {
    pub fn identity() -> Self {
        Endo4(Mat4::identity())
    }

    /// The standard complex structure with `I dx_k = dy_k`-type orientation
    /// `I(d/dx_k) = d/dy_k`.
    pub fn standard() -> Self {
        Endo4(Mat4::new(
            0.0, -1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, -1.0, //
            0.0, 0.0, 1.0, 0.0,
        ))
    }

    pub fn apply(&self, v: &Vec4) -> Vec4 {
        self.0 * v
    }

    pub fn compose(&self, o: &Endo4) -> Endo4 {
        Endo4(self.0 * o.0)
    }

    /// `||K^2 + Id||_inf`, zero for a complex structure.
    pub fn complex_defect(&self) -> f64 {
        (self.0 * self.0 + Mat4::identity()).max_abs()
    }

    /// `||g(K., K.) - g||_inf`.
    pub fn compat_defect(&self, g: &Metric4) -> f64 {
        (self.0.transpose() * g.0 * self.0 - g.0).max_abs()
    }

    pub fn inverse(&self) -> Result<Endo4, GeomError> {
        self.0.try_inverse().map(Endo4).ok_or(GeomError::Singular)
    }
}

pub fn commutator(a: &Endo4, b: &Endo4) -> Endo4 {
    Endo4(a.0 * b.0 - b.0 * a.0)
}

/// `-tr(IJ)/4`; equal to 1 when `J = I` and -1 when `J = -I`.
pub fn angle(i: &Endo4, j: &Endo4) -> f64 {
    -0.25 * (i.0 * j.0).trace()
}

/// Symmetric part of an arbitrary 2-tensor.
pub fn sym_part(t: &Mat4) -> Metric4 {
    Metric4(0.5 * (t + t.transpose()))
}

/// The bilinear form `B(K., .)`, i.e. matrix `K^T B`.
pub fn precompose(b: &Mat4, k: &Endo4) -> Mat4 {
    k.0.transpose() * b
}

impl Metric4 {
    /// Validates symmetry and positive definiteness.
    pub fn checked(m: Mat4) -> Result<Metric4, GeomError> {
        let asym = (m - m.transpose()).max_abs();
        if !m.iter().all(|v| v.is_finite()) || asym > 1e-12 * m.max_abs().max(1.0) {
            return Err(GeomError::DegenerateMetric);
        }
        if m.cholesky().is_none() {
            return Err(GeomError::DegenerateMetric);
        }
        Ok(Metric4(m))
    }

    pub fn diagonal(d: [f64; 4]) -> Metric4 {
        Metric4(Mat4::from_diagonal(&Vec4::from(d)))
    }

    pub fn inverse(&self) -> Result<Mat4, GeomError> {
        self.0
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(GeomError::DegenerateMetric)
    }

    pub fn is_positive(&self) -> bool {
        self.0.cholesky().is_some()
    }

    /// Riemannian volume density `sqrt(det g)`.
    pub fn volume_density(&self) -> f64 {
        self.0.determinant().max(0.0).sqrt()
    }

    /// The fundamental 2-form `g(K., .)`.
    pub fn fundamental_form(&self, k: &Endo4) -> AltForm {
        AltForm::from_matrix(&precompose(&self.0, k))
    }
}

pub fn sharp(g: &Metric4, alpha: &AltForm) -> Result<Vec4, GeomError> {
    let a = alpha.as_covector()?;
    g.0.cholesky()
        .map(|c| c.solve(&a))
        .ok_or(GeomError::DegenerateMetric)
}

pub fn flat(g: &Metric4, x: &Vec4) -> AltForm {
    AltForm::one(g.0 * x)
}

impl Bivector {
    /// `sigma = [I, J] g^{-1} / 2`.
    pub fn poisson(i: &Endo4, j: &Endo4, ginv: &Mat4) -> Bivector {
        Bivector(0.5 * commutator(i, j).0 * ginv)
    }

    /// Tangent vector `sigma(alpha)`.
    pub fn apply(&self, alpha: &Vec4) -> Vec4 {
        self.0 * alpha
    }

    /// The scalar `sigma(alpha, beta) = <beta, sigma(alpha)>`.
    pub fn pair(&self, alpha: &Vec4, beta: &Vec4) -> f64 {
        beta.dot(&(self.0 * alpha))
    }

    pub fn asym_defect(&self) -> f64 {
        (self.0 + self.0.transpose()).max_abs()
    }
}

// ---------------------------------------------------------------------------
// Alternating forms

const RANK0: [u8; 1] = [0];
const RANK1: [u8; 4] = [0b0001, 0b0010, 0b0100, 0b1000];
const RANK2: [u8; 6] = [0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100];
const RANK3: [u8; 4] = [0b0111, 0b1011, 0b1101, 0b1110];
const RANK4: [u8; 1] = [0b1111];

/// Basis index sets of `Lambda^k`, as bitmasks in lexicographic order.
pub fn basis(rank: usize) -> &'static [u8] {
    match rank {
        0 => &RANK0,
        1 => &RANK1,
        2 => &RANK2,
        3 => &RANK3,
        4 => &RANK4,
        _ => &[],
    }
}

fn mask_indices(mask: u8) -> ([usize; 4], usize) {
    let mut out = [0; 4];
    let mut n = 0;
    for i in 0..4 {
        if mask & (1 << i) != 0 {
            out[n] = i;
            n += 1;
        }
    }
    (out, n)
}

fn slot(rank: usize, mask: u8) -> usize {
    basis(rank).iter().position(|&m| m == mask).expect("mask of matching rank")
}

/// Sign of the permutation sorting `idx`, or 0 on a repeated index.
fn sort_sign(idx: &[usize]) -> (f64, u8) {
    let mut mask = 0u8;
    let mut inv = 0;
    for (a, &i) in idx.iter().enumerate() {
        if mask & (1 << i) != 0 {
            return (0.0, 0);
        }
        mask |= 1 << i;
        inv += idx[a + 1..].iter().filter(|&&j| j < i).count();
    }
    (if inv % 2 == 0 { 1.0 } else { -1.0 }, mask)
}

fn det_small(m: &[[f64; 4]; 4], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => Mat4::from_fn(|i, j| m[i][j]).determinant(),
    }
}

/// Determinant of the submatrix of `m` with rows `rows` and columns `cols`,
/// both given as index bitmasks.
pub fn minor(m: &Mat4, rows: u8, cols: u8) -> f64 {
    let (r, k) = mask_indices(rows);
    let (c, _) = mask_indices(cols);
    let mut s = [[0.0; 4]; 4];
    for a in 0..k {
        for b in 0..k {
            s[a][b] = m[(r[a], c[b])];
        }
    }
    det_small(&s, k)
}

/// Alternating k-form, `0 <= k <= 4`, stored by basis components
/// `alpha_{i1 < ... < ik}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AltForm {
    rank: u8,
    comps: [f64; 6],
}

impl AltForm {
    pub fn zero(rank: usize) -> AltForm {
        assert!(rank <= 4, "form rank {rank} exceeds dimension");
        AltForm { rank: rank as u8, comps: [0.0; 6] }
    }

    pub fn from_components(rank: usize, c: &[f64]) -> Result<AltForm, GeomError> {
        if rank > 4 {
            return Err(GeomError::RankOverflow(rank));
        }
        if c.len() != basis(rank).len() {
            return Err(GeomError::ComponentCount { rank, got: c.len() });
        }
        let mut f = AltForm::zero(rank);
        f.comps[..c.len()].copy_from_slice(c);
        Ok(f)
    }

    pub fn one(v: Vec4) -> AltForm {
        AltForm { rank: 1, comps: [v[0], v[1], v[2], v[3], 0.0, 0.0] }
    }

    /// The coordinate 1-form `dx^i`.
    pub fn dx(i: usize) -> AltForm {
        let mut v = Vec4::zeros();
        v[i] = 1.0;
        AltForm::one(v)
    }

    /// 2-form from the antisymmetric part of a matrix `M_ij = F(e_i, e_j)`.
    pub fn from_matrix(m: &Mat4) -> AltForm {
        let mut f = AltForm::zero(2);
        for (s, &mask) in RANK2.iter().enumerate() {
            let (ix, _) = mask_indices(mask);
            f.comps[s] = 0.5 * (m[(ix[0], ix[1])] - m[(ix[1], ix[0])]);
        }
        f
    }

    pub fn rank(&self) -> usize {
        self.rank as usize
    }

    pub fn components(&self) -> &[f64] {
        &self.comps[..basis(self.rank()).len()]
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        let n = basis(self.rank()).len();
        &mut self.comps[..n]
    }

    /// Component with arbitrary (possibly unsorted) indices.
    pub fn get(&self, idx: &[usize]) -> f64 {
        debug_assert_eq!(idx.len(), self.rank());
        let (s, mask) = sort_sign(idx);
        if s == 0.0 {
            return 0.0;
        }
        s * self.comps[slot(self.rank(), mask)]
    }

    pub fn as_covector(&self) -> Result<Vec4, GeomError> {
        if self.rank != 1 {
            return Err(GeomError::RankMismatch { expected: 1, got: self.rank() });
        }
        Ok(Vec4::new(self.comps[0], self.comps[1], self.comps[2], self.comps[3]))
    }

    pub fn to_matrix(&self) -> Mat4 {
        assert_eq!(self.rank, 2, "to_matrix needs a 2-form");
        Mat4::from_fn(|i, j| self.get(&[i, j]))
    }

    /// `alpha(X_1, ..., X_k)`.
    pub fn eval(&self, xs: &[Vec4]) -> f64 {
        let k = self.rank();
        assert_eq!(xs.len(), k);
        let cols = Mat4::from_fn(|i, j| if j < k { xs[j][i] } else { 0.0 });
        let all = if k == 0 { 0 } else { (1u8 << k) - 1 };
        basis(k)
            .iter()
            .zip(self.components())
            .map(|(&m, c)| c * minor(&cols, m, all))
            .sum()
    }
}

impl Linear for AltForm {
    fn zero() -> Self {
        AltForm { rank: 0, comps: [0.0; 6] }
    }
    fn add_scaled(&mut self, a: f64, x: &Self) {
        // A rank-0 zero adopts the rank of whatever is added to it.
        if self.rank != x.rank && self.comps.iter().all(|c| *c == 0.0) {
            self.rank = x.rank;
        }
        debug_assert_eq!(self.rank, x.rank);
        for (s, v) in self.comps.iter_mut().zip(x.comps.iter()) {
            *s += a * v;
        }
    }
    fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Add for AltForm {
    type Output = AltForm;
    fn add(mut self, o: AltForm) -> AltForm {
        self.add_scaled(1.0, &o);
        self
    }
}

impl Sub for AltForm {
    type Output = AltForm;
    fn sub(mut self, o: AltForm) -> AltForm {
        self.add_scaled(-1.0, &o);
        self
    }
}

impl Neg for AltForm {
    type Output = AltForm;
    fn neg(self) -> AltForm {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for AltForm {
    type Output = AltForm;
    fn mul(self, a: f64) -> AltForm {
        self.scaled(a)
    }
}

pub fn wedge(a: &AltForm, b: &AltForm) -> Result<AltForm, GeomError> {
    let (j, k) = (a.rank(), b.rank());
    if j + k > 4 {
        return Err(GeomError::RankOverflow(j + k));
    }
    let mut out = AltForm::zero(j + k);
    for (&ma, ca) in basis(j).iter().zip(a.components()) {
        if *ca == 0.0 {
            continue;
        }
        for (&mb, cb) in basis(k).iter().zip(b.components()) {
            if ma & mb != 0 {
                continue;
            }
            let (ia, na) = mask_indices(ma);
            let (ib, nb) = mask_indices(mb);
            let inv: usize = ia[..na]
                .iter()
                .map(|x| ib[..nb].iter().filter(|y| *y < x).count())
                .sum();
            let s = if inv % 2 == 0 { 1.0 } else { -1.0 };
            out.comps[slot(j + k, ma | mb)] += s * ca * cb;
        }
    }
    Ok(out)
}

/// Contraction in the first slot, `(i_X alpha)(...) = alpha(X, ...)`.
pub fn interior(x: &Vec4, a: &AltForm) -> Result<AltForm, GeomError> {
    let k = a.rank();
    if k == 0 {
        return Err(GeomError::RankMismatch { expected: 1, got: 0 });
    }
    let mut out = AltForm::zero(k - 1);
    for (s, &m) in basis(k - 1).iter().enumerate() {
        let (ix, n) = mask_indices(m);
        let mut idx = [0usize; 4];
        idx[1..=n].copy_from_slice(&ix[..n]);
        let mut acc = 0.0;
        for j in 0..4 {
            if m & (1 << j) == 0 {
                idx[0] = j;
                acc += x[j] * a.get(&idx[..=n]);
            }
        }
        out.comps[s] = acc;
    }
    Ok(out)
}

/// `(K alpha)(X_1..X_k) = (-1)^k alpha(K X_1, ..., K X_k)`; on 1-forms this is
/// `-K^T alpha`.
pub fn act_on_form(k: &Endo4, a: &AltForm) -> AltForm {
    let r = a.rank();
    let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
    let mut out = AltForm::zero(r);
    for (s, &mi) in basis(r).iter().enumerate() {
        out.comps[s] = sign
            * basis(r)
                .iter()
                .zip(a.components())
                .map(|(&mj, c)| c * minor(&k.0, mj, mi))
                .sum::<f64>();
    }
    out
}

/// Coefficient of `F^2/2` against `dx1^dy1^dx2^dy2`, the Pfaffian of `F`.
pub fn top_density(f: &AltForm) -> f64 {
    assert_eq!(f.rank(), 2, "top_density needs a 2-form");
    let c = &f.comps;
    c[0] * c[5] - c[1] * c[4] + c[2] * c[3]
}

/// Pointwise inner product of k-forms induced by the inverse metric.
pub fn form_inner(ginv: &Mat4, a: &AltForm, b: &AltForm) -> f64 {
    let k = a.rank();
    debug_assert_eq!(k, b.rank());
    let mut acc = 0.0;
    for (&mi, ca) in basis(k).iter().zip(a.components()) {
        if *ca == 0.0 {
            continue;
        }
        for (&mj, cb) in basis(k).iter().zip(b.components()) {
            acc += ca * cb * minor(ginv, mi, mj);
        }
    }
    acc
}

pub fn form_norm(ginv: &Mat4, a: &AltForm) -> f64 {
    form_inner(ginv, a, a).max(0.0).sqrt()
}

pub fn vector_norm(g: &Mat4, v: &Vec4) -> f64 {
    v.dot(&(g * v)).max(0.0).sqrt()
}

pub fn covector_norm(ginv: &Mat4, a: &Vec4) -> f64 {
    a.dot(&(ginv * a)).max(0.0).sqrt()
}

/// Norm of a covariant 2-tensor `T_ij T_kl g^ik g^jl`.
pub fn two_tensor_norm(ginv: &Mat4, t: &Mat4) -> f64 {
    (ginv * t * ginv * t.transpose()).trace().max(0.0).sqrt()
}

/// Norm of a contravariant 2-tensor `S^ij S^kl g_ik g_jl`.
pub fn bivector_norm(g: &Mat4, s: &Mat4) -> f64 {
    (g * s * g * s.transpose()).trace().max(0.0).sqrt()
}

/// Norm of a (1,1)-tensor `K^i_j K^k_l g_ik g^jl`.
pub fn endo_norm(g: &Mat4, ginv: &Mat4, k: &Mat4) -> f64 {
    (k.transpose() * g * k * ginv).trace().max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize) -> Vec4 {
        let mut v = Vec4::zeros();
        v[i] = 1.0;
        v
    }

    #[test]
    fn standard_structure_orientation() {
        let i = Endo4::standard();
        assert_eq!(i.apply(&e(0)), e(1));
        assert_eq!(i.apply(&e(1)), -e(0));
        assert_eq!(i.complex_defect(), 0.0);
    }

    #[test]
    fn angle_extremes() {
        let i = Endo4::standard();
        assert_eq!(angle(&i, &i), 1.0);
        assert_eq!(angle(&i, &-i), -1.0);
        assert_eq!(commutator(&i, &i).0.max_abs(), 0.0);
    }

    #[test]
    fn wedge_basics() {
        let w = wedge(&AltForm::dx(0), &AltForm::dx(1)).unwrap();
        assert_eq!(w.get(&[0, 1]), 1.0);
        assert_eq!(w.get(&[1, 0]), -1.0);
        assert_eq!(wedge(&AltForm::dx(0), &AltForm::dx(0)).unwrap().max_abs(), 0.0);
        let top = wedge(&w, &w);
        assert_eq!(top.unwrap().max_abs(), 0.0);
        assert!(matches!(
            wedge(&w, &wedge(&w, &AltForm::dx(2)).unwrap()),
            Err(GeomError::RankOverflow(5))
        ));
    }

    #[test]
    fn interior_and_top_density() {
        let w = wedge(&AltForm::dx(0), &AltForm::dx(1)).unwrap();
        assert_eq!(interior(&e(0), &w).unwrap(), AltForm::dx(1));
        let f = w + wedge(&AltForm::dx(2), &AltForm::dx(3)).unwrap();
        assert_eq!(top_density(&f), 1.0);
        let ff = wedge(&f, &f).unwrap();
        assert_eq!(ff.components()[0], 2.0);
    }

    #[test]
    fn complex_structure_on_forms() {
        let i = Endo4::standard();
        // (I dx1)(X) = -dx1(IX): I d/dy1 = -d/dx1, so I dx1 = dy1.
        assert_eq!(act_on_form(&i, &AltForm::dx(0)), AltForm::dx(1));
        let w = wedge(&AltForm::dx(0), &AltForm::dx(1)).unwrap();
        assert_eq!(act_on_form(&i, &w), w);
        let a = AltForm::one(Vec4::new(0.3, -1.0, 2.0, 0.5));
        let twice = act_on_form(&i, &act_on_form(&i, &a));
        assert!((twice + a).max_abs() < 1e-15);
    }

    #[test]
    fn musical_maps() {
        let g = Metric4::diagonal([2.0; 4]);
        assert!((sharp(&g, &AltForm::dx(0)).unwrap() - 0.5 * e(0)).max_abs() < 1e-15);
        let id = Metric4::diagonal([1.0; 4]);
        assert_eq!(sharp(&id, &AltForm::dx(0)).unwrap(), e(0));
        let bad = Metric4(Mat4::zeros());
        assert!(matches!(sharp(&bad, &AltForm::dx(0)), Err(GeomError::DegenerateMetric)));
    }

    #[test]
    fn sym_part_cases() {
        let a = Mat4::from_fn(|i, j| i as f64 - j as f64);
        assert_eq!(sym_part(&a).0.max_abs(), 0.0);
        let s = Mat4::from_fn(|i, j| (i * j) as f64);
        assert_eq!(sym_part(&s).0, s);
    }

    #[test]
    fn eval_matches_components() {
        let w = wedge(&AltForm::dx(0), &AltForm::dx(2)).unwrap();
        assert_eq!(w.eval(&[e(0), e(2)]), 1.0);
        assert_eq!(w.eval(&[e(2), e(0)]), -1.0);
        let m = Mat4::from_fn(|i, j| (i as f64 + 1.0) * (j as f64 - 2.0));
        let f = AltForm::from_matrix(&m);
        let (x, y) = (Vec4::new(1.0, 2.0, -1.0, 0.5), Vec4::new(0.0, 1.0, 3.0, -2.0));
        let direct = x.dot(&(0.5 * (m - m.transpose()) * y));
        assert!((f.eval(&[x, y]) - direct).abs() < 1e-13);
    }
}
