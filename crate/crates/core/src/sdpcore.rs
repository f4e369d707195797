//! Dense conic solver for the coefficient subproblems.
//!
//! Problems are stated over complex vectors and Hermitian matrices through
//! [`ConicProblem`], embedded into a real program
//!
//! ```text
//! minimize ½xᵀPx + cᵀx  s.t.  Ax = b,  aₖᵀx ≤ hₖ,  F₀ + Σᵢ xᵢFᵢ ⪰ 0
//! ```
//!
//! and solved by a primal-dual interior-point method with Nesterov-Todd
//! scaling and Mehrotra predictor-corrector steps.
//!
//! Real coordinates: a complex vector of length `n` is stored as `n` real
//! parts followed by `n` imaginary parts; a Hermitian `n×n` matrix as its
//! `n` diagonal entries followed by `(re, im)` of each `i < j` entry in
//! row-major order. Hermitian LMIs use the embedding `[[Re, −Im], [Im, Re]]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100;
const STEP_FRACTION: f64 = 0.99;

// ---------------------------------------------------------------------------
// Affine expressions over real coordinates

/// Real affine expression `Σ cᵢxᵢ + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(value: f64) -> Self {
        Self { terms: Vec::new(), constant: value }
    }

    pub fn var(index: usize) -> Self {
        Self { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn scale(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn add(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn sub(self, other: &Affine) -> Self {
        self.add(&other.clone().scale(-1.0))
    }

    pub fn add_term(mut self, index: usize, coeff: f64) -> Self {
        self.terms.push((index, coeff));
        self
    }

    /// Merges duplicate indices and drops zeros; output sorted by index.
    pub fn compact(&self) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, c) in &self.terms {
            *map.entry(i).or_insert(0.0) += c;
        }
        Self {
            terms: map.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

/// Complex affine expression `re + j·im`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexAffine {
    pub re: Affine,
    pub im: Affine,
}

impl ComplexAffine {
    pub fn constant(z: Complex64) -> Self {
        Self { re: Affine::constant(z.re), im: Affine::constant(z.im) }
    }

    pub fn conj(self) -> Self {
        Self { re: self.re, im: self.im.scale(-1.0) }
    }

    pub fn add(self, other: &ComplexAffine) -> Self {
        Self { re: self.re.add(&other.re), im: self.im.add(&other.im) }
    }

    /// `k · self` for a complex constant `k`.
    pub fn mul(self, k: Complex64) -> Self {
        let re = self.re.clone().scale(k.re).sub(&self.im.clone().scale(k.im));
        let im = self.re.scale(k.im).add(&self.im.scale(k.re));
        Self { re, im }
    }
}

// ---------------------------------------------------------------------------
// Complex-level problem builder

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Real(usize),
    Complex(usize),
    Hermitian(usize),
}

impl VarKind {
    fn real_len(self) -> usize {
        match self {
            VarKind::Real(n) => n,
            VarKind::Complex(n) => 2 * n,
            VarKind::Hermitian(n) => n * n,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

/// Hermitian matrix of complex affine expressions, filled on and above the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianExpr {
    pub dim: usize,
    entries: BTreeMap<(usize, usize), ComplexAffine>,
}

impl HermitianExpr {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: BTreeMap::new() }
    }

    /// Sets entry `(i, j)`; the entry below the diagonal is implied. For
    /// `i > j` the conjugate is stored at `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, value: ComplexAffine) {
        if i <= j {
            self.entries.insert((i, j), value);
        } else {
            self.entries.insert((j, i), value.conj());
        }
    }
}

/// Convex quadratic program with Hermitian LMI constraints over complex
/// and real variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    variables: Vec<Variable>,
    n: usize,
    quad: BTreeMap<(usize, usize), f64>,
    linear: BTreeMap<usize, f64>,
    constant: f64,
    equalities: Vec<Affine>,
    nonnegatives: Vec<Affine>,
    lmis: Vec<HermitianExpr>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_real(&self) -> usize {
        self.n
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn add_variable(&mut self, name: &str, kind: VarKind) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable { name: name.to_string(), kind, offset: self.n });
        self.n += kind.real_len();
        id
    }

    fn var(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn real(&self, id: VarId, k: usize) -> Affine {
        let v = self.var(id);
        match v.kind {
            VarKind::Real(n) => {
                assert!(k < n, "index {k} out of range for {}", v.name);
                Affine::var(v.offset + k)
            }
            _ => panic!("{} is not a real variable", v.name),
        }
    }

    pub fn complex(&self, id: VarId, k: usize) -> ComplexAffine {
        let v = self.var(id);
        match v.kind {
            VarKind::Complex(n) => {
                assert!(k < n, "index {k} out of range for {}", v.name);
                ComplexAffine { re: Affine::var(v.offset + k), im: Affine::var(v.offset + n + k) }
            }
            _ => panic!("{} is not a complex vector", v.name),
        }
    }

    /// Entry `(i, j)` of a Hermitian variable.
    pub fn herm(&self, id: VarId, i: usize, j: usize) -> ComplexAffine {
        let v = self.var(id);
        let VarKind::Hermitian(n) = v.kind else {
            panic!("{} is not a Hermitian matrix", v.name);
        };
        assert!(i < n && j < n, "index ({i}, {j}) out of range for {}", v.name);
        if i == j {
            return ComplexAffine { re: Affine::var(v.offset + i), im: Affine::default() };
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let base = v.offset + n + 2 * herm_pair_index(n, a, b);
        let entry = ComplexAffine { re: Affine::var(base), im: Affine::var(base + 1) };
        if i < j {
            entry
        } else {
            entry.conj()
        }
    }

    /// Adds `φᴴ Z φ` for a complex vector variable and Hermitian `Z`.
    pub fn add_quadratic_form(&mut self, id: VarId, z: &ComplexMatrix) {
        let v = self.var(id).clone();
        let VarKind::Complex(n) = v.kind else {
            panic!("{} is not a complex vector", v.name);
        };
        assert_eq!(z.nrows(), n);
        let e = embed_hermitian(z);
        for r in 0..2 * n {
            for c in 0..2 * n {
                let val = 2.0 * e[(r, c)];
                if val != 0.0 {
                    *self.quad.entry((v.offset + r, v.offset + c)).or_insert(0.0) += val;
                }
            }
        }
    }

    /// Adds `weight · expr²`, `weight ≥ 0`.
    pub fn add_square(&mut self, expr: &Affine, weight: f64) {
        let e = expr.compact();
        for &(i, a) in &e.terms {
            for &(j, b) in &e.terms {
                *self.quad.entry((i, j)).or_insert(0.0) += 2.0 * weight * a * b;
            }
            *self.linear.entry(i).or_insert(0.0) += 2.0 * weight * e.constant * a;
        }
        self.constant += weight * e.constant * e.constant;
    }

    /// Adds a linear (affine) term to the objective.
    pub fn add_linear(&mut self, expr: &Affine) {
        for &(i, a) in &expr.terms {
            *self.linear.entry(i).or_insert(0.0) += a;
        }
        self.constant += expr.constant;
    }

    /// `expr = 0`.
    pub fn add_equality(&mut self, expr: Affine) {
        self.equalities.push(expr.compact());
    }

    /// `expr ≥ 0`.
    pub fn add_nonnegative(&mut self, expr: Affine) {
        self.nonnegatives.push(expr.compact());
    }

    /// `expr ⪰ 0`.
    pub fn add_lmi(&mut self, expr: HermitianExpr) {
        self.lmis.push(expr);
    }

    /// Real parts of a complex vector, real vector or Hermitian variable
    /// packed as described in the module docs.
    pub fn real_values(&self, id: VarId, x: &[f64]) -> Vec<f64> {
        let v = self.var(id);
        x[v.offset..v.offset + v.kind.real_len()].to_vec()
    }

    pub fn complex_value(&self, id: VarId, x: &[f64]) -> ComplexVector {
        let v = self.var(id);
        let VarKind::Complex(n) = v.kind else {
            panic!("{} is not a complex vector", v.name);
        };
        ComplexVector::from_fn(n, |k, _| Complex64::new(x[v.offset + k], x[v.offset + n + k]))
    }

    pub fn hermitian_value(&self, id: VarId, x: &[f64]) -> ComplexMatrix {
        let v = self.var(id);
        let VarKind::Hermitian(n) = v.kind else {
            panic!("{} is not a Hermitian matrix", v.name);
        };
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(x[v.offset + i], 0.0);
            for j in i + 1..n {
                let base = v.offset + n + 2 * herm_pair_index(n, i, j);
                let z = Complex64::new(x[base], x[base + 1]);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    /// Writes a complex vector value into real coordinates.
    pub fn set_complex(&self, id: VarId, value: &ComplexVector, x: &mut [f64]) {
        let v = self.var(id);
        let VarKind::Complex(n) = v.kind else {
            panic!("{} is not a complex vector", v.name);
        };
        for k in 0..n {
            x[v.offset + k] = value[k].re;
            x[v.offset + n + k] = value[k].im;
        }
    }

    /// Writes a Hermitian value (upper triangle read) into real coordinates.
    pub fn set_hermitian(&self, id: VarId, value: &ComplexMatrix, x: &mut [f64]) {
        let v = self.var(id);
        let VarKind::Hermitian(n) = v.kind else {
            panic!("{} is not a Hermitian matrix", v.name);
        };
        for i in 0..n {
            x[v.offset + i] = value[(i, i)].re;
            for j in i + 1..n {
                let base = v.offset + n + 2 * herm_pair_index(n, i, j);
                x[base] = value[(i, j)].re;
                x[base + 1] = value[(i, j)].im;
            }
        }
    }

    /// Objective value at real coordinates `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let quad: f64 = self.quad.iter().map(|(&(i, j), &v)| 0.5 * v * x[i] * x[j]).sum();
        let lin: f64 = self.linear.iter().map(|(&i, &c)| c * x[i]).sum();
        quad + lin + self.constant
    }

    fn check_indices(&self) -> Result<()> {
        let n = self.n;
        let bad = |e: &Affine| e.terms.iter().any(|&(i, _)| i >= n);
        if self.equalities.iter().any(bad) || self.nonnegatives.iter().any(bad) {
            return Err(Error::Domain("constraint references an undeclared variable".into()));
        }
        for lmi in &self.lmis {
            for (&(i, j), e) in &lmi.entries {
                if i >= lmi.dim || j >= lmi.dim || bad(&e.re) || bad(&e.im) {
                    return Err(Error::Domain("LMI references an undeclared variable or entry".into()));
                }
                if i == j && (!e.im.terms.is_empty() || e.im.constant != 0.0) {
                    return Err(Error::Domain("LMI diagonal must be real".into()));
                }
            }
        }
        if self.quad.keys().any(|&(i, j)| i >= n || j >= n) || self.linear.keys().any(|&i| i >= n) {
            return Err(Error::Domain("objective references an undeclared variable".into()));
        }
        Ok(())
    }

    /// Minimum eigenvalue of the objective's quadratic part relative to its
    /// norm, computed per connected block.
    pub fn objective_curvature(&self) -> f64 {
        let mut uf = UnionFind::new(self.n);
        for &(i, j) in self.quad.keys() {
            uf.union(i, j);
        }
        let (comp, sizes) = uf.components();
        let mut members: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (i, &c) in comp.iter().enumerate() {
            members[c].push(i);
        }
        let mut worst = 0.0f64;
        for m in members.iter().filter(|m| m.len() > 0) {
            let local: BTreeMap<usize, usize> = m.iter().enumerate().map(|(k, &i)| (i, k)).collect();
            let mut p = DMatrix::<f64>::zeros(m.len(), m.len());
            for (&(i, j), &v) in &self.quad {
                if let (Some(&a), Some(&b)) = (local.get(&i), local.get(&j)) {
                    p[(a, b)] += v;
                }
            }
            let p = (&p + p.transpose()) * 0.5;
            let norm = p.norm().max(f64::MIN_POSITIVE);
            let eig = SymmetricEigen::new(p);
            let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            worst = worst.min(lo / norm);
        }
        worst
    }
}

fn herm_pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    // Pairs (a, b), a < b, enumerated row by row.
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// `[[Re A, −Im A], [Im A, Re A]]`.
pub fn embed_hermitian(a: &ComplexMatrix) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i + r, j)] = z.im;
            out[(i, j + c)] = -z.im;
        }
    }
    out
}

/// Inverse of [`embed_hermitian`], reading the top-left and bottom-left
/// blocks.
pub fn extract_hermitian(e: &DMatrix<f64>) -> ComplexMatrix {
    let n = e.nrows() / 2;
    let m = e.ncols() / 2;
    ComplexMatrix::from_fn(n, m, |i, j| Complex64::new(e[(i, j)], e[(i + n, j)]))
}

// ---------------------------------------------------------------------------
// Real cone program

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    fn dot(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum()
    }
}

/// Coefficient matrix of one variable inside a PSD block, as the full list
/// of symmetric entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdTerm {
    pub var: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

/// `constant + Σ x_var · F_var ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<PsdTerm>,
}

impl PsdBlock {
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for t in &self.terms {
            let xi = x[t.var];
            if xi != 0.0 {
                for &(r, c, v) in &t.entries {
                    m[(r, c)] += xi * v;
                }
            }
        }
        m
    }

    /// `⟨F_var, Y⟩` for every term.
    fn adjoint(&self, y: &DMatrix<f64>, out: &mut [f64], sign: f64) {
        for t in &self.terms {
            let s: f64 = t.entries.iter().map(|&(r, c, v)| v * y[(r, c)]).sum();
            out[t.var] += sign * s;
        }
    }
}

/// Embedded real program. Inequalities are `aᵀx ≤ rhs`, equalities
/// `aᵀx = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealConeProgram {
    pub n: usize,
    /// Entries of the symmetric `P`, both triangles, sorted.
    pub quad: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub constant: f64,
    pub equalities: Vec<SparseRow>,
    pub inequalities: Vec<SparseRow>,
    pub psd: Vec<PsdBlock>,
}

/// Maps the complex problem onto real symmetric cone data.
pub fn embed_real(problem: &ConicProblem) -> Result<RealConeProgram> {
    problem.check_indices()?;
    let n = problem.n;
    let mut linear = vec![0.0; n];
    for (&i, &c) in &problem.linear {
        linear[i] += c;
    }
    let quad = problem.quad.iter().filter(|(_, &v)| v != 0.0).map(|(&(i, j), &v)| (i, j, v)).collect();
    let equalities = problem
        .equalities
        .iter()
        .map(|e| SparseRow { terms: e.terms.clone(), rhs: -e.constant })
        .collect();
    // expr ≥ 0  ⇔  −terms·x ≤ constant.
    let inequalities = problem
        .nonnegatives
        .iter()
        .map(|e| SparseRow { terms: e.terms.iter().map(|&(i, c)| (i, -c)).collect(), rhs: e.constant })
        .collect();
    let psd = problem.lmis.iter().map(embed_lmi).collect();
    Ok(RealConeProgram { n, quad, linear, constant: problem.constant, equalities, inequalities, psd })
}

fn embed_lmi(lmi: &HermitianExpr) -> PsdBlock {
    let n = lmi.dim;
    let dim = 2 * n;
    let mut constant = DMatrix::zeros(dim, dim);
    let mut per_var: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
    let mut put = |r: usize, c: usize, var: Option<usize>, v: f64, constant: &mut DMatrix<f64>| match var {
        None => constant[(r, c)] += v,
        Some(k) => per_var.entry(k).or_default().push((r, c, v)),
    };
    for (&(i, j), e) in &lmi.entries {
        let re = e.re.compact();
        let im = e.im.compact();
        let re_items = re.terms.iter().map(|&(k, v)| (Some(k), v)).chain(std::iter::once((None, re.constant)));
        for (var, v) in re_items {
            if v == 0.0 {
                continue;
            }
            put(i, j, var, v, &mut constant);
            put(i + n, j + n, var, v, &mut constant);
            if i != j {
                put(j, i, var, v, &mut constant);
                put(j + n, i + n, var, v, &mut constant);
            }
        }
        if i == j {
            continue;
        }
        let im_items = im.terms.iter().map(|&(k, v)| (Some(k), v)).chain(std::iter::once((None, im.constant)));
        for (var, v) in im_items {
            if v == 0.0 {
                continue;
            }
            put(i + n, j, var, v, &mut constant);
            put(j, i + n, var, v, &mut constant);
            put(i, j + n, var, -v, &mut constant);
            put(j + n, i, var, -v, &mut constant);
        }
    }
    let terms = per_var.into_iter().map(|(var, entries)| PsdTerm { var, entries }).collect();
    PsdBlock { dim, constant, terms }
}

impl RealConeProgram {
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.n];
        self.mul_p(x, &mut px);
        let lin: f64 = self.linear.iter().zip(x).map(|(c, x)| c * x).sum();
        0.5 * dot(x, &px) + lin + self.constant
    }

    fn mul_p(&self, x: &[f64], out: &mut [f64]) {
        for &(i, j, v) in &self.quad {
            out[i] += v * x[j];
        }
    }

    fn degree(&self) -> usize {
        self.inequalities.len() + self.psd.iter().map(|b| b.dim).sum::<usize>()
    }

    /// `h − Gx`: inequality slacks and PSD block values.
    pub fn slack(&self, x: &[f64]) -> ConeVec {
        ConeVec {
            lin: DVector::from_iterator(self.inequalities.len(), self.inequalities.iter().map(|r| r.rhs - r.dot(x))),
            psd: self.psd.iter().map(|b| b.eval(x)).collect(),
        }
    }

    /// `Gx` (without the constant): `aᵀx` and `−Σ x_i F_i`.
    fn mul_g(&self, x: &[f64]) -> ConeVec {
        ConeVec {
            lin: DVector::from_iterator(self.inequalities.len(), self.inequalities.iter().map(|r| r.dot(x))),
            psd: self
                .psd
                .iter()
                .map(|b| {
                    let mut m = b.eval(x);
                    m -= &b.constant;
                    -m
                })
                .collect(),
        }
    }

    fn h(&self) -> ConeVec {
        ConeVec {
            lin: DVector::from_iterator(self.inequalities.len(), self.inequalities.iter().map(|r| r.rhs)),
            psd: self.psd.iter().map(|b| b.constant.clone()).collect(),
        }
    }

    /// `Gᵀz` accumulated into `out`.
    fn mul_gt(&self, z: &ConeVec, out: &mut [f64]) {
        for (row, &zk) in self.inequalities.iter().zip(z.lin.iter()) {
            for &(i, c) in &row.terms {
                out[i] += c * zk;
            }
        }
        for (b, zb) in self.psd.iter().zip(&z.psd) {
            b.adjoint(zb, out, -1.0);
        }
    }

    fn mul_a(&self, x: &[f64]) -> Vec<f64> {
        self.equalities.iter().map(|r| r.dot(x)).collect()
    }

    fn mul_at(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yk) in self.equalities.iter().zip(y) {
            for &(i, c) in &row.terms {
                out[i] += c * yk;
            }
        }
    }

    fn zero_cone(&self) -> ConeVec {
        ConeVec {
            lin: DVector::zeros(self.inequalities.len()),
            psd: self.psd.iter().map(|b| DMatrix::zeros(b.dim, b.dim)).collect(),
        }
    }

    /// Self-describing text serialization: sparse triplets for linear maps,
    /// dense blocks for LMI constants.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "conic-program 1");
        let _ = writeln!(s, "variables {}", self.n);
        let _ = writeln!(s, "constant {:e}", self.constant);
        let lin: Vec<(usize, f64)> =
            self.linear.iter().copied().enumerate().filter(|&(_, c)| c != 0.0).collect();
        let _ = writeln!(s, "linear {}", lin.len());
        for (i, c) in lin {
            let _ = writeln!(s, "{i} {c:e}");
        }
        let _ = writeln!(s, "quadratic {}", self.quad.len());
        for &(i, j, v) in &self.quad {
            let _ = writeln!(s, "{i} {j} {v:e}");
        }
        for (tag, rows) in [("equalities", &self.equalities), ("inequalities", &self.inequalities)] {
            let _ = writeln!(s, "{tag} {}", rows.len());
            for r in rows {
                let _ = write!(s, "{:e} {}", r.rhs, r.terms.len());
                for &(i, c) in &r.terms {
                    let _ = write!(s, " {i} {c:e}");
                }
                let _ = writeln!(s);
            }
        }
        let _ = writeln!(s, "psd {}", self.psd.len());
        for b in &self.psd {
            let _ = writeln!(s, "block {} {}", b.dim, b.terms.len());
            for r in 0..b.dim {
                let row: Vec<String> = (0..b.dim).map(|c| format!("{:e}", b.constant[(r, c)])).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
            for t in &b.terms {
                let _ = write!(s, "term {} {}", t.var, t.entries.len());
                for &(r, c, v) in &t.entries {
                    let _ = write!(s, " {r} {c} {v:e}");
                }
                let _ = writeln!(s);
            }
        }
        s
    }

    /// Parses the output of [`RealConeProgram::dump`].
    pub fn parse_dump(text: &str) -> Result<Self> {
        let mut t = Tokens(text.split_whitespace());
        t.expect("conic-program")?;
        let _version: u32 = t.num()?;
        t.expect("variables")?;
        let n: usize = t.num()?;
        t.expect("constant")?;
        let constant: f64 = t.num()?;
        t.expect("linear")?;
        let mut linear = vec![0.0; n];
        for _ in 0..t.num::<usize>()? {
            let i: usize = t.num()?;
            if i >= n {
                return Err(Error::Domain(format!("linear index {i} out of range")));
            }
            linear[i] = t.num()?;
        }
        t.expect("quadratic")?;
        let mut quad = Vec::new();
        for _ in 0..t.num::<usize>()? {
            quad.push((t.num()?, t.num()?, t.num()?));
        }
        let equalities = t.rows("equalities")?;
        let inequalities = t.rows("inequalities")?;
        t.expect("psd")?;
        let mut psd = Vec::new();
        for _ in 0..t.num::<usize>()? {
            t.expect("block")?;
            let dim: usize = t.num()?;
            let count: usize = t.num()?;
            let mut constant = DMatrix::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    constant[(r, c)] = t.num()?;
                }
            }
            let mut terms = Vec::with_capacity(count);
            for _ in 0..count {
                t.expect("term")?;
                let var: usize = t.num()?;
                let nnz: usize = t.num()?;
                let mut entries = Vec::with_capacity(nnz);
                for _ in 0..nnz {
                    entries.push((t.num()?, t.num()?, t.num()?));
                }
                terms.push(PsdTerm { var, entries });
            }
            psd.push(PsdBlock { dim, constant, terms });
        }
        Ok(Self { n, quad, linear, constant, equalities, inequalities, psd })
    }
}

struct Tokens<'a>(std::str::SplitWhitespace<'a>);

impl Tokens<'_> {
    fn next(&mut self) -> Result<&str> {
        self.0.next().ok_or_else(|| Error::Domain("dump is truncated".into()))
    }

    fn num<T: std::str::FromStr>(&mut self) -> Result<T> {
        let tok = self.next()?;
        tok.parse().map_err(|_| Error::Domain(format!("bad number {tok:?} in dump")))
    }

    fn expect(&mut self, key: &str) -> Result<()> {
        let tok = self.next()?;
        if tok != key {
            return Err(Error::Domain(format!("expected {key:?} in dump, found {tok:?}")));
        }
        Ok(())
    }

    fn rows(&mut self, key: &str) -> Result<Vec<SparseRow>> {
        self.expect(key)?;
        let count: usize = self.num()?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let rhs: f64 = self.num()?;
            let nnz: usize = self.num()?;
            let mut terms = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                terms.push((self.num()?, self.num()?));
            }
            out.push(SparseRow { terms, rhs });
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Cone vectors and scaling

/// Element of the product cone: nonnegative orthant times PSD blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeVec {
    pub lin: DVector<f64>,
    pub psd: Vec<DMatrix<f64>>,
}

impl ConeVec {
    fn dot(&self, other: &ConeVec) -> f64 {
        self.lin.dot(&other.lin) + self.psd.iter().zip(&other.psd).map(|(a, b)| a.dot(b)).sum::<f64>()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, alpha: f64, other: &ConeVec) {
        self.lin.axpy(alpha, &other.lin, 1.0);
        for (a, b) in self.psd.iter_mut().zip(&other.psd) {
            *a += b * alpha;
        }
    }

    fn scaled(&self, alpha: f64) -> ConeVec {
        ConeVec { lin: &self.lin * alpha, psd: self.psd.iter().map(|m| m * alpha).collect() }
    }

    fn sub(&self, other: &ConeVec) -> ConeVec {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Smallest eigenvalue across the cone components.
    fn min_eig(&self) -> f64 {
        let mut lo = self.lin.iter().copied().fold(f64::INFINITY, f64::min);
        for m in &self.psd {
            let e = SymmetricEigen::new(sym(m)).eigenvalues;
            lo = lo.min(e.iter().copied().fold(f64::INFINITY, f64::min));
        }
        lo
    }

    fn add_identity(&mut self, alpha: f64) {
        self.lin.add_scalar_mut(alpha);
        for m in &mut self.psd {
            for i in 0..m.nrows() {
                m[(i, i)] += alpha;
            }
        }
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Nesterov-Todd scaling of one PSD block: `S = rΛrᵀ`, `Z = r⁻ᵀΛr⁻¹`.
#[derive(Debug, Clone)]
struct PsdScaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    /// `(rrᵀ)⁻¹`.
    q: DMatrix<f64>,
    lambda: DVector<f64>,
}

#[derive(Debug, Clone)]
struct Scaling {
    /// `sqrt(s / z)` per inequality.
    w: DVector<f64>,
    lam: DVector<f64>,
    psd: Vec<PsdScaling>,
}

impl Scaling {
    fn identity(program: &RealConeProgram) -> Self {
        let m = program.inequalities.len();
        Self {
            w: DVector::from_element(m, 1.0),
            lam: DVector::from_element(m, 1.0),
            psd: program
                .psd
                .iter()
                .map(|b| PsdScaling {
                    r: DMatrix::identity(b.dim, b.dim),
                    rinv: DMatrix::identity(b.dim, b.dim),
                    q: DMatrix::identity(b.dim, b.dim),
                    lambda: DVector::from_element(b.dim, 1.0),
                })
                .collect(),
        }
    }

    fn compute(s: &ConeVec, z: &ConeVec) -> Option<Self> {
        let w = s.lin.zip_map(&z.lin, |a, b| (a / b).sqrt());
        let lam = s.lin.zip_map(&z.lin, |a, b| (a * b).sqrt());
        if w.iter().chain(lam.iter()).any(|v| !v.is_finite() || *v <= 0.0) {
            return None;
        }
        let mut psd = Vec::with_capacity(s.psd.len());
        for (sm, zm) in s.psd.iter().zip(&z.psd) {
            let ls = Cholesky::new(sym(sm))?.unpack();
            let lz = Cholesky::new(sym(zm))?.unpack();
            let svd = SVD::new(lz.transpose() * &ls, true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let lambda = svd.singular_values;
            if lambda.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return None;
            }
            let inv_sqrt = lambda.map(|v| 1.0 / v.sqrt());
            let mut r = ls * vt.transpose();
            for (k, &f) in inv_sqrt.iter().enumerate() {
                r.column_mut(k).scale_mut(f);
            }
            let mut rinv = u.transpose() * lz.transpose();
            for (k, &f) in inv_sqrt.iter().enumerate() {
                rinv.row_mut(k).scale_mut(f);
            }
            let q = sym(&(rinv.transpose() * &rinv));
            psd.push(PsdScaling { r, rinv, q, lambda });
        }
        Some(Self { w, lam, psd })
    }

    /// `(WᵀW)⁻¹ v`: `v / w²` and `Q V Q`.
    fn apply_inv_wtw(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lin: v.lin.zip_map(&self.w, |a, w| a / (w * w)),
            psd: v.psd.iter().zip(&self.psd).map(|(m, sc)| &sc.q * m * &sc.q).collect(),
        }
    }

    /// `WᵀW v`: `w² v` and `(rrᵀ) V (rrᵀ)`.
    fn apply_wtw(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lin: v.lin.zip_map(&self.w, |a, w| a * w * w),
            psd: v
                .psd
                .iter()
                .zip(&self.psd)
                .map(|(m, sc)| {
                    let t = sc.r.transpose() * m * &sc.r;
                    &sc.r * t * sc.r.transpose()
                })
                .collect(),
        }
    }

    /// Scaled `ds`: `ds / w` and `r⁻¹ dS r⁻ᵀ`.
    fn scale_s(&self, ds: &ConeVec) -> ConeVec {
        ConeVec {
            lin: ds.lin.zip_map(&self.w, |a, w| a / w),
            psd: ds.psd.iter().zip(&self.psd).map(|(m, sc)| &sc.rinv * m * sc.rinv.transpose()).collect(),
        }
    }

    /// Scaled `dz`: `w dz` and `rᵀ dZ r`.
    fn scale_z(&self, dz: &ConeVec) -> ConeVec {
        ConeVec {
            lin: dz.lin.zip_map(&self.w, |a, w| a * w),
            psd: dz.psd.iter().zip(&self.psd).map(|(m, sc)| sc.r.transpose() * m * &sc.r).collect(),
        }
    }

    /// `λ ∘ λ`.
    fn lambda_sq(&self) -> ConeVec {
        ConeVec {
            lin: self.lam.map(|l| l * l),
            psd: self.psd.iter().map(|sc| DMatrix::from_diagonal(&sc.lambda.map(|l| l * l))).collect(),
        }
    }

    /// Right-hand side `ds + WᵀW dz` for the complementarity target `m`:
    /// `W (λ ⬦ m)` with `λ ⬦` the inverse of the Jordan product by `λ`.
    fn complementarity_rhs(&self, m: &ConeVec) -> ConeVec {
        ConeVec {
            lin: DVector::from_iterator(
                m.lin.len(),
                m.lin.iter().zip(self.lam.iter()).zip(self.w.iter()).map(|((&mk, &l), &w)| w * mk / l),
            ),
            psd: m
                .psd
                .iter()
                .zip(&self.psd)
                .map(|(mm, sc)| {
                    let lam = &sc.lambda;
                    let k = DMatrix::from_fn(mm.nrows(), mm.ncols(), |i, j| 2.0 * mm[(i, j)] / (lam[i] + lam[j]));
                    &sc.r * k * sc.r.transpose()
                })
                .collect(),
        }
    }

    /// Largest step keeping `λ + α·d` in the cone for a scaled direction.
    fn max_step(&self, d: &ConeVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (&l, &di) in self.lam.iter().zip(d.lin.iter()) {
            if di < 0.0 {
                alpha = alpha.min(-l / di);
            }
        }
        for (sc, dm) in self.psd.iter().zip(&d.psd) {
            let inv_sqrt = sc.lambda.map(|v| 1.0 / v.sqrt());
            let b = DMatrix::from_fn(dm.nrows(), dm.ncols(), |i, j| inv_sqrt[i] * dm[(i, j)] * inv_sqrt[j]);
            let lo = SymmetricEigen::new(sym(&b)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            if lo < 0.0 {
                alpha = alpha.min(-1.0 / lo);
            }
        }
        alpha
    }
}

/// Jordan product `(XY + YX) / 2` componentwise.
fn jordan(a: &ConeVec, b: &ConeVec) -> ConeVec {
    ConeVec {
        lin: a.lin.component_mul(&b.lin),
        psd: a.psd.iter().zip(&b.psd).map(|(x, y)| (x * y + y * x) * 0.5).collect(),
    }
}

// ---------------------------------------------------------------------------
// Reduced KKT system

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    /// Component label per element (labels in order of first appearance)
    /// and component sizes.
    fn components(&mut self) -> (Vec<usize>, Vec<usize>) {
        let n = self.parent.len();
        let mut label = vec![usize::MAX; n];
        let mut comp = vec![0; n];
        let mut sizes = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if label[r] == usize::MAX {
                label[r] = sizes.len();
                sizes.push(0);
            }
            comp[i] = label[r];
            sizes[label[r]] += 1;
        }
        (comp, sizes)
    }
}

/// Block-diagonal structure of `P + GᵀW⁻¹W⁻ᵀG` over variable components.
struct Structure {
    comp: Vec<usize>,
    local: Vec<usize>,
    sizes: Vec<usize>,
}

impl Structure {
    fn new(program: &RealConeProgram) -> Self {
        let mut uf = UnionFind::new(program.n);
        for &(i, j, _) in &program.quad {
            uf.union(i, j);
        }
        for row in &program.inequalities {
            for w in row.terms.windows(2) {
                uf.union(w[0].0, w[1].0);
            }
        }
        for b in &program.psd {
            for w in b.terms.windows(2) {
                uf.union(w[0].var, w[1].var);
            }
        }
        let (comp, sizes) = uf.components();
        let mut count = vec![0; sizes.len()];
        let mut local = vec![0; program.n];
        for i in 0..program.n {
            local[i] = count[comp[i]];
            count[comp[i]] += 1;
        }
        Self { comp, local, sizes }
    }
}

struct KktFactor {
    chol: Vec<Cholesky<f64, nalgebra::Dyn>>,
    /// Columns `H⁻¹aₖ` for each equality row.
    hinv_at: Vec<Vec<f64>>,
    schur_eq: Option<Cholesky<f64, nalgebra::Dyn>>,
}

fn factor_kkt(program: &RealConeProgram, st: &Structure, scaling: &Scaling) -> Result<KktFactor> {
    let mut blocks: Vec<DMatrix<f64>> = st.sizes.iter().map(|&s| DMatrix::zeros(s, s)).collect();
    for &(i, j, v) in &program.quad {
        blocks[st.comp[i]][(st.local[i], st.local[j])] += v;
    }
    for (row, &w) in program.inequalities.iter().zip(scaling.w.iter()) {
        let d = 1.0 / (w * w);
        for &(i, a) in &row.terms {
            for &(j, b) in &row.terms {
                blocks[st.comp[i]][(st.local[i], st.local[j])] += a * b * d;
            }
        }
    }
    for (b, sc) in program.psd.iter().zip(&scaling.psd) {
        let q = &sc.q;
        let dim = b.dim;
        let mut qfq = DMatrix::<f64>::zeros(dim, dim);
        for (ti, term_i) in b.terms.iter().enumerate() {
            qfq.fill(0.0);
            let qs = q.as_slice();
            let out = qfq.as_mut_slice();
            for &(r, c, v) in &term_i.entries {
                // Q[:, r] v Q[c, :], with Q symmetric so Q[c, :] = Q[:, c].
                let qr = &qs[r * dim..(r + 1) * dim];
                let qc = &qs[c * dim..(c + 1) * dim];
                for (col, dst) in out.chunks_exact_mut(dim).enumerate() {
                    let f = v * qc[col];
                    if f != 0.0 {
                        for (d, &a) in dst.iter_mut().zip(qr) {
                            *d += a * f;
                        }
                    }
                }
            }
            let qfq_s = qfq.as_slice();
            let ci = st.comp[term_i.var];
            let li = st.local[term_i.var];
            for term_j in &b.terms[ti..] {
                let h: f64 = term_j.entries.iter().map(|&(r, c, v)| v * qfq_s[r * dim + c]).sum();
                let lj = st.local[term_j.var];
                blocks[ci][(li, lj)] += h;
                if term_j.var != term_i.var {
                    blocks[ci][(lj, li)] += h;
                }
            }
        }
    }
    let mut chol = Vec::with_capacity(blocks.len());
    for h in blocks {
        chol.push(robust_cholesky(h).ok_or_else(|| Error::Numeric("KKT block is not positive definite".into()))?);
    }
    let mut factor = KktFactor { chol, hinv_at: Vec::new(), schur_eq: None };
    let p = program.equalities.len();
    if p > 0 {
        for row in &program.equalities {
            let mut a = vec![0.0; program.n];
            for &(i, c) in &row.terms {
                a[i] += c;
            }
            factor.hinv_at.push(solve_h(&factor, st, &a));
        }
        let mut s = DMatrix::zeros(p, p);
        for (k, row) in program.equalities.iter().enumerate() {
            for l in 0..p {
                s[(k, l)] = row.dot(&factor.hinv_at[l]);
            }
        }
        let s = sym(&s);
        factor.schur_eq = Some(
            robust_cholesky(s).ok_or_else(|| Error::Numeric("equality constraints are rank deficient".into()))?,
        );
    }
    Ok(factor)
}

fn robust_cholesky(h: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Some(c);
    }
    let scale = h.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut delta = 1e-14 * scale;
    for _ in 0..8 {
        let mut reg = h.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::new(reg) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

fn solve_h(factor: &KktFactor, st: &Structure, rhs: &[f64]) -> Vec<f64> {
    let mut parts: Vec<DVector<f64>> = st.sizes.iter().map(|&s| DVector::zeros(s)).collect();
    for (i, &v) in rhs.iter().enumerate() {
        parts[st.comp[i]][st.local[i]] = v;
    }
    for (p, c) in parts.iter_mut().zip(&factor.chol) {
        c.solve_mut(p);
    }
    (0..rhs.len()).map(|i| parts[st.comp[i]][st.local[i]]).collect()
}

/// Solves `P dx + Aᵀdy + Gᵀdz = bx`, `A dx = by`, `G dx − WᵀW dz = bz`
/// with one round of iterative refinement.
fn solve_kkt(
    program: &RealConeProgram,
    st: &Structure,
    factor: &KktFactor,
    scaling: &Scaling,
    bx: &[f64],
    by: &[f64],
    bz: &ConeVec,
) -> (Vec<f64>, Vec<f64>, ConeVec) {
    let (mut dx, mut dy, mut dz) = solve_kkt_once(program, st, factor, scaling, bx, by, bz);
    let mut ex = bx.to_vec();
    let mut pdx = vec![0.0; program.n];
    program.mul_p(&dx, &mut pdx);
    let mut lhs = pdx;
    program.mul_at(&dy, &mut lhs);
    program.mul_gt(&dz, &mut lhs);
    for (e, l) in ex.iter_mut().zip(&lhs) {
        *e -= l;
    }
    let ey: Vec<f64> = program.mul_a(&dx).iter().zip(by).map(|(a, b)| b - a).collect();
    let mut ez = bz.sub(&program.mul_g(&dx));
    ez.axpy(1.0, &scaling.apply_wtw(&dz));
    let (cx, cy, cz) = solve_kkt_once(program, st, factor, scaling, &ex, &ey, &ez);
    for (d, c) in dx.iter_mut().zip(&cx) {
        *d += c;
    }
    for (d, c) in dy.iter_mut().zip(&cy) {
        *d += c;
    }
    dz.axpy(1.0, &cz);
    (dx, dy, dz)
}

fn solve_kkt_once(
    program: &RealConeProgram,
    st: &Structure,
    factor: &KktFactor,
    scaling: &Scaling,
    bx: &[f64],
    by: &[f64],
    bz: &ConeVec,
) -> (Vec<f64>, Vec<f64>, ConeVec) {
    let mut rhs = bx.to_vec();
    program.mul_gt(&scaling.apply_inv_wtw(bz), &mut rhs);
    let u = solve_h(factor, st, &rhs);
    let mut dx = u.clone();
    let mut dy = Vec::new();
    if let Some(schur) = &factor.schur_eq {
        let au = program.mul_a(&u);
        let mut t = DVector::from_iterator(by.len(), au.iter().zip(by).map(|(a, b)| a - b));
        schur.solve_mut(&mut t);
        dy = t.iter().copied().collect();
        for (k, &yk) in dy.iter().enumerate() {
            for (d, h) in dx.iter_mut().zip(&factor.hinv_at[k]) {
                *d -= yk * h;
            }
        }
    }
    let gdx = program.mul_g(&dx);
    let dz = scaling.apply_inv_wtw(&gdx.sub(bz));
    (dx, dy, dz)
}

// ---------------------------------------------------------------------------
// Solver

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Stopped on numerical trouble with all residuals within `100·tol`.
    ReducedAccuracy,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: ConeVec,
    pub z: ConeVec,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: KktResiduals,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Anything that can solve an embedded cone program.
pub trait ConicSolver {
    fn solve_program(&self, program: &RealConeProgram) -> Result<ConicSolution>;
}

/// The built-in interior-point method.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InteriorPoint {
    pub settings: SolverSettings,
}

impl ConicSolver for InteriorPoint {
    fn solve_program(&self, program: &RealConeProgram) -> Result<ConicSolution> {
        solve_real(program, self.settings)
    }
}

/// Embeds and solves a complex-level problem.
pub fn solve(problem: &ConicProblem, settings: SolverSettings) -> Result<ConicSolution> {
    solve_real(&embed_real(problem)?, settings)
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: ConeVec,
    z: ConeVec,
}

struct Measured {
    residuals: KktResiduals,
    pcost: f64,
    dcost: f64,
    merit: f64,
}

fn measure(program: &RealConeProgram, it: &Iterate, norms: (f64, f64, f64)) -> Measured {
    let (nb, nh, nc) = norms;
    let n = program.n;
    let mut px = vec![0.0; n];
    program.mul_p(&it.x, &mut px);
    let mut rx: Vec<f64> = px.iter().zip(&program.linear).map(|(a, c)| a + c).collect();
    program.mul_at(&it.y, &mut rx);
    program.mul_gt(&it.z, &mut rx);
    let ax = program.mul_a(&it.x);
    let ry: Vec<f64> = ax.iter().zip(&program.equalities).map(|(a, r)| a - r.rhs).collect();
    let mut rz = program.mul_g(&it.x);
    rz.axpy(1.0, &it.s);
    rz.axpy(-1.0, &program.h());
    let gap = it.s.dot(&it.z);
    let pcost = 0.5 * dot(&it.x, &px) + dot(&program.linear, &it.x) + program.constant;
    let dcost = pcost + dot(&it.y, &ry) + it.z.dot(&rz) - gap;
    let primal = (norm(&ry) / nb.max(1.0)).max(rz.norm() / nh.max(1.0));
    let dual = norm(&rx) / nc.max(1.0);
    let rel_gap = gap.abs() / pcost.abs().max(1.0);
    Measured {
        residuals: KktResiduals { primal, dual, gap: rel_gap },
        pcost,
        dcost,
        merit: primal.max(dual).max(rel_gap),
    }
}

/// Primal-dual path following on the embedded program.
pub fn solve_real(program: &RealConeProgram, settings: SolverSettings) -> Result<ConicSolution> {
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(Error::Domain("solver tolerance and iteration cap must be positive".into()));
    }
    let n = program.n;
    let st = Structure::new(program);
    let h = program.h();
    let b: Vec<f64> = program.equalities.iter().map(|r| r.rhs).collect();
    let norms = (norm(&b), h.norm(), norm(&program.linear));
    let nu = program.degree() as f64;

    // Starting point from the identity-scaled KKT system, shifted into the
    // cone interior.
    let ident = Scaling::identity(program);
    let factor = factor_kkt(program, &st, &ident)?;
    let minus_c: Vec<f64> = program.linear.iter().map(|c| -c).collect();
    let (x, y, z0) = solve_kkt(program, &st, &factor, &ident, &minus_c, &b, &h);
    let mut s = z0.scaled(-1.0);
    let mut z = z0;
    for v in [&mut s, &mut z] {
        if nu > 0.0 {
            let shift = -v.min_eig();
            if shift >= -1e-8 * v.norm().max(1.0) {
                v.add_identity(1.0 + shift);
            }
        }
    }
    let mut it = Iterate { x, y, s, z };

    let mut best: Option<(Measured, Iterate)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    for k in 0..=settings.max_iter {
        let m = measure(program, &it, norms);
        let converged = m.residuals.primal <= settings.tol
            && m.residuals.dual <= settings.tol
            && m.residuals.gap <= settings.tol;
        let infeasible = primal_infeasible(program, &it, &h, &b, settings.tol);
        let better = best.as_ref().is_none_or(|(bm, _)| m.merit < bm.merit);
        if converged || infeasible || better {
            best = Some((m, Iterate { x: it.x.clone(), y: it.y.clone(), s: it.s.clone(), z: it.z.clone() }));
        }
        iterations = k;
        if converged {
            status = SolveStatus::Optimal;
            break;
        }
        if infeasible {
            status = SolveStatus::Infeasible;
            break;
        }
        if k == settings.max_iter || nu == 0.0 && k > 0 {
            break;
        }
        // Loss of interiority or a singular system ends the run; the best
        // iterate so far is returned.
        let Some(scaling) = Scaling::compute(&it.s, &it.z) else { break };
        let Ok(factor) = factor_kkt(program, &st, &scaling) else { break };

        let mut px = vec![0.0; n];
        program.mul_p(&it.x, &mut px);
        let mut rx: Vec<f64> = px.iter().zip(&program.linear).map(|(a, c)| a + c).collect();
        program.mul_at(&it.y, &mut rx);
        program.mul_gt(&it.z, &mut rx);
        let ry: Vec<f64> = program.mul_a(&it.x).iter().zip(&b).map(|(a, b)| a - b).collect();
        let mut rz = program.mul_g(&it.x);
        rz.axpy(1.0, &it.s);
        rz.axpy(-1.0, &h);
        let bx: Vec<f64> = rx.iter().map(|v| -v).collect();
        let by: Vec<f64> = ry.iter().map(|v| -v).collect();

        let lam_sq = scaling.lambda_sq();
        let step = |target: &ConeVec| {
            let rhs_s = scaling.complementarity_rhs(target);
            let bz = rz.scaled(-1.0).sub(&rhs_s);
            let (dx, dy, dz) = solve_kkt(program, &st, &factor, &scaling, &bx, &by, &bz);
            let ds = rhs_s.sub(&scaling.apply_wtw(&dz));
            (dx, dy, ds, dz)
        };

        // Predictor.
        let (_, _, ds_a, dz_a) = step(&lam_sq.scaled(-1.0));
        let sds_a = scaling.scale_s(&ds_a);
        let sdz_a = scaling.scale_z(&dz_a);
        let alpha_aff = scaling.max_step(&sds_a).min(scaling.max_step(&sdz_a)).min(1.0);
        let mu = it.s.dot(&it.z) / nu;
        let sigma = (1.0 - alpha_aff).powi(3);

        // Corrector.
        let mut target = lam_sq.scaled(-1.0);
        target.axpy(-1.0, &jordan(&sds_a, &sdz_a));
        if nu > 0.0 {
            target.add_identity(sigma * mu);
        }
        let (dx, dy, ds, dz) = step(&target);
        let alpha_max = scaling.max_step(&scaling.scale_s(&ds)).min(scaling.max_step(&scaling.scale_z(&dz)));
        let alpha = (STEP_FRACTION * alpha_max).min(1.0);

        for (xi, d) in it.x.iter_mut().zip(&dx) {
            *xi += alpha * d;
        }
        for (yi, d) in it.y.iter_mut().zip(&dy) {
            *yi += alpha * d;
        }
        it.s.axpy(alpha, &ds);
        it.z.axpy(alpha, &dz);
    }

    let (m, chosen) = best.expect("at least one iterate is measured");
    let near = 100.0 * settings.tol;
    if status == SolveStatus::MaxIter
        && iterations < settings.max_iter
        && m.residuals.primal <= near
        && m.residuals.dual <= near
        && m.residuals.gap <= near
    {
        status = SolveStatus::ReducedAccuracy;
    }
    Ok(ConicSolution {
        objective: m.pcost,
        dual_objective: m.dcost,
        residuals: m.residuals,
        status,
        iterations,
        x: chosen.x,
        y: chosen.y,
        s: chosen.s,
        z: chosen.z,
    })
}

/// `(y, z)` with `Aᵀy + Gᵀz ≈ 0` and `bᵀy + hᵀz < 0` certifies that no
/// primal point exists.
fn primal_infeasible(program: &RealConeProgram, it: &Iterate, h: &ConeVec, b: &[f64], tol: f64) -> bool {
    let lead = -(dot(b, &it.y) + h.dot(&it.z));
    if !(lead > 0.0) {
        return false;
    }
    let mut r = vec![0.0; program.n];
    program.mul_at(&it.y, &mut r);
    program.mul_gt(&it.z, &mut r);
    let scale = (norm(&it.y).powi(2) + it.z.dot(&it.z)).sqrt();
    // Ratio test on the normalized certificate.
    norm(&r) / lead <= tol && lead / scale.max(f64::MIN_POSITIVE) > tol && scale > 1e6 * (1.0 + norm(&it.x))
}

// ---------------------------------------------------------------------------
// Certification

/// Residuals recomputed from scratch for a candidate primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyReport {
    /// Largest `|aᵀx − b|`.
    pub equality: f64,
    /// Largest violation of `aᵀx ≤ h`, zero if all hold.
    pub inequality: f64,
    /// Smallest eigenvalue over all LMI blocks (negative when violated).
    pub psd_min_eig: f64,
    /// `‖Px + c + Aᵀy + Gᵀz‖∞`.
    pub stationarity: f64,
    /// `|⟨s(x), z⟩|` with the slack recomputed from `x`.
    pub complementarity: f64,
    /// Primal objective minus dual objective.
    pub gap: f64,
    /// Smallest eigenvalue of the dual cone variable.
    pub dual_min_eig: f64,
}

impl CertifyReport {
    /// Largest of the feasibility and optimality residuals.
    pub fn worst(&self) -> f64 {
        [
            self.equality,
            self.inequality,
            (-self.psd_min_eig).max(0.0),
            self.stationarity,
            self.complementarity,
            self.gap.abs(),
            (-self.dual_min_eig).max(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn certify(solution: &ConicSolution, program: &RealConeProgram) -> CertifyReport {
    let x = &solution.x;
    let equality = program.equalities.iter().map(|r| (r.dot(x) - r.rhs).abs()).fold(0.0, f64::max);
    let slack = program.slack(x);
    let inequality = slack.lin.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let psd_min_eig = slack
        .psd
        .iter()
        .map(|m| SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    let mut r = vec![0.0; program.n];
    program.mul_p(x, &mut r);
    for (ri, c) in r.iter_mut().zip(&program.linear) {
        *ri += c;
    }
    program.mul_at(&solution.y, &mut r);
    program.mul_gt(&solution.z, &mut r);
    let stationarity = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let complementarity = slack.dot(&solution.z).abs();
    let pcost = program.objective(x);
    let mut px = vec![0.0; program.n];
    program.mul_p(x, &mut px);
    let b: Vec<f64> = program.equalities.iter().map(|r| r.rhs).collect();
    // Lagrangian dual value at (x, y, z).
    let dcost = -0.5 * dot(x, &px) - dot(&b, &solution.y) - program.h().dot(&solution.z) + program.constant;
    let dual_min_eig = solution.z.min_eig();
    CertifyReport {
        equality,
        inequality,
        psd_min_eig: if psd_min_eig.is_finite() { psd_min_eig } else { 0.0 },
        stationarity,
        complementarity,
        gap: pcost - dcost,
        dual_min_eig: if dual_min_eig.is_finite() { dual_min_eig } else { 0.0 },
    }
}

/// Builds a full primal-dual candidate from primal `x` and dual values,
/// with the slack recomputed from `x` (for certifying hand-built points).
pub fn candidate(program: &RealConeProgram, x: Vec<f64>, y: Vec<f64>, z: ConeVec) -> ConicSolution {
    let s = program.slack(&x);
    let objective = program.objective(&x);
    ConicSolution {
        x,
        y,
        s,
        z,
        objective,
        dual_objective: f64::NAN,
        residuals: KktResiduals { primal: f64::NAN, dual: f64::NAN, gap: f64::NAN },
        status: SolveStatus::MaxIter,
        iterations: 0,
    }
}

impl RealConeProgram {
    /// Zero dual candidate shaped like this program's cone.
    pub fn zero_dual(&self) -> ConeVec {
        self.zero_cone()
    }
}
