//! Exact scalar arithmetic: parameter points, q-integers, the twisted
//! Cartan-type matrix `B(m)` and its inverse `I(m)`.
//!
//! Two independent deformation parameters are sampled as rationals:
//!
//! * `u`, with `x = u^2`, so that half-integer powers of `x` are exact;
//! * `t`, which stands for `x^r` with `r` a generic exponent that is never
//!   assigned a numeric value.  Every exponent of the form `c·r + d` that
//!   shows up in the algebra is evaluated as `t^c · x^d`.
//!
//! A claimed identity in `(x, x^r)` is certified by exact agreement at three
//! (or more) independent parameter points.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::{EngineError, Result};

/// Arbitrary-precision rational scalar.
pub type Rat = BigRational;

/// Dense square matrix of rationals.
pub type Mat = Vec<Vec<Rat>>;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn rfrac(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Integer power of a rational (negative exponents allowed).
pub fn rpow(base: &Rat, e: i64) -> Rat {
    base.pow(i32::try_from(e).expect("exponent fits i32"))
}

// ============================================================
// Monomials in (u, t)
// ============================================================

/// A monomial `u^{u_pow} · t^{t_pow}`, i.e. `x^{u_pow/2} · (x^r)^{t_pow}`.
///
/// Every root of every factored rational function handled by the engine is a
/// monomial of this form, so cancellation and pole identification are purely
/// structural (the parameter-point validation guarantees distinct lattice
/// points evaluate to distinct rationals).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct XtMono {
    pub u_pow: i64,
    pub t_pow: i64,
}

impl XtMono {
    pub const ONE: XtMono = XtMono { u_pow: 0, t_pow: 0 };

    /// `x^s` for an integer `s`.
    pub fn x_pow(s: i64) -> Self {
        XtMono { u_pow: 2 * s, t_pow: 0 }
    }

    /// `x^{c·r + d}` evaluated as `t^c x^d`; `half_d` is in units of 1/2.
    pub fn xr_pow(c: i64, half_d: i64) -> Self {
        XtMono { u_pow: half_d, t_pow: c }
    }

    pub fn is_one(&self) -> bool {
        self.u_pow == 0 && self.t_pow == 0
    }

    pub fn inv(&self) -> Self {
        XtMono { u_pow: -self.u_pow, t_pow: -self.t_pow }
    }

    pub fn mul(&self, o: &XtMono) -> Self {
        XtMono { u_pow: self.u_pow + o.u_pow, t_pow: self.t_pow + o.t_pow }
    }

    pub fn pow(&self, e: i64) -> Self {
        XtMono { u_pow: self.u_pow * e, t_pow: self.t_pow * e }
    }
}

impl std::fmt::Display for XtMono {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_one() {
            return write!(f, "1");
        }
        let mut parts = Vec::new();
        if self.u_pow != 0 {
            if self.u_pow % 2 == 0 {
                parts.push(format!("x^{}", self.u_pow / 2));
            } else {
                parts.push(format!("x^{}/2", self.u_pow));
            }
        }
        if self.t_pow != 0 {
            parts.push(format!("(x^r)^{}", self.t_pow));
        }
        write!(f, "{}", parts.join("*"))
    }
}

// ============================================================
// Parameter points
// ============================================================

/// An exact sample of the deformation parameters together with the rank and
/// the truncation orders used downstream.
#[derive(Clone, Debug)]
pub struct ParamPoint {
    /// Rank `N` of the underlying finite root system (`N >= 1`).
    pub n: usize,
    /// `u`, with `x = u^2`.
    pub u: Rat,
    /// `t`, standing for `x^r`.
    pub t: Rat,
    /// Truncation order for power series in the current arguments.
    pub z_order: usize,
    /// Truncation order for oscillator-mode fingerprints.
    pub mode_order: usize,
}

/// Half of the lattice window checked by [`ParamPoint::validate`]: every
/// monomial `u^a t^b` with `|a| <= MONO_WINDOW_U`, `|b| <= MONO_WINDOW_T`
/// other than the trivial one must differ from 1 at the sample.
pub const MONO_WINDOW_U: i64 = 240;
pub const MONO_WINDOW_T: i64 = 8;

impl ParamPoint {
    pub fn new(n: usize, u: Rat, t: Rat, z_order: usize, mode_order: usize) -> Result<Self> {
        let p = ParamPoint { n, u, t, z_order, mode_order };
        p.validate()?;
        Ok(p)
    }

    /// Rejects samples for which distinct monomials `u^a t^b` in the working
    /// window could collide (that would defeat structural pole tracking).
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(EngineError::InvalidConfig("rank N must be >= 1".into()));
        }
        for (name, v) in [("u", &self.u), ("t", &self.t)] {
            if v.is_zero() || v.abs().is_one() {
                return Err(EngineError::DegenerateParam(format!(
                    "{name} must avoid 0 and ±1, got {v}"
                )));
            }
        }
        // Magnitude screen in floats, then exact confirmation of suspects.
        let lu = rat_to_f64(&self.u).abs().ln();
        let lt = rat_to_f64(&self.t).abs().ln();
        for a in -MONO_WINDOW_U..=MONO_WINDOW_U {
            for b in -MONO_WINDOW_T..=MONO_WINDOW_T {
                if a == 0 && b == 0 {
                    continue;
                }
                if (a as f64 * lu + b as f64 * lt).abs() < 1e-9 {
                    let m = rpow(&self.u, a) * rpow(&self.t, b);
                    if m.is_one() {
                        return Err(EngineError::DegenerateParam(format!(
                            "collision u^{a} t^{b} = 1 at u={}, t={}",
                            self.u, self.t
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn x(&self) -> Rat {
        &self.u * &self.u
    }

    pub fn x_pow(&self, s: i64) -> Rat {
        rpow(&self.u, 2 * s)
    }

    pub fn u_pow(&self, s: i64) -> Rat {
        rpow(&self.u, s)
    }

    pub fn t_pow(&self, s: i64) -> Rat {
        rpow(&self.t, s)
    }

    pub fn mono(&self, m: &XtMono) -> Rat {
        rpow(&self.u, m.u_pow) * rpow(&self.t, m.t_pow)
    }

    /// `x - x^{-1}`, the ubiquitous denominator of q-integers.
    pub fn x_diff(&self) -> Rat {
        self.x_pow(1) - self.x_pow(-1)
    }

    /// The deformed integer `[c·r + d]_x = (x^{cr+d} - x^{-cr-d})/(x - x^{-1})`
    /// with `d = half_d / 2`.  All brackets used by the engine are instances:
    /// `[n]_x = bracket(0, 2n)`, `[rm]_x = bracket(m, 0)`,
    /// `[(r-1)m]_x = bracket(m, -2m)`, `[r - 1/2]_x = bracket(1, -1)`.
    pub fn bracket(&self, c: i64, half_d: i64) -> Rat {
        let m = XtMono { u_pow: half_d, t_pow: c };
        (self.mono(&m) - self.mono(&m.inv())) / self.x_diff()
    }

    /// `[n]_x` for an integer `n`.
    pub fn q_int(&self, n: i64) -> Rat {
        self.bracket(0, 2 * n)
    }

    /// `[n]_x` for a half-integer `n = two_n / 2`.
    pub fn q_int_half(&self, two_n: i64) -> Rat {
        self.bracket(0, two_n)
    }

    /// The structure constant `c(x, r) = [r]_x [r-1]_x (x - x^{-1})`.
    pub fn c_const(&self) -> Rat {
        self.bracket(1, 0) * self.bracket(1, -2) * self.x_diff()
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    // Good enough for screening: BigRational -> f64 via string round-trip of
    // a scaled division would be overkill; ratio of leading digits suffices.
    let num = r.numer();
    let den = r.denom();
    let nf = bigint_to_f64(num);
    let df = bigint_to_f64(den);
    nf / df
}

fn bigint_to_f64(b: &BigInt) -> f64 {
    let s = b.to_string();
    s.parse::<f64>().unwrap_or(f64::NAN)
}

// ============================================================
// The matrix B(m) and its inverse I(m)
// ============================================================

/// The symmetric tridiagonal matrix `B(m)` (size `N x N`).
///
/// For `m != 0` the diagonal is `[2m]_x/[m]_x`, except for the last entry
/// which is `([2m]_x - [m]_x)/[m]_x`; the off-diagonal entries next to the
/// diagonal are `-1`.  At `m = 0` the diagonal degenerates to `(2, …, 2, 1)`.
pub fn b_matrix(p: &ParamPoint, m: i64) -> Result<Mat> {
    let n = p.n;
    let mut b = vec![vec![Rat::zero(); n]; n];
    let (diag, last) = if m == 0 {
        (rat(2), rat(1))
    } else {
        let qm = p.q_int(m);
        if qm.is_zero() {
            return Err(EngineError::DivisionByZero(format!("[{m}]_x = 0")));
        }
        let q2m = p.q_int(2 * m);
        (&q2m / &qm, (&q2m - &qm) / &qm)
    };
    for i in 0..n {
        b[i][i] = if i + 1 == n { last.clone() } else { diag.clone() };
        if i + 1 < n {
            b[i][i + 1] = rat(-1);
            b[i + 1][i] = rat(-1);
        }
    }
    Ok(b)
}

/// Entry `B_{i,j}(m)` as a list of signed x-monomials `± x^{e·m}`, valid for
/// every mode `m` simultaneously: the diagonal entries are `x^m + x^{-m}`
/// (plus `-1` in the last slot), the near-diagonal entries are `-1`.
///
/// Indices are 1-based.  Used to keep two-point functions in product form.
pub fn b_entry_monomials(n: usize, i: usize, j: usize) -> Vec<(i64, i64)> {
    // (sign, e) pairs meaning  sign * x^{e m}
    assert!(1 <= i && i <= n && 1 <= j && j <= n);
    if i == j {
        if i == n {
            vec![(1, 1), (1, -1), (-1, 0)]
        } else {
            vec![(1, 1), (1, -1)]
        }
    } else if i.abs_diff(j) == 1 {
        vec![(-1, 0)]
    } else {
        vec![]
    }
}

/// Closed-form inverse `I(m) = B(m)^{-1}` for `m != 0`.
///
/// With `D = [(N+1)m]_x - [Nm]_x`, for `i <= j`:
/// row `i = 1`: `([(N+1-j)m] - [(N-j)m]) / D`;
/// column `j = N`: `[im] / D`;
/// interior `2 <= i <= j <= N-1`:
/// `(-1)^{N-j+i} Σ_{k=i-1}^{N-j+i} (-1)^k [km] / D`.
pub fn i_matrix(p: &ParamPoint, m: i64) -> Result<Mat> {
    let n = p.n as i64;
    if m == 0 {
        let b0 = b_matrix(p, 0)?;
        return invert(&b0);
    }
    let d = p.q_int((n + 1) * m) - p.q_int(n * m);
    if d.is_zero() {
        return Err(EngineError::DivisionByZero(format!(
            "[(N+1)m]_x - [Nm]_x = 0 at m = {m}"
        )));
    }
    let entry = |i: i64, j: i64| -> Rat {
        // assumes i <= j
        if i == 1 {
            (p.q_int((n + 1 - j) * m) - p.q_int((n - j) * m)) / &d
        } else if j == n {
            p.q_int(i * m) / &d
        } else {
            let mut s = Rat::zero();
            for k in (i - 1)..=(n - j + i) {
                let term = p.q_int(k * m);
                if k % 2 == 0 {
                    s += term;
                } else {
                    s -= term;
                }
            }
            if (n - j + i) % 2 != 0 {
                s = -s;
            }
            s / &d
        }
    };
    let mut out = vec![vec![Rat::zero(); p.n]; p.n];
    for i in 1..=n {
        for j in i..=n {
            let v = entry(i, j);
            out[(i - 1) as usize][(j - 1) as usize] = v.clone();
            out[(j - 1) as usize][(i - 1) as usize] = v;
        }
    }
    Ok(out)
}

/// Oscillator pairing kernel:
/// `K_{i,j}(m) = (1/m) [rm]_x [(r-1)m]_x B_{i,j}(m) (x - x^{-1})^2`,
/// so that `[a_i(m), a_j(n)] = K_{i,j}(m) δ_{m+n,0}`.
pub fn kernel(p: &ParamPoint, m: i64) -> Result<Mat> {
    if m == 0 {
        return Err(EngineError::InvalidConfig("kernel is defined for m != 0".into()));
    }
    let b = b_matrix(p, m)?;
    let xd = p.x_diff();
    let scale = p.bracket(m, 0) * p.bracket(m, -2 * m) * &xd * &xd / rat(m);
    Ok(scale_mat(&b, &scale))
}

pub fn scale_mat(a: &Mat, s: &Rat) -> Mat {
    a.iter().map(|row| row.iter().map(|v| v * s).collect()).collect()
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut c = vec![vec![Rat::zero(); n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                let prod = &a[i][k] * &b[k][j];
                c[i][j] += prod;
            }
        }
    }
    c
}

pub fn identity_mat(n: usize) -> Mat {
    let mut m = vec![vec![Rat::zero(); n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Rat::one();
    }
    m
}

/// Exact Gaussian elimination with partial (first-nonzero) pivoting.
pub fn invert(a: &Mat) -> Result<Mat> {
    let n = a.len();
    let mut m: Vec<Vec<Rat>> = a.to_vec();
    let mut inv = identity_mat(n);
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .ok_or_else(|| EngineError::SingularMatrix(format!("no pivot in column {col}")))?;
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let pv = m[col][col].clone();
        for j in 0..n {
            m[col][j] /= &pv;
            inv[col][j] /= &pv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for j in 0..n {
                    let d = &f * &m[col][j];
                    m[r][j] -= d;
                    let d = &f * &inv[col][j];
                    inv[r][j] -= d;
                }
            }
        }
    }
    Ok(inv)
}

/// Three documented default parameter points plus fallbacks used when a
/// sample turns out degenerate.  All entries pass [`ParamPoint::validate`].
pub fn default_seeds() -> Vec<(Rat, Rat)> {
    vec![
        (rfrac(2, 3), rfrac(1, 5)),
        (rfrac(3, 5), rfrac(2, 7)),
        (rfrac(5, 7), rfrac(3, 11)),
        (rfrac(2, 5), rfrac(3, 7)),
        (rfrac(4, 7), rfrac(5, 9)),
        (rfrac(3, 7), rfrac(2, 9)),
    ]
}

/// Build `count` validated parameter points, skipping degenerate samples.
pub fn sample_points(
    n: usize,
    seeds: &[(Rat, Rat)],
    count: usize,
    z_order: usize,
    mode_order: usize,
) -> Result<Vec<ParamPoint>> {
    let mut all: Vec<(Rat, Rat)> = seeds.to_vec();
    for s in default_seeds() {
        if !all.contains(&s) {
            all.push(s);
        }
    }
    let mut out = Vec::new();
    for (u, t) in all {
        if out.len() == count {
            break;
        }
        if let Ok(p) = ParamPoint::new(n, u, t, z_order, mode_order) {
            out.push(p);
        }
    }
    if out.len() < count {
        return Err(EngineError::DegenerateParam(format!(
            "could not find {count} valid parameter points"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(n: usize) -> ParamPoint {
        ParamPoint::new(n, rfrac(2, 3), rfrac(1, 5), 12, 8).unwrap()
    }

    #[test]
    fn q_int_known_value() {
        // [2]_x = x + x^{-1}; at u = 2/3, x = 4/9: 4/9 + 9/4 = 97/36.
        let p = pt(2);
        assert_eq!(p.q_int(2), rfrac(97, 36));
    }

    #[test]
    fn q_int_is_odd() {
        let p = pt(3);
        for n in -12..=12 {
            assert_eq!(p.q_int(-n), -p.q_int(n));
        }
        assert_eq!(p.q_int(0), Rat::zero());
        assert_eq!(p.q_int(1), Rat::one());
    }

    #[test]
    fn bracket_variants_agree_with_definition() {
        let p = pt(2);
        // [rm] at m = 3 equals (t^3 - t^{-3})/(x - x^{-1})
        let lhs = p.bracket(3, 0);
        let rhs = (p.t_pow(3) - p.t_pow(-3)) / p.x_diff();
        assert_eq!(lhs, rhs);
        // [(r-1)m] at m = 2
        let lhs = p.bracket(2, -4);
        let tx = p.t_pow(2) * p.x_pow(-2);
        let rhs = (&tx - tx.recip()) / p.x_diff();
        assert_eq!(lhs, rhs);
        // [r - 1/2]
        let lhs = p.bracket(1, -1);
        let tu = &p.t / &p.u;
        let rhs = (&tu - tu.recip()) / p.x_diff();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn b_times_i_is_identity() {
        for n in 1..=4 {
            let p = pt(n);
            for m in -10..=10i64 {
                if m == 0 {
                    let b = b_matrix(&p, 0).unwrap();
                    let i = i_matrix(&p, 0).unwrap();
                    assert_eq!(mat_mul(&b, &i), identity_mat(n));
                    continue;
                }
                let b = b_matrix(&p, m).unwrap();
                let i = i_matrix(&p, m).unwrap();
                assert_eq!(mat_mul(&b, &i), identity_mat(n), "N={n}, m={m}");
            }
        }
    }

    #[test]
    fn b_matrix_is_even_in_m() {
        let p = pt(4);
        for m in 1..=10i64 {
            assert_eq!(b_matrix(&p, m).unwrap(), b_matrix(&p, -m).unwrap());
        }
    }

    #[test]
    fn b_entry_monomials_match_b_matrix() {
        let p = pt(3);
        for m in [-5i64, -1, 1, 2, 7] {
            let b = b_matrix(&p, m).unwrap();
            for i in 1..=3usize {
                for j in 1..=3usize {
                    let mut v = Rat::zero();
                    for (sign, e) in b_entry_monomials(3, i, j) {
                        v += rat(sign) * p.x_pow(e * m);
                    }
                    assert_eq!(v, b[i - 1][j - 1], "m={m} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn kernel_matches_definition_componentwise() {
        let p = pt(2);
        let m = 3;
        let k = kernel(&p, m).unwrap();
        let b = b_matrix(&p, m).unwrap();
        let xd = p.x_diff();
        let s = p.bracket(m, 0) * p.bracket(m, -6) * &xd * &xd / rat(m);
        assert_eq!(k[0][1], &b[0][1] * &s);
        assert_eq!(k[1][1], &b[1][1] * &s);
    }

    #[test]
    fn validate_rejects_collisions() {
        // t = u^2 collides with x.
        assert!(ParamPoint::new(2, rfrac(2, 3), rfrac(4, 9), 8, 8).is_err());
        assert!(ParamPoint::new(2, rfrac(1, 1), rfrac(1, 5), 8, 8).is_err());
    }

    #[test]
    fn default_seeds_are_valid() {
        let pts = sample_points(3, &[], 3, 30, 12).unwrap();
        assert_eq!(pts.len(), 3);
    }

    #[test]
    fn c_const_definition() {
        let p = pt(1);
        let expect = p.bracket(1, 0) * p.bracket(1, -2) * p.x_diff();
        assert_eq!(p.c_const(), expect);
    }
}
