//! The basic currents `Λ_s(z)`, `s ∈ J_N`, and the W-currents `T_i(z)`.
//!
//! The index set `J_N = {1, …, N, 0, N̄, …, 1̄}` is totally ordered as
//! written; the `Λ_s` are built from `Y_1` by the descending recursion that
//! divides out shifted copies of the `A_i`.  A W-current `T_i` is the sum
//! over `i`-element subsets `Ω` of `J_N` of a coefficient `d_Ω` times the
//! ordered normal product `:Λ_{s_1}(x^{-i+1}z)⋯Λ_{s_i}(x^{i-1}z):`.
//!
//! Operator equalities at this level (fusion collapses, the duality between
//! levels `i` and `2N+1-i`) are decided by oscillator *fingerprints*: two
//! normal-ordered monomials are the same operator exactly when their
//! per-mode exponent data and zero-mode content agree, which makes label
//! lists non-canonical but fingerprints canonical.

use std::collections::BTreeMap;

use itertools::Itertools;
use num_traits::One;

use crate::coeff::{ParamPoint, Rat, XtMono};
use crate::heisenberg::VertexOp;
use crate::series::delta_eval;
use crate::{EngineError, Result};

// ============================================================
// The index set J_N
// ============================================================

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JIndex {
    /// `k` with `1 <= k <= N`.
    Plain(usize),
    Zero,
    /// `k̄` with `1 <= k <= N`.
    Bar(usize),
}

impl JIndex {
    /// Position in the total order, `1..=2N+1`.
    pub fn pos(&self, n: usize) -> usize {
        match self {
            JIndex::Plain(k) => *k,
            JIndex::Zero => n + 1,
            JIndex::Bar(k) => 2 * n + 2 - k,
        }
    }

    pub fn from_pos(n: usize, pos: usize) -> JIndex {
        assert!((1..=2 * n + 1).contains(&pos));
        if pos <= n {
            JIndex::Plain(pos)
        } else if pos == n + 1 {
            JIndex::Zero
        } else {
            JIndex::Bar(2 * n + 2 - pos)
        }
    }

    pub fn bar(&self) -> JIndex {
        match self {
            JIndex::Plain(k) => JIndex::Bar(*k),
            JIndex::Zero => JIndex::Zero,
            JIndex::Bar(k) => JIndex::Plain(*k),
        }
    }

    /// All of `J_N` in increasing order.
    pub fn all(n: usize) -> Vec<JIndex> {
        (1..=2 * n + 1).map(|p| JIndex::from_pos(n, p)).collect()
    }
}

impl std::fmt::Display for JIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JIndex::Plain(k) => write!(f, "{k}"),
            JIndex::Zero => write!(f, "0"),
            JIndex::Bar(k) => write!(f, "{k}~"),
        }
    }
}

// ============================================================
// Basic currents
// ============================================================

/// All `2N+1` basic currents, indexed by position - 1.
pub fn build_lambdas(p: &ParamPoint) -> Result<Vec<VertexOp>> {
    let n = p.n;
    let half = p.q_int_half(1);
    let r_half = p.bracket(1, -1);
    let mut lam: Vec<VertexOp> = Vec::with_capacity(2 * n + 1);
    lam.push(VertexOp::y_op(p, 1)?);
    for k in 2..=n {
        let a = VertexOp::a_op(p, k - 1)
            .shifted(&XtMono::x_pow(1 - k as i64))
            .inverse();
        lam.push(lam[k - 2].compose(&a));
    }
    {
        let a = VertexOp::a_op(p, n).shifted(&XtMono::x_pow(-(n as i64))).inverse();
        let mut l0 = lam[n - 1].compose(&a);
        l0.pref = &l0.pref * &r_half / &half;
        lam.push(l0);
    }
    {
        let a = VertexOp::a_op(p, n)
            .shifted(&XtMono::x_pow(-(n as i64) - 1))
            .inverse();
        let mut lnb = lam[n].compose(&a);
        lnb.pref = &lnb.pref * &half / &r_half;
        lam.push(lnb);
    }
    for k in (1..n).rev() {
        // Λ_k̄ from Λ_(k+1)‾ at position 2N+1-k
        let a = VertexOp::a_op(p, k)
            .shifted(&XtMono::x_pow(k as i64 - 2 * n as i64 - 1))
            .inverse();
        let prev = lam[2 * n - k].clone();
        lam.push(prev.compose(&a));
    }
    debug_assert_eq!(lam.len(), 2 * n + 1);
    Ok(lam)
}

/// The ordered monomial `:Λ_{s_1}(x^{-i+1}z)⋯Λ_{s_i}(x^{i-1}z):` for the
/// labels of `Ω` (must be strictly increasing).
pub fn lambda_arrow(p: &ParamPoint, lambdas: &[VertexOp], labels: &[JIndex]) -> VertexOp {
    let i = labels.len() as i64;
    let mut op = VertexOp::unit(p.n);
    for (l, s) in labels.iter().enumerate() {
        let shift = XtMono::x_pow(-i + 1 + 2 * l as i64);
        op = op.compose(&lambdas[s.pos(p.n) - 1].shifted(&shift));
    }
    op
}

/// The coefficient `d_Ω = Π_{p<q, s_q = s̄_p} Δ(x^{2(q-p+s_p-N-1)})`.
pub fn d_coeff(p: &ParamPoint, labels: &[JIndex]) -> Result<Rat> {
    let mut d = Rat::one();
    for (a, sa) in labels.iter().enumerate() {
        for (b, sb) in labels.iter().enumerate().skip(a + 1) {
            if *sb == sa.bar() {
                let nv = match sa {
                    JIndex::Plain(k) => *k as i64,
                    _ => {
                        return Err(EngineError::InvalidConfig(
                            "conjugate pair must be (plain, bar) in an increasing set".into(),
                        ))
                    }
                };
                let s = 2 * ((b as i64 - a as i64) + nv - p.n as i64 - 1);
                d *= delta_eval(p, s)?;
            }
        }
    }
    Ok(d)
}

// ============================================================
// W-currents
// ============================================================

#[derive(Clone, Debug)]
pub struct WTerm {
    pub labels: Vec<JIndex>,
    /// The subset coefficient `d_Ω` (operator prefactors live in `op.pref`).
    pub weight: Rat,
    pub op: VertexOp,
}

#[derive(Clone, Debug)]
pub struct WCurrent {
    pub level: usize,
    pub terms: Vec<WTerm>,
}

/// `T_i(z)` as its list of `C(2N+1, i)` terms.
pub fn build_t(p: &ParamPoint, lambdas: &[VertexOp], i: usize) -> Result<WCurrent> {
    assert!(i <= 2 * p.n + 1);
    let mut terms = Vec::new();
    for combo in JIndex::all(p.n).into_iter().combinations(i) {
        terms.push(WTerm {
            weight: d_coeff(p, &combo)?,
            op: lambda_arrow(p, lambdas, &combo),
            labels: combo,
        });
    }
    Ok(WCurrent { level: i, terms })
}

/// The duality scalar `c_i = ([r-1/2]/[1/2])·Π_{k=1}^{N-i} Δ(x^{2k})`.
pub fn duality_constant(p: &ParamPoint, i: usize) -> Result<Rat> {
    assert!(i <= p.n);
    let mut c = p.bracket(1, -1) / p.q_int_half(1);
    for k in 1..=(p.n - i) as i64 {
        c *= delta_eval(p, 2 * k)?;
    }
    Ok(c)
}

/// Total scalars of a current's terms, grouped by operator fingerprint.
pub fn class_map(p: &ParamPoint, t: &WCurrent) -> Result<BTreeMap<String, Rat>> {
    let mut map: BTreeMap<String, Rat> = BTreeMap::new();
    for term in &t.terms {
        let key = term.op.fingerprint(p)?.key();
        let scalar = &term.weight * &term.op.pref;
        *map.entry(key).or_default() += scalar;
    }
    map.retain(|_, v| !num_traits::Zero::is_zero(v));
    Ok(map)
}

/// The full staircase product of all `2N+1` basic currents collapses to the
/// constant `[r-1/2]/[1/2]`.
pub fn verify_product_collapse(p: &ParamPoint, lambdas: &[VertexOp]) -> Result<()> {
    let full = lambda_arrow(p, lambdas, &JIndex::all(p.n));
    let unit = VertexOp::unit(p.n);
    let fp = full.fingerprint(p)?;
    if fp != unit.fingerprint(p)? {
        let witness = fp
            .modes
            .first()
            .map(|((m, j), v)| format!("mode {m}, colour {}: residual {v}", j + 1))
            .unwrap_or_else(|| "zero-mode residual".into());
        return Err(EngineError::ExponentMismatch(format!(
            "full staircase product is not scalar; first failure: {witness}"
        )));
    }
    let expect = p.bracket(1, -1) / p.q_int_half(1);
    if full.pref != expect {
        return Err(EngineError::WeightMismatch(format!(
            "collapse scalar {} != [r-1/2]/[1/2] = {}",
            full.pref, expect
        )));
    }
    Ok(())
}

/// Duality between levels `i` and `2N+1-i`: `T_{2N+1-i} = c_i · T_i` as an
/// exact fingerprint-class equality.
pub fn verify_duality(p: &ParamPoint, lambdas: &[VertexOp], i: usize) -> Result<()> {
    let low = build_t(p, lambdas, i)?;
    let high = build_t(p, lambdas, 2 * p.n + 1 - i)?;
    let c = duality_constant(p, i)?;
    let mut low_map = class_map(p, &low)?;
    for v in low_map.values_mut() {
        *v *= &c;
    }
    let high_map = class_map(p, &high)?;
    if low_map != high_map {
        return Err(EngineError::WeightMismatch(format!(
            "duality failed at level {i} (N = {}): {} vs {} classes",
            p.n,
            high_map.len(),
            low_map.len()
        )));
    }
    Ok(())
}

/// The subset collapse: the ordered monomial over the conjugated complement
/// equals the one over `A` times `[r-1/2]/[1/2]` to the sign determined by
/// whether `0 ∈ A`.
pub fn verify_subset_collapse(p: &ParamPoint, lambdas: &[VertexOp], a: &[JIndex]) -> Result<()> {
    let mut comp: Vec<JIndex> = JIndex::all(p.n)
        .into_iter()
        .filter(|s| !a.contains(s))
        .map(|s| s.bar())
        .collect();
    comp.sort_by_key(|s| s.pos(p.n));
    let lhs = lambda_arrow(p, lambdas, &comp);
    let rhs = lambda_arrow(p, lambdas, a);
    if lhs.fingerprint(p)? != rhs.fingerprint(p)? {
        return Err(EngineError::ExponentMismatch(format!(
            "subset collapse fingerprints differ for A = {a:?}"
        )));
    }
    let ratio = p.bracket(1, -1) / p.q_int_half(1);
    let expect = if a.contains(&JIndex::Zero) { &rhs.pref / &ratio } else { &rhs.pref * &ratio };
    if lhs.pref != expect {
        return Err(EngineError::WeightMismatch(format!(
            "subset collapse scalar mismatch for A = {a:?}"
        )));
    }
    Ok(())
}

/// The quotient identity for the subset coefficients:
/// `d_{J_N∖A}/d_A = Π_{k=1}^{N-|A|} Δ(x^{2k}) · (Δ(1) if 0 ∈ A)`.
pub fn verify_d_quotient(p: &ParamPoint, a: &[JIndex]) -> Result<()> {
    assert!(a.len() <= p.n);
    let comp: Vec<JIndex> = JIndex::all(p.n)
        .into_iter()
        .filter(|s| !a.contains(s))
        .collect();
    let lhs = d_coeff(p, &comp)? / d_coeff(p, a)?;
    let mut rhs = Rat::one();
    for k in 1..=(p.n - a.len()) as i64 {
        rhs *= delta_eval(p, 2 * k)?;
    }
    if a.contains(&JIndex::Zero) {
        rhs *= delta_eval(p, 0)?;
    }
    if lhs != rhs {
        return Err(EngineError::WeightMismatch(format!(
            "d-quotient mismatch for A = {a:?}: {lhs} vs {rhs}"
        )));
    }
    Ok(())
}

/// Deterministic pseudo-random subsets of `J_N` for spot checks.
pub fn random_subsets(n: usize, count: usize, max_len: usize, seed: u64) -> Vec<Vec<JIndex>> {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let all = JIndex::all(n);
    let mut out = Vec::new();
    for _ in 0..count {
        let len = (next() as usize) % (max_len + 1);
        let mut picks: Vec<usize> = (0..2 * n + 1).collect();
        for k in 0..len.min(picks.len()) {
            let j = k + (next() as usize) % (picks.len() - k);
            picks.swap(k, j);
        }
        let mut subset: Vec<JIndex> = picks[..len.min(2 * n + 1)]
            .iter()
            .map(|&q| all[q])
            .collect();
        subset.sort_by_key(|s| s.pos(n));
        out.push(subset);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::rfrac;
    use num_traits::Zero;

    fn pt(n: usize) -> ParamPoint {
        ParamPoint::new(n, rfrac(2, 3), rfrac(1, 5), 14, 8).unwrap()
    }

    #[test]
    fn jindex_order_and_involution() {
        let n = 3;
        let all = JIndex::all(n);
        assert_eq!(all.len(), 2 * n + 1);
        for (a, sa) in all.iter().enumerate() {
            assert_eq!(sa.bar().bar(), *sa);
            assert_eq!(sa.pos(n), a + 1);
            for sb in all.iter().skip(a + 1) {
                // i ≺ j ⇔ j̄ ≺ ī
                assert!(sb.bar().pos(n) < sa.bar().pos(n) || *sb == sa.bar() && *sa == sb.bar());
            }
        }
    }

    #[test]
    fn lambda_one_is_y_one() {
        let p = pt(2);
        let lam = build_lambdas(&p).unwrap();
        let y1 = VertexOp::y_op(&p, 1).unwrap();
        assert_eq!(lam[0].fingerprint(&p).unwrap(), y1.fingerprint(&p).unwrap());
        assert_eq!(lam[0].pref, Rat::one());
    }

    #[test]
    fn lambda_prefactor_ratios() {
        let p = pt(3);
        let lam = build_lambdas(&p).unwrap();
        let ratio = p.bracket(1, -1) / p.q_int_half(1);
        let n = p.n;
        assert_eq!(&lam[n].pref / &lam[n - 1].pref, ratio);
        assert_eq!(&lam[n + 1].pref / &lam[n].pref, ratio.recip());
    }

    #[test]
    fn fusion_collapse_pairwise() {
        // :Λ_1(z)Λ_1̄(x^{2N+1}z): = 1, and the sliding pair identities
        // :Λ_k(z)Λ_k̄(x^{2N-2k+3}z): = :Λ_{k-1}(z)Λ_{(k-1)‾}(x^{2N-2k+3}z):.
        for n in 1..=4 {
            let p = pt(n);
            let lam = build_lambdas(&p).unwrap();
            let at = |s: JIndex, e: i64| lam[s.pos(n) - 1].shifted(&XtMono::x_pow(e));
            let pair = at(JIndex::Plain(1), 0).compose(&at(JIndex::Bar(1), 2 * n as i64 + 1));
            let unit = VertexOp::unit(n);
            assert_eq!(pair.fingerprint(&p).unwrap(), unit.fingerprint(&p).unwrap(), "N={n}");
            assert_eq!(pair.pref, Rat::one(), "N={n}");
            for k in 2..=n {
                let e = 2 * n as i64 - 2 * k as i64 + 3;
                let lhs = at(JIndex::Plain(k), 0).compose(&at(JIndex::Bar(k), e));
                let rhs = at(JIndex::Plain(k - 1), 0).compose(&at(JIndex::Bar(k - 1), e));
                assert_eq!(
                    lhs.fingerprint(&p).unwrap(),
                    rhs.fingerprint(&p).unwrap(),
                    "N={n}, k={k}"
                );
                assert_eq!(lhs.pref, rhs.pref, "N={n}, k={k}");
            }
            // :Λ_0(z)Λ_0(xz): = Δ(1)·:Λ_N(z)Λ_N̄(xz):
            let lhs = at(JIndex::Zero, 0).compose(&at(JIndex::Zero, 1));
            let rhs = at(JIndex::Plain(n), 0).compose(&at(JIndex::Bar(n), 1));
            assert_eq!(lhs.fingerprint(&p).unwrap(), rhs.fingerprint(&p).unwrap(), "N={n}");
            assert_eq!(lhs.pref, rhs.pref * delta_eval(&p, 0).unwrap(), "N={n}");
        }
    }

    #[test]
    fn t_term_counts_and_t0() {
        let p = pt(2);
        let lam = build_lambdas(&p).unwrap();
        let binom = |n: usize, k: usize| -> usize {
            (1..=k).fold(1usize, |acc, j| acc * (n - j + 1) / j)
        };
        for i in 0..=5 {
            let t = build_t(&p, &lam, i).unwrap();
            assert_eq!(t.terms.len(), binom(5, i), "i={i}");
        }
        let t0 = build_t(&p, &lam, 0).unwrap();
        assert_eq!(t0.terms[0].weight, Rat::one());
        assert_eq!(
            t0.terms[0].op.fingerprint(&p).unwrap(),
            VertexOp::unit(2).fingerprint(&p).unwrap()
        );
    }

    #[test]
    fn product_collapse_and_top_current() {
        for n in 1..=3 {
            let p = pt(n);
            let lam = build_lambdas(&p).unwrap();
            verify_product_collapse(&p, &lam).unwrap();
            // T_{2N+1} is the scalar c_0 = duality_constant(0).
            let top = build_t(&p, &lam, 2 * n + 1).unwrap();
            assert_eq!(top.terms.len(), 1);
            let scalar = &top.terms[0].weight * &top.terms[0].op.pref;
            assert_eq!(scalar, duality_constant(&p, 0).unwrap(), "N={n}");
        }
    }

    #[test]
    fn product_collapse_detects_perturbation() {
        let p = pt(2);
        let mut lam = build_lambdas(&p).unwrap();
        lam[1].pref = &lam[1].pref * rfrac(2, 1);
        assert!(matches!(
            verify_product_collapse(&p, &lam),
            Err(EngineError::WeightMismatch(_))
        ));
    }

    #[test]
    fn duality_all_levels() {
        for n in 1..=3 {
            let p = pt(n);
            let lam = build_lambdas(&p).unwrap();
            for i in 0..=n {
                verify_duality(&p, &lam, i).unwrap_or_else(|e| panic!("N={n}, i={i}: {e}"));
            }
        }
    }

    #[test]
    fn subset_collapse_and_d_quotient_random() {
        for n in 2..=3 {
            let p = pt(n);
            let lam = build_lambdas(&p).unwrap();
            for a in random_subsets(n, 20, 2 * n + 1, 42 + n as u64) {
                verify_subset_collapse(&p, &lam, &a)
                    .unwrap_or_else(|e| panic!("N={n}, A={a:?}: {e}"));
            }
            for a in random_subsets(n, 20, n, 1000 + n as u64) {
                verify_d_quotient(&p, &a).unwrap_or_else(|e| panic!("N={n}, A={a:?}: {e}"));
            }
        }
    }

    #[test]
    fn y1_alternate_formula() {
        // I_{1,j}(m) = ([(2N+1-j)m] + [jm]) / [(2N+1)m]
        for n in 1..=4 {
            let p = pt(n);
            for m in 1..=6 {
                let im = crate::coeff::i_matrix(&p, m).unwrap();
                let den = p.q_int((2 * n as i64 + 1) * m);
                assert!(!den.is_zero());
                for j in 1..=n as i64 {
                    let alt = (p.q_int((2 * n as i64 + 1 - j) * m) + p.q_int(j * m)) / &den;
                    assert_eq!(im[0][j as usize - 1], alt, "N={n}, m={m}, j={j}");
                }
            }
        }
    }
}
