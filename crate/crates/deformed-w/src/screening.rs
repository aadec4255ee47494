//! Commutation of the first W-current with the screening currents, the
//! recursion certificate that extends it to every level, and the screening
//! exchange relations.
//!
//! The commutator `[Λ_a(z1), S_k(z2)]` of a basic current with a screening
//! current is computed exactly: both orderings of the product expand one
//! rational function of `w = z2/z1` (a finite product of linear factors with
//! monomial roots on the `x^{c ± r}` lattice), so their difference is a
//! finite sum of formal deltas obtained by residues.  Summing over
//! `a ∈ J_N` must assemble the `q`-difference pairs
//!
//! ```text
//! [T_1(z1), S_k(z2)] = C_k(z1)·(δ(x^{k+r}w) − δ(x^{k−r}w))
//!                    + C̄_k(z1)·(δ(x^{2N+1−k+r}w) − δ(x^{2N+1−k−r}w)),
//! ```
//!
//! whose members cancel under the formal residue in `z2` — whence the
//! screening operators commute with `T_1`, and by the mode recursion plus
//! duality with every `T_i`.
//!
//! Supports here live on the `x^{integer ± r}` lattice and are disjoint from
//! the integer-power supports of the quadratic relations; both are carried
//! by the same monomial type, with `x^{±r}` tracked through the second slot.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::coeff::{rat, ParamPoint, Rat, XtMono};
use crate::currents::{duality_constant, JIndex};
use crate::heisenberg::{contract, Contraction, VertexOp};
use crate::quadratic::{DeltaEntries, DeltaEntry};
use crate::series::{FactorProduct, RationalFn};
use crate::{EngineError, Result};

fn mono(u_pow: i64, t_pow: i64) -> XtMono {
    XtMono { u_pow, t_pow }
}

// ============================================================
// [Λ_a, S_k] delta extraction
// ============================================================

/// All delta terms of `[Λ_a(z1), S_k(z2)]`, with operator payloads pinned at
/// `z1 = σ z2` as in the quadratic module.  Entry weights include every
/// scalar (operator prefactors and the zero-mode swap monomial).
pub fn lambda_s_delta_terms(
    p: &ParamPoint,
    lambdas: &[VertexOp],
    a: JIndex,
    k: usize,
) -> Result<DeltaEntries> {
    let lam = &lambdas[a.pos(p.n) - 1];
    let s = VertexOp::s_op(p, k);
    let c_ls = contract(p, lam, &s)?;
    let c_sl = contract(p, &s, lam)?;
    if !c_ls.poch.is_empty() || !c_sl.poch.is_empty() {
        return Err(EngineError::ShapeMismatch(
            "basic-current/screening contraction is not a finite factor product".into(),
        ));
    }
    if !c_ls.z1_exp.is_zero() || !c_sl.z1_exp.is_zero() {
        return Err(EngineError::ExponentMismatch(
            "unexpected swap z-power in a basic-current/screening pair".into(),
        ));
    }
    let scalar = |c: &Contraction| p.mono(&c.mono) * &lam.pref * &s.pref;
    let fwd = FactorProduct::scalar(scalar(&c_ls)).mul(&c_ls.fp);
    let bwd = FactorProduct::scalar(scalar(&c_sl)).mul(&c_sl.fp).subst_w_inv();
    // locality: both orderings must expand one and the same rational function
    let mut diff = RationalFn::from_factor_product(p, &fwd)?;
    diff.add_assign(p, &RationalFn::from_factor_product(
        p,
        &FactorProduct::scalar(-Rat::one()).mul(&bwd),
    )?);
    diff.reduce(p);
    if !diff.is_zero() {
        return Err(EngineError::ShapeMismatch(format!(
            "orderings of Λ_{a} S_{k} disagree as rational functions"
        )));
    }
    let mut rf = RationalFn::from_factor_product(p, &fwd)?;
    let mut out = DeltaEntries::new();
    for (sigma, amp) in rf.delta_terms(p)? {
        let op = lam.shifted(&sigma).compose(&s);
        out.push(DeltaEntry { sigma, amp, op, dress: None });
    }
    Ok(out)
}

/// The displayed exchange table for `[Λ_a(z1), S_k(z2)]`: the list of
/// `(σ, weight)` with payload `:Λ_a(σ z2) S_k(z2):`, empty for all pairs the
/// appendix declares zero.
pub fn expected_lambda_s_table(p: &ParamPoint, a: JIndex, k: usize) -> Vec<(XtMono, Rat)> {
    let n = p.n as i64;
    let kk = k as i64;
    // (x^{−2r+2} − 1) and (x^{2r−2} − 1)
    let lo_w = p.mono(&mono(4, -2)) - Rat::one();
    let hi_w = p.mono(&mono(-4, 2)) - Rat::one();
    match a {
        JIndex::Plain(m) if m == k => vec![(mono(2 * kk, -1), lo_w)],
        JIndex::Plain(m) if m == k + 1 && k < p.n => vec![(mono(2 * kk, 1), hi_w)],
        JIndex::Bar(m) if m == k => vec![(mono(2 * (2 * n + 1 - kk), 1), hi_w)],
        JIndex::Bar(m) if m == k + 1 && k < p.n => {
            vec![(mono(2 * (2 * n + 1 - kk), -1), lo_w)]
        }
        JIndex::Zero if k == p.n => {
            // Entry weights absorb operator prefactors, so the displayed
            // weight picks up the Λ_0 normalization
            // [r−1/2]/[1/2] = (x^r − x^{1−r})/(x − 1), leaving
            // x^{r−1} − x^{1−r}.
            let w = p.mono(&mono(-2, 1)) - p.mono(&mono(2, -1));
            vec![(mono(2 * n, 1), w.clone()), (mono(2 * n + 2, -1), -w)]
        }
        _ => Vec::new(),
    }
}

// ============================================================
// The commutator with T_1 assembled into difference pairs
// ============================================================

/// One `(D_{x^r}δ)` pair of the commutator `[T_1(z), S_k(w)]`: the shared
/// scalar prefactor sits on the support pair `x^{base ± r}` with opposite
/// signs, and the two pinned payloads agree after aligning arguments by
/// `x^{2r}`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DifferenceDelta {
    /// Integer `c` of the support pair `x^{c ± r}`.
    pub base: i64,
    /// Weight at the upper support `x^{c + r}` (the lower one carries its
    /// negative), rendered as an exact rational string.
    pub prefactor: String,
    /// Which basic currents contributed the two members.
    pub members: [String; 2],
}

/// The commutator `[T_1(z), S_k(w)]` in the shape of the screening lemma.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ScreeningCommutatorForm {
    pub k: usize,
    pub terms: Vec<DifferenceDelta>,
}

/// Verifies the screening commutation at level one: every `[Λ_a, S_k]`
/// matches its displayed table entry, the sum over `a ∈ J_N` assembles into
/// exactly two `(D_{x^r}δ)` difference pairs based at `x^k` and
/// `x^{2N+1−k}`, and within each pair the two payloads are one and the same
/// operator (the proof's pairing identities) with equal and opposite
/// weights.
pub fn verify_lemma49(
    p: &ParamPoint,
    lambdas: &[VertexOp],
    k: usize,
) -> Result<ScreeningCommutatorForm> {
    assert!(1 <= k && k <= p.n);
    struct Member {
        t_sign: i64,
        amp: Rat,
        op: VertexOp,
        label: String,
    }
    let mut groups: BTreeMap<i64, Vec<Member>> = BTreeMap::new();
    for a in JIndex::all(p.n) {
        let entries = lambda_s_delta_terms(p, lambdas, a, k)?;
        // each basic current must reproduce its displayed table line
        let expected = expected_lambda_s_table(p, a, k);
        if entries.len() != expected.len() {
            return Err(EngineError::MismatchedSupport(format!(
                "[Λ_{a}, S_{k}]: {} delta terms, table lists {}",
                entries.len(),
                expected.len()
            )));
        }
        for e in &entries {
            let hit = expected.iter().find(|(sig, _)| *sig == e.sigma);
            match hit {
                None => {
                    return Err(EngineError::MismatchedSupport(format!(
                        "[Λ_{a}, S_{k}]: support {} not in the displayed table",
                        e.sigma
                    )))
                }
                Some((_, w)) if *w != e.amp => {
                    return Err(EngineError::WeightMismatch(format!(
                        "[Λ_{a}, S_{k}] at {}: engine {} vs table {}",
                        e.sigma, e.amp, w
                    )))
                }
                _ => {}
            }
            if e.sigma.u_pow % 2 != 0 || e.sigma.t_pow.abs() != 1 {
                return Err(EngineError::UnpairedDelta(format!(
                    "support {} is off the x^{{c ± r}} lattice",
                    e.sigma
                )));
            }
            groups.entry(e.sigma.u_pow / 2).or_default().push(Member {
                t_sign: e.sigma.t_pow,
                amp: e.amp.clone(),
                op: e.op.clone(),
                label: format!("{a}"),
            });
        }
    }
    let bases: Vec<i64> = groups.keys().copied().collect();
    if bases != vec![k as i64, 2 * p.n as i64 + 1 - k as i64] {
        return Err(EngineError::UnpairedDelta(format!(
            "difference-delta bases {bases:?}, expected [{}, {}]",
            k,
            2 * p.n + 1 - k
        )));
    }
    let mut terms = Vec::new();
    for (base, members) in groups {
        if members.len() != 2 || members[0].t_sign + members[1].t_sign != 0 {
            return Err(EngineError::UnpairedDelta(format!(
                "support family at x^{base} does not split as x^{{{base} ± r}}"
            )));
        }
        let (hi, lo) = if members[0].t_sign == 1 {
            (&members[0], &members[1])
        } else {
            (&members[1], &members[0])
        };
        // pairing identity: aligned on the first variable (z2 = z1/σ), the
        // two payloads are the same current product
        let sig = |t_sign: i64| mono(2 * base, t_sign);
        let lo_al = lo.op.shifted(&sig(-1).inv());
        let hi_al = hi.op.shifted(&sig(1).inv());
        if lo_al.fingerprint(p)? != hi_al.fingerprint(p)? {
            return Err(EngineError::ExponentMismatch(format!(
                "pairing identity fails at base x^{base}: Λ_{} vs Λ_{}",
                lo.label, hi.label
            )));
        }
        // …with weights that cancel under the formal w-residue once the
        // alignment scalar σ^{-head_z} is included: the supports differ by
        // x^{2r}, so cancellation reads amp_hi + (x^{2r})^{head_z}·amp_lo = 0
        if lo.op.head_z != hi.op.head_z {
            return Err(EngineError::ExponentMismatch(format!(
                "payload z-powers differ within the pair at x^{base}"
            )));
        }
        let align = t2_pow(p, &lo.op.head_z)?;
        let residue = &hi.amp + &align * &lo.amp;
        if !residue.is_zero() {
            return Err(EngineError::WeightMismatch(format!(
                "difference pair at x^{base} has residue {residue}"
            )));
        }
        terms.push(DifferenceDelta {
            base,
            prefactor: hi.amp.to_string(),
            members: [lo.label.clone(), hi.label.clone()],
        });
    }
    Ok(ScreeningCommutatorForm { k, terms })
}

/// The screening *operators* commute with `T_1`: the formal residue in the
/// screening variable of each `(D_{x^r}δ)` pair vanishes, because
/// `∮ δ(σ w) dw/w = 1` for every monomial `σ` and the pair carries equal and
/// opposite weights on one and the same payload.
pub fn verify_corollary410(p: &ParamPoint, lambdas: &[VertexOp], k: usize) -> Result<()> {
    // verify_lemma49 already enforces the cancellation structure; this entry
    // point exists so reports can cite the corollary separately.
    verify_lemma49(p, lambdas, k).map(|_| ())
}

/// `(x^{2r})^{h}` for a formal exponent `h = c0 + ci/r` as an exact scalar:
/// `x^{2r·c0 + 2·ci} = t^{2c0} x^{2ci}`.
fn t2_pow(p: &ParamPoint, h: &crate::heisenberg::RExp) -> Result<Rat> {
    if !h.cr.is_zero() {
        return Err(EngineError::ExponentMismatch(format!(
            "alignment scalar with an r² exponent: {h:?}"
        )));
    }
    Ok(p.mono(&mono(rat_i64(&(rat(4) * &h.ci))?, rat_i64(&(rat(2) * &h.c0))?)))
}

// ============================================================
// Reduction to all levels
// ============================================================

#[derive(Clone, Debug, serde::Serialize)]
pub struct Lemma34Certificate {
    /// For each `(j, m)`, the mode index `k` with
    /// `x^{−(j+1)k+m} − x^{(j+1)k−m} ≠ 0` that makes the recursion for
    /// `T_{j+1}[m]` well-defined.
    pub certified: Vec<(usize, i64, i64)>,
    /// Duality constants for the levels reached through `T_{2N+1−i} = c_i T_i`.
    pub duality_levels: Vec<(usize, String)>,
}

/// Certifies that the mode recursion expressing `T_{j+1}[m]` through modes
/// of `T_j`, `T_{j−1}` and `T_1` is well-defined: its prefactor
/// `x^{−(j+1)k+m} − x^{(j+1)k−m}` is nonzero for a recorded `k`, for every
/// level the recursion builds; duality covers the remaining levels.
/// Together with the level-one commutation this reduces `[T_i(z), S_j] = 0`
/// to the verified cases.
pub fn verify_lemma34_reduction(p: &ParamPoint, m_max: i64) -> Result<Lemma34Certificate> {
    let mut certified = Vec::new();
    for j in 1..=p.n {
        for m in -m_max..=m_max {
            // nonzero iff (j+1)k ≠ m, since |x| ≠ 1 at a valid sample
            let k = (1..=m_max.max(2))
                .find(|k| (j as i64 + 1) * k != m)
                .ok_or_else(|| {
                    EngineError::NoValidK(format!("level {j}, mode {m}"))
                })?;
            certified.push((j, m, k));
        }
    }
    let mut duality_levels = Vec::new();
    for lv in (p.n + 2)..=(2 * p.n) {
        let i = 2 * p.n + 1 - lv;
        duality_levels.push((lv, duality_constant(p, i)?.to_string()));
    }
    Ok(Lemma34Certificate { certified, duality_levels })
}

// ============================================================
// Screening exchange relations
// ============================================================

/// One elliptic bracket `[u₁ − u₂ + a]^e` of the displayed exchange ratio,
/// with `b = ∓1` recording the sign of `u₂ − u₁` in the argument.
struct ThetaFactor {
    a: Rat,
    b: i64,
    e: i64,
}

/// The displayed `S_i S_j` exchange ratio as `sign · Π [·]^{±1}`.
fn stated_exchange(n: usize, i: usize, j: usize) -> (i64, Vec<ThetaFactor>) {
    let half = Rat::new(1.into(), 2.into());
    if i == j && i < n {
        // −[u2−u1+1]/[u1−u2+1]
        (
            -1,
            vec![
                ThetaFactor { a: Rat::one(), b: 1, e: 1 },
                ThetaFactor { a: Rat::one(), b: -1, e: -1 },
            ],
        )
    } else if i == j {
        // −[u1−u2+1/2][u2−u1+1] / ([u2−u1+1/2][u1−u2+1])
        (
            -1,
            vec![
                ThetaFactor { a: half.clone(), b: -1, e: 1 },
                ThetaFactor { a: Rat::one(), b: 1, e: 1 },
                ThetaFactor { a: half, b: 1, e: -1 },
                ThetaFactor { a: Rat::one(), b: -1, e: -1 },
            ],
        )
    } else if i.abs_diff(j) == 1 {
        // [u1−u2+1/2]/[u2−u1+1/2]
        (
            1,
            vec![
                ThetaFactor { a: half.clone(), b: -1, e: 1 },
                ThetaFactor { a: half, b: 1, e: -1 },
            ],
        )
    } else {
        (1, Vec::new())
    }
}

/// Laurent polynomials in `w` graded by powers of the nome `p = x^{2r}`,
/// truncated beyond `p^K`.  Every factor in the screening exchange check is
/// `1 − c·p^d·w^b` with exact rational `c`, so products stay exact order by
/// order and the two sides of a cross-multiplied identity can be compared
/// coefficient-for-coefficient.
struct NomePoly {
    o: Vec<BTreeMap<i64, Rat>>,
}

impl NomePoly {
    fn one(k: usize) -> Self {
        let mut o = vec![BTreeMap::new(); k + 1];
        o[0].insert(0, Rat::one());
        NomePoly { o }
    }

    /// Multiply by `1 − c·p^d·w^b`.
    fn mul_factor(&mut self, d: usize, c: &Rat, b: i64) {
        if d > self.o.len() - 1 || c.is_zero() {
            return;
        }
        let snap = self.o.clone();
        for q in d..self.o.len() {
            let src = snap[q - d].clone();
            for (wp, v) in src {
                let cur = self.o[q].remove(&(wp + b)).unwrap_or_else(Rat::zero);
                let nv = cur - c * &v;
                if !nv.is_zero() {
                    self.o[q].insert(wp + b, nv);
                }
            }
        }
    }

    /// Multiply by `(c·p^{d0}·w^b; p)_∞` truncated at the grading order.
    fn mul_poch(&mut self, d0: usize, c: &Rat, b: i64) {
        for m in d0..self.o.len() {
            self.mul_factor(m, c, b);
        }
    }

    /// Multiply by `(ζ; p)_∞ (p/ζ; p)_∞` with `ζ = c·w^b` — the theta
    /// function at nome `p` without its `(p; p)_∞` constant, which appears
    /// in equal numbers on both sides of every stated ratio and cancels.
    fn mul_theta(&mut self, c: &Rat, b: i64) {
        self.mul_poch(0, c, b);
        self.mul_poch(1, &(Rat::one() / c), -b);
    }

    fn shift_w(&mut self, s: i64) {
        for m in &mut self.o {
            *m = m.iter().map(|(wp, v)| (wp + s, v.clone())).collect();
        }
    }

    fn scale(&mut self, s: &Rat) {
        for m in &mut self.o {
            for v in m.values_mut() {
                *v = &*v * s;
            }
        }
    }

    fn eq(&self, other: &NomePoly) -> bool {
        self.o == other.o
    }
}

/// Verifies the displayed `S_i(z1) S_j(z2)` exchange relation against the
/// engine's contractions: the formal `z^{c/r}` exponents by exact
/// bookkeeping, the elliptic part as a cross-multiplied exact identity of
/// nome-graded polynomials (numerator Pochhammers of one ordering against
/// denominator Pochhammers of the other, times the stated theta factors).
pub fn verify_screening_exchange(
    p: &ParamPoint,
    i: usize,
    j: usize,
    order: usize,
) -> Result<()> {
    assert!(1 <= i && i <= p.n && 1 <= j && j <= p.n);
    let si = VertexOp::s_op(p, i);
    let sj = VertexOp::s_op(p, j);
    let c12 = contract(p, &si, &sj)?;
    let c21 = contract(p, &sj, &si)?;
    if c12.z1_exp != c21.z1_exp {
        return Err(EngineError::ExponentMismatch(
            "asymmetric swap z-powers in a screening pair".into(),
        ));
    }
    let (sign, factors) = stated_exchange(p.n, i, j);
    // Formal-exponent bookkeeping: with [u] = x^{u²/r − u} θ(x^{2u}) — the
    // normalization with [−u] = −[u] — and
    // u₂ − u₁ = (1/2)·log_x w, the stated ratio carries
    //   x^{(Σ e·a²)/r} · w^{(Σ e·a·b)/r}
    // in its irrational part, while the engine ratio carries
    //   (z1/z2)^{E} = w^{−E·c0 − E·ci/r}
    // from the zero-mode swap.  The pure-constant parts must vanish and the
    // w-powers must agree; everything else is series-checked below.
    let sum_a2: Rat = factors.iter().map(|f| &f.a * &f.a * rat(f.e)).sum();
    if !sum_a2.is_zero() {
        return Err(EngineError::ExponentMismatch(format!(
            "stated ratio has a residual constant x^{{{sum_a2}/r}}"
        )));
    }
    let sum_ab: Rat = factors.iter().map(|f| &f.a * rat(f.b) * rat(f.e)).sum();
    if sum_ab != -c12.z1_exp.ci.clone() {
        return Err(EngineError::ExponentMismatch(format!(
            "w^{{c/r}} mismatch: stated {} vs engine {}",
            sum_ab, -c12.z1_exp.ci.clone()
        )));
    }
    let c0 = rat_i64(&c12.z1_exp.c0)?;
    if c12.mono != mono(0, 0) || c21.mono != mono(0, 0) {
        return Err(EngineError::ExponentMismatch(
            "unexpected swap monomial in a screening pair".into(),
        ));
    }
    // Cross-multiplied identity at nome p = x^{2r}:
    //   N12(w)·D21(1/w)·w^{−c0}·Π_{e=−1}Θ(ζ)
    //     = sign·x^{−Σe·a}·w^{−Σe·b/2}·Π_{e=+1}Θ(ζ)·N21(1/w)·D12(w),
    // with ζ = x^{2a}w^{b}; N/D split the Pochhammer products of the two
    // orderings by exponent sign, the irrational exponents having cancelled
    // by the bookkeeping above.
    let mut lhs = NomePoly::one(order);
    let mut rhs = NomePoly::one(order);
    let mut push = (|| -> Result<Vec<(bool, usize, Rat, i64, i64)>> {
        let mut list = Vec::new();
        for (own, c) in [(true, &c12), (false, &c21)] {
            for (m, e) in &c.poch {
                if m.t_pow < 0 || m.t_pow % 2 != 0 {
                    return Err(EngineError::ExponentMismatch(format!(
                        "Pochhammer argument {m} is off the nome lattice"
                    )));
                }
                let b = if own { 1 } else { -1 };
                let to_lhs = (*e > 0) == own;
                list.push((
                    to_lhs,
                    (m.t_pow / 2) as usize,
                    p.mono(&mono(m.u_pow, 0)),
                    b,
                    e.abs(),
                ));
            }
        }
        Ok(list)
    })()?;
    for (to_lhs, d0, c, b, mult) in push.drain(..) {
        let side = if to_lhs { &mut lhs } else { &mut rhs };
        for _ in 0..mult {
            side.mul_poch(d0, &c, b);
        }
    }
    for f in &factors {
        let zeta = p.mono(&mono(2 * rat_i64(&(rat(2) * &f.a))?, 0));
        let side = if f.e == 1 { &mut rhs } else { &mut lhs };
        side.mul_theta(&zeta, f.b);
    }
    lhs.shift_w(-c0);
    let minus_a = -factors.iter().map(|f| &f.a * rat(f.e)).sum::<Rat>();
    rhs.scale(&(rat(sign) * p.mono(&mono(rat_i64(&(rat(2) * &minus_a))?, 0))));
    let half_eb = factors.iter().map(|f| f.b * f.e).sum::<i64>();
    if half_eb % 2 != 0 {
        return Err(EngineError::ExponentMismatch(
            "half-integral w-power in the stated ratio".into(),
        ));
    }
    rhs.shift_w(-half_eb / 2);
    if !lhs.eq(&rhs) {
        return Err(EngineError::SeriesMismatch(format!(
            "screening exchange (S_{i}, S_{j}) fails the theta-quotient check"
        )));
    }
    Ok(())
}

/// `Rat → i64` for exponent arithmetic that must land on integers.
fn rat_i64(r: &Rat) -> Result<i64> {
    use num_traits::ToPrimitive;
    if !r.is_integer() {
        return Err(EngineError::ExponentMismatch(format!("non-integer exponent {r}")));
    }
    r.to_integer()
        .to_i64()
        .ok_or_else(|| EngineError::ExponentMismatch("exponent overflows i64".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::rfrac;
    use crate::currents::build_lambdas;

    fn pt(n: usize) -> ParamPoint {
        ParamPoint::new(n, rfrac(2, 3), rfrac(1, 5), 14, 8).unwrap()
    }

    #[test]
    fn lambda_s_zero_cases() -> Result<()> {
        // every (a, k) the appendix omits must commute
        let p = pt(2);
        let lambdas = build_lambdas(&p)?;
        for k in 1..=2usize {
            for a in JIndex::all(2) {
                if !expected_lambda_s_table(&p, a, k).is_empty() {
                    continue;
                }
                let entries = lambda_s_delta_terms(&p, &lambdas, a, k)?;
                assert!(entries.is_empty(), "a = {a}, k = {k}");
            }
        }
        Ok(())
    }

    #[test]
    fn lambda_s_table_n2() -> Result<()> {
        // the four k=1 lines and the k=2 lines incl. the Λ_0 special case
        let p = pt(2);
        let lambdas = build_lambdas(&p)?;
        for k in 1..=2usize {
            for a in JIndex::all(2) {
                let entries = lambda_s_delta_terms(&p, &lambdas, a, k)?;
                let expected = expected_lambda_s_table(&p, a, k);
                assert_eq!(entries.len(), expected.len(), "a = {a}, k = {k}");
                for e in &entries {
                    let hit = expected.iter().find(|(s, _)| *s == e.sigma);
                    let (_, w) = hit.unwrap_or_else(|| panic!("support {} (a={a}, k={k})", e.sigma));
                    assert_eq!(&e.amp, w, "a = {a}, k = {k}, σ = {}", e.sigma);
                }
            }
        }
        Ok(())
    }

    #[test]
    fn lemma49_all_ranks() -> Result<()> {
        for n in 1..=3usize {
            let p = pt(n);
            let lambdas = build_lambdas(&p)?;
            for k in 1..=n {
                let form = verify_lemma49(&p, &lambdas, k)?;
                assert_eq!(form.terms.len(), 2, "N = {n}, k = {k}");
                assert_eq!(form.terms[0].base, k as i64);
                assert_eq!(form.terms[1].base, (2 * n + 1 - k) as i64);
            }
        }
        Ok(())
    }

    #[test]
    fn lemma49_detects_mutation() {
        // a perturbed screening weight must break the difference pairing
        let p = pt(2);
        let mut lambdas = build_lambdas(&p).unwrap();
        lambdas[0].pref = &lambdas[0].pref * rfrac(3, 2);
        assert!(verify_lemma49(&p, &lambdas, 1).is_err());
    }

    #[test]
    fn corollary_residues_vanish() -> Result<()> {
        let p = pt(2);
        let lambdas = build_lambdas(&p)?;
        for k in 1..=2 {
            verify_corollary410(&p, &lambdas, k)?;
        }
        Ok(())
    }

    #[test]
    fn lemma34_certificates() -> Result<()> {
        for n in 1..=3usize {
            let p = pt(n);
            let cert = verify_lemma34_reduction(&p, 10)?;
            assert_eq!(cert.certified.len(), n * 21);
            // j=1, m=0 certifies with k=1: x^{-2} − x^{2} ≠ 0
            assert!(cert.certified.contains(&(1, 0, 1)));
            // m = j+1 forces k=2
            if n >= 1 {
                assert!(cert.certified.contains(&(1, 2, 2)));
            }
            assert_eq!(cert.duality_levels.len(), n.saturating_sub(1));
        }
        Ok(())
    }

    #[test]
    fn screening_exchange_all_pairs() -> Result<()> {
        let p = pt(3);
        for i in 1..=3usize {
            for j in 1..=3usize {
                verify_screening_exchange(&p, i, j, 20)
                    .unwrap_or_else(|e| panic!("(i, j) = ({i}, {j}): {e}"));
            }
        }
        Ok(())
    }

    #[test]
    fn screening_exchange_rank_one() -> Result<()> {
        // N = 1 exercises only the i=j=N line
        let p = pt(1);
        verify_screening_exchange(&p, 1, 1, 20)
    }
}
