//! Physical model: Hamiltonians, jump operators and Liouvillians.
//!
//! Basis conventions (fixed throughout the crate):
//!
//! * three-level space: (|g⟩, |e⟩, |f⟩), indices 0, 1, 2;
//! * submanifold: (|e⟩, |f⟩), indices 0, 1;
//! * vectorization is row-major, so a 2×2 ρ maps to (ρee, ρef, ρfe, ρff) and
//!   vec(AρB) = (A ⊗ Bᵀ)·vec(ρ).
//!
//! Dephasing acts only inside the submanifold, L_φ = √(γφ/2)·(|e⟩⟨e| − |f⟩⟨f|).

use std::fmt;

use num_complex::Complex64;

use crate::smallmat::{kron, CMatrix, I, ONE, ZERO};

/// Index of ρee, ρef, ρfe, ρff in a vectorized submanifold density matrix.
pub const VEC_EE: usize = 0;
pub const VEC_EF: usize = 1;
pub const VEC_FE: usize = 2;
pub const VEC_FF: usize = 3;

/// Three-level basis indices.
pub const LEVEL_G: usize = 0;
pub const LEVEL_E: usize = 1;
pub const LEVEL_F: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{name} = {value} is invalid: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
}

/// Model parameters. Couplings in rad·μs⁻¹, rates in μs⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Drive coupling between |e⟩ and |f⟩.
    pub j: f64,
    /// Drive detuning from the e–f transition.
    pub delta: f64,
    pub gamma_e: f64,
    pub gamma_f: f64,
    pub gamma_phi: f64,
}

impl SystemParams {
    pub fn new(j: f64, delta: f64, gamma_e: f64, gamma_f: f64, gamma_phi: f64) -> Result<Self, ModelError> {
        let p = Self { j, delta, gamma_e, gamma_f, gamma_phi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("J", self.j), ("Delta", self.delta)] {
            if !value.is_finite() {
                return Err(ModelError::InvalidParameter { name, value, reason: "must be finite" });
            }
        }
        for (name, value) in [("gamma_e", self.gamma_e), ("gamma_f", self.gamma_f), ("gamma_phi", self.gamma_phi)] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidParameter { name, value, reason: "rates must be finite and >= 0" });
            }
        }
        Ok(())
    }

    pub fn with_j(mut self, j: f64) -> Self {
        self.j = j;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_gamma_f(mut self, gamma_f: f64) -> Self {
        self.gamma_f = gamma_f;
        self
    }

    pub fn with_gamma_phi(mut self, gamma_phi: f64) -> Self {
        self.gamma_phi = gamma_phi;
        self
    }

    /// Same parameters with the |f⟩ decay and dephasing switched off.
    pub fn without_submanifold_jumps(self) -> Self {
        self.with_gamma_f(0.0).with_gamma_phi(0.0)
    }
}

impl fmt::Display for SystemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J={} Δ={} γe={} γf={} γφ={}", self.j, self.delta, self.gamma_e, self.gamma_f, self.gamma_phi)
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// H_c = J(|e⟩⟨f| + |f⟩⟨e|) + (Δ/2)(|e⟩⟨e| − |f⟩⟨f|) on (|e⟩, |f⟩).
pub fn build_hc(p: &SystemParams) -> CMatrix {
    CMatrix::from_rows(&[[re(p.delta / 2.0), re(p.j)], [re(p.j), re(-p.delta / 2.0)]]).expect("2x2")
}

/// H_eff = H_c − i·diag(γe, γf)/2.
pub fn build_heff(p: &SystemParams) -> CMatrix {
    let mut h = build_hc(p);
    h[(0, 0)] -= I * (p.gamma_e / 2.0);
    h[(1, 1)] -= I * (p.gamma_f / 2.0);
    h
}

/// H_eff including the dephasing anticommutator, H_eff − i(γφ/4)·𝟙.
pub fn build_heff_with_dephasing(p: &SystemParams) -> CMatrix {
    let mut h = build_heff(p);
    for k in 0..2 {
        h[(k, k)] -= I * (p.gamma_phi / 4.0);
    }
    h
}

/// Jump channels of the three-level model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpChannel {
    /// |e⟩ → |g⟩ at rate γe; monitored, removed by post-selection.
    EToG,
    /// |f⟩ → |e⟩ at rate γf.
    FToE,
    /// σz within the submanifold at rate γφ/2.
    Dephase,
}

impl JumpChannel {
    pub fn label(self) -> &'static str {
        match self {
            JumpChannel::EToG => "e->g",
            JumpChannel::FToE => "f->e",
            JumpChannel::Dephase => "dephase",
        }
    }
}

/// Jump operators on the three-level space; channels with zero rate are omitted.
pub fn jump_operators_3(p: &SystemParams) -> Vec<(JumpChannel, CMatrix)> {
    let mut ops = Vec::new();
    if p.gamma_e > 0.0 {
        let mut l = CMatrix::zeros(3, 3);
        l[(LEVEL_G, LEVEL_E)] = re(p.gamma_e.sqrt());
        ops.push((JumpChannel::EToG, l));
    }
    if p.gamma_f > 0.0 {
        let mut l = CMatrix::zeros(3, 3);
        l[(LEVEL_E, LEVEL_F)] = re(p.gamma_f.sqrt());
        ops.push((JumpChannel::FToE, l));
    }
    if p.gamma_phi > 0.0 {
        let a = (p.gamma_phi / 2.0).sqrt();
        let mut l = CMatrix::zeros(3, 3);
        l[(LEVEL_E, LEVEL_E)] = re(a);
        l[(LEVEL_F, LEVEL_F)] = re(-a);
        ops.push((JumpChannel::Dephase, l));
    }
    ops
}

/// Drive Hamiltonian on the three-level space, |g⟩ at zero energy.
pub fn build_hc3(p: &SystemParams) -> CMatrix {
    let hc = build_hc(p);
    let mut h = CMatrix::zeros(3, 3);
    for a in 0..2 {
        for b in 0..2 {
            h[(a + 1, b + 1)] = hc[(a, b)];
        }
    }
    h
}

/// H_c − (i/2)·Σ L_k†L_k on the three-level space; generates the no-jump evolution.
pub fn build_heff3(p: &SystemParams) -> CMatrix {
    let mut h = build_hc3(p);
    for (_, l) in jump_operators_3(p) {
        let ldl = &l.adjoint() * &l;
        h = &h - &ldl.scale(I * 0.5);
    }
    h
}

/// Row-major Lindblad superoperator −i(H⊗𝟙 − 𝟙⊗Hᵀ) + Σ_k [L⊗L̄ − ½(L†L⊗𝟙 + 𝟙⊗(L†L)ᵀ)].
pub fn lindblad_generator(h: &CMatrix, jumps: &[CMatrix]) -> CMatrix {
    let n = h.rows();
    let id = CMatrix::identity(n);
    let mut gen = (&kron(h, &id).expect("dim") - &kron(&id, &h.transpose()).expect("dim")).scale(-I);
    for l in jumps {
        let ldl = &l.adjoint() * l;
        let recycle = kron(l, &l.conj()).expect("dim");
        let anti = &kron(&ldl, &id).expect("dim") + &kron(&id, &ldl.transpose()).expect("dim");
        gen = &(&gen + &recycle) - &anti.scale_real(0.5);
    }
    gen
}

/// Full 9×9 generator of the three-level master equation.
pub fn build_three_level_generator(p: &SystemParams) -> CMatrix {
    let jumps: Vec<CMatrix> = jump_operators_3(p).into_iter().map(|(_, l)| l).collect();
    lindblad_generator(&build_hc3(p), &jumps)
}

/// Vectorized positions of (ee, ef, fe, ff) inside a vectorized 3×3 matrix.
pub const SUBMANIFOLD_VEC_INDICES: [usize; 4] =
    [3 * LEVEL_E + LEVEL_E, 3 * LEVEL_E + LEVEL_F, 3 * LEVEL_F + LEVEL_E, 3 * LEVEL_F + LEVEL_F];

/// Restriction of a 9×9 superoperator to the (ee, ef, fe, ff) block.
pub fn submanifold_block(gen9: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(4, 4);
    for (r, &gr) in SUBMANIFOLD_VEC_INDICES.iter().enumerate() {
        for (c, &gc) in SUBMANIFOLD_VEC_INDICES.iter().enumerate() {
            out[(r, c)] = gen9[(gr, gc)];
        }
    }
    out
}

/// 2×2 submanifold block of a 3×3 matrix.
pub fn submanifold_of(rho3: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            out[(a, b)] = rho3[(a + 1, b + 1)];
        }
    }
    out
}

/// Embeds a 2×2 submanifold matrix into the three-level space.
pub fn embed_submanifold(rho2: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(3, 3);
    for a in 0..2 {
        for b in 0..2 {
            out[(a + 1, b + 1)] = rho2[(a, b)];
        }
    }
    out
}

/// Submanifold Liouvillian split into its no-jump part and jump-recycle part.
#[derive(Debug, Clone, PartialEq)]
pub struct LiouvillianPair {
    /// −i(H′ρ − ρH′†) with H′ holding every anticommutator term.
    pub l0: CMatrix,
    /// Σ L ρ L† over the submanifold channels (|f⟩→|e⟩ and, optionally, dephasing).
    pub l1: CMatrix,
    pub includes_dephasing_recycle: bool,
}

impl LiouvillianPair {
    pub fn total(&self) -> CMatrix {
        &self.l0 + &self.l1
    }

    /// `L0 + L1` when `include_l1`, otherwise `L0`.
    pub fn generator(&self, include_l1: bool) -> CMatrix {
        if include_l1 {
            self.total()
        } else {
            self.l0.clone()
        }
    }
}

pub fn build_liouvillian_pair(p: &SystemParams) -> LiouvillianPair {
    build_liouvillian_pair_with(p, true)
}

/// As [`build_liouvillian_pair`]; `dephasing_recycle = false` drops the
/// σz ρ σz part of the dephasing channel from `L1` (its anticommutator part
/// stays in `L0`).
pub fn build_liouvillian_pair_with(p: &SystemParams, dephasing_recycle: bool) -> LiouvillianPair {
    let h = build_heff_with_dephasing(p);
    let id = CMatrix::identity(2);
    // ρH† in row-major form is 𝟙⊗(H†)ᵀ = 𝟙⊗H̄
    let l0 = (&kron(&h, &id).expect("4x4") - &kron(&id, &h.conj()).expect("4x4")).scale(-I);

    let mut l1 = CMatrix::zeros(4, 4);
    if p.gamma_f > 0.0 {
        let lf = CMatrix::from_rows(&[[ZERO, re(p.gamma_f.sqrt())], [ZERO, ZERO]]).expect("2x2");
        l1 = &l1 + &kron(&lf, &lf.conj()).expect("4x4");
    }
    if dephasing_recycle && p.gamma_phi > 0.0 {
        let sz = CMatrix::from_rows(&[[ONE, ZERO], [ZERO, -ONE]]).expect("2x2");
        l1 = &l1 + &kron(&sz, &sz).expect("4x4").scale_real(p.gamma_phi / 2.0);
    }
    LiouvillianPair { l0, l1, includes_dephasing_recycle: dephasing_recycle }
}

/// Maps a 2×2 density matrix to its row-major vector form.
pub fn vectorize2(rho: &CMatrix) -> Vec<Complex64> {
    rho.vectorize()
}

pub fn unvectorize2(v: &[Complex64]) -> CMatrix {
    CMatrix::unvectorize(v, 2).expect("length 4")
}

/// |e⟩⟨e|, |f⟩⟨f| and |±x⟩⟨±x| projectors in the submanifold.
pub fn projector2(state: &[Complex64; 2]) -> CMatrix {
    CMatrix::outer(state, state)
}

pub fn ket_e() -> [Complex64; 2] {
    [ONE, ZERO]
}

pub fn ket_f() -> [Complex64; 2] {
    [ZERO, ONE]
}

pub fn ket_plus_x() -> [Complex64; 2] {
    let a = re(std::f64::consts::FRAC_1_SQRT_2);
    [a, a]
}
