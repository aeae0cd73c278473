//! Liouvillian and Hamiltonian spectra, exceptional-point location and
//! perturbation scaling near exceptional points.

use num_complex::Complex64;

use crate::model::{build_heff, build_liouvillian_pair, build_liouvillian_pair_with, unvectorize2, SystemParams};
use crate::smallmat::{
    eigendecompose, eigendecompose_with, numerical_rank, singular_values, CMatrix, EigOptions, EigResult, LinalgError,
    DEFAULT_DEFECT_TOL,
};

/// Eigenvalues closer than this (μs⁻¹) are reported as degenerate and treated
/// as ties when ordering.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// |tr ρ_i| below this switches eigenmatrix normalization from trace to Frobenius.
pub const TRACE_NORMALIZE_MIN: f64 = 1e-10;

pub const ORDER_RULE: &str = "Re descending; ties within 1e-6: real eigenvalues first, then ascending Im";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("expected a 4x4 Liouvillian, got {rows}x{cols}")]
    NotFourByFour { rows: usize, cols: usize },
    #[error("gamma_e = {gamma_e} < gamma_f = {gamma_f}: |e> must be the lossier level")]
    GainOrdering { gamma_e: f64, gamma_f: f64 },
    #[error("invalid J bracket [{lo}, {hi}]")]
    BadBracket { lo: f64, hi: f64 },
    #[error("no eigenvalue coalescence in J bracket [{lo}, {hi}]")]
    NotFound { lo: f64, hi: f64 },
    #[error("scaling fit needs at least 3 valid points, got {0}")]
    DegenerateFit(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Ordered spectrum of a 4×4 Liouvillian.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    /// Solver output before cluster polishing, same order as `eigenvalues`.
    pub raw_eigenvalues: Vec<Complex64>,
    /// 2×2 eigenmatrices ρ_i, trace-normalized when |tr| > 1e-10, else unit Frobenius norm.
    pub eigenmatrices: Vec<CMatrix>,
    pub order_rule: &'static str,
    /// Groups of indices whose eigenvalues lie within [`DEGENERACY_TOL`] of each other.
    pub degeneracy_report: Vec<Vec<usize>>,
    /// Eigendecomposition in the same order (unit eigenvectors).
    pub eig: EigResult,
}

impl Spectrum {
    pub fn defective(&self) -> bool {
        self.eig.defective
    }

    /// Largest-Re eigenvalue and the Im < 0 member of the oscillating complex pair.
    pub fn oscillation_pair(&self) -> Option<(Complex64, Complex64)> {
        let tol = DEGENERACY_TOL.max(1e-9 * max_abs(&self.eigenvalues));
        let pair = self
            .eigenvalues
            .iter()
            .copied()
            .filter(|z| z.im < -tol)
            .min_by(|a, b| b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))?;
        Some((self.eigenvalues[0], pair))
    }

    /// Indices of eigenvalues with |Im| above `tol`.
    pub fn complex_indices(&self, tol: f64) -> Vec<usize> {
        (0..self.eigenvalues.len()).filter(|&k| self.eigenvalues[k].im.abs() > tol).collect()
    }
}

fn max_abs(z: &[Complex64]) -> f64 {
    z.iter().fold(0.0, |m, v| m.max(v.norm()))
}

/// Single-linkage clusters of `values` at distance `tol`, each sorted.
pub fn clusters(values: &[Complex64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                if a != b {
                    label[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| root(&mut label, i)).collect();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match groups.iter_mut().find(|g| roots[g[0]] == roots[i]) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

fn spread(values: &[Complex64], idx: &[usize]) -> f64 {
    let mut s: f64 = 0.0;
    for &a in idx {
        for &b in idx {
            s = s.max((values[a] - values[b]).norm());
        }
    }
    s
}

fn columns(m: &CMatrix, idx: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(m.rows(), idx.len());
    for (k, &j) in idx.iter().enumerate() {
        out.set_column(k, &m.column(j));
    }
    out
}

/// Size of the largest Jordan block a cluster can hold, `m − rank + 1`.
pub fn cluster_jordan_order(eig: &EigResult, idx: &[usize], rank_tol: f64) -> usize {
    let rank = numerical_rank(&columns(&eig.right_eigenvectors, idx), rank_tol);
    idx.len() - rank.max(1) + 1
}

/// Replaces near-coalesced eigenvalue clusters whose spread is at the rounding
/// noise floor of a Jordan block of their order by the cluster mean.
fn polish(eig: &EigResult, scale: f64) -> Vec<Complex64> {
    let mut values = eig.eigenvalues.clone();
    for group in clusters(&eig.eigenvalues, 1e-3 * scale) {
        if group.len() < 2 {
            continue;
        }
        let k = cluster_jordan_order(eig, &group, 1e-3);
        if k < 2 {
            continue;
        }
        let floor = 4.0 * (f64::EPSILON * scale).powf(1.0 / k as f64) * scale.powf(1.0 - 1.0 / k as f64);
        if spread(&eig.eigenvalues, &group) <= floor {
            let mean = group.iter().map(|&i| eig.eigenvalues[i]).sum::<Complex64>() / group.len() as f64;
            for &i in &group {
                values[i] = mean;
            }
        }
    }
    values
}

fn order_indices(values: &[Complex64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].re.partial_cmp(&values[a].re).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && (values[idx[end - 1]].re - values[idx[end]].re).abs() <= DEGENERACY_TOL {
            end += 1;
        }
        let mut tie = idx[start..end].to_vec();
        tie.sort_by(|&a, &b| {
            let ra = values[a].im.abs() <= DEGENERACY_TOL;
            let rb = values[b].im.abs() <= DEGENERACY_TOL;
            rb.cmp(&ra).then(values[a].im.partial_cmp(&values[b].im).unwrap_or(std::cmp::Ordering::Equal))
        });
        out.extend(tie);
        start = end;
    }
    out
}

/// Divisor that turns an eigenvector into its eigenmatrix: the trace when
/// |tr| > 1e-10, else the Frobenius norm.
pub fn eigenmatrix_normalizer(v: &[Complex64]) -> Complex64 {
    let tr = v[0] + v[3];
    if tr.norm() > TRACE_NORMALIZE_MIN {
        tr
    } else {
        let f = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Complex64::new(if f > 0.0 { f } else { 1.0 }, 0.0)
    }
}

pub fn eigenmatrix(v: &[Complex64]) -> CMatrix {
    unvectorize2(v).scale(eigenmatrix_normalizer(v).inv())
}

pub fn spectrum_of(l: &CMatrix) -> Result<Spectrum, SpectralError> {
    spectrum_of_with(l, DEFAULT_DEFECT_TOL)
}

/// As [`spectrum_of`] with a custom relative rank tolerance for the defective flag.
pub fn spectrum_of_with(l: &CMatrix, defect_tol: f64) -> Result<Spectrum, SpectralError> {
    if l.rows() != 4 || l.cols() != 4 {
        return Err(SpectralError::NotFourByFour { rows: l.rows(), cols: l.cols() });
    }
    let eig = eigendecompose_with(l, &EigOptions { defect_tol, ..EigOptions::default() })?;
    let scale = l.max_abs().max(1.0);
    let polished = polish(&eig, scale);
    let order = order_indices(&polished);

    let mut vecs = CMatrix::zeros(4, 4);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.right_eigenvectors.column(i));
    }
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| polished[i]).collect();
    let sorted = EigResult {
        eigenvalues: eigenvalues.clone(),
        right_eigenvectors: vecs,
        condition: order.iter().map(|&i| eig.condition[i]).collect(),
        defective: eig.defective,
    };
    let eigenmatrices = (0..4).map(|k| eigenmatrix(&sorted.eigenvector(k))).collect();
    let degeneracy_report = clusters(&eigenvalues, DEGENERACY_TOL).into_iter().filter(|g| g.len() > 1).collect();
    Ok(Spectrum {
        raw_eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvalues,
        eigenmatrices,
        order_rule: ORDER_RULE,
        degeneracy_report,
        eig: sorted,
    })
}

/// Spectrum of `L0` (`include_l1 = false`) or `L0 + L1`.
pub fn liouvillian_spectrum(p: &SystemParams, include_l1: bool) -> Result<Spectrum, SpectralError> {
    spectrum_of(&build_liouvillian_pair(p).generator(include_l1))
}

pub fn liouvillian_spectrum_with(
    p: &SystemParams,
    include_l1: bool,
    dephasing_recycle: bool,
    defect_tol: f64,
) -> Result<Spectrum, SpectralError> {
    spectrum_of_with(&build_liouvillian_pair_with(p, dephasing_recycle).generator(include_l1), defect_tol)
}

/// Coupling at which H_eff has its exceptional point (Δ = 0).
pub fn hamiltonian_ep(p: &SystemParams) -> Result<f64, SpectralError> {
    if p.gamma_e < p.gamma_f {
        return Err(SpectralError::GainOrdering { gamma_e: p.gamma_e, gamma_f: p.gamma_f });
    }
    Ok((p.gamma_e - p.gamma_f) / 4.0)
}

/// Which generator an exceptional-point search runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpTarget {
    /// `L0` alone; its EP is third order.
    NoJump,
    /// `L0 + L1`; the jumps leave a second-order EP.
    WithJumps,
}

impl EpTarget {
    pub fn for_order(order: usize) -> Result<Self, SpectralError> {
        match order {
            3 => Ok(EpTarget::NoJump),
            2 => Ok(EpTarget::WithJumps),
            other => Err(SpectralError::Invalid(format!("EP order {other} not supported (2 or 3)"))),
        }
    }

    fn generator(self, p: &SystemParams) -> CMatrix {
        build_liouvillian_pair(p).generator(self == EpTarget::WithJumps)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpOptions {
    /// Bisection stops when the bracket is narrower than this (rad·μs⁻¹).
    pub j_tol: f64,
    /// Eigenvalues within `cluster_tol_rel·max|L|` of each other form the coalescing cluster.
    pub cluster_tol_rel: f64,
    /// Relative singular-value threshold for the rank of the cluster eigenvectors.
    pub rank_tol: f64,
    /// An eigenvalue counts as complex when |Im| > `imag_tol_rel·max|L|`.
    pub imag_tol_rel: f64,
}

impl Default for EpOptions {
    fn default() -> Self {
        Self { j_tol: 1e-10, cluster_tol_rel: 1e-3, rank_tol: 1e-3, imag_tol_rel: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct EpLocation {
    pub j: f64,
    /// Jordan order certified from the eigenvector rank of the coalescing cluster.
    pub order: usize,
    /// Spread of the coalescing cluster's eigenvalues at `j` (μs⁻¹).
    pub residual: f64,
    /// Smallest relative singular value of the cluster eigenvectors.
    pub eigenvector_sv_ratio: f64,
    pub cluster_size: usize,
    pub eigenvalues: Vec<Complex64>,
    pub bisections: usize,
}

fn has_complex_pair(l: &CMatrix, opts: &EpOptions) -> Result<bool, SpectralError> {
    let tol = opts.imag_tol_rel * l.max_abs().max(1.0);
    Ok(eigendecompose(l)?.eigenvalues.iter().any(|z| z.im.abs() > tol))
}

/// Bisects in J for the onset of complex Liouvillian eigenvalues, then
/// certifies the EP order at the located point.
pub fn locate_liouvillian_ep(
    p: &SystemParams,
    target: EpTarget,
    bracket: (f64, f64),
    opts: &EpOptions,
) -> Result<EpLocation, SpectralError> {
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(SpectralError::BadBracket { lo, hi });
    }
    let at = |j: f64| target.generator(&p.with_j(j));
    let c_lo = has_complex_pair(&at(lo), opts)?;
    let c_hi = has_complex_pair(&at(hi), opts)?;
    if c_lo == c_hi {
        return Err(SpectralError::NotFound { lo, hi });
    }
    let mut bisections = 0;
    while hi - lo > opts.j_tol && bisections < 200 {
        let mid = 0.5 * (lo + hi);
        if has_complex_pair(&at(mid), opts)? == c_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        bisections += 1;
    }
    let j = 0.5 * (lo + hi);
    let l = at(j);
    let eig = eigendecompose(&l)?;
    let scale = l.max_abs().max(1.0);
    let groups = clusters(&eig.eigenvalues, opts.cluster_tol_rel * scale);
    let mut best: Option<(usize, Vec<usize>)> = None;
    for g in groups.into_iter().filter(|g| g.len() > 1) {
        let k = cluster_jordan_order(&eig, &g, opts.rank_tol);
        if best.as_ref().is_none_or(|(bk, bg)| k > *bk || (k == *bk && g.len() > bg.len())) {
            best = Some((k, g));
        }
    }
    let (order, group) = best.unwrap_or((1, vec![0]));
    let sv = singular_values(&columns(&eig.right_eigenvectors, &group));
    let ratio = sv.last().copied().unwrap_or(0.0) / sv.first().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    Ok(EpLocation {
        j,
        order,
        residual: spread(&eig.eigenvalues, &group),
        eigenvector_sv_ratio: ratio,
        cluster_size: group.len(),
        eigenvalues: eig.eigenvalues,
        bisections,
    })
}

/// Default J bracket for EP searches: [0, 2·max rate].
pub fn default_ep_bracket(p: &SystemParams) -> (f64, f64) {
    (0.0, 2.0 * p.gamma_e.max(p.gamma_f).max(p.gamma_phi).max(1e-3))
}

#[derive(Debug, Clone)]
pub struct EpReport {
    pub j_ep: f64,
    pub lep3: Result<EpLocation, SpectralError>,
    pub lep2: Result<EpLocation, SpectralError>,
}

pub fn ep_report(p: &SystemParams, bracket: (f64, f64), opts: &EpOptions) -> Result<EpReport, SpectralError> {
    let base = p.with_delta(0.0);
    Ok(EpReport {
        j_ep: hamiltonian_ep(p)?,
        lep3: locate_liouvillian_ep(&base, EpTarget::NoJump, bracket, opts),
        lep2: locate_liouvillian_ep(&base, EpTarget::WithJumps, bracket, opts),
    })
}

/// Perturbation applied when measuring eigenvalue splitting near an EP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingProbe {
    /// `L0 + L1` at the given working point with γf set to ε and γφ = 0.
    LiouvillianJumps,
    /// H_eff at the given working point with Δ set to ε.
    HamiltonianDetuning,
}

#[derive(Debug, Clone)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// (ε, splitting) pairs; splitting is the largest pairwise eigenvalue distance.
    pub points: Vec<(f64, f64)>,
}

pub fn splitting_at(p: &SystemParams, probe: ScalingProbe, eps: f64) -> Result<f64, SpectralError> {
    let values = match probe {
        ScalingProbe::LiouvillianJumps => {
            let q = p.with_gamma_f(eps).with_gamma_phi(0.0);
            eigendecompose(&build_liouvillian_pair(&q).total())?.eigenvalues
        }
        ScalingProbe::HamiltonianDetuning => eigendecompose(&build_heff(&p.with_delta(eps)))?.eigenvalues,
    };
    let all: Vec<usize> = (0..values.len()).collect();
    Ok(spread(&values, &all))
}

/// Log–log slope of eigenvalue splitting against perturbation strength.
pub fn splitting_scaling(p: &SystemParams, probe: ScalingProbe, epsilons: &[f64]) -> Result<ScalingFit, SpectralError> {
    let mut points = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(SpectralError::Invalid(format!("perturbation {eps} must be positive")));
        }
        let s = splitting_at(p, probe, eps)?;
        if s > 0.0 {
            points.push((eps, s));
        }
    }
    if points.len() < 3 {
        return Err(SpectralError::DegenerateFit(points.len()));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, s)| s.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SpectralError::DegenerateFit(1));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(ScalingFit { slope, intercept: my - slope * mx, points })
}

/// Right eigenstates |±⟩ of H_eff with eigenvalues.
#[derive(Debug, Clone)]
pub struct HeffEigenstates {
    pub plus: [Complex64; 2],
    pub minus: [Complex64; 2],
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    /// Set at the EP, where `plus` and `minus` coincide.
    pub defective: bool,
}

/// Fixes the global phase so the first non-negligible component is real positive.
pub fn canonical_phase(v: &[Complex64]) -> [Complex64; 2] {
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let pivot = if v[0].norm() > 1e-12 * norm { v[0] } else { v[1] };
    let ph = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { Complex64::new(1.0, 0.0) };
    [v[0] * ph / norm, v[1] * ph / norm]
}

/// |+⟩ carries the larger Im eigenvalue (relative gain); equal Im is broken by larger Re.
pub fn eigenstates_of_heff(p: &SystemParams) -> Result<HeffEigenstates, SpectralError> {
    let eig = eigendecompose(&build_heff(p))?;
    let (a, b) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let tol = 1e-10 * a.norm().max(b.norm()).max(1.0);
    let a_is_plus = if (a.im - b.im).abs() > tol { a.im > b.im } else { a.re >= b.re };
    let (ip, im) = if a_is_plus { (0, 1) } else { (1, 0) };
    Ok(HeffEigenstates {
        plus: canonical_phase(&eig.eigenvector(ip)),
        minus: canonical_phase(&eig.eigenvector(im)),
        lambda_plus: eig.eigenvalues[ip],
        lambda_minus: eig.eigenvalues[im],
        defective: eig.defective,
    })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Continuous branch labels along a sweep. Entry `s[k]` maps branch `k` to an
/// index of `spectra[s]`; branches at the first point follow its ordering.
/// Consecutive points are matched by maximal total eigenvector overlap.
pub fn track_branches(spectra: &[Spectrum]) -> Vec<Vec<usize>> {
    let Some(first) = spectra.first() else { return Vec::new() };
    let n = first.eigenvalues.len();
    let perms = permutations(n);
    let mut out = vec![(0..n).collect::<Vec<_>>()];
    for w in spectra.windows(2) {
        let prev_map = out.last().expect("non-empty").clone();
        let (prev, cur) = (&w[0], &w[1]);
        let overlap = |i: usize, j: usize| -> f64 {
            let u = prev.eig.eigenvector(i);
            let v = cur.eig.eigenvector(j);
            crate::smallmat::inner(&u, &v).norm()
        };
        let dist_scale = max_abs(&prev.eigenvalues).max(1.0);
        let mut best = (f64::NEG_INFINITY, perms[0].clone());
        for perm in &perms {
            let mut score = 0.0;
            for k in 0..n {
                let i = prev_map[k];
                let j = perm[k];
                score += overlap(i, j) - 1e-3 * (prev.eigenvalues[i] - cur.eigenvalues[j]).norm() / dist_scale;
            }
            if score > best.0 + 1e-12 {
                best = (score, perm.clone());
            }
        }
        out.push(best.1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params(j: f64, delta: f64, ge: f64, gf: f64, gp: f64) -> SystemParams {
        SystemParams::new(j, delta, ge, gf, gp).unwrap()
    }

    #[test]
    fn decoupled_spectrum_is_diagonal() {
        let s = liouvillian_spectrum(&params(0.0, 0.0, 6.25, 0.0, 0.0), false).unwrap();
        let want = [0.0, -3.125, -3.125, -6.25];
        for (z, w) in s.eigenvalues.iter().zip(want) {
            assert!((z - c(w, 0.0)).norm() < 1e-12, "{z} vs {w}");
        }
        assert_eq!(s.degeneracy_report, vec![vec![1, 2]]);
    }

    #[test]
    fn unbroken_regime_has_conjugate_pair_in_slots_two_and_three() {
        let s = liouvillian_spectrum(&params(20.0, 0.0, 6.25, 0.0, 0.0), false).unwrap();
        assert!(s.eigenvalues[2].im < -1.0);
        assert!((s.eigenvalues[2] - s.eigenvalues[3].conj()).norm() < 1e-9);
        for w in s.eigenvalues.windows(2) {
            assert!(w[0].re >= w[1].re - DEGENERACY_TOL);
        }
    }

    #[test]
    fn third_order_coalescence_at_quarter_gamma_e() {
        let ge = 6.25;
        let s = liouvillian_spectrum(&params(ge / 4.0, 0.0, ge, 0.0, 0.0), false).unwrap();
        for k in 1..4 {
            assert!((s.eigenvalues[k] - c(-ge / 2.0, 0.0)).norm() < 1e-6, "{:?}", s.eigenvalues);
        }
        assert!(s.degeneracy_report.iter().any(|g| g.len() >= 3));
    }

    #[test]
    fn polishing_leaves_resolved_near_ep_splitting() {
        let ge = 6.25;
        let s = liouvillian_spectrum(&params(ge / 4.0 + 1e-6, 0.0, ge, 0.0, 0.0), false).unwrap();
        let im_max = s.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let jep = ge / 4.0;
        let want = 2.0 * ((jep + 1e-6f64).powi(2) - jep * jep).sqrt();
        assert!((im_max - want).abs() < 1e-6 * want.max(1.0), "{im_max} vs {want}");
    }

    #[test]
    fn hamiltonian_ep_values() {
        assert_eq!(hamiltonian_ep(&params(0.0, 0.0, 6.25, 0.25, 0.0)).unwrap(), 1.5);
        assert!((hamiltonian_ep(&params(0.0, 0.0, 4.5, 0.3, 0.0)).unwrap() - 1.05).abs() < 1e-15);
        assert_eq!(hamiltonian_ep(&params(0.0, 0.0, 1.0, 1.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(hamiltonian_ep(&params(0.0, 0.0, 0.1, 1.0, 0.0)), Err(SpectralError::GainOrdering { .. })));
    }

    #[test]
    fn third_order_liouvillian_ep_located_and_certified() {
        let p = params(0.0, 0.0, 6.25, 0.0, 0.0);
        let loc = locate_liouvillian_ep(&p, EpTarget::NoJump, (0.5, 3.0), &EpOptions::default()).unwrap();
        assert!((loc.j - 1.5625).abs() < 1e-4, "{}", loc.j);
        assert_eq!(loc.order, 3);
    }

    #[test]
    fn jumps_move_ep_below_third_order_point() {
        let p = params(0.0, 0.0, 6.25, 0.25, 0.0);
        let opts = EpOptions::default();
        let lep3 = locate_liouvillian_ep(&p, EpTarget::NoJump, (0.1, 3.0), &opts).unwrap();
        let lep2 = locate_liouvillian_ep(&p, EpTarget::WithJumps, (0.1, 3.0), &opts).unwrap();
        assert!((lep3.j - 1.5).abs() < 1e-4);
        assert_eq!(lep3.order, 3);
        assert!(lep2.j < lep3.j);
        assert_eq!(lep2.order, 2);
    }

    #[test]
    fn dephasing_opens_gap_near_old_ep() {
        let ge = 6.25;
        let clean = liouvillian_spectrum(&params(ge / 4.0, 0.0, ge, 0.0, 0.0), true).unwrap();
        let deph = liouvillian_spectrum(&params(ge / 4.0, 0.0, ge, 0.0, 0.5), true).unwrap();
        let gap = |s: &Spectrum| s.eigenvalues[0].re - s.eigenvalues[1].re;
        assert!(gap(&clean) < 1e-6);
        assert!(gap(&deph) > 0.05);
    }

    #[test]
    fn missing_ep_reported() {
        let p = params(0.0, 3.0, 6.25, 0.0, 0.0);
        let r = locate_liouvillian_ep(&p, EpTarget::NoJump, (2.0, 4.0), &EpOptions::default());
        assert!(matches!(r, Err(SpectralError::NotFound { .. })));
        assert!(matches!(
            locate_liouvillian_ep(&p, EpTarget::NoJump, (4.0, 2.0), &EpOptions::default()),
            Err(SpectralError::BadBracket { .. })
        ));
    }

    #[test]
    fn locator_is_stable_under_tighter_gap_tolerance() {
        let p = params(0.0, 0.0, 4.5, 0.3, 0.5);
        let a = EpOptions::default();
        let b = EpOptions { imag_tol_rel: a.imag_tol_rel / 2.0, ..a };
        let ja = locate_liouvillian_ep(&p, EpTarget::WithJumps, (0.0, 3.0), &a).unwrap().j;
        let jb = locate_liouvillian_ep(&p, EpTarget::WithJumps, (0.0, 3.0), &b).unwrap().j;
        assert!((ja - jb).abs() < a.imag_tol_rel);
    }

    #[test]
    fn splitting_vanishes_at_unperturbed_ep() {
        let p = params(1.5625, 0.0, 6.25, 0.0, 0.0);
        assert!(splitting_at(&p, ScalingProbe::LiouvillianJumps, 1e-14).unwrap() < 1e-3);
        let h = params(1.5, 0.0, 6.25, 0.25, 0.0);
        assert!(splitting_at(&h, ScalingProbe::HamiltonianDetuning, 1e-14).unwrap() < 1e-6);
    }

    #[test]
    fn splitting_exponents() {
        let ge = 6.25;
        let eps: Vec<f64> = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2].iter().map(|e| e * ge).collect();
        let cube =
            splitting_scaling(&params(ge / 4.0, 0.0, ge, 0.0, 0.0), ScalingProbe::LiouvillianJumps, &eps).unwrap();
        assert!((cube.slope - 1.0 / 3.0).abs() < 0.05, "{}", cube.slope);
        let sq = splitting_scaling(&params(1.5, 0.0, ge, 0.25, 0.0), ScalingProbe::HamiltonianDetuning, &eps).unwrap();
        assert!((sq.slope - 0.5).abs() < 0.05, "{}", sq.slope);
        assert!(matches!(
            splitting_scaling(&params(1.5, 0.0, ge, 0.25, 0.0), ScalingProbe::HamiltonianDetuning, &eps[..2]),
            Err(SpectralError::DegenerateFit(2))
        ));
    }

    #[test]
    fn eigenstate_limits() {
        let s = eigenstates_of_heff(&params(1e-9, 0.0, 6.25, 0.25, 0.0)).unwrap();
        assert!((s.plus[1].norm() - 1.0).abs() < 1e-9);
        assert!((s.minus[0].norm() - 1.0).abs() < 1e-9);

        let s = eigenstates_of_heff(&params(1e4, 0.0, 6.25, 0.25, 0.0)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.plus[0] - c(h, 0.0)).norm() < 1e-3 && (s.plus[1] - c(h, 0.0)).norm() < 1e-3);
        assert!((s.minus[0] - c(h, 0.0)).norm() < 1e-3 && (s.minus[1] + c(h, 0.0)).norm() < 1e-3);

        let s = eigenstates_of_heff(&params(0.8, 0.0, 6.25, 0.25, 0.0)).unwrap();
        assert!(s.lambda_plus.re.abs() < 1e-10 && s.lambda_minus.re.abs() < 1e-10);
        assert!(s.lambda_plus.im > s.lambda_minus.im);
        assert!(!s.defective);
    }

    #[test]
    fn eigenstates_defective_at_ep() {
        let s = eigenstates_of_heff(&params(1.5, 0.0, 6.25, 0.25, 0.0)).unwrap();
        assert!(s.defective);
        assert!((s.lambda_plus - s.lambda_minus).norm() < 1e-12);
    }

    #[test]
    fn branch_tracking_follows_eigenvectors_through_crossing() {
        // −(γe+γf)/2 − γφ is J-independent and crosses the complex pair
        let base = params(0.0, 0.0, 4.5, 0.3, 0.5);
        let grid: Vec<f64> = (0..60).map(|k| 1.2 + 0.02 * k as f64).collect();
        let spectra: Vec<Spectrum> =
            grid.iter().map(|&j| liouvillian_spectrum(&base.with_j(j), true).unwrap()).collect();
        let maps = track_branches(&spectra);
        let flat = -(4.5 + 0.3) / 2.0 - 0.5;
        let k_flat = (0..4)
            .min_by(|&a, &b| {
                let da = (spectra[0].eigenvalues[a] - c(flat, 0.0)).norm();
                let db = (spectra[0].eigenvalues[b] - c(flat, 0.0)).norm();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        for (s, map) in spectra.iter().zip(&maps) {
            assert!((s.eigenvalues[map[k_flat]] - c(flat, 0.0)).norm() < 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn liouvillian_matches_hamiltonian_pairs(j in 0.0..6.0f64, d in -4.0..4.0f64, ge in 0.1..8.0f64) {
                let p = params(j, d, ge, 0.0, 0.0);
                let h = eigendecompose(&build_heff(&p)).unwrap().eigenvalues;
                let mut want: Vec<Complex64> = Vec::new();
                for a in &h {
                    for b in &h {
                        want.push(-Complex64::i() * (a - b.conj()));
                    }
                }
                let got = liouvillian_spectrum(&p, false).unwrap().eigenvalues;
                // near the EP both sides carry cube-root rounding noise
                let tol = 1e-9 + if (j - ge / 4.0).abs() < 1e-3 && d.abs() < 1e-3 { 1e-4 } else { 0.0 };
                for z in &got {
                    let best = want.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
                    prop_assert!(best < tol, "{z} not in {want:?}");
                }
            }

            #[test]
            fn hamiltonian_gap_law(j in 0.0..6.0f64, ge in 0.5..8.0f64, gf in 0.0..0.5f64) {
                let p = params(j, 0.0, ge, gf, 0.0);
                let jep = hamiltonian_ep(&p).unwrap();
                let s = eigenstates_of_heff(&p).unwrap();
                let gap = s.lambda_plus - s.lambda_minus;
                let want = 2.0 * (j * j - jep * jep).abs().sqrt();
                prop_assume!((j - jep).abs() > 1e-6);
                prop_assert!((gap.norm() - want).abs() < 1e-9 * want.max(1.0));
                if j < jep {
                    prop_assert!(gap.re.abs() < 1e-9 * want.max(1.0));
                } else {
                    prop_assert!(gap.im.abs() < 1e-9 * want.max(1.0));
                }
            }
        }
    }
}
