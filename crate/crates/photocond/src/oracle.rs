//! Brute-force two-mode Fock-space verification of the distribution-level
//! maps.
//!
//! The signal state is embedded with a vacuum ancilla, evolved by the dense
//! beam-splitter or down-conversion propagator, projected onto the detector
//! POVM and partial-traced. The diagonal of the unnormalized output is
//! directly comparable with the weight vectors produced by [`crate::subtract`]
//! and [`crate::add`].
//!
//! Propagators are built sector by sector: the beam-splitter generator
//! conserves the total photon number and the down-conversion generator the
//! photon-number difference, so each conserved sector is exponentiated by
//! eigendecomposition of its Hermitianized block. This keeps the truncation
//! exact wherever a sector fits inside the retained space.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::add::PdcParams;
use crate::detectors::{DetectorFlavor, DetectorModel};
use crate::error::{Error, Result};
use crate::numerics::log_factorial;
use crate::states::PhotonNumberDistribution;
use crate::subtract::BeamSplitterParams;

/// Maximum tolerated unitarity defect of the down-conversion propagator on
/// its validated low-excitation block.
const PDC_LEAKAGE_TOLERANCE: f64 = 1e-8;

/// Single-mode density matrix over the truncated Fock basis.
#[derive(Debug, Clone)]
pub struct SingleModeDensityMatrix {
    entries: DMatrix<Complex64>,
}

impl SingleModeDensityMatrix {
    pub fn from_entries(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.is_empty() {
            return Err(Error::Domain("density matrix must be square and non-empty".into()));
        }
        Ok(SingleModeDensityMatrix { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.entries.diagonal().iter().map(|z| z.re).collect()
    }

    /// Smallest eigenvalue of the Hermitian part; used by positivity checks.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()).scale(0.5);
        let eigen = nalgebra::linalg::SymmetricEigen::new(herm);
        eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermiticity_defect(&self) -> f64 {
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Joint density matrix over |n_a, n_b> with n_a major, n_b minor.
#[derive(Debug, Clone)]
pub struct TwoModeDensityMatrix {
    dim_a: usize,
    dim_b: usize,
    entries: DMatrix<Complex64>,
}

impl TwoModeDensityMatrix {
    pub fn new(dim_a: usize, dim_b: usize, entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != dim_a * dim_b || entries.ncols() != dim_a * dim_b {
            return Err(Error::Domain(format!(
                "joint matrix must be {0}x{0} for dims {dim_a}x{dim_b}",
                dim_a * dim_b
            )));
        }
        Ok(TwoModeDensityMatrix { dim_a, dim_b, entries })
    }

    /// rho (x) |0_b><0_b|.
    pub fn from_signal_and_vacuum(rho: &SingleModeDensityMatrix, dim_b: usize) -> Self {
        let dim_a = rho.dim();
        let dim = dim_a * dim_b;
        let mut entries = DMatrix::zeros(dim, dim);
        for ma in 0..dim_a {
            for na in 0..dim_a {
                entries[(ma * dim_b, na * dim_b)] = rho.entries()[(ma, na)];
            }
        }
        TwoModeDensityMatrix { dim_a, dim_b, entries }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn index(&self, n_a: usize, n_b: usize) -> usize {
        n_a * self.dim_b + n_b
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    /// U rho U-dagger with a dense propagator of matching dimension.
    pub fn evolved(&self, u: &DMatrix<Complex64>) -> Result<Self> {
        let dim = self.dim_a * self.dim_b;
        if u.nrows() != dim || u.ncols() != dim {
            return Err(Error::Domain(format!(
                "propagator is {}x{}, expected {dim}x{dim}",
                u.nrows(),
                u.ncols()
            )));
        }
        let entries = u * &self.entries * u.adjoint();
        Ok(TwoModeDensityMatrix {
            dim_a: self.dim_a,
            dim_b: self.dim_b,
            entries,
        })
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue; O(dim^3), intended for validation at small dims.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()).scale(0.5);
        let eigen = nalgebra::linalg::SymmetricEigen::new(herm);
        eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Coherent-state density matrix with real positive amplitude sqrt(n0):
/// rho_mn = e^{-n0} n0^{(m+n)/2} / sqrt(m! n!).
pub fn coherent_density_matrix(n0: f64, dim: usize) -> Result<SingleModeDensityMatrix> {
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(Error::Domain(format!("coherent mean {n0} must be >= 0")));
    }
    if dim == 0 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    let amplitudes: Vec<f64> = (0..dim)
        .map(|m| {
            if n0 == 0.0 {
                f64::from(u8::from(m == 0))
            } else {
                (-0.5 * n0 + 0.5 * m as f64 * n0.ln() - 0.5 * log_factorial(m as u64)).exp()
            }
        })
        .collect();
    let norm: f64 = amplitudes.iter().map(|c| c * c).sum();
    let deficit = 1.0 - norm;
    if deficit > 1e-8 {
        return Err(Error::InsufficientCutoff { deficit });
    }
    let mut entries = DMatrix::zeros(dim, dim);
    for m in 0..dim {
        for n in 0..dim {
            entries[(m, n)] = Complex64::new(amplitudes[m] * amplitudes[n], 0.0);
        }
    }
    SingleModeDensityMatrix::from_entries(entries)
}

/// Number-diagonal density matrix from a photon-number distribution.
pub fn diagonal_density_matrix(p: &PhotonNumberDistribution) -> SingleModeDensityMatrix {
    let dim = p.cutoff() + 1;
    let mut entries = DMatrix::zeros(dim, dim);
    for n in 0..dim {
        entries[(n, n)] = Complex64::new(p.prob(n), 0.0);
    }
    SingleModeDensityMatrix { entries }
}

/// exp(-i H) for a Hermitian block, by eigendecomposition; unitary to
/// roundoff by construction.
fn exp_minus_i(h: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eigen = nalgebra::linalg::SymmetricEigen::new(h);
    let phases = DVector::from_iterator(
        eigen.eigenvalues.len(),
        eigen
            .eigenvalues
            .iter()
            .map(|&lambda| Complex64::from_polar(1.0, -lambda)),
    );
    let v = &eigen.eigenvectors;
    v * DMatrix::from_diagonal(&phases) * v.adjoint()
}

/// Dense beam-splitter propagator U = exp[theta (a^t b - a b^t)] on the
/// truncated product basis. The generator conserves n_a + n_b, so each
/// total-number sector is exponentiated on its own.
pub fn bs_unitary(theta: f64, dim_a: usize, dim_b: usize) -> DMatrix<Complex64> {
    assert!(dim_a >= 2 && dim_b >= 2, "mode dimensions must be >= 2");
    let dim = dim_a * dim_b;
    let mut u = DMatrix::zeros(dim, dim);
    for total in 0..=(dim_a - 1 + dim_b - 1) {
        let lo = total.saturating_sub(dim_b - 1);
        let hi = total.min(dim_a - 1);
        let size = hi - lo + 1;
        // H = i theta (a^t b - a b^t) restricted to the sector; the only
        // couplings are n_a <-> n_a + 1.
        let mut h = DMatrix::zeros(size, size);
        for j in 0..size.saturating_sub(1) {
            let na = lo + j;
            let nb = total - na;
            let g = theta * (((na + 1) * nb) as f64).sqrt();
            h[(j + 1, j)] = Complex64::new(0.0, g);
            h[(j, j + 1)] = Complex64::new(0.0, -g);
        }
        let block = exp_minus_i(h);
        for j in 0..size {
            for i in 0..size {
                let row = (lo + i) * dim_b + (total - (lo + i));
                let col = (lo + j) * dim_b + (total - (lo + j));
                u[(row, col)] = block[(i, j)];
            }
        }
    }
    u
}

/// Dense down-conversion propagator u = exp[lambda (a b - a^t b^t)].
///
/// The generator conserves n_a - n_b but not the total number, so each
/// difference sector is exponentiated on a padded ladder and restricted to
/// the retained space afterwards; the restriction is then validated by
/// measuring |u^t u - 1| on the low-excitation block (n_a + n_b up to half
/// the smaller cutoff), and construction fails if the leakage exceeds 1e-8.
pub fn pdc_unitary(lambda: f64, dim_a: usize, dim_b: usize) -> Result<DMatrix<Complex64>> {
    if dim_a < 2 || dim_b < 2 {
        return Err(Error::Domain("mode dimensions must be >= 2".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("gain {lambda} must be >= 0")));
    }
    let pad = dim_a.max(dim_b);
    let (pad_a, pad_b) = (dim_a + pad, dim_b + pad);
    let dim = dim_a * dim_b;
    let mut u = DMatrix::zeros(dim, dim);

    // Sector with n_a - n_b = d >= 0 holds the ladder |d + j, j>; negative
    // differences swap the roles of the modes.
    for d in -(pad_b as i64 - 1)..=(pad_a as i64 - 1) {
        let (base_a, base_b, steps) = if d >= 0 {
            let offset = d as usize;
            (offset, 0usize, (pad_a - offset).min(pad_b))
        } else {
            let offset = (-d) as usize;
            (0usize, offset, pad_a.min(pad_b - offset))
        };
        let mut h = DMatrix::zeros(steps, steps);
        for j in 0..steps.saturating_sub(1) {
            let na = base_a + j;
            let nb = base_b + j;
            // ab lowers the pair, -a^t b^t raises it.
            let g = lambda * (((na + 1) * (nb + 1)) as f64).sqrt();
            h[(j, j + 1)] = Complex64::new(0.0, g);
            h[(j + 1, j)] = Complex64::new(0.0, -g);
        }
        let block = exp_minus_i(h);
        for j in 0..steps {
            let (ca, cb) = (base_a + j, base_b + j);
            if ca >= dim_a || cb >= dim_b {
                continue;
            }
            for i in 0..steps {
                let (ra, rb) = (base_a + i, base_b + i);
                if ra >= dim_a || rb >= dim_b {
                    continue;
                }
                u[(ra * dim_b + rb, ca * dim_b + cb)] = block[(i, j)];
            }
        }
    }

    // Unitarity on the retained low-excitation block.
    let max_total = (dim_a.min(dim_b) - 1) / 2;
    let low_states: Vec<usize> = (0..dim_a)
        .flat_map(|na| (0..dim_b).map(move |nb| (na, nb)))
        .filter(|(na, nb)| na + nb <= max_total)
        .map(|(na, nb)| na * dim_b + nb)
        .collect();
    let mut deviation = 0.0_f64;
    for (ci, &c) in low_states.iter().enumerate() {
        for &c2 in &low_states[ci..] {
            let mut inner = Complex64::new(0.0, 0.0);
            for row in 0..dim {
                inner += u[(row, c)].conj() * u[(row, c2)];
            }
            let expected = f64::from(u8::from(c == c2));
            deviation = deviation.max((inner - Complex64::new(expected, 0.0)).norm());
        }
    }
    if deviation > PDC_LEAKAGE_TOLERANCE {
        return Err(Error::TruncationLeakage { deviation });
    }
    Ok(u)
}

/// Apply the detector POVM to the ancilla and trace it out; returns the
/// unnormalized conditional state and its trace.
pub fn post_select(
    joint: &TwoModeDensityMatrix,
    detector: &DetectorModel,
) -> (SingleModeDensityMatrix, f64) {
    let (dim_a, dim_b) = (joint.dim_a(), joint.dim_b());
    let k = detector.k() as usize;
    let range: Box<dyn Iterator<Item = usize>> = match detector.flavor() {
        DetectorFlavor::Resolving => Box::new(k..(k + 1).min(dim_b)),
        DetectorFlavor::Nonresolving => Box::new(k..dim_b),
    };
    let ancilla_counts: Vec<usize> = range.collect();
    let mut entries = DMatrix::zeros(dim_a, dim_a);
    for ma in 0..dim_a {
        for na in 0..dim_a {
            let mut acc = Complex64::new(0.0, 0.0);
            for &l in &ancilla_counts {
                acc += joint.entries()[(ma * dim_b + l, na * dim_b + l)];
            }
            entries[(ma, na)] = acc;
        }
    }
    let rho_out = SingleModeDensityMatrix { entries };
    let probability = rho_out.trace();
    (rho_out, probability)
}

/// Trace of each ancilla projector |l><l| against the joint state, for
/// l = 0..dim_b-1 including the no-click branch; the entries sum to the
/// joint trace because the projectors resolve the identity.
pub fn ancilla_projection_probabilities(joint: &TwoModeDensityMatrix) -> Vec<f64> {
    let (dim_a, dim_b) = (joint.dim_a(), joint.dim_b());
    (0..dim_b)
        .map(|l| {
            (0..dim_a)
                .map(|ma| joint.entries()[(ma * dim_b + l, ma * dim_b + l)].re)
                .sum()
        })
        .collect()
}

/// Evolve rho (x) |0_b><0_b| exploiting the vacuum ancilla: the joint state
/// is A rho A-dagger with A the propagator columns at n_b = 0.
fn conditional_joint(
    u: &DMatrix<Complex64>,
    rho: &SingleModeDensityMatrix,
    dim_b: usize,
) -> TwoModeDensityMatrix {
    let dim_a = rho.dim();
    let dim = dim_a * dim_b;
    let mut a = DMatrix::zeros(dim, dim_a);
    for ma in 0..dim_a {
        a.set_column(ma, &u.column(ma * dim_b));
    }
    let entries = &a * rho.entries() * a.adjoint();
    TwoModeDensityMatrix { dim_a, dim_b, entries }
}

/// Brute-force conditional photon subtraction: embed, evolve by the
/// beam-splitter propagator, post-select.
pub fn oracle_subtract(
    rho: &SingleModeDensityMatrix,
    bs: &BeamSplitterParams,
    detector: &DetectorModel,
) -> Result<(SingleModeDensityMatrix, f64)> {
    let dim = rho.dim();
    let u = bs_unitary(bs.theta(), dim, dim);
    let joint = conditional_joint(&u, rho, dim);
    Ok(post_select(&joint, detector))
}

/// Brute-force conditional photon addition: embed, evolve by the
/// down-conversion propagator, post-select.
pub fn oracle_add(
    rho: &SingleModeDensityMatrix,
    pdc: &PdcParams,
    detector: &DetectorModel,
) -> Result<(SingleModeDensityMatrix, f64)> {
    let dim = rho.dim();
    let u = pdc_unitary(pdc.gain(), dim, dim)?;
    let joint = conditional_joint(&u, rho, dim);
    Ok(post_select(&joint, detector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{coherent_distribution, fock_distribution};
    use approx::assert_relative_eq;

    fn unitarity_defect(u: &DMatrix<Complex64>) -> f64 {
        let dim = u.nrows();
        let product = u.adjoint() * u;
        let mut defect = 0.0_f64;
        for i in 0..dim {
            for j in 0..dim {
                let expected = f64::from(u8::from(i == j));
                defect = defect.max((product[(i, j)] - Complex64::new(expected, 0.0)).norm());
            }
        }
        defect
    }

    #[test]
    fn coherent_matrix_diagonal_matches_the_distribution() {
        let rho = coherent_density_matrix(1.0, 30).unwrap();
        assert!((rho.trace() - 1.0).abs() <= 1e-12);
        let p = coherent_distribution(1.0, 1e-14).unwrap();
        for n in 0..=p.cutoff().min(29) {
            assert!((rho.diagonal()[n] - p.prob(n)).abs() <= 1e-12);
        }
        assert!(matches!(
            coherent_density_matrix(20.0, 5),
            Err(Error::InsufficientCutoff { .. })
        ));
        let vacuum = coherent_density_matrix(0.0, 4).unwrap();
        assert_eq!(vacuum.diagonal()[0], 1.0);
    }

    #[test]
    fn diagonal_matrix_reproduces_the_vector() {
        let p = crate::states::thermal_distribution(1.0, 1e-10).unwrap();
        let rho = diagonal_density_matrix(&p);
        for n in 0..=p.cutoff() {
            assert_eq!(rho.diagonal()[n], p.prob(n));
        }
        assert_eq!(diagonal_density_matrix(&fock_distribution(2)).diagonal()[2], 1.0);
    }

    #[test]
    fn beam_splitter_identity_and_unitarity() {
        let u = bs_unitary(0.0, 4, 4);
        for i in 0..16 {
            for j in 0..16 {
                let expected = f64::from(u8::from(i == j));
                assert!((u[(i, j)] - Complex64::new(expected, 0.0)).norm() <= 1e-14);
            }
        }
        for &theta in &[0.1, 0.7, std::f64::consts::FRAC_PI_2] {
            let u = bs_unitary(theta, 6, 6);
            assert!(unitarity_defect(&u) <= 1e-12, "theta = {theta}");
        }
    }

    #[test]
    fn full_reflection_swaps_the_modes() {
        let dim = 5;
        let u = bs_unitary(std::f64::consts::FRAC_PI_2, dim, dim);
        // |1, 0> -> |0, 1> up to phase.
        let col = u.column(dim); // index of |1, 0>
        let target = 1; // index of |0, 1>
        assert!((col[target].norm() - 1.0).abs() <= 1e-12);
        for (idx, z) in col.iter().enumerate() {
            if idx != target {
                assert!(z.norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn reflected_single_photon_probability_is_the_reflectivity() {
        let bs = BeamSplitterParams::from_reflectivity(0.3).unwrap();
        let rho = diagonal_density_matrix(&fock_distribution(1).resized(5));
        let (rho_out, p) = oracle_subtract(&rho, &bs, &DetectorModel::resolving(1).unwrap()).unwrap();
        assert_relative_eq!(p, 0.3, max_relative = 1e-12);
        assert_relative_eq!(rho_out.diagonal()[0], 0.3, max_relative = 1e-12);
    }

    #[test]
    fn pdc_identity_at_zero_gain() {
        let u = pdc_unitary(0.0, 4, 4).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expected = f64::from(u8::from(i == j));
                assert!((u[(i, j)] - Complex64::new(expected, 0.0)).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn pdc_squeezed_vacuum_photon_number() {
        let dim = 25;
        let lambda = 0.1;
        let u = pdc_unitary(lambda, dim, dim).unwrap();
        let column = u.column(0); // image of |0, 0>
        let mut mean = 0.0;
        for na in 0..dim {
            for nb in 0..dim {
                mean += na as f64 * column[na * dim + nb].norm_sqr();
            }
        }
        assert!((mean - lambda.sinh().powi(2)).abs() <= 1e-8);
    }

    #[test]
    fn pdc_block_unitarity_check_passes_at_moderate_gain() {
        for &lambda in &[0.05, 0.2] {
            assert!(pdc_unitary(lambda, 40, 40).is_ok(), "lambda = {lambda}");
        }
    }

    #[test]
    fn pdc_leakage_is_reported_for_aggressive_gain() {
        let err = pdc_unitary(2.5, 8, 8).unwrap_err();
        assert!(matches!(err, Error::TruncationLeakage { .. }), "got {err:?}");
    }

    #[test]
    fn post_selection_partition_resolves_the_trace() {
        let bs = BeamSplitterParams::from_reflectivity(0.25).unwrap();
        let p = coherent_distribution(1.0, 1e-12).unwrap().resized(11);
        let rho = diagonal_density_matrix(&p);
        let u = bs_unitary(bs.theta(), 12, 12);
        let joint = conditional_joint(&u, &diagonal_density_matrix(&p.resized(11)), 12);
        let parts = ancilla_projection_probabilities(&joint);
        let total: f64 = parts.iter().sum();
        assert!((total - joint.trace()).abs() <= 1e-10);
        let _ = rho;
    }

    #[test]
    fn vacuum_ancilla_never_clicks_without_interaction() {
        let rho = diagonal_density_matrix(&fock_distribution(2).resized(4));
        let joint = TwoModeDensityMatrix::from_signal_and_vacuum(&rho, 5);
        let (_, p) = post_select(&joint, &DetectorModel::nonresolving(1).unwrap());
        assert_eq!(p, 0.0);
    }

    #[test]
    fn oracle_addition_on_vacuum_creates_one_photon() {
        let pdc = PdcParams::from_gain(0.05).unwrap();
        let rho = diagonal_density_matrix(&fock_distribution(0).resized(9));
        let (rho_out, p) = oracle_add(&rho, &pdc, &DetectorModel::resolving(1).unwrap()).unwrap();
        assert_relative_eq!(p, pdc.t() * pdc.t() * pdc.r(), max_relative = 1e-10);
        assert_relative_eq!(rho_out.diagonal()[1], p, max_relative = 1e-10);
        assert!(rho_out.diagonal()[0].abs() <= 1e-14);
    }

    #[test]
    fn subtracted_coherent_light_stays_coherent() {
        let bs = BeamSplitterParams::from_reflectivity(0.01).unwrap();
        let rho = coherent_density_matrix(1.0, 25).unwrap();
        let (rho_out, p) =
            oracle_subtract(&rho, &bs, &DetectorModel::nonresolving(1).unwrap()).unwrap();
        let reference = coherent_distribution(0.99, 1e-14).unwrap();
        for n in 0..25 {
            assert!(
                (rho_out.diagonal()[n] / p - reference.prob(n)).abs() <= 1e-8,
                "n = {n}"
            );
        }
    }

    #[test]
    fn oracle_outputs_stay_positive() {
        let bs = BeamSplitterParams::from_reflectivity(0.1).unwrap();
        let pdc = PdcParams::from_gain(0.1).unwrap();
        let p = crate::states::thermal_distribution(0.8, 1e-12).unwrap().resized(11);
        let rho = diagonal_density_matrix(&p);
        for d in [
            DetectorModel::resolving(1).unwrap(),
            DetectorModel::nonresolving(2).unwrap(),
        ] {
            let (out, prob) = oracle_subtract(&rho, &bs, &d).unwrap();
            assert!(out.min_eigenvalue() >= -1e-9);
            assert!(out.hermiticity_defect() <= 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&prob));
            let (out, prob) = oracle_add(&rho, &pdc, &d).unwrap();
            assert!(out.min_eigenvalue() >= -1e-9);
            assert!(out.hermiticity_defect() <= 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&prob));
        }
    }
}
