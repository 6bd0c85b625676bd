//! System configuration, correlation profiles, channel draws and MMSE
//! estimation from contaminated pilots.
//!
//! Indices are zero-based throughout: `j` is the receiving base station,
//! `l` the cell a user belongs to and `k` the user (pilot) index. Every
//! correlation matrix `R_jlk` is stored through a factor `F` with
//! `R = F F^H`, so rank-deficient matrices are represented exactly.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_traits::Float;

use crate::linalg::{
    self, c64, hermitian_deviation, hermitian_eigenvalues, inverse_hpd, normalized_trace,
    pseudo_inverse_psd, CMatrix, CVector, C64,
};
use crate::rng::{circular_gaussian_vector, substream, Purpose};
use crate::{Error, Result};

/// Relative eigenvalue cut-off of the pseudo-inverse used for noiseless
/// training.
pub const PSEUDO_INVERSE_TOLERANCE: f64 = 1e-10;

/// Effective SNR of the training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainingSnr {
    Finite(f64),
    /// Noiseless (but still contaminated) pilots.
    Infinite,
}

impl TrainingSnr {
    /// Variance of the training noise, `1/rho_tau`.
    pub fn noise_variance(self) -> f64 {
        match self {
            TrainingSnr::Finite(snr) => 1.0 / snr,
            TrainingSnr::Infinite => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of cells `L`.
    pub cells: usize,
    /// Users per cell `K`.
    pub users: usize,
    /// Antennas per base station `N`.
    pub antennas: usize,
    /// Transmit SNR `rho` (linear).
    pub snr: f64,
    pub training_snr: TrainingSnr,
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(
        cells: usize,
        users: usize,
        antennas: usize,
        snr: f64,
        training_snr: TrainingSnr,
        seed: u64,
    ) -> Result<Self> {
        let config = Self {
            cells,
            users,
            antennas,
            snr,
            training_snr,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(Error::Config("cell count must be at least 1"));
        }
        if self.users == 0 {
            return Err(Error::Config("users per cell must be at least 1"));
        }
        if self.antennas == 0 {
            return Err(Error::Config("antenna count must be at least 1"));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config("transmit SNR must be positive and finite"));
        }
        if let TrainingSnr::Finite(snr) = self.training_snr {
            if !(snr > 0.0) {
                return Err(Error::Config("training SNR must be positive"));
            }
        }
        Ok(())
    }

    /// The regularizer `lambda = 1/(rho N)`.
    pub fn default_lambda(&self) -> f64 {
        1.0 / (self.snr * self.antennas as f64)
    }
}

/// One stored correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Correlation {
    /// `R = F F^H` with `F` of size `N x r`.
    Factor(CMatrix),
    /// A dense matrix supplied directly. `factor` is its clamped Hermitian
    /// square root and is what channel draws use.
    Matrix { matrix: CMatrix, factor: CMatrix },
}

impl Correlation {
    pub fn from_matrix(matrix: CMatrix) -> Self {
        let factor = linalg::psd_sqrt(&matrix);
        Correlation::Matrix { matrix, factor }
    }

    pub fn factor(&self) -> &CMatrix {
        match self {
            Correlation::Factor(f) => f,
            Correlation::Matrix { factor, .. } => factor,
        }
    }

    pub fn matrix(&self) -> CMatrix {
        match self {
            Correlation::Factor(f) => f * f.adjoint(),
            Correlation::Matrix { matrix, .. } => matrix.clone(),
        }
    }
}

/// Marks a profile built by [`build_simple_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleModelTag {
    pub dof: usize,
    pub alpha: f64,
}

/// All correlation matrices `R_jlk` of a system.
///
/// Identical matrices may be shared: `index` maps each `(j, l, k)` to an
/// entry of `unique`. Downstream code uses the shared ids to avoid repeating
/// `O(N^3)` work.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    cells: usize,
    users: usize,
    antennas: usize,
    unique: Vec<Correlation>,
    index: Vec<usize>,
    simple: Option<SimpleModelTag>,
}

impl CorrelationProfile {
    pub fn from_shared(
        cells: usize,
        users: usize,
        antennas: usize,
        unique: Vec<Correlation>,
        index: Vec<usize>,
    ) -> Result<Self> {
        if cells == 0 || users == 0 || antennas == 0 {
            return Err(Error::Config("profile dimensions must be positive"));
        }
        let expected = cells * cells * users;
        if index.len() != expected {
            return Err(Error::Dimension {
                what: "profile index",
                expected,
                got: index.len(),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= unique.len()) {
            return Err(Error::Dimension {
                what: "profile entry id",
                expected: unique.len(),
                got: bad,
            });
        }
        for entry in &unique {
            let f = entry.factor();
            if f.nrows() != antennas {
                return Err(Error::Dimension {
                    what: "correlation factor rows",
                    expected: antennas,
                    got: f.nrows(),
                });
            }
            if f.ncols() == 0 || f.ncols() > antennas {
                return Err(Error::Dimension {
                    what: "correlation factor rank",
                    expected: antennas,
                    got: f.ncols(),
                });
            }
            if let Correlation::Matrix { matrix, .. } = entry {
                if matrix.nrows() != antennas || matrix.ncols() != antennas {
                    return Err(Error::Dimension {
                        what: "correlation matrix",
                        expected: antennas,
                        got: matrix.nrows(),
                    });
                }
            }
        }
        Ok(Self {
            cells,
            users,
            antennas,
            unique,
            index,
            simple: None,
        })
    }

    /// One factor per `(j, l, k)`, no sharing.
    pub fn from_factors(
        cells: usize,
        users: usize,
        antennas: usize,
        mut factor: impl FnMut(usize, usize, usize) -> CMatrix,
    ) -> Result<Self> {
        let mut unique = Vec::with_capacity(cells * cells * users);
        for j in 0..cells {
            for l in 0..cells {
                for k in 0..users {
                    unique.push(Correlation::Factor(factor(j, l, k)));
                }
            }
        }
        let index = (0..unique.len()).collect();
        Self::from_shared(cells, users, antennas, unique, index)
    }

    /// One dense Hermitian matrix per `(j, l, k)`, no sharing.
    pub fn from_matrices(
        cells: usize,
        users: usize,
        antennas: usize,
        mut matrix: impl FnMut(usize, usize, usize) -> CMatrix,
    ) -> Result<Self> {
        let mut unique = Vec::with_capacity(cells * cells * users);
        for j in 0..cells {
            for l in 0..cells {
                for k in 0..users {
                    let m = matrix(j, l, k);
                    if m.nrows() != antennas || m.ncols() != antennas {
                        return Err(Error::Dimension {
                            what: "correlation matrix",
                            expected: antennas,
                            got: m.nrows(),
                        });
                    }
                    unique.push(Correlation::from_matrix(m));
                }
            }
        }
        let index = (0..unique.len()).collect();
        Self::from_shared(cells, users, antennas, unique, index)
    }

    /// `R_jlk = I_N` for every link.
    pub fn identity(cells: usize, users: usize, antennas: usize) -> Result<Self> {
        Self::from_shared(
            cells,
            users,
            antennas,
            alloc::vec![Correlation::Factor(linalg::identity(antennas))],
            alloc::vec![0; cells * cells * users],
        )
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn simple_tag(&self) -> Option<SimpleModelTag> {
        self.simple
    }

    pub fn unique_count(&self) -> usize {
        self.unique.len()
    }

    /// Shared id of `R_jlk`.
    pub fn id(&self, j: usize, l: usize, k: usize) -> usize {
        self.index[(j * self.cells + l) * self.users + k]
    }

    pub fn entry_by_id(&self, id: usize) -> &Correlation {
        &self.unique[id]
    }

    pub fn entry(&self, j: usize, l: usize, k: usize) -> &Correlation {
        &self.unique[self.id(j, l, k)]
    }

    pub fn factor(&self, j: usize, l: usize, k: usize) -> &CMatrix {
        self.entry(j, l, k).factor()
    }

    /// Dense `R_jlk`.
    pub fn correlation(&self, j: usize, l: usize, k: usize) -> CMatrix {
        self.entry(j, l, k).matrix()
    }

    /// Check the profile against a system configuration.
    pub fn check_config(&self, config: &SystemConfig) -> Result<()> {
        let pairs = [
            ("cells", config.cells, self.cells),
            ("users", config.users, self.users),
            ("antennas", config.antennas, self.antennas),
        ];
        for (what, expected, got) in pairs {
            if expected != got {
                return Err(Error::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Diagnostics of a single stored correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryDiagnostics {
    /// First `(j, l, k)` that refers to this matrix.
    pub index: (usize, usize, usize),
    pub hermitian_deviation: f64,
    pub min_eigenvalue: f64,
    pub spectral_norm: f64,
    pub normalized_trace: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NotHermitian,
    NegativeEigenvalue,
    /// Spectral norm above the profile bound.
    UnboundedNorm,
    /// `(1/N) tr R` not positive.
    VanishingTrace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub index: (usize, usize, usize),
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub hermitian_tolerance: f64,
    pub eigenvalue_floor: f64,
    pub spectral_norm_bound: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            hermitian_tolerance: 1e-12,
            eigenvalue_floor: -1e-10,
            spectral_norm_bound: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<EntryDiagnostics>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every stored correlation matrix for Hermitian symmetry, positive
/// semidefiniteness, a bounded spectral norm and a positive normalized trace.
pub fn validate_profile(
    profile: &CorrelationProfile,
    config: &SystemConfig,
    options: &ValidationOptions,
) -> Result<ValidationReport> {
    profile.check_config(config)?;
    let mut first_use: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for j in 0..profile.cells {
        for l in 0..profile.cells {
            for k in 0..profile.users {
                first_use.entry(profile.id(j, l, k)).or_insert((j, l, k));
            }
        }
    }

    let mut entries = Vec::with_capacity(first_use.len());
    let mut violations = Vec::new();
    for (&id, &index) in &first_use {
        let r = profile.unique[id].matrix();
        let deviation = hermitian_deviation(&r);
        let eigenvalues = hermitian_eigenvalues(&r);
        let min_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
        let spectral_norm = eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let trace = normalized_trace(&r);

        let mut flag = |kind, value| violations.push(Violation { index, kind, value });
        if deviation > options.hermitian_tolerance {
            flag(ViolationKind::NotHermitian, deviation);
        }
        if min_eigenvalue < options.eigenvalue_floor {
            flag(ViolationKind::NegativeEigenvalue, min_eigenvalue);
        }
        if !(spectral_norm <= options.spectral_norm_bound) {
            flag(ViolationKind::UnboundedNorm, spectral_norm);
        }
        if !(trace > 0.0) {
            flag(ViolationKind::VanishingTrace, trace);
        }
        entries.push(EntryDiagnostics {
            index,
            hermitian_deviation: deviation,
            min_eigenvalue,
            spectral_norm,
            normalized_trace: trace,
        });
    }
    Ok(ValidationReport {
        entries,
        violations,
    })
}

/// Parameters of the angular-bin model: `P` orthonormal directions shared by
/// all links, own-cell gain `N/P` and other-cell gain `alpha N/P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleModelSpec {
    /// `A`, an `N x P` matrix with orthonormal columns.
    pub basis: CMatrix,
    pub alpha: f64,
}

impl SimpleModelSpec {
    pub fn new(basis: CMatrix, alpha: f64) -> Result<Self> {
        let p = basis.ncols();
        let gram = basis.adjoint() * &basis;
        if (gram - linalg::identity(p)).norm() > 1e-10 * (p as f64).max(1.0) {
            return Err(Error::Config("basis columns are not orthonormal"));
        }
        Ok(Self { basis, alpha })
    }

    /// First `dof` columns of the unitary `N`-point DFT matrix.
    pub fn dft(antennas: usize, dof: usize, alpha: f64) -> Result<Self> {
        if dof == 0 || dof > antennas {
            return Err(Error::Config("DoF must satisfy 1 <= P <= N"));
        }
        let n = antennas as f64;
        let scale = 1.0 / Float::sqrt(n);
        let basis = CMatrix::from_fn(antennas, dof, |row, col| {
            let phase = -2.0 * core::f64::consts::PI * ((row * col) % antennas) as f64 / n;
            c64(Float::cos(phase) * scale, Float::sin(phase) * scale)
        });
        Ok(Self { basis, alpha })
    }

    /// First `dof` columns of the identity.
    pub fn canonical(antennas: usize, dof: usize, alpha: f64) -> Result<Self> {
        if dof == 0 || dof > antennas {
            return Err(Error::Config("DoF must satisfy 1 <= P <= N"));
        }
        let basis = CMatrix::from_fn(antennas, dof, |row, col| {
            if row == col {
                c64(1.0, 0.0)
            } else {
                c64(0.0, 0.0)
            }
        });
        Ok(Self { basis, alpha })
    }

    pub fn dof(&self) -> usize {
        self.basis.ncols()
    }
}

/// Build the angular-bin profile: `F_jjk = sqrt(N/P) A` and
/// `F_jlk = sqrt(alpha N/P) A` for `l != j`.
pub fn build_simple_profile(
    config: &SystemConfig,
    spec: &SimpleModelSpec,
) -> Result<CorrelationProfile> {
    config.validate()?;
    let n = config.antennas;
    let p = spec.dof();
    if spec.basis.nrows() != n {
        return Err(Error::Dimension {
            what: "simple-model basis rows",
            expected: n,
            got: spec.basis.nrows(),
        });
    }
    if p == 0 || p > n {
        return Err(Error::Config("DoF must satisfy 1 <= P <= N"));
    }
    if !(spec.alpha > 0.0 && spec.alpha <= 1.0) {
        return Err(Error::Config("intercell factor must lie in (0, 1]"));
    }
    let gain = n as f64 / p as f64;
    let own = &spec.basis * c64(Float::sqrt(gain), 0.0);
    let other = &spec.basis * c64(Float::sqrt(spec.alpha * gain), 0.0);
    let (cells, users) = (config.cells, config.users);
    let mut index = Vec::with_capacity(cells * cells * users);
    for j in 0..cells {
        for l in 0..cells {
            for _ in 0..users {
                index.push(if j == l { 0 } else { 1 });
            }
        }
    }
    let mut profile = CorrelationProfile::from_shared(
        cells,
        users,
        n,
        alloc::vec![Correlation::Factor(own), Correlation::Factor(other)],
        index,
    )?;
    profile.simple = Some(SimpleModelTag {
        dof: p,
        alpha: spec.alpha,
    });
    Ok(profile)
}

/// Channels seen by one base station: `H_jl` for every `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellChannels {
    pub cell: usize,
    /// `h[l]` is `H_jl`, `N x K`.
    pub h: Vec<CMatrix>,
    /// `w[l][k]` is the fading vector with `h_jlk = F_jlk w_jlk`.
    pub w: Vec<Vec<CVector>>,
}

/// A full channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub seed: u64,
    pub draw_index: u64,
    pub cells: Vec<CellChannels>,
}

impl ChannelDraw {
    /// `H_jl`.
    pub fn h(&self, j: usize, l: usize) -> &CMatrix {
        &self.cells[j].h[l]
    }
}

/// Draw the channels seen by base station `cell`. Each `w_jlk` comes from its
/// own substream, so this is a sub-block of [`draw_channels`].
pub fn draw_cell_channels(
    profile: &CorrelationProfile,
    cell: usize,
    seed: u64,
    draw_index: u64,
) -> CellChannels {
    let (n, users) = (profile.antennas, profile.users);
    let mut h = Vec::with_capacity(profile.cells);
    let mut w = Vec::with_capacity(profile.cells);
    for l in 0..profile.cells {
        let mut hl = CMatrix::zeros(n, users);
        let mut wl = Vec::with_capacity(users);
        for k in 0..users {
            let factor = profile.factor(cell, l, k);
            let mut rng = substream(
                seed,
                Purpose::Fading,
                [draw_index, cell as u64, l as u64, k as u64],
            );
            let wk = circular_gaussian_vector(&mut rng, factor.ncols());
            hl.set_column(k, &(factor * &wk));
            wl.push(wk);
        }
        h.push(hl);
        w.push(wl);
    }
    CellChannels { cell, h, w }
}

/// Draw `h_jlk = F_jlk w_jlk` for all links.
pub fn draw_channels(profile: &CorrelationProfile, seed: u64, draw_index: u64) -> ChannelDraw {
    ChannelDraw {
        seed,
        draw_index,
        cells: (0..profile.cells)
            .map(|j| draw_cell_channels(profile, j, seed, draw_index))
            .collect(),
    }
}

/// Training observation of base station `cell`: column `k` is
/// `y_jk = sum_l h_jlk + n_jk / sqrt(rho_tau)`.
pub fn cell_pilot_observation(
    channels: &CellChannels,
    training_snr: TrainingSnr,
    seed: u64,
    draw_index: u64,
) -> CMatrix {
    let mut y = channels.h.iter().fold(
        CMatrix::zeros(channels.h[0].nrows(), channels.h[0].ncols()),
        |acc, hl| acc + hl,
    );
    if let TrainingSnr::Finite(snr) = training_snr {
        let scale = c64(Float::sqrt(1.0 / snr), 0.0);
        for k in 0..y.ncols() {
            let mut rng = substream(
                seed,
                Purpose::PilotNoise,
                [draw_index, channels.cell as u64, k as u64, 0],
            );
            let noise = circular_gaussian_vector(&mut rng, y.nrows());
            let mut column = y.column_mut(k);
            column += noise * scale;
        }
    }
    y
}

/// Pilot observations `y_jk` of every base station; `y[j]` is `N x K`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub y: Vec<CMatrix>,
}

pub fn draw_pilot_observation(draw: &ChannelDraw, config: &SystemConfig) -> PilotObservation {
    PilotObservation {
        y: draw
            .cells
            .iter()
            .map(|c| cell_pilot_observation(c, config.training_snr, draw.seed, draw.draw_index))
            .collect(),
    }
}

/// How `Q_jk` is formed when the training is noiseless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InversionMode {
    /// Moore-Penrose inverse of `sum_l R_jlk`.
    #[default]
    PseudoInverse,
    /// Require `sum_l R_jlk` to be invertible.
    Strict,
}

/// Estimator statistics of one base station. Deterministic: depends only on
/// the profile and the training SNR.
///
/// Holds `Q_jk`, `Phi_jlk = R_jjk Q_jk R_jlk`, the summed estimation-error
/// covariance `sum_k C_jjk`, the summed conditional covariance of the
/// other-cell channels `sum_{l != j, k} C_jlk` and the interference matrix
/// `Z_j`. Matrices are deduplicated through the profile ids.
#[derive(Debug, Clone)]
pub struct PilotStatistics {
    cell: usize,
    cells: usize,
    users: usize,
    antennas: usize,
    /// Row-local dense correlations and factors, addressed by `corr_index`.
    correlations: Vec<CMatrix>,
    factors: Vec<CMatrix>,
    corr_index: Vec<usize>,
    filters: Vec<CMatrix>,
    filter_index: Vec<usize>,
    phis: Vec<CMatrix>,
    phi_index: Vec<usize>,
    estimation_error: CMatrix,
    intercell_error: CMatrix,
    interference: CMatrix,
}

impl PilotStatistics {
    pub fn new(
        profile: &CorrelationProfile,
        cell: usize,
        training_snr: TrainingSnr,
        mode: InversionMode,
    ) -> Result<Self> {
        let (cells, users, n) = (profile.cells, profile.users, profile.antennas);
        if cell >= cells {
            return Err(Error::Dimension {
                what: "cell index",
                expected: cells,
                got: cell,
            });
        }

        // Row-local copies of the correlations used by this base station.
        let mut local: BTreeMap<usize, usize> = BTreeMap::new();
        let mut correlations = Vec::new();
        let mut factors = Vec::new();
        let mut corr_index = Vec::with_capacity(cells * users);
        for l in 0..cells {
            for k in 0..users {
                let id = profile.id(cell, l, k);
                let slot = *local.entry(id).or_insert_with(|| {
                    let entry = profile.entry_by_id(id);
                    correlations.push(entry.matrix());
                    factors.push(entry.factor().clone());
                    correlations.len() - 1
                });
                corr_index.push(slot);
            }
        }

        // Q_jk, shared between users with the same column of ids.
        let noise = training_snr.noise_variance();
        let mut filter_keys: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut filters = Vec::new();
        let mut filter_index = Vec::with_capacity(users);
        for k in 0..users {
            let key: Vec<usize> = (0..cells).map(|l| corr_index[l * users + k]).collect();
            if let Some(&slot) = filter_keys.get(&key) {
                filter_index.push(slot);
                continue;
            }
            let mut total = CMatrix::zeros(n, n);
            for &slot in &key {
                total += &correlations[slot];
            }
            let q = match training_snr {
                TrainingSnr::Finite(_) => {
                    for d in 0..n {
                        total[(d, d)] += c64(noise, 0.0);
                    }
                    inverse_hpd(&total).ok_or(Error::SingularCovariance { cell, user: k })?
                }
                TrainingSnr::Infinite => match mode {
                    InversionMode::Strict => inverse_hpd(&total)
                        .ok_or(Error::SingularCovariance { cell, user: k })?,
                    InversionMode::PseudoInverse => {
                        pseudo_inverse_psd(&total, PSEUDO_INVERSE_TOLERANCE)
                    }
                },
            };
            filters.push(q);
            filter_keys.insert(key, filters.len() - 1);
            filter_index.push(filters.len() - 1);
        }

        // Phi_jlk = R_jjk Q_jk R_jlk keyed by (own corr, filter, link corr).
        let mut phi_keys: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut phis = Vec::new();
        let mut phi_index = Vec::with_capacity(cells * users);
        for l in 0..cells {
            for k in 0..users {
                let key = (
                    corr_index[cell * users + k],
                    filter_index[k],
                    corr_index[l * users + k],
                );
                let slot = *phi_keys.entry(key).or_insert_with(|| {
                    let rq = &correlations[key.0] * &filters[key.1];
                    phis.push(rq * &correlations[key.2]);
                    phis.len() - 1
                });
                phi_index.push(slot);
            }
        }

        // Summed covariances, again with multiplicities.
        let mut estimation_error = CMatrix::zeros(n, n);
        let mut intercell_error = CMatrix::zeros(n, n);
        let mut intercell_total = CMatrix::zeros(n, n);
        let mut error_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut cross_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for k in 0..users {
            *error_counts
                .entry((corr_index[cell * users + k], phi_index[cell * users + k]))
                .or_insert(0) += 1;
            for l in (0..cells).filter(|&l| l != cell) {
                *cross_counts
                    .entry((corr_index[l * users + k], filter_index[k]))
                    .or_insert(0) += 1;
            }
        }
        for (&(corr, phi), &count) in &error_counts {
            let c = &correlations[corr] - &phis[phi];
            estimation_error += c * c64(count as f64, 0.0);
        }
        for (&(corr, filter), &count) in &cross_counts {
            let r = &correlations[corr];
            let c = r - r * &filters[filter] * r;
            intercell_error += c * c64(count as f64, 0.0);
            intercell_total += r * c64(count as f64, 0.0);
        }
        let estimation_error = linalg::hermitian_part(&estimation_error);
        let intercell_error = linalg::hermitian_part(&intercell_error);
        let interference = &estimation_error + linalg::hermitian_part(&intercell_total);

        Ok(Self {
            cell,
            cells,
            users,
            antennas: n,
            correlations,
            factors,
            corr_index,
            filters,
            filter_index,
            phis,
            phi_index,
            estimation_error,
            intercell_error,
            interference,
        })
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// `R_jlk` for this cell `j`.
    pub fn correlation(&self, l: usize, k: usize) -> &CMatrix {
        &self.correlations[self.corr_index[l * self.users + k]]
    }

    /// Row-local id of `R_jlk`; equal ids mean equal matrices.
    pub fn correlation_id(&self, l: usize, k: usize) -> usize {
        self.corr_index[l * self.users + k]
    }

    pub fn filter(&self, k: usize) -> &CMatrix {
        &self.filters[self.filter_index[k]]
    }

    /// `Phi_jlk`.
    pub fn phi(&self, l: usize, k: usize) -> &CMatrix {
        &self.phis[self.phi_index[l * self.users + k]]
    }

    /// Row-local id of `Phi_jlk`; equal ids mean equal matrices.
    pub fn phi_id(&self, l: usize, k: usize) -> usize {
        self.phi_index[l * self.users + k]
    }

    /// `C_jjk = R_jjk - Phi_jjk`.
    pub fn error_covariance(&self, k: usize) -> CMatrix {
        self.correlation(self.cell, k) - self.phi(self.cell, k)
    }

    /// `C_jlk = R_jlk - R_jlk Q_jk R_jlk`, the covariance of `h_jlk` given
    /// `y_jk`. For `l == j` this equals [`Self::error_covariance`].
    pub fn conditional_covariance(&self, l: usize, k: usize) -> CMatrix {
        let r = self.correlation(l, k);
        r - r * self.filter(k) * r
    }

    /// `sum_k C_jjk`.
    pub fn estimation_error(&self) -> &CMatrix {
        &self.estimation_error
    }

    /// `sum_{l != j} sum_k C_jlk`.
    pub fn intercell_error(&self) -> &CMatrix {
        &self.intercell_error
    }

    /// `Z_j = sum_k C_jjk + sum_{l != j} sum_k R_jlk`.
    pub fn interference(&self) -> &CMatrix {
        &self.interference
    }

    /// Apply the estimator to the `N x K` observation of this cell.
    pub fn estimate(&self, y: &CMatrix) -> CellEstimate {
        let (n, users) = (self.antennas, self.users);
        let mut qy = CMatrix::zeros(n, users);
        for slot in 0..self.filters.len() {
            let columns: Vec<usize> = (0..users).filter(|&k| self.filter_index[k] == slot).collect();
            let block = y.select_columns(columns.iter());
            let product = &self.filters[slot] * block;
            for (c, &k) in columns.iter().enumerate() {
                qy.set_column(k, &product.column(c));
            }
        }
        // R q = F (F^H q) for every distinct correlation of this row.
        let projected: Vec<CMatrix> = self
            .factors
            .iter()
            .map(|f| f * (f.adjoint() * &qy))
            .collect();
        let means = (0..self.cells)
            .map(|l| {
                CMatrix::from_fn(n, users, |row, k| {
                    projected[self.corr_index[l * users + k]][(row, k)]
                })
            })
            .collect();
        CellEstimate {
            cell: self.cell,
            y: y.clone(),
            means,
        }
    }
}

/// Per-draw estimation output of one base station.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub cell: usize,
    /// Observation `y_jk`, column `k`.
    pub y: CMatrix,
    /// `means[l]` has columns `m_jlk = R_jlk Q_jk y_jk`, the conditional
    /// means of `h_jlk`. `means[j]` is the channel estimate `hhat_jjk`.
    pub means: Vec<CMatrix>,
}

impl CellEstimate {
    /// `Hhat_jj`.
    pub fn hhat(&self) -> &CMatrix {
        &self.means[self.cell]
    }

    pub fn hhat_user(&self, k: usize) -> CVector {
        self.hhat().column(k).into_owned()
    }
}

/// Statistics and per-draw estimates for every base station.
#[derive(Debug, Clone)]
pub struct PilotEstimate {
    pub statistics: Vec<PilotStatistics>,
    pub cells: Vec<CellEstimate>,
}

/// MMSE estimation of all local channels from the pilot observations.
pub fn mmse_estimate(
    profile: &CorrelationProfile,
    observation: &PilotObservation,
    config: &SystemConfig,
) -> Result<PilotEstimate> {
    mmse_estimate_with(profile, observation, config, InversionMode::default())
}

pub fn mmse_estimate_with(
    profile: &CorrelationProfile,
    observation: &PilotObservation,
    config: &SystemConfig,
    mode: InversionMode,
) -> Result<PilotEstimate> {
    profile.check_config(config)?;
    if observation.y.len() != config.cells {
        return Err(Error::Dimension {
            what: "pilot observation cells",
            expected: config.cells,
            got: observation.y.len(),
        });
    }
    let mut statistics = Vec::with_capacity(config.cells);
    let mut cells = Vec::with_capacity(config.cells);
    for (j, y) in observation.y.iter().enumerate() {
        let stats = PilotStatistics::new(profile, j, config.training_snr, mode)?;
        cells.push(stats.estimate(y));
        statistics.push(stats);
    }
    Ok(PilotEstimate { statistics, cells })
}

/// Complex zero vector helper for callers building test fixtures.
pub fn zero_vector(n: usize) -> CVector {
    DVector::from_element(n, C64::new(0.0, 0.0))
}
