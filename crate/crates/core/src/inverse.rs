//! Inverse solvers.
//!
//! The basis-coefficient MAP estimator works in the span of a [`BasisSet`]:
//! with `L = K A` and a diagonal prior covariance `Σ`,
//!
//! ```text
//! θ̂ = (LᵀL + β Σ⁻¹)⁻¹ Lᵀ y,    x̂ = A θ̂.
//! ```
//!
//! The system is `S × S`, which for `S ≪ N` is far cheaper than any
//! vertex-space solve; that is the computational point of the method. It is
//! solved in the prior-scaled variables `φ = Σ^{-1/2} θ`, where the matrix is
//! `H + βI` with `H = Σ^{1/2} LᵀL Σ^{1/2}`. One eigendecomposition of `H`
//! per problem gives the exact condition number for every β and makes the
//! discrepancy search cheap; each individual solve is a Cholesky
//! factorisation followed by a normal-equation residual check.
//!
//! The minimum-norm family (MNE, dSPM, sLORETA, eLORETA) shares one
//! eigendecomposition of the noise-whitened Gram matrix `K̃K̃ᵀ`,
//! `K̃ = C^{-1/2} K`, which gives the kernel, both normalisations and the
//! residual in closed form for every β.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::basis::{inverse_sqrt_spd, BasisFamily, BasisSet};
use crate::error::{Error, Result};
use crate::formats::{write_vector, Manifest, MatrixFormat};
use crate::forward::ForwardModel;
use crate::scalar::Real;
use crate::simulate::{Provenance, SourceEstimate};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e14;
/// The constant in `Σᵢᵢ = 1 / (λᵢ + ε λ̄)`.
pub const DEFAULT_EPSILON_FRAC: f64 = 0.1;
/// The discrepancy search covers `[1e-8, 1e8] · scale`.
pub const BETA_RANGE: (f64, f64) = (1e-8, 1e8);
/// Relative tolerance on the discrepancy match.
pub const DISCREPANCY_TOLERANCE: f64 = 0.01;

fn residual_tolerance<T: Real>() -> T {
    T::lit(1e-9).max(T::lit(1e3) * T::default_epsilon())
}

/// Diagonal prior covariance bound to a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec<T: Real> {
    pub sigma_diag: DVector<T>,
    pub epsilon_frac: T,
    pub lambda_bar: T,
}

/// `Σᵢᵢ = 1 / (wᵢ + ε · mean(w))` from the basis weights.
pub fn build_prior<T: Real>(basis: &BasisSet<T>, epsilon_frac: T) -> Result<PriorSpec<T>> {
    prior_from_weights(basis.weights(), epsilon_frac)
}

pub fn prior_from_weights<T: Real>(weights: &DVector<T>, epsilon_frac: T) -> Result<PriorSpec<T>> {
    if weights.is_empty() {
        return Err(Error::Dimension("no weights".into()));
    }
    if weights
        .iter()
        .any(|w| !w.is_finite_value() || *w < T::zero())
    {
        return Err(Error::Numerical(
            "prior weights must be finite and non-negative".into(),
        ));
    }
    if !epsilon_frac.is_finite_value() || epsilon_frac < T::zero() {
        return Err(Error::Numerical(format!(
            "epsilon fraction {epsilon_frac} is invalid"
        )));
    }
    let lambda_bar = weights.sum() / T::of_usize(weights.len());
    let sigma_diag = weights.map(|w| T::one() / (w + epsilon_frac * lambda_bar));
    if sigma_diag
        .iter()
        .any(|s| !s.is_finite_value() || !(*s > T::zero()))
    {
        return Err(Error::Degenerate(
            "prior variance is infinite: a zero weight with no regularising offset".into(),
        ));
    }
    Ok(PriorSpec {
        sigma_diag,
        epsilon_frac,
        lambda_bar,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    GbfMap,
    HarmonicMap,
    MspMap,
    Mne,
    Dspm,
    Sloreta,
    Eloreta,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::GbfMap,
        Method::HarmonicMap,
        Method::MspMap,
        Method::Mne,
        Method::Dspm,
        Method::Sloreta,
        Method::Eloreta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GbfMap => "GBF",
            Method::HarmonicMap => "Harmonic",
            Method::MspMap => "MSP",
            Method::Mne => "MNE",
            Method::Dspm => "dSPM",
            Method::Sloreta => "sLORETA",
            Method::Eloreta => "eLORETA",
        }
    }

    /// The basis family a MAP method runs on, if it is one.
    pub fn basis_family(self) -> Option<BasisFamily> {
        match self {
            Method::GbfMap => Some(BasisFamily::Gbf),
            Method::HarmonicMap => Some(BasisFamily::Harmonic),
            Method::MspMap => Some(BasisFamily::Msp),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_suffix("-map").unwrap_or(&key);
        Method::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                Error::Format(format!(
                    "unknown method `{s}` (GBF, Harmonic, MSP, MNE, dSPM, sLORETA, eLORETA)"
                ))
            })
    }
}

/// How β is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaRule<T: Real> {
    /// Used as given.
    Fixed(T),
    /// Multiplied by the problem's natural scale (see [`MapProblem::scale`]
    /// and [`MneProblem::scale`]).
    Relative(T),
    /// Matches the residual to the known noise power.
    Discrepancy,
}

#[derive(Clone, Debug)]
pub struct SolverConfig<T: Real> {
    pub method: Method,
    pub beta: BetaRule<T>,
    /// `C`; identity when absent.
    pub noise_cov: Option<DMatrix<T>>,
    /// Pre-whiten `y` and `L` with `C^{-1/2}` in the MAP solvers.
    pub whiten: bool,
    pub epsilon_frac: T,
    pub eloreta_tol: T,
    pub eloreta_max_iter: usize,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(method: Method, beta: BetaRule<T>) -> Self {
        Self {
            method,
            beta,
            noise_cov: None,
            whiten: false,
            epsilon_frac: T::lit(DEFAULT_EPSILON_FRAC),
            eloreta_tol: T::lit(1e-8),
            eloreta_max_iter: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaStatus {
    Converged,
    /// Even the smallest β leaves too much residual.
    LowerBoundary,
    /// Even the largest β leaves too little residual.
    UpperBoundary,
    /// The bracket collapsed before the tolerance was met.
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaSelection<T: Real> {
    pub beta: T,
    pub residual_sq: T,
    pub target: T,
    pub iterations: usize,
    pub status: BetaStatus,
}

/// Bisection on `log β` over `[1e-8, 1e8] · scale` for
/// `residual_sq(β) = target` within 1 %. Relies on the residual being
/// non-decreasing in β.
pub fn bisect_discrepancy<T: Real>(
    scale: T,
    target: T,
    residual_sq: impl Fn(T) -> T,
) -> BetaSelection<T> {
    let tol = T::lit(DISCREPANCY_TOLERANCE) * target;
    let mut lo = (T::lit(BETA_RANGE.0) * scale).ln();
    let mut hi = (T::lit(BETA_RANGE.1) * scale).ln();
    let done = |beta: T, r: T, iterations, status| BetaSelection {
        beta,
        residual_sq: r,
        target,
        iterations,
        status,
    };
    let r_lo = residual_sq(lo.exp());
    if r_lo >= target - tol {
        let status = if (r_lo - target).abs() <= tol {
            BetaStatus::Converged
        } else {
            log::warn!(
                "discrepancy: residual {r_lo:e} at the smallest β exceeds target {target:e}"
            );
            BetaStatus::LowerBoundary
        };
        return done(lo.exp(), r_lo, 1, status);
    }
    let r_hi = residual_sq(hi.exp());
    if r_hi <= target + tol {
        let status = if (r_hi - target).abs() <= tol {
            BetaStatus::Converged
        } else {
            log::warn!(
                "discrepancy: residual {r_hi:e} at the largest β is below target {target:e}"
            );
            BetaStatus::UpperBoundary
        };
        return done(hi.exp(), r_hi, 2, status);
    }
    let mut iterations = 2;
    loop {
        let mid = (lo + hi) / T::lit(2.0);
        let r = residual_sq(mid.exp());
        iterations += 1;
        if (r - target).abs() <= tol {
            return done(mid.exp(), r, iterations, BetaStatus::Converged);
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::default_epsilon() * hi.abs().max(T::one()) * T::lit(4.0)
            || iterations >= 200
        {
            log::warn!("discrepancy: bracket collapsed at residual {r:e}, target {target:e}");
            return done(mid.exp(), r, iterations, BetaStatus::Stalled);
        }
    }
}

/// Output of any solver.
#[derive(Clone, Debug)]
pub struct InverseSolution<T: Real> {
    /// `θ̂` for basis methods.
    pub coefficients: Option<DVector<T>>,
    pub source: SourceEstimate<T>,
    pub method: Option<Method>,
    pub beta_used: T,
    /// `‖y − K x̂‖`, in the whitened space when whitening is on.
    pub residual_norm: T,
    pub beta_selection: Option<BetaSelection<T>>,
    /// eLORETA fixed-point iterations.
    pub iterations: Option<usize>,
}

impl<T: Real> InverseSolution<T> {
    /// Writes `x̂` to `path` and a manifest to `<path>.meta`.
    pub fn save(&self, path: &Path, format: MatrixFormat) -> Result<()> {
        write_vector(path, self.source.values(), format)?;
        let mut m = Manifest::new();
        m.set("method", self.method.map(Method::name).unwrap_or("MAP"))
            .set("beta", self.beta_used.as_f64())
            .set("residual_norm", self.residual_norm.as_f64())
            .set("n_sources", self.source.len());
        if let Some(c) = &self.coefficients {
            m.set("n_coefficients", c.len());
        }
        if let Some(sel) = &self.beta_selection {
            m.set("beta_status", format!("{:?}", sel.status))
                .set("beta_target_residual_sq", sel.target.as_f64());
        }
        if let Some(it) = self.iterations {
            m.set("iterations", it);
        }
        let mut meta = path.as_os_str().to_owned();
        meta.push(".meta");
        m.write(&PathBuf::from(meta))
    }
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta.is_finite_value() && beta > T::zero() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "β must be positive and finite, got {beta}"
        )))
    }
}

fn check_len<T: Real>(y: &DVector<T>, m: usize) -> Result<()> {
    if y.len() == m {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "measurement has {} entries for {m} sensors",
            y.len()
        )))
    }
}

/// Everything about a MAP problem that does not depend on `y` or β.
#[derive(Clone, Debug)]
pub struct MapProblem<'a, T: Real> {
    basis: &'a BasisSet<T>,
    whitener: Option<DMatrix<T>>,
    /// `K A`, whitened if requested.
    l: DMatrix<T>,
    sqrt_sigma: DVector<T>,
    inv_sigma: DVector<T>,
    /// `L Σ^{1/2}`.
    ls: DMatrix<T>,
    h: DMatrix<T>,
    h_vectors: DMatrix<T>,
    h_values: DVector<T>,
    scale: T,
}

impl<'a, T: Real> MapProblem<'a, T> {
    pub fn new(
        fm: &ForwardModel<T>,
        basis: &'a BasisSet<T>,
        prior: &PriorSpec<T>,
        whiten_with: Option<&DMatrix<T>>,
    ) -> Result<Self> {
        if fm.n_sources() != basis.n_vertices() {
            return Err(Error::Shape(format!(
                "lead field has {} sources, basis has {} rows",
                fm.n_sources(),
                basis.n_vertices()
            )));
        }
        if prior.sigma_diag.len() != basis.count() {
            return Err(Error::Shape(format!(
                "prior has {} entries for {} basis functions",
                prior.sigma_diag.len(),
                basis.count()
            )));
        }
        let whitener = whiten_with.map(inverse_sqrt_spd).transpose()?;
        let mut l = fm.leadfield() * basis.functions();
        if let Some(w) = &whitener {
            l = w * l;
        }
        let sqrt_sigma = prior.sigma_diag.map(|s| s.sqrt());
        let inv_sigma = prior.sigma_diag.map(|s| T::one() / s);
        let mut ls = l.clone();
        for (j, &s) in sqrt_sigma.iter().enumerate() {
            ls.column_mut(j).scale_mut(s);
        }
        let h = ls.tr_mul(&ls);
        let eig = SymmetricEigen::new(h.clone());
        let h_values = eig.eigenvalues.map(|v| v.max(T::zero()));
        let scale =
            l.iter().map(|v| *v * *v).fold(T::zero(), |a, b| a + b) / T::of_usize(basis.count());
        if !(scale > T::zero()) {
            return Err(Error::Degenerate(
                "lead field is blind to every basis function".into(),
            ));
        }
        Ok(Self {
            basis,
            whitener,
            l,
            sqrt_sigma,
            inv_sigma,
            ls,
            h,
            h_vectors: eig.eigenvectors,
            h_values,
            scale,
        })
    }

    /// `trace(LᵀL) / S`, the natural unit for β.
    pub fn scale(&self) -> T {
        self.scale
    }

    /// `K A` (whitened if requested).
    pub fn gain(&self) -> &DMatrix<T> {
        &self.l
    }

    /// Condition number of `H + βI`.
    pub fn condition(&self, beta: T) -> T {
        (self.h_values.max() + beta) / (self.h_values.min() + beta)
    }

    fn prepare(&self, y: &DVector<T>) -> Result<DVector<T>> {
        check_len(y, self.l.nrows())?;
        Ok(match &self.whitener {
            Some(w) => w * y,
            None => y.clone(),
        })
    }

    /// `‖y − L θ̂(β)‖²` from the eigendecomposition, without a factorisation.
    pub fn residual_sq(&self, y: &DVector<T>, beta: T) -> Result<T> {
        let yw = self.prepare(y)?;
        Ok(self.residual_sq_prepared(&yw, &self.h_vectors.tr_mul(&self.ls.tr_mul(&yw)), beta))
    }

    fn residual_sq_prepared(&self, yw: &DVector<T>, c: &DVector<T>, beta: T) -> T {
        let scaled = DVector::from_iterator(
            c.len(),
            c.iter()
                .zip(self.h_values.iter())
                .map(|(&ci, &l)| ci / (l + beta)),
        );
        let phi = &self.h_vectors * scaled;
        (yw - &self.ls * phi).norm_squared()
    }

    /// Picks β so that `‖y − Lθ̂‖² = M · noise_power` (both measured in the
    /// space the problem is solved in).
    pub fn select_beta(&self, y: &DVector<T>, noise_power: T) -> Result<BetaSelection<T>> {
        if !(noise_power > T::zero()) {
            return Err(Error::Numerical(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        let yw = self.prepare(y)?;
        let c = self.h_vectors.tr_mul(&self.ls.tr_mul(&yw));
        let target = T::of_usize(yw.len()) * noise_power;
        Ok(bisect_discrepancy(self.scale, target, |b| {
            self.residual_sq_prepared(&yw, &c, b)
        }))
    }

    pub fn solve(&self, y: &DVector<T>, beta: T) -> Result<InverseSolution<T>> {
        check_beta(beta)?;
        let yw = self.prepare(y)?;
        let cond = self.condition(beta);
        if !(cond.as_f64() <= MAX_CONDITION) {
            return Err(Error::LinAlg(format!(
                "MAP system condition estimate {cond:e} exceeds 1e14"
            )));
        }
        let s = self.basis.count();
        let b = self.ls.tr_mul(&yw);
        let mut system = self.h.clone();
        for i in 0..s {
            system[(i, i)] += beta;
        }
        let chol = Cholesky::new(system.clone())
            .ok_or_else(|| Error::LinAlg("MAP system is not positive definite".into()))?;
        let mut phi = chol.solve(&b);
        let correction = chol.solve(&(&b - &system * &phi));
        phi += correction;
        let theta = phi.component_mul(&self.sqrt_sigma);

        // Normwise backward error of (LᵀL + βΣ⁻¹) θ = Lᵀ y.
        let lty = self.l.tr_mul(&yw);
        let fitted = &self.l * &theta;
        let lhs = self.l.tr_mul(&fitted) + theta.component_mul(&self.inv_sigma) * beta;
        let gram_norm = self.l.norm() * self.l.norm() + beta * self.inv_sigma.max();
        let denom = gram_norm * theta.norm() + lty.norm();
        let backward = if denom > T::zero() {
            (lhs - &lty).norm() / denom
        } else {
            T::zero()
        };
        if !(backward <= residual_tolerance::<T>()) {
            return Err(Error::Numerical(format!(
                "normal-equation residual {backward:e} after refinement"
            )));
        }

        let x = self.basis.functions() * &theta;
        let residual_norm = (&yw - fitted).norm();
        Ok(InverseSolution {
            coefficients: Some(theta),
            source: SourceEstimate::new(x, Provenance::Solver("MAP".into())),
            method: None,
            beta_used: beta,
            residual_norm,
            beta_selection: None,
            iterations: None,
        })
    }
}

/// One-shot `θ̂ = (LᵀL + βΣ⁻¹)⁻¹ Lᵀ y` with `L = K A`.
pub fn solve_map<T: Real>(
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    basis: &BasisSet<T>,
    prior: &PriorSpec<T>,
    beta: T,
) -> Result<InverseSolution<T>> {
    MapProblem::new(fm, basis, prior, None)?.solve(y, beta)
}

/// Discrepancy β for [`solve_map`].
pub fn select_beta_discrepancy<T: Real>(
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    basis: &BasisSet<T>,
    prior: &PriorSpec<T>,
    noise_power: T,
) -> Result<BetaSelection<T>> {
    MapProblem::new(fm, basis, prior, None)?.select_beta(y, noise_power)
}

/// The minimum-norm family for one lead field and noise covariance.
#[derive(Clone, Debug)]
pub struct MneProblem<T: Real> {
    k: DMatrix<T>,
    c_sqrt: Option<DMatrix<T>>,
    c_inv_sqrt: Option<DMatrix<T>>,
    /// Eigenvectors of `K̃K̃ᵀ`.
    u: DMatrix<T>,
    d: DVector<T>,
    /// `K̃ᵀ U`.
    p: DMatrix<T>,
    scale: T,
}

impl<T: Real> MneProblem<T> {
    pub fn new(k: &DMatrix<T>, noise_cov: Option<&DMatrix<T>>) -> Result<Self> {
        let m = k.nrows();
        let (c_sqrt, c_inv_sqrt, kt) = match noise_cov {
            None => (None, None, k.clone()),
            Some(c) => {
                if c.shape() != (m, m) {
                    return Err(Error::Shape(format!(
                        "noise covariance is {}×{} for {m} sensors",
                        c.nrows(),
                        c.ncols()
                    )));
                }
                let inv = inverse_sqrt_spd(c)?;
                let eig = SymmetricEigen::new(c.clone());
                let sqrt = &eig.eigenvectors
                    * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(T::zero()).sqrt()))
                    * eig.eigenvectors.transpose();
                let kt = &inv * k;
                (Some(sqrt), Some(inv), kt)
            }
        };
        let gram = &kt * kt.transpose();
        let eig = SymmetricEigen::new(gram);
        let d = eig.eigenvalues.map(|v| v.max(T::zero()));
        let p = kt.tr_mul(&eig.eigenvectors);
        let scale = d.sum() / T::of_usize(m.max(1));
        if !(scale > T::zero()) {
            return Err(Error::Degenerate("lead field is zero".into()));
        }
        Ok(Self {
            k: k.clone(),
            c_sqrt,
            c_inv_sqrt,
            u: eig.eigenvectors,
            d,
            p,
            scale,
        })
    }

    /// `trace(K̃K̃ᵀ) / M`, the natural unit for β.
    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn n_sensors(&self) -> usize {
        self.k.nrows()
    }

    pub fn condition(&self, beta: T) -> T {
        (self.d.max() + beta) / (self.d.min() + beta)
    }

    /// `Uᵀ C^{-1/2} y`.
    fn project(&self, y: &DVector<T>) -> Result<DVector<T>> {
        check_len(y, self.n_sensors())?;
        Ok(match &self.c_inv_sqrt {
            Some(w) => self.u.tr_mul(&(w * y)),
            None => self.u.tr_mul(y),
        })
    }

    fn coefficients(&self, z: &DVector<T>, beta: T) -> DVector<T> {
        DVector::from_iterator(
            z.len(),
            z.iter()
                .zip(self.d.iter())
                .map(|(&zi, &di)| zi / (di + beta)),
        )
    }

    /// `‖y − K x̂_MNE(β)‖² = ‖β C^{1/2} U (D + β)⁻¹ Uᵀ C^{-1/2} y‖²`.
    fn residual_sq_projected(&self, z: &DVector<T>, beta: T) -> T {
        let c = self.coefficients(z, beta) * beta;
        match &self.c_sqrt {
            Some(s) => (s * (&self.u * c)).norm_squared(),
            None => c.norm_squared(),
        }
    }

    pub fn residual_sq(&self, y: &DVector<T>, beta: T) -> Result<T> {
        Ok(self.residual_sq_projected(&self.project(y)?, beta))
    }

    /// Discrepancy β for the MNE kernel, matched to `M · noise_power`.
    pub fn select_beta(&self, y: &DVector<T>, noise_power: T) -> Result<BetaSelection<T>> {
        if !(noise_power > T::zero()) {
            return Err(Error::Numerical(format!(
                "noise power must be positive, got {noise_power}"
            )));
        }
        let z = self.project(y)?;
        let target = T::of_usize(self.n_sensors()) * noise_power;
        Ok(bisect_discrepancy(self.scale, target, |b| {
            self.residual_sq_projected(&z, b)
        }))
    }

    fn checked(&self, beta: T) -> Result<()> {
        check_beta(beta)?;
        let cond = self.condition(beta);
        if !(cond.as_f64() <= MAX_CONDITION) {
            return Err(Error::LinAlg(format!(
                "MNE system condition estimate {cond:e} exceeds 1e14"
            )));
        }
        Ok(())
    }

    fn finish(&self, y: &DVector<T>, x: DVector<T>, method: Method, beta: T) -> InverseSolution<T> {
        let residual_norm = (y - &self.k * &x).norm();
        InverseSolution {
            coefficients: None,
            source: SourceEstimate::new(x, Provenance::Solver(method.name().into())),
            method: Some(method),
            beta_used: beta,
            residual_norm,
            beta_selection: None,
            iterations: None,
        }
    }

    /// `Kᵀ (KKᵀ + βC)⁻¹ y`.
    pub fn mne_values(&self, y: &DVector<T>, beta: T) -> Result<DVector<T>> {
        self.checked(beta)?;
        Ok(&self.p * self.coefficients(&self.project(y)?, beta))
    }

    pub fn mne(&self, y: &DVector<T>, beta: T) -> Result<InverseSolution<T>> {
        let x = self.mne_values(y, beta)?;
        Ok(self.finish(y, x, Method::Mne, beta))
    }

    /// MNE divided by the noise sensitivity `√(W C Wᵀ)ᵢᵢ`.
    pub fn dspm(&self, y: &DVector<T>, beta: T) -> Result<InverseSolution<T>> {
        let mut x = self.mne_values(y, beta)?;
        for (i, xi) in x.iter_mut().enumerate() {
            let mut var = T::zero();
            for (k, &dk) in self.d.iter().enumerate() {
                let q = self.p[(i, k)] / (dk + beta);
                var += q * q;
            }
            if !(var > T::lit(1e-300)) {
                return Err(Error::Degenerate(format!(
                    "dSPM noise normalisation vanishes at source {i}"
                )));
            }
            *xi /= var.sqrt();
        }
        Ok(self.finish(y, x, Method::Dspm, beta))
    }

    /// MNE divided by `√Rᵢᵢ` with `R = W K` the resolution matrix.
    pub fn sloreta(&self, y: &DVector<T>, beta: T) -> Result<InverseSolution<T>> {
        let mut x = self.mne_values(y, beta)?;
        for (i, xi) in x.iter_mut().enumerate() {
            let mut r = T::zero();
            for (k, &dk) in self.d.iter().enumerate() {
                let pk = self.p[(i, k)];
                r += pk * pk / (dk + beta);
            }
            if !(r > T::zero()) {
                return Err(Error::Degenerate(format!(
                    "sLORETA resolution diagonal vanishes at source {i}"
                )));
            }
            *xi /= r.sqrt();
        }
        Ok(self.finish(y, x, Method::Sloreta, beta))
    }
}

pub fn solve_mne<T: Real>(
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    noise_cov: Option<&DMatrix<T>>,
    beta: T,
) -> Result<InverseSolution<T>> {
    MneProblem::new(fm.leadfield(), noise_cov)?.mne(y, beta)
}

pub fn solve_dspm<T: Real>(
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    noise_cov: Option<&DMatrix<T>>,
    beta: T,
) -> Result<InverseSolution<T>> {
    MneProblem::new(fm.leadfield(), noise_cov)?.dspm(y, beta)
}

pub fn solve_sloreta<T: Real>(
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    noise_cov: Option<&DMatrix<T>>,
    beta: T,
) -> Result<InverseSolution<T>> {
    MneProblem::new(fm.leadfield(), noise_cov)?.sloreta(y, beta)
}

/// Converged eLORETA source weights.
#[derive(Clone, Debug)]
pub struct EloretaWeights<T: Real> {
    pub omega: DVector<T>,
    pub iterations: usize,
    pub last_change: T,
}

/// Fixed point `ωᵢ = √(kᵢᵀ (K Ω⁻¹ Kᵀ + βC)⁻¹ kᵢ)` from `ω = 1`, stopping when
/// the largest relative change drops below `tol`.
pub fn eloreta_weights<T: Real>(
    k: &DMatrix<T>,
    noise_cov: Option<&DMatrix<T>>,
    beta: T,
    tol: T,
    max_iter: usize,
) -> Result<EloretaWeights<T>> {
    check_beta(beta)?;
    if !(tol > T::zero()) {
        return Err(Error::Numerical(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (m, n) = k.shape();
    let c = match noise_cov {
        Some(c) if c.shape() != (m, m) => {
            return Err(Error::Shape(format!(
                "noise covariance is {}×{} for {m} sensors",
                c.nrows(),
                c.ncols()
            )))
        }
        Some(c) => c.clone(),
        None => DMatrix::identity(m, m),
    };
    if let Some(j) = (0..n).find(|&j| k.column(j).iter().all(|v| *v == T::zero())) {
        return Err(Error::Degenerate(format!(
            "source {j} has a zero lead-field column"
        )));
    }
    let mut omega = DVector::from_element(n, T::one());
    let mut change = T::infinity();
    for it in 1..=max_iter {
        let mut scaled = k.clone();
        for (j, &w) in omega.iter().enumerate() {
            scaled.column_mut(j).scale_mut(T::one() / w);
        }
        let g = &scaled * k.transpose() + &c * beta;
        let chol = Cholesky::new(g)
            .ok_or_else(|| Error::LinAlg("eLORETA Gram matrix is not positive definite".into()))?;
        let z = chol.solve(k);
        let next = DVector::from_iterator(
            n,
            (0..n).map(|j| k.column(j).dot(&z.column(j)).max(T::zero()).sqrt()),
        );
        if let Some(j) = next.iter().position(|w| !(*w > T::zero())) {
            return Err(Error::Degenerate(format!("eLORETA weight {j} vanished")));
        }
        change = next
            .iter()
            .zip(omega.iter())
            .map(|(a, b)| ((*a - *b) / *b).abs())
            .fold(T::zero(), |acc, v| acc.max(v));
        omega = next;
        if change < tol {
            return Ok(EloretaWeights {
                omega,
                iterations: it,
                last_change: change,
            });
        }
    }
    Err(Error::Convergence {
        what: "eLORETA",
        iterations: max_iter,
        measure: "relative weight change",
        value: change.as_f64(),
    })
}

/// MNE on `K Ω^{-1/2}`, which yields `x̂ = Ω⁻¹ Kᵀ (K Ω⁻¹ Kᵀ + βC)⁻¹ y` after
/// rescaling by `Ω^{-1/2}`.
#[derive(Clone, Debug)]
pub struct WeightedMne<T: Real> {
    inner: MneProblem<T>,
    inv_sqrt_omega: DVector<T>,
    k: DMatrix<T>,
}

impl<T: Real> WeightedMne<T> {
    pub fn new(k: &DMatrix<T>, noise_cov: Option<&DMatrix<T>>, omega: &DVector<T>) -> Result<Self> {
        let inv_sqrt_omega = omega.map(|w| T::one() / w.sqrt());
        let mut kw = k.clone();
        for (j, &s) in inv_sqrt_omega.iter().enumerate() {
            kw.column_mut(j).scale_mut(s);
        }
        Ok(Self {
            inner: MneProblem::new(&kw, noise_cov)?,
            inv_sqrt_omega,
            k: k.clone(),
        })
    }

    pub fn problem(&self) -> &MneProblem<T> {
        &self.inner
    }

    pub fn solve(&self, y: &DVector<T>, beta: T) -> Result<DVector<T>> {
        Ok(self
            .inner
            .mne_values(y, beta)?
            .component_mul(&self.inv_sqrt_omega))
    }

    fn solution(&self, y: &DVector<T>, beta: T, iterations: usize) -> Result<InverseSolution<T>> {
        let x = self.solve(y, beta)?;
        let residual_norm = (y - &self.k * &x).norm();
        Ok(InverseSolution {
            coefficients: None,
            source: SourceEstimate::new(x, Provenance::Solver(Method::Eloreta.name().into())),
            method: Some(Method::Eloreta),
            beta_used: beta,
            residual_norm,
            beta_selection: None,
            iterations: Some(iterations),
        })
    }
}

pub fn solve_eloreta<T: Real>(
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    noise_cov: Option<&DMatrix<T>>,
    beta: T,
    tol: T,
    max_iter: usize,
) -> Result<InverseSolution<T>> {
    let w = eloreta_weights(fm.leadfield(), noise_cov, beta, tol, max_iter)?;
    WeightedMne::new(fm.leadfield(), noise_cov, &w.omega)?.solution(y, beta, w.iterations)
}

fn resolve_beta<T: Real>(
    rule: BetaRule<T>,
    scale: T,
    noise_power: Option<T>,
    select: impl FnOnce(T) -> Result<BetaSelection<T>>,
) -> Result<(T, Option<BetaSelection<T>>)> {
    match rule {
        BetaRule::Fixed(b) => Ok((b, None)),
        BetaRule::Relative(r) => Ok((r * scale, None)),
        BetaRule::Discrepancy => {
            let p = noise_power.ok_or_else(|| {
                Error::Schema("discrepancy β needs the noise power of the measurement".into())
            })?;
            let sel = select(p)?;
            Ok((sel.beta, Some(sel)))
        }
    }
}

/// Runs the configured method end to end.
///
/// For MAP methods `basis` must be of the matching family. With
/// [`BetaRule::Discrepancy`], dSPM and sLORETA reuse the MNE discrepancy β
/// (they are normalisations of the same kernel), and eLORETA runs its
/// weight iteration at the MNE β, searches β with those weights frozen, and
/// then iterates the weights again at the chosen β.
pub fn solve<T: Real>(
    config: &SolverConfig<T>,
    y: &DVector<T>,
    fm: &ForwardModel<T>,
    basis: Option<&BasisSet<T>>,
    noise_power: Option<T>,
) -> Result<InverseSolution<T>> {
    let cov = config.noise_cov.as_ref();
    let method = config.method;
    let mut sol = if let Some(family) = method.basis_family() {
        let basis =
            basis.ok_or_else(|| Error::Schema(format!("{method} needs a {family} basis")))?;
        if basis.family() != family {
            return Err(Error::Schema(format!(
                "{method} given a {} basis",
                basis.family()
            )));
        }
        let prior = build_prior(basis, config.epsilon_frac)?;
        let whitener = if config.whiten {
            Some(
                cov.cloned()
                    .unwrap_or_else(|| DMatrix::identity(fm.n_sensors(), fm.n_sensors())),
            )
        } else {
            None
        };
        let problem = MapProblem::new(fm, basis, &prior, whitener.as_ref())?;
        let (beta, sel) = resolve_beta(config.beta, problem.scale(), noise_power, |p| {
            problem.select_beta(y, p)
        })?;
        let mut s = problem.solve(y, beta)?;
        s.beta_selection = sel;
        s
    } else if method == Method::Eloreta {
        let mne = MneProblem::new(fm.leadfield(), cov)?;
        let (beta, sel) = match config.beta {
            BetaRule::Discrepancy => {
                let p = noise_power.ok_or_else(|| {
                    Error::Schema("discrepancy β needs the noise power of the measurement".into())
                })?;
                let start = mne.select_beta(y, p)?.beta;
                let w = eloreta_weights(
                    fm.leadfield(),
                    cov,
                    start,
                    config.eloreta_tol,
                    config.eloreta_max_iter,
                )?;
                let frozen = WeightedMne::new(fm.leadfield(), cov, &w.omega)?;
                let sel = frozen.problem().select_beta(y, p)?;
                (sel.beta, Some(sel))
            }
            rule => resolve_beta(rule, mne.scale(), noise_power, |_| unreachable!())?,
        };
        let mut s = solve_eloreta(
            y,
            fm,
            cov,
            beta,
            config.eloreta_tol,
            config.eloreta_max_iter,
        )?;
        s.beta_selection = sel;
        s
    } else {
        let mne = MneProblem::new(fm.leadfield(), cov)?;
        let (beta, sel) = resolve_beta(config.beta, mne.scale(), noise_power, |p| {
            mne.select_beta(y, p)
        })?;
        let mut s = match method {
            Method::Mne => mne.mne(y, beta)?,
            Method::Dspm => mne.dspm(y, beta)?,
            _ => mne.sloreta(y, beta)?,
        };
        s.beta_selection = sel;
        s
    };
    sol.method = Some(method);
    sol.source = SourceEstimate::new(
        sol.source.into_values(),
        Provenance::Solver(method.name().into()),
    );
    Ok(sol)
}
