//! Pathwise mild solutions of linear equations `du = (−A(t)u + f(t))dt + σ(t)dW`.
//!
//! With `J(t) = ∫₀ᵗ σ dW` the solution is written without stochastic
//! convolutions:
//!
//! ```text
//! u(t) = U(t,0)u₀ + U(t,0)J(t) + ∫₀ᵗ U(t,s) f(s) ds + ∫₀ᵗ ∂_s U(t,s) (J(t) − J(s)) ds
//! ```
//!
//! On the grid, `U` is the product of frozen step propagators, the drift
//! integral uses `h φ₁(−hA_i)` and the last integral is evaluated exactly per
//! step for the piecewise-constant family, giving
//! `Σ_i (U(j,i+1) − U(j,i))(J_j − J_i)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{EvolutionFamily, FamilyOptions, GeneratorPath, LeftFrozen};
use crate::solver::problem::Exponents;
use crate::solver::trajectory::Trajectory;
use crate::spectral::Field;
use crate::stochastic::{NoiseOperator, WienerPath};

/// How the discrete formula is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MildRoute {
    /// Telescoped form `u_{j+1} = P_j u_j + hφ₁_j f_j + σ_j ΔW_j`, linear in `K`.
    #[default]
    Recursive,
    /// The four terms summed directly, quadratic in `K`.
    FourTerm,
}

/// The four terms of the formula at one grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct MildTerms {
    /// `U(t,0)u₀`.
    pub free: DVector<f64>,
    /// `U(t,0)J(t)`.
    pub transported_noise: DVector<f64>,
    /// `∫ U(t,s) f(s) ds`.
    pub drift: DVector<f64>,
    /// `∫ ∂_s U(t,s)(J(t) − J(s)) ds`.
    pub correction: DVector<f64>,
}

impl MildTerms {
    pub fn sum(&self) -> DVector<f64> {
        &self.free + &self.transported_noise + &self.drift + &self.correction
    }
}

fn check_inputs(fam: &EvolutionFamily, u0: &DVector<f64>, f: &[DVector<f64>], g_len: usize) -> Result<()> {
    let k = fam.grid().steps();
    if f.len() != k || g_len != k {
        return Err(Error::GridMismatch(format!(
            "{} drift values and {} noise increments for {k} steps",
            f.len(),
            g_len
        )));
    }
    if u0.len() != fam.dim() {
        return Err(Error::GridMismatch("initial state does not match the family".into()));
    }
    if (0..k).any(|i| fam.hphi1(i).is_none()) {
        return Err(Error::InvalidArgument("family must be built with φ₁ factors".into()));
    }
    Ok(())
}

/// `hφ₁_i f_i`, or zero when the drift vanishes.
fn drift_step(fam: &EvolutionFamily, i: usize, f: &DVector<f64>) -> DVector<f64> {
    if f.iter().all(|x| *x == 0.0) {
        DVector::zeros(f.len())
    } else {
        fam.hphi1(i).expect("checked") * f
    }
}

/// States `u_0, …, u_K` for given drift values `f_i` and noise increments
/// `g_i = σ_i ΔW_i`; `noise(i, u_i)` supplies `g_i` once `u_i` is known.
pub fn mild_states(
    fam: &EvolutionFamily,
    u0: &DVector<f64>,
    f: &[DVector<f64>],
    mut noise: impl FnMut(usize, &DVector<f64>) -> Result<DVector<f64>>,
    route: MildRoute,
) -> Result<Vec<DVector<f64>>> {
    check_inputs(fam, u0, f, f.len())?;
    let k = fam.grid().steps();
    let mut states = Vec::with_capacity(k + 1);
    states.push(u0.clone());
    match route {
        MildRoute::Recursive => {
            for i in 0..k {
                let g = noise(i, &states[i])?;
                let next = fam.propagator(i) * &states[i] + drift_step(fam, i, &f[i]) + g;
                states.push(next);
            }
        }
        MildRoute::FourTerm => {
            // J_0 = 0, J_{i+1} = J_i + g_i.
            let mut j_vals = vec![DVector::zeros(u0.len())];
            let drifts: Vec<DVector<f64>> = (0..k).map(|i| drift_step(fam, i, &f[i])).collect();
            for j in 1..=k {
                let g = noise(j - 1, &states[j - 1])?;
                let next = &j_vals[j - 1] + g;
                j_vals.push(next);
                states.push(four_term_sum(fam, u0, &drifts, &j_vals, j));
            }
        }
    }
    if states.iter().any(|s| s.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("pathwise mild states"));
    }
    Ok(states)
}

/// `u_j` in one pass of `r_{i+1} = P_i (r_i + c_i) + a_i`, which yields
/// `Σ U(j,i) c_i + Σ U(j,i+1) a_i`. Here `a_i = hφ₁_i f_i + (J_j − J_i)`,
/// `c_i = −(J_j − J_i)`, and `c_0` also carries `u₀ + J_j`.
fn four_term_sum(
    fam: &EvolutionFamily,
    u0: &DVector<f64>,
    drifts: &[DVector<f64>],
    j_vals: &[DVector<f64>],
    j: usize,
) -> DVector<f64> {
    let jj = &j_vals[j];
    let mut r = DVector::zeros(u0.len());
    for i in 0..j {
        let gap = jj - &j_vals[i];
        let c = if i == 0 { u0 + jj - &gap } else { -&gap };
        r = fam.propagator(i) * (r + c) + &drifts[i] + gap;
    }
    r
}

/// The four terms separately at index `j`, each by its own pass.
pub fn mild_terms(
    fam: &EvolutionFamily,
    u0: &DVector<f64>,
    f: &[DVector<f64>],
    g: &[DVector<f64>],
    j: usize,
) -> Result<MildTerms> {
    check_inputs(fam, u0, f, g.len())?;
    if j > fam.grid().steps() {
        return Err(Error::InvalidArgument(format!("index {j} beyond the grid")));
    }
    let dim = u0.len();
    let mut j_vals = vec![DVector::zeros(dim)];
    for gi in g {
        let next = j_vals.last().expect("nonempty") + gi;
        j_vals.push(next);
    }
    let jj = j_vals[j].clone();
    let free = fam.apply_idx(j, 0, u0)?;
    let transported_noise = fam.apply_idx(j, 0, &jj)?;
    let mut drift = DVector::zeros(dim);
    // Σ U(j,i+1) a_i by r ← P_i r + a_i.
    for i in 0..j {
        drift = fam.propagator(i) * drift + drift_step(fam, i, &f[i]);
    }
    let mut plus = DVector::zeros(dim);
    let mut minus = DVector::zeros(dim);
    for i in 0..j {
        let gap = &jj - &j_vals[i];
        plus = fam.propagator(i) * plus + &gap;
        minus = fam.propagator(i) * (minus + gap);
    }
    Ok(MildTerms {
        free,
        transported_noise,
        drift,
        correction: plus - minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    pub route: MildRoute,
    /// Audit each frozen generator against this sector angle.
    pub audit_phi: Option<f64>,
    pub exponents: Exponents,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            route: MildRoute::Recursive,
            audit_phi: None,
            exponents: Exponents::default(),
        }
    }
}

/// Pathwise mild solution of the linear problem driven by `w`.
///
/// `σ(t_i, ·)` is evaluated at the already computed state `u_i`, so a
/// state-independent `σ` gives the linear equation proper.
pub fn linear_pathwise_mild(
    path: &GeneratorPath,
    f: &(dyn Fn(f64) -> Result<DVector<f64>> + Sync),
    sigma: &dyn NoiseOperator,
    w: &WienerPath,
    u0: &Field,
    opts: &LinearOptions,
) -> Result<Trajectory> {
    let grid = *w.grid();
    if sigma.modes() != w.modes() {
        return Err(Error::InvalidArgument(format!(
            "noise has {} modes, path has {}",
            sigma.modes(),
            w.modes()
        )));
    }
    let fam = EvolutionFamily::build(
        path,
        grid,
        &LeftFrozen,
        FamilyOptions {
            audit_phi: opts.audit_phi,
            with_phi1: true,
            checkpoints: false,
        },
    )?;
    if fam.dim() != u0.coeffs().len() || sigma.dim() != fam.dim() {
        return Err(Error::GridMismatch("operator, noise and initial field dimensions differ".into()));
    }
    let fs = (0..grid.steps())
        .map(|i| f(grid.time(i)))
        .collect::<Result<Vec<_>>>()?;
    let zero_noise = sigma.is_zero();
    let states = mild_states(
        &fam,
        u0.coeffs(),
        &fs,
        |i, u| {
            Ok(if zero_noise {
                DVector::zeros(u.len())
            } else {
                sigma.apply(grid.time(i), u, w.step(i))
            })
        },
        opts.route,
    )?;
    Trajectory::from_states(
        grid,
        u0.basis().clone(),
        u0.components(),
        opts.exponents.beta,
        opts.exponents.alpha,
        states,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::operator::OperatorSnapshot;
    use crate::spectral::{build_basis, BoundaryCondition, Domain};
    use crate::stochastic::{sample_wiener, AdditiveNoise};

    #[test]
    fn routes_agree_with_time_dependent_operator() {
        let b = build_basis(Domain::default(), BoundaryCondition::Dirichlet, 6).unwrap();
        let grid = TimeGrid::new(0.0, 2e-3, 200).unwrap();
        let bb = b.clone();
        let path = move |t: f64| Ok(OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 1.0, 1.0 + t));
        let amps: Vec<f64> = (0..6).map(|k| 0.3 / (1.0 + k as f64)).collect();
        let noise = AdditiveNoise::diagonal(6, &amps).unwrap();
        let w = sample_wiener(6, grid, 3, 0).unwrap();
        let u0 = Field::mode(b.clone(), 1, 0, 0);
        let f = |t: f64| Ok(DVector::from_fn(6, |k, _| (t + 1.0) / (k as f64 + 1.0)));
        let rec = linear_pathwise_mild(&path, &f, &noise, &w, &u0, &LinearOptions::default()).unwrap();
        let four = linear_pathwise_mild(
            &path,
            &f,
            &noise,
            &w,
            &u0,
            &LinearOptions {
                route: MildRoute::FourTerm,
                ..LinearOptions::default()
            },
        )
        .unwrap();
        let gap = rec.sup_distance(&four);
        assert!(gap < 1e-10, "routes differ by {gap}");
    }

    #[test]
    fn separate_terms_sum_to_state() {
        let b = build_basis(Domain::default(), BoundaryCondition::Dirichlet, 4).unwrap();
        let grid = TimeGrid::new(0.0, 1e-2, 30).unwrap();
        let gens: Vec<_> = (0..30)
            .map(|i| OperatorSnapshot::shifted_laplacian(b.clone(), 1, 1.0, 1.0 + 0.1 * i as f64))
            .collect();
        let fam = EvolutionFamily::from_generators(
            grid,
            &gens,
            FamilyOptions {
                with_phi1: true,
                ..FamilyOptions::default()
            },
        )
        .unwrap();
        let u0 = DVector::from_vec(vec![1.0, -0.5, 0.25, 0.1]);
        let f: Vec<_> = (0..30).map(|i| DVector::from_element(4, 0.01 * i as f64)).collect();
        let g: Vec<_> = (0..30).map(|i| DVector::from_element(4, ((i * 7) % 5) as f64 * 0.01 - 0.02)).collect();
        let states = mild_states(&fam, &u0, &f, |i, _| Ok(g[i].clone()), MildRoute::Recursive).unwrap();
        for j in [0, 1, 17, 30] {
            let t = mild_terms(&fam, &u0, &f, &g, j).unwrap();
            assert!((t.sum() - &states[j]).norm() < 1e-13);
        }
    }

    #[test]
    fn deterministic_free_evolution() {
        // σ = 0, f = 0: u(t) = e^{−t(1+λ)}u₀ mode by mode.
        let b = build_basis(Domain::default(), BoundaryCondition::Dirichlet, 5).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, 50).unwrap();
        let bb = b.clone();
        let path = move |_t: f64| Ok(OperatorSnapshot::shifted_laplacian(bb.clone(), 1, 1.0, 1.0));
        let u0 = Field::from_coeffs(b.clone(), 1, DVector::from_element(5, 1.0)).unwrap();
        let zero = |_t: f64| Ok(DVector::zeros(5));
        let w = WienerPath::zero(grid, 1);
        let noise = crate::stochastic::ZeroNoise { dim: 5, modes: 1 };
        let tr = linear_pathwise_mild(&path, &zero, &noise, &w, &u0, &LinearOptions::default()).unwrap();
        for k in 0..5 {
            let lam = 1.0 + b.eigenvalues()[k];
            assert!((tr.state(50)[k] - (-0.5 * lam).exp()).abs() < 1e-12);
        }
    }
}
