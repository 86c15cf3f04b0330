//! Staircase laminates truncated at a finite depth, and tail checks.

use serde::{Deserialize, Serialize};

use crate::error::StaircaseError;
use crate::mat::Mat2;
use crate::measure::{
    DiscreteMeasure, SplitStep, SplitTree, SplitTreeData, WeightedAtom, MASS_TOL, MERGE_TOL,
};

/// Stage barycenter tolerance.
pub const STAGE_BARYCENTER_TOL: f64 = 1e-9;
/// Per-stage barycenter drift allowance for the assembled measure.
pub const DRIFT_PER_STAGE: f64 = 1e-10;
/// Default number of points in tail grids.
pub const TAIL_GRID_POINTS: usize = 64;

/// `ν^N = Σ β_{n−1}(1−γ_n)μ_n + β_N δ_{X_N}` together with its ingredients.
#[derive(Clone, Debug, PartialEq)]
pub struct StaircaseTruncation {
    /// Soaring sequence `X_0..X_N`.
    pub soar: Vec<Mat2>,
    /// Stage measures `μ_1..μ_N`.
    pub mu: Vec<DiscreteMeasure>,
    /// `γ_1..γ_N`.
    pub gamma: Vec<f64>,
    /// `β_0..β_N` with `β_0 = 1`.
    pub beta: Vec<f64>,
    pub nu: DiscreteMeasure,
    /// One tree per stage, rooted at `X_{n−1}`; empty when the stages were
    /// given only as measures.
    pub trees: Vec<SplitTree>,
}

impl StaircaseTruncation {
    /// Assemble the truncation after validating every stage.
    pub fn assemble(
        soar: Vec<Mat2>,
        mu: Vec<DiscreteMeasure>,
        gamma: Vec<f64>,
    ) -> Result<Self, StaircaseError> {
        let n = mu.len();
        if soar.len() != n + 1 || gamma.len() != n {
            return Err(StaircaseError::Shape(format!(
                "{} soaring matrices, {} stage measures, {} gammas",
                soar.len(),
                n,
                gamma.len()
            )));
        }
        for stage in 1..=n {
            let g = gamma[stage - 1];
            if !(g > 0.0 && g < 1.0) {
                return Err(StaircaseError::GammaOutOfRange { stage, gamma: g });
            }
            if soar[stage].frobenius_norm() <= soar[stage - 1].frobenius_norm() {
                return Err(StaircaseError::NonIncreasingSoar { stage });
            }
        }
        let mut soar_sorted: Vec<(f64, usize)> =
            soar.iter().enumerate().map(|(i, x)| (x.a11, i)).collect();
        soar_sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for stage in 1..=n {
            let m = &mu[stage - 1];
            let charges_soar = m.atoms().iter().any(|a| {
                let lo = soar_sorted.partition_point(|s| s.0 < a.matrix.a11 - MERGE_TOL);
                soar_sorted[lo..]
                    .iter()
                    .take_while(|s| s.0 <= a.matrix.a11 + MERGE_TOL)
                    .any(|s| soar[s.1].distance(&a.matrix) <= MERGE_TOL)
            });
            if charges_soar {
                return Err(StaircaseError::SoarInSupport { stage });
            }
            let g = gamma[stage - 1];
            let omega_bar = m.barycenter() * (1.0 - g) + soar[stage] * g;
            let err = omega_bar.distance(&soar[stage - 1]);
            if err > STAGE_BARYCENTER_TOL {
                return Err(StaircaseError::BarycenterMismatch { stage, error: err });
            }
        }
        let mut beta = Vec::with_capacity(n + 1);
        beta.push(1.0);
        for g in &gamma {
            let last = *beta.last().expect("beta starts non-empty");
            beta.push(last * g);
        }
        let mut atoms = Vec::with_capacity(mu.iter().map(|m| m.len()).sum::<usize>() + 1);
        for (k, m) in mu.iter().enumerate() {
            let w = beta[k] * (1.0 - gamma[k]);
            atoms.extend(
                m.atoms()
                    .iter()
                    .map(|a| WeightedAtom::new(w * a.weight, a.matrix)),
            );
        }
        atoms.push(WeightedAtom::new(beta[n], soar[n]));
        let nu = DiscreteMeasure::from_atoms_unnormalized(atoms)?;
        let mass = nu.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(crate::error::MeasureError::MassNotOne(mass).into());
        }
        let drift = nu.barycenter().distance(&soar[0]);
        if drift > (n.max(1) as f64) * DRIFT_PER_STAGE {
            return Err(StaircaseError::BarycenterMismatch {
                stage: n,
                error: drift,
            });
        }
        Ok(StaircaseTruncation {
            soar,
            mu,
            gamma,
            beta,
            nu,
            trees: Vec::new(),
        })
    }

    /// Attach per-stage split trees; tree `n` must start at `X_{n−1}` and
    /// produce `ω_n = (1−γ_n)μ_n + γ_n δ_{X_n}`.
    pub fn with_trees(mut self, trees: Vec<SplitTree>) -> Result<Self, StaircaseError> {
        if trees.len() != self.depth() {
            return Err(StaircaseError::Shape(format!(
                "{} trees for {} stages",
                trees.len(),
                self.depth()
            )));
        }
        for (k, t) in trees.iter().enumerate() {
            let stage = k + 1;
            if t.root().distance(&self.soar[k]) > MERGE_TOL {
                return Err(StaircaseError::Shape(format!(
                    "tree {stage} is not rooted at X_{k}"
                )));
            }
            let g = self.gamma[k];
            let leaves = t.leaves();
            let soar_w = leaves.weight_of(&self.soar[stage]);
            if (soar_w - g).abs() > 1e-12 {
                return Err(StaircaseError::Shape(format!(
                    "tree {stage} gives X_{stage} weight {soar_w}, expected {g}"
                )));
            }
            for a in self.mu[k].atoms() {
                let w = leaves.weight_of(&a.matrix);
                if (w - (1.0 - g) * a.weight).abs() > 1e-12 {
                    return Err(StaircaseError::Shape(format!(
                        "tree {stage} disagrees with the stage measure"
                    )));
                }
            }
            if leaves.len() != self.mu[k].len() + 1 {
                return Err(StaircaseError::Shape(format!(
                    "tree {stage} has extra leaves"
                )));
            }
        }
        self.trees = trees;
        Ok(self)
    }

    /// Number of stages `N`.
    pub fn depth(&self) -> usize {
        self.mu.len()
    }

    pub fn x0(&self) -> Mat2 {
        self.soar[0]
    }

    pub fn x_last(&self) -> Mat2 {
        self.soar[self.depth()]
    }

    pub fn beta_last(&self) -> f64 {
        self.beta[self.depth()]
    }

    /// All stage trees chained into one tree rooted at `X_0` whose leaves are
    /// `ν^N`.
    pub fn combined_tree(&self) -> Result<SplitTree, StaircaseError> {
        let steps: Vec<SplitStep> = self
            .trees
            .iter()
            .flat_map(|t| t.steps().iter().copied())
            .collect();
        Ok(SplitTree::replay(self.x0(), steps)?)
    }

    pub fn tail_profile(&self) -> TailProfile {
        TailProfile::new(&self.nu)
    }

    /// Upper tail check `ν^N(|X| > t) ≤ M^p(1+|X_0|^p)t^{−p}` on a log grid
    /// over `[1, 2|X_N|]`.
    pub fn check_upper_tail(&self, p: f64, big_m: f64) -> (bool, TailReport) {
        upper_tail_check(
            &self.tail_profile(),
            self.x0().frobenius_norm(),
            self.x_last().frobenius_norm(),
            p,
            big_m,
        )
    }

    /// Lower tail check `ν^N(|X| > t) ≥ m^p t^{−p}` on a log grid over
    /// `(1, |X_N|/2]`.
    pub fn check_lower_tail(&self, p: f64, small_m: f64) -> (bool, TailReport) {
        lower_tail_check(
            &self.tail_profile(),
            self.x0().frobenius_norm(),
            self.x_last().frobenius_norm(),
            p,
            small_m,
        )
    }

    /// Least-squares slope of `log ν^N(|X|>t)` against `log t` on
    /// `[t_lo, t_hi]`.
    pub fn fit_tail_exponent(&self, t_lo: f64, t_hi: f64) -> Result<f64, StaircaseError> {
        let xn = self.x_last().frobenius_norm();
        if !(1.0 < t_lo && t_lo < t_hi && t_hi < xn) {
            return Err(StaircaseError::Shape(format!(
                "fit range [{t_lo}, {t_hi}] not inside (1, {xn})"
            )));
        }
        Ok(self.tail_profile().fit(t_lo, t_hi, TAIL_GRID_POINTS)?.slope)
    }

    pub fn to_document(&self) -> Result<StaircaseDocument, StaircaseError> {
        Ok(StaircaseDocument {
            atoms: self.nu.atoms().to_vec(),
            tree: self.combined_tree()?.to_data(),
            soar: self.soar.clone(),
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
        })
    }
}

/// The `staircase.json` payload: `measure.json` plus the staircase scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaircaseDocument {
    pub atoms: Vec<WeightedAtom>,
    pub tree: SplitTreeData,
    pub soar: Vec<Mat2>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Tail checker output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailReport {
    pub p: f64,
    /// Smallest `M` with the upper bound holding for every `t ∈ [1, 2|X_N|]`.
    pub upper_fit: f64,
    /// Largest `m` with the lower bound holding for every `t ∈ (1, |X_N|/2]`.
    pub lower_fit: f64,
    pub slope: f64,
    pub t_grid: Vec<f64>,
    pub masses: Vec<f64>,
    pub bound_upper: Vec<f64>,
    pub bound_lower: Vec<f64>,
    /// First grid point where the check failed.
    pub witness: Option<f64>,
}

impl TailReport {
    /// CSV with columns `t,mass,bound_upper,bound_lower`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mass,bound_upper,bound_lower\n");
        for i in 0..self.t_grid.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.t_grid[i], self.masses[i], self.bound_upper[i], self.bound_lower[i]
            ));
        }
        s
    }
}

/// [`StaircaseTruncation::check_upper_tail`] for a measure given by its tail
/// profile, with `x0 = |X_0|` and `xn = |X_N|`.
pub fn upper_tail_check(
    prof: &TailProfile,
    x0: f64,
    xn: f64,
    p: f64,
    big_m: f64,
) -> (bool, TailReport) {
    let x0p = 1.0 + x0.powf(p);
    let grid = log_grid(1.0, 2.0 * xn.max(1.0), TAIL_GRID_POINTS);
    let mut report = base_report(prof, x0, xn, p, grid);
    let mut witness = None;
    for (i, &t) in report.t_grid.iter().enumerate() {
        let bound = big_m.powf(p) * x0p * t.powf(-p);
        report.bound_upper[i] = bound;
        if report.masses[i] > bound * (1.0 + 1e-12) && witness.is_none() {
            witness = Some(t);
        }
    }
    report.witness = witness;
    (witness.is_none(), report)
}

/// [`StaircaseTruncation::check_lower_tail`] for a measure given by its tail
/// profile.
pub fn lower_tail_check(
    prof: &TailProfile,
    x0: f64,
    xn: f64,
    p: f64,
    small_m: f64,
) -> (bool, TailReport) {
    let hi = 0.5 * xn;
    let grid = if hi > 1.0 {
        log_grid(1.0, hi, TAIL_GRID_POINTS + 1).split_off(1)
    } else {
        Vec::new()
    };
    let mut report = base_report(prof, x0, xn, p, grid);
    let mut witness = None;
    for (i, &t) in report.t_grid.iter().enumerate() {
        let bound = small_m.powf(p) * t.powf(-p);
        report.bound_lower[i] = bound;
        if report.masses[i] < bound * (1.0 - 1e-12) && witness.is_none() {
            witness = Some(t);
        }
    }
    report.witness = witness;
    (witness.is_none(), report)
}

fn base_report(prof: &TailProfile, x0: f64, xn: f64, p: f64, t_grid: Vec<f64>) -> TailReport {
    let masses: Vec<f64> = t_grid.iter().map(|&t| prof.tail(t)).collect();
    let n = t_grid.len();
    let upper_fit = (prof.sup_scaled(p, 1.0, 2.0 * xn) / (1.0 + x0.powf(p))).powf(1.0 / p);
    let lower_fit = prof.inf_scaled(p, 1.0, 0.5 * xn).powf(1.0 / p);
    let slope = prof
        .fit(
            t_grid.first().copied().unwrap_or(1.0),
            t_grid.last().copied().unwrap_or(1.0),
            n,
        )
        .map(|f| f.slope)
        .unwrap_or(f64::NAN);
    TailReport {
        p,
        upper_fit,
        lower_fit,
        slope,
        t_grid,
        masses,
        bound_upper: vec![f64::NAN; n],
        bound_lower: vec![f64::NAN; n],
        witness: None,
    }
}

/// Least-squares line through `(log t, log tail)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest vertical distance from a sample to the line, in log units.
    pub max_deviation: f64,
}

/// `n` log-uniform points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Least-squares fit of `y = slope·x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> TailFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_deviation = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    TailFit {
        slope,
        intercept,
        max_deviation,
    }
}

/// Sorted atom norms with suffix sums, for fast `μ(|X| > t)`.
#[derive(Clone, Debug)]
pub struct TailProfile {
    norms: Vec<f64>,
    suffix: Vec<f64>,
}

impl TailProfile {
    pub fn new(mu: &DiscreteMeasure) -> Self {
        Self::from_pairs(
            mu.atoms()
                .iter()
                .map(|a| (a.matrix.frobenius_norm(), a.weight))
                .collect(),
        )
    }

    /// Profile of an arbitrary list of `(norm, mass)` pairs.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let norms: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut suffix = vec![0.0; pairs.len() + 1];
        for i in (0..pairs.len()).rev() {
            suffix[i] = suffix[i + 1] + pairs[i].1;
        }
        TailProfile { norms, suffix }
    }

    /// Mass with norm strictly above `t`.
    pub fn tail(&self, t: f64) -> f64 {
        self.suffix[self.norms.partition_point(|&n| n <= t)]
    }

    /// Mass with norm at least `t`.
    pub fn tail_closed(&self, t: f64) -> f64 {
        self.suffix[self.norms.partition_point(|&n| n < t)]
    }

    /// `sup_{t ∈ [lo, hi]} tail(t)·t^p`, attained just below an atom norm or
    /// at an endpoint.
    pub fn sup_scaled(&self, p: f64, lo: f64, hi: f64) -> f64 {
        let mut best = self.tail(lo) * lo.powf(p);
        best = best.max(self.tail(hi) * hi.powf(p));
        for &r in &self.norms {
            if r > lo && r <= hi {
                best = best.max(self.tail_closed(r) * r.powf(p));
            }
        }
        best
    }

    /// `inf_{t ∈ (lo, hi]} tail(t)·t^p`, attained at `lo⁺` or at an atom norm.
    pub fn inf_scaled(&self, p: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return f64::INFINITY;
        }
        let mut best = self.tail(lo) * lo.powf(p);
        for &r in &self.norms {
            if r > lo && r <= hi {
                best = best.min(self.tail(r) * r.powf(p));
            }
        }
        best
    }

    pub fn fit(&self, t_lo: f64, t_hi: f64, n: usize) -> Result<TailFit, StaircaseError> {
        let grid = log_grid(t_lo, t_hi, n.max(20));
        let mut xs = Vec::with_capacity(grid.len());
        let mut ys = Vec::with_capacity(grid.len());
        for &t in &grid {
            let m = self.tail(t);
            if m <= 0.0 {
                return Err(StaircaseError::DegenerateRange { t });
            }
            xs.push(t.ln());
            ys.push(m.ln());
        }
        Ok(fit_line(&xs, &ys))
    }
}
