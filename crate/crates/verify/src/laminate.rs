//! Checks on a stored staircase laminate: the tree reproduces the atoms,
//! mass and barycenter are conserved, the support lies in `K_{Λ,Γ}`, every
//! construction step stays in `U`, and the tail obeys both power bounds.

use laminate_core::afs::{exponent, K_TOL};
use laminate_core::measure::{MASS_TOL, MERGE_TOL};
use laminate_core::staircase::{
    lower_tail_check, upper_tail_check, StaircaseDocument, TailProfile, DRIFT_PER_STAGE,
    TAIL_GRID_POINTS,
};
use laminate_core::{AfsParams, DiscreteMeasure, Mat2, SplitTree, TailReport};
use serde::Serialize;

use crate::VerifyError;

/// Atom weights read back from a file must match the replayed tree to this
/// absolute tolerance.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LaminateReport {
    pub atoms: usize,
    pub stages: usize,
    /// The split tree replays to the stored atoms.
    pub replay_ok: bool,
    pub mass_defect: f64,
    pub mass_ok: bool,
    pub barycenter_drift: f64,
    pub drift_tol: f64,
    pub barycenter_ok: bool,
    /// Atoms other than the soaring atom that fail membership in `K_{Λ,Γ}`.
    pub outside_k: Vec<Mat2>,
    pub construction_steps: usize,
    /// Indices of construction steps whose parent leaves `U`.
    pub steps_outside_u: Vec<usize>,
    pub p: f64,
    /// Least-squares slope over `[50, |X_N|/4]`, when that range is nonempty.
    pub slope: Option<f64>,
    pub upper: TailReport,
    pub lower: TailReport,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub pass: bool,
}

fn same_atoms(a: &DiscreteMeasure, b: &DiscreteMeasure) -> bool {
    a.len() == b.len()
        && a.atoms().iter().zip(b.atoms()).all(|(x, y)| {
            x.matrix.distance(&y.matrix) <= MERGE_TOL && (x.weight - y.weight).abs() <= WEIGHT_TOL
        })
}

pub fn verify_staircase(
    doc: &StaircaseDocument,
    params: &AfsParams,
) -> Result<LaminateReport, VerifyError> {
    let (x0, xn) = match (doc.soar.first(), doc.soar.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(VerifyError::Invalid("empty soaring sequence".into())),
    };
    let stages = doc.soar.len() - 1;
    let nu = DiscreteMeasure::from_atoms_unnormalized(doc.atoms.clone())?;
    let tree = SplitTree::try_from(doc.tree.clone())?;
    let replay_ok = tree.root() == x0 && same_atoms(tree.leaves(), &nu);

    let mass_defect = (nu.total_mass() - 1.0).abs();
    let barycenter_drift = nu.barycenter().distance(&x0);
    let drift_tol = stages.max(1) as f64 * DRIFT_PER_STAGE;

    let outside_k: Vec<Mat2> = nu
        .atoms()
        .iter()
        .map(|a| a.matrix)
        .filter(|m| m.distance(&xn) > MERGE_TOL && !params.in_k(m, K_TOL))
        .collect();
    let construction = tree.validate_construction_steps(|m| params.in_u(m))?;

    let p = exponent(params.lambda);
    let prof = TailProfile::new(&nu);
    let (x0n, xnn) = (x0.frobenius_norm(), xn.frobenius_norm());
    // Fit the constants first, then check with them; the relative slack
    // absorbs the rounding of the `1/p` powers.
    let (_, probe) = upper_tail_check(&prof, x0n, xnn, p, 1.0);
    let (upper_ok, upper) = upper_tail_check(&prof, x0n, xnn, p, probe.upper_fit * (1.0 + 1e-9));
    let small_m = probe.lower_fit * (1.0 - 1e-9);
    let (lower_ok, lower) = lower_tail_check(&prof, x0n, xnn, p, small_m);
    let lower_ok = lower_ok && small_m > 0.0 && !lower.t_grid.is_empty();
    let upper_ok = upper_ok && probe.upper_fit.is_finite();

    let slope = (50.0 < 0.25 * xnn)
        .then(|| {
            prof.fit(50.0, 0.25 * xnn, TAIL_GRID_POINTS)
                .ok()
                .map(|f| f.slope)
        })
        .flatten();

    let mass_ok = mass_defect <= MASS_TOL;
    let barycenter_ok = barycenter_drift <= drift_tol;
    let pass = replay_ok
        && mass_ok
        && barycenter_ok
        && outside_k.is_empty()
        && construction.in_u()
        && upper_ok
        && lower_ok;
    Ok(LaminateReport {
        atoms: nu.len(),
        stages,
        replay_ok,
        mass_defect,
        mass_ok,
        barycenter_drift,
        drift_tol,
        barycenter_ok,
        outside_k,
        construction_steps: construction.steps,
        steps_outside_u: construction.violations,
        p,
        slope,
        upper,
        lower,
        upper_ok,
        lower_ok,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use laminate_core::{AfsStaircase, WeightedAtom};

    fn document(depth: usize) -> (StaircaseDocument, AfsParams) {
        let p = AfsParams::defaults(2.0).unwrap();
        let st = AfsStaircase::build(p.default_x0(), &p, depth).unwrap();
        (st.trunc.to_document().unwrap(), p)
    }

    #[test]
    fn built_staircase_passes() {
        let (doc, p) = document(200);
        let r = verify_staircase(&doc, &p).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.atoms, 401);
        assert!(r.lower.t_grid.len() > 10);
    }

    #[test]
    fn perturbed_weight_fails_mass_and_replay() {
        let (mut doc, p) = document(20);
        let a = doc.atoms[3];
        doc.atoms[3] = WeightedAtom::new(a.weight + 1e-3, a.matrix);
        let r = verify_staircase(&doc, &p).unwrap();
        assert!(!r.pass);
        assert!(!r.mass_ok);
        assert!(!r.replay_ok);
    }

    #[test]
    fn atom_outside_k_is_reported() {
        let (mut doc, p) = document(5);
        let a = doc.atoms[0];
        let moved = a.matrix + Mat2::new(0.0, 0.0, -4.0, 0.0);
        doc.atoms[0] = WeightedAtom::new(a.weight, moved);
        let r = verify_staircase(&doc, &p).unwrap();
        assert_eq!(r.outside_k, vec![moved]);
        assert!(!r.pass);
    }
}
