//! Empirical gradient distributions and atom-level comparison with a
//! reference laminate.

use laminate_core::measure::MERGE_TOL;
use laminate_core::{DiscreteMeasure, Mat2, WeightedAtom};
use laminate_realize::{CensusEntry, Field, Tag};
use serde::Serialize;

use crate::VerifyError;

/// Empirical atoms are matched to reference atoms within this distance.
pub const MATCH_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalAtom {
    pub matrix: Mat2,
    /// Area fraction.
    pub mass: f64,
    pub tag: Tag,
}

/// Area-weighted distribution of cell gradients, one atom per distinct
/// `(gradient, tag)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientDistribution {
    pub atoms: Vec<EmpiricalAtom>,
}

impl GradientDistribution {
    /// Merges census entries accepted by `keep`, normalizing by `total`.
    pub fn from_census(
        census: &[CensusEntry],
        total: f64,
        keep: impl Fn(&CensusEntry) -> bool,
    ) -> Self {
        let mut entries: Vec<&CensusEntry> = census.iter().filter(|e| keep(e)).collect();
        entries.sort_by(|a, b| a.tag.cmp(&b.tag).then(a.grad.lex_cmp(&b.grad)));
        let mut atoms: Vec<EmpiricalAtom> = Vec::new();
        for e in entries {
            match atoms.last_mut() {
                Some(a) if a.tag == e.tag && a.matrix.distance(&e.grad) <= MERGE_TOL => {
                    a.mass += e.area / total
                }
                _ => atoms.push(EmpiricalAtom {
                    matrix: e.grad,
                    mass: e.area / total,
                    tag: e.tag,
                }),
            }
        }
        GradientDistribution { atoms }
    }

    /// Every atom of `m` with the same tag.
    pub fn from_measure(m: &DiscreteMeasure, tag: Tag) -> Self {
        let atoms = m
            .atoms()
            .iter()
            .map(|a| EmpiricalAtom {
                matrix: a.matrix,
                mass: a.weight,
                tag,
            })
            .collect();
        GradientDistribution { atoms }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn measure(&self) -> Result<DiscreteMeasure, VerifyError> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| WeightedAtom::new(a.mass, a.matrix))
            .collect();
        Ok(DiscreteMeasure::from_atoms_unnormalized(atoms)?)
    }
}

pub fn gradient_distribution(field: &Field) -> GradientDistribution {
    GradientDistribution::from_census(&field.census(), field.domain.area(), |_| true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AtomComparison {
    pub matrix: Mat2,
    pub reference: f64,
    pub empirical: f64,
    pub ratio: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionComparison {
    pub factor: f64,
    pub pass: bool,
    pub rows: Vec<AtomComparison>,
    /// Empirical mass of non-K atoms with no reference counterpart.
    pub unmatched_mass: f64,
}

/// Checks `factor^{−1}·ref ≤ emp ≤ factor·ref` atom by atom; `factor` and
/// `1/factor` give the same verdict. Each empirical atom counts towards its
/// nearest reference atom within [`MATCH_TOL`].
pub fn compare_distribution(
    emp: &GradientDistribution,
    reference: &DiscreteMeasure,
    factor: f64,
) -> Result<DistributionComparison, VerifyError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(VerifyError::Invalid(format!("factor {factor}")));
    }
    let f = factor.max(1.0 / factor);
    let refs = reference.atoms();
    let mut got = vec![0.0; refs.len()];
    let mut unmatched_mass = 0.0;
    for a in &emp.atoms {
        let nearest = refs
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.matrix.distance(&a.matrix)))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match nearest {
            Some((i, d)) if d <= MATCH_TOL => got[i] += a.mass,
            _ if a.tag == Tag::K => return Err(VerifyError::UnmatchedAtom(a.matrix)),
            _ => unmatched_mass += a.mass,
        }
    }
    let rows: Vec<AtomComparison> = refs
        .iter()
        .zip(&got)
        .map(|(r, &e)| {
            let within = e >= r.weight / f && e <= r.weight * f;
            AtomComparison {
                matrix: r.matrix,
                reference: r.weight,
                empirical: e,
                ratio: e / r.weight,
                within,
            }
        })
        .collect();
    Ok(DistributionComparison {
        factor: f,
        pass: rows.iter().all(|r| r.within),
        rows,
        unmatched_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use laminate_core::Vec2;
    use laminate_geometry::ConvexPolygon;
    use laminate_realize::{wiggle, WiggleSpec};
    use proptest::prelude::*;

    fn two_atoms(w: f64) -> DiscreteMeasure {
        DiscreteMeasure::from_atoms(vec![
            WeightedAtom::new(w, Mat2::diag(1.0, 2.0)),
            WeightedAtom::new(1.0 - w, Mat2::diag(3.0, 1.0)),
        ])
        .unwrap()
    }

    #[test]
    fn single_cell_is_a_dirac() {
        let x = Mat2::new(1.0, 2.0, 3.0, 4.0);
        let f = Field::affine(ConvexPolygon::regular(6, 2.0), x, Vec2::ZERO, Tag::K);
        let d = gradient_distribution(&f);
        assert_eq!(d.atoms.len(), 1);
        assert_eq!(d.atoms[0].matrix, x);
        assert!((d.atoms[0].mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_wiggle_has_two_main_atoms() {
        let e11 = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let spec = WiggleSpec::new(e11, -e11, 0.5, 0.05).unwrap();
        let f = wiggle(&spec, Vec2::ZERO, &ConvexPolygon::unit_square(), None).unwrap();
        let d = gradient_distribution(&f);
        let near = |m: Mat2| {
            d.atoms
                .iter()
                .filter(|a| a.matrix.distance(&m) < 1e-12)
                .map(|a| a.mass)
                .sum::<f64>()
        };
        assert!((near(e11) - 0.5).abs() <= 0.05 * 0.5);
        assert!((near(-e11) - 0.5).abs() <= 0.05 * 0.5);
        let dust: f64 = d
            .atoms
            .iter()
            .filter(|a| a.tag.is_error())
            .map(|a| a.mass)
            .sum();
        assert!(dust <= 0.05);
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_measures_pass_with_factor_one() {
        let m = two_atoms(0.3);
        let c =
            compare_distribution(&GradientDistribution::from_measure(&m, Tag::K), &m, 1.0).unwrap();
        assert!(c.pass);
    }

    #[test]
    fn unmatched_k_atom_is_an_error() {
        let m = two_atoms(0.3);
        let mut e = GradientDistribution::from_measure(&m, Tag::K);
        e.atoms.push(EmpiricalAtom {
            matrix: Mat2::IDENTITY,
            mass: 0.0,
            tag: Tag::K,
        });
        assert!(matches!(
            compare_distribution(&e, &m, 1.1),
            Err(VerifyError::UnmatchedAtom(_))
        ));
        e.atoms.last_mut().unwrap().tag = Tag::Dust;
        let c = compare_distribution(&e, &m, 1.1).unwrap();
        assert!(c.pass);
    }

    proptest! {
        #[test]
        fn two_percent_perturbations_pass(w in 0.05f64..0.95, d1 in -0.02f64..0.02, d2 in -0.02f64..0.02) {
            let m = two_atoms(w);
            let mut e = GradientDistribution::from_measure(&m, Tag::K);
            e.atoms[0].mass *= 1.0 + d1;
            e.atoms[1].mass *= 1.0 + d2;
            prop_assert!(compare_distribution(&e, &m, 0.1f64.exp()).unwrap().pass);
        }

        #[test]
        fn swapping_sides_keeps_the_verdict(w in 0.05f64..0.95, v in 0.05f64..0.95, f in 1.0f64..1.5) {
            let (a, b) = (two_atoms(w), two_atoms(v));
            let ab = compare_distribution(&GradientDistribution::from_measure(&a, Tag::K), &b, f).unwrap().pass;
            let ba = compare_distribution(&GradientDistribution::from_measure(&b, Tag::K), &a, 1.0 / f).unwrap().pass;
            prop_assert_eq!(ab, ba);
        }
    }
}
