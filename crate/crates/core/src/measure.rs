//! Finitely supported probability measures on 2×2 matrices and the
//! elementary-splitting calculus that builds laminates of finite order.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::MeasureError;
use crate::mat::{Mat2, RANK_ONE_TOL};

/// Atoms closer than this (Frobenius) are the same atom.
pub const MERGE_TOL: f64 = 1e-10;
/// Allowed deviation of the total mass from 1.
pub const MASS_TOL: f64 = 1e-12;
/// Relative tolerance for `parent = λ'B + (1−λ')B'`.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtom {
    #[serde(rename = "w")]
    pub weight: f64,
    #[serde(rename = "m")]
    pub matrix: Mat2,
}

impl WeightedAtom {
    pub fn new(weight: f64, matrix: Mat2) -> Self {
        WeightedAtom { weight, matrix }
    }
}

/// A probability measure with finitely many atoms, kept in canonical
/// (lexicographic) order with near-duplicates merged.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DiscreteMeasure {
    atoms: Vec<WeightedAtom>,
}

impl DiscreteMeasure {
    pub fn dirac(m: Mat2) -> Self {
        DiscreteMeasure {
            atoms: vec![WeightedAtom::new(1.0, m)],
        }
    }

    /// Validates, merges and sorts the atoms.
    pub fn from_atoms(atoms: Vec<WeightedAtom>) -> Result<Self, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::Empty);
        }
        for a in &atoms {
            if !(a.weight > 0.0 && a.weight.is_finite()) || !a.matrix.is_finite() {
                return Err(MeasureError::InvalidAtom {
                    weight: a.weight,
                    matrix: a.matrix,
                });
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::MassNotOne(total));
        }
        Ok(DiscreteMeasure {
            atoms: canonicalize(atoms),
        })
    }

    /// Like [`DiscreteMeasure::from_atoms`] but without the mass check; used
    /// for intermediate sums whose mass is verified by the caller.
    pub fn from_atoms_unnormalized(atoms: Vec<WeightedAtom>) -> Result<Self, MeasureError> {
        if atoms.is_empty() {
            return Err(MeasureError::Empty);
        }
        for a in &atoms {
            if !(a.weight > 0.0 && a.weight.is_finite()) || !a.matrix.is_finite() {
                return Err(MeasureError::InvalidAtom {
                    weight: a.weight,
                    matrix: a.matrix,
                });
            }
        }
        Ok(DiscreteMeasure {
            atoms: canonicalize(atoms),
        })
    }

    pub fn atoms(&self) -> &[WeightedAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn barycenter(&self) -> Mat2 {
        self.atoms
            .iter()
            .fold(Mat2::ZERO, |acc, a| acc + a.matrix * a.weight)
    }

    /// Mass of `{X : |X| > t}`.
    pub fn tail_mass(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.matrix.frobenius_norm() > t)
            .map(|a| a.weight)
            .sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.matrix.frobenius_norm())
            .fold(0.0, f64::max)
    }

    /// Index of the atom within [`MERGE_TOL`] of `m`, if any.
    pub fn find(&self, m: &Mat2) -> Option<usize> {
        self.atoms
            .iter()
            .position(|a| a.matrix.distance(m) <= MERGE_TOL)
    }

    /// Weight of the atom at `m` (0 if absent).
    pub fn weight_of(&self, m: &Mat2) -> f64 {
        self.find(m).map_or(0.0, |i| self.atoms[i].weight)
    }

    /// Replace atom `atom_index` (which must be `step.parent`) by its two
    /// children.
    pub fn elementary_split(
        &self,
        atom_index: usize,
        step: &SplitStep,
    ) -> Result<Self, MeasureError> {
        step.validate()?;
        let atom = *self
            .atoms
            .get(atom_index)
            .ok_or(MeasureError::AtomMismatch {
                index: atom_index,
                expected: step.parent,
                found: Mat2::ZERO,
            })?;
        if atom.matrix.distance(&step.parent) > MERGE_TOL {
            return Err(MeasureError::AtomMismatch {
                index: atom_index,
                expected: step.parent,
                found: atom.matrix,
            });
        }
        let mut atoms = self.atoms.clone();
        atoms.swap_remove(atom_index);
        atoms.push(WeightedAtom::new(
            atom.weight * step.lambda_prime,
            step.left,
        ));
        atoms.push(WeightedAtom::new(
            atom.weight * (1.0 - step.lambda_prime),
            step.right,
        ));
        Ok(DiscreteMeasure {
            atoms: canonicalize(atoms),
        })
    }
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let atoms = Vec::<WeightedAtom>::deserialize(d)?;
        DiscreteMeasure::from_atoms(atoms).map_err(serde::de::Error::custom)
    }
}

/// Sort lexicographically and merge atoms within [`MERGE_TOL`].
fn canonicalize(mut atoms: Vec<WeightedAtom>) -> Vec<WeightedAtom> {
    atoms.sort_by(|a, b| a.matrix.lex_cmp(&b.matrix));
    let mut out: Vec<WeightedAtom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        let mut merged = false;
        for o in out.iter_mut().rev() {
            if o.matrix.a11 < a.matrix.a11 - MERGE_TOL {
                break;
            }
            if o.matrix.distance(&a.matrix) <= MERGE_TOL {
                o.weight += a.weight;
                merged = true;
                break;
            }
        }
        if !merged {
            out.push(a);
        }
    }
    out
}

/// One elementary splitting `X = λ'B + (1−λ')B'` with `rank(B − B') = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStep {
    pub parent: Mat2,
    pub left: Mat2,
    pub right: Mat2,
    #[serde(rename = "lambda")]
    pub lambda_prime: f64,
}

impl SplitStep {
    pub fn new(parent: Mat2, left: Mat2, right: Mat2, lambda_prime: f64) -> Self {
        SplitStep {
            parent,
            left,
            right,
            lambda_prime,
        }
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        let l = self.lambda_prime;
        if !(l > 0.0 && l < 1.0) {
            return Err(MeasureError::LambdaOutOfRange(l));
        }
        let diff = self.left - self.right;
        if !diff.is_rank_one(RANK_ONE_TOL) {
            return Err(MeasureError::NotRankOne(diff));
        }
        let err = self.reconstruction_error();
        if err > RECONSTRUCTION_TOL * self.parent.frobenius_norm().max(1.0) {
            return Err(MeasureError::ParentMismatch(err));
        }
        Ok(())
    }

    pub fn reconstruction_error(&self) -> f64 {
        let l = self.lambda_prime;
        (self.left * l + self.right * (1.0 - l)).distance(&self.parent)
    }
}

/// A laminate of finite order together with the splittings that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitTree {
    root: Mat2,
    steps: Vec<SplitStep>,
    leaves: DiscreteMeasure,
}

impl SplitTree {
    pub fn new(root: Mat2) -> Self {
        SplitTree {
            root,
            steps: Vec::new(),
            leaves: DiscreteMeasure::dirac(root),
        }
    }

    /// Replay `steps` from `δ_root`.
    pub fn replay(root: Mat2, steps: Vec<SplitStep>) -> Result<Self, MeasureError> {
        let mut r = Replayer::new(root);
        for (i, s) in steps.iter().enumerate() {
            r.apply(i, s)?;
        }
        Ok(SplitTree {
            root,
            leaves: r.finish(),
            steps,
        })
    }

    pub fn root(&self) -> Mat2 {
        self.root
    }

    pub fn steps(&self) -> &[SplitStep] {
        &self.steps
    }

    pub fn leaves(&self) -> &DiscreteMeasure {
        &self.leaves
    }

    /// Indices of steps whose parent fails `in_u`.
    pub fn validate_construction_steps(
        &self,
        in_u: impl Fn(&Mat2) -> bool,
    ) -> Result<ConstructionReport, MeasureError> {
        let replayed = SplitTree::replay(self.root, self.steps.clone())?;
        if replayed.leaves != self.leaves {
            return Err(MeasureError::InvalidTree {
                step: self.steps.len(),
                reason: "replay does not reproduce the leaves".into(),
            });
        }
        let violations = self
            .steps
            .iter()
            .enumerate()
            .filter(|(_, s)| !in_u(&s.parent))
            .map(|(i, _)| i)
            .collect();
        Ok(ConstructionReport {
            steps: self.steps.len(),
            violations,
        })
    }

    pub fn to_data(&self) -> SplitTreeData {
        SplitTreeData {
            root: self.root,
            steps: self.steps.clone(),
        }
    }
}

/// Result of [`SplitTree::validate_construction_steps`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstructionReport {
    pub steps: usize,
    pub violations: Vec<usize>,
}

impl ConstructionReport {
    pub fn in_u(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Serialized form of a [`SplitTree`]; the leaves are recomputed on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitTreeData {
    pub root: Mat2,
    pub steps: Vec<SplitStep>,
}

impl TryFrom<SplitTreeData> for SplitTree {
    type Error = MeasureError;
    fn try_from(d: SplitTreeData) -> Result<Self, MeasureError> {
        SplitTree::replay(d.root, d.steps)
    }
}

/// The `measure.json` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureDocument {
    pub atoms: Vec<WeightedAtom>,
    pub tree: SplitTreeData,
}

impl MeasureDocument {
    pub fn from_tree(tree: &SplitTree) -> Self {
        MeasureDocument {
            atoms: tree.leaves().atoms().to_vec(),
            tree: tree.to_data(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

/// Incremental replay with an index on `a11` so long trees stay fast.
struct Replayer {
    slots: Vec<Option<WeightedAtom>>,
    index: BTreeSet<Key>,
}

impl Replayer {
    fn new(root: Mat2) -> Self {
        let mut r = Replayer {
            slots: Vec::new(),
            index: BTreeSet::new(),
        };
        r.insert(WeightedAtom::new(1.0, root));
        r
    }

    fn lookup(&self, m: &Mat2) -> Option<usize> {
        let lo = Key(m.a11 - MERGE_TOL, 0);
        let hi = Key(m.a11 + MERGE_TOL, usize::MAX);
        self.index
            .range(lo..=hi)
            .map(|k| k.1)
            .find(|&i| self.slots[i].is_some_and(|a| a.matrix.distance(m) <= MERGE_TOL))
    }

    fn insert(&mut self, a: WeightedAtom) {
        if let Some(i) = self.lookup(&a.matrix) {
            if let Some(slot) = self.slots[i].as_mut() {
                slot.weight += a.weight;
            }
            return;
        }
        self.index.insert(Key(a.matrix.a11, self.slots.len()));
        self.slots.push(Some(a));
    }

    fn apply(&mut self, step_index: usize, s: &SplitStep) -> Result<(), MeasureError> {
        s.validate().map_err(|e| MeasureError::InvalidTree {
            step: step_index,
            reason: e.to_string(),
        })?;
        let i = self
            .lookup(&s.parent)
            .ok_or_else(|| MeasureError::InvalidTree {
                step: step_index,
                reason: "parent is not a current leaf".into(),
            })?;
        let atom = self.slots[i].take().expect("indexed slot is occupied");
        self.index.remove(&Key(atom.matrix.a11, i));
        self.insert(WeightedAtom::new(atom.weight * s.lambda_prime, s.left));
        self.insert(WeightedAtom::new(
            atom.weight * (1.0 - s.lambda_prime),
            s.right,
        ));
        Ok(())
    }

    fn finish(self) -> DiscreteMeasure {
        DiscreteMeasure {
            atoms: canonicalize(self.slots.into_iter().flatten().collect()),
        }
    }
}
