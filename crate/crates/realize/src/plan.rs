//! Split trees rearranged as nodes with two children each.

use std::collections::HashMap;

use laminate_core::measure::MERGE_TOL;
use laminate_core::{Mat2, SplitTree, Vec2};

use crate::RealizeError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanSplit {
    /// Index of the split step in the tree.
    pub step: usize,
    /// Weight of `left`.
    pub lambda: f64,
    pub left: usize,
    pub right: usize,
    /// `left − right = ξ ⊗ ζ`.
    pub xi: Vec2,
    pub zeta: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanNode {
    pub matrix: Mat2,
    pub split: Option<PlanSplit>,
}

/// Node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub nodes: Vec<PlanNode>,
}

impl Plan {
    /// Each node is split by the first later step whose parent is its
    /// matrix; leaves that were merged with equal atoms share their split.
    pub fn from_tree(tree: &SplitTree) -> Result<Self, RealizeError> {
        let mut b = PlanBuilder {
            tree,
            nodes: Vec::new(),
            by_step: HashMap::new(),
        };
        b.node(tree.root(), 0)?;
        Ok(Plan { nodes: b.nodes })
    }

    /// One split of `x = λ·x1 + (1−λ)·x2`.
    pub fn single(x: Mat2, x1: Mat2, x2: Mat2, lambda: f64) -> Result<Self, RealizeError> {
        let f = (x1 - x2)
            .rank_one_factor()
            .map_err(|e| RealizeError::DegenerateSplit(e.to_string()))?;
        Ok(Plan {
            nodes: vec![
                PlanNode {
                    matrix: x,
                    split: Some(PlanSplit {
                        step: 0,
                        lambda,
                        left: 1,
                        right: 2,
                        xi: f.xi,
                        zeta: f.zeta,
                    }),
                },
                PlanNode {
                    matrix: x1,
                    split: None,
                },
                PlanNode {
                    matrix: x2,
                    split: None,
                },
            ],
        })
    }

    pub fn root(&self) -> &PlanNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].split.is_none())
    }

    /// Number of splits from the root to each node.
    pub fn depths(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if let Some(s) = self.nodes[i].split {
                d[s.left] = d[s.left].max(d[i] + 1);
                d[s.right] = d[s.right].max(d[i] + 1);
            }
        }
        d
    }
}

struct PlanBuilder<'a> {
    tree: &'a SplitTree,
    nodes: Vec<PlanNode>,
    by_step: HashMap<usize, usize>,
}

impl PlanBuilder<'_> {
    fn node(&mut self, m: Mat2, from: usize) -> Result<usize, RealizeError> {
        let steps = self.tree.steps();
        let found = (from..steps.len()).find(|&k| steps[k].parent.distance(&m) <= MERGE_TOL);
        let Some(k) = found else {
            self.nodes.push(PlanNode {
                matrix: m,
                split: None,
            });
            return Ok(self.nodes.len() - 1);
        };
        if let Some(&id) = self.by_step.get(&k) {
            return Ok(id);
        }
        let s = steps[k];
        if !(s.lambda_prime > 0.0 && s.lambda_prime < 1.0) {
            return Err(RealizeError::DegenerateSplit(format!(
                "step {k} has weight {}",
                s.lambda_prime
            )));
        }
        let f = (s.left - s.right)
            .rank_one_factor()
            .map_err(|e| RealizeError::DegenerateSplit(e.to_string()))?;
        let id = self.nodes.len();
        self.nodes.push(PlanNode {
            matrix: s.parent,
            split: None,
        });
        self.by_step.insert(k, id);
        let left = self.node(s.left, k + 1)?;
        let right = self.node(s.right, k + 1)?;
        self.nodes[id].split = Some(PlanSplit {
            step: k,
            lambda: s.lambda_prime,
            left,
            right,
            xi: f.xi,
            zeta: f.zeta,
        });
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use laminate_core::{AfsParams, AfsStaircase};

    #[test]
    fn afs_stage_becomes_chain() {
        let p = AfsParams::defaults(2.0).unwrap();
        let st = AfsStaircase::build(p.default_x0(), &p, 2).unwrap();
        let tree = st.trunc.combined_tree().unwrap();
        let plan = Plan::from_tree(&tree).unwrap();
        assert_eq!(plan.leaves().count(), tree.leaves().len());
        assert_eq!(
            plan.nodes.iter().filter(|n| n.split.is_some()).count(),
            tree.steps().len()
        );
        for n in &plan.nodes {
            if let Some(s) = n.split {
                let l = plan.nodes[s.left].matrix;
                let r = plan.nodes[s.right].matrix;
                assert!((l * s.lambda + r * (1.0 - s.lambda)).distance(&n.matrix) < 1e-9);
                assert!(
                    (l - r).distance(&Mat2::outer(s.xi, s.zeta)) < 1e-9 * (l - r).frobenius_norm()
                );
            }
        }
    }

    #[test]
    fn single_split_plan() {
        let x1 = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let plan = Plan::single(Mat2::ZERO, x1, -x1, 0.5).unwrap();
        assert_eq!(plan.depths(), vec![0, 1, 1]);
        assert!(Plan::single(Mat2::ZERO, Mat2::IDENTITY, -Mat2::IDENTITY, 0.5).is_err());
    }
}
