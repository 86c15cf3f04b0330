//! `field.json`: the cells of the root patch in global form plus the shared
//! patch hierarchy. The root entry of `patches` holds only the root's
//! families; its cells are the top-level `cells`.

use std::collections::HashMap;
use std::sync::Arc;

use laminate_core::{Mat2, Vec2};
use laminate_geometry::ConvexPolygon;
use serde::{Deserialize, Serialize};

use crate::build::check_partition;
use crate::field::{patch_id, Cell, Family, Field, Patch, RoundRecord, Tag};
use crate::RealizeError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDoc {
    #[serde(rename = "X")]
    pub x: Mat2,
    pub b: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    pub poly: ConvexPolygon,
    #[serde(rename = "X")]
    pub x: Mat2,
    pub b: Vec2,
    pub tag: Tag,
    #[serde(default)]
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalCellDoc {
    pub poly: ConvexPolygon,
    #[serde(rename = "X")]
    pub x: Mat2,
    pub d: Vec2,
    pub tag: Tag,
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDoc {
    pub patch: usize,
    pub origin: Vec2,
    pub step: Vec2,
    pub count: u64,
    pub scale: f64,
    pub offset: Vec2,
    pub round: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchDoc {
    pub footprint: ConvexPolygon,
    pub host: Mat2,
    pub rot: Vec2,
    pub cells: Vec<LocalCellDoc>,
    pub families: Vec<FamilyDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaDoc {
    pub q: f64,
    pub history: Vec<RoundRecord>,
}

/// Without `patches`, `cells` is the whole field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDoc {
    pub domain: ConvexPolygon,
    pub boundary: BoundaryDoc,
    pub cells: Vec<CellDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patches: Vec<PatchDoc>,
    /// Index of the root patch; the last one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaDoc>,
}

fn local_doc(c: &Cell) -> LocalCellDoc {
    LocalCellDoc {
        poly: c.poly.clone(),
        x: c.grad,
        d: c.offset,
        tag: c.tag,
        round: c.round,
    }
}

fn collect(p: &Arc<Patch>, ids: &mut HashMap<usize, usize>, out: &mut Vec<PatchDoc>) -> usize {
    if let Some(&i) = ids.get(&patch_id(p)) {
        return i;
    }
    let families = p
        .families
        .iter()
        .map(|f| FamilyDoc {
            patch: collect(&f.patch, ids, out),
            origin: f.origin,
            step: f.step,
            count: f.count,
            scale: f.scale,
            offset: f.offset,
            round: f.round,
        })
        .collect();
    out.push(PatchDoc {
        footprint: p.footprint.clone(),
        host: p.host,
        rot: p.rot,
        cells: p.cells.iter().map(local_doc).collect(),
        families,
    });
    let id = out.len() - 1;
    ids.insert(patch_id(p), id);
    id
}

impl FieldDoc {
    pub fn from_field(f: &Field) -> Self {
        let cells = f
            .root
            .cells
            .iter()
            .map(|c| CellDoc {
                poly: c.poly.clone(),
                x: c.grad,
                b: f.b + c.offset,
                tag: c.tag,
                round: c.round,
            })
            .collect();
        let (patches, root) = if f.root.families.is_empty() {
            (Vec::new(), None)
        } else {
            let mut patches = Vec::new();
            let root = collect(&f.root, &mut HashMap::new(), &mut patches);
            patches[root].cells.clear();
            (patches, Some(root))
        };
        FieldDoc {
            domain: f.domain.clone(),
            boundary: BoundaryDoc { x: f.x0, b: f.b },
            cells,
            patches,
            root,
            meta: Some(MetaDoc {
                q: f.q,
                history: f.history.clone(),
            }),
        }
    }

    pub fn into_field(self) -> Result<Field, RealizeError> {
        let (q, history) = self.meta.map_or((2.0, Vec::new()), |m| (m.q, m.history));
        if self.patches.is_empty() {
            let cells = self
                .cells
                .into_iter()
                .map(|c| Cell {
                    poly: c.poly,
                    grad: c.x,
                    offset: c.b - self.boundary.b,
                    tag: c.tag,
                    round: c.round,
                })
                .collect();
            let root = Patch {
                footprint: self.domain.clone(),
                host: self.boundary.x,
                rot: Vec2::new(1.0, 0.0),
                cells,
                families: Vec::new(),
            };
            return Ok(Field {
                domain: self.domain,
                x0: self.boundary.x,
                b: self.boundary.b,
                root: Arc::new(root),
                q,
                history,
            });
        }
        let root_id = self.root.unwrap_or(self.patches.len() - 1);
        let boundary_b = self.boundary.b;
        let mut root_cells = Some(self.cells);
        let mut built: Vec<Arc<Patch>> = Vec::with_capacity(self.patches.len());
        for (i, pd) in self.patches.into_iter().enumerate() {
            let mut families = Vec::with_capacity(pd.families.len());
            for fd in pd.families {
                let child = built.get(fd.patch).ok_or_else(|| {
                    RealizeError::Format(format!(
                        "patch {i} refers to patch {} not defined before it",
                        fd.patch
                    ))
                })?;
                if !(fd.scale > 0.0 && fd.scale.is_finite()) || fd.count == 0 {
                    return Err(RealizeError::Format(format!(
                        "patch {i}: family with scale {} and count {}",
                        fd.scale, fd.count
                    )));
                }
                families.push(Family {
                    patch: child.clone(),
                    origin: fd.origin,
                    step: fd.step,
                    count: fd.count,
                    scale: fd.scale,
                    offset: fd.offset,
                    round: fd.round,
                });
            }
            if (pd.rot.norm() - 1.0).abs() > 1e-12 {
                return Err(RealizeError::Format(format!(
                    "patch {i}: rotation {:?} is not a unit vector",
                    pd.rot
                )));
            }
            let mut cells: Vec<Cell> = pd
                .cells
                .into_iter()
                .map(|c| Cell {
                    poly: c.poly,
                    grad: c.x,
                    offset: c.d,
                    tag: c.tag,
                    round: c.round,
                })
                .collect();
            if i == root_id {
                if !cells.is_empty() {
                    return Err(RealizeError::Format(
                        "root patch cells belong in the top-level list".into(),
                    ));
                }
                cells = root_cells
                    .take()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|c| Cell {
                        poly: c.poly,
                        grad: c.x,
                        offset: c.b - boundary_b,
                        tag: c.tag,
                        round: c.round,
                    })
                    .collect();
            }
            let patch = Patch {
                footprint: pd.footprint,
                host: pd.host,
                rot: pd.rot,
                cells,
                families,
            };
            check_partition(&patch).map_err(|e| RealizeError::Format(format!("patch {i}: {e}")))?;
            built.push(Arc::new(patch));
        }
        let root = built
            .get(root_id)
            .ok_or_else(|| RealizeError::Format(format!("root patch {root_id} missing")))?
            .clone();
        if root.host != self.boundary.x || root.rot != Vec2::new(1.0, 0.0) {
            return Err(RealizeError::Format(
                "root patch does not carry the boundary map".into(),
            ));
        }
        Ok(Field {
            domain: self.domain,
            x0: self.boundary.x,
            b: self.boundary.b,
            root,
            q,
            history,
        })
    }
}

pub fn to_json(f: &Field) -> Result<String, RealizeError> {
    Ok(serde_json::to_string(&FieldDoc::from_field(f))?)
}

pub fn from_json(s: &str) -> Result<Field, RealizeError> {
    let doc: FieldDoc = serde_json::from_str(s)?;
    doc.into_field()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wiggle::{wiggle, WiggleSpec};

    #[test]
    fn flat_document_loads() {
        let s = r#"{"domain":[[0,0],[1,0],[1,1],[0,1]],"boundary":{"X":[[1,0],[0,1]],"b":[0,0]},
            "cells":[{"poly":[[0,0],[1,0],[1,1],[0,1]],"X":[[1,0],[0,1]],"b":[0,0],"tag":"K"}]}"#;
        let f = from_json(s).unwrap();
        assert_eq!(f.root.cells.len(), 1);
        assert_eq!(f.root.cells[0].tag, Tag::K);
        let back = to_json(&f).unwrap();
        assert!(back.contains("\"tag\":\"K\""));
        assert!(!back.contains("patches"));
    }

    #[test]
    fn hierarchical_round_trip_is_byte_identical() {
        let e11 = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let spec = WiggleSpec::new(e11, -e11, 0.3, 0.05).unwrap();
        let f = wiggle(
            &spec,
            Vec2::new(0.25, -1.0),
            &ConvexPolygon::regular(5, 1.0),
            None,
        )
        .unwrap();
        let s = to_json(&f).unwrap();
        let g = from_json(&s).unwrap();
        assert_eq!(to_json(&g).unwrap(), s);
        assert_eq!(f.census(), g.census());
    }

    #[test]
    fn forward_references_are_rejected() {
        let e11 = Mat2::new(1.0, 0.0, 0.0, 0.0);
        let spec = WiggleSpec::new(e11, -e11, 0.5, 0.05).unwrap();
        let f = wiggle(&spec, Vec2::ZERO, &ConvexPolygon::unit_square(), None).unwrap();
        let mut doc = FieldDoc::from_field(&f);
        let last = doc.patches.len() - 1;
        doc.patches.swap(0, last);
        doc.root = Some(0);
        assert!(doc.into_field().is_err());
    }
}
