//! Restarting the construction inside the error set.

use std::collections::HashMap;
use std::sync::Arc;

use laminate_core::{AfsParams, AfsStaircase, Mat2, Vec2};
use laminate_geometry::strip_cover;

use crate::build::{check_partition, Builder, Slab};
use crate::field::{error_integral, patch_id, Cell, Family, Field, Patch, Tag};
use crate::staircase::{staircase_builder, RealizeConfig};
use crate::RealizeError;

type MatKey = [u64; 4];

fn mkey(m: &Mat2) -> MatKey {
    m.entries().map(f64::to_bits)
}

struct Restarter<'a> {
    params: &'a AfsParams,
    cfg: RealizeConfig,
    round: u32,
    fill: f64,
    builders: HashMap<MatKey, Option<Builder>>,
    done: HashMap<usize, Arc<Patch>>,
}

impl Restarter<'_> {
    fn builder(&mut self, z: &Mat2) -> Result<Option<&mut Builder>, RealizeError> {
        let k = mkey(z);
        if !self.builders.contains_key(&k) {
            let st = AfsStaircase::build(*z, self.params, self.cfg.depth)?;
            let b = if st.trunc.depth() == 0 {
                None
            } else {
                let (mut b, _) = staircase_builder(&st.trunc, &self.cfg, self.params, false)?;
                b.round = self.round;
                Some(b)
            };
            self.builders.insert(k, b);
        }
        Ok(self.builders.get_mut(&k).and_then(Option::as_mut))
    }

    fn patch(&mut self, p: &Arc<Patch>) -> Result<Arc<Patch>, RealizeError> {
        if let Some(q) = self.done.get(&patch_id(p)) {
            return Ok(q.clone());
        }
        let mut changed = false;
        let mut families = Vec::with_capacity(p.families.len());
        for f in &p.families {
            let child = self.patch(&f.patch)?;
            changed |= !Arc::ptr_eq(&child, &f.patch);
            families.push(Family {
                patch: child,
                ..f.clone()
            });
        }
        let mut cells = Vec::with_capacity(p.cells.len());
        for c in &p.cells {
            if !c.tag.is_error() {
                cells.push(c.clone());
                continue;
            }
            changed = true;
            self.refill(p, c, &mut cells, &mut families)?;
        }
        let q = if changed {
            Arc::new(Patch {
                footprint: p.footprint.clone(),
                host: p.host,
                rot: p.rot,
                cells,
                families,
            })
        } else {
            p.clone()
        };
        self.done.insert(patch_id(p), q.clone());
        Ok(q)
    }

    /// Covers an error cell with strips along the fresh staircase's first
    /// direction and fills each strip with its teeth. The fill lives in a
    /// patch of its own centred on the cell, so rows are laid out near the
    /// origin however far the cell sits from its patch's.
    fn refill(
        &mut self,
        p: &Patch,
        c: &Cell,
        cells: &mut Vec<Cell>,
        families: &mut Vec<Family>,
    ) -> Result<(), RealizeError> {
        if !self.params.in_u(&c.grad) {
            return Err(RealizeError::RestartOutsideU(c.grad));
        }
        let (round, fill) = (self.round, self.fill);
        let residual = |poly| Cell {
            poly,
            grad: c.grad,
            offset: Vec2::ZERO,
            tag: Tag::Residual,
            round,
        };
        let Some(b) = self.builder(&c.grad)? else {
            cells.push(Cell {
                offset: c.offset,
                ..residual(c.poly.clone())
            });
            return Ok(());
        };
        let zeta = b.plan.nodes[0]
            .split
            .expect("fresh staircase starts with a split")
            .zeta;
        let o = c.poly.centroid();
        let local = c.poly.translate(-o);
        let frame = zeta.unrotate(p.rot);
        let sc = strip_cover(&local, frame, fill)?;
        let n = Vec2::new(0.0, 1.0).rotate(frame);
        let mut inner_cells = Vec::new();
        let mut inner_families = Vec::new();
        for r in &sc.rects {
            let slab = Slab {
                u: frame,
                n,
                s: (r.x0, r.x1),
                t: (r.y0, r.y1),
            };
            b.fill_slab(
                0,
                &slab,
                p.rot,
                Vec2::ZERO,
                &mut inner_cells,
                &mut inner_families,
            )?;
        }
        inner_cells.extend(sc.remainder.into_iter().map(residual));
        let patch = Patch {
            footprint: local,
            host: c.grad,
            rot: p.rot,
            cells: inner_cells,
            families: inner_families,
        };
        check_partition(&patch)?;
        families.push(Family {
            patch: Arc::new(patch),
            origin: o,
            step: Vec2::ZERO,
            count: 1,
            scale: 1.0,
            offset: c.offset,
            round,
        });
        Ok(())
    }
}

/// One round of the restart: every error cell is covered (up to a fraction
/// `θ = min(½, 2^{−k−1}|Ω|/E_{k−1})`) by a fresh staircase started at its own
/// gradient with slack `η = 2^{−k−1}`; all other cells are kept as they are.
pub fn restart_iteration(
    field: &Field,
    params: &AfsParams,
    cfg: &RealizeConfig,
) -> Result<Field, RealizeError> {
    cfg.validate()?;
    let round = field.rounds() + 1;
    let area = field.domain.area();
    let before = error_integral(&field.census(), cfg.q);
    if before == 0.0 {
        let mut out = field.clone();
        let r = out.record(round)?;
        out.history.push(r);
        return Ok(out);
    }
    let target = 0.5f64.powi(round as i32) * area;
    let theta = (0.5f64.powi(round as i32 + 1) * area / before).min(0.5);
    let fresh = RealizeConfig {
        eta: 0.5f64.powi(round as i32 + 1),
        ..*cfg
    };
    let mut r = Restarter {
        params,
        cfg: fresh,
        round,
        fill: 1.0 - theta,
        builders: HashMap::new(),
        done: HashMap::new(),
    };
    let root = r.patch(&field.root)?;
    let mut out = Field {
        root,
        q: cfg.q,
        ..field.clone()
    };
    let rec = out.record(round)?;
    let after = error_integral(&out.census(), cfg.q);
    if !(after < target) {
        return Err(RealizeError::BudgetExceeded {
            stage: round as usize,
            detail: format!("error integral {after:e} not below {target:e}"),
        });
    }
    out.history.push(rec);
    Ok(out)
}
