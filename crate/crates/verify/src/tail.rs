//! Distribution function `t ↦ |{|∇w| > t}|/|Ω|` of a field and its power-law
//! fit.

use laminate_core::staircase::{fit_line, log_grid, TailProfile};
use laminate_realize::Field;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldTailReport {
    pub p: f64,
    pub t_grid: Vec<f64>,
    pub measure_of_superlevel: Vec<f64>,
    /// Least-squares slope of `log S(t)` against `log t` over the grid points
    /// with `S(t) > 0`.
    pub fitted_slope: f64,
    pub intercept: f64,
    /// Largest distance from a sample to the fitted line, in log units.
    pub max_deviation: f64,
    /// `inf t^p S(t)` over the grid range.
    pub c_lower: f64,
    /// `sup t^p S(t)` over the grid range.
    #[serde(rename = "C_upper")]
    pub c_upper: f64,
}

impl FieldTailReport {
    /// `C/c`, infinite when `c = 0`.
    pub fn ratio(&self) -> f64 {
        self.c_upper / self.c_lower
    }

    pub fn nonincreasing(&self) -> bool {
        self.measure_of_superlevel.windows(2).all(|w| w[1] <= w[0])
    }

    /// CSV with columns `t,superlevel,fit`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,superlevel,fit\n");
        for (t, m) in self.t_grid.iter().zip(&self.measure_of_superlevel) {
            let fit = (self.intercept + self.fitted_slope * t.ln()).exp();
            s.push_str(&format!("{t},{m},{fit}\n"));
        }
        s
    }
}

/// Superlevel profile: gradient norms with their area fractions.
pub fn profile(field: &Field) -> TailProfile {
    let area = field.domain.area();
    TailProfile::from_pairs(
        field
            .census()
            .iter()
            .map(|e| (e.grad.frobenius_norm(), e.area / area))
            .collect(),
    )
}

/// Smallest and largest gradient norm carried by a cell.
pub fn achieved_range(field: &Field) -> (f64, f64) {
    field
        .census()
        .iter()
        .filter(|e| e.area > 0.0)
        .map(|e| e.grad.frobenius_norm())
        .fold((f64::INFINITY, 0.0), |(lo, hi), n| (lo.min(n), hi.max(n)))
}

/// `n` log-spaced points over the achieved range, stopping just below the
/// largest norm so every point has a nonempty superlevel set.
pub fn tail_grid(field: &Field, n: usize) -> Vec<f64> {
    let (lo, hi) = achieved_range(field);
    let lo = lo.max(1.0);
    let hi = hi * (1.0 - 1e-9);
    if !(hi > lo) {
        return vec![lo];
    }
    log_grid(lo, hi, n)
}

/// Exact superlevel areas on `t_grid` with the sandwich constants over
/// `[t_grid[0], t_grid[last]]`.
pub fn field_tail(field: &Field, t_grid: &[f64], p: f64) -> FieldTailReport {
    let prof = profile(field);
    let measure_of_superlevel: Vec<f64> = t_grid.iter().map(|&t| prof.tail(t)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = t_grid
        .iter()
        .zip(&measure_of_superlevel)
        .filter(|(_, &m)| m > 0.0)
        .map(|(t, m)| (t.ln(), m.ln()))
        .unzip();
    let fit = if xs.len() >= 2 {
        Some(fit_line(&xs, &ys))
    } else {
        None
    };
    let (lo, hi) = match (t_grid.first(), t_grid.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (1.0, 1.0),
    };
    let (c_lower, c_upper) = if hi > lo {
        (
            prof.inf_scaled(p, lo, hi).min(prof.tail(lo) * lo.powf(p)),
            prof.sup_scaled(p, lo, hi),
        )
    } else {
        let v = prof.tail(lo) * lo.powf(p);
        (v, v)
    };
    FieldTailReport {
        p,
        t_grid: t_grid.to_vec(),
        measure_of_superlevel,
        fitted_slope: fit.map_or(f64::NAN, |f| f.slope),
        intercept: fit.map_or(f64::NAN, |f| f.intercept),
        max_deviation: fit.map_or(f64::NAN, |f| f.max_deviation),
        c_lower,
        c_upper,
    }
}
