//! Bounded derivative-free minimization.
//!
//! Nelder–Mead runs on an unbounded copy of the problem: every coordinate
//! with `lo < hi` is mapped through `x = lo + (hi - lo) * sigmoid(z)`, so no
//! evaluated point can leave the box. Coordinates with `lo == hi` are held
//! fixed and do not take part in the simplex.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed box `[lo_k, hi_k]` per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let b = Self { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() {
            return Err(Error::LengthMismatch {
                left: self.lo.len(),
                right: self.hi.len(),
            });
        }
        for (k, (&lo, &hi)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InfeasibleBounds {
                    field: format!("coordinate {k}"),
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    fn free(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&k| self.hi[k] > self.lo[k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    /// Objective evaluations allowed, restarts included.
    pub max_evals: usize,
    /// Simplex diameter (in transformed coordinates) below which a run may stop.
    pub x_tol: f64,
    /// Absolute spread of vertex values below which a run may stop.
    pub f_tol: f64,
    /// Edge length of the initial simplex in transformed coordinates.
    pub initial_step: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            x_tol: 1e-8,
            f_tol: 1e-14,
            initial_step: 0.5,
            max_restarts: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// False when the budget ran out before the simplex collapsed.
    pub converged: bool,
    pub restarts: usize,
}

const U_EPS: f64 = 1e-12;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(U_EPS, 1.0 - U_EPS);
    (u / (1.0 - u)).ln()
}

struct Transformed<'a> {
    bounds: &'a Bounds,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Transformed<'_> {
    fn to_box(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (j, &k) in self.free.iter().enumerate() {
            let (lo, hi) = (self.bounds.lo[k], self.bounds.hi[k]);
            x[k] = (lo + (hi - lo) * sigmoid(z[j])).clamp(lo, hi);
        }
        x
    }

    fn from_box(&self, x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&k| {
                let (lo, hi) = (self.bounds.lo[k], self.bounds.hi[k]);
                logit((x[k] - lo) / (hi - lo))
            })
            .collect()
    }
}

struct Vertex {
    z: Vec<f64>,
    f: f64,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` over `bounds` starting from `x_init`.
///
/// Non-finite objective values are treated as `+inf`. The returned point is
/// always inside the box.
pub fn minimize<F>(mut f: F, x_init: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    bounds.validate()?;
    if x_init.len() != bounds.dim() {
        return Err(Error::LengthMismatch {
            left: x_init.len(),
            right: bounds.dim(),
        });
    }
    if x_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x_init", "must be finite"));
    }
    let clamped: Vec<f64> = x_init
        .iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let tr = Transformed {
        bounds,
        free: bounds.free(),
        base: clamped.clone(),
    };
    let n = tr.free.len();

    let mut evals = 0usize;
    let mut eval = |z: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(&tr.to_box(z)))
    };

    let z0 = tr.from_box(&clamped);
    let f0 = eval(&z0, &mut evals);
    if !f0.is_finite() {
        return Err(Error::invalid("x_init", "objective is not finite at the starting point"));
    }
    if n == 0 {
        return Ok(Minimum {
            x: tr.to_box(&z0),
            value: f0,
            evaluations: evals,
            converged: true,
            restarts: 0,
        });
    }

    // Gao & Han adaptive coefficients.
    let nf = n as f64;
    let (c_reflect, c_expand, c_contract, c_shrink) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut best = Vertex { z: z0, f: f0 };
    let mut converged = false;
    let mut restarts = 0usize;

    'outer: loop {
        let mut simplex = Vec::with_capacity(n + 1);
        simplex.push(Vertex {
            z: best.z.clone(),
            f: best.f,
        });
        for j in 0..n {
            if evals >= opts.max_evals {
                break 'outer;
            }
            let mut z = best.z.clone();
            z[j] += opts.initial_step;
            let fz = eval(&z, &mut evals);
            simplex.push(Vertex { z, f: fz });
        }
        let start_value = best.f;
        let mut run_converged = false;

        while evals < opts.max_evals {
            // Stable sort keeps the incumbent first among ties.
            simplex.sort_by(|a, b| a.f.total_cmp(&b.f));

            let f_spread = simplex[n].f - simplex[0].f;
            let x_spread = simplex[1..]
                .iter()
                .flat_map(|v| v.z.iter().zip(&simplex[0].z).map(|(a, b)| (a - b).abs()))
                .fold(0.0_f64, f64::max);
            if f_spread <= opts.f_tol && x_spread <= opts.x_tol {
                run_converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, z) in centroid.iter_mut().zip(&v.z) {
                    *c += z / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].z)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let zr = along(c_reflect);
            let fr = eval(&zr, &mut evals);
            if fr < simplex[0].f {
                let ze = along(c_reflect * c_expand);
                let fe = eval(&ze, &mut evals);
                simplex[n] = if fe < fr {
                    Vertex { z: ze, f: fe }
                } else {
                    Vertex { z: zr, f: fr }
                };
                continue;
            }
            if fr < simplex[n - 1].f {
                simplex[n] = Vertex { z: zr, f: fr };
                continue;
            }
            let (zc, fc, accept) = if fr < simplex[n].f {
                let zc = along(c_reflect * c_contract);
                let fc = eval(&zc, &mut evals);
                let ok = fc <= fr;
                (zc, fc, ok)
            } else {
                let zc = along(-c_contract);
                let fc = eval(&zc, &mut evals);
                let ok = fc < simplex[n].f;
                (zc, fc, ok)
            };
            if accept {
                simplex[n] = Vertex { z: zc, f: fc };
                continue;
            }
            // Shrink towards the best vertex.
            let anchor = simplex[0].z.clone();
            for v in simplex.iter_mut().skip(1) {
                if evals >= opts.max_evals {
                    break;
                }
                for (z, a) in v.z.iter_mut().zip(&anchor) {
                    *z = a + c_shrink * (*z - a);
                }
                v.f = eval(&v.z, &mut evals);
            }
        }

        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
        if simplex[0].f < best.f {
            best = Vertex {
                z: simplex[0].z.clone(),
                f: simplex[0].f,
            };
        }
        if !run_converged {
            break;
        }
        converged = true;
        let improvement = start_value - best.f;
        if restarts >= opts.max_restarts
            || (restarts > 0 && improvement <= opts.f_tol.max(1e-12 * best.f.abs()))
        {
            break;
        }
        restarts += 1;
        converged = false;
    }

    // A converged run followed by a restart that hit the budget still counts.
    let converged = converged || (restarts > 0 && evals < opts.max_evals);
    Ok(Minimum {
        x: tr.to_box(&best.z),
        value: best.f,
        evaluations: evals,
        converged,
        restarts,
    })
}

/// `n` points stratified per coordinate over `bounds`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, bounds: &Bounds, rng: &mut R) -> Vec<Vec<f64>> {
    let dim = bounds.dim();
    let mut points = vec![vec![0.0; dim]; n];
    if n == 0 {
        return points;
    }
    for k in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher–Yates, done by hand so the draw order is fixed by this code.
        for j in (1..n).rev() {
            let r = rng.gen_range(0..=j);
            strata.swap(j, r);
        }
        let (lo, hi) = (bounds.lo[k], bounds.hi[k]);
        for (p, s) in points.iter_mut().zip(strata) {
            let u = (s as f64 + rng.gen::<f64>()) / n as f64;
            p[k] = (lo + (hi - lo) * u).clamp(lo, hi);
        }
    }
    points
}
