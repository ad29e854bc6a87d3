//! Trust-region Newton minimization with a finite-difference Hessian of the
//! analytic gradient.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::merit::Merit;

const INITIAL_RADIUS: f64 = 1.0;
const MAX_RADIUS: f64 = 100.0;
const ACCEPT_RATIO: f64 = 1e-4;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub z: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Central differences of the gradient, symmetrized.
fn fd_hessian(merit: &dyn Merit, z: &DVector<f64>) -> DMatrix<f64> {
    let d = z.len();
    let mut h = DMatrix::zeros(d, d);
    let mut zp = z.clone();
    for j in 0..d {
        let step = 6e-6 * z[j].abs().max(1.0);
        zp[j] = z[j] + step;
        let gp = merit.gradient(&zp);
        zp[j] = z[j] - step;
        let gm = merit.gradient(&zp);
        zp[j] = z[j];
        h.set_column(j, &((gp - gm) / (2.0 * step)));
    }
    (&h + h.transpose()) * 0.5
}

/// Model `g.p + p.B.p / 2` in the eigenbasis of `B`.
struct Model {
    values: DVector<f64>,
    vectors: DMatrix<f64>,
    /// `Q^T g`.
    gq: DVector<f64>,
}

impl Model {
    fn new(g: &DVector<f64>, b: DMatrix<f64>) -> Option<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let eig = SymmetricEigen::new(b);
        let gq = eig.eigenvectors.transpose() * g;
        Some(Model {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
            gq,
        })
    }

    /// Steepest-descent model when the Hessian is unusable.
    fn identity(g: &DVector<f64>) -> Self {
        let d = g.len();
        Model {
            values: DVector::from_element(d, 1.0),
            vectors: DMatrix::identity(d, d),
            gq: g.clone(),
        }
    }

    fn shifted_coeffs(&self, shift: f64) -> DVector<f64> {
        self.gq
            .zip_map(&self.values, |g, l| if l + shift > 0.0 { -g / (l + shift) } else { 0.0 })
    }

    fn predicted(&self, c: &DVector<f64>) -> f64 {
        -(self.gq.dot(c) + 0.5 * c.component_mul(&self.values).dot(c))
    }

    /// Exact minimizer of the model on the ball of `radius`, in eigen
    /// coordinates.
    fn step(&self, radius: f64) -> DVector<f64> {
        let lmin = self.values.min();
        let lmax = self.values.amax().max(1.0);
        if lmin > 0.0 {
            let c = self.shifted_coeffs(0.0);
            if c.norm() <= radius {
                return c;
            }
        }
        let lo = (-lmin).max(0.0);
        let gnorm = self.gq.norm();
        // hard case: the gradient has no weight on the lowest eigenvectors
        let probe = lo + 1e-12 * lmax;
        let at_probe = self.shifted_coeffs(probe);
        if lmin <= 0.0 && at_probe.norm() < radius {
            let mut c = self.shifted_coeffs(lo);
            let degenerate: Vec<usize> = (0..self.values.len())
                .filter(|&i| (self.values[i] + lo).abs() <= 1e-12 * lmax)
                .collect();
            for &i in &degenerate {
                c[i] = 0.0;
            }
            let rest = (radius * radius - c.norm_squared()).max(0.0).sqrt();
            let i = degenerate
                .first()
                .copied()
                .unwrap_or_else(|| self.values.imin());
            c[i] = if self.gq[i] > 0.0 { -rest } else { rest };
            return c;
        }
        let mut a = probe.max(lo);
        let mut b = lo + gnorm / radius + 1e-12 * lmax;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.shifted_coeffs(mid).norm() > radius {
                a = mid;
            } else {
                b = mid;
            }
        }
        self.shifted_coeffs(b)
    }
}

/// Minimizes `merit` from `z0` until the gradient norm drops to `gtol`, the
/// iteration budget is spent, or no further progress is possible.
pub(crate) fn minimize(merit: &dyn Merit, z0: DVector<f64>, max_iters: usize, gtol: f64) -> Outcome {
    let layout = merit.layout();
    let mut z = z0;
    layout.normalize(&mut z);
    let mut f = merit.value(&z);
    let mut g = merit.gradient(&z);
    let mut radius = INITIAL_RADIUS;
    let mut model: Option<Model> = None;
    let mut iterations = 0;
    while iterations < max_iters {
        if g.norm() <= gtol || !f.is_finite() {
            break;
        }
        iterations += 1;
        let mdl = model.get_or_insert_with(|| {
            Model::new(&g, fd_hessian(merit, &z)).unwrap_or_else(|| Model::identity(&g))
        });
        let mut c = mdl.step(radius);
        let mut pred = mdl.predicted(&c);
        if !(pred > 0.0) {
            // the Hessian model failed to predict descent; fall back to a
            // steepest-descent step of the same length
            let fallback = Model::identity(&g);
            c = fallback.step(radius.min(g.norm()));
            pred = fallback.predicted(&c);
            *mdl = fallback;
        }
        let p = &mdl.vectors * &c;
        let pnorm = p.norm();
        let mut trial = &z + &p;
        let f_trial = merit.value(&trial);
        let ared = f - f_trial;
        let ratio = ared / pred;
        let noise = 1e-15 * (1.0 + f.abs());
        let accept = if pred <= noise && ared.abs() <= 10.0 * noise {
            // below round-off in the merit value: judge by the gradient
            let g_trial = merit.gradient(&trial);
            g_trial.norm() < g.norm()
        } else {
            ratio > ACCEPT_RATIO
        };
        if ratio < 0.25 || !accept {
            radius = 0.25 * pnorm;
        } else if ratio > 0.75 && pnorm >= 0.99 * radius {
            radius = (2.0 * radius).min(MAX_RADIUS);
        }
        if accept {
            layout.normalize(&mut trial);
            z = trial;
            f = merit.value(&z);
            g = merit.gradient(&z);
            model = None;
        }
        if radius <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Outcome {
        grad_norm: g.norm(),
        z,
        iterations,
    }
}
