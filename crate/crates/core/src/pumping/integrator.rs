//! Adaptive Dormand–Prince 5(4) stepper for complex state vectors.

use num_complex::Complex64;

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub initial_step: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 2_000_000,
            initial_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_step: f64,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrator for autonomous systems `dy/dt = f(y)`. The step size carries
/// over between successive `integrate` calls.
pub struct DormandPrince<F>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    rhs: F,
    opts: IntegratorOptions,
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    y_new: Vec<Complex64>,
    pub stats: StepStats,
}

impl<F> DormandPrince<F>
where
    F: FnMut(&[Complex64], &mut [Complex64]),
{
    pub fn new(rhs: F, len: usize, opts: IntegratorOptions) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); len];
        Self {
            rhs,
            opts,
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            y_new: z,
            stats: StepStats::default(),
        }
    }

    /// Advance `y` from `t0` to `t1`. `on_step` sees every accepted state and
    /// may abort by returning an error.
    pub fn integrate<S>(&mut self, y: &mut [Complex64], t0: f64, t1: f64, mut on_step: S) -> Result<(), Error>
    where
        S: FnMut(f64, &[Complex64]) -> Result<(), Error>,
    {
        if t1 <= t0 {
            return Ok(());
        }
        let mut t = t0;
        let mut h = if self.stats.last_step > 0.0 {
            self.stats.last_step
        } else {
            self.opts.initial_step
        };
        (self.rhs)(y, &mut self.k[0]);
        let mut steps = 0usize;
        while t < t1 {
            if steps >= self.opts.max_steps {
                return Err(Error::numerical(
                    "step limit reached before the end of the interaction",
                    format!("t = {t:.6e} of {t1:.6e}, step {h:.3e}, {} rejected", self.stats.rejected),
                ));
            }
            steps += 1;
            let last = t + h >= t1;
            let h_use = if last { t1 - t } else { h };
            if !(h_use > 1e-14 * t1.max(1.0)) && !last {
                return Err(Error::numerical(
                    "step size underflow",
                    format!("t = {t:.6e}, step {h_use:.3e}, {} rejected", self.stats.rejected),
                ));
            }
            self.stage(y, h_use);
            let err = self.error_norm(y, h_use);
            if !err.is_finite() {
                return Err(Error::numerical(
                    "non-finite state during integration",
                    format!("t = {t:.6e}, step {h_use:.3e}"),
                ));
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + h_use };
                y.copy_from_slice(&self.y_new);
                // FSAL: stage 7 is the derivative at the new point
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                self.stats.accepted += 1;
                on_step(t, y)?;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = h_use * factor;
                    self.stats.last_step = h;
                }
            } else {
                self.stats.rejected += 1;
                h = h_use * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        Ok(())
    }

    fn stage(&mut self, y: &[Complex64], h: f64) {
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..y.len() {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        (self.rhs)(tmp, k2);
        for i in 0..y.len() {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        (self.rhs)(tmp, k3);
        for i in 0..y.len() {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        (self.rhs)(tmp, k4);
        for i in 0..y.len() {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        (self.rhs)(tmp, k5);
        for i in 0..y.len() {
            tmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        (self.rhs)(tmp, k6);
        for i in 0..y.len() {
            self.y_new[i] = y[i] + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * h;
        }
        (self.rhs)(&self.y_new, k7);
    }

    fn error_norm(&self, y: &[Complex64], h: f64) -> f64 {
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut acc = 0.0;
        for i in 0..y.len() {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = self.opts.atol + self.opts.rtol * y[i].norm().max(self.y_new[i].norm());
            acc += (e.norm() / sc).powi(2);
        }
        (acc / y.len() as f64).sqrt()
    }
}
