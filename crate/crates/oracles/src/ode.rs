//! Classic fourth-order Runge-Kutta for the sagittal pendulum
//! `x'' = ω² (x − u)`.

/// Integrates from `(x0, v0)` over `duration` with `substeps` RK4 steps.
pub fn rk4_pendulum(x0: f64, v0: f64, u: f64, omega: f64, duration: f64, substeps: usize) -> (f64, f64) {
    let w2 = omega * omega;
    let f = |x: f64, v: f64| (v, w2 * (x - u));
    let h = duration / substeps as f64;
    let (mut x, mut v) = (x0, v0);
    for _ in 0..substeps {
        let (k1x, k1v) = f(x, v);
        let (k2x, k2v) = f(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        let (k3x, k3v) = f(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        let (k4x, k4v) = f(x + h * k3x, v + h * k3v);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    (x, v)
}
