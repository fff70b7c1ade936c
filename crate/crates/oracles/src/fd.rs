//! Central finite differences that refuse to answer across a kink.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdProbe {
    Smooth(f64),
    /// One-sided slopes disagree: a non-differentiable point (e.g. a ReLU
    /// switching) lies within `h` of the probe.
    Kink { forward: f64, backward: f64 },
}

pub fn central_difference(x0: f64, h: f64, mut f: impl FnMut(f64) -> f64) -> FdProbe {
    let fp = f(x0 + h);
    let f0 = f(x0);
    let fm = f(x0 - h);
    let forward = (fp - f0) / h;
    let backward = (f0 - fm) / h;
    let scale = forward.abs().max(backward.abs());
    if (forward - backward).abs() > 1e-6 + 1e-5 * scale {
        return FdProbe::Kink { forward, backward };
    }
    FdProbe::Smooth((fp - fm) / (2.0 * h))
}
