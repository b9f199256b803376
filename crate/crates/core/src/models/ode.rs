//! Scalar comparison equations for the ground-state functional `y(t) = ⟨u(t), φ⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values above which an integrated solution counts as blown up.
pub const BLOWUP_LEVEL: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonKind {
    /// `y' = −λ₁y + y²`, the lower solution of the quadratic problem.
    Blowup,
    /// The Gronwall envelope `e^{λ₁t}(y₀ − λ₁(e^{(k−λ₁)t} − 1)∫φ² / (2(k−λ₁)))`.
    SignChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeBound {
    pub kind: ComparisonKind,
    pub lambda1: f64,
    pub y0: f64,
    pub k: Option<f64>,
    pub phi_l2_squared: Option<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Blow-up time or first zero, from the closed form.
    pub event_time: Option<f64>,
    /// The same event located numerically (adaptive integration or bisection).
    pub numeric_event_time: Option<f64>,
}

impl OdeBound {
    /// Closed-form comparison value at `t` (`+∞` past blow-up).
    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            ComparisonKind::Blowup => blowup_closed_form(self.lambda1, self.y0, t),
            ComparisonKind::SignChange => envelope(
                self.lambda1,
                self.k.expect("set for envelopes"),
                self.y0,
                self.phi_l2_squared.expect("set for envelopes"),
                t,
            ),
        }
    }
}

/// `y(t) = λ/(1 − (1 − λ/y₀)e^{λt})` for `y' = −λy + y²`.
pub fn blowup_closed_form(lambda: f64, y0: f64, t: f64) -> f64 {
    if y0 == 0.0 {
        return 0.0;
    }
    let den = 1.0 - (1.0 - lambda / y0) * (lambda * t).exp();
    if den <= 0.0 {
        f64::INFINITY
    } else {
        lambda / den
    }
}

/// `T* = −ln(1 − λ/y₀)/λ` when `y₀ > λ`.
pub fn blowup_time(lambda: f64, y0: f64) -> Option<f64> {
    (y0 > lambda).then(|| -(1.0 - lambda / y0).ln() / lambda)
}

pub fn envelope(lambda: f64, k: f64, y0: f64, phi2: f64, t: f64) -> f64 {
    let r = k - lambda;
    (lambda * t).exp() * (y0 - lambda * ((r * t).exp() - 1.0) / (2.0 * r) * phi2)
}

/// First zero of the envelope: `t₁ = ln(1 + 2(k−λ)y₀/(λ∫φ²))/(k−λ)`.
pub fn envelope_root(lambda: f64, k: f64, y0: f64, phi2: f64) -> f64 {
    let r = k - lambda;
    (1.0 + 2.0 * r * y0 / (lambda * phi2)).ln() / r
}

/// Adaptive Dormand–Prince 5(4) for a scalar equation, stopping at `t_end`
/// or when `|y|` exceeds [`BLOWUP_LEVEL`].
pub fn dormand_prince(f: impl Fn(f64, f64) -> f64, t0: f64, y0: f64, t_end: f64, tol: f64) -> (Vec<f64>, Vec<f64>) {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut ts = vec![t0];
    let mut ys = vec![y0];
    let (mut t, mut y) = (t0, y0);
    let mut h = ((t_end - t0) * 1e-3).max(1e-12);
    while t < t_end && y.abs() < BLOWUP_LEVEL {
        h = h.min(t_end - t);
        let mut k = [0.0; 7];
        for s in 0..7 {
            let ys_ = y + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s] = f(t + C[s] * h, ys_);
        }
        let y5 = y + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
        let y4 = y + h * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
        let err = (y5 - y4).abs();
        let scale = tol * (1.0 + y.abs().max(y5.abs()));
        if err <= scale || h < 1e-14 {
            t += h;
            y = y5;
            ts.push(t);
            ys.push(y);
            if !y.is_finite() {
                break;
            }
        }
        let factor = if err == 0.0 { 5.0 } else { 0.9 * (scale / err).powf(0.2) };
        h *= factor.clamp(0.2, 5.0);
        if h < 1e-14 {
            break;
        }
    }
    (ts, ys)
}

/// Comparison solution for the quadratic blow-up example (`ComparisonKind::Blowup`)
/// or the Gronwall envelope (`ComparisonKind::SignChange`, needs `k` and `∫φ²`).
pub fn ode_comparison(
    kind: ComparisonKind,
    lambda1: f64,
    y0: f64,
    k: Option<f64>,
    phi_l2_squared: Option<f64>,
    horizon: f64,
) -> Result<OdeBound> {
    if !(y0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("comparison needs y₀ ≥ 0, got {y0}")));
    }
    if !(lambda1 > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidArgument("comparison needs λ₁ > 0 and a positive horizon".into()));
    }
    match kind {
        ComparisonKind::Blowup => {
            let (times, values) = dormand_prince(|_t, y| -lambda1 * y + y * y, 0.0, y0, horizon, 1e-10);
            let last = *values.last().expect("nonempty");
            let numeric_event_time = (last.abs() >= BLOWUP_LEVEL).then(|| *times.last().expect("nonempty"));
            Ok(OdeBound {
                kind,
                lambda1,
                y0,
                k: None,
                phi_l2_squared: None,
                times,
                values,
                event_time: blowup_time(lambda1, y0),
                numeric_event_time,
            })
        }
        ComparisonKind::SignChange => {
            let k = k.ok_or_else(|| Error::InvalidArgument("the envelope needs k".into()))?;
            let phi2 = phi_l2_squared.ok_or_else(|| Error::InvalidArgument("the envelope needs ∫φ²".into()))?;
            if !(k > lambda1) {
                return Err(Error::InvalidArgument(format!("need k > λ₁, got k = {k}, λ₁ = {lambda1}")));
            }
            let g = |t: f64| envelope(lambda1, k, y0, phi2, t);
            let samples = 1000;
            let times: Vec<f64> = (0..=samples).map(|i| horizon * i as f64 / samples as f64).collect();
            let values: Vec<f64> = times.iter().map(|&t| g(t)).collect();
            // Bisection on the first sign change of the sampled envelope.
            let numeric_event_time = values.windows(2).position(|w| w[0] > 0.0 && w[1] <= 0.0).map(|i| {
                let (mut lo, mut hi) = (times[i], times[i + 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            });
            Ok(OdeBound {
                kind,
                lambda1,
                y0,
                k: Some(k),
                phi_l2_squared: Some(phi2),
                times,
                values,
                event_time: (y0 > 0.0).then(|| envelope_root(lambda1, k, y0, phi2)),
                numeric_event_time,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadratic_blowup_at_ln2() {
        let b = ode_comparison(ComparisonKind::Blowup, 1.0, 2.0, None, None, 1.0).unwrap();
        assert!((b.event_time.unwrap() - 2f64.ln()).abs() < 1e-15);
        let num = b.numeric_event_time.unwrap();
        assert!((num - 2f64.ln()).abs() < 1e-6, "{num}");
        // Integrated values follow the closed form before blow-up.
        for (t, y) in b.times.iter().zip(&b.values) {
            if *y < 1e3 {
                let exact = blowup_closed_form(1.0, 2.0, *t);
                assert!((y - exact).abs() <= 1e-7 * y.abs().max(1.0), "t = {t}: {y} vs {exact}");
            }
        }
    }

    #[test]
    fn equilibrium_does_not_blow_up() {
        let b = ode_comparison(ComparisonKind::Blowup, 1.0, 1.0, None, None, 5.0).unwrap();
        assert!(b.event_time.is_none() && b.numeric_event_time.is_none());
        assert!(b.values.iter().all(|y| (y - 1.0).abs() < 1e-9));
    }

    #[test]
    fn envelope_root_closed_form() {
        let b = ode_comparison(ComparisonKind::SignChange, 1.0, 1.0, Some(2.0), Some(PI / 8.0), 3.0).unwrap();
        let t1 = (1.0 + 16.0 / PI).ln();
        assert!((b.event_time.unwrap() - t1).abs() < 1e-14);
        assert!((b.numeric_event_time.unwrap() - t1).abs() < 1e-12);
        assert!((t1 - 1.8071).abs() < 1e-4);
    }

    #[test]
    fn sign_change_requires_k_above_lambda() {
        assert!(ode_comparison(ComparisonKind::SignChange, 1.0, 1.0, Some(1.0), Some(0.4), 3.0).is_err());
    }
}
