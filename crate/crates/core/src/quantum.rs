//! Spin-1/2 singlet reference curve with the equal-spacing geometry: the four
//! coplanar settings a, b', a', b are separated by Θ/3, so `H(A|B)` is taken at
//! Θ and each of the three other terms at Θ/3.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::entropy::binary_entropy;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleConfig {
    theta: f64,
}

impl AngleConfig {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 180.0) {
            return Err(domain(format!("theta must lie in (0, 180) degrees, got {theta}")));
        }
        Ok(AngleConfig { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sub_angle(&self) -> f64 {
        self.theta / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub theta: f64,
    pub deficit: f64,
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..=180.0).contains(&theta) {
        return Err(domain(format!("angle must lie in [0, 180] degrees, got {theta}")));
    }
    Ok(())
}

/// Probability that both detectors report the same bit, `sin²(θ/2)`.
pub fn singlet_prob_same(theta: f64) -> Result<f64> {
    check_angle(theta)?;
    let s = (theta.to_radians() / 2.0).sin();
    Ok((s * s).clamp(0.0, 1.0))
}

pub fn quantum_conditional_entropy(theta: f64) -> Result<f64> {
    binary_entropy(singlet_prob_same(theta)?)
}

/// `h(Θ) - 3·h(Θ/3)` in bits.
pub fn quantum_deficit(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= 180.0) {
        return Err(domain(format!("theta must lie in (0, 180] degrees, got {theta}")));
    }
    Ok(quantum_conditional_entropy(theta)? - 3.0 * quantum_conditional_entropy(theta / 3.0)?)
}

fn deficit_unchecked(theta: f64) -> f64 {
    quantum_deficit(theta).expect("angle checked by caller")
}

/// Midpoints of the cells of width `step` covering `[theta_min, theta_max]`.
fn midpoints(theta_min: f64, theta_max: f64, step: f64) -> Result<impl Iterator<Item = f64>> {
    if !(0.0 <= theta_min && theta_min < theta_max && theta_max <= 180.0) {
        return Err(domain(format!("bad angle range [{theta_min}, {theta_max}]")));
    }
    if !(step > 0.0) {
        return Err(domain(format!("step must be positive, got {step}")));
    }
    let cells = ((theta_max - theta_min) / step).round().max(1.0) as u64;
    let width = (theta_max - theta_min) / cells as f64;
    Ok((0..cells).map(move |i| theta_min + (i as f64 + 0.5) * width))
}

/// Fraction of a uniform angle grid on which the deficit is positive.
pub fn violation_fraction(theta_min: f64, theta_max: f64, step: f64) -> Result<f64> {
    let mut total = 0u64;
    let mut positive = 0u64;
    for theta in midpoints(theta_min, theta_max, step)? {
        total += 1;
        if deficit_unchecked(theta) > 0.0 {
            positive += 1;
        }
    }
    Ok(positive as f64 / total as f64)
}

const BRACKET: (f64, f64) = (10.0, 120.0);

/// Root of the deficit in (10°, 120°) by bisection.
pub fn crossing_angle(tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let (mut lo, mut hi) = BRACKET;
    let (f_lo, f_hi) = (deficit_unchecked(lo), deficit_unchecked(hi));
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi });
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if deficit_unchecked(mid).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Argmax and maximum of the deficit below the crossing: a 0.01° scan followed
/// by golden-section refinement around the best grid point.
pub fn max_quantum_deficit() -> CurvePoint {
    let upper = crossing_angle(1e-6).expect("curve changes sign in its bracket");
    let step = 0.01;
    let mut best = CurvePoint { theta: step, deficit: deficit_unchecked(step) };
    let mut theta = step;
    while theta < upper {
        let d = deficit_unchecked(theta);
        if d > best.deficit {
            best = CurvePoint { theta, deficit: d };
        }
        theta += step;
    }
    let (mut a, mut b) = ((best.theta - step).max(1e-9), (best.theta + step).min(upper));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-9 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if deficit_unchecked(c) > deficit_unchecked(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let theta = 0.5 * (a + b);
    CurvePoint { theta, deficit: deficit_unchecked(theta) }
}

/// Curve sampled at the midpoint grid used by [`violation_fraction`].
pub fn curve(theta_min: f64, theta_max: f64, step: f64) -> Result<Vec<CurvePoint>> {
    // theta = 0 itself is excluded by the midpoint grid
    Ok(midpoints(theta_min, theta_max, step)?
        .map(|theta| CurvePoint { theta, deficit: deficit_unchecked(theta) })
        .collect())
}

/// Writes `theta_degrees,deficit_bits` rows.
pub fn write_curve_csv<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta_degrees", "deficit_bits"]).map_err(csv_err)?;
    for p in points {
        w.write_record([p.theta.to_string(), p.deficit.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
