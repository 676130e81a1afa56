//! Reflection-phase subproblem: projected gradient ascent on
//! `min_i R_UE,i − max_j R_Eve,j` over a box of phases.
//!
//! For a fixed precoder each link signal is affine in `e^{jυ}`:
//! `s = d + Σ_n g_n e^{jυ_n}` with `d = h_DLᵀ f` and
//! `g_n = c_r·[h_HU]_n·[H_BH f]_n`, so
//! `∂|s|²/∂υ_n = −2 Im(s* g_n e^{jυ_n})`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{OptSettings, Scenario, TargetGrid};
use crate::channel::{ChannelSet, HrisState, Node};
use crate::error::Result;
use crate::geometry::CVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for PhaseBounds {
    fn default() -> Self {
        Self { lo: -std::f64::consts::FRAC_PI_2, hi: std::f64::consts::FRAC_PI_2 }
    }
}

impl PhaseBounds {
    pub fn full_circle() -> Self {
        Self { lo: -std::f64::consts::PI, hi: std::f64::consts::PI }
    }

    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone)]
pub struct ReflectionOutcome {
    pub phases: DVector<f64>,
    pub initial_value: f64,
    /// Unclamped secrecy margin reached.
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// One link `s(υ) = d + Σ g_n e^{jυ_n}`.
#[derive(Debug, Clone)]
struct Link {
    direct: Complex64,
    g: CVector,
}

impl Link {
    fn new(ch: &ChannelSet, node: Node, f: &CVector, c_r: f64) -> Self {
        let direct = (ch.dl(node).transpose() * f)[(0, 0)];
        let bf = &ch.h_bh * f;
        let hu = ch.hu(node);
        let g = CVector::from_fn(bf.len(), |n, _| hu[n] * bf[n] * c_r);
        Self { direct, g }
    }

    fn signal(&self, x: &DVector<f64>) -> Complex64 {
        self.direct + self.g.iter().zip(x.iter()).map(|(g, &v)| g * Complex64::from_polar(1.0, v)).sum::<Complex64>()
    }

    fn rate(&self, x: &DVector<f64>, sigma2: f64) -> f64 {
        (self.signal(x).norm_sqr() / sigma2).ln_1p() / std::f64::consts::LN_2
    }

    fn rate_grad(&self, x: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        let s = self.signal(x);
        let k = 1.0 / ((sigma2 + s.norm_sqr()) * std::f64::consts::LN_2);
        DVector::from_fn(x.len(), |n, _| -2.0 * (s.conj() * self.g[n] * Complex64::from_polar(1.0, x[n])).im * k)
    }
}

struct Objective {
    ue: Vec<Link>,
    eve: Vec<Link>,
    sigma2: f64,
}

impl Objective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let ue = self.ue.iter().map(|l| l.rate(x, self.sigma2)).fold(f64::INFINITY, f64::min);
        let eve = self.eve.iter().map(|l| l.rate(x, self.sigma2)).fold(f64::NEG_INFINITY, f64::max);
        ue - eve
    }

    /// Gradient of the active pair (argmin UE rate, argmax Eve rate).
    fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let pick = |links: &[Link], worse: fn(f64, f64) -> bool| {
            let mut best = 0;
            let mut bv = links[0].rate(x, self.sigma2);
            for (i, l) in links.iter().enumerate().skip(1) {
                let v = l.rate(x, self.sigma2);
                if worse(v, bv) {
                    best = i;
                    bv = v;
                }
            }
            best
        };
        let i = pick(&self.ue, |a, b| a < b);
        let j = pick(&self.eve, |a, b| a > b);
        self.ue[i].rate_grad(x, self.sigma2) - self.eve[j].rate_grad(x, self.sigma2)
    }
}

fn project(x: &DVector<f64>, b: &PhaseBounds) -> DVector<f64> {
    x.map(|v| b.project(v))
}

fn wrap(v: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let w = v.rem_euclid(t);
    if w > std::f64::consts::PI {
        w - t
    } else {
        w
    }
}

/// Armijo projected gradient ascent from `x0`.
fn ascend(obj: &Objective, x0: DVector<f64>, b: &PhaseBounds, max_iter: usize, tol: f64) -> (DVector<f64>, f64, usize, f64) {
    let mut x = project(&x0, b);
    let mut val = obj.value(&x);
    let mut gnorm = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        let g = obj.grad(&x);
        gnorm = (project(&(&x + &g), b) - &x).norm();
        if !(gnorm >= tol) {
            break;
        }
        it += 1;
        let gmax = g.amax();
        let mut alpha = 1.0 / gmax;
        let mut moved = false;
        for _ in 0..60 {
            let y = project(&(&x + &g * alpha), b);
            let vy = obj.value(&y);
            if vy >= val + 1e-4 * g.dot(&(&y - &x)) && vy >= val {
                moved = y != x;
                x = y;
                val = vy;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, val, it, gnorm)
}

/// Maximizes the worst-case secrecy margin over the reflection phases.
///
/// Starts from the current phases, from zero and from a UE-aligned point, and
/// keeps the best result; the returned value is never below the starting one.
pub fn optimize_reflection(
    scn: &Scenario,
    grid: &TargetGrid,
    f: &CVector,
    state: &HrisState,
    settings: &OptSettings,
) -> Result<ReflectionOutcome> {
    let c_r = scn.constants.power_split.reflection_gain(state.rho);
    let obj = Objective {
        ue: (0..grid.ue.len()).map(|i| Link::new(grid.ue_channels(i), Node::Ue, f, c_r)).collect(),
        eve: (0..grid.eve.len()).map(|j| Link::new(grid.eve_channels(j), Node::Eve, f, c_r)).collect(),
        sigma2: scn.constants.noise_power_w,
    };
    let b = &settings.phase_bounds;
    let x0 = state.phases.clone();
    let initial_value = obj.value(&x0);

    let first = &obj.ue[0];
    let aligned = DVector::from_fn(x0.len(), |n, _| {
        if first.g[n].norm() == 0.0 {
            0.0
        } else {
            wrap(first.direct.arg() - first.g[n].arg())
        }
    });
    let mut best = (x0.clone(), initial_value, 0, 0.0);
    for (k, start) in [x0.clone(), DVector::zeros(x0.len()), aligned].into_iter().enumerate() {
        let r = ascend(&obj, start, b, settings.reflection_max_iter, settings.reflection_grad_tol);
        if k == 0 || r.1 > best.1 {
            best = r;
        }
    }
    // the box projection may move an out-of-box start; never report worse than x0
    if best.1 < initial_value {
        best = (x0, initial_value, best.2, best.3);
    }
    Ok(ReflectionOutcome { phases: best.0, initial_value, value: best.1, iterations: best.2, grad_norm: best.3 })
}
