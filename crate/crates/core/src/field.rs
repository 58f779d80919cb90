//! Element density fields and the operations applied to them.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower density bound.
pub const RHO_MIN: f64 = 0.001;

/// Per-element scalar field, x-fastest lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    res: [usize; 3],
    data: Vec<f64>,
}

impl DensityField {
    pub fn new(res: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = res.iter().product();
        if data.len() != expected {
            return Err(Error::FieldSize {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { res, data })
    }

    pub fn constant(res: [usize; 3], value: f64) -> Self {
        Self {
            res,
            data: vec![value; res.iter().product()],
        }
    }

    pub fn zeros(res: [usize; 3]) -> Self {
        Self::constant(res, 0.0)
    }

    pub fn res(&self) -> [usize; 3] {
        self.res
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_values(self) -> Vec<f64> {
        self.data
    }

    #[inline(always)]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.res[0] * (y + self.res[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn mean(&self) -> f64 {
        crate::reduce::sum_by(&self.data, |&v| v) / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &DensityField) -> f64 {
        let pairs: Vec<(f64, f64)> = self.data.iter().copied().zip(other.data.iter().copied()).collect();
        crate::reduce::sum_by(&pairs, |&(a, b)| a * b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> DensityField {
        DensityField {
            res: self.res,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Quartic bump `(1 - (d/r)^2)^2`.
    Spline4,
    /// Cone `r - d`.
    Linear,
}

impl std::str::FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "spline4" => Ok(Self::Spline4),
            "linear" => Ok(Self::Linear),
            _ => Err(format!("unknown kernel '{s}' (expected spline4|linear)")),
        }
    }
}

impl Kernel {
    pub fn weight(self, d: f64, radius: f64) -> f64 {
        if d > radius {
            return 0.0;
        }
        match self {
            Kernel::Linear => (radius - d).max(0.0),
            Kernel::Spline4 => {
                let t = 1.0 - (d / radius).powi(2);
                t * t
            }
        }
    }
}

/// Normalized periodic convolution with a radial kernel (radius in elements).
#[derive(Clone, Debug, PartialEq)]
pub struct RadialFilter {
    radius: f64,
    kernel: Kernel,
    taps: Vec<([isize; 3], f64)>,
}

impl RadialFilter {
    pub fn new(radius: f64, kernel: Kernel) -> Self {
        let mut taps = Vec::new();
        if radius >= 1.0 {
            let r = radius.floor() as isize;
            for z in -r..=r {
                for y in -r..=r {
                    for x in -r..=r {
                        let d = ((x * x + y * y + z * z) as f64).sqrt();
                        let w = kernel.weight(d, radius);
                        if w > 0.0 {
                            taps.push(([x, y, z], w));
                        }
                    }
                }
            }
        }
        if taps.is_empty() {
            taps.push(([0, 0, 0], 1.0));
        }
        let total: f64 = taps.iter().map(|t| t.1).sum();
        for t in &mut taps {
            t.1 /= total;
        }
        Self {
            radius,
            kernel,
            taps,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn taps(&self) -> &[([isize; 3], f64)] {
        &self.taps
    }

    /// Apply the filter. The tap set is point-symmetric, so this is also its adjoint.
    pub fn apply(&self, field: &DensityField) -> DensityField {
        let [n0, n1, n2] = field.res;
        let src = &field.data;
        let wrap = |x: isize, n: usize| x.rem_euclid(n as isize) as usize;
        let mut out = vec![0.0; src.len()];
        out.par_chunks_mut(n0 * n1).enumerate().for_each(|(z, slab)| {
            for y in 0..n1 {
                for x in 0..n0 {
                    let mut acc = 0.0;
                    for (o, w) in &self.taps {
                        let xx = wrap(x as isize + o[0], n0);
                        let yy = wrap(y as isize + o[1], n1);
                        let zz = wrap(z as isize + o[2], n2);
                        acc += w * src[xx + n0 * (yy + n1 * zz)];
                    }
                    slab[x + n0 * y] = acc;
                }
            }
        });
        DensityField {
            res: field.res,
            data: out,
        }
    }
}

pub fn radial_filter(field: &DensityField, radius: f64, kernel: Kernel) -> DensityField {
    RadialFilter::new(radius, kernel).apply(field)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Conv(RadialFilter),
    Pow(f64),
}

/// Chain `ρ → [conv] → [pow p]` evaluated forward with a reverse-mode backward.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensityExpr {
    stages: Vec<Stage>,
}

/// Intermediate values of one evaluation; `values[0]` is the input.
#[derive(Clone, Debug)]
pub struct DensityTape {
    values: Vec<DensityField>,
}

impl DensityTape {
    pub fn output(&self) -> &DensityField {
        self.values.last().expect("tape holds the input")
    }

    pub fn input(&self) -> &DensityField {
        &self.values[0]
    }
}

impl DensityExpr {
    pub fn var() -> Self {
        Self::default()
    }

    pub fn conv(mut self, filter: RadialFilter) -> Self {
        self.stages.push(Stage::Conv(filter));
        self
    }

    pub fn pow(mut self, p: f64) -> Self {
        self.stages.push(Stage::Pow(p));
        self
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn eval(&self, rho: &DensityField) -> DensityTape {
        let mut values = vec![rho.clone()];
        for stage in &self.stages {
            let x = values.last().unwrap();
            let y = match stage {
                Stage::Conv(f) => f.apply(x),
                Stage::Pow(p) => {
                    let p = *p;
                    x.map(|v| v.powf(p))
                }
            };
            values.push(y);
        }
        DensityTape { values }
    }

    /// Map `∂f/∂output` to `∂f/∂input`.
    pub fn backward(&self, tape: &DensityTape, grad: &DensityField) -> DensityField {
        let mut g = grad.clone();
        for (k, stage) in self.stages.iter().enumerate().rev() {
            g = match stage {
                Stage::Conv(f) => f.apply(&g),
                Stage::Pow(p) => {
                    let x = &tape.values[k];
                    let p = *p;
                    DensityField {
                        res: g.res,
                        data: g
                            .data
                            .par_iter()
                            .zip(x.data.par_iter())
                            .map(|(&gi, &xi)| gi * p * xi.powf(p - 1.0))
                            .collect(),
                    }
                }
            };
        }
        g
    }
}

pub fn density_expr_eval(expr: &DensityExpr, rho: &DensityField) -> DensityField {
    expr.eval(rho).output().clone()
}

pub fn density_expr_backward(expr: &DensityExpr, tape: &DensityTape, grad: &DensityField) -> DensityField {
    expr.backward(tape, grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryType {
    #[default]
    None,
    /// Mirrors across the three mid-planes.
    Reflect3,
    /// Mid-plane mirrors plus the diagonal swaps (full cube reflection group).
    Reflect6,
    /// Quarter-turn rotations about the three center axes.
    Rotate3,
}

impl std::str::FromStr for SymmetryType {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "reflect3" => Ok(Self::Reflect3),
            "reflect6" => Ok(Self::Reflect6),
            "rotate3" => Ok(Self::Rotate3),
            _ => Err(format!("unknown symmetry '{s}' (expected none|reflect3|reflect6|rotate3)")),
        }
    }
}

impl std::fmt::Display for SymmetryType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::Reflect3 => "reflect3",
            Self::Reflect6 => "reflect6",
            Self::Rotate3 => "rotate3",
        };
        f.write_str(s)
    }
}

/// Signed axis permutation acting on centered coordinates:
/// `x'_k = sign_k · x_{perm_k}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CubeMap {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
}

const PERMS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [1, 0, 2],
    [0, 2, 1],
    [2, 1, 0],
    [1, 2, 0],
    [2, 0, 1],
];

fn perm_parity(p: [usize; 3]) -> bool {
    // true for odd permutations
    matches!(p, [1, 0, 2] | [0, 2, 1] | [2, 1, 0])
}

impl SymmetryType {
    /// The group elements (including the identity).
    pub fn group(self) -> Vec<CubeMap> {
        let flips: Vec<[bool; 3]> = (0..8)
            .map(|b| [b & 1 != 0, b & 2 != 0, b & 4 != 0])
            .collect();
        let identity = CubeMap {
            perm: [0, 1, 2],
            flip: [false; 3],
        };
        match self {
            SymmetryType::None => vec![identity],
            SymmetryType::Reflect3 => flips
                .iter()
                .map(|&flip| CubeMap {
                    perm: [0, 1, 2],
                    flip,
                })
                .collect(),
            SymmetryType::Reflect6 | SymmetryType::Rotate3 => {
                let mut g = Vec::new();
                for perm in PERMS {
                    for &flip in &flips {
                        let nflip = flip.iter().filter(|&&f| f).count();
                        let odd = perm_parity(perm) ^ (nflip % 2 == 1);
                        if self == SymmetryType::Reflect6 || !odd {
                            g.push(CubeMap { perm, flip });
                        }
                    }
                }
                g
            }
        }
    }
}

impl CubeMap {
    fn apply(&self, e: [usize; 3], n: [usize; 3]) -> [usize; 3] {
        // centered doubled coordinates: c = 2 i - (N - 1)
        let c = [0, 1, 2].map(|k| 2 * e[k] as isize - (n[k] as isize - 1));
        std::array::from_fn(|k| {
            let src = self.perm[k];
            let v = if self.flip[k] { -c[src] } else { c[src] };
            ((v + n[k] as isize - 1) / 2) as usize
        })
    }
}

/// Average the field over the orbits of the symmetry group. Every orbit
/// member receives bitwise the same value and symmetric fields are fixed points.
pub fn symmetrize(field: &DensityField, sym: SymmetryType) -> Result<DensityField> {
    if sym == SymmetryType::None {
        return Ok(field.clone());
    }
    let res = field.res;
    if matches!(sym, SymmetryType::Reflect6 | SymmetryType::Rotate3)
        && !(res[0] == res[1] && res[1] == res[2])
    {
        return Err(Error::Symmetry {
            sym: sym.to_string(),
            res,
        });
    }
    let group = sym.group();
    let inv = 1.0 / group.len() as f64;
    let data = (0..field.len())
        .into_par_iter()
        .map(|idx| {
            let e = [
                idx % res[0],
                (idx / res[0]) % res[1],
                idx / (res[0] * res[1]),
            ];
            let mut orbit: Vec<usize> = group
                .iter()
                .map(|g| {
                    let m = g.apply(e, res);
                    field.index(m[0], m[1], m[2])
                })
                .collect();
            orbit.sort_unstable();
            let base = field.data[orbit[0]];
            let dev: f64 = orbit.iter().map(|&j| field.data[j] - base).sum();
            base + dev * inv
        })
        .collect();
    Ok(DensityField { res, data })
}

pub fn init_constant(res: [usize; 3], volume: f64) -> DensityField {
    DensityField::constant(res, volume)
}

/// Randomized trigonometric initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigInitSpec {
    /// Highest frequency of the trigonometric basis.
    pub order: usize,
    pub seed: u64,
    pub volume: f64,
    /// Sigmoid steepness.
    pub steepness: f64,
}

impl TrigInitSpec {
    pub fn new(order: usize, seed: u64, volume: f64) -> Self {
        Self {
            order,
            seed,
            volume,
            steepness: 15.0,
        }
    }

    /// Range cap of the sigmoid projection.
    pub fn range_cap(&self) -> f64 {
        (1.5 * self.volume).min(1.0)
    }

    /// Basis weights and rotation quaternion drawn from the seed.
    pub fn draw(&self) -> ([f64; 4], Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let q = [0; 4].map(|_| rng.gen_range(-1.0..=1.0));
        let weights = (0..basis_count(self.order))
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        (q, weights)
    }
}

/// Size of the trigonometric basis with pairwise products: `6n + 6n(6n-1)/2`.
pub fn basis_count(order: usize) -> usize {
    let t = 6 * order;
    t + t * t.saturating_sub(1) / 2
}

pub fn rotation_from_quaternion(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-12 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Weighted basis sum at every element center.
pub fn trig_signal(res: [usize; 3], order: usize, q: [f64; 4], weights: &[f64]) -> Vec<f64> {
    let rot = rotation_from_quaternion(q);
    let n: usize = res.iter().product();
    (0..n)
        .into_par_iter()
        .map(|idx| {
            let e = [idx % res[0], (idx / res[0]) % res[1], idx / (res[0] * res[1])];
            let x = [0, 1, 2].map(|k| (e[k] as f64 + 0.5) / res[k] as f64 - 0.5);
            let xb: [f64; 3] = std::array::from_fn(|r| (0..3).map(|c| rot[r][c] * x[c]).sum());
            let mut t = Vec::with_capacity(6 * order);
            for xi in xb {
                for k in 1..=order {
                    let a = 2.0 * PI * k as f64 * xi;
                    t.push(a.cos());
                    t.push(a.sin());
                }
            }
            let mut y = 0.0;
            let mut w = weights.iter();
            for &ti in &t {
                y += w.next().unwrap() * ti;
            }
            for a in 0..t.len() {
                for b in a + 1..t.len() {
                    y += w.next().unwrap() * t[a] * t[b];
                }
            }
            y
        })
        .collect()
}

/// Result of an initialization; `fallback` records a degenerate projection.
#[derive(Clone, Debug)]
pub struct InitOutcome {
    pub field: DensityField,
    pub fallback: bool,
}

pub fn init_trig(spec: &TrigInitSpec, res: [usize; 3]) -> InitOutcome {
    let (q, weights) = spec.draw();
    let y = trig_signal(res, spec.order, q, &weights);
    project_to_volume(&y, res, spec.volume, spec.steepness, spec.range_cap())
}

/// As [`init_trig`], with the signal averaged over `sym` before projection so
/// the field is symmetric and keeps its contrast.
pub fn init_trig_symmetric(spec: &TrigInitSpec, res: [usize; 3], sym: SymmetryType) -> Result<InitOutcome> {
    let (q, weights) = spec.draw();
    let y = DensityField::new(res, trig_signal(res, spec.order, q, &weights))?;
    let y = symmetrize(&y, sym)?;
    Ok(project_to_volume(y.values(), res, spec.volume, spec.steepness, spec.range_cap()))
}

/// Sigmoid projection `ρ_min + cap / (1 + exp(-k (y - μ)))` with `μ` bisected
/// so the mean equals `volume`.
pub fn project_to_volume(y: &[f64], res: [usize; 3], volume: f64, k: f64, cap: f64) -> InitOutcome {
    let sig = |yi: f64, mu: f64| (RHO_MIN + cap / (1.0 + (-k * (yi - mu)).exp())).min(1.0);
    let mean_at = |mu: f64| crate::reduce::sum_by(y, |&yi| sig(yi, mu)) / y.len() as f64;
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fallback = || InitOutcome {
        field: DensityField::constant(res, volume),
        fallback: true,
    };
    if !(ymin.is_finite() && ymax.is_finite()) {
        return fallback();
    }
    let (mut lo, mut hi) = (ymin - 60.0 / k, ymax + 60.0 / k);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) > volume {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    if (mean_at(mu) - volume).abs() > 1e-4 {
        return fallback();
    }
    InitOutcome {
        field: DensityField {
            res,
            data: y.par_iter().map(|&yi| sig(yi, mu)).collect(),
        },
        fallback: false,
    }
}
