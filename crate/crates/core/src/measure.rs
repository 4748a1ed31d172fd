//! Categorical distributions and signed measures on a fixed, uniformly spaced
//! support grid.
//!
//! Everything here lives on a [`SupportGrid`]. Mass that lands between two
//! atoms is split between them by linear interpolation, and mass that lands
//! outside `[z_min, z_max]` is clamped to the boundary atom. The projection is
//! linear, so the same code path serves probability vectors and the signed,
//! zero-mass rows of a [`SignedGradientMeasure`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on total mass when constructing a [`CategoricalDistribution`].
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Tolerance on the total mass of each row of a [`SignedGradientMeasure`].
pub const ZERO_MASS_TOL: f64 = 1e-8;

/// Uniform grid `z_i = z_min + i * (z_max - z_min) / (n_atoms - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct SupportGrid {
    z_min: f64,
    z_max: f64,
    n_atoms: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    z_min: f64,
    z_max: f64,
    n_atoms: usize,
}

impl TryFrom<RawGrid> for SupportGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        SupportGrid::new(raw.z_min, raw.z_max, raw.n_atoms)
    }
}

impl std::fmt::Display for SupportGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}] x {}", self.z_min, self.z_max, self.n_atoms)
    }
}

impl SupportGrid {
    pub fn new(z_min: f64, z_max: f64, n_atoms: usize) -> Result<Self> {
        if !z_min.is_finite() || !z_max.is_finite() {
            return Err(Error::invalid("grid bounds must be finite"));
        }
        if z_min >= z_max {
            return Err(Error::invalid(format!(
                "grid requires z_min < z_max, got [{z_min}, {z_max}]"
            )));
        }
        if n_atoms < 2 {
            return Err(Error::invalid(format!(
                "grid requires at least 2 atoms, got {n_atoms}"
            )));
        }
        Ok(Self {
            z_min,
            z_max,
            n_atoms,
        })
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Distance between neighbouring atoms.
    pub fn spacing(&self) -> f64 {
        (self.z_max - self.z_min) / (self.n_atoms - 1) as f64
    }

    pub fn atom(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_atoms);
        if i == self.n_atoms - 1 {
            self.z_max
        } else {
            self.z_min + i as f64 * self.spacing()
        }
    }

    pub fn atoms(&self) -> Vec<f64> {
        (0..self.n_atoms).map(|i| self.atom(i)).collect()
    }

    /// Index of the atom closest to `y` (ties go to the lower atom).
    pub fn nearest_index(&self, y: f64) -> usize {
        let (lower, frac) = self.locate(y);
        if frac > 0.5 {
            lower + 1
        } else {
            lower
        }
    }

    /// Lower bracketing atom and the fraction of the way to the next atom.
    ///
    /// The fraction is in `[0, 1)`; it is exactly 0 when `y` is clamped to an
    /// endpoint.
    pub(crate) fn locate(&self, y: f64) -> (usize, f64) {
        if y <= self.z_min {
            return (0, 0.0);
        }
        if y >= self.z_max {
            return (self.n_atoms - 1, 0.0);
        }
        let t = (y - self.z_min) / self.spacing();
        let lower = t.floor();
        let idx = lower as usize;
        if idx >= self.n_atoms - 1 {
            return (self.n_atoms - 1, 0.0);
        }
        (idx, t - lower)
    }

    /// Projects `mass * δ_y` onto the grid.
    ///
    /// Returns one entry when `y` sits on an atom or outside the grid, two
    /// entries (lower, upper) otherwise.
    pub fn project_dirac(&self, y: f64, mass: f64) -> Result<Vec<(usize, f64)>> {
        if !y.is_finite() || !mass.is_finite() {
            return Err(Error::invalid(format!(
                "project_dirac needs finite inputs, got y={y}, mass={mass}"
            )));
        }
        let (lower, frac) = self.locate(y);
        if frac == 0.0 {
            Ok(vec![(lower, mass)])
        } else {
            let upper_mass = mass * frac;
            Ok(vec![(lower, mass - upper_mass), (lower + 1, upper_mass)])
        }
    }

    pub fn ensure_same(&self, other: &SupportGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

/// The linear map `Π_C (b_{c,γ})_#` on a fixed grid, precomputed per atom.
///
/// Atom `i` is sent to `c + γ z_i` and split between its bracketing atoms.
#[derive(Debug, Clone)]
pub struct PushforwardMap {
    grid: SupportGrid,
    cost: f64,
    gamma: f64,
    targets: Vec<(usize, f64)>,
}

impl PushforwardMap {
    pub fn new(grid: SupportGrid, cost: f64, gamma: f64) -> Result<Self> {
        if !cost.is_finite() {
            return Err(Error::invalid(format!("cost must be finite, got {cost}")));
        }
        check_gamma(gamma)?;
        let targets = (0..grid.n_atoms())
            .map(|i| grid.locate(cost + gamma * grid.atom(i)))
            .collect();
        Ok(Self {
            grid,
            cost,
            gamma,
            targets,
        })
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `out += scale * map(input)`.
    #[inline]
    pub fn apply_add(&self, input: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.targets.len());
        debug_assert_eq!(out.len(), self.targets.len());
        for (&w, &(lower, frac)) in input.iter().zip(&self.targets) {
            if w == 0.0 {
                continue;
            }
            let m = scale * w;
            if frac == 0.0 {
                out[lower] += m;
            } else {
                let upper = m * frac;
                out[lower] += m - upper;
                out[lower + 1] += upper;
            }
        }
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        self.apply_add(input, 1.0, &mut out);
        out
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")))
    }
}

/// Applies `Π_C (b_{c,γ})_#` to an arbitrary (possibly signed) weight vector.
pub fn pushforward_project(
    grid: &SupportGrid,
    weights: &[f64],
    cost: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if weights.len() != grid.n_atoms() {
        return Err(Error::dim(format!(
            "expected {} weights, got {}",
            grid.n_atoms(),
            weights.len()
        )));
    }
    Ok(PushforwardMap::new(*grid, cost, gamma)?.apply(weights))
}

/// Running sums of `weights`.
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// `Σ_i w_i z_i` for any weight vector on `grid`.
pub fn measure_mean(grid: &SupportGrid, weights: &[f64]) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(i, &w)| w * grid.atom(i))
        .sum()
}

/// Smallest index whose CDF reaches `level`; `level = 0` selects index 0.
pub(crate) fn tail_index(cdf: &[f64], level: f64) -> usize {
    cdf.iter()
        .position(|&f| f >= level)
        .unwrap_or(cdf.len() - 1)
}

/// Probability vector on a [`SupportGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct CategoricalDistribution {
    grid: SupportGrid,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    z_min: f64,
    z_max: f64,
    n_atoms: usize,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for CategoricalDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        let grid = SupportGrid::new(raw.z_min, raw.z_max, raw.n_atoms)?;
        CategoricalDistribution::new(grid, raw.probs)
    }
}

impl From<CategoricalDistribution> for RawDistribution {
    fn from(d: CategoricalDistribution) -> Self {
        RawDistribution {
            z_min: d.grid.z_min,
            z_max: d.grid.z_max,
            n_atoms: d.grid.n_atoms,
            probs: d.probs,
        }
    }
}

impl CategoricalDistribution {
    pub fn new(grid: SupportGrid, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != grid.n_atoms() {
            return Err(Error::dim(format!(
                "grid has {} atoms but {} probabilities were given",
                grid.n_atoms(),
                probs.len()
            )));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::invalid(format!("probability {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { grid, probs })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn renormalized(grid: SupportGrid, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid("cannot renormalize weights"));
        }
        Self::new(grid, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn dirac(grid: SupportGrid, index: usize) -> Result<Self> {
        if index >= grid.n_atoms() {
            return Err(Error::invalid(format!("atom {index} out of range")));
        }
        let mut probs = vec![0.0; grid.n_atoms()];
        probs[index] = 1.0;
        Ok(Self { grid, probs })
    }

    /// `Π_C δ_y`.
    pub fn projected_dirac(grid: SupportGrid, y: f64) -> Result<Self> {
        let mut probs = vec![0.0; grid.n_atoms()];
        for (i, w) in grid.project_dirac(y, 1.0)? {
            probs[i] += w;
        }
        Ok(Self { grid, probs })
    }

    pub fn uniform(grid: SupportGrid) -> Self {
        let n = grid.n_atoms();
        Self {
            grid,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn cdf(&self) -> Vec<f64> {
        cumulative(&self.probs)
    }

    /// Smallest atom whose CDF reaches `level`, for `level` in `(0, 1]`.
    pub fn quantile_atom(&self, level: f64) -> Result<(usize, f64)> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::invalid(format!(
                "quantile level must lie in (0, 1], got {level}"
            )));
        }
        let j = tail_index(&self.cdf(), level);
        Ok((j, self.grid.atom(j)))
    }

    pub fn mean(&self) -> f64 {
        measure_mean(&self.grid, &self.probs)
    }

    /// `Π_C (b_{c,γ})_# self`.
    pub fn pushforward(&self, cost: f64, gamma: f64) -> Result<Self> {
        let probs = pushforward_project(&self.grid, &self.probs, cost, gamma)?;
        Ok(Self {
            grid: self.grid,
            probs,
        })
    }

    pub fn cramer_distance(&self, other: &Self) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(cramer_between(&self.grid, &self.probs, &other.probs))
    }

    pub fn wasserstein1_distance(&self, other: &Self) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let f1 = self.cdf();
        let f2 = other.cdf();
        let n = f1.len();
        let sum: f64 = f1[..n - 1]
            .iter()
            .zip(&f2[..n - 1])
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum * self.grid.spacing())
    }
}

pub fn cramer_distance(a: &CategoricalDistribution, b: &CategoricalDistribution) -> Result<f64> {
    a.cramer_distance(b)
}

pub fn wasserstein1_distance(
    a: &CategoricalDistribution,
    b: &CategoricalDistribution,
) -> Result<f64> {
    a.wasserstein1_distance(b)
}

/// Cramér (ℓ2) distance between two weight vectors of equal total mass.
///
/// The CDF difference is a step function that vanishes beyond `z_max`, so the
/// integral is a finite sum over the `n - 1` inter-atom bins.
pub(crate) fn cramer_between(grid: &SupportGrid, p: &[f64], q: &[f64]) -> f64 {
    let mut fp = 0.0;
    let mut fq = 0.0;
    let mut acc = 0.0;
    for (a, b) in p[..p.len() - 1].iter().zip(&q[..q.len() - 1]) {
        fp += a;
        fq += b;
        let d = fp - fq;
        acc += d * d;
    }
    (acc * grid.spacing()).sqrt()
}

/// Per-parameter signed measures `∂p_i/∂θ_j` on a shared grid.
///
/// Stored row-major: row `j` holds the weights over atoms for parameter `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGradientMeasure {
    grid: SupportGrid,
    n_params: usize,
    weights: Vec<f64>,
}

impl SignedGradientMeasure {
    pub fn zeros(grid: SupportGrid, n_params: usize) -> Self {
        Self {
            grid,
            n_params,
            weights: vec![0.0; n_params * grid.n_atoms()],
        }
    }

    pub fn from_rows(grid: SupportGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_params = rows.len();
        let mut weights = Vec::with_capacity(n_params * grid.n_atoms());
        for row in rows {
            if row.len() != grid.n_atoms() {
                return Err(Error::dim("gradient row length differs from grid size"));
            }
            weights.extend(row);
        }
        let m = Self {
            grid,
            n_params,
            weights,
        };
        m.check_zero_mass(ZERO_MASS_TOL)?;
        Ok(m)
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.grid.n_atoms();
        &self.weights[j * n..(j + 1) * n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let n = self.grid.n_atoms();
        &mut self.weights[j * n..(j + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.grid.n_atoms())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn row_mass(&self, j: usize) -> f64 {
        self.row(j).iter().sum()
    }

    /// Largest `|Σ_i w_ji|` over rows.
    pub fn max_abs_row_mass(&self) -> f64 {
        self.rows()
            .map(|r| r.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn check_zero_mass(&self, tol: f64) -> Result<()> {
        let worst = self.max_abs_row_mass();
        if worst <= tol {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "gradient measure row has total mass {worst}, expected 0"
            )))
        }
    }

    /// `Σ_i w_ji z_i` for row `j`.
    pub fn row_mean(&self, j: usize) -> f64 {
        measure_mean(&self.grid, self.row(j))
    }

    /// Per-parameter means, i.e. the gradient of the expected return.
    pub fn means(&self) -> Vec<f64> {
        self.rows().map(|r| measure_mean(&self.grid, r)).collect()
    }

    pub fn pushforward(&self, cost: f64, gamma: f64) -> Result<Self> {
        let map = PushforwardMap::new(self.grid, cost, gamma)?;
        Ok(self.pushforward_with(&map))
    }

    pub fn pushforward_with(&self, map: &PushforwardMap) -> Self {
        let mut out = Self::zeros(self.grid, self.n_params);
        let n = self.grid.n_atoms();
        for (src, dst) in self
            .weights
            .chunks_exact(n)
            .zip(out.weights.chunks_exact_mut(n))
        {
            map.apply_add(src, 1.0, dst);
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.n_params != other.n_params {
            return Err(Error::dim("gradient measures differ in parameter count"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights.iter_mut().for_each(|w| *w *= factor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid11() -> SupportGrid {
        SupportGrid::new(0.0, 10.0, 11).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(SupportGrid::new(0.0, 10.0, 1).is_err());
        assert!(SupportGrid::new(1.0, 1.0, 5).is_err());
        assert!(SupportGrid::new(f64::NAN, 1.0, 5).is_err());
        let g = grid11();
        assert_eq!(g.spacing(), 1.0);
        assert_eq!(g.atom(10), 10.0);
    }

    #[test]
    fn project_dirac_cases() {
        let g = grid11();
        assert_eq!(g.project_dirac(-5.0, 1.0).unwrap(), vec![(0, 1.0)]);
        assert_eq!(g.project_dirac(3.5, 1.0).unwrap(), vec![(3, 0.5), (4, 0.5)]);
        assert_eq!(g.project_dirac(7.0, 1.0).unwrap(), vec![(7, 1.0)]);
        assert_eq!(g.project_dirac(12.0, 2.0).unwrap(), vec![(10, 2.0)]);
        assert_eq!(g.project_dirac(10.0, 1.0).unwrap(), vec![(10, 1.0)]);
        assert!(g.project_dirac(f64::NAN, 1.0).is_err());
        assert!(g.project_dirac(1.0, f64::INFINITY).is_err());
        // signed mass
        let split = g.project_dirac(2.25, -4.0).unwrap();
        assert_eq!(split, vec![(2, -3.0), (3, -1.0)]);
    }

    #[test]
    fn clipped_mean_is_boundary() {
        let g = grid11();
        let d = CategoricalDistribution::projected_dirac(g, -3.0).unwrap();
        assert_eq!(d.mean(), 0.0);
        let d = CategoricalDistribution::projected_dirac(g, 42.0).unwrap();
        assert_eq!(d.mean(), 10.0);
    }

    #[test]
    fn pushforward_of_bottom_atom() {
        let g = grid11();
        let d = CategoricalDistribution::dirac(g, 0).unwrap();
        let out = d.pushforward(2.5, 0.0).unwrap();
        let mut expect = vec![0.0; 11];
        expect[2] = 0.5;
        expect[3] = 0.5;
        assert_eq!(out.probs(), expect.as_slice());
    }

    #[test]
    fn pushforward_on_grid_relocates() {
        // c + γ z_i lands on atoms exactly when γ = 0.5 and c = 1 for even i
        let g = grid11();
        let mut probs = vec![0.0; 11];
        probs[4] = 0.25;
        probs[8] = 0.75;
        let d = CategoricalDistribution::new(g, probs).unwrap();
        let out = d.pushforward(1.0, 0.5).unwrap();
        assert_eq!(out.probs()[3], 0.25);
        assert_eq!(out.probs()[5], 0.75);
    }

    #[test]
    fn cdf_examples() {
        let g = SupportGrid::new(0.0, 3.0, 4).unwrap();
        assert_eq!(
            CategoricalDistribution::dirac(g, 0).unwrap().cdf(),
            vec![1.0; 4]
        );
        assert_eq!(
            CategoricalDistribution::uniform(g).cdf(),
            vec![0.25, 0.5, 0.75, 1.0]
        );
    }

    #[test]
    fn quantile_examples() {
        let g = SupportGrid::new(0.0, 3.0, 4).unwrap();
        let u = CategoricalDistribution::uniform(g);
        assert_eq!(u.quantile_atom(0.5).unwrap(), (1, 1.0));
        let d = CategoricalDistribution::dirac(g, 2).unwrap();
        assert_eq!(d.quantile_atom(0.01).unwrap(), (2, 2.0));
        assert_eq!(d.quantile_atom(1.0).unwrap(), (2, 2.0));
        let g3 = SupportGrid::new(0.0, 2.0, 3).unwrap();
        let p = CategoricalDistribution::new(g3, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(p.quantile_atom(0.9).unwrap().0, 2);
        assert!(p.quantile_atom(0.0).is_err());
        assert!(p.quantile_atom(1.5).is_err());
    }

    #[test]
    fn distances_on_unit_grid() {
        let g = SupportGrid::new(0.0, 4.0, 5).unwrap();
        let d0 = CategoricalDistribution::dirac(g, 0).unwrap();
        let d1 = CategoricalDistribution::dirac(g, 1).unwrap();
        let d2 = CategoricalDistribution::dirac(g, 2).unwrap();
        assert_abs_diff_eq!(d0.cramer_distance(&d1).unwrap(), 1.0);
        assert_abs_diff_eq!(d0.wasserstein1_distance(&d2).unwrap(), 2.0);
        assert_eq!(d0.cramer_distance(&d0).unwrap(), 0.0);
        let other = SupportGrid::new(0.0, 5.0, 5).unwrap();
        let e = CategoricalDistribution::dirac(other, 0).unwrap();
        assert!(matches!(
            d0.cramer_distance(&e),
            Err(Error::GridMismatch { .. })
        ));
        assert!(d0.wasserstein1_distance(&e).is_err());
    }

    #[test]
    fn mean_examples() {
        let g = grid11();
        assert_eq!(CategoricalDistribution::dirac(g, 7).unwrap().mean(), 7.0);
        let mut p = vec![0.0; 11];
        p[0] = 0.5;
        p[10] = 0.5;
        assert_eq!(CategoricalDistribution::new(g, p).unwrap().mean(), 5.0);
        let mut row = vec![0.0; 11];
        row[0] = -1.0;
        row[1] = 1.0;
        assert_eq!(measure_mean(&g, &row), 1.0);
    }

    #[test]
    fn distribution_validation() {
        let g = SupportGrid::new(0.0, 2.0, 3).unwrap();
        assert!(CategoricalDistribution::new(g, vec![0.5, 0.5]).is_err());
        assert!(CategoricalDistribution::new(g, vec![0.5, 0.6, -0.1]).is_err());
        assert!(CategoricalDistribution::new(g, vec![0.5, 0.4, 0.0]).is_err());
        let r = CategoricalDistribution::renormalized(g, vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.probs(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let g = SupportGrid::new(-1.5, 7.25, 6).unwrap();
        let d = CategoricalDistribution::renormalized(g, vec![0.1, 0.7, 1e-17, 3.3, 0.2, 1.0 / 3.0])
            .unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"z_min\":-1.5"));
        assert!(s.contains("\"n_atoms\":6"));
        let back: CategoricalDistribution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let bad = r#"{"z_min":0,"z_max":1,"n_atoms":2,"probs":[0.3,0.3]}"#;
        assert!(serde_json::from_str::<CategoricalDistribution>(bad).is_err());
    }

    #[test]
    fn signed_measure_rows() {
        let g = SupportGrid::new(0.0, 2.0, 3).unwrap();
        let m =
            SignedGradientMeasure::from_rows(g, vec![vec![-1.0, 0.0, 1.0], vec![0.5, -1.0, 0.5]])
                .unwrap();
        assert_eq!(m.means(), vec![2.0, 0.0]);
        assert!(SignedGradientMeasure::from_rows(g, vec![vec![1.0, 0.0, 0.0]]).is_err());
        let p = m.pushforward(0.3, 0.9).unwrap();
        assert!(p.max_abs_row_mass() < 1e-12);
    }
}
