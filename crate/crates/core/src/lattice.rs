//! The 1D array of independent condensates and region bookkeeping.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::ShotRecord;
use crate::units::TWO_PI;

pub const N_REF: usize = 500;
pub const MAX_SITES: usize = 30;

/// How per-site atom numbers are assigned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AtomNumberLaw {
    /// Independent uniform integers on `[min, max]`.
    Uniform { min: usize, max: usize },
    /// Deterministic envelope `peak - (peak - edge) * (x / x_edge)^2`
    /// centered on the array.
    Parabolic { peak: usize, edge: usize },
    /// Every site gets `n`.
    Constant { n: usize },
    /// Explicit per-site list.
    PerSite { n: Vec<usize> },
}

impl Default for AtomNumberLaw {
    fn default() -> Self {
        AtomNumberLaw::Uniform { min: 300, max: 600 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub n_sites: usize,
    pub atom_number_law: AtomNumberLaw,
    /// rad/s at `N_REF` atoms
    pub chi_ref: f64,
    /// rad/s
    pub delta0: f64,
    /// rad/s per atom
    pub delta_slope: f64,
    /// µm
    pub spacing: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            n_sites: 25,
            atom_number_law: AtomNumberLaw::default(),
            chi_ref: TWO_PI * 0.064,
            delta0: 0.0,
            delta_slope: TWO_PI / 40.0,
            spacing: 5.5,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 || self.n_sites > MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "n_sites must be in [1, {MAX_SITES}], got {}",
                self.n_sites
            )));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("spacing must be > 0, got {}", self.spacing)));
        }
        if !(self.chi_ref.is_finite() && self.chi_ref > 0.0) {
            return Err(Error::InvalidArgument(format!("chi_ref must be > 0, got {}", self.chi_ref)));
        }
        if !self.delta0.is_finite() || !self.delta_slope.is_finite() {
            return Err(Error::InvalidArgument("delta0 and delta_slope must be finite".into()));
        }
        match &self.atom_number_law {
            AtomNumberLaw::Uniform { min, max } if *min == 0 || min > max => Err(Error::InvalidArgument(
                format!("empty atom-number range [{min}, {max}]"),
            )),
            AtomNumberLaw::Parabolic { peak, edge } if *edge == 0 || edge > peak => Err(Error::InvalidArgument(
                format!("parabolic law needs 0 < edge <= peak, got edge {edge}, peak {peak}"),
            )),
            AtomNumberLaw::Constant { n: 0 } => Err(Error::InvalidArgument("atom number must be > 0".into())),
            AtomNumberLaw::PerSite { n } if n.len() != self.n_sites || n.contains(&0) => {
                Err(Error::InvalidArgument(format!(
                    "per-site law needs {} positive entries, got {:?}",
                    self.n_sites, n
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn chi(&self, n_atoms: usize) -> f64 {
        self.chi_ref * (N_REF as f64 / n_atoms as f64).sqrt()
    }

    pub fn delta(&self, n_atoms: usize) -> f64 {
        self.delta0 + self.delta_slope * (n_atoms as f64 - N_REF as f64)
    }

    pub fn site(&self, index: usize, n_atoms: usize) -> SiteParams {
        SiteParams {
            site_index: index,
            n_atoms,
            chi: self.chi(n_atoms),
            delta_offset: self.delta(n_atoms),
            delta_slope: self.delta_slope,
            position: index as f64 * self.spacing,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteParams {
    pub site_index: usize,
    pub n_atoms: usize,
    /// rad/s
    pub chi: f64,
    /// rad/s
    pub delta_offset: f64,
    /// rad/s per atom, kept so the parameters can follow atom loss
    pub delta_slope: f64,
    /// µm
    pub position: f64,
}

impl SiteParams {
    /// χ after the site has lost atoms and holds `n` instead.
    pub fn chi_at(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        self.chi * (self.n_atoms as f64 / n as f64).sqrt()
    }

    pub fn delta_at(&self, n: usize) -> f64 {
        self.delta_offset + self.delta_slope * (n as f64 - self.n_atoms as f64)
    }
}

pub fn build_lattice<R: Rng + ?Sized>(config: &LatticeConfig, rng: &mut R) -> Result<Vec<SiteParams>> {
    config.validate()?;
    let n = config.n_sites;
    let numbers: Vec<usize> = match &config.atom_number_law {
        AtomNumberLaw::Uniform { min, max } => (0..n).map(|_| rng.random_range(*min..=*max)).collect(),
        AtomNumberLaw::Parabolic { peak, edge } => {
            let half = (n as f64 - 1.0) / 2.0;
            let drop = (*peak - *edge) as f64;
            (0..n)
                .map(|i| {
                    let u = if half > 0.0 { (i as f64 - half) / half } else { 0.0 };
                    (*peak as f64 - drop * u * u).round() as usize
                })
                .collect()
        }
        AtomNumberLaw::Constant { n: k } => vec![*k; n],
        AtomNumberLaw::PerSite { n } => n.clone(),
    };
    Ok(numbers.into_iter().enumerate().map(|(i, k)| config.site(i, k)).collect())
}

/// Disjoint groups of site indices that are summed before analysis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionSpec {
    pub regions: Vec<Vec<usize>>,
}

impl RegionSpec {
    pub fn new(regions: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &regions {
            for &i in r {
                if !seen.insert(i) {
                    return Err(Error::InvalidArgument(format!("site {i} appears in more than one region")));
                }
            }
        }
        Ok(Self { regions })
    }

    pub fn single(region: Vec<usize>) -> Result<Self> {
        Self::new(vec![region])
    }

    /// Left and right halves of `n_sites`; the middle site of an odd array
    /// is left out.
    pub fn halves(n_sites: usize) -> Self {
        let h = n_sites / 2;
        Self { regions: vec![(0..h).collect(), (n_sites - h..n_sites).collect()] }
    }

    /// The `w` leftmost and `w` rightmost sites.
    pub fn outer_windows(n_sites: usize, w: usize) -> Result<Self> {
        if w == 0 || 2 * w > n_sites {
            return Err(Error::InvalidArgument(format!("window {w} does not fit {n_sites} sites twice")));
        }
        Ok(Self { regions: vec![(0..w).collect(), (n_sites - w..n_sites).collect()] })
    }

    pub fn check(&self, n_sites: usize) -> Result<()> {
        for r in &self.regions {
            if let Some(&i) = r.iter().find(|&&i| i >= n_sites) {
                return Err(Error::IndexOutOfRange { index: i, len: n_sites });
            }
        }
        Ok(())
    }
}

/// Summed detected `(N_a, N_b)` for each region. Indices refer to positions in
/// the shot's site list.
pub fn sum_region(shot: &ShotRecord, region: &RegionSpec) -> Result<Vec<(f64, f64)>> {
    region.check(shot.sites.len())?;
    Ok(region
        .regions
        .iter()
        .map(|r| {
            r.iter().fold((0.0, 0.0), |(a, b), &i| {
                let s = &shot.sites[i];
                (a + s.n_a_det, b + s.n_b_det)
            })
        })
        .collect())
}

/// Subsets of sites whose summed atom number lies within `band` (relative)
/// of `target`. Returns every such subset, or a seeded uniform sample of
/// `max_subsets` of them when there are more. Each subset is a single-region
/// spec of sorted `site_index` values; the list is sorted.
pub fn enumerate_combinations<R: Rng + ?Sized>(
    sites: &[SiteParams],
    target: usize,
    band: f64,
    max_subsets: usize,
    rng: &mut R,
) -> Result<Vec<RegionSpec>> {
    if !(band.is_finite() && band >= 0.0) {
        return Err(Error::InvalidArgument(format!("band must be >= 0, got {band}")));
    }
    let mut sorted: Vec<(usize, usize)> = sites.iter().map(|s| (s.site_index, s.n_atoms)).collect();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate site_index".into()));
    }
    let lo = (target as f64 * (1.0 - band)).ceil().max(1.0) as usize;
    let hi = (target as f64 * (1.0 + band)).floor() as usize;
    if lo > hi {
        return Ok(Vec::new());
    }
    let n = sorted.len();
    // f[i][s]: completions of sites i.. that land in [lo, hi] from partial sum s
    let width = hi + 1;
    let mut f = vec![0u64; (n + 1) * width];
    for s in lo..=hi {
        f[n * width + s] = 1;
    }
    for i in (0..n).rev() {
        let w = sorted[i].1;
        for s in 0..width {
            let skip = f[(i + 1) * width + s];
            let take = if s + w < width { f[(i + 1) * width + s + w] } else { 0 };
            f[i * width + s] = skip.saturating_add(take);
        }
    }
    let total = f[0];
    if total == 0 {
        return Ok(Vec::new());
    }

    let mut out: BTreeSet<Vec<usize>> = BTreeSet::new();
    if total as u128 <= max_subsets as u128 {
        let mut stack = Vec::new();
        collect_all(&sorted, &f, width, 0, 0, &mut stack, &mut out);
    } else {
        while out.len() < max_subsets {
            let mut pick = Vec::new();
            let mut s = 0;
            for (i, &(idx, w)) in sorted.iter().enumerate() {
                let here = f[i * width + s];
                let take = if s + w < width { f[(i + 1) * width + s + w] } else { 0 };
                if take > 0 && rng.random::<f64>() * (here as f64) < take as f64 {
                    pick.push(idx);
                    s += w;
                }
            }
            out.insert(pick);
        }
    }
    Ok(out.into_iter().map(|r| RegionSpec { regions: vec![r] }).collect())
}

fn collect_all(
    sites: &[(usize, usize)],
    f: &[u64],
    width: usize,
    i: usize,
    s: usize,
    stack: &mut Vec<usize>,
    out: &mut BTreeSet<Vec<usize>>,
) {
    if i == sites.len() {
        out.insert(stack.clone());
        return;
    }
    let (idx, w) = sites[i];
    if f[(i + 1) * width + s] > 0 {
        collect_all(sites, f, width, i + 1, s, stack, out);
    }
    if s + w < width && f[(i + 1) * width + s + w] > 0 {
        stack.push(idx);
        collect_all(sites, f, width, i + 1, s + w, stack, out);
        stack.pop();
    }
}

/// Atom-weighted mean position of a region, µm.
pub fn centroid(sites: &[SiteParams], region: &[usize]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in region {
        let s = sites.get(i).ok_or(Error::IndexOutOfRange { index: i, len: sites.len() })?;
        num += s.position * s.n_atoms as f64;
        den += s.n_atoms as f64;
    }
    if den == 0.0 {
        return Err(Error::DegenerateInput("empty region".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::SiteRecord;
    use crate::rng::{substream, Purpose};

    #[test]
    fn chi_law() {
        let cfg = LatticeConfig::default();
        assert_eq!(cfg.chi(500), TWO_PI * 0.064);
        assert!((500.0 * cfg.chi(500) - TWO_PI * 32.0).abs() < 1e-12);
        assert!(((cfg.delta(540) - cfg.delta(500)) - TWO_PI).abs() < 1e-12);
        assert!(cfg.chi(300) > cfg.chi(301));
    }

    #[test]
    fn build_respects_range_and_spacing() {
        let cfg = LatticeConfig::default();
        let mut rng = substream(3, 0, 0, Purpose::Lattice);
        let sites = build_lattice(&cfg, &mut rng).unwrap();
        assert_eq!(sites.len(), 25);
        for w in sites.windows(2) {
            assert!((w[1].position - w[0].position - 5.5).abs() < 1e-12);
        }
        assert!(sites.iter().all(|s| (300..=600).contains(&s.n_atoms)));
        let bad = LatticeConfig { atom_number_law: AtomNumberLaw::Uniform { min: 5, max: 4 }, ..cfg };
        assert!(build_lattice(&bad, &mut rng).is_err());
    }

    #[test]
    fn parabolic_profile() {
        let cfg = LatticeConfig {
            atom_number_law: AtomNumberLaw::Parabolic { peak: 600, edge: 300 },
            ..LatticeConfig::default()
        };
        let mut rng = substream(0, 0, 0, Purpose::Lattice);
        let sites = build_lattice(&cfg, &mut rng).unwrap();
        assert_eq!(sites[0].n_atoms, 300);
        assert_eq!(sites[12].n_atoms, 600);
        assert_eq!(sites[24].n_atoms, 300);
    }

    fn shot(pops: &[(f64, f64)]) -> ShotRecord {
        ShotRecord {
            shot_index: 0,
            sites: pops
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| SiteRecord {
                    site_index: i,
                    n_a_true: a as usize,
                    n_b_true: b as usize,
                    n_a_det: a,
                    n_b_det: b,
                })
                .collect(),
            noise: Default::default(),
        }
    }

    #[test]
    fn region_sums() {
        let s = shot(&[(10.0, 20.0), (30.0, 40.0), (1.0, 2.0)]);
        assert_eq!(sum_region(&s, &RegionSpec::single(vec![1]).unwrap()).unwrap(), vec![(30.0, 40.0)]);
        assert_eq!(sum_region(&s, &RegionSpec::single(vec![0, 1]).unwrap()).unwrap(), vec![(40.0, 60.0)]);
        assert!(matches!(
            sum_region(&s, &RegionSpec::single(vec![3]).unwrap()),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(RegionSpec::new(vec![vec![0], vec![0, 1]]).is_err());
    }

    #[test]
    fn small_combinations() {
        let cfg = LatticeConfig { n_sites: 3, atom_number_law: AtomNumberLaw::Constant { n: 400 }, ..Default::default() };
        let mut rng = substream(0, 0, 0, Purpose::Combinations);
        let sites = build_lattice(&cfg, &mut rng).unwrap();
        let c = enumerate_combinations(&sites, 800, 0.02, 100, &mut rng).unwrap();
        let got: Vec<Vec<usize>> = c.into_iter().map(|r| r.regions[0].clone()).collect();
        assert_eq!(got, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let one = &sites[..1];
        let c = enumerate_combinations(one, 400, 0.0, 10, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        assert!(enumerate_combinations(one, 5000, 0.02, 10, &mut rng).unwrap().is_empty());
    }
}
