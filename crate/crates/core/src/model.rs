//! System geometry, propagation and seeded channel sampling.
//!
//! Users are addressed by `(cell, k)` or by their linear index
//! `m = K_0 + ... + K_{cell-1} + k` (zero based). Channel containers are
//! indexed by the linear user index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CVec = DVector<C64>;
pub type CMat = DMatrix<C64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossExponents {
    pub bs_user: f64,
    pub bs_irs: f64,
    pub irs_user: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of cells (one BS each).
    pub cells: usize,
    /// Antennas per BS.
    pub antennas: usize,
    /// Reflecting units on the IRS.
    pub irs_units: usize,
    pub users_per_cell: Vec<usize>,
    /// Per-BS power budget, watts.
    pub power_w: Vec<f64>,
    /// SINR weights, indexed `[cell][k]`.
    pub weights: Vec<Vec<f64>>,
    /// Noise power in watts, indexed `[cell][k]`.
    pub noise_w: Vec<Vec<f64>>,
    pub bs_positions: Vec<Point>,
    /// User coordinates, indexed `[cell][k]`.
    pub user_positions: Vec<Vec<Point>>,
    pub irs_position: Point,
    pub exponents: PathLossExponents,
    /// Path gain at the reference distance, linear.
    pub c0: f64,
    /// Reference distance, meters.
    pub d0: f64,
    /// Rician factor of the BS-IRS links, linear.
    pub rician_k: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.cells == 0 || self.antennas == 0 || self.irs_units == 0 {
            return bad("cells, antennas and IRS units must be at least 1".into());
        }
        let b = self.cells;
        if self.users_per_cell.len() != b
            || self.power_w.len() != b
            || self.weights.len() != b
            || self.noise_w.len() != b
            || self.bs_positions.len() != b
            || self.user_positions.len() != b
        {
            return bad(format!("per-cell fields must all have length {b}"));
        }
        for cell in 0..b {
            let k = self.users_per_cell[cell];
            if k == 0 {
                return bad(format!("cell {cell} has no users"));
            }
            if self.weights[cell].len() != k
                || self.noise_w[cell].len() != k
                || self.user_positions[cell].len() != k
            {
                return bad(format!("cell {cell}: per-user fields must have length {k}"));
            }
            let positive = |x: &f64| x.is_finite() && *x > 0.0;
            if !positive(&self.power_w[cell])
                || !self.weights[cell].iter().all(positive)
                || !self.noise_w[cell].iter().all(positive)
            {
                return bad(format!("cell {cell}: powers, weights and noise must be positive"));
            }
        }
        if !(self.rician_k >= 0.0) {
            return bad("Rician factor must be nonnegative".into());
        }
        if !(self.c0 > 0.0 && self.d0 > 0.0) {
            return bad("reference gain and distance must be positive".into());
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users_per_cell.iter().sum()
    }

    /// Linear index of user `k` in `cell`.
    pub fn user_index(&self, cell: usize, k: usize) -> usize {
        self.users_per_cell[..cell].iter().sum::<usize>() + k
    }

    /// `(cell, k)` pairs in linear-index order.
    pub fn users(&self) -> Vec<(usize, usize)> {
        (0..self.cells)
            .flat_map(|b| (0..self.users_per_cell[b]).map(move |k| (b, k)))
            .collect()
    }

    /// Serving cell of every user, in linear-index order.
    pub fn cell_of(&self) -> Vec<usize> {
        self.users().into_iter().map(|(b, _)| b).collect()
    }

    pub fn weight(&self, m: usize) -> f64 {
        let (b, k) = self.users()[m];
        self.weights[b][k]
    }

    pub fn noise(&self, m: usize) -> f64 {
        let (b, k) = self.users()[m];
        self.noise_w[b][k]
    }

    /// Weights in linear-index order.
    pub fn weight_vec(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    /// Noise powers in linear-index order.
    pub fn noise_vec(&self) -> Vec<f64> {
        self.noise_w.iter().flatten().copied().collect()
    }
}

/// Sampled channels of one trial. `g[i]` is the `N x M` BS-IRS matrix of BS
/// `i`, `f[m]` the IRS-user vector and `h[i][m]` the direct BS `i` to user
/// `m` vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub g: Vec<CMat>,
    pub f: Vec<CVec>,
    pub h: Vec<Vec<CVec>>,
}

/// `phi[i][m] = diag(f_m^H) G_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeChannels {
    pub phi: Vec<Vec<CMat>>,
}

/// `C0 (d / d0)^(-exponent)`.
pub fn path_loss(d: f64, exponent: f64, c0: f64, d0: f64) -> Result<f64> {
    if !(d > 0.0) || !(d0 > 0.0) || !(c0 > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs positive distance and reference values (d={d}, d0={d0}, C0={c0})"
        )));
    }
    Ok(c0 * (d / d0).powf(-exponent))
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Link {
    Direct = 1,
    IrsUser = 2,
    BsIrs = 3,
}

/// Independent substream for one link. The stream id packs
/// `kind << 56 | i << 40 | cell << 20 | k`.
fn link_rng(seed: u64, kind: Link, i: usize, cell: usize, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((kind as u64) << 56) | ((i as u64) << 40) | ((cell as u64) << 20) | k as u64;
    rng.set_stream(stream);
    rng
}

/// Circularly symmetric complex Gaussian with the given variance.
fn cn<R: Rng>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Half-wavelength ULA along the x axis, `a_l = exp(j pi l u)` where `u` is
/// the direction cosine against the array axis.
fn ula(len: usize, u: f64) -> CVec {
    CVec::from_fn(len, |l, _| C64::from_polar(1.0, std::f64::consts::PI * l as f64 * u))
}

/// Deterministic line-of-sight part of `G_i` (unit-modulus entries).
pub fn los_component(bs: &Point, irs: &Point, n: usize, m: usize) -> CMat {
    let d = bs.distance(irs);
    let u = if d > 0.0 { (irs.x - bs.x) / d } else { 0.0 };
    // departure at the BS along u, arrival at the IRS from the opposite direction
    let arrival = ula(n, -u);
    let departure = ula(m, u);
    &arrival * departure.adjoint()
}

pub fn sample_channels(config: &SystemConfig, seed: u64) -> Result<ChannelSet> {
    config.validate()?;
    let (n, m_ant) = (config.irs_units, config.antennas);
    let ex = config.exponents;
    let pl = |a: &Point, b: &Point, e: f64| path_loss(a.distance(b), e, config.c0, config.d0);
    let users = config.users();

    let mut g = Vec::with_capacity(config.cells);
    for (i, bs) in config.bs_positions.iter().enumerate() {
        let gain = pl(bs, &config.irs_position, ex.bs_irs)?;
        let los = los_component(bs, &config.irs_position, n, m_ant);
        let mut rng = link_rng(seed, Link::BsIrs, i, 0, 0);
        let kr = config.rician_k;
        let (w_los, w_nlos) = ((kr / (1.0 + kr)).sqrt(), (1.0 / (1.0 + kr)).sqrt());
        // column-major fill keeps the draw order fixed
        let nlos = CMat::from_fn(n, m_ant, |_, _| cn(&mut rng, 1.0));
        g.push((los * C64::from(w_los) + nlos * C64::from(w_nlos)) * C64::from(gain.sqrt()));
    }

    let mut f = Vec::with_capacity(users.len());
    for &(b, k) in &users {
        let pos = &config.user_positions[b][k];
        let gain = pl(&config.irs_position, pos, ex.irs_user)?;
        let mut rng = link_rng(seed, Link::IrsUser, 0, b, k);
        f.push(CVec::from_fn(n, |_, _| cn(&mut rng, gain)));
    }

    let mut h = Vec::with_capacity(config.cells);
    for (i, bs) in config.bs_positions.iter().enumerate() {
        let mut row = Vec::with_capacity(users.len());
        for &(b, k) in &users {
            let gain = pl(bs, &config.user_positions[b][k], ex.bs_user)?;
            let mut rng = link_rng(seed, Link::Direct, i, b, k);
            row.push(CVec::from_fn(m_ant, |_, _| cn(&mut rng, gain)));
        }
        h.push(row);
    }
    Ok(ChannelSet { g, f, h })
}

/// `diag(f^H) G`.
pub fn composite_channel(f: &CVec, g: &CMat) -> Result<CMat> {
    if f.len() != g.nrows() {
        return Err(Error::Dimension(format!(
            "IRS-user vector has length {}, BS-IRS matrix has {} rows",
            f.len(),
            g.nrows()
        )));
    }
    let mut out = g.clone();
    for (n, mut row) in out.row_iter_mut().enumerate() {
        row *= f[n].conj();
    }
    Ok(out)
}

pub fn composite_channels(channels: &ChannelSet) -> Result<CompositeChannels> {
    let phi = channels
        .g
        .iter()
        .map(|g| channels.f.iter().map(|f| composite_channel(f, g)).collect())
        .collect::<Result<_>>()?;
    Ok(CompositeChannels { phi })
}

/// `a = Phi^H v + h`.
pub fn effective_channel(phi: &CMat, h: &CVec, v: &CVec) -> Result<CVec> {
    if phi.nrows() != v.len() || phi.ncols() != h.len() {
        return Err(Error::Dimension(format!(
            "composite channel is {}x{}, reflect vector {} and direct channel {}",
            phi.nrows(),
            phi.ncols(),
            v.len(),
            h.len()
        )));
    }
    Ok(phi.ad_mul(v) + h)
}

/// One sampled trial: configuration, channels and composite channels.
#[derive(Clone, Debug)]
pub struct Instance {
    pub config: SystemConfig,
    pub channels: ChannelSet,
    pub composite: CompositeChannels,
}

impl Instance {
    pub fn sample(config: &SystemConfig, seed: u64) -> Result<Self> {
        let channels = sample_channels(config, seed)?;
        Self::from_channels(config.clone(), channels)
    }

    pub fn from_channels(config: SystemConfig, channels: ChannelSet) -> Result<Self> {
        let composite = composite_channels(&channels)?;
        Ok(Self {
            config,
            channels,
            composite,
        })
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users()
    }

    /// Effective channels `a[i][m]` for the reflect vector `v`.
    pub fn effective(&self, v: &CVec) -> Vec<Vec<CVec>> {
        self.composite
            .phi
            .iter()
            .zip(&self.channels.h)
            .map(|(phis, hs)| {
                phis.iter()
                    .zip(hs)
                    .map(|(phi, h)| phi.ad_mul(v) + h)
                    .collect()
            })
            .collect()
    }

    /// Copy with every reflected path removed (`G = 0`).
    pub fn without_irs(&self) -> Self {
        let mut channels = self.channels.clone();
        channels.g.iter_mut().for_each(|g| g.fill(C64::new(0.0, 0.0)));
        Self::from_channels(self.config.clone(), channels).expect("dimensions unchanged")
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn tiny_config(cells: usize, antennas: usize, users: usize, n: usize) -> SystemConfig {
        let bs = [
            Point::new(-100.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(0.0, 100.0),
            Point::new(0.0, -100.0),
        ];
        SystemConfig {
            cells,
            antennas,
            irs_units: n,
            users_per_cell: vec![users; cells],
            power_w: vec![1.0; cells],
            weights: vec![vec![1.0; users]; cells],
            noise_w: vec![vec![1e-11; users]; cells],
            bs_positions: bs[..cells].to_vec(),
            user_positions: (0..cells)
                .map(|b| (0..users).map(|k| Point::new(bs[b].x * 0.05 + k as f64, 1.0 + b as f64)).collect())
                .collect(),
            irs_position: Point::new(0.0, -10.0),
            exponents: PathLossExponents {
                bs_user: 3.6,
                bs_irs: 2.0,
                irs_user: 2.5,
            },
            c0: 1e-3,
            d0: 1.0,
            rician_k: 2.0,
        }
    }

    #[test]
    fn path_loss_examples() {
        assert!((path_loss(1.0, 3.6, 1e-3, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        assert!((path_loss(1.0, 2.0, 1e-3, 1.0).unwrap() - 1e-3).abs() < 1e-18);
        assert!((path_loss(10.0, 2.0, 1e-3, 1.0).unwrap() - 1e-5).abs() < 1e-18);
        let far = path_loss(100.0, 3.6, 1e-3, 1.0).unwrap();
        assert!((far - 6.3096e-11).abs() < 1e-14);
        assert!(matches!(path_loss(0.0, 2.0, 1e-3, 1.0), Err(Error::Domain(_))));
        assert!(matches!(path_loss(-1.0, 2.0, 1e-3, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let cfg = tiny_config(3, 3, 1, 8);
        let a = sample_channels(&cfg, 7).unwrap();
        let b = sample_channels(&cfg, 7).unwrap();
        let c = sample_channels(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.h[0][0], c.h[0][0]);
    }

    #[test]
    fn adding_a_user_keeps_other_links() {
        let cfg = tiny_config(2, 2, 1, 4);
        let mut more = cfg.clone();
        more.users_per_cell[1] = 2;
        more.weights[1].push(1.0);
        more.noise_w[1].push(1e-11);
        more.user_positions[1].push(Point::new(3.0, 3.0));
        let a = sample_channels(&cfg, 3).unwrap();
        let b = sample_channels(&more, 3).unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.h[0][1], b.h[0][1]);
        assert_eq!(a.f[0], b.f[0]);
    }

    #[test]
    fn huge_rician_factor_leaves_los() {
        let mut cfg = tiny_config(2, 3, 1, 6);
        cfg.rician_k = 1e12;
        let ch = sample_channels(&cfg, 11).unwrap();
        for (i, g) in ch.g.iter().enumerate() {
            let gain = path_loss(cfg.bs_positions[i].distance(&cfg.irs_position), 2.0, 1e-3, 1.0).unwrap();
            let los = los_component(&cfg.bs_positions[i], &cfg.irs_position, 6, 3) * C64::from(gain.sqrt());
            assert!((g - &los).norm() / los.norm() < 1e-5);
        }
    }

    #[test]
    fn composite_examples() {
        let f = CVec::from_vec(vec![C64::new(0.0, 2.0)]);
        let g = CMat::from_row_slice(1, 2, &[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        let phi = composite_channel(&f, &g).unwrap();
        assert_eq!(phi[(0, 0)], C64::new(0.0, -2.0));
        assert_eq!(phi[(0, 1)], C64::new(0.0, -2.0));

        let ch = sample_channels(&tiny_config(1, 3, 1, 5), 2).unwrap();
        let ones = CVec::from_element(5, C64::new(1.0, 0.0));
        assert_eq!(composite_channel(&ones, &ch.g[0]).unwrap(), ch.g[0]);
        let phi = composite_channel(&ch.f[0], &ch.g[0]).unwrap();
        for n in 0..5 {
            for j in 0..3 {
                assert!((phi[(n, j)] - ch.f[0][n].conj() * ch.g[0][(n, j)]).norm() <= 1e-12);
            }
        }
        assert!(matches!(
            composite_channel(&CVec::zeros(4), &ch.g[0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn effective_channel_examples() {
        let ch = sample_channels(&tiny_config(1, 3, 1, 5), 4).unwrap();
        let phi = composite_channel(&ch.f[0], &ch.g[0]).unwrap();
        let h = &ch.h[0][0];
        assert_eq!(effective_channel(&phi, h, &CVec::zeros(5)).unwrap(), *h);
        let v = CVec::from_element(5, C64::new(0.3, -0.8));
        assert_eq!(effective_channel(&CMat::zeros(5, 3), h, &v).unwrap(), *h);

        let phi = CMat::from_element(1, 1, C64::new(1.0, 0.0));
        let h = CVec::from_element(1, C64::new(1.0, 0.0));
        let v = CVec::from_element(1, C64::new(0.0, 1.0));
        // Phi^H v + h = i + 1
        assert_eq!(effective_channel(&phi, &h, &v).unwrap()[0], C64::new(1.0, 1.0));
    }

    #[test]
    fn path_loss_at_reference_and_decreasing() {
        assert_eq!(path_loss(2.5, 3.0, 0.7, 2.5).unwrap(), 0.7);
        let mut prev = f64::INFINITY;
        for d in [0.5, 1.0, 2.0, 10.0, 100.0] {
            let v = path_loss(d, 2.5, 1e-3, 1.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
