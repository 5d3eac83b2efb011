//! Multipath channel generation for planar and linear arrays.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMat, CVec, C64};

/// Antenna array layout. Spacings are normalized to the wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrayGeometry {
    Upa { nx: usize, ny: usize, dx: f64, dy: f64 },
    Ula { n: usize, d: f64 },
}

impl ArrayGeometry {
    /// Half-wavelength UPA.
    pub fn upa(nx: usize, ny: usize) -> Self {
        ArrayGeometry::Upa {
            nx,
            ny,
            dx: 0.5,
            dy: 0.5,
        }
    }

    /// Half-wavelength ULA.
    pub fn ula(n: usize) -> Self {
        ArrayGeometry::Ula { n, d: 0.5 }
    }

    pub fn num_elements(&self) -> usize {
        match *self {
            ArrayGeometry::Upa { nx, ny, .. } => nx * ny,
            ArrayGeometry::Ula { n, .. } => n,
        }
    }

    /// Shape of the element grid; a ULA is an `n x 1` column.
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            ArrayGeometry::Upa { nx, ny, .. } => (nx, ny),
            ArrayGeometry::Ula { n, .. } => (n, 1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ArrayGeometry::Upa { nx, ny, dx, dy } => nx >= 1 && ny >= 1 && dx > 0.0 && dy > 0.0,
            ArrayGeometry::Ula { n, d } => n >= 1 && d > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid array geometry {self:?}")))
        }
    }
}

/// Path parameters that generated a channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathSet {
    /// Elevation/azimuth angles of departure from a planar array.
    Planar {
        gains: CVec,
        elevation: Vec<f64>,
        azimuth: Vec<f64>,
    },
    /// Departure/arrival angles between two linear arrays.
    Linear {
        gains: CVec,
        departure: Vec<f64>,
        arrival: Vec<f64>,
    },
}

impl PathSet {
    pub fn len(&self) -> usize {
        match self {
            PathSet::Planar { gains, .. } | PathSet::Linear { gains, .. } => gains.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// `N_x x N_y` for a planar transmitter, `N_r x N_t` for a link between
    /// two linear arrays.
    pub h: CMat,
    pub tx: ArrayGeometry,
    /// Receive array when both ends are arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx: Option<ArrayGeometry>,
    pub paths: PathSet,
}

/// Planar array response `A(θ, φ)`, normalized to unit Frobenius norm.
pub fn upa_response(theta: f64, phi: f64, geom: &ArrayGeometry) -> CMat {
    let ArrayGeometry::Upa { nx, ny, dx, dy } = *geom else {
        panic!("upa_response requires a UPA geometry");
    };
    let scale = 1.0 / ((nx * ny) as f64).sqrt();
    let kx = 2.0 * PI * dx * theta.sin() * phi.cos();
    let ky = 2.0 * PI * dy * theta.sin() * phi.sin();
    CMat::from_fn(nx, ny, |m, n| {
        C64::from_polar(scale, m as f64 * kx) * C64::from_polar(1.0, n as f64 * ky)
    })
}

/// Linear array steering vector `[1, e^{-j2π d sinθ}, ...]` (unnormalized).
pub fn ula_steering(theta: f64, geom: &ArrayGeometry) -> CVec {
    let ArrayGeometry::Ula { n, d } = *geom else {
        panic!("ula_steering requires a ULA geometry");
    };
    let k = -2.0 * PI * d * theta.sin();
    (0..n).map(|i| C64::from_polar(1.0, i as f64 * k)).collect()
}

/// Circularly-symmetric complex Gaussian with the given total variance.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let std = (variance / 2.0).sqrt();
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    C64::new(normal.sample(rng), normal.sample(rng))
}

fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-FRAC_PI_2..=FRAC_PI_2)
}

fn check_paths(l: usize) -> Result<()> {
    if l == 0 {
        Err(Error::InvalidConfig("path count must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Sum of path responses for a planar transmitter.
pub fn upa_channel_from_paths(geom: &ArrayGeometry, paths: &PathSet) -> Result<CMat> {
    let PathSet::Planar {
        gains,
        elevation,
        azimuth,
    } = paths
    else {
        return Err(Error::InvalidConfig("planar channel needs planar paths".into()));
    };
    let (nx, ny) = geom.shape();
    let mut h = CMat::zeros(nx, ny);
    for ((&g, &theta), &phi) in gains.iter().zip(elevation).zip(azimuth) {
        let a = upa_response(theta, phi, geom);
        for j in 0..ny {
            for i in 0..nx {
                h.set(i, j, h.get(i, j) + g * a.get(i, j));
            }
        }
    }
    Ok(h)
}

/// Sum of `β a_r(θ_r) a_t(θ_t)^H` outer products.
pub fn ula_channel_from_paths(
    geom_r: &ArrayGeometry,
    geom_t: &ArrayGeometry,
    paths: &PathSet,
) -> Result<CMat> {
    let PathSet::Linear {
        gains,
        departure,
        arrival,
    } = paths
    else {
        return Err(Error::InvalidConfig("linear channel needs linear paths".into()));
    };
    let (nr, nt) = (geom_r.num_elements(), geom_t.num_elements());
    let mut h = CMat::zeros(nr, nt);
    for ((&g, &tt), &tr) in gains.iter().zip(departure).zip(arrival) {
        let ar = ula_steering(tr, geom_r);
        let at = ula_steering(tt, geom_t);
        for j in 0..nt {
            for i in 0..nr {
                h.set(i, j, h.get(i, j) + g * ar[i] * at[j].conj());
            }
        }
    }
    Ok(h)
}

/// Random `L`-path channel from a planar transmitter to a single antenna.
///
/// Gains are CN(0, 1) and both angles uniform on `[-π/2, π/2]`.
pub fn gen_upa_channel<R: Rng + ?Sized>(
    geom: &ArrayGeometry,
    l: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    geom.validate()?;
    check_paths(l)?;
    if !matches!(geom, ArrayGeometry::Upa { .. }) {
        return Err(Error::InvalidConfig("planar channel needs a UPA".into()));
    }
    let mut gains = Vec::with_capacity(l);
    let mut elevation = Vec::with_capacity(l);
    let mut azimuth = Vec::with_capacity(l);
    for _ in 0..l {
        gains.push(complex_normal(rng, 1.0));
        elevation.push(random_angle(rng));
        azimuth.push(random_angle(rng));
    }
    let paths = PathSet::Planar {
        gains,
        elevation,
        azimuth,
    };
    Ok(ChannelRealization {
        h: upa_channel_from_paths(geom, &paths)?,
        tx: *geom,
        rx: None,
        paths,
    })
}

/// Random `L`-path channel between two linear arrays, `N_r x N_t`.
pub fn gen_ula_channel<R: Rng + ?Sized>(
    geom_r: &ArrayGeometry,
    geom_t: &ArrayGeometry,
    l: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    geom_r.validate()?;
    geom_t.validate()?;
    check_paths(l)?;
    if !matches!(geom_r, ArrayGeometry::Ula { .. }) || !matches!(geom_t, ArrayGeometry::Ula { .. })
    {
        return Err(Error::InvalidConfig("linear channel needs two ULAs".into()));
    }
    let mut gains = Vec::with_capacity(l);
    let mut departure = Vec::with_capacity(l);
    let mut arrival = Vec::with_capacity(l);
    for _ in 0..l {
        gains.push(complex_normal(rng, 1.0));
        departure.push(random_angle(rng));
        arrival.push(random_angle(rng));
    }
    let paths = PathSet::Linear {
        gains,
        departure,
        arrival,
    };
    Ok(ChannelRealization {
        h: ula_channel_from_paths(geom_r, geom_t, &paths)?,
        tx: *geom_t,
        rx: Some(*geom_r),
        paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn upa_broadside_is_constant() {
        let g = ArrayGeometry::upa(4, 4);
        for phi in [0.0, 0.7, -1.2] {
            let a = upa_response(0.0, phi, &g);
            assert!(a.as_slice().iter().all(|&z| close(z, C64::new(0.25, 0.0), 1e-15)));
        }
        let a = upa_response(0.3, 0.2, &ArrayGeometry::upa(1, 1));
        assert!(close(a.get(0, 0), C64::new(1.0, 0.0), 1e-15));
    }

    #[test]
    fn upa_endfire_alternates() {
        let a = upa_response(FRAC_PI_2, 0.0, &ArrayGeometry::upa(4, 1));
        let expect = [0.5, -0.5, 0.5, -0.5];
        for (m, &e) in expect.iter().enumerate() {
            assert!(close(a.get(m, 0), C64::new(e, 0.0), 1e-12));
        }
    }

    #[test]
    fn ula_cases() {
        let v = ula_steering(0.0, &ArrayGeometry::ula(8));
        assert!(v.iter().all(|&z| close(z, C64::new(1.0, 0.0), 1e-15)));
        assert_eq!(ula_steering(1.0, &ArrayGeometry::ula(1)), vec![C64::new(1.0, 0.0)]);
        let v = ula_steering(FRAC_PI_2, &ArrayGeometry::ula(3));
        for (z, e) in v.iter().zip([1.0, -1.0, 1.0]) {
            assert!(close(*z, C64::new(e, 0.0), 1e-12));
        }
    }

    #[test]
    fn responses_have_unit_modulus_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ArrayGeometry::Upa {
            nx: 5,
            ny: 3,
            dx: 0.5,
            dy: 0.7,
        };
        for _ in 0..50 {
            let (t, p) = (random_angle(&mut rng), random_angle(&mut rng));
            let a = upa_response(t, p, &g);
            assert!((a.frobenius_norm() - 1.0).abs() < 1e-12);
            let s = (15.0f64).sqrt();
            assert!(a.as_slice().iter().all(|z| (z.norm() * s - 1.0).abs() < 1e-12));
            let v = ula_steering(t, &ArrayGeometry::ula(7));
            assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn single_path_broadside_channels() {
        let paths = PathSet::Planar {
            gains: vec![C64::new(1.0, 0.0)],
            elevation: vec![0.0],
            azimuth: vec![0.4],
        };
        let h = upa_channel_from_paths(&ArrayGeometry::upa(3, 3), &paths).unwrap();
        assert!(h.as_slice().iter().all(|&z| close(z, C64::new(1.0 / 3.0, 0.0), 1e-15)));

        let paths = PathSet::Linear {
            gains: vec![C64::new(1.0, 0.0)],
            departure: vec![0.0],
            arrival: vec![0.0],
        };
        let h = ula_channel_from_paths(&ArrayGeometry::ula(4), &ArrayGeometry::ula(3), &paths)
            .unwrap();
        assert_eq!((h.rows(), h.cols()), (4, 3));
        assert!(h.as_slice().iter().all(|&z| close(z, C64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn upa_channel_matches_term_by_term_sum() {
        let g = ArrayGeometry::upa(10, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ch = gen_upa_channel(&g, 10, &mut rng).unwrap();
        let PathSet::Planar {
            gains,
            elevation,
            azimuth,
        } = &ch.paths
        else {
            unreachable!()
        };
        assert_eq!(gains.len(), 10);
        for m in 0..10 {
            for n in 0..10 {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..10 {
                    let (t, p) = (elevation[l], azimuth[l]);
                    let phase = PI * (m as f64 * t.sin() * p.cos() + n as f64 * t.sin() * p.sin());
                    acc += gains[l] * C64::from_polar(0.1, phase);
                }
                assert!(close(ch.h.get(m, n), acc, 1e-12));
            }
        }
        assert!(elevation.iter().chain(azimuth).all(|a| a.abs() <= FRAC_PI_2));
    }

    #[test]
    fn generation_is_deterministic() {
        let g = ArrayGeometry::upa(4, 5);
        let a = gen_upa_channel(&g, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_upa_channel(&g, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let (r, t) = (ArrayGeometry::ula(4), ArrayGeometry::ula(6));
        let a = gen_ula_channel(&r, &t, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_ula_channel(&r, &t, 2, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.h.rows(), a.h.cols()), (4, 6));
    }

    fn det3(m: [[C64; 3]; 3]) -> C64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    #[test]
    fn linear_channel_rank_is_bounded_by_paths() {
        let g = ArrayGeometry::ula(6);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let ch = gen_ula_channel(&g, &g, 2, &mut rng).unwrap();
            let h = &ch.h;
            let scale = h.frobenius_norm().powi(3);
            for rows in [[0, 2, 5], [1, 3, 4]] {
                for cols in [[0, 1, 2], [2, 4, 5]] {
                    let sub = [0, 1, 2].map(|i| [0, 1, 2].map(|j| h.get(rows[i], cols[j])));
                    assert!(det3(sub).norm() <= 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn gains_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let (mut re2, mut im2) = (0.0, 0.0);
        for _ in 0..n {
            let z = complex_normal(&mut rng, 1.0);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
        }
        assert!((re2 / n as f64 - 0.5).abs() < 0.03);
        assert!((im2 / n as f64 - 0.5).abs() < 0.03);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_upa_channel(&ArrayGeometry::upa(2, 2), 0, &mut rng).is_err());
        assert!(gen_upa_channel(&ArrayGeometry::ula(4), 1, &mut rng).is_err());
        assert!(ArrayGeometry::Upa { nx: 0, ny: 1, dx: 0.5, dy: 0.5 }.validate().is_err());
    }
}
