//! Rational polynomial camera model (RPC00B term ordering).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GeodeticPoint;
use crate::{Error, Result};

pub const RPC_TERMS: usize = 20;

const MIN_DENOMINATOR: f64 = 1e-12;

/// The 20 cubic monomials in RPC00B order, for normalized longitude `l`,
/// latitude `p` and height `h`.
pub fn rpc_terms(l: f64, p: f64, h: f64) -> [f64; RPC_TERMS] {
    [
        1.0,
        l,
        p,
        h,
        l * p,
        l * h,
        p * h,
        l * l,
        p * p,
        h * h,
        p * l * h,
        l * l * l,
        l * p * p,
        l * h * h,
        l * l * p,
        p * p * p,
        p * h * h,
        l * l * h,
        p * p * h,
        h * h * h,
    ]
}

fn poly(coeffs: &[f64; RPC_TERMS], terms: &[f64; RPC_TERMS]) -> f64 {
    coeffs.iter().zip(terms).map(|(c, t)| c * t).sum()
}

/// Offset/scale pair: `normalized = (value - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: f64,
    pub scale: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            offset: 0.0,
            scale: 1.0,
        }
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.scale + self.offset
    }

    fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let (lo, hi) = values
            .clone()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let offset = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        Self {
            offset,
            scale: if half > 0.0 { half } else { 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcModel {
    pub line_num: [f64; RPC_TERMS],
    pub line_den: [f64; RPC_TERMS],
    pub samp_num: [f64; RPC_TERMS],
    pub samp_den: [f64; RPC_TERMS],
    pub lon: Normalization,
    pub lat: Normalization,
    pub alt: Normalization,
    pub row: Normalization,
    pub col: Normalization,
}

impl RpcModel {
    /// Normalized `(lon, lat, alt)` of a ground point.
    pub fn normalized(&self, p: &GeodeticPoint) -> [f64; 3] {
        [
            self.lon.normalize(p.lon),
            self.lat.normalize(p.lat),
            self.alt.normalize(p.alt),
        ]
    }

    /// Projects a ground point to `(row, col)` pixel coordinates.
    ///
    /// Integer `(row, col)` values refer to pixel centers. Points slightly
    /// outside the normalized validity box are evaluated anyway.
    pub fn project(&self, p: &GeodeticPoint) -> Result<(f64, f64)> {
        let [l, lat, h] = self.normalized(p);
        let t = rpc_terms(l, lat, h);
        let line_den = poly(&self.line_den, &t);
        let samp_den = poly(&self.samp_den, &t);
        for den in [line_den, samp_den] {
            if !(den.abs() >= MIN_DENOMINATOR) {
                return Err(Error::DegenerateRpc(den));
            }
        }
        let row = poly(&self.line_num, &t) / line_den;
        let col = poly(&self.samp_num, &t) / samp_den;
        Ok((self.row.denormalize(row), self.col.denormalize(col)))
    }

    /// Least-squares cubic RPC with unit denominators fitted to ground/image
    /// correspondences `(point, row, col)`.
    pub fn fit_polynomial(samples: &[(GeodeticPoint, f64, f64)]) -> Result<RpcModel> {
        if samples.len() < RPC_TERMS {
            return Err(Error::Fit(format!(
                "need at least {RPC_TERMS} correspondences, got {}",
                samples.len()
            )));
        }
        let lon = Normalization::fit(samples.iter().map(|s| s.0.lon));
        let lat = Normalization::fit(samples.iter().map(|s| s.0.lat));
        let alt = Normalization::fit(samples.iter().map(|s| s.0.alt));
        let row = Normalization::fit(samples.iter().map(|s| s.1));
        let col = Normalization::fit(samples.iter().map(|s| s.2));

        let n = samples.len();
        let mut design = DMatrix::zeros(n, RPC_TERMS);
        let mut rows = DVector::zeros(n);
        let mut cols = DVector::zeros(n);
        for (i, (p, r, c)) in samples.iter().enumerate() {
            let t = rpc_terms(lon.normalize(p.lon), lat.normalize(p.lat), alt.normalize(p.alt));
            for (j, v) in t.iter().enumerate() {
                design[(i, j)] = *v;
            }
            rows[i] = row.normalize(*r);
            cols[i] = col.normalize(*c);
        }
        let svd = design.svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * 1e-12;
        let solve = |rhs: &DVector<f64>| -> Result<[f64; RPC_TERMS]> {
            let x = svd
                .solve(rhs, eps)
                .map_err(|e| Error::Fit(format!("RPC least squares: {e}")))?;
            let mut out = [0.0; RPC_TERMS];
            out.copy_from_slice(x.as_slice());
            Ok(out)
        };
        let mut unit = [0.0; RPC_TERMS];
        unit[0] = 1.0;
        Ok(RpcModel {
            line_num: solve(&rows)?,
            line_den: unit,
            samp_num: solve(&cols)?,
            samp_den: unit,
            lon,
            lat,
            alt,
            row,
            col,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_rpc() -> RpcModel {
        let mut line_num = [0.0; RPC_TERMS];
        let mut samp_num = [0.0; RPC_TERMS];
        let mut den = [0.0; RPC_TERMS];
        line_num[2] = 1.0;
        samp_num[1] = 1.0;
        den[0] = 1.0;
        RpcModel {
            line_num,
            line_den: den,
            samp_num,
            samp_den: den,
            lon: Normalization::identity(),
            lat: Normalization::identity(),
            alt: Normalization::identity(),
            row: Normalization::identity(),
            col: Normalization::identity(),
        }
    }

    #[test]
    fn identity_coefficients_pass_lat_lon_through() {
        let rpc = identity_rpc();
        let (row, col) = rpc
            .project(&GeodeticPoint::new(0.25, -0.5, 0.7))
            .unwrap();
        assert_eq!((row, col), (-0.5, 0.25));
    }

    #[test]
    fn offset_point_uses_constant_terms_only() {
        let mut rpc = identity_rpc();
        rpc.line_num[0] = 0.3;
        rpc.line_den[0] = 2.0;
        rpc.samp_num[0] = -0.4;
        rpc.lon = Normalization { offset: 10.0, scale: 0.01 };
        rpc.lat = Normalization { offset: 20.0, scale: 0.02 };
        rpc.alt = Normalization { offset: 50.0, scale: 100.0 };
        rpc.row = Normalization { offset: 1000.0, scale: 500.0 };
        rpc.col = Normalization { offset: 2000.0, scale: 400.0 };
        let (row, col) = rpc.project(&GeodeticPoint::new(10.0, 20.0, 50.0)).unwrap();
        assert!((row - (1000.0 + 500.0 * 0.3 / 2.0)).abs() < 1e-12);
        assert!((col - (2000.0 + 400.0 * -0.4)).abs() < 1e-12);
    }

    #[test]
    fn vanishing_denominator_is_an_error() {
        let mut rpc = identity_rpc();
        rpc.line_den[0] = 0.0;
        assert!(matches!(
            rpc.project(&GeodeticPoint::new(0.0, 0.0, 0.0)),
            Err(Error::DegenerateRpc(_))
        ));
    }

    #[test]
    fn term_order_matches_rpc00b() {
        let t = rpc_terms(2.0, 3.0, 5.0);
        // 1 L P H LP LH PH L² P² H² PLH L³ LP² LH² L²P P³ PH² L²H P²H H³
        let expected = [
            1.0, 2.0, 3.0, 5.0, 6.0, 10.0, 15.0, 4.0, 9.0, 25.0, 30.0, 8.0, 18.0, 50.0, 12.0,
            27.0, 75.0, 20.0, 45.0, 125.0,
        ];
        assert_eq!(t, expected);
    }
}
