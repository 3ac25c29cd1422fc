//! Jump of the Weyl matrix across the spectral rays.
//!
//! The matrix `P = Psi Psi0^{-1}` is computed from the scaled solves (the
//! column scalings cancel between the two factors, so the scaled ratio is the
//! unscaled one exactly). On a ray both adjacent sectors produce boundary
//! values; their difference `P_hat = P_plus - P_minus` is the density that
//! the reconstruction integrates. Samples carry exactly the fields of the
//! JSONL interchange format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::linalg::{c, cr, CMat, C64};
use crate::model::ValidatedSystem;
use crate::weyl::{EngineOptions, WeylEngine};
use crate::{Error, Result};

/// Smallest pairing determinant accepted along a ray; below this the column
/// systems are meaningless and the node is rejected outright.
pub const DELTA_FLOOR: f64 = 1e-8;

/// `P = Psi Psi0^{-1}` from the scaled matrices.
pub fn weyl_ratio(psi: &CMat, psi0: &CMat) -> Result<CMat> {
    let inv = psi0
        .inverse()
        .ok_or_else(|| Error::NonConvergence("unperturbed Weyl matrix is singular".into()))?;
    Ok(psi.matmul(&inv))
}

/// One evaluated jump sample.
#[derive(Clone, Debug)]
pub struct SpectralSample {
    pub x: f64,
    pub rho: C64,
    pub ray_index: usize,
    pub p_hat: CMat,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    x: f64,
    rho: [f64; 2],
    ray_index: usize,
    #[serde(rename = "P_hat")]
    p_hat: Vec<Vec<[f64; 2]>>,
}

impl SpectralSample {
    fn to_record(&self) -> SampleRecord {
        let n = self.p_hat.rows();
        SampleRecord {
            x: self.x,
            rho: [self.rho.re, self.rho.im],
            ray_index: self.ray_index,
            p_hat: (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| [self.p_hat[(i, j)].re, self.p_hat[(i, j)].im])
                        .collect()
                })
                .collect(),
        }
    }

    fn from_record(rec: SampleRecord) -> Result<SpectralSample> {
        let n = rec.p_hat.len();
        let mut m = CMat::zeros(n, n);
        for (i, row) in rec.p_hat.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Format("ragged P_hat matrix in sample".into()));
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = c(v[0], v[1]);
            }
        }
        Ok(SpectralSample {
            x: rec.x,
            rho: c(rec.rho[0], rec.rho[1]),
            ray_index: rec.ray_index,
            p_hat: m,
        })
    }
}

/// One JSON object per line.
pub fn write_samples_jsonl<W: Write>(out: &mut W, samples: &[SpectralSample]) -> Result<()> {
    for s in samples {
        let line = serde_json::to_string(&s.to_record())?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples_jsonl<R: BufRead>(input: R) -> Result<Vec<SpectralSample>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)?;
        out.push(SpectralSample::from_record(rec)?);
    }
    Ok(out)
}

/// Health figures aggregated over one batch of ray evaluations.
#[derive(Clone, Copy, Debug, Default)]
pub struct RayHealth {
    pub delta_min: f64,
    pub cond_max: f64,
    pub t_residual_max: f64,
}

impl RayHealth {
    fn absorb(&mut self, delta_min: f64, cond_max: f64, t_residual: f64) {
        if self.delta_min == 0.0 || delta_min < self.delta_min {
            self.delta_min = delta_min;
        }
        self.cond_max = self.cond_max.max(cond_max);
        self.t_residual_max = self.t_residual_max.max(t_residual);
    }

    pub fn merge(&mut self, other: &RayHealth) {
        self.absorb(other.delta_min, other.cond_max, other.t_residual_max);
    }
}

/// Boundary evaluator for one ray: engines for the clockwise ("minus") and
/// counterclockwise ("plus") banks, both evaluated at spectral points on the
/// ray itself.
pub struct RayEvaluator<'a> {
    pub sys: &'a ValidatedSystem,
    pub ray_index: usize,
    pub minus: WeylEngine<'a>,
    pub plus: WeylEngine<'a>,
}

impl<'a> RayEvaluator<'a> {
    pub fn new(
        sys: &'a ValidatedSystem,
        ray_index: usize,
        opts: EngineOptions,
    ) -> Result<RayEvaluator<'a>> {
        let (minus_idx, plus_idx) = sys.geometry.ray_sectors(ray_index);
        Ok(RayEvaluator {
            sys,
            ray_index,
            minus: WeylEngine::new(sys, minus_idx, opts.clone())?,
            plus: WeylEngine::new(sys, plus_idx, opts)?,
        })
    }

    pub fn unit(&self) -> C64 {
        self.sys.geometry.rays[self.ray_index].unit
    }

    /// Jump samples at one radius for every abscissa of `xs`.
    pub fn samples_at(
        &self,
        radius: f64,
        xs: &[f64],
        health: &mut RayHealth,
    ) -> Result<Vec<SpectralSample>> {
        let rho = self.unit() * cr(radius);
        let pair_m = self.minus.weyl_pair(rho, xs)?;
        let pair_p = self.plus.weyl_pair(rho, xs)?;
        let mut delta_min = f64::INFINITY;
        for pair in [&pair_m, &pair_p] {
            for dj in pair.delta.iter().chain(pair.delta0.iter()) {
                for d in dj {
                    delta_min = delta_min.min(d.norm());
                }
            }
        }
        if delta_min < DELTA_FLOOR {
            return Err(Error::NonConvergence(format!(
                "pairing determinant {delta_min:.3e} below floor on ray {} at |rho| = {radius}",
                self.ray_index
            )));
        }
        health.absorb(
            delta_min,
            pair_m.cond_max.max(pair_p.cond_max),
            pair_m.t_residual.max(pair_p.t_residual),
        );
        let mut out = Vec::with_capacity(xs.len());
        for j in 0..xs.len() {
            let p_m = weyl_ratio(&pair_m.psi[j], &pair_m.psi0[j])?;
            let p_p = weyl_ratio(&pair_p.psi[j], &pair_p.psi0[j])?;
            out.push(SpectralSample {
                x: xs[j],
                rho,
                ray_index: self.ray_index,
                p_hat: p_p.sub(&p_m),
            });
        }
        Ok(out)
    }
}
