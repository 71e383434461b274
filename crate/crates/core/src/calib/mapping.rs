use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::pose::Pose7;
use crate::error::{Error, Result};

pub type Matrix7 = SMatrix<f64, 7, 7>;

/// Paired camera-frame and robot-frame poses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    pub pairs: Vec<(Pose7, Pose7)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ObservationRow {
    cx: f64,
    cy: f64,
    cz: f64,
    cqx: f64,
    cqy: f64,
    cqz: f64,
    cqw: f64,
    rx: f64,
    ry: f64,
    rz: f64,
    rqx: f64,
    rqy: f64,
    rqz: f64,
    rqw: f64,
}

impl ObservationSet {
    pub fn new(pairs: Vec<(Pose7, Pose7)>) -> Self {
        ObservationSet { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of pairs repeating an earlier pair exactly.
    pub fn duplicates(&self) -> usize {
        (0..self.pairs.len())
            .filter(|&i| self.pairs[..i].contains(&self.pairs[i]))
            .count()
    }

    /// Read the `cx,cy,cz,cqx,cqy,cqz,cqw,rx,ry,rz,rqx,rqy,rqz,rqw` CSV.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut pairs = Vec::new();
        for (i, row) in rdr.deserialize::<ObservationRow>().enumerate() {
            let r = row.map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
            let cam = Pose7::new([r.cx, r.cy, r.cz], [r.cqx, r.cqy, r.cqz, r.cqw])
                .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
            let rob = Pose7::new([r.rx, r.ry, r.rz], [r.rqx, r.rqy, r.rqz, r.rqw])
                .map_err(|e| Error::format(path, format!("row {}: {e}", i + 1)))?;
            pairs.push((cam, rob));
        }
        Ok(ObservationSet { pairs })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (c, r) in &self.pairs {
            w.serialize(ObservationRow {
                cx: c.x,
                cy: c.y,
                cz: c.z,
                cqx: c.qx,
                cqy: c.qy,
                cqz: c.qz,
                cqw: c.qw,
                rx: r.x,
                ry: r.y,
                rz: r.z,
                rqx: r.qx,
                rqy: r.qy,
                rqz: r.qz,
                rqw: r.qw,
            })
            .map_err(|e| csv_err(path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
        crate::nn::write_atomic(path, &bytes)
    }

    /// Camera matrix C and robot matrix R, poses stacked column-wise (7×n).
    pub fn matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.pairs.len();
        let c = DMatrix::from_fn(7, n, |r, k| self.pairs[k].0.to_vec7()[r]);
        let rm = DMatrix::from_fn(7, n, |r, k| self.pairs[k].1.to_vec7()[r]);
        (c, rm)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// The 7×7 least-squares map from camera pose vectors to robot pose vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingMatrix {
    pub t: Matrix7,
}

impl MappingMatrix {
    pub fn identity() -> Self {
        MappingMatrix { t: Matrix7::identity() }
    }

    pub fn from_rows(rows: [[f64; 7]; 7]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("mapping matrix has non-finite entries".into()));
        }
        Ok(MappingMatrix { t: Matrix7::from_fn(|r, c| rows[r][c]) })
    }

    pub fn rows(&self) -> [[f64; 7]; 7] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.t[(r, c)]))
    }

    /// JSON 7×7 row-major array.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.rows())?;
        crate::nn::write_atomic(path, &bytes)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows: [[f64; 7]; 7] = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        Self::from_rows(rows)
    }

    /// ‖T·C − R‖ in the Frobenius norm.
    pub fn residual(&self, obs: &ObservationSet) -> f64 {
        let (c, r) = obs.matrices();
        let t = DMatrix::from_fn(7, 7, |i, j| self.t[(i, j)]);
        (t * c - r).norm()
    }
}

/// Relative cutoff below which singular values count as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// T = R · pinv(C), the Frobenius least-squares solution of T·C ≈ R.
pub fn fit_mapping(obs: &ObservationSet) -> Result<MappingMatrix> {
    if obs.is_empty() {
        return Err(Error::DegenerateObservations { rank: 0 });
    }
    let dups = obs.duplicates();
    if dups > 0 {
        warn!("{dups} duplicate observation(s)");
    }
    let (c, r) = obs.matrices();
    let svd = c.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = PINV_RCOND * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < 7 {
        return Err(Error::DegenerateObservations { rank });
    }
    let pinv = svd
        .pseudo_inverse(cutoff)
        .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))?;
    let t = r * pinv;
    MappingMatrix::from_rows(std::array::from_fn(|i| std::array::from_fn(|j| t[(i, j)])))
}

/// r = T·c, with the quaternion part renormalized and sign-canonicalized.
pub fn apply_mapping(m: &MappingMatrix, c: &Pose7) -> Result<Pose7> {
    let r: SVector<f64, 7> = m.t * SVector::<f64, 7>::from(c.to_vec7());
    let q = [r[3], r[4], r[5], r[6]];
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= 1e-6) {
        return Err(Error::MappingDegenerate { norm });
    }
    Pose7::new([r[0], r[1], r[2]], q)
}
