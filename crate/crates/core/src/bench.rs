//! Benchmarking toolkit: accuracy metrics, sample categorization, the dual
//! problem dataset container, and performance-profile generation.
//!
//! Samples are complete dual problems plus the metadata needed to categorize
//! them offline. Accuracy metrics are always evaluated in NCP form so that
//! solvers with different internal models remain comparable.

use crate::dual::{de_saxce_correction, ConeSpec, DualProblem};
use crate::dynamics::ConstraintLayout;
use crate::solvers::{natural_map, project_dual_cone, ResidualMode};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("metric grid is missing solver '{solver}' on problem '{problem}'")]
    MissingCell { problem: String, solver: String },
    #[error("metric grid holds duplicate cell ({problem}, {solver})")]
    DuplicateCell { problem: String, solver: String },
    #[error("metric '{0}' contains a non-finite value")]
    NonFiniteMetric(String),
    #[error("no metric records supplied")]
    EmptyGrid,
}

#[derive(Debug, Error)]
pub enum BenchIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a dual-problem dataset")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("header parse error: {0}")]
    Header(#[from] serde_json::Error),
    #[error("dataset truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: header {expected:08x}, payload {computed:08x}")]
    Checksum { expected: u32, computed: u32 },
    #[error("inconsistent sample dimensions in header")]
    BadDimensions,
}

/// The seven-way problem taxonomy over constraint densities and Jacobian
/// rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleCategory {
    IndependentJoints,
    RedundantJoints,
    DenseJoints,
    SingleContact,
    SparseContacts,
    DenseContacts,
    DenseConstraints,
}

impl SampleCategory {
    pub const ALL: [SampleCategory; 7] = [
        SampleCategory::IndependentJoints,
        SampleCategory::RedundantJoints,
        SampleCategory::DenseJoints,
        SampleCategory::SingleContact,
        SampleCategory::SparseContacts,
        SampleCategory::DenseContacts,
        SampleCategory::DenseConstraints,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SampleCategory::IndependentJoints => "independent_joints",
            SampleCategory::RedundantJoints => "redundant_joints",
            SampleCategory::DenseJoints => "dense_joints",
            SampleCategory::SingleContact => "single_contact",
            SampleCategory::SparseContacts => "sparse_contacts",
            SampleCategory::DenseContacts => "dense_contacts",
            SampleCategory::DenseConstraints => "dense_constraints",
        }
    }
}

impl std::str::FromStr for SampleCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SampleCategory::ALL
            .iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown sample category '{s}'"))
    }
}

impl std::fmt::Display for SampleCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Dimension summary used by the categorization rule.
#[derive(Debug, Clone, Copy)]
pub struct SampleDims {
    pub n_bodies: usize,
    pub n_joints: usize,
    pub n_limits: usize,
    pub n_contacts: usize,
    /// Total joint constraint rows `n_jd = Σ m_j`.
    pub joint_rows: usize,
}

impl SampleDims {
    pub fn n_rows(&self) -> usize {
        self.joint_rows + self.n_limits + 3 * self.n_contacts
    }

    pub fn body_dofs(&self) -> usize {
        6 * self.n_bodies
    }

    pub fn joint_density(&self) -> f64 {
        self.joint_rows as f64 / self.body_dofs() as f64
    }

    pub fn contact_density(&self) -> f64 {
        3.0 * self.n_contacts as f64 / self.body_dofs() as f64
    }

    pub fn total_density(&self) -> f64 {
        self.n_rows() as f64 / self.body_dofs() as f64
    }
}

/// Numerical rank of the constraint Jacobian: singular values above
/// `rel_tol · σ_max`.
pub fn jacobian_rank(jacobian: &DMatrix<f64>, rel_tol: f64) -> usize {
    if jacobian.nrows() == 0 || jacobian.ncols() == 0 {
        return 0;
    }
    let svd = jacobian.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > rel_tol * sigma_max).count()
}

/// Default relative threshold for [`jacobian_rank`].
pub const RANK_TOL: f64 = 1e-10;

/// Assigns one of the seven categories.
///
/// Contact-free samples split on rank and joint density; one contact is
/// always `SingleContact`. Mixed joint/contact samples with total density
/// above one are `DenseConstraints`; the remaining contact counts split into
/// sparse (`n_c ≤ 2 n_b`) and dense.
pub fn categorize_sample(dims: &SampleDims, jacobian_rank: usize) -> SampleCategory {
    if dims.n_contacts == 0 {
        // joint-only branches (limits ride along with their joints)
        if jacobian_rank >= dims.joint_rows {
            return SampleCategory::IndependentJoints;
        }
        if dims.joint_density() < 1.0 {
            return SampleCategory::RedundantJoints;
        }
        return SampleCategory::DenseJoints;
    }
    if dims.n_contacts == 1 {
        return SampleCategory::SingleContact;
    }
    if dims.n_joints >= 1 && dims.total_density() > 1.0 {
        return SampleCategory::DenseConstraints;
    }
    if dims.n_contacts <= 2 * dims.n_bodies {
        return SampleCategory::SparseContacts;
    }
    SampleCategory::DenseContacts
}

/// One serialized dual problem with the metadata needed to reconstruct and
/// categorize it offline.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSample {
    pub delassus: DMatrix<f64>,
    pub free_velocity: DVector<f64>,
    pub mus: Vec<f64>,
    pub dt: f64,
    pub n_bodies: usize,
    pub n_joints: usize,
    pub n_limits: usize,
    pub n_contacts: usize,
    /// Constraint row count per joint.
    pub joint_dims: Vec<usize>,
    /// Row offset per joint.
    pub joint_offsets: Vec<usize>,
    /// Row index per active limit.
    pub limit_offsets: Vec<usize>,
    pub category: SampleCategory,
    pub jacobian_rank: usize,
    pub mass_ratio: f64,
}

impl ProblemSample {
    pub fn n_rows(&self) -> usize {
        self.free_velocity.len()
    }

    pub fn dims(&self) -> SampleDims {
        SampleDims {
            n_bodies: self.n_bodies,
            n_joints: self.n_joints,
            n_limits: self.n_limits,
            n_contacts: self.n_contacts,
            joint_rows: self.joint_dims.iter().sum(),
        }
    }

    pub fn cone(&self) -> ConeSpec {
        ConeSpec {
            joint_rows: self.joint_dims.iter().sum(),
            limit_rows: self.n_limits,
            contact_mus: self.mus.clone(),
        }
    }

    /// Reconstructs a solvable dual problem (hard, unsoftened) from the
    /// stored data.
    pub fn to_dual_problem(&self) -> DualProblem {
        let cone = self.cone();
        let mut layout = ConstraintLayout::default();
        for (j, &m) in self.joint_dims.iter().enumerate() {
            layout.joint_blocks.push((self.joint_offsets[j], m));
        }
        for (l, &row) in self.limit_offsets.iter().enumerate() {
            layout.limit_rows.push(row);
            layout.limit_sources.push((0, l, crate::dynamics::LimitSide::Lower));
        }
        for (k, &mu) in self.mus.iter().enumerate() {
            layout.contact_offsets.push(cone.contact_offset(k));
            layout.contact_mus.push(mu);
            layout.contact_restitutions.push(0.0);
        }
        layout.n_rows = cone.n_rows();
        DualProblem {
            delassus: self.delassus.clone(),
            free_velocity: self.free_velocity.clone(),
            cone,
            regularizer: None,
            regulation_bias: None,
            dt: self.dt,
            // not stored in the sample; neutral scale for early-stop solvers
            total_diag_inertia: 1.0,
            layout,
        }
    }
}

/// Per-(problem, solver) metric row. `r_pen` is only meaningful for metrics
/// captured during simulation (offline sample solves have no configuration
/// data and store NaN there).
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub problem: String,
    pub solver: String,
    pub solved: bool,
    pub r_pen: f64,
    pub r_dual: f64,
    pub r_ncp: f64,
    pub r_nat: f64,
    pub i_stop: usize,
    pub t_solve: f64,
    pub t_iter: f64,
}

/// Metric selector for performance profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricField {
    Penetration,
    Dual,
    Ncp,
    Nat,
    Iterations,
    SolveTime,
    IterTime,
}

impl MetricField {
    pub const ALL: [MetricField; 7] = [
        MetricField::Penetration,
        MetricField::Dual,
        MetricField::Ncp,
        MetricField::Nat,
        MetricField::Iterations,
        MetricField::SolveTime,
        MetricField::IterTime,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricField::Penetration => "r_pen",
            MetricField::Dual => "r_dual",
            MetricField::Ncp => "r_ncp",
            MetricField::Nat => "r_nat",
            MetricField::Iterations => "i_stop",
            MetricField::SolveTime => "t_solve",
            MetricField::IterTime => "t_iter",
        }
    }

    pub fn extract(&self, record: &MetricsRecord) -> f64 {
        match self {
            MetricField::Penetration => record.r_pen,
            MetricField::Dual => record.r_dual,
            MetricField::Ncp => record.r_ncp,
            MetricField::Nat => record.r_nat,
            MetricField::Iterations => record.i_stop as f64,
            MetricField::SolveTime => record.t_solve,
            MetricField::IterTime => record.t_iter,
        }
    }
}

impl std::str::FromStr for MetricField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricField::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| format!("unknown metric '{s}'"))
    }
}

/// Worst-case configuration-level constraint violation: the L∞ norm over the
/// stacked residuals, with limit and contact entries contributing only their
/// violating (negative) parts.
pub fn metric_penetration(
    joint_residuals: &DVector<f64>,
    limit_residuals: &DVector<f64>,
    contact_gaps: &DVector<f64>,
) -> f64 {
    let mut worst = 0.0f64;
    for r in joint_residuals.iter() {
        worst = worst.max(r.abs());
    }
    for g in limit_residuals.iter() {
        worst = worst.max((-g).max(0.0));
    }
    for g in contact_gaps.iter() {
        worst = worst.max((-g).max(0.0));
    }
    worst
}

/// The three NCP accuracy residuals `(r_dual, r_ncp, r_nat)` of a solution,
/// always evaluated with the De Saxcé-augmented velocity regardless of the
/// solver's own formulation.
pub fn metric_set(
    lambda: &DVector<f64>,
    v_plus: &DVector<f64>,
    problem: &DualProblem,
) -> (f64, f64, f64) {
    let cone = &problem.cone;
    if problem.n() == 0 {
        return (0.0, 0.0, 0.0);
    }
    let w = v_plus + de_saxce_correction(v_plus, cone);
    let r_dual = (&w - project_dual_cone(&w, cone)).amax();
    let mut r_ncp = 0.0f64;
    for l in 0..cone.limit_rows {
        let i = cone.limit_offset(l);
        r_ncp = r_ncp.max((lambda[i] * w[i]).abs());
    }
    for k in 0..cone.n_contacts() {
        let off = cone.contact_offset(k);
        let dot = lambda[off] * w[off] + lambda[off + 1] * w[off + 1] + lambda[off + 2] * w[off + 2];
        r_ncp = r_ncp.max(dot.abs());
    }
    let r_nat = natural_map(lambda, problem, ResidualMode::Ncp).amax();
    (r_dual, r_ncp, r_nat)
}

/// One solver's cumulative performance-ratio distribution over a problem set.
#[derive(Debug, Clone)]
pub struct ProfileCurve {
    pub solver: String,
    /// Log-spaced ratio grid from 1 to `r_m` inclusive.
    pub tau: Vec<f64>,
    /// Fraction of problems with ratio ≤ τ; failures never count.
    pub rho: Vec<f64>,
    /// Failure sentinel the grid ends at.
    pub r_m: f64,
}

/// Sub-epsilon metric replacement: affine map of `[0, m_min]` onto
/// `[m_min, m_max]` with `m_max = ε/2` and `m_min = ε/100`; preserves strict
/// ordering while keeping ratios of near-zero residuals finite.
pub fn dingle_higham_augment(m: f64) -> f64 {
    let m_max = 0.5 * f64::EPSILON;
    let m_min = 1e-2 * f64::EPSILON;
    if m > m_min {
        m
    } else {
        m * (m_max - m_min) / m_min + m_min
    }
}

/// Builds one profile curve per solver for the chosen metric.
///
/// Ratios are taken against the per-problem best (minimum) augmented metric
/// among successful solves and clamped to `[1, r_m]`; failed solves never
/// fall under any τ, so `ρ_s(r_m)` equals the solved fraction exactly.
pub fn performance_profiles(
    records: &[MetricsRecord],
    metric: MetricField,
    r_m: f64,
    grid_points: usize,
) -> Result<Vec<ProfileCurve>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyGrid);
    }
    let mut solvers: Vec<String> = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    for r in records {
        if !solvers.contains(&r.solver) {
            solvers.push(r.solver.clone());
        }
        if !problems.contains(&r.problem) {
            problems.push(r.problem.clone());
        }
    }
    // complete grid required
    let mut cell = vec![None; solvers.len() * problems.len()];
    for r in records {
        let si = solvers.iter().position(|s| s == &r.solver).unwrap();
        let pi = problems.iter().position(|p| p == &r.problem).unwrap();
        let slot = &mut cell[pi * solvers.len() + si];
        if slot.is_some() {
            return Err(BenchError::DuplicateCell {
                problem: r.problem.clone(),
                solver: r.solver.clone(),
            });
        }
        *slot = Some(r);
    }
    if let Some(idx) = cell.iter().position(|c| c.is_none()) {
        return Err(BenchError::MissingCell {
            problem: problems[idx / solvers.len()].clone(),
            solver: solvers[idx % solvers.len()].clone(),
        });
    }

    // per-problem ratios; failures get +∞ so they never count below any τ
    let mut ratios = vec![f64::INFINITY; solvers.len() * problems.len()];
    for (pi, _) in problems.iter().enumerate() {
        let row = &cell[pi * solvers.len()..(pi + 1) * solvers.len()];
        let mut best = f64::INFINITY;
        for c in row.iter().flatten() {
            let m = metric.extract(c);
            if !m.is_finite() || m < 0.0 {
                return Err(BenchError::NonFiniteMetric(metric.name().into()));
            }
            if c.solved {
                best = best.min(dingle_higham_augment(m));
            }
        }
        for (si, c) in row.iter().enumerate() {
            let c = c.unwrap();
            if c.solved && best.is_finite() {
                let ratio = dingle_higham_augment(metric.extract(c)) / (best + 1e-300);
                ratios[pi * solvers.len() + si] = ratio.max(1.0).min(r_m);
            }
        }
    }

    let n_grid = grid_points.max(2);
    let log_rm = r_m.log10();
    let tau: Vec<f64> = (0..n_grid)
        .map(|i| {
            if i == 0 {
                1.0
            } else if i == n_grid - 1 {
                r_m
            } else {
                10f64.powf(log_rm * i as f64 / (n_grid - 1) as f64)
            }
        })
        .collect();

    let n_p = problems.len() as f64;
    Ok(solvers
        .iter()
        .enumerate()
        .map(|(si, solver)| {
            let mut solver_ratios: Vec<f64> =
                (0..problems.len()).map(|pi| ratios[pi * solvers.len() + si]).collect();
            solver_ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rho = tau
                .iter()
                .map(|&t| solver_ratios.iter().take_while(|&&r| r <= t).count() as f64 / n_p)
                .collect();
            ProfileCurve { solver: solver.clone(), tau: tau.clone(), rho, r_m }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// dataset container
// ---------------------------------------------------------------------------

const DATASET_MAGIC: &[u8; 4] = b"DFDS";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SampleHeader {
    n_rows: usize,
    n_bodies: usize,
    n_joints: usize,
    n_limits: usize,
    n_contacts: usize,
    joint_dims: Vec<usize>,
    joint_offsets: Vec<usize>,
    limit_offsets: Vec<usize>,
    category: SampleCategory,
    jacobian_rank: usize,
    mass_ratio: f64,
    dt: f64,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    version: u32,
    count: usize,
    payload_len: usize,
    checksum: u32,
    samples: Vec<SampleHeader>,
}

/// CRC-32 (IEEE) of the payload, bit-serial; payloads are small enough that
/// table-free is fine.
fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

fn push_f64s(buf: &mut Vec<u8>, values: impl Iterator<Item = f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct F64Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> F64Reader<'a> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>, BenchIoError> {
        let need = n * 8;
        if self.pos + need > self.bytes.len() {
            return Err(BenchIoError::Truncated {
                expected: self.pos + need,
                found: self.bytes.len(),
            });
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let s = self.pos + i * 8;
            out.push(f64::from_le_bytes(self.bytes[s..s + 8].try_into().unwrap()));
        }
        self.pos += need;
        Ok(out)
    }
}

/// Writes samples to the container: magic, header length, JSON header with
/// per-sample metadata and a payload checksum, then the row-major
/// little-endian f64 payload (D, v_f, μ per sample).
pub fn write_samples(path: &Path, samples: &[ProblemSample]) -> Result<(), BenchIoError> {
    let mut payload = Vec::new();
    let mut headers = Vec::with_capacity(samples.len());
    for s in samples {
        let n = s.n_rows();
        push_f64s(&mut payload, s.delassus.transpose().iter().copied()); // row-major
        push_f64s(&mut payload, s.free_velocity.iter().copied());
        push_f64s(&mut payload, s.mus.iter().copied());
        headers.push(SampleHeader {
            n_rows: n,
            n_bodies: s.n_bodies,
            n_joints: s.n_joints,
            n_limits: s.n_limits,
            n_contacts: s.n_contacts,
            joint_dims: s.joint_dims.clone(),
            joint_offsets: s.joint_offsets.clone(),
            limit_offsets: s.limit_offsets.clone(),
            category: s.category,
            jacobian_rank: s.jacobian_rank,
            mass_ratio: s.mass_ratio,
            dt: s.dt,
        });
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        count: samples.len(),
        payload_len: payload.len(),
        checksum: crc32(&payload),
        samples: headers,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut file = std::fs::File::create(path)?;
    file.write_all(DATASET_MAGIC)?;
    file.write_all(&(header_json.len() as u32).to_le_bytes())?;
    file.write_all(&header_json)?;
    file.write_all(&payload)?;
    Ok(())
}

/// Reads a container written by [`write_samples`], verifying magic, version,
/// length and checksum.
pub fn read_samples(path: &Path) -> Result<Vec<ProblemSample>, BenchIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != DATASET_MAGIC {
        return Err(BenchIoError::BadMagic);
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(BenchIoError::Truncated { expected: 8 + header_len, found: bytes.len() });
    }
    let header: DatasetHeader = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.version != DATASET_VERSION {
        return Err(BenchIoError::Version(header.version));
    }
    let payload = &bytes[8 + header_len..];
    if payload.len() != header.payload_len {
        return Err(BenchIoError::Truncated {
            expected: header.payload_len,
            found: payload.len(),
        });
    }
    let computed = crc32(payload);
    if computed != header.checksum {
        return Err(BenchIoError::Checksum { expected: header.checksum, computed });
    }
    if header.samples.len() != header.count {
        return Err(BenchIoError::BadDimensions);
    }

    let mut reader = F64Reader { bytes: payload, pos: 0 };
    let mut samples = Vec::with_capacity(header.count);
    for h in &header.samples {
        let n = h.n_rows;
        let joint_rows: usize = h.joint_dims.iter().sum();
        if joint_rows + h.n_limits + 3 * h.n_contacts != n {
            return Err(BenchIoError::BadDimensions);
        }
        let d_vals = reader.take(n * n)?;
        let v_vals = reader.take(n)?;
        let mus = reader.take(h.n_contacts)?;
        samples.push(ProblemSample {
            delassus: DMatrix::from_row_slice(n, n, &d_vals),
            free_velocity: DVector::from_vec(v_vals),
            mus,
            dt: h.dt,
            n_bodies: h.n_bodies,
            n_joints: h.n_joints,
            n_limits: h.n_limits,
            n_contacts: h.n_contacts,
            joint_dims: h.joint_dims.clone(),
            joint_offsets: h.joint_offsets.clone(),
            limit_offsets: h.limit_offsets.clone(),
            category: h.category,
            jacobian_rank: h.jacobian_rank,
            mass_ratio: h.mass_ratio,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve, SolverConfig, SolverId};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn penetration_branches() {
        let none = DVector::zeros(0);
        assert_eq!(metric_penetration(&none, &none, &none), 0.0);
        let jr = DVector::from_vec(vec![0.0, 0.002, 0.0]);
        assert_relative_eq!(metric_penetration(&jr, &none, &none), 0.002);
        // separated contact contributes nothing
        let gaps = DVector::from_vec(vec![0.01]);
        assert_eq!(metric_penetration(&none, &none, &gaps), 0.0);
        let gaps = DVector::from_vec(vec![-0.03]);
        assert_relative_eq!(metric_penetration(&none, &none, &gaps), 0.03);
    }

    fn single_contact_problem(mu: f64, v_n: f64) -> DualProblem {
        let sample = ProblemSample {
            delassus: DMatrix::identity(3, 3),
            free_velocity: DVector::from_vec(vec![0.0, 0.0, v_n]),
            mus: vec![mu],
            dt: 1e-3,
            n_bodies: 1,
            n_joints: 0,
            n_limits: 0,
            n_contacts: 1,
            joint_dims: vec![],
            joint_offsets: vec![],
            limit_offsets: vec![],
            category: SampleCategory::SingleContact,
            jacobian_rank: 3,
            mass_ratio: 1.0,
        };
        sample.to_dual_problem()
    }

    #[test]
    fn metric_set_zero_at_solution() {
        let problem = single_contact_problem(0.7, -1.0);
        let report = solve(&problem, &SolverConfig::for_id(SolverId::AdmmNcpFp), None);
        assert!(report.converged());
        let (r_dual, r_ncp, r_nat) = metric_set(&report.lambda, &report.v_plus, &problem);
        assert!(r_dual < 1e-10 && r_ncp < 1e-10 && r_nat < 1e-10);
    }

    #[test]
    fn metric_set_flags_zero_reaction_on_closing_contact() {
        let problem = single_contact_problem(0.7, -1.0);
        let lambda = DVector::zeros(3);
        let v_plus = problem.free_velocity.clone();
        let (_, _, r_nat) = metric_set(&lambda, &v_plus, &problem);
        assert!(r_nat > 0.1);
    }

    fn dims(n_b: usize, n_j: usize, n_l: usize, n_c: usize, joint_rows: usize) -> SampleDims {
        SampleDims { n_bodies: n_b, n_joints: n_j, n_limits: n_l, n_contacts: n_c, joint_rows }
    }

    #[test]
    fn categorize_joint_branches() {
        // Fourbar-like: 26 joint rows on 4 bodies, rank deficient
        let d = dims(4, 5, 0, 0, 26);
        assert_eq!(categorize_sample(&d, 24), SampleCategory::DenseJoints);
        assert_eq!(categorize_sample(&d, 26), SampleCategory::IndependentJoints);
        // redundant but not dense: deficient with low density
        let d = dims(4, 2, 0, 0, 9);
        assert_eq!(categorize_sample(&d, 8), SampleCategory::RedundantJoints);
    }

    #[test]
    fn categorize_contact_branches() {
        assert_eq!(categorize_sample(&dims(2, 1, 0, 1, 6), 9), SampleCategory::SingleContact);
        // box on plane: 4 contacts on one body, no joints
        assert_eq!(categorize_sample(&dims(1, 0, 0, 4, 0), 6), SampleCategory::DenseContacts);
        assert_eq!(categorize_sample(&dims(2, 0, 0, 3, 0), 9), SampleCategory::SparseContacts);
        // joints + many contacts: dense constraints
        assert_eq!(categorize_sample(&dims(4, 5, 2, 16, 26), 24), SampleCategory::DenseConstraints);
    }

    #[test]
    fn categorization_is_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..2000 {
            let n_b = rng.random_range(1..6);
            let n_j = rng.random_range(0..6);
            let n_c = rng.random_range(0..12);
            let joint_rows = if n_j == 0 { 0 } else { rng.random_range(n_j..=6 * n_j) };
            let n_l = if n_j == 0 { 0 } else { rng.random_range(0..3) };
            if n_j == 0 && n_c == 0 {
                continue; // empty problems are never sampled
            }
            let d = dims(n_b, n_j, n_l, n_c, joint_rows);
            let rank = rng.random_range(0..=d.n_rows());
            let _ = categorize_sample(&d, rank); // must not panic; returns one of 7
        }
    }

    fn random_sample(rng: &mut ChaCha8Rng) -> ProblemSample {
        let n_joints = rng.random_range(0..3usize);
        let joint_dims: Vec<usize> = (0..n_joints).map(|_| rng.random_range(1..6)).collect();
        let joint_rows: usize = joint_dims.iter().sum();
        let mut joint_offsets = Vec::new();
        let mut off = 0;
        for &m in &joint_dims {
            joint_offsets.push(off);
            off += m;
        }
        let n_limits = rng.random_range(0..3usize);
        let limit_offsets: Vec<usize> = (0..n_limits).map(|l| joint_rows + l).collect();
        let n_contacts = rng.random_range(0..4usize);
        let n = joint_rows + n_limits + 3 * n_contacts;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let delassus = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let dims = SampleDims {
            n_bodies: rng.random_range(1..5),
            n_joints,
            n_limits,
            n_contacts,
            joint_rows,
        };
        let rank = rng.random_range(0..=n);
        ProblemSample {
            free_velocity: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
            delassus,
            mus: (0..n_contacts).map(|_| rng.random_range(0.0..1.5)).collect(),
            dt: 1e-3,
            n_bodies: dims.n_bodies,
            n_joints,
            n_limits,
            n_contacts,
            joint_dims,
            joint_offsets,
            limit_offsets,
            category: categorize_sample(&dims, rank),
            jacobian_rank: rank,
            mass_ratio: rng.random_range(1.0..1e4),
        }
    }

    #[test]
    fn dataset_roundtrip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let samples: Vec<ProblemSample> = (0..50).map(|_| random_sample(&mut rng)).collect();
        let dir = std::env::temp_dir().join("dualfd_bench_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.dfds");
        write_samples(&path, &samples).unwrap();
        let restored = read_samples(&path).unwrap();
        assert_eq!(samples.len(), restored.len());
        for (a, b) in samples.iter().zip(&restored) {
            assert_eq!(a.delassus.len(), b.delassus.len());
            for (x, y) in a.delassus.iter().zip(b.delassus.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.free_velocity.iter().zip(b.free_velocity.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.mus, b.mus);
            assert_eq!(a.category, b.category);
            assert_eq!(a.jacobian_rank, b.jacobian_rank);
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_dataset_roundtrip() {
        let dir = std::env::temp_dir().join("dualfd_bench_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.dfds");
        write_samples(&path, &[]).unwrap();
        assert!(read_samples(&path).unwrap().is_empty());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corrupted_dataset_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let samples = vec![random_sample(&mut rng)];
        let dir = std::env::temp_dir().join("dualfd_bench_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corrupt.dfds");
        write_samples(&path, &samples).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // header byte corruption → parse or magic failure
        bytes[5] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_samples(&path).is_err());
        // payload corruption → checksum failure
        write_samples(&path, &samples).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_samples(&path), Err(BenchIoError::Checksum { .. })));
        std::fs::remove_file(&path).ok();
    }

    fn record(problem: &str, solver: &str, value: f64, solved: bool) -> MetricsRecord {
        MetricsRecord {
            problem: problem.into(),
            solver: solver.into(),
            solved,
            r_pen: value,
            r_dual: value,
            r_ncp: value,
            r_nat: value,
            i_stop: 1,
            t_solve: value,
            t_iter: value,
        }
    }

    #[test]
    fn profile_hand_enumeration() {
        // two solvers, one problem, metrics {1, 2} → ratios {1, 2}
        let records =
            vec![record("p0", "A", 1.0, true), record("p0", "B", 2.0, true)];
        let curves = performance_profiles(&records, MetricField::Nat, 1e6, 64).unwrap();
        let a = curves.iter().find(|c| c.solver == "A").unwrap();
        let b = curves.iter().find(|c| c.solver == "B").unwrap();
        assert_eq!(a.rho[0], 1.0); // ρ_A(1) = 1
        assert_eq!(b.rho[0], 0.0); // ρ_B(1) = 0
        let idx2 = b.tau.iter().position(|&t| t >= 2.0).unwrap();
        assert_eq!(b.rho[idx2], 1.0); // ρ_B(2) = 1
    }

    #[test]
    fn profile_identical_solvers_all_ones() {
        let records = vec![
            record("p0", "A", 0.5, true),
            record("p0", "B", 0.5, true),
            record("p1", "A", 0.25, true),
            record("p1", "B", 0.25, true),
        ];
        let curves = performance_profiles(&records, MetricField::Nat, 1e6, 16).unwrap();
        for c in curves {
            assert_eq!(c.rho[0], 1.0);
        }
    }

    #[test]
    fn profile_augmentation_keeps_zero_best_finite() {
        let records =
            vec![record("p0", "A", 0.0, true), record("p0", "B", 1e-18, true)];
        let curves = performance_profiles(&records, MetricField::Nat, 1e6, 64).unwrap();
        for c in &curves {
            assert!(c.rho.iter().all(|r| r.is_finite()));
            // ordering preserved: A is best, B within the grid
            let last = *c.rho.last().unwrap();
            assert_eq!(last, 1.0);
        }
    }

    #[test]
    fn profile_monotone_and_failures_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut records = Vec::new();
        for p in 0..40 {
            for s in ["A", "B", "C"] {
                let solved = rng.random_range(0.0..1.0) > 0.2;
                records.push(record(&format!("p{p}"), s, rng.random_range(0.0..1.0), solved));
            }
        }
        let curves = performance_profiles(&records, MetricField::Nat, 1e6, 128).unwrap();
        for c in &curves {
            for w in c.rho.windows(2) {
                assert!(w[1] >= w[0], "profile must be nondecreasing");
            }
            assert!(c.rho.iter().all(|&r| (0.0..=1.0).contains(&r)));
            let solved_fraction = records
                .iter()
                .filter(|r| r.solver == c.solver && r.solved)
                .count() as f64
                / 40.0;
            assert_relative_eq!(*c.rho.last().unwrap(), solved_fraction, epsilon = 1e-12);
        }
    }

    #[test]
    fn profile_rejects_missing_cells() {
        let records = vec![
            record("p0", "A", 1.0, true),
            record("p0", "B", 2.0, true),
            record("p1", "A", 1.0, true),
        ];
        assert!(matches!(
            performance_profiles(&records, MetricField::Nat, 1e6, 16),
            Err(BenchError::MissingCell { .. })
        ));
    }

    #[test]
    fn augmentation_preserves_ordering_within_branches() {
        // the two-branch rule is strictly increasing on each branch; the
        // seam at m_min (which maps to m_max) is inherent to the rule
        let m_min = 1e-2 * f64::EPSILON;
        let m_max = 0.5 * f64::EPSILON;
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..10_000 {
            let (a, b) = if rng.random_range(0.0..1.0) < 0.5 {
                (rng.random_range(0.0..m_min), rng.random_range(0.0..m_min))
            } else {
                (rng.random_range(m_min..1e-12), rng.random_range(m_min..1e-12))
            };
            let (fa, fb) = (dingle_higham_augment(a), dingle_higham_augment(b));
            if a < b {
                assert!(fa <= fb);
            }
        }
        // exact zero maps to m_min, and the seam endpoint to m_max
        assert_eq!(dingle_higham_augment(0.0), m_min);
        assert_relative_eq!(dingle_higham_augment(m_min), m_max, epsilon = 1e-30);
        // sub-threshold values never produce zero ratios
        assert!(dingle_higham_augment(1e-20) > 0.0);
    }
}
