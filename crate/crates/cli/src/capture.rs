//! Dataset capture: fills fixed-size per-category buckets with dual problems
//! sampled from simulation steps, first come first kept.

use crate::error::CliError;
use dualfd::bench::{categorize_sample, jacobian_rank, ProblemSample, SampleCategory, SampleDims, RANK_TOL};
use dualfd::dual::DualProblem;
use dualfd::dynamics::AssembledStep;

/// Per-category capture limits. `default` applies to categories without an
/// explicit entry.
#[derive(Debug, Clone, Default)]
pub struct BucketSpec {
    pub default: usize,
    pub per_category: Vec<(SampleCategory, usize)>,
}

impl BucketSpec {
    pub fn uniform(size: usize) -> Self {
        Self { default: size, per_category: vec![] }
    }

    pub fn capacity(&self, category: SampleCategory) -> usize {
        self.per_category
            .iter()
            .find(|(c, _)| *c == category)
            .map(|&(_, n)| n)
            .unwrap_or(self.default)
    }

    /// Parses `"all=20"` or `"dense_contacts=5,single_contact=10"` (comma
    /// separated `category=count`).
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let mut out = BucketSpec::default();
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| CliError::BucketSpec(spec.into(), format!("missing '=' in '{part}'")))?;
            let count: usize = value
                .trim()
                .parse()
                .map_err(|_| CliError::BucketSpec(spec.into(), format!("bad count '{value}'")))?;
            if key.trim() == "all" {
                out.default = count;
            } else {
                let category: SampleCategory = key
                    .trim()
                    .parse()
                    .map_err(|e: String| CliError::BucketSpec(spec.into(), e))?;
                out.per_category.push((category, count));
            }
        }
        Ok(out)
    }
}

/// Running capture state for one simulation.
#[derive(Debug, Clone)]
pub struct CaptureState {
    spec: BucketSpec,
    counts: [usize; 7],
    samples: Vec<ProblemSample>,
}

impl CaptureState {
    pub fn new(spec: BucketSpec) -> Self {
        Self { spec, counts: [0; 7], samples: Vec::new() }
    }

    fn category_slot(category: SampleCategory) -> usize {
        SampleCategory::ALL.iter().position(|c| *c == category).unwrap()
    }

    /// Offers one assembled step; it is kept when its category bucket still
    /// has room. Softening terms are not representable in the sample format,
    /// so the stored problem is the (possibly stabilized) hard problem.
    pub fn offer(&mut self, step: &AssembledStep, problem: &DualProblem) {
        if problem.n() == 0 {
            return;
        }
        let map_masses: Vec<f64> = (0..step.n_dof() / 6)
            .map(|b| step.mass_matrix[(b * 6, b * 6)])
            .collect();
        let mass_ratio = if map_masses.is_empty() {
            1.0
        } else {
            let max = map_masses.iter().cloned().fold(f64::MIN, f64::max);
            let min = map_masses.iter().cloned().fold(f64::MAX, f64::min);
            max / min
        };
        let dims = SampleDims {
            n_bodies: step.n_dof() / 6,
            n_joints: step.layout.joint_blocks.len(),
            n_limits: step.layout.n_limits(),
            n_contacts: step.layout.n_contacts(),
            joint_rows: step.layout.joint_rows(),
        };
        let rank = jacobian_rank(&step.jacobian, RANK_TOL);
        let category = categorize_sample(&dims, rank);
        let slot = Self::category_slot(category);
        if self.counts[slot] >= self.spec.capacity(category) {
            return;
        }
        self.counts[slot] += 1;
        self.samples.push(ProblemSample {
            delassus: problem.delassus.clone(),
            free_velocity: problem.free_velocity.clone(),
            mus: problem.cone.contact_mus.clone(),
            dt: problem.dt,
            n_bodies: dims.n_bodies,
            n_joints: dims.n_joints,
            n_limits: dims.n_limits,
            n_contacts: dims.n_contacts,
            joint_dims: step.layout.joint_blocks.iter().map(|&(_, m)| m).collect(),
            joint_offsets: step.layout.joint_blocks.iter().map(|&(o, _)| o).collect(),
            limit_offsets: step.layout.limit_rows.clone(),
            category,
            jacobian_rank: rank,
            mass_ratio,
        });
    }

    pub fn is_full(&self) -> bool {
        SampleCategory::ALL
            .iter()
            .enumerate()
            .all(|(i, &c)| self.counts[i] >= self.spec.capacity(c))
    }

    pub fn into_samples(self) -> Vec<ProblemSample> {
        self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_spec_parsing() {
        let spec = BucketSpec::parse("all=20").unwrap();
        assert_eq!(spec.capacity(SampleCategory::DenseContacts), 20);
        let spec = BucketSpec::parse("dense_contacts=5,single_contact=10").unwrap();
        assert_eq!(spec.capacity(SampleCategory::DenseContacts), 5);
        assert_eq!(spec.capacity(SampleCategory::SingleContact), 10);
        assert_eq!(spec.capacity(SampleCategory::DenseJoints), 0);
        assert!(BucketSpec::parse("nope").is_err());
        assert!(BucketSpec::parse("what=ever").is_err());
    }
}
