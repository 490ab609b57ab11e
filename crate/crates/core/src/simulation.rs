//! Seeded synthetic data with chained overlapping groups and a block-aligned
//! planted support.
//!
//! Inputs are i.i.d. `Uniform[0, 1)`. Input groups are laid left to right:
//! each group draws its size from `input_group_size_range` and shares
//! `input_overlap_range` trailing indices with its predecessor. Output groups
//! are built the same way over the `K` outputs. `Y = B_true X + E` with
//! standard normal noise, after which both matrices are standardized.
//!
//! Every random quantity has its own ChaCha8 stream, so changing how one
//! matrix is generated does not perturb the others.

use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HigtError, Result};
use crate::model::{CoefficientMatrix, Dataset, GroupStructure, Scaling};

const STREAM_INPUT_GROUPS: u64 = 1;
const STREAM_OUTPUT_GROUPS: u64 = 2;
const STREAM_SUPPORT: u64 = 3;
const STREAM_X: u64 = 4;
const STREAM_NOISE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    /// Inclusive range.
    pub input_group_size_range: [usize; 2],
    pub input_overlap_range: [usize; 2],
    pub output_group_size_range: [usize; 2],
    pub output_overlap_range: [usize; 2],
    pub nonzero_count: usize,
    pub nonzero_value: f64,
    /// Standard deviation of `E`; 0 gives noiseless outputs.
    pub noise_sd: f64,
    /// When set, exactly this many input groups are generated and `J` is
    /// taken from where the last group ends (`j` is ignored).
    pub input_group_count: Option<usize>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 200,
            j: 500,
            k: 5,
            input_group_size_range: [5, 10],
            input_overlap_range: [1, 4],
            output_group_size_range: [3, 5],
            output_overlap_range: [1, 2],
            nonzero_count: 52,
            nonzero_value: 3.0,
            noise_sd: 1.0,
            input_group_count: None,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HigtError::InfeasibleConfig(msg));
        if self.n == 0 || self.k == 0 || (self.j == 0 && self.input_group_count.is_none()) {
            return bad("N, J and K must be positive".into());
        }
        if self.input_group_count == Some(0) {
            return bad("input_group_count must be positive".into());
        }
        for (name, size, overlap) in [
            (
                "input",
                self.input_group_size_range,
                self.input_overlap_range,
            ),
            (
                "output",
                self.output_group_size_range,
                self.output_overlap_range,
            ),
        ] {
            if size[0] == 0 || size[0] > size[1] || overlap[0] > overlap[1] {
                return bad(format!("{name} ranges must be nonempty with sizes ≥ 1"));
            }
            if overlap[1] >= size[0] {
                return bad(format!(
                    "{name} overlap upper bound {} must be below the smallest group size {}",
                    overlap[1], size[0]
                ));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be finite and nonnegative".into());
        }
        if self.input_group_count.is_none() && self.nonzero_count > self.k * self.j {
            return bad(format!(
                "{} nonzeros do not fit in a {}x{} matrix",
                self.nonzero_count, self.k, self.j
            ));
        }
        Ok(())
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    /// Standardized data.
    pub dataset: Dataset,
    /// Data before standardization.
    pub raw: Dataset,
    pub scaling: Scaling,
    pub groups: GroupStructure,
    /// Ground truth on the raw scale.
    pub b_true: CoefficientMatrix,
    pub config: SimConfig,
}

impl SimInstance {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Entries of `b_true` that are nonzero.
    pub fn true_support(&self) -> Vec<(usize, usize)> {
        self.b_true.support(0.0)
    }

    /// Hash over every number in the instance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut eat = |it: &mut dyn Iterator<Item = f64>| {
            for v in it {
                v.to_bits().hash(&mut h);
            }
        };
        eat(&mut self.dataset.x().iter().copied());
        eat(&mut self.dataset.y().iter().copied());
        eat(&mut self.b_true.as_array().iter().copied());
        self.groups.input_groups().hash(&mut h);
        self.groups.output_groups().hash(&mut h);
        h.finish()
    }
}

fn draw(rng: &mut ChaCha8Rng, range: [usize; 2]) -> usize {
    rng.random_range(range[0]..=range[1])
}

/// Consecutive groups over `0..len`, each overlapping its predecessor. The last
/// group is truncated at `len`.
pub fn chained_groups(
    len: usize,
    size_range: [usize; 2],
    overlap_range: [usize; 2],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + draw(rng, size_range)).min(len);
        groups.push((start..end).collect());
        if end == len {
            return groups;
        }
        start = end - draw(rng, overlap_range);
    }
}

/// Exactly `count` chained groups; returns the groups and the covered length.
pub fn chained_groups_by_count(
    count: usize,
    size_range: [usize; 2],
    overlap_range: [usize; 2],
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<usize>>, usize) {
    let mut groups = Vec::with_capacity(count);
    let mut start = 0;
    let mut end = 0;
    for i in 0..count {
        if i > 0 {
            start = end - draw(rng, overlap_range);
        }
        end = start + draw(rng, size_range);
        groups.push((start..end).collect());
    }
    (groups, end)
}

/// Chooses random `(input group, output group)` blocks and fills each row by
/// row (a whole row group at a time) until `nonzero_count` coefficients are
/// set. Returns sorted `(k, j)` indices.
pub fn plant_support(
    gs: &GroupStructure,
    nonzero_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let mut chosen = BTreeSet::new();
    if nonzero_count == 0 {
        return Ok(Vec::new());
    }
    let mut blocks: Vec<(usize, usize)> = (0..gs.output_groups().len())
        .flat_map(|o| (0..gs.input_groups().len()).map(move |m| (o, m)))
        .collect();
    blocks.shuffle(rng);
    'blocks: for (o, m) in blocks {
        for &k in &gs.output_groups()[o] {
            for &j in &gs.input_groups()[m] {
                if chosen.len() == nonzero_count {
                    break 'blocks;
                }
                chosen.insert((k, j));
            }
        }
    }
    if chosen.len() < nonzero_count {
        return Err(HigtError::InfeasibleConfig(format!(
            "groups cover only {} coefficients, {} requested",
            chosen.len(),
            nonzero_count
        )));
    }
    Ok(chosen.into_iter().collect())
}

pub fn simulate(cfg: &SimConfig) -> Result<SimInstance> {
    cfg.validate()?;

    let mut rng = cfg.stream(STREAM_INPUT_GROUPS);
    let (input_groups, j) = match cfg.input_group_count {
        Some(count) => chained_groups_by_count(
            count,
            cfg.input_group_size_range,
            cfg.input_overlap_range,
            &mut rng,
        ),
        None => (
            chained_groups(
                cfg.j,
                cfg.input_group_size_range,
                cfg.input_overlap_range,
                &mut rng,
            ),
            cfg.j,
        ),
    };
    let output_groups = chained_groups(
        cfg.k,
        cfg.output_group_size_range,
        cfg.output_overlap_range,
        &mut cfg.stream(STREAM_OUTPUT_GROUPS),
    );
    let k = cfg.k;
    if cfg.nonzero_count > k * j {
        return Err(HigtError::InfeasibleConfig(format!(
            "{} nonzeros do not fit in a {k}x{j} matrix",
            cfg.nonzero_count
        )));
    }
    let groups = GroupStructure::new(k, j, input_groups, output_groups)?;

    let support = plant_support(&groups, cfg.nonzero_count, &mut cfg.stream(STREAM_SUPPORT))?;
    let mut b_true = Array2::zeros((k, j));
    for &(r, c) in &support {
        b_true[[r, c]] = cfg.nonzero_value;
    }

    let mut rng_x = cfg.stream(STREAM_X);
    let x = Array2::from_shape_simple_fn((j, cfg.n), || rng_x.random::<f64>());
    let mut rng_e = cfg.stream(STREAM_NOISE);
    let e = Array2::from_shape_simple_fn((k, cfg.n), || {
        let z: f64 = StandardNormal.sample(&mut rng_e);
        cfg.noise_sd * z
    });
    let y = b_true.dot(&x) + e;

    let raw = Dataset::new(x, y)?;
    let (dataset, scaling) = raw.standardize_with_scaling()?;
    let mut config = cfg.clone();
    config.j = j;
    Ok(SimInstance {
        dataset,
        raw,
        scaling,
        groups,
        b_true: CoefficientMatrix::from_array(b_true),
        config,
    })
}
