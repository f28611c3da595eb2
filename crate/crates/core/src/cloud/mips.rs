use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::CpuSpec;

/// How a newly provisioned VM gets its benchmarked CPU figures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MipsModel {
    /// Every VM gets the same figures.
    Fixed { mips: u32, kflops: u64 },
    /// Integer MIPS drawn uniformly from `[center - spread, center + spread]`.
    Uniform {
        center: u32,
        spread: u32,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_kflops_per_mips")]
        kflops_per_mips: u64,
    },
    /// Explicit figures handed out in provisioning order, cycling when exhausted.
    Sequence { specs: Vec<CpuSpec> },
}

fn default_kflops_per_mips() -> u64 {
    100
}

impl Default for MipsModel {
    fn default() -> Self {
        MipsModel::Uniform { center: 12_500, spread: 1_500, seed: 0, kflops_per_mips: default_kflops_per_mips() }
    }
}

impl MipsModel {
    pub fn fixed(mips: u32) -> Self {
        MipsModel::Fixed { mips, kflops: u64::from(mips) * default_kflops_per_mips() }
    }

    pub fn uniform(center: u32, spread: u32, seed: u64) -> Self {
        MipsModel::Uniform { center, spread, seed, kflops_per_mips: default_kflops_per_mips() }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            MipsModel::Fixed { mips, kflops } if *mips == 0 || *kflops == 0 => {
                Err("fixed MIPS model needs mips > 0 and kflops > 0".into())
            }
            MipsModel::Uniform { center, spread, kflops_per_mips, .. } if spread >= center || *kflops_per_mips == 0 => {
                Err(format!("uniform MIPS model {center}±{spread} would allow non-positive values"))
            }
            MipsModel::Sequence { specs } if specs.is_empty() => Err("MIPS sequence is empty".into()),
            MipsModel::Sequence { specs } if specs.iter().any(|s| s.mips == 0 || s.kflops == 0) => {
                Err("MIPS sequence contains a zero entry".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MipsSampler {
    model: MipsModel,
    rng: ChaCha8Rng,
    drawn: usize,
}

impl MipsSampler {
    pub fn new(model: MipsModel) -> Self {
        let seed = match &model {
            MipsModel::Uniform { seed, .. } => *seed,
            _ => 0,
        };
        MipsSampler { model, rng: ChaCha8Rng::seed_from_u64(seed), drawn: 0 }
    }

    pub fn model(&self) -> &MipsModel {
        &self.model
    }

    pub fn next_spec(&mut self) -> CpuSpec {
        let spec = match &self.model {
            MipsModel::Fixed { mips, kflops } => CpuSpec::new(*mips, *kflops),
            MipsModel::Uniform { center, spread, kflops_per_mips, .. } => {
                let mips = self.rng.random_range(center - spread..=center + spread);
                CpuSpec::new(mips, u64::from(mips) * kflops_per_mips)
            }
            MipsModel::Sequence { specs } => specs[self.drawn % specs.len()].clone(),
        };
        self.drawn += 1;
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_stays_in_range_and_is_seeded() {
        let mut a = MipsSampler::new(MipsModel::uniform(12_500, 1_500, 9));
        let mut b = MipsSampler::new(MipsModel::uniform(12_500, 1_500, 9));
        for _ in 0..500 {
            let x = a.next_spec();
            assert!((11_000..=14_000).contains(&x.mips));
            assert_eq!(x, b.next_spec());
        }
    }

    #[test]
    fn sequence_cycles() {
        let specs = vec![CpuSpec::new(15_369, 1_518_351), CpuSpec::new(15_362, 1_494_906)];
        let mut s = MipsSampler::new(MipsModel::Sequence { specs });
        assert_eq!(s.next_spec().mips, 15_369);
        assert_eq!(s.next_spec().mips, 15_362);
        assert_eq!(s.next_spec().mips, 15_369);
    }

    #[test]
    fn rejects_degenerate_models() {
        assert!(MipsModel::uniform(100, 100, 0).validate().is_err());
        assert!(MipsModel::Fixed { mips: 0, kflops: 1 }.validate().is_err());
        assert!(MipsModel::Sequence { specs: vec![] }.validate().is_err());
        assert!(MipsModel::default().validate().is_ok());
    }
}
