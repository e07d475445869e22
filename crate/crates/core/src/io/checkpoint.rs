use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evo::{build_phenotype, Genome, Individual, ParamKey, ParamStore, PhenotypeSpec};
use crate::fid::ByteCursor;
use crate::io::atomic_write;
use crate::nn::{Network, Tensor};

const MAGIC: &[u8; 4] = b"CGAN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A snapshot of one individual at one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub individual: Individual,
    pub generation: usize,
    pub spec: PhenotypeSpec,
}

impl Checkpoint {
    /// Rebuilds the network; every layer must come from the stored parameters.
    pub fn network(&self) -> Result<Network> {
        let ph = build_phenotype(
            &self.individual.genome,
            &self.spec,
            &self.individual.params,
            &mut ChaCha8Rng::seed_from_u64(0),
        )?;
        if ph.fresh != 0 {
            return Err(Error::invalid(format!(
                "checkpoint of individual {} lacks parameters for {} layers",
                self.individual.id, ph.fresh
            )));
        }
        Ok(ph.network)
    }

    /// Binary layout, little-endian:
    /// `"CGAN"`, `u16` version, `u64` id, `u8`+`u64` parent, `u64` species,
    /// `u8`+`f64` fitness, `u8` flagged, `u64` generation, `u32` C, H, W,
    /// z_dim, channels_min, channels_max, `u32`-prefixed genome text, `u32`
    /// layer count, then per layer: `u32`-prefixed key, `u8` rank, `u64`
    /// dims, `f32` weights, `u64` bias length, `f32` biases. A SHA-256 of all
    /// preceding bytes closes the file.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let ind = &self.individual;
        if ind.fitness.is_none() {
            return Err(Error::invalid(format!("individual {} has no fitness", ind.id)));
        }
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        b.extend_from_slice(&ind.id.to_le_bytes());
        b.push(ind.parent.is_some() as u8);
        b.extend_from_slice(&ind.parent.unwrap_or(0).to_le_bytes());
        b.extend_from_slice(&(ind.species as u64).to_le_bytes());
        b.push(ind.fitness.is_some() as u8);
        b.extend_from_slice(&ind.fitness.unwrap_or(0.0).to_le_bytes());
        b.push(ind.flagged as u8);
        b.extend_from_slice(&(self.generation as u64).to_le_bytes());
        let s = &self.spec;
        for v in [
            s.data_shape[0],
            s.data_shape[1],
            s.data_shape[2],
            s.z_dim,
            s.channels_min,
            s.channels_max,
        ] {
            b.extend_from_slice(&(v as u32).to_le_bytes());
        }
        put_str(&mut b, &ind.genome.to_text());
        b.extend_from_slice(&(ind.params.len() as u32).to_le_bytes());
        for (key, (w, bias)) in &ind.params {
            put_str(&mut b, &key.to_string());
            b.push(w.shape().len() as u8);
            for &d in w.shape() {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            put_f32s(&mut b, w.data());
            b.extend_from_slice(&(bias.len() as u64).to_le_bytes());
            put_f32s(&mut b, bias.data());
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = ByteCursor::new(bytes, "checkpoint");
        if c.take(4)? != MAGIC {
            return Err(c.error(0, "bad magic, expected CGAN"));
        }
        let version = c.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(c.error(4, format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
        }
        let id = c.u64()?;
        let has_parent = c.u8()? != 0;
        let parent = c.u64()?;
        let species = c.u64()? as usize;
        let has_fitness = c.u8()? != 0;
        let fitness = c.f64()?;
        let flagged = c.u8()? != 0;
        let generation = c.u64()? as usize;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = c.u32()? as usize;
        }
        let genome_at = c.pos as u64;
        let genome = Genome::from_text(&get_str(&mut c)?).map_err(|e| Error::Format {
            what: "checkpoint",
            offset: genome_at,
            message: e.to_string(),
        })?;
        let count = c.u32()? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let key_at = c.pos as u64;
            let key: ParamKey = get_str(&mut c)?.parse().map_err(|e: Error| Error::Format {
                what: "checkpoint",
                offset: key_at,
                message: e.to_string(),
            })?;
            let rank = c.u8()? as usize;
            let shape = (0..rank).map(|_| c.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let w = get_f32s(&mut c, shape.iter().product())?;
            let blen = c.u64()? as usize;
            let bias = get_f32s(&mut c, blen)?;
            params.insert(key, (Tensor::new(shape, w)?, Tensor::new(vec![blen], bias)?));
        }
        let body_end = c.pos;
        let stored = c.take(32)?;
        if Sha256::digest(&bytes[..body_end]).as_slice() != stored {
            return Err(c.error(body_end as u64, "checksum mismatch"));
        }
        if c.remaining() != 0 {
            return Err(c.error(c.pos as u64, format!("{} trailing bytes", c.remaining())));
        }
        let mut individual = Individual::new(id, genome);
        individual.params = params;
        individual.parent = has_parent.then_some(parent);
        individual.species = species;
        individual.fitness = has_fitness.then_some(fitness);
        individual.flagged = flagged;
        Ok(Checkpoint {
            individual,
            generation,
            spec: PhenotypeSpec {
                data_shape: [dims[0], dims[1], dims[2]],
                z_dim: dims[3],
                channels_min: dims[4],
                channels_max: dims[5],
            },
        })
    }
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    b.extend_from_slice(&(s.len() as u32).to_le_bytes());
    b.extend_from_slice(s.as_bytes());
}

fn get_str(c: &mut ByteCursor<'_>) -> Result<String> {
    let len = c.u32()? as usize;
    let at = c.pos as u64;
    String::from_utf8(c.take(len)?.to_vec()).map_err(|_| c.error(at, "text is not UTF-8"))
}

fn put_f32s(b: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

fn get_f32s(c: &mut ByteCursor<'_>, n: usize) -> Result<Vec<f32>> {
    let len = n.checked_mul(4).ok_or_else(|| c.error(c.pos as u64, "length overflow"))?;
    Ok(c.take(len)?
        .chunks_exact(4)
        .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
        .collect())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    atomic_write(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::Gene;
    use crate::nn::{Activation, Role};

    fn sample() -> Checkpoint {
        let spec = PhenotypeSpec {
            data_shape: [1, 8, 8],
            z_dim: 10,
            channels_min: 4,
            channels_max: 8,
        };
        let genome = Genome::new(Role::Generator, vec![Gene::deconv(3, Activation::Elu, 6, 3)]).unwrap();
        let ph = build_phenotype(&genome, &spec, &ParamStore::new(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut ind = Individual::new(12, genome);
        ind.params = ph.params();
        ind.fitness = Some(0.1 + 0.2);
        ind.parent = Some(4);
        ind.species = 2;
        Checkpoint {
            individual: ind,
            generation: 7,
            spec,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.network().unwrap().parameter_count(), c.network().unwrap().parameter_count());
    }

    #[test]
    fn truncation_names_missing_bytes() {
        let bytes = sample().to_bytes().unwrap();
        let e = Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(e.to_string().contains("5 missing"), "{e}");
    }

    #[test]
    fn corruption_and_version_rejected() {
        let mut bytes = sample().to_bytes().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        let e = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(e.to_string().contains("version"), "{e}");
    }

    #[test]
    fn unevaluated_individual_rejected() {
        let mut c = sample();
        c.individual.fitness = None;
        assert!(c.to_bytes().is_err());
    }
}
