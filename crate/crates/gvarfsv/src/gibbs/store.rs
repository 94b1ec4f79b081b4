//! Checkpoints and the on-disk draw store.
//!
//! A checkpoint is a single binary file that embeds the spec and config as
//! JSON, the weights, every piece of sampler state, and the retained draws,
//! plus a SHA-256 digest of the inputs. Resuming re-derives every RNG stream
//! from `(seed, sweep)`, so a resumed chain is bit-identical to one that ran
//! straight through; the digest stops a checkpoint from being resumed against
//! a different panel, spec, config, or weight matrix.
//!
//! The draw store is a directory with a JSON manifest and one flat binary
//! file per retained draw, which is what the identification and IRF stages
//! consume.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Chain, ChainConfig, ChainState, GibbsError, MeanAccumulator, RetainedDraw};
use crate::binio::{
    read_matrix, read_u32, read_u64, read_vector, write_matrix, write_u32, write_u64,
    write_vector, BinIoError,
};
use crate::data::PanelDataset;
use crate::model::{CoefficientState, CountryCoefficients, ModelSpec, WeightMatrix};
use crate::samplers::{BtauAdapt, NormalGammaState, PoolingState};
use crate::sv::{SvParams, VolatilityState};

const CHECKPOINT_MAGIC: [u8; 4] = *b"GVCK";
const DRAW_MAGIC: [u8; 4] = *b"GVDR";
const FORMAT_VERSION: u32 = 1;

/// Sidecar description of a draw store directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawManifest {
    pub spec: ModelSpec,
    pub config: ChainConfig,
    pub weights: WeightMatrix,
    pub n_draws: u64,
    pub k_system: usize,
    pub n_factors: usize,
    pub t_eff: usize,
    /// Hex SHA-256 of (spec, config, panel, weights).
    pub input_digest: String,
}

fn io_err(path: &Path, source: std::io::Error) -> GibbsError {
    GibbsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<(), BinIoError> {
    crate::binio::write_f64(w, v)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, BinIoError> {
    crate::binio::read_f64(r)
}

fn write_bytes<W: Write>(w: &mut W, data: &[u8]) -> Result<(), BinIoError> {
    write_u64(w, data.len() as u64)?;
    w.write_all(data)?;
    Ok(())
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, BinIoError> {
    let len = read_u64(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn write_header<W: Write>(w: &mut W, magic: [u8; 4]) -> Result<(), BinIoError> {
    w.write_all(&magic)?;
    write_u32(w, FORMAT_VERSION)
}

fn read_header<R: Read>(r: &mut R, expected: [u8; 4]) -> Result<(), BinIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != expected {
        return Err(BinIoError::BadMagic {
            expected,
            found: magic,
        });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(BinIoError::BadVersion(version));
    }
    Ok(())
}

fn write_matrix_list<W: Write>(w: &mut W, ms: &[DMatrix<f64>]) -> Result<(), BinIoError> {
    write_u64(w, ms.len() as u64)?;
    for m in ms {
        write_matrix(w, m)?;
    }
    Ok(())
}

fn read_matrix_list<R: Read>(r: &mut R) -> Result<Vec<DMatrix<f64>>, BinIoError> {
    let n = read_u64(r)? as usize;
    (0..n).map(|_| read_matrix(r)).collect()
}

fn write_coeffs<W: Write>(w: &mut W, c: &CoefficientState) -> Result<(), BinIoError> {
    write_vector(w, &c.agg_intercept)?;
    write_matrix_list(w, &c.agg_domestic)?;
    write_matrix_list(w, &c.agg_foreign)?;
    write_u64(w, c.countries.len() as u64)?;
    for cb in &c.countries {
        write_vector(w, &cb.intercept)?;
        write_matrix_list(w, &cb.domestic)?;
        write_matrix_list(w, &cb.foreign)?;
        write_matrix_list(w, &cb.aggregate)?;
    }
    Ok(())
}

fn read_coeffs<R: Read>(r: &mut R) -> Result<CoefficientState, BinIoError> {
    let agg_intercept = read_vector(r, None)?;
    let agg_domestic = read_matrix_list(r)?;
    let agg_foreign = read_matrix_list(r)?;
    let n = read_u64(r)? as usize;
    let mut countries = Vec::with_capacity(n);
    for _ in 0..n {
        countries.push(CountryCoefficients {
            intercept: read_vector(r, None)?,
            domestic: read_matrix_list(r)?,
            foreign: read_matrix_list(r)?,
            aggregate: read_matrix_list(r)?,
        });
    }
    Ok(CoefficientState {
        agg_intercept,
        agg_domestic,
        agg_foreign,
        countries,
    })
}

fn write_sv_params<W: Write>(w: &mut W, ps: &[SvParams]) -> Result<(), BinIoError> {
    write_u64(w, ps.len() as u64)?;
    for p in ps {
        write_f64(w, p.theta)?;
        write_f64(w, p.phi)?;
        write_f64(w, p.sigma)?;
    }
    Ok(())
}

fn read_sv_params<R: Read>(r: &mut R) -> Result<Vec<SvParams>, BinIoError> {
    let n = read_u64(r)? as usize;
    (0..n)
        .map(|_| {
            Ok(SvParams {
                theta: read_f64(r)?,
                phi: read_f64(r)?,
                sigma: read_f64(r)?,
            })
        })
        .collect()
}

fn write_volatility<W: Write>(w: &mut W, v: &VolatilityState) -> Result<(), BinIoError> {
    write_matrix(w, &v.loadings)?;
    write_matrix(w, &v.factors)?;
    write_matrix(w, &v.factor_logvar)?;
    write_matrix(w, &v.idio_logvar)?;
    write_sv_params(w, &v.factor_params)?;
    write_sv_params(w, &v.idio_params)?;
    write_u64(w, v.constant_idio.len() as u64)?;
    for &flag in &v.constant_idio {
        w.write_all(&[flag as u8])?;
    }
    Ok(())
}

fn read_volatility<R: Read>(r: &mut R) -> Result<VolatilityState, BinIoError> {
    let loadings = read_matrix(r)?;
    let factors = read_matrix(r)?;
    let factor_logvar = read_matrix(r)?;
    let idio_logvar = read_matrix(r)?;
    let factor_params = read_sv_params(r)?;
    let idio_params = read_sv_params(r)?;
    let n = read_u64(r)? as usize;
    let mut constant_idio = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        constant_idio.push(b[0] != 0);
    }
    Ok(VolatilityState {
        loadings,
        factors,
        factor_logvar,
        idio_logvar,
        factor_params,
        idio_params,
        constant_idio,
    })
}

fn write_state<W: Write>(w: &mut W, s: &ChainState) -> Result<(), BinIoError> {
    write_u64(w, s.sweep)?;
    write_coeffs(w, &s.coeffs)?;
    write_vector(w, &s.ng.tau)?;
    write_f64(w, s.ng.lambda)?;
    write_f64(w, s.ng.b)?;
    write_f64(w, s.ng.d_tau0)?;
    write_f64(w, s.ng.d_tau1)?;
    let (accepted, total) = s.adapt.window_state();
    write_f64(w, s.adapt.scale)?;
    write_u64(w, accepted as u64)?;
    write_u64(w, total as u64)?;
    write_vector(w, &s.pooling.mu)?;
    write_vector(w, &s.pooling.v)?;
    write_vector(w, &s.pooling.mu0)?;
    write_vector(w, &s.pooling.v0)?;
    write_f64(w, s.pooling.d_v0)?;
    write_f64(w, s.pooling.d_v1)?;
    write_volatility(w, &s.vol)
}

fn read_state<R: Read>(r: &mut R) -> Result<ChainState, BinIoError> {
    let sweep = read_u64(r)?;
    let coeffs = read_coeffs(r)?;
    let ng = NormalGammaState {
        tau: read_vector(r, None)?,
        lambda: read_f64(r)?,
        b: read_f64(r)?,
        d_tau0: read_f64(r)?,
        d_tau1: read_f64(r)?,
    };
    let scale = read_f64(r)?;
    let accepted = read_u64(r)? as usize;
    let total = read_u64(r)? as usize;
    let adapt = BtauAdapt::restore(scale, accepted, total);
    let pooling = PoolingState {
        mu: read_vector(r, None)?,
        v: read_vector(r, None)?,
        mu0: read_vector(r, None)?,
        v0: read_vector(r, None)?,
        d_v0: read_f64(r)?,
        d_v1: read_f64(r)?,
    };
    let vol = read_volatility(r)?;
    Ok(ChainState {
        sweep,
        coeffs,
        ng,
        adapt,
        pooling,
        vol,
    })
}

fn write_draw<W: Write>(w: &mut W, d: &RetainedDraw) -> Result<(), BinIoError> {
    write_u64(w, d.sweep)?;
    write_coeffs(w, &d.coeffs)?;
    write_matrix(w, &d.loadings)?;
    write_vector(w, &d.factor_var)?;
    write_vector(w, &d.idio_var)?;
    write_f64(w, d.deviance.unwrap_or(f64::NAN))
}

fn read_draw<R: Read>(r: &mut R) -> Result<RetainedDraw, BinIoError> {
    let sweep = read_u64(r)?;
    let coeffs = read_coeffs(r)?;
    let loadings = read_matrix(r)?;
    let factor_var = read_vector(r, None)?;
    let idio_var = read_vector(r, None)?;
    let deviance = read_f64(r)?;
    Ok(RetainedDraw {
        sweep,
        coeffs,
        loadings,
        factor_var,
        idio_var,
        deviance: if deviance.is_nan() { None } else { Some(deviance) },
    })
}

fn write_accumulator<W: Write>(w: &mut W, acc: &MeanAccumulator) -> Result<(), BinIoError> {
    write_u64(w, acc.n)?;
    write_coeffs(w, &acc.coeffs)?;
    write_matrix(w, &acc.loadings)?;
    write_matrix(w, &acc.factor_var_path)?;
    write_matrix(w, &acc.idio_var_path)?;
    write_f64(w, acc.deviance)
}

fn read_accumulator<R: Read>(r: &mut R) -> Result<MeanAccumulator, BinIoError> {
    Ok(MeanAccumulator {
        n: read_u64(r)?,
        coeffs: read_coeffs(r)?,
        loadings: read_matrix(r)?,
        factor_var_path: read_matrix(r)?,
        idio_var_path: read_matrix(r)?,
        deviance: read_f64(r)?,
    })
}

fn hex(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Chain {
    /// Writes the full chain — inputs, state, accumulators, draws — to one
    /// binary file that `resume_from_checkpoint` can continue from.
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), GibbsError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        write_header(&mut w, CHECKPOINT_MAGIC)?;
        write_bytes(&mut w, &serde_json::to_vec(&self.spec)?)?;
        write_bytes(&mut w, &serde_json::to_vec(&self.config)?)?;
        write_matrix(&mut w, self.weights.as_matrix())?;
        w.write_all(&self.input_digest).map_err(BinIoError::from)?;
        write_u64(&mut w, self.btau_accepted)?;
        write_u64(&mut w, self.btau_steps)?;
        write_state(&mut w, &self.state)?;
        match &self.accum {
            Some(acc) => {
                w.write_all(&[1u8]).map_err(BinIoError::from)?;
                write_accumulator(&mut w, acc)?;
            }
            None => w.write_all(&[0u8]).map_err(BinIoError::from)?,
        }
        write_u64(&mut w, self.draws.len() as u64)?;
        for d in &self.draws {
            write_draw(&mut w, d)?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }

    /// Reconstructs a chain from a checkpoint and the original panel.
    ///
    /// The designs are rebuilt from the panel and the stored digest is
    /// recomputed; any difference in spec, config, panel, or weights is a
    /// [`GibbsError::CheckpointMismatch`]. The resumed chain continues on the
    /// same RNG streams, so finishing it matches an uninterrupted run bit for
    /// bit.
    pub fn resume_from_checkpoint(
        path: &Path,
        panel: &PanelDataset,
    ) -> Result<Chain, GibbsError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut r = BufReader::new(file);
        read_header(&mut r, CHECKPOINT_MAGIC)?;
        let spec: ModelSpec = serde_json::from_slice(&read_bytes(&mut r)?)?;
        let config: ChainConfig = serde_json::from_slice(&read_bytes(&mut r)?)?;
        let weights = WeightMatrix::from_matrix(read_matrix(&mut r)?)?;
        let mut stored_digest = [0u8; 32];
        r.read_exact(&mut stored_digest).map_err(BinIoError::from)?;
        let recomputed = super::input_digest(&spec, &config, panel, &weights)?;
        if recomputed != stored_digest {
            return Err(GibbsError::CheckpointMismatch(
                "spec, config, panel, or weights differ from the checkpointed run".into(),
            ));
        }
        let btau_accepted = read_u64(&mut r)?;
        let btau_steps = read_u64(&mut r)?;
        let state = read_state(&mut r)?;
        let mut buf = [0u8; 1];
        r.read_exact(&mut buf).map_err(BinIoError::from)?;
        let accum = if buf[0] == 1 {
            Some(read_accumulator(&mut r)?)
        } else {
            None
        };
        let n_draws = read_u64(&mut r)? as usize;
        let mut draws = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            draws.push(read_draw(&mut r)?);
        }

        let designs = super::build_design_set(&spec, panel, &weights)?;
        let equations = super::equation_plan(&spec);
        state.vol.check_shapes()?;
        state.coeffs.check_shapes(&spec)?;
        Ok(Chain {
            spec,
            weights,
            config,
            designs,
            equations,
            state,
            draws,
            accum,
            input_digest: stored_digest,
            btau_accepted,
            btau_steps,
        })
    }
}

/// Writes `manifest.json` plus one `draws/draw_NNNNNN.bin` per retained draw.
pub fn write_draw_store(dir: &Path, chain: &Chain) -> Result<(), GibbsError> {
    let draws_dir = dir.join("draws");
    std::fs::create_dir_all(&draws_dir).map_err(|e| io_err(&draws_dir, e))?;
    let manifest = DrawManifest {
        spec: chain.spec.clone(),
        config: chain.config,
        weights: chain.weights.clone(),
        n_draws: chain.draws.len() as u64,
        k_system: chain.spec.system_size(),
        n_factors: chain.spec.n_factors,
        t_eff: chain.designs.t_eff,
        input_digest: hex(&chain.input_digest),
    };
    let manifest_path = dir.join("manifest.json");
    let file = File::create(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    for (i, d) in chain.draws.iter().enumerate() {
        let path = draws_dir.join(format!("draw_{i:06}.bin"));
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        write_header(&mut w, DRAW_MAGIC)?;
        write_draw(&mut w, d)?;
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Reads a draw store back; draws come out in index order.
pub fn read_draw_store(dir: &Path) -> Result<(DrawManifest, Vec<RetainedDraw>), GibbsError> {
    let manifest_path = dir.join("manifest.json");
    let file = File::open(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: DrawManifest = serde_json::from_reader(BufReader::new(file))?;
    let mut draws = Vec::with_capacity(manifest.n_draws as usize);
    for i in 0..manifest.n_draws {
        let path = dir.join("draws").join(format!("draw_{i:06}.bin"));
        let file = File::open(&path).map_err(|e| io_err(&path, e))?;
        let mut r = BufReader::new(file);
        read_header(&mut r, DRAW_MAGIC)?;
        draws.push(read_draw(&mut r)?);
    }
    Ok((manifest, draws))
}
