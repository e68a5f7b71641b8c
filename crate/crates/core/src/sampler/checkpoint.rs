//! Chain files.
//!
//! A chain is persisted as two files:
//!
//! - `<path>`: CSV with header
//!   `iter,eta,sigma2,delta1,gamma_1..gamma_p,beta_1..beta_K,delta_1..delta_D`
//!   and one record per stored iteration. `beta_k` follows the grid's
//!   resolution-major column order; `delta_k` lists `δ_{j,r}` for `r ≥ 2` in
//!   the same order. Floats use the shortest representation that round-trips.
//! - `<path>.meta`: `key=value` lines with the seed, mode, grid and
//!   hyperparameters.
//!
//! The record file depends only on the draws, so two runs that produce the
//! same draws produce byte-identical chain files whatever their mode.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ChainSamples, Draw, Hyperparams, SamplerMode};
use crate::grid::{DomainBox, MultiresGrid};
use crate::{Error, Result};

const FORMAT: &str = "mdct-chain-1";

/// Everything needed to interpret a chain file.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMeta {
    pub family: String,
    pub seed: u64,
    pub mode: SamplerMode,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolutions: usize,
    pub j1_dims: Vec<usize>,
    pub hyper: Hyperparams,
    pub p: usize,
}

impl ChainMeta {
    pub fn new(family: &str, chain: &ChainSamples, grid: &MultiresGrid, hyper: &Hyperparams, p: usize) -> Self {
        Self {
            family: family.to_string(),
            seed: chain.seed,
            mode: chain.mode,
            n_iter: chain.n_iter,
            burn_in: chain.burn_in,
            thin: chain.thin,
            lower: grid.domain().lower().to_vec(),
            upper: grid.domain().upper().to_vec(),
            resolutions: grid.resolutions(),
            j1_dims: grid.j1_dims().to_vec(),
            hyper: *hyper,
            p,
        }
    }

    pub fn grid(&self) -> Result<MultiresGrid> {
        MultiresGrid::new(DomainBox::new(self.lower.clone(), self.upper.clone())?, self.resolutions, &self.j1_dims)
    }

    fn render(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "format={FORMAT}");
        let _ = writeln!(s, "family={}", self.family);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "mode={}", self.mode);
        let _ = writeln!(s, "n_iter={}", self.n_iter);
        let _ = writeln!(s, "burn_in={}", self.burn_in);
        let _ = writeln!(s, "thin={}", self.thin);
        let _ = writeln!(s, "lower={}", join(&self.lower));
        let _ = writeln!(s, "upper={}", join(&self.upper));
        let _ = writeln!(s, "resolutions={}", self.resolutions);
        let _ = writeln!(
            s,
            "j1={}",
            self.j1_dims.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(s, "c={}", self.hyper.c);
        let _ = writeln!(s, "a_sigma={}", self.hyper.a_sigma);
        let _ = writeln!(s, "b_sigma={}", self.hyper.b_sigma);
        let _ = writeln!(s, "h_eta={}", self.hyper.h_eta);
        let _ = writeln!(s, "p={}", self.p);
        s
    }

    fn parse(text: &str) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("bad chain metadata line '{line}'")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).cloned().ok_or_else(|| Error::Data(format!("chain metadata lacks '{k}'")));
        fn num<T: FromStr>(k: &str, v: String) -> Result<T> {
            v.parse().map_err(|_| Error::Data(format!("chain metadata '{k}' has bad value '{v}'")))
        }
        fn list<T: FromStr>(k: &str, v: String) -> Result<Vec<T>> {
            v.split(',').map(|x| num(k, x.trim().to_string())).collect()
        }
        if get("format")? != FORMAT {
            return Err(Error::Data("unsupported chain metadata format".into()));
        }
        Ok(Self {
            family: get("family")?,
            seed: num("seed", get("seed")?)?,
            mode: get("mode")?.parse()?,
            n_iter: num("n_iter", get("n_iter")?)?,
            burn_in: num("burn_in", get("burn_in")?)?,
            thin: num("thin", get("thin")?)?,
            lower: list("lower", get("lower")?)?,
            upper: list("upper", get("upper")?)?,
            resolutions: num("resolutions", get("resolutions")?)?,
            j1_dims: list("j1", get("j1")?)?,
            hyper: Hyperparams {
                c: num("c", get("c")?)?,
                a_sigma: num("a_sigma", get("a_sigma")?)?,
                b_sigma: num("b_sigma", get("b_sigma")?)?,
                h_eta: num("h_eta", get("h_eta")?)?,
            },
            p: num("p", get("p")?)?,
        })
    }
}

/// Path of the metadata sidecar of a chain file.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Write the chain records and the metadata sidecar.
pub fn write_chain(path: &Path, chain: &ChainSamples, meta: &ChainMeta) -> Result<()> {
    let n_beta = meta.grid()?.total_knots();
    let n_delta = n_beta - meta.j1_dims.iter().product::<usize>();
    let mut out = String::from("iter,eta,sigma2,delta1");
    for k in 1..=meta.p {
        let _ = write!(out, ",gamma_{k}");
    }
    for k in 1..=n_beta {
        let _ = write!(out, ",beta_{k}");
    }
    for k in 1..=n_delta {
        let _ = write!(out, ",delta_{k}");
    }
    out.push('\n');
    for d in &chain.draws {
        if d.gamma.len() != meta.p || d.beta.len() != n_beta || d.delta.len() != n_delta {
            return Err(Error::Data(format!("draw at iteration {} does not match the chain layout", d.iter)));
        }
        let _ = write!(out, "{},{},{},{}", d.iter, d.eta, d.sigma2, d.delta1);
        for v in d.gamma.iter().chain(&d.beta).chain(&d.delta) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    fs::write(meta_path(path), meta.render())?;
    Ok(())
}

/// Read a chain file and its metadata sidecar.
pub fn read_chain(path: &Path) -> Result<(ChainMeta, ChainSamples)> {
    let meta_file = meta_path(path);
    let meta = ChainMeta::parse(
        &fs::read_to_string(&meta_file)
            .map_err(|e| Error::Data(format!("cannot read {}: {e}", meta_file.display())))?,
    )?;
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Data("empty chain file".into()))?.split(',').collect();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (p, n_beta, n_delta) = (count("gamma_"), count("beta_"), count("delta_"));
    if header.len() != 4 + p + n_beta + n_delta || header[..4] != ["iter", "eta", "sigma2", "delta1"] {
        return Err(Error::Data("chain file header is malformed".into()));
    }
    if p != meta.p || n_beta != meta.grid()?.total_knots() {
        return Err(Error::Data("chain file does not match its metadata".into()));
    }
    let mut draws = Vec::new();
    for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Data(format!("chain record {} has {} fields, expected {}", ln + 1, fields.len(), header.len())));
        }
        let f = |k: usize| -> Result<f64> {
            fields[k].parse().map_err(|_| Error::Data(format!("bad number '{}' in chain record {}", fields[k], ln + 1)))
        };
        let vals: Vec<f64> = (4..fields.len()).map(f).collect::<Result<_>>()?;
        draws.push(Draw {
            iter: fields[0].parse().map_err(|_| Error::Data(format!("bad iteration in chain record {}", ln + 1)))?,
            eta: fields[1].parse().map_err(|_| Error::Data(format!("bad eta in chain record {}", ln + 1)))?,
            sigma2: f(2)?,
            delta1: f(3)?,
            gamma: vals[..p].to_vec(),
            beta: vals[p..p + n_beta].to_vec(),
            delta: vals[p + n_beta..].to_vec(),
        });
    }
    let chain = ChainSamples {
        draws,
        n_iter: meta.n_iter,
        burn_in: meta.burn_in,
        thin: meta.thin,
        seed: meta.seed,
        mode: meta.mode,
        iter_seconds: Vec::new(),
    };
    Ok((meta, chain))
}
