//! Declarative scenario files for the simulate subcommand: one `key = value`
//! per line, `#` comments allowed.
//!
//! ```text
//! n = 500
//! p = 4
//! replications = 1000
//! alpha = 0.05
//! seed = 42
//! betas = 0, 0.5
//! tests = independence, equicorr-free      # equicorr-fixed, specified, bartlett
//! generator = contaminated                 # pure-gaussian | contaminated | heavy-tailed
//! mu = 0, 0, 0, 0                          # optional, default zeros
//! variances = 1, 1, 1, 1                   # optional, default ones
//! corr = equicorr:0.3                      # identity | equicorr:<rho> | file:<path>
//! epsilon = 0.1                            # contaminated
//! contaminant = point-mass                 # point-mass | location-shift | scale-inflation
//! contaminant_point = 5, 5, 5, 5
//! dof = 3                                  # heavy-tailed scale-mixture factor
//! rho0 = 0.3                               # for the equicorr-fixed test
//! r0_file = null.csv                       # for the specified test
//! tolerance = 1e-10                        # optional fit controls
//! max_iterations = 500
//! damping = 1.0
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use rao_beta_score::estimators::FitConfig;
use rao_beta_score::gaussian::GaussianParams;
use rao_beta_score::matrix::{equicorr_matrix, SymMatrix};
use rao_beta_score::sim::{Contaminant, ContaminatedSpec, Generator, NullHypothesis, ScenarioSpec};
use rao_beta_score::{Error, Result};

use crate::io_utils;
use crate::validate_correlation_file;

pub fn parse_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = io_utils::read_text(path)?;
    let mut map: HashMap<String, String> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Data(format!(
                "{}: line {}: expected 'key = value', got '{line}'",
                path.display(),
                idx + 1
            )));
        };
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Data(format!(
                "{}: duplicate key '{key}'",
                path.display()
            )));
        }
    }

    let known = [
        "n",
        "p",
        "replications",
        "alpha",
        "seed",
        "betas",
        "tests",
        "generator",
        "mu",
        "variances",
        "corr",
        "epsilon",
        "contaminant",
        "contaminant_point",
        "contaminant_shift",
        "contaminant_scale",
        "dof",
        "rho0",
        "r0_file",
        "tolerance",
        "max_iterations",
        "damping",
    ];
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            return Err(Error::Data(format!(
                "{}: unknown scenario key '{key}'",
                path.display()
            )));
        }
    }

    let get = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| Error::Data(format!("{}: missing key '{k}'", path.display())))
    };
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Data(format!("{}: key '{k}' is not an integer", path.display())))
    };
    let parse_f64 = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Data(format!("{}: key '{k}' is not a number", path.display())))
    };
    let parse_f64_list = |k: &str| -> Result<Vec<f64>> {
        get(k)?
            .split(',')
            .map(|t| {
                t.trim().parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: key '{k}' has a non-numeric entry",
                        path.display()
                    ))
                })
            })
            .collect()
    };

    let n = parse_usize("n")?;
    let p = parse_usize("p")?;
    let replications = parse_usize("replications")?;
    let seed: u64 = get("seed")?
        .parse()
        .map_err(|_| Error::Data(format!("{}: key 'seed' is not an integer", path.display())))?;
    let alpha = if map.contains_key("alpha") {
        parse_f64("alpha")?
    } else {
        0.05
    };
    let betas = if map.contains_key("betas") {
        parse_f64_list("betas")?
    } else {
        vec![0.0]
    };

    let mu = if map.contains_key("mu") {
        let v = parse_f64_list("mu")?;
        if v.len() != p {
            return Err(Error::Data(format!(
                "{}: 'mu' has {} entries for p = {p}",
                path.display(),
                v.len()
            )));
        }
        Array1::from_vec(v)
    } else {
        Array1::zeros(p)
    };
    let variances = if map.contains_key("variances") {
        let v = parse_f64_list("variances")?;
        if v.len() != p {
            return Err(Error::Data(format!(
                "{}: 'variances' has {} entries for p = {p}",
                path.display(),
                v.len()
            )));
        }
        Array1::from_vec(v)
    } else {
        Array1::ones(p)
    };
    let corr = match map.get("corr").map(String::as_str) {
        None | Some("identity") => SymMatrix::new(Array2::eye(p))?,
        Some(spec) if spec.starts_with("equicorr:") => {
            let rho: f64 = spec["equicorr:".len()..].trim().parse().map_err(|_| {
                Error::Data(format!("{}: bad equicorr value in 'corr'", path.display()))
            })?;
            equicorr_matrix(rho, p)?
        }
        Some(spec) if spec.starts_with("file:") => {
            let file = PathBuf::from(spec["file:".len()..].trim());
            validate_correlation_file(&file, p)?
        }
        Some(other) => {
            return Err(Error::Data(format!(
                "{}: 'corr' must be identity, equicorr:<rho> or file:<path>, got '{other}'",
                path.display()
            )));
        }
    };
    let clean = GaussianParams::new(mu, variances, corr)?;

    let generator = match map
        .get("generator")
        .map(String::as_str)
        .unwrap_or("pure-gaussian")
    {
        "pure-gaussian" => Generator::PureGaussian(clean),
        "contaminated" => {
            let epsilon = parse_f64("epsilon")?;
            let contaminant = match get("contaminant")?.as_str() {
                "point-mass" => {
                    let v = parse_f64_list("contaminant_point")?;
                    Contaminant::PointMass(Array1::from_vec(v))
                }
                "location-shift" => {
                    let v = parse_f64_list("contaminant_shift")?;
                    Contaminant::LocationShift(Array1::from_vec(v))
                }
                "scale-inflation" => Contaminant::ScaleInflation(parse_f64("contaminant_scale")?),
                other => {
                    return Err(Error::Data(format!(
                        "{}: unknown contaminant '{other}'",
                        path.display()
                    )));
                }
            };
            Generator::Contaminated(ContaminatedSpec {
                epsilon,
                clean,
                contaminant,
            })
        }
        "heavy-tailed" => Generator::HeavyTailed {
            params: clean,
            dof: parse_f64("dof")?,
        },
        other => {
            return Err(Error::Data(format!(
                "{}: unknown generator '{other}'",
                path.display()
            )));
        }
    };

    let mut nulls = Vec::new();
    for name in get("tests")?.split(',') {
        nulls.push(match name.trim() {
            "independence" => NullHypothesis::Independence,
            "equicorr-free" => NullHypothesis::EquicorrFree,
            "equicorr-fixed" => NullHypothesis::EquicorrFixed {
                rho0: parse_f64("rho0")?,
            },
            "specified" => {
                let file = PathBuf::from(get("r0_file")?);
                NullHypothesis::SpecifiedR {
                    r0: validate_correlation_file(&file, p)?,
                }
            }
            "bartlett" => NullHypothesis::Bartlett,
            other => {
                return Err(Error::Data(format!(
                    "{}: unknown test '{other}'",
                    path.display()
                )));
            }
        });
    }

    let fit = FitConfig {
        tolerance: if map.contains_key("tolerance") {
            parse_f64("tolerance")?
        } else {
            FitConfig::default().tolerance
        },
        max_iterations: if map.contains_key("max_iterations") {
            parse_usize("max_iterations")?
        } else {
            FitConfig::default().max_iterations
        },
        damping: if map.contains_key("damping") {
            parse_f64("damping")?
        } else {
            FitConfig::default().damping
        },
    };

    Ok(ScenarioSpec {
        n,
        p,
        generator,
        nulls,
        betas,
        replications,
        alpha,
        seed,
        fit,
    })
}
