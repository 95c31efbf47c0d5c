//! Compact textual forms for distributions and scheduler policies.

use chunksched::policy::{LearnedTableRule, MomentKind, MomentRefs, PolicyVariant};
use chunksched::scan::synth::Distribution;

fn split(s: &str) -> (&str, Option<&str>) {
    match s.split_once(':') {
        Some((name, arg)) => (name.trim(), Some(arg.trim())),
        None => (s.trim(), None),
    }
}

fn num<T: std::str::FromStr>(what: &str, arg: Option<&str>, default: T) -> Result<T, String> {
    match arg {
        None => Ok(default),
        Some(a) => a.parse().map_err(|_| format!("{what}: cannot parse {a:?}")),
    }
}

/// `uniform`, `normal[:mean,std]`, `standard_normal`, `laplace[:scale]`,
/// `sparse[:fraction]`, `student_t[:dof]`.
pub fn distribution(s: &str) -> Result<Distribution, String> {
    let (name, arg) = split(s);
    let d = match name.to_ascii_lowercase().replace('-', "_").as_str() {
        "uniform" => Distribution::Uniform,
        "standard_normal" | "gaussian" => Distribution::StandardNormal,
        "normal" => match arg {
            None => Distribution::StandardNormal,
            Some(a) => {
                let (m, sd) = a.split_once(',').ok_or_else(|| format!("normal needs mean,std, got {a:?}"))?;
                Distribution::Normal {
                    mean: num("normal mean", Some(m.trim()), 0.0)?,
                    std: num("normal std", Some(sd.trim()), 1.0)?,
                }
            }
        },
        "laplace" => Distribution::Laplace {
            scale: num("laplace scale", arg, 1.0)?,
        },
        "sparse" => Distribution::Sparse {
            fraction: num("sparse fraction", arg, 0.1)?,
        },
        "student_t" | "t" => Distribution::StudentT {
            dof: num("student_t dof", arg, 3.0)?,
        },
        other => return Err(format!("unknown distribution {other:?}")),
    };
    d.validate().map_err(|e| e.to_string())?;
    Ok(d)
}

/// `static:<chunk>`, `no-entropy`, `random[:seed]`, `full-histogram`,
/// `sampled-histogram[:stride]`, `token-histogram[:stride]`, `cheap-moment`,
/// `variance`, `kurtosis`, `learned-table[:threshold]`.
pub fn policy(s: &str, default_seed: u64) -> Result<PolicyVariant, String> {
    let (name, arg) = split(s);
    let moment = |proxy| PolicyVariant::MomentProxy {
        proxy,
        refs: MomentRefs::default(),
    };
    let v = match name {
        "static" => PolicyVariant::Static {
            chunk: arg
                .ok_or("static needs a chunk, e.g. static:512")?
                .parse()
                .map_err(|_| format!("bad static chunk in {s:?}"))?,
        },
        "no-entropy" => PolicyVariant::NoEntropyMidpoint,
        "random" => PolicyVariant::Random {
            seed: num("random seed", arg, default_seed)?,
        },
        "full-histogram" => PolicyVariant::FullHistogram,
        "sampled-histogram" => PolicyVariant::SampledHistogram {
            stride: num("sampled stride", arg, 8)?,
        },
        "token-histogram" => PolicyVariant::TokenHistogram {
            stride: num("token stride", arg, 1)?,
        },
        "cheap-moment" => moment(MomentKind::Cheap),
        "variance" => moment(MomentKind::Variance),
        "kurtosis" => moment(MomentKind::Kurtosis),
        "learned-table" => PolicyVariant::LearnedTable(LearnedTableRule {
            threshold_tokens: num("threshold", arg, LearnedTableRule::default().threshold_tokens)?,
            ..LearnedTableRule::default()
        }),
        other => return Err(format!("unknown policy {other:?}")),
    };
    Ok(v)
}

/// Comma-separated unsigned integers.
pub fn usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| format!("bad integer {t:?}")))
        .collect()
}

/// `a..b` (half-open) or a comma-separated list.
pub fn seed_list(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range end in {s:?}"))?;
        if a >= b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad seed {t:?}")))
        .collect()
}
