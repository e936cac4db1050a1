use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use archimax::config::ModelConfigFile;
use archimax::extremal::{chi_curve_empirical, classify_model, limit_stdf_ai, limit_stdf_eval, pairwise_limit_lambda, ClusterClassification};
use archimax::generator::{ArchimedeanGenerator, Family};
use archimax::inference::blockmax::{block_maxima, parse_date, parse_month, BlockRule};
use archimax::inference::pickands::cfg_pickands_grid;
use archimax::inference::pseudo::pseudo_column;
use archimax::inference::{
    cfg_lambda, cluster_theta_bar, fit_intra_cluster_pairs, homogeneity_analysis, pseudo_observations, HomogeneityConfig, Norm,
    PairFitConfig, PairwiseMethod, PseudoObservations, Scaling,
};
use archimax::model::{ClusterPartition, ClusteredModelSpec, RadialCopulaSpec};
use archimax::radial_fit::{fit_radial, RadialFitConfig};
use archimax::rng::derive_seed;
use archimax::sampler::sample_clustered;
use archimax::stdf::Stdf;
use archimax::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::io::{fmt_f64, read_matrix, read_table, write_json, write_matrix, write_rows};

/// What a command read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
    pub summary: Option<serde_json::Value>,
}

pub fn load_config(path: &Path) -> Result<(ModelConfigFile, serde_json::Value)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::domain(format!("{}: {e}", path.display())))?;
    let cfg = ModelConfigFile::from_json(&text)?;
    let echo = serde_json::from_str(&text).map_err(|e| Error::domain(format!("{}: {e}", path.display())))?;
    Ok((cfg, echo))
}

fn resolve_seed(flag: Option<u64>, cfg: &ModelConfigFile) -> u64 {
    flag.or(cfg.seed).unwrap_or(0)
}

/// `1-2,4-7` → 0-based pairs.
pub fn parse_pairs(s: &str, d: usize) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (a, b) = t.trim().split_once('-').ok_or_else(|| Error::domain(format!("pair `{t}` must look like `i-j`")))?;
            let parse = |x: &str| -> Result<usize> {
                let v: usize = x.trim().parse().map_err(|_| Error::domain(format!("`{x}` is not a variable index")))?;
                if v == 0 || v > d {
                    return Err(Error::domain(format!("variable index {v} is outside 1..={d}")));
                }
                Ok(v - 1)
            };
            let (i, j) = (parse(a)?, parse(b)?);
            if i == j {
                return Err(Error::domain(format!("pair `{t}` repeats a variable")));
            }
            Ok((i, j))
        })
        .collect()
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::domain(format!("`{t}` is not a number"))))
        .collect()
}

/// `a:b:m` → m equally spaced points from a to b.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::domain(format!("grid `{s}` must look like `start:end:count`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let m: usize = parts[2].trim().parse().map_err(|_| bad())?;
    match m {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..m).map(|k| a + (b - a) * k as f64 / (m - 1) as f64).collect()),
    }
}

fn one_based(i: usize) -> usize {
    i + 1
}

// ---------------------------------------------------------------- simulate

pub fn simulate(config: &Path, n: usize, seed: Option<u64>, out: &Path) -> Result<Outcome> {
    let (cfg, echo) = load_config(config)?;
    let model = cfg.to_model()?;
    let seed = resolve_seed(seed, &cfg);
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    let data = sample_clustered(&model, n, seed)?;
    let header: Vec<String> = (1..=model.dim()).map(|i| format!("u{i}")).collect();
    write_matrix(out, &header, &data)?;
    Ok(Outcome { inputs: vec![config.into()], outputs: vec![out.into()], seed: Some(seed), config: Some(echo), summary: None })
}

// ---------------------------------------------------------------- eval-stdf

#[derive(Serialize)]
struct StdfOutput {
    x: Vec<f64>,
    estimate: f64,
    std_error: f64,
    n_mc: usize,
    seed: u64,
    /// Closed form valid when the radial variables are asymptotically independent.
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<f64>,
    classification: ClusterClassification,
}

pub fn eval_stdf(config: &Path, x: &str, n_mc: usize, seed: Option<u64>, out: &Path) -> Result<Outcome> {
    let (cfg, echo) = load_config(config)?;
    let model = cfg.to_model()?;
    let seed = resolve_seed(seed, &cfg);
    let x = parse_list(x)?;
    let rep = limit_stdf_eval(&model, &x, n_mc, seed)?;
    let closed_form = match model.radial {
        RadialCopulaSpec::GumbelSurvival(_) => None,
        _ => Some(limit_stdf_ai(&model, &x)?),
    };
    let o = StdfOutput { x, estimate: rep.estimate, std_error: rep.std_error, n_mc, seed, closed_form, classification: rep.classification };
    write_json(out, &o)?;
    Ok(Outcome { inputs: vec![config.into()], outputs: vec![out.into()], seed: Some(seed), config: Some(echo), summary: None })
}

// ---------------------------------------------------------------- tailcoeff

#[derive(Serialize)]
struct LambdaEntry {
    i: usize,
    j: usize,
    same_cluster: bool,
    lambda: f64,
}

#[derive(Serialize)]
struct TailOutput {
    n_mc: usize,
    seed: u64,
    classification: ClusterClassification,
    pairs: Vec<LambdaEntry>,
}

pub fn tailcoeff(config: &Path, pairs: Option<&str>, n_mc: usize, seed: Option<u64>, out: &Path) -> Result<Outcome> {
    let (cfg, echo) = load_config(config)?;
    let model = cfg.to_model()?;
    let seed = resolve_seed(seed, &cfg);
    let d = model.dim();
    let pairs = match pairs {
        Some(s) => parse_pairs(s, d)?,
        None => (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect(),
    };
    let entries = pairs
        .iter()
        .enumerate()
        .map(|(t, &(i, j))| {
            let lambda = pairwise_limit_lambda(&model, i, j, n_mc, derive_seed(seed, t as u64))?;
            Ok(LambdaEntry { i: one_based(i), j: one_based(j), same_cluster: model.partition.cluster_of(i) == model.partition.cluster_of(j), lambda })
        })
        .collect::<Result<Vec<_>>>()?;
    write_json(out, &TailOutput { n_mc, seed, classification: classify_model(&model), pairs: entries })?;
    Ok(Outcome { inputs: vec![config.into()], outputs: vec![out.into()], seed: Some(seed), config: Some(echo), summary: None })
}

// ---------------------------------------------------------------- chi

pub fn chi(data: &Path, pairs: &str, q: &[f64], copula_scale: bool, out: &Path) -> Result<Outcome> {
    let (_, m) = read_matrix(data)?;
    let d = m.ncols();
    let m = if copula_scale {
        if m.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::domain("--copula-scale needs every value in (0, 1)"));
        }
        m
    } else {
        let mut r = DMatrix::zeros(m.nrows(), d);
        for c in 0..d {
            let col: Vec<f64> = m.column(c).iter().copied().collect();
            r.set_column(c, &nalgebra::DVector::from_vec(pseudo_column(&col)?));
        }
        r
    };
    let pairs = parse_pairs(pairs, d)?;
    let header: Vec<String> = ["pair", "q", "chi", "lo", "hi"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (i, j) in pairs {
        for p in chi_curve_empirical(&m, i, j, q)? {
            rows.push(vec![format!("{}-{}", i + 1, j + 1), fmt_f64(p.q), fmt_f64(p.chi), fmt_f64(p.lower), fmt_f64(p.upper)]);
        }
    }
    write_rows(out, &header, &rows)?;
    Ok(Outcome { inputs: vec![data.into()], outputs: vec![out.into()], ..Default::default() })
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTarget {
    Theta,
    Pickands,
    Radial,
    All,
}

#[derive(Serialize)]
struct PairOut {
    cluster: usize,
    i: usize,
    j: usize,
    theta: f64,
    vartheta: f64,
    objective: f64,
    at_boundary: bool,
}

#[derive(Serialize)]
struct ThetaOut {
    method: PairwiseMethod,
    theta_bar: Vec<f64>,
    pairs: Vec<PairOut>,
}

#[derive(Serialize)]
struct GridPoint {
    w: Vec<f64>,
    value: f64,
    raw: f64,
    clamped: bool,
}

#[derive(Serialize)]
struct ClusterPickands {
    cluster: usize,
    variables: Vec<usize>,
    theta_bar: f64,
    clamped: usize,
    grid: Vec<GridPoint>,
}

#[derive(Serialize)]
struct PickandsOut {
    clusters: Vec<ClusterPickands>,
    /// λ̂_ij within clusters; null across clusters.
    lambda: Vec<Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct RhoOut {
    i: usize,
    j: usize,
    clusters: (usize, usize),
    rho: f64,
    loglik: f64,
    flat: bool,
}

#[derive(Serialize)]
struct RhoBarOut {
    clusters: (usize, usize),
    rho_bar: f64,
}

#[derive(Serialize)]
struct RadialOut {
    /// Generator parameters used: `config` or `estimated` (θ̄).
    theta_source: &'static str,
    theta: Vec<f64>,
    nodes: usize,
    pairs: Vec<RhoOut>,
    rho_bar: Vec<RhoBarOut>,
}

#[derive(Serialize, Default)]
struct FitOutput {
    n: usize,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<ThetaOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pickands: Option<PickandsOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radial: Option<RadialOut>,
}

/// Points of the simplex with coordinates in {0, 1/m, …, 1}, in
/// lexicographic order.
pub fn simplex_grid(dim: usize, m: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in 0..=left {
            prefix.push(a);
            rec(left - a, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, dim, &mut Vec::new(), &mut out);
    out.into_iter().map(|c| c.into_iter().map(|a| a as f64 / m as f64).collect()).collect()
}

/// Data and configuration shared by `fit` and `test`.
struct Study {
    cfg: ModelConfigFile,
    echo: serde_json::Value,
    pobs: PseudoObservations,
    families: Vec<Family>,
}

fn load_study(data: &Path, config: &Path) -> Result<Study> {
    let (cfg, echo) = load_config(config)?;
    let partition = cfg.partition()?;
    let families = cfg.families()?;
    let (_, m) = read_matrix(data)?;
    if m.ncols() != partition.dim() {
        return Err(Error::domain(format!("data has {} columns but the partition covers {} variables", m.ncols(), partition.dim())));
    }
    let pobs = pseudo_observations(&m, &partition)?;
    Ok(Study { cfg, echo, pobs, families })
}

pub struct FitOptions {
    pub method: PairwiseMethod,
    pub grid_step: usize,
    pub nodes: usize,
}

pub fn fit(target: FitTarget, data: &Path, config: &Path, opts: &FitOptions, out: &Path) -> Result<Outcome> {
    let st = load_study(data, config)?;
    let partition = st.pobs.partition.clone();
    let d = partition.dim();
    let mut result = FitOutput { n: st.pobs.n(), dim: d, ..Default::default() };
    let mut outputs = vec![out.to_path_buf()];

    let config_thetas: Option<Vec<f64>> = st.cfg.clusters.iter().map(|c| c.generator.theta).collect();
    let need_estimates = target != FitTarget::Radial || config_thetas.is_none();
    let fit_cfg = PairFitConfig { method: opts.method, ..Default::default() };
    let estimates = if need_estimates {
        Some(fit_intra_cluster_pairs(&st.pobs, &st.families, &fit_cfg).map_err(|e| stage("pairwise fit", e))?)
    } else {
        None
    };
    let theta_bar = match &estimates {
        Some(e) => Some(cluster_theta_bar(&e.thetas(), &partition)?),
        None => None,
    };

    if let (Some(e), Some(tb)) = (&estimates, &theta_bar) {
        if matches!(target, FitTarget::Theta | FitTarget::All) {
            result.theta = Some(ThetaOut {
                method: opts.method,
                theta_bar: tb.clone(),
                pairs: e
                    .entries
                    .iter()
                    .map(|p| PairOut {
                        cluster: one_based(p.cluster),
                        i: one_based(p.i),
                        j: one_based(p.j),
                        theta: p.fit.theta,
                        vartheta: p.fit.vartheta,
                        objective: p.fit.objective,
                        at_boundary: p.fit.at_boundary,
                    })
                    .collect(),
            });
        }
        if matches!(target, FitTarget::Pickands | FitTarget::All) {
            result.pickands = Some(pickands_stage(&st, tb, opts.grid_step).map_err(|e| stage("Pickands estimation", e))?);
        }
    }

    if matches!(target, FitTarget::Radial | FitTarget::All) {
        let (theta_source, thetas) = match (&config_thetas, &theta_bar) {
            (Some(t), _) if target == FitTarget::Radial => ("config", t.clone()),
            (_, Some(tb)) => ("estimated", tb.clone()),
            (Some(t), None) => ("config", t.clone()),
            (None, None) => unreachable!("estimates are computed when the configuration has no parameters"),
        };
        let model = plug_in_model(&partition, &st.families, &thetas)?;
        let rcfg = RadialFitConfig { nodes: opts.nodes, ..Default::default() };
        let r = fit_radial(&st.pobs, &model, &rcfg).map_err(|e| stage("radial fit", e))?;
        let mut mat = DMatrix::from_element(d, d, f64::NAN);
        for i in 0..d {
            mat[(i, i)] = 1.0;
        }
        for p in &r.pairs {
            mat[(p.i, p.j)] = p.rho;
            mat[(p.j, p.i)] = p.rho;
        }
        let rho_path = sibling(out, "rho.csv");
        write_matrix(&rho_path, &(1..=d).map(|i| format!("v{i}")).collect::<Vec<_>>(), &mat)?;
        outputs.push(rho_path);
        result.radial = Some(RadialOut {
            theta_source,
            theta: thetas,
            nodes: opts.nodes,
            pairs: r
                .pairs
                .iter()
                .map(|p| RhoOut { i: one_based(p.i), j: one_based(p.j), clusters: (one_based(p.k), one_based(p.l)), rho: p.rho, loglik: p.loglik, flat: p.flat })
                .collect(),
            rho_bar: r.averages.iter().map(|a| RhoBarOut { clusters: (one_based(a.k), one_based(a.l)), rho_bar: a.rho_bar }).collect(),
        });
    }
    write_json(out, &result)?;
    Ok(Outcome { inputs: vec![data.into(), config.into()], outputs, seed: None, config: Some(st.echo), summary: None })
}

fn stage(name: &str, e: Error) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("{name}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{name}: {m}")),
        Error::Capability(m) => Error::Capability(format!("{name}: {m}")),
        other => other,
    }
}

/// `out` with its extension replaced by `ext` (`fit.json` → `fit.rho.csv`).
pub fn sibling(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

fn plug_in_model(partition: &ClusterPartition, families: &[Family], thetas: &[f64]) -> Result<ClusteredModelSpec> {
    let generators = families.iter().zip(thetas).map(|(f, t)| ArchimedeanGenerator::new(*f, *t)).collect::<Result<Vec<_>>>()?;
    let stdfs = partition.blocks().iter().map(|b| Stdf::independence(b.len())).collect::<Result<Vec<_>>>()?;
    ClusteredModelSpec::new(partition.clone(), generators, stdfs, RadialCopulaSpec::Independence)
}

fn pickands_stage(st: &Study, theta_bar: &[f64], step: usize) -> Result<PickandsOut> {
    if step == 0 {
        return Err(Error::domain("grid step count must be positive"));
    }
    let p = &st.pobs.partition;
    let d = p.dim();
    let mut clusters = Vec::new();
    let mut lambda = vec![vec![None; d]; d];
    for k in 0..p.n_clusters() {
        let mut cols = p.block(k).to_vec();
        cols.sort_unstable();
        let grid = simplex_grid(cols.len(), step);
        let (est, clamped) = cfg_pickands_grid(&st.pobs, &cols, theta_bar[k], st.families[k], &grid)?;
        clusters.push(ClusterPickands {
            cluster: one_based(k),
            variables: cols.iter().map(|&c| one_based(c)).collect(),
            theta_bar: theta_bar[k],
            clamped,
            grid: grid.into_iter().zip(est).map(|(w, e)| GridPoint { w, value: e.value, raw: e.raw, clamped: e.clamped }).collect(),
        });
        for (a, &i) in cols.iter().enumerate() {
            lambda[i][i] = Some(1.0);
            for &j in &cols[a + 1..] {
                let l = cfg_lambda(&st.pobs, theta_bar[k], st.families[k], i, j)?;
                lambda[i][j] = Some(l);
                lambda[j][i] = Some(l);
            }
        }
    }
    Ok(PickandsOut { clusters, lambda })
}

// ---------------------------------------------------------------- test

#[derive(Serialize)]
struct TestPair {
    cluster: usize,
    i: usize,
    j: usize,
    theta: f64,
    vartheta: f64,
    t: f64,
}

#[derive(Serialize)]
struct TestOutput {
    n: usize,
    method: PairwiseMethod,
    scaling: Scaling,
    norm: Norm,
    /// p-value for the selected norm.
    p_value: f64,
    p_sup: f64,
    p_euclid: f64,
    statistic_sup: f64,
    statistic_euclid: f64,
    n_mc: usize,
    seed: u64,
    theta_bar: Vec<f64>,
    pairs: Vec<TestPair>,
    /// Jackknife covariance of √n·T, in the order of `pairs`.
    sigma: Vec<Vec<f64>>,
}

pub struct TestOptions {
    pub method: PairwiseMethod,
    pub norm: Norm,
    pub scaling: Scaling,
    pub n_mc: usize,
    pub seed: Option<u64>,
}

pub fn test(data: &Path, config: &Path, opts: &TestOptions, out: &Path) -> Result<Outcome> {
    let st = load_study(data, config)?;
    let seed = resolve_seed(opts.seed, &st.cfg);
    let hc = HomogeneityConfig { fit: PairFitConfig { method: opts.method, ..Default::default() }, scaling: opts.scaling, n_mc: opts.n_mc, seed };
    let r = homogeneity_analysis(&st.pobs, &st.families, &hc).map_err(|e| stage("homogeneity test", e))?;
    let pairs = r
        .index
        .iter()
        .zip(&r.t)
        .map(|(&(k, i, j), &t)| {
            let f = r.estimates.get(i, j).expect("every indexed pair has an estimate");
            TestPair { cluster: one_based(k), i: one_based(i), j: one_based(j), theta: f.theta, vartheta: f.vartheta, t }
        })
        .collect();
    let o = TestOutput {
        n: r.n,
        method: opts.method,
        scaling: opts.scaling,
        norm: opts.norm,
        p_value: r.p_values.get(opts.norm),
        p_sup: r.p_values.sup,
        p_euclid: r.p_values.euclid,
        statistic_sup: r.p_values.stat_sup,
        statistic_euclid: r.p_values.stat_euclid,
        n_mc: r.n_mc,
        seed,
        theta_bar: r.theta_bar,
        pairs,
        sigma: r.sigma.row_iter().map(|row| row.iter().copied().collect()).collect(),
    };
    write_json(out, &o)?;
    Ok(Outcome { inputs: vec![data.into(), config.into()], outputs: vec![out.into()], seed: Some(seed), config: Some(st.echo), summary: None })
}

// ---------------------------------------------------------------- preprocess

pub fn preprocess(data: &Path, date_column: &str, months: &str, rule: BlockRule, out: &Path) -> Result<Outcome> {
    let (header, rows) = read_table(data)?;
    let dc = header
        .iter()
        .position(|h| h.eq_ignore_ascii_case(date_column))
        .ok_or_else(|| Error::domain(format!("{}: no column named `{date_column}`", data.display())))?;
    let months: BTreeSet<u32> = months.split(',').filter(|s| !s.trim().is_empty()).map(parse_month).collect::<Result<_>>()?;
    let dates = rows
        .iter()
        .enumerate()
        .map(|(r, row)| parse_date(row.get(dc).map(String::as_str).unwrap_or("")).map_err(|e| Error::domain(format!("row {}: {e}", r + 2))))
        .collect::<Result<Vec<_>>>()?;
    let value_cols: Vec<usize> = (0..header.len()).filter(|&c| c != dc).collect();
    let columns = value_cols
        .iter()
        .map(|&c| {
            rows.iter()
                .enumerate()
                .map(|(r, row)| {
                    let f = row.get(c).map(String::as_str).unwrap_or("");
                    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
                        Ok(f64::NAN)
                    } else {
                        f.parse::<f64>().map_err(|_| Error::domain(format!("row {}, column `{}`: `{f}` is not a number", r + 2, header[c])))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let b = block_maxima(&dates, &columns, &months, rule)?;
    let mut out_header = vec!["block".to_string()];
    out_header.extend(value_cols.iter().map(|&c| header[c].clone()));
    let out_rows: Vec<Vec<String>> = b
        .blocks
        .iter()
        .enumerate()
        .map(|(r, key)| std::iter::once(key.to_string()).chain(b.columns.iter().map(|c| fmt_f64(c[r]))).collect())
        .collect();
    write_rows(out, &out_header, &out_rows)?;
    let summary = serde_json::json!({ "blocks": b.blocks.len(), "dropped": b.dropped });
    Ok(Outcome { inputs: vec![data.into()], outputs: vec![out.into()], summary: Some(summary), ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(3, 10).len(), 66);
        assert_eq!(simplex_grid(2, 2), vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
    }

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_pairs("1-2, 4-7", 9).unwrap(), vec![(0, 1), (3, 6)]);
        assert!(parse_pairs("1-10", 9).is_err());
        assert!(parse_pairs("3-3", 9).is_err());
        assert_eq!(parse_grid("0.9:0.99:2").unwrap(), vec![0.9, 0.99]);
        assert!(parse_grid("0.9:0.99").is_err());
        assert_eq!(parse_list("1,0.5").unwrap(), vec![1.0, 0.5]);
    }
}
