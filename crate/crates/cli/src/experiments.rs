//! The experiment menu. Each experiment returns its artifacts in memory; the
//! runner writes them once everything succeeded.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use udplab::analysis::{
    accuracy, crossing_rate, grid_map, margin_dataset, oscillation_map, robust_accuracy, svg_heatmap,
    GridRange, MarginSearch, Ramp,
};
use udplab::data::{generate, load_idx, opposite_class_histogram, synth, LabeledSet};
use udplab::linearsim::{conditional_mean, fit_contraction_rate, run_chain, Dynamics, OracleState};
use udplab::nnet::encode_model;
use udplab::objectives::{init_ensemble, train, TrainTrace};
use udplab::{exec, seed, Ensemble, Entry, PerturbSpec};

use crate::config::{DatasetConfig, EntryName, ExperimentConfig, ExperimentKind, MethodName};
use crate::output::{num, opt_num, Artifacts};

/// Runs the configured experiment without touching the filesystem (IDX inputs aside).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let name = cfg.experiment.name();
    let out = match cfg.experiment {
        ExperimentKind::ToyBoundary => toy_boundary(cfg),
        ExperimentKind::EpsSweep => eps_sweep(cfg),
        ExperimentKind::Oscillation => oscillation(cfg),
        ExperimentKind::Histogram => histogram(cfg),
        ExperimentKind::Theorem1 => theorem1(cfg),
        ExperimentKind::LdpFailure => ldp_failure(cfg),
        ExperimentKind::CapacitySweep => capacity_sweep(cfg),
        ExperimentKind::LatentLowdata => latent_lowdata(cfg),
        ExperimentKind::CatastrophicProbe => catastrophic_probe(cfg),
    };
    out.with_context(|| format!("experiment {name} failed"))
}

/// Seed shared by every method of replica `r`: same data, same initial weights.
fn replica_seed(cfg: &ExperimentConfig, r: usize) -> u64 {
    seed::derive_named(cfg.seed, cfg.experiment.name(), &[r as u64])
}

fn load_data(cfg: &ExperimentConfig, seed: u64) -> Result<(LabeledSet, Option<LabeledSet>)> {
    match &cfg.dataset {
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            subsample,
        } => {
            let tr = load_idx(train_images, train_labels, subsample.map(|f| (f, seed)))
                .context("data: load_idx (training set)")?;
            let te = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some(load_idx(i, l, None).context("data: load_idx (test set)")?),
                _ => None,
            };
            Ok((tr, te))
        }
        synthetic => {
            let spec = synthetic.synth(seed).expect("synthetic dataset");
            let tr = generate(&spec).context("data: generate")?;
            Ok((tr, None))
        }
    }
}

/// Held-out set: the IDX test files, or a fresh draw of the generator.
fn held_out(cfg: &ExperimentConfig, seed: u64, test: Option<LabeledSet>) -> Result<LabeledSet> {
    if let Some(t) = test {
        return Ok(t);
    }
    match cfg.dataset.synth(seed::derive_named(seed, "test", &[])) {
        Some(spec) => generate(&spec).context("data: generate (held-out set)"),
        None => bail!("data: the IDX dataset has no test files"),
    }
}

fn layer_dims(cfg: &ExperimentConfig, data: &LabeledSet, multiplier: usize) -> Vec<usize> {
    let mut dims = vec![data.dim()];
    dims.extend(cfg.model.hidden.iter().map(|w| w * multiplier));
    dims.push(data.class_count());
    dims
}

struct Trained {
    ens: Ensemble,
    trace: TrainTrace,
}

#[allow(clippy::too_many_arguments)]
fn train_method(
    cfg: &ExperimentConfig,
    method: MethodName,
    epsilon: f64,
    data: &LabeledSet,
    test: Option<&LabeledSet>,
    seed: u64,
    multiplier: usize,
    probe: Option<PerturbSpec>,
    snapshots: bool,
) -> Result<Trained> {
    let dims = layer_dims(cfg, data, multiplier);
    let ens = init_ensemble(&dims, cfg.model.members, cfg.model.encoder_split, seed)
        .context("objectives: init_ensemble")?;
    let mut tc = cfg.train_config(method, epsilon, seed, probe);
    tc.keep_snapshots = snapshots;
    let (ens, trace) = train(ens, data, test, &tc).with_context(|| format!("objectives: train ({})", method.name()))?;
    Ok(Trained { ens, trace })
}

fn margin_search(cfg: &ExperimentConfig, seed: u64) -> MarginSearch {
    MarginSearch {
        directions: cfg.analysis.margin_directions,
        max_radius: cfg.analysis.margin_radius,
        seed,
        ..MarginSearch::default()
    }
}

fn grid_range(cfg: &ExperimentConfig, data: &LabeledSet) -> Result<GridRange> {
    GridRange::around(data, cfg.analysis.pad, cfg.analysis.grid, cfg.analysis.grid).context("analysis: grid range")
}

/// Indices of NC samples in the narrow part of the corridor.
fn narrow_region(cfg: &ExperimentConfig, seed: u64) -> Result<Option<Vec<bool>>> {
    if !cfg.dataset.is_narrow_corridor() {
        return Ok(None);
    }
    let spec = cfg.dataset.synth(seed).expect("synthetic dataset");
    let layout = synth::narrow_corridor_layout(&spec).context("data: narrow_corridor_layout")?;
    Ok(Some(layout.iter().map(|p| p.position < cfg.analysis.narrow_fraction).collect()))
}

const BOUNDARY_HEADER: &str =
    "method,epsilon,replica,train_acc,min_margin,max_margin,misclassified,narrow_misclassified,vertical_fraction\n";

fn eps_tag(eps: f64) -> String {
    format!("{eps}").replace('.', "p")
}

fn boundary_job(
    cfg: &ExperimentConfig,
    method: MethodName,
    epsilon: f64,
    r: usize,
    maps: bool,
) -> Result<(String, Artifacts)> {
    let s = replica_seed(cfg, r);
    let (data, _) = load_data(cfg, s)?;
    let t = train_method(cfg, method, epsilon, &data, None, s, 1, None, false)?;
    let report = margin_dataset(&t.ens, &data, &margin_search(cfg, s)).context("analysis: margin_dataset")?;
    let acc = accuracy(&t.ens, &data).context("analysis: accuracy")?;
    let range = grid_range(cfg, &data)?;
    let grid = grid_map(&t.ens, &range).context("analysis: grid_map")?;
    let vf = grid.vertical_fraction(cfg.analysis.vertical_band);
    let narrow = narrow_region(cfg, s)?.map(|flags| {
        flags
            .iter()
            .zip(&report.misclassified)
            .filter(|(n, m)| **n && **m)
            .count()
    });
    let row = format!(
        "{},{},{r},{},{},{},{},{},{}\n",
        method.name(),
        num(epsilon),
        num(acc),
        num(report.min_margin),
        num(report.max_margin),
        report.misclassified_count(),
        narrow.map(|n| n.to_string()).unwrap_or_default(),
        opt_num(vf),
    );
    let prefix = if maps {
        format!("{}_r{r}", method.name())
    } else {
        format!("{}_eps{}_r{r}", method.name(), eps_tag(epsilon))
    };
    let mut a = Artifacts::default();
    a.add(format!("{prefix}_margins.csv"), report.to_csv());
    if maps {
        a.add(format!("{prefix}_grid.csv"), grid.to_csv());
        a.add(format!("{prefix}_trace.csv"), t.trace.to_csv());
        if cfg.analysis.svg {
            let p1: Vec<f64> = grid.cells.iter().map(|c| c.prob1).collect();
            let svg = svg_heatmap(&range, &p1, (0.0, 1.0), Ramp::Diverging, Some(&data)).context("analysis: svg_heatmap")?;
            a.add(format!("{prefix}_grid.svg"), svg);
        }
        for (m, member) in t.ens.members().iter().enumerate() {
            a.add(format!("{prefix}_member{m}.ckpt"), encode_model(member));
        }
    }
    Ok((row, a))
}

fn run_boundary_jobs(cfg: &ExperimentConfig, jobs: &[(MethodName, f64, usize)], maps: bool) -> Result<Artifacts> {
    let results = exec::try_map_indexed(jobs.len(), |j| {
        let (m, e, r) = jobs[j];
        boundary_job(cfg, m, e, r, maps)
    })?;
    let mut out = Artifacts::default();
    let mut summary = String::from(BOUNDARY_HEADER);
    for r in 0..cfg.sweep.replicas {
        let (data, _) = load_data(cfg, replica_seed(cfg, r))?;
        out.add(format!("data_r{r}.csv"), data.to_csv());
    }
    for (row, a) in results {
        summary.push_str(&row);
        out.extend(a);
    }
    out.add("summary.csv", summary);
    Ok(out)
}

fn toy_boundary(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let jobs: Vec<_> = cfg
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.sweep.replicas).map(move |r| (m, cfg.perturb.epsilon, r)))
        .collect();
    run_boundary_jobs(cfg, &jobs, true)
}

fn eps_sweep(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut jobs = Vec::new();
    for &m in &cfg.methods {
        let eps: Vec<f64> = if m == MethodName::Standard { vec![0.0] } else { cfg.sweep.epsilons.clone() };
        for e in eps {
            jobs.extend((0..cfg.sweep.replicas).map(|r| (m, e, r)));
        }
    }
    run_boundary_jobs(cfg, &jobs, false)
}

fn oscillation(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let eps = cfg.perturb.epsilon;
    let jobs: Vec<(MethodName, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.sweep.replicas).map(move |r| (m, r)))
        .collect();
    let results = exec::try_map_indexed(jobs.len(), |j| -> Result<(String, Artifacts)> {
        let (m, r) = jobs[j];
        let s = replica_seed(cfg, r);
        let (data, _) = load_data(cfg, s)?;
        let t = train_method(cfg, m, eps, &data, None, s, 1, None, true)?;
        let range = grid_range(cfg, &data)?;
        let map = oscillation_map(&t.trace.snapshots, &range).context("analysis: oscillation_map")?;
        let acc = accuracy(&t.ens, &data).context("analysis: accuracy")?;
        let mut a = Artifacts::default();
        let prefix = format!("{}_r{r}", m.name());
        a.add(format!("{prefix}_oscillation.csv"), map.to_csv());
        a.add(format!("{prefix}_trace.csv"), t.trace.to_csv());
        if cfg.analysis.svg {
            let vals: Vec<f64> = map.counts.iter().map(|&c| c as f64).collect();
            let vmax = (map.checkpoints.saturating_sub(1)).max(1) as f64;
            let svg = svg_heatmap(&range, &vals, (0.0, vmax), Ramp::Sequential, Some(&data)).context("analysis: svg_heatmap")?;
            a.add(format!("{prefix}_oscillation.svg"), svg);
        }
        let row = format!("{},{},{r},{},{},{}\n", m.name(), num(eps), map.total(), map.checkpoints, num(acc));
        Ok((row, a))
    })?;
    let mut out = Artifacts::default();
    let mut summary = String::from("method,epsilon,replica,oscillation_total,checkpoints,train_acc\n");
    for (row, a) in results {
        summary.push_str(&row);
        out.extend(a);
    }
    out.add("summary.csv", summary);
    out.add("crossing.csv", crossing_table(cfg)?);
    Ok(out)
}

/// Crossing rates of every perturbed method against one standard-trained model per replica.
fn crossing_table(cfg: &ExperimentConfig) -> Result<String> {
    let eps = cfg.perturb.epsilon;
    let rows = exec::try_map_indexed(cfg.sweep.replicas, |r| -> Result<String> {
        let s = replica_seed(cfg, r);
        let (data, _) = load_data(cfg, s)?;
        let reference = train_method(cfg, MethodName::Standard, eps, &data, None, s, 1, None, false)?;
        let mut rows = String::new();
        for &m in &cfg.methods {
            let Some(spec) = cfg.perturb.spec(m, eps) else { continue };
            let rate = crossing_rate(&reference.ens, &data, &spec, seed::derive_named(s, "crossing", &[]))
                .context("analysis: crossing_rate")?;
            let _ = writeln!(rows, "{r},{},{},{}", m.name(), num(eps), num(rate));
        }
        Ok(rows)
    })?;
    Ok(std::iter::once("replica,method,epsilon,crossing_rate\n".to_string()).chain(rows).collect())
}

fn histogram(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let (data, _) = load_data(cfg, replica_seed(cfg, 0))?;
    let h = opposite_class_histogram(&data, cfg.analysis.histogram_bins).context("data: opposite_class_histogram")?;
    let mut dist = String::from("index,label,distance\n");
    for (i, d) in h.distances.iter().enumerate() {
        let _ = writeln!(dist, "{i},{},{}", data.label(i), num(*d));
    }
    let mut sorted = h.distances.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let summary = format!(
        "samples,min,median,mean,max\n{},{},{},{},{}\n",
        sorted.len(),
        num(sorted[0]),
        num(median),
        num(mean),
        num(*sorted.last().expect("non-empty"))
    );
    let mut out = Artifacts::default();
    out.add("histogram.csv", h.to_csv());
    out.add("distances.csv", dist);
    out.add("summary.csv", summary);
    Ok(out)
}

fn theorem1(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let s = &cfg.linearsim;
    let mut out = Artifacts::default();
    let mut summary = String::from("eta,fitted_rate,expected_rate,relative_error\n");
    for (i, &eta) in s.etas.iter().enumerate() {
        let state = OracleState::new(s.omega0, s.mu1, s.mu2, s.sigma, eta, seed::derive(cfg.seed, &[i as u64]))
            .context("linearsim: OracleState")?;
        let stats = run_chain(&state, Dynamics::Udp, s.steps, s.replicas).context("linearsim: run_chain")?;
        let rate = fit_contraction_rate(&stats, s.fit_floor).context("linearsim: fit_contraction_rate")?;
        let expected = 1.0 - eta / 2.0;
        let _ = writeln!(summary, "{},{},{},{}", num(eta), num(rate), num(expected), num((rate - expected).abs() / expected));
        out.add(format!("trajectory_eta{}.csv", eps_tag(eta)), stats.to_csv());
    }
    let state = OracleState::new(s.check_omega, s.mu1, s.mu2, s.sigma, s.check_eta, seed::derive_named(cfg.seed, "conditional", &[]))
        .context("linearsim: OracleState")?;
    let (mean, se) = conditional_mean(&state, Dynamics::Udp, s.draws).context("linearsim: conditional_mean")?;
    let eta = s.check_eta;
    let expected = (1.0 - eta / 2.0) * s.check_omega + eta / 2.0 * state.omega_star();
    let conditional = format!(
        "omega,eta,mean,std_error,expected,z\n{},{},{},{},{},{}\n",
        num(s.check_omega),
        num(eta),
        num(mean),
        num(se),
        num(expected),
        num((mean - expected) / se)
    );
    out.add("summary.csv", summary);
    out.add("conditional.csv", conditional);
    Ok(out)
}

fn ldp_failure(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let s = &cfg.linearsim;
    let eps = s.ldp_epsilon;
    let results = exec::try_map_indexed(cfg.sweep.replicas, |r| -> Result<(String, Option<(String, String)>)> {
        let state = OracleState::new(s.ldp_omega0, s.mu1, s.mu2, s.sigma, s.ldp_eta, seed::derive(cfg.seed, &[r as u64]))
            .context("linearsim: OracleState")?;
        let ldp = run_chain(&state, Dynamics::Ldp { epsilon: eps }, s.ldp_steps, 1).context("linearsim: run_chain (ldp)")?;
        let udp = run_chain(&state, Dynamics::UdpInBall { epsilon: eps }, s.ldp_steps, 1).context("linearsim: run_chain (udp)")?;
        let (lf, uf) = (ldp.finals[0], udp.finals[0]);
        let row = format!(
            "{r},{},{},{},{},{}\n",
            num(eps),
            num(lf.omega),
            num(lf.accuracy_on_means()),
            num(uf.omega),
            num((uf.omega - uf.omega_star()).abs())
        );
        let traj = (r == 0).then(|| (ldp.to_csv(), udp.to_csv()));
        Ok((row, traj))
    })?;
    let mut out = Artifacts::default();
    let mut summary = String::from("replica,epsilon,ldp_final_omega,ldp_accuracy,udp_final_omega,udp_abs_err\n");
    for (row, traj) in results {
        summary.push_str(&row);
        if let Some((l, u)) = traj {
            out.add("ldp_trajectory_r0.csv", l);
            out.add("udp_trajectory_r0.csv", u);
        }
    }
    out.add("summary.csv", summary);
    Ok(out)
}

fn capacity_sweep(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let eps = cfg.perturb.epsilon;
    let mut jobs = Vec::new();
    for &mult in &cfg.sweep.multipliers {
        for &m in &cfg.methods {
            jobs.extend((0..cfg.sweep.replicas).map(|r| (mult, m, r)));
        }
    }
    let rows = exec::try_map_indexed(jobs.len(), |j| -> Result<String> {
        let (mult, m, r) = jobs[j];
        let s = replica_seed(cfg, r);
        let (data, test) = load_data(cfg, s)?;
        let test = held_out(cfg, s, test)?;
        let t = train_method(cfg, m, eps, &data, None, s, mult, None, false)?;
        let clean = accuracy(&t.ens, &test).context("analysis: accuracy")?;
        let robust = robust_accuracy(&t.ens, &test, &cfg.analysis.attack(), s).context("analysis: robust_accuracy")?;
        Ok(format!("{},{mult},{r},{},{}\n", m.name(), num(clean), num(robust)))
    })?;
    let mut out = Artifacts::default();
    out.add(
        "summary.csv",
        std::iter::once("method,multiplier,replica,clean_acc,robust_acc\n".to_string()).chain(rows).collect::<String>(),
    );
    Ok(out)
}

fn latent_lowdata(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let eps = cfg.perturb.epsilon;
    let mut jobs = Vec::new();
    for &f in &cfg.sweep.fractions {
        for &m in &cfg.methods {
            let entries: &[EntryName] = if m == MethodName::Standard {
                &[EntryName::Input]
            } else {
                &[EntryName::Input, EntryName::Latent]
            };
            for &e in entries {
                jobs.extend((0..cfg.sweep.replicas).map(|r| (f, m, e, r)));
            }
        }
    }
    let rows = exec::try_map_indexed(jobs.len(), |j| -> Result<String> {
        let (f, m, entry, r) = jobs[j];
        let s = replica_seed(cfg, r);
        let (full, test) = load_data(cfg, s)?;
        let test = held_out(cfg, s, test)?;
        let data = full.subsample(f, s).context("data: subsample")?;
        let mut local = cfg.clone();
        local.perturb.entry = entry;
        let t = train_method(&local, m, eps, &data, None, s, 1, None, false)?;
        let clean = accuracy(&t.ens, &test).context("analysis: accuracy")?;
        let robust = robust_accuracy(&t.ens, &test, &cfg.analysis.attack(), s).context("analysis: robust_accuracy")?;
        let entry = match entry {
            EntryName::Input => "input",
            EntryName::Latent => "latent",
        };
        Ok(format!("{},{entry},{},{r},{},{},{}\n", m.name(), num(f), data.len(), num(clean), num(robust)))
    })?;
    let mut out = Artifacts::default();
    out.add(
        "summary.csv",
        std::iter::once("method,entry,fraction,replica,train_size,clean_acc,robust_acc\n".to_string())
            .chain(rows)
            .collect::<String>(),
    );
    Ok(out)
}

fn catastrophic_probe(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let eps = cfg.perturb.epsilon;
    let jobs: Vec<(MethodName, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.sweep.replicas).map(move |r| (m, r)))
        .collect();
    let attack = cfg.analysis.attack().with_entry(Entry::Input);
    let results = exec::try_map_indexed(jobs.len(), |j| -> Result<(String, String, String)> {
        let (m, r) = jobs[j];
        let s = replica_seed(cfg, r);
        let (data, test) = load_data(cfg, s)?;
        let test = held_out(cfg, s, test)?;
        let fraction = (cfg.analysis.probe_samples as f64 / test.len() as f64).min(1.0);
        let probe_set = test.subsample(fraction, seed::derive_named(s, "probe", &[])).context("data: subsample")?;
        let t = train_method(cfg, m, eps, &data, Some(&probe_set), s, 1, Some(attack), false)?;
        let robust: Vec<f64> = t.trace.rows.iter().filter_map(|row| row.robust_acc).collect();
        let peak = robust.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let last = *robust.last().context("training trace has no robust-accuracy rows")?;
        let clean = accuracy(&t.ens, &test).context("analysis: accuracy")?;
        let row = format!(
            "{},{r},{},{},{},{}\n",
            m.name(),
            num(peak),
            num(last),
            num(100.0 * (peak - last)),
            num(clean)
        );
        Ok((format!("{}_r{r}_trace.csv", m.name()), t.trace.to_csv(), row))
    })?;
    let mut out = Artifacts::default();
    let mut summary = String::from("method,replica,peak_robust,final_robust,drop_pp,clean_acc\n");
    for (name, trace, row) in results {
        out.add(name, trace);
        summary.push_str(&row);
    }
    out.add("summary.csv", summary);
    Ok(out)
}
