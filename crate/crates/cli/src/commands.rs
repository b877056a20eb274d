use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use segar_core::archive::{read_archive, write_archive};
use segar_core::env::{encode_png, render, state_digest, Env, TrajectoryRecord, MIN_RESOLUTION};
use segar_core::init::{builtin, instance_seed, sample_task, stream_seed, Distribution, TaskTemplate};
use segar_core::metrics::{task_set_report, TaskSet};

use crate::manifest::ManifestBuilder;
use crate::policy::Policy;
use crate::{Cli, Command, Format};

const EPISODE_TAG: u64 = 0x4550_4953_4f44_4553;
const POLICY_TAG: u64 = 0x504f_4c49_4359_0000;

pub const EPISODE_DIR: &str = "episodes";
pub const RETURNS_FILE: &str = "returns.json";
pub const REPORT_FILE: &str = "report.json";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sample { template, n, difficulty } => sample(cli, template, *n, difficulty.as_deref()),
        Command::Rollout {
            archive,
            policy,
            episodes,
            dump_state,
        } => rollout(cli, archive, policy, *episodes, *dump_state),
        Command::Metrics { a, b, normalize } => metrics(cli, a, b, *normalize),
        Command::Render {
            archive,
            renderer_seed,
            resolution,
        } => render_cmd(cli, archive, *renderer_seed, *resolution),
        Command::Describe { template } => describe(cli, template),
    }
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = match &cli.out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os("SEGAR_DATA_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("segar-data"));
            root.join(cli.command.name())
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// Template source from a file path or a built-in name.
fn template_source(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        return fs::read_to_string(path).with_context(|| format!("reading template {arg}"));
    }
    match builtin::source(arg) {
        Some(s) => Ok(s.to_string()),
        None => Err(segar_core::Error::Template {
            key: "template".into(),
            reason: format!(
                "{arg:?} is neither a file nor a built-in template ({})",
                builtin::NAMES.join(", ")
            ),
        }
        .into()),
    }
}

fn parse_template(source: &str, label: &str) -> Result<TaskTemplate> {
    TaskTemplate::from_json(source).with_context(|| format!("template {label}"))
}

fn print<T: Serialize>(cli: &Cli, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let line = match cli.format {
        Format::Json => serde_json::to_string(value)?,
        Format::Text => text(),
    };
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{line}") {
        // A closed pipe (e.g. `| head`) is not a failure.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn sample(cli: &Cli, template: &str, n: usize, difficulty: Option<&str>) -> Result<()> {
    let mut source = template_source(template)?;
    if let Some(d) = difficulty {
        let mut v: serde_json::Value = serde_json::from_str(&source)
            .map_err(segar_core::Error::from)
            .with_context(|| format!("template {template}"))?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("difficulty".into(), json!(d));
        }
        source = serde_json::to_string_pretty(&v)? + "\n";
    }
    let tmpl = Arc::new(parse_template(&source, template)?);
    let seed = cli.seed;
    let instances = (0..n)
        .into_par_iter()
        .map(|i| sample_task(&tmpl, instance_seed(seed, i as u64)))
        .collect::<segar_core::Result<Vec<_>>>()?;
    let set = TaskSet::from_instances(Arc::clone(&tmpl), &instances)?;
    let out = out_dir(cli)?;
    write_archive(&out, &source, &set, seed)?;

    let mut m = ManifestBuilder::new("sample", seed, &out);
    m.template(&tmpl.name)
        .input("template", template)
        .input("n", n)
        .input("difficulty", tmpl.difficulty.as_str());
    for f in ["template.json", "instances.json", "matrix.bin", "layout.json"] {
        m.file(f);
    }
    m.write(&out)?;

    let summary = json!({
        "out": out.display().to_string(),
        "template": tmpl.name,
        "n": set.len(),
        "d": set.dim(),
        "entropy": tmpl.entropy(),
    });
    print(cli, &summary, || {
        format!(
            "sampled {} {} tasks ({} factors each) into {}",
            set.len(),
            tmpl.name,
            set.dim(),
            out.display()
        )
    })
}

#[derive(Debug, Serialize)]
struct EpisodeSummary {
    episode: usize,
    task: usize,
    #[serde(rename = "return")]
    ret: f64,
    steps: u32,
}

#[derive(Debug, Serialize)]
struct ReturnsFile {
    policy: String,
    episodes: Vec<EpisodeSummary>,
    task_counts: Vec<usize>,
}

fn rollout(cli: &Cli, archive: &Path, policy: &str, episodes: usize, dump_state: bool) -> Result<()> {
    let policy = Policy::parse(policy)?;
    let arc = read_archive(archive).with_context(|| format!("archive {}", archive.display()))?;
    let set = &arc.set;
    if set.is_empty() && episodes > 0 {
        bail!(segar_core::Error::Archive("archive holds no tasks to roll out".into()));
    }
    // Tasks are drawn uniformly, in episode order, from one seeded stream.
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cli.seed, 0, EPISODE_TAG));
    let tasks: Vec<usize> = (0..episodes).map(|_| rng.random_range(0..set.len())).collect();
    let instances = (0..set.len())
        .map(|i| set.instance(i))
        .collect::<segar_core::Result<Vec<_>>>()?;

    let out = out_dir(cli)?;
    let ep_dir = out.join(EPISODE_DIR);
    fs::create_dir_all(&ep_dir)?;
    let template = Arc::clone(&set.template);
    let max_force = template.actions.max_force;

    let summaries = (0..episodes)
        .into_par_iter()
        .map(|e| -> Result<EpisodeSummary> {
            let mut env = Env::new(Arc::clone(&template))?;
            env.reset_to(&instances[tasks[e]])?;
            let mut actor = policy.actor(stream_seed(cli.seed, e as u64, POLICY_TAG), max_force);
            let mut log = String::new();
            let mut step = 0usize;
            while !env.is_done() {
                let action = actor.act(step);
                let r = env.step(action)?;
                let state = env.state().expect("episode running");
                let rec = TrajectoryRecord {
                    t: r.info.time,
                    action,
                    reward: r.reward,
                    done: r.done,
                    obs_digest: r.observation.digest(),
                    state_digest: state_digest(state),
                    state: dump_state.then(|| r.info.state.clone()),
                };
                log.push_str(&serde_json::to_string(&rec)?);
                log.push('\n');
                step += 1;
            }
            fs::write(ep_dir.join(format!("episode-{e:05}.ndjson")), log)?;
            Ok(EpisodeSummary {
                episode: e,
                task: tasks[e],
                ret: env.episode_return(),
                steps: env.steps(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut task_counts = vec![0usize; set.len()];
    for &t in &tasks {
        task_counts[t] += 1;
    }
    let returns = ReturnsFile {
        policy: policy.name().to_string(),
        episodes: summaries,
        task_counts,
    };
    fs::write(out.join(RETURNS_FILE), serde_json::to_string_pretty(&returns)? + "\n")?;

    let mut m = ManifestBuilder::new("rollout", cli.seed, &out);
    m.template(&template.name)
        .input("archive", archive.display())
        .input("policy", policy.name())
        .input("episodes", episodes)
        .file(RETURNS_FILE);
    for e in 0..episodes {
        m.file(format!("{EPISODE_DIR}/episode-{e:05}.ndjson"));
    }
    m.write(&out)?;

    let mean = if episodes > 0 {
        returns.episodes.iter().map(|s| s.ret).sum::<f64>() / episodes as f64
    } else {
        0.0
    };
    let summary = json!({
        "out": out.display().to_string(),
        "episodes": episodes,
        "mean_return": mean,
    });
    print(cli, &summary, || {
        format!("{episodes} episodes, mean return {mean:.4}, logs in {}", out.display())
    })
}

fn metrics(cli: &Cli, a: &Path, b: &Path, normalize: bool) -> Result<()> {
    let sa = read_archive(a).with_context(|| format!("archive {}", a.display()))?;
    let sb = read_archive(b).with_context(|| format!("archive {}", b.display()))?;
    let report = task_set_report(&sa.set, &sb.set, normalize)?;
    let out = out_dir(cli)?;
    fs::write(out.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut m = ManifestBuilder::new("metrics", cli.seed, &out);
    m.template(&sa.set.template.name)
        .input("a", a.display())
        .input("b", b.display())
        .input("normalize", normalize)
        .file(REPORT_FILE);
    m.write(&out)?;
    print(cli, &report, || {
        let worst = report
            .per_factor_ks
            .iter()
            .max_by(|x, y| x.d_two_sample.total_cmp(&y.d_two_sample));
        let mut s = format!(
            "W2 = {:.6} (n_a = {}, n_b = {}{}), template entropy {:.4}",
            report.w2,
            report.n_a,
            report.n_b,
            if normalize { ", normalized" } else { "" },
            report.entropy
        );
        if let Some(w) = worst {
            s.push_str(&format!("\nlargest two-sample KS: {} D = {:.4}", w.factor, w.d_two_sample));
        }
        s
    })
}

fn render_cmd(cli: &Cli, archive: &Path, renderer_seed: u64, resolution: Option<u32>) -> Result<()> {
    let arc = read_archive(archive).with_context(|| format!("archive {}", archive.display()))?;
    let set = &arc.set;
    let template = Arc::clone(&set.template);
    let mut spec = template.observation.clone();
    spec.renderer_seed = renderer_seed;
    if let Some(r) = resolution {
        if r < MIN_RESOLUTION {
            bail!(segar_core::Error::InvalidObservation(format!(
                "resolution {r} is below the minimum of {MIN_RESOLUTION}"
            )));
        }
        spec.resolution = r;
    }
    let supports = Env::new(Arc::clone(&template))?.supports().clone();
    let out = out_dir(cli)?;
    let names = (0..set.len())
        .into_par_iter()
        .map(|i| -> Result<String> {
            let inst = set.instance(i)?;
            let png = encode_png(&render(&inst.state, &spec, &supports))?;
            let name = format!("task-{i:05}.png");
            fs::write(out.join(&name), png)?;
            Ok(name)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = ManifestBuilder::new("render", cli.seed, &out);
    m.template(&template.name)
        .input("archive", archive.display())
        .input("renderer_seed", renderer_seed)
        .input("resolution", spec.resolution);
    for n in &names {
        m.file(n.clone());
    }
    m.write(&out)?;
    let summary = json!({
        "out": out.display().to_string(),
        "images": names.len(),
        "resolution": spec.resolution,
    });
    print(cli, &summary, || {
        format!(
            "rendered {} images at {}x{} into {}",
            names.len(),
            spec.resolution,
            spec.resolution,
            out.display()
        )
    })
}

fn dist_text(d: &Distribution) -> String {
    match d {
        Distribution::Constant { value } => format!("{value}"),
        Distribution::Uniform { lo, hi } => format!("uniform({lo}, {hi})"),
        Distribution::Gaussian { mean, std, truncate: None } => format!("gaussian({mean}, {std})"),
        Distribution::Gaussian { mean, std, truncate: Some((lo, hi)) } => {
            format!("gaussian({mean}, {std}) on [{lo}, {hi}]")
        }
        Distribution::Discrete { values, weights } => {
            let parts: Vec<String> = values.iter().zip(weights).map(|(v, w)| format!("{v}:{w}")).collect();
            format!("discrete{{{}}}", parts.join(", "))
        }
    }
}

fn describe(cli: &Cli, template: &str) -> Result<()> {
    let source = template_source(template)?;
    let t = parse_template(&source, template)?;
    let slots: Vec<serde_json::Value> = t
        .slots
        .iter()
        .map(|s| {
            let priors: serde_json::Map<String, serde_json::Value> = s
                .priors
                .iter()
                .map(|(f, p)| {
                    let comps: Vec<String> = p.components.iter().map(dist_text).collect();
                    (t.registry.name(*f).to_string(), json!(comps))
                })
                .collect();
            json!({
                "name": s.name,
                "type": s.etype.name(),
                "count": dist_text(&s.count),
                "priors": priors,
                "entropy": s.count.entropy() + s.priors.iter().map(|(_, p)| p.entropy()).sum::<f64>(),
            })
        })
        .collect();
    let summary = json!({
        "name": t.name,
        "reward": t.reward.as_str(),
        "rules": t.rules,
        "difficulty": t.difficulty.as_str(),
        "observation": t.observation.mode.as_str(),
        "max_force": t.actions.max_force,
        "max_steps": t.max_steps,
        "dt": t.dt,
        "arena": { "min": t.arena.min, "max": t.arena.max },
        "entropy": t.entropy(),
        "slots": slots,
    });
    print(cli, &summary, || {
        let mut s = format!(
            "{} (reward {}, rules [{}], {} difficulty)\nentropy {:.4} nats, max {} steps, dt {}\n",
            t.name,
            t.reward.as_str(),
            t.rules.join(", "),
            t.difficulty.as_str(),
            t.entropy(),
            t.max_steps,
            t.dt
        );
        for slot in &t.slots {
            s.push_str(&format!("  {} : {} x {}\n", slot.name, slot.etype.name(), dist_text(&slot.count)));
            for (f, p) in &slot.priors {
                let comps: Vec<String> = p.components.iter().map(dist_text).collect();
                s.push_str(&format!("    {:<15} {}\n", t.registry.name(*f), comps.join(" ; ")));
            }
        }
        s.trim_end().to_string()
    })
}
