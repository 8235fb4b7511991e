use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use retro_core::evaluation::{prior_frame_rollout, rollout_prediction_error};
use retro_core::fixtures::{generate, Domain, FixtureSpec};
use retro_core::playground::SessionState;
use retro_core::report::{timings_path, DivergenceEntry, EvalFile, RolloutFile, SynthesisFile, TimingsFile};
use retro_core::synthesis::synthesize_in_order;
use retro_core::tokenizer::{read_png, write_png, ATLAS_FILE};
use retro_core::{
    render_grid, rollout, tokenize_frame, Approach, Grid, ProgramSet, SpriteAtlas, SpriteId, SynthesisConfig, Trace,
};

/// Bad invocation that clap cannot catch on its own; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "retro", version, about = "Learn, run and play symbolic grid world models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Chase,
    Scroll,
    Adversarial,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Chase => Domain::Chase,
            DomainArg::Scroll => Domain::Scroll,
            DomainArg::Adversarial => Domain::Adversarial,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a directory of PNG frames into a trace (subdirectories are episodes).
    Tokenize {
        frames: PathBuf,
        /// Directory holding atlas.json and the sprite bitmaps.
        atlas: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Learn one program per target sprite.
    Synth {
        trace: PathBuf,
        /// Sprite names to learn, in any order (default: every sprite that is
        /// neither empty nor exogenous).
        #[arg(long, value_delimiter = ',')]
        targets: Vec<String>,
        /// Learn targets in the given order instead of dictionary order.
        #[arg(long)]
        keep_order: bool,
        #[arg(long, default_value_t = retro_core::synthesis::DEFAULT_BATCH_SIZE,
              value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
        batch: usize,
        #[arg(long, default_value_t = retro_core::synthesis::DEFAULT_MAX_RULES)]
        max_rules: usize,
        /// Never add a rule a program already holds.
        #[arg(long)]
        dedup: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Predict every episode and write the predicted grids.
    Rollout {
        trace: PathBuf,
        report: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        mode: u8,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score a learned model against a trace.
    Eval {
        trace: PathBuf,
        report: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        mode: u8,
        /// Atlas directory; adds the pixel prediction error.
        #[arg(long)]
        atlas: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic world with known programs.
    GenFixture {
        #[arg(value_enum)]
        domain: DomainArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        /// Also write PNG frames and a synthetic atlas.
        #[arg(long)]
        render: bool,
        #[arg(long, default_value_t = 8)]
        cell: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Serve a learned model as a playable game.
    Play {
        /// Trace file, or a fixture name (chase, scroll, adversarial).
        source: String,
        report: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Seed when `source` names a fixture.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sprite driven by the client (default: PLAYER, else the first exogenous sprite).
        #[arg(long)]
        player: Option<String>,
        #[arg(long, default_value_t = 250)]
        tick_ms: u64,
        /// Directory served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tokenize { frames, atlas, output } => tokenize(&frames, &atlas, &output),
        Command::Synth {
            trace,
            targets,
            keep_order,
            batch,
            max_rules,
            dedup,
            output,
        } => synth(&trace, &targets, keep_order, batch, max_rules, dedup, &output),
        Command::Rollout {
            trace,
            report,
            mode,
            output,
        } => {
            let trace = Trace::load(&trace)?;
            let programs = load_programs(&report, &trace)?;
            let result = rollout(&trace, &programs, approach(mode))?;
            write_text(&output, &RolloutFile::new(&trace, &result).to_json())
        }
        Command::Eval {
            trace,
            report,
            mode,
            atlas,
            output,
        } => eval(&trace, &report, mode, atlas.as_deref(), output.as_deref()),
        Command::GenFixture {
            domain,
            seed,
            episodes,
            frames,
            render,
            cell,
            output,
        } => gen_fixture(domain.into(), seed, episodes, frames, render.then_some(cell), &output),
        Command::Play {
            source,
            report,
            port,
            host,
            seed,
            player,
            tick_ms,
            static_dir,
        } => {
            let session = play_session(&source, seed, &report, player.as_deref(), tick_ms)?;
            let addr = format!("{host}:{port}");
            let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                eprintln!("playground listening on http://{}", listener.local_addr()?);
                crate::serve::serve(listener, crate::serve::router(session, static_dir)).await
            })
        }
    }
}

fn approach(mode: u8) -> Approach {
    Approach::from_number(mode).expect("clap restricts the mode to 1 or 2")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_programs(report: &Path, trace: &Trace) -> Result<ProgramSet> {
    let file = SynthesisFile::load(report)?;
    Ok(file.program_set(trace)?)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    files.sort();
    Ok(files)
}

fn tokenize(frames: &Path, atlas_dir: &Path, output: &Path) -> Result<()> {
    let atlas = SpriteAtlas::load(atlas_dir)?;
    let mut dirs: Vec<PathBuf> = fs::read_dir(frames)
        .with_context(|| format!("reading {}", frames.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|p| p.is_dir());
    dirs.sort();
    if dirs.is_empty() {
        dirs.push(frames.to_path_buf());
    }

    let mut episodes: Vec<Vec<Grid>> = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let grids = png_files(dir)?
            .iter()
            .map(|f| {
                let img = read_png(f)?;
                tokenize_frame(&img, &atlas).with_context(|| format!("tokenizing {}", f.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        if !grids.is_empty() {
            episodes.push(grids);
        }
    }
    let Some(first) = episodes.first().and_then(|e| e.first()) else {
        bail!("no PNG frames under {}", frames.display());
    };
    let (w, h) = (first.width(), first.height());
    let frame_count: usize = episodes.iter().map(Vec::len).sum();
    let trace = Trace::new(
        w,
        h,
        atlas.names().to_vec(),
        atlas.empty_id(),
        atlas.exogenous_ids().to_vec(),
        episodes,
    )?;
    write_text(output, &trace.to_json())?;
    eprintln!("tokenized {frame_count} frames in {} episodes ({w}x{h})", trace.episodes().len());
    Ok(())
}

fn lookup_sprites(trace: &Trace, names: &[String]) -> Result<Vec<SpriteId>> {
    names
        .iter()
        .map(|n| {
            trace
                .sprite_id(n)
                .ok_or_else(|| anyhow::anyhow!("unknown sprite `{n}`; the trace has {}", trace.sprites().join(", ")))
        })
        .collect()
}

fn synth(
    trace_path: &Path,
    targets: &[String],
    keep_order: bool,
    batch: usize,
    max_rules: usize,
    dedup: bool,
    output: &Path,
) -> Result<()> {
    let trace = Trace::load(trace_path)?;
    let mut cfg = SynthesisConfig::for_trace(&trace);
    cfg.batch_size = batch;
    cfg.max_rules = max_rules;
    cfg.dedup_rules = dedup;
    if !targets.is_empty() {
        cfg.targets = lookup_sprites(&trace, targets)?;
    }
    let mut order = cfg.targets.clone();
    if !keep_order {
        order.sort();
    }
    order.dedup();
    let report = synthesize_in_order(&trace, &cfg, &order)?;

    let dict = trace.dictionary();
    for s in &report.sprites {
        let name = dict.name(s.sprite).unwrap_or("?");
        if let Some(w) = &s.warning {
            eprintln!("warning: {w}");
        }
        eprintln!("{name} ({} rules):", s.rule_count());
        for line in retro_core::print_program(&s.program, &dict).lines() {
            eprintln!("  {line}");
        }
    }
    write_text(output, &SynthesisFile::from_report(&trace, &cfg, &report).to_json())?;
    TimingsFile::from_report(&trace, &report).save(timings_path(output))?;
    Ok(())
}

fn eval(trace_path: &Path, report: &Path, mode: u8, atlas: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let trace = Trace::load(trace_path)?;
    let programs = load_programs(report, &trace)?;
    let result = rollout(&trace, &programs, approach(mode))?;
    let baseline = prior_frame_rollout(&trace);
    let (pe, base_pe) = match atlas {
        Some(dir) => {
            let atlas = SpriteAtlas::load(dir)?;
            if atlas.names() != trace.sprites() {
                bail!("atlas sprites do not match the trace dictionary");
            }
            (
                Some(rollout_prediction_error(&trace, &result, &atlas)?),
                Some(rollout_prediction_error(&trace, &baseline, &atlas)?),
            )
        }
        None => (None, None),
    };
    let mut file = EvalFile::new(&trace, &programs, &result, pe, &baseline, base_pe);
    if result.approach == Approach::Autoregressive {
        let teacher_forced = rollout(&trace, &programs, Approach::TeacherForced)?;
        file = file.with_teacher_forced(&result, &teacher_forced);
    }
    let at = |d: Option<DivergenceEntry>| d.map_or("none".to_string(), |d| format!("episode {} step {}", d.episode, d.step));
    eprintln!(
        "mode {mode}: hamming {} over {} steps, first divergence {}, worse than teacher forcing from {}",
        file.hamming_total,
        file.steps,
        at(file.first_divergence),
        at(file.exceeds_teacher_forced)
    );
    match output {
        Some(path) => write_text(path, &file.to_json()),
        None => {
            std::io::stdout().write_all(file.to_json().as_bytes())?;
            Ok(())
        }
    }
}

fn gen_fixture(
    domain: Domain,
    seed: u64,
    episodes: Option<usize>,
    frames: Option<usize>,
    render_cell: Option<u32>,
    output: &Path,
) -> Result<()> {
    let mut spec = FixtureSpec::new(domain, seed);
    if let Some(n) = episodes {
        spec.episodes = n;
    }
    if let Some(n) = frames {
        spec.frames_per_episode = n;
    }
    let fixture = generate(&spec)?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    write_text(&output.join("trace.json"), &fixture.trace.to_json())?;
    write_text(
        &output.join("reference.json"),
        &SynthesisFile::from_programs(&fixture.trace, &fixture.reference).to_json(),
    )?;
    if let Some(cell) = render_cell {
        if cell == 0 {
            return Err(usage("--cell must be at least 1"));
        }
        let atlas = fixture.atlas(cell)?;
        atlas.save(output.join("atlas"))?;
        for (e, ep) in fixture.trace.episodes().iter().enumerate() {
            let dir = output.join("frames").join(format!("episode_{e:03}"));
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for (t, g) in ep.iter().enumerate() {
                write_png(&dir.join(format!("frame_{t:04}.png")), &render_grid(g, &atlas)?)?;
            }
        }
    }
    eprintln!(
        "wrote {} fixture (seed {seed}): {} episodes x {} frames{}",
        domain.name(),
        spec.episodes,
        spec.frames_per_episode,
        if render_cell.is_some() { format!(", frames and {ATLAS_FILE}") } else { String::new() }
    );
    Ok(())
}

pub fn play_session(
    source: &str,
    seed: u64,
    report: &Path,
    player: Option<&str>,
    tick_ms: u64,
) -> Result<SessionState> {
    let trace = if Path::new(source).exists() {
        Trace::load(source)?
    } else if let Some(domain) = Domain::from_name(source) {
        generate(&FixtureSpec::new(domain, seed))?.trace
    } else {
        return Err(usage(format!("`{source}` is neither a trace file nor a fixture name")));
    };
    let programs = load_programs(report, &trace)?;
    let player = match player {
        Some(name) => lookup_sprites(&trace, &[name.to_string()])?[0],
        None => trace
            .sprite_id("PLAYER")
            .filter(|&s| trace.is_exogenous(s))
            .or_else(|| trace.exogenous_ids().first().copied())
            .context("the trace has no exogenous sprite to control")?,
    };
    let initial = trace.episodes()[0][0].clone();
    if tick_ms == 0 {
        return Err(usage("--tick-ms must be at least 1"));
    }
    Ok(SessionState::new(
        initial,
        programs,
        trace.sprites().to_vec(),
        player,
        Duration::from_millis(tick_ms),
    )?)
}
