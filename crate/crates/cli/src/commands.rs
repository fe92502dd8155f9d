use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use qig::codec::{
    degrade_jpeg_with, psnr, read_image, resize_bicubic, write_image, JpegConfig, QualityLevel,
};
use qig::harness::{
    accuracy, attribute_batch, load_dataset, sweep_precision, write_records, AttributeConfig,
    Dataset, Item, PrecisionTable, Provider, ProviderSpec, SweepConfig, SyntheticRecipe,
};
use qig::ig::{completeness_report, split_pixels, Scheme, DEFAULT_STEPS};
use qig::model::{Checkpoint, GradFn, ScorerModel};
use qig::verify::run_suite;
use qig::viz::{
    emit_chart_svg, emit_table, render_overlay, ChartSpec, OverlaySpec, Polarity, TableFormat,
};
use qig::{Image64, Tensor64};
use serde::Serialize;

use crate::config::{usage, write_manifest, FileConfig, ModelSource, OverlayMode};
use crate::{
    AttributeArgs, Cli, Command, DegradeArgs, ModelArgs, OverlayArgs, ReportArgs, SweepArgs,
    TrainArgs, VerifyArgs,
};

const MOCK_PROVIDER: &str = "qig-mock-provider";

struct Ctx {
    file: FileConfig,
    seed: u64,
    out: PathBuf,
    jobs: Option<usize>,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating output dir {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn qualities(&self, flag: Option<Vec<QualityLevel>>) -> Result<Vec<QualityLevel>> {
        let q = flag
            .or_else(|| self.file.qualities.clone())
            .unwrap_or_else(QualityLevel::default_sweep);
        match q.first() {
            Some(first) if first.is_original() => Ok(q),
            _ => Err(usage("the quality list must start with original")),
        }
    }

    fn jpeg(&self, flag: Option<u8>) -> JpegConfig {
        JpegConfig {
            subsample_below: flag
                .or(self.file.subsample_below)
                .unwrap_or(JpegConfig::default().subsample_below),
        }
    }

    fn recipe(&self, flags: &crate::RecipeArgs) -> SyntheticRecipe {
        flags
            .overrides()
            .over(self.file.synthetic.clone())
            .build(self.seed)
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let file = match &cli.common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let jobs = cli.common.jobs.or(file.jobs);
    if let Some(j) = jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("starting the worker pool")?;
    }
    let ctx = Ctx {
        seed: cli.common.seed.or(file.seed).unwrap_or(1),
        out: cli
            .common
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("qig-out")),
        jobs,
        file,
    };
    match cli.command {
        Command::Degrade(a) => degrade(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Attribute(a) => attribute(&ctx, a),
        Command::Overlay(a) => overlay(&ctx, a),
        Command::Verify(a) => verify(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || usage(format!("bad size {s:?}, expected HxW"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

/// Keeps file names portable whatever the item ids look like.
fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn degrade(ctx: &Ctx, a: DegradeArgs) -> Result<ExitCode> {
    #[derive(Serialize)]
    struct Settings<'a> {
        input: &'a Path,
        qualities: &'a [QualityLevel],
        size: Option<(usize, usize)>,
        jpeg: JpegConfig,
        out: &'a Path,
    }
    let qualities = a
        .qualities
        .or_else(|| ctx.file.qualities.clone())
        .unwrap_or_else(QualityLevel::default_sweep);
    let size = a.size.as_deref().map(parse_size).transpose()?;
    let jpeg = ctx.jpeg(a.subsample_below);
    let img: Image64 = read_image(&a.input)?;
    let stem = a
        .input
        .file_stem()
        .map(|s| file_safe(&s.to_string_lossy()))
        .unwrap_or_else(|| "image".into());
    let out = ctx.out_dir()?;
    let mut rows = String::from("quality,file,psnr_db\n");
    for &q in &qualities {
        let degraded = degrade_jpeg_with(&img, q, &jpeg)?;
        let db = psnr(&img, &degraded)?;
        let result = match size {
            Some((h, w)) => resize_bicubic(&degraded, h, w)?,
            None => degraded,
        };
        let name = format!("{stem}_{q}.ppm");
        write_image(out.join(&name), &result)?;
        println!("{:<9} {:>8.3} dB  {name}", q.to_string(), db);
        rows.push_str(&format!("{q},{name},{db}\n"));
    }
    write_text(&out.join("degrade.csv"), &rows)?;
    write_manifest(
        out,
        "degrade",
        &Settings {
            input: &a.input,
            qualities: &qualities,
            size,
            jpeg,
            out,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn clean_accuracy(model: &dyn GradFn<f64>, ds: &Dataset) -> Result<f64> {
    let preds = ds
        .items()
        .iter()
        .map(|it| model.logits(&it.image)?.predicted())
        .collect::<qig::Result<Vec<_>>>()?;
    let truth: Vec<usize> = ds.items().iter().map(|it| it.label).collect();
    Ok(accuracy(&preds, &truth)?)
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<ExitCode> {
    #[derive(Serialize)]
    struct Settings<'a> {
        seed: u64,
        data: Option<&'a Path>,
        recipe: &'a SyntheticRecipe,
        out: &'a Path,
    }
    let recipe = ctx.recipe(&a.recipe);
    let data = a.data.or_else(|| ctx.file.data.clone());
    let train_set = match &data {
        Some(dir) => load_dataset(dir)?,
        None => recipe.train_set()?,
    };
    eprintln!(
        "training on {} images, {} classes",
        train_set.len(),
        train_set.num_classes()
    );
    let model = recipe.fit_on(&train_set, |epoch, loss| {
        eprintln!("epoch {:>3}/{}  loss {loss:.6}", epoch + 1, recipe.epochs)
    })?;
    println!("train accuracy {:.4}", clean_accuracy(&model, &train_set)?);
    let out = ctx.out_dir()?;
    let ck = Checkpoint {
        model,
        class_names: train_set.class_names().to_vec(),
    };
    let path = out.join("checkpoint.json");
    ck.save(&path)?;
    println!("wrote {}", path.display());
    write_manifest(
        out,
        "train",
        &Settings {
            seed: ctx.seed,
            data: data.as_deref(),
            recipe: &recipe,
            out,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

enum Backend {
    Local(ScorerModel),
    Remote(Provider),
}

struct LoadedModel {
    backend: Backend,
    class_names: Vec<String>,
    name: String,
}

impl LoadedModel {
    fn gradfn(&self) -> &dyn GradFn<f64> {
        match &self.backend {
            Backend::Local(m) => m,
            Backend::Remote(p) => p,
        }
    }
}

fn model_source(args: &ModelArgs, file: &FileConfig) -> Result<ModelSource> {
    if let Some(path) = &args.checkpoint {
        return Ok(ModelSource::Checkpoint(path.clone()));
    }
    if let Some(cmd) = &args.provider {
        let command = shlex::split(cmd)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| usage(format!("cannot parse provider command {cmd:?}")))?;
        let mut spec = ProviderSpec::new(command);
        if let Some(t) = args.provider_timeout {
            spec.timeout_secs = t;
        }
        return Ok(ModelSource::Provider(spec));
    }
    if args.train_fresh {
        return Ok(ModelSource::TrainFresh);
    }
    Ok(file.model.clone().unwrap_or(ModelSource::TrainFresh))
}

fn load_model(
    src: &ModelSource,
    recipe: &SyntheticRecipe,
    name: Option<String>,
) -> Result<LoadedModel> {
    let (backend, class_names, default_name) = match src {
        ModelSource::Checkpoint(path) => {
            let ck = Checkpoint::<f64>::load(path)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".into());
            (Backend::Local(ck.model), ck.class_names, stem)
        }
        ModelSource::Provider(spec) => {
            let p = Provider::connect(spec)?;
            let names = p.class_names().to_vec();
            let stem = Path::new(&spec.command[0])
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "provider".into());
            (Backend::Remote(p), names, stem)
        }
        ModelSource::TrainFresh => {
            let train_set = recipe.train_set()?;
            eprintln!(
                "training micro-model: {} images, {} epochs",
                train_set.len(),
                recipe.epochs
            );
            let model = recipe.fit_on(&train_set, |_, _| {})?;
            (
                Backend::Local(model),
                train_set.class_names().to_vec(),
                "micro-model".into(),
            )
        }
    };
    Ok(LoadedModel {
        backend,
        class_names,
        name: name.unwrap_or(default_name),
    })
}

/// Relabels `ds` so class indices follow the model's class order.
fn align_classes(ds: Dataset, names: &[String]) -> Result<Dataset> {
    if ds.class_names() == names {
        return Ok(ds);
    }
    let map = ds
        .class_names()
        .iter()
        .map(|n| {
            names.iter().position(|m| m == n).ok_or_else(|| {
                anyhow!("dataset class {n:?} is not one of the model's classes {names:?}")
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let items = ds
        .items()
        .iter()
        .map(|it| Item {
            id: it.id.clone(),
            image: it.image.clone(),
            label: map[it.label],
        })
        .collect();
    Ok(Dataset::new(items, names.to_vec())?)
}

fn eval_dataset(
    data: Option<&Path>,
    recipe: &SyntheticRecipe,
    model: &LoadedModel,
) -> Result<Dataset> {
    let ds = match data {
        Some(dir) => load_dataset(dir)?,
        None => recipe.eval_set()?,
    };
    align_classes(ds, &model.class_names)
}

/// `precision.csv`, `table.csv`, `table.md` and `chart.svg`.
fn write_report(out: &Path, table: &PrecisionTable, title: Option<&str>) -> Result<()> {
    let mut full = Vec::new();
    table.write_csv(&mut full)?;
    let path = out.join("precision.csv");
    fs::write(&path, full).with_context(|| format!("writing {}", path.display()))?;
    write_text(&out.join("table.csv"), &emit_table(table, TableFormat::Csv))?;
    write_text(
        &out.join("table.md"),
        &emit_table(table, TableFormat::Markdown),
    )?;
    let mut spec = ChartSpec::default();
    if let Some(t) = title {
        spec.title = t.to_string();
    }
    write_text(&out.join("chart.svg"), &emit_chart_svg(table, &spec)?)?;
    Ok(())
}

#[derive(Serialize)]
struct ModelSettings<'a> {
    source: &'a ModelSource,
    name: &'a str,
    class_names: &'a [String],
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<ExitCode> {
    #[derive(Serialize)]
    struct Settings<'a> {
        seed: u64,
        jobs: Option<usize>,
        model: ModelSettings<'a>,
        data: Option<&'a Path>,
        recipe: &'a SyntheticRecipe,
        sweep: &'a SweepConfig,
        out: &'a Path,
    }
    let cfg = SweepConfig {
        qualities: ctx.qualities(a.qualities)?,
        metric: a.metric.or(ctx.file.metric).unwrap_or_default(),
        jpeg: ctx.jpeg(a.subsample_below),
    };
    let recipe = ctx.recipe(&a.recipe);
    let src = model_source(&a.model, &ctx.file)?;
    let data = a.data.or_else(|| ctx.file.data.clone());
    let model = load_model(
        &src,
        &recipe,
        a.model_name.or_else(|| ctx.file.model_name.clone()),
    )?;
    let ds = eval_dataset(data.as_deref(), &recipe, &model)?;
    eprintln!(
        "scoring {} images at {} qualities",
        ds.len(),
        cfg.qualities.len()
    );
    let row = sweep_precision(model.gradfn(), &model.name, &ds, &cfg)?;
    let mut table = PrecisionTable::new(cfg.qualities.clone())?;
    table.push(row)?;
    let out = ctx.out_dir()?;
    write_report(out, &table, None)?;
    print!("{}", emit_table(&table, TableFormat::Markdown));
    write_manifest(
        out,
        "sweep",
        &Settings {
            seed: ctx.seed,
            jobs: ctx.jobs,
            model: ModelSettings {
                source: &src,
                name: &model.name,
                class_names: &model.class_names,
            },
            data: data.as_deref(),
            recipe: &recipe,
            sweep: &cfg,
            out,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn single_image(path: &Path, label: &str, names: &[String]) -> Result<Dataset> {
    let image: Image64 = read_image(path)?;
    let label = match names.iter().position(|n| n == label) {
        Some(i) => i,
        None => label
            .parse::<usize>()
            .ok()
            .filter(|&i| i < names.len())
            .ok_or_else(|| {
                usage(format!(
                    "label {label:?} is not a class name or index; classes are {names:?}"
                ))
            })?,
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    Ok(Dataset::new(
        vec![Item { id, image, label }],
        names.to_vec(),
    )?)
}

fn attribute(ctx: &Ctx, a: AttributeArgs) -> Result<ExitCode> {
    #[derive(Serialize)]
    struct Settings<'a> {
        seed: u64,
        jobs: Option<usize>,
        model: ModelSettings<'a>,
        data: Option<&'a Path>,
        image: Option<&'a Path>,
        label: Option<&'a str>,
        limit: Option<usize>,
        recipe: &'a SyntheticRecipe,
        attribution: &'a AttributeConfig,
        overlays: OverlayMode,
        overlay: OverlaySpec,
        save_maps: bool,
        out: &'a Path,
    }
    let file = &ctx.file;
    let cfg = AttributeConfig {
        qualities: ctx.qualities(a.qualities)?,
        steps: a.steps.or(file.steps).unwrap_or(DEFAULT_STEPS),
        scheme: a.scheme.or(file.scheme).unwrap_or(Scheme::Trapezoid),
        jpeg: ctx.jpeg(a.subsample_below),
    };
    if cfg.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    if cfg.qualities.len() < 2 {
        return Err(usage("attribution needs at least one degraded quality"));
    }
    let defaults = OverlaySpec::default();
    let overlay_spec = OverlaySpec {
        image_weight: a
            .image_weight
            .or(file.image_weight)
            .unwrap_or(defaults.image_weight),
        ig_weight: a.ig_weight.or(file.ig_weight).unwrap_or(defaults.ig_weight),
        polarity: Polarity::Both,
    };
    let overlays = a.overlays.or(file.overlays).unwrap_or_default();
    let save_maps = a.save_maps || file.save_maps.unwrap_or(false);
    let limit = a.limit.or(file.limit);
    let recipe = ctx.recipe(&a.recipe);
    let src = model_source(&a.model, file)?;
    let data = a.data.or_else(|| file.data.clone());
    let model = load_model(&src, &recipe, file.model_name.clone())?;

    let mut ds = match (&a.image, &a.label) {
        (Some(path), Some(label)) => single_image(path, label, &model.class_names)?,
        _ => eval_dataset(data.as_deref(), &recipe, &model)?,
    };
    if let Some(n) = limit {
        ds = ds.filter_indexed(|i| i < n);
    }
    eprintln!(
        "attributing {} images, {} steps, {}",
        ds.len(),
        cfg.steps,
        cfg.scheme
    );
    let results = attribute_batch(model.gradfn(), &ds, &cfg)?;

    let out = ctx.out_dir()?;
    let records: Vec<_> = results.iter().map(|r| r.record.clone()).collect();
    let mut csv_bytes = Vec::new();
    write_records(&cfg.qualities, &records, &mut csv_bytes)?;
    fs::write(out.join("attributions.csv"), csv_bytes).context("writing attributions.csv")?;

    let mut completeness = String::from("id,quality,ig_sum,delta_loss,gap,rel_gap\n");
    let mut worst = 0.0f64;
    for r in &results {
        for qa in &r.attributions {
            let rep = completeness_report(&qa.map);
            worst = worst.max(rep.rel_gap);
            completeness.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.record.id,
                qa.quality,
                qa.map.sum,
                qa.map.delta_loss(),
                rep.gap,
                rep.rel_gap
            ));
        }
    }
    write_text(&out.join("completeness.csv"), &completeness)?;

    let chosen: Vec<QualityLevel> = match overlays {
        OverlayMode::All => cfg.qualities[1..].to_vec(),
        OverlayMode::Last => cfg.qualities.last().copied().into_iter().collect(),
        OverlayMode::None => Vec::new(),
    };
    let overlay_dir = out.join("overlays");
    let maps_dir = out.join("maps");
    let mut written = 0usize;
    for r in &results {
        let id = file_safe(&r.record.id);
        for qa in &r.attributions {
            if save_maps {
                fs::create_dir_all(&maps_dir)?;
                let text = serde_json::to_string(&qa.map.values)?;
                write_text(&maps_dir.join(format!("{id}_{}.json", qa.quality)), &text)?;
            }
            if !chosen.contains(&qa.quality) {
                continue;
            }
            fs::create_dir_all(&overlay_dir)?;
            let pol = split_pixels(&qa.map.values)?;
            for polarity in Polarity::ALL {
                let spec = OverlaySpec {
                    polarity,
                    ..overlay_spec
                };
                let img = render_overlay(&qa.target, &pol, &spec)?;
                write_image(
                    overlay_dir.join(format!("{id}_{}_{polarity}.ppm", qa.quality)),
                    &img,
                )?;
                written += 1;
            }
        }
    }
    println!(
        "{} records, {written} overlays, max relative completeness gap {worst:.3e}",
        records.len()
    );
    write_manifest(
        out,
        "attribute",
        &Settings {
            seed: ctx.seed,
            jobs: ctx.jobs,
            model: ModelSettings {
                source: &src,
                name: &model.name,
                class_names: &model.class_names,
            },
            data: data.as_deref(),
            image: a.image.as_deref(),
            label: a.label.as_deref(),
            limit,
            recipe: &recipe,
            attribution: &cfg,
            overlays,
            overlay: overlay_spec,
            save_maps,
            out,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn overlay(ctx: &Ctx, a: OverlayArgs) -> Result<ExitCode> {
    #[derive(Serialize)]
    struct Settings<'a> {
        image: &'a Path,
        map: &'a Path,
        polarities: &'a [Polarity],
        image_weight: f64,
        ig_weight: f64,
        out: &'a Path,
    }
    let img: Image64 = read_image(&a.image)?;
    let text =
        fs::read_to_string(&a.map).with_context(|| format!("reading {}", a.map.display()))?;
    let values: Tensor64 =
        serde_json::from_str(&text).with_context(|| format!("parsing map {}", a.map.display()))?;
    let shape = values.shape();
    if shape.len() != 3 || shape[0] != img.height() || shape[1] != img.width() {
        return Err(anyhow!(
            "map shape {:?} does not cover a {}x{} image",
            shape,
            img.height(),
            img.width()
        ));
    }
    let pol = split_pixels(&values)?;
    let defaults = OverlaySpec::default();
    let image_weight = a
        .image_weight
        .or(ctx.file.image_weight)
        .unwrap_or(defaults.image_weight);
    let ig_weight = a
        .ig_weight
        .or(ctx.file.ig_weight)
        .unwrap_or(defaults.ig_weight);
    let polarities: Vec<Polarity> = match a.polarity.or(ctx.file.polarity) {
        Some(p) => vec![p],
        None => Polarity::ALL.to_vec(),
    };
    let stem = a
        .image
        .file_stem()
        .map(|s| file_safe(&s.to_string_lossy()))
        .unwrap_or_else(|| "overlay".into());
    let out = ctx.out_dir()?;
    for &polarity in &polarities {
        let spec = OverlaySpec {
            image_weight,
            ig_weight,
            polarity,
        };
        let name = format!("{stem}_{polarity}.ppm");
        write_image(out.join(&name), &render_overlay(&img, &pol, &spec)?)?;
        println!("wrote {name}");
    }
    write_manifest(
        out,
        "overlay",
        &Settings {
            image: &a.image,
            map: &a.map,
            polarities: &polarities,
            image_weight,
            ig_weight,
            out,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn find_mock() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let path = exe
        .parent()?
        .join(format!("{MOCK_PROVIDER}{}", std::env::consts::EXE_SUFFIX));
    path.is_file().then_some(path)
}

fn verify(ctx: &Ctx, a: VerifyArgs) -> Result<ExitCode> {
    let mock = a.mock.or_else(find_mock);
    if mock.is_none() {
        eprintln!("{MOCK_PROVIDER} not found; skipping the protocol check");
    }
    let results = run_suite(ctx.seed, mock.as_deref());
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<ExitCode> {
    let path = a.precision.unwrap_or_else(|| ctx.out.join("precision.csv"));
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let table =
        PrecisionTable::read_csv(file).with_context(|| format!("reading {}", path.display()))?;
    let out = ctx.out_dir()?;
    write_report(out, &table, a.title.as_deref())?;
    print!("{}", emit_table(&table, TableFormat::Markdown));
    Ok(ExitCode::SUCCESS)
}
