"""Staged experiment runner.

Stages: corpus -> train -> probe -> embed -> score -> plot. Every terminal
artifact embeds the config fingerprint in its header; a stage is skipped when
all of its expected artifacts already exist with the current fingerprint, so
reruns are idempotent and deleting downstream artifacts only re-executes the
affected stages.
"""

from __future__ import annotations

import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .. import __version__
from ..autonet import (
    ArchSpec,
    TrainConfig,
    build,
    load_checkpoint,
    save_checkpoint,
    train_classifier,
    train_sr,
)
from ..autonet.checkpoint import CheckpointError
from ..autonet.training import load_labeled_images
from ..chimetrics import chi_report, save_report, load_report
from ..degrade import build_eval_triplets, degrade_image, save_triplets
from ..embed import TsneConfig, load_embedding, pca_fit_transform, save_embedding, tsne
from ..hashing import derive_seed
from ..imagecore import load_image
from ..imagecore.corpus import generate_corpus, load_manifest
from ..probe import concat_features, dump_feature_maps, extract_features, load_features, save_features
from .config import ConfigError, ExperimentConfig, ModelJob, parse_degradation
from .svgplot import emit_svg_scatter

STAGES = ("corpus", "train", "probe", "embed", "score", "plot")


class ArtifactError(Exception):
    """Missing or stale pipeline artifact (CLI exit code 3)."""


@dataclass
class RunManifest:
    config_hash: str
    version: str
    artifacts: dict[str, list[Path]]
    executed: list[str] = field(default_factory=list)

    def all_artifacts(self) -> list[Path]:
        return [p for stage in STAGES for p in self.artifacts.get(stage, [])]


class RunPaths:
    def __init__(self, root: Path, recipe: str):
        self.base = root / recipe
        self.corpus_train = self.base / "corpus" / "train"
        self.corpus_eval = self.base / "corpus" / "eval"
        self.train = self.base / "train"
        self.sets = self.base / "probe" / "sets"
        self.features = self.base / "probe" / "features"
        self.dumps = self.base / "probe" / "dumps"
        self.embed = self.base / "embed"
        self.score = self.base / "score"
        self.plot = self.base / "plot"
        self.manifest = self.base / "manifest.tsv"


def recipe_path(name: str) -> Path:
    """Path of a shipped recipe config by bare name (with or without .cfg)."""
    stem = name[:-4] if name.endswith(".cfg") else name
    candidate = resources.files("ddrlab") / "recipes" / f"{stem}.cfg"
    with resources.as_file(candidate) as path:
        if not path.exists():
            raise ConfigError(f"no shipped recipe named {stem!r}; known: {list_recipes()}")
        return Path(path)


def list_recipes() -> list[str]:
    folder = resources.files("ddrlab") / "recipes"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


# ------------------------------------------------------------- config views


def arch_spec_for(cfg: ExperimentConfig, job: ModelJob) -> ArchSpec:
    if job.arch == "classifier":
        classes = cfg.get_int("corpus.classes")
        return ArchSpec(
            "classifier",
            n_blocks=cfg.get_int("classifier.blocks"),
            channels=cfg.get_int("classifier.channels"),
            num_classes=classes,
        )
    wgr = job.arch.endswith("_wgr")
    return ArchSpec(
        "sr_generator",
        global_residual=wgr,
        n_blocks=cfg.get_int("train.blocks"),
        channels=cfg.get_int("train.channels"),
        scale=cfg.get_int("train.scale"),
    )


def resolve_taps(cfg: ExperimentConfig, spec: ArchSpec) -> list[str]:
    valid = ["Conv1"] + [f"ResBlock{k}" for k in range(1, spec.n_blocks + 1)]
    valid.append("Logits" if spec.kind == "classifier" else "Output")
    taps = []
    for token in cfg.tap_tokens():
        tap = f"ResBlock{spec.n_blocks}" if token == "deepest" else token
        if tap not in valid:
            raise ConfigError(f"tap {token!r} is not valid for a {spec.kind} with {spec.n_blocks} blocks")
        if tap not in taps:
            taps.append(tap)
    if not taps:
        raise ConfigError("probe.taps is empty")
    return taps


def _intra_name(kind: str, degrees: list[float]) -> str:
    return kind + "_" + "_".join(f"{d:g}" for d in degrees)


def eval_set_names(cfg: ExperimentConfig) -> list[str]:
    names = []
    if cfg.cross_tokens():
        names.append("cross")
    names += [_intra_name(kind, degrees) for kind, degrees in cfg.intra_sets()]
    return names


def groupings_for_set(cfg: ExperimentConfig, set_name: str) -> list[str]:
    return cfg.groupings() if set_name == "cross" else ["degree"]


def _san(token: str) -> str:
    return token.replace(":", "").replace(".", "p").replace(",", "_")


# -------------------------------------------------------- expected artifacts


def expected_artifacts(cfg: ExperimentConfig, paths: RunPaths, stage: str) -> list[Path]:
    jobs = cfg.model_jobs()
    sets = eval_set_names(cfg)
    if stage == "corpus":
        out = [paths.corpus_train / "manifest.tsv", paths.corpus_eval / "manifest.tsv"]
        return out
    if stage == "train":
        return [paths.train / f"{job.name}.ckpt" for job in jobs]
    if stage == "probe":
        out = []
        for job in jobs:
            taps = resolve_taps(cfg, arch_spec_for(cfg, job))
            for set_name in sets:
                out += [paths.features / job.name / set_name / f"{tap}.tsv" for tap in taps]
            for token in cfg.dump_tokens():
                out.append(paths.dumps / f"{job.name}_{_san(token)}.tsv")
        return out
    if stage == "embed":
        out = []
        for job in jobs:
            taps = resolve_taps(cfg, arch_spec_for(cfg, job))
            for set_name in sets:
                for tap in taps:
                    out += [
                        paths.embed / job.name / set_name / tap / f"seed{seed}.tsv"
                        for seed in cfg.seeds()
                    ]
        return out
    if stage == "score":
        out = []
        for job in jobs:
            taps = resolve_taps(cfg, arch_spec_for(cfg, job))
            for set_name in sets:
                for tap in taps:
                    for grouping in groupings_for_set(cfg, set_name):
                        out.append(paths.score / job.name / set_name / f"{tap}.{grouping}.tsv")
        if out:
            out.append(paths.score / "summary.tsv")
        if cfg.get("table.enabled") == "1":
            out.append(paths.score / "table1.tsv")
        return out
    if stage == "plot":
        out = []
        for job in jobs:
            taps = resolve_taps(cfg, arch_spec_for(cfg, job))
            for set_name in sets:
                out += [paths.plot / job.name / set_name / f"{tap}.svg" for tap in taps]
        return out
    raise ConfigError(f"unknown stage {stage!r}; valid: {STAGES + ('all',)}")


_HASH_RE = re.compile(r"hash=([0-9a-f]{16})")


def artifact_hash(path: Path) -> str | None:
    """Config fingerprint embedded in an artifact, or None when not carried."""
    suffix = path.suffix
    try:
        if suffix == ".ckpt":
            _, meta = load_checkpoint(path)
            return meta.get("config_hash")
        if suffix in (".tsv", ".svg"):
            with open(path, "r", encoding="utf-8") as f:
                head = f.read(512)
            match = _HASH_RE.search(head)
            return match.group(1) if match else None
    except (OSError, CheckpointError, ValueError):
        return None
    return None


def stage_complete(cfg: ExperimentConfig, paths: RunPaths, stage: str) -> bool:
    artifacts = expected_artifacts(cfg, paths, stage)
    if not artifacts:
        return True
    for path in artifacts:
        if not path.exists():
            return False
        found = artifact_hash(path)
        if found is not None and found != cfg.hash:
            return False
    return True


def ensure_upstream(cfg: ExperimentConfig, paths: RunPaths, stage: str) -> None:
    for upstream in STAGES[: STAGES.index(stage)]:
        for path in expected_artifacts(cfg, paths, upstream):
            if not path.exists():
                raise ArtifactError(
                    f"missing upstream artifact {path} (stage {upstream!r} has not run)"
                )
            found = artifact_hash(path)
            if found is not None and found != cfg.hash:
                raise ArtifactError(
                    f"stale artifact {path}: carries hash {found}, config is {cfg.hash}"
                )


# ------------------------------------------------------------------- stages


def _stage_corpus(cfg: ExperimentConfig, paths: RunPaths, threads: int) -> None:
    extra = f"hash={cfg.hash}"
    generate_corpus(
        paths.corpus_train,
        cfg.get_int("corpus.seed"),
        cfg.get_int("corpus.count"),
        cfg.corpus_size(),
        cfg.get_int("corpus.classes"),
        manifest_extra=extra,
    )
    generate_corpus(
        paths.corpus_eval,
        cfg.get_int("eval.seed"),
        cfg.get_int("eval.count"),
        cfg.corpus_size(),
        cfg.get_int("eval.classes"),
        manifest_extra=extra,
    )


def _train_config(cfg: ExperimentConfig, job: ModelJob, seed: int) -> TrainConfig:
    if job.arch == "classifier":
        return TrainConfig(
            mode="classification",
            steps=cfg.get_int("classifier.steps"),
            batch=cfg.get_int("classifier.batch"),
            lr=cfg.get_float("train.lr"),
            seed=seed,
        )
    mode = "gan" if job.arch.startswith("srgan") else "mse"
    degradation = parse_degradation(
        job.train_degradation, seed=derive_seed(seed, "train-degradation")
    )
    return TrainConfig(
        mode=mode,
        steps=cfg.get_int("train.steps"),
        batch=cfg.get_int("train.batch"),
        crop=cfg.get_int("train.crop"),
        lr=cfg.get_float("train.lr"),
        adv_weight=cfg.get_float("train.adv_weight"),
        seed=seed,
        train_degradation=degradation,
    )


def _stage_train(cfg: ExperimentConfig, paths: RunPaths, threads: int) -> None:
    manifest = load_manifest(paths.corpus_train / "manifest.tsv")
    paths.train.mkdir(parents=True, exist_ok=True)
    for job in cfg.model_jobs():
        spec = arch_spec_for(cfg, job)
        seed = derive_seed(cfg.get_int("train.seed"), job.token)
        model = build(spec, seed)
        train_cfg = _train_config(cfg, job, seed)
        log_path = paths.train / f"{job.name}_log.tsv"
        if job.arch == "classifier":
            images, labels = load_labeled_images(manifest)
            meta = train_classifier(model, images, labels, train_cfg, str(log_path))
        else:
            disc = None
            if train_cfg.mode == "gan":
                disc = build(
                    ArchSpec("discriminator", channels=spec.channels),
                    derive_seed(seed, "disc"),
                )
            meta = train_sr(model, manifest, train_cfg, disc, str(log_path))
        meta["config_hash"] = cfg.hash
        save_checkpoint(model, paths.train / f"{job.name}.ckpt", meta)


def _cross_specs(cfg: ExperimentConfig):
    seed = cfg.get_int("eval.degradation_seed")
    return [
        parse_degradation(token, seed=derive_seed(seed, f"cross/{token}"), source=cfg.source)
        for token in cfg.cross_tokens()
    ]


def _unit_specs(cfg: ExperimentConfig) -> dict[tuple[str, float], object]:
    seed = cfg.get_int("eval.degradation_seed")
    units: dict[tuple[str, float], object] = {}
    for kind, degrees in cfg.intra_sets():
        for degree in degrees:
            key = (kind, degree)
            if key in units:
                continue
            token = f"{kind}:{degree:g}"
            units[key] = parse_degradation(token, seed=derive_seed(seed, f"unit/{token}"))
    return units


def _stage_probe(cfg: ExperimentConfig, paths: RunPaths, threads: int) -> None:
    eval_manifest = load_manifest(paths.corpus_eval / "manifest.tsv")
    extra = f"hash={cfg.hash}"

    cross_triplets = None
    if cfg.cross_tokens():
        cross_triplets = build_eval_triplets(eval_manifest, _cross_specs(cfg))
        save_triplets(cross_triplets, paths.sets / "cross")

    units = _unit_specs(cfg)
    unit_triplets = {}
    clean_spec = parse_degradation("clean")
    for (kind, degree), spec in units.items():
        triplets = build_eval_triplets(eval_manifest, [clean_spec, spec])
        unit_triplets[(kind, degree)] = triplets
        save_triplets(triplets, paths.sets / f"{kind}{degree:g}")

    dump_variants = []
    if cfg.dump_tokens():
        first = eval_manifest.entries[0]
        image = load_image(eval_manifest.image_path(first))
        seed = cfg.get_int("eval.degradation_seed")
        for token in cfg.dump_tokens():
            spec = parse_degradation(token, seed=derive_seed(seed, f"dump/{token}"))
            variant, _ = degrade_image(image, spec, first.id)
            dump_variants.append((token, variant))

    pooling = cfg.get("probe.pooling")
    for job in cfg.model_jobs():
        model, _ = load_checkpoint(paths.train / f"{job.name}.ckpt", arch_spec_for(cfg, job))
        taps = resolve_taps(cfg, model.spec)
        if cross_triplets is not None:
            fsets = extract_features(
                model, cross_triplets, taps, pooling, provenance=(job.name, "cross")
            )
            for tap, fs in fsets.items():
                out = paths.features / job.name / "cross" / f"{tap}.tsv"
                out.parent.mkdir(parents=True, exist_ok=True)
                save_features(fs, out, extra)

        unit_features = {}
        for (kind, degree), triplets in unit_triplets.items():
            unit_features[(kind, degree)] = extract_features(
                model,
                triplets,
                taps,
                pooling,
                kinds=[kind],
                provenance=(job.name, f"{kind}{degree:g}"),
            )
        for kind, degrees in cfg.intra_sets():
            set_name = _intra_name(kind, degrees)
            for tap in taps:
                fs = concat_features([unit_features[(kind, d)][tap] for d in degrees])
                out = paths.features / job.name / set_name / f"{tap}.tsv"
                out.parent.mkdir(parents=True, exist_ok=True)
                save_features(fs, out, extra)

        for token, variant in dump_variants:
            prefix = paths.dumps / f"{job.name}_{_san(token)}"
            dump_feature_maps(
                model,
                variant,
                f"ResBlock{model.spec.n_blocks}",
                top_k=min(cfg.get_int("probe.dump_top_k"), model.spec.channels),
                out_prefix=prefix,
            )
            # Append the fingerprint so the stage skip check can validate it.
            tsv = prefix.with_suffix(".tsv")
            text = tsv.read_text(encoding="utf-8").splitlines()
            text[0] += f" {extra}"
            tsv.write_text("\n".join(text) + "\n", encoding="utf-8")


def _embed_one(cfg: ExperimentConfig, features_path: Path, seed: int, out_path: Path) -> None:
    fs = load_features(features_path)
    x = fs.vectors
    pca_dims = cfg.get_int("embed.pca_dims")
    used_dims = None
    if x.shape[1] > pca_dims:
        _, x = pca_fit_transform(x, pca_dims)
        used_dims = pca_dims
    emb = tsne(
        x,
        TsneConfig(
            perplexity=cfg.get_float("embed.perplexity"),
            iterations=cfg.get_int("embed.iterations"),
            seed=seed,
        ),
        ids=fs.ids,
        kinds=fs.kinds,
        degrees=fs.degrees,
        classes=fs.classes,
        pca_dims=used_dims,
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_embedding(emb, out_path, f"hash={cfg.hash}")


def _stage_embed(cfg: ExperimentConfig, paths: RunPaths, threads: int) -> None:
    jobs = []
    for job in cfg.model_jobs():
        taps = resolve_taps(cfg, arch_spec_for(cfg, job))
        for set_name in eval_set_names(cfg):
            for tap in taps:
                src = paths.features / job.name / set_name / f"{tap}.tsv"
                if not src.exists():
                    raise ArtifactError(f"missing upstream artifact {src}")
                for seed in cfg.seeds():
                    dst = paths.embed / job.name / set_name / tap / f"seed{seed}.tsv"
                    jobs.append((src, seed, dst))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda args: _embed_one(cfg, *args), jobs))
    else:
        for args in jobs:
            _embed_one(cfg, *args)


def _bucket_degrees(set_name: str, cfg: ExperimentConfig) -> list[float] | None:
    for kind, degrees in cfg.intra_sets():
        if _intra_name(kind, degrees) == set_name:
            return degrees
    return None


def _stage_score(cfg: ExperimentConfig, paths: RunPaths, threads: int) -> None:
    extra = f"hash={cfg.hash}"
    summary_rows = []
    for job in cfg.model_jobs():
        taps = resolve_taps(cfg, arch_spec_for(cfg, job))
        for set_name in eval_set_names(cfg):
            buckets = _bucket_degrees(set_name, cfg)
            for tap in taps:
                embs = [
                    load_embedding(paths.embed / job.name / set_name / tap / f"seed{seed}.tsv")
                    for seed in cfg.seeds()
                ]
                for grouping in groupings_for_set(cfg, set_name):
                    report = chi_report(embs, grouping, buckets)
                    out = paths.score / job.name / set_name / f"{tap}.{grouping}.tsv"
                    out.parent.mkdir(parents=True, exist_ok=True)
                    save_report(report, out, extra)
                    summary_rows.append(
                        f"{job.name}\t{set_name}\t{tap}\t{grouping}"
                        f"\t{report.mean!r}\t{report.std!r}\t{report.band()}"
                    )
    if summary_rows:
        paths.score.mkdir(parents=True, exist_ok=True)
        header = f"#chisummary v1 hash={cfg.hash}"
        body = "\n".join([header, "#model\tset\ttap\tgrouping\tmean\tstd\tband", *summary_rows])
        (paths.score / "summary.tsv").write_text(body + "\n", encoding="utf-8")
    if cfg.get("table.enabled") == "1":
        recipe_table1(cfg, paths)


TABLE1_ROW_ORDER = ("srresnet_wogr", "srresnet_wgr", "srgan_wogr", "srgan_wgr")


def recipe_table1(cfg: ExperimentConfig, paths: RunPaths | None = None, out_root: Path | None = None):
    """Assemble the banded 4-row summary table from the per-set CHI reports.

    Rows are the four generator variants; columns are the cross-degradation
    set followed by each intra-degradation set. Cell text is "band (mean)".
    """
    if paths is None:
        root = out_root if out_root is not None else Path(resolve_out_root(cfg, None))
        paths = RunPaths(root, cfg.get("recipe.name"))
    jobs = {job.arch: job for job in cfg.model_jobs()}
    missing = [arch for arch in TABLE1_ROW_ORDER if arch not in jobs]
    if missing:
        raise ArtifactError(f"table needs all four generator variants; missing {missing}")

    columns = []
    if cfg.cross_tokens():
        columns.append(("cross", "Clean-Blur-Noise"))
    for kind, degrees in cfg.intra_sets():
        label = f"{kind.capitalize()}{{{','.join(f'{d:g}' for d in degrees)}}}"
        columns.append((_intra_name(kind, degrees), label))

    deepest = f"ResBlock{cfg.get_int('train.blocks')}"
    rows = []
    for arch in TABLE1_ROW_ORDER:
        job = jobs[arch]
        cells = []
        for set_name, label in columns:
            grouping = "kind" if set_name == "cross" else "degree"
            report = load_report(paths.score / job.name / set_name / f"{deepest}.{grouping}.tsv")
            cells.append((label, report.mean, report.std, report.band()))
        rows.append((arch, cells))

    tsv_lines = [f"#table1 v1 hash={cfg.hash}", "#model\tcolumn\tmean\tstd\tband"]
    for arch, cells in rows:
        for label, mean, std, band_text in cells:
            tsv_lines.append(f"{arch}\t{label}\t{mean!r}\t{std!r}\t{band_text}")
    paths.score.mkdir(parents=True, exist_ok=True)
    (paths.score / "table1.tsv").write_text("\n".join(tsv_lines) + "\n", encoding="utf-8")

    col_labels = [label for _, label in columns]
    widths = [max(len(label), 18) for label in col_labels]
    header = "model".ljust(16) + "".join(label.rjust(w + 2) for label, w in zip(col_labels, widths))
    pretty = [header]
    for arch, cells in rows:
        line = arch.ljust(16)
        for (label, mean, std, band_text), w in zip(cells, widths):
            line += f"{band_text} ({mean:.2f})".rjust(w + 2)
        pretty.append(line)
    (paths.score / "table1.txt").write_text("\n".join(pretty) + "\n", encoding="utf-8")
    return rows


def _stage_plot(cfg: ExperimentConfig, paths: RunPaths, threads: int) -> None:
    first_seed = cfg.seeds()[0]
    for job in cfg.model_jobs():
        taps = resolve_taps(cfg, arch_spec_for(cfg, job))
        for set_name in eval_set_names(cfg):
            for tap in taps:
                emb = load_embedding(
                    paths.embed / job.name / set_name / tap / f"seed{first_seed}.tsv"
                )
                out = paths.plot / job.name / set_name / f"{tap}.svg"
                emit_svg_scatter(emb, path=out, comment=f"hash={cfg.hash}")


_STAGE_FUNCS = {
    "corpus": _stage_corpus,
    "train": _stage_train,
    "probe": _stage_probe,
    "embed": _stage_embed,
    "score": _stage_score,
    "plot": _stage_plot,
}


# ------------------------------------------------------------------ driver


def resolve_out_root(cfg: ExperimentConfig, out_root: str | os.PathLike | None) -> Path:
    if out_root is not None:
        return Path(out_root)
    env = os.environ.get("DDR_OUT")
    if env:
        return Path(env)
    configured = cfg.get("out.dir")
    return Path(configured) if configured else Path("out")


def _write_manifest(cfg: ExperimentConfig, paths: RunPaths, manifest: RunManifest) -> None:
    lines = [f"#runmanifest v1 hash={cfg.hash} tool={manifest.version}"]
    for stage in STAGES:
        for path in manifest.artifacts.get(stage, []):
            try:
                rel = path.relative_to(paths.base)
            except ValueError:
                rel = path
            lines.append(f"{stage}\t{rel}")
    paths.base.mkdir(parents=True, exist_ok=True)
    paths.manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run(
    config: ExperimentConfig | str | os.PathLike,
    stage: str = "all",
    out_root: str | os.PathLike | None = None,
    seed_override: int | None = None,
    threads: int = 1,
) -> RunManifest:
    """Execute one stage (or all stages) of a recipe; idempotent per config."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_file(config)
    if seed_override is not None:
        cfg = cfg.with_seed_override(seed_override)
    if stage != "all" and stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; valid: {STAGES + ('all',)}")

    root = resolve_out_root(cfg, out_root)
    paths = RunPaths(root, cfg.get("recipe.name"))
    manifest = RunManifest(config_hash=cfg.hash, version=__version__, artifacts={})

    stages = list(STAGES) if stage == "all" else [stage]
    if stage != "all":
        ensure_upstream(cfg, paths, stage)
    for name in stages:
        if stage_complete(cfg, paths, name):
            manifest.artifacts[name] = expected_artifacts(cfg, paths, name)
            continue
        _STAGE_FUNCS[name](cfg, paths, threads)
        manifest.executed.append(name)
        artifacts = expected_artifacts(cfg, paths, name)
        for path in artifacts:
            if not path.exists():
                raise ArtifactError(f"stage {name!r} finished but did not produce {path}")
        manifest.artifacts[name] = artifacts
    _write_manifest(cfg, paths, manifest)
    return manifest
