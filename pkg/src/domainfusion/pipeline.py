"""Experiment orchestration behind the CLI subcommands.

Stage order for a full run: synthesize domains, train the reference
extractor, rank candidate outer datasets, then per replicate seed train
the baseline and multi-domain GANs, sample (with rejection filtering for
the multi-domain model when enabled), train downstream classifiers on
the augmented sets, and reduce everything into a summary table. The run
manifest is written last; its presence marks a completed run, and the
embedded config text reproduces every artifact byte for byte.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np

from . import augment, data, drs, gan, kernels, metrics
from .config import default_config, render_config
from .errors import ConfigError
from .rng import substream

MODES = ("none", "cgan", "tgan", "df")
SUMMARY_HEADER = "mode,seed,top1,topk,fid,is"


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message, flush=True)


def _stage_seed(base_seed: int, *tags) -> int:
    return int(substream(base_seed, "stage", *tags).integers(0, 2**62))


# ---------------------------------------------------------------------------
# Config -> dataclass builders.

def synth_spec(cfg: dict, kind: str) -> data.SynthDomainSpec:
    d = cfg["data"]
    return data.SynthDomainSpec(
        kind=kind,
        side=d["side"],
        classes=d["classes_per_domain"],
        noise_sigma=d["noise_sigma"],
        fixed_phase=d["fixed_phase"],
    )


def build_cfg(cfg: dict) -> gan.GanBuildConfig:
    g = cfg["gan"]
    return gan.GanBuildConfig(
        z_dim=g["z_dim"],
        embed_dim=g["embed_dim"],
        hidden=g["hidden"],
        spectral_norm=g["spectral_norm"],
    )


def train_cfg(cfg: dict, seed: int, alpha: float | None = None,
              iters: int | None = None) -> gan.TrainConfig:
    g = cfg["gan"]
    return gan.TrainConfig(
        alpha=g["alpha"] if alpha is None else alpha,
        batch_size=g["batch"],
        disc_steps=g["disc_steps"],
        lr_g=g["lr_g"],
        lr_d=g["lr_d"],
        beta1=g["beta1"],
        beta2=g["beta2"],
        total_iters=g["iters"] if iters is None else iters,
        eval_interval=g["eval_interval"],
        patience=g["patience"],
        seed=seed,
        spectral_norm=g["spectral_norm"],
        fresh_noise=g["fresh_noise"],
        is_samples=g["is_samples"],
    )


def msssim_cfg(cfg: dict) -> metrics.MsSsimConfig:
    return metrics.MsSsimConfig(scales=cfg["metrics"]["msssim_scales"])


def extractor_cfg(cfg: dict) -> metrics.ExtractorConfig:
    m = cfg["metrics"]
    return metrics.ExtractorConfig(
        hidden=m["extractor_hidden"],
        feature_dim=m["feature_dim"],
        steps=m["extractor_steps"],
        batch=m["extractor_batch"],
        lr=m["extractor_lr"],
    )


def augment_plan(cfg: dict) -> augment.AugmentPlan:
    a = cfg["augment"]
    return augment.AugmentPlan(
        gen_per_class=a["gen_per_class"],
        use_drs=cfg["drs"]["use_drs"],
        n_real_train=a["n_real_train"],
        n_real_val=a["n_real_val"],
    )


def cda_cfg(cfg: dict) -> augment.CdaConfig | None:
    a = cfg["augment"]
    if not a["use_cda"]:
        return None
    return augment.CdaConfig(
        flip=a["cda_flip"], expand=a["cda_expand"], rotate=a["cda_rotate"]
    )


def classifier_cfg(cfg: dict, seed: int) -> augment.ClassifierConfig:
    c = cfg["classifier"]
    return augment.ClassifierConfig(
        hidden1=c["hidden1"],
        hidden2=c["hidden2"],
        steps=c["steps"],
        batch=c["batch"],
        lr=c["lr"],
        eval_every=c["eval_every"],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Individual subcommand bodies.

def cmd_synth(cfg: dict, out_dir, seed: int | None = None, quiet: bool = True) -> list[str]:
    """Write the target pool and candidate outer sets as DFDS files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_seed = cfg["pipeline"]["base_seed"] if seed is None else seed
    d = cfg["data"]
    k = d["classes_per_domain"]
    paths = []
    target = data.synth_domain(
        synth_spec(cfg, d["target_kind"]),
        d["n_target"] // k,
        _stage_seed(base_seed, "data", d["target_kind"]),
    )
    path = out_dir / f"{d['target_kind']}_{d['n_target']}.dfds"
    data.save_dfds(target, path)
    paths.append(str(path))
    for kind in d["outer_kinds"]:
        outer = data.synth_domain(
            synth_spec(cfg, kind),
            d["n_outer"] // k,
            _stage_seed(base_seed, "data", kind),
        )
        path = out_dir / f"{kind}_{d['n_outer']}.dfds"
        data.save_dfds(outer, path)
        paths.append(str(path))
    for p in paths:
        _say(quiet, f"wrote {p}")
    return paths


def _synth_aux(cfg: dict, out_dir: Path, base_seed: int) -> dict[str, str]:
    """Test set and full-volume corpora used by the pipeline stages."""
    d = cfg["data"]
    k = d["classes_per_domain"]
    paths: dict[str, str] = {}
    test = data.synth_domain(
        synth_spec(cfg, d["target_kind"]),
        d["n_test_per_class"],
        _stage_seed(base_seed, "data-test", d["target_kind"]),
    )
    test_path = out_dir / f"{d['target_kind']}_test_{len(test)}.dfds"
    data.save_dfds(test, test_path)
    paths["test"] = str(test_path)
    for kind in [d["target_kind"]] + list(d["outer_kinds"]):
        full = data.synth_domain(
            synth_spec(cfg, kind),
            d["n_full_per_class"],
            _stage_seed(base_seed, "data-full", kind),
        )
        full_path = out_dir / f"{kind}_full_{len(full)}.dfds"
        data.save_dfds(full, full_path)
        paths[f"full:{kind}"] = str(full_path)
    return paths


def cmd_rank_outer(
    target_path,
    candidate_paths: list,
    cfg: dict,
    out_dir=None,
    extractor_path=None,
    seed: int | None = None,
    quiet: bool = True,
) -> tuple[list[metrics.MetricReport], str]:
    """Rank candidates by the selection metric; returns (reports, best path)."""
    if not candidate_paths:
        raise ConfigError("no candidate datasets given")
    base_seed = cfg["pipeline"]["base_seed"] if seed is None else seed
    target = data.load_dfds(target_path, name=Path(str(target_path)).stem)
    candidates = [
        data.load_dfds(p, name=Path(str(p)).stem) for p in candidate_paths
    ]
    if extractor_path is not None:
        extractor = metrics.load_extractor(extractor_path)
    else:
        _say(quiet, "training ranking extractor on the fly")
        extractor = metrics.train_reference_extractor(
            [target] + candidates, _stage_seed(base_seed, "extractor"),
            extractor_cfg(cfg),
        )
    reports = metrics.select_outer(
        target, candidates, extractor, msssim_cfg(cfg),
        pair_budget=cfg["metrics"]["pair_budget"], seed=base_seed,
    )
    by_name = {Path(str(p)).stem: str(p) for p in candidate_paths}
    chosen = by_name[reports[0].candidate]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics.write_metric_reports(reports, out_dir / "rank.csv")
    for r in reports:
        _say(quiet, f"  {r.candidate}: metric={r.metric_m:.4f} "
                    f"(fid={r.fid:.3f}, ssim_bar={r.ssim_bar:.4f})")
    return reports, chosen


def cmd_train_gan(
    cfg: dict,
    target_path,
    out_dir,
    outer_path=None,
    mode: str | None = None,
    seed: int | None = None,
    extractor_path=None,
    quiet: bool = True,
) -> dict[str, str]:
    """Train one GAN in the configured mode; write checkpoint, log, manifest."""
    mode = cfg["gan"]["mode"] if mode is None else mode
    if mode not in ("cgan", "tgan", "df"):
        raise ConfigError(f"unknown gan mode {mode!r}")
    if mode in ("tgan", "df") and outer_path is None:
        raise ConfigError(f"mode {mode!r} requires --outer")
    run_seed = cfg["pipeline"]["base_seed"] if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = data.load_dfds(target_path, name=Path(str(target_path)).stem)
    extractor = (
        metrics.load_extractor(extractor_path) if extractor_path is not None else None
    )
    bc = build_cfg(cfg)
    tc = train_cfg(cfg, run_seed)
    artifacts: dict[str, str] = {}
    if mode == "cgan":
        model, logs = gan.cgan_train(target, tc, bc, extractor)
        log_sets = {"train_log.csv": logs}
        iterations = len(logs)
    else:
        outer = data.load_dfds(outer_path, name=Path(str(outer_path)).stem)
        if mode == "df":
            pair = data.merge_domains(target, outer)
            model, logs = gan.df_train(pair, tc, bc, extractor)
            log_sets = {"train_log.csv": logs}
            iterations = len(logs)
        else:
            pre_tc = train_cfg(cfg, run_seed, alpha=1.0,
                               iters=cfg["gan"]["tgan_pretrain_iters"])
            model, (pre_logs, fine_logs) = gan.tgan_train(
                target, outer, pre_tc, tc, bc, extractor
            )
            log_sets = {"train_log_pre.csv": pre_logs, "train_log.csv": fine_logs}
            iterations = len(fine_logs)
    ck_path = out_dir / "checkpoint.dfck"
    gan.save_gan(
        model,
        ck_path,
        {
            "mode": mode,
            "alpha": tc.alpha if mode == "df" else 1.0,
            "seed": run_seed,
            "iteration": iterations,
            "target_classes": target.num_classes,
        },
    )
    artifacts["checkpoint"] = str(ck_path)
    artifacts["sidecar"] = gan.sidecar_path(ck_path)
    for fname, logs in log_sets.items():
        gan.write_train_log(logs, out_dir / fname)
        artifacts[fname] = str(out_dir / fname)
    manifest = {
        "config": render_config(cfg),
        "mode": mode,
        "seed": run_seed,
        "artifacts": sorted(artifacts.values()),
    }
    man_path = out_dir / "manifest.json"
    with open(man_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts["manifest"] = str(man_path)
    _say(quiet, f"trained {mode} for {iterations} iterations -> {ck_path}")
    return artifacts


def _prepare_drs(cfg: dict, model: gan.GanModel, target: data.LabeledImageSet,
                 seed: int) -> tuple[drs.CalibrationHead, drs.DrsState]:
    d = cfg["drs"]
    head = drs.keep_training(
        model, target, steps=d["head_steps"], lr=d["head_lr"],
        seed=seed, batch=d["head_batch"],
    )
    state = drs.init_drs_state(
        model, head, range(target.num_classes), seed=seed,
        eps=d["eps"], tau=d["tau"],
        gamma=d["gamma"],
        gamma_percentile=d["gamma_percentile"]
        if d["gamma_mode"] == "percentile" else None,
    )
    return head, state


def cmd_sample(
    cfg: dict,
    checkpoint_path,
    n_per_class: int,
    out_dir,
    use_drs: bool = False,
    target_path=None,
    head_path=None,
    seed: int | None = None,
    quiet: bool = True,
) -> dict[str, str]:
    """Sample class-conditional images; write a DFDS file and a PGM grid."""
    run_seed = cfg["pipeline"]["base_seed"] if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, meta = gan.load_gan(checkpoint_path)
    k_target = int(meta.get("target_classes", model.num_classes))
    artifacts: dict[str, str] = {}
    records = []
    if use_drs:
        if head_path is not None:
            head, state = drs.load_head_state(head_path)
        elif target_path is not None:
            target = data.load_dfds(target_path, name=Path(str(target_path)).stem)
            head, state = _prepare_drs(cfg, model, target, run_seed)
            saved = out_dir / "drs_head.json"
            drs.save_head_state(head, state, saved)
            artifacts["drs_head"] = str(saved)
        else:
            raise ConfigError("--use-drs needs --target (to fit a head) or --head")
        parts, labels = [], []
        for y in range(k_target):
            pixels, state, record = drs.drs_sample(
                model, head, state, y, n_per_class, seed=run_seed,
                max_attempts=cfg["drs"]["max_attempt_factor"] * max(n_per_class, 1),
            )
            parts.append(pixels)
            labels.append(np.full(n_per_class, y, dtype=np.uint16))
            records.append(record)
        sample_set = data.LabeledImageSet(
            pixels=np.concatenate(parts, axis=0),
            labels=np.concatenate(labels),
            num_classes=k_target,
            name="generated",
        )
        rec_path = out_dir / "drs_records.csv"
        drs.write_acceptance_records(records, rec_path)
        artifacts["drs_records"] = str(rec_path)
    else:
        sample_set = drs.plain_sample(model, range(k_target), n_per_class, seed=run_seed)
    ds_path = out_dir / "samples.dfds"
    data.save_dfds(sample_set, ds_path)
    grid_path = out_dir / "grid.pgm"
    data.write_pgm_grid(sample_set, grid_path, columns=8)
    artifacts["samples"] = str(ds_path)
    artifacts["grid"] = str(grid_path)
    _say(quiet, f"sampled {len(sample_set)} images -> {ds_path}")
    return artifacts


def cmd_augment_eval(
    cfg: dict,
    checkpoint_path,
    train_path,
    val_path,
    test_path,
    out_dir,
    mode_label: str = "gan",
    seed: int | None = None,
    quiet: bool = True,
) -> augment.EvalReport:
    """Train a classifier on the augmented set and score it on the test set."""
    run_seed = cfg["pipeline"]["base_seed"] if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = data.load_dfds(train_path, name="train")
    val = data.load_dfds(val_path, name="val")
    test = data.load_dfds(test_path, name="test")
    model, _ = gan.load_gan(checkpoint_path)
    plan = augment_plan(cfg)
    head = state = None
    if plan.use_drs:
        head, state = _prepare_drs(cfg, model, train, run_seed)
    built = augment.build_augmented(train, model, plan, head, state, seed=run_seed)
    clf = augment.train_classifier(
        built.images, val, classifier_cfg(cfg, run_seed), cda=cda_cfg(cfg)
    )
    report = augment.evaluate(clf, test, k=cfg["classifier"]["topk"])
    run_id = f"{mode_label}_s{run_seed}"
    augment.write_eval_row(
        out_dir / "eval.csv", run_id, mode_label, report,
        built.n_real, built.n_generated, run_seed,
    )
    augment.write_eval_classes(out_dir / "eval_classes.csv", run_id, report)
    _say(quiet, f"{run_id}: top1={report.top1:.4f} topk={report.topk:.4f}")
    return report


# ---------------------------------------------------------------------------
# Full pipeline.

def _train_mode(cfg, mode, pool, outer, extractor, seed):
    bc = build_cfg(cfg)
    tc = train_cfg(cfg, seed)
    if mode == "cgan":
        model, logs = gan.cgan_train(pool, tc, bc, extractor)
        return model, {"train_log.csv": logs}
    if mode == "df":
        pair = data.merge_domains(pool, outer)
        model, logs = gan.df_train(pair, tc, bc, extractor)
        return model, {"train_log.csv": logs}
    pre_tc = train_cfg(cfg, seed, alpha=1.0, iters=cfg["gan"]["tgan_pretrain_iters"])
    model, (pre_logs, fine_logs) = gan.tgan_train(pool, outer, pre_tc, tc, bc, extractor)
    return model, {"train_log_pre.csv": pre_logs, "train_log.csv": fine_logs}


def run_pipeline(
    cfg: dict | None = None,
    out_dir="runs/exp",
    base_seed: int | None = None,
    quiet: bool = False,
) -> str:
    """Full comparison across modes and replicate seeds; returns manifest path."""
    started = time.time()
    if cfg is None:
        cfg = default_config()
    base_seed = cfg["pipeline"]["base_seed"] if base_seed is None else base_seed
    n_seeds = cfg["pipeline"]["seeds"]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []

    config_path = out_dir / "config.txt"
    config_text = render_config(cfg)
    config_path.write_text(config_text, encoding="utf-8")
    artifacts.append(str(config_path))

    # stage 1: data
    _say(quiet, "[1/5] synthesizing domains")
    data_dir = out_dir / "data"
    core_paths = cmd_synth(cfg, data_dir, seed=base_seed, quiet=quiet)
    aux_paths = _synth_aux(cfg, data_dir, base_seed)
    artifacts.extend(core_paths)
    artifacts.extend(aux_paths.values())
    d = cfg["data"]
    target_pool_path = core_paths[0]
    candidate_paths = core_paths[1:]
    target_pool = data.load_dfds(target_pool_path, name=d["target_kind"])
    test_set = data.load_dfds(aux_paths["test"], name="test")
    target_full = data.load_dfds(
        aux_paths[f"full:{d['target_kind']}"], name="target-full"
    )

    # stage 2: reference extractor on the full-volume union
    _say(quiet, "[2/5] training reference extractor")
    full_sets = [
        data.load_dfds(aux_paths[f"full:{kind}"], name=kind)
        for kind in [d["target_kind"]] + list(d["outer_kinds"])
    ]
    extractor = metrics.train_reference_extractor(
        full_sets, _stage_seed(base_seed, "extractor"), extractor_cfg(cfg)
    )
    ex_path = out_dir / "extractor.dfck"
    metrics.save_extractor(extractor, ex_path)
    artifacts.extend([str(ex_path), str(ex_path) + ".json"])

    # stage 3: outer ranking
    _say(quiet, "[3/5] ranking candidate outer datasets")
    reports, chosen_path = cmd_rank_outer(
        target_pool_path, candidate_paths, cfg, out_dir=out_dir,
        extractor_path=ex_path, seed=base_seed, quiet=quiet,
    )
    artifacts.append(str(out_dir / "rank.csv"))
    chosen_outer = data.load_dfds(chosen_path, name=Path(chosen_path).stem)

    # stage 4: per-seed mode comparison
    plan = augment_plan(cfg)
    seeds = [base_seed + s for s in range(n_seeds)]
    rows: list[tuple[str, int, float, float, float | None, float | None]] = []
    eval_path = out_dir / "eval.csv"
    eval_cls_path = out_dir / "eval_classes.csv"
    for seed in seeds:
        train_split, val_split = data.split_balanced(
            target_pool, plan.n_real_train, plan.n_real_val,
            _stage_seed(base_seed, "split", seed),
        )
        for mode in MODES:
            run_id = f"{mode}_s{seed}"
            run_dir = out_dir / "runs" / run_id
            run_dir.mkdir(parents=True, exist_ok=True)
            _say(quiet, f"[4/5] {run_id}")
            fid_val = is_val = None
            if mode == "none":
                built = augment.AugmentedSet(
                    images=train_split, n_real=len(train_split),
                    n_generated=0, records=[],
                )
            else:
                model, log_sets = _train_mode(
                    cfg, mode, target_pool, chosen_outer, extractor, seed
                )
                ck_path = run_dir / "checkpoint.dfck"
                gan.save_gan(model, ck_path, {
                    "mode": mode, "alpha": cfg["gan"]["alpha"] if mode == "df" else 1.0,
                    "seed": seed, "iteration": len(log_sets["train_log.csv"]),
                    "target_classes": target_pool.num_classes,
                })
                artifacts.extend([str(ck_path), gan.sidecar_path(ck_path)])
                for fname, logs in log_sets.items():
                    gan.write_train_log(logs, run_dir / fname)
                    artifacts.append(str(run_dir / fname))
                head = state = None
                use_drs = plan.use_drs and mode == "df"
                if use_drs:
                    head, state = _prepare_drs(cfg, model, target_pool, seed)
                    drs.save_head_state(head, state, run_dir / "drs_head.json")
                    artifacts.append(str(run_dir / "drs_head.json"))
                mode_plan = augment.AugmentPlan(
                    gen_per_class=plan.gen_per_class, use_drs=use_drs,
                    n_real_train=plan.n_real_train, n_real_val=plan.n_real_val,
                )
                built = augment.build_augmented(
                    train_split, model, mode_plan, head, state, seed=seed
                )
                if built.records:
                    rec_path = run_dir / "drs_records.csv"
                    drs.write_acceptance_records(built.records, rec_path)
                    artifacts.append(str(rec_path))
                gen_set = data.LabeledImageSet(
                    pixels=built.images.pixels[built.n_real :],
                    labels=built.images.labels[built.n_real :],
                    num_classes=target_pool.num_classes,
                    name="generated",
                )
                samples_path = run_dir / "samples.dfds"
                data.save_dfds(gen_set, samples_path)
                grid_path = run_dir / "grid.pgm"
                data.write_pgm_grid(gen_set, grid_path, columns=8)
                artifacts.extend([str(samples_path), str(grid_path)])
                fid_val = metrics.fid(gen_set, target_full, extractor)
                is_val = metrics.inception_score(gen_set, extractor)
            clf = augment.train_classifier(
                built.images, val_split, classifier_cfg(cfg, seed), cda=cda_cfg(cfg)
            )
            report = augment.evaluate(clf, test_set, k=cfg["classifier"]["topk"])
            augment.write_eval_row(
                eval_path, run_id, mode, report,
                built.n_real, built.n_generated, seed,
            )
            augment.write_eval_classes(eval_cls_path, run_id, report)
            rows.append((mode, seed, report.top1, report.topk, fid_val, is_val))
            _say(quiet, f"        top1={report.top1:.4f}"
                        + (f" fid={fid_val:.3f} is={is_val:.3f}" if fid_val is not None else ""))
    artifacts.extend([str(eval_path), str(eval_cls_path)])

    # stage 5: summary
    _say(quiet, "[5/5] writing summary")
    summary_path = out_dir / "summary.csv"
    _write_summary(rows, summary_path)
    artifacts.append(str(summary_path))

    for path in artifacts:
        if not os.path.exists(path):
            raise ConfigError(f"artifact vanished before manifest write: {path}")
    manifest = {
        "run_id": f"pipeline_b{base_seed}",
        "config": config_text,
        "base_seed": base_seed,
        "seeds": seeds,
        "chosen_outer": str(chosen_path),
        "kernel_backend": kernels.BACKEND,
        "artifacts": sorted(os.path.relpath(p, out_dir) for p in artifacts),
        "wall_clock_seconds": time.time() - started,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _say(quiet, f"manifest -> {manifest_path}")
    return str(manifest_path)


def _fmt_opt(value) -> str:
    return "" if value is None else repr(float(value))


def _write_summary(rows, path) -> None:
    lines = [SUMMARY_HEADER]
    for mode, seed, top1, topk, fid_val, is_val in rows:
        lines.append(
            f"{mode},{seed},{top1!r},{topk!r},{_fmt_opt(fid_val)},{_fmt_opt(is_val)}"
        )
    for mode in MODES:
        mode_rows = sorted(
            (r for r in rows if r[0] == mode), key=lambda r: r[1]
        )
        if not mode_rows:
            continue
        for stat, reducer in (("mean", np.mean), ("std", _sample_std)):
            tops = reducer([r[2] for r in mode_rows])
            topks = reducer([r[3] for r in mode_rows])
            fids = [r[4] for r in mode_rows if r[4] is not None]
            iss = [r[5] for r in mode_rows if r[5] is not None]
            fid_s = _fmt_opt(reducer(fids)) if fids else ""
            is_s = _fmt_opt(reducer(iss)) if iss else ""
            lines.append(
                f"{mode},{stat},{float(tops)!r},{float(topks)!r},{fid_s},{is_s}"
            )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _sample_std(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(arr.std(ddof=1))


def cmd_report(out_dir, quiet: bool = False) -> str:
    """Pretty-print the summary table of a completed run."""
    out_dir = Path(out_dir)
    summary_path = out_dir / "summary.csv"
    if not summary_path.exists():
        raise FileNotFoundError(f"no summary at {summary_path}")
    lines = summary_path.read_text().strip().split("\n")
    header = lines[0].split(",")
    widths = [10, 8, 10, 10, 12, 10]
    out = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for line in lines[1:]:
        cells = line.split(",")
        shown = []
        for cell, w in zip(cells, widths):
            try:
                shown.append(f"{float(cell):.4f}".ljust(w))
            except ValueError:
                shown.append(cell.ljust(w))
        out.append("  ".join(shown))
    table = "\n".join(out)
    _say(quiet, table)
    return table
