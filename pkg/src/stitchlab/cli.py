"""Experiment orchestration CLI.

Every stage writes a frozen copy of its resolved configuration next to its
outputs and embeds the config hash in result tables, so any artifact can be
traced to the exact settings that produced it. Stages are deterministic
given their seed (single-threaded mode; set OPENBLAS_NUM_THREADS=1 in the
environment, or STITCHLAB_THREADS before launch).
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

if "STITCHLAB_THREADS" in os.environ:  # must precede the numpy import
    os.environ.setdefault("OPENBLAS_NUM_THREADS", os.environ["STITCHLAB_THREADS"])

import numpy as np

from . import analysis, datagen, figures, gridworld, metrics, models, planner, profiles, tables, train
from .diffusion import DiffusionSchedule
from .profiles import config_hash

VARIANTS = ("unet", "unet_aug", "eqnet", "eqnet_posenc")


def _build_spec(profile: profiles.Profile, variant: str, ker: int | None = None):
    if variant == "eqnet":
        return profile.eqnet_spec(ker=ker)
    if variant == "eqnet_posenc":
        return profile.eqnet_spec(ker=ker, posenc=True)
    if variant in ("unet", "unet_aug"):
        return profile.unet_spec()
    raise ValueError(f"unknown variant '{variant}' (have {VARIANTS})")


def freeze_config(out_dir: Path, stage: str, profile: profiles.Profile, extra: dict) -> str:
    """Write the resolved config INI beside the outputs; returns its hash."""
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {"stage": stage, "profile": asdict(profile), "args": extra}
    h = config_hash(resolved)
    cp = configparser.ConfigParser()
    cp["run"] = {"stage": stage, "config_hash": h}
    cp["profile"] = {k: str(v) for k, v in asdict(profile).items()}
    cp["args"] = {k: str(v) for k, v in extra.items()}
    with open(out_dir / f"config.{stage}.ini", "w") as f:
        cp.write(f)
    return h


def _load_profile(args) -> profiles.Profile:
    overrides = {}
    for kv in args.set or []:
        k, v = kv.split("=", 1)
        field = profiles.Profile.__dataclass_fields__.get(k)
        if field is None:
            raise SystemExit(f"unknown profile field '{k}'")
        typ = field.type if isinstance(field.type, type) else type(getattr(profiles.PROFILES[args.profile], k))
        overrides[k] = typ(v) if typ is not bool else v.lower() in ("1", "true", "yes")
    return profiles.get_profile(args.profile, **overrides)


def _dataset_for(args, profile):
    ds = datagen.load_dataset(args.dataset)
    want = profile.name
    got = ds.meta.get("profile")
    if got is not None and got != want:
        raise SystemExit(f"dataset was generated under profile '{got}', run uses '{want}'")
    return ds


def _load_invdyn(path) -> models.InvDynModel:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        spec = models.InvDynSpec(**meta["spec"])
        params = {}
        for k in meta["param_names"]:
            from .autodiff import Tensor

            params[k] = Tensor(z[f"param/{k}"].copy(), requires_grad=False)
        norm = datagen.NormMap(lo=z["norm_lo"].copy(), hi=z["norm_hi"].copy())
    return models.InvDynModel(spec, params, norm)


def _save_invdyn(path, inv: models.InvDynModel, h: str):
    arrays = {f"param/{k}": p.data for k, p in inv.params.items()}
    arrays["norm_lo"] = inv.norm.lo
    arrays["norm_hi"] = inv.norm.hi
    meta = {
        "spec": {"hidden": inv.spec.hidden, "layers": inv.spec.layers},
        "param_names": list(inv.params.keys()),
        "config_hash": h,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


# ---------------------------------------------------------------------------
# Stages


def cmd_gen_data(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(out, "gen-data", p, {"kind": args.kind, "seed": args.seed, "n": args.n})
    geo, env = p.geometry(), p.env()
    if args.kind == "unconditional":
        ds = datagen.gen_unconditional(args.seed, args.n or p.uncond_unique, geo, env, p.horizon)
    elif args.kind == "conditional":
        ds = datagen.gen_conditional(
            args.seed, geo, env, p.horizon,
            n_total=args.n or p.cond_total,
            corner_unique=p.corner_unique,
            edge_walks=p.edge_walks,
        )
    elif args.kind == "decagon":
        dg = p.decagon_geometry()
        ds = datagen.gen_decagon(
            args.seed, args.n or 25, p.horizon,
            center=dg["center"], radius=dg["radius"], episode_steps=dg["episode_steps"],
            noise_std=datagen.NOISE_FRAC * p.step_max,
            bounds=geo.world_bounds,
        )
    else:
        raise SystemExit(f"unknown data kind '{args.kind}'")
    ds.meta["profile"] = p.name
    ds.meta["config_hash"] = h
    path = out / f"{args.kind}.stld"
    datagen.save_dataset(ds, path)
    print(f"wrote {path} ({len(ds)} trajectories)")
    return 0


def cmd_train(args):
    p = _load_profile(args)
    out = Path(args.out)
    steps = args.steps or p.train_steps
    h = freeze_config(
        out, "train", p,
        {"variant": args.variant, "dataset": args.dataset, "seed": args.seed, "steps": steps, "ker": args.ker},
    )
    ds = _dataset_for(args, p)
    if args.variant == "invdyn":
        inv = models.invdyn_train(ds, seed=args.seed, steps=p.invdyn_steps)
        _save_invdyn(out / "invdyn.npz", inv, h)
        print(f"wrote {out / 'invdyn.npz'}")
        return 0
    spec = _build_spec(p, args.variant, ker=args.ker)
    model = models.build(spec, seed=args.seed, dtype=np.dtype(p.train_dtype))
    cfg = train.TrainConfig(
        steps=steps, batch=p.batch, base_lr=p.base_lr, weight_decay=p.weight_decay,
        ema_rate=p.ema_rate, seed=args.seed, augment=(args.variant == "unet_aug"),
        ckpt_every=args.ckpt_every if args.ckpt_every is not None else p.ckpt_every,
    )
    hist = train.fit(model, ds, cfg, p.schedule(), out_dir=out, config_hash=h)
    last = hist["losses"][-1]
    print(f"trained {args.variant} for {steps} steps ({hist['seconds']:.0f}s), final loss {last[1]:.5f}")
    return 0


def _anchored_signatures(trajs_world, geo, start, goal, radius):
    """Signatures of trajectories whose endpoints sit on the anchors."""
    sigs = []
    for traj in trajs_world:
        try:
            sigs.append(metrics.signature(traj, geo, start, goal, radius))
        except ValueError:
            continue
    return sigs


def cmd_sample(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(out, "sample", p, {"ckpt": args.ckpt, "n": args.n, "seed": args.seed})
    ds = _dataset_for(args, p)
    model, _, step, meta = train.load_checkpoint(args.ckpt)
    geo, env = p.geometry(), p.env()
    start = np.array([0.0, 0.0])
    goal = np.array([geo.side, geo.side])
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x5A]))
    plans = planner.plan_batch(
        model.ema_view(), p.schedule(), ds.norm, start, rng, n=args.n,
        horizon=p.horizon, temperature=p.temperature, chunk=p.sample_chunk,
    )
    gen = datagen.Dataset(
        trajectories=[
            datagen.Trajectory(
                states=plans[i], actions=np.vstack([np.diff(plans[i], axis=0), np.zeros((1, 2))]),
                valid_length=p.horizon, tag=f"gen{i}",
            )
            for i in range(args.n)
        ],
        horizon=p.horizon, norm=ds.norm, seed=args.seed, kind=datagen.GENERATED,
        step_bound=ds.step_bound, meta={"profile": p.name, "config_hash": h, "ckpt_step": step},
    )
    datagen.save_dataset(gen, out / "generated.stld")
    train_sigs = {
        metrics.signature(t.valid_states(), geo, start, goal, env.goal_radius)
        for t in ds.trajectories
    }
    possible = set(metrics.optimal_signature_set(geo).values())
    sigs = _anchored_signatures(plans, geo, start, goal, env.goal_radius)
    cov = metrics.coverage(sigs, train_sigs, possible)
    novel = len((set(sigs) & possible) - train_sigs)
    tables.write_table(
        out / "coverage.tsv", "coverage",
        ["variant", "n", "anchored", "unique", "unique_novel", "coverage", "config"],
        [[meta["spec"]["kind"], args.n, len(sigs), len(set(sigs)), novel, f"{cov:.6f}", h]],
    )
    sig_rows = [[i, "".join("1" if b else "0" for b in s.bits)] for i, s in enumerate(sigs)]
    tables.write_table(out / "signatures.tsv", "signatures", ["index", "bits"], sig_rows)
    print(f"wrote {out}/generated.stld coverage={cov:.3f} novel={novel}")
    return 0


def _rollout_stage(p, model, invdyn, ds, n, replans, seed, variant):
    geo, env = p.geometry(), p.env()
    start = np.array([0.0, 0.0])
    goal = np.array([geo.side, geo.side])
    env_goal = gridworld.with_goal(env, goal)
    sched = p.schedule()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x12]))
    if replans <= 1:
        results = planner.rollout_whole_batch(
            env_goal, model, sched, ds.norm, invdyn, start, n, rng,
            horizon=p.horizon, temperature=p.temperature, goal_repeats=p.goal_repeats,
            offset=p.track_offset, chunk=p.sample_chunk,
        )
    else:
        results = planner.replan_batch(
            env_goal, model, sched, ds.norm, invdyn, replans, n, start, rng,
            horizon=p.horizon, temperature=p.temperature, offset=p.track_offset,
            chunk=p.sample_chunk,
        )
    train_sigs = {
        metrics.signature(t.valid_states(), geo, start, goal, env.goal_radius)
        for t in ds.trajectories
    }
    possible = set(metrics.optimal_signature_set(geo).values())
    rows, succ_sigs = [], []
    for i, r in enumerate(results):
        bits = "-"
        if r.success:
            sig = metrics.signature(r.states, geo, start, goal, env.goal_radius)
            succ_sigs.append(sig)
            bits = "".join("1" if b else "0" for b in sig.bits)
        rows.append([seed, variant, replans, r.status, bits, r.model_queries])
    stats = metrics.completion_stats([r.success for r in results])
    cov = metrics.coverage(succ_sigs, train_sigs, possible)
    novel = len((set(succ_sigs) & possible) - train_sigs)
    summary = {
        "variant": variant, "N": replans, "n": n, "completion": stats.rate,
        "sigma": stats.sigma, "coverage": cov, "unique_novel": novel,
        "unique": len(set(succ_sigs)), "queries": sum(r.model_queries for r in results),
    }
    return rows, summary


def cmd_rollout(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(
        out, "rollout", p,
        {"ckpt": args.ckpt, "invdyn": args.invdyn, "n": args.n, "replans": args.replans, "seed": args.seed},
    )
    ds = _dataset_for(args, p)
    model, _, _, meta = train.load_checkpoint(args.ckpt)
    invdyn = _load_invdyn(args.invdyn)
    variant = args.variant or meta["spec"]["kind"]
    rows, summary = _rollout_stage(
        p, model.ema_view(), invdyn, ds, args.n, args.replans, args.seed, variant
    )
    tables.write_table(
        out / "results.tsv", "rollouts",
        ["seed", "variant", "N", "status", "signature", "queries"], rows,
    )
    tables.write_table(
        out / "summary.tsv", "rollout-summary",
        list(summary.keys()) + ["config"], [list(summary.values()) + [h]],
    )
    print(json.dumps(summary))
    return 0


def cmd_eval_pairs(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(
        out, "eval-pairs", p,
        {"ckpt": args.ckpt, "invdyn": args.invdyn, "n_per_pair": args.n_per_pair, "seed": args.seed},
    )
    ds = _dataset_for(args, p)
    if "held_out_pairs" not in ds.meta:
        raise SystemExit("eval-pairs needs a conditional dataset (missing held_out_pairs)")
    geo, env = p.geometry(), p.env()
    edge_cells = ds.meta["edge_cells"]
    pairs = []
    for a, b in ds.meta["held_out_pairs"]:
        pa = np.array(edge_cells[a], dtype=float) * geo.spacing
        pb = np.array(edge_cells[b], dtype=float) * geo.spacing
        pairs.append((pa, pb))
    model, _, _, meta = train.load_checkpoint(args.ckpt)
    invdyn = _load_invdyn(args.invdyn)
    records = planner.evaluate_pairs(
        env, model.ema_view(), p.schedule(), ds.norm, invdyn, pairs, args.seed,
        n_per_pair=args.n_per_pair, horizon=p.horizon, temperature=p.temperature,
        goal_repeats=p.goal_repeats, offset=p.track_offset, chunk=p.sample_chunk,
    )
    variant = args.variant or meta["spec"]["kind"]
    rows = [
        [args.seed, variant, r["start"], r["goal"], r["n"], f"{r['completion']:.4f}",
         f"{r['sigma']:.4f}", r["unique_success"], r["queries"]]
        for r in records
    ]
    tables.write_table(
        out / "pairs.tsv", "pairs",
        ["seed", "variant", "start", "goal", "n", "completion", "sigma", "unique_success", "queries"],
        rows,
    )
    mean_c = float(np.mean([r["completion"] for r in records])) if records else 0.0
    print(json.dumps({"variant": variant, "pairs": len(records), "mean_completion": mean_c, "config": h}))
    return 0


def cmd_analyze_rf(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(out, "analyze-rf", p, {"ckpt": args.ckpt, "n": args.n, "seed": args.seed})
    model, _, _, meta = train.load_checkpoint(args.ckpt)
    gmap = analysis.grad_map(
        model.ema_view(), p.schedule(), n=args.n,
        rng=np.random.default_rng(np.random.SeedSequence([args.seed, 0xF])),
        horizon=p.horizon, temperature=p.temperature,
    )
    np.savetxt(out / "gradmap.txt", gmap.matrix)
    figures.heatmap(out / "gradmap.png", gmap.matrix)
    windows = analysis.rf_estimate(gmap, pct=args.pct)
    smooth = analysis.savgol(windows.astype(float), window=21, order=3)
    rows = [[t, int(windows[t]), f"{smooth[t]:.2f}"] for t in range(len(windows))]
    tables.write_table(out / "rf.tsv", "rf", ["step", "window", "smoothed"], rows)
    summary = {
        "variant": meta["spec"]["kind"], "max_window": int(windows.max()),
        "half_rf": model.half_rf, "config": h,
    }
    print(json.dumps(summary))
    return 0


def cmd_analyze_eq(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(out, "analyze-eq", p, {"ckpts": args.ckpt, "shift": args.shift})
    margin = p.eqnet_spec().half_receptive_field()
    rows = []
    for ck in args.ckpt:
        model, _, _, meta = train.load_checkpoint(ck)
        spec = meta["spec"]
        name = spec["kind"] + ("+posenc" if spec.get("posenc") else "")
        dev = max(
            analysis.equivariance_probe(
                model.ema_view(), patch_shift=args.shift, t=t, length=p.horizon,
                patch_width=8, margin=margin,
            )
            for t in (10, 50, 90)
        )
        rows.append([name, args.shift, f"{dev:.3e}", "pass" if dev <= 1e-9 else "fail"])
    tables.write_table(out / "equivariance.tsv", "equivariance", ["model", "shift", "deviation", "equivariant"], rows)
    for r in rows:
        print("\t".join(str(v) for v in r))
    return 0


def cmd_sweep(args):
    p = _load_profile(args)
    out = Path(args.out)
    h = freeze_config(
        out, "sweep", p,
        {"axis": args.axis, "seed": args.seed, "values": args.values, "ckpt": args.ckpt,
         "invdyn": args.invdyn, "dataset": args.dataset},
    )
    ds = _dataset_for(args, p) if args.dataset else None
    rows = []
    header = None
    if args.axis == "replans":
        header = ["N", "completion", "sigma", "coverage", "unique_novel", "queries", "status"]
        model, _, _, _ = train.load_checkpoint(args.ckpt)
        invdyn = _load_invdyn(args.invdyn)
        for v in args.values or ["1", "4", "16"]:
            N = int(v)
            try:
                _, s = _rollout_stage(p, model.ema_view(), invdyn, ds, args.n, N, args.seed + N, "replan")
                rows.append([N, f"{s['completion']:.4f}", f"{s['sigma']:.4f}",
                             f"{s['coverage']:.4f}", s["unique_novel"], s["queries"], "ok"])
            except Exception as e:  # cells keep going
                rows.append([N, "", "", "", "", "", f"failed:{type(e).__name__}"])
    elif args.axis == "ker":
        header = ["ker", "completion", "sigma", "unique", "unique_novel", "status"]
        invdyn = _load_invdyn(args.invdyn)
        for v in args.values or ["2", "5", "12"]:
            ker = int(v)
            try:
                cell = out / f"ker{ker}"
                spec = p.eqnet_spec(ker=ker)
                model = models.build(spec, seed=args.seed, dtype=np.dtype(p.train_dtype))
                cfg = train.TrainConfig(
                    steps=args.steps or p.train_steps, batch=p.batch, base_lr=p.base_lr,
                    weight_decay=p.weight_decay, ema_rate=p.ema_rate, seed=args.seed,
                    ckpt_every=0,
                )
                train.fit(model, ds, cfg, p.schedule(), out_dir=cell, config_hash=h)
                _, s = _rollout_stage(p, model.ema_view(), invdyn, ds, args.n, 1, args.seed, f"ker{ker}")
                rows.append([ker, f"{s['completion']:.4f}", f"{s['sigma']:.4f}",
                             s["unique"], s["unique_novel"], "ok"])
            except Exception as e:
                rows.append([ker, "", "", "", "", f"failed:{type(e).__name__}"])
    elif args.axis == "data":
        header = ["size", "novelty", "n_valid", "rf_max", "status"]
        dg = p.decagon_geometry()
        for v in args.values or ["25", "250", "2500"]:
            size = int(v)
            try:
                cell = out / f"data{size}"
                dds = datagen.gen_decagon(
                    args.seed, size, p.horizon, center=dg["center"], radius=dg["radius"],
                    episode_steps=dg["episode_steps"], noise_std=datagen.NOISE_FRAC * p.step_max,
                    bounds=p.geometry().world_bounds,
                )
                model = models.build(p.unet_spec(), seed=args.seed, dtype=np.dtype(p.train_dtype))
                cfg = train.TrainConfig(
                    steps=args.steps or p.train_steps, batch=p.batch, base_lr=p.base_lr,
                    weight_decay=p.weight_decay, ema_rate=p.ema_rate, seed=args.seed, ckpt_every=0,
                )
                train.fit(model, dds, cfg, p.schedule(), out_dir=cell, config_hash=h)
                rng = np.random.default_rng(np.random.SeedSequence([args.seed, size]))
                from .diffusion import sample as dsample

                z = dsample(model.ema_view(), p.schedule(), args.n, rng,
                            temperature=p.temperature, horizon=p.horizon, chunk=p.sample_chunk)
                world = datagen.denormalize(dds.norm, z)
                verts = np.asarray(dds.meta["vertices"])
                eps = dds.meta["keypoint_eps"]
                tuples = [metrics.decagon_keypoints(world[i].T, verts, eps) for i in range(args.n)]
                nov = metrics.novelty_rate(tuples, [tuple(t) for t in dds.meta["tours"]])
                gmap = analysis.grad_map(
                    model.ema_view(), p.schedule(), n=args.rf_n,
                    rng=np.random.default_rng(np.random.SeedSequence([args.seed, 0xF, size])),
                    horizon=p.horizon, temperature=p.temperature,
                )
                rf_max = int(analysis.rf_estimate(gmap).max())
                np.savetxt(cell / "gradmap.txt", gmap.matrix)
                rows.append([size, f"{nov.novelty:.4f}", nov.n_valid, rf_max, "ok"])
            except Exception as e:
                rows.append([size, "", "", "", f"failed:{type(e).__name__}"])
    elif args.axis == "checkpoints":
        header = ["step", "completion", "sigma", "coverage", "unique_novel", "status"]
        invdyn = _load_invdyn(args.invdyn)
        ckpts = sorted(Path(args.ckpt).glob("ckpt_*.npz"))
        for ck in ckpts:
            if ck.name == "ckpt_final.npz":
                continue
            try:
                model, _, step, _ = train.load_checkpoint(ck)
                _, s = _rollout_stage(p, model.ema_view(), invdyn, ds, args.n, 1, args.seed, f"step{step}")
                rows.append([step, f"{s['completion']:.4f}", f"{s['sigma']:.4f}",
                             f"{s['coverage']:.4f}", s["unique_novel"], "ok"])
            except Exception as e:
                rows.append([ck.name, "", "", "", "", f"failed:{type(e).__name__}"])
    else:
        raise SystemExit(f"unknown sweep axis '{args.axis}'")
    tables.write_table(out / "sweep.tsv", f"sweep-{args.axis}", header, rows)
    print(f"wrote {out}/sweep.tsv ({len(rows)} cells)")
    return 0


def cmd_plot(args):
    kind, header, rows = tables.read_table(args.table)
    out = Path(args.out)
    if args.kind == "coverage":
        if kind not in ("coverage", "sweep-replans"):
            raise SystemExit(f"table kind '{kind}' does not match plot kind coverage")
        idx = {h: i for i, h in enumerate(header)}
        series = {}
        for r in rows:
            label = r[idx.get("variant", 0)]
            series.setdefault(label, ([], []))
            series[label][0].append(float(r[idx["n"]]) if "n" in idx else len(series[label][0]))
            series[label][1].append(float(r[idx["coverage"]]))
        figures.line_plot(out, series, "samples", "coverage", logx=True)
    elif args.kind == "replan":
        if kind != "sweep-replans":
            raise SystemExit(f"table kind '{kind}' does not match plot kind replan")
        idx = {h: i for i, h in enumerate(header)}
        ok = [r for r in rows if r[idx["status"]] == "ok"]
        xs = [int(r[idx["N"]]) for r in ok]
        figures.line_plot(
            out,
            {"novel topologies": (xs, [int(r[idx["unique_novel"]]) for r in ok]),
             "queries/100": (xs, [int(r[idx["queries"]]) / 100 for r in ok])},
            "replans N", "diversity / budget", logx=True,
        )
    elif args.kind == "rf":
        if kind != "rf":
            raise SystemExit(f"table kind '{kind}' does not match plot kind rf")
        idx = {h: i for i, h in enumerate(header)}
        steps = [int(r[idx["step"]]) for r in rows]
        smooth = [float(r[idx["smoothed"]]) for r in rows]
        figures.line_plot(out, {"receptive field": (steps, smooth)}, "denoising step", "window size")
    elif args.kind == "gradmap":
        m = np.loadtxt(args.table)
        figures.heatmap(out, m)
    elif args.kind == "pairs":
        if kind != "pairs":
            raise SystemExit(f"table kind '{kind}' does not match plot kind pairs")
        idx = {h: i for i, h in enumerate(header)}
        by_variant = {}
        for r in rows:
            by_variant.setdefault(r[idx["variant"]], []).append(float(r[idx["completion"]]))
        labels = sorted(by_variant)
        vals = [float(np.mean(by_variant[k])) for k in labels]
        figures.bar_plot(out, labels, vals, ylabel="completion")
    elif args.kind == "overlay":
        ds = datagen.load_dataset(args.table)
        p = _load_profile(args)
        trajs = [t.valid_states() for t in ds.trajectories[: args.n]]
        figures.trajectory_overlay(out, trajs, p.geometry())
    elif args.kind == "data-scaling":
        if kind != "sweep-data":
            raise SystemExit(f"table kind '{kind}' does not match plot kind data-scaling")
        idx = {h: i for i, h in enumerate(header)}
        ok = [r for r in rows if r[idx["status"]] == "ok"]
        xs = [int(r[idx["size"]]) for r in ok]
        ys = [float(r[idx["novelty"]]) for r in ok]
        figures.line_plot(out, {"unet": (xs, ys)}, "training samples", "novel generation rate", logx=True)
    else:
        raise SystemExit(f"unknown plot kind '{args.kind}'")
    print(f"wrote {out}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="stitchlab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(sp, out=True):
        sp.add_argument("--profile", default="desk", choices=sorted(profiles.PROFILES))
        sp.add_argument("--set", action="append", metavar="FIELD=VALUE", help="profile field override")
        sp.add_argument("--seed", type=int, default=0)
        if out:
            sp.add_argument("--out", required=True)

    sp = sub.add_parser("gen-data", help="generate a demonstration dataset")
    common(sp)
    sp.add_argument("--kind", required=True, choices=["unconditional", "conditional", "decagon"])
    sp.add_argument("--n", type=int, default=None)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("train", help="train a denoiser or the inverse dynamics model")
    common(sp)
    sp.add_argument("--variant", required=True, choices=list(VARIANTS) + ["invdyn"])
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--ker", type=int, default=None)
    sp.add_argument("--ckpt-every", type=int, default=None)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("sample", help="whole-sequence generations + coverage")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--n", type=int, default=800)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("rollout", help="plan + execute through the environment")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--invdyn", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--replans", type=int, default=1)
    sp.add_argument("--variant", default=None)
    sp.set_defaults(fn=cmd_rollout)

    sp = sub.add_parser("eval-pairs", help="goal-conditioned held-out pair evaluation")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--invdyn", required=True)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--n-per-pair", type=int, default=500)
    sp.add_argument("--variant", default=None)
    sp.set_defaults(fn=cmd_eval_pairs)

    sp = sub.add_parser("sweep", help="run a sweep axis into one table")
    common(sp)
    sp.add_argument("--axis", required=True, choices=["replans", "ker", "data", "checkpoints"])
    sp.add_argument("--values", nargs="*", default=None)
    sp.add_argument("--ckpt", default=None)
    sp.add_argument("--invdyn", default=None)
    sp.add_argument("--dataset", default=None)
    sp.add_argument("--n", type=int, default=800)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--rf-n", type=int, default=25)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("analyze-rf", help="gradient map + receptive-field estimate")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--n", type=int, default=50)
    sp.add_argument("--pct", type=float, default=75.0)
    sp.set_defaults(fn=cmd_analyze_rf)

    sp = sub.add_parser("analyze-eq", help="shift-equivariance probe")
    common(sp)
    sp.add_argument("--ckpt", nargs="+", required=True)
    sp.add_argument("--shift", type=int, default=40)
    sp.set_defaults(fn=cmd_analyze_eq)

    sp = sub.add_parser("plot", help="emit figures from result tables")
    common(sp)
    sp.add_argument("--kind", required=True,
                    choices=["coverage", "replan", "rf", "gradmap", "pairs", "overlay", "data-scaling"])
    sp.add_argument("--table", required=True)
    sp.add_argument("--n", type=int, default=50)
    sp.set_defaults(fn=cmd_plot)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
