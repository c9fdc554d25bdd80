"""Command-line front end: ``diarkit <command> ...``.

Commands: synth, plda {train,adapt}, adi {train,predict,bench}, sweep,
diarize, score. Exit codes: 0 success, 2 validation/config error, 1 internal
error. Every output file gets a ``<output>.manifest.json`` next to it.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adi import AdiModel, TrialConfig, adi_benchmark, adi_fit, adi_predict_many
from .errors import DiarkitError, NumericalError
from .formats import (
    Annotation,
    ProfileSet,
    SegmentTable,
    UtteranceTable,
    parse_embeddings,
    parse_rttm,
    parse_uem,
    read_domain_map,
    read_profiles,
    write_domain_map,
    write_embeddings,
    write_profiles,
    write_rttm,
    write_uem,
)
from .metrics import score_report
from .plda import AdaptationConfig, PldaModel, plda_adapt, plda_train_em, prepare
from .reseg import VbConfig
from .sweep import BASELINE_ENERGY, SweepGrid, diarize_recording, sweep_all
from .synth import SPLITS, SynthConfig, generate_corpus
from .util import atomic_write, file_digest, parallel_map

logger = logging.getLogger("diarkit")


class UsageError(DiarkitError, ValueError):
    pass


# ------------------------------------------------------------------ helpers


def _read(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p.read_text(encoding="utf-8")


def _manifest(out_path, command, args, inputs):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    doc = {
        "command": command,
        "config": json.loads(json.dumps(config, default=str)),
        "inputs": {str(p): file_digest(p) for p in inputs if p and Path(p).is_file()},
        "tool_version": f"diarkit {__version__}",
    }
    atomic_write(f"{out_path}.manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_grid(spec: str) -> tuple:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    spec = spec.strip()
    if ":" in spec:
        try:
            start, stop, step = (float(x) for x in spec.split(":"))
        except ValueError:
            raise UsageError(f"bad grid range {spec!r}; expected start:stop:step") from None
        if step <= 0:
            raise UsageError("grid step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    try:
        return tuple(float(x) for x in spec.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad grid list {spec!r}") from None


def _load_segments(paths) -> dict:
    tables = [parse_embeddings(_read(p), form="segment") for p in paths]
    return SegmentTable.concat(tables).by_recording()


def _load_plda(path) -> PldaModel:
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg})") from None
    return PldaModel.from_json(doc)


def _vb_config(args):
    if not args.reseg:
        return None
    return VbConfig(args.loop_prob, args.ll_scale, args.vb_iters, args.elbo_tol, args.min_speaker_posterior)


def _add_vb_flags(p):
    p.add_argument("--reseg", action="store_true", help="refine AHC output with VB-HMM resegmentation")
    p.add_argument("--loop-prob", type=float, default=0.9)
    p.add_argument("--ll-scale", type=float, default=0.3)
    p.add_argument("--vb-iters", type=int, default=10)
    p.add_argument("--elbo-tol", type=float, default=1e-4)
    p.add_argument("--min-speaker-posterior", type=float, default=0.05)


def _segment_speakers(segs: dict, refs: dict):
    """Label each segment with the reference speaker overlapping it most."""
    X, labels = [], []
    for rec, seg in segs.items():
        ann = refs.get(rec)
        if ann is None:
            continue
        for a, b, v in zip(seg.onsets, seg.offsets, seg.vectors):
            best, best_ov = None, 0.0
            for t in ann.turns:
                ov = min(b, t.offset) - max(a, t.onset)
                if ov > best_ov:
                    best, best_ov = t.speaker, ov
            if best is not None:
                X.append(v)
                labels.append(f"{rec}/{best}")
    return np.array(X), labels


# ----------------------------------------------------------------- commands


def cmd_synth(args):
    cfg = SynthConfig(
        n_domains=args.domains,
        recordings_per_domain=args.recordings_per_domain,
        speakers_per_recording=(args.min_speakers, args.max_speakers),
        dim=args.dim,
        domain_spread=args.domain_spread,
        between_scale=args.between_scale,
        within_scale=args.within_scale,
        turn_duration=(args.min_turn, args.max_turn),
        recording_duration=args.duration,
        subsegment_hop=args.hop,
        seed=args.seed,
        domain_noise_range=(args.min_domain_noise, args.max_domain_noise),
        overlap_fraction=args.overlap_fraction,
        n_recordings=args.n_recordings,
    )
    cfg.validate()
    out = Path(args.out_dir)
    written = []
    for split in SPLITS:
        corpus = generate_corpus(cfg, split)
        d = out / split
        files = {
            "utterances.txt": write_embeddings(corpus.utterances),
            "segments.txt": write_embeddings(corpus.segments),
            "ref.rttm": write_rttm(corpus.refs),
            "all.uem": write_uem(corpus.uem),
            "domains.csv": write_domain_map(corpus.domains),
            "truth.csv": corpus.truth_csv(),
        }
        for name, text in files.items():
            atomic_write(d / name, text)
            written.append(d / name)
    atomic_write(out / "synth_config.json", json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n")
    _manifest(out / "synth", "synth", args, [])
    print(f"wrote {len(written)} files under {out}")
    return 0


def cmd_plda_train(args):
    segs = _load_segments(args.segments)
    refs = parse_rttm(_read(args.ref))
    X, labels = _segment_speakers(segs, refs)
    if len(X) == 0:
        raise UsageError("no segment overlaps a reference speaker turn")
    center = X.mean(axis=0)
    pp = {"center": center.tolist(), "length_norm": not args.no_length_norm}
    probe = PldaModel(np.zeros(X.shape[1]), np.eye(X.shape[1]), np.eye(X.shape[1]), preprocess=pp)
    model = plda_train_em(prepare(probe, X), labels, iters=args.iters)
    model = PldaModel(model.mu, model.sigma_b, model.sigma_w, model.metadata, pp)
    atomic_write(args.out, model.dumps())
    _manifest(args.out, "plda train", args, [*args.segments, args.ref])
    print(f"trained PLDA on {len(X)} segments / {len(set(labels))} speakers -> {args.out}")
    return 0


def cmd_plda_adapt(args):
    model = _load_plda(args.plda)
    vecs = [parse_embeddings(_read(path), form=args.form).vectors for path in args.embeddings]
    X = prepare(model, np.vstack(vecs))
    adapted = plda_adapt(model, X, AdaptationConfig(args.within_share, 1.0 - args.within_share))
    atomic_write(args.out, adapted.dumps())
    _manifest(args.out, "plda adapt", args, [args.plda, *args.embeddings])
    print(f"adapted PLDA on {len(X)} pooled vectors -> {args.out}")
    return 0


def _load_labeled_utterances(args) -> UtteranceTable:
    table = parse_embeddings(_read(args.embeddings), form="utterance")
    if getattr(args, "domains", None):
        dmap = read_domain_map(_read(args.domains))
        missing = [u for u in table.ids if u not in dmap]
        if missing:
            raise UsageError(f"no domain for utterance(s): {', '.join(missing[:5])}")
        table = UtteranceTable(table.ids, table.vectors, [dmap[u] for u in table.ids])
    return table


def cmd_adi(args):
    if args.adi_cmd == "train":
        table = _load_labeled_utterances(args)
        model = adi_fit(table, k=args.k)
        atomic_write(args.out, model.dumps())
        _manifest(args.out, "adi train", args, [args.embeddings, args.domains])
        print(f"ADI model with {len(table)} utterances -> {args.out}")
        return 0
    if args.adi_cmd == "predict":
        model = AdiModel.from_json(json.loads(_read(args.model)))
        table = parse_embeddings(_read(args.embeddings), form="utterance")
        preds = adi_predict_many(model, table.vectors) if len(table) else []
        lines = ["utterance_id,predicted_domain,similarity\n"]
        lines += [f"{u},{d},{s!r}\n" for u, (d, s) in zip(table.ids, preds)]
        atomic_write(args.out, "".join(lines))
        _manifest(args.out, "adi predict", args, [args.model, args.embeddings])
        return 0
    # bench
    table = _load_labeled_utterances(args)
    cfg = TrialConfig(args.train_size, args.trials, args.seed, args.require_all_domains, args.k)
    with parallel_map() as pmap:
        report = adi_benchmark(table, cfg, map_fn=pmap)
    out = Path(args.out)
    atomic_write(out, json.dumps(report.to_json(), indent=2) + "\n")
    csv_path = out.with_suffix(".per_domain.csv")
    atomic_write(csv_path, report.per_domain_csv())
    _manifest(out, "adi bench", args, [args.embeddings, args.domains])
    print(f"mean accuracy {100 * report.mean_accuracy:.2f}% over {cfg.n_trials} trials")
    return 0


def cmd_sweep(args):
    segs = _load_segments(args.dev_segments)
    refs = parse_rttm(_read(args.dev_ref))
    uem = parse_uem(_read(args.uem)) if args.uem else None
    model = _load_plda(args.plda)
    domains = read_domain_map(_read(args.domains))
    segs = {r: s for r, s in segs.items() if r in refs}
    grid = SweepGrid(
        _parse_grid(args.grid_thresholds) if args.grid_thresholds else SweepGrid().thresholds,
        _parse_grid(args.grid_energies) if args.grid_energies else SweepGrid().energies,
    )
    vb = _vb_config(args)
    out = Path(args.out_profiles)
    with parallel_map() as pmap:
        first = sweep_all(segs, domains, refs, uem, model, grid, None, map_fn=pmap)
        # first-pass and resegmented variants are tuned independently
        second = sweep_all(segs, domains, refs, uem, model, grid, vb, map_fn=pmap) if vb else None
    m1_path = Path(args.out_profiles_m1) if args.out_profiles_m1 else out.with_suffix(".m1.json")
    grid_path = Path(args.out_grid) if args.out_grid else out.with_suffix(".grid.csv")
    summary = {"first_pass": _write_sweep(first, out, m1_path, grid_path)}
    if second is not None:
        summary["reseg"] = _write_sweep(second, out.with_suffix(".reseg.json"), out.with_suffix(".reseg.m1.json"),
                                        out.with_suffix(".reseg.grid.csv"))
    atomic_write(out.with_suffix(".summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _manifest(out, "sweep", args, [*args.dev_segments, args.dev_ref, args.uem, args.plda, args.domains])
    for variant, block in summary.items():
        for k, v in block["pooled_der"].items():
            print(f"{variant:10s} {k:12s} DER {100 * v:.2f}%")
    return 0


def _write_sweep(res, prof_path, m1_path, grid_path):
    atomic_write(prof_path, write_profiles(res.profiles()))
    atomic_write(m1_path, write_profiles(res.m1_profile_set()))
    atomic_write(grid_path, res.grid_csv())
    return {
        "per_domain": {d: {"threshold": s.profile.ahc_threshold, "energy": s.profile.pca_energy, "der": s.der}
                       for d, s in sorted(res.per_domain.items())},
        "pooled_der": {
            "B": res.baseline_der,
            "global_best": res.global_der,
            "M1": res.pooled(res.m1_profiles),
            "M2": res.pooled({d: s.profile for d, s in res.per_domain.items()}),
        },
    }


def _resolve_profile(mode, domain, profiles: ProfileSet):
    prof = profiles.profiles.get(domain) if domain is not None else None
    if mode == "B" or prof is None:
        fb = profiles.fallback
        if fb is None:
            raise UsageError("profiles file has no fallback profile")
        return fb.ahc_threshold, BASELINE_ENERGY if mode != "M2" else fb.pca_energy, "fallback"
    if mode == "M1":
        return prof.ahc_threshold, BASELINE_ENERGY, domain
    return prof.ahc_threshold, prof.pca_energy, domain


def cmd_diarize(args):
    if args.mode not in ("B", "M1", "M2"):
        raise UsageError(f"unknown mode {args.mode!r}")
    segs = _load_segments(args.segments)
    model = _load_plda(args.plda)
    profiles = read_profiles(_read(args.profiles))
    explicit = read_domain_map(_read(args.domains)) if args.domains else {}
    adi = AdiModel.from_json(json.loads(_read(args.adi_model))) if args.adi_model else None
    vb = _vb_config(args)

    recs = sorted(segs)
    resolved = {}
    for rec in recs:
        if rec in explicit:
            resolved[rec] = (explicit[rec], "explicit", None)
        elif adi is not None:
            dom, sim = adi_predict_many(adi, segs[rec].vectors.mean(axis=0))[0]
            resolved[rec] = (dom, "adi", sim)
        else:
            logger.warning("%s: no domain available, using fallback profile", rec)
            resolved[rec] = (None, "none", None)

    def run(rec):
        dom = resolved[rec][0]
        if args.mode != "B" and dom is not None and dom not in profiles.profiles:
            logger.warning("%s: no profile for domain %r, using fallback", rec, dom)
        threshold, energy, used = _resolve_profile(args.mode, dom, profiles)
        return diarize_recording(segs[rec], model, threshold, energy, vb), threshold, energy, used

    with parallel_map() as pmap:
        results = list(pmap(run, recs))
    anns, diag = {}, {}
    for rec, (res, threshold, energy, used) in zip(recs, results):
        anns[rec] = res.annotation
        dom, source, sim = resolved[rec]
        diag[rec] = {
            "domain": dom,
            "domain_source": source,
            "adi_similarity": sim,
            "profile": used,
            "ahc_threshold": threshold,
            "pca_energy": energy,
            "n_clusters": res.n_clusters,
            "elbo_trace": res.elbo_trace if vb is not None else None,
        }
    if args.rttm_recordings:
        # recordings named in a reference file but without segments -> empty hypotheses
        for rec in parse_rttm(_read(args.rttm_recordings)):
            if rec not in anns:
                logger.warning("%s: no segments, empty hypothesis", rec)
                anns[rec] = Annotation(rec, ())
    atomic_write(args.out, write_rttm(anns))
    diag_path = args.diagnostics or f"{args.out}.diagnostics.json"
    atomic_write(diag_path, json.dumps({"mode": args.mode, "reseg": bool(args.reseg), "recordings": diag},
                                       indent=2, sort_keys=True) + "\n")
    _manifest(args.out, "diarize", args, [*args.segments, args.plda, args.profiles, args.domains, args.adi_model])
    print(f"diarized {len(recs)} recordings (mode {args.mode}{', VB-HMM' if vb else ''}) -> {args.out}")
    return 0


def cmd_score(args):
    refs = parse_rttm(_read(args.ref))
    hyps = parse_rttm(_read(args.hyp))
    extra = sorted(set(hyps) - set(refs))
    if extra:
        raise UsageError(f"hypothesis recordings absent from reference: {', '.join(extra[:5])}")
    uem = None
    if args.uem:
        uem = parse_uem(_read(args.uem))
    else:
        logger.warning("no UEM given, scoring over the full reference extent")
    report = score_report(refs, hyps, uem, collar=args.collar)
    if args.out:
        out = Path(args.out)
        atomic_write(out, json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
        atomic_write(out.with_suffix(".csv"), report.to_csv())
        _manifest(out, "score", args, [args.ref, args.hyp, args.uem])
    print(f"DER {100 * report.der:.2f}% JER {100 * report.jer:.2f}%")
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diarkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"diarkit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dev/eval corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--domains", type=int, default=3)
    p.add_argument("--recordings-per-domain", type=int, default=8)
    p.add_argument("--n-recordings", type=int, default=None, help="total per split, round-robin over domains")
    p.add_argument("--min-speakers", type=int, default=2)
    p.add_argument("--max-speakers", type=int, default=4)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--domain-spread", type=float, default=3.0)
    p.add_argument("--between-scale", type=float, default=1.0)
    p.add_argument("--within-scale", type=float, default=0.4)
    p.add_argument("--min-domain-noise", type=float, default=1.0)
    p.add_argument("--max-domain-noise", type=float, default=1.0)
    p.add_argument("--min-turn", type=float, default=2.0)
    p.add_argument("--max-turn", type=float, default=8.0)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--hop", type=float, default=1.0)
    p.add_argument("--overlap-fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    plda = sub.add_parser("plda", help="train or adapt a PLDA model").add_subparsers(dest="plda_cmd", required=True)
    p = plda.add_parser("train")
    p.add_argument("--segments", nargs="+", required=True)
    p.add_argument("--ref", required=True, help="RTTM giving the speaker of each segment")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--no-length-norm", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plda_train)
    p = plda.add_parser("adapt")
    p.add_argument("--plda", required=True)
    p.add_argument("--embeddings", nargs="+", required=True, help="pooled embeddings from all domains")
    p.add_argument("--form", choices=("segment", "utterance"), default="segment")
    p.add_argument("--within-share", type=float, default=0.75)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plda_adapt)

    adi = sub.add_parser("adi", help="acoustic domain identification").add_subparsers(dest="adi_cmd", required=True)
    for name in ("train", "predict", "bench"):
        p = adi.add_parser(name)
        p.add_argument("--embeddings", required=True)
        p.add_argument("--out", required=True)
        if name == "predict":
            p.add_argument("--model", required=True)
        else:
            p.add_argument("--domains", help="recording_id,domain CSV (else labels come from the file)")
            p.add_argument("--k", type=int, default=1)
        if name == "bench":
            p.add_argument("--trials", type=int, default=1000)
            p.add_argument("--train-size", type=int, default=200)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--require-all-domains", action="store_true")
        p.set_defaults(func=cmd_adi)

    p = sub.add_parser("sweep", help="per-domain grid search of AHC threshold and PCA energy")
    p.add_argument("--dev-segments", nargs="+", required=True)
    p.add_argument("--dev-ref", required=True)
    p.add_argument("--uem")
    p.add_argument("--plda", required=True)
    p.add_argument("--domains", required=True, help="true dev domains, recording_id,domain CSV")
    p.add_argument("--grid-thresholds", help="start:stop:step or comma list (default -2:2:0.1)")
    p.add_argument("--grid-energies", help="start:stop:step or comma list (default 0.10..0.95)")
    p.add_argument("--out-profiles", required=True)
    p.add_argument("--out-profiles-m1")
    p.add_argument("--out-grid")
    _add_vb_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diarize", help="domain-dependent diarization")
    p.add_argument("--segments", nargs="+", required=True)
    p.add_argument("--plda", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--adi-model")
    p.add_argument("--domains", help="explicit recording_id,domain CSV (wins over ADI)")
    p.add_argument("--mode", default="M2")
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics")
    p.add_argument("--rttm-recordings", help="RTTM listing recordings to emit even without segments")
    _add_vb_flags(p)
    p.set_defaults(func=cmd_diarize)

    p = sub.add_parser("score", help="DER/JER scoring")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--uem")
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.command
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"diarkit {command}: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"diarkit {command}: numerical error: {exc}", file=sys.stderr)
        return 1
    except (DiarkitError, ValueError) as exc:
        print(f"diarkit {command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"diarkit {command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
