"""Drive the full file-based pipeline through ``diarkit.cli.main``."""

import json

from diarkit.cli import main

# synthetic PLDA scores span a wider range than the default +-2 grid
THRESHOLDS = "-20:20:1"
ENERGIES = "0.1,0.2,0.3,0.5,0.7,0.9"


def run(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"diarkit {' '.join(map(str, argv))} exited with {code}"


def full_pipeline(tmp, seed=0, reseg=True):
    """synth -> plda train -> adapt -> sweep -> adi train -> diarize -> score.

    Returns the sweep summary plus eval DERs per mode.
    """
    c = tmp / "corpus"
    run("synth", "--out-dir", c, "--domains", 3, "--recordings-per-domain", 6, "--dim", 10,
        "--duration", 60, "--min-domain-noise", 0.5, "--max-domain-noise", 2.0, "--seed", seed)
    dev, ev = c / "dev", c / "eval"
    run("plda", "train", "--segments", dev / "segments.txt", "--ref", dev / "ref.rttm", "--out", tmp / "plda.json")
    run("plda", "adapt", "--plda", tmp / "plda.json", "--embeddings", dev / "segments.txt", ev / "segments.txt",
        "--out", tmp / "plda_adapted.json")
    sweep = ["sweep", "--dev-segments", dev / "segments.txt", "--dev-ref", dev / "ref.rttm", "--uem", dev / "all.uem",
             "--plda", tmp / "plda_adapted.json", "--domains", dev / "domains.csv",
             f"--grid-thresholds={THRESHOLDS}", f"--grid-energies={ENERGIES}", "--out-profiles", tmp / "profiles.json"]
    run(*sweep, *(["--reseg"] if reseg else []))
    run("adi", "train", "--embeddings", dev / "utterances.txt", "--domains", dev / "domains.csv",
        "--out", tmp / "adi.json")
    summary = json.loads((tmp / "profiles.summary.json").read_text())
    eval_der = {}
    variants = [("first_pass", "profiles", [])] + ([("reseg", "profiles.reseg", ["--reseg"])] if reseg else [])
    for variant, stem, flags in variants:
        for mode in ("B", "M1", "M2"):
            prof = tmp / (f"{stem}.m1.json" if mode == "M1" else f"{stem}.json")
            hyp = tmp / f"hyp_{variant}_{mode}.rttm"
            run("diarize", "--segments", ev / "segments.txt", "--plda", tmp / "plda_adapted.json",
                "--profiles", prof, "--adi-model", tmp / "adi.json", "--mode", mode, "--out", hyp, *flags)
            out = tmp / f"score_{variant}_{mode}.json"
            run("score", "--ref", ev / "ref.rttm", "--hyp", hyp, "--uem", ev / "all.uem", "--out", out)
            eval_der[(variant, mode)] = json.loads(out.read_text())["der"]
    return summary, eval_der
