"""End-to-end experiment runner: phantom -> degrade -> train -> infer ->
eval -> compare, recorded by a run manifest.

All randomness descends from one root seed; each stage draws from its own
child stream (see STAGE_STREAMS).  Two runs with the same configuration
produce byte-identical report JSON.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .bbdm import BbdmConfig, bbdm_infer, schedule, train_bbdm
from .datasetio import (
    collect_eval_pairs,
    degrade_dataset,
    iter_lr_images,
    load_training_pairs,
    save_patient_records,
)
from .flimb import read_flimb, write_flimb
from .metrics import MetricConstants, MetricReport, evaluate, radial_power_spectrum
from .phantom import PhantomSpec, generate_phantom, split_patients
from .plots import (
    save_history_figure,
    save_metric_report_figure,
    save_spectrum_figure,
    save_ttest_figure,
)
from .stats import paired_ttest
from .training import TrainConfig, bilinear_baseline, child_seed, infer, train

# Child-stream indices under the root seed, one per pipeline stage.
STAGE_STREAMS = {"phantom": 100, "split": 101, "train": 102, "infer": 103}

METRIC_DIRECTIONS = {
    "psnr": "higher_better",
    "ssim": "higher_better",
    "mse": "lower_better",
    "perceptual": "lower_better",
}


@dataclass
class ExperimentConfig:
    """One reproducible experiment, normally loaded from a JSON document."""

    seed: int = 0
    k: int = 2
    model: str = "cgan"  # cgan | bbdm
    out_dir: str = ""  # may instead be given on the command line
    train_patients: int = 3
    patch_px: int = 64
    clip_q: float = 99.5
    ssim_mode: str = "global"
    plots: bool = True
    phantom: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    bbdm: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not 2 <= self.k <= 7:
            raise ValueError(f"k out of supported range 2..7: {self.k}")
        if self.model not in ("cgan", "bbdm"):
            raise ValueError(f"model must be 'cgan' or 'bbdm', got {self.model!r}")
        if self.patch_px % 32 != 0:
            raise ValueError("patch_px must be divisible by 32 (discriminator halvings)")
        spec = self.phantom_spec()
        spec.validate()
        if not 0 < self.train_patients < spec.n_patients:
            raise ValueError(
                f"train_patients must be in (0, {spec.n_patients}), got {self.train_patients}"
            )
        held_out = (spec.n_patients - self.train_patients) * spec.fovs_per_patient
        if held_out < 2:
            raise ValueError(
                f"only {held_out} held-out field(s) of view; the paired "
                "comparison needs at least 2"
            )

    def phantom_spec(self) -> PhantomSpec:
        spec = dict(self.phantom)
        if "lifetime_range" in spec:
            spec["lifetime_range"] = tuple(spec["lifetime_range"])
        if "structure_scales" in spec:
            spec["structure_scales"] = tuple(spec["structure_scales"])
        return PhantomSpec(**spec)

    def train_config(self) -> TrainConfig:
        return TrainConfig(k=self.k, seed=child_seed(self.seed, STAGE_STREAMS["train"]), **self.train)

    def bbdm_config(self) -> BbdmConfig:
        return BbdmConfig(k=self.k, seed=child_seed(self.seed, STAGE_STREAMS["train"]), **self.bbdm)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        doc = json.loads(Path(path).read_text())
        config = cls(**doc)
        config.validate()
        return config


def compare_reports(a: MetricReport, b: MetricReport) -> dict:
    """Per-channel, per-metric paired t-tests between two reports.

    ``a`` is the candidate and ``b`` the reference; verdicts state whether
    ``a`` is significantly better under each metric's direction.
    """
    ids_a = [p.pair_id for p in a.pairs]
    ids_b = [p.pair_id for p in b.pairs]
    if set(ids_a) != set(ids_b):
        raise ValueError("reports cover different pair ids; cannot pair samples")
    b_by_id = {p.pair_id: p for p in b.pairs}
    channels = list(a.pairs[0].channels)
    tests: dict[str, dict[str, dict]] = {}
    for ch in channels:
        tests[ch] = {}
        for metric in ("mse", "psnr", "ssim"):
            va = [p.channels[ch][metric] for p in a.pairs]
            vb = [b_by_id[p.pair_id].channels[ch][metric] for p in a.pairs]
            result = paired_ttest(va, vb, METRIC_DIRECTIONS[metric])
            tests[ch][metric] = result.to_dict()
    doc = {"n_pairs": len(ids_a), "tests": tests}
    pa = [p.perceptual for p in a.pairs]
    pb = [b_by_id[p.pair_id].perceptual for p in a.pairs]
    if all(v is not None for v in pa) and all(v is not None for v in pb):
        doc["perceptual"] = paired_ttest(pa, pb, METRIC_DIRECTIONS["perceptual"]).to_dict()
    return doc


@dataclass
class RunManifest:
    """Every artifact a pipeline run produced, plus provenance."""

    config: dict
    code_version: str
    stage_seeds: dict[str, int]
    started: str
    finished: str = ""
    artifacts: dict[str, object] = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def run_pipeline(config: ExperimentConfig, out_dir: str | Path) -> RunManifest:
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage_seeds = {name: child_seed(config.seed, idx) for name, idx in STAGE_STREAMS.items()}
    manifest = RunManifest(
        config=asdict(config),
        code_version=__version__,
        stage_seeds=stage_seeds,
        started=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
    art = manifest.artifacts

    # Stage 1: phantoms.
    spec = config.phantom_spec()
    records = generate_phantom(spec, stage_seeds["phantom"])
    phantom_dir = out / "phantom"
    save_patient_records(records, phantom_dir)
    art["phantom_dir"] = str(phantom_dir)

    # Stage 2: patient-wise split.
    split = split_patients(
        [r.patient_id for r in records], config.train_patients, stage_seeds["split"]
    )
    art["split"] = {"train": sorted(split.train_ids), "test": sorted(split.test_ids)}

    # Stage 3: degradation + preprocessing.
    degraded_dir = out / "degraded"
    stats_paths = degrade_dataset(phantom_dir, degraded_dir, config.k, config.clip_q)
    art["degraded_dir"] = str(degraded_dir)
    art["stats"] = [str(p) for p in stats_paths]

    # Stage 4: training on the train patients only.
    pairs = load_training_pairs(degraded_dir, config.k, config.patch_px, set(split.train_ids))
    model_dir = out / "model"
    if config.model == "cgan":
        tc = config.train_config()
        generator, _disc, history = train(tc, pairs, out_dir=model_dir, stats_ref=str(degraded_dir))
        art["checkpoint"] = str(model_dir / "generator.ckpt")
        art["history_csv"] = str(model_dir / "history.csv")
        history_series = {
            "g_loss": history.g_loss,
            "d_loss": history.d_loss,
            "l1_term": history.l1_term,
        }
    else:
        bc = config.bbdm_config()
        denoiser, bb_history = train_bbdm(bc, pairs, out_dir=model_dir, stats_ref=str(degraded_dir))
        art["checkpoint"] = str(model_dir / "denoiser.ckpt")
        art["history_csv"] = str(model_dir / "bbdm_history.csv")
        history_series = {"noise_mse": bb_history.noise_mse}

    # Stage 5: inference on held-out patients (model + interpolation baseline).
    pred_dir = out / "predictions"
    baseline_dir = out / "baseline"
    test_entries = iter_lr_images(degraded_dir, set(split.test_ids))
    sample_steps = None
    if config.model == "bbdm":
        bc = config.bbdm_config()
        sched = schedule(bc.T, bc.s)
        sample_steps = bc.sample_steps or None
    for pair_id, lr_path, lr_image in test_entries:
        hr_path = Path(str(lr_path).replace(".lr.flimb", ".hr.flimb"))
        target_hw = read_flimb(hr_path).data.shape[-2:]
        if config.model == "cgan":
            pred = infer(generator, lr_image, target_hw)
        else:
            pred = bbdm_infer(
                denoiser, lr_image, target_hw, sched,
                seed=stage_seeds["infer"], steps=sample_steps,
            )
        base = bilinear_baseline(lr_image, target_hw)
        for root, image in ((pred_dir, pred), (baseline_dir, base)):
            dest = root / f"{pair_id}.flimb"
            dest.parent.mkdir(parents=True, exist_ok=True)
            write_flimb(image, dest)
    art["predictions_dir"] = str(pred_dir)
    art["baseline_dir"] = str(baseline_dir)

    # Stage 6: evaluation of the model and the baseline against HR targets.
    constants = MetricConstants()
    preds, targets, ids = collect_eval_pairs(pred_dir, degraded_dir)
    report = evaluate(preds, targets, constants, config.ssim_mode, pair_ids=ids)
    report_path = out / "report.json"
    report.save(report_path)
    art["report"] = str(report_path)

    base_preds, base_targets, base_ids = collect_eval_pairs(baseline_dir, degraded_dir)
    baseline_report = evaluate(base_preds, base_targets, constants, config.ssim_mode, pair_ids=base_ids)
    baseline_report_path = out / "report_baseline.json"
    baseline_report.save(baseline_report_path)
    art["baseline_report"] = str(baseline_report_path)

    # Stage 7: model vs. baseline significance tests.
    ttests = compare_reports(report, baseline_report)
    ttests_path = out / "ttests.json"
    ttests_path.write_text(json.dumps(ttests, indent=2, sort_keys=True) + "\n")
    art["ttests"] = str(ttests_path)

    # Stage 8: figures alongside the delimited outputs.
    if config.plots:
        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        figures = []
        save_metric_report_figure(report, fig_dir / "report.png")
        figures.append(str(fig_dir / "report.png"))
        save_metric_report_figure(baseline_report, fig_dir / "report_baseline.png")
        figures.append(str(fig_dir / "report_baseline.png"))
        save_ttest_figure(ttests["tests"], fig_dir / "ttests.png")
        figures.append(str(fig_dir / "ttests.png"))
        steps_axis = list(range(1, 1 + max(len(v) for v in history_series.values())))
        save_history_figure(steps_axis, history_series, fig_dir / "history.png")
        figures.append(str(fig_dir / "history.png"))
        spectra = {
            "baseline": radial_power_spectrum(base_preds[0].channel("LT2")),
            "model": radial_power_spectrum(preds[0].channel("LT2")),
            "target": radial_power_spectrum(targets[0].channel("LT2")),
        }
        save_spectrum_figure(spectra, fig_dir / "spectrum_LT2.png", title=f"LT2 spectra ({ids[0]})")
        figures.append(str(fig_dir / "spectrum_LT2.png"))
        art["figures"] = figures

    manifest.finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest.save(out / "manifest.json")
    art["manifest"] = str(out / "manifest.json")
    return manifest
