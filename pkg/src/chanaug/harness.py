"""Evaluation metrics, array-configuration sweeps and frontend timing.

Word error rates are not computed; enhancement quality is scored with
SI-SDR against the clean reverberant image at the beamformer's reference
microphone.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .augment import ChannelAugmentPolicy, channel_augment
from .mvdr import mvdr_enhance
from .sf import default_directions, sf_enhance, sf_grad_mse, sf_init_das, sf_init_random
from .simroom import PRESETS, ArrayGeometry, MixtureBundle, array_subset, oracle_masks
from .spectral import StftConfig, istft, stft

__all__ = [
    "SI_SDR_CAP",
    "si_sdr",
    "snr_db",
    "segmental_snr",
    "EvalRecord",
    "evaluate_bundle",
    "sweep",
    "records_to_csv",
    "summarize",
    "bench_frontend",
    "bench_to_csv",
]

SI_SDR_CAP = 100.0


def si_sdr(estimate, reference, cap: float = SI_SDR_CAP) -> float:
    """Scale-invariant SDR in dB, capped at ``cap``.

    Works for real waveforms and for complex spectra (flattened); for complex
    inputs the projection coefficient is complex.
    """
    est = np.ravel(np.asarray(estimate))
    ref = np.ravel(np.asarray(reference))
    if est.shape != ref.shape:
        raise ValueError(f"estimate and reference differ in size: {est.shape} vs {ref.shape}")
    ref_energy = np.vdot(ref, ref).real
    if ref_energy == 0:
        raise ValueError("reference signal has zero energy")
    target = (np.vdot(ref, est) / ref_energy) * ref
    resid = est - target
    t, r = np.vdot(target, target).real, np.vdot(resid, resid).real
    if r == 0 or t >= r * 10 ** (cap / 10):
        return cap
    if t == 0:
        return -cap
    return float(10 * np.log10(t / r))


snr_db = si_sdr


def segmental_snr(estimate, reference, frame: int = 256, lo: float = -10.0, hi: float = 35.0) -> float:
    """Plain (not scale-invariant) SNR averaged over frames, clamped per frame."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    n = (len(ref) // frame) * frame
    if n == 0:
        raise ValueError("signal shorter than one frame")
    e = (ref[:n] - est[:n]).reshape(-1, frame)
    r = ref[:n].reshape(-1, frame)
    num = np.sum(r ** 2, axis=1)
    den = np.sum(e ** 2, axis=1)
    with np.errstate(divide="ignore"):
        seg = 10 * np.log10(np.maximum(num, 1e-20) / np.maximum(den, 1e-20))
    return float(np.mean(np.clip(seg, lo, hi)))


@dataclass
class EvalRecord:
    """One sweep row.

    ``input_snr_db`` is the SI-SDR of the unprocessed reference microphone,
    ``si_sdr_db`` that of the enhanced output and ``output_snr_db`` its
    segmental SNR.
    """

    bundle: int
    config_name: str
    frontend: str
    augment: str
    channels: int
    reference: int
    input_snr_db: float
    output_snr_db: float
    si_sdr_db: float
    seed: int
    wall_time_ms: float
    error: str = ""

    @property
    def improvement_db(self) -> float:
        return self.si_sdr_db - self.input_snr_db


CSV_COLUMNS = [f.name for f in fields(EvalRecord)]


def _sf_waveform(X, kept_geometry, cfg, fs, n_directions, ref_local):
    W = sf_init_das(kept_geometry, default_directions(n_directions), cfg, fs)
    power = sf_enhance(X, W)
    # SF yields power only; borrow the phase of the reference microphone
    phase = np.exp(1j * np.angle(X[:, :, ref_local]))
    return np.sqrt(power) * phase


def evaluate_bundle(bundle: MixtureBundle, frontend: str, kept, *, geometry: ArrayGeometry | None = None,
                    cfg: StftConfig = StftConfig(), policy: ChannelAugmentPolicy | None = None,
                    rng: np.random.Generator | None = None, masks=None, eps_rel: float = 1e-6,
                    mask_floor: float | None = None, n_directions: int = 11):
    """Run one frontend on the ``kept`` channels of ``bundle``.

    Returns ``(enhanced_waveform, reference_channel, channels_used)`` where
    the reference is an index into the full bundle and ``channels_used``
    counts the channels left after augmentation.
    """
    kept = list(kept)
    used = len(kept)
    fs = bundle.mixture.sample_rate
    n = bundle.mixture.num_samples
    X = stft(bundle.mixture, cfg).data[:, :, kept]
    if frontend == "mvdr":
        if masks is None:
            masks = oracle_masks(bundle, cfg)
        ms, mn = (m[:, :, kept] for m in masks)
        if policy is not None:
            X, z = channel_augment(X, policy, rng, frontend="mvdr")
            ms, mn = ms[:, :, list(z.kept)], mn[:, :, list(z.kept)]
            kept = [kept[i] for i in z.kept]
            used = len(kept)
        res = mvdr_enhance(X, ms, mn, eps_rel=eps_rel, mask_floor=mask_floor)
        ref = kept[res.coeffs.reference]
        enhanced = res.enhanced
    elif frontend == "sf":
        if geometry is None:
            raise ValueError("the SF frontend needs the array geometry")
        if policy is not None:
            X, info = channel_augment(X, policy, rng, frontend="sf")
            if policy.mode == "freq_independent_slice":
                kept = [kept[i] for i in info.kept]
            if policy.mode != "freq_dependent":
                used = len(info.kept)
        local = len(kept) // 2
        enhanced = _sf_waveform(X, geometry.subset(kept), cfg, fs, n_directions, local)
        ref = kept[local]
    else:
        raise ValueError(f"unknown frontend {frontend!r}")
    y = istft(enhanced[:, :, None], cfg, length=n, sample_rate=fs).samples[0]
    return y, ref, used


def _row_rng(seed, bundle_idx, policy_idx):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, bundle_idx, policy_idx])))


def sweep(bundles, frontends=("mvdr",), presets=("2", "4", "4S3", "16"), policies=(None,), *,
          geometry: ArrayGeometry | None = None, cfg: StftConfig = StftConfig(), seed: int = 0,
          preset_table: dict | None = None, eps_rel: float = 1e-6, mask_floor: float | None = None,
          n_directions: int = 11, workers: int = 1) -> list:
    """Evaluate every (bundle, frontend, preset, policy) combination.

    A failing row is kept with its ``error`` field set and NaN metrics.
    Output is ordered by frontend, then preset (table order), then policy,
    then bundle, independent of ``workers``.
    """
    table = PRESETS if preset_table is None else preset_table
    order = {name: i for i, name in enumerate(table)}
    presets = sorted(presets, key=lambda p: order.get(p, len(order)))
    masks = {}

    def get_masks(bi):
        if bi not in masks:
            masks[bi] = oracle_masks(bundles[bi], cfg)
        return masks[bi]

    jobs = [(fe, p, pi, pol, bi)
            for fe in sorted(frontends) for p in presets
            for pi, pol in enumerate(policies) for bi in range(len(bundles))]

    def run(job):
        fe, p, pi, pol, bi = job
        b = bundles[bi]
        row_seed = int(b.meta.get("seed", seed))
        label = "none" if pol is None else pol.summary()
        t0 = time.perf_counter()
        try:
            kept = array_subset(b.num_channels, p, table)
            y, ref, used = evaluate_bundle(
                b, fe, kept, geometry=geometry, cfg=cfg, policy=pol, rng=_row_rng(seed, bi, pi),
                masks=get_masks(bi) if fe == "mvdr" else None, eps_rel=eps_rel,
                mask_floor=mask_floor, n_directions=n_directions)
            clean = b.clean_image.samples[ref]
            return EvalRecord(
                bi, p, fe, label, used, ref,
                si_sdr(b.mixture.samples[ref], clean), segmental_snr(y, b.gains[ref] * clean),
                si_sdr(y, clean),
                row_seed, 1e3 * (time.perf_counter() - t0))
        except Exception as exc:  # recorded, not raised
            nan = float("nan")
            return EvalRecord(bi, p, fe, label, 0, -1, nan, nan, nan, row_seed,
                              1e3 * (time.perf_counter() - t0), f"{type(exc).__name__}: {exc}")

    if frontends and "mvdr" in frontends:
        for bi in range(len(bundles)):
            get_masks(bi)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(run, jobs))
    return [run(j) for j in jobs]


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.6f}"
    return str(v)


def records_to_csv(records, timing: bool = False) -> str:
    """CSV text (header + rows). Wall time is left out unless ``timing``,
    so that seeded sweeps produce byte-identical files."""
    cols = [c for c in CSV_COLUMNS if timing or c != "wall_time_ms"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def summarize(records) -> list:
    """Mean metrics per (frontend, preset, augment), error rows excluded."""
    groups = {}
    for r in records:
        if r.error:
            continue
        groups.setdefault((r.frontend, r.config_name, r.augment), []).append(r)
    out = []
    for (fe, p, aug), rs in groups.items():
        out.append(dict(frontend=fe, config_name=p, augment=aug, n=len(rs),
                        mean_input_snr_db=float(np.mean([r.input_snr_db for r in rs])),
                        mean_si_sdr_db=float(np.mean([r.si_sdr_db for r in rs])),
                        mean_improvement_db=float(np.mean([r.improvement_db for r in rs]))))
    return out


def bench_frontend(frontend: str, channel_counts, reps: int = 10, T: int = 500, F: int = 257,
                   D: int = 11, seed: int = 0) -> list:
    """Median / 90th-percentile wall time of one frontend call per channel count.

    MVDR: mask averaging, both PSDs, reference selection, inversion and
    filtering. SF: forward pass, pooling and the MSE gradient. One warm-up
    call per channel count is excluded.
    """
    if reps < 5:
        raise ValueError("reps must be >= 5")
    if frontend not in ("mvdr", "sf"):
        raise ValueError(f"unknown frontend {frontend!r}")
    rng = np.random.default_rng(seed)
    rows = []
    for C in channel_counts:
        X = (rng.standard_normal((T, F, C)) + 1j * rng.standard_normal((T, F, C))) / np.sqrt(2)
        if frontend == "mvdr":
            ms = rng.uniform(0.05, 0.95, (T, F, C))

            def call():
                mvdr_enhance(X, ms)
        else:
            W = sf_init_random(F, D, C, rng)
            target = rng.uniform(0, 1, (T, F))

            def call():
                sf_grad_mse(X, W, target)
        call()
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            call()
            times.append(1e3 * (time.perf_counter() - t0))
        rows.append(dict(C=int(C), median_ms=float(np.median(times)),
                         p90_ms=float(np.percentile(times, 90))))
    return rows


def bench_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["C", "median_ms", "p90_ms"])
    for r in rows:
        w.writerow([r["C"], f"{r['median_ms']:.4f}", f"{r['p90_ms']:.4f}"])
    return buf.getvalue()
