"""``chanaug`` command-line tool.

Subcommands: ``simulate``, ``augment``, ``enhance``, ``eval`` and ``bench``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error
(unreadable or inconsistent inputs, numerically degenerate data), 4 internal
error. Failures print one JSON object on stderr::

    {"error": "data", "exit_code": 3, "message": "..."}

Every successful run also writes a provenance sidecar (JSON, no timestamps)
next to its main output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import ca_freq_dependent, ca_sample_subset, ca_slice, ca_zero, spec_augment
from .config import ConfigError, RunConfig, config_hash, load_config
from .features import cmn, log_mel, mel_filterbank
from .harness import bench_frontend, bench_to_csv, records_to_csv, summarize, sweep
from .io import (TensorFileError, load_sf_weights, read_tensor, read_wav, write_json, write_tensor,
                 write_text, write_wav)
from .mvdr import mvdr_enhance, noise_floor_masks
from .rng import BIT_GENERATOR, make_rng
from .sf import default_directions, sf_enhance, sf_init_das
from .simroom import oracle_masks, simulate_dataset, ula
from .spectral import ComplexSpectrum, Waveform, highpass, istft, stft

EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 2, 3, 4


class DataError(ValueError):
    """Input data that cannot be processed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("config", EXIT_CONFIG, f"{self.prog}: {message}")


def _fail(kind, code, message):
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": message}) + "\n")
    raise SystemExit(code)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(path, command, cfg: RunConfig | None, seed, inputs=(), outputs=(), extra=None):
    record = {
        "tool": "chanaug",
        "version": __version__,
        "command": command,
        "config_sha256": None if cfg is None else config_hash(cfg),
        "seed": seed,
        "bit_generator": BIT_GENERATOR,
        "inputs": {Path(p).name: _sha256(p) for p in inputs if p is not None},
        "outputs": sorted(outputs),
    }
    if extra:
        record.update(extra)
    write_json(path, record)


def _sidecar(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".provenance.json")


def _config(args) -> RunConfig:
    return RunConfig() if args.config is None else load_config(args.config)


def _seed(args, cfg) -> int:
    return cfg.seed if getattr(args, "seed", None) is None else args.seed


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


# ---------------------------------------------------------------- simulate

def cmd_simulate(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    n = cfg.n_bundles if args.n_bundles is None else args.n_bundles
    out = Path(args.out)
    bundles = simulate_dataset(cfg.scene, n, seed)
    written = []
    for b in bundles:
        name = f"bundle_{b.meta['index']:04d}"
        d = out / name
        write_wav(d / "mixture.wav", b.mixture)
        write_wav(d / "clean.wav", b.clean_image)
        write_wav(d / "noise.wav", b.noise_image)
        ms, mn = oracle_masks(b, cfg.stft)
        write_tensor(d / "speech_mask.mctf", ms.astype(np.float32))
        write_tensor(d / "noise_mask.mctf", mn.astype(np.float32))
        write_json(d / "bundle.json", _jsonable(
            dict(gains=b.gains, snr_db=b.snr_db, num_channels=b.num_channels,
                 num_samples=b.mixture.num_samples, sample_rate=b.mixture.sample_rate, meta=b.meta)))
        written += [f"{name}/{f}" for f in ("mixture.wav", "clean.wav", "noise.wav",
                                              "speech_mask.mctf", "noise_mask.mctf", "bundle.json")]
    write_json(out / "manifest.json", {"bundles": [f"bundle_{i:04d}" for i in range(n)],
                                       "seed": seed, "scene": _jsonable(cfg.scene.__dict__)})
    _provenance(out / "provenance.json", "simulate", cfg, seed, [args.config],
                written + ["manifest.json"], {"n_bundles": n})


# ----------------------------------------------------------------- augment

def _augment_spectrum(data, policy, rng):
    """Channel augmentation of a (T, F, C) array; returns (data, emitted mask)."""
    if policy.mode == "freq_dependent":
        aug, mask = ca_freq_dependent(data, policy.p_keep, rng)
        return aug, mask.astype(np.float32)
    z = ca_sample_subset(data.shape[-1], policy, rng)
    aug = ca_zero(data, z) if policy.mode == "freq_independent_zero" else ca_slice(data, z)
    return aug, z.mask().astype(np.float32)


def cmd_augment(args):
    cfg = _config(args)
    seed = _seed(args, cfg)
    rng = make_rng(seed)
    src, out = Path(args.inp), Path(args.out)
    mask = None
    if src.suffix.lower() == ".wav":
        policy = cfg.channel_policy(seed)
        if policy is None:
            raise ConfigError("augmenting a WAV file needs an augment.channel policy")
        wave = read_wav(src)
        if policy.mode == "freq_independent_slice":
            z = ca_sample_subset(wave.num_channels, policy, rng)
            result = Waveform(wave.samples[list(z.kept)], wave.sample_rate)
            mask = z.mask().astype(np.float32)
        else:
            X = stft(wave, cfg.stft)
            aug, mask = _augment_spectrum(X.data, policy, rng)
            result = istft(aug, cfg.stft, length=wave.num_samples, sample_rate=wave.sample_rate)
        write_wav(out, result)
    elif src.suffix.lower() == ".mctf":
        t = read_tensor(src)
        if t.ndim == 2:
            policy = cfg.spec_policy(seed)
            if policy is None:
                raise ConfigError("augmenting a feature tensor needs an augment.spec policy")
            if np.iscomplexobj(t):
                raise DataError("feature tensors must be real")
            result, fr, tr = spec_augment(t, policy, rng, return_regions=True)
            mask = np.ones(t.shape, dtype=np.float32)
            mask[result == 0] = 0
            for s, w in fr:
                mask[:, s:s + w] = 0
            for s, w in tr:
                mask[s:s + w, :] = 0
        elif t.ndim == 3:
            policy = cfg.channel_policy(seed)
            if policy is None:
                raise ConfigError("augmenting a spectrum tensor needs an augment.channel policy")
            result, mask = _augment_spectrum(t, policy, rng)
        else:
            raise DataError(f"expected a (T, bands) feature or (T, F, C) spectrum tensor, got {t.shape}")
        write_tensor(out, result, t.dtype)
    else:
        raise DataError(f"unsupported input type {src.suffix!r}; use .wav or .mctf")
    outputs = [out.name]
    if args.emit_mask:
        write_tensor(args.emit_mask, mask, np.float32)
        outputs.append(Path(args.emit_mask).name)
    _provenance(_sidecar(out), "augment", cfg, seed, [args.config, src], outputs)


# ----------------------------------------------------------------- enhance

def _load_masks(path, T, F, C):
    m = read_tensor(path)
    if np.iscomplexobj(m):
        raise DataError("masks must be real")
    m = m.astype(np.float64)
    if m.ndim in (2, 3) and m.shape[:2] == (T, F) and (m.ndim == 2 or m.shape[2] == C):
        return m, None
    if m.ndim in (3, 4) and m.shape[0] == 2 and m.shape[1:3] == (T, F):
        return m[0], m[1]
    raise DataError(f"mask shape {m.shape} does not fit a spectrum with T={T}, F={F}, C={C}")


def cmd_enhance(args):
    cfg = _config(args)
    fe = args.frontend or cfg.frontend["name"]
    wave = read_wav(args.inp)
    if wave.sample_rate != cfg.sample_rate:
        raise DataError(f"{args.inp} is sampled at {wave.sample_rate} Hz, config says {cfg.sample_rate}")
    if cfg.highpass_hz:
        wave = highpass(wave, cfg.highpass_hz)
    X = stft(wave, cfg.stft)
    T, F, C = X.data.shape
    if fe == "mvdr":
        if args.masks:
            ms, mn = _load_masks(args.masks, T, F, C)
            floor = cfg.frontend["mask_floor"]
        else:
            ms, mn = noise_floor_masks(X), None
            floor = 1e-4 if cfg.frontend["mask_floor"] is None else cfg.frontend["mask_floor"]
        ref = cfg.frontend["reference"]
        if ref is not None and ref >= C:
            raise ConfigError(f"reference channel {ref} out of range for {C} channels")
        res = mvdr_enhance(X.data, ms, mn, reference=ref, eps_rel=cfg.frontend["eps_rel"],
                           mask_floor=floor)
        enhanced, power = res.enhanced, res.power
    else:
        if args.weights:
            W = load_sf_weights(args.weights)
            if W.shape[0] != F or W.shape[2] != C:
                raise DataError(f"SF weights {W.shape} do not fit F={F}, C={C}")
        else:
            geom = ula(C, cfg.scene.spacing_m)
            W = sf_init_das(geom, default_directions(cfg.frontend["n_directions"]), cfg.stft,
                            cfg.sample_rate, cfg.frontend["c_sound"])
        power = sf_enhance(X.data, W)
        enhanced = np.sqrt(power) * np.exp(1j * np.angle(X.data[:, :, C // 2]))
    y = istft(ComplexSpectrum(enhanced[:, :, None], cfg.stft, cfg.sample_rate),
              length=wave.num_samples)
    write_wav(args.out, y)
    outputs = [Path(args.out).name]
    if args.features:
        fc = cfg.features
        fb = mel_filterbank(fc["n_mels"], cfg.stft, cfg.sample_rate, fc["f_low"], fc["f_high"])
        write_tensor(args.features, cmn(log_mel(power, fb, fc["floor"])), np.float64)
        outputs.append(Path(args.features).name)
    _provenance(_sidecar(args.out), "enhance", cfg, cfg.seed,
                [args.config, args.inp, args.masks, args.weights], outputs, {"frontend": fe})


# -------------------------------------------------------------------- eval

def cmd_eval(args):
    cfg = load_config(args.manifest)
    seed = _seed(args, cfg)
    sw = cfg.sweep
    bundles = simulate_dataset(cfg.scene, sw["n_bundles"], seed)
    records = sweep(bundles, sw["frontends"], sw["presets"], cfg.sweep_policies(),
                    geometry=cfg.scene.geometry(), cfg=cfg.stft, seed=seed, preset_table=cfg.presets,
                    eps_rel=cfg.frontend["eps_rel"], mask_floor=cfg.frontend["mask_floor"],
                    n_directions=cfg.frontend["n_directions"], workers=args.workers or sw["workers"])
    out = Path(args.out)
    write_text(out, records_to_csv(records, timing=sw["timing"]))
    summary = out.with_name(out.stem + ".summary.json")
    write_json(summary, summarize(records))
    _provenance(_sidecar(out), "eval", cfg, seed, [args.manifest], [out.name, summary.name],
                {"n_rows": len(records), "n_errors": sum(1 for r in records if r.error)})


# ------------------------------------------------------------------- bench

def cmd_bench(args):
    cfg = _config(args)
    try:
        channels = [int(c) for c in args.channels.split(",") if c.strip()]
    except ValueError:
        raise ConfigError(f"--channels must be a comma-separated list of integers, got {args.channels!r}")
    if not channels or min(channels) < 1:
        raise ConfigError("--channels needs at least one positive channel count")
    seed = _seed(args, cfg)
    rows = bench_frontend(args.frontend, channels, reps=args.reps, T=args.frames, F=args.bins, seed=seed)
    write_text(args.out, bench_to_csv(rows))
    _provenance(_sidecar(args.out), "bench", cfg, seed, [args.config], [Path(args.out).name],
                {"frontend": args.frontend, "reps": args.reps, "frames": args.frames, "bins": args.bins})


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chanaug", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"chanaug {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate mixtures and oracle masks")
    s.add_argument("--config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-bundles", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("augment", help="apply ChannelAugment (WAV / spectrum) or SpecAugment (features)")
    s.add_argument("--config", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--emit-mask")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("enhance", help="run a frontend on a multi-channel WAV")
    s.add_argument("--frontend", choices=["sf", "mvdr"])
    s.add_argument("--config")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--masks", help="speech mask tensor (T, F[, C]) or stacked speech/noise (2, T, F[, C])")
    s.add_argument("--weights", help="SF weight tensor (F, D, C + 1)")
    s.add_argument("--out", required=True)
    s.add_argument("--features", help="write log-Mel features here")
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("eval", help="simulate a dataset and sweep array configurations")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="time a frontend against channel count")
    s.add_argument("--frontend", choices=["sf", "mvdr"], required=True)
    s.add_argument("--channels", default="2,4,8,16")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--frames", type=int, default=500)
    s.add_argument("--bins", type=int, default=257)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except ConfigError as exc:
        return _report("config", EXIT_CONFIG, exc)
    except (DataError, TensorFileError, FileNotFoundError, ValueError, KeyError,
            np.linalg.LinAlgError) as exc:
        return _report("data", EXIT_DATA, exc)
    except OSError as exc:
        return _report("data", EXIT_DATA, exc)
    except Exception as exc:  # anything else is a bug
        return _report("internal", EXIT_INTERNAL, exc)
    return 0


def _report(kind, code, exc):
    msg = f"{type(exc).__name__}: {exc}"
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": msg}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
