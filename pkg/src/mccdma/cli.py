"""Command line front end: ``mccdma {sweep,codes-report,presets,selftest}``.

Configs are flat ``key = value`` text files whose keys are the
:class:`~mccdma.simulate.SimConfig` field names. A CSV written by ``sweep``
is itself a valid config: its ``#`` manifest lines carry the fully
resolved settings, so ``sweep --config old.csv`` repeats the run exactly.
"""

import argparse
import datetime
import logging
import math
import os
import sys
from dataclasses import dataclass, fields

from . import __version__
from .exceptions import (
    BadValueError,
    IoFailureError,
    MCCDMAError,
    MissingRequiredError,
    UnknownKeyError,
)
from .simulate import THREADS_ENV, SimConfig, run_sweep

log = logging.getLogger("mccdma")

CSV_HEADER = "snr_db,mse_ls,mse_mmse,mse_theory,ber,ser,bit_errors,bits,symbol_errors,symbols,trials"
REQUIRED = ("n_t", "n_r", "pg")
META_KEYS = ("tool_version", "timestamp", "preset", "threads")

# Only the antenna counts and processing gain come from the published
# experiments; everything else is a SimConfig default stamped into the manifest.
PRESETS = {
    "fig4": {"n_t": 2, "n_r": 2, "pg": 32},
    "fig5": {"n_t": 2, "n_r": 2, "pg": 16},
    "fig6": {"n_t": 2, "n_r": 3, "pg": 32},
    "fig7": {"n_t": 2, "n_r": 4, "pg": 32},
    "fig8": {"n_t": 2, "n_r": 2, "pg": 32, "estimator": "mmse"},
}

_CHOICES = {
    "scheme": ("bpsk", "qpsk"),
    "profile": ("flat", "exponential"),
    "pilot": ("block", "comb"),
    "estimator": ("ls", "mmse", "both"),
    "interp": ("linear", "dft"),
    "combiner": ("mmse", "zf", "egc"),
    "csi": ("estimated", "perfect"),
}
_POSITIVE_INTS = ("n_t", "n_r", "pg", "users", "n_sc", "n_fft", "n_pilots", "n_train",
                  "n_data", "blocks", "kept_taps", "num_taps", "trials")


def parse_snr_grid(text):
    """``start:step:stop`` (inclusive) or a comma-separated list of dB values."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("expected start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError("need step > 0 and stop >= start")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + i * step for i in range(n))
    values = tuple(float(p) for p in text.split(",") if p.strip())
    if not values:
        raise ValueError("empty SNR list")
    return values


def _parse_value(key, raw):
    raw = raw.strip()
    try:
        if key in _POSITIVE_INTS:
            value = int(raw)
            if value < 1:
                raise ValueError
            return value
        if key == "cp_len":
            value = int(raw)
            if value < 0:
                raise ValueError
            return value
        if key == "master_seed":
            value = int(raw)
            if not 0 <= value < 2**64:
                raise ValueError
            return value
        if key == "decay":
            value = float(raw)
            if not value > 0:
                raise ValueError
            return value
        if key == "spatial_correlation":
            value = float(raw)
            if not 0.0 <= value < 1.0:
                raise ValueError
            return value
        if key == "normalized_mse":
            lowered = raw.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return lowered in ("true", "1", "yes")
        if key == "snr_grid_db":
            return parse_snr_grid(raw)
        if key in _CHOICES:
            if raw.lower() not in _CHOICES[key]:
                raise ValueError
            return raw.lower()
    except ValueError:
        raise BadValueError(f"bad value {raw!r} for {key}: accepted {_accepted(key)}") from None
    raise UnknownKeyError(f"unknown config key {key!r}")


def _accepted(key):
    if key in _POSITIVE_INTS:
        return "integer >= 1"
    if key == "cp_len":
        return "integer >= 0 and < n_fft"
    if key == "master_seed":
        return "integer in [0, 2^64)"
    if key == "decay":
        return "real > 0"
    if key == "spatial_correlation":
        return "real in [0, 1)"
    if key == "normalized_mse":
        return "true/false"
    if key == "snr_grid_db":
        return "start:step:stop or comma list (dB)"
    return "|".join(_CHOICES.get(key, ()))


_FIELDS = tuple(f.name for f in fields(SimConfig))


def read_key_values(path):
    """Read a flat config file (or an emitted CSV's manifest) into a dict."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoFailureError(f"cannot read config {path}: {exc}") from exc
    is_run_file = CSV_HEADER in (line.strip() for line in lines)
    pairs = {}
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if is_run_file:
            if not line.startswith("#"):
                continue
            line = line[1:].strip()
        elif not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise BadValueError(f"{path}:{number}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if is_run_file and key in META_KEYS:
            if key == "preset":
                pairs.setdefault("__preset__", value.strip())
            continue
        pairs[key] = value.strip()
    return pairs


def parse_config(path=None, overrides=None, preset=None):
    """Resolve a :class:`SimConfig` from a preset, a config file and overrides.

    Later sources win: preset, then file, then ``overrides`` (a mapping of
    key to string or already-typed value).
    """
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise BadValueError(f"unknown preset {preset!r}: accepted {', '.join(PRESETS)}")
        values.update(PRESETS[preset])
    if path is not None:
        for key, raw in read_key_values(path).items():
            if key == "__preset__":
                continue
            if key not in _FIELDS:
                raise UnknownKeyError(f"unknown config key {key!r} in {path}")
            values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in _FIELDS:
            raise UnknownKeyError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise MissingRequiredError(f"missing required key(s): {', '.join(missing)}")
    try:
        return SimConfig(**values).resolved()
    except ValueError as exc:
        key = next((f for f in _FIELDS if str(exc).startswith(f)), "config")
        raise BadValueError(f"bad value for {key}: {exc}") from exc


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(float(v)) for v in value)
    return str(value)


@dataclass
class RunManifest:
    config: SimConfig
    tool_version: str = __version__
    timestamp: str = ""
    preset: str = ""

    @property
    def master_seed(self):
        return self.config.master_seed

    def lines(self):
        out = [
            f"tool_version={self.tool_version}",
            f"timestamp={self.timestamp}",
            f"preset={self.preset}",
        ]
        out += [f"{name}={format_value(getattr(self.config, name))}" for name in _FIELDS]
        return out


def _csv_float(x):
    return repr(float(x))


def format_csv(records, manifest):
    if not records:
        raise ValueError("no records to write")
    rows = ["# " + line for line in manifest.lines()]
    rows.append(CSV_HEADER)
    for r in records:
        rows.append(
            ",".join(
                [
                    _csv_float(r.snr_db),
                    _csv_float(r.mse_ls),
                    _csv_float(r.mse_mmse),
                    _csv_float(r.mse_theory),
                    _csv_float(r.ber),
                    _csv_float(r.ser),
                    str(r.bit_errors),
                    str(r.bits),
                    str(r.symbol_errors),
                    str(r.symbols),
                    str(r.trials),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def write_csv(records, manifest, path):
    """Write manifest comments, the fixed header and one row per SNR point."""
    text = format_csv(records, manifest)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def _overrides_from_args(args):
    overrides = {}
    for item in args.set or ():
        if "=" not in item:
            raise BadValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    simple = {
        "master_seed": args.seed,
        "trials": args.trials,
        "snr_grid_db": args.snr,
        "estimator": args.estimator,
        "pilot": args.pilot,
        "n_pilots": args.np,
        "interp": args.interp,
    }
    for key, value in simple.items():
        if value is not None:
            overrides[key] = str(value)
    return overrides


def _cmd_sweep(args):
    cfg = parse_config(args.config, _overrides_from_args(args), args.preset)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    preset = args.preset or ""
    if not preset and args.config:
        preset = read_key_values(args.config).get("__preset__", "")
    manifest = RunManifest(
        cfg,
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        preset=preset,
    )
    records = run_sweep(
        cfg,
        threads=threads,
        progress=lambda r: print(
            f"snr={r.snr_db:g} dB  mse_ls={r.mse_ls:.4g}  mse_mmse={r.mse_mmse:.4g}  "
            f"ber={r.ber:.4g}  ser={r.ser:.4g}",
            file=sys.stderr,
        ),
    )
    if args.out:
        write_csv(records, manifest, args.out)
    else:
        sys.stdout.write(format_csv(records, manifest))
    return 0


def _cmd_codes_report(args):
    from .codes import code_report

    print(code_report())
    return 0


def _cmd_presets(args):
    for name in PRESETS:
        cfg = parse_config(preset=name)
        summary = ", ".join(f"{k}={v}" for k, v in PRESETS[name].items())
        print(f"[{name}] {summary}")
        for key in _FIELDS:
            print(f"  {key}={format_value(getattr(cfg, key))}")
    return 0


def _cmd_selftest(args):
    from .selftest import run_selftest

    return 0 if run_selftest(stream=sys.stdout) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="mccdma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sweep = sub.add_parser("sweep", help="run an SNR sweep and write CSV")
    sweep.add_argument("--preset", choices=sorted(PRESETS))
    sweep.add_argument("--config", help="key=value file or a previous run's CSV")
    sweep.add_argument("--seed", type=int, help="master seed (u64)")
    sweep.add_argument("--out", help="output CSV path (default: stdout)")
    sweep.add_argument("--trials", type=int)
    sweep.add_argument("--snr", help="start:step:stop in dB, or a comma list")
    sweep.add_argument("--estimator", choices=("ls", "mmse", "both"))
    sweep.add_argument("--pilot", choices=("block", "comb"))
    sweep.add_argument("--np", type=int, help="comb pilot count")
    sweep.add_argument("--interp", choices=("linear", "dft"))
    sweep.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    sweep.set_defaults(func=_cmd_sweep)

    codes = sub.add_parser("codes-report", help="print m-sequence and Walsh code properties")
    codes.set_defaults(func=_cmd_codes_report)

    presets = sub.add_parser("presets", help="list experiment presets with resolved settings")
    presets.set_defaults(func=_cmd_presets)

    selftest = sub.add_parser("selftest", help="run the built-in invariant checks")
    selftest.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MCCDMAError, ValueError) as exc:
        print(f"mccdma: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
