"""Command-line front end: config parsing, sweep orchestration and CSV output.

Config files are sectioned ``key = value`` text with ``#`` comments::

    [system]
    tx_antennas = 4
    rx_antennas = 4
    subcarriers = 16
    cp_len = 8
    constellation = QAM16

    [channel]
    taps = 4
    snr_db = 20

    [estimator]
    smoothing = 2

    [sweep]
    snr_db = 5, 15, 25
    taps = 4, 8
    seeds = 10
"""

import argparse
import configparser
from dataclasses import asdict, fields
import datetime
import importlib.resources
import json
import math
import os
from pathlib import Path
import sys
import tempfile

import numpy as np

from . import __version__, _accel
from .rxchain import CSI_MODES, SweepGrid, run_sweep
from .sysmodel import ConfigError, SystemConfig

CSV_COLUMNS = ("seed", "snr_db", "packets", "windows_used", "estimator_L", "true_L",
               "doppler_fdT", "csi_mode", "nmse", "ber", "residual")

# (section, key) -> (parser, required)
_INT, _FLOAT, _STR = int, float, str


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _ints(v):
    return tuple(int(x) for x in v.split(",") if x.strip())


def _words(v):
    return tuple(x.strip() for x in v.split(",") if x.strip())


SCHEMA = {
    "system": {
        "tx_antennas": (_INT, True),
        "rx_antennas": (_INT, True),
        "subcarriers": (_INT, True),
        "cp_len": (_INT, True),
        "constellation": (_STR, False),
        "signal_power": (_FLOAT, False),
        "blocks_per_packet": (_INT, False),
        "packets": (_INT, False),
        "seed": (_INT, False),
        "equalizer": (_STR, False),
    },
    "channel": {
        "taps": (_INT, True),
        "pdp": (_STR, False),
        "pdp_decay": (_FLOAT, False),
        "doppler_fdT": (_FLOAT, False),
        "snr_db": (_FLOAT, False),
        "noise_power": (_FLOAT, False),
    },
    "estimator": {
        "taps": (_INT, False),
        "smoothing": (_INT, True),
    },
    "sweep": {
        "snr_db": (_floats, False),
        "taps": (_ints, False),
        "doppler_fdT": (_floats, False),
        "seeds": (_INT, False),
        "csi_mode": (_words, False),
        "follow_true_taps": (_bool, False),
    },
}


class ConfigFileError(ValueError):
    pass


def _read(text):
    cp = configparser.ConfigParser(strict=True, interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigFileError(
            f"line {exc.lineno}: duplicate key '{exc.option}' in section [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigFileError(f"line {exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigFileError(str(exc)) from None
    return cp


def _values(cp):
    out = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigFileError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigFileError(f"unknown key '{key}' in section [{section}]")
            conv = SCHEMA[section][key][0]
            try:
                out[section, key] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigFileError(f"[{section}] {key}: {exc}") from None
    for section, keys in SCHEMA.items():
        for key, (_, required) in keys.items():
            if required and (section, key) not in out:
                raise ConfigFileError(f"missing required key '{key}' in section [{section}]")
    return out


def parse_config(text):
    """Parse and validate config text; returns (SystemConfig, SweepGrid)."""
    v = _values(_read(text))
    true_L = v["channel", "taps"]
    est_L = v.get(("estimator", "taps"), true_L)
    kw = dict(
        tx_antennas=v["system", "tx_antennas"],
        rx_antennas=v["system", "rx_antennas"],
        subcarriers=v["system", "subcarriers"],
        cp_len=v["system", "cp_len"],
        chan_taps=est_L,
        smoothing=v["estimator", "smoothing"],
        true_taps=None if true_L == est_L else true_L,
    )
    for key in ("constellation", "signal_power", "blocks_per_packet", "packets", "seed", "equalizer"):
        if ("system", key) in v:
            kw[key] = v["system", key]
    for key in ("pdp", "pdp_decay", "doppler_fdT"):
        if ("channel", key) in v:
            kw[key] = v["channel", key]
    if ("channel", "snr_db") in v and ("channel", "noise_power") in v:
        raise ConfigFileError("[channel] give either snr_db or noise_power, not both")
    if ("channel", "noise_power") in v:
        kw["noise_power"] = v["channel", "noise_power"]
    try:
        cfg = SystemConfig(**kw)
        if ("channel", "snr_db") in v:
            cfg = cfg.with_snr(v["channel", "snr_db"])
    except (ConfigError, ValueError) as exc:
        raise ConfigFileError(str(exc)) from None

    modes = v.get(("sweep", "csi_mode"), ("blind_pilot",))
    for m in modes:
        if m not in CSI_MODES:
            raise ConfigFileError(f"[sweep] csi_mode: unknown mode '{m}' (choose from {', '.join(CSI_MODES)})")
    grid = SweepGrid(
        snr_db=v.get(("sweep", "snr_db"), ()),
        taps=v.get(("sweep", "taps"), ()),
        doppler_fdT=v.get(("sweep", "doppler_fdT"), ()),
        seeds=v.get(("sweep", "seeds"), 1),
        csi_modes=modes,
        follow_true_taps=v.get(("sweep", "follow_true_taps"), True),
    )
    if grid.seeds < 1:
        raise ConfigFileError("[sweep] seeds must be >= 1")
    # every cell must itself be a valid configuration
    for L in grid.taps:
        try:
            cfg.replace(chan_taps=L, true_taps=None if grid.follow_true_taps else cfg.true_taps)
        except ConfigError as exc:
            raise ConfigFileError(f"[sweep] taps = {L}: {exc}") from None
    return cfg, grid


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _config_dict(cfg):
    d = asdict(cfg)
    d["constellation"] = cfg.constellation.value
    return d


def make_manifest(cfg, grid, errors=()):
    return {
        "tool": "blindofdm",
        "version": __version__,
        "backend": _accel.backend(),
        "started": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "master_seed": cfg.seed,
        "config": _config_dict(cfg),
        "axes": {
            "snr_db": list(grid.snr_db),
            "taps": list(grid.taps),
            "doppler_fdT": list(grid.doppler_fdT),
            "seeds": grid.seeds,
            "csi_mode": list(grid.csi_modes),
            "follow_true_taps": grid.follow_true_taps,
        },
        "errors": list(errors),
    }


def load_manifest(data):
    """Rebuild (SystemConfig, SweepGrid) from a manifest dict or JSON text."""
    if isinstance(data, str):
        data = json.loads(data)
    names = {f.name for f in fields(SystemConfig)}
    c = {k: v for k, v in data["config"].items() if k in names}
    a = data["axes"]
    grid = SweepGrid(tuple(float(x) for x in a["snr_db"]), tuple(int(x) for x in a["taps"]),
                     tuple(float(x) for x in a["doppler_fdT"]), int(a["seeds"]),
                     tuple(a["csi_mode"]), bool(a["follow_true_taps"]))
    return SystemConfig(**c), grid


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return "%.17g" % v
    return str(v)


def format_csv(records):
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        lines.append(",".join(_fmt(getattr(r, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def emit_csv(records, path):
    """Write records atomically; the file appears only once complete."""
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    text = format_csv(records)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def summary_table(records):
    """Median NMSE and BER per (snr, estimator L, csi mode) cell, as printable text."""
    cells = {}
    for r in records:
        if r.ok:
            cells.setdefault((r.snr_db, r.estimator_L, r.csi_mode), []).append(r)
    lines = [f"{'snr_db':>8} {'L':>3} {'csi':>12} {'n':>4} {'median_nmse':>12} {'median_ber':>12}"]
    for (snr, L, mode), rs in sorted(cells.items()):
        lines.append(f"{snr:8.2f} {L:3d} {mode:>12} {len(rs):4d} "
                     f"{np.median([r.nmse for r in rs]):12.4e} {np.median([r.ber for r in rs]):12.4e}")
    return "\n".join(lines)


def run(cfg, grid, out_path, jobs=1, stdout=None):
    """Run the sweep, write CSV and manifest; returns the process exit code."""
    stdout = stdout or sys.stdout
    out_path = Path(out_path)
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    if not out_path.parent.is_dir() or not os.access(out_path.parent, os.W_OK):
        print(f"error: output directory {out_path.parent} is not writable", file=sys.stderr)
        return 1
    records = run_sweep(cfg, grid, jobs=jobs)
    errors = [f"snr={r.snr_db} L={r.estimator_L} fdT={r.doppler_fdT} mode={r.csi_mode} seed={r.seed}: {r.error}"
              for r in records if not r.ok]
    try:
        emit_csv(records, out_path)
        manifest_path.write_text(json.dumps(make_manifest(cfg, grid, errors), indent=2) + "\n",
                                 encoding="utf-8")
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary_table(records), file=stdout)
    for e in errors:
        print(f"trial failed: {e}", file=sys.stderr)
    return 2 if errors else 0


def builtin_configs():
    root = importlib.resources.files("blindofdm") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def _load_source(name):
    """Config text or manifest from a path, or a bundled config by name."""
    p = Path(name)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
    elif name in builtin_configs():
        text = (importlib.resources.files("blindofdm") / "configs" / f"{name}.ini").read_text(encoding="utf-8")
    else:
        raise ConfigFileError(f"no such config file: {name}")
    if text.lstrip().startswith("{"):
        try:
            return load_manifest(text)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigFileError(f"invalid manifest {name}: {exc}") from None
    return parse_config(text)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="blindofdm", description="Blind subspace MIMO-OFDM channel estimation simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a sweep and write CSV + manifest")
    p_run.add_argument("config", help="config file, manifest JSON, or bundled config name")
    p_run.add_argument("--out", required=True, help="CSV output path")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None, help="override the master seed")
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    sub.add_parser("version")
    sub.add_parser("list-configs", help="names of bundled configs")
    args = ap.parse_args(argv)

    if args.command == "version":
        print(f"blindofdm {__version__} ({_accel.backend()} kernels)")
        return 0
    if args.command == "list-configs":
        print("\n".join(builtin_configs()))
        return 0
    try:
        cfg, grid = _load_source(args.config)
        if args.command == "run" and args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except (ConfigFileError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "validate":
        n_cells = len(grid.cells(cfg))
        print(f"ok: W_len={cfg.window_len} signal_dim={cfg.signal_dim} g={cfg.noise_dim} cells={n_cells}")
        return 0
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 1
    return run(cfg, grid, args.out, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
