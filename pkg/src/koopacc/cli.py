"""Command-line interface: ``koopacc generate | decompose | score | reproduce``.

Every command writes into an output directory, embeds the full run
configuration in its JSON outputs and records all written files (with
SHA-256 digests) in ``manifest.json``.

Exit codes: 0 success, 1 other library error, 2 parse/usage error,
3 dimension error, 4 numerical error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import struct
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._serial import atomic_write_bytes, atomic_write_text, write_json
from .accuracy import NORMS, assemble_report
from .dmd import KoopmanDecomposition, dmd, tdmd
from .edmd import edmd, parse_dictionary
from .errors import DimensionError, DomainError, KoopaccError, NumericalError, ParseError
from .experiments import FIGURES, write_tables
from .kdmd import kdmd, parse_kernel
from .snapshots import (
    add_noise,
    analytic_eigenpairs,
    gen_linear,
    gen_oscillator_field,
    gen_polymap,
    linear_operator,
    load,
    split,
    store,
)

log = logging.getLogger("koopacc")

EXIT_OK, EXIT_OTHER, EXIT_PARSE, EXIT_DIMENSION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4, 5

_MODES_MAGIC = b"KMOD"
_MODES_HEADER = struct.Struct("<4sBQQ")


@dataclass
class RunConfig:
    """Everything needed to re-run a command; embedded in its outputs."""

    command: str
    system: str | None = None
    method: str | None = None
    rank: str | int | None = None
    dictionary: str | None = None
    kernel: str | None = None
    split: str | None = None
    noise: float | None = None
    norm: str | None = None
    dt: float | None = None
    seed: int | None = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kernel is not None and self.method != "kdmd":
            raise ParseError("--kernel is only valid with --method kdmd")
        if self.dictionary is not None and self.method != "edmd":
            raise ParseError("--dict is only valid with --method edmd")
        if self.method == "kdmd" and self.kernel is None:
            raise ParseError("--method kdmd needs --kernel (e.g. poly:5, exp, gauss:1, laplace:1)")
        if self.method == "edmd" and self.dictionary is None:
            raise ParseError("--method edmd needs --dict (e.g. percoord:5, total:5, identity)")

    def to_dict(self) -> dict:
        return asdict(self)


# --- argument parsing -----------------------------------------------------------


def _rank(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rank must be 'auto' or a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("rank must be positive")
    return value


def _complex_list(text: str) -> list[complex]:
    try:
        return [complex(tok.strip().replace("i", "j")) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse eigenvalue list {text!r}") from None


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koopacc", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"koopacc {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON or YAML file of option values; file wins on conflict")

    gen = sub.add_parser("generate", help="write train/test snapshot files for a benchmark system")
    gen.add_argument("system", choices=("polymap", "linear", "oscillator"))
    gen.add_argument("--m", type=int, default=100, help="training pairs")
    gen.add_argument("--test", type=int, default=100, help="test pairs")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise", type=float, default=0.0, help="Gaussian noise std added to training data")
    gen.add_argument("--split", choices=("prefix", "random"), default="prefix")
    gen.add_argument("--format", choices=("csv", "bin"), default="csv")
    gen.add_argument("--gamma", type=float, default=0.9)
    gen.add_argument("--delta", type=float, default=0.8)
    gen.add_argument("--eigs", type=_complex_list, help="linear system spectrum, e.g. 0.9,0.5,0.8+0.3j")
    gen.add_argument("--n", type=int, help="state dimension (linear, oscillator)")
    gen.add_argument("--sequential", action="store_true", help="linear: one trajectory instead of random pairs")
    gen.add_argument("--dt", type=_positive, help="time step of sequential data")
    common(gen)

    dec = sub.add_parser("decompose", help="fit DMD/TDMD/EDMD/KDMD to training data")
    dec.add_argument("--train", required=True, help="training snapshot file (.csv or .bin)")
    dec.add_argument("--method", choices=("dmd", "tdmd", "edmd", "kdmd"), required=True)
    dec.add_argument("--rank", type=_rank, default="auto")
    dec.add_argument("--dict", dest="dictionary", help="EDMD dictionary: percoord:D, total:D or identity")
    dec.add_argument("--kernel", help="KDMD kernel: poly:D, exp, gauss:SIGMA, laplace:SIGMA or linear")
    dec.add_argument("--modes", choices=("none", "csv", "bin"), default="none", help="also export mode matrix")
    common(dec)

    sc = sub.add_parser("score", help="compute accuracy of each eigenpair on held-out data")
    sc.add_argument("--decomposition", required=True, help="decomposition.json from 'decompose'")
    sc.add_argument("--test", required=True, help="held-out snapshot file")
    sc.add_argument("--analytic", choices=("polymap",), help="ground truth for tau and theta")
    sc.add_argument("--gamma", type=float, default=0.9)
    sc.add_argument("--delta", type=float, default=0.8)
    sc.add_argument("--amplitude-data", help="sequential snapshot file for mode amplitudes")
    sc.add_argument("--dt", type=_positive, help="time step; adds frequency and growth-rate columns")
    sc.add_argument("--norm", choices=NORMS, default="abs_sum")
    sc.add_argument("--grid", type=int, default=101, help="grid points per axis for theta")
    sc.add_argument("--alpha-max", type=float, help="only print eigenpairs with alpha below this value")
    common(sc)

    rep = sub.add_parser("reproduce", help="run a benchmark pipeline and write its tables")
    rep.add_argument("figure", choices=FIGURES)
    rep.add_argument("--seed", type=int, default=0)
    common(rep)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _load_config_file(path) -> dict:
    text = Path(path).read_text()
    if Path(path).suffix.lower() in (".yaml", ".yml"):
        try:
            import yaml
        except ImportError:
            raise ParseError("YAML config needs PyYAML (pip install koopacc[yaml])") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ParseError(f"cannot parse config {path}: {exc}") from None
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError(f"config {path} must hold a mapping of option names to values")
    return data


def apply_config(parser, args) -> argparse.Namespace:
    """Overlay values from ``--config``; the file wins and conflicts are warned about."""
    if not args.config:
        return args
    data = _load_config_file(args.config)
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest == "dict":
            dest = "dictionary"
        if dest not in actions:
            raise ParseError(f"config key {key!r} is not an option of '{args.command}'")
        action = actions[dest]
        if action.type is not None and isinstance(value, str):
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ParseError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise ParseError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        current = getattr(args, dest)
        if current != action.default and current != value:
            msg = f"config file overrides --{dest.replace('_', '-')}={current!r} with {value!r}"
            warnings.warn(msg, stacklevel=2)
        setattr(args, dest, value)
    return args


# --- helpers --------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, cfg: RunConfig, files: list[Path]) -> Path:
    manifest = {
        "koopacc_version": __version__,
        "run_config": cfg.to_dict(),
        "files": [{"path": p.name, "sha256": _sha256(p)} for p in files],
    }
    path = out / "manifest.json"
    write_json(path, manifest)
    print(json.dumps(manifest, indent=2))
    return path


def _input_record(path) -> dict:
    p = Path(path)
    return {"path": str(p), "sha256": _sha256(p)}


def _write_modes(path: Path, modes: np.ndarray, fmt: str) -> None:
    modes = np.asarray(modes, dtype=complex)
    if fmt == "bin":
        # header, then the real block and the imaginary block, row-major <f8
        head = _MODES_HEADER.pack(_MODES_MAGIC, 1, modes.shape[0], modes.shape[1])
        body = np.ascontiguousarray(modes.real, "<f8").tobytes() + np.ascontiguousarray(modes.imag, "<f8").tobytes()
        atomic_write_bytes(path, head + body)
    else:
        cols = [f"{part}{j}" for j in range(modes.shape[1]) for part in ("re", "im")]
        lines = [",".join(cols)]
        for row in modes:
            lines.append(",".join(f"{v.real!r},{v.imag!r}" for v in row.tolist()))
        atomic_write_text(path, "\n".join(lines) + "\n")


def read_modes_bin(path) -> np.ndarray:
    """Inverse of the binary mode export."""
    data = Path(path).read_bytes()
    magic, version, rows, cols = _MODES_HEADER.unpack_from(data)
    if magic != _MODES_MAGIC or version != 1:
        raise ParseError(f"{path} is not a koopacc mode file")
    block = rows * cols
    flat = np.frombuffer(data, dtype="<f8", offset=_MODES_HEADER.size)
    if flat.size != 2 * block:
        raise ParseError(f"{path}: expected {2 * block} values, found {flat.size}")
    return (flat[:block] + 1j * flat[block:]).reshape(rows, cols)


# --- commands -------------------------------------------------------------------


def cmd_generate(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    total = args.m + args.test
    if args.m < 1 or args.test < 1:
        raise DimensionError("--m and --test must be positive")
    if args.system == "polymap":
        data = gen_polymap(total, args.seed, gamma=args.gamma, delta=args.delta)
    elif args.system == "linear":
        if not args.eigs or args.n is None:
            raise ParseError("generate linear needs --eigs and --n")
        a = linear_operator(args.eigs, args.n, args.seed)
        if args.dt is not None and not args.sequential:
            raise ParseError("--dt requires --sequential")
        data = gen_linear(a, total, args.seed, sequential=args.sequential, dt=args.dt)
    else:
        data = gen_oscillator_field(
            n=args.n or 2000, steps=total, dt=args.dt or 1.0 / 20.0, seed=args.seed
        )
    train, test = split(data, args.m, args.test, strategy=args.split, seed=args.seed)
    if args.noise:
        train = add_noise(train, args.noise, args.seed)
    paths = [out / f"train.{args.format}", out / f"test.{args.format}"]
    store(train, paths[0])
    store(test, paths[1])
    cfg.outputs = {"train": paths[0].name, "test": paths[1].name}
    return paths


def cmd_decompose(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    train = load(args.train)
    cfg.inputs = {"train": _input_record(args.train)}
    if args.method == "dmd":
        dec = dmd(train, rank=args.rank)
    elif args.method == "tdmd":
        dec = tdmd(train, rank=args.rank)
    elif args.method == "edmd":
        dec = edmd(train, parse_dictionary(args.dictionary, train.n), rank=args.rank)
    else:
        dec = kdmd(train, parse_kernel(args.kernel), rank=args.rank)
    log.info("%s: rank %d", args.method, dec.rank)
    payload = dec.to_dict()
    payload["run_config"] = cfg.to_dict()
    path = out / "decomposition.json"
    write_json(path, payload)
    paths = [path]
    if args.modes != "none":
        mpath = out / f"modes.{args.modes}"
        _write_modes(mpath, dec.modes, args.modes)
        paths.append(mpath)
    cfg.outputs = {p.stem: p.name for p in paths}
    return paths


def _format_row(rec) -> str:
    parts = [f"{rec.index:4d}", f"{rec.eigenvalue.real:+.6f}{rec.eigenvalue.imag:+.6f}j"]
    parts.append("alpha=" + ("absent" if rec.alpha is None else f"{rec.alpha:.3e}"))
    for name in ("beta", "tau", "theta"):
        v = getattr(rec, name)
        if v is not None:
            parts.append(f"{name}={v:.3e}")
    if rec.continuous is not None:
        parts.append(f"f={rec.continuous.frequency_hz:+.4f}Hz")
    return "  ".join(parts)


def cmd_score(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    dec = KoopmanDecomposition.load(args.decomposition)
    test = load(args.test)
    cfg.inputs = {"decomposition": _input_record(args.decomposition), "test": _input_record(args.test)}
    amp = None
    if args.amplitude_data:
        amp = load(args.amplitude_data)
        cfg.inputs["amplitude_data"] = _input_record(args.amplitude_data)
    analytic = analytic_eigenpairs(args.gamma, args.delta) if args.analytic == "polymap" else None
    report = assemble_report(
        dec, test, analytic=analytic, amplitude_data=amp, dt=args.dt, norm=args.norm, grid=args.grid
    )
    payload = report.to_dict()
    payload["run_config"] = cfg.to_dict()
    paths = [out / "report.json", out / "report.csv"]
    write_json(paths[0], payload)
    report.write_csv(paths[1])
    cfg.outputs = {"report_json": paths[0].name, "report_csv": paths[1].name}
    for rec in report.records:
        if args.alpha_max is None or (rec.alpha is not None and rec.alpha <= args.alpha_max):
            print(_format_row(rec), file=sys.stderr)
    for err in report.metadata.get("errors", []):
        log.warning(err)
    return paths


def cmd_reproduce(args, cfg: RunConfig) -> list[Path]:
    paths = write_tables(args.figure, Path(args.out), seed=args.seed)
    cfg.outputs = {p.stem: p.name for p in paths}
    return paths


COMMANDS = {"generate": cmd_generate, "decompose": cmd_decompose, "score": cmd_score, "reproduce": cmd_reproduce}


def make_config(args) -> RunConfig:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    cfg = RunConfig(
        command=args.command,
        system=get("system") or get("figure"),
        method=get("method"),
        rank=get("rank"),
        dictionary=get("dictionary"),
        kernel=get("kernel"),
        split=None if get("split") is None else f"{args.split}:{args.m}/{args.test}",
        noise=get("noise"),
        norm=get("norm"),
        dt=get("dt"),
        seed=get("seed"),
    )
    skip = set(asdict(cfg)) | {"command", "config", "verbose", "out", "figure", "train", "test", "decomposition"}
    cfg.options = {
        k: (v if not isinstance(v, list) else [str(x) for x in v])
        for k, v in sorted(vars(args).items())
        if k not in skip and v is not None
    }
    if get("config"):
        cfg.options["config_file"] = str(args.config)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="koopacc: %(message)s")
    try:
        args = apply_config(parser, args)
        cfg = make_config(args)
        cfg.validate()
        files = COMMANDS[args.command](args, cfg)
        _write_manifest(Path(args.out), cfg, files)
    except (ParseError, DomainError) as exc:
        print(f"koopacc: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DimensionError as exc:
        print(f"koopacc: dimension error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except NumericalError as exc:
        print(f"koopacc: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"koopacc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KoopaccError as exc:
        print(f"koopacc: error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
