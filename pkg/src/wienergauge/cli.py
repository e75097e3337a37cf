"""Batch front end: ``wienergauge <command> [--key value]... [--config path]``."""
from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import CalibrationError
from .capacity import (
    CapacityError,
    CapacityResult,
    GridPolicy,
    delta_profile,
    relative_capacity_result,
    richardson,
)
from .energy import ConvergenceError, SolverOptions
from .geometry import GeometryError, gallery, make_grid, origin_point
from .pipeline import (
    BOX_HALF_WIDTH,
    GALLERY_HEADER,
    SuiteConfig,
    modulus_sequence,
    ramp_datum,
    run_gallery,
    run_suite,
)
from .solver import DirichletProblem, measure_boundary_oscillation, solve_p_laplace
from .wiener import ProfileError, WienerReport, classify_growth, wiener_integral, ziemer_integral

COMMANDS = ("capacity", "delta", "wiener", "modulus", "solve", "verify", "gallery")

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    domain: str = "slit"
    N: int = 0  # 0: the domain's default dimension
    p: float = 2.0
    eps: float = 0.5
    rho: float = 0.25
    radii: tuple = ()  # empty: 2^-1 ... 2^-levels
    levels: int = 5
    grid: int = 129  # nodes per axis over the box of half-width 2
    refine: int = 1  # capacity: number of grids, each halving h
    nodes_across: int = 0  # delta profiles: 0 picks the per-dimension default
    tol: float = 1e-8
    max_iters: int = 200
    continuation_steps: int = 3
    eps_reg: float = 0.0  # 0: the grid spacing
    gamma: float = 0.0  # modulus: 0 means 2
    eps_harnack: float = 0.5
    osc_0: float = 1.0
    osc_g: float = 0.0
    rho_0: float = 0.5
    datum_radius: float = 0.25
    out: str = "wienergauge_out"
    emit_svg: bool = False

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.tol, max_iters=self.max_iters,
                             eps_reg=self.eps_reg or None,
                             continuation_steps=self.continuation_steps)

    def dyadic_radii(self) -> list[float]:
        if self.radii:
            return list(self.radii)
        return [2.0 ** -k for k in range(1, self.levels + 1)]

    def h(self) -> float:
        return 2 * BOX_HALF_WIDTH / (self.grid - 1)

    def canonical(self) -> str:
        """key=value text of every setting that can change the results."""
        d = asdict(self)
        d.pop("out")
        return " ".join(f"{k}={_fmt(v)}" for k, v in d.items())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def dimension(self) -> int:
        return gallery(self.domain, self.N or None).N


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ";".join(repr(float(x)) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _convert(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            return _BOOL[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if typ is tuple:
            vals = tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
            if not all(math.isfinite(x) for x in vals):
                raise ValueError
            return vals
    except (ValueError, KeyError):
        raise ConfigError(f"malformed value for {key}: {raw!r}") from None
    return raw


_TYPES = {"N": int, "levels": int, "grid": int, "refine": int, "nodes_across": int,
          "max_iters": int, "continuation_steps": int, "radii": tuple, "emit_svg": bool,
          "domain": str, "out": str, "command": str}


def _field_type(name: str):
    return _TYPES.get(name, float)


_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "command")


def read_config_file(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def parse_config(args: Sequence[str]) -> RunConfig:
    args = list(args)
    if not args or args[0].startswith("--"):
        raise ConfigError(f"missing command; expected one of {', '.join(COMMANDS)}")
    command = args.pop(0)
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    flags: dict[str, str] = {}
    config_path = None
    i = 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"missing value for {key}")
            val = args[i + 1]
            i += 2
        if key == "config":
            config_path = val
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key}")
        flags[key] = val
    merged = read_config_file(config_path) if config_path else {}
    for k in merged:
        if k not in _KEYS:
            raise ConfigError(f"unknown key {k}")
    merged.update(flags)
    values = {k: _convert(k, v, _field_type(k)) for k, v in merged.items()}
    cfg = RunConfig(command=command, **values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    try:
        N = cfg.dimension()
    except GeometryError as exc:
        raise ConfigError(str(exc)) from None
    if not 1 < cfg.p <= N:
        raise ConfigError(f"p={cfg.p} outside (1, {N}]")
    if not 0 < cfg.eps <= 1:
        raise ConfigError(f"eps={cfg.eps} outside (0, 1]")
    if not 0 < cfg.rho < 1:
        raise ConfigError(f"rho={cfg.rho} outside (0, 1)")
    if not 0 < cfg.rho_0 < 1:
        raise ConfigError(f"rho_0={cfg.rho_0} outside (0, 1)")
    if cfg.levels < 1:
        raise ConfigError("levels must be >= 1")
    r = cfg.dyadic_radii()
    if any(not 0 < x < 1 for x in r) or any(b >= a for a, b in zip(r, r[1:])):
        raise ConfigError("radii must be strictly decreasing in (0, 1)")
    if cfg.grid < 5 or cfg.grid % 2 == 0:
        raise ConfigError(f"grid={cfg.grid} must be odd and >= 5")
    if cfg.refine < 1:
        raise ConfigError("refine must be >= 1")
    if cfg.nodes_across and cfg.nodes_across < 8:
        raise ConfigError("nodes_across must be >= 8")
    if not cfg.tol > 0 or cfg.max_iters < 1 or cfg.continuation_steps < 0 or cfg.eps_reg < 0:
        raise ConfigError("solver options out of range")
    if cfg.gamma and not cfg.gamma > 1:
        raise ConfigError("gamma must exceed 1")
    if not 0 < cfg.eps_harnack < 1:
        raise ConfigError("eps_harnack must lie in (0, 1)")
    if cfg.osc_0 < 0 or cfg.osc_g < 0 or cfg.datum_radius < 0:
        raise ConfigError("oscillations and datum_radius must be non-negative")
    if cfg.command == "modulus" and not 0 < cfg.eps < 1:
        raise ConfigError("modulus needs eps in (0, 1)")
    if cfg.command in ("wiener", "gallery", "delta") and len(r) < 2:
        raise ConfigError("need at least two radii")


# ---------------------------------------------------------------- plotting

_W, _H, _PAD = 640, 400, 56


def emit_svg(series: Sequence[tuple[str, Sequence[float], Sequence[float]]], path,
             logx: bool = False, title: str = "") -> Path:
    """Standalone SVG line chart, one polyline per (label, xs, ys) series."""
    if not series:
        raise ValueError("no series to plot")
    pts = []
    for label, xs, ys in series:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        if xs.size == 0 or xs.shape != ys.shape:
            raise ValueError(f"series {label!r} is empty or ragged")
        if logx:
            if np.any(xs <= 0):
                raise ValueError(f"series {label!r} has non-positive x on a log axis")
            xs = np.log10(xs)
        pts.append((label, xs, ys))
    allx = np.concatenate([p[1] for p in pts])
    ally = np.concatenate([p[2] for p in pts])
    if not (np.all(np.isfinite(allx)) and np.all(np.isfinite(ally))):
        raise ValueError("non-finite coordinates")
    x0, x1 = allx.min(), allx.max()
    y0, y1 = ally.min(), ally.max()
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
           f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>']
    xl = "log10 x" if logx else "x"
    out.append(f'<text x="{_PAD}" y="{_H - 16}" font-size="12">{xl}: {x0:.6g} .. {x1:.6g}</text>')
    out.append(f'<text x="8" y="{_PAD - 8}" font-size="12">y: {y0:.6g} .. {y1:.6g}</text>')
    if title:
        out.append(f'<text x="{_W // 2}" y="20" font-size="14" text-anchor="middle">'
                   f'{_escape(title)}</text>')
    for k, (label, xs, ys) in enumerate(pts):
        c = colors[k % len(colors)]
        coords = " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{_W - _PAD - 120}" y="{_PAD + 16 * k}" font-size="12" '
                   f'fill="{c}">{_escape(label)}</text>')
    out.append("</svg>\n")
    path = Path(path)
    try:
        path.write_text("\n".join(out))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------- commands

def _header(cfg: RunConfig, **extra) -> str:
    items = {"command": cfg.command, "config_hash": cfg.digest(), "domain": cfg.domain,
             "p": cfg.p, "grid": cfg.grid, "tol": cfg.tol, "max_iters": cfg.max_iters,
             "continuation_steps": cfg.continuation_steps, **extra}
    return "# " + " ".join(f"{k}={_fmt(v)}" for k, v in items.items()) + "\n"


def _policy(cfg: RunConfig, N: int) -> GridPolicy:
    return GridPolicy.for_dimension(N, **({"nodes_across": cfg.nodes_across}
                                          if cfg.nodes_across else {}))


def _cmd_capacity(cfg: RunConfig, art: dict):
    dom = gallery(cfg.domain, cfg.N or None)
    y = origin_point(dom.N)
    h = cfg.h()
    grids = [make_grid(dom.N, y.y, BOX_HALF_WIDTH, h * 2 ** j)
             for j in reversed(range(cfg.refine))]
    results = [relative_capacity_result(dom, y, cfg.rho, cfg.p, g, cfg.solver_options())
               for g in grids]
    scale = cfg.rho ** (dom.N - cfg.p)
    levels = [(g.h, r.value * scale) for g, r in zip(grids, results)]
    ext, q = richardson(levels) if len(levels) > 1 else (levels[-1][1], float("nan"))
    res = CapacityResult(levels[-1][1], levels, max(ext, 0.0), q,
                         sum(r.iterations for r in results), max(r.residual for r in results))
    head = _header(cfg, rho=cfg.rho, outer_radius=BOX_HALF_WIDTH)
    art["capacity.csv"] = head + CapacityResult.RECORD_HEADER + "\n" + res.record() + "\n"
    art["levels.csv"] = head + "h,capacity,delta\n" + "".join(
        f"{hh!r},{v!r},{v / scale!r}\n" for hh, v in levels)


def _profile(cfg: RunConfig):
    dom = gallery(cfg.domain, cfg.N or None)
    prof = delta_profile(dom, origin_point(dom.N), cfg.p, cfg.dyadic_radii(),
                         _policy(cfg, dom.N), cfg.solver_options())
    return dom, prof


def _cmd_delta(cfg: RunConfig, art: dict):
    _, prof = _profile(cfg)
    art["delta.csv"] = _header(cfg, nodes_across=cfg.nodes_across) + prof.to_csv()
    if cfg.emit_svg:
        art["delta.svg"] = ("svg", [("delta", prof.t, prof.delta)], True, "relative capacity")


def _cmd_wiener(cfg: RunConfig, art: dict):
    _, prof = _profile(cfg)
    radii = cfg.dyadic_radii()
    I = [wiener_integral(prof, cfg.eps, r) for r in radii]
    Z = [ziemer_integral(prof, cfg.p, r) for r in radii]
    cls, res = classify_growth(prof, cfg.eps, radii) if len(radii) >= 4 else ("indeterminate",
                                                                               float("nan"))
    rep = WienerReport(cfg.eps, radii[-1], I[-1], Z[-1], cls, res)
    head = _header(cfg, eps=cfg.eps)
    art["delta.csv"] = head + prof.to_csv()
    art["wiener.csv"] = head + WienerReport.HEADER + "\n" + rep.csv_row() + "\n"
    art["wiener_curve.csv"] = head + "rho,I,ziemer\n" + "".join(
        f"{r!r},{a!r},{b!r}\n" for r, a, b in zip(radii, I, Z))
    art["wiener.json"] = rep.to_json() + "\n"
    if cfg.emit_svg:
        art["wiener.svg"] = ("svg", [("I", radii, I), ("ziemer", radii, Z)], True,
                             "integrals against rho")


def _cmd_modulus(cfg: RunConfig, art: dict):
    dom = gallery(cfg.domain, cfg.N or None)
    gamma = cfg.gamma or 2.0
    seq, prof = modulus_sequence(dom, cfg.p, cfg.levels, gamma, cfg.eps, cfg.osc_0, cfg.osc_g,
                                 cfg.rho_0, _policy(cfg, dom.N), cfg.solver_options())
    head = _header(cfg, eps=cfg.eps, gamma=gamma, osc_0=cfg.osc_0, osc_g=cfg.osc_g,
                   rho_0=cfg.rho_0)
    art["modulus.csv"] = head + seq.to_csv()
    art["modulus_literal.csv"] = head + "n,rho,osc_literal\n" + "".join(
        f"{e[0]},{e[1]!r},{lit!r}\n" for e, lit in zip(seq.entries, seq.osc_literal))
    if cfg.emit_svg:
        rho = [e[1] for e in seq.entries]
        art["modulus.svg"] = ("svg", [("osc_bound", rho, list(seq.osc)),
                                      ("eq18_bound", rho, seq.eq18_bound),
                                      ("literal", rho, seq.osc_literal)], True, "oscillation bounds")


def _solve(cfg: RunConfig):
    dom = gallery(cfg.domain, cfg.N or None)
    y = origin_point(dom.N)
    grid = make_grid(dom.N, y.y, BOX_HALF_WIDTH, cfg.h())
    g = ramp_datum(cfg.datum_radius)
    return dom, y, g, solve_p_laplace(DirichletProblem(dom, g, cfg.p, grid, y,
                                                       cfg.solver_options()))


def _cmd_solve(cfg: RunConfig, art: dict):
    dom, y, _, sol = _solve(cfg)
    radii = cfg.dyadic_radii()
    osc = measure_boundary_oscillation(sol.u, dom, y, radii)
    head = _header(cfg, datum_radius=cfg.datum_radius)
    art["solve.csv"] = head + "energy,iterations,residual,min,max\n" + (
        f"{sol.energy!r},{sol.iterations},{sol.residual!r},{sol.range[0]!r},{sol.range[1]!r}\n")
    art["oscillation.csv"] = head + "rho,osc\n" + "".join(f"{r!r},{o!r}\n"
                                                          for r, o in zip(radii, osc))
    art["solution.bin"] = sol.u.to_bytes()
    if cfg.emit_svg:
        art["oscillation.svg"] = ("svg", [("osc", radii, osc)], True, "boundary oscillation")


def _cmd_verify(cfg: RunConfig, art: dict):
    dom = gallery(cfg.domain, cfg.N or None)
    run = run_suite(dom, cfg.p, cfg.h(), ramp_datum(cfg.datum_radius),
                    SuiteConfig(rho_caccioppoli=cfg.rho, rho_normalize=cfg.rho / 2,
                                eps_harnack=cfg.eps_harnack),
                    cfg.solver_options())
    head = _header(cfg, rho=cfg.rho, eps_used=run.eps, q=run.suite.q)
    art["verify.csv"] = head + run.suite.to_csv()
    art["calibration.txt"] = head + run.calibration.to_text()


def _cmd_gallery(cfg: RunConfig, art: dict):
    rows = run_gallery(opts=cfg.solver_options())
    head = _header(cfg)
    art["gallery.csv"] = head + GALLERY_HEADER + "\n" + "".join(r.csv_row() + "\n" for r in rows)


_DISPATCH = {"capacity": _cmd_capacity, "delta": _cmd_delta, "wiener": _cmd_wiener,
             "modulus": _cmd_modulus, "solve": _cmd_solve, "verify": _cmd_verify,
             "gallery": _cmd_gallery}

_NUMERIC = (ConvergenceError, CalibrationError, CapacityError, ProfileError,
            FloatingPointError, np.linalg.LinAlgError)


def _write_artifacts(art: dict, out: Path) -> list[Path]:
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, data in art.items():
            path = out / name
            if isinstance(data, tuple):
                _, series, logx, title = data
                emit_svg(series, path, logx, title)
            elif isinstance(data, bytes):
                path.write_bytes(data)
            else:
                path.write_text(data)
            written.append(path)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written


def run(cfg: RunConfig, stderr=sys.stderr) -> int:
    art: dict = {}
    try:
        _DISPATCH[cfg.command](cfg, art)
    except _NUMERIC as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except (GeometryError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        paths = _write_artifacts(art, Path(cfg.out))
    except (OSError, ValueError) as exc:
        print(f"cannot write artifacts: {exc}", file=stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        print("commands: " + ", ".join(COMMANDS))
        print("keys: " + ", ".join(_KEYS))
        return EXIT_OK
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
