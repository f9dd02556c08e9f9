"""
Command line entry point.

Subcommands cover each stage on its own (patterns, representation matrices,
Wigner elements, monomial elements, the GZ map, fibres, intersections,
predictions, isotropic states) and the full exact-versus-asymptotic
comparison. Exit codes: 0 success, 1 verification failure, 2 invalid input,
3 dimension guard exceeded.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src.config import configure_logging, get_settings
from src.models.models import (
    ConfigError,
    ExperimentConfig,
    ExperimentMode,
    GZSCError,
    LieGenerator,
    MaslovMode,
    SolverConfig,
)
from src.services.bergman_states import state_norm_asymptotics
from src.services.cache import ResultCache
from src.services.coadjoint_geometry import flag_fiber_sample, gz_map
from src.services.gz_combinatorics import (
    InvalidWeightError,
    as_weight,
    enumerate_patterns,
    pattern_weight,
    rho_shift,
    weyl_dimension,
)
from src.services.gz_representation import DimensionGuardError, generator_matrix, group_matrix
from src.services.harness import (
    ComparisonRun,
    config_from_mapping,
    load_matrix,
    parse_config_file,
    parse_fraction_list,
    parse_p_list,
    resolve_group_element,
)
from src.services.intersection_solver import flag_intersections, toric_intersections
from src.services.monomial_rep import exact_matrix_element, wigner_d

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_GUARD = 0, 1, 2, 3


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace(",", " ").split())


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, default=str))


def _emit_csv(df: pd.DataFrame) -> None:
    df.to_csv(sys.stdout, index=False)


def _complex(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag, "abs": abs(z)}


def _rows(pattern) -> list:
    return [list(r) for r in pattern.rows]


def _weight(args) -> tuple:
    """--lambda checked against --n when both are given."""
    lam = _ints(args.lam)
    if getattr(args, "n", None) is not None and len(lam) != args.n:
        raise ConfigError(f"--lambda has {len(lam)} entries, --n is {args.n}")
    return tuple(as_weight(lam).entries)


def _group_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int)
    parser.add_argument("--g", dest="g_source", default=None, choices=["rotation", "haar", "file"])
    parser.add_argument("--beta", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--g-file", dest="g_file")


def _g_source(args) -> str:
    if args.g_source:
        return args.g_source
    return "file" if args.g_file else "rotation"


def _group_element(args, n: Optional[int] = None) -> np.ndarray:
    n = n or args.n or 2
    cfg = ExperimentConfig(mode="toric", n=n, g_source=_g_source(args), beta=args.beta, g_seed=args.seed,
                           g_file=args.g_file, v=(0,) * (n - 1), w=(0,) * (n - 1), p_list=(1,))
    return resolve_group_element(cfg)


def cmd_patterns(args) -> int:
    lam = _weight(args)
    if args.p is not None:
        lam = tuple(args.p * a + b for a, b in zip(lam, rho_shift(len(lam)).rho_bar))
    patterns = enumerate_patterns(lam)
    if args.limit is not None:
        patterns = patterns[: args.limit]
    if args.emit == "csv":
        _emit_csv(pd.DataFrame({
            "index": range(len(patterns)),
            "pattern": [";".join(",".join(map(str, r)) for r in pt.rows) for pt in patterns],
            "weight": [",".join(map(str, pattern_weight(pt))) for pt in patterns],
        }))
        return EXIT_OK
    _emit({"lambda": list(lam), "dimension": weyl_dimension(lam), "count": len(patterns),
           "patterns": [_rows(pt) for pt in patterns],
           "weights": [list(pattern_weight(pt)) for pt in patterns]})
    return EXIT_OK


def cmd_repmat(args) -> int:
    lam = _weight(args)
    if args.gen:
        a, b = int(args.gen[0]), int(args.gen[1])
        rep = generator_matrix(lam, LieGenerator.E(a, b), precision=args.precision)
    else:
        g = load_matrix(args.g_file)
        if g.shape != (len(lam), len(lam)):
            raise ConfigError(f"Matrix in {args.g_file} is not {len(lam)}x{len(lam)}")
        rep = group_matrix(lam, g)
    entries = np.asarray(rep.entries, dtype=complex)
    if args.emit == "csv":
        rows, cols = np.divmod(np.arange(entries.size), entries.shape[1])
        _emit_csv(pd.DataFrame({"row": rows, "col": cols, "re": entries[rows, cols].real,
                                "im": entries[rows, cols].imag}))
        return EXIT_OK
    _emit({"basis": [_rows(pt) for pt in rep.basis], "re": entries.real.tolist(), "im": entries.imag.tolist()})
    return EXIT_OK


def cmd_wigner(args) -> int:
    j, m, mp = (parse_fraction_list(x)[0] for x in (args.j, args.m, args.mp))
    value = wigner_d(j, m, mp, args.beta)
    if args.emit == "csv":
        _emit_csv(pd.DataFrame([{"j": str(j), "m": str(m), "mp": str(mp), "beta": args.beta, "value": float(value)}]))
        return EXIT_OK
    _emit({"value": str(value)})
    return EXIT_OK


def cmd_matelem(args) -> int:
    nu, mu = _ints(args.nu), _ints(args.mu)
    if len(nu) != len(mu) or (args.n is not None and len(nu) != args.n):
        raise ConfigError("--nu and --mu need one exponent per coordinate")
    g = _group_element(args, len(nu))
    if args.p is not None and (sum(nu) != args.p or sum(mu) != args.p):
        raise ConfigError(f"Exponents must sum to p={args.p}")
    element = exact_matrix_element(sum(nu), g, nu, mu)
    _emit({"value": _complex(element), "provenance": element.provenance})
    return EXIT_OK


def cmd_gzmap(args) -> int:
    alpha = load_matrix(args.alpha_file)
    _emit({"rows": [row.tolist() for row in gz_map(alpha).rows]})
    return EXIT_OK


def cmd_fiber(args) -> int:
    samples = flag_fiber_sample(_ints(args.lam), parse_fraction_list(args.v), args.count, seed=args.seed)
    _emit({"samples": [[[_complex(x) for x in row] for row in s.alpha] for s in samples]})
    return EXIT_OK


def _matrix_pairs(m: np.ndarray) -> list:
    return [[[x.real, x.imag] for x in row] for row in np.atleast_2d(m)]


def cmd_intersect(args) -> int:
    v, w = parse_fraction_list(args.v), parse_fraction_list(args.w)
    solver = SolverConfig(starts=args.starts, seed=args.seed)
    if args.mode == "flag":
        if not args.lam:
            raise ConfigError("--mode flag needs --lambda")
        lam = _weight(args)
        result = flag_intersections([float(x) for x in lam], _group_element(args, len(lam)), v, w, solver)
    else:
        result = toric_intersections(_group_element(args, args.n or len(v) + 1), v, w, solver)

    def point(pt) -> dict:
        entry = {"residual": pt.residual, "jac_det": pt.jac_det, "component": pt.component_id,
                 "dimension": pt.component_dim, "min_distance": pt.min_distance}
        if args.mode == "flag":
            entry["alpha"] = _matrix_pairs(pt.point.alpha)
        else:
            entry["z"] = [[x.real, x.imag] for x in pt.point.z]
        return entry

    _emit({"certificate": result.certificate, "residual_floor": result.residual_floor,
           "points": [point(pt) for pt in result.points]})
    return EXIT_OK


def _predict_config(args) -> ExperimentConfig:
    n = args.n or len(parse_fraction_list(args.v)) + 1
    raw = {"mode": args.mode, "n": str(n), "g": _g_source(args), "beta": str(args.beta),
           "seed": str(args.seed), "v": args.v, "w": args.w, "p": args.p_list, "maslov": args.maslov,
           "starts": str(args.starts)}
    if args.g_file:
        raw["g_file"] = args.g_file
    if args.calibration_p is not None:
        raw["calibration_p"] = str(args.calibration_p)
    if args.lam:
        lam = _weight(args)
        raw["lambda"] = ",".join(map(str, lam))
        raw["n"] = str(len(lam))
    config = config_from_mapping(raw)
    if config.maslov == MaslovMode.CALIBRATED and args.calibration_p is None:
        config = config.model_copy(update={"calibration_p": config.p_list[0]})
    return config


def cmd_predict(args) -> int:
    config = _predict_config(args)
    if config.mode == ExperimentMode.WIGNER:
        raise ConfigError("predict takes --mode toric or flag")
    entries = []
    for sample, prediction, reason in ComparisonRun(config).predictions():
        entry = {"p": sample.p, "k": sample.k, "v_p": [str(x) for x in sample.v], "w_p": [str(x) for x in sample.w]}
        if prediction is None:
            entry.update(skipped=True, reason=reason)
        else:
            entry.update(power=prediction.power, total=_complex(prediction.total),
                         maslov_mode=prediction.maslov_mode.value, orientation=prediction.orientation,
                         components=[c.__dict__ for c in prediction.components])
        entries.append(entry)
    if config.maslov == MaslovMode.PREDICTED:
        logger.info("Maslov indices from the signature rule are experimental")
    _emit({"mode": config.mode.value, "predictions": entries})
    return EXIT_OK


def cmd_bergman(args) -> int:
    v = parse_fraction_list(args.v)
    if args.n is not None and len(v) != args.n - 1:
        raise ConfigError(f"--v needs {args.n - 1} entries for n={args.n}")
    df, slope = state_norm_asymptotics(v, parse_p_list(args.p), k_twist=args.k_twist, resolution=args.resolution)
    _emit({"exponent": slope, "table": df.to_dict(orient="records")})
    return EXIT_OK


def _compare_config(args) -> ExperimentConfig:
    if args.config:
        return parse_config_file(args.config)
    raw = {key: str(value) for key, value in vars(args).items()
           if value is not None and key in ("mode", "n", "g", "beta", "seed", "g_file", "v", "w", "selection",
                                            "p", "maslov", "calibration_p", "window", "starts", "csv", "json",
                                            "dat", "lambda")}
    return config_from_mapping(raw)


def cmd_compare(args) -> int:
    config = _compare_config(args)
    cache = None if args.no_cache else ResultCache(Path(args.cache_dir or get_settings().cache_dir))
    records, analyzer = ComparisonRun(config, cache).run()
    summary = analyzer.summary()
    if config.csv_path:
        analyzer.to_csv(config.csv_path)
    if config.dat_path:
        analyzer.to_dat(config.dat_path)
    report = {"summary": summary.to_dict(), "window_rms": analyzer.window_rms().reset_index().to_dict(orient="records")}
    if config.json_path:
        Path(config.json_path).write_text(json.dumps(report, indent=2, default=str), encoding="utf-8")
    _emit(report["summary"])
    if config.maslov == MaslovMode.PREDICTED:
        logger.info("Maslov indices from the signature rule are experimental")
    return EXIT_FAILED if summary.passed is False else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gzsc", description="Gelfand-Zetlin semiclassics toolkit")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--log-json", action="store_true", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("patterns", help="Enumerate Gelfand-Zetlin patterns of V(lambda) or V(p lambda + rho_bar)")
    p.add_argument("--n", type=int)
    p.add_argument("--lambda", dest="lam", required=True)
    p.add_argument("--p", type=int)
    p.add_argument("--limit", type=int, help="Emit only the first LIMIT patterns (default: all)")
    p.add_argument("--emit", default="json", choices=["json", "csv"])
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("repmat", help="Matrix of g (from a file) or of a generator E_ab on V(lambda)")
    p.add_argument("--n", type=int)
    p.add_argument("--lambda", dest="lam", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--g", dest="g_file", help="n x n complex matrix, one row per line as re,im pairs")
    source.add_argument("--gen", help="Two digits a b, e.g. 12")
    p.add_argument("--precision", default="double", choices=["double", "mp"])
    p.add_argument("--emit", default="json", choices=["json", "csv"])
    p.set_defaults(func=cmd_repmat)

    p = sub.add_parser("wigner", help="Wigner small-d element")
    p.add_argument("--j", required=True)
    p.add_argument("--m", required=True)
    p.add_argument("--mp", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--emit", default="json", choices=["json", "csv"])
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("matelem", help="Monomial matrix element <g e_nu, e_mu>")
    _group_args(p)
    p.add_argument("--p", type=int)
    p.add_argument("--nu", required=True)
    p.add_argument("--mu", required=True)
    p.set_defaults(func=cmd_matelem)

    p = sub.add_parser("gzmap", help="Minor spectra of a Hermitian matrix file")
    p.add_argument("--alpha-file", dest="alpha_file", required=True)
    p.set_defaults(func=cmd_gzmap)

    p = sub.add_parser("fiber", help="Sample a Gelfand-Zetlin fibre")
    p.add_argument("--lambda", dest="lam", required=True)
    p.add_argument("--v", required=True)
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fiber)

    p = sub.add_parser("intersect", help="Points of g.Lambda_v meeting Lambda_w")
    _group_args(p)
    p.add_argument("--mode", default="toric", choices=["toric", "flag"])
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--v", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--starts", type=int, default=64)
    p.add_argument("--emit", default="json", choices=["json"])
    p.set_defaults(func=cmd_intersect)

    p = sub.add_parser("predict", help="Leading-order predictions over a p-list")
    _group_args(p)
    p.add_argument("--mode", default="toric", choices=["toric", "flag"])
    p.add_argument("--lambda", dest="lam")
    p.add_argument("--v", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--p-list", dest="p_list", required=True)
    p.add_argument("--maslov", default="predicted", choices=["calibrated", "predicted"])
    p.add_argument("--calibration-p", dest="calibration_p", type=int)
    p.add_argument("--starts", type=int, default=64)
    p.add_argument("--emit", default="json", choices=["json"])
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bergman", help="Isotropic state norms against the model")
    p.add_argument("--n", type=int)
    p.add_argument("--v", required=True)
    p.add_argument("--p", required=True)
    p.add_argument("--k-twist", dest="k_twist", type=int, default=0)
    p.add_argument("--resolution", type=int)
    p.add_argument("--emit", default="json", choices=["json"])
    p.set_defaults(func=cmd_bergman)

    p = sub.add_parser("compare", help="Exact versus asymptotic sweep")
    p.add_argument("--config")
    p.add_argument("--mode", choices=["toric", "flag", "wigner"])
    p.add_argument("--n")
    p.add_argument("--lambda")
    p.add_argument("--g", choices=["rotation", "haar", "file"])
    p.add_argument("--beta")
    p.add_argument("--seed")
    p.add_argument("--g-file", dest="g_file")
    p.add_argument("--v")
    p.add_argument("--w")
    p.add_argument("--p")
    p.add_argument("--selection", choices=["fixed", "nearest"])
    p.add_argument("--maslov", choices=["calibrated", "predicted"])
    p.add_argument("--calibration-p", dest="calibration_p")
    p.add_argument("--window")
    p.add_argument("--starts")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--dat")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(level=args.log_level, json_logs=args.log_json)
    try:
        return args.func(args)
    except DimensionGuardError as e:
        logger.error(f"Dimension guard: {e}")
        return EXIT_GUARD
    except (ConfigError, InvalidWeightError, ValueError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INPUT
    except GZSCError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
