"""Command line entry point: ``ife-lab study ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .geometry import HypothesisViolation
from .study import BOTH, INTERP, SOLVE, StudyConfig, run_study, write_csv
from .system import NoConvergence

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_HYPOTHESIS = 2
EXIT_SOLVER = 3

_FLAG_KEYS = ("mesh", "family", "partition", "flux", "beta_minus", "beta_plus", "levels", "n0", "mode", "curve", "r0")


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ife-lab", description="Nonconforming IFE convergence studies.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    st = sub.add_parser("study", help="run an interpolation and/or Galerkin convergence study")
    st.add_argument("--config", help="key=value file mirroring the flags; flags take precedence")
    st.add_argument("--mesh", choices=["tri", "rect"])
    st.add_argument("--family", choices=["cr", "rq1"])
    st.add_argument("--partition", choices=["curve", "line"])
    st.add_argument("--flux", choices=["curve-mid", "line-mid"])
    st.add_argument("--beta-minus", type=float)
    st.add_argument("--beta-plus", type=float)
    st.add_argument("--levels", type=int)
    st.add_argument("--n0", type=int, help="cells per side on the coarsest level")
    st.add_argument("--mode", choices=[INTERP, SOLVE, BOTH])
    st.add_argument("--curve", choices=["circle"])
    st.add_argument("--r0", type=float, help="circle radius")
    st.add_argument("--out", required=True, help="CSV path; mode 'both' writes <stem>_interp.csv and <stem>_solve.csv")
    return parser


def output_paths(out: str, modes) -> dict[str, Path]:
    out = Path(out)
    if len(modes) == 1:
        return {modes[0]: out}
    return {m: out.with_name(f"{out.stem}_{m}{out.suffix or '.csv'}") for m in modes}


def _root_cause(exc: BaseException):
    seen = []
    while exc is not None and exc not in seen:
        seen.append(exc)
        exc = exc.__cause__ or getattr(exc, "cause", None)
    return seen


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        settings = read_config(args.config) if args.config else {}
        for key in _FLAG_KEYS:
            val = getattr(args, key)
            if val is not None:
                settings[key] = val
        cfg = StudyConfig.from_mapping(settings)
    except (OSError, ValueError, TypeError) as exc:
        print(f"ife-lab: {exc}", file=sys.stderr)
        return EXIT_ERROR

    try:
        reports = run_study(cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        chain = _root_cause(exc)
        print(f"ife-lab: {exc}", file=sys.stderr)
        if any(isinstance(e, HypothesisViolation) for e in chain):
            return EXIT_HYPOTHESIS
        if any(isinstance(e, NoConvergence) for e in chain):
            return EXIT_SOLVER
        return EXIT_ERROR

    for mode, path in output_paths(args.out, list(reports)).items():
        write_csv(reports[mode], path)
        print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
