"""Command-line pipeline: adjacency construction, segmentation, evaluation,
Monte-Carlo robustness sweeps, and synthetic data generation.

All file formats live here.  Matrices travel as headerless CSV, one row per
line; feature files store one frame per row (N x D) and are transposed
internally.  Label and adjacency files hold one integer per line.  Every
JSON artifact carries a ``schema_version`` field and no timestamps, so
re-running a command with the same configuration and seed reproduces the
bytes exactly.

Exit codes: 0 success, 1 input/parse error, 2 oracle unavailable,
3 solver divergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datagen, metrics, solver, tvs
from .core import FeatureSequence, SolverConfig
from .errors import (
    DivergenceError,
    InvalidInputError,
    OracleUnavailableError,
    ProtocolError,
    SelectionError,
    SingularSystemError,
    UndefinedMetricError,
)
from .llm_client import EndpointConfig, LlmOracle

SCHEMA_VERSION = "1"
FLOAT_FMT = "%.9g"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ORACLE = 2
EXIT_DIVERGED = 3


# ---------------------------------------------------------------------------
# file formats


def write_matrix_csv(path, matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [",".join(FLOAT_FMT % v for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path):
    rows = []
    width = None
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise InvalidInputError(f"{path}: row {lineno}: {exc}") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise InvalidInputError(
                    f"{path}: row {lineno} has {len(row)} fields, expected {width}"
                )
            rows.append(row)
    if not rows:
        raise InvalidInputError(f"{path}: empty matrix file")
    return np.asarray(rows)


def write_labels(path, labels):
    Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def read_labels(path):
    values = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(line))
            except ValueError as exc:
                raise InvalidInputError(f"{path}: line {lineno}: {exc}") from exc
    if not values:
        raise InvalidInputError(f"{path}: empty label file")
    return np.asarray(values, dtype=int)


def write_eq(path, eq):
    bits = eq.eq if isinstance(eq, tvs.AdjacencySequence) else np.asarray(eq)
    Path(path).write_text("\n".join(str(int(b)) for b in bits) + "\n")


def read_eq(path):
    bits = read_labels(path)
    if not np.all((bits == 0) | (bits == 1)):
        raise InvalidInputError(f"{path}: adjacency entries must be 0 or 1")
    return tvs.AdjacencySequence(eq=bits)


def write_json(path, payload):
    payload = dict(payload)
    payload["schema_version"] = SCHEMA_VERSION
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_audit_log(path, audit):
    lines = [json.dumps(record.to_dict(), sort_keys=True) for record in audit]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# configuration


def load_config_defaults(path):
    """Flatten an INI file into argparse defaults; explicit flags still win."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise InvalidInputError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            values[key.replace("-", "_")] = value
    return values


def solver_config_from_args(args) -> SolverConfig:
    return SolverConfig(
        weight_fit=float(args.weight_fit),
        weight_sparse=float(args.weight_sparse),
        weight_tvs=float(args.weight_tvs),
        weight_cluster=float(args.weight_cluster),
        gamma0=float(args.gamma0),
        rho=float(args.rho),
        max_outer=int(args.max_outer),
        tol_rel_obj=float(args.tol),
        rng_seed=int(args.seed),
        k_range=(int(args.k_min), int(args.k_max)),
        normalize_columns=not args.no_normalize,
        z_prox=float(args.z_prox),
    )


def add_solver_flags(cmd):
    cmd.add_argument("--seed", default=0, help="rng seed")
    cmd.add_argument("--max-outer", default=50)
    cmd.add_argument("--tol", default=1e-6)
    cmd.add_argument("--gamma0", default=0.1)
    cmd.add_argument("--rho", default=1.1)
    cmd.add_argument("--k-min", default=2)
    cmd.add_argument("--k-max", default=10)
    cmd.add_argument("--weight-fit", default=SolverConfig().weight_fit)
    cmd.add_argument("--weight-sparse", default=1.0)
    cmd.add_argument("--weight-tvs", default=1.0)
    cmd.add_argument("--weight-cluster", default=1.0)
    cmd.add_argument("--z-prox", default=SolverConfig().z_prox)
    cmd.add_argument(
        "--no-normalize", action="store_true",
        help="keep raw column scales instead of unit l2 columns",
    )


def add_spec_flags(cmd):
    cmd.add_argument("--preset", choices=sorted(datagen.PRESETS), default=None)
    cmd.add_argument("--frames", type=int, default=300)
    cmd.add_argument("--segments", type=int, default=4)
    cmd.add_argument("--dim", type=int, default=30)
    cmd.add_argument("--subspace-dim", type=int, default=3)
    cmd.add_argument("--min-len", type=int, default=50)
    cmd.add_argument("--sigma", type=float, default=0.01)
    cmd.add_argument("--oblique", action="store_true", help="drop basis orthogonality")


def spec_from_args(args, seed) -> datagen.SyntheticSpec:
    if args.preset:
        return datagen.PRESETS[args.preset].with_(rng_seed=int(seed))
    return datagen.SyntheticSpec(
        n_frames=args.frames,
        n_segments=args.segments,
        ambient_dim=args.dim,
        subspace_dim=args.subspace_dim,
        min_segment_len=args.min_len,
        noise_std=args.sigma,
        orthogonal=not args.oblique,
        rng_seed=int(seed),
    )


# ---------------------------------------------------------------------------
# commands


def cmd_tvs(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if args.oracle == "replay":
        if not args.eq:
            raise InvalidInputError("--oracle replay needs --eq")
        oracle = tvs.ReplayOracle(read_eq(args.eq))
        n = oracle.pair_count + 1
        frames = list(range(n))
    elif args.oracle == "flip":
        if not args.truth:
            raise InvalidInputError("--oracle flip needs --truth")
        truth = read_eq(args.truth)
        oracle = tvs.GroundTruthOracle(
            truth, flip_probability=float(args.flip_p), rng_seed=int(args.seed)
        )
        n = oracle.pair_count + 1
        frames = list(range(n))
    else:
        if not args.frames_dir or not Path(args.frames_dir).is_dir():
            raise OracleUnavailableError(
                f"frames directory not available: {args.frames_dir}"
            )
        frames = sorted(Path(args.frames_dir).iterdir())
        if len(frames) < 2:
            raise OracleUnavailableError(f"need at least two frames in {args.frames_dir}")
        n = len(frames)
        endpoint = EndpointConfig(
            base_url=args.base_url,
            model_name=args.model,
            api_key_env_var=args.api_key_env,
            max_retries=int(args.max_retries),
            max_parallel=int(args.max_parallel),
            cache_dir=args.cache_dir,
        )
        oracle = LlmOracle(endpoint, template_id=args.prompt)

    sequence = tvs.build_adjacency(oracle, frames, n, max_parallel=int(args.max_parallel))
    structure = tvs.build_structure(sequence)

    write_eq(out / "eq.txt", sequence)
    write_matrix_csv(out / "G.csv", structure.g)
    write_audit_log(out / "audit.jsonl", sequence.audit)
    runs = len({tuple(b) for b in structure.bounds.tolist()})
    write_json(
        out / "tvs_summary.json",
        {
            "N": n,
            "num_runs": runs,
            "retries": int(sum(r.retries for r in sequence.audit)),
            "ambiguous_count": int(
                sum(1 for r in sequence.audit if "ambiguous_twice" in r.flags)
            ),
        },
    )
    print(f"wrote eq.txt, G.csv, audit.jsonl, tvs_summary.json to {out}")
    return EXIT_OK


def cmd_segment(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    features = read_matrix_csv(args.features)  # rows are frames
    x = FeatureSequence(features.T)
    g = read_matrix_csv(args.g)
    cfg = solver_config_from_args(args)

    try:
        report = solver.run(x, g, cfg)
    except DivergenceError as exc:
        write_json(
            out / "report.json",
            {
                "diverged": True,
                "error": str(exc),
                "trace": [b.to_dict() for b in exc.trace],
            },
        )
        raise

    write_labels(out / "labels.csv", report.labels)
    write_json(out / "report.json", report.to_dict())
    print(
        f"k={report.k} iterations={report.iterations} converged={report.converged} "
        f"neighbor_disagreement={report.neighbor_disagreement:.6f}"
    )
    return EXIT_OK


def cmd_eval(args):
    pred = read_labels(args.pred)
    truth = read_labels(args.truth)
    if pred.shape != truth.shape:
        raise InvalidInputError(
            f"length mismatch: {args.pred} has {pred.size}, {args.truth} has {truth.size}"
        )
    result = metrics.evaluate(truth, pred)
    for name, value in (
        ("acc", result.acc),
        ("nmi", result.nmi),
        ("precision", result.precision),
        ("ari", result.ari),
    ):
        print(f"{name} {value:.6f}")
    if args.out:
        write_json(args.out, result.to_dict())
    return EXIT_OK


def _simulate_trial(spec, p, trial, base_seed):
    seed = int(
        np.random.SeedSequence((int(base_seed), int(round(p * 1e6)), trial)).generate_state(1)[0]
    )
    inst = datagen.generate(spec.with_(rng_seed=seed))
    noisy = tvs.flip_adjacency(inst.eq_true, p, rng_seed=seed + 1)
    b_err = tvs.boundary_error_count(inst.eq_true, noisy)
    structure = tvs.build_structure(noisy)
    cfg = SolverConfig(rng_seed=seed, k_range=(2, max(2, 2 * spec.n_segments)))
    try:
        report = solver.run(inst.x, structure.g, cfg)
        result = metrics.evaluate(inst.labels, report.labels)
        return {"b_err": b_err, "acc": result.acc, "nmi": result.nmi, "error": None}
    except (DivergenceError, SingularSystemError, SelectionError) as exc:
        return {"b_err": b_err, "acc": None, "nmi": None, "error": str(exc)}


def cmd_simulate(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = spec_from_args(args, args.seed)
    p_list = [float(tok) for tok in str(args.p_list).split(",") if tok]
    trials = int(args.trials)
    if trials < 1:
        raise InvalidInputError("--trials must be at least 1")

    rows = []
    for p in p_list:
        if args.jobs and int(args.jobs) > 1:
            with ThreadPoolExecutor(max_workers=int(args.jobs)) as pool:
                outcomes = list(
                    pool.map(
                        lambda t: _simulate_trial(spec, p, t, args.seed), range(trials)
                    )
                )
        else:
            outcomes = [_simulate_trial(spec, p, t, args.seed) for t in range(trials)]
        b_errs = np.array([o["b_err"] for o in outcomes], dtype=float)
        accs = np.array([o["acc"] for o in outcomes if o["acc"] is not None])
        nmis = np.array([o["nmi"] for o in outcomes if o["nmi"] is not None])
        failures = sum(1 for o in outcomes if o["error"] is not None)

        def mean_stderr(values):
            if values.size == 0:
                return None, None
            stderr = (
                float(np.std(values, ddof=1) / np.sqrt(values.size))
                if values.size > 1
                else 0.0
            )
            return float(np.mean(values)), stderr

        mean_b, se_b = mean_stderr(b_errs)
        mean_acc, se_acc = mean_stderr(accs)
        mean_nmi, se_nmi = mean_stderr(nmis)
        rows.append(
            {
                "p": p,
                "trials": trials,
                "failures": failures,
                "mean_b_err": mean_b,
                "stderr_b_err": se_b,
                "ref_2pN": 2.0 * p * (spec.n_frames - 1),
                "mean_acc": mean_acc,
                "stderr_acc": se_acc,
                "mean_nmi": mean_nmi,
                "stderr_nmi": se_nmi,
            }
        )

    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(
                "" if row[k] is None else (FLOAT_FMT % row[k] if isinstance(row[k], float) else str(row[k]))
                for k in header
            )
        )
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    write_json(out / "sweep.json", {"rows": rows})
    for row in rows:
        print(
            f"p={row['p']:g} mean_b_err={row['mean_b_err']:.3f} "
            f"ref_2pN={row['ref_2pN']:.3f} mean_acc={row['mean_acc']}"
        )
    return EXIT_OK


def cmd_generate(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = spec_from_args(args, args.seed)
    inst = datagen.generate(spec)
    write_matrix_csv(out / "features.csv", inst.x.T)  # rows are frames
    write_labels(out / "labels.txt", inst.labels)
    write_eq(out / "eq.txt", inst.eq_true)
    write_json(
        out / "generate_summary.json",
        {
            "N": spec.n_frames,
            "K": spec.n_segments,
            "D": spec.ambient_dim,
            "subspace_dim": spec.subspace_dim,
            "segment_lengths": inst.segment_lengths.tolist(),
            "separation": datagen.separation(inst),
            "sigma": spec.noise_std,
        },
    )
    print(f"wrote features.csv, labels.txt, eq.txt to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvseg",
        description=(
            "Temporally coherent subspace segmentation. Feature CSV files "
            "store one frame per row (N rows x D columns)."
        ),
    )
    parser.add_argument("--config", help="INI file with section.key defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p_tvs = sub.add_parser("tvs", help="build the adjacency structure and G matrix")
    p_tvs.add_argument("--oracle", choices=["llm", "replay", "flip"], default="replay")
    p_tvs.add_argument("--eq", help="adjacency file for the replay oracle")
    p_tvs.add_argument("--truth", help="ground-truth adjacency file for the flip oracle")
    p_tvs.add_argument("--flip-p", default=0.0, help="flip probability")
    p_tvs.add_argument("--frames-dir", help="directory of frame images for the llm oracle")
    p_tvs.add_argument("--prompt", default="baseline")
    p_tvs.add_argument("--base-url", default="http://localhost:8000/v1")
    p_tvs.add_argument("--model", default="gpt-4o")
    p_tvs.add_argument("--api-key-env", default="TVSEG_API_KEY")
    p_tvs.add_argument("--max-retries", default=2)
    p_tvs.add_argument("--max-parallel", default=1)
    p_tvs.add_argument("--cache-dir", default=None)
    p_tvs.add_argument("--seed", default=0)
    p_tvs.add_argument("--out-dir", required=True)
    p_tvs.set_defaults(func=cmd_tvs)

    p_seg = sub.add_parser("segment", help="run the segmentation solver")
    p_seg.add_argument("--features", required=True, help="feature CSV, one frame per row")
    p_seg.add_argument("--g", required=True, help="structure matrix CSV")
    p_seg.add_argument("--out-dir", required=True)
    add_solver_flags(p_seg)
    p_seg.set_defaults(func=cmd_segment)

    p_eval = sub.add_parser("eval", help="score predicted labels against truth")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--truth", required=True)
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo robustness sweep over flip rates")
    add_spec_flags(p_sim)
    p_sim.add_argument("--p-list", default="0.02,0.05,0.1")
    p_sim.add_argument("--trials", default=20)
    p_sim.add_argument("--jobs", default=1)
    p_sim.add_argument("--seed", default=0)
    p_sim.add_argument("--out-dir", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_gen = sub.add_parser("generate", help="write a synthetic sequence to disk")
    add_spec_flags(p_gen)
    p_gen.add_argument("--seed", default=0)
    p_gen.add_argument("--out-dir", required=True)
    p_gen.set_defaults(func=cmd_generate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, remaining = parser.parse_known_args(argv)
    if args.config:
        try:
            defaults = load_config_defaults(args.config)
        except InvalidInputError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        parser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    elif remaining:
        parser.error(f"unrecognized arguments: {' '.join(remaining)}")

    try:
        return args.func(args)
    except OracleUnavailableError as exc:
        pair = "" if exc.pair_index is None else f" (pair {exc.pair_index})"
        print(f"oracle unavailable{pair}: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except ProtocolError as exc:
        print(f"oracle protocol error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except DivergenceError as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InvalidInputError, UndefinedMetricError, SelectionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
