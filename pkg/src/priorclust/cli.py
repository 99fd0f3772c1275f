"""Command-line pipeline: associate, eval, baseline, train-toy, bench.

Exit codes: 0 success, 1 user/input error, 2 internal invariant violation.
Primary output artifacts (group CSVs, report JSON, weights, history JSONL)
are byte-identical across runs with equal flags and seed; benchmark and
wall-time fields are measurements and naturally vary.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .association import associate_dataset, greedy_associate, select_candidates
from .baselines import DbscanParams, KmeansParams, resolve_noise, semi_dbscan, semi_kmeans
from .data import (
    DatasetSplit,
    SyntheticSpec,
    generate_synthetic,
    load_features,
    load_groups,
    load_ground_truth,
    load_labels,
    make_split,
    save_groups,
)
from .distance import RerankParams, cosine_distance_matrix, k_reciprocal_jaccard
from .errors import InputError, InternalInvariantError
from .evaluation import acc_report
from .training import ToyModel, TrainConfig, train_toy


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract reserves 2 for bugs
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _dump_json(obj, path=None, echo=True) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if echo:
        print(text)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def cmd_associate(args) -> int:
    feats = load_features(args.features)
    labels = load_labels(args.labels)
    t0 = time.perf_counter()
    result = associate_dataset(
        feats,
        labels,
        threshold=args.threshold,
        rerank=RerankParams(args.k1, args.k2),
        subset_ratio=args.subset_ratio,
        seed=args.seed,
    )
    wall_ms = (time.perf_counter() - t0) * 1000.0
    save_groups(args.out, result.group_labels)
    summary = {
        "num_groups": result.num_groups,
        "num_unassigned_before_assign": result.num_unassigned_before_assign,
        "candidate_pair_count": result.candidate_pair_count,
        "wall_time_ms": wall_ms,
    }
    summary_path = args.summary or str(Path(args.out).with_suffix(".json"))
    _dump_json(summary, summary_path)
    return 0


def cmd_eval(args) -> int:
    pred = load_groups(args.pred)
    truth = load_ground_truth(args.truth)
    labels = load_labels(args.labels)
    report = acc_report(pred, truth, labels)
    _dump_json(report.to_dict(), args.out)
    return 0


def cmd_baseline(args) -> int:
    feats = load_features(args.features)
    labels = load_labels(args.labels)
    if args.algo == "semi-kmeans":
        if args.k is None:
            raise InputError("semi-kmeans requires --k")
        params = KmeansParams(k=args.k, max_iters=args.max_iters, seed=args.seed, tol=args.tol)
        assignment = semi_kmeans(feats, labels, params)
    else:
        constrained = args.algo == "semi-dbscan-constrained"
        params = DbscanParams(eps=args.eps, min_pts=args.min_pts, constrained=constrained)
        dist = cosine_distance_matrix(feats)
        assignment = semi_dbscan(dist, labels, params)
        assignment = resolve_noise(feats, assignment)
    save_groups(args.out, assignment)
    ids = np.unique(assignment[assignment >= 0])
    _dump_json({"algo": args.algo, "num_clusters": int(ids.size)})
    return 0


def cmd_train_toy(args) -> int:
    file_mode = any(x is not None for x in (args.features, args.labels, args.truth))
    if file_mode:
        if None in (args.features, args.labels, args.truth):
            raise InputError("file mode needs --features, --labels and --truth together")
        feats = load_features(args.features)
        labels = load_labels(args.labels)
        truth = load_ground_truth(args.truth)
        train_seed = args.seed
    else:
        data_seed, split_seed, train_seed = (
            int(s) for s in np.random.SeedSequence(args.seed).generate_state(3)
        )
        spec = SyntheticSpec(
            num_classes=args.classes,
            points_per_class=args.points_per_class,
            ambient_dim=args.dim,
            noise_sigma=args.sigma,
            seed=data_seed,
        )
        feats, truth = generate_synthetic(spec)
        labels = make_split(
            truth, DatasetSplit(args.known_ratio, args.labeled_ratio, seed=split_seed)
        )
    if truth.shape != (feats.rows,):
        raise InputError("ground truth length does not match feature count")

    cfg = TrainConfig(
        threshold=args.threshold,
        temperature=args.tau,
        momentum=args.mu,
        subset_ratio=args.subset_ratio,
        seed=train_seed,
        epochs=args.epochs,
        lr=args.lr,
        batch_p=args.p,
        batch_k=args.k,
        k1=args.k1,
        k2=args.k2,
    )
    model = ToyModel.identity(feats.dim)
    result = train_toy(feats, labels, model, cfg, truth=truth)

    np.save(args.out_weights, result.model.weight)
    with open(args.out_history, "w") as fh:
        for record in result.history:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    report = acc_report(result.final_labels, truth, labels)
    _dump_json(report.to_dict(), args.out_report)
    return 0


def run_bench(
    sizes,
    dim: int = 32,
    classes: int = 16,
    sigma: float = 0.1,
    threshold: float = 0.35,
    k1: int = 20,
    k2: int = 6,
    known_class_ratio: float = 0.5,
    labeled_sample_ratio: float = 0.5,
    reps: int = 3,
    seed: int = 0,
    threads: int = 1,
) -> dict:
    """Time the distance and greedy stages over several dataset sizes.

    Reports the median of ``reps`` repetitions per stage and, given at least
    two sizes, the log-log slope of distance time vs node count and of
    greedy time vs candidate-pair count.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise InputError("at least one size is required")
    if any(s < 64 for s in sizes):
        raise InputError("benchmark sizes must be at least 64")
    if reps < 3:
        raise InputError("at least 3 repetitions are required")

    per_size = []
    with threadpool_limits(limits=threads):
        for n in sizes:
            ppc = max(2, round(n / classes))
            spec = SyntheticSpec(classes, ppc, dim, sigma, seed=seed)
            feats, truth = generate_synthetic(spec)
            labels = make_split(
                truth, DatasetSplit(known_class_ratio, labeled_sample_ratio, seed=seed)
            )
            from .association import build_hybrid  # local: avoids cycle at import

            hybrid = build_hybrid(feats, labels)
            nodes = hybrid.features.rows
            params = RerankParams(k1, k2).clipped(nodes)

            dist_times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                W = k_reciprocal_jaccard(hybrid.features, params)
                dist_times.append(time.perf_counter() - t0)
            cands = select_candidates(W, threshold, hybrid.num_known_classes)
            greedy_times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                greedy_associate(cands, nodes)
                greedy_times.append(time.perf_counter() - t0)
            per_size.append(
                {
                    "requested_size": n,
                    "nodes": nodes,
                    "candidate_pairs": len(cands),
                    "distance_s_median": float(np.median(dist_times)),
                    "greedy_s_median": float(np.median(greedy_times)),
                    "reps": reps,
                }
            )

    out = {"per_size": per_size, "threads": threads}
    if len(per_size) >= 2:
        xs = np.log([r["nodes"] for r in per_size])
        ys = np.log([r["distance_s_median"] for r in per_size])
        out["distance_loglog_slope"] = float(np.polyfit(xs, ys, 1)[0])
        pair_counts = [r["candidate_pairs"] for r in per_size]
        if all(c > 0 for c in pair_counts) and len(set(pair_counts)) >= 2:
            xs = np.log(pair_counts)
            ys = np.log([r["greedy_s_median"] for r in per_size])
            out["greedy_vs_pairs_slope"] = float(np.polyfit(xs, ys, 1)[0])
    return out


def cmd_bench(args) -> int:
    sizes = [s for s in args.sizes.split(",") if s]
    try:
        sizes = [int(s) for s in sizes]
    except ValueError:
        raise InputError(f"--sizes must be comma-separated integers, got {args.sizes!r}")
    result = run_bench(
        sizes,
        dim=args.dim,
        classes=args.classes,
        sigma=args.sigma,
        threshold=args.threshold,
        k1=args.k1,
        k2=args.k2,
        reps=args.reps,
        seed=args.seed,
        threads=args.threads,
    )
    _dump_json(result, args.out)
    return 0


def _add_rerank_flags(p):
    p.add_argument("--k1", type=int, default=20, help="k-reciprocal neighborhood size")
    p.add_argument("--k2", type=int, default=6, help="local query expansion size")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="priorclust", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("associate", help="prior-constrained association of a dataset")
    p.add_argument("--features", required=True, help="PALF feature file")
    p.add_argument("--labels", required=True, help="index,label CSV (-1 = unlabeled)")
    p.add_argument("--threshold", type=float, default=0.35,
                   help="association distance threshold (0.6 suits coarser data)")
    _add_rerank_flags(p)
    p.add_argument("--subset-ratio", type=float, default=1.0, dest="subset_ratio")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output index,group CSV")
    p.add_argument("--summary", default=None, help="summary JSON path (default: out with .json)")
    p.set_defaults(func=cmd_associate)

    p = sub.add_parser("eval", help="All/Old/New clustering accuracy report")
    p.add_argument("--pred", required=True, help="predicted index,group CSV")
    p.add_argument("--truth", required=True, help="ground-truth index,label CSV")
    p.add_argument("--labels", required=True, help="partial-label index,label CSV")
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="constrained clustering baselines")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--algo", required=True,
                   choices=["semi-kmeans", "semi-dbscan", "semi-dbscan-constrained"])
    p.add_argument("--eps", type=float, default=0.5, help="DBSCAN radius")
    p.add_argument("--min-pts", type=int, default=4, dest="min_pts")
    p.add_argument("--k", type=int, default=None, help="cluster count for semi-kmeans")
    p.add_argument("--max-iters", type=int, default=100, dest="max_iters")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output index,group CSV")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("train-toy", help="iterative association + contrastive training")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--points-per-class", type=int, default=50, dest="points_per_class")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--known-ratio", type=float, default=0.5, dest="known_ratio")
    p.add_argument("--labeled-ratio", type=float, default=0.5, dest="labeled_ratio")
    p.add_argument("--features", default=None, help="PALF file (file mode)")
    p.add_argument("--labels", default=None, help="partial labels CSV (file mode)")
    p.add_argument("--truth", default=None, help="ground truth CSV (file mode)")
    p.add_argument("--threshold", type=float, default=0.35)
    p.add_argument("--tau", type=float, default=0.05, help="softmax temperature")
    p.add_argument("--mu", type=float, default=0.2, help="memory update rate")
    p.add_argument("--subset-ratio", type=float, default=1.0, dest="subset_ratio")
    _add_rerank_flags(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.2)
    p.add_argument("--p", type=int, default=8, help="pseudo-classes per batch")
    p.add_argument("--k", type=int, default=16, help="instances per pseudo-class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-weights", default="model.npy", dest="out_weights")
    p.add_argument("--out-history", default="history.jsonl", dest="out_history")
    p.add_argument("--out-report", default="report.json", dest="out_report")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("bench", help="scaling benchmark of the association stages")
    p.add_argument("--sizes", required=True, help="comma-separated instance counts")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--classes", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--threshold", type=float, default=0.35)
    _add_rerank_flags(p)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="timing JSON path")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InternalInvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 -- anything else is a bug
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
