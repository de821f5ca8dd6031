"""Sweep the number of query variants on the synthetic two-facet benchmark.

Half the evidence for most questions sits behind an alias that only the
second variant mentions, so EM should climb from n=1 to n=2 and stay flat.
"""

import argparse

from expandsqueeze import BM25Index, Collaborators, RolloutConfig
from expandsqueeze.bench import SweepSpec, run_sweep, write_sweep
from expandsqueeze.synthetic import make_benchmark, oracle_policy, reader_squeezer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--questions", type=int, default=30)
    ap.add_argument("--top-k", type=int, default=1)
    ap.add_argument("--values", default="1,2,3")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default=None)
    args = ap.parse_args()

    bench = make_benchmark(n_questions=args.questions, seed=args.seed)
    index = BM25Index()
    index.build(bench.docs)
    spec = SweepSpec(
        "n_expansions",
        tuple(int(v) for v in args.values.split(",")),
        RolloutConfig(top_k=args.top_k),
        args.seed,
    )
    cells = run_sweep(spec, bench.questions, Collaborators(oracle_policy(bench), index, reader_squeezer()))
    for c in cells:
        print(f"n={c.axis_value}  em_mean={c.report.overall['em_mean']:.3f}")
    if args.out_dir:
        print(*write_sweep(cells, spec, args.out_dir))


if __name__ == "__main__":
    main()
