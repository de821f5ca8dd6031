"""Sweep retrieval depth on the synthetic benchmark with a fixed number of variants.

With a single literal variant, the alias-only occupation documents share no
terms with the query, so no depth recovers them: EM stays at the share of
questions whose facts sit in one document. Compare with n_sweep_synthetic.py.
"""

import argparse

from expandsqueeze import BM25Index, Collaborators, RolloutConfig
from expandsqueeze.bench import SweepSpec, run_sweep, write_sweep
from expandsqueeze.synthetic import make_benchmark, oracle_policy, reader_squeezer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--questions", type=int, default=30)
    ap.add_argument("--n-expansions", type=int, default=1)
    ap.add_argument("--values", default="1,3,5,10")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default=None)
    args = ap.parse_args()

    bench = make_benchmark(n_questions=args.questions, seed=args.seed)
    index = BM25Index()
    index.build(bench.docs)
    spec = SweepSpec(
        "top_k",
        tuple(int(v) for v in args.values.split(",")),
        RolloutConfig(n_expansions=args.n_expansions),
        args.seed,
    )
    cells = run_sweep(spec, bench.questions, Collaborators(oracle_policy(bench), index, reader_squeezer()))
    for c in cells:
        print(f"k={c.axis_value}  em_mean={c.report.overall['em_mean']:.3f}")
    if args.out_dir:
        print(*write_sweep(cells, spec, args.out_dir))


if __name__ == "__main__":
    main()
