#!/usr/bin/env python3
"""Generate the deterministic synthetic corpus used by the demos and tests.

Example:
    python scripts/make_synthetic_corpus.py --out corpus/ --subjects 3 --seed 0
"""

import argparse

from blendtalk.synthetic import generate_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="corpus root to create")
    parser.add_argument("--subjects", type=int, default=3)
    parser.add_argument("--clips-per-subject", type=int, default=2)
    parser.add_argument("--duration", type=float, default=2.0, help="seconds per clip")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    clip_ids = generate_corpus(
        args.out,
        subjects=args.subjects,
        clips_per_subject=args.clips_per_subject,
        duration=args.duration,
        seed=args.seed,
    )
    print(f"generated {len(clip_ids)} clips under {args.out}")
    for cid in clip_ids:
        print(f"  {cid}")


if __name__ == "__main__":
    main()
