"""Run the synthetic drift benchmark and compare both linking arms.

Run from the repository root:

    python3 demos/continual_linking.py

The generator plants entity centers, drifts them each segment, and
samples noisy mention vectors around them.  The adaptive arm blends
each entity's stored vector with the mean of the mentions resolved to
it in the previous segment; the static arm pins the blend weight to 1.0
so entities never move.  Drift is what the adaptive arm can follow and
the static arm cannot.
"""

from __future__ import annotations

from chronolink.metrics import bin_by_jaccard
from chronolink.synth import SynthConfig, run_benchmark


def main() -> None:
    print(__doc__)
    config = SynthConfig(seed=0)
    report = run_benchmark(config)

    adaptive, static = report.arms
    print(f"seed {report.seed}, {config.n_entities} entities, "
          f"{config.mentions_per_segment} mentions per segment\n")
    print("test-segment top-1 accuracy (percent):")
    print(f"  {'segment':>9}  {'adaptive':>9}  {'static':>7}")
    for label in sorted(adaptive.accuracy_by_segment):
        a = adaptive.accuracy_by_segment[label]
        s = static.accuracy_by_segment[label]
        print(f"  {label:>9}  {a:9.2f}  {s:7.2f}")
    print(f"  {'mean':>9}  {adaptive.final_mean:9.2f}  {static.final_mean:7.2f}")
    print(f"\nadaptive beats static by {report.gap:.2f} points on this seed.")

    print("\naccuracy by surface-similarity bin (adaptive arm):")
    print("  mentions whose surface barely resembles the entity name land")
    print("  in bin 1; near-exact surfaces land in bin 5.")
    for bin_index, records in sorted(bin_by_jaccard(adaptive.records).items()):
        hits = sum(1 for r in records if r.gold_entity == r.ranked[0])
        print(f"  bin {bin_index}: {100.0 * hits / len(records):6.2f}  ({len(records)} mentions)")


if __name__ == "__main__":
    main()
