"""Both controllers from the same twenty hemisphere starts.

Each start places the forearm 0.35 m from the bottle, looking at a random
point on its surface, with a random wrist configuration that keeps the
bottle in view. The two controllers then servo the wrist until the bottle
sits at the image centre. Run with ``python demos/01_compare_controllers.py``.
"""
from wristservo.bench import run_comparison

report = run_comparison(n_points=20, seed=7)
print(report.format_table())
print()

# Where the two controllers disagree on naturalness is the interesting part:
# s-IBVS is free to twist the forearm joint the "wrong" way round.
print("episode  s-IBVS natural  pp-IBVS natural  s-IBVS iters  pp-IBVS iters")
for i, (s, pp) in enumerate(report.episodes):
    flag = "  <-" if s.natural != pp.natural else ""
    print(f"{i:>7}  {str(s.natural):>14}  {str(pp.natural):>15}  {s.iterations:>12}  {pp.iterations:>13}{flag}")
