"""Same image, two flexion angles.

The camera sees the bottle right of centre in both starts; only the wrist
flexion differs (10 deg flexion vs 20 deg extension). pp-IBVS picks its
pronation direction from the image alone, so both starts rotate the same
way. s-IBVS mixes the two joints through the Jacobian and may not.
"""
import math

from wristservo.bench import run_fig3_scenario

result = run_fig3_scenario()
print(result.format())

for t in result.traces:
    q = t.result.final_q
    print(f"{t.controller:<8} start WFE {t.initial_wfe_deg:+5.1f} deg -> "
          f"final WFE {math.degrees(q.q_wfe):+6.1f} deg, WPS {math.degrees(q.q_wps):+7.1f} deg")
