"""Replay a trigger log through the transport / rotation / grasping loop.

A ball rests on a stand. The user raises the arm (transport starts and the
wrist servos the merged ball+stand region to the image centre), fires the
rotation trigger (the part nearest the centre is chosen, the stand is
ineligible, and the wrist turns palm-down for a top grasp), then closes
and opens the hand and lowers the arm.
"""
import math

import numpy as np

from wristservo.bench import BENCH_INTRINSICS, place_hand
from wristservo.pipeline import parse_events, run_session
from wristservo.scenes import make_ball_on_stand
from wristservo.servo import ControllerConfig
from wristservo.wrist import JointState, WristParams, palm_normal_world

params = WristParams()
scene = make_ball_on_stand()
centre = scene.centroid_world()
elev = math.radians(45)
hand = place_hand(centre + 0.35 * np.array([math.cos(elev), 0.0, math.sin(elev)]), centre, 0.0,
                  params, JointState(0.0, 0.0))

log = [
    '{"t": 0,  "event": "ArmRaised"}',
    '{"t": 20, "event": "EmgRotationTrigger"}',
    '{"t": 22, "event": "EmgClose"}',
    '{"t": 24, "event": "EmgOpen"}',
    '{"t": 25, "event": "ArmLowered"}',
]
result = run_session(parse_events(log), scene, hand, JointState.from_degrees(20, 40), params,
                     ControllerConfig(), BENCH_INTRINSICS)

print("phases:", " -> ".join(p.value for p in result.phases()))
for r in result.records:
    if r.event is not None or r.phase is not r.phase_before:
        d = r.to_dict()
        print(f"t={r.t:6.2f}  {r.phase_before.value:>9} -> {r.phase.value:<9} {d['command']:<18} {d['values']}")

grasp_start = next(r for r in result.records if r.phase_before.value == "Rotation" and r.phase.value == "Grasping")
n = hand.rotation @ palm_normal_world(params, grasp_start.q)
print(f"palm normal when grasping starts: {np.round(n, 3)} "
      f"({math.degrees(math.acos(-n[2])):.1f} deg from straight down)")
