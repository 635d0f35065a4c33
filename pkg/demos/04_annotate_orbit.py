"""Label a synthetic video by chaining camera displacements.

A camera circles the bottle for 30 frames. Only the first frame's object
pose and the frame-to-frame camera motion are handed to the annotator, as
a registration tool would produce them. Frames 12 and 13 are marked as
blurred. The annotator recovers every other frame's object pose and part
masks; we compare with the ground truth used to make the video.
"""
import json
import math
import tempfile
from pathlib import Path

import numpy as np

from wristservo.annotation import annotate_sequence, load_annotation_input, write_annotations
from wristservo.bench import look_rotation
from wristservo.geometry import Pose, compose, inverse
from wristservo.scenes import make_bottle
from wristservo.vision import CameraIntrinsics

bottle = make_bottle()
intr = CameraIntrinsics()
target = np.array([0.0, 0.0, 0.08])

truth = []  # T_{c^k,o}
for k in range(30):
    az, el = 0.12 * k, math.radians(25 + 10 * math.sin(0.2 * k))
    p = target + 0.45 * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    truth.append(inverse(Pose(look_rotation(target - p), p)))

doc = {
    "convention": "T_prev_to_next",
    "initial_pose": truth[0].to_dict(),
    "displacements": [{"frame": k + 1, "pose": compose(truth[k - 1], inverse(truth[k])).to_dict()}
                      for k in range(1, 30)],
    "discarded": [12, 13],
    "intrinsics": intr.to_dict(),
}

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    (tmp / "input.json").write_text(json.dumps(doc))
    (tmp / "bottle.json").write_text(json.dumps(bottle.to_dict()))
    inp = load_annotation_input(tmp / "input.json", tmp / "bottle.json")
    result = annotate_sequence(inp)
    manifest = json.loads(write_annotations(result, inp, tmp / "out").read_text())

    worst = max(np.abs(f.pose.matrix() - truth[f.frame_index - 1].matrix()).max() for f in result.frames)
    print(f"annotated {len(result.frames)} of 30 frames; chain gaps at {manifest['gaps']}")
    print(f"largest pose error against ground truth: {worst:.2e}")
    f = result.frames[0]
    for m in f.masks:
        print(f"frame 1 {m.label.tag:<9} {len(m):>6} px, centroid ({m.centroid[0]:.1f}, {m.centroid[1]:.1f})")
    print("files:", ", ".join(manifest["files"][:3]), "...")
