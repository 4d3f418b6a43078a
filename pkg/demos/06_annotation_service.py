"""Drive the annotation HTTP service end to end, in process.

The same app normally runs via `dopose serve --dataset <root>`; here it
is exercised through the ASGI test client so the demo needs no open
port.  The flow mirrors what the browser UI does: browse, preview an
overlay, save the reference annotation, propagate, generate masks, poll
the job.
"""

import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from dopose.service import create_app
from dopose.synthetic import build_demo_dataset

root = Path(tempfile.mkdtemp(prefix="dopose_demo_"))
demo = build_demo_dataset(root / "data", n_views=3)
client = TestClient(create_app(demo.root, split="train"))

scenes = client.get("/api/scenes").json()
print("scenes:", scenes)

overlay = client.post("/api/scenes/0/views/0/overlay", json={
    "obj_id": 1,
    "rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1],
    "translation": [0.0, 0.0, 500.0],
    "tint": [255, 120, 0],
    "alpha": 0.5,
})
print(f"overlay render: {overlay.status_code}, {len(overlay.content)} PNG bytes")

ann = demo.reference
put = client.put("/api/scenes/0/annotation", json={
    "ref_view_id": ann.ref_view_id,
    "poses": [{"obj_id": obj_id,
               "rotation": pose.flat_rotation(),
               "translation": pose.flat_translation()}
              for obj_id, pose in ann.poses],
})
print("saved annotation:", put.json())

job = client.post("/api/scenes/0/propagate").json()
print("propagate job:", job)

job = client.post("/api/scenes/0/masks").json()
while job["status"] == "running":
    time.sleep(0.05)
    job = client.get(f"/api/jobs/{job['job_id']}").json()
print("masks job:", job)

print("scene status now:", client.get("/api/scenes").json()[0]["status"])
n = len(list((demo.scene_dir / "mask_visib").glob("*.png")))
print(f"{n} visible-mask files on disk")
