"""Emit one training record per prompt variant for a generated skeleton."""
import json

from minsurf import CoordSystem, PromptVariant, convert_coords, make_dataset_record, random_skeleton

skel = random_skeleton(3, max_nodes=4)
for variant in PromptVariant:
    # the exact variant asks for coordinates relative to the anchor node
    target = CoordSystem.RELATIVE if variant is PromptVariant.TEXT_EXACT else CoordSystem.CAMERA
    line = make_dataset_record(f"images/{variant.value}.png", variant, convert_coords(skel, target))
    record = json.loads(line)
    print(variant.value, record["metadata"])
    print(record["messages"][1]["content"])
