"""Generate the shipped JSON config resources (landmark schema, partition, pairing, offsets).

Run from the repo root:  python scripts/make_configs.py
"""

import json
from pathlib import Path

# (name, phi_deg, region) for the 16 midline landmarks; theta = 0 (straight ahead).
MIDLINE = [
    ("trichion", 38.0, "forehead"),
    ("metopion", 52.0, "forehead"),
    ("supraglabella", 62.0, "forehead"),
    ("glabella", 70.0, "forehead"),
    ("nasion", 78.0, "middle"),
    ("rhinion", 88.0, "middle"),
    ("mid_nasal", 95.0, "middle"),
    ("pronasale", 100.0, "middle"),
    ("subnasale", 108.0, "middle"),
    ("philtrum", 113.0, "mouth"),
    ("labrale_superius", 118.0, "mouth"),
    ("stomion", 123.0, "mouth"),
    ("labrale_inferius", 128.0, "mouth"),
    ("mentolabial", 134.0, "chin"),
    ("pogonion", 142.0, "chin"),
    ("gnathion", 152.0, "chin"),
]

# (name, theta_deg, phi_deg, region) for the 31 bilateral pairs; theta > 0 is the
# +x half-space ("left" side), the right twin sits at -theta.
PAIRS = [
    ("frontal_eminence", 18.0, 48.0, "forehead"),
    ("lateral_forehead", 36.0, 55.0, "forehead"),
    ("frontotemporale", 52.0, 62.0, "forehead"),
    ("superciliare", 22.0, 70.0, "forehead"),
    ("supraorbitale", 14.0, 74.0, "forehead"),
    ("temporale", 62.0, 72.0, "forehead"),
    ("parietal_eminence", 55.0, 45.0, "forehead"),
    ("orbitale_superius", 20.0, 78.0, "middle"),
    ("ectoconchion", 34.0, 80.0, "middle"),
    ("orbitale", 22.0, 88.0, "middle"),
    ("infraorbitale", 20.0, 92.0, "middle"),
    ("lateral_nose", 16.0, 97.0, "middle"),
    ("alare", 12.0, 103.0, "middle"),
    ("zygion", 58.0, 88.0, "cheeks"),
    ("mid_zygomatic", 48.0, 85.0, "cheeks"),
    ("zygomaxillare", 38.0, 92.0, "cheeks"),
    ("mid_cheek", 36.0, 100.0, "cheeks"),
    ("buccal", 44.0, 108.0, "cheeks"),
    ("mid_masseter", 55.0, 105.0, "cheeks"),
    ("nasolabial", 22.0, 110.0, "cheeks"),
    ("tragion", 88.0, 85.0, "cheeks"),
    ("supra_auricular", 80.0, 70.0, "cheeks"),
    ("mastoidale", 95.0, 105.0, "cheeks"),
    ("supracanine", 14.0, 117.0, "mouth"),
    ("cheilion", 20.0, 123.0, "mouth"),
    ("lateral_mouth", 28.0, 122.0, "mouth"),
    ("infracanine", 14.0, 129.0, "mouth"),
    ("gonion", 62.0, 118.0, "chin"),
    ("mandibular_border", 40.0, 128.0, "chin"),
    ("mid_mandibular", 28.0, 136.0, "chin"),
    ("lateral_chin", 16.0, 144.0, "chin"),
]

# Per-landmark mean tissue depth (mm) and thickness-mode weight baked into the
# schema so the synthetic depth generator has an anatomical-looking profile.
REGION_DEPTH = {"forehead": 6.0, "middle": 6.5, "cheeks": 12.5, "mouth": 10.5, "chin": 9.0}
REGION_MODE = {"forehead": 0.8, "middle": 0.9, "cheeks": 1.5, "mouth": 1.2, "chin": 1.2}
# deterministic per-name wiggle keeps the profile from being region-flat
DEPTH_WIGGLE = {
    "rhinion": -1.5, "pronasale": 1.5, "nasion": 0.5, "mid_nasal": -1.0,
    "glabella": 1.0, "metopion": 0.4, "trichion": -0.5,
    "buccal": 4.0, "mid_masseter": 3.0, "mid_cheek": 1.5, "zygion": -3.0,
    "tragion": -4.0, "mastoidale": -3.0, "supra_auricular": -3.5,
    "gonion": 1.5, "gnathion": -1.5, "pogonion": 1.0,
    "cheilion": 1.0, "stomion": -1.0, "supracanine": 0.5,
}


def main():
    out = Path(__file__).resolve().parents[1] / "src" / "cranioforge" / "config"
    out.mkdir(parents=True, exist_ok=True)

    landmarks = []
    for name, phi, region in MIDLINE:
        landmarks.append({
            "name": name, "side": "mid", "region": region,
            "theta_deg": 0.0, "phi_deg": phi,
        })
    for name, theta, phi, region in PAIRS:
        landmarks.append({
            "name": f"{name}_l", "side": "left", "region": region,
            "theta_deg": theta, "phi_deg": phi,
        })
        landmarks.append({
            "name": f"{name}_r", "side": "right", "region": region,
            "theta_deg": -theta, "phi_deg": phi,
        })

    for lm in landmarks:
        base = lm["name"].removesuffix("_l").removesuffix("_r")
        lm["mean_depth_mm"] = REGION_DEPTH[lm["region"]] + DEPTH_WIGGLE.get(base, 0.0)
        lm["thickness_weight"] = REGION_MODE[lm["region"]]

    schema = {
        "name": "cranioforge-78",
        "ear_left": "tragion_l",
        "ear_right": "tragion_r",
        "nose_tip": "pronasale",
        "landmarks": landmarks,
    }

    partition = {}
    for i, lm in enumerate(landmarks):
        partition.setdefault(lm["region"], []).append(i)

    pairing = {
        "left": [i for i, lm in enumerate(landmarks) if lm["side"] == "left"],
        "right": [i for i, lm in enumerate(landmarks) if lm["side"] == "right"],
        "mid": [i for i, lm in enumerate(landmarks) if lm["side"] == "mid"],
    }

    # Invented stand-ins for profile-conditioned initial faces: sparse latent
    # offsets per attribute value. Component 0 is the overall-volume field.
    offsets = {
        "face_shape": {
            "Normal": {},
            "Fat": {"0": 0.8},
            "Thin": {"0": -0.8},
        },
        "gender": {
            "Female": {"1": -0.5, "3": 0.2},
            "Male": {"1": 0.5, "3": -0.2},
        },
        "age": {
            "10 to 20": {"2": -0.6},
            "20 to 30": {"2": -0.2},
            "30 to 50": {"2": 0.2},
            "50 to 70": {"2": 0.6},
        },
        "ancestry": {
            "African": {"4": 0.45, "5": -0.15},
            "Asian": {"4": -0.45, "5": -0.15},
            "European": {"4": 0.15, "5": 0.45},
            "Latino": {"4": -0.15, "5": 0.15},
        },
    }

    def dump(name, obj):
        (out / name).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
        print(f"wrote {out / name}")

    dump("schema78.json", schema)
    dump("region_partition.json", partition)
    dump("symmetry_pairing.json", pairing)
    dump("attribute_offsets.json", offsets)

    assert len(landmarks) == 78, len(landmarks)
    assert len(pairing["left"]) == len(pairing["right"]) == 31
    assert len(pairing["mid"]) == 16
    assert sum(len(v) for v in partition.values()) == 78
    assert len(partition) == 5


if __name__ == "__main__":
    main()
