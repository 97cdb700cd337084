#!/usr/bin/env python3
"""Regenerate the MS-SSIM reference values used by the test suite.

Computes tf.image.ssim_multiscale (an independent reference implementation)
over the deterministic image pairs in tests/imagegen.py and freezes the
results into tests/data/msssim_reference.json. Requires tensorflow, which is
deliberately NOT a test dependency; run this only when the pair definitions
change.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from imagegen import reference_pairs  # noqa: E402


def main() -> None:
    try:
        import tensorflow as tf
    except ImportError:
        sys.exit("tensorflow is required to regenerate fixtures: pip install tensorflow-cpu")

    values = {}
    for name, a, b in reference_pairs():
        v = tf.image.ssim_multiscale(tf.constant(a[None]), tf.constant(b[None]),
                                     max_val=1.0)
        values[name] = float(v.numpy()[0])
        print(f"{name:10s} {values[name]:.10f}")

    out = ROOT / "tests" / "data" / "msssim_reference.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(values, indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
