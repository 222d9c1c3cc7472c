"""Smoke test for the uavfed extension module.

Build and install first, e.g.

    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/uavfed-*.whl
"""

import math
import random
import sys

import uavfed


def check(cond, what):
    if not cond:
        print(f"FAIL {what}")
        sys.exit(1)
    print(f"ok   {what}")


def main():
    cfg = uavfed.default_config()
    check("[sim]" in cfg and "[fl]" in cfg, "default config renders as TOML")
    check(len(uavfed.config_hash(cfg)) == 64, "config hash is hex SHA-256")

    try:
        uavfed.config_hash("[sim]\nno_such_key = 1\n")
    except uavfed.UavfedError:
        check(True, "unknown config keys raise UavfedError")
    else:
        check(False, "unknown config keys raise UavfedError")

    codes, back, bounds = uavfed.quantize([0.0, 1.0, 0.5, 0.25], [16, 12, 8, 4])
    check(codes == [0, 4095, 128, 4], "quantization codes")
    check(abs(back[3] - 4 / 15) < 1e-12, "dequantized value")

    rng = random.Random(7)
    values = [rng.uniform(-5, 5) for _ in range(5000)]
    bits = uavfed.bit_widths([rng.uniform(-1, 1) for _ in values])
    check(min(bits) == 4 and max(bits) == 16, "bit widths span [4, 16]")
    _, back, bounds = uavfed.quantize(values, bits)
    check(all(abs(v - q) <= b for v, q, b in zip(values, back, bounds)), "reconstruction within bound")

    w = uavfed.aggregation_weights([0.8, 0.2])
    check(abs(w[0] - 0.8) < 1e-12 and abs(sum(w) - 1) < 1e-12, "aggregation weights")

    o = uavfed.oracle_check(snapshots=50, seed=3)
    check(o["snapshots"] == 50 and o["worst_rel"] <= 1e-9 and o["set_mismatches"] == 0, "oracle agreement")

    q = uavfed.quant_bench(seed=1)
    check(0.40 <= q["reduction"] <= 0.70, f"quantization saves {100 * q['reduction']:.1f}%")

    short = cfg.replace("episode_len = 300.0", "episode_len = 40.0")
    a = uavfed.run(short, seed=5, policy="random", episodes=2)
    b = uavfed.run(short, seed=5, policy="random", episodes=2)
    check(len(a) == 2 and a == b, "seeded runs repeat exactly")
    check(all(0 <= e["deadline_rate"] <= 1 and e["violations"] == 0 for e in a), "episode metrics in range")

    learned = uavfed.run(short, seed=5, policy="learned", episodes=1)
    check(math.isfinite(learned[0]["f_energy_j"]), "learned policy runs")
    print("smoke test passed")


if __name__ == "__main__":
    main()
