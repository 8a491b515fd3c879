"""Smoke test for the vsrhpo extension module.

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import vsrhpo

space = vsrhpo.SearchSpace.hofvsr()
assert space.size == len(space) == 800, space
assert space.names == ["res_channels", "n_res", "up_channels"]
configs = space.enumerate()
assert configs[0] == {"res_channels": 32, "n_res": 1, "up_channels": 32}
for r in (0, 137, 799):
    enc = space.unrank(r)
    assert space.rank(enc) == r
    assert space.encode(space.decode(enc)) == enc
try:
    space.validate({"res_channels": 33, "n_res": 1, "up_channels": 32})
except ValueError:
    pass
else:
    raise AssertionError("off-grid config accepted")

with tempfile.TemporaryDirectory() as tmp:
    log = os.path.join(tmp, "tpe.jsonl")
    res = vsrhpo.run_search("tpe", seed=3, profile_seed=3, log_path=log)
    assert len(res["trials"]) == 24, len(res["trials"])
    assert all(t["status"] == "completed" for t in res["trials"])
    again = vsrhpo.read_log(log)
    assert again["complete"] and again["best_trial"] == res["best_trial"]
    assert again["best_objective"] == res["best_objective"]
    with open(log) as f:
        assert json.loads(f.readline())["type"] == "header"

    short = vsrhpo.run_search("smac", seed=1, max_trials=5, epochs=3,
                              sampler_params={"n_startup": 2})
    assert len(short["trials"]) == 5

cost = vsrhpo.hofvsr_cost(64, 5, 64)
print("cost {64,5,64} x4: %.4f M params, %.4f GFLOPs"
      % (cost["total_params"] / 1e6, cost["total_flops"] / 1e9))
assert cost["total_params"] == 667_073

a = [[10.0 * (4 * r + c) for c in range(4)] for r in range(4)]
b = [[v + 1 for v in row] for row in a]
assert abs(vsrhpo.psnr(a, b) - 48.1308) < 1e-3
assert math.isinf(vsrhpo.psnr(a, a))
flat_a = [[100.0] * 8 for _ in range(8)]
flat_b = [[110.0] * 8 for _ in range(8)]
assert abs(vsrhpo.ssim(flat_a, flat_b) - 0.99548) < 1e-4

print("best tpe trial %d, objective %.6f" % (res["best_trial"], res["best_objective"]))
print("smoke test ok")
