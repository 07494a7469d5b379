"""
Watching the scale controller react to exploding gradients
===========================================================

During backpropagation we read the gradient norm at every scaled memory node
``S h_t``. If the norms grow as we go back in time, S shrinks; if they decay,
the update wants S > 1 and gets clipped to 1.
"""

import numpy as np

from dmu import autodiff as ad
from dmu.cells import build_model
from dmu.scaling import ScaleController, capture_norms, update_scale
from dmu.tasks import batches, make_split, make_task
from dmu.training import task_loss

task = make_task("adding", "desk")
xs, ys = batches(make_split(task, (8, 8, 8), seed=1).validation, 8)[0]

# A hand-built block with a gain of 2.25 per step: zero state, identity
# weights of 1.5 in both FNN layers, gate shut so the candidate always wins.
model = build_model("dmu", (5, 5), 2, 1, np.random.default_rng(1))
block = model.block
for p in block.params:
    p.value[...] = 0.0
block.weights[0].value[2:, :] = 1.5 * np.eye(5)
block.weights[1].value[:, 5:] = 1.5 * np.eye(5)
block.biases[-1].value[0, :5] = -30.0

ctrl = ScaleController()
for episode in range(8):
    with ad.Tape() as tape:
        pred, handles = model.forward(xs, ctrl.S)
        loss = task_loss(pred, ys, "mse")
    tape.backward(loss)
    norms = capture_norms(handles)
    ctrl = update_scale(ctrl, norms)
    print(f"episode {episode}: first/last norm {norms[0] / norms[-1]:10.3g}   S -> {ctrl.S:.4f}")

# Each step multiplies the backward signal by 2.25 S, so the controller
# drives S toward 1/2.25 ~ 0.44; the 1/k averaging makes the approach slow.

# The same loop with a fresh randomly initialised model: norms decay going
# back, and S stays pinned at 1.
model = build_model("dmu", (5, 5), 2, 1, np.random.default_rng(2))
ctrl = ScaleController()
for episode in range(3):
    with ad.Tape() as tape:
        pred, handles = model.forward(xs, ctrl.S)
        loss = task_loss(pred, ys, "mse")
    tape.backward(loss)
    ctrl = update_scale(ctrl, capture_norms(handles))
    print("random init, S =", ctrl.S)
