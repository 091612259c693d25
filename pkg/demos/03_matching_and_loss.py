"""One-to-one matching on a toy scene, and the training losses it drives.

Run: python demos/03_matching_and_loss.py
"""

import numpy as np

from podcount import (LossConfig, MatchConfig, ProposalSet, Tensor, cls_loss,
                      cost_matrix, loc_loss, match, total_loss)

# three ground-truth points; five proposals, two of them junk
gt = np.array([[10.0, 10.0], [30.0, 12.0], [22.0, 40.0]])
proposal_points = np.array([
    [11.0, 10.5],   # near gt 0
    [29.0, 13.0],   # near gt 1
    [21.0, 41.0],   # near gt 2
    [60.0, 60.0],   # background
    [5.0, 55.0],    # background
])
confidences = np.array([0.9, 0.8, 0.85, 0.4, 0.3])
props = ProposalSet(proposal_points, confidences, extents=(64, 64))

cfg = MatchConfig(tau=0.05)
d = cost_matrix(gt, props, cfg)
print("cost matrix (tau * distance - confidence):")
print(np.round(d, 3))

result = match(gt, props, cfg)
print("\nmatched pairs (gt -> proposal):", result.pairs)
print("background proposals:", result.negatives.tolist())

order_gt = [i for i, _ in result.pairs]
order_pr = [j for _, j in result.pairs]
loss_cfg = LossConfig(lambda1=0.5, lambda2=0.5)
loc = loc_loss(gt[order_gt], Tensor(proposal_points[order_pr]))
cls = cls_loss(Tensor(confidences), order_pr, loss_cfg)
total = total_loss(loc, cls, loss_cfg)
print(f"\nlocalization loss (mean squared px distance): {loc.item():.4f}")
print(f"classification loss:                          {cls.item():.4f}")
print(f"combined objective:                           {total.item():.4f}")

print("\nmoving every matched proposal onto its target zeroes the first term:")
perfect = loc_loss(gt[order_gt], Tensor(gt[order_gt].copy()))
print(f"localization loss at perfect alignment: {perfect.item():.4f}")
