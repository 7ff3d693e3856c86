"""Finite-difference audit of the hand-written backprop.

Every gradient in this codebase is derived by hand, so we spot-check them
against central differences: the TD Huber loss used by the value learner
and the combined clipped-surrogate / entropy / value loss used by the
policy learner.  Points that sit within 1e-3 of a relu gate, the Huber
elbow, or the ratio clip edge are redrawn; finite differences are only
meaningful where the loss is locally smooth.
"""

import numpy as np

from sortline.neural import Network, grad_check
from sortline.dqn import q_loss_grad
from sortline.ppo import PpoConfig, log_softmax, ppo_losses_and_grads

MARGIN = 1e-3


def smooth_margin(net):
    return min(float(np.abs(z).min()) for z in net._preacts[:-1])


def check_q_loss(rng, n_points=5):
    worst = 0.0
    points = 0
    while points < n_points:
        net = Network([7, 16, 5], rng=rng)
        x = rng.normal(size=(6, 7))
        actions = rng.integers(0, 5, size=6)
        targets = rng.normal(size=6)
        q = net.forward(x)
        err = q[np.arange(6), actions] - targets
        if smooth_margin(net) < MARGIN or np.abs(np.abs(err) - 1.0).min() < MARGIN:
            continue
        points += 1
        e = grad_check(net, x, lambda out: q_loss_grad(out, actions, targets))
        print(f"  td huber loss, point {points}: max rel err {e:.3e}")
        worst = max(worst, e)
    return worst


def check_policy_loss(rng, n_points=5):
    cfg = PpoConfig(clip_eps=0.2, value_coef=0.5, entropy_coef=0.01)
    worst = 0.0
    points = 0
    while points < n_points:
        net = Network([6, 16, 5], rng=rng)  # 4 logits + 1 value output
        x = rng.normal(size=(6, 6))
        actions = rng.integers(0, 4, size=6)
        logp_old = np.log(rng.uniform(0.05, 0.9, size=6))
        adv = rng.normal(size=6)
        returns = rng.normal(size=6)
        out = net.forward(x)
        logp_new = log_softmax(out[:, :4])[np.arange(6), actions]
        ratios = np.exp(logp_new - logp_old)
        clip_margin = np.minimum(np.abs(ratios - (1 - cfg.clip_eps)),
                                 np.abs(ratios - (1 + cfg.clip_eps))).min()
        if smooth_margin(net) < MARGIN or clip_margin < MARGIN:
            continue
        points += 1

        def composite(out):
            logits, values = out[:, :4], out[:, 4]
            stats, dlogits, dvalues = ppo_losses_and_grads(
                logits, values, actions, logp_old, adv, returns, cfg)
            loss = stats["policy_loss"] + stats["value_loss"]
            return loss, np.concatenate([dlogits, dvalues[:, None]], axis=1)

        e = grad_check(net, x, composite)
        print(f"  policy composite, point {points}: max rel err {e:.3e}")
        worst = max(worst, e)
    return worst


def main():
    rng = np.random.default_rng(99)
    print("value loss gradient vs central differences (h=1e-5):")
    wq = check_q_loss(rng)
    print("\npolicy loss gradient vs central differences (h=1e-5):")
    wp = check_policy_loss(rng)
    print(f"\nworst relative error: q-loss {wq:.3e}, policy {wp:.3e} "
          f"({'ok' if max(wq, wp) < 1e-4 else 'SUSPECT'})")


if __name__ == "__main__":
    main()
