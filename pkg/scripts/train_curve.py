"""Toy contrastive training on a synthetic world; prints the probe-loss and accuracy curves.

    python3 scripts/train_curve.py --steps 2000 --instances 2 --separable
"""

import argparse

from quadtrack.synthlab import ScenarioConfig, TrainConfig, toy_train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=TrainConfig.lr)
    ap.add_argument("--instances", type=int, default=2)
    ap.add_argument("--separable", action="store_true", help="no distractors and no rendered maps")
    ap.add_argument("--eval-every", type=int, default=250)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scen = ScenarioConfig(instances=args.instances, distractors=0, render=False) if args.separable \
        else ScenarioConfig(instances=args.instances)
    _, _, rep = toy_train(TrainConfig(steps=args.steps, lr=args.lr, eval_every=args.eval_every,
                                      scenario=scen, seed=args.seed))
    acc = dict(rep.accuracy_curve)
    print(f"{'step':>6}{'probe loss':>14}{'accuracy':>10}")
    for s, loss in rep.loss_curve:
        a = f"{acc[s]:10.3f}" if s in acc else ""
        print(f"{s:6d}{loss:14.6f}{a}")
    print(f"final held-out accuracy {rep.accuracy:.3f} (initial {rep.initial_accuracy:.3f})")


if __name__ == "__main__":
    main()
