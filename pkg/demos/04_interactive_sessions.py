"""Driving the session service: the side-by-side demo, scripted.

Launches `edgecl serve` as a subprocess, then replays the interactive
workflow over plain HTTP: create a TL and a CL session with the same seed,
stage samples per class, train cumulatively or class-by-class, and compare
per-class confidence readouts. Three scenarios:

  cumulative    all four classes trained in one call -- both models end up
                identical (replay never fires), same confidences
  new instances a second appearance of each class later on
  new classes   classes arrive one at a time -- the TL model ends up stuck
                on the last class while the CL model keeps all four

Run:  python3 demos/04_interactive_sessions.py
"""

import json
import subprocess
import sys
import time
import urllib.request

import numpy as np

from edgecl import Dataset, SynthSpec, generate_synthetic

DIM, CLASSES = 32, 4


def api(port, path, body=None):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}",
        data=None if body is None else json.dumps(body).encode(),
        headers={"content-type": "application/json"},
        method="GET" if body is None else "POST",
    )
    with urllib.request.urlopen(req, timeout=30) as resp:
        return json.loads(resp.read())


def stage_and_train(port, sessions, dataset, indices, scope):
    for i in indices:
        body = {"class": int(dataset.labels[i]), "features": [float(v) for v in dataset.features[i]]}
        for sid in sessions:
            api(port, f"/sessions/{sid}/samples", body)
    return [api(port, f"/sessions/{sid}/train", scope) for sid in sessions]


def confidence_table(port, sessions, names, dataset, note=""):
    print(f"    per-class confidence on held-out samples {note}")
    print(f"    {'class':>5} " + " ".join(f"{n:>12}" for n in names) + "   argmax")
    for cls in range(CLASSES):
        rows = np.flatnonzero(dataset.labels == cls)[:8]
        confs, votes = [], []
        for sid in sessions:
            probs = np.mean(
                [
                    api(port, f"/sessions/{sid}/predict",
                        {"features": [float(v) for v in dataset.features[i]]})["probs"]
                    for i in rows
                ],
                axis=0,
            )
            confs.append(probs[cls])
            votes.append(int(np.argmax(probs)))
        marks = " ".join(f"{c:>12.3f}" for c in confs)
        print(f"    {cls:>5} {marks}   {votes}")


def main():
    print(__doc__)
    proc = subprocess.Popen(
        [sys.executable, "-m", "edgecl.cli", "serve", "--port", "0", "--dim", str(DIM)],
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        text=True,
    )
    try:
        line = proc.stdout.readline().strip()
        port = int(line.split("http://")[1].split(" ")[0].rsplit(":", 1)[1])
        print(f"server up: {line}\n")
        time.sleep(0.3)

        # one generator call so both instances share class identities
        train, test, _ = generate_synthetic(
            SynthSpec(num_classes=CLASSES, instances_per_class=2,
                      samples_per_instance=50, dim=DIM, seed=21)
        )
        first = Dataset(
            train.features[train.instance_ids == 0], train.labels[train.instance_ids == 0]
        )
        second = Dataset(
            train.features[train.instance_ids == 1], train.labels[train.instance_ids == 1]
        )
        held_out = Dataset(
            test.features[test.instance_ids == 0], test.labels[test.instance_ids == 0]
        )

        def fresh_sessions(*specs):
            ids = []
            for mode, schedule in specs:
                resp = api(port, "/sessions",
                           {"mode": mode, "dim": DIM, "classes": CLASSES,
                            "train_config": {"seed": 0, "replay_schedule": schedule}})
                ids.append(resp["id"])
            return ids

        # --- cumulative: train everything at once --------------------------
        print("scenario 1: cumulative (one batch of all four classes)")
        pair = fresh_sessions(("tl", "sequential"), ("cl", "sequential"))
        stage_and_train(port, pair, first, range(len(first)), {"scope": "staged_all"})
        confidence_table(port, pair, ["no replay", "replay"], held_out)
        print("    identical numbers: with all data in one batch the buffer is never replayed.\n")

        # --- new instances: a second round of the same classes -------------
        print("scenario 2: new instances (same classes, new appearance)")
        stage_and_train(port, pair, second, range(len(second)), {"scope": "staged_all"})
        confidence_table(port, pair, ["no replay", "replay"], held_out, "(first instances)")
        print("    one extra round barely dents either model; forgetting needs class-incremental pressure.\n")

        # --- new classes: one class at a time -------------------------------
        print("scenario 3: new classes (one class per training call)")
        trio = fresh_sessions(("tl", "sequential"), ("cl", "sequential"), ("cl", "mixed"))
        for cls in range(CLASSES):
            idx = np.flatnonzero(first.labels == cls)
            stage_and_train(port, trio, first, idx, {"scope": "staged_class", "class": cls})
        state = api(port, f"/sessions/{trio[1]}/state")
        print(f"    replay buffer after the run: {state['buffer']['histogram']}")
        confidence_table(port, trio, ["no replay", "replay", "replay-mixed"], held_out)
        print("    the no-replay model answers 'last class' everywhere. sequential replay\n"
              "    rescues the early classes but its final replay pass (which never contains\n"
              "    the newest class) can dent the last one; mixing new samples with the buffer\n"
              "    during training keeps all four.")
    finally:
        proc.terminate()
        proc.wait(timeout=10)


if __name__ == "__main__":
    main()
