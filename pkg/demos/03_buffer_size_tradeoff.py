"""How much memory does replay actually need?

Sweeps the replay buffer capacity on the class-incremental stream and
reports last accuracy against stored-pattern count. The returns flatten
fast: a modest buffer recovers most of what an order of magnitude more
storage would buy, which is the whole argument for latent replay on
memory-constrained devices.

Run:  python3 demos/03_buffer_size_tradeoff.py
"""

from pathlib import Path

from edgecl import (
    BufferConfig,
    RunConfig,
    SynthSpec,
    TrainConfig,
    export_grid,
    generate_synthetic,
    run_grid,
)

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

print(__doc__)

spec = SynthSpec(num_classes=10, samples_per_instance=100, dim=32, seed=1)
train, test, manifest = generate_synthetic(spec)

capacities = [25, 50, 100, 200, 400, 800]
config = RunConfig(
    manifest=manifest,
    mode="cl",
    train_config=TrainConfig(),
    buffer_config=BufferConfig(capacity=200, policy="random"),
    seeds=(0, 1, 2, 3, 4),
)
grid = run_grid(config, "buffer_capacity", capacities, {"train.fpb": train, "test.fpb": test})

bytes_per_pattern = 4 * spec.dim + 4  # float32 features + label/instance fields
print(f"{'capacity':>9} {'storage':>9} {'last accuracy':>14}")
aggregates = grid.aggregate()
for agg in aggregates:
    kb = agg["value"] * bytes_per_pattern / 1024
    print(f"{agg['value']:>9} {kb:>7.1f}kB {agg['final_mean']:>9.3f} +- {agg['final_std']:.3f}")

best = aggregates[-1]
for agg in aggregates:
    if agg["value"] < best["value"] and agg["final_mean"] >= best["final_mean"] - 0.05:
        saved = 1 - agg["value"] / best["value"]
        print(
            f"\ncapacity {agg['value']} stays within 5 points of the {best['value']}-slot "
            f"buffer while using {saved:.0%} less storage."
        )
        break
else:
    gain = best["final_mean"] - aggregates[0]["final_mean"]
    print(
        f"\ngoing from {capacities[0]} to {capacities[-1]} slots buys "
        f"{gain * 100:.0f} accuracy points for {capacities[-1] // capacities[0]}x the storage."
    )

export_grid(grid, OUT / "buffer_size_tradeoff.csv")
print(f"\nwrote {OUT / 'buffer_size_tradeoff.csv'}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    means = [a["final_mean"] for a in aggregates]
    stds = [a["final_std"] for a in aggregates]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(capacities, means, yerr=stds, marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("buffer capacity (patterns)")
    ax.set_ylabel("last accuracy")
    ax.set_title("accuracy vs replay buffer size")
    fig.tight_layout()
    fig.savefig(OUT / "buffer_size_tradeoff.png", dpi=120)
    print(f"wrote {OUT / 'buffer_size_tradeoff.png'}")
except ImportError:
    print("matplotlib not installed; skipping the figure")
