"""Morph one handwritten digit into another.

Each image becomes a mixture of tiny Gaussians, one per lit pixel, weighted
by intensity. GradNetM learns the transport map between the two mixtures; the
intermediate frames (1 - t) x + t T(x) show the displacement interpolation.
Frames are written as PGM files into ./morph_demo/.
"""

from pathlib import Path

from gradnetot.experiments.commands import MorphConfig, cmd_morph
from gradnetot.experiments.images import load_pgm

data = Path(__file__).resolve().parent.parent / "tests" / "data" / "mnist_digits_0to4.idx3-ubyte"
out = Path("morph_demo")

# 600 iterations is a quick look; the morph command defaults to 2000.
cfg = MorphConfig(source=str(data), target=str(data), source_index=0, target_index=4, iterations=600)
manifest = cmd_morph(cfg, out)
m = manifest["metrics"]
print(f"learned map vs Sinkhorn barycentric projection: mse {m['map_vs_projection_mse']:.5f}")
print(f"Sinkhorn: {m['sinkhorn_iterations']} iterations, converged {m['sinkhorn_converged']}")

# Print the frames as coarse ASCII art so the morph is visible in a terminal.
shades = " .:-=+*#%@"
frames = [load_pgm(out / f"frame_map_t{t:.2f}.pgm").intensities for t in (0, 0.25, 0.5, 0.75, 1.0)]
for row in range(0, 28, 2):
    line = "   ".join("".join(shades[int(v * 9.99)] for v in f[row, ::2]) for f in frames)
    print(line)
print(f"frames written to {out.resolve()}")
