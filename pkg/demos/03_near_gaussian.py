"""Five nearly Gaussian layers (gamma = 1e-3) and the estimator picked for them.

Every cubicity sits far below the near-Gaussian threshold, so the selector
chooses the near-Gaussian estimator.  For |q| <= 1 the walk rarely needs a
single sample.  The declared bias is what the chained per-layer bounds
certify.  It can exceed eps/2 at sampled points even though the actual error
is tiny, and the estimator then warns.

    python demos/03_near_gaussian.py
"""

import warnings
from pathlib import Path

from dispprop import estimate_char, select_estimator
from dispprop import fock_oracle as fo
from dispprop.circuit_io import parse_circuit_file
from dispprop.propagation import near_gaussian_threshold
from dispprop.regimes import circuit_curvature_bound, contraction_coefficients
from dispprop.sampling import RngStream

circuit = parse_circuit_file(Path(__file__).parent / "circuits" / "near_gaussian.json")
eps = 0.1
M = circuit_curvature_bound(circuit)
loss = circuit.layers[0].loss
print(f"L = {circuit.L}, gamma = {circuit.layers[0].cubic.gamma:g}, M = {M:.4f}")
print(f"near-Gaussian threshold at eps = {eps}: {near_gaussian_threshold(eps, M, loss):.3e}")
rep = contraction_coefficients(circuit, M, eps)
print(f"c1 = {rep.c1:.3g}, c2 = {rep.c2:.3g}, d_eps = {rep.d_eps:.3g}")

choice = select_estimator(circuit, (0.5, 0.5), eps, M)
print(f"selected: {choice.algorithm} ({choice.rationale})\n")

state = fo.run_circuit(circuit, 60)
print(f"{'r':>12} {'Fock':>20} {'estimate':>20} {'|err|':>8} {'samples':>9} {'declared bias':>14}")
for r in [(0.5, 0.5), (-1.0, 1.0), (1.0, 2.0), (0.0, -2.0)]:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        res = estimate_char(circuit, r, eps, 0.05, M, RngStream(2))
    truth = fo.char_function(state, r)
    flag = "  (bias warning)" if caught else ""
    print(f"{str(r):>12} {truth:20.5f} {res.value:20.5f} {abs(res.value - truth):8.1e} "
          f"{res.samples:9d} {res.declared_bias:14.3g}{flag}")
