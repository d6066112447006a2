"""The fitting toolkit: library models, error bars, rank-deficiency reports.

Run:  python demos/07_fitting_toolkit.py
"""

import numpy as np

from fss.fitting import MODEL_LIBRARY, fit, fit_result_text

rng = np.random.default_rng(8)

# --- exponential decay with an offset, noisy data -------------------------------
x = np.linspace(0.0, 600.0, 80)
model = MODEL_LIBRARY["exp_decay"]
y = model(x, 900.0, 111.0, 25.0) + rng.normal(0.0, 6.0, x.size)
result = fit(model, x, y, {"amplitude": 700.0, "tau": 80.0, "offset": 0.0})
print(fit_result_text(result))

# --- fixing a parameter: a through-origin linear fit ------------------------------
linear = MODEL_LIBRARY["linear"]
power = np.linspace(0.5, 8.0, 12)
rate = 0.131 * power + rng.normal(0.0, 0.02, power.size)
result = fit(linear, power, rate, {"slope": 0.1}, fixed={"intercept": 0.0})
print(f"laser-induced relaxation slope: {result['slope']:.4f} "
      f"+- {result.error('slope'):.4f} us^-1/uW (intercept fixed to 0)\n")

# --- an unidentifiable parameter is reported, not silently mis-fitted -------------
x_const = np.ones(12)
result = fit(linear, x_const, 2.0 * x_const, {"slope": 1.0, "intercept": 1.0})
print(f"fit on constant x: status = {result.status}, "
      f"unidentifiable = {result.unidentifiable}")
