"""Joint separation of three datasets with adaptive MGGD source vectors.

Source component vectors are correlated across datasets, which lets IVA
align the estimated sources across datasets without a separate matching
step.
"""

import numpy as np

from bsskit.iva import IvaConfig, run_iva_aggd
from bsskit.metrics import assign, isi_avg, isi_jnt
from bsskit.sources import mggd_scv_stack

d = mggd_scv_stack(5, 3, 5000, seed=5)
for method in ("mom", "rafp"):
    st = run_iva_aggd(d.observations, IvaConfig(method=method, seed=5, init="fastica"))
    gs = [st.w[k] @ d.mixing[k] for k in range(3)]
    perms = [assign(np.abs(g) / np.abs(g).max(axis=1, keepdims=True)).tolist() for g in gs]
    print(f"{method:5s} joint ISI {isi_jnt(gs):.4f}  average ISI {isi_avg(gs):.4f}  iterations {st.iteration}")
    print(f"      per-dataset alignment {perms}")
    fitted = np.empty(5)
    fitted[perms[0]] = [p.shape for p in st.scv_params]
    print(f"      fitted shapes {np.round(fitted, 2).tolist()} (true {np.round(d.scv_betas, 2).tolist()})")
