"""Writes toy attention bundles and the coverage values numpy computes for them."""
import json
import pathlib

import numpy as np

HERE = pathlib.Path(__file__).parent / "bundles"
M_STAR = 2
EPS = 1e-6


def softmax_rows(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def write(name, meta, tensors):
    d = HERE / name
    d.mkdir(parents=True, exist_ok=True)
    for fname, t in tensors.items():
        t.astype("<f4").tofile(d / fname)
    (d / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")


def mask(box, w, h, n):
    x1, y1, x2, y2 = box
    m = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            cx, cy = (j + 0.5) * w / n, (i + 0.5) * h / n
            m[i, j] = x1 <= cx < x2 and y1 <= cy < y2
    return m


def expected_coverage(meta, st_q, st_qp, ti):
    # Reload through float32 so the oracle sees the stored values.
    st_q, st_qp = st_q.astype("<f4").astype(np.float64), st_qp.astype("<f4").astype(np.float64)
    aq, aqp = st_q.mean(axis=1)[:, 0, :], st_qp.mean(axis=1)[:, 0, :]  # L x T
    n = meta["grid_n"]
    if ti is None:
        sq, sqp = aq[M_STAR - 1], aqp[M_STAR - 1]
    else:
        ti_hat = ti.astype("<f4").astype(np.float64).mean(axis=1)  # Lc x T x N2
        k = ti_hat.shape[0] - 1
        sq, sqp = aq[M_STAR - 1] @ ti_hat[k], aqp[M_STAR - 1] @ ti_hat[k]
    rel = (sq / (sqp + EPS)).reshape(n, n)
    m = mask(meta["bbox"], meta["image_width"], meta["image_height"], n)
    return float(rel[m].sum() / rel.sum())


def main():
    rng = np.random.default_rng(1234)
    expected = {}
    cases = [
        ("model-a-item1", "model-a", "item1", 3, 2, 4, None, 800, 800, [0, 0, 400, 400]),
        ("model-a-item2", "model-a", "item2", 3, 2, 4, None, 1000, 800, [250, 200, 1000, 600]),
        ("model-b-item1", "model-b", "item1", 2, 3, 3, (2, 2, 6), 900, 600, [300, 200, 900, 600]),
        ("model-b-item2", "model-b", "item2", 2, 3, 3, (2, 2, 6), 1000, 800, [100, 100, 480, 420]),
    ]
    for name, model, item, L, H, n, conn, w, h, box in cases:
        t = n * n if conn is None else conn[2]
        st_q = softmax_rows(rng.normal(size=(L, H, 1, t)) * 2)
        st_qp = softmax_rows(rng.normal(size=(L, H, 1, t)) * 2)
        meta = {"model_id": model, "item_id": item, "grid_n": n, "t_tokens": t, "llm_layers": L,
                "llm_heads": H, "dtype": "float32-le", "layout": {"a_st": "L,H,1,T", "a_ti": "Lc,Hc,T,N2"},
                "image_width": w, "image_height": h, "bbox": box}
        tensors = {"a_st_q.bin": st_q, "a_st_qprime.bin": st_qp}
        ti = None
        if conn is None:
            meta.update({"connector_layers": 1, "connector_heads": 1, "a_ti": "identity"})
        else:
            lc, hc, _ = conn
            ti = softmax_rows(rng.normal(size=(lc, hc, t, n * n)))
            meta.update({"connector_layers": lc, "connector_heads": hc, "a_ti": "a_ti.bin"})
            tensors["a_ti.bin"] = ti
        write(name, meta, tensors)
        expected[name] = expected_coverage(meta, st_q, st_qp, ti)
    (HERE / "expected.json").write_text(json.dumps({"m_star": M_STAR, "epsilon": EPS, "coverage": expected},
                                                   indent=2) + "\n")


if __name__ == "__main__":
    main()
