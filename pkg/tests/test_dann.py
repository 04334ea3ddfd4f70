import numpy as np
import pytest
from conftest import tiny_config
from hypothesis import given, settings
from hypothesis import strategies as st

from discoadapt.autodiff import Tape, ops, parameter
from discoadapt.dann import DannConfig, gradient_reversal, source_only_config, train_dann
from discoadapt.training import pretrain


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 10.0), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_reversal_backward_is_exactly_minus_lambda(lam, m, n, seed):
    rng = np.random.default_rng(seed)
    x = parameter(rng.normal(size=(m, n)))
    upstream = rng.normal(size=(m, n))
    with Tape() as tape:
        y = gradient_reversal(x, lam)
        loss = ops.sum(ops.mul(y, upstream))
    assert y.data.tobytes() == x.data.tobytes()
    (g,) = tape.gradient(loss, [x])
    assert g.tobytes() == (-lam * upstream).tobytes()


@pytest.mark.parametrize("lam", [-0.1, float("nan"), float("inf")])
def test_invalid_lambda_rejected(lam):
    with pytest.raises(ValueError, match="lambda"):
        DannConfig(lam=lam)


def test_desk_config_follows_pretraining_rate():
    base = tiny_config(lr_pretrain=3e-3, pretrain_epochs=7)
    d = DannConfig.desk(base, lam=0.5)
    assert (d.lr, d.epochs, d.lam, d.train) == (3e-3, 7, 0.5, base)


def test_zero_lambda_replays_source_only_training(tiny_ws):
    s = tiny_ws.splits
    dcfg = DannConfig(lam=0.0, lr=1e-2, epochs=3, train=tiny_config(patience=10))
    trace = {"dann": [], "source": []}
    train_dann(s["source-train"], s["target-train"], s["target-dev"], tiny_ws.table, tiny_ws.n_classes, dcfg,
               on_epoch=lambda e, enc, clf: trace["dann"].append((enc.digest(), clf.digest())))
    pretrain(s["source-train"], s["target-dev"], tiny_ws.table, tiny_ws.n_classes, source_only_config(dcfg),
             on_epoch=lambda e, enc, clf: trace["source"].append((enc.digest(), clf.digest())))
    assert len(trace["dann"]) == 3
    assert trace["dann"] == trace["source"]


def test_nonzero_lambda_departs_from_source_only(tiny_ws):
    s = tiny_ws.splits
    dcfg = DannConfig(lam=0.25, lr=1e-2, epochs=1, train=tiny_config())
    a = train_dann(s["source-train"], s["target-train"], s["target-dev"], tiny_ws.table, tiny_ws.n_classes, dcfg)
    b = pretrain(s["source-train"], s["target-dev"], tiny_ws.table, tiny_ws.n_classes, source_only_config(dcfg))
    assert a.encoder.digest() != b.encoder.digest()
    assert {"cls", "dom", "dev_macro_f1"} <= set(a.history[0])
