"""Acceptance suite: seven end-to-end criteria, one test per criterion.

Each test prints a single PASS/FAIL line and enforces its runtime budget.
"""

import time
from fractions import Fraction

import numpy as np

from pimml.baseline import (
    grad_check,
    make_logistic_loss,
    make_quadratic_loss,
    oracle_dtree,
    oracle_kmeans,
    oracle_linreg,
    oracle_logreg,
)
from pimml.bench import main
from pimml.fixedpoint import (
    Q16_16,
    FixedScalar,
    QFormat,
    WideAccumulator,
    dequantize,
    dot_accumulate,
    quantize,
)
from pimml.kernels import (
    Hyperparams,
    dtree_train,
    kmeans_train,
    linreg_train,
    load_dataset,
    logreg_train,
    predict,
)
from pimml.layout import synth_blobs, synth_labels_tree, synth_linear
from pimml.lut import (
    SIGMOID_LIPSCHITZ,
    build_lut,
    default_sigmoid_table,
    lut_error_bound,
    lut_max_error,
    sigmoid,
)
from pimml.pimsim import PimConfig, create_device


class _Budget:
    def __init__(self, name, limit_s):
        self.name = name
        self.limit_s = limit_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None and elapsed < self.limit_s else "FAIL"
        print(f"ACCEPTANCE {self.name}: {status} ({elapsed:.2f}s / {self.limit_s}s)")
        if exc_type is None:
            assert elapsed < self.limit_s, f"{self.name} exceeded {self.limit_s}s"
        return False


def _device(n_cores):
    return create_device(PimConfig(n_cores=n_cores, n_ranks=max(1, n_cores // 64) or 1))


def _train(algo, ds, hp, n_cores):
    dev = _device(n_cores)
    packed = load_dataset(dev, ds, hp)
    if algo == "linreg":
        return linreg_train(dev, packed, hp)
    if algo == "logreg":
        return logreg_train(dev, packed, hp, default_sigmoid_table())
    if algo == "kmeans":
        trace = []
        model, report = kmeans_train(dev, packed, hp, assignment_trace=trace)
        return (model, trace), report
    return dtree_train(dev, packed, hp)


def test_criterion_1_fixed_point_correctness():
    with _Budget("1 fixed-point", 10.0):
        # exhaustive round-trip + monotonicity for every 8-bit format
        for frac in range(8):
            fmt = QFormat(8, frac)
            for raw in range(fmt.raw_min, fmt.raw_max + 1):
                assert quantize(dequantize(FixedScalar(raw, fmt)), fmt).raw == raw
            xs = np.linspace(fmt.min_value - 0.5, fmt.max_value + 0.5, 2001)
            raws = [quantize(float(v), fmt).raw for v in xs]
            assert all(a <= b for a, b in zip(raws, raws[1:]))
            assert all(fmt.raw_min <= r <= fmt.raw_max for r in raws)
        # random-vector dot_accumulate against an exact rational oracle
        rng = np.random.default_rng(42)
        for trial in range(5):
            n = int(rng.integers(10, 1500))
            a = [quantize(float(v), Q16_16) for v in rng.uniform(-1, 1, n)]
            b = [quantize(float(v), Q16_16) for v in rng.uniform(-1, 1, n)]
            acc = dot_accumulate(a, b, WideAccumulator())
            exact = sum(
                Fraction(x.raw * y.raw, 1 << 32) for x, y in zip(a, b)
            )
            assert Fraction(acc.raw, 1 << 32) == exact  # zero fixed-point-stage error


def test_criterion_2_lut_sigmoid():
    with _Budget("2 lut-sigmoid", 5.0):
        t = default_sigmoid_table()
        assert t.n_entries == 4096 and (t.lo, t.hi) == (-8.0, 8.0)
        measured = lut_max_error(t, sigmoid, 1_000_000)
        assert measured <= 5.0e-4
        assert measured <= lut_error_bound(t, SIGMOID_LIPSCHITZ)
        prev = None
        for n in (2048, 4096, 8192, 16384):
            e = lut_max_error(build_lut(sigmoid, -8.0, 8.0, n, Q16_16), sigmoid, 200_000)
            if prev is not None:
                assert e <= prev
            prev = e


def test_criterion_3_oracle_equivalence_real_mode():
    with _Budget("3 oracle-equivalence", 60.0):
        core_counts = (1, 3, 16, 64)

        ds, _ = synth_linear(8192, 8, 0.2, seed=11)
        hp = Hyperparams(mode="real", iterations=15)
        ref = oracle_linreg(ds, hp).model.weights
        for c in core_counts:
            (model, _), = (_train("linreg", ds, hp, c),)
            assert np.max(np.abs(model.weights - ref)) <= 1e-12

        dsb, _ = synth_blobs(8192, 8, 2, 0.5, seed=12)
        ref = oracle_logreg(dsb, hp).model.weights
        for c in core_counts:
            model, _ = _train("logreg", dsb, hp, c)
            assert np.max(np.abs(model.weights - ref)) <= 1e-12

        dsk, _ = synth_blobs(6000, 6, 4, 0.7, seed=13)
        hpk = Hyperparams(mode="real", iterations=25, k=4)
        orc = oracle_kmeans(dsk, hpk)
        for c in core_counts:
            (model, trace), _ = _train("kmeans", dsk, hpk, c)
            assert np.max(np.abs(model.centroids - orc.model.centroids)) <= 1e-12
            assert len(trace) == len(orc.assignments)
            for got, want in zip(trace, orc.assignments):
                assert np.array_equal(got, want)  # identical every iteration

        dst = synth_labels_tree(6000, 8, 4, seed=14)
        hpt = Hyperparams(mode="real", max_depth=4)
        ref_tree = oracle_dtree(dst, hpt).model.structure()
        for c in core_counts:
            model, _ = _train("dtree", dst, hpt, c)
            assert model.structure() == ref_tree


def test_criterion_4_fixed_point_parity():
    with _Budget("4 fixed-parity", 120.0):
        # linreg: Q16.16 vs real oracle on the stated workload
        ds, _ = synth_linear(16384, 16, 0.0, seed=21)
        hp_f = Hyperparams(mode="fixed", iterations=100, learning_rate=2 ** -6)
        hp_r = Hyperparams(mode="real", iterations=100, learning_rate=2 ** -6)
        model, _ = _train("linreg", ds, hp_f, 64)
        ref = oracle_linreg(ds, hp_r).model.weights
        assert np.max(np.abs(model.weights - ref)) <= 1e-2

        # logreg: default LUT vs exact-sigmoid real mode, prediction agreement
        dsb, _ = synth_blobs(8192, 8, 2, 0.3, seed=22)
        hp_f = Hyperparams(mode="fixed", iterations=60, learning_rate=0.125)
        hp_r = Hyperparams(mode="real", iterations=60, learning_rate=0.125)
        mf, _ = _train("logreg", dsb, hp_f, 64)
        mr, _ = _train("logreg", dsb, hp_r, 64)
        agree = np.mean(predict(mf, dsb) == predict(mr, dsb))
        assert agree >= 0.99

        # kmeans: fixed vs real assignments on well-separated blobs
        dsk, _ = synth_blobs(8192, 8, 4, 0.25, seed=23)
        hp_f = Hyperparams(mode="fixed", iterations=30, k=4)
        hp_r = Hyperparams(mode="real", iterations=30, k=4)
        (mkf, _), _ = _train("kmeans", dsk, hp_f, 64)
        (mkr, _), _ = _train("kmeans", dsk, hp_r, 64)
        match = np.mean(predict(mkf, dsk) == predict(mkr, dsk))
        assert match >= 0.99


def test_criterion_5_gradient_check():
    with _Budget("5 grad-check", 5.0):
        rng = np.random.default_rng(31)
        x = rng.uniform(-2, 2, (200, 8))
        y = rng.uniform(-2, 2, 200)
        w = rng.uniform(-1, 1, 8)
        assert grad_check(make_quadratic_loss(x, y), w, 1e-6) <= 1e-9
        yb = (rng.uniform(size=200) > 0.5).astype(float)
        assert grad_check(make_logistic_loss(x, yb), w, 1e-5) <= 1e-5


def test_criterion_6_scaling_properties():
    with _Budget("6 scaling", 120.0):
        d = 8
        # weak scaling: fixed rows per core, per-core compute cycles constant
        per_core = []
        for c in (1, 2, 4, 8, 16, 32, 64):
            ds, _ = synth_linear(256 * c, d, 0.1, seed=41)
            hp = Hyperparams(mode="fixed", iterations=3)
            dev = _device(c)
            packed = load_dataset(dev, ds, hp)
            _, report = linreg_train(dev, packed, hp)
            assert report.overlapped_total_cycles <= report.serialized_total_cycles
            assert report.from_device_bytes == c * d * 4 * 3  # C*d*4 per iteration
            per_core.append(report.max_compute_cycles)
        lo, hi = min(per_core), max(per_core)
        assert hi <= lo * 1.01  # constant within 1%

        # strong scaling: 2^20 rows, 64 cores at least 48x below 1 core
        ds, _ = synth_linear(1 << 20, d, 0.1, seed=42)
        hp = Hyperparams(mode="fixed", iterations=1)
        cycles = {}
        for c in (1, 64):
            dev = _device(c)
            packed = load_dataset(dev, ds, hp)
            _, report = linreg_train(dev, packed, hp)
            assert report.overlapped_total_cycles <= report.serialized_total_cycles
            assert report.from_device_bytes == c * d * 4
            cycles[c] = report.max_compute_cycles
        assert cycles[1] >= 48 * cycles[64]


def test_criterion_7_determinism(tmp_path):
    with _Budget("7 determinism", 60.0):
        # identical bench commands -> byte-identical reports modulo wall_time
        argv = ["train", "--algo", "kmeans", "--rows", "1500", "--features", "4",
                "--k", "3", "--cores", "8", "--iterations", "20", "--seed", "5",
                "--compare"]
        rows = []
        for name in ("a.csv", "b.csv"):
            rep = tmp_path / name
            assert main(argv + ["--report", str(rep)]) == 0
            lines = rep.read_text().splitlines()
            body = [",".join(ln.split(",")[:-1]) for ln in lines[2:]]  # drop wall_time
            rows.append((lines[0], lines[1], body))
        assert rows[0] == rows[1]

        # training outcome independent of executor count at the launch level
        from pimml.pimsim import launch

        def kern(ctx, arg):
            ctx.charge("mul32", arg + 1)
            ctx.mram_write(bytes([arg % 251] * 64), 0)
            return ctx.mram_read(0, 64)

        outs = []
        for workers in (1, 8):
            dev = _device(16)
            res, _ = launch(dev, kern, list(range(16)), workers=workers)
            outs.append((res, list(dev.compute_cycles), list(dev.dma_cycles)))
        assert outs[0] == outs[1]
