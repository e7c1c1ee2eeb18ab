"""Full-batch gradient descent on the simulated machine: linear and logistic.

Each iteration the host broadcasts the weight vector, every core streams its
rows and accumulates a partial gradient (wide integer accumulation in fixed
mode, exact block sums in real mode), and the host combines partials in a
canonical order and applies the update.
"""

from __future__ import annotations

import numpy as np

from ..errors import FixedPointOverflowError
from ..fixedpoint import (
    checked_matvec_raw,
    checked_weighted_colsum_raw,
    dequantize_array,
    div_round_half_even,
    round_shift,
    round_shift_array,
    saturate_array,
)
from ..lut import LutTable, lut_eval_raw
from ..pimsim import KernelReport, PimDevice, finalize_report, launch
from .common import (
    MODE_REAL,
    Hyperparams,
    PackedDataset,
    block_gd_partial,
    boundary_blocks,
    chunk_ranges,
    core_views,
    decode_features,
    decode_labels,
    fsum_columns,
    plan_regions,
    whole_blocks_for,
)
from .models import LinearModel


def linreg_train(dev: PimDevice, packed: PackedDataset, hp: Hyperparams):
    """Least-squares GD; gradient per row is x * (x.w - y)."""
    return _train_gd(dev, packed, hp, logistic=False, lut=None)


def logreg_train(dev: PimDevice, packed: PackedDataset, hp: Hyperparams, lut: LutTable):
    """Logistic GD; fixed mode evaluates sigmoid by table lookup."""
    return _train_gd(dev, packed, hp, logistic=True, lut=lut)


def _gd_core(ctx, arg):
    if arg is None:
        return None
    if arg["mode"] == MODE_REAL:
        _gd_core_real(ctx, arg)
    else:
        _gd_core_fixed(ctx, arg)
    return None


def _gd_core_real(ctx, arg):
    view = arg["view"]
    d = view.n_features
    w = np.frombuffer(ctx.mram_read(arg["params_off"], d * 8), dtype="<f8")
    blocks = arg["blocks"]  # local (lo, hi) of wholly-owned virtual blocks
    if not blocks:
        return
    out = np.empty((len(blocks), d))
    for bi, (lo, hi) in enumerate(blocks):
        off, nbytes = view.feature_bytes(lo, hi)
        x = decode_features(view, ctx.mram_read(off, nbytes), hi - lo)
        loff, lbytes = view.label_bytes(lo, hi)
        y = decode_labels(view, ctx.mram_read(loff, lbytes))
        out[bi] = block_gd_partial(x, y, w, arg["logistic"])
        rows = hi - lo
        ctx.charge("mul32", rows * d * 2)
        ctx.charge("add32", rows * (2 * d + 1))
        if arg["logistic"]:
            ctx.charge("lut_lookup", rows)
    ctx.mram_write(out.astype("<f8").tobytes(), arg["out_off"])


def _gd_core_fixed(ctx, arg):
    view = arg["view"]
    d = view.n_features
    frac = arg["frac"]
    fmt = arg["fmt"]
    w_raw = np.frombuffer(ctx.mram_read(arg["params_off"], d * 4), dtype="<i4").astype(np.int64)
    acc = [0] * d  # exact wide accumulation, frac = 2 * frac
    for lo, hi in arg["chunks"]:
        rows = hi - lo
        off, nbytes = view.feature_bytes(lo, hi)
        x_raw = decode_features(view, ctx.mram_read(off, nbytes), rows)
        loff, lbytes = view.label_bytes(lo, hi)
        y_raw = decode_labels(view, ctx.mram_read(loff, lbytes))
        z_wide = checked_matvec_raw(x_raw, w_raw)  # frac 2f, no intermediate rounding
        z_raw = saturate_array(round_shift_array(z_wide, frac), fmt)
        if arg["logistic"]:
            s_raw = arg["lut"].raws[
                np.clip(
                    np.rint((dequantize_array(z_raw, fmt) - arg["lut"].lo) / arg["lut"].step),
                    0,
                    arg["lut"].n_entries - 1,
                ).astype(np.int64)
            ]
            err_raw = saturate_array(s_raw - y_raw, fmt)
            ctx.charge("lut_lookup", rows)
        else:
            err_raw = saturate_array(z_raw - y_raw, fmt)
        part = checked_weighted_colsum_raw(x_raw, err_raw)  # frac 2f
        for j in range(d):
            acc[j] += int(part[j])
            if not -(1 << 63) <= acc[j] < (1 << 63):
                raise FixedPointOverflowError(
                    "gradient accumulator overflow; rescale the input data"
                )
        ctx.charge("mul32", rows * d * 2)
        ctx.charge("add32", rows * (2 * d + 1))
    # mean gradient brought back to the storage format: acc / (n * 2^frac)
    den = arg["n_total"] << frac
    out = np.array(
        [min(max(div_round_half_even(a, den), fmt.raw_min), fmt.raw_max) for a in acc],
        dtype="<i4",
    )
    ctx.charge("mul32", d)
    ctx.mram_write(out.tobytes(), arg["out_off"])


def _train_gd(dev, packed, hp, logistic: bool, lut):
    ds = packed.dataset
    n, d = ds.n_rows, ds.n_features
    real = hp.mode == MODE_REAL
    views = core_views(packed)
    kind = "logreg" if logistic else "linreg"

    if real:
        core_blocks = [
            whole_blocks_for(start, count, n)
            for start, count in packed.plan.ranges
        ]
        local_blocks = [
            [(lo - start, hi - start) for lo, hi in blocks]
            for (start, _), blocks in zip(packed.plan.ranges, core_blocks)
        ]
        host_blocks = boundary_blocks(packed.plan, n)
        out_sizes = [len(b) * d * 8 for b in core_blocks]
        params_bytes = d * 8
    else:
        rows_per_chunk = max(1, dev.config.scratchpad_bytes // max(1, d * packed.elem_bytes))
        core_chunks = [chunk_ranges(count, rows_per_chunk) for _, count in packed.plan.ranges]
        out_sizes = [d * 4] * packed.plan.n_cores
        params_bytes = d * 4

    lut_bytes = lut.n_bytes if (logistic and not real) else 0
    regions = plan_regions(packed, dev, [("params", [params_bytes] * packed.plan.n_cores),
                                         ("out", out_sizes),
                                         ("lut", [lut_bytes] * packed.plan.n_cores)])

    prologue = packed.load_cycles
    if logistic and not real:
        if lut is None:
            raise ValueError("fixed-mode logistic regression needs a LUT")
        # the table is built once on the host and copied into each core
        blob = np.asarray(lut.raws, dtype="<i4").tobytes()
        lut_map = {c: len(blob) for c in packed.active_cores()}
        for c in lut_map:
            dev.host_write_bank(c, regions[c]["lut"], blob)
        prologue += dev.link_cycles(lut_map)

    args: list = []
    for core_id in range(packed.plan.n_cores):
        _, count = packed.plan.ranges[core_id]
        if count == 0:
            args.append(None)
            continue
        base = {
            "mode": hp.mode,
            "view": views[core_id],
            "params_off": regions[core_id]["params"],
            "out_off": regions[core_id]["out"],
            "logistic": logistic,
        }
        if real:
            base["blocks"] = local_blocks[core_id]
        else:
            base.update(
                chunks=core_chunks[core_id],
                frac=hp.fmt.frac_bits,
                fmt=hp.fmt,
                n_total=n,
                lut=lut,
            )
        args.append(base)

    active = packed.active_cores()
    iter_costs = []

    if real:
        w = np.zeros(d)
        for _ in range(hp.iterations):
            wbytes = w.astype("<f8").tobytes()
            for c in active:
                dev.host_write_bank(c, regions[c]["params"], wbytes)
            to_cycles = dev.link_cycles({c: len(wbytes) for c in active})
            _, cost = launch(dev, _gd_core, args)
            block_sums: dict[int, np.ndarray] = {}
            gather_map = {}
            for c in active:
                blocks = core_blocks[c]
                if not blocks:
                    continue
                raw = dev.host_read_bank(c, regions[c]["out"], len(blocks) * d * 8)
                gather_map[c] = len(blocks) * d * 8
                partials = np.frombuffer(raw, dtype="<f8").reshape(len(blocks), d)
                for (lo, _), vec in zip(blocks, partials):
                    block_sums[lo] = vec
            for lo, hi in host_blocks:
                block_sums[lo] = block_gd_partial(
                    ds.features[lo:hi], ds.labels[lo:hi].astype(np.float64), w, logistic
                )
            ordered = np.array([block_sums[lo] for lo in sorted(block_sums)])
            total = fsum_columns(ordered) if len(ordered) else np.zeros(d)
            g = total / n
            w = w - hp.learning_rate * g
            from_cycles = dev.link_cycles(gather_map)
            iter_costs.append((cost.max_core_cycles(), to_cycles + from_cycles))
        model = LinearModel(w, kind)
    else:
        fmt = hp.fmt
        shift = hp.lr_shift
        w_raw = [0] * d
        for _ in range(hp.iterations):
            wbytes = np.array(w_raw, dtype="<i4").tobytes()
            for c in active:
                dev.host_write_bank(c, regions[c]["params"], wbytes)
            to_cycles = dev.link_cycles({c: len(wbytes) for c in active})
            _, cost = launch(dev, _gd_core, args)
            g = [0] * d
            gather_map = {}
            for c in active:  # ascending core order, saturating adds
                raw = dev.host_read_bank(c, regions[c]["out"], d * 4)
                gather_map[c] = d * 4
                part = np.frombuffer(raw, dtype="<i4")
                for j in range(d):
                    g[j] = min(max(g[j] + int(part[j]), fmt.raw_min), fmt.raw_max)
            for j in range(d):
                delta = round_shift(g[j], shift)
                w_raw[j] = min(max(w_raw[j] - delta, fmt.raw_min), fmt.raw_max)
            from_cycles = dev.link_cycles(gather_map)
            iter_costs.append((cost.max_core_cycles(), to_cycles + from_cycles))
        raw_arr = np.array(w_raw, dtype=np.int64)
        model = LinearModel(dequantize_array(raw_arr, fmt), kind, raw=raw_arr, fmt=fmt)

    report = finalize_report(dev, iter_costs, iterations=hp.iterations, prologue_cycles=prologue)
    return model, report
