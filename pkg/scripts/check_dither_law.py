#!/usr/bin/env python3
"""
Empirical check that subtractively dithered quantization error is iid uniform.

Draws inputs and dithers, quantizes, and reports the error moments, a
Kolmogorov-Smirnov test against U[-step/2, step/2], the first lag
autocorrelations and the correlation with the input.

Usage:
    python scripts/check_dither_law.py
    python scripts/check_dither_law.py --bits 2 --bound 4 --samples 1000000
    python scripts/check_dither_law.py --input gaussian --scale 3
"""
import argparse
import os
import sys

import numpy as np
from scipy import signal, stats

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from dither_lqg.quantizer import DitherStream, QuantizerSpec, dithered_quantize


def draw_inputs(kind, scale, samples, rng):
    if kind == "gaussian":
        return rng.normal(0.0, scale, samples)
    if kind == "ar1":
        noise = rng.normal(0.0, scale * np.sqrt(1 - 0.95**2), samples)
        return signal.lfilter([1.0], [1.0, -0.95], noise)
    return rng.uniform(-scale, scale, samples)


def autocorrelation(series, lag):
    centred = series - series.mean()
    return float(np.dot(centred[:-lag], centred[lag:]) / np.dot(centred, centred))


def main():
    parser = argparse.ArgumentParser(description="Check the dithered quantization error law")
    parser.add_argument("--bits", "-b", type=int, default=3)
    parser.add_argument("--bound", "-z", type=float, default=1.0, help="Quantizer bound zeta")
    parser.add_argument("--samples", "-n", type=int, default=100_000)
    parser.add_argument("--input", choices=["uniform", "gaussian", "ar1"], default="uniform")
    parser.add_argument("--scale", type=float, default=0.8, help="Input spread: half-width (uniform) or standard deviation")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lags", type=int, default=10)
    args = parser.parse_args()

    spec = QuantizerSpec(args.bits, args.bound, clamp=False)
    rng = np.random.default_rng(args.seed)
    y = draw_inputs(args.input, args.scale, args.samples, rng)
    d = DitherStream(spec.step, args.seed + 1).draw(args.samples)
    p, _ = dithered_quantize(spec, y, d)
    err = p - y
    half = spec.step / 2
    limit = 4.5 / np.sqrt(args.samples)

    print("=" * 70)
    print(f"DITHERED ERROR LAW: b={args.bits}, zeta={args.bound:g}, step={spec.step:.6g}, n={args.samples:,}")
    print(f"input: {args.input}, scale {args.scale:g}")
    print("=" * 70)

    print("\n1. MOMENTS:")
    print("-" * 70)
    print(f"  {'':<20} {'observed':>15} {'expected':>15}")
    print(f"  {'mean':<20} {err.mean():>15.6g} {0.0:>15.6g}")
    print(f"  {'variance':<20} {err.var():>15.6g} {spec.step**2 / 12:>15.6g}")
    print(f"  {'max |error|':<20} {np.abs(err).max():>15.6g} {half:>15.6g}")

    print("\n2. KOLMOGOROV-SMIRNOV vs UNIFORM:")
    print("-" * 70)
    ks = stats.kstest(err, stats.uniform(loc=-half, scale=spec.step).cdf)
    print(f"  statistic={ks.statistic:.6g}  p-value={ks.pvalue:.4g}")

    print(f"\n3. AUTOCORRELATION (|rho| limit {limit:.4g}):")
    print("-" * 70)
    for lag in range(1, args.lags + 1):
        rho = autocorrelation(err, lag)
        flag = "!" if abs(rho) > limit else " "
        print(f"  lag {lag:>3}: {rho:>10.5f} {flag}")

    print("\n4. CORRELATION WITH INPUT:")
    print("-" * 70)
    rho = float(np.corrcoef(err, y)[0, 1])
    print(f"  rho={rho:.5f} {'!' if abs(rho) > limit else ''}")


if __name__ == "__main__":
    main()
