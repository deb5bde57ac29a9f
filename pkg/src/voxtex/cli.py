"""Command-line interface: ``voxtex <command> [options]``.

Settings are resolved as command-line flags > ``--config`` JSON file >
built-in defaults. Exit status is 0 on success, 1 on a runtime failure and 2
on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("voxtex")

EPILOG = "Precedence: command-line flags > --config file > defaults. Exit codes: 0 ok, 1 runtime error, 2 usage error."


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_triple(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return vals


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return cfg


def _merge(cfg: dict, args, mapping: dict[str, str]) -> dict:
    """Overlay the flags that were given (non-None) onto ``cfg``."""
    out = dict(cfg)
    for attr, key in mapping.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    return out


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _prefixed(prefix, suffix) -> Path:
    p = Path(prefix)
    return p.with_name(f"{p.name}_{suffix}") if p.name else p / suffix


# ---------------------------------------------------------------------------
# commands


def cmd_convert(args) -> int:
    from .volume_io import EnvelopeVolume, ScalarVolume, save_volume, stack_slices

    arrays = [np.load(p) for p in args.inputs]
    if len(arrays) == 1 and arrays[0].ndim == 3:
        data = arrays[0]
    elif all(a.ndim == 2 for a in arrays):
        data = np.asarray(stack_slices(arrays).data)
    else:
        raise UsageError("convert expects one 3-D array or several 2-D slices (.npy)")
    name = args.name or Path(args.out).name
    if args.kind == "envelope":
        vol = EnvelopeVolume(data, args.spacing, name=name)
    else:
        vol = ScalarVolume(data, args.spacing, kind=args.kind, name=name)
    header, _ = save_volume(vol, args.out)
    print(header)
    return 0


def cmd_info(args) -> int:
    from .volume_io import load_volume, read_header

    header = read_header(args.path)
    data = np.asarray(load_volume(args.path).data, dtype=float)
    info = dict(header)
    info.update(min=float(data.min()), max=float(data.max()), mean=float(data.mean()), nonzero=int(np.count_nonzero(data)))
    _write_json(None, info)
    return 0


def cmd_phantom(args) -> int:
    from .phantom import PhantomSpec, generate_phantom
    from .volume_io import save_volume

    cfg = _merge(_read_config(args.spec), args, {"seed": "seed"})
    if "dims" not in cfg:
        raise UsageError("phantom spec needs 'dims'")
    spec = PhantomSpec.from_dict(cfg)
    vol, mask, labels = generate_phantom(spec)
    for suffix, v in (("envelope", vol), ("mask", mask), ("labels", labels)):
        print(save_volume(v, _prefixed(args.out, suffix))[0])
    return 0


def cmd_fit(args) -> int:
    from .nakagami import LatticeConfig, fit_parametric_volumes
    from .volume_io import load_envelope, load_mask, save_volume

    vol = load_envelope(args.inp)
    mask = load_mask(args.mask)
    res = fit_parametric_volumes(vol, mask, LatticeConfig(args.side))
    mu_path = save_volume(res.mu_map.with_data(res.mu_map.data, name="mu"), _prefixed(args.out, "mu"))[0]
    om_path = save_volume(res.omega_map.with_data(res.omega_map.data, name="omega"), _prefixed(args.out, "omega"))[0]
    print(mu_path)
    print(om_path)
    if args.plot:
        from .plotting import plot_mid_slices

        print(plot_mid_slices({"mu": res.mu_map.data, "omega": res.omega_map.data}, args.plot, mask.data))
    return 0


def cmd_sweep(args) -> int:
    from .nakagami import lattice_size_sweep
    from .volume_io import load_envelope, load_mask

    vol = load_envelope(args.inp)
    mask = load_mask(args.mask)
    rows = lattice_size_sweep(vol, mask, args.sides, center_stride=args.stride)
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["side", "mm3", "rmse"])
        for side, mm3, rmse in rows:
            writer.writerow([side, repr(mm3), repr(rmse)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.plot:
        from .plotting import plot_sweep

        print(plot_sweep(rows, args.plot), file=sys.stderr)
    return 0


def cmd_decompose(args) -> int:
    from .mnf import FractalController
    from .volume_io import load_mask, load_volume, save_volume
    from .wavelet3d import daubechies8, expand_tree

    vol = load_volume(args.inp)
    inside = np.ones(vol.dims, bool) if args.mask is None else np.asarray(load_mask(args.mask).data, bool)
    ctrl = FractalController(inside, args.jmax, termination=not args.no_termination)
    tree = expand_tree(vol, daubechies8(), ctrl, max_level=args.levels)
    out = Path(args.out)
    index = []
    for node in tree.nodes:
        if node.level == 0:
            continue
        save_volume(node.volume, out / node.path)
        index.append({"path": node.path, "level": node.level, "fd": node.fractal_signature})
    _write_json(out / "tree.json", {"expanded": tree.expanded, "nodes": index})
    print(f"{len(index)} sub-bands written to {out}")
    return 0


def cmd_fractal(args) -> int:
    from .fractal import estimate_fractal_map
    from .volume_io import load_mask, load_volume, save_volume

    vol = load_volume(args.inp)
    mask = None if args.mask is None else load_mask(args.mask)
    fmap = estimate_fractal_map(vol, mask, jmax=args.jmax)
    header, raw = save_volume(fmap.volume, args.out)
    sidecar = raw.with_name(raw.stem + ".stats.json")
    _write_json(sidecar, fmap.stats())
    print(header)
    print(sidecar)
    return 0


def _mnf_config(args):
    from .mnf import MnfConfig

    cfg = _read_config(args.config)
    cfg = _merge(cfg, args, {"side": "side", "jmax": "jmax", "max_level": "max_level"})
    if args.no_termination:
        cfg["termination"] = False
    if args.no_refine:
        cfg["refine"] = False
    try:
        return MnfConfig.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_mnf(args) -> int:
    from .mnf import export_maps, run_mnf_detailed
    from .volume_io import load_envelope, load_mask

    cfg = _mnf_config(args)
    vol = load_envelope(args.inp)
    mask = load_mask(args.mask)
    case_id = args.case_id or vol.name or Path(args.inp).stem
    res = run_mnf_detailed(vol, mask, cfg, case_id=case_id)
    _write_json(args.out, res.descriptor.to_json())
    if args.maps:
        for p in export_maps(vol, mask, cfg, args.maps, result=res):
            log.info("wrote %s", p)
        from .plotting import plot_mid_slices

        inside = np.asarray(res.refinement.mask.data, bool)
        plot_mid_slices(
            {"mu": res.params.mu_map.data, "omega": res.params.omega_map.data}, Path(args.maps) / "maps.png", inside
        )
    return 0


def cmd_classify(args) -> int:
    from .classify import cross_validate, descriptor_matrix, load_feature_dir, read_labels

    descriptors = load_feature_dir(args.features)
    labels = read_labels(args.labels)
    missing = [d.case_id for d in descriptors if d.case_id not in labels]
    if missing:
        raise ValueError(f"no label for case(s) {', '.join(missing)}")
    descriptors.sort(key=lambda d: d.case_id)
    X, keys = descriptor_matrix(descriptors)
    y = [labels[d.case_id] for d in descriptors]
    runs = 1 if args.scheme == "loo" else args.runs
    report = cross_validate(X, y, scheme=args.scheme, runs=runs, seed=args.seed, positive=args.positive).to_dict()
    report["features"] = [f"{s}:{lv}:{o}" for s, lv, o in keys]
    report["cases"] = [d.case_id for d in descriptors]
    _write_json(args.out, report)
    return 0


def cmd_study(args) -> int:
    from .classify import descriptor_matrix
    from .study import StudySpec, run_study

    cfg = _merge(
        _read_config(args.config),
        args,
        {"seed": "seed", "n_per_class": "n_per_class", "scheme": "scheme", "runs": "runs", "side": "side", "max_level": "max_level"},
    )
    try:
        spec = StudySpec.from_dict(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    result = run_study(spec)
    jpath, cpath = result.write(args.out)
    print(jpath)
    print(cpath)
    if not args.no_plots:
        from .plotting import plot_study

        X, _ = descriptor_matrix(result.descriptors)
        print(plot_study(X, result.labels, result.report["features"], Path(args.out) / "study.png"))
    m = result.report["metrics"]
    print(f"accuracy={m['accuracy']:.4f} roc_area={m['roc_area']}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxtex", description="Volumetric Nakagami multifractal texture analysis.", epilog=EPILOG)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_, epilog=EPILOG)
        sp.set_defaults(func=fn)
        return sp

    sp = add("convert", cmd_convert, "convert .npy data (one 3-D array or 2-D slices) to a volume")
    sp.add_argument("inputs", nargs="+", help=".npy files; several 2-D slices are stacked along z")
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.add_argument("--spacing", type=_float_triple, default=(1.0, 1.0, 1.0), help="voxel size sx,sy,sz in mm")
    sp.add_argument("--kind", default="envelope", help="volume kind stored in the header")
    sp.add_argument("--name", default=None)

    sp = add("info", cmd_info, "print a volume header and value summary as JSON")
    sp.add_argument("path")

    sp = add("phantom", cmd_phantom, "render a speckle phantom from a JSON spec")
    sp.add_argument("--spec", required=True, help="phantom spec JSON (dims, spacing, background, lesions, seed)")
    sp.add_argument("--seed", type=int, default=None, help="override the phantom seed")
    sp.add_argument("--out", required=True, help="output prefix; writes <prefix>_envelope/_mask/_labels")

    sp = add("fit", cmd_fit, "voxel-wise Nakagami fit; writes <prefix>_mu and <prefix>_omega")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--side", type=int, default=7, help="lattice side in voxels (odd, >= 3)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--plot", default=None, help="PNG with the mid-slice maps")

    sp = add("sweep", cmd_sweep, "quantile RMSE of lattice fits per lattice size (CSV side,mm3,rmse)")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--sides", type=_int_list, default=[3, 5, 7, 9, 11])
    sp.add_argument("--stride", type=int, default=4, help="spacing of the lattice centre grid")
    sp.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    sp.add_argument("--plot", default=None, help="PNG of the RMSE curve")

    sp = add("decompose", cmd_decompose, "greedy octant wavelet-packet expansion; one volume per node path")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mask", default=None)
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--jmax", type=int, default=5)
    sp.add_argument("--no-termination", action="store_true", help="always expand to --levels")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("fractal", cmd_fractal, "voxel-wise fractal dimension map plus a JSON stats sidecar")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mask", default=None)
    sp.add_argument("--jmax", type=int, default=5)
    sp.add_argument("--out", required=True)

    sp = add("mnf", cmd_mnf, "extract the MNF descriptor of one case")
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--config", default=None, help="MNF config JSON (side, jmax, max_level, termination, ...)")
    sp.add_argument("--side", type=int, default=None)
    sp.add_argument("--jmax", type=int, default=None)
    sp.add_argument("--max-level", dest="max_level", type=int, default=None)
    sp.add_argument("--no-termination", action="store_true")
    sp.add_argument("--no-refine", action="store_true")
    sp.add_argument("--case-id", default=None)
    sp.add_argument("--out", required=True, help="feature JSON path ('-' for stdout)")
    sp.add_argument("--maps", default=None, help="directory for parametric, FD and band volumes plus maps.png")

    sp = add("classify", cmd_classify, "cross-validate naive Bayes on a directory of feature JSON files")
    sp.add_argument("--features", required=True)
    sp.add_argument("--labels", required=True, help="CSV with header case_id,label")
    sp.add_argument("--scheme", default="loo", choices=["loo", "k5", "k10"])
    sp.add_argument("--runs", type=int, default=60)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--positive", default=None, help="positive class (default: progressive)")
    sp.add_argument("--out", default=None, help="report JSON path (stdout if omitted)")

    sp = add("study", cmd_study, "synthetic two-class phantom study end to end")
    sp.add_argument("--config", default=None, help="study spec JSON")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--n-per-class", dest="n_per_class", type=int, default=None)
    sp.add_argument("--scheme", default=None, choices=["loo", "k5", "k10"])
    sp.add_argument("--runs", type=int, default=None)
    sp.add_argument("--side", type=int, default=None)
    sp.add_argument("--max-level", dest="max_level", type=int, default=None)
    sp.add_argument("--no-plots", action="store_true")
    sp.add_argument("--out", required=True, help="output directory for study.json, study.csv and study.png")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"voxtex {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        if args.verbose:
            log.exception("command failed")
        print(f"voxtex {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
