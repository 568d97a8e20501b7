"""Command-line interface: ``gramediate <command> [options]``.

Option precedence is command-line flag, then ``--config`` JSON file, then
built-in default. ``GRAMEDIATE_SEED`` replaces the built-in default seed.
Every report carries the resolved configuration so a run can be repeated.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .graphs import (
    GraphError,
    interaction_graph,
    is_graphical,
    mediator_candidates,
    weak_decompositions,
)
from .loglin import (
    NAMED_MODELS,
    GeneratingClass,
    ModelError,
    compare_nested,
    ipf_fit,
    model_name,
    named_model,
)
from .mediation import ConvergenceError, mediate
from .modelspace import MODEL_CLASSES, FitCache, enumerate_hierarchical, search
from .table import (
    ContingencyTable,
    DataError,
    VariableSchema,
    crosstab,
    embedded_dataset,
    expand,
    marginalize,
    parse_csv,
)
from .validate import default_workers, desk_grid, full_grid, recovery_curve, reports_to_csv

log = logging.getLogger("gramediate")

DEFAULT_SEED = 20240101
BUILTIN_ORDER = ("SSC-W", "SSC-F", "TIME", "IC")
P_FLOOR = 1e-16

DEFAULTS = {
    "data": "builtin",
    "vars": None,
    "model": None,
    "compare": None,
    "all_3var": False,
    "nvars": None,
    "treatment": "IC",
    "mediator": "SSC-W",
    "outcome": "SSC-F",
    "covariates": "TIME",
    "coding": "numeric",
    "target": "model9",
    "q": None,
    "q_grid": None,
    "full_scale": False,
    "reps": 500,
    "nboot": 2500,
    "seed": None,
    "workers": None,
    "model_class": "decomposable",
    "format": None,
    "out": None,
}


_SHARED = ("data", "vars", "seed", "format")
COMMAND_KEYS = {
    "fit": _SHARED + ("model", "compare", "all_3var"),
    "search": _SHARED + ("model_class",),
    "enumerate": ("vars", "nvars", "format"),
    "mediators": _SHARED + ("model", "treatment", "model_class"),
    "validate": _SHARED + ("target", "q", "q_grid", "full_scale", "reps", "model_class"),
    "mediate": _SHARED + ("treatment", "mediator", "outcome", "covariates", "coding", "nboot"),
}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------- data access


def _level_sort_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def load_table(source: str) -> ContingencyTable:
    """``builtin``, a JSON table ``{schema, counts}`` or a long-format CSV."""
    if source == "builtin":
        return embedded_dataset()
    path = Path(source)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return ContingencyTable.from_json(text)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{source}: empty file")
    import csv

    rows = list(csv.reader(lines))
    header = [h.strip() for h in rows[0]]
    schema = []
    for j, name in enumerate(header):
        labels = sorted({r[j].strip() for r in rows[1:] if j < len(r)}, key=_level_sort_key)
        if len(labels) < 2:
            labels = labels + [f"_{k}" for k in range(2 - len(labels))]
        schema.append(VariableSchema(name, tuple(labels)))
    return crosstab(parse_csv(text, schema))


def select_table(table: ContingencyTable, variables: Sequence[str] | None) -> ContingencyTable:
    if variables is None:
        if set(table.names) == set(BUILTIN_ORDER):
            variables = BUILTIN_ORDER
        else:
            variables = table.names
    variables = list(variables)
    return marginalize(table, variables).reorder(variables)


def _split(value) -> list[str] | None:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [v.strip() for v in str(value).split(",") if v.strip()]


def parse_model(spec: str, variables: Sequence[str] | None = None) -> GeneratingClass:
    key = spec.strip().lower().replace(" ", "")
    if key in NAMED_MODELS:
        return named_model(key)
    return GeneratingClass.parse(spec, variables)


def _fmt_p(p: float) -> float:
    return 0.0 if p <= P_FLOOR else p


def _fit_json(fit) -> dict:
    out = fit.to_json()
    out["pvalue"] = _fmt_p(fit.pvalue)
    name = model_name(fit.generating_class)
    if name:
        out["name"] = name
    return out


def _model_json(gc: GeneratingClass | None) -> dict | None:
    if gc is None:
        return None
    return {"model": str(gc), "name": model_name(gc), "generators": [list(g) for g in gc.generators]}


# ------------------------------------------------------------------ commands


def cmd_fit(cfg: dict) -> dict:
    table = load_table(cfg["data"])
    variables = _split(cfg["vars"])
    if cfg["compare"]:
        sub_spec, super_spec = cfg["compare"]
        sub = parse_model(sub_spec)
        sup = parse_model(super_spec)
        tab = select_table(table, variables or sup.variables)
        sub_fit = ipf_fit(tab, sub.canonical(tab.names))
        sup_fit = ipf_fit(tab, sup.canonical(tab.names))
        cmp = compare_nested(sub_fit, sup_fit).to_json()
        cmp["pvalue"] = _fmt_p(cmp["pvalue"])
        return {"comparison": cmp, "sub": _fit_json(sub_fit), "super": _fit_json(sup_fit)}
    if cfg["all_3var"]:
        variables = variables or ["SSC-W", "SSC-F", "TIME"]
        if len(variables) != 3:
            raise UsageError("--all-3var needs exactly three variables")
        tab = select_table(table, variables)
        models = [m for m in enumerate_hierarchical(3, tab.names) if not m.is_saturated()]

        def order(m):
            name = model_name(m)
            return (0, int(name.split()[1])) if name else (1, 0)

        return {"models": [_fit_json(ipf_fit(tab, m)) for m in sorted(models, key=order)]}
    if not cfg["model"]:
        raise UsageError("fit needs --model, --all-3var or --compare")
    gc = parse_model(cfg["model"])
    tab = select_table(table, variables or gc.variables)
    return {"fit": _fit_json(ipf_fit(tab, GeneratingClass(gc.generators, tab.names)))}


def _search(cfg: dict):
    table = select_table(load_table(cfg["data"]), _split(cfg["vars"]))
    cache = FitCache(table)
    fwd, bwd, agreed = search(table, cache, cfg["model_class"])
    return table, fwd, bwd, agreed


def cmd_search(cfg: dict) -> dict:
    table, fwd, bwd, agreed = _search(cfg)
    return {
        "variables": list(table.names),
        "model_class": cfg["model_class"],
        "forward": fwd.to_json(),
        "backward": bwd.to_json(),
        "consensus": _model_json(agreed),
    }


def cmd_enumerate(cfg: dict) -> dict:
    names = _split(cfg["vars"])
    n = cfg["nvars"] if cfg["nvars"] is not None else (len(names) if names else None)
    if n is None:
        raise UsageError("enumerate needs --nvars or --vars")
    models = enumerate_hierarchical(int(n), names)
    return {"nvars": int(n), "count": len(models), "models": [str(m) for m in models]}


def cmd_mediators(cfg: dict) -> dict:
    treatment = cfg["treatment"]
    if cfg["model"]:
        gc = parse_model(cfg["model"])
        table = select_table(load_table(cfg["data"]), _split(cfg["vars"]) or gc.variables)
        gc = gc.canonical(table.names)
        agreed = True
    else:
        table, fwd, bwd, found = _search(cfg)
        agreed = found is not None
        gc = found if agreed else fwd.final
    graph = interaction_graph(gc)
    if treatment not in graph.vertices:
        raise GraphError(f"treatment {treatment!r} is not among {list(graph.vertices)}")
    order = list(graph.vertices)
    candidates = mediator_candidates(graph, treatment)
    return {
        "selected": str(gc),
        "name": model_name(gc),
        "consensus": agreed,
        "graphical": is_graphical(gc),
        "graph": graph.to_json(),
        "dot": graph.to_dot(),
        "decompositions": [d.to_json(order) for d in weak_decompositions(graph)],
        "treatment": treatment,
        "candidates": [[v for v in order if v in c] for c in candidates],
    }


def _q_values(cfg: dict) -> list[float]:
    if cfg["full_scale"]:
        return full_grid()
    if cfg["q"] is not None:
        return [float(q) for q in _split(cfg["q"])]
    if cfg["q_grid"]:
        spec = str(cfg["q_grid"])
        if ":" in spec:
            lo, hi, step = (float(x) for x in spec.split(":"))
            n = int(round((hi - lo) / step)) + 1
            return [round(lo + i * step, 10) for i in range(n)]
        return [float(q) for q in _split(spec)]
    return desk_grid()


def cmd_validate(cfg: dict) -> list:
    target = parse_model(cfg["target"])
    variables = _split(cfg["vars"]) or list(target.variables)
    table = select_table(load_table(cfg["data"]), variables)
    reps = 10_000 if cfg["full_scale"] and cfg.get("_reps_default") else int(cfg["reps"])
    cfg["_reps"] = reps
    return recovery_curve(
        expand(table),
        target.canonical(table.names),
        table.names,
        qs=_q_values(cfg),
        replicates=reps,
        seed=cfg["seed"],
        workers=cfg["workers"],
        model_class=cfg["model_class"],
    )


def cmd_mediate(cfg: dict) -> dict:
    covariates = _split(cfg["covariates"]) or []
    needed = [cfg["treatment"], cfg["mediator"], cfg["outcome"], *covariates]
    table = select_table(load_table(cfg["data"]), needed)
    est = mediate(
        expand(table),
        cfg["treatment"],
        cfg["mediator"],
        cfg["outcome"],
        covariates,
        n_boot=int(cfg["nboot"]),
        seed=cfg["seed"],
        coding=cfg["coding"],
        workers=cfg["workers"],
    )
    out = est.to_json()
    for row in out["rows"]:
        row["pvalue"] = [_fmt_p(p) for p in row["pvalue"]]
    return out


COMMANDS = {
    "fit": cmd_fit,
    "search": cmd_search,
    "enumerate": cmd_enumerate,
    "mediators": cmd_mediators,
    "validate": cmd_validate,
    "mediate": cmd_mediate,
}


# ------------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--data", help="'builtin', a long-format CSV or a JSON table")
    common.add_argument("--vars", help="comma-separated variables (order sets output order)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=["json", "csv", "dot"])
    common.add_argument("--model-class", dest="model_class", choices=MODEL_CLASSES)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gramediate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit loglinear models by IPF")
    p.add_argument("--model", help="bracket notation or a model name such as model5")
    p.add_argument("--compare", nargs=2, metavar=("SUB", "SUPER"))
    p.add_argument("--all-3var", dest="all_3var", action="store_true", default=None)

    sub.add_parser("search", parents=[common], help="forward/backward AIC search")

    p = sub.add_parser("enumerate", parents=[common], help="list all hierarchical models")
    p.add_argument("--nvars", type=int)

    p = sub.add_parser("mediators", parents=[common], help="interaction graph and mediator candidates")
    p.add_argument("--treatment")
    p.add_argument("--model", help="skip the search and use this model")

    p = sub.add_parser("validate", parents=[common], help="subsampling recovery curve (CSV)")
    p.add_argument("--target", help="model name or bracket notation")
    p.add_argument("--q", help="sampling fraction(s), comma-separated")
    p.add_argument("--q-grid", dest="q_grid", help="'lo:hi:step' or a comma list")
    p.add_argument("--reps", type=int)
    p.add_argument("--full-scale", dest="full_scale", action="store_true", default=None,
                   help="q = 1%%..99%% with 10000 replicates unless --reps is given")

    p = sub.add_parser("mediate", parents=[common], help="ordinal causal mediation analysis")
    p.add_argument("--treatment")
    p.add_argument("--mediator")
    p.add_argument("--outcome")
    p.add_argument("--covariates", help="comma-separated")
    p.add_argument("--coding", choices=["numeric", "dummy"])
    p.add_argument("--nboot", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    file_cfg = {}
    if args.config:
        file_cfg = json.loads(Path(args.config).read_text())
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    cfg = dict(DEFAULTS)
    env_seed = os.environ.get("GRAMEDIATE_SEED")
    cfg["seed"] = int(env_seed) if env_seed else DEFAULT_SEED
    cfg["workers"] = default_workers()
    cfg["_reps_default"] = True
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
            if key == "reps":
                cfg["_reps_default"] = False
        elif key in file_cfg:
            cfg[key] = file_cfg[key]
            if key == "reps":
                cfg["_reps_default"] = False
    cfg["command"] = args.command
    return cfg


def _public(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def render(cfg: dict, result) -> str:
    command = cfg["command"]
    fmt = cfg["format"] or ("csv" if command == "validate" else "json")
    # worker count and output path never change results; leaving them out keeps files identical
    header = {"command": command, "version": __version__}
    header.update((k, cfg[k]) for k in COMMAND_KEYS[command])
    if command == "validate":
        header["reps"] = cfg["_reps"]
    if command == "validate":
        if fmt == "csv":
            lines = [f"{k}={json.dumps(v)}" for k, v in header.items()]
            return reports_to_csv(result, header=lines)
        result = {"reports": [r.to_row() for r in result]}
    elif fmt == "dot":
        if command != "mediators":
            raise UsageError("--format dot is only available for 'mediators'")
        return result["dot"]
    elif fmt == "csv":
        raise UsageError(f"--format csv is not available for '{command}'")
    payload = {"config": header, "result": result}
    return json.dumps(payload, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        log.info("config: %s", json.dumps(_public(cfg)))
        result = COMMANDS[args.command](cfg)
        text = render(cfg, result)
        if cfg["out"]:
            Path(cfg["out"]).write_text(text)
        else:
            sys.stdout.write(text)
    except (DataError, ModelError, GraphError, ConvergenceError, UsageError, ValueError,
            OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc).strip("'\""), "command": args.command}
        sys.stderr.write(json.dumps(err) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
