"""Command-line front end: CSV in, fitted-model JSON and report out.

Subcommands
-----------
fit        fit a model described by an INI config to a CSV dataset
predict    evaluate an archived model on new rows
simulate   run a named replication study and write its CSVs
diagnose   randomized quantile residuals in long format for plotting
prep-bike  derive the modelling columns from the raw hourly rental CSV

Every subcommand is deterministic under a fixed --seed.  Exit codes:
0 success, 1 configuration or schema problem, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import json
import pathlib
import re
import sys

import numpy as np
import pandas as pd

from .basis import KnotVector, OutOfSpanError
from .family import FAMILY_NAMES, LINK_NAMES, family_by_name, quantile_residuals
from .fit import (
    CoefficientLayout,
    FitConfig,
    FittedModel,
    FittedTerm,
    ModelSpec,
    NonConvergenceError,
    TermSpec,
    fit,
    predict,
)
from .inference import coef_table, confidence_band
from .sim import SCENARIO_NAMES, run_study

__all__ = ["main", "ConfigError", "load_config", "load_archive", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Bad config file, bad archive, or data that does not match either."""


# ---------------------------------------------------------------------------
# config parsing

_FIT_FLOAT_KEYS = (
    "eps_knot",
    "ridge",
    "tol_met",
    "met_explosion",
    "alpha1_floor",
    "init_alpha_max",
    "init_alpha1_min",
    "lambda_floor",
    "lambda_ceiling",
)
_FIT_INT_KEYS = ("max_model_iter", "max_total_iter", "init_resample_limit", "seed")
_FIT_PAIR_KEYS = ("lambda_init", "phi_init")

_MODEL_KEYS = ("family", "link", "response", "linear", "intercept", "offset")
_TERM_KEYS = ("columns", "q", "d", "dif", "by")

_C_PATTERN = re.compile(r"^C\(\s*([^,()\s]+)\s*(?:,\s*ref\s*=\s*([^()]+?)\s*)?\)$")


def _key_line(path, section: str, key: str) -> str:
    """Best-effort 'file:line:' prefix for a key inside a section."""
    try:
        lines = pathlib.Path(path).read_text(encoding="utf-8").splitlines()
    except OSError:
        return ""
    current = None
    for i, line in enumerate(lines, start=1):
        stripped = line.strip()
        m = re.match(r"^\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
            if key == "":
                if current == section:
                    return f"{path}:{i}: "
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*[=:]", stripped):
            return f"{path}:{i}: "
    return f"{path}: "


def _split_commas(raw: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    out, depth, buf = [], 0, []
    for ch in raw:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(depth - 1, 0)
        if ch == "," and depth == 0:
            out.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    tail = "".join(buf).strip()
    if tail:
        out.append(tail)
    return [t for t in out if t]


def _parse_linear_entry(token: str, where: str) -> dict:
    m = _C_PATTERN.match(token)
    if m:
        ref = m.group(2)
        if ref is not None:
            ref = ref.strip().strip("'\"")
        return {"kind": "categorical", "column": m.group(1), "ref": ref, "levels": None}
    if token.startswith("C(") or "(" in token or ")" in token:
        raise ConfigError(
            f"{where}cannot parse linear entry {token!r}; categorical entries "
            "must look like C(column) or C(column, ref=level)"
        )
    return {"kind": "numeric", "column": token}


def load_config(path):
    """Parse an INI model description.

    Returns (model dict, term dicts, FitConfig, seed, linear entries).
    The model dict feeds ModelSpec once the categorical entries have been
    expanded against the data.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from None

    if "model" not in parser:
        raise ConfigError(f"{path}: missing required [model] section")
    msec = parser["model"]
    for key in msec:
        if key not in _MODEL_KEYS:
            raise ConfigError(
                f"{_key_line(path, 'model', key)}unknown key {key!r} in [model]; "
                f"expected one of {', '.join(_MODEL_KEYS)}"
            )
    family = msec.get("family")
    if not family:
        raise ConfigError(f"{_key_line(path, 'model', '')}[model] needs family = ...")
    family = family.strip().lower()
    if family not in FAMILY_NAMES:
        raise ConfigError(
            f"{_key_line(path, 'model', 'family')}unknown family {family!r}; "
            f"valid families are {', '.join(FAMILY_NAMES)}"
        )
    link = msec.get("link")
    if link is not None:
        link = link.strip().lower()
        if link not in LINK_NAMES:
            raise ConfigError(
                f"{_key_line(path, 'model', 'link')}unknown link {link!r}; "
                f"valid links are {', '.join(LINK_NAMES)}"
            )
    response = msec.get("response")
    if not response:
        raise ConfigError(f"{_key_line(path, 'model', '')}[model] needs response = ...")
    response = response.strip()
    linear_entries = []
    raw_linear = msec.get("linear", "")
    for tok in _split_commas(raw_linear):
        linear_entries.append(
            _parse_linear_entry(tok, _key_line(path, "model", "linear"))
        )
    try:
        intercept = msec.getboolean("intercept", fallback=True)
    except ValueError:
        raise ConfigError(
            f"{_key_line(path, 'model', 'intercept')}intercept must be a boolean"
        ) from None
    offset = msec.get("offset")
    offset = offset.strip() if offset else None

    terms = []
    for section in parser.sections():
        if not section.startswith("term"):
            if section in ("model", "fit"):
                continue
            raise ConfigError(
                f"{_key_line(path, section, '')}unknown section [{section}]; "
                "expected [model], [fit], or [term NAME]"
            )
        label = section[4:].strip() or f"f{len(terms) + 1}"
        tsec = parser[section]
        for key in tsec:
            if key not in _TERM_KEYS:
                raise ConfigError(
                    f"{_key_line(path, section, key)}unknown key {key!r} in "
                    f"[{section}]; expected one of {', '.join(_TERM_KEYS)}"
                )
        columns = _split_commas(tsec.get("columns", ""))
        if not columns:
            raise ConfigError(
                f"{_key_line(path, section, '')}[{section}] needs columns = ..."
            )
        try:
            q = tsec.getint("q")
            d = tsec.getint("d", fallback=4)
            dif = tsec.getint("dif", fallback=2)
        except (ValueError, TypeError):
            raise ConfigError(
                f"{_key_line(path, section, 'q')}q, d, and dif in [{section}] "
                "must be integers"
            ) from None
        if q is None:
            raise ConfigError(
                f"{_key_line(path, section, '')}[{section}] needs q = ..."
            )
        by = tsec.get("by")
        terms.append(
            {
                "label": label,
                "columns": tuple(columns),
                "q": q,
                "d": d,
                "dif": dif,
                "by": by.strip() if by else None,
            }
        )

    kwargs = {}
    seed = 0
    if "fit" in parser:
        fsec = parser["fit"]
        for key in fsec:
            where = _key_line(path, "fit", key)
            try:
                if key == "seed":
                    seed = fsec.getint(key)
                elif key in _FIT_INT_KEYS:
                    kwargs[key] = fsec.getint(key)
                elif key in _FIT_FLOAT_KEYS:
                    kwargs[key] = fsec.getfloat(key)
                elif key in _FIT_PAIR_KEYS:
                    pair = _split_commas(fsec.get(key))
                    if len(pair) != 2:
                        raise ConfigError(
                            f"{where}{key} must be two comma-separated numbers"
                        )
                    kwargs[key] = (float(pair[0]), float(pair[1]))
                else:
                    raise ConfigError(f"{where}unknown key {key!r} in [fit]")
            except (ValueError, TypeError):
                raise ConfigError(f"{where}cannot parse {key!r} in [fit]") from None
    try:
        config = FitConfig(**kwargs)
        config.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: bad [fit] settings: {e}") from None

    model = {
        "family": family,
        "link": link,
        "response": response,
        "intercept": intercept,
        "offset": offset,
    }
    return model, terms, config, seed, linear_entries


# ---------------------------------------------------------------------------
# categorical expansion

def _expand_linear(frame: pd.DataFrame, entries: list[dict], fitting: bool):
    """Materialize dummy columns for categorical entries.

    At fit time the level set is learned from the data (sorted as strings,
    reference excluded); at predict time the stored recipe is replayed and
    unseen levels are an error.  Returns (augmented frame, column names).
    """
    frame = frame.copy()
    names = []
    for e in entries:
        col = e["column"]
        if e["kind"] == "numeric":
            names.append(col)
            continue
        if col not in frame.columns:
            raise ConfigError(f"categorical column {col!r} not in the data")
        values = frame[col].astype(str).to_numpy()
        if fitting:
            levels = sorted(set(values))
            if len(levels) < 2:
                raise ConfigError(
                    f"categorical column {col!r} has a single level {levels!r}"
                )
            ref = e.get("ref")
            if ref is None:
                ref = levels[0]
            elif ref not in levels:
                raise ConfigError(
                    f"reference level {ref!r} of {col!r} not found in the data; "
                    f"observed levels: {', '.join(levels)}"
                )
            e["levels"] = levels
            e["ref"] = ref
        else:
            levels, ref = e["levels"], e["ref"]
            unseen = sorted(set(values) - set(levels))
            if unseen:
                raise ConfigError(
                    f"column {col!r} has level(s) not seen during fitting: "
                    f"{', '.join(unseen)}"
                )
        for lv in levels:
            if lv == ref:
                continue
            name = f"{col}={lv}"
            frame[name] = (values == lv).astype(float)
            names.append(name)
    return frame, names


def _used_columns(model: dict, terms: list[dict], entries: list[dict]) -> list[str]:
    used = []
    if model.get("response"):
        used.append(model["response"])
    for e in entries:
        used.append(e["column"])
    if model.get("offset"):
        used.append(model["offset"])
    for t in terms:
        used.extend(t["columns"])
        if t["by"]:
            used.append(t["by"])
    return list(dict.fromkeys(used))


def _read_csv(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot parse {path} as CSV: {e}") from None


def _drop_missing(frame: pd.DataFrame, used: list[str], label: str) -> pd.DataFrame:
    missing_cols = [c for c in used if c not in frame.columns]
    if missing_cols:
        raise ConfigError(
            f"{label} is missing required column(s): {', '.join(missing_cols)}"
        )
    sub = frame[used]
    keep = ~(sub.isna().any(axis=1) | sub.select_dtypes("number").isin([np.inf, -np.inf]).any(axis=1))
    dropped = int((~keep).sum())
    if dropped:
        print(
            f"note: dropped {dropped} row(s) with missing values in used columns",
            file=sys.stderr,
        )
    return frame.loc[keep]


# ---------------------------------------------------------------------------
# archives

def _flat(a) -> list:
    return np.asarray(a, dtype=float).ravel().tolist()


def archive_dict(model: FittedModel, linear_entries, seed: int, created: str | None) -> dict:
    """JSON-serializable snapshot; reloading reproduces predictions exactly.

    The ``created`` stamp is the only field allowed to differ between two
    runs with the same seed.  Run timing is deliberately excluded.
    """
    layout = model.layout
    terms = []
    for ft in model.terms:
        terms.append(
            {
                "label": ft.label,
                "columns": list(ft.columns),
                "by": ft.by,
                "level": ft.level,
                "q": ft.q,
                "d": ft.d,
                "dif": ft.dif,
                "knots": _flat(ft.knots.knots),
                "col_means": _flat(ft.col_means),
                "alpha_tilde": _flat(ft.alpha_tilde),
                "gamma_tilde": _flat(ft.gamma_tilde),
                "lambda": float(model.lambdas[model.term_index(ft.label)]),
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "created": created,
        "family": model.family.name,
        "link": model.family.link.name,
        "response": model.spec.response,
        "intercept": model.spec.intercept,
        "offset": model.spec.offset,
        "linear_entries": linear_entries,
        "linear_names": list(model.linear_names),
        "linear_columns": list(model.spec.linear),
        "layout": {"p": layout.p, "sizes": [list(sz) for sz in layout.sizes]},
        "n": int(model.n),
        "seed": int(seed),
        "psi": _flat(model.psi),
        "beta": _flat(model.beta),
        "lambdas": _flat(model.lambdas),
        "phi": float(model.phi),
        "edf": float(model.edf),
        "edf_by_coef": _flat(model.edf_by_coef),
        "b_factor": {
            "rows": int(model.b_factor.shape[0]),
            "cols": int(model.b_factor.shape[1]),
            "data": _flat(model.b_factor),
        },
        "inference_ridged": bool(model.inference_ridged),
        "converged": bool(model.converged),
        "met": float(model.met),
        "penalized_loglik": float(model.penalized_loglik),
        "total_iter": int(model.total_iter),
        "saved_iter": int(model.saved_iter),
        "restarts": int(model.restarts),
        "fs_violations": int(model.fs_violations),
        "terms": terms,
    }


def write_archive(arch: dict, path):
    text = json.dumps(arch, indent=2, sort_keys=True)
    pathlib.Path(path).write_text(text + "\n", encoding="utf-8")


def load_archive(path):
    """Rebuild a predict/report-capable model from an archive.

    Returns (FittedModel, linear entries, seed).  The rebuilt model carries
    no per-observation training arrays, so confidence bands are only
    available at fit time.
    """
    try:
        arch = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read archive {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"archive {path} is not valid JSON: {e}") from None
    version = arch.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"archive {path} has schema version {version!r}; this build reads "
            f"version {SCHEMA_VERSION}"
        )
    required = (
        "family", "link", "response", "intercept", "offset", "linear_entries",
        "linear_names", "linear_columns", "layout", "n", "seed", "psi", "beta",
        "lambdas", "phi", "edf", "edf_by_coef", "b_factor", "terms",
    )
    missing = [k for k in required if k not in arch]
    if missing:
        raise ConfigError(
            f"archive {path} is missing field(s): {', '.join(missing)}"
        )
    family = family_by_name(arch["family"], arch["link"])
    layout = CoefficientLayout(
        int(arch["layout"]["p"]),
        tuple(tuple(int(v) for v in sz) for sz in arch["layout"]["sizes"]),
    )
    empty = np.zeros(0)
    terms = []
    for t in arch["terms"]:
        kv = KnotVector(knots=np.asarray(t["knots"], dtype=float), degree=int(t["d"]) - 1)
        terms.append(
            FittedTerm(
                label=t["label"],
                columns=tuple(t["columns"]),
                by=t["by"],
                level=t["level"],
                q=int(t["q"]),
                d=int(t["d"]),
                dif=int(t["dif"]),
                knots=kv,
                col_means=np.asarray(t["col_means"], dtype=float),
                deriv_col_means=empty,
                alpha_tilde=np.asarray(t["alpha_tilde"], dtype=float),
                gamma_tilde=np.asarray(t["gamma_tilde"], dtype=float),
                u_active=empty,
                ntil=empty,
                ttil=empty,
                f=empty,
                mask=None,
            )
        )
    bf = arch["b_factor"]
    b_factor = np.asarray(bf["data"], dtype=float).reshape(bf["rows"], bf["cols"])
    spec = ModelSpec(
        family=family,
        response=arch["response"],
        linear=tuple(arch["linear_columns"]),
        terms=(),
        intercept=bool(arch["intercept"]),
        offset=arch["offset"],
    )
    model = FittedModel(
        spec=spec,
        config=FitConfig(),
        family=family,
        layout=layout,
        linear_names=tuple(arch["linear_names"]),
        psi=np.asarray(arch["psi"], dtype=float),
        beta=np.asarray(arch["beta"], dtype=float),
        lambdas=np.asarray(arch["lambdas"], dtype=float),
        phi=float(arch["phi"]),
        terms=tuple(terms),
        b_factor=b_factor,
        inference_ridged=bool(arch["inference_ridged"]),
        edf_by_coef=np.asarray(arch["edf_by_coef"], dtype=float),
        edf=float(arch["edf"]),
        eta=empty,
        mu=empty,
        n=int(arch["n"]),
        converged=bool(arch.get("converged", True)),
        met=float(arch.get("met", np.nan)),
        penalized_loglik=float(arch.get("penalized_loglik", np.nan)),
        total_iter=int(arch.get("total_iter", 0)),
        saved_iter=int(arch.get("saved_iter", 0)),
        restarts=int(arch.get("restarts", 0)),
        fs_violations=int(arch.get("fs_violations", 0)),
        clamp_events=0,
        trace=[],
        seconds=float("nan"),
    )
    return model, arch["linear_entries"], int(arch["seed"])


# ---------------------------------------------------------------------------
# report

def render_report(model: FittedModel) -> str:
    rep = coef_table(model)
    lines = []
    phi_note = " (fixed)" if model.family.phi_fixed else ""
    lines.append(
        f"family: {model.family.name} ({model.family.link.name} link)   "
        f"n = {model.n}   dim(psi) = {model.dim}"
    )
    status = "converged" if model.converged else "NOT converged"
    lines.append(
        f"{status} after {model.total_iter} iterations "
        f"(saved iteration {model.saved_iter}, {model.restarts} restart(s)), "
        f"met = {model.met:.3g}"
    )
    lines.append(
        f"penalized log-likelihood = {model.penalized_loglik:.4f}   "
        f"edf = {model.edf:.2f}   phi = {model.phi:.4g}{phi_note}"
    )
    if model.fs_violations:
        lines.append(f"warning: {model.fs_violations} nonpositive smoothing updates")
    if model.inference_ridged:
        lines.append("warning: standard errors computed from a ridged factor")
    lines.append("")
    lines.append("coefficients and approximate standard errors")
    lines.append(f"  {'name':<28} {'estimate':>10} {'se':>8} {'z':>8} {'p':>10}")
    for row in rep.linear + rep.directions:
        p = f"{row.p:.2g}" if row.p >= 1e-3 else "< 0.001"
        lines.append(
            f"  {row.name:<28} {row.estimate:>10.3f} {row.se:>8.3f} "
            f"{row.z:>8.2f} {p:>10}"
        )
    lines.append("")
    lines.append("smooth terms")
    lines.append(f"  {'label':<28} {'q':>4} {'edf':>8} {'lambda':>12}")
    for srow in rep.smooths:
        lines.append(
            f"  {srow.label:<28} {srow.q:>4} {srow.edf:>8.2f} {srow.lam:>12.4g}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands

def _cmd_fit(args) -> int:
    model_cfg, term_cfgs, config, seed, entries = load_config(args.config)
    if args.seed is not None:
        seed = args.seed
    frame = _read_csv(args.data)
    used = _used_columns(model_cfg, term_cfgs, entries)
    frame = _drop_missing(frame, used, str(args.data))
    frame, linear_names = _expand_linear(frame, entries, fitting=True)
    spec = ModelSpec(
        family=family_by_name(model_cfg["family"], model_cfg["link"]),
        response=model_cfg["response"],
        linear=tuple(linear_names),
        terms=tuple(
            TermSpec(
                columns=t["columns"],
                q=t["q"],
                d=t["d"],
                dif=t["dif"],
                by=t["by"],
                label=t["label"],
            )
            for t in term_cfgs
        ),
        intercept=model_cfg["intercept"],
        offset=model_cfg["offset"],
    )
    rng = np.random.default_rng(seed)
    try:
        model = fit(spec, frame, config=config, rng=rng)
    except NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        print("error: no iteration could be saved; nothing to archive", file=sys.stderr)
        return 2
    created = None if args.no_timestamp else datetime.datetime.now(
        datetime.timezone.utc
    ).isoformat()
    arch = archive_dict(model, entries, seed, created)
    write_archive(arch, args.out)
    report = render_report(model)
    sys.stdout.write(report)
    if args.report:
        pathlib.Path(args.report).write_text(report, encoding="utf-8")
    if args.bands:
        rows = []
        for j, ft in enumerate(model.terms):
            band = confidence_band(model, j)
            for u, fh, lo, hi in zip(band.u, band.fhat, band.lower, band.upper):
                rows.append(
                    {"term": j + 1, "label": ft.label, "u": u,
                     "fhat": fh, "lower": lo, "upper": hi}
                )
        pd.DataFrame(rows).to_csv(args.bands, index=False)
    if not model.converged:
        print("error: fit did not converge; archive holds the best iterate",
              file=sys.stderr)
        return 2
    return 0


def _cmd_predict(args) -> int:
    model, entries, _ = load_archive(args.archive)
    frame = _read_csv(args.data)
    used = [e["column"] for e in entries]
    if model.spec.offset:
        used.append(model.spec.offset)
    for ft in model.terms:
        used.extend(ft.columns)
        if ft.by:
            used.append(ft.by)
    used = list(dict.fromkeys(used))
    frame = _drop_missing(frame, used, str(args.data))
    frame, _ = _expand_linear(frame, entries, fitting=False)
    pred = predict(model, frame)
    out = pd.DataFrame({"row": frame.index.to_numpy(), "eta": pred.eta, "mu": pred.mu})
    for label, contrib in pred.terms.items():
        out[f"f:{label}"] = contrib
    out.to_csv(args.out, index=False)
    return 0


def _cmd_simulate(args) -> int:
    if args.scenario not in SCENARIO_NAMES:
        print(
            f"error: unknown scenario {args.scenario!r}; valid names are "
            f"{', '.join(SCENARIO_NAMES)}",
            file=sys.stderr,
        )
        return 1
    summary = run_study(
        args.scenario,
        args.n,
        args.reps,
        jobs=args.jobs,
        seed=args.seed,
        collect_functions=True,
    )
    paths = summary.write_csv(args.out)
    agg = summary.aggregate_frame()
    cols = [c for c in ("n", "replicates", "instability_rate", "mean_rel_error",
                        "converged_rate", "phi_hat_mean") if c in agg.columns]
    sys.stdout.write(agg[cols].to_string(index=False) + "\n")
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_diagnose(args) -> int:
    model, entries, _ = load_archive(args.archive)
    frame = _read_csv(args.data)
    used = [model.spec.response] + [e["column"] for e in entries]
    if model.spec.offset:
        used.append(model.spec.offset)
    for ft in model.terms:
        used.extend(ft.columns)
        if ft.by:
            used.append(ft.by)
    used = list(dict.fromkeys(used))
    frame = _drop_missing(frame, used, str(args.data))
    frame, _ = _expand_linear(frame, entries, fitting=False)
    pred = predict(model, frame)
    y = frame[model.spec.response].to_numpy(dtype=float)
    mu, _ = model.family.clamp_mu(pred.mu)
    rng = np.random.default_rng(args.seed)
    res = quantile_residuals(
        y, mu, model.phi, model.family, rng=rng, replicates=args.replicates
    )
    n = y.size
    row_ids = frame.index.to_numpy()
    rows = np.repeat(row_ids, args.replicates)
    reps = np.tile(np.arange(args.replicates), n)
    out = pd.DataFrame(
        {
            "row": rows,
            "replicate": reps,
            "residual": res.ravel(),
            "fitted": np.repeat(mu, args.replicates),
            "index": np.repeat(np.arange(1, n + 1), args.replicates),
        }
    )
    out.to_csv(args.out, index=False)
    return 0


_WEEKDAY_NAMES = ("sun", "mon", "tue", "wed", "thu", "fri", "sat")


def _cmd_prep_bike(args) -> int:
    frame = _read_csv(args.data)
    needed = ["dteday", "yr", "holiday", "weekday", "hum", "windspeed", "hr", "cnt"]
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise ConfigError(
            f"{args.data} is missing required column(s): {', '.join(missing)}"
        )
    out = pd.DataFrame(
        {
            "hdemand": (frame["cnt"].to_numpy() > args.threshold).astype(int),
            "yday": pd.to_datetime(frame["dteday"]).dt.dayofyear,
            "yr": np.where(frame["yr"].to_numpy() == 0, "2011", "2012"),
            "holiday": np.where(frame["holiday"].to_numpy() == 0, "no", "yes"),
            "weekday": [_WEEKDAY_NAMES[int(w)] for w in frame["weekday"]],
            "hum": frame["hum"].to_numpy(dtype=float),
            "windspeed": frame["windspeed"].to_numpy(dtype=float),
            "hr": frame["hr"].to_numpy(dtype=float),
        }
    )
    out.to_csv(args.out, index=False)
    print(f"wrote {args.out} ({len(out)} rows, high-demand share "
          f"{out['hdemand'].mean():.3f})")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gplsiam",
        description="Fit and interrogate partially linear single-index additive models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model described by an INI config")
    p.add_argument("config", help="INI model description")
    p.add_argument("data", help="CSV dataset")
    p.add_argument("--out", required=True, help="archive JSON path")
    p.add_argument("--report", help="also write the report to this file")
    p.add_argument("--bands", help="write per-term 95%% confidence bands CSV")
    p.add_argument("--seed", type=int, default=None,
                   help="override the seed from the config")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the created stamp (byte-stable archives)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="evaluate an archived model on new rows")
    p.add_argument("archive", help="archive JSON from fit")
    p.add_argument("data", help="CSV dataset")
    p.add_argument("--out", required=True, help="prediction CSV path")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("simulate", help="run a named replication study")
    p.add_argument("scenario", help=f"one of: {', '.join(SCENARIO_NAMES)}")
    p.add_argument("--n", type=int, nargs="+", required=True,
                   help="sample sizes, e.g. --n 200 800")
    p.add_argument("--reps", type=int, default=50, help="replicates per cell")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("diagnose", help="randomized quantile residuals, long CSV")
    p.add_argument("archive", help="archive JSON from fit")
    p.add_argument("data", help="CSV dataset (with the response column)")
    p.add_argument("--replicates", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="residual CSV path")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("prep-bike", help="derive modelling columns from hourly rentals")
    p.add_argument("data", help="raw hourly CSV (dteday, yr, hr, cnt, ...)")
    p.add_argument("--out", required=True, help="prepared CSV path")
    p.add_argument("--threshold", type=int, default=150,
                   help="count above which demand is high")
    p.set_defaults(func=_cmd_prep_bike)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OutOfSpanError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
