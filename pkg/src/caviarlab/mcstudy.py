"""Monte Carlo size studies for Wald tests on nested quantile models.

Each replication simulates a sample, fits the full model, builds every
requested sandwich covariance and records the Wald p-value.  Studies
are deterministic given the master seed regardless of worker count:
per-replication seeds are derived by mixing the replication index into
the master seed, and results reduce by replication index.
"""

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import covmat, dgp, estimate, infer, model
from .numkit import std_normal_pdf, std_normal_quantile

DEFAULT_ALPHAS = (0.01, 0.05, 0.10, 0.20)

_MASK64 = (1 << 64) - 1


def derive_seed(master_seed, rep):
    """Mix a replication index into the master seed (splitmix-style).

    Subsets of replications can be re-run in isolation and still match
    the full run.
    """
    z = (rep + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return (master_seed ^ z) & _MASK64


def full_model_for(dgp_name, tau):
    """The full (unrestricted) model each catalog DGP is nested in."""
    key = dgp_name.lower()
    if key in ("r1", "r2", "r4"):
        return model.ModelSpec.asym_slope(tau)
    if key == "r3":
        return model.ModelSpec.generic(
            tau, 1, [("pos", 1), ("neg", 1)], lead=("sqrt_pos", 1))
    raise ValueError(f"no full model registered for DGP {dgp_name!r}")


def truth_for(dgp_name, tau):
    """True full-model parameters and oracle density for a catalog DGP.

    Returns (beta_true, h_info) where h_info is either a constant
    density or the tag "r3" for the time-varying case (computed from
    the sample in the replication).
    """
    key = dgp_name.lower()
    zt = std_normal_quantile(tau)
    phi = float(std_normal_pdf(zt))
    if key == "r1":
        return np.array([zt, 0.2, 0.3, 0.3]), 0.8 * phi
    if key == "r2":
        return np.array([zt, 0.2, 0.3, -0.3]), 0.8 * phi
    if key == "r4":
        mult = 3.0 if tau <= 0.4 else (1.0 if tau <= 0.6 else 2.0)
        return np.array([mult * zt, 0.2, 0.3, 0.3]), 0.8 * phi / mult
    if key == "r3":
        return np.array([zt, 0.2, 0.3, 0.3]), "r3"
    raise ValueError(f"no truth registered for DGP {dgp_name!r}")


class McConfig:
    """Everything a size study needs, serializable for hashing.

    `methods` is a list of (name, params) pairs with name in
    {oracle_true_beta, oracle_h0, arb_sim, arb_analytic, fd, kernel};
    arb params: n_draws, vd_updates.
    """

    def __init__(self, dgp_name, T, replications, tau, R, gamma,
                 alphas=DEFAULT_ALPHAS, methods=None, est_config=None,
                 master_seed=0, checkpoint_path=None):
        if replications < 1:
            raise ValueError("need at least one replication")
        alphas = tuple(float(a) for a in alphas)
        if any(not 0.0 < a < 1.0 for a in alphas) or \
                list(alphas) != sorted(alphas):
            raise ValueError("alpha levels must be sorted inside (0, 1)")
        self.dgp_name = dgp_name
        self.T = int(T)
        self.replications = int(replications)
        self.tau = float(tau)
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        self.alphas = alphas
        self.methods = methods or default_methods()
        self.est_config = est_config or estimate.EstimateConfig()
        self.master_seed = int(master_seed)
        self.checkpoint_path = checkpoint_path

    def config_hash(self):
        """Stable digest of everything that affects the results."""
        ec = self.est_config
        payload = {
            "dgp": self.dgp_name.lower(), "T": self.T, "tau": self.tau,
            "R": self.R.tolist(), "gamma": self.gamma.tolist(),
            "methods": [[name, dict(sorted(params.items()))]
                        for name, params in self.methods],
            "master_seed": self.master_seed,
            "est": [ec.n_trials, ec.m_keep, ec.a_polish, ec.ftol,
                    ec.maxiter, ec.seed],
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_methods():
    return [
        ("arb_sim", {"n_draws": 10_000, "vd_updates": 2}),
        ("arb_analytic", {"vd_updates": 2}),
        ("kernel", {}),
    ]


def method_label(name, params):
    if name == "arb_sim":
        return f"arb_sim_n{params.get('n_draws', 10_000)}" \
               f"_vd{params.get('vd_updates', 2)}"
    if name == "arb_analytic":
        return f"arb_analytic_vd{params.get('vd_updates', 2)}"
    return name


def _sandwich_for(name, params, spec, fit, y, seed, truth):
    beta_true, h_info = truth
    if name == "kernel":
        return covmat.kernel_sandwich(spec, fit)
    if name == "fd":
        cfg = estimate.EstimateConfig(
            n_trials=fit_cfg_trials(params), seed=seed)
        return covmat.fd_sandwich(spec, y, fit,
                                  delta_tau=params.get("delta_tau"),
                                  est_cfg=cfg)
    if name in ("arb_sim", "arb_analytic"):
        cfg = covmat.ArbConfig(
            n_draws=params.get("n_draws", 10_000),
            vd_updates=params.get("vd_updates", 2),
            seed=seed, mode="sim" if name == "arb_sim" else "analytic")
        return covmat.arb_sandwich(spec, fit, cfg)
    if name == "oracle_h0":
        return covmat.oracle_h0_sandwich(spec, fit, _oracle_h(h_info, y, spec))
    if name == "oracle_true_beta":
        return covmat.oracle_true_beta_sandwich(
            spec, y, beta_true, fit.f0, _oracle_h(h_info, y, spec))
    raise ValueError(f"unknown sandwich method {name!r}")


def _oracle_h(h_info, y, spec):
    if h_info != "r3":
        return h_info
    # undefined-density sentinels (no positive history) drop out of D
    h = covmat.h_oracle_r3(y, 0.2, spec.tau)
    return np.where(np.isfinite(h), h, 0.0)


def fit_cfg_trials(params):
    return params.get("n_trials", estimate.DEFAULT_N_TRIALS)


def run_replication(cfg, rep):
    """One simulate-fit-test cycle; never raises, records errors."""
    seed = derive_seed(cfg.master_seed, rep)
    record = {"rep": rep, "seed": seed, "p_values": {}, "errors": {}}
    try:
        sample = dgp.simulate(dgp.catalog(cfg.dgp_name), cfg.T, seed)
        spec = full_model_for(cfg.dgp_name, cfg.tau)
        est_cfg = estimate.EstimateConfig(
            n_trials=cfg.est_config.n_trials, m_keep=cfg.est_config.m_keep,
            a_polish=cfg.est_config.a_polish, ftol=cfg.est_config.ftol,
            maxiter=cfg.est_config.maxiter, seed=seed & 0x7FFFFFFF)
        fit = estimate.fit(spec, sample.y, est_cfg)
        truth = truth_for(cfg.dgp_name, cfg.tau)
    except Exception as exc:
        record["errors"]["_fit"] = f"{type(exc).__name__}: {exc}"
        return record
    for name, params in cfg.methods:
        label = method_label(name, params)
        try:
            sw = _sandwich_for(name, params, spec, fit, sample.y,
                               (seed + 1) & 0x7FFFFFFF, truth)
            res = infer.wald(fit.beta, sw, cfg.R, cfg.gamma, cfg.T)
            record["p_values"][label] = res.p_value
        except Exception as exc:
            record["errors"][label] = f"{type(exc).__name__}: {exc}"
    return record


class McReport:
    """Rejection rates per method and alpha, with failure accounting."""

    def __init__(self, cfg, records, wall_clock):
        self.cfg = cfg
        self.records = sorted(records, key=lambda r: r["rep"])
        self.wall_clock = wall_clock
        self.labels = [method_label(n, p) for n, p in cfg.methods]
        self.rates = {}
        self.n_used = {}
        self.failures = {}
        for label in self.labels:
            ps = [r["p_values"][label] for r in self.records
                  if label in r["p_values"]]
            n = len(ps)
            self.n_used[label] = n
            self.failures[label] = len(self.records) - n
            self.rates[label] = {
                a: (sum(p <= a for p in ps) / n if n else float("nan"))
                for a in cfg.alphas}

    def rejection_counts(self):
        return {label: {a: sum(r["p_values"][label] <= a
                               for r in self.records
                               if label in r["p_values"])
                        for a in self.cfg.alphas}
                for label in self.labels}

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "alpha", "rate", "n_reps", "failures"])
        for label in self.labels:
            for a in self.cfg.alphas:
                w.writerow([label, a, f"{self.rates[label][a]:.6f}",
                            self.n_used[label], self.failures[label]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_text(self):
        lines = []
        head = "method".ljust(28) + "".join(
            f"a={a:<8g}" for a in self.cfg.alphas) + "n_reps  failures"
        lines.append(head)
        for label in self.labels:
            row = label.ljust(28) + "".join(
                f"{self.rates[label][a]:<10.3f}" for a in self.cfg.alphas)
            row += f"{self.n_used[label]:<8d}{self.failures[label]}"
            lines.append(row)
        return "\n".join(lines)


def _load_checkpoint(cfg):
    done = {}
    path = cfg.checkpoint_path
    if not path or not os.path.exists(path):
        return done
    want = cfg.config_hash()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("config_hash") == want:
                done[rec["rep"]] = rec
    return done


def _append_checkpoint(cfg, record):
    if not cfg.checkpoint_path:
        return
    parent = os.path.dirname(cfg.checkpoint_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    rec = dict(record)
    rec["config_hash"] = cfg.config_hash()
    with open(cfg.checkpoint_path, "a") as fh:
        fh.write(json.dumps(rec) + "\n")


def run_size_study(cfg, threads=1, progress=None):
    """Execute (or resume) a size study.

    Per-replication failures are captured in the report, never abort
    the study.  Any worker count yields identical rejection counts.
    """
    start = time.time()
    done = _load_checkpoint(cfg)
    pending = [rep for rep in range(cfg.replications) if rep not in done]
    records = list(done.values())
    if pending:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                for record in pool.map(run_replication,
                                       [cfg] * len(pending), pending):
                    _append_checkpoint(cfg, record)
                    records.append(record)
                    if progress:
                        progress(record)
        else:
            for rep in pending:
                record = run_replication(cfg, rep)
                _append_checkpoint(cfg, record)
                records.append(record)
                if progress:
                    progress(record)
    return McReport(cfg, records, time.time() - start)


def table_suite_configs(suite, scale=1.0, master_seed=0, est_config=None,
                        checkpoint_dir=None):
    """Study configurations mirroring the published size tables.

    `scale` multiplies the replication count only (sample sizes are
    caption parameters).  Returns a list of (title, McConfig).
    """
    reps = max(1, round(1000 * scale))
    r_minus = [[0.0, 0.0, 1.0, -1.0]]
    r_plus = [[0.0, 0.0, 1.0, 1.0]]
    full = [
        ("oracle_true_beta", {}), ("oracle_h0", {}),
        ("arb_sim", {"n_draws": 10_000, "vd_updates": 0}),
        ("arb_analytic", {"vd_updates": 0}),
        ("arb_sim", {"n_draws": 10_000, "vd_updates": 2}),
        ("arb_analytic", {"vd_updates": 2}),
        ("fd", {}), ("kernel", {}),
    ]
    arb_ker = [("arb_sim", {"n_draws": 10_000, "vd_updates": 2}),
               ("kernel", {})]
    out = []
    if suite == "table1":
        grid = [("table1", "R1", 4000, 0.5, r_minus, full)]
    elif suite == "table2":
        grid = [("table2", "R2", 4000, 0.5, r_plus, full)]
    elif suite == "table3":
        methods = [("arb_sim", {"n_draws": 10_000, "vd_updates": 0}),
                   ("arb_analytic", {"vd_updates": 0}),
                   ("arb_sim", {"n_draws": 10_000, "vd_updates": 2}),
                   ("arb_analytic", {"vd_updates": 2}),
                   ("kernel", {})]
        grid = [("table3", "R3", 2000, 0.5, r_minus, methods)]
    elif suite in ("table5", "table6", "table7", "appendixE"):
        dgps = {"table5": ["R4"], "table6": ["R1"], "table7": ["R3"],
                "appendixE": ["R4", "R1", "R3"]}[suite]
        grid = []
        for name in dgps:
            for tau in (0.05, 0.3, 0.5):
                for T in (5000, 2000):
                    grid.append((f"{suite}_{name}_tau{tau}_T{T}",
                                 name, T, tau, r_minus, arb_ker))
    else:
        raise ValueError(f"unknown suite {suite!r}")
    for title, name, T, tau, R, methods in grid:
        ckpt = None
        if checkpoint_dir:
            ckpt = os.path.join(checkpoint_dir, f"{title}.jsonl")
        out.append((title, McConfig(
            name, T, reps, tau, R, [0.0], methods=list(methods),
            est_config=est_config, master_seed=master_seed,
            checkpoint_path=ckpt)))
    return out


def run_table_suite(suite, scale=1.0, master_seed=0, est_config=None,
                    checkpoint_dir=None, threads=1, progress=None):
    """Run every study in a named suite; returns [(title, McReport)]."""
    reports = []
    for title, cfg in table_suite_configs(suite, scale, master_seed,
                                          est_config, checkpoint_dir):
        reports.append((title, run_size_study(cfg, threads=threads,
                                              progress=progress)))
    return reports
