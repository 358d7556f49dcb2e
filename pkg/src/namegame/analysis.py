"""Acceptance-behavior analysis: affine-Bernoulli MLE, randomization test, model comparison.

Test 1 fits Bern(z | a * r_mh + b) by constrained maximum likelihood and reads
empirical p-values for (a, b) off a resampled null in which decisions are
Bernoulli with the observed acceptance rate. Test 2 scores five acceptance
models by their precision in reproducing recorded decisions and compares them
pairwise with one-sided U-tests.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .engine import (
    AcceptanceModelKind,
    Binary,
    Constant,
    MH,
    Numerator,
    Subtraction,
    TrialRecord,
    model_acceptance,
)
from .model import Hyperparams, gibbs_fit

__all__ = [
    "DecisionRecord",
    "FitResult",
    "Test1Report",
    "Test2Report",
    "SessionData",
    "ParticipantDatasetData",
    "InferredDecisions",
    "records_from_trials",
    "group_by_participant",
    "infer_decisions",
    "fit_affine_bernoulli",
    "empirical_cdf_value",
    "randomization_test",
    "simulate_model_decisions",
    "precision",
    "mann_whitney_u",
    "pairwise_model_tests",
    "format_p_value",
    "fit_report_rows",
    "acceptance_rate_bins",
    "MODEL_ORDER",
]

_P_EPS = 1e-12  # probability clamp inside logs; boundary optima otherwise hit log(0)

MODEL_ORDER = ("constant", "mh", "numerator", "subtraction", "binary")


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class DecisionRecord:
    """One listener decision paired with the inferred acceptance probability."""

    participant_id: str
    trial_index: int
    r_mh: float
    numerator: float
    denominator: float
    z: int
    dataset_id: str = ""

    def __post_init__(self):
        for name, value in (
            ("r_mh", self.r_mh),
            ("numerator", self.numerator),
            ("denominator", self.denominator),
        ):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.z not in (0, 1):
            raise ValueError(f"z must be 0 or 1, got {self.z}")


@dataclass(frozen=True)
class FitResult:
    """Constrained MLE of the affine acceptance model."""

    a: float
    b: float
    log_likelihood: float
    degenerate: bool = False
    boundary: bool = False


@dataclass(frozen=True)
class Test1Report:
    a_hat: float
    b_hat: float
    null_a_samples: np.ndarray
    null_b_samples: np.ndarray
    p_a: float
    p_b: float
    reject_a: bool
    reject_b: bool
    b_bar: float
    replicates: int


@dataclass(frozen=True)
class Test2Report:
    model_names: tuple[str, ...]
    # model -> participant -> (replicates,) precision samples
    precision_samples: dict
    pooled_p: np.ndarray  # (5, 5), one-sided p[m, m']; diagonal is NaN
    per_participant_p: dict  # participant -> (5, 5)


# ---------------------------------------------------------------------------
# Record plumbing


def records_from_trials(trials: list[TrialRecord]) -> list[DecisionRecord]:
    """Decision records straight from engine history (listener = participant)."""
    records = []
    for t in trials:
        if t.r_mh is None or t.numerator is None or t.denominator is None:
            raise ValueError(
                "trial records lack acceptance diagnostics; run infer_decisions instead"
            )
        records.append(
            DecisionRecord(
                participant_id=t.listener_id,
                trial_index=t.trial_index,
                r_mh=t.r_mh,
                numerator=t.numerator,
                denominator=t.denominator,
                z=t.decision,
                dataset_id=t.dataset_id,
            )
        )
    return records


def group_by_participant(records: list[DecisionRecord]) -> dict[str, list[DecisionRecord]]:
    grouped: dict[str, list[DecisionRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.participant_id, []).append(rec)
    return grouped


def _records_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("no decision records")
    r = np.array([rec.r_mh for rec in records], dtype=float)
    z = np.array([rec.z for rec in records], dtype=float)
    return r, z


# ---------------------------------------------------------------------------
# Inference of decisions from session data


@dataclass(frozen=True)
class ParticipantDatasetData:
    """One participant's recorded stimuli, final categorization, and final signs."""

    participant_id: str
    dataset_id: str
    observations: np.ndarray
    categories: np.ndarray
    signs: np.ndarray


@dataclass(frozen=True)
class SessionData:
    """Everything analysis needs from a session: per-participant data plus trials.

    trial_states, when present, aligns with trials and holds each trial
    listener's full (categories, signs) index maps as they stood at trial
    start; inference then scores every trial against the knowledge state the
    listener actually decided with.
    """

    participants: tuple[str, ...]
    data: dict  # (participant_id, dataset_id) -> ParticipantDatasetData
    trials: tuple[TrialRecord, ...]
    trial_states: tuple = ()


@dataclass(frozen=True)
class InferredDecisions:
    records: list[DecisionRecord]
    skipped: int


def _theta_mean_from_maps(categories: np.ndarray, signs: np.ndarray, hyper: Hyperparams) -> np.ndarray:
    counts = np.zeros((hyper.L, hyper.K))
    np.add.at(counts, (signs, categories), 1)
    conc = counts + hyper.alpha[None, :]
    return conc / conc.sum(axis=1, keepdims=True)


def infer_decisions(
    session: SessionData,
    hyper: Hyperparams,
    iterations: int = 2000,
    burn_in: int = 500,
    seed=0,
) -> InferredDecisions:
    """Score each listener trial with the MH ratio inferred from the listener's
    recorded data and pair it with the recorded decision.

    When the session carries per-trial state snapshots, each trial's sign table
    is the posterior mean given the listener's categorization and signs as last
    recorded at that trial. Otherwise one gibbs_fit per (participant, dataset)
    on the final recorded (x, c, s) supplies the table. Trials with missing
    categorizations are skipped and counted.
    """
    per_trial = bool(session.trial_states) and len(session.trial_states) == len(session.trials)
    thetas: dict[tuple[str, str], np.ndarray] = {}
    if not per_trial:
        for key, pdata in session.data.items():
            state = gibbs_fit(
                pdata.observations, pdata.categories, pdata.signs, hyper, iterations, burn_in, seed
            )
            thetas[key] = state.theta
    records: list[DecisionRecord] = []
    skipped = 0
    for i, t in enumerate(session.trials):
        if per_trial and session.trial_states[i] is not None:
            snap = session.trial_states[i]
            theta = _theta_mean_from_maps(snap["categories"], snap["signs"], hyper)
        else:
            theta = thetas.get((t.listener_id, t.dataset_id))
        if (
            theta is None
            or t.listener_category is None
            or t.listener_sign is None
            or t.speaker_sign is None
        ):
            skipped += 1
            continue
        numerator = float(theta[t.speaker_sign, t.listener_category])
        denominator = float(theta[t.listener_sign, t.listener_category])
        if denominator == 0.0:
            r_mh = 1.0
        else:
            r_mh = min(1.0, numerator / denominator)
        records.append(
            DecisionRecord(
                participant_id=t.listener_id,
                trial_index=t.trial_index,
                r_mh=r_mh,
                numerator=numerator,
                denominator=denominator,
                z=t.decision,
                dataset_id=t.dataset_id,
            )
        )
    if skipped:
        warnings.warn(f"skipped {skipped} trial(s) with missing categorizations")
    return InferredDecisions(records=records, skipped=skipped)


# ---------------------------------------------------------------------------
# Affine-Bernoulli maximum likelihood


def _project_wedge(params: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {(a, b): b >= 0, a + b <= 1}."""
    a = params[..., 0]
    b = params[..., 1]
    feasible = (b >= 0) & (a + b <= 1)
    # candidates: onto b = 0; onto a + b = 1; the corner (1, 0)
    c1 = np.stack([a, np.zeros_like(b)], axis=-1)
    c1_ok = a <= 1
    t = (a + b - 1) / 2.0
    c2 = np.stack([a - t, b - t], axis=-1)
    c2_ok = (b - t) >= 0
    c3 = np.broadcast_to(np.array([1.0, 0.0]), params.shape)
    best = np.array(c3, copy=True)
    best_d = np.sum((params - c3) ** 2, axis=-1)
    for cand, ok in ((c2, c2_ok), (c1, c1_ok)):
        d = np.where(ok, np.sum((params - cand) ** 2, axis=-1), np.inf)
        better = d < best_d
        best = np.where(better[..., None], cand, best)
        best_d = np.where(better, d, best_d)
    return np.where(feasible[..., None], params, best)


def _ll_batch(params: np.ndarray, r: np.ndarray, Z: np.ndarray) -> np.ndarray:
    u = params[:, 0:1] * r[None, :] + params[:, 1:2]
    p = np.clip(u, _P_EPS, 1.0 - _P_EPS)
    return np.sum(Z * np.log(p) + (1.0 - Z) * np.log1p(-p), axis=1)


def _grad_hess_batch(params, r, Z):
    u = params[:, 0:1] * r[None, :] + params[:, 1:2]
    inside = (u > _P_EPS) & (u < 1.0 - _P_EPS)
    p = np.clip(u, _P_EPS, 1.0 - _P_EPS)
    resid = np.where(inside, (Z - p) / (p * (1.0 - p)), 0.0)
    g_a = np.sum(resid * r[None, :], axis=1)
    g_b = np.sum(resid, axis=1)
    h = np.where(inside, Z / p**2 + (1.0 - Z) / (1.0 - p) ** 2, 0.0)
    s0 = np.sum(h, axis=1)
    s1 = np.sum(h * r[None, :], axis=1)
    s2 = np.sum(h * r[None, :] ** 2, axis=1)
    return g_a, g_b, s0, s1, s2


def _ascend_batch(r, Z, start, max_iter=150, tol=1e-10):
    """Projected ascent from one start for every row of Z: Newton direction with
    backtracking, gradient direction as fallback. Rows stop when no candidate
    improves the log-likelihood by more than tol."""
    R = Z.shape[0]
    params = _project_wedge(np.tile(np.asarray(start, dtype=float), (R, 1)))
    ll = _ll_batch(params, r, Z)
    active = np.ones(R, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        sub_params = params[idx]
        sub_Z = Z[idx]
        sub_ll = ll[idx]
        old_ll = sub_ll.copy()
        g_a, g_b, s0, s1, s2 = _grad_hess_batch(sub_params, r, sub_Z)
        det = s2 * s0 - s1**2
        ok = det > 1e-300
        d_a = np.where(ok, (s0 * g_a - s1 * g_b) / np.where(ok, det, 1.0), g_a)
        d_b = np.where(ok, (s2 * g_b - s1 * g_a) / np.where(ok, det, 1.0), g_b)
        improved = np.zeros(len(idx), dtype=bool)
        for direction in (np.stack([d_a, d_b], axis=1), np.stack([g_a, g_b], axis=1)):
            remaining = ~improved
            t = 1.0
            while remaining.any() and t > 1e-13:
                rows = np.nonzero(remaining)[0]
                cand = _project_wedge(sub_params[rows] + t * direction[rows])
                cand_ll = _ll_batch(cand, r, sub_Z[rows])
                accept = cand_ll > sub_ll[rows]
                taken = rows[accept]
                sub_params[taken] = cand[accept]
                sub_ll[taken] = cand_ll[accept]
                improved[taken] = True
                remaining[taken] = False
                t /= 2.0
            if improved.all():
                break
        params[idx] = sub_params
        ll[idx] = sub_ll
        active[idx] = improved & (sub_ll - old_ll > tol)
    # Newton polish drives interior gradients to machine zero
    rows = np.arange(R)
    for _ in range(8):
        g_a, g_b, s0, s1, s2 = _grad_hess_batch(params[rows], r, Z[rows])
        interior = (params[rows, 1] > 1e-9) & (params[rows, 0] + params[rows, 1] < 1 - 1e-9)
        gnorm = np.hypot(g_a, g_b)
        keep = interior & (gnorm > 1e-9)
        rows = rows[keep]
        if len(rows) == 0:
            break
        g_a, g_b, s0, s1, s2 = g_a[keep], g_b[keep], s0[keep], s1[keep], s2[keep]
        det = s2 * s0 - s1**2
        ok = det > 1e-300
        step = np.stack(
            [
                np.where(ok, (s0 * g_a - s1 * g_b) / np.where(ok, det, 1.0), 0.0),
                np.where(ok, (s2 * g_b - s1 * g_a) / np.where(ok, det, 1.0), 0.0),
            ],
            axis=1,
        )
        cand = _project_wedge(params[rows] + step)
        cand_ll = _ll_batch(cand, r, Z[rows])
        accept = cand_ll >= ll[rows]
        params[rows[accept]] = cand[accept]
        ll[rows[accept]] = cand_ll[accept]
    return params, ll


def _default_starts(b_bar: float) -> list[tuple[float, float]]:
    b0 = min(max(b_bar, 0.02), 0.98)
    return [(0.0, b0), (0.5, 0.25), (0.9, 0.05), (-0.3, 0.9), (0.25, 0.5)]


def _fit_batch(r, Z, starts, max_iter=150):
    best_params = None
    best_ll = np.full(Z.shape[0], -np.inf)
    for start in starts:
        params, ll = _ascend_batch(r, Z, start, max_iter=max_iter)
        if best_params is None:
            best_params, best_ll = params, ll
        else:
            better = ll > best_ll
            best_params = np.where(better[:, None], params, best_params)
            best_ll = np.where(better, ll, best_ll)
    return best_params, best_ll


def fit_affine_bernoulli(records, restarts: int = 10, seed=0) -> FitResult:
    """Maximize sum_n z log(a r_n + b) + (1 - z) log(1 - a r_n - b) over the
    constraint set {0 <= b, a + b <= 1} by projected ascent with multi-start.

    Degenerate data (all z identical and all r identical) yields a boundary
    solution flagged as degenerate.
    """
    r, z = _records_arrays(records)
    b_bar = float(z.mean())
    starts = _default_starts(b_bar)[: max(restarts, 1)]
    if restarts > len(starts):
        rng = np.random.default_rng(seed)
        extra = np.stack(
            [rng.uniform(-1, 1, restarts - len(starts)), rng.uniform(0, 1, restarts - len(starts))],
            axis=1,
        )
        starts += [tuple(row) for row in _project_wedge(extra)]
    params, ll = _fit_batch(r, z[None, :], starts)
    a, b = float(params[0, 0]), float(params[0, 1])
    degenerate = bool(np.all(z == z[0]) and np.all(r == r[0]))
    boundary = bool(b <= 1e-9 or a + b >= 1 - 1e-9)
    return FitResult(a=a, b=b, log_likelihood=float(ll[0]), degenerate=degenerate, boundary=boundary)


def empirical_cdf_value(samples, x: float) -> float:
    """Upper-tail empirical fraction: (1/L) * |{l : sample_l >= x}|."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be non-empty")
    return float(np.mean(samples >= x))


def format_p_value(p: float, replicates: int) -> str:
    """Empirical tails cannot certify exact zero; report 0 as '< 1/replicates'."""
    if p == 0.0:
        return f"< {1.0 / replicates:g}"
    return f"{p:g}"


def randomization_test(
    records,
    replicates: int = 1000,
    seed=0,
    restarts: int = 10,
    null_restarts: int = 3,
) -> Test1Report:
    """Estimate the null distribution of (a, b) by resampling all decisions from
    Bern(b_bar) with r_mh fixed, refitting each replicate.

    One-sided on a (reject when the upper-tail fraction at a_hat is <= 0.001),
    two-sided on b (reject when the upper-tail fraction at b_hat is >= 0.9995
    or <= 0.0005). Deterministic for a given seed; replicate draws use
    independently spawned substreams so results do not depend on any worker
    decomposition.
    """
    if replicates < 100:
        warnings.warn("fewer than 100 replicates gives unstable tail estimates")
    r, z = _records_arrays(records)
    b_bar = float(z.mean())
    fit = fit_affine_bernoulli(records, restarts=restarts, seed=seed)

    children = _seed_sequence(seed).spawn(replicates)
    Z = np.empty((replicates, len(r)))
    for i, child in enumerate(children):
        Z[i] = (np.random.default_rng(child).random(len(r)) < b_bar).astype(float)
    starts = _default_starts(b_bar)[: max(null_restarts, 1)]
    null_params, _ = _fit_batch(r, Z, starts)
    null_a = null_params[:, 0].copy()
    null_b = null_params[:, 1].copy()

    p_a = empirical_cdf_value(null_a, fit.a)
    p_b = empirical_cdf_value(null_b, fit.b)
    return Test1Report(
        a_hat=fit.a,
        b_hat=fit.b,
        null_a_samples=null_a,
        null_b_samples=null_b,
        p_a=p_a,
        p_b=p_b,
        reject_a=bool(p_a <= 0.001),
        reject_b=bool(p_b >= 0.9995 or p_b <= 0.0005),
        b_bar=b_bar,
        replicates=replicates,
    )


# ---------------------------------------------------------------------------
# Model comparison (Test 2)


def _resolve_model(kind: AcceptanceModelKind, records) -> AcceptanceModelKind:
    if isinstance(kind, Constant) and kind.rate is None:
        _, z = _records_arrays(records)
        return Constant(float(z.mean()))
    return kind


def simulate_model_decisions(
    records, kind: AcceptanceModelKind, replicates: int = 100, seed=0
) -> np.ndarray:
    """Per-replicate pseudo-decisions: z ~ Bern(model probability) per trial.

    A Constant model with rate=None uses the acceptance rate of the passed
    records (the participant's own rate). Returns an int array of shape
    (replicates, n_records).
    """
    kind = _resolve_model(kind, records)
    probs = np.array(
        [model_acceptance(kind, rec.r_mh, rec.numerator, rec.denominator) for rec in records]
    )
    out = np.empty((replicates, len(probs)), dtype=int)
    for i, child in enumerate(_seed_sequence(seed).spawn(replicates)):
        out[i] = np.random.default_rng(child).random(len(probs)) < probs
    return out


def precision(human, model) -> float:
    """Fraction of positions where the two decision vectors match."""
    human = np.asarray(human, dtype=int)
    model = np.asarray(model, dtype=int)
    if human.shape != model.shape:
        raise ValueError("decision vectors must have equal length")
    if human.size == 0:
        raise ValueError("decision vectors must be non-empty")
    return float(np.mean(human == model))


def mann_whitney_u(sample_x, sample_y, alternative: str = "greater") -> float:
    """One-sided Mann-Whitney U p-value via the tie-corrected normal approximation
    (with continuity correction). alternative='greater' tests that sample_x is
    stochastically larger."""
    x = np.asarray(sample_x, dtype=float)
    y = np.asarray(sample_y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be non-empty")
    nx, ny = len(x), len(y)
    combined = np.concatenate([x, y])
    uniques, inverse, counts = np.unique(combined, return_inverse=True, return_counts=True)
    starts = np.cumsum(counts) - counts + 1
    avg_ranks = starts + (counts - 1) / 2.0
    ranks = avg_ranks[inverse]
    u_x = float(np.sum(ranks[:nx])) - nx * (nx + 1) / 2.0
    n = nx + ny
    mean_u = nx * ny / 2.0
    tie_term = float(np.sum(counts**3 - counts))
    var_u = nx * ny / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var_u <= 0:
        return 0.5  # every value tied; no evidence either way
    sd = math.sqrt(var_u)
    if alternative == "greater":
        zscore = (u_x - mean_u - 0.5) / sd
        return 0.5 * math.erfc(zscore / math.sqrt(2))
    if alternative == "less":
        zscore = (u_x - mean_u + 0.5) / sd
        return 0.5 * math.erfc(-zscore / math.sqrt(2))
    if alternative == "two-sided":
        zscore = (abs(u_x - mean_u) - 0.5) / sd
        return min(1.0, math.erfc(zscore / math.sqrt(2)))
    raise ValueError(f"unknown alternative {alternative!r}")


def _model_kinds() -> dict[str, AcceptanceModelKind]:
    return {
        "constant": Constant(None),
        "mh": MH(),
        "numerator": Numerator(),
        "subtraction": Subtraction(),
        "binary": Binary(),
    }


def pairwise_model_tests(
    records_by_participant: dict[str, list[DecisionRecord]],
    seed=0,
    replicates: int = 100,
) -> Test2Report:
    """Precision samples per model per participant, plus one-sided U-test matrices.

    pooled_p[m, m'] tests H1: model m predicts decisions better than m', on the
    concatenation of all participants' precision samples. Per-participant
    matrices use that participant's samples alone.
    """
    kinds = _model_kinds()
    participants = sorted(records_by_participant)
    children = iter(_seed_sequence(seed).spawn(len(participants) * len(MODEL_ORDER)))
    samples: dict[str, dict[str, np.ndarray]] = {m: {} for m in MODEL_ORDER}
    for pid in participants:
        recs = records_by_participant[pid]
        human = np.array([rec.z for rec in recs], dtype=int)
        for m in MODEL_ORDER:
            sims = simulate_model_decisions(recs, kinds[m], replicates, next(children))
            samples[m][pid] = np.array([precision(human, row) for row in sims])

    def p_matrix(sample_of) -> np.ndarray:
        mat = np.full((len(MODEL_ORDER), len(MODEL_ORDER)), np.nan)
        for i, m in enumerate(MODEL_ORDER):
            for j, m2 in enumerate(MODEL_ORDER):
                if i != j:
                    mat[i, j] = mann_whitney_u(sample_of(m), sample_of(m2), "greater")
        return mat

    pooled = p_matrix(lambda m: np.concatenate([samples[m][pid] for pid in participants]))
    per_participant = {
        pid: p_matrix(lambda m, pid=pid: samples[m][pid]) for pid in participants
    }
    return Test2Report(
        model_names=MODEL_ORDER,
        precision_samples=samples,
        pooled_p=pooled,
        per_participant_p=per_participant,
    )


# ---------------------------------------------------------------------------
# Report tables


def fit_report_rows(
    records: list[DecisionRecord],
    replicates: int = 1000,
    seed=0,
) -> list[dict]:
    """One row per participant plus a pooled 'all' row, mirroring the result-table
    layout: a, b, p-values (formatted), rejection flags, and acceptance rate."""
    rows = []
    grouped = group_by_participant(records)
    items = [(pid, recs) for pid, recs in sorted(grouped.items())]
    items.append(("all", records))
    for i, (pid, recs) in enumerate(items):
        report = randomization_test(recs, replicates=replicates, seed=np.random.SeedSequence([seed, i]))
        rows.append(
            {
                "participant": pid,
                "n": len(recs),
                "a": report.a_hat,
                "b": report.b_hat,
                "p_a": report.p_a,
                "p_b": report.p_b,
                "p_a_display": format_p_value(report.p_a, replicates),
                "p_b_display": format_p_value(report.p_b, replicates),
                "reject_a": report.reject_a,
                "reject_b": report.reject_b,
                "b_bar": report.b_bar,
            }
        )
    return rows


def acceptance_rate_bins(records: list[DecisionRecord], n_bins: int = 10) -> list[dict]:
    """Histogram of decisions against r_mh: per bin, trial count, acceptances, rate."""
    r, z = _records_arrays(records)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.digitize(r, edges) - 1, 0, n_bins - 1)
    bins = []
    for i in range(n_bins):
        mask = idx == i
        count = int(mask.sum())
        accepted = int(z[mask].sum()) if count else 0
        bins.append(
            {
                "lo": float(edges[i]),
                "hi": float(edges[i + 1]),
                "count": count,
                "accepted": accepted,
                "rate": accepted / count if count else None,
            }
        )
    return bins
