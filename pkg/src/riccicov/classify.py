"""Kernel KNN, leave-one-out evaluation and steps x K sweeps."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .spd import KernelParams, SPDError, kernel_matrix

SWEEP_COLUMNS = ("Steps", "K", "ACC", "PRE", "SPE", "SEN", "F1")


class ClassifyError(ValueError):
    pass


@dataclass
class LabeledDataset:
    signatures: list
    class_names: tuple = ("CN", "AD")

    def __post_init__(self):
        if not self.signatures:
            raise ClassifyError("dataset is empty")
        for s in self.signatures:
            if s.label not in (0, 1):
                raise ClassifyError(f"subject {s.subject_id!r} has non-binary label {s.label!r}")
        dims = {s.d for s in self.signatures}
        if len(dims) != 1:
            raise ClassifyError(f"subjects have mixed descriptor dimensions {sorted(dims)}")

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.signatures], dtype=int)

    @property
    def ids(self) -> list:
        return [s.subject_id for s in self.signatures]

    def __len__(self):
        return len(self.signatures)


@dataclass
class ClassificationReport:
    TP: int
    TN: int
    FP: int
    FN: int
    ACC: float
    PRE: float
    SPE: float
    SEN: float
    F1: float
    predictions: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, truth, predicted, ids=None, params=None, positive: int = 1):
        truth = np.asarray(truth)
        predicted = np.asarray(predicted)
        pos_t = truth == positive
        pos_p = predicted == positive
        tp = int(np.sum(pos_t & pos_p))
        tn = int(np.sum(~pos_t & ~pos_p))
        fp = int(np.sum(~pos_t & pos_p))
        fn = int(np.sum(pos_t & ~pos_p))
        report = cls.from_counts(tp, tn, fp, fn, params=params)
        ids = list(range(len(truth))) if ids is None else ids
        report.predictions = {str(i): int(p) for i, p in zip(ids, predicted)}
        return report

    @classmethod
    def from_counts(cls, tp, tn, fp, fn, params=None):
        total = tp + tn + fp + fn

        def pct(num, den):
            return 100.0 * num / den if den else 0.0

        acc = pct(tp + tn, total)
        pre = pct(tp, tp + fp)
        spe = pct(tn, tn + fp)
        sen = pct(tp, tp + fn)
        f1 = 2.0 * pre * sen / (pre + sen) if pre + sen > 0 else 0.0
        return cls(tp, tn, fp, fn, acc, pre, spe, sen, f1, params=dict(params or {}))

    def metrics(self) -> dict:
        return {k: getattr(self, k) for k in ("ACC", "PRE", "SPE", "SEN", "F1")}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "predicted"])
            for sid, p in self.predictions.items():
                w.writerow([sid, p])
            w.writerow([])
            w.writerow(["TP", "TN", "FP", "FN", "ACC", "PRE", "SPE", "SEN", "F1"])
            w.writerow([self.TP, self.TN, self.FP, self.FN] + [repr(v) for v in self.metrics().values()])


def _check_k(K: int, n_train: int) -> None:
    if K < 1 or K % 2 == 0:
        raise ClassifyError(f"K must be a positive odd number, got {K}")
    if K > n_train:
        raise ClassifyError(f"K = {K} exceeds the training size {n_train}")


def rank_neighbors(similarities, ids) -> list:
    """Training positions ordered by decreasing similarity, ties by smaller id."""
    return sorted(range(len(similarities)), key=lambda i: (-similarities[i], ids[i]))


def vote(similarities, labels, ids, K: int) -> int:
    _check_k(K, len(similarities))
    order = rank_neighbors(similarities, ids)[:K]
    votes = np.asarray(labels)[order]
    return int(np.sum(votes == 1) * 2 > K)


def knn_predict(query, train: LabeledDataset, K: int, p: KernelParams) -> int:
    from .spd import set_kernel

    sims = [set_kernel(query, s, p) for s in train.signatures]
    return vote(sims, train.labels, train.ids, K)


def loo_predictions(kernel: np.ndarray, labels, ids, K: int) -> np.ndarray:
    """Leave-one-out KNN predictions from a precomputed subject kernel matrix."""
    n = len(labels)
    _check_k(K, n - 1)
    labels = np.asarray(labels)
    preds = np.empty(n, dtype=int)
    for q in range(n):
        others = [i for i in range(n) if i != q]
        assert q not in others
        preds[q] = vote(kernel[q, others], labels[others], [ids[i] for i in others], K)
    return preds


def leave_one_out(
    data: LabeledDataset,
    K: int,
    p: KernelParams,
    kernel: np.ndarray | None = None,
    params: dict | None = None,
) -> ClassificationReport:
    if len(data) < K + 1:
        raise ClassifyError(f"leave-one-out with K = {K} needs at least {K + 1} subjects")
    if kernel is None:
        try:
            kernel = kernel_matrix(data.signatures, p)
        except SPDError as exc:
            raise ClassifyError(str(exc)) from exc
    preds = loo_predictions(kernel, data.labels, data.ids, K)
    info = {"K": K, "sigma": p.sigma, "match_mode": p.match_mode}
    info.update(params or {})
    return ClassificationReport.from_predictions(data.labels, preds, data.ids, info)


def metric_sweep(datasets: dict, Ks, p: KernelParams) -> list:
    """One report per ``(m, tau, K)``; ``datasets`` maps ``(m, tau)`` to a dataset."""
    rows = []
    for (m, tau) in sorted(datasets):
        data = datasets[m, tau]
        kernel = kernel_matrix(data.signatures, p)
        for K in sorted(Ks):
            rows.append(leave_one_out(data, K, p, kernel=kernel, params={"m": m, "tau": tau}))
    return rows


def write_sweep_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in reports:
            w.writerow([r.params["m"], r.params["K"]] + [repr(v) for v in r.metrics().values()])


def read_sweep_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return header, [
        {"Steps": int(r[0]), "K": int(r[1]), **{k: float(v) for k, v in zip(header[2:], r[2:])}}
        for r in body
    ]
