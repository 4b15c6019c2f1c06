"""Model ensembles: the analytic monomial benchmark and tabular replay.

An ensemble bundles M models sharing a common input distribution.  Model 0 is
the high-fidelity reference; the estimator targets its mean.  The tabular
ensemble replays precomputed joint evaluations from a file so that expensive
multi-fidelity studies (e.g. PDE ensembles) can be reproduced without their
solvers.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError, TableExhaustedError
from .acv import CostModel


@dataclass(frozen=True)
class ModelEnsemble:
    """M models over a shared input distribution.

    evaluate(m, draws) maps input draws to outputs of model m; input_sampler
    (rng, n) produces n input draws.  Both are deterministic given their
    arguments.
    """

    n_models: int
    evaluate: callable
    cost_model: CostModel
    input_sampler: callable

    def pilot_rows(self, n, rng):
        """n joint evaluations of all models on fresh shared inputs."""
        gen = rng.generator() if hasattr(rng, "generator") else rng
        draws = self.input_sampler(gen, n)
        return np.column_stack(
            [np.asarray(self.evaluate(m, draws), dtype=float) for m in range(self.n_models)]
        )

    @property
    def pilot_row_cost(self):
        return float(self.cost_model.w.sum())


_MONOMIAL_MAX_DEGREE = 5


def _monomial_eval(m, z):
    return np.asarray(z, dtype=float) ** (_MONOMIAL_MAX_DEGREE - m)


def _uniform_sampler(gen, n):
    return gen.uniform(0.0, 1.0, size=n)


def monomial_ensemble(n_models=4):
    """Benchmark ensemble f_m(z) = z^(5-m) on z ~ U(0,1), costs 10^-m."""

    if not 2 <= n_models <= 5:
        raise ValueError("monomial ensemble supports between 2 and 5 models")
    w = CostModel(np.array([10.0 ** -m for m in range(n_models)]))
    return ModelEnsemble(
        n_models=n_models,
        evaluate=_monomial_eval,
        cost_model=w,
        input_sampler=_uniform_sampler,
    )


def monomial_oracle_cov(n_models=4):
    """Exact output covariance of the monomial ensemble.

    Cov[z^a, z^b] = 1/(a+b+1) - 1/((a+1)(b+1)) for z ~ U(0,1).
    """

    if not 2 <= n_models <= 5:
        raise ValueError("monomial ensemble supports between 2 and 5 models")
    deg = np.array([_MONOMIAL_MAX_DEGREE - m for m in range(n_models)], dtype=float)
    a = deg[:, None]
    b = deg[None, :]
    return 1.0 / (a + b + 1.0) - 1.0 / ((a + 1.0) * (b + 1.0))


class TabularEnsemble:
    """Replays precomputed joint model outputs from a table, row by row.

    Input draws are row indices consumed without replacement; evaluating model
    m on a set of indices reads column m of those rows.  Exhausting the table
    is an error rather than silent reuse.
    """

    def __init__(self, table, costs, source="<memory>"):
        table = np.atleast_2d(np.asarray(table, dtype=float))
        costs = np.asarray(costs, dtype=float)
        if table.shape[1] != costs.size:
            raise SchemaError(
                f"{source}: table has {table.shape[1]} model columns but the "
                f"cost vector has {costs.size} entries"
            )
        if not np.all(np.isfinite(table)):
            raise SchemaError(f"{source}: table contains non-finite entries")
        self._table = table
        self._cursor = 0
        self._source = source
        self.cost_model = CostModel(costs)
        self.n_models = costs.size

    @property
    def rows_remaining(self):
        return self._table.shape[0] - self._cursor

    def input_sampler(self, gen, n):
        n = int(n)
        if n > self.rows_remaining:
            raise TableExhaustedError(
                f"{self._source}: requested {n} rows at row {self._cursor} of "
                f"{self._table.shape[0]}",
                rows_remaining=self.rows_remaining,
            )
        idx = np.arange(self._cursor, self._cursor + n)
        self._cursor += n
        return idx

    def evaluate(self, m, draws):
        idx = np.asarray(draws, dtype=int)
        return self._table[idx, m]

    def pilot_rows(self, n, rng):
        gen = rng.generator() if hasattr(rng, "generator") else rng
        idx = self.input_sampler(gen, n)
        return self._table[idx, :].copy()

    @property
    def pilot_row_cost(self):
        return float(self.cost_model.w.sum())


def tabular_ensemble(path, schema=None):
    """Load a TabularEnsemble from a delimited text file.

    The file needs a header row naming columns f0..f{M-1}.  The cost vector
    comes from ``schema`` (a mapping with key "costs", or a path to a JSON
    document with that key); by default a companion "<path>.meta.json" file
    is read.
    """

    path = Path(path)
    if schema is None:
        schema = path.with_suffix(path.suffix + ".meta.json")
    if not isinstance(schema, dict):
        schema_path = Path(schema)
        if not schema_path.exists():
            raise SchemaError(f"{path}: missing cost metadata document {schema_path}")
        with open(schema_path) as fh:
            schema = json.load(fh)
    if "costs" not in schema:
        raise SchemaError(f"{path}: metadata does not declare a cost vector")
    costs = np.asarray(schema["costs"], dtype=float)
    delimiter = schema.get("delimiter", ",")
    with open(path) as fh:
        header = fh.readline().strip().split(delimiter)
    expected = [f"f{m}" for m in range(len(header))]
    if [h.strip() for h in header] != expected:
        raise SchemaError(
            f"{path}: header must name columns f0..f{len(header) - 1}, got {header}"
        )
    if len(header) != costs.size:
        raise SchemaError(
            f"{path}: {len(header)} data columns but {costs.size} cost entries"
        )
    table = np.loadtxt(path, delimiter=delimiter, skiprows=1, ndmin=2)
    return TabularEnsemble(table, costs, source=str(path))


def write_table(path, table, costs, delimiter=","):
    """Write a tabular-ensemble file plus its cost metadata document."""

    path = Path(path)
    table = np.atleast_2d(np.asarray(table, dtype=float))
    header = delimiter.join(f"f{m}" for m in range(table.shape[1]))
    np.savetxt(path, table, delimiter=delimiter, header=header, comments="")
    meta = {"costs": list(map(float, np.asarray(costs, dtype=float))), "delimiter": delimiter}
    with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
