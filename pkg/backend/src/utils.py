import json
import math
from typing import Any, Dict, Sequence

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score


def convert_numpy_types(obj):
    """Convert numpy types to native Python types for JSON serialization."""
    if isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.ndarray):
        return [convert_numpy_types(item) for item in obj.tolist()]
    elif isinstance(obj, dict):
        return {str(key): convert_numpy_types(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_types(item) for item in obj]
    return obj


def dumps_stable(obj: Any) -> str:
    """Serialize to JSON with sorted keys so equal inputs give equal bytes."""
    return json.dumps(convert_numpy_types(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def dumps_line(obj: Any) -> str:
    """One-line sorted JSON, for JSON-lines files."""
    return json.dumps(convert_numpy_types(obj), sort_keys=True, allow_nan=True)


def ceil_log2(x: float) -> int:
    """ceil(log2(x)) for x >= 1, exact on powers of two."""
    if x <= 1.0:
        return 0
    mantissa, exponent = math.frexp(x)
    return exponent - 1 if mantissa == 0.5 else exponent


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> Dict[str, float]:
    """Least-squares slope of log(y) against log(x), with R²."""
    x = np.log(np.asarray(xs, dtype=float)).reshape(-1, 1)
    y = np.log(np.asarray(ys, dtype=float))
    if x.shape[0] < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan"), "points": int(x.shape[0])}
    model = LinearRegression().fit(x, y)
    predicted = model.predict(x)
    return {
        "slope": float(model.coef_[0]),
        "intercept": float(model.intercept_),
        "r2": float(r2_score(y, predicted)),
        "points": int(x.shape[0]),
    }


def seed_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) pair."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))
